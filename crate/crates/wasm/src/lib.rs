//! Browser bindings: JSON in, JSON out. The plain functions are what the
//! exported wrappers call, so they can be tested natively.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use congestion_core::bundled;
use congestion_core::limits::{LimitProfile, StairStep, Stairway};
use congestion_core::scenario::ScenarioFile;
use congestion_core::simulator::{run_with, RunLog, Summary};
use congestion_core::zone::{compute_ptdf, Line};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct PtdfTable {
    pub nodes: Vec<String>,
    pub lines: Vec<String>,
    /// One row per line.
    pub ptdf: Vec<Vec<f64>>,
}

/// PTDFs of the 3-bus triangle (bus 3 is the slack) for the given reactances.
pub fn triangle_ptdf(x12: f64, x13: f64, x23: f64) -> Result<PtdfTable, String> {
    let nodes: Vec<String> = ["1", "2", "3"].iter().map(|s| s.to_string()).collect();
    let lines = vec![
        Line::new("1", "2", Some(x12), 100.0),
        Line::new("1", "3", Some(x13), 100.0),
        Line::new("2", "3", Some(x23), 100.0),
    ];
    let m = compute_ptdf(&nodes, &lines, "3").map_err(|e| e.to_string())?;
    Ok(PtdfTable {
        lines: lines.iter().map(Line::id).collect(),
        ptdf: (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect(),
        nodes,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StairwayQuery {
    pub thermal_limit: f64,
    pub margin: f64,
    pub incident_s: f64,
    /// `[duration_s, overload_mw]` pairs.
    pub steps: Vec<[f64; 2]>,
    pub t_end_s: f64,
    pub dt_s: f64,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub t_s: Vec<f64>,
    pub limit_mw: Vec<f64>,
}

/// The limit a line must respect over time around an incident.
pub fn stairway_curve(q: &StairwayQuery) -> Result<Curve, String> {
    if !(q.dt_s > 0.0) || !(q.t_end_s >= 0.0) || q.t_end_s / q.dt_s > 100_000.0 {
        return Err("need dt_s > 0 and 0 <= t_end_s <= 100000 dt_s".into());
    }
    let stair = Stairway::new(
        q.steps
            .iter()
            .map(|[d, o]| StairStep {
                duration_s: *d,
                overload_mw: *o,
            })
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let profile = LimitProfile::normal(q.thermal_limit, q.margin)
        .and_then(|p| p.trigger_incident(q.incident_s, stair))
        .map_err(|e| e.to_string())?;
    let n = (q.t_end_s / q.dt_s).floor() as usize;
    let t_s: Vec<f64> = (0..=n).map(|k| k as f64 * q.dt_s).collect();
    let limit_mw = t_s.iter().map(|t| profile.limit_at(*t)).collect();
    Ok(Curve { t_s, limit_mw })
}

/// Changes to the bundled one-overload scenario. Absent fields keep the
/// bundled value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub battery_power_mw: Option<f64>,
    pub battery_energy_mwh: Option<f64>,
    pub tau_curt_s: Option<f64>,
    pub horizon: Option<usize>,
    pub curtailment_weight: Option<f64>,
    pub duration_steps: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct SimulationView {
    pub line_ids: Vec<String>,
    pub curtailable_nodes: Vec<String>,
    pub t_s: Vec<f64>,
    /// Per line, per step.
    pub flow_mw: Vec<Vec<f64>>,
    pub limit_mw: Vec<Vec<f64>>,
    pub reference_flow_mw: Vec<Vec<f64>>,
    pub battery_mw: Vec<f64>,
    pub battery_mwh: Vec<f64>,
    /// Per curtailable node, per step.
    pub curtailment_mw: Vec<Vec<f64>>,
    pub d_curt: usize,
    pub summary: SummaryView,
    pub reference_summary: SummaryView,
}

#[derive(Debug, Serialize)]
pub struct SummaryView {
    pub curtailed_energy_mwh: f64,
    pub battery_throughput_mwh: f64,
    pub max_violation_mw: f64,
    pub violation_steps: usize,
    pub solver_failures: usize,
}

impl From<&Summary> for SummaryView {
    fn from(s: &Summary) -> Self {
        Self {
            curtailed_energy_mwh: s.curtailed_energy_mwh,
            battery_throughput_mwh: s.battery_throughput_mwh,
            max_violation_mw: s.max_violation_mw,
            violation_steps: s.violation_steps,
            solver_failures: s.solver_failures,
        }
    }
}

fn per_line(log: &RunLog, f: impl Fn(&congestion_core::simulator::StepRecord, usize) -> f64) -> Vec<Vec<f64>> {
    (0..log.line_ids.len())
        .map(|l| log.records.iter().map(|r| f(r, l)).collect())
        .collect()
}

/// Runs the bundled one-overload scenario with and without the controller.
pub fn simulate_one_overload(o: &Overrides) -> Result<SimulationView, String> {
    let mut file = ScenarioFile::from_json(bundled::ONE_OVERLOAD).map_err(|e| e.to_string())?;
    if let Some(p) = o.battery_power_mw {
        for b in &mut file.devices.batteries {
            b.p_min = -p;
            b.p_max = p;
        }
    }
    if let Some(e) = o.battery_energy_mwh {
        for b in &mut file.devices.batteries {
            b.e_max = e;
            b.e0 = e / 2.0;
        }
        file.controller.e_ref = None;
    }
    if let Some(tau) = o.tau_curt_s {
        file.controller.tau_curt_s = tau;
    }
    if let Some(n) = o.horizon {
        file.controller.horizon = n;
    }
    if let Some(w) = o.curtailment_weight {
        file.controller.weights.curtailment = w;
    }
    if let Some(n) = o.duration_steps {
        file.timeline.duration_steps = n.min(1000);
    }
    let sc = file.build(None).map_err(|e| e.to_string())?;
    let ctl = run_with(&sc, true).map_err(|e| e.to_string())?;
    let reference = run_with(&sc, false).map_err(|e| e.to_string())?;
    Ok(SimulationView {
        t_s: ctl.records.iter().map(|r| r.t_s).collect(),
        flow_mw: per_line(&ctl, |r, l| r.state.flows[l]),
        limit_mw: per_line(&ctl, |r, l| r.limits[l]),
        reference_flow_mw: per_line(&reference, |r, l| r.state.flows[l]),
        battery_mw: ctl.records.iter().map(|r| r.state.battery_power[0]).collect(),
        battery_mwh: ctl.records.iter().map(|r| r.state.battery_energy[0]).collect(),
        curtailment_mw: (0..ctl.curtailable_nodes.len())
            .map(|c| ctl.records.iter().map(|r| r.state.curtailment[c]).collect())
            .collect(),
        d_curt: sc.delays.d_curt,
        summary: (&ctl.summary).into(),
        reference_summary: (&reference.summary).into(),
        line_ids: ctl.line_ids,
        curtailable_nodes: ctl.curtailable_nodes,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = trianglePtdf)]
pub fn triangle_ptdf_js(x12: f64, x13: f64, x23: f64) -> Result<String, JsError> {
    to_json(&triangle_ptdf(x12, x13, x23).map_err(|e| JsError::new(&e))?)
}

#[wasm_bindgen(js_name = stairwayCurve)]
pub fn stairway_curve_js(query: &str) -> Result<String, JsError> {
    let q: StairwayQuery = serde_json::from_str(query).map_err(|e| JsError::new(&e.to_string()))?;
    to_json(&stairway_curve(&q).map_err(|e| JsError::new(&e))?)
}

#[wasm_bindgen(js_name = simulateOneOverload)]
pub fn simulate_one_overload_js(overrides: &str) -> Result<String, JsError> {
    let o: Overrides = serde_json::from_str(overrides).map_err(|e| JsError::new(&e.to_string()))?;
    to_json(&simulate_one_overload(&o).map_err(|e| JsError::new(&e))?)
}
