//! Closed-loop runs: plant, order buffers, incidents and the controller.

use nalgebra::DVector;
use thiserror::Error;

use crate::dynamics::{build_model, clamp_inputs, DynamicsError, OrderBuffer, SystemState};
use crate::limits::{build_constraints, LimitsError};
use crate::mpc::{Controller, CostConfig, MpcError, MpcParameters};
use crate::qp::{QpSettings, QpStatus};
use crate::scenario::Scenario;

/// Flow excess (MW) above which a step counts as violating.
pub const VIOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Limits(#[from] LimitsError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error("cannot compare runs: {0}")]
    Shape(String),
}

/// One simulated step `k`; the state is the one reached at `(k+1) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t_s: f64,
    pub state: SystemState,
    /// Limit each line had to respect at `t_s`, as known at step `k`.
    pub limits: DVector<f64>,
    pub violation: DVector<f64>,
    /// Controller slack for this state (its first predicted step).
    pub slack: DVector<f64>,
    pub order_curt: DVector<f64>,
    pub order_batt: DVector<f64>,
    /// Inputs realized during the step, after delay and clamping.
    pub applied_curt: DVector<f64>,
    pub applied_batt: DVector<f64>,
    pub disturbance: DVector<f64>,
    /// `None` when the controller is disabled.
    pub status: Option<QpStatus>,
    pub iterations: usize,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub curtailed_energy_mwh: f64,
    pub battery_throughput_mwh: f64,
    pub max_violation_mw: f64,
    pub violation_steps: usize,
    pub violation_duration_s: f64,
    pub solver_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub scenario: String,
    pub line_ids: Vec<String>,
    pub battery_nodes: Vec<String>,
    pub curtailable_nodes: Vec<String>,
    pub dt_s: f64,
    pub controller_enabled: bool,
    pub initial: SystemState,
    pub records: Vec<StepRecord>,
    pub summary: Summary,
}

/// Runs the scenario as configured.
pub fn run(scenario: &Scenario) -> Result<RunLog, SimError> {
    run_with(scenario, scenario.controller_enabled)
}

/// Runs the scenario with the controller switched on or off.
pub fn run_with(scenario: &Scenario, controller_enabled: bool) -> Result<RunLog, SimError> {
    let zone = &scenario.zone;
    let model = build_model(zone, scenario.delays);
    let layout = model.layout;
    let dt = scenario.delays.dt_s;
    let mut controller = if controller_enabled {
        let cost = CostConfig::from_weights(&layout, &scenario.weights, &scenario.energy_ref)?;
        Some(Controller::new(model.clone(), cost, QpSettings::default())?)
    } else {
        None
    };
    let mut profiles = scenario.profiles.clone();
    let mut buffer = OrderBuffer::new(&scenario.delays, layout.n_curt, layout.n_batt);
    let mut state = scenario.initial_state.clone();
    let mut next_event = 0;
    let mut records = Vec::with_capacity(scenario.duration_steps);

    for k in 0..scenario.duration_steps {
        let now = k as f64 * dt;
        let mut w = scenario.disturbances[k].clone();
        while next_event < scenario.events.len() && scenario.events[next_event].time_s <= now + 1e-9 {
            let ev = &scenario.events[next_event];
            profiles[ev.line] = profiles[ev.line].trigger_incident(ev.time_s, ev.stairway.clone())?;
            if let Some(impulse) = &ev.impulse {
                w += impulse;
            }
            next_event += 1;
        }

        let (order_curt, order_batt, slack, status, iterations, fallback) = match controller.as_mut() {
            Some(ctl) => {
                let constraints =
                    build_constraints(zone, &profiles, &scenario.bounds, dt, k, scenario.horizon)?;
                let params = MpcParameters {
                    state: state.to_vector(),
                    disturbance: w.clone(),
                    pending_curt: buffer.pending_curt().cloned().collect(),
                    pending_batt: buffer.pending_batt().cloned().collect(),
                };
                let d = ctl.decide(&constraints, &params)?;
                (d.curt, d.batt, d.slack, Some(d.status), d.iterations, d.fallback)
            }
            None => (
                DVector::zeros(layout.n_curt),
                DVector::zeros(layout.n_batt),
                DVector::zeros(layout.n_lines),
                None,
                0,
                false,
            ),
        };

        let (eff_curt, eff_batt) = buffer.push_order(order_curt.clone(), order_batt.clone());
        let (applied_curt, applied_batt) =
            clamp_inputs(&model, &scenario.bounds, &state, &eff_curt, &eff_batt);
        if (&applied_curt - &eff_curt).amax() > 1e-9 || (&applied_batt - &eff_batt).amax() > 1e-9 {
            log::debug!("step {k}: plant clamped the delayed orders");
        }
        state = model.step(&state, &applied_curt, &applied_batt, &w)?;

        let t_next = (k + 1) as f64 * dt;
        let limits = DVector::from_iterator(layout.n_lines, profiles.iter().map(|p| p.limit_at(t_next)));
        let violation = DVector::from_iterator(
            layout.n_lines,
            state.flows.iter().zip(limits.iter()).map(|(f, l)| (f.abs() - l).max(0.0)),
        );
        records.push(StepRecord {
            step: k,
            t_s: t_next,
            state: state.clone(),
            limits,
            violation,
            slack,
            order_curt,
            order_batt,
            applied_curt,
            applied_batt,
            disturbance: w,
            status,
            iterations,
            fallback,
        });
    }

    let summary = score(&records, dt);
    Ok(RunLog {
        scenario: scenario.name.clone(),
        line_ids: scenario.line_ids(),
        battery_nodes: zone.battery_nodes.clone(),
        curtailable_nodes: zone.curtailable_nodes.clone(),
        dt_s: dt,
        controller_enabled,
        initial: scenario.initial_state.clone(),
        records,
        summary,
    })
}

/// Totals over a run. Levels are held for one step each.
pub fn score(records: &[StepRecord], dt_s: f64) -> Summary {
    let dt_h = dt_s / 3600.0;
    let mut s = Summary::default();
    for r in records {
        s.curtailed_energy_mwh += r.state.curtailment.sum() * dt_h;
        s.battery_throughput_mwh += r.state.battery_power.abs().sum() * dt_h;
        let worst = r.violation.max();
        s.max_violation_mw = s.max_violation_mw.max(worst);
        if worst > VIOLATION_TOL {
            s.violation_steps += 1;
        }
        if r.fallback {
            s.solver_failures += 1;
        }
    }
    s.violation_duration_s = s.violation_steps as f64 * dt_s;
    s
}

/// `a - b`, aligned by step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffRow {
    pub step: usize,
    pub t_s: f64,
    pub flow: DVector<f64>,
    pub limit: DVector<f64>,
    pub order_curt: DVector<f64>,
    pub order_batt: DVector<f64>,
}

pub fn compare(a: &RunLog, b: &RunLog) -> Result<Vec<DiffRow>, SimError> {
    if a.records.len() != b.records.len() {
        return Err(SimError::Shape(format!(
            "durations differ ({} vs {} steps)",
            a.records.len(),
            b.records.len()
        )));
    }
    if a.line_ids != b.line_ids || a.battery_nodes != b.battery_nodes || a.curtailable_nodes != b.curtailable_nodes {
        return Err(SimError::Shape("zones differ".into()));
    }
    Ok(a.records
        .iter()
        .zip(&b.records)
        .map(|(x, y)| DiffRow {
            step: x.step,
            t_s: x.t_s,
            flow: &x.state.flows - &y.state.flows,
            limit: &x.limits - &y.limits,
            order_curt: &x.order_curt - &y.order_curt,
            order_batt: &x.order_batt - &y.order_batt,
        })
        .collect())
}
