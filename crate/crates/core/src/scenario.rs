//! Scenario files (JSON) and their validation into a runnable [`Scenario`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DelayConfig, SystemState};
use crate::limits::{BatteryBounds, DeviceBounds, LimitProfile, StairStep, Stairway};
use crate::mpc::Weights;
use crate::zone::{compute_ptdf, validate_zone, Line, Violation, Zone};

/// Default margin as a fraction of the thermal limit.
pub const DEFAULT_MARGIN_FRACTION: f64 = 0.02;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub network: NetworkSpec,
    pub devices: DevicesSpec,
    pub controller: ControllerSpec,
    pub timeline: TimelineSpec,
    /// MW per line at `t = 0`.
    pub initial_flows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: Vec<String>,
    pub lines: Vec<LineSpec>,
    pub slack: String,
    /// Rows per line, columns per node. Takes precedence over reactances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ptdf: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactance: Option<f64>,
    pub thermal_limit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicesSpec {
    #[serde(default)]
    pub batteries: Vec<BatterySpec>,
    #[serde(default)]
    pub curtailable: Vec<CurtailableSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    pub node: String,
    pub e_min: f64,
    pub e_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub e0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurtailableSpec {
    pub node: String,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub dt_s: f64,
    pub tau_curt_s: f64,
    pub tau_batt_s: f64,
    pub horizon: usize,
    pub weights: WeightsSpec,
    /// MWh per battery; defaults to the initial energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_ref: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    pub battery: f64,
    pub curtailment: f64,
    pub energy_ref: f64,
    pub slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack_linear: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curtailment_level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineSpec {
    pub duration_steps: usize,
    pub disturbances: DisturbanceSpec,
    #[serde(default)]
    pub events: Vec<EventSpec>,
}

/// Per-step injection changes `w^k` (MW per node).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DisturbanceSpec {
    /// One row per step, one column per node.
    Table(Vec<Vec<f64>>),
    /// The same row at every step.
    Constant { constant: Vec<f64> },
    Generator { random_walk: RandomWalkSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomWalkSpec {
    pub seed: u64,
    /// Standard deviation of each step of the walk, MW per step.
    pub sigma: f64,
    /// Nodes that move; all nodes but the slack when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub t_s: f64,
    /// `"from-to"`.
    pub line: String,
    /// `[duration_s, overload_mw]` pairs.
    pub stairway: Vec<[f64; 2]>,
    /// Extra injection change per node applied at the event step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impulse: Option<Vec<f64>>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Validates and builds the runnable scenario. `seed` overrides the
    /// random-walk seed.
    pub fn build(&self, seed: Option<u64>) -> Result<Scenario, ScenarioError> {
        build(self, seed).map_err(ScenarioError::Invalid)
    }
}

/// Parses only the network block of a scenario document and builds its
/// PTDF table from reactances.
pub fn network_ptdf(text: &str, slack: Option<&str>) -> Result<(NetworkSpec, DMatrix<f64>), String> {
    #[derive(Deserialize)]
    struct NetworkOnly {
        network: NetworkSpec,
    }
    let doc: NetworkOnly = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let lines = network_lines(&doc.network);
    let slack = slack.unwrap_or(&doc.network.slack);
    let ptdf = compute_ptdf(&doc.network.nodes, &lines, slack).map_err(|e| match e {
        crate::zone::ZoneError::MissingReactance(_) => format!(
            "{e}; reactances are needed to compute PTDFs (supply them, or give an explicit `ptdf` block)"
        ),
        other => other.to_string(),
    })?;
    Ok((doc.network, ptdf))
}

fn network_lines(net: &NetworkSpec) -> Vec<Line> {
    net.lines
        .iter()
        .map(|l| Line::new(&l.from, &l.to, l.reactance, l.thermal_limit))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time_s: f64,
    pub line: usize,
    pub stairway: Stairway,
    pub impulse: Option<DVector<f64>>,
}

/// Everything a run needs, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub zone: Zone,
    pub delays: DelayConfig,
    pub bounds: DeviceBounds,
    pub weights: Weights,
    pub energy_ref: DVector<f64>,
    pub horizon: usize,
    pub initial_state: SystemState,
    pub profiles: Vec<LimitProfile>,
    /// `w^k` for `k = 0..duration_steps`.
    pub disturbances: Vec<DVector<f64>>,
    pub events: Vec<Event>,
    pub duration_steps: usize,
    pub controller_enabled: bool,
}

impl Scenario {
    pub fn line_ids(&self) -> Vec<String> {
        self.zone.lines.iter().map(Line::id).collect()
    }
}

fn finite(out: &mut Vec<Violation>, field: String, v: f64) -> bool {
    if v.is_finite() {
        true
    } else {
        out.push(Violation::new(field, format!("must be finite, got {v}")));
        false
    }
}

fn build(file: &ScenarioFile, seed: Option<u64>) -> Result<Scenario, Vec<Violation>> {
    let mut out = Vec::new();
    let net = &file.network;
    let lines = network_lines(net);
    let n_nodes = net.nodes.len();
    let n_lines = lines.len();

    let ptdf = match &net.ptdf {
        Some(rows) => {
            if net.lines.iter().any(|l| l.reactance.is_some()) {
                log::warn!("network has both reactances and a ptdf table; using the table");
            }
            if rows.len() != n_lines {
                out.push(Violation::new(
                    "network.ptdf",
                    format!("expected {n_lines} rows (one per line), got {}", rows.len()),
                ));
                None
            } else if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_nodes) {
                out.push(Violation::new(
                    format!("network.ptdf[{i}]"),
                    format!("expected {n_nodes} columns (one per node), got {}", r.len()),
                ));
                None
            } else {
                Some(DMatrix::from_fn(n_lines, n_nodes, |i, j| rows[i][j]))
            }
        }
        None => match compute_ptdf(&net.nodes, &lines, &net.slack) {
            Ok(p) => Some(p),
            Err(e) => {
                out.push(Violation::new("network", e.to_string()));
                None
            }
        },
    };

    let batteries = &file.devices.batteries;
    let curtailable = &file.devices.curtailable;
    let zone = ptdf.and_then(|ptdf| {
        let zone = Zone {
            nodes: net.nodes.clone(),
            lines: lines.clone(),
            battery_nodes: batteries.iter().map(|b| b.node.clone()).collect(),
            curtailable_nodes: curtailable.iter().map(|c| c.node.clone()).collect(),
            slack_node: net.slack.clone(),
            ptdf,
        };
        let v = validate_zone(&zone);
        if v.is_empty() {
            Some(zone)
        } else {
            out.extend(v.into_iter().map(|v| {
                let field = match v.field.as_str() {
                    "battery_nodes" => "devices.batteries".to_string(),
                    "curtailable_nodes" => "devices.curtailable".to_string(),
                    "slack_node" => "network.slack".to_string(),
                    f => format!("network.{f}"),
                };
                Violation::new(field, v.message)
            }));
            None
        }
    });

    let mut profiles = Vec::with_capacity(n_lines);
    for (i, l) in net.lines.iter().enumerate() {
        let margin = l.margin.unwrap_or(DEFAULT_MARGIN_FRACTION * l.thermal_limit);
        match LimitProfile::normal(l.thermal_limit, margin) {
            Ok(p) => profiles.push(p),
            Err(e) => out.push(Violation::new(format!("network.lines[{i}]"), e.to_string())),
        }
    }

    let mut battery_bounds = Vec::new();
    for (i, b) in batteries.iter().enumerate() {
        let field = format!("devices.batteries[{i}]");
        let all_finite = [b.e_min, b.e_max, b.p_min, b.p_max, b.e0]
            .iter()
            .all(|v| finite(&mut out, field.clone(), *v));
        if !all_finite {
            continue;
        }
        if !(b.e_min >= 0.0 && b.e_min <= b.e_max) {
            out.push(Violation::new(&field, format!("need 0 <= e_min <= e_max, got {} and {}", b.e_min, b.e_max)));
        }
        if !(b.p_min <= 0.0 && b.p_max >= 0.0) {
            out.push(Violation::new(&field, format!("need p_min <= 0 <= p_max, got {} and {}", b.p_min, b.p_max)));
        }
        if !(b.e0 >= b.e_min && b.e0 <= b.e_max) {
            out.push(Violation::new(&field, format!("e0 {} outside [e_min, e_max]", b.e0)));
        }
        battery_bounds.push(BatteryBounds {
            e_min: b.e_min,
            e_max: b.e_max,
            p_min: b.p_min,
            p_max: b.p_max,
        });
    }
    for (i, c) in curtailable.iter().enumerate() {
        if !(c.p_max >= 0.0 && c.p_max.is_finite()) {
            out.push(Violation::new(
                format!("devices.curtailable[{i}].p_max"),
                format!("must be a finite value >= 0, got {}", c.p_max),
            ));
        }
    }

    let ctl = &file.controller;
    let delays = match DelayConfig::new(ctl.dt_s, ctl.tau_curt_s, ctl.tau_batt_s) {
        Ok(d) => Some(d),
        Err(e) => {
            out.push(Violation::new("controller", e.to_string()));
            None
        }
    };
    if let Some(d) = &delays {
        let needed = d.d_curt.max(d.d_batt).max(1);
        if ctl.horizon < needed {
            out.push(Violation::new(
                "controller.horizon",
                format!("must be at least {needed} steps (longest delay), got {}", ctl.horizon),
            ));
        }
    }
    let w = &ctl.weights;
    let weights = Weights {
        battery: w.battery,
        curtailment: w.curtailment,
        energy_ref: w.energy_ref,
        slack: w.slack,
        slack_linear: w.slack_linear.unwrap_or(Weights::default().slack_linear),
        curtailment_level: w.curtailment_level.unwrap_or(0.0),
    };
    for (name, v, strict) in [
        ("battery", weights.battery, true),
        ("curtailment", weights.curtailment, true),
        ("energy_ref", weights.energy_ref, false),
        ("slack", weights.slack, true),
        ("slack_linear", weights.slack_linear, false),
        ("curtailment_level", weights.curtailment_level, false),
    ] {
        let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
        if !ok {
            let bound = if strict { "> 0" } else { ">= 0" };
            out.push(Violation::new(format!("controller.weights.{name}"), format!("must be {bound}, got {v}")));
        }
    }
    let energy_ref = match &ctl.e_ref {
        Some(e) if e.len() != batteries.len() => {
            out.push(Violation::new(
                "controller.e_ref",
                format!("expected {} values (one per battery), got {}", batteries.len(), e.len()),
            ));
            DVector::zeros(batteries.len())
        }
        Some(e) => DVector::from_column_slice(e),
        None => DVector::from_iterator(batteries.len(), batteries.iter().map(|b| b.e0)),
    };

    if file.initial_flows.len() != n_lines {
        out.push(Violation::new(
            "initial_flows",
            format!("expected {n_lines} values (one per line), got {}", file.initial_flows.len()),
        ));
    }

    let tl = &file.timeline;
    if tl.duration_steps == 0 {
        out.push(Violation::new("timeline.duration_steps", "must be > 0"));
    }
    let disturbances = disturbance_series(&tl.disturbances, net, tl.duration_steps, seed, &mut out);

    let mut events = Vec::new();
    let mut seen_lines = Vec::new();
    for (i, e) in tl.events.iter().enumerate() {
        let field = format!("timeline.events[{i}]");
        let Some(line) = lines.iter().position(|l| l.id() == e.line) else {
            out.push(Violation::new(format!("{field}.line"), format!("unknown line `{}`", e.line)));
            continue;
        };
        if seen_lines.contains(&line) {
            out.push(Violation::new(&field, format!("second incident on line `{}`", e.line)));
        }
        seen_lines.push(line);
        if let Some(d) = &delays {
            let end = tl.duration_steps as f64 * d.dt_s;
            if !(e.t_s >= 0.0 && e.t_s < end) {
                out.push(Violation::new(format!("{field}.t_s"), format!("must lie in [0, {end}), got {}", e.t_s)));
            }
        }
        let steps = e
            .stairway
            .iter()
            .map(|[d, o]| StairStep {
                duration_s: *d,
                overload_mw: *o,
            })
            .collect();
        let stairway = match Stairway::new(steps) {
            Ok(s) => s,
            Err(err) => {
                out.push(Violation::new(format!("{field}.stairway"), err.to_string()));
                continue;
            }
        };
        let impulse = match &e.impulse {
            Some(v) if v.len() != n_nodes => {
                out.push(Violation::new(
                    format!("{field}.impulse"),
                    format!("expected {n_nodes} values (one per node), got {}", v.len()),
                ));
                None
            }
            Some(v) => Some(DVector::from_column_slice(v)),
            None => None,
        };
        events.push(Event {
            time_s: e.t_s,
            line,
            stairway,
            impulse,
        });
    }
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));

    match (zone, delays) {
        (Some(zone), Some(delays)) if out.is_empty() => {
            let bounds = DeviceBounds {
                batteries: battery_bounds,
                curtail_max: curtailable.iter().map(|c| c.p_max).collect(),
            };
            let initial_state = SystemState::initial(
                DVector::from_column_slice(&file.initial_flows),
                DVector::from_iterator(batteries.len(), batteries.iter().map(|b| b.e0)),
                curtailable.len(),
            );
            Ok(Scenario {
                name: file.name.clone().unwrap_or_else(|| "scenario".into()),
                zone,
                delays,
                bounds,
                weights,
                energy_ref,
                horizon: ctl.horizon,
                initial_state,
                profiles,
                disturbances,
                events,
                duration_steps: tl.duration_steps,
                controller_enabled: ctl.enabled.unwrap_or(true),
            })
        }
        _ => Err(out),
    }
}

fn disturbance_series(
    spec: &DisturbanceSpec,
    net: &NetworkSpec,
    steps: usize,
    seed: Option<u64>,
    out: &mut Vec<Violation>,
) -> Vec<DVector<f64>> {
    let n = net.nodes.len();
    let field = "timeline.disturbances";
    match spec {
        DisturbanceSpec::Table(rows) => {
            if rows.len() < steps {
                out.push(Violation::new(field, format!("expected at least {steps} rows, got {}", rows.len())));
            }
            if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
                out.push(Violation::new(
                    format!("{field}[{i}]"),
                    format!("expected {n} values (one per node), got {}", r.len()),
                ));
                return Vec::new();
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                out.push(Violation::new(field, "values must be finite"));
            }
            rows.iter().take(steps).map(|r| DVector::from_column_slice(r)).collect()
        }
        DisturbanceSpec::Constant { constant } => {
            if constant.len() != n {
                out.push(Violation::new(
                    format!("{field}.constant"),
                    format!("expected {n} values (one per node), got {}", constant.len()),
                ));
                return Vec::new();
            }
            vec![DVector::from_column_slice(constant); steps]
        }
        DisturbanceSpec::Generator { random_walk } => {
            let moving: Vec<usize> = match &random_walk.nodes {
                Some(names) => {
                    let mut idx = Vec::new();
                    for name in names {
                        match net.nodes.iter().position(|x| x == name) {
                            Some(i) => idx.push(i),
                            None => out.push(Violation::new(
                                format!("{field}.random_walk.nodes"),
                                format!("unknown node `{name}`"),
                            )),
                        }
                    }
                    idx
                }
                None => (0..n).filter(|&i| net.nodes[i] != net.slack).collect(),
            };
            let Ok(normal) = Normal::new(0.0, random_walk.sigma) else {
                out.push(Violation::new(
                    format!("{field}.random_walk.sigma"),
                    format!("must be finite and >= 0, got {}", random_walk.sigma),
                ));
                return Vec::new();
            };
            if random_walk.sigma < 0.0 {
                out.push(Violation::new(format!("{field}.random_walk.sigma"), "must be >= 0"));
            }
            random_walk_series(n, &moving, normal, seed.unwrap_or(random_walk.seed), steps)
        }
    }
}

/// Seeded random walk of the injection changes on the `moving` nodes:
/// `w^0 = 0`, `w^k = w^{k-1} + N(0, sigma)`.
pub fn random_walk_series(
    n_nodes: usize,
    moving: &[usize],
    normal: Normal<f64>,
    seed: u64,
    steps: usize,
) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DVector::zeros(n_nodes);
    (0..steps)
        .map(|k| {
            if k > 0 {
                for &i in moving {
                    w[i] += normal.sample(&mut rng);
                }
            }
            w.clone()
        })
        .collect()
}
