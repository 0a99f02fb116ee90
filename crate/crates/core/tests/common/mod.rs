//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use congestion_core::dynamics::{build_model, DelayConfig, StateSpaceModel};
use congestion_core::limits::{
    build_constraints, BatteryBounds, ConstraintSet, DeviceBounds, LimitProfile, StairStep, Stairway,
};
use congestion_core::mpc::{
    condense, predict, solve_mpc, CostConfig, MpcParameters, MpcProblem, MpcSolution, Plans, RowTag, Weights,
};
use congestion_core::qp::QpSettings;
use congestion_core::qp::QpInstance;
use congestion_core::zone::{Line, Zone};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Connected random network on `n` nodes: a random spanning tree plus a few
/// extra branches. Node `n - 1` is the slack.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize) -> (Vec<String>, Vec<Line>, String) {
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut lines = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        lines.push(Line::new(&nodes[i], &nodes[j], Some(rng.random_range(0.05..1.0)), 100.0));
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            lines.push(Line::new(&nodes[i], &nodes[j], Some(rng.random_range(0.05..1.0)), 100.0));
        }
    }
    let slack = nodes[n - 1].clone();
    (nodes, lines, slack)
}

/// PTDFs by finite differences: inject `h` MW at each node, withdraw it at
/// the slack, solve the full Laplacian with its pseudo-inverse and divide the
/// flow change by `h`.
pub fn ptdf_by_dc_solve(nodes: &[String], lines: &[Line], slack: &str) -> DMatrix<f64> {
    let n = nodes.len();
    let idx = |name: &str| nodes.iter().position(|x| x == name).unwrap();
    let s = idx(slack);
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for l in lines {
        let (i, j, b) = (idx(&l.from), idx(&l.to), 1.0 / l.reactance.unwrap());
        lap[(i, i)] += b;
        lap[(j, j)] += b;
        lap[(i, j)] -= b;
        lap[(j, i)] -= b;
    }
    let pinv = lap.pseudo_inverse(1e-12).unwrap();
    let h = 2.0;
    let mut out = DMatrix::zeros(lines.len(), n);
    for node in 0..n {
        if node == s {
            continue;
        }
        let mut p = DVector::zeros(n);
        p[node] += h;
        p[s] -= h;
        let theta = &pinv * p;
        for (r, l) in lines.iter().enumerate() {
            let (i, j) = (idx(&l.from), idx(&l.to));
            out[(r, node)] = (theta[i] - theta[j]) / l.reactance.unwrap() / h;
        }
    }
    out
}

/// Minimizer found by trying every candidate active set and keeping the
/// best KKT point.
pub fn enumerate_qp(inst: &QpInstance) -> Option<DVector<f64>> {
    let (n, m) = (inst.n_vars(), inst.n_rows());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = rows.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&inst.hessian);
        for j in 0..n {
            rhs[j] = -inst.gradient[j];
        }
        for (a, &i) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + a, j)] = inst.constraints[(i, j)];
                kkt[(j, n + a)] = inst.constraints[(i, j)];
            }
            rhs[n + a] = inst.rhs[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let z = sol.rows(0, n).into_owned();
        if (n..n + k).any(|a| sol[a] < -1e-9) {
            continue;
        }
        if (0..m).any(|i| inst.constraints.row(i).dot(&z.transpose()) > inst.rhs[i] + 1e-9) {
            continue;
        }
        let f = inst.objective(&z);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, z));
        }
    }
    best.map(|(_, z)| z)
}

/// Random positive definite QP with `n <= 6` variables and `m <= 8` rows.
pub fn random_qp(rng: &mut ChaCha8Rng, feasible: bool) -> QpInstance {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(1..=8);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let hessian = a.transpose() * &a + DMatrix::identity(n, n) * 0.1;
    let hessian = (&hessian + hessian.transpose()) * 0.5;
    let gradient = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let constraints =
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-2..3)));
    let rhs = if feasible {
        let z0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        &constraints * z0 + DVector::from_fn(m, |_, _| rng.random_range(0.0..1.0))
    } else {
        DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0))
    };
    QpInstance::new(hessian, gradient, constraints, rhs).unwrap()
}

/// Everything needed to condense one controller step.
pub struct MpcCase {
    pub zone: Zone,
    pub model: StateSpaceModel,
    pub cost: CostConfig,
    pub constraints: ConstraintSet,
    pub params: MpcParameters,
}

/// `tau` giving exactly `d` delay steps at `dt`.
pub fn tau_for(d: usize, dt: f64) -> f64 {
    (d as f64 + 0.5) * dt
}

/// Small random zone, delays, weights, limits and measurements.
pub fn random_mpc_case(rng: &mut ChaCha8Rng) -> MpcCase {
    let n_nodes = rng.random_range(2..=4);
    let nodes: Vec<String> = (0..n_nodes).map(|i| format!("n{i}")).collect();
    let slack = nodes[n_nodes - 1].clone();
    let n_lines = rng.random_range(1..=n_nodes - 1);
    let lines: Vec<Line> = (0..n_lines)
        .map(|l| Line::new(&nodes[l], &slack, None, 100.0))
        .collect();
    let ptdf = DMatrix::from_fn(n_lines, n_nodes, |_, c| {
        if c == n_nodes - 1 {
            0.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let injecting = &nodes[..n_nodes - 1];
    let n_batt = rng.random_range(1..=injecting.len());
    let n_curt = rng.random_range(1..=injecting.len());
    let zone = Zone::new(
        nodes.clone(),
        lines,
        injecting[..n_batt].to_vec(),
        injecting[injecting.len() - n_curt..].to_vec(),
        slack,
        ptdf,
    )
    .unwrap();

    let dt = 2.0;
    let d_curt = rng.random_range(0..=4);
    let d_batt = rng.random_range(0..=d_curt);
    let delays = DelayConfig::new(dt, tau_for(d_curt, dt), tau_for(d_batt, dt)).unwrap();
    let model = build_model(&zone, delays);
    let horizon = d_curt.max(1) + rng.random_range(0..=4);

    let weights = Weights {
        battery: rng.random_range(0.1..10.0),
        curtailment: rng.random_range(1.0..200.0),
        energy_ref: rng.random_range(0.0..1.0),
        slack: rng.random_range(1.0..1e3),
        slack_linear: rng.random_range(0.0..1e3),
        curtailment_level: rng.random_range(0.0..5.0),
    };
    let e_ref = DVector::from_fn(n_batt, |_, _| rng.random_range(5.0..25.0));
    let cost = CostConfig::from_weights(&model.layout, &weights, &e_ref).unwrap();

    let profiles: Vec<LimitProfile> = (0..n_lines)
        .map(|_| {
            let p = LimitProfile::normal(rng.random_range(50.0..100.0), 1.0).unwrap();
            if rng.random_bool(0.5) {
                let stair = Stairway::new(vec![StairStep {
                    duration_s: rng.random_range(2.0..10.0),
                    overload_mw: rng.random_range(0.0..20.0),
                }])
                .unwrap();
                p.trigger_incident(rng.random_range(0.0..6.0), stair).unwrap()
            } else {
                p
            }
        })
        .collect();
    let bounds = DeviceBounds {
        batteries: (0..n_batt)
            .map(|_| BatteryBounds {
                e_min: 0.0,
                e_max: 30.0,
                p_min: -30.0,
                p_max: 30.0,
            })
            .collect(),
        curtail_max: (0..n_curt).map(|_| rng.random_range(10.0..60.0)).collect(),
    };
    let k = rng.random_range(0..4);
    let constraints = build_constraints(&zone, &profiles, &bounds, dt, k, horizon).unwrap();

    let layout = model.layout;
    let mut state = DVector::zeros(layout.dim());
    for l in 0..n_lines {
        state[layout.flows() + l] = rng.random_range(-90.0..90.0);
    }
    for b in 0..n_batt {
        state[layout.energy() + b] = rng.random_range(0.0..30.0);
        state[layout.battery_power() + b] = rng.random_range(-30.0..30.0);
    }
    for c in 0..n_curt {
        state[layout.curtailment() + c] = rng.random_range(0.0..bounds.curtail_max[c]);
    }
    let params = MpcParameters {
        state,
        disturbance: DVector::from_fn(n_nodes, |_, _| rng.random_range(-2.0..2.0)),
        pending_curt: (0..d_curt)
            .map(|_| DVector::from_fn(n_curt, |_, _| rng.random_range(-3.0..3.0)))
            .collect(),
        pending_batt: (0..d_batt)
            .map(|_| DVector::from_fn(n_batt, |_, _| rng.random_range(-3.0..3.0)))
            .collect(),
    };
    MpcCase {
        zone,
        model,
        cost,
        constraints,
        params,
    }
}

/// Random order plans and nonnegative slacks for a problem's horizon.
pub fn random_plan(
    rng: &mut ChaCha8Rng,
    p: &MpcProblem,
) -> Plans {
    let curt = (0..p.horizon)
        .map(|_| DVector::from_fn(p.n_curt, |_, _| rng.random_range(-5.0..5.0)))
        .collect();
    let batt = (0..p.horizon)
        .map(|_| DVector::from_fn(p.n_batt, |_, _| rng.random_range(-5.0..5.0)))
        .collect();
    let slack = (0..p.horizon)
        .map(|_| DVector::from_fn(p.n_lines, |_, _| rng.random_range(0.0..3.0)))
        .collect();
    (curt, batt, slack)
}

/// Cost of a plan by simulating the trajectory step by step.
pub fn trajectory_cost(
    case: &MpcCase,
    curt: &[DVector<f64>],
    batt: &[DVector<f64>],
    slack: &[DVector<f64>],
) -> f64 {
    let states = predict(&case.model, &case.params, curt, batt).unwrap();
    let c = &case.cost;
    let mut j = 0.0;
    for x in &states {
        for i in 0..x.len() {
            j += c.q1[i] * (x[i] - c.x_ref[i]).powi(2);
        }
    }
    for s in 0..curt.len() {
        for (i, u) in curt[s].iter().enumerate() {
            j += c.q2_curt[i] * u * u;
        }
        for (i, u) in batt[s].iter().enumerate() {
            j += c.q2_batt[i] * u * u;
        }
        for e in slack[s].iter() {
            j += c.slack_weight * e * e + c.slack_linear * e;
        }
    }
    j
}

/// `lhs - rhs` of the constraint row behind `tag`, evaluated on the
/// simulated trajectory (flow rows relaxed by their slack).
pub fn trajectory_row_value(
    case: &MpcCase,
    tag: RowTag,
    curt: &[DVector<f64>],
    batt: &[DVector<f64>],
    slack: &[DVector<f64>],
) -> f64 {
    match tag {
        RowTag::SlackNonneg { step, line } => -slack[step - 1][line],
        RowTag::Bound { step, kind } => {
            let states = predict(&case.model, &case.params, curt, batt).unwrap();
            let cs = &case.constraints;
            let r = cs.kinds.iter().position(|k| *k == kind).unwrap();
            let x = &states[step - 1];
            let mut v = cs.h_x.row(r).dot(&x.transpose())
                + cs.h_u_curt.row(r).dot(&curt[step - 1].transpose())
                + cs.h_u_batt.row(r).dot(&batt[step - 1].transpose())
                - cs.rhs(step)[r];
            if let congestion_core::limits::RowKind::FlowUpper(l) | congestion_core::limits::RowKind::FlowLower(l) =
                kind
            {
                v -= slack[step - 1][l];
            }
            v
        }
    }
}

/// Brute-force dispatch for the two-line siting case, on a 0.1 MW grid.
///
/// Battery `b` and curtailment `c_m` sit at the node with sensitivities
/// `(s1m, s2m)`, curtailment `c_a` at the node with `(s1a, s2a)`. Each line
/// needs a reduction of at least `need1` and `need2`. Minimizes
/// `wb b^2 + wc (c_m^2 + c_a^2)`.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_siting(
    s1m: f64,
    s2m: f64,
    s1a: f64,
    s2a: f64,
    need1: f64,
    need2: f64,
    b_max: f64,
    c_max: f64,
    wb: f64,
    wc: f64,
) -> Option<(f64, f64, f64)> {
    let steps = |max: f64| (max * 10.0).round() as i64;
    let mut best: Option<(f64, (f64, f64, f64))> = None;
    for ib in 0..=steps(b_max) {
        let b = ib as f64 / 10.0;
        for im in 0..=steps(c_max) {
            let cm = im as f64 / 10.0;
            let base1 = s1m * (b + cm);
            let base2 = s2m * (b + cm);
            for ia in 0..=steps(c_max) {
                let ca = ia as f64 / 10.0;
                if base1 + s1a * ca < need1 - 1e-12 || base2 + s2a * ca < need2 - 1e-12 {
                    continue;
                }
                let f = wb * b * b + wc * (cm * cm + ca * ca);
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, (b, cm, ca)));
                }
                // Larger `ca` only adds cost once feasible.
                break;
            }
        }
    }
    best.map(|(_, x)| x)
}

pub fn one_line_zone(s: f64) -> Zone {
    Zone::new(
        vec!["a".into(), "s".into()],
        vec![Line::new("a", "s", None, 100.0)],
        vec!["a".into()],
        vec!["a".into()],
        "s".into(),
        DMatrix::from_row_slice(1, 2, &[s, 0.0]),
    )
    .unwrap()
}

pub struct OneLine {
    pub flow: f64,
    pub limit: f64,
    pub curt_max: f64,
    pub horizon: usize,
}

/// Solves one controller step on a single line with a 30 MW battery and one
/// curtailable node at the same node (sensitivity 0.36), no delays.
pub fn solve_one_line(c: &OneLine, weights: Weights) -> (MpcSolution, MpcProblem) {
    let zone = one_line_zone(0.36);
    let model = build_model(&zone, DelayConfig::new(2.0, 1.0, 1.0).unwrap());
    let bounds = DeviceBounds {
        batteries: vec![BatteryBounds {
            e_min: 0.0,
            e_max: 30.0,
            p_min: -30.0,
            p_max: 30.0,
        }],
        curtail_max: vec![c.curt_max],
    };
    let profiles = vec![LimitProfile::normal(c.limit, 0.0).unwrap()];
    let cs = build_constraints(&zone, &profiles, &bounds, 2.0, 0, c.horizon).unwrap();
    let cost = CostConfig::from_weights(&model.layout, &weights, &DVector::from_element(1, 15.0)).unwrap();
    let params = MpcParameters {
        state: DVector::from_vec(vec![c.flow, 15.0, 0.0, 0.0]),
        disturbance: DVector::zeros(2),
        pending_curt: vec![],
        pending_batt: vec![],
    };
    let p = condense(&model, &cost, &cs, &params).unwrap();
    (solve_mpc(&p, &QpSettings::default(), None), p)
}

