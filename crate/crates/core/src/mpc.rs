//! Condensed, slack-softened MPC problem and the receding-horizon controller.
//!
//! The decision vector is `z = [U_curt; U_batt; eps]`: `N` curtailment order
//! slots, `N` battery order slots and one slack per line per predicted step.
//! States are eliminated through the dynamics, holding the disturbance at its
//! measured value over the whole horizon.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::{DynamicsError, StateLayout, StateSpaceModel};
use crate::limits::{ConstraintSet, RowKind};
use crate::qp::{self, QpInstance, QpSettings, QpStatus, Residuals};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("horizon {horizon} must be at least the longest delay {delay}")]
    Horizon { horizon: usize, delay: usize },
    #[error("invalid cost: {0}")]
    Cost(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), MpcError> {
    if got == expected {
        Ok(())
    } else {
        Err(MpcError::Dimension { what, expected, got })
    }
}

/// Scalar weights as they appear in scenario files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub battery: f64,
    pub curtailment: f64,
    pub energy_ref: f64,
    pub slack: f64,
    pub slack_linear: f64,
    pub curtailment_level: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            battery: 1.0,
            curtailment: 100.0,
            energy_ref: 0.01,
            slack: 1e6,
            slack_linear: 1e6,
            curtailment_level: 0.0,
        }
    }
}

/// Diagonal weights. `q1`/`x_ref` span the state, `q2_*` the orders.
#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    pub q1: DVector<f64>,
    pub x_ref: DVector<f64>,
    pub q2_curt: DVector<f64>,
    pub q2_batt: DVector<f64>,
    pub slack_weight: f64,
    /// Per-MW slack price; makes the softening exact.
    pub slack_linear: f64,
}

impl CostConfig {
    pub fn from_weights(layout: &StateLayout, w: &Weights, energy_ref: &DVector<f64>) -> Result<Self, MpcError> {
        check_len("energy reference", energy_ref.len(), layout.n_batt)?;
        let mut q1 = DVector::zeros(layout.dim());
        let mut x_ref = DVector::zeros(layout.dim());
        for b in 0..layout.n_batt {
            q1[layout.energy() + b] = w.energy_ref;
            x_ref[layout.energy() + b] = energy_ref[b];
        }
        for c in 0..layout.n_curt {
            q1[layout.curtailment() + c] = w.curtailment_level;
        }
        let cost = Self {
            q1,
            x_ref,
            q2_curt: DVector::from_element(layout.n_curt, w.curtailment),
            q2_batt: DVector::from_element(layout.n_batt, w.battery),
            slack_weight: w.slack,
            slack_linear: w.slack_linear,
        };
        cost.validate()?;
        Ok(cost)
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if self.q1.iter().any(|q| !(*q >= 0.0)) {
            return Err(MpcError::Cost("state weights must be >= 0".into()));
        }
        if self.q2_curt.iter().chain(self.q2_batt.iter()).any(|q| !(*q > 0.0)) {
            return Err(MpcError::Cost("order weights must be > 0".into()));
        }
        if !(self.slack_weight > 0.0) || !(self.slack_linear >= 0.0) {
            return Err(MpcError::Cost("slack weight must be > 0 and slack price >= 0".into()));
        }
        Ok(())
    }

    /// Every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            q1: &self.q1 * factor,
            x_ref: self.x_ref.clone(),
            q2_curt: &self.q2_curt * factor,
            q2_batt: &self.q2_batt * factor,
            slack_weight: self.slack_weight * factor,
            slack_linear: self.slack_linear * factor,
        }
    }
}

/// Measured data the problem is parameterized by.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcParameters {
    pub state: DVector<f64>,
    pub disturbance: DVector<f64>,
    /// Issued orders not yet realized, oldest first.
    pub pending_curt: Vec<DVector<f64>>,
    pub pending_batt: Vec<DVector<f64>>,
}

/// Predicted states `x^{k+1}, ..., x^{k+N}` under candidate orders.
pub fn predict(
    model: &StateSpaceModel,
    params: &MpcParameters,
    u_curt: &[DVector<f64>],
    u_batt: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>, MpcError> {
    let (dc, db) = (model.delays.d_curt, model.delays.d_batt);
    check_len("pending curtailment orders", params.pending_curt.len(), dc)?;
    check_len("pending battery orders", params.pending_batt.len(), db)?;
    check_len("battery plan", u_batt.len(), u_curt.len())?;
    let mut x = params.state.clone();
    let mut out = Vec::with_capacity(u_curt.len());
    for t in 0..u_curt.len() {
        let uc = if t < dc { &params.pending_curt[t] } else { &u_curt[t - dc] };
        let ub = if t < db { &params.pending_batt[t] } else { &u_batt[t - db] };
        x = model.step_vector(&x, uc, ub, &params.disturbance)?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Identifies a QP row independently of the step it was built at, so the
/// active set can be shifted between consecutive problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowTag {
    /// Row of the constraint set at predicted step `t` (1-based).
    Bound { step: usize, kind: RowKind },
    /// `eps_{line, t} >= 0`.
    SlackNonneg { step: usize, line: usize },
}

impl RowTag {
    pub fn step(&self) -> usize {
        match *self {
            RowTag::Bound { step, .. } | RowTag::SlackNonneg { step, .. } => step,
        }
    }

    /// Same row one step later, or `None` once it leaves the horizon.
    pub fn shifted(&self) -> Option<Self> {
        match *self {
            RowTag::Bound { step, kind } if step > 1 => Some(RowTag::Bound { step: step - 1, kind }),
            RowTag::SlackNonneg { step, line } if step > 1 => {
                Some(RowTag::SlackNonneg { step: step - 1, line })
            }
            _ => None,
        }
    }
}

/// `min 1/2 z'Hz + g'z + c  s.t.  Gz <= h`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub horizon: usize,
    pub n_curt: usize,
    pub n_batt: usize,
    pub n_lines: usize,
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub constant: f64,
    pub constraints: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub tags: Vec<RowTag>,
    /// Added to the Hessian diagonal when solving.
    pub regularization: f64,
}

pub const REGULARIZATION: f64 = 1e-9;

/// Curtailment orders, battery orders and slacks, one vector per slot.
pub type Plans = (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>);

impl MpcProblem {
    pub fn n_vars(&self) -> usize {
        self.horizon * (self.n_curt + self.n_batt + self.n_lines)
    }

    pub fn curt_index(&self, slot: usize, node: usize) -> usize {
        slot * self.n_curt + node
    }

    pub fn batt_index(&self, slot: usize, battery: usize) -> usize {
        self.horizon * self.n_curt + slot * self.n_batt + battery
    }

    /// Slack of `line` at predicted step `t` (1-based).
    pub fn slack_index(&self, t: usize, line: usize) -> usize {
        self.horizon * (self.n_curt + self.n_batt) + (t - 1) * self.n_lines + line
    }

    /// Objective without the regularization term.
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.gradient.dot(z) + self.constant
    }

    pub fn qp_instance(&self) -> QpInstance {
        let mut h = self.hessian.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += self.regularization;
        }
        QpInstance::new(h, self.gradient.clone(), self.constraints.clone(), self.rhs.clone())
            .expect("condensed problem is well formed")
    }

    /// Splits `z` into order plans and slacks.
    pub fn split(&self, z: &DVector<f64>) -> Plans {
        let n = self.horizon;
        let curt = (0..n)
            .map(|s| DVector::from_fn(self.n_curt, |c, _| z[self.curt_index(s, c)]))
            .collect();
        let batt = (0..n)
            .map(|s| DVector::from_fn(self.n_batt, |b, _| z[self.batt_index(s, b)]))
            .collect();
        let slack = (1..=n)
            .map(|t| DVector::from_fn(self.n_lines, |l, _| z[self.slack_index(t, l)]))
            .collect();
        (curt, batt, slack)
    }

    /// Packs plans and slacks into `z`.
    pub fn pack(&self, curt: &[DVector<f64>], batt: &[DVector<f64>], slack: &[DVector<f64>]) -> DVector<f64> {
        let mut z = DVector::zeros(self.n_vars());
        for s in 0..self.horizon {
            for c in 0..self.n_curt {
                z[self.curt_index(s, c)] = curt[s][c];
            }
            for b in 0..self.n_batt {
                z[self.batt_index(s, b)] = batt[s][b];
            }
            for l in 0..self.n_lines {
                z[self.slack_index(s + 1, l)] = slack[s][l];
            }
        }
        z
    }
}

/// Eliminates the states: `x^{k+t} = c_t + Phi_t z` for `t = 1..=N`.
fn state_maps(
    model: &StateSpaceModel,
    params: &MpcParameters,
    horizon: usize,
    n_vars: usize,
) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let layout = &model.layout;
    let (nc, nb) = (layout.n_curt, layout.n_batt);
    let (dc, db) = (model.delays.d_curt, model.delays.d_batt);
    let drift = &model.b_w * &params.disturbance;
    let mut c = params.state.clone();
    let mut phi = DMatrix::zeros(layout.dim(), n_vars);
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        c = &model.a * &c + &drift;
        phi = &model.a * &phi;
        if t < dc {
            c += &model.b_curt * &params.pending_curt[t];
        } else {
            let col = (t - dc) * nc;
            let mut block = phi.columns_mut(col, nc);
            block += &model.b_curt;
        }
        if t < db {
            c += &model.b_batt * &params.pending_batt[t];
        } else {
            let col = horizon * nc + (t - db) * nb;
            let mut block = phi.columns_mut(col, nb);
            block += &model.b_batt;
        }
        out.push((c.clone(), phi.clone()));
    }
    out
}

/// Builds the condensed QP for one controller step.
pub fn condense(
    model: &StateSpaceModel,
    cost: &CostConfig,
    constraints: &ConstraintSet,
    params: &MpcParameters,
) -> Result<MpcProblem, MpcError> {
    let layout = &model.layout;
    let (nl, nc, nb) = (layout.n_lines, layout.n_curt, layout.n_batt);
    let horizon = constraints.horizon();
    let delay = model.delays.d_curt.max(model.delays.d_batt);
    if horizon < delay.max(1) {
        return Err(MpcError::Horizon { horizon, delay });
    }
    check_len("state", params.state.len(), layout.dim())?;
    check_len("disturbance", params.disturbance.len(), layout.n_nodes)?;
    check_len("pending curtailment orders", params.pending_curt.len(), model.delays.d_curt)?;
    check_len("pending battery orders", params.pending_batt.len(), model.delays.d_batt)?;
    check_len("state weights", cost.q1.len(), layout.dim())?;
    check_len("state reference", cost.x_ref.len(), layout.dim())?;
    check_len("curtailment weights", cost.q2_curt.len(), nc)?;
    check_len("battery weights", cost.q2_batt.len(), nb)?;

    let n_vars = horizon * (nc + nb + nl);
    let maps = state_maps(model, params, horizon, n_vars);

    let mut hessian = DMatrix::zeros(n_vars, n_vars);
    let mut gradient = DVector::zeros(n_vars);
    let mut constant = 0.0;
    let weighted: Vec<usize> = (0..layout.dim()).filter(|&i| cost.q1[i] != 0.0).collect();
    for (c, phi) in &maps {
        for &i in &weighted {
            let q = cost.q1[i];
            let row = phi.row(i);
            let offset = c[i] - cost.x_ref[i];
            hessian.ger(2.0 * q, &row.transpose(), &row.transpose(), 1.0);
            gradient.axpy(2.0 * q * offset, &row.transpose(), 1.0);
            constant += q * offset * offset;
        }
    }
    for s in 0..horizon {
        for j in 0..nc {
            let i = s * nc + j;
            hessian[(i, i)] += 2.0 * cost.q2_curt[j];
        }
        for j in 0..nb {
            let i = horizon * nc + s * nb + j;
            hessian[(i, i)] += 2.0 * cost.q2_batt[j];
        }
    }
    let eps0 = horizon * (nc + nb);
    for i in eps0..n_vars {
        hessian[(i, i)] += 2.0 * cost.slack_weight;
        gradient[i] += cost.slack_linear;
    }

    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs = Vec::new();
    let mut tags = Vec::new();
    for t in 1..=horizon {
        let (c, phi) = &maps[t - 1];
        let gx = &constraints.h_x * phi;
        let h0 = constraints.rhs(t) - &constraints.h_x * c;
        for (r, &kind) in constraints.kinds.iter().enumerate() {
            let mut row = gx.row(r).transpose();
            for j in 0..nc {
                row[(t - 1) * nc + j] += constraints.h_u_curt[(r, j)];
            }
            for j in 0..nb {
                row[horizon * nc + (t - 1) * nb + j] += constraints.h_u_batt[(r, j)];
            }
            if let RowKind::FlowUpper(l) | RowKind::FlowLower(l) = kind {
                row[eps0 + (t - 1) * nl + l] = -1.0;
            }
            if row.iter().all(|v| *v == 0.0) {
                // Fixed by orders already issued; nothing left to decide.
                if h0[r] < 0.0 {
                    log::debug!("row {kind:?} at step {t} violated by pending orders ({})", h0[r]);
                }
                continue;
            }
            rows.push(row);
            rhs.push(h0[r]);
            tags.push(RowTag::Bound { step: t, kind });
        }
        for l in 0..nl {
            let mut row = DVector::zeros(n_vars);
            row[eps0 + (t - 1) * nl + l] = -1.0;
            rows.push(row);
            rhs.push(0.0);
            tags.push(RowTag::SlackNonneg { step: t, line: l });
        }
    }
    let mut g = DMatrix::zeros(rows.len(), n_vars);
    for (i, row) in rows.iter().enumerate() {
        g.row_mut(i).copy_from(&row.transpose());
    }

    Ok(MpcProblem {
        horizon,
        n_curt: nc,
        n_batt: nb,
        n_lines: nl,
        hessian,
        gradient,
        constant,
        constraints: g,
        rhs: DVector::from_vec(rhs),
        tags,
        regularization: REGULARIZATION,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub first_curt: DVector<f64>,
    pub first_batt: DVector<f64>,
    pub plan_curt: Vec<DVector<f64>>,
    pub plan_batt: Vec<DVector<f64>>,
    /// `eps` per predicted step `t = 1..=N`.
    pub slacks: Vec<DVector<f64>>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    pub active: Vec<RowTag>,
    pub z: DVector<f64>,
}

/// Solves the problem, warm-started from `hint` when given. Without a hint
/// every slack starts at its lower bound.
pub fn solve_mpc(problem: &MpcProblem, settings: &QpSettings, hint: Option<&[RowTag]>) -> MpcSolution {
    let inst = problem.qp_instance();
    let working: Vec<usize> = match hint {
        Some(tags) => {
            let index: HashMap<RowTag, usize> =
                problem.tags.iter().enumerate().map(|(i, t)| (*t, i)).collect();
            tags.iter().filter_map(|t| index.get(t).copied()).collect()
        }
        None => problem
            .tags
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(t, RowTag::SlackNonneg { .. }))
            .map(|(i, _)| i)
            .collect(),
    };
    let res = qp::solve_with_working_set(&inst, settings, &working);
    let (plan_curt, plan_batt, slacks) = problem.split(&res.z);
    MpcSolution {
        first_curt: plan_curt[0].clone(),
        first_batt: plan_batt[0].clone(),
        objective: problem.objective(&res.z),
        status: res.status,
        iterations: res.iterations,
        residuals: res.residuals,
        active: res.active_set.iter().map(|&i| problem.tags[i]).collect(),
        z: res.z,
        plan_curt,
        plan_batt,
        slacks,
    }
}

/// What the controller decided at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub curt: DVector<f64>,
    pub batt: DVector<f64>,
    /// Slack the solver needed at the first predicted step.
    pub slack: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// True when the move came from the previous plan.
    pub fallback: bool,
}

/// Receding-horizon controller: condenses, solves, keeps the plan and active
/// set for the next step.
#[derive(Debug, Clone)]
pub struct Controller {
    pub model: StateSpaceModel,
    pub cost: CostConfig,
    pub settings: QpSettings,
    /// Failing instances are written here when set.
    pub dump_dir: Option<PathBuf>,
    previous: Option<MpcSolution>,
    shift: usize,
}

impl Controller {
    pub fn new(model: StateSpaceModel, cost: CostConfig, settings: QpSettings) -> Result<Self, MpcError> {
        cost.validate()?;
        check_len("state weights", cost.q1.len(), model.layout.dim())?;
        Ok(Self {
            model,
            cost,
            settings,
            dump_dir: None,
            previous: None,
            shift: 0,
        })
    }

    pub fn decide(&mut self, constraints: &ConstraintSet, params: &MpcParameters) -> Result<ControlDecision, MpcError> {
        let problem = condense(&self.model, &self.cost, constraints, params)?;
        let hint: Option<Vec<RowTag>> = self.previous.as_ref().map(|prev| {
            let mut tags: Vec<RowTag> = prev.active.iter().filter_map(RowTag::shifted).collect();
            tags.extend((0..problem.n_lines).map(|line| RowTag::SlackNonneg {
                step: problem.horizon,
                line,
            }));
            tags
        });
        let sol = solve_mpc(&problem, &self.settings, hint.as_deref());
        if sol.status == QpStatus::Optimal {
            let decision = ControlDecision {
                curt: sol.first_curt.clone(),
                batt: sol.first_batt.clone(),
                slack: sol.slacks[0].clone(),
                status: sol.status,
                iterations: sol.iterations,
                fallback: false,
            };
            self.previous = Some(sol);
            self.shift = 0;
            return Ok(decision);
        }

        log::warn!(
            "qp status {} after {} iterations (residual {:.3e}); reusing previous plan",
            sol.status.as_str(),
            sol.iterations,
            sol.residuals.max()
        );
        self.dump(&problem);
        self.shift += 1;
        let (curt, batt) = match &self.previous {
            Some(prev) if self.shift < prev.plan_curt.len() => {
                (prev.plan_curt[self.shift].clone(), prev.plan_batt[self.shift].clone())
            }
            _ => (
                DVector::zeros(self.model.layout.n_curt),
                DVector::zeros(self.model.layout.n_batt),
            ),
        };
        Ok(ControlDecision {
            curt,
            batt,
            slack: DVector::zeros(self.model.layout.n_lines),
            status: sol.status,
            iterations: sol.iterations,
            fallback: true,
        })
    }

    fn dump(&self, problem: &MpcProblem) {
        let Some(dir) = &self.dump_dir else { return };
        let path = dir.join(format!("failed_qp_{}.txt", problem.tags.len()));
        let written = std::fs::create_dir_all(dir)
            .and_then(|_| File::create(&path))
            .and_then(|f| problem.qp_instance().write_to(BufWriter::new(f)));
        match written {
            Ok(()) => log::warn!("wrote failing instance to {}", path.display()),
            Err(e) => log::warn!("could not dump failing instance: {e}"),
        }
    }
}
