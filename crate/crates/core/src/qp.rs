//! Dense strictly convex QP solver.
//!
//! Solves `min 1/2 z'Hz + g'z  s.t.  Gz <= h` with the dual active-set method
//! of Goldfarb and Idnani: start from the unconstrained minimizer (or from the
//! minimizer on a supplied working set) and repeatedly add the most violated
//! row, dropping rows whose multipliers would turn negative. The factors kept
//! are `J = L^{-T} Q` and the triangular `R` with `J' N_A = [R; 0]`, updated by
//! Givens rotations.
//!
//! Rows are scaled to unit Euclidean norm before solving; tolerances and
//! residuals are reported in those scaled units.

use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("hessian is not symmetric (entry ({0}, {1}))")]
    NotSymmetric(usize, usize),
    #[error("malformed instance file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpInstance {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl QpInstance {
    pub fn new(
        hessian: DMatrix<f64>,
        gradient: DVector<f64>,
        constraints: DMatrix<f64>,
        rhs: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = gradient.len();
        let check = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(QpError::Dimension { what, expected, got })
            }
        };
        check("hessian rows", n, hessian.nrows())?;
        check("hessian columns", n, hessian.ncols())?;
        check("constraint columns", n, constraints.ncols())?;
        check("rhs", constraints.nrows(), rhs.len())?;
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (hessian[(i, j)], hessian[(j, i)]);
                if (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                    return Err(QpError::NotSymmetric(i, j));
                }
            }
        }
        Ok(Self {
            hessian,
            gradient,
            constraints,
            rhs,
        })
    }

    /// Unconstrained instance.
    pub fn unconstrained(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Result<Self, QpError> {
        let n = gradient.len();
        Self::new(hessian, gradient, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn n_vars(&self) -> usize {
        self.gradient.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.gradient.dot(z)
    }

    /// Writes a plain-text dump that [`read_instance`] replays bit-exactly.
    pub fn write_to(&self, mut out: impl Write) -> io::Result<()> {
        let (n, m) = (self.n_vars(), self.n_rows());
        writeln!(out, "%%QpInstance dense real")?;
        writeln!(out, "{n} {m}")?;
        let row = |out: &mut dyn Write, values: &mut dyn Iterator<Item = f64>| -> io::Result<()> {
            let line: Vec<String> = values.map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(" "))
        };
        writeln!(out, "%hessian")?;
        for i in 0..n {
            row(&mut out, &mut self.hessian.row(i).iter().copied())?;
        }
        writeln!(out, "%gradient")?;
        row(&mut out, &mut self.gradient.iter().copied())?;
        writeln!(out, "%constraints")?;
        for i in 0..m {
            row(&mut out, &mut self.constraints.row(i).iter().copied())?;
        }
        writeln!(out, "%rhs")?;
        row(&mut out, &mut self.rhs.iter().copied())?;
        Ok(())
    }
}

/// Reads an instance written by [`QpInstance::write_to`].
pub fn read_instance(input: impl BufRead) -> Result<QpInstance, QpError> {
    let mut lines = input
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.starts_with('%')));
    let mut next = || -> Result<String, QpError> {
        lines
            .next()
            .ok_or_else(|| QpError::Parse("unexpected end of file".into()))?
            .map_err(QpError::from)
    };
    let header = next()?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| QpError::Parse(format!("bad header `{header}`"))))
        .collect::<Result<_, _>>()?;
    let [n, m] = dims[..] else {
        return Err(QpError::Parse(format!("bad header `{header}`")));
    };
    let parse_row = |line: String, len: usize| -> Result<Vec<f64>, QpError> {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| QpError::Parse(format!("bad number `{t}`"))))
            .collect::<Result<_, _>>()?;
        if v.len() != len {
            return Err(QpError::Parse(format!("expected {len} values, got {}", v.len())));
        }
        Ok(v)
    };
    let mut hessian = DMatrix::zeros(n, n);
    for i in 0..n {
        let r = parse_row(next()?, n)?;
        hessian.row_mut(i).copy_from_slice(&r);
    }
    let gradient = DVector::from_vec(if n == 0 { Vec::new() } else { parse_row(next()?, n)? });
    let mut constraints = DMatrix::zeros(m, n);
    for i in 0..m {
        let r = parse_row(next()?, n)?;
        constraints.row_mut(i).copy_from_slice(&r);
    }
    let rhs = DVector::from_vec(if m == 0 { Vec::new() } else { parse_row(next()?, m)? });
    QpInstance::new(hessian, gradient, constraints, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Acceptance threshold on every scaled KKT residual.
    pub tolerance: f64,
    /// Violation below which a scaled row counts as satisfied.
    pub feasibility_tol: f64,
    /// Cap on active-set changes.
    pub max_iterations: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            feasibility_tol: 1e-9,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    NumericalFailure,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIterations => "max_iterations",
            QpStatus::Infeasible => "infeasible",
            QpStatus::NumericalFailure => "numerical_failure",
        }
    }
}

/// Scaled KKT residuals (infinity norms).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpResult {
    pub z: DVector<f64>,
    /// One multiplier per row of `G`, unscaled.
    pub multipliers: DVector<f64>,
    pub status: QpStatus,
    pub residuals: Residuals,
    pub iterations: usize,
    pub objective: f64,
    /// Rows held as equalities at termination.
    pub active_set: Vec<usize>,
}

/// KKT residuals of `(z, lambda)` with rows scaled to unit norm.
pub fn kkt_residuals(inst: &QpInstance, z: &DVector<f64>, lambda: &DVector<f64>) -> Residuals {
    let hz = &inst.hessian * z;
    let stationarity = &hz + &inst.gradient + inst.constraints.tr_mul(lambda);
    let scale = 1.0_f64
        .max(inst.gradient.amax())
        .max(hz.amax());
    let mut primal: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    let mut negative: f64 = 0.0;
    for i in 0..inst.n_rows() {
        let norm = inst.constraints.row(i).norm();
        if norm == 0.0 {
            primal = primal.max(-inst.rhs[i]);
            continue;
        }
        let slack = (inst.constraints.row(i).dot(&z.transpose()) - inst.rhs[i]) / norm;
        let scaled_lambda = lambda[i] * norm;
        primal = primal.max(slack);
        negative = negative.max(-scaled_lambda);
        complementarity = complementarity.max((scaled_lambda * slack).abs());
    }
    Residuals {
        primal: primal.max(0.0),
        dual: (stationarity.amax().max(negative)) / scale,
        complementarity: complementarity / scale,
    }
}

/// Cold solve from the unconstrained minimizer.
pub fn solve(inst: &QpInstance, settings: &QpSettings) -> QpResult {
    solve_with_working_set(inst, settings, &[])
}

/// Re-solves from the rows that carried positive multipliers in a previous
/// result (or, without multipliers, the rows tight at `previous_z`).
pub fn warm_start(
    inst: &QpInstance,
    settings: &QpSettings,
    previous_z: Option<&DVector<f64>>,
    previous_lambda: Option<&DVector<f64>>,
) -> QpResult {
    let working: Vec<usize> = match (previous_lambda, previous_z) {
        (Some(lambda), _) if lambda.len() == inst.n_rows() => {
            (0..inst.n_rows()).filter(|&i| lambda[i] > 0.0).collect()
        }
        (_, Some(z)) if z.len() == inst.n_vars() => {
            let gz = &inst.constraints * z;
            (0..inst.n_rows())
                .filter(|&i| {
                    let norm = inst.constraints.row(i).norm();
                    norm > 0.0 && ((gz[i] - inst.rhs[i]) / norm).abs() <= settings.feasibility_tol
                })
                .collect()
        }
        _ => Vec::new(),
    };
    solve_with_working_set(inst, settings, &working)
}

/// Solves starting from the minimizer on `working` (rows held as
/// equalities). Rows whose multipliers come out negative are released first,
/// so any subset is a valid hint.
pub fn solve_with_working_set(inst: &QpInstance, settings: &QpSettings, working: &[usize]) -> QpResult {
    let n = inst.n_vars();
    let m = inst.n_rows();
    let failure = |status| QpResult {
        z: DVector::zeros(n),
        multipliers: DVector::zeros(m),
        status,
        residuals: Residuals::default(),
        iterations: 0,
        objective: 0.0,
        active_set: Vec::new(),
    };

    let Some(chol) = inst.hessian.clone().cholesky() else {
        return failure(QpStatus::NumericalFailure);
    };

    // Scaled rows in ">=" form: n_i' z >= b_i with n_i = -G_i / |G_i|.
    let mut row_of = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    for i in 0..m {
        let norm = inst.constraints.row(i).norm();
        if norm == 0.0 {
            if inst.rhs[i] < -settings.feasibility_tol {
                return failure(QpStatus::Infeasible);
            }
            continue;
        }
        row_of.push(i);
        norms.push(norm);
    }
    let mut normals = DMatrix::zeros(n, row_of.len());
    let mut b = DVector::zeros(row_of.len());
    for (k, (&i, &norm)) in row_of.iter().zip(&norms).enumerate() {
        for j in 0..n {
            normals[(j, k)] = -inst.constraints[(i, j)] / norm;
        }
        b[k] = -inst.rhs[i] / norm;
    }
    let mut internal = vec![usize::MAX; m];
    for (k, &i) in row_of.iter().enumerate() {
        internal[i] = k;
    }

    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("cholesky factor has a positive diagonal");
    let mut state = DualActiveSet {
        n,
        normals: &normals,
        b: &b,
        hessian: &inst.hessian,
        gradient: &inst.gradient,
        j: l_inv.transpose(),
        r: DMatrix::zeros(n, n),
        active: Vec::new(),
        u: Vec::new(),
        x: -chol.solve(&inst.gradient),
        iterations: 0,
    };

    let mut hint: Vec<usize> = working
        .iter()
        .filter(|&&i| i < m && internal[i] != usize::MAX)
        .map(|&i| internal[i])
        .collect();
    hint.sort_unstable();
    hint.dedup();
    state.load_working_set(&hint);

    let status = state.run(settings);

    let mut scaled = DVector::zeros(row_of.len());
    for (k, &c) in state.active.iter().enumerate() {
        scaled[c] = state.u[k];
    }
    let mut multipliers = DVector::zeros(m);
    for (k, &i) in row_of.iter().enumerate() {
        multipliers[i] = scaled[k] / norms[k];
    }
    let z = state.x.clone();
    let residuals = kkt_residuals(inst, &z, &multipliers);
    let status = match status {
        QpStatus::Optimal if residuals.max() > settings.tolerance => QpStatus::NumericalFailure,
        s => s,
    };
    let mut active_set: Vec<usize> = state.active.iter().map(|&k| row_of[k]).collect();
    active_set.sort_unstable();
    QpResult {
        objective: inst.objective(&z),
        z,
        multipliers,
        status,
        residuals,
        iterations: state.iterations,
        active_set,
    }
}

struct DualActiveSet<'a> {
    n: usize,
    normals: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    hessian: &'a DMatrix<f64>,
    gradient: &'a DVector<f64>,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    active: Vec<usize>,
    u: Vec<f64>,
    x: DVector<f64>,
    iterations: usize,
}

impl DualActiveSet<'_> {
    fn q(&self) -> usize {
        self.active.len()
    }

    fn objective(&self) -> f64 {
        0.5 * self.x.dot(&(self.hessian * &self.x)) + self.gradient.dot(&self.x)
    }

    fn rotate_j(&mut self, a: usize, b: usize, c: f64, s: f64) {
        let n = self.n;
        let data = self.j.as_mut_slice();
        let (head, tail) = data.split_at_mut(b * n);
        let col_a = &mut head[a * n..(a + 1) * n];
        let col_b = &mut tail[..n];
        for (x1, x2) in col_a.iter_mut().zip(col_b.iter_mut()) {
            let (v1, v2) = (*x1, *x2);
            *x1 = c * v1 + s * v2;
            *x2 = -s * v1 + c * v2;
        }
    }

    /// Folds `d = J' n_p` into `R`. Returns false (leaving the active set
    /// unchanged) when `n_p` depends on the active normals.
    fn add_constraint(&mut self, p: usize, mut d: DVector<f64>, multiplier: f64) -> bool {
        let (n, q) = (self.n, self.q());
        if q >= n {
            return false;
        }
        let nonzero: Vec<usize> = (q..n).filter(|&i| d[i] != 0.0).collect();
        if nonzero.len() == 1 && nonzero[0] != q {
            // A single entry only needs a column swap.
            let i = nonzero[0];
            self.j.swap_columns(q, i);
            d.swap_rows(q, i);
        } else {
            for k in (q + 1..n).rev() {
                if d[k] == 0.0 {
                    continue;
                }
                let h = d[k - 1].hypot(d[k]);
                let (c, s) = (d[k - 1] / h, d[k] / h);
                d[k - 1] = h;
                d[k] = 0.0;
                self.rotate_j(k - 1, k, c, s);
            }
        }
        if d[q].abs() <= 1e-12 * d.norm().max(f64::MIN_POSITIVE) {
            return false;
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.active.push(p);
        self.u.push(multiplier);
        true
    }

    fn drop_constraint(&mut self, l: usize) {
        let q = self.q();
        for c in l..q - 1 {
            for i in 0..=c + 1 {
                self.r[(i, c)] = self.r[(i, c + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for k in l..q - 1 {
            let (a, bb) = (self.r[(k, k)], self.r[(k + 1, k)]);
            if bb == 0.0 {
                continue;
            }
            let h = a.hypot(bb);
            let (c, s) = (a / h, bb / h);
            self.r[(k, k)] = h;
            self.r[(k + 1, k)] = 0.0;
            for col in k + 1..q - 1 {
                let (x1, x2) = (self.r[(k, col)], self.r[(k + 1, col)]);
                self.r[(k, col)] = c * x1 + s * x2;
                self.r[(k + 1, col)] = -s * x1 + c * x2;
            }
            self.rotate_j(k, k + 1, c, s);
        }
        self.active.remove(l);
        self.u.remove(l);
    }

    /// `R^{-1} v` for the leading `q` entries.
    #[allow(clippy::needless_range_loop)]
    fn r_solve(&self, v: &[f64]) -> Vec<f64> {
        let q = v.len();
        let mut out = v.to_vec();
        for i in (0..q).rev() {
            let mut acc = out[i];
            for k in i + 1..q {
                acc -= self.r[(i, k)] * out[k];
            }
            out[i] = acc / self.r[(i, i)];
        }
        out
    }

    /// `R^{-T} v`.
    #[allow(clippy::needless_range_loop)]
    fn rt_solve(&self, v: &[f64]) -> Vec<f64> {
        let q = v.len();
        let mut out = v.to_vec();
        for i in 0..q {
            let mut acc = out[i];
            for k in 0..i {
                acc -= self.r[(k, i)] * out[k];
            }
            out[i] = acc / self.r[(i, i)];
        }
        out
    }

    /// Factorizes the hinted rows, then moves to the minimizer on them,
    /// releasing rows with negative multipliers until all are nonnegative.
    fn load_working_set(&mut self, hint: &[usize]) {
        if hint.is_empty() {
            return;
        }
        for &p in hint {
            let d = self.j.tr_mul(&self.normals.column(p));
            self.add_constraint(p, d, 0.0);
        }
        loop {
            let q = self.q();
            let jt_g = self.j.tr_mul(self.gradient);
            let b_active: Vec<f64> = self.active.iter().map(|&p| self.b[p]).collect();
            let y1 = self.rt_solve(&b_active);
            let mut y = -jt_g.clone();
            for i in 0..q {
                y[i] = y1[i];
            }
            self.x = &self.j * &y;
            let rhs: Vec<f64> = (0..q).map(|i| y1[i] + jt_g[i]).collect();
            self.u = self.r_solve(&rhs);
            let worst = (0..q)
                .filter(|&i| self.u[i] < 0.0)
                .min_by(|&a, &b| self.u[a].total_cmp(&self.u[b]));
            match worst {
                Some(l) => {
                    self.drop_constraint(l);
                    self.iterations += 1;
                }
                None => break,
            }
        }
    }

    fn run(&mut self, settings: &QpSettings) -> QpStatus {
        let tol = settings.feasibility_tol;
        let mut last_objective = self.objective();
        loop {
            // Most violated inactive row.
            let slack = self.normals.tr_mul(&self.x) - self.b;
            let mut is_active = vec![false; slack.len()];
            for &p in &self.active {
                is_active[p] = true;
            }
            let candidate = (0..slack.len())
                .filter(|&i| !is_active[i] && slack[i] < -tol)
                .min_by(|&a, &b| slack[a].total_cmp(&slack[b]));
            let Some(p) = candidate else {
                return QpStatus::Optimal;
            };
            let mut s_p = slack[p];
            let mut u_plus = 0.0;
            let n_p = self.normals.column(p);

            loop {
                if self.iterations >= settings.max_iterations {
                    return QpStatus::MaxIterations;
                }
                let q = self.q();
                let d = self.j.tr_mul(&n_p);
                let d_free = d.rows(q, self.n - q);
                let curvature = d_free.norm_squared();
                let step_dir = self.j.columns(q, self.n - q) * d_free;
                let r = self.r_solve(&d.as_slice()[..q]);
                let r_scale = r.iter().fold(1.0_f64, |m, v| m.max(v.abs()));

                let mut t_partial = f64::INFINITY;
                let mut drop_at = None;
                for (k, &rk) in r.iter().enumerate() {
                    if rk > 1e-12 * r_scale {
                        let ratio = self.u[k] / rk;
                        if ratio < t_partial {
                            t_partial = ratio;
                            drop_at = Some(k);
                        }
                    }
                }
                let dependent = curvature <= 1e-24 * d.norm_squared().max(f64::MIN_POSITIVE);
                let t_full = if dependent {
                    f64::INFINITY
                } else {
                    (-s_p / curvature).max(0.0)
                };
                let t = t_partial.min(t_full);
                if t.is_infinite() {
                    return QpStatus::Infeasible;
                }

                self.iterations += 1;
                for (k, &rk) in r.iter().enumerate() {
                    self.u[k] -= t * rk;
                }
                u_plus += t;
                if dependent {
                    // Pure dual step.
                    self.drop_constraint(drop_at.expect("finite partial step"));
                    continue;
                }
                self.x += t * &step_dir;
                if cfg!(debug_assertions) {
                    let f = self.objective();
                    debug_assert!(
                        f >= last_objective - 1e-8 * (1.0 + f.abs()),
                        "dual objective decreased: {last_objective} -> {f}"
                    );
                    last_objective = f;
                }
                if t_full <= t_partial {
                    if !self.add_constraint(p, d, u_plus) {
                        return QpStatus::NumericalFailure;
                    }
                    break;
                }
                self.drop_constraint(drop_at.expect("partial step chosen"));
                s_p = n_p.dot(&self.x) - self.b[p];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_identity() {
        let inst = QpInstance::unconstrained(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let res = solve(&inst, &QpSettings::default());
        assert_eq!(res.status, QpStatus::Optimal);
        assert!(res.z.amax() < 1e-15);
    }

    #[test]
    fn one_dimensional_bound() {
        // min z^2/2 - z  s.t. z <= 0.5
        let inst = QpInstance::new(
            DMatrix::identity(1, 1),
            DVector::from_element(1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.5),
        )
        .unwrap();
        let res = solve(&inst, &QpSettings::default());
        assert_eq!(res.status, QpStatus::Optimal);
        assert!((res.z[0] - 0.5).abs() < 1e-12);
        assert!((res.multipliers[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scaled_row_gives_unscaled_multiplier() {
        let inst = QpInstance::new(
            DMatrix::identity(1, 1),
            DVector::from_element(1, -1.0),
            DMatrix::from_element(1, 1, 4.0),
            DVector::from_element(1, 2.0),
        )
        .unwrap();
        let res = solve(&inst, &QpSettings::default());
        assert!((res.z[0] - 0.5).abs() < 1e-12);
        assert!((res.multipliers[0] - 0.125).abs() < 1e-12);
    }

    #[test]
    fn infeasible_rows_detected() {
        // z <= -1 and -z <= -1 (z >= 1)
        let inst = QpInstance::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
        )
        .unwrap();
        assert_eq!(solve(&inst, &QpSettings::default()).status, QpStatus::Infeasible);
    }

    #[test]
    fn zero_row_with_negative_rhs_is_infeasible() {
        let inst = QpInstance::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(1, 2),
            DVector::from_element(1, -1.0),
        )
        .unwrap();
        assert_eq!(solve(&inst, &QpSettings::default()).status, QpStatus::Infeasible);
    }

    #[test]
    fn rejects_asymmetric_hessian() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            QpInstance::unconstrained(h, DVector::zeros(2)),
            Err(QpError::NotSymmetric(1, 0))
        ));
    }

    #[test]
    fn indefinite_hessian_is_numerical_failure() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let inst = QpInstance::unconstrained(h, DVector::zeros(2)).unwrap();
        assert_eq!(solve(&inst, &QpSettings::default()).status, QpStatus::NumericalFailure);
    }

    #[test]
    fn dump_round_trips_exactly() {
        let inst = QpInstance::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0 / 3.0]),
            DVector::from_vec(vec![-1.0, std::f64::consts::PI]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1e-17]),
            DVector::from_element(1, 0.7),
        )
        .unwrap();
        let mut buf = Vec::new();
        inst.write_to(&mut buf).unwrap();
        let back = read_instance(buf.as_slice()).unwrap();
        assert_eq!(back, inst);
    }
}
