//! Time-varying line limits and the polyhedral constraint data.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::StateLayout;
use crate::zone::Zone;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitsError {
    #[error("invalid stairway: {0}")]
    Stairway(String),
    #[error("incident already triggered at t = {0} s")]
    AlreadyTriggered(f64),
    #[error("invalid limit profile: {0}")]
    Profile(String),
    #[error("invalid device bounds: {0}")]
    Bounds(String),
    #[error("expected one limit profile per line ({expected}), got {got}")]
    ProfileCount { expected: usize, got: usize },
}

/// One level of a post-incident overload schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StairStep {
    pub duration_s: f64,
    pub overload_mw: f64,
}

/// Nonincreasing overload schedule; the tolerated overload is zero once all
/// steps have elapsed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stairway {
    steps: Vec<StairStep>,
}

impl Stairway {
    pub fn new(steps: Vec<StairStep>) -> Result<Self, LimitsError> {
        let mut previous = f64::INFINITY;
        for (i, s) in steps.iter().enumerate() {
            if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
                return Err(LimitsError::Stairway(format!(
                    "step {i} duration must be > 0, got {}",
                    s.duration_s
                )));
            }
            if !(s.overload_mw >= 0.0 && s.overload_mw.is_finite()) {
                return Err(LimitsError::Stairway(format!(
                    "step {i} overload must be >= 0, got {}",
                    s.overload_mw
                )));
            }
            if s.overload_mw > previous {
                return Err(LimitsError::Stairway(format!(
                    "step {i} overload {} exceeds the previous step",
                    s.overload_mw
                )));
            }
            previous = s.overload_mw;
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[StairStep] {
        &self.steps
    }

    /// Tolerated overload `elapsed` seconds after the incident. Each step
    /// covers `[start, start + duration)`.
    pub fn overload_at(&self, elapsed_s: f64) -> f64 {
        if elapsed_s < 0.0 {
            return 0.0;
        }
        let mut start = 0.0;
        for s in &self.steps {
            if elapsed_s < start + s.duration_s {
                return s.overload_mw;
            }
            start += s.duration_s;
        }
        0.0
    }

    /// Time after which the overload is back to zero.
    pub fn total_duration_s(&self) -> f64 {
        self.steps.iter().map(|s| s.duration_s).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LimitMode {
    Normal,
    Incident { time_s: f64, stairway: Stairway },
}

/// The bound `L(t)` of one line.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitProfile {
    pub thermal_limit: f64,
    pub margin: f64,
    pub mode: LimitMode,
}

impl LimitProfile {
    pub fn normal(thermal_limit: f64, margin: f64) -> Result<Self, LimitsError> {
        if !(thermal_limit > 0.0 && thermal_limit.is_finite()) {
            return Err(LimitsError::Profile(format!(
                "thermal limit must be > 0, got {thermal_limit}"
            )));
        }
        if !(margin >= 0.0 && margin < thermal_limit) {
            return Err(LimitsError::Profile(format!(
                "margin must lie in [0, {thermal_limit}), got {margin}"
            )));
        }
        Ok(Self {
            thermal_limit,
            margin,
            mode: LimitMode::Normal,
        })
    }

    /// MW bound at absolute time `t_s`. The margin only applies in normal
    /// operation; after an incident the stairway replaces it.
    pub fn limit_at(&self, t_s: f64) -> f64 {
        match &self.mode {
            LimitMode::Incident { time_s, stairway } if t_s >= *time_s => {
                self.thermal_limit + stairway.overload_at(t_s - time_s)
            }
            _ => self.thermal_limit - self.margin,
        }
    }

    pub fn trigger_incident(&self, t_s: f64, stairway: Stairway) -> Result<Self, LimitsError> {
        match self.mode {
            LimitMode::Incident { time_s, .. } => Err(LimitsError::AlreadyTriggered(time_s)),
            LimitMode::Normal => Ok(Self {
                mode: LimitMode::Incident {
                    time_s: t_s,
                    stairway,
                },
                ..self.clone()
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryBounds {
    pub e_min: f64,
    pub e_max: f64,
    pub p_min: f64,
    pub p_max: f64,
}

/// Static actuator limits, in zone battery / curtailable-node order.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceBounds {
    pub batteries: Vec<BatteryBounds>,
    pub curtail_max: Vec<f64>,
}

impl DeviceBounds {
    pub fn validate(&self) -> Result<(), LimitsError> {
        for (i, b) in self.batteries.iter().enumerate() {
            if !(b.e_min <= b.e_max) {
                return Err(LimitsError::Bounds(format!(
                    "battery {i}: e_min {} > e_max {}",
                    b.e_min, b.e_max
                )));
            }
            if !(b.p_min <= b.p_max) {
                return Err(LimitsError::Bounds(format!(
                    "battery {i}: p_min {} > p_max {}",
                    b.p_min, b.p_max
                )));
            }
        }
        for (i, p) in self.curtail_max.iter().enumerate() {
            if !(*p >= 0.0) {
                return Err(LimitsError::Bounds(format!(
                    "curtailable node {i}: p_max must be >= 0, got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// What a constraint row bounds. Indices are line / battery / curtailable
/// node positions within the zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowKind {
    FlowUpper(usize),
    FlowLower(usize),
    EnergyMin(usize),
    EnergyMax(usize),
    CurtailMax(usize),
    CurtailMin(usize),
    PowerMin(usize),
    PowerMax(usize),
    OrderCurtMax(usize),
    OrderCurtMin(usize),
    OrderBattMax(usize),
    OrderBattMin(usize),
}

impl RowKind {
    pub fn is_flow(&self) -> bool {
        matches!(self, RowKind::FlowUpper(_) | RowKind::FlowLower(_))
    }
}

/// `H_x x^{k+t} + H_u^C u_curt^{k+t-1} + H_u^B u_batt^{k+t-1} <= H_0^{k+t}`
/// for `t = 1..=N`. State rows have zero input columns and the order-range
/// rows have zero state columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub kinds: Vec<RowKind>,
    pub h_x: DMatrix<f64>,
    pub h_u_curt: DMatrix<f64>,
    pub h_u_batt: DMatrix<f64>,
    /// Right-hand sides for `t = 0..=N`.
    rhs: Vec<DVector<f64>>,
    pub first_step: usize,
    pub dt_s: f64,
}

impl ConstraintSet {
    pub fn n_rows(&self) -> usize {
        self.kinds.len()
    }

    /// Rows acting on the state (everything but order ranges).
    pub fn n_state_rows(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| {
                !matches!(
                    k,
                    RowKind::OrderCurtMax(_)
                        | RowKind::OrderCurtMin(_)
                        | RowKind::OrderBattMax(_)
                        | RowKind::OrderBattMin(_)
                )
            })
            .count()
    }

    pub fn horizon(&self) -> usize {
        self.rhs.len() - 1
    }

    /// `H_0^{k+t}`.
    pub fn rhs(&self, t: usize) -> &DVector<f64> {
        &self.rhs[t]
    }
}

/// Constraint data for steps `k..=k+N`. Line rows evaluate each profile at
/// absolute time `(k + t) * dt`.
pub fn build_constraints(
    zone: &Zone,
    profiles: &[LimitProfile],
    bounds: &DeviceBounds,
    dt_s: f64,
    k: usize,
    horizon: usize,
) -> Result<ConstraintSet, LimitsError> {
    let layout = StateLayout::of(zone);
    if profiles.len() != layout.n_lines {
        return Err(LimitsError::ProfileCount {
            expected: layout.n_lines,
            got: profiles.len(),
        });
    }
    if bounds.batteries.len() != layout.n_batt || bounds.curtail_max.len() != layout.n_curt {
        return Err(LimitsError::Bounds(format!(
            "expected {} batteries and {} curtailable nodes, got {} and {}",
            layout.n_batt,
            layout.n_curt,
            bounds.batteries.len(),
            bounds.curtail_max.len()
        )));
    }
    bounds.validate()?;

    let (nl, nb, nc) = (layout.n_lines, layout.n_batt, layout.n_curt);
    let mut kinds = Vec::new();
    kinds.extend((0..nl).map(RowKind::FlowUpper));
    kinds.extend((0..nl).map(RowKind::FlowLower));
    kinds.extend((0..nb).map(RowKind::EnergyMin));
    kinds.extend((0..nb).map(RowKind::EnergyMax));
    kinds.extend((0..nc).map(RowKind::CurtailMax));
    kinds.extend((0..nc).map(RowKind::CurtailMin));
    kinds.extend((0..nb).map(RowKind::PowerMin));
    kinds.extend((0..nb).map(RowKind::PowerMax));
    kinds.extend((0..nc).map(RowKind::OrderCurtMax));
    kinds.extend((0..nc).map(RowKind::OrderCurtMin));
    kinds.extend((0..nb).map(RowKind::OrderBattMax));
    kinds.extend((0..nb).map(RowKind::OrderBattMin));

    let rows = kinds.len();
    let mut h_x = DMatrix::zeros(rows, layout.dim());
    let mut h_u_curt = DMatrix::zeros(rows, nc);
    let mut h_u_batt = DMatrix::zeros(rows, nb);
    let mut static_rhs = DVector::zeros(rows);
    for (r, kind) in kinds.iter().enumerate() {
        match *kind {
            RowKind::FlowUpper(l) => h_x[(r, layout.flows() + l)] = 1.0,
            RowKind::FlowLower(l) => h_x[(r, layout.flows() + l)] = -1.0,
            RowKind::EnergyMin(b) => {
                h_x[(r, layout.energy() + b)] = -1.0;
                static_rhs[r] = -bounds.batteries[b].e_min;
            }
            RowKind::EnergyMax(b) => {
                h_x[(r, layout.energy() + b)] = 1.0;
                static_rhs[r] = bounds.batteries[b].e_max;
            }
            RowKind::CurtailMax(c) => {
                h_x[(r, layout.curtailment() + c)] = 1.0;
                static_rhs[r] = bounds.curtail_max[c];
            }
            RowKind::CurtailMin(c) => h_x[(r, layout.curtailment() + c)] = -1.0,
            RowKind::PowerMin(b) => {
                h_x[(r, layout.battery_power() + b)] = -1.0;
                static_rhs[r] = -bounds.batteries[b].p_min;
            }
            RowKind::PowerMax(b) => {
                h_x[(r, layout.battery_power() + b)] = 1.0;
                static_rhs[r] = bounds.batteries[b].p_max;
            }
            RowKind::OrderCurtMax(c) => {
                h_u_curt[(r, c)] = 1.0;
                static_rhs[r] = bounds.curtail_max[c];
            }
            RowKind::OrderCurtMin(c) => {
                h_u_curt[(r, c)] = -1.0;
                static_rhs[r] = bounds.curtail_max[c];
            }
            RowKind::OrderBattMax(b) => {
                h_u_batt[(r, b)] = 1.0;
                static_rhs[r] = bounds.batteries[b].p_max - bounds.batteries[b].p_min;
            }
            RowKind::OrderBattMin(b) => {
                h_u_batt[(r, b)] = -1.0;
                static_rhs[r] = bounds.batteries[b].p_max - bounds.batteries[b].p_min;
            }
        }
    }

    let rhs = (0..=horizon)
        .map(|t| {
            let time = (k + t) as f64 * dt_s;
            let mut h = static_rhs.clone();
            for l in 0..nl {
                let limit = profiles[l].limit_at(time);
                h[l] = limit;
                h[nl + l] = limit;
            }
            h
        })
        .collect();

    Ok(ConstraintSet {
        kinds,
        h_x,
        h_u_curt,
        h_u_batt,
        rhs,
        first_step: k,
        dt_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zone::Line;

    fn fig3() -> Stairway {
        Stairway::new(vec![StairStep {
            duration_s: 60.0,
            overload_mw: 15.0,
        }])
        .unwrap()
    }

    #[test]
    fn normal_bound_is_thermal_minus_margin() {
        let p = LimitProfile::normal(100.0, 5.0).unwrap();
        assert_eq!(p.limit_at(0.0), 95.0);
        assert_eq!(p.limit_at(1e6), 95.0);
    }

    #[test]
    fn stairway_is_right_continuous() {
        let p = LimitProfile::normal(80.0, 1.6).unwrap().trigger_incident(0.0, fig3()).unwrap();
        assert_eq!(p.limit_at(30.0), 95.0);
        assert_eq!(p.limit_at(59.999), 95.0);
        assert_eq!(p.limit_at(60.0), 80.0);
        assert_eq!(p.limit_at(61.0), 80.0);
    }

    #[test]
    fn trigger_twice_fails() {
        let p = LimitProfile::normal(80.0, 1.6).unwrap();
        let before = p.limit_at(0.0);
        let p = p.trigger_incident(0.0, fig3()).unwrap();
        assert_eq!(before, 78.4);
        assert_eq!(p.limit_at(0.0), 95.0);
        assert_eq!(p.trigger_incident(10.0, fig3()), Err(LimitsError::AlreadyTriggered(0.0)));
    }

    #[test]
    fn stairway_rejects_increasing_overload() {
        let steps = vec![
            StairStep { duration_s: 10.0, overload_mw: 5.0 },
            StairStep { duration_s: 10.0, overload_mw: 8.0 },
        ];
        assert!(Stairway::new(steps).is_err());
    }

    fn savignac_like_zone() -> Zone {
        let nodes: Vec<String> = (0..21).map(|i| format!("n{i}")).collect();
        let lines: Vec<Line> = (0..22)
            .map(|i| Line::new(&format!("n{}", i % 21), &format!("n{}", (i + 1 + i / 21) % 21), None, 100.0))
            .collect();
        let ptdf = DMatrix::zeros(22, 21);
        Zone::new(
            nodes.clone(),
            lines,
            vec!["n0".into()],
            nodes[1..12].to_vec(),
            "far".into(),
            ptdf,
        )
        .unwrap()
    }

    fn bounds(nb: usize, nc: usize) -> DeviceBounds {
        DeviceBounds {
            batteries: vec![
                BatteryBounds {
                    e_min: 0.0,
                    e_max: 30.0,
                    p_min: -30.0,
                    p_max: 30.0
                };
                nb
            ],
            curtail_max: vec![20.0; nc],
        }
    }

    #[test]
    fn savignac_row_count() {
        let zone = savignac_like_zone();
        let profiles = vec![LimitProfile::normal(100.0, 2.0).unwrap(); 22];
        let cs = build_constraints(&zone, &profiles, &bounds(1, 11), 2.0, 0, 30).unwrap();
        // Flow pairs, energy pair, curtailment upper, power pair, plus the
        // explicit curtailment lower bounds.
        assert_eq!(cs.n_state_rows(), 2 * 22 + 2 + 11 + 2 + 11);
        assert_eq!(cs.n_rows(), cs.n_state_rows() + 2 * 11 + 2);
        assert_eq!(cs.h_x.shape(), (cs.n_rows(), 35));
        // All normal: constant right-hand side.
        for t in 1..=30 {
            assert_eq!(cs.rhs(t), cs.rhs(0));
        }
    }

    #[test]
    fn rhs_drops_at_stairway_edge() {
        let zone = savignac_like_zone();
        let mut profiles = vec![LimitProfile::normal(100.0, 2.0).unwrap(); 22];
        profiles[3] = LimitProfile::normal(80.0, 2.0).unwrap().trigger_incident(0.0, fig3()).unwrap();
        let cs = build_constraints(&zone, &profiles, &bounds(1, 11), 2.0, 10, 30).unwrap();
        for t in 0..=30 {
            let time = (10 + t) as f64 * 2.0;
            assert_eq!(cs.rhs(t)[3], profiles[3].limit_at(time));
            assert_eq!(cs.rhs(t)[22 + 3], profiles[3].limit_at(time));
        }
        // 60 s is step 30, i.e. t = 20 in this slice.
        assert_eq!(cs.rhs(19)[3], 95.0);
        assert_eq!(cs.rhs(20)[3], 80.0);
    }

    #[test]
    fn infeasible_static_bounds_rejected() {
        let zone = savignac_like_zone();
        let profiles = vec![LimitProfile::normal(100.0, 2.0).unwrap(); 22];
        let mut b = bounds(1, 11);
        b.batteries[0].e_min = 40.0;
        assert!(matches!(
            build_constraints(&zone, &profiles, &b, 2.0, 0, 5),
            Err(LimitsError::Bounds(_))
        ));
    }
}
