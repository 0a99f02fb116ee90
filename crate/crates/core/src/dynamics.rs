//! Delayed-input state-space model of the zone.
//!
//! The state stacks `[flows (nL); battery energy (nB); curtailment (nC);
//! battery power (nB)]`. Orders are deltas on curtailment and battery power.
//! Raising curtailment or charging a battery both withdraw injection at the
//! node, so their flow rows carry the negated PTDF columns.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::limits::DeviceBounds;
use crate::zone::Zone;

const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid delay configuration: {0}")]
    Delay(String),
}

fn check_len(what: &'static str, v: &DVector<f64>, expected: usize) -> Result<(), DynamicsError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(DynamicsError::Dimension {
            what,
            expected,
            got: v.len(),
        })
    }
}

/// Sampling period and actuator delays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayConfig {
    pub dt_s: f64,
    pub tau_curt_s: f64,
    pub tau_batt_s: f64,
    pub d_curt: usize,
    pub d_batt: usize,
}

/// `ceil(tau / dt) - 1`, with ratios within 1e-9 of an integer snapped to it.
fn discrete_delay(tau: f64, dt: f64) -> usize {
    let ratio = tau / dt;
    let snapped = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round()
    } else {
        ratio.ceil()
    };
    (snapped as usize).saturating_sub(1)
}

impl DelayConfig {
    pub fn new(dt_s: f64, tau_curt_s: f64, tau_batt_s: f64) -> Result<Self, DynamicsError> {
        if !(dt_s > 0.0 && dt_s.is_finite()) {
            return Err(DynamicsError::Delay(format!("dt_s must be > 0, got {dt_s}")));
        }
        for (name, tau) in [("tau_curt_s", tau_curt_s), ("tau_batt_s", tau_batt_s)] {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(DynamicsError::Delay(format!("{name} must be > 0, got {tau}")));
            }
        }
        let d_curt = discrete_delay(tau_curt_s, dt_s);
        let d_batt = discrete_delay(tau_batt_s, dt_s);
        if d_curt < d_batt {
            return Err(DynamicsError::Delay(format!(
                "curtailment delay ({d_curt} steps) shorter than battery delay ({d_batt} steps)"
            )));
        }
        Ok(Self {
            dt_s,
            tau_curt_s,
            tau_batt_s,
            d_curt,
            d_batt,
        })
    }
}

/// The plant state `x^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// MW per line.
    pub flows: DVector<f64>,
    /// MWh per battery.
    pub battery_energy: DVector<f64>,
    /// MW currently withheld per curtailable node.
    pub curtailment: DVector<f64>,
    /// MW per battery, positive when charging.
    pub battery_power: DVector<f64>,
}

impl SystemState {
    /// Initial state: given flows and energies, no curtailment, idle batteries.
    pub fn initial(flows: DVector<f64>, battery_energy: DVector<f64>, n_curt: usize) -> Self {
        let n_batt = battery_energy.len();
        Self {
            flows,
            battery_energy,
            curtailment: DVector::zeros(n_curt),
            battery_power: DVector::zeros(n_batt),
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(
            self.flows.len() + 2 * self.battery_energy.len() + self.curtailment.len(),
        );
        v.extend(self.flows.iter());
        v.extend(self.battery_energy.iter());
        v.extend(self.curtailment.iter());
        v.extend(self.battery_power.iter());
        DVector::from_vec(v)
    }

    pub fn from_vector(layout: &StateLayout, x: &DVector<f64>) -> Result<Self, DynamicsError> {
        check_len("state vector", x, layout.dim())?;
        Ok(Self {
            flows: x.rows(layout.flows(), layout.n_lines).into_owned(),
            battery_energy: x.rows(layout.energy(), layout.n_batt).into_owned(),
            curtailment: x.rows(layout.curtailment(), layout.n_curt).into_owned(),
            battery_power: x.rows(layout.battery_power(), layout.n_batt).into_owned(),
        })
    }
}

/// Offsets of the state blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_lines: usize,
    pub n_batt: usize,
    pub n_curt: usize,
    pub n_nodes: usize,
}

impl StateLayout {
    pub fn of(zone: &Zone) -> Self {
        Self {
            n_lines: zone.n_lines(),
            n_batt: zone.n_batteries(),
            n_curt: zone.n_curtailable(),
            n_nodes: zone.n_nodes(),
        }
    }

    /// `n = nL + nB + nC + nB`.
    pub fn dim(&self) -> usize {
        self.n_lines + 2 * self.n_batt + self.n_curt
    }

    pub fn flows(&self) -> usize {
        0
    }

    pub fn energy(&self) -> usize {
        self.n_lines
    }

    pub fn curtailment(&self) -> usize {
        self.n_lines + self.n_batt
    }

    pub fn battery_power(&self) -> usize {
        self.n_lines + self.n_batt + self.n_curt
    }
}

/// `x+ = A x + B_curt u_curt + B_batt u_batt + B_w w`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub layout: StateLayout,
    pub delays: DelayConfig,
    pub a: DMatrix<f64>,
    pub b_curt: DMatrix<f64>,
    pub b_batt: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
}

pub fn build_model(zone: &Zone, delays: DelayConfig) -> StateSpaceModel {
    let layout = StateLayout::of(zone);
    let n = layout.dim();
    let (nl, nb, nc, nn) = (layout.n_lines, layout.n_batt, layout.n_curt, layout.n_nodes);
    let dt_h = delays.dt_s / SECONDS_PER_HOUR;

    // E+ = E + dt * P+ = E + dt * P + dt * u, so A couples energy to power.
    let mut a = DMatrix::identity(n, n);
    for b in 0..nb {
        a[(layout.energy() + b, layout.battery_power() + b)] = dt_h;
    }

    let mut b_curt = DMatrix::zeros(n, nc);
    b_curt
        .view_mut((0, 0), (nl, nc))
        .copy_from(&(-zone.ptdf_columns(&zone.curtailable_nodes)));
    b_curt
        .view_mut((layout.curtailment(), 0), (nc, nc))
        .fill_with_identity();

    let mut b_batt = DMatrix::zeros(n, nb);
    b_batt
        .view_mut((0, 0), (nl, nb))
        .copy_from(&(-zone.ptdf_columns(&zone.battery_nodes)));
    for b in 0..nb {
        b_batt[(layout.energy() + b, b)] = dt_h;
        b_batt[(layout.battery_power() + b, b)] = 1.0;
    }

    let mut b_w = DMatrix::zeros(n, nn);
    b_w.view_mut((0, 0), (nl, nn)).copy_from(&zone.ptdf);

    StateSpaceModel {
        layout,
        delays,
        a,
        b_curt,
        b_batt,
        b_w,
    }
}

impl StateSpaceModel {
    /// One step on raw state vectors.
    pub fn step_vector(
        &self,
        x: &DVector<f64>,
        u_curt: &DVector<f64>,
        u_batt: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError> {
        check_len("state", x, self.layout.dim())?;
        check_len("curtailment input", u_curt, self.layout.n_curt)?;
        check_len("battery input", u_batt, self.layout.n_batt)?;
        check_len("disturbance", w, self.layout.n_nodes)?;
        Ok(&self.a * x + &self.b_curt * u_curt + &self.b_batt * u_batt + &self.b_w * w)
    }

    /// Advances the plant with already-delayed (effective) inputs.
    pub fn step(
        &self,
        state: &SystemState,
        u_curt: &DVector<f64>,
        u_batt: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<SystemState, DynamicsError> {
        let next = self.step_vector(&state.to_vector(), u_curt, u_batt, w)?;
        SystemState::from_vector(&self.layout, &next)
    }

    /// MWh gained per MW of charging held over one step.
    pub fn energy_per_step(&self) -> f64 {
        self.delays.dt_s / SECONDS_PER_HOUR
    }
}

/// Adjusts effective inputs so the next state honors the device bounds:
/// curtailment in `[0, p_max]`, battery power in `[p_min, p_max]` and
/// battery energy in `[e_min, e_max]`.
pub fn clamp_inputs(
    model: &StateSpaceModel,
    bounds: &DeviceBounds,
    state: &SystemState,
    u_curt: &DVector<f64>,
    u_batt: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let curt = DVector::from_iterator(
        u_curt.len(),
        u_curt.iter().enumerate().map(|(i, u)| {
            let now = state.curtailment[i];
            (now + u).clamp(0.0, bounds.curtail_max[i]) - now
        }),
    );
    let dt_h = model.energy_per_step();
    let batt = DVector::from_iterator(
        u_batt.len(),
        u_batt.iter().enumerate().map(|(b, u)| {
            let dev = &bounds.batteries[b];
            let (p, e) = (state.battery_power[b], state.battery_energy[b]);
            let mut next = (p + u).clamp(dev.p_min, dev.p_max);
            let e_next = e + dt_h * next;
            if e_next > dev.e_max {
                next = (dev.e_max - e) / dt_h;
            } else if e_next < dev.e_min {
                next = (dev.e_min - e) / dt_h;
            }
            next.clamp(dev.p_min, dev.p_max) - p
        }),
    );
    (curt, batt)
}

/// FIFO of issued orders awaiting realization.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderBuffer {
    pending_curt: VecDeque<DVector<f64>>,
    pending_batt: VecDeque<DVector<f64>>,
}

impl OrderBuffer {
    /// Buffer pre-filled with `d` zero orders per input class.
    pub fn new(delays: &DelayConfig, n_curt: usize, n_batt: usize) -> Self {
        Self {
            pending_curt: std::iter::repeat_n(DVector::zeros(n_curt), delays.d_curt).collect(),
            pending_batt: std::iter::repeat_n(DVector::zeros(n_batt), delays.d_batt).collect(),
        }
    }

    /// Queues the new orders and returns the ones issued `d` steps ago.
    pub fn push_order(
        &mut self,
        u_curt: DVector<f64>,
        u_batt: DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        self.pending_curt.push_back(u_curt);
        self.pending_batt.push_back(u_batt);
        (
            self.pending_curt.pop_front().expect("just pushed"),
            self.pending_batt.pop_front().expect("just pushed"),
        )
    }

    /// `[u^{k-d}, ..., u^{k-1}]`, oldest first.
    pub fn pending_curt(&self) -> impl ExactSizeIterator<Item = &DVector<f64>> {
        self.pending_curt.iter()
    }

    pub fn pending_batt(&self) -> impl ExactSizeIterator<Item = &DVector<f64>> {
        self.pending_batt.iter()
    }
}
