//! Adaptive payoff estimation, goal-strategy replicator and bias control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{integrate_replicator, MixedStrategy, PayoffMatrix};

/// Default payoff adaptation gain.
pub const DEFAULT_ETA: f64 = 0.5;
/// Default bias gain.
pub const DEFAULT_ETA0: f64 = 0.2;
/// Largest replicator sub-step inside one goal update.
pub const GOAL_SUBSTEP: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Fires only when the observed share exceeds the goal by more than `1/N`.
    OneSided,
    /// Fires when the observed share misses the goal by more than `1/N`.
    #[default]
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorState {
    pub pi_hat: [f64; 3],
    pub eta: f64,
    pub y_goal: MixedStrategy,
    pub b: f64,
    pub eta0: f64,
    pub gate_mode: GateMode,
    /// `±1`.
    pub sign_probe: f64,
}

impl EstimatorState {
    /// Zero payoff estimate, goal at the simplex midpoint, zero bias.
    pub fn new(eta: f64, eta0: f64, gate_mode: GateMode) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) || !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::InvalidParameter(format!("gains eta = {eta}, eta0 = {eta0} must be positive")));
        }
        Ok(EstimatorState {
            pi_hat: [0.0; 3],
            eta,
            y_goal: MixedStrategy::new(0.5)?,
            b: 0.0,
            eta0,
            gate_mode,
            sign_probe: 1.0,
        })
    }

    pub fn payoff_estimate(&self) -> PayoffMatrix {
        PayoffMatrix::from_vec(self.pi_hat)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub v: f64,
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Euler step of the gradient law `π̂ ← π̂ − η w (wᵀπ̂ − r_ave) dτ`.
pub fn update_payoff_estimate(st: EstimatorState, w: &[f64; 3], r_ave: f64, dtau: f64) -> EstimatorState {
    debug_assert!(dtau > 0.0);
    let delta = dot3(w, &st.pi_hat) - r_ave;
    let k = st.eta * delta * dtau;
    let mut next = st;
    for (p, wi) in next.pi_hat.iter_mut().zip(w) {
        *p -= k * wi;
    }
    next
}

/// Replicator flow of the goal strategy under `π̂` over `dtau`.
pub fn update_goal_strategy(st: EstimatorState, dtau: f64) -> EstimatorState {
    let mut next = st;
    next.y_goal = integrate_replicator(st.y_goal, &st.payoff_estimate(), dtau, GOAL_SUBSTEP);
    next
}

/// Gated bias law `b ← b − sign_probe · η₀ · err · dτ`, `err = ȳ_obs1 − ŷ₁`.
pub fn update_bias(st: EstimatorState, y_obs1_est: f64, n_agents: usize, dtau: f64) -> EstimatorState {
    let err = y_obs1_est - st.y_goal.y1();
    let gate = 1.0 / n_agents as f64;
    let open = match st.gate_mode {
        GateMode::OneSided => err > gate,
        GateMode::Symmetric => err.abs() > gate,
    };
    let mut next = st;
    if open {
        next.b -= st.sign_probe * st.eta0 * err * dtau;
    }
    next
}

/// `‖π̂ − π‖²`.
pub fn lyapunov(st: &EstimatorState, pi_true: &[f64; 3]) -> LyapunovSample {
    let v = st.pi_hat.iter().zip(pi_true).map(|(a, b)| (a - b) * (a - b)).sum();
    LyapunovSample { v }
}
