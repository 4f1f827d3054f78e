//! Two-strategy symmetric evolutionary game.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric payoff matrix `[[π11, π12], [π12, π22]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffMatrix {
    pub pi11: f64,
    pub pi12: f64,
    pub pi22: f64,
}

impl PayoffMatrix {
    pub fn new(pi11: f64, pi12: f64, pi22: f64) -> Self {
        PayoffMatrix { pi11, pi12, pi22 }
    }

    pub fn from_vec(pi: [f64; 3]) -> Self {
        PayoffMatrix { pi11: pi[0], pi12: pi[1], pi22: pi[2] }
    }

    pub fn to_vec(self) -> [f64; 3] {
        [self.pi11, self.pi12, self.pi22]
    }

    /// `Π y`.
    pub fn apply(&self, y: MixedStrategy) -> [f64; 2] {
        let (y1, y2) = (y.y1(), y.y2());
        [self.pi11 * y1 + self.pi12 * y2, self.pi12 * y1 + self.pi22 * y2]
    }

    /// Anti-coordination shape: the off-diagonal payoff beats both diagonals,
    /// which gives a strict, stable interior equilibrium.
    pub fn is_anti_coordination(&self) -> bool {
        self.pi12 > self.pi11 && self.pi12 > self.pi22
    }

    pub fn validate_anti_coordination(&self) -> Result<()> {
        if !self.to_vec().iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("payoffs must be finite".into()));
        }
        if !self.is_anti_coordination() {
            return Err(Error::InvalidParameter(format!(
                "payoff {:?} needs pi12 > pi11 and pi12 > pi22 for a strict mixed equilibrium",
                self.to_vec()
            )));
        }
        Ok(())
    }
}

/// Population split over the two tasks, stored as the first-task share.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    y1: f64,
}

impl MixedStrategy {
    pub fn new(y1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&y1) {
            return Err(Error::InvalidParameter(format!("strategy share {y1} not in [0, 1]")));
        }
        Ok(MixedStrategy { y1 })
    }

    pub fn y1(self) -> f64 {
        self.y1
    }

    pub fn y2(self) -> f64 {
        1.0 - self.y1
    }
}

/// `ẏ₁ = y₁((Πy)₁ − yᵀΠy)`.
pub fn replicator_rhs(y: MixedStrategy, p: &PayoffMatrix) -> f64 {
    let [f1, f2] = p.apply(y);
    let mean = y.y1() * f1 + y.y2() * f2;
    y.y1() * (f1 - mean)
}

fn rhs_raw(y1: f64, p: &PayoffMatrix) -> f64 {
    let y2 = 1.0 - y1;
    let f1 = p.pi11 * y1 + p.pi12 * y2;
    let f2 = p.pi12 * y1 + p.pi22 * y2;
    y1 * y2 * (f1 - f2)
}

/// One classic RK4 step of the replicator equation.
pub fn replicator_rk4_step(y1: f64, p: &PayoffMatrix, h: f64) -> f64 {
    let k1 = rhs_raw(y1, p);
    let k2 = rhs_raw(y1 + 0.5 * h * k1, p);
    let k3 = rhs_raw(y1 + 0.5 * h * k2, p);
    let k4 = rhs_raw(y1 + h * k3, p);
    (y1 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).clamp(0.0, 1.0)
}

/// Integrates the replicator over `duration` with RK4 steps no longer than `h_max`.
pub fn integrate_replicator(y: MixedStrategy, p: &PayoffMatrix, duration: f64, h_max: f64) -> MixedStrategy {
    let steps = (duration / h_max).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let y1 = (0..steps).fold(y.y1(), |y1, _| replicator_rk4_step(y1, p, h));
    MixedStrategy { y1 }
}

/// `yᵀ Π y`.
pub fn average_reward(y: MixedStrategy, p: &PayoffMatrix) -> f64 {
    let [f1, f2] = p.apply(y);
    y.y1() * f1 + y.y2() * f2
}

/// `w(y) = (y₁², 2y₁y₂, y₂²)`, so that `wᵀπ = yᵀΠy`.
pub fn regressor(y: MixedStrategy) -> [f64; 3] {
    let (y1, y2) = (y.y1(), y.y2());
    [y1 * y1, 2.0 * y1 * y2, y2 * y2]
}

/// Interior indifference point `(Πy)₁ = (Πy)₂`.
pub fn mixed_nash(p: &PayoffMatrix) -> Result<MixedStrategy> {
    let den = p.pi11 + p.pi22 - 2.0 * p.pi12;
    if den.abs() < 1e-12 {
        return Err(Error::NoInteriorNash);
    }
    let y1 = (p.pi22 - p.pi12) / den;
    if !(y1 > 0.0 && y1 < 1.0) {
        return Err(Error::NoInteriorNash);
    }
    Ok(MixedStrategy { y1 })
}

/// Expected payoff of each agent against the observed population.
pub fn realize_rewards(membership: &[bool], y_obs: MixedStrategy, p: &PayoffMatrix) -> Vec<f64> {
    let [f1, f2] = p.apply(y_obs);
    membership.iter().map(|&first| if first { f1 } else { f2 }).collect()
}
