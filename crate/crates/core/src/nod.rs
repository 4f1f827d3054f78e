//! Nonlinear opinion dynamics `ẋ = −d x + u S((αI + γA) x) + b 1`.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::MixedStrategy;
use crate::graph::AdjacencyMatrix;
use crate::spectral::{BiasGeometry, Sign, SpectralData};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigmoid {
    #[default]
    Tanh,
}

impl Sigmoid {
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Sigmoid::Tanh => z.tanh(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodParams {
    /// Resistance.
    pub d: f64,
    /// Attention.
    pub u: f64,
    /// Self-interaction gain.
    pub alpha: f64,
    /// Inter-agent gain; negative in the dissensus regime.
    pub gamma: f64,
    pub b: f64,
    #[serde(default)]
    pub sigmoid: Sigmoid,
}

impl NodParams {
    pub fn new(d: f64, u: f64, alpha: f64, gamma: f64, b: f64) -> Result<Self> {
        let p = NodParams { d, u, alpha, gamma, b, sigmoid: Sigmoid::Tanh };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.d, self.u, self.alpha, self.gamma, self.b].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("NOD parameters must be finite".into()));
        }
        if self.d <= 0.0 {
            return Err(Error::InvalidParameter(format!("resistance d = {} must be positive", self.d)));
        }
        if self.u <= 0.0 {
            return Err(Error::InvalidParameter(format!("attention u = {} must be positive", self.u)));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidParameter(format!("alpha = {} must be >= 0", self.alpha)));
        }
        if self.gamma >= 0.0 {
            return Err(Error::InvalidParameter(format!("gamma = {} must be negative", self.gamma)));
        }
        Ok(())
    }

    pub fn with_bias(mut self, b: f64) -> Self {
        self.b = b;
        self
    }

    /// RK4 step ceiling.
    pub fn dt_max(&self) -> f64 {
        0.1 / self.d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpinionState {
    pub x: Vec<f64>,
    pub t: f64,
}

impl OpinionState {
    pub fn new(x: Vec<f64>) -> Self {
        OpinionState { x, t: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Whether `‖ẋ‖∞` was below the equilibrium tolerance at the end.
    pub at_equilibrium: bool,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial sample")
    }

    /// CSV with header `t,x_0,...,x_{n-1}`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        wtr.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Right-hand side written into `out`.
pub fn nod_rhs_into(x: &[f64], p: &NodParams, a: &AdjacencyMatrix, out: &mut [f64]) {
    for i in 0..x.len() {
        let coupled: f64 = a.neighbors(i).iter().map(|&k| x[k]).sum();
        let z = p.alpha * x[i] + p.gamma * coupled;
        out[i] = -p.d * x[i] + p.u * p.sigmoid.eval(z) + p.b;
    }
}

pub fn nod_rhs(x: &[f64], p: &NodParams, a: &AdjacencyMatrix) -> Vec<f64> {
    assert_eq!(x.len(), a.n(), "state and graph dimensions differ");
    let mut out = vec![0.0; x.len()];
    nod_rhs_into(x, p, a, &mut out);
    out
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Scratch buffers for classic RK4 on the opinion dynamics.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    /// Advances `x` by `dt`. Assumes `k1` already holds `f(x)`.
    fn step_with_k1(&mut self, x: &mut [f64], p: &NodParams, a: &AdjacencyMatrix, dt: f64) {
        let n = x.len();
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        nod_rhs_into(&self.tmp, p, a, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        nod_rhs_into(&self.tmp, p, a, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        nod_rhs_into(&self.tmp, p, a, &mut self.k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    /// Equilibrium tolerance on `‖ẋ‖∞`.
    pub eps: f64,
    pub t_max: f64,
    /// Divergence ceiling on `‖x‖∞`.
    #[serde(default = "default_ceiling")]
    pub ceiling: f64,
}

fn default_ceiling() -> f64 {
    1e3
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { dt: 0.01, eps: 1e-8, t_max: 5000.0, ceiling: default_ceiling() }
    }
}

impl IntegratorConfig {
    fn check(&self, p: &NodParams) -> Result<()> {
        if !(self.dt > 0.0) || self.dt > p.dt_max() {
            return Err(Error::InvalidParameter(format!(
                "dt = {} outside (0, {}] for d = {}",
                self.dt,
                p.dt_max(),
                p.d
            )));
        }
        if !(self.eps > 0.0) || !(self.t_max > 0.0) || !(self.ceiling > 0.0) {
            return Err(Error::InvalidParameter("eps, t_max and ceiling must be positive".into()));
        }
        Ok(())
    }
}

/// Fixed-step RK4 from `x0` to `t_end`, sampling every `stride` steps
/// (and always the final state).
pub fn integrate(
    x0: &OpinionState,
    p: &NodParams,
    a: &AdjacencyMatrix,
    cfg: &IntegratorConfig,
    t_end: f64,
    stride: usize,
) -> Result<Trajectory> {
    cfg.check(p)?;
    if x0.x.len() != a.n() {
        return Err(Error::Dimension { expected: a.n(), got: x0.x.len() });
    }
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!("t_end = {t_end} must be positive")));
    }
    let stride = stride.max(1);
    let steps = (t_end / cfg.dt - 1e-9).ceil() as usize;
    let mut x = x0.x.clone();
    let mut rk = Rk4::new(x.len());
    let mut times = vec![x0.t];
    let mut states = vec![x.clone()];
    for k in 1..=steps {
        nod_rhs_into(&x, p, a, &mut rk.k1);
        rk.step_with_k1(&mut x, p, a, cfg.dt);
        let t = x0.t + k as f64 * cfg.dt;
        let m = max_abs(&x);
        if !(m <= cfg.ceiling) {
            return Err(Error::Divergence { t, max_abs: m });
        }
        if k % stride == 0 || k == steps {
            times.push(t);
            states.push(x.clone());
        }
    }
    let mut f = vec![0.0; x.len()];
    nod_rhs_into(&x, p, a, &mut f);
    Ok(Trajectory { times, states, at_equilibrium: max_abs(&f) < cfg.eps })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    pub converged: bool,
    /// Integration time spent.
    pub t: f64,
    pub residual: f64,
}

/// Integrates until `‖ẋ‖∞ < eps` or `t_max`.
pub fn find_equilibrium(x0: &[f64], p: &NodParams, a: &AdjacencyMatrix, cfg: &IntegratorConfig) -> Result<Equilibrium> {
    cfg.check(p)?;
    if x0.len() != a.n() {
        return Err(Error::Dimension { expected: a.n(), got: x0.len() });
    }
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    let max_steps = (cfg.t_max / cfg.dt).ceil() as usize;
    let mut steps = 0;
    loop {
        nod_rhs_into(&x, p, a, &mut rk.k1);
        let residual = max_abs(&rk.k1);
        let t = steps as f64 * cfg.dt;
        if residual < cfg.eps || steps >= max_steps {
            return Ok(Equilibrium { x, converged: residual < cfg.eps, t, residual });
        }
        rk.step_with_k1(&mut x, p, a, cfg.dt);
        steps += 1;
        let m = max_abs(&x);
        if !(m <= cfg.ceiling) {
            return Err(Error::Divergence { t: steps as f64 * cfg.dt, max_abs: m });
        }
    }
}

/// Sign rule: `x_i >= 0` plays the first task.
pub fn opinions_to_strategy(x: &[f64]) -> MixedStrategy {
    let n = x.len().max(1);
    let first = x.iter().filter(|&&v| v >= 0.0).count();
    MixedStrategy::new(first as f64 / n as f64).expect("fraction in [0, 1]")
}

pub fn membership(x: &[f64]) -> Vec<bool> {
    x.iter().map(|&v| v >= 0.0).collect()
}

/// Number of strictly positive entries.
pub fn count_positive(x: &[f64]) -> usize {
    x.iter().filter(|&&v| v > 0.0).count()
}

/// Unit-sphere equilibrium of the linearized system under constant bias:
/// `s·√(1 − b²‖J⁻¹1‖²)·v* − b·J⁻¹1`.
pub fn linear_equilibrium(geom: &BiasGeometry, spec: &SpectralData, b: f64, sign_s: Sign) -> Result<DVector<f64>> {
    if !(b.abs() <= geom.b_max) {
        return Err(Error::BiasOutOfRange { b, b_max: geom.b_max });
    }
    let bl = b / geom.b_max;
    let along = sign_s.value() * (1.0 - bl * bl).max(0.0).sqrt();
    Ok(&spec.v_star * along - &geom.j_inv_one * b)
}
