use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adaptive::{GateMode, DEFAULT_ETA, DEFAULT_ETA0};
use crate::consensus::{default_max_iter, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::game::PayoffMatrix;
use crate::graph::GraphModel;
use crate::nod::{IntegratorConfig, NodParams};
use crate::pe::{DEFAULT_PE_ALPHA, DEFAULT_PE_WINDOW};
use crate::spectral::DEFAULT_ASSUMPTION_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusConfig {
    pub tol: f64,
    /// `None` means `50 · n_agents`.
    pub max_iter: Option<usize>,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig { tol: DEFAULT_TOL, max_iter: None }
    }
}

/// Which structural conditions a per-epoch graph must meet before it is used.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionPolicy {
    /// Simple `λ*` and distinct crossing angles.
    #[default]
    Spectral,
    /// Every condition of the assumption report, including `v*ᵀ1 = 0`.
    Full,
    /// Accept every connected graph.
    None,
}

/// Scenario configuration. Every field has a default; JSON input may give
/// any subset, and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub graph: GraphModel,
    pub n_agents: usize,
    pub d: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Attention as a multiple of the pitchfork point.
    pub u_rule: f64,
    /// Ground-truth payoffs; never visible to the agents.
    pub payoff: PayoffMatrix,
    pub eta: f64,
    pub eta0: f64,
    pub epochs: usize,
    pub adaptation_start_epoch: usize,
    /// Epoch duration for the discretized adaptive laws.
    pub dtau: f64,
    pub gate_mode: GateMode,
    pub consensus: ConsensusConfig,
    pub integrator: IntegratorConfig,
    pub seed: u64,
    /// Half-width of the uniform perturbation added to the chained initial opinions.
    pub noise: f64,
    pub pe_window: f64,
    pub pe_alpha: f64,
    pub assumption_tol: f64,
    pub assumption_policy: AssumptionPolicy,
    /// Resampling budget per graph.
    pub max_graph_attempts: usize,
    /// Staircase sweep: largest relative deviation accepted between observed and predicted crossings.
    pub sweep_rel_tol: f64,
    pub out_dir: Option<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            graph: GraphModel::WattsStrogatz { k_mean: 10, beta: 0.1 },
            n_agents: 100,
            d: 0.5,
            alpha: 0.3,
            gamma: -0.03,
            u_rule: 1.1,
            payoff: PayoffMatrix::new(1.0, 3.0, 2.0),
            eta: DEFAULT_ETA,
            eta0: DEFAULT_ETA0,
            epochs: 100,
            adaptation_start_epoch: 25,
            dtau: 1.0,
            gate_mode: GateMode::Symmetric,
            consensus: ConsensusConfig::default(),
            integrator: IntegratorConfig::default(),
            seed: 1,
            noise: 0.01,
            pe_window: DEFAULT_PE_WINDOW,
            pe_alpha: DEFAULT_PE_ALPHA,
            assumption_tol: DEFAULT_ASSUMPTION_TOL,
            assumption_policy: AssumptionPolicy::Spectral,
            max_graph_attempts: 1000,
            sweep_rel_tol: 0.2,
            out_dir: None,
        }
    }
}

impl SimConfig {
    /// Eight-agent scale-free staircase sweep.
    pub fn sweep_default() -> Self {
        SimConfig {
            graph: GraphModel::BarabasiAlbert { m: 2 },
            n_agents: 8,
            assumption_policy: AssumptionPolicy::Full,
            max_graph_attempts: 200_000,
            ..SimConfig::default()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overlays the top-level keys of `patch` on `self`. Unknown keys are rejected.
    pub fn merged(&self, patch: &Value) -> Result<Self> {
        let Value::Object(patch) = patch else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let mut base = serde_json::to_value(self)?;
        let obj = base.as_object_mut().expect("config serializes to an object");
        for (k, v) in patch {
            if !obj.contains_key(k) {
                return Err(Error::Config(format!("unknown config key `{k}`")));
            }
            obj.insert(k.clone(), v.clone());
        }
        let cfg: SimConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_over(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.merged(&serde_json::from_str(&text)?)
    }

    pub fn nod_params(&self, u: f64, b: f64) -> Result<NodParams> {
        NodParams::new(self.d, u, self.alpha, self.gamma, b)
    }

    pub fn consensus_max_iter(&self) -> usize {
        self.consensus.max_iter.unwrap_or_else(|| default_max_iter(self.n_agents))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_agents < 2 {
            return bad(format!("n_agents = {} must be at least 2", self.n_agents));
        }
        NodParams::new(self.d, 1.0, self.alpha, self.gamma, 0.0).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.u_rule > 0.0 && self.u_rule.is_finite()) {
            return bad(format!("u_rule = {} must be positive", self.u_rule));
        }
        if !(self.eta > 0.0) || !(self.eta0 > 0.0) || !(self.dtau > 0.0) {
            return bad("eta, eta0 and dtau must be positive".into());
        }
        if self.epochs == 0 || self.adaptation_start_epoch >= self.epochs {
            return bad(format!(
                "adaptation_start_epoch = {} must be below epochs = {}",
                self.adaptation_start_epoch, self.epochs
            ));
        }
        if !(self.consensus.tol > 0.0) || self.consensus.max_iter == Some(0) {
            return bad("consensus tol and max_iter must be positive".into());
        }
        if !(self.noise >= 0.0) || !(self.pe_window > 0.0) || !(self.pe_alpha > 0.0) || !(self.assumption_tol > 0.0) {
            return bad("noise must be >= 0; pe_window, pe_alpha, assumption_tol must be positive".into());
        }
        if self.max_graph_attempts == 0 || !(self.sweep_rel_tol > 0.0) {
            return bad("max_graph_attempts and sweep_rel_tol must be positive".into());
        }
        let probe = self.nod_params(1.0, 0.0)?;
        if !(self.integrator.dt > 0.0 && self.integrator.dt <= probe.dt_max()) {
            return bad(format!("integrator dt = {} outside (0, {}]", self.integrator.dt, probe.dt_max()));
        }
        if !(self.integrator.eps > 0.0 && self.integrator.t_max > 0.0 && self.integrator.ceiling > 0.0) {
            return bad("integrator eps, t_max and ceiling must be positive".into());
        }
        if let GraphModel::WattsStrogatz { k_mean, .. } = self.graph {
            if k_mean >= self.n_agents {
                return bad(format!("k_mean = {k_mean} must be below n_agents"));
            }
        }
        Ok(())
    }
}
