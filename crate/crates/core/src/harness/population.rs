//! Repeated population game on a fresh graph every epoch.

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adaptive::{lyapunov, update_bias, update_goal_strategy, update_payoff_estimate, EstimatorState};
use crate::batch;
use crate::consensus::{estimate_avg_reward, estimate_fraction};
use crate::error::{Error, Result};
use crate::game::{mixed_nash, realize_rewards, regressor, MixedStrategy};
use crate::graph::{AdjacencyMatrix, Graph};
use crate::nod::{find_equilibrium, membership, opinions_to_strategy, NodParams};
use crate::pe::{is_pe, SignalWindow};
use crate::spectral::{check_assumption1, BiasGeometry, Sign};

use super::config::SimConfig;
use super::sweep::{graph_setup, policy_accepts, GraphSetup};

const GRAPH_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
/// Doublings of the probe amplitude before giving up on a sign.
const PROBE_DOUBLINGS: usize = 12;

/// Per-epoch snapshot. Estimator fields are taken after the epoch's updates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub graph_seed: u64,
    pub lambda_star: f64,
    pub lambda_2: f64,
    pub assumption_ok: bool,
    pub u: f64,
    pub y_obs1: f64,
    pub y_obs1_consensus: f64,
    pub r_ave: f64,
    pub pi_hat: [f64; 3],
    pub y_goal1: f64,
    pub b: f64,
    pub lyapunov: f64,
    /// `NaN` until the window holds two samples.
    pub pe_min_eig_w: f64,
    /// Bias in force while this epoch's opinions formed.
    pub b_applied: f64,
    pub graph_attempts: usize,
    pub equilibrium_converged: bool,
    pub x_star: Vec<f64>,
}

#[derive(Debug)]
pub struct GameRun {
    pub seed: u64,
    pub records: Vec<EpochRecord>,
    /// Measured at adaptation start.
    pub sign_probe: Option<f64>,
    /// Set when an epoch failed; `records` then holds the epochs before it.
    pub error: Option<Error>,
}

impl GameRun {
    pub fn aborted(&self) -> bool {
        self.error.is_some()
    }
}

struct EpochGraph {
    graph: Graph,
    adjacency: AdjacencyMatrix,
    setup: GraphSetup,
    geom: BiasGeometry,
    assumption_ok: bool,
    attempts: usize,
}

fn sample_epoch_graph(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<EpochGraph> {
    for attempt in 0..cfg.max_graph_attempts {
        let seed = rng.next_u64();
        let graph = cfg.graph.generate(cfg.n_agents, seed)?;
        let adjacency = graph.adjacency();
        let setup = match graph_setup(cfg, &adjacency) {
            Ok(s) => s,
            Err(Error::NonPositiveDenominator(_)) => continue,
            Err(e) => return Err(e),
        };
        let geom = match BiasGeometry::for_params(&setup.params, &adjacency, &setup.spec, Sign::Plus) {
            Ok(g) => g,
            Err(Error::SingularJacobian) | Err(Error::DegenerateDirection(_)) => continue,
            Err(e) => return Err(e),
        };
        let report = check_assumption1(&setup.spec, &geom, cfg.assumption_tol);
        if policy_accepts(cfg.assumption_policy, &report) {
            return Ok(EpochGraph { graph, adjacency, setup, geom, assumption_ok: report.overall, attempts: attempt + 1 });
        }
    }
    Err(Error::AssumptionResampleExhausted { attempts: cfg.max_graph_attempts })
}

fn first_task_count(x: &[f64]) -> i64 {
    x.iter().filter(|&&v| v >= 0.0).count() as i64
}

/// Sign of the change in first-task count under a symmetric bias perturbation
/// around `b`, starting from the equilibrium `x`.
fn probe_sign(cfg: &SimConfig, a: &AdjacencyMatrix, p: &NodParams, x: &[f64], b_max: f64) -> Result<f64> {
    let mut db = b_max / 50.0;
    for _ in 0..PROBE_DOUBLINGS {
        let hi = find_equilibrium(x, &p.with_bias(p.b + db), a, &cfg.integrator)?;
        let lo = find_equilibrium(x, &p.with_bias(p.b - db), a, &cfg.integrator)?;
        let diff = first_task_count(&hi.x) - first_task_count(&lo.x);
        if diff != 0 {
            return Ok(diff.signum() as f64);
        }
        db *= 2.0;
    }
    log::warn!("bias probe saw no change in the task split; assuming +1");
    Ok(1.0)
}

struct Loop<'a> {
    cfg: &'a SimConfig,
    graph_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    st: EstimatorState,
    pe_w: SignalWindow,
    x_prev: Vec<f64>,
    sign_probe: Option<f64>,
}

impl Loop<'_> {
    fn epoch(&mut self, epoch: usize) -> Result<EpochRecord> {
        let cfg = self.cfg;
        let n = cfg.n_agents;
        let eg = sample_epoch_graph(cfg, &mut self.graph_rng)?;
        let params = eg.setup.params.with_bias(self.st.b);

        let x0: Vec<f64> = self.x_prev.iter().map(|&x| x + self.noise_rng.random_range(-cfg.noise..=cfg.noise)).collect();
        let eq = find_equilibrium(&x0, &params, &eg.adjacency, &cfg.integrator)?;
        if !eq.converged {
            log::warn!("epoch {epoch}: equilibrium residual {:.2e} after t = {}", eq.residual, eq.t);
        }

        let members = membership(&eq.x);
        let y_obs = opinions_to_strategy(&eq.x);
        let max_iter = cfg.consensus_max_iter();
        let y_bar = estimate_fraction(&eg.graph, &members, cfg.consensus.tol, max_iter)?;
        let rewards = realize_rewards(&members, y_obs, &cfg.payoff);
        let r_ave = estimate_avg_reward(&eg.graph, &rewards, cfg.consensus.tol, max_iter)?;

        let w = regressor(MixedStrategy::new(y_bar.clamp(0.0, 1.0))?);
        self.pe_w.push(epoch as f64 * cfg.dtau, DVector::from_column_slice(&w))?;
        let pe_min_eig_w = match is_pe(&self.pe_w, cfg.pe_alpha) {
            Ok((_, m)) => m,
            Err(Error::InsufficientSamples(_)) => f64::NAN,
            Err(e) => return Err(e),
        };

        if epoch >= cfg.adaptation_start_epoch {
            if self.sign_probe.is_none() {
                let s = probe_sign(cfg, &eg.adjacency, &params, &eq.x, eg.geom.b_max)?;
                log::info!("epoch {epoch}: bias probe sign {s:+}");
                self.sign_probe = Some(s);
                self.st.sign_probe = s;
            }
            self.st = update_payoff_estimate(self.st, &w, r_ave, cfg.dtau);
            self.st = update_goal_strategy(self.st, cfg.dtau);
            self.st = update_bias(self.st, y_bar, n, cfg.dtau);
        }

        let v = lyapunov(&self.st, &cfg.payoff.to_vec()).v;
        log::debug!(
            "epoch {epoch}: y_obs1 {:.3} goal {:.4} b {:+.5} V {:.3e}",
            y_obs.y1(),
            self.st.y_goal.y1(),
            self.st.b,
            v
        );
        self.x_prev = eq.x.clone();
        Ok(EpochRecord {
            epoch,
            graph_seed: eg.graph.seed(),
            lambda_star: eg.setup.spec.lambda_star,
            lambda_2: eg.setup.spec.lambda_2,
            assumption_ok: eg.assumption_ok,
            u: params.u,
            y_obs1: y_obs.y1(),
            y_obs1_consensus: y_bar,
            r_ave,
            pi_hat: self.st.pi_hat,
            y_goal1: self.st.y_goal.y1(),
            b: self.st.b,
            lyapunov: v,
            pe_min_eig_w,
            b_applied: params.b,
            graph_attempts: eg.attempts,
            equilibrium_converged: eq.converged,
            x_star: eq.x,
        })
    }
}

/// Runs every epoch; stops at the first failing epoch and keeps the records before it.
pub fn run_population_game(cfg: &SimConfig) -> Result<GameRun> {
    cfg.validate()?;
    let mut graph_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    graph_rng.set_stream(GRAPH_STREAM);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(NOISE_STREAM);
    let mut lp = Loop {
        cfg,
        graph_rng,
        noise_rng,
        st: EstimatorState::new(cfg.eta, cfg.eta0, cfg.gate_mode)?,
        pe_w: SignalWindow::new(cfg.pe_window)?,
        x_prev: vec![0.0; cfg.n_agents],
        sign_probe: None,
    };
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        match lp.epoch(epoch) {
            Ok(r) => records.push(r),
            Err(e) => {
                log::error!("epoch {epoch} failed: {e}");
                return Ok(GameRun { seed: cfg.seed, records, sign_probe: lp.sign_probe, error: Some(e) });
            }
        }
    }
    Ok(GameRun { seed: cfg.seed, records, sign_probe: lp.sign_probe, error: None })
}

/// Independent runs for each seed, in seed order.
pub fn run_game_batch(cfg: &SimConfig, seeds: &[u64]) -> Vec<Result<GameRun>> {
    batch::map(seeds, |&seed| run_population_game(&SimConfig { seed, ..cfg.clone() }))
}

/// Scalar outcome of a run against the true equilibrium.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GameSummary {
    pub epochs_completed: usize,
    pub y_star: f64,
    /// Mean `|y_obs1 − y₁*|` over the last (up to) ten epochs.
    pub final_tracking_error: f64,
    pub tracking_bound: f64,
    /// Lyapunov value entering the first adaptive epoch.
    pub lyapunov_start: f64,
    pub lyapunov_final: f64,
    pub bias_zero_before_adaptation: bool,
    pub sign_probe: Option<f64>,
    pub aborted: bool,
}

pub fn summarize(cfg: &SimConfig, run: &GameRun) -> Result<GameSummary> {
    let y_star = mixed_nash(&cfg.payoff)?.y1();
    let recs = &run.records;
    let tail = &recs[recs.len().saturating_sub(10)..];
    let final_tracking_error = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().map(|r| (r.y_obs1 - y_star).abs()).sum::<f64>() / tail.len() as f64
    };
    let start = cfg.adaptation_start_epoch;
    let lyapunov_start = if start == 0 {
        lyapunov(&EstimatorState::new(cfg.eta, cfg.eta0, cfg.gate_mode)?, &cfg.payoff.to_vec()).v
    } else {
        recs.get(start - 1).map_or(f64::NAN, |r| r.lyapunov)
    };
    Ok(GameSummary {
        epochs_completed: recs.len(),
        y_star,
        final_tracking_error,
        tracking_bound: 1.0 / cfg.n_agents as f64 + 0.05,
        lyapunov_start,
        lyapunov_final: recs.last().map_or(f64::NAN, |r| r.lyapunov),
        bias_zero_before_adaptation: recs.iter().take(start).all(|r| r.b == 0.0 && r.b_applied == 0.0),
        sign_probe: run.sign_probe,
        aborted: run.aborted(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphModel;

    fn small() -> SimConfig {
        SimConfig {
            graph: GraphModel::WattsStrogatz { k_mean: 4, beta: 0.1 },
            n_agents: 20,
            epochs: 12,
            adaptation_start_epoch: 4,
            seed: 5,
            ..SimConfig::default()
        }
    }

    #[test]
    fn small_run_invariants() {
        let cfg = small();
        let run = run_population_game(&cfg).unwrap();
        assert!(!run.aborted());
        assert_eq!(run.records.len(), 12);
        let mut prev: Option<&EpochRecord> = None;
        for r in &run.records {
            assert!((0.0..=1.0).contains(&r.y_obs1));
            assert!(r.lyapunov >= 0.0);
            assert!((r.y_obs1_consensus - r.y_obs1).abs() < cfg.consensus.tol);
            if r.epoch < cfg.adaptation_start_epoch {
                assert_eq!(r.b, 0.0);
                assert_eq!(r.pi_hat, [0.0; 3]);
            }
            if let Some(p) = prev {
                assert_ne!(p.graph_seed, r.graph_seed);
            }
            prev = Some(r);
        }
        assert!(run.sign_probe.is_some());
        assert!(run.records[0].pe_min_eig_w.is_nan());
    }

    #[test]
    fn same_seed_same_records() {
        let csv = |run: &GameRun| {
            let mut buf = Vec::new();
            crate::harness::write_records_csv(&run.records, &mut buf).unwrap();
            buf
        };
        let a = run_population_game(&small()).unwrap();
        let b = run_population_game(&small()).unwrap();
        assert_eq!(csv(&a), csv(&b));
        assert!(a.records.iter().zip(&b.records).all(|(p, q)| p.x_star == q.x_star));
        let c = run_population_game(&SimConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a.records[0].graph_seed, c.records[0].graph_seed);
    }

    #[test]
    fn batch_keeps_seed_order() {
        let runs = run_game_batch(&SimConfig { epochs: 6, ..small() }, &[9, 3]);
        assert_eq!(runs[0].as_ref().unwrap().seed, 9);
        assert_eq!(runs[1].as_ref().unwrap().seed, 3);
    }

    #[test]
    fn failing_epoch_keeps_partial_records() {
        let cfg = SimConfig { max_graph_attempts: 1, assumption_policy: super::super::config::AssumptionPolicy::Full, ..small() };
        let run = run_population_game(&cfg).unwrap();
        assert!(run.aborted());
        assert!(matches!(run.error, Some(Error::AssumptionResampleExhausted { .. })));
    }
}
