//! Nonlinear bias staircase against the linear crossing predictions.
//!
//! The equilibrium at `b = 0` is found from `0.01·v*`; its orientation along
//! `v*` fixes the branch sign `s`, its 2-norm `r` the amplitude. Linear
//! thresholds live on the unit sphere, so predictions are `r · b_i`.
//! Plateaus sit between consecutive predictions plus one beyond each end.
//! Equilibria are continued outward from `b = 0` in both directions, and
//! every sign change between neighboring path points is located by
//! bisection with the same continuation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, Graph};
use crate::nod::{count_positive, find_equilibrium, NodParams};
use crate::spectral::{
    check_assumption1, critical_attention, eigendecompose, AssumptionReport, BiasGeometry, CriticalAttention, Sign,
    SpectralData,
};

use super::config::{AssumptionPolicy, SimConfig};

/// Bisection stops when the bracket is below this fraction of the plateau spacing.
const BISECT_REL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct Plateau {
    pub index: usize,
    pub b: f64,
    pub n_pos: usize,
    pub x: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Crossing {
    pub agent: usize,
    pub b_observed: f64,
    pub b_linear_pred: f64,
    pub rel_dev: f64,
    /// `+1` when the agent turns positive as `b` increases.
    pub direction: i8,
    /// Plateau entered right after the crossing.
    pub plateau: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub graph_seed: u64,
    pub graph_attempts: usize,
    pub n_agents: usize,
    pub u: f64,
    pub critical: CriticalAttention,
    pub lambda_star: f64,
    pub lambda_2: f64,
    /// 2-norm of the unbiased equilibrium.
    pub amplitude: f64,
    pub sign_s: i8,
    pub assumption: AssumptionReport,
    /// Linear thresholds on the unit sphere, `(agent, b)` sorted by `b`.
    pub linear_thresholds: Vec<(usize, f64)>,
    pub plateaus: Vec<Plateau>,
    /// Sorted by observed bias.
    pub crossings: Vec<Crossing>,
    /// `n_pos` changes by exactly one between neighboring plateaus, always in the same direction.
    pub unit_step_monotone: bool,
    /// Every agent crosses exactly once and no two crossings share a plateau step.
    pub single_agent_crossings: bool,
    /// Crossing order equals the order of the linear predictions.
    pub order_matches: bool,
    pub max_rel_dev: f64,
    pub passed: bool,
}

struct Ctx<'a> {
    a: &'a AdjacencyMatrix,
    params: NodParams,
    cfg: &'a SimConfig,
}

impl Ctx<'_> {
    fn equilibrate(&self, x0: &[f64], b: f64) -> Result<Vec<f64>> {
        let eq = find_equilibrium(x0, &self.params.with_bias(b), self.a, &self.cfg.integrator)?;
        if !eq.converged {
            log::warn!("equilibrium at b = {b} not converged (residual {:.2e})", eq.residual);
        }
        Ok(eq.x)
    }

    /// Crossing bias of `agent` between `(b_near, x_near)` and `b_far`,
    /// continuing from the near end.
    fn bisect(&self, agent: usize, b_near: f64, x_near: &[f64], b_far: f64, tol: f64) -> Result<f64> {
        let side = x_near[agent] > 0.0;
        let (mut lo, mut hi) = (b_near, b_far);
        let mut x_lo = x_near.to_vec();
        while (hi - lo).abs() > tol {
            let mid = 0.5 * (lo + hi);
            let x = self.equilibrate(&x_lo, mid)?;
            if (x[agent] > 0.0) == side {
                lo = mid;
                x_lo = x;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Graph-level spectral setup shared by the sweep and the assumption filter.
pub struct GraphSetup {
    pub spec: SpectralData,
    pub critical: CriticalAttention,
    pub params: NodParams,
}

pub fn graph_setup(cfg: &SimConfig, a: &AdjacencyMatrix) -> Result<GraphSetup> {
    let spec = eigendecompose(a)?;
    let critical = critical_attention(cfg.d, cfg.alpha, cfg.gamma, &spec)?;
    let params = cfg.nod_params(cfg.u_rule * critical.u_star, 0.0)?;
    Ok(GraphSetup { spec, critical, params })
}

/// Whether `report` satisfies `policy`.
pub fn policy_accepts(policy: AssumptionPolicy, report: &AssumptionReport) -> bool {
    match policy {
        AssumptionPolicy::Full => report.overall,
        AssumptionPolicy::Spectral => report.lambda_star_simple && report.unique_combo,
        AssumptionPolicy::None => true,
    }
}

/// Assumption report of `g` at the configured attention, on the `+` branch.
pub fn graph_assumption(cfg: &SimConfig, g: &Graph) -> Result<AssumptionReport> {
    let a = g.adjacency();
    let setup = graph_setup(cfg, &a)?;
    let geom = BiasGeometry::for_params(&setup.params, &a, &setup.spec, Sign::Plus)?;
    Ok(check_assumption1(&setup.spec, &geom, cfg.assumption_tol))
}

/// First graph at seeds `cfg.seed, cfg.seed + 1, ...` that passes the policy.
pub fn sample_sweep_graph(cfg: &SimConfig) -> Result<(Graph, usize)> {
    for attempt in 0..cfg.max_graph_attempts {
        let seed = cfg.seed.wrapping_add(attempt as u64);
        let g = cfg.graph.generate(cfg.n_agents, seed)?;
        match graph_assumption(cfg, &g) {
            Ok(rep) if policy_accepts(cfg.assumption_policy, &rep) => return Ok((g, attempt + 1)),
            Ok(_) | Err(Error::NonPositiveDenominator(_)) | Err(Error::SingularJacobian) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::AssumptionResampleExhausted { attempts: cfg.max_graph_attempts })
}

/// Resamples a graph per the configured policy, then sweeps it.
pub fn run_bias_sweep(cfg: &SimConfig) -> Result<SweepReport> {
    let (g, attempts) = sample_sweep_graph(cfg)?;
    let mut rep = sweep_graph(cfg, &g)?;
    rep.graph_attempts = attempts;
    Ok(rep)
}

fn plateau_biases(pred: &[f64], tol: f64) -> Vec<f64> {
    let n = pred.len();
    let reach = |p: f64, half_gap: f64| half_gap.max(1.25 * tol * p.abs());
    let (first, last) = (pred[0], pred[n - 1]);
    let (lo_gap, hi_gap) = if n > 1 {
        (0.5 * (pred[1] - pred[0]), 0.5 * (pred[n - 1] - pred[n - 2]))
    } else {
        (0.5 * first.abs(), 0.5 * first.abs())
    };
    let mut out = Vec::with_capacity(n + 1);
    out.push(first - reach(first, lo_gap));
    out.extend(pred.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(last + reach(last, hi_gap));
    out
}

/// Staircase sweep on a fixed graph.
pub fn sweep_graph(cfg: &SimConfig, g: &Graph) -> Result<SweepReport> {
    let a = g.adjacency();
    let n = a.n();
    let setup = graph_setup(cfg, &a)?;
    let spec = &setup.spec;
    let ctx = Ctx { a: &a, params: setup.params, cfg };

    let x_start: Vec<f64> = spec.v_star.iter().map(|v| 0.01 * v).collect();
    let x0 = ctx.equilibrate(&x_start, 0.0)?;
    let proj: f64 = x0.iter().zip(spec.v_star.iter()).map(|(x, v)| x * v).sum();
    let sign_s = if proj < 0.0 { Sign::Minus } else { Sign::Plus };
    let amplitude = x0.iter().map(|v| v * v).sum::<f64>().sqrt();

    let geom = BiasGeometry::for_params(&setup.params, &a, spec, sign_s)?;
    let assumption = check_assumption1(spec, &geom, cfg.assumption_tol);
    let pred: Vec<f64> = geom.thresholds.iter().map(|t| amplitude * t.b).collect();
    let pred_of = |agent: usize| {
        let k = geom.thresholds.iter().position(|t| t.agent == agent).expect("every agent has a threshold");
        pred[k]
    };

    let biases = plateau_biases(&pred, cfg.sweep_rel_tol);
    let spacing = biases.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let tol = BISECT_REL * spacing.max(f64::MIN_POSITIVE);

    // continuation paths outward from b = 0: (bias, state)
    let mut up: Vec<(f64, Vec<f64>)> = vec![(0.0, x0.clone())];
    for &b in biases.iter().filter(|&&b| b >= 0.0) {
        let x = ctx.equilibrate(&up.last().expect("non-empty").1, b)?;
        up.push((b, x));
    }
    let mut down: Vec<(f64, Vec<f64>)> = vec![(0.0, x0)];
    for &b in biases.iter().rev().filter(|&&b| b < 0.0) {
        let x = ctx.equilibrate(&down.last().expect("non-empty").1, b)?;
        down.push((b, x));
    }

    let mut crossings = Vec::new();
    for path in [&up, &down] {
        for w in path.windows(2) {
            let ((b_near, x_near), (b_far, x_far)) = (&w[0], &w[1]);
            for agent in 0..n {
                if (x_near[agent] > 0.0) != (x_far[agent] > 0.0) {
                    let b = ctx.bisect(agent, *b_near, x_near, *b_far, tol)?;
                    let toward_far_positive = x_far[agent] > 0.0;
                    let increasing = b_far > b_near;
                    let direction = if toward_far_positive == increasing { 1 } else { -1 };
                    let pred_b = pred_of(agent);
                    crossings.push(Crossing {
                        agent,
                        b_observed: b,
                        b_linear_pred: pred_b,
                        rel_dev: (b - pred_b).abs() / pred_b.abs(),
                        direction,
                        plateau: biases.partition_point(|&p| p < b),
                    });
                }
            }
        }
    }
    crossings.sort_by(|p, q| p.b_observed.total_cmp(&q.b_observed));

    let mut plateaus: Vec<Plateau> = down
        .iter()
        .skip(1)
        .rev()
        .chain(up.iter().skip(1))
        .enumerate()
        .map(|(index, (b, x))| Plateau { index, b: *b, n_pos: count_positive(x), x: x.clone() })
        .collect();
    plateaus.sort_by(|p, q| p.b.total_cmp(&q.b));

    let steps: Vec<i64> = plateaus.windows(2).map(|w| w[1].n_pos as i64 - w[0].n_pos as i64).collect();
    let unit_step_monotone = steps.iter().all(|&s| s == 1) || steps.iter().all(|&s| s == -1);
    let mut seen = vec![0usize; n];
    let mut per_step = vec![0usize; plateaus.len()];
    for c in &crossings {
        seen[c.agent] += 1;
        per_step[c.plateau.min(plateaus.len() - 1)] += 1;
    }
    let single_agent_crossings =
        crossings.len() == n && seen.iter().all(|&k| k == 1) && per_step.iter().skip(1).all(|&k| k == 1);
    let order_matches = crossings.len() == n && crossings.iter().zip(&geom.thresholds).all(|(c, t)| c.agent == t.agent);
    let max_rel_dev = crossings.iter().map(|c| c.rel_dev).fold(0.0, f64::max);
    let passed =
        unit_step_monotone && single_agent_crossings && order_matches && max_rel_dev <= cfg.sweep_rel_tol;

    Ok(SweepReport {
        graph_seed: g.seed(),
        graph_attempts: 1,
        n_agents: n,
        u: setup.params.u,
        critical: setup.critical,
        lambda_star: spec.lambda_star,
        lambda_2: spec.lambda_2,
        amplitude,
        sign_s: sign_s.value() as i8,
        assumption,
        linear_thresholds: geom.thresholds.iter().map(|t| (t.agent, t.b)).collect(),
        plateaus,
        crossings,
        unit_step_monotone,
        single_agent_crossings,
        order_matches,
        max_rel_dev,
        passed,
    })
}
