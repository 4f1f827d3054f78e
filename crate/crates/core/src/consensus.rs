//! Discrete-time average consensus `χ(t+1) = Q χ(t)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::{metropolis_hastings_weights, Graph, StochasticMatrix};

/// Default agreement tolerance on `max − min`.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default iteration budget, `50 · n`.
pub fn default_max_iter(n: usize) -> usize {
    50 * n
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusState {
    pub values: DVector<f64>,
    pub iteration: usize,
}

impl ConsensusState {
    pub fn new(values: Vec<f64>) -> Self {
        ConsensusState { values: DVector::from_vec(values), iteration: 0 }
    }

    pub fn spread(&self) -> f64 {
        self.values.max() - self.values.min()
    }

    pub fn mean(&self) -> f64 {
        self.values.mean()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsensusOutcome {
    pub value: f64,
    pub iters: usize,
    pub spread: f64,
}

pub fn consensus_step(q: &StochasticMatrix, s: &ConsensusState) -> ConsensusState {
    assert_eq!(q.n(), s.values.len(), "consensus weights and state differ in size");
    ConsensusState { values: q.matrix() * &s.values, iteration: s.iteration + 1 }
}

/// Iterates until the spread drops below `tol` or `max_iter` steps.
pub fn run_to_consensus(q: &StochasticMatrix, s0: &ConsensusState, tol: f64, max_iter: usize) -> Result<ConsensusOutcome> {
    if q.n() != s0.values.len() {
        return Err(Error::Dimension { expected: q.n(), got: s0.values.len() });
    }
    let mut s = s0.clone();
    let mut iters = 0;
    while s.spread() >= tol {
        if iters == max_iter {
            return Err(Error::NotConverged { value: s.mean(), iters, spread: s.spread() });
        }
        s = consensus_step(q, &s);
        iters += 1;
    }
    Ok(ConsensusOutcome { value: s.mean(), iters, spread: s.spread() })
}

/// Consensus on `values` over `g` with Metropolis–Hastings weights.
pub fn estimate_average(g: &Graph, values: &[f64], tol: f64, max_iter: usize) -> Result<ConsensusOutcome> {
    if values.len() != g.n_agents() {
        return Err(Error::Dimension { expected: g.n_agents(), got: values.len() });
    }
    let q = metropolis_hastings_weights(g);
    run_to_consensus(&q, &ConsensusState::new(values.to_vec()), tol, max_iter)
}

/// Agreed share of agents flagged in `membership`.
pub fn estimate_fraction(g: &Graph, membership: &[bool], tol: f64, max_iter: usize) -> Result<f64> {
    let xi: Vec<f64> = membership.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Ok(estimate_average(g, &xi, tol, max_iter)?.value)
}

/// Agreed average of the per-agent realized rewards.
pub fn estimate_avg_reward(g: &Graph, rewards: &[f64], tol: f64, max_iter: usize) -> Result<f64> {
    Ok(estimate_average(g, rewards, tol, max_iter)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{average_reward, realize_rewards, MixedStrategy, PayoffMatrix};
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_step_on_an_edge() {
        let q = metropolis_hastings_weights(&Graph::path(2));
        let s = consensus_step(&q, &ConsensusState::new(vec![0.0, 1.0]));
        assert_eq!(s.values.as_slice(), &[0.5, 0.5]);
        assert_eq!(s.iteration, 1);
    }

    #[test]
    fn constant_is_fixed() {
        let q = metropolis_hastings_weights(&Graph::cycle(7));
        let s0 = ConsensusState::new(vec![2.5; 7]);
        let s1 = consensus_step(&q, &s0);
        assert!((s1.values.clone() - s0.values.clone()).amax() < 1e-15);
        let out = run_to_consensus(&q, &s0, 1e-9, 10).unwrap();
        assert_eq!(out.iters, 0);
    }

    #[test]
    fn path_converges_to_average() {
        let q = metropolis_hastings_weights(&Graph::path(3));
        let out = run_to_consensus(&q, &ConsensusState::new(vec![0.0, 0.0, 3.0]), 1e-9, 1000).unwrap();
        assert_abs_diff_eq!(out.value, 1.0, epsilon = 1e-12);
        assert!(out.spread < 1e-9);
    }

    #[test]
    fn disconnected_does_not_converge() {
        let g = Graph::new(4, [(0, 1), (2, 3)], 0).unwrap();
        let err = estimate_average(&g, &[0.0, 0.0, 1.0, 1.0], 1e-9, 200).unwrap_err();
        match err {
            Error::NotConverged { value, iters, spread } => {
                assert_eq!(iters, 200);
                assert_abs_diff_eq!(value, 0.5, epsilon = 1e-12);
                assert!(spread > 0.9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fractions() {
        let g = Graph::cycle(4);
        assert_abs_diff_eq!(estimate_fraction(&g, &[true, false, false, false], 1e-9, 200).unwrap(), 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(estimate_fraction(&g, &[true; 4], 1e-9, 200).unwrap(), 1.0);
        assert_abs_diff_eq!(estimate_fraction(&g, &[false; 4], 1e-9, 200).unwrap(), 0.0);
    }

    #[test]
    fn reward_averages() {
        assert_abs_diff_eq!(estimate_avg_reward(&Graph::path(2), &[2.0, 4.0], 1e-9, 100).unwrap(), 3.0);
        assert_abs_diff_eq!(estimate_avg_reward(&Graph::star(5), &[1.5; 5], 1e-9, 100).unwrap(), 1.5);

        let g = crate::graph::gen_watts_strogatz(20, 4, 0.2, 3).unwrap();
        let members: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let y = MixedStrategy::new(members.iter().filter(|&&m| m).count() as f64 / 20.0).unwrap();
        let p = PayoffMatrix::new(1.0, 3.0, 2.0);
        let r = estimate_avg_reward(&g, &realize_rewards(&members, y, &p), 1e-9, 1000).unwrap();
        assert_abs_diff_eq!(r, average_reward(y, &p), epsilon = 1e-9);
    }

    #[test]
    fn contraction_and_rate() {
        let g = crate::graph::gen_erdos_renyi(10, 0.4, 8).unwrap();
        let q = metropolis_hastings_weights(&g);
        let sv = q.matrix().clone().singular_values();
        let mut svs: Vec<f64> = sv.iter().copied().collect();
        svs.sort_by(|a, b| b.total_cmp(a));
        let sigma2 = svs[1];
        let mut s = ConsensusState::new((0..10).map(|i| (i * i) as f64).collect());
        let spread0 = s.spread();
        for k in 1..=30 {
            let next = consensus_step(&q, &s);
            assert!(next.values.max() <= s.values.max() + 1e-12);
            assert!(next.values.min() >= s.values.min() - 1e-12);
            assert_abs_diff_eq!(next.mean(), s.mean(), epsilon = 1e-10);
            s = next;
            // spread <= 2 * ||x - mean||_2 <= 2 sigma2^k ||x0 - mean||_2 <= 2 sigma2^k sqrt(n) spread0
            assert!(s.spread() <= 2.0 * sigma2.powi(k) * 10f64.sqrt() * spread0 + 1e-12);
        }
    }
}
