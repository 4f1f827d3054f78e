//! Undirected communication graphs, random generators, and the
//! Metropolis–Hastings consensus weights.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Retry cap for generators that must return a connected graph.
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

/// Simple undirected graph on nodes `0..n`.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted, so the JSON
/// form is byte-stable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    seed: u64,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRepr {
    n: usize,
    edges: Vec<[usize; 2]>,
    seed: u64,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        Graph::new(r.n, r.edges.into_iter().map(|[i, j]| (i, j)), r.seed)
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
            seed: g.seed,
        }
    }
}

impl Graph {
    /// Builds a graph, normalizing edge orientation and order.
    ///
    /// Rejects self-loops, duplicate edges and out-of-range endpoints.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at node {i}")));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidParameter(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(Self::from_sorted(n, set.into_iter().collect(), seed))
    }

    fn from_sorted(n: usize, edges: Vec<(usize, usize)>, seed: u64) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Graph { n, edges, seed, neighbors }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::from_sorted(n, edges, 0)
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 nodes");
        Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)), 0).expect("valid cycle")
    }

    pub fn path(n: usize) -> Self {
        Self::from_sorted(n, (1..n).map(|i| (i - 1, i)).collect(), 0)
    }

    /// Star with node 0 at the center.
    pub fn star(n: usize) -> Self {
        Self::from_sorted(n, (1..n).map(|i| (0, i)).collect(), 0)
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// True iff the graph has a single connected component.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    pub fn adjacency(&self) -> AdjacencyMatrix {
        AdjacencyMatrix::from_graph(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }
}

/// Symmetric 0/1 adjacency matrix with zero diagonal.
///
/// Keeps neighbor lists next to the dense matrix so the opinion dynamics
/// can evaluate the coupling in O(|E|).
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    dense: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyMatrix {
    pub fn from_graph(g: &Graph) -> Self {
        let n = g.n_agents();
        let mut dense = DMatrix::zeros(n, n);
        for &(i, j) in g.edges() {
            dense[(i, j)] = 1.0;
            dense[(j, i)] = 1.0;
        }
        AdjacencyMatrix { dense, neighbors: g.neighbors.clone() }
    }

    /// Validates a dense matrix: square, symmetric, zero diagonal, entries in {0, 1}.
    pub fn from_dense(dense: DMatrix<f64>) -> Result<Self> {
        if !dense.is_square() {
            return Err(Error::InvalidParameter("adjacency matrix must be square".into()));
        }
        let n = dense.nrows();
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                let a = dense[(i, j)];
                if a != 0.0 && a != 1.0 {
                    return Err(Error::InvalidParameter(format!("entry ({i}, {j}) = {a} is not 0/1")));
                }
                if a != dense[(j, i)] {
                    return Err(Error::InvalidParameter("adjacency matrix must be symmetric".into()));
                }
                if i == j && a != 0.0 {
                    return Err(Error::InvalidParameter(format!("self-loop at node {i}")));
                }
                if a == 1.0 {
                    neighbors[i].push(j);
                }
            }
        }
        Ok(AdjacencyMatrix { dense, neighbors })
    }

    pub fn n(&self) -> usize {
        self.dense.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }
}

/// Doubly stochastic matrix compatible with a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
}

impl StochasticMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Largest deviation of any row or column sum from one.
    pub fn max_sum_defect(&self) -> f64 {
        let rows = self.entries.row_iter().map(|r| (r.sum() - 1.0).abs());
        let cols = self.entries.column_iter().map(|c| (c.sum() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// Metropolis–Hastings weights: `q_ij = 1 / (max(deg i, deg j) + 1)` on
/// edges, the diagonal absorbs the remainder of each row.
pub fn metropolis_hastings_weights(g: &Graph) -> StochasticMatrix {
    let n = g.n_agents();
    let mut q = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        let w = 1.0 / (g.degree(i).max(g.degree(j)) + 1) as f64;
        q[(i, j)] = w;
        q[(j, i)] = w;
    }
    for i in 0..n {
        let off: f64 = g.neighbors(i).iter().map(|&j| q[(i, j)]).sum();
        q[(i, i)] = 1.0 - off;
    }
    StochasticMatrix { entries: q }
}

/// Random graph families used by the simulations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphModel {
    ErdosRenyi { p: f64 },
    WattsStrogatz { k_mean: usize, beta: f64 },
    BarabasiAlbert { m: usize },
}

impl GraphModel {
    pub fn generate(&self, n: usize, seed: u64) -> Result<Graph> {
        match *self {
            GraphModel::ErdosRenyi { p } => gen_erdos_renyi(n, p, seed),
            GraphModel::WattsStrogatz { k_mean, beta } => gen_watts_strogatz(n, k_mean, beta, seed),
            GraphModel::BarabasiAlbert { m } => gen_barabasi_albert(n, m, seed),
        }
    }
}

fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_add(attempt as u64)
}

/// G(n, p), resampled with seeds `seed, seed + 1, ...` until connected.
pub fn gen_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    gen_erdos_renyi_capped(n, p, seed, DEFAULT_MAX_ATTEMPTS)
}

pub fn gen_erdos_renyi_capped(n: usize, p: f64, seed: u64, max_attempts: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("Erdos-Renyi needs n >= 2, got {n}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("edge probability {p} not in (0, 1]")));
    }
    for attempt in 0..max_attempts {
        let s = attempt_seed(seed, attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_sorted(n, edges, s);
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::ConnectivityExhausted { attempts: max_attempts })
}

/// Watts–Strogatz small world: ring lattice where each node links to its
/// `k_mean / 2` nearest neighbors on each side, then every lattice edge
/// `(u, u + j)` is rewired to a uniformly random new endpoint with
/// probability `beta`. Edge count stays `n * k_mean / 2`.
pub fn gen_watts_strogatz(n: usize, k_mean: usize, beta: f64, seed: u64) -> Result<Graph> {
    gen_watts_strogatz_capped(n, k_mean, beta, seed, DEFAULT_MAX_ATTEMPTS)
}

pub fn gen_watts_strogatz_capped(
    n: usize,
    k_mean: usize,
    beta: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<Graph> {
    if k_mean == 0 || !k_mean.is_multiple_of(2) || k_mean >= n {
        return Err(Error::InvalidParameter(format!(
            "Watts-Strogatz needs an even k_mean in [2, n), got k_mean = {k_mean}, n = {n}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("rewiring probability {beta} not in [0, 1]")));
    }
    let half = k_mean / 2;
    for attempt in 0..max_attempts {
        let s = attempt_seed(seed, attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for u in 0..n {
            for j in 1..=half {
                let v = (u + j) % n;
                adj[u].insert(v);
                adj[v].insert(u);
            }
        }
        for j in 1..=half {
            for u in 0..n {
                let v = (u + j) % n;
                if !adj[u].contains(&v) || !rng.random_bool(beta) {
                    continue;
                }
                // a node already linked to everyone keeps its edge
                if adj[u].len() >= n - 1 {
                    continue;
                }
                let w = loop {
                    let w = rng.random_range(0..n);
                    if w != u && !adj[u].contains(&w) {
                        break w;
                    }
                };
                adj[u].remove(&v);
                adj[v].remove(&u);
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        let edges = (0..n)
            .flat_map(|u| adj[u].iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect();
        let g = Graph::from_sorted(n, edges, s);
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::ConnectivityExhausted { attempts: max_attempts })
}

/// Barabási–Albert preferential attachment grown from an `m`-clique.
///
/// Node `v >= m` attaches to `m` distinct earlier nodes drawn with
/// probability proportional to degree (uniformly while all degrees are
/// zero, which only happens for `m = 1`). Connected by construction.
pub fn gen_barabasi_albert(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if m == 0 || m >= n {
        return Err(Error::InvalidParameter(format!("Barabasi-Albert needs 1 <= m < n, got m = {m}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + (n - m) * m);
    // every edge endpoint once, so a uniform pick is degree-proportional
    let mut endpoints: Vec<usize> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            edges.push((i, j));
            endpoints.extend([i, j]);
        }
    }
    for v in m..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            let t = if endpoints.is_empty() {
                rng.random_range(0..v)
            } else {
                endpoints[rng.random_range(0..endpoints.len())]
            };
            targets.insert(t);
        }
        for &t in &targets {
            edges.push((t, v));
            endpoints.extend([t, v]);
        }
    }
    edges.sort_unstable();
    Ok(Graph::from_sorted(n, edges, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn er_full_probability_is_complete() {
        let g = gen_erdos_renyi(3, 1.0, 99).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        let g = gen_erdos_renyi(2, 1.0, 5).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn er_edge_count_near_binomial_mean() {
        let g = gen_erdos_renyi(100, 0.1, 7).unwrap();
        assert!(g.is_connected());
        let mean = 4950.0 * 0.1;
        let sigma = (4950.0f64 * 0.1 * 0.9).sqrt();
        assert!((g.edges().len() as f64 - mean).abs() < 3.0 * sigma, "{}", g.edges().len());
    }

    #[test]
    fn er_rejects_bad_probability_and_exhausts() {
        assert!(gen_erdos_renyi(5, 0.0, 1).is_err());
        assert!(gen_erdos_renyi(5, 1.5, 1).is_err());
        let err = gen_erdos_renyi_capped(60, 0.001, 1, 5).unwrap_err();
        assert!(matches!(err, Error::ConnectivityExhausted { attempts: 5 }));
    }

    #[test]
    fn ws_without_rewiring_is_a_cycle() {
        let g = gen_watts_strogatz(10, 2, 0.0, 3).unwrap();
        assert_eq!(g, Graph { seed: 3, ..Graph::cycle(10) });
        let g = gen_watts_strogatz(4, 2, 0.0, 11).unwrap();
        assert!((0..4).all(|i| g.degree(i) == 2));
    }

    #[test]
    fn ws_preserves_edge_count() {
        let g = gen_watts_strogatz(100, 10, 0.1, 1).unwrap();
        assert!(g.is_connected());
        assert_eq!(g.edges().len(), 500);
    }

    #[test]
    fn ws_rejects_odd_degree() {
        assert!(gen_watts_strogatz(10, 3, 0.1, 1).is_err());
        assert!(gen_watts_strogatz(4, 4, 0.1, 1).is_err());
    }

    #[test]
    fn ba_edge_count_and_min_degree() {
        let g = gen_barabasi_albert(8, 2, 3).unwrap();
        assert!(g.is_connected());
        assert_eq!(g.edges().len(), 13);
        assert!((0..8).all(|i| g.degree(i) >= 2));
        let t = gen_barabasi_albert(3, 2, 17).unwrap();
        assert_eq!(t.edges(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn ba_m1_is_a_tree() {
        let g = gen_barabasi_albert(20, 1, 4).unwrap();
        assert!(g.is_connected());
        assert_eq!(g.edges().len(), 19);
    }

    #[test]
    fn connectivity() {
        assert!(Graph::complete(3).is_connected());
        assert!(Graph::path(5).is_connected());
        let two = Graph::new(4, [(0, 1), (2, 3)], 0).unwrap();
        assert!(!two.is_connected());
    }

    #[test]
    fn degrees() {
        assert!((0..10).all(|i| Graph::cycle(10).degree(i) == 2));
        let s = Graph::star(5);
        assert_eq!(s.degree(0), 4);
        assert_eq!(s.degree(3), 1);
    }

    #[test]
    fn rejects_malformed_edges() {
        assert!(Graph::new(3, [(1, 1)], 0).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)], 0).is_err());
        assert!(Graph::new(3, [(0, 3)], 0).is_err());
    }

    #[test]
    fn mh_weights_path3() {
        let q = metropolis_hastings_weights(&Graph::path(3));
        let m = q.matrix();
        assert_abs_diff_eq!(m[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m[(0, 2)], 0.0);
    }

    #[test]
    fn mh_weights_edge_and_triangle() {
        let q = metropolis_hastings_weights(&Graph::path(2));
        assert!(q.matrix().iter().all(|&x| (x - 0.5).abs() < 1e-15));
        let q = metropolis_hastings_weights(&Graph::complete(3));
        assert!(q.matrix().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn json_shape_is_stable() {
        let g = Graph::new(3, [(2, 1), (0, 1)], 9).unwrap();
        assert_eq!(g.to_json(), r#"{"n":3,"edges":[[0,1],[1,2]],"seed":9}"#);
        let back: Graph = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Graph>(r#"{"n":2,"edges":[[0,0]],"seed":1}"#).is_err());
    }

    #[test]
    fn adjacency_validation() {
        let a = Graph::path(3).adjacency();
        assert_eq!(a.matrix()[(0, 1)], 1.0);
        assert_eq!(a.neighbors(1), &[0, 2]);
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(AdjacencyMatrix::from_dense(bad).is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(AdjacencyMatrix::from_dense(ok).unwrap(), Graph::path(2).adjacency());
    }
}
