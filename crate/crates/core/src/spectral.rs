//! Eigenstructure of the adjacency matrix and the linear bias analysis.
//!
//! Around the origin the opinion dynamics linearize to
//! `ẋ = J x + b·1` with `J = (−d + uα) I + uγ A`. For `u* < u < u_λ2`, `J`
//! has a single unstable direction `v*` (the eigenvector of the smallest
//! adjacency eigenvalue). Projected onto the unit sphere, the equilibrium is
//!
//! ```text
//! x̂*(b) = s·cos(φ)·v* − sin(φ)·e,   sin(φ) = b·‖J⁻¹1‖,   e = J⁻¹1 / ‖J⁻¹1‖
//! ```
//!
//! so agent `i` changes sign exactly where `tan(φ) = s·v*_i / e_i`. Those
//! crossing points are the bias thresholds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::nod::NodParams;

/// Default tolerance for the spectral assumption checks.
pub const DEFAULT_ASSUMPTION_TOL: f64 = 1e-8;

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

/// Orientation of the dissensus branch relative to `v*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn of(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralData {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, column `k` belongs to `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
    pub lambda_star: f64,
    /// `+inf` for a single node.
    pub lambda_2: f64,
    /// Unit eigenvector of `lambda_star`; its largest-magnitude entry is positive.
    pub v_star: DVector<f64>,
    pub gap_ok: bool,
}

impl SpectralData {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn gap(&self) -> f64 {
        self.lambda_2 - self.lambda_star
    }
}

/// Full symmetric eigendecomposition, sorted ascending.
pub fn eigendecompose(a: &AdjacencyMatrix) -> Result<SpectralData> {
    let n = a.n();
    let eig = SymmetricEigen::try_new(a.matrix().clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNonConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        orient(&mut v);
        eigenvectors.set_column(col, &v);
    }
    let lambda_star = eigenvalues[0];
    let lambda_2 = eigenvalues.get(1).copied().unwrap_or(f64::INFINITY);
    let v_star = eigenvectors.column(0).into_owned();
    Ok(SpectralData {
        gap_ok: lambda_2 - lambda_star > DEFAULT_ASSUMPTION_TOL,
        eigenvalues,
        eigenvectors,
        lambda_star,
        lambda_2,
        v_star,
    })
}

/// Normalizes to unit length and flips so the largest-magnitude entry
/// (first one on ties) is positive.
fn orient(v: &mut DVector<f64>) {
    let norm = v.norm();
    if norm > 0.0 {
        *v /= norm;
    }
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalAttention {
    /// Pitchfork point `d / (α + γλ*)`.
    pub u_star: f64,
    /// `d / (α + γλ₂)`, or `+inf` when that denominator is not positive.
    pub u_lambda2: f64,
}

pub fn critical_attention(d: f64, alpha: f64, gamma: f64, spec: &SpectralData) -> Result<CriticalAttention> {
    let den = alpha + gamma * spec.lambda_star;
    if den <= 0.0 {
        return Err(Error::NonPositiveDenominator(den));
    }
    let den2 = alpha + gamma * spec.lambda_2;
    Ok(CriticalAttention {
        u_star: d / den,
        u_lambda2: if den2 > 0.0 { d / den2 } else { f64::INFINITY },
    })
}

/// `J = (−d + uα) I + uγ A`.
pub fn linearized_jacobian(params: &NodParams, a: &AdjacencyMatrix) -> DMatrix<f64> {
    let n = a.n();
    let mut j = a.matrix() * (params.u * params.gamma);
    for i in 0..n {
        j[(i, i)] += -params.d + params.u * params.alpha;
    }
    j
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Threshold {
    pub agent: usize,
    /// Crossing angle on the unit-sphere arc, in `[-π/2, π/2]`.
    pub theta: f64,
    pub b: f64,
    /// `+1` if the agent goes from negative to positive as `b` increases.
    pub direction: i8,
}

/// Bias response of the linearized system and the per-agent crossing points.
#[derive(Clone, Debug)]
pub struct BiasGeometry {
    pub j_matrix: DMatrix<f64>,
    pub j_inv_one: DVector<f64>,
    pub e_dir: DVector<f64>,
    pub b_max: f64,
    pub sign_s: Sign,
    /// Sorted by `b`.
    pub thresholds: Vec<Threshold>,
}

impl BiasGeometry {
    /// Solves `J z = 1` and computes the crossing thresholds for branch `sign_s`.
    pub fn new(j_matrix: DMatrix<f64>, spec: &SpectralData, sign_s: Sign) -> Result<Self> {
        let n = j_matrix.nrows();
        if spec.n() != n {
            return Err(Error::Dimension { expected: n, got: spec.n() });
        }
        let j_inv_one = j_matrix
            .clone()
            .lu()
            .solve(&DVector::from_element(n, 1.0))
            .ok_or(Error::SingularJacobian)?;
        let norm = j_inv_one.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::SingularJacobian);
        }
        let e_dir = &j_inv_one / norm;
        let thresholds = bias_thresholds(&spec.v_star, &e_dir, norm, sign_s)?;
        Ok(BiasGeometry { j_matrix, j_inv_one, e_dir, b_max: 1.0 / norm, sign_s, thresholds })
    }

    /// Convenience: Jacobian for `params` on `a`, then [`BiasGeometry::new`].
    pub fn for_params(params: &NodParams, a: &AdjacencyMatrix, spec: &SpectralData, sign_s: Sign) -> Result<Self> {
        Self::new(linearized_jacobian(params, a), spec, sign_s)
    }

    pub fn j_inv_one_norm(&self) -> f64 {
        1.0 / self.b_max
    }

    /// True when `J⁻¹1` is strictly one-signed, which is what makes the
    /// positive count monotone in `b`.
    pub fn direction_definite(&self) -> bool {
        self.e_dir.iter().all(|&e| e > 0.0) || self.e_dir.iter().all(|&e| e < 0.0)
    }
}

/// Crossing angle and bias for each agent, sorted by bias.
pub fn bias_thresholds(v_star: &DVector<f64>, e_dir: &DVector<f64>, j_inv_one_norm: f64, sign_s: Sign) -> Result<Vec<Threshold>> {
    let s = sign_s.value();
    let mut out = Vec::with_capacity(v_star.len());
    for i in 0..v_star.len() {
        let (v, e) = (v_star[i], e_dir[i]);
        if v == 0.0 && e == 0.0 {
            return Err(Error::DegenerateDirection(i));
        }
        // tan(theta) = s v / e with theta in [-pi/2, pi/2]
        let theta = (s * v * e.signum()).atan2(e.abs());
        let direction = if e > 0.0 {
            -1
        } else if e < 0.0 {
            1
        } else {
            0
        };
        out.push(Threshold { agent: i, theta, b: theta.sin() / j_inv_one_norm, direction });
    }
    out.sort_by(|a, b| a.b.total_cmp(&b.b));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub unique_entries: bool,
    pub min_entry_gap: f64,
    pub orthogonal: bool,
    pub v_star_dot_one: f64,
    pub unique_combo: bool,
    pub min_angle_gap: f64,
    pub lambda_star_simple: bool,
    pub spectral_gap: f64,
    /// Diagnostic only: `J⁻¹1` strictly one-signed. Not part of `overall`.
    pub bias_direction_definite: bool,
    pub overall: bool,
}

fn min_pairwise_gap(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Checks the four structural conditions on `v*` and the bias direction.
/// Never fails; the report carries the margins.
pub fn check_assumption1(spec: &SpectralData, geom: &BiasGeometry, tol: f64) -> AssumptionReport {
    let v: Vec<f64> = spec.v_star.iter().copied().collect();
    let min_entry_gap = min_pairwise_gap(&v);
    let v_star_dot_one: f64 = v.iter().sum();
    let angles: Vec<f64> = geom.thresholds.iter().map(|t| t.theta).collect();
    let min_angle_gap = min_pairwise_gap(&angles);
    let spectral_gap = spec.gap();

    let unique_entries = min_entry_gap > tol;
    let orthogonal = v_star_dot_one.abs() < tol;
    let unique_combo = min_angle_gap > tol;
    let lambda_star_simple = spectral_gap > tol;
    AssumptionReport {
        unique_entries,
        min_entry_gap,
        orthogonal,
        v_star_dot_one,
        unique_combo,
        min_angle_gap,
        lambda_star_simple,
        spectral_gap,
        bias_direction_definite: geom.direction_definite(),
        overall: unique_entries && orthogonal && unique_combo && lambda_star_simple,
    }
}

/// Position of zero in the sorted entries: `1 + #{x_i < 0}`, plus whether
/// every entry is at least `tol` away from zero.
pub fn interlace_index(x: &[f64], tol: f64) -> (usize, bool) {
    let l = 1 + x.iter().filter(|&&v| v < 0.0).count();
    (l, x.iter().all(|v| v.abs() > tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use approx::assert_abs_diff_eq;

    fn params(u: f64) -> NodParams {
        NodParams::new(0.5, u, 0.3, -0.03, 0.0).unwrap()
    }

    #[test]
    fn k2_spectrum() {
        let s = eigendecompose(&Graph::path(2).adjacency()).unwrap();
        assert_abs_diff_eq!(s.lambda_star, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.lambda_2, 1.0, epsilon = 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // tie in magnitude: first entry wins
        assert_abs_diff_eq!(s.v_star[0], h, epsilon = 1e-12);
        assert_abs_diff_eq!(s.v_star[1], -h, epsilon = 1e-12);
    }

    #[test]
    fn k3_has_double_lambda_star() {
        let s = eigendecompose(&Graph::complete(3).adjacency()).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eigenvalues[1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eigenvalues[2], 2.0, epsilon = 1e-12);
        assert!(!s.gap_ok);
    }

    #[test]
    fn p3_spectrum() {
        let s = eigendecompose(&Graph::path(3).adjacency()).unwrap();
        let r2 = 2f64.sqrt();
        for (got, want) in s.eigenvalues.iter().zip([-r2, 0.0, r2]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn critical_attention_values() {
        let s = eigendecompose(&Graph::path(2).adjacency()).unwrap();
        let c = critical_attention(0.5, 0.3, -0.03, &s).unwrap();
        assert_abs_diff_eq!(c.u_star, 0.5 / 0.33, epsilon = 1e-12);
        assert_abs_diff_eq!(c.u_lambda2, 0.5 / 0.27, epsilon = 1e-12);
        assert!(matches!(critical_attention(0.5, 0.03, 0.03, &s), Err(Error::NonPositiveDenominator(_))));
    }

    #[test]
    fn u_lambda2_infinite_when_denominator_negative() {
        let s = eigendecompose(&Graph::path(2).adjacency()).unwrap();
        let c = critical_attention(0.5, 0.3, -0.5, &s).unwrap();
        assert!(c.u_lambda2.is_infinite());
    }

    #[test]
    fn jacobian_forms() {
        let single = AdjacencyMatrix::from_dense(DMatrix::zeros(1, 1)).unwrap();
        let j = linearized_jacobian(&NodParams::new(0.5, 1.0, 0.3, -0.03, 0.0).unwrap(), &single);
        assert_abs_diff_eq!(j[(0, 0)], -0.2, epsilon = 1e-15);

        let j = linearized_jacobian(&params(1.6667), &Graph::path(2).adjacency());
        assert_abs_diff_eq!(j[(0, 0)], -0.5 + 1.6667 * 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(j[(0, 1)], -0.05, epsilon = 1e-4);

        let mut p = params(1.0);
        p.gamma = 0.0;
        let j = linearized_jacobian(&p, &Graph::cycle(5).adjacency());
        assert!(j.iter().enumerate().all(|(k, &x)| k % 6 == 0 || x == 0.0));
    }

    #[test]
    fn k2_thresholds() {
        let a = Graph::path(2).adjacency();
        let s = eigendecompose(&a).unwrap();
        let u = 0.5 / 0.33 * 1.1;
        let p = params(u);
        let geom = BiasGeometry::for_params(&p, &a, &s, Sign::Plus).unwrap();
        // J = (-d + u alpha) I + u gamma A has row sum -d + u(alpha + gamma)
        let row = -0.5 + u * 0.27;
        assert_abs_diff_eq!(geom.j_inv_one[0], 1.0 / row, epsilon = 1e-9);
        assert_abs_diff_eq!(geom.b_max, row.abs() / 2f64.sqrt(), epsilon = 1e-12);
        let bs: Vec<f64> = geom.thresholds.iter().map(|t| t.b).collect();
        assert_abs_diff_eq!(bs[0], -geom.b_max / 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(bs[1], geom.b_max / 2f64.sqrt(), epsilon = 1e-12);
        // the positive v* entry needs negative bias to flip
        assert_eq!(geom.thresholds[0].agent, 0);
        assert!(geom.thresholds.iter().all(|t| t.direction == 1));
    }

    #[test]
    fn k2_thresholds_at_spec_point() {
        // u = 1.6667 puts the diagonal of J at ~0, so J^-1 1 = (-20, -20)
        let a = Graph::path(2).adjacency();
        let s = eigendecompose(&a).unwrap();
        let u = 0.5 / 0.3;
        let geom = BiasGeometry::for_params(&params(u), &a, &s, Sign::Plus).unwrap();
        assert_abs_diff_eq!(geom.j_inv_one[0], -20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(geom.b_max, 1.0 / (20.0 * 2f64.sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(geom.thresholds[0].b, -0.025, epsilon = 1e-12);
        assert_abs_diff_eq!(geom.thresholds[1].b, 0.025, epsilon = 1e-12);
        assert_abs_diff_eq!(geom.thresholds[0].theta, -std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn flipping_branch_negates_thresholds() {
        let g = crate::graph::gen_barabasi_albert(8, 2, 3).unwrap();
        let a = g.adjacency();
        let s = eigendecompose(&a).unwrap();
        let c = critical_attention(0.5, 0.3, -0.03, &s).unwrap();
        let p = params(1.02 * c.u_star);
        let plus = BiasGeometry::for_params(&p, &a, &s, Sign::Plus).unwrap();
        let minus = BiasGeometry::for_params(&p, &a, &s, Sign::Minus).unwrap();
        for t in &plus.thresholds {
            let m = minus.thresholds.iter().find(|m| m.agent == t.agent).unwrap();
            assert_abs_diff_eq!(m.theta, -t.theta, epsilon = 1e-12);
            assert_abs_diff_eq!(m.b, -t.b, epsilon = 1e-12);
        }
        assert!(plus.thresholds.iter().all(|t| t.b.abs() <= plus.b_max));
    }

    #[test]
    fn degenerate_direction() {
        let v = DVector::from_vec(vec![0.0, 1.0]);
        let e = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(bias_thresholds(&v, &e, 1.0, Sign::Plus), Err(Error::DegenerateDirection(0))));
    }

    #[test]
    fn assumption_reports() {
        let check = |g: &Graph| {
            let a = g.adjacency();
            let s = eigendecompose(&a).unwrap();
            let c = critical_attention(0.5, 0.3, -0.03, &s).unwrap();
            let geom = BiasGeometry::for_params(&params(1.05 * c.u_star), &a, &s, Sign::Plus).unwrap();
            check_assumption1(&s, &geom, DEFAULT_ASSUMPTION_TOL)
        };
        let k2 = check(&Graph::path(2));
        assert!(k2.orthogonal && k2.unique_entries && k2.overall);

        let c4 = check(&Graph::cycle(4));
        assert!(!c4.unique_entries);
        assert!(!c4.overall);

        let k3 = check(&Graph::complete(3));
        assert!(!k3.lambda_star_simple);
    }

    #[test]
    fn c4_v_star_alternates() {
        let s = eigendecompose(&Graph::cycle(4).adjacency()).unwrap();
        assert_abs_diff_eq!(s.lambda_star, -2.0, epsilon = 1e-12);
        for i in 0..4 {
            assert_abs_diff_eq!(s.v_star[i].abs(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn interlace_positions() {
        assert_eq!(interlace_index(&[-0.3, 0.2], 1e-12), (2, true));
        assert_eq!(interlace_index(&[0.1, 0.2, 0.3], 1e-12).0, 1);
        assert_eq!(interlace_index(&[-0.1, -0.2, -0.3], 1e-12).0, 4);
        assert!(!interlace_index(&[0.0, 1.0], 1e-12).1);
    }

    #[test]
    fn residuals_on_random_graphs() {
        for seed in 0..10 {
            let a = crate::graph::gen_erdos_renyi(20, 0.3, seed).unwrap().adjacency();
            let s = eigendecompose(&a).unwrap();
            for k in 0..s.n() {
                let v = s.eigenvectors.column(k);
                let r = a.matrix() * v - v * s.eigenvalues[k];
                assert!(r.amax() < 1e-8);
                assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-10);
            }
            assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            let pos = s.v_star.iter().filter(|&&x| x > 0.0).count();
            let neg = s.v_star.iter().filter(|&&x| x < 0.0).count();
            assert!(pos >= 1 && neg >= 1);
        }
    }
}
