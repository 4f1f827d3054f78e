//! Persistence-of-excitation diagnostics over a sliding time window.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default PE level.
pub const DEFAULT_PE_ALPHA: f64 = 1e-4;
/// Default window length in epochs.
pub const DEFAULT_PE_WINDOW: f64 = 10.0;

/// Samples `(τ, s(τ))` with `τ` strictly increasing, trimmed to the last `window` time units.
#[derive(Clone, Debug)]
pub struct SignalWindow {
    samples: VecDeque<(f64, DVector<f64>)>,
    window: f64,
}

impl SignalWindow {
    /// `window` may be infinite to keep every sample.
    pub fn new(window: f64) -> Result<Self> {
        if !(window > 0.0) {
            return Err(Error::InvalidParameter(format!("PE window {window} must be positive")));
        }
        Ok(SignalWindow { samples: VecDeque::new(), window })
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &(f64, DVector<f64>)> {
        self.samples.iter()
    }

    /// Time covered by the retained samples.
    pub fn span(&self) -> f64 {
        match (self.samples.front(), self.samples.back()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => 0.0,
        }
    }

    /// Appends a sample and drops those older than `t − window`.
    pub fn push(&mut self, t: f64, s: DVector<f64>) -> Result<()> {
        if let Some((last_t, last_s)) = self.samples.back() {
            if !(t > *last_t) {
                return Err(Error::InvalidParameter(format!("sample time {t} not after {last_t}")));
            }
            if s.len() != last_s.len() {
                return Err(Error::Dimension { expected: last_s.len(), got: s.len() });
            }
        }
        self.samples.push_back((t, s));
        while let Some((t0, _)) = self.samples.front() {
            if *t0 < t - self.window {
                self.samples.pop_front();
            } else {
                break;
            }
        }
        Ok(())
    }
}

/// Trapezoidal `∫ s(τ) s(τ)ᵀ dτ` over the retained samples.
pub fn gram_integral(sw: &SignalWindow) -> Result<DMatrix<f64>> {
    if sw.len() < 2 {
        return Err(Error::InsufficientSamples(sw.len()));
    }
    let n = sw.samples[0].1.len();
    let mut g = DMatrix::zeros(n, n);
    for ((t0, s0), (t1, s1)) in sw.samples.iter().zip(sw.samples.iter().skip(1)) {
        let h = 0.5 * (t1 - t0);
        g.ger(h, s0, s0, 1.0);
        g.ger(h, s1, s1, 1.0);
    }
    Ok(g)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `(min_eig ≥ pe_alpha, min_eig)` of the window's Gram integral.
pub fn is_pe(sw: &SignalWindow, pe_alpha: f64) -> Result<(bool, f64)> {
    let min_eig = min_eigenvalue(&gram_integral(sw)?);
    Ok((min_eig >= pe_alpha, min_eig))
}
