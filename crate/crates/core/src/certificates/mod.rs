//! Dichotomy data, condition checks and scenario presets.

mod checks;
mod report;
mod scenarios;

use std::fmt;
use std::sync::Arc;

use crate::linalg::{identity, Matrix};
use crate::system::{IndexedCache, ScalarSeq};

pub use checks::{
    check_all, check_c2_conditions, check_d0, check_d1, check_d2, check_d3_d4, check_d5, check_d6, check_d7,
    GreenTable, D7_ANCHORS,
};
pub(crate) use checks::{heuristic_tail, scaled_tail, tail_mode, HeuristicTail};
pub(crate) use report::finite;
pub use report::{ConditionEntry, ConditionReport, ConditionStatus, TailMode, Witness};
pub use scenarios::{make_scenario, make_scenario_unchecked, Scenario, ScenarioParams, Variant};

pub type TailFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// Closed-form bounds on the tails of the infinite sums in the conditions,
/// for a truncation index `J`:
///
/// * `mu(J)`, `gamma(J)`: `Σ_{j≥J} D(j+1)h(j+1)w(j)` for `w = μ, γ`. Dividing
///   by `h(k)` bounds the Green-series tail in row `k`.
/// * `d7_unit(J)`: `Σ_{j≥J} D(j+1)h(j+1)γ(j)∏_{p=J}^{j-1}(‖A(p)‖+γ(p))`;
///   times `Ψ_m(J)` it bounds the d7 tail.
/// * `c2_gamma_unit(J)`: same with `Γ(j)` and squared products; times `Ψ_m(J)²`.
/// * `c2_pi_unit(J)`: `Σ_{j≥J} D(j+1)h(j+1)γ(j)∏_{i=J}^{j-1}Γ(i)`; times `π_m(J)`.
///
/// A bound of `+∞` means the closed form does not apply at that `J`.
#[derive(Clone)]
pub struct TailBounds {
    pub mu: TailFn,
    pub gamma: TailFn,
    pub d7_unit: TailFn,
    pub c2_gamma_unit: Option<TailFn>,
    pub c2_pi_unit: Option<TailFn>,
}

impl TailBounds {
    /// Every tail is zero (no perturbation).
    pub fn zero() -> Self {
        let z: TailFn = Arc::new(|_| 0.0);
        Self {
            mu: Arc::clone(&z),
            gamma: Arc::clone(&z),
            d7_unit: Arc::clone(&z),
            c2_gamma_unit: Some(Arc::clone(&z)),
            c2_pi_unit: Some(z),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    Mu,
    Gamma,
}

/// Projectors `P(n)`, `Q(n) = I − P(n)`, the dichotomy sequences `D`, `h`,
/// and optional certified tail bounds.
#[derive(Clone)]
pub struct DichotomyCertificate {
    dim: usize,
    proj_p: Arc<IndexedCache<Matrix>>,
    proj_q: Arc<IndexedCache<Matrix>>,
    seq_d: ScalarSeq,
    seq_h: ScalarSeq,
    tails: Option<TailBounds>,
}

impl fmt::Debug for DichotomyCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DichotomyCertificate")
            .field("dim", &self.dim)
            .field("certified_tails", &self.tails.is_some())
            .finish()
    }
}

impl DichotomyCertificate {
    pub fn new(
        dim: usize,
        proj_p: Arc<dyn Fn(usize) -> Matrix + Send + Sync>,
        seq_d: ScalarSeq,
        seq_h: ScalarSeq,
        tails: Option<TailBounds>,
    ) -> Self {
        let p_for_q = Arc::clone(&proj_p);
        Self {
            dim,
            proj_p: Arc::new(IndexedCache::new(proj_p)),
            proj_q: Arc::new(IndexedCache::new(Arc::new(move |n| identity(dim) - p_for_q(n)))),
            seq_d,
            seq_h,
            tails,
        }
    }

    /// Constant projector.
    pub fn constant(p: Matrix, seq_d: ScalarSeq, seq_h: ScalarSeq, tails: Option<TailBounds>) -> Self {
        let dim = p.nrows();
        Self::new(dim, Arc::new(move |_| p.clone()), seq_d, seq_h, tails)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self, n: usize) -> Arc<Matrix> {
        self.proj_p.get(n)
    }

    pub fn q(&self, n: usize) -> Arc<Matrix> {
        self.proj_q.get(n)
    }

    pub fn d(&self, n: usize) -> f64 {
        (self.seq_d)(n)
    }

    pub fn h(&self, n: usize) -> f64 {
        (self.seq_h)(n)
    }

    pub fn tails(&self) -> Option<&TailBounds> {
        self.tails.as_ref()
    }

    pub fn with_tails(mut self, tails: Option<TailBounds>) -> Self {
        self.tails = tails;
        self
    }

    /// `D(j+1)h(j+1)`.
    pub fn weight(&self, j: usize) -> f64 {
        self.d(j + 1) * self.h(j + 1)
    }

    /// Certified bound on `Σ_{j≥J} ‖𝒢(k, j+1)‖ w(j)`, when tails are available.
    pub fn green_tail(&self, w: Weight, k: usize, big_j: usize) -> Option<f64> {
        let t = self.tails.as_ref()?;
        let s = match w {
            Weight::Mu => (t.mu)(big_j),
            Weight::Gamma => (t.gamma)(big_j),
        };
        Some(if s == 0.0 { 0.0 } else { s / self.h(k) })
    }
}
