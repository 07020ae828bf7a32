//! Construction of the equivalence maps.
//!
//! * `z*(·;(m,ξ))` is the fixed point of
//!   `(Θφ)(k) = Σ_j 𝒢(k,j+1) f(j, x(j,m,ξ) + φ(j))`, found by Picard iteration
//!   from the zero sequence.
//! * `w*(k;(m,η)) = −Σ_j 𝒢(k,j+1) f(j, y(j,m,η))` is summed directly.
//! * `H(k,ξ) = ξ + z*(k;(k,ξ))` and `G(k,η) = η + w*(k;(k,η))`.
//!
//! All series are represented on `[0, J]` with `J` the series horizon: terms
//! with `j ≥ J` are dropped and accounted for by the tail of (d3). Maps are
//! only evaluated for `k ≤ J/2`, where that tail is below `fp_tol`.
//!
//! # Derivatives
//!
//! `Z(j) = ∂y/∂η(j,m,η)` solves `Z(j+1) = B(j)Z(j)` with `Z(m) = I` and
//! `B(j) = A(j) + ∂f/∂u(j, y(j))`. Below the anchor the recurrence is run
//! backwards, `Z(j) = B(j)⁻¹Z(j+1)`, which is the derivative of the backward
//! step; (d5) makes `B(j)` invertible.
//!
//! Differentiating once more gives the second variation `Z₂(j) = ∂²y/∂η²`:
//!
//! ```text
//! Z₂(j+1) = B(j)Z₂(j) + ∂²f/∂u²(j, y(j))[Z(j)·, Z(j)·],   Z₂(m) = 0
//! Z₂(j)   = B(j)⁻¹( Z₂(j+1) − ∂²f/∂u²(j, y(j))[Z(j)·, Z(j)·] )   for j < m
//! ```
//!
//! and `∂²w*(k;(m,η)) = −Σ_j 𝒢(k,j+1)( ∂f/∂u·Z₂(j) + ∂²f/∂u²[Z(j)·, Z(j)·] )`.
//! Derivatives of `G` differentiate `G(k,η) = η + w*(k;(k,η))` row by row;
//! the equivalent form `Φ(k,0)[y(0,k,η) + w*(0;(k,η))]` loses accuracy by
//! the factor `‖Φ(k,0)‖‖Φ(0,k)‖`. `∂H(k,ξ)` is the inverse of `∂G(k, H(k,ξ))`.

mod bounds;
mod derivatives;
mod envelopes;
mod green;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::certificates::{
    check_d3_d4, heuristic_tail, tail_mode, DichotomyCertificate, GreenTable, HeuristicTail, Scenario, TailMode, Weight,
};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::system::{linear_orbit, perturbed_orbit, transition_matrix, MatrixSequence, PerturbationModel};

pub use bounds::TruncationBounds;
pub use envelopes::GrowthEnvelopes;
pub use green::{green_apply, green_apply_vec};

/// Finite-difference error metric `max|num − ana| / (1 + max|ana|)`.
pub fn fd_error(num: &Matrix, ana: &Matrix) -> f64 {
    (num - ana).amax() / (1.0 + ana.amax())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationPolicy {
    /// Series horizon `J`.
    pub series_horizon: usize,
    pub fp_tol: f64,
    pub fd_step: f64,
    pub max_iters: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            series_horizon: 128,
            fp_tol: 1e-10,
            fd_step: 1e-5,
            max_iters: 1000,
        }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.series_horizon < 2 {
            return Err(Error::PolicyRejected("series horizon must be at least 2".into()));
        }
        if !(self.fp_tol > 0.0 && self.fp_tol.is_finite()) {
            return Err(Error::PolicyRejected("fp_tol must be positive".into()));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::PolicyRejected("fd_step must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::PolicyRejected("max_iters must be positive".into()));
        }
        Ok(())
    }

    /// Largest index at which maps may be evaluated.
    pub fn max_index(&self) -> usize {
        self.series_horizon / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    H,
    G,
}

type Key = (usize, Vec<u64>);

fn key(m: usize, v: &Vector) -> Key {
    (m, v.iter().map(|x| x.to_bits()).collect())
}

/// Orbit `y(·,m,η)` on `[0, J]` and the matching `w*(·;(m,η))`.
pub(crate) struct PerturbedData {
    pub y: Vec<Vector>,
    pub w: Vec<Vector>,
}

/// Truncated-series representation of `H`, `G`, `z*` and `w*` for one system.
pub struct ConjugacyEngine {
    sys: MatrixSequence,
    pert: PerturbationModel,
    cert: DichotomyCertificate,
    policy: TruncationPolicy,
    table: GreenTable,
    p: f64,
    q: f64,
    q_trunc: f64,
    mode: TailMode,
    row_tails: Vec<f64>,
    trunc_err: Vec<f64>,
    z_cache: RwLock<HashMap<Key, Arc<Vec<Vector>>>>,
    y_cache: RwLock<HashMap<Key, Arc<PerturbedData>>>,
}

impl fmt::Debug for ConjugacyEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConjugacyEngine")
            .field("policy", &self.policy)
            .field("p", &self.p)
            .field("q", &self.q)
            .field("tail_mode", &self.mode)
            .finish()
    }
}

impl ConjugacyEngine {
    pub fn new(scenario: &Scenario, policy: TruncationPolicy) -> Result<Self> {
        let (sys, pert, cert) = scenario.triple();
        Self::from_parts(sys.clone(), pert.clone(), cert.clone(), policy)
    }

    /// Requires (d3) and (d4) at horizon `J` and a (d3) tail at row `J/2`
    /// no larger than `fp_tol`.
    pub fn from_parts(
        sys: MatrixSequence,
        pert: PerturbationModel,
        cert: DichotomyCertificate,
        policy: TruncationPolicy,
    ) -> Result<Self> {
        policy.validate()?;
        for got in [pert.dim(), cert.dim()] {
            if got != sys.dim() {
                return Err(Error::DimensionMismatch {
                    expected: sys.dim(),
                    got,
                });
            }
        }
        let big_j = policy.series_horizon;
        let table = GreenTable::compute(&sys, &cert, big_j);
        let (d3, d4, p, q) = check_d3_d4(&table, &cert, &pert)?;
        for entry in [&d3, &d4] {
            if !entry.status.is_satisfied() {
                return Err(Error::PreconditionFailed {
                    condition: entry.name.clone(),
                });
            }
        }
        let gamma: Vec<f64> = (0..big_j).map(|j| pert.gamma(j)).collect();
        let q_trunc = (0..=big_j)
            .map(|k| (0..big_j).map(|j| table.norm(k, j + 1) * gamma[j]).sum::<f64>())
            .fold(0.0, f64::max);
        if q_trunc >= 1.0 {
            return Err(Error::PreconditionFailed { condition: "d4".into() });
        }
        let mode = tail_mode(&cert);
        let row_tails: Vec<f64> = (0..=big_j).map(|k| row_tail(&table, &cert, &pert, k, big_j)).collect();
        let at_half = row_tails[policy.max_index()];
        if !(at_half <= policy.fp_tol) {
            return Err(Error::PolicyRejected(format!(
                "tail of the series at row {} beyond J = {big_j} is {at_half:.3e} > fp_tol = {:.3e}",
                policy.max_index(),
                policy.fp_tol
            )));
        }
        let trunc_err = propagate_truncation(&table, &gamma, &row_tails, q_trunc);
        Ok(Self {
            sys,
            pert,
            cert,
            policy,
            table,
            p,
            q,
            q_trunc,
            mode,
            row_tails,
            trunc_err,
            z_cache: RwLock::new(HashMap::new()),
            y_cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    pub fn system(&self) -> &MatrixSequence {
        &self.sys
    }

    pub fn perturbation(&self) -> &PerturbationModel {
        &self.pert
    }

    pub fn certificate(&self) -> &DichotomyCertificate {
        &self.cert
    }

    pub fn green_table(&self) -> &GreenTable {
        &self.table
    }

    pub fn dim(&self) -> usize {
        self.sys.dim()
    }

    /// The (d3) constant at horizon `J`.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// The (d4) constant at horizon `J`.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Contraction factor of the truncated operator actually iterated.
    pub fn q_truncated(&self) -> f64 {
        self.q_trunc
    }

    pub fn tail_mode(&self) -> TailMode {
        self.mode
    }

    /// Bound on `Σ_{j≥J} ‖𝒢(k,j+1)‖μ(j)`.
    pub fn row_tail(&self, k: usize) -> f64 {
        self.row_tails[k]
    }

    pub fn max_index(&self) -> usize {
        self.policy.max_index()
    }

    fn check_point(&self, v: &Vector) -> Result<()> {
        if v.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            })
        }
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k <= self.max_index() {
            Ok(())
        } else {
            Err(Error::PolicyRejected(format!(
                "index {k} lies outside the evaluation range [0, {}] of J = {}",
                self.max_index(),
                self.policy.series_horizon
            )))
        }
    }

    fn check_anchor(&self, m: usize) -> Result<()> {
        if m <= self.policy.series_horizon {
            Ok(())
        } else {
            Err(Error::PolicyRejected(format!(
                "anchor {m} lies beyond the series horizon {}",
                self.policy.series_horizon
            )))
        }
    }

    /// Linear orbit `x(·,m,ξ)` on `[0, J]`.
    pub fn linear_orbit(&self, m: usize, xi: &Vector) -> Result<Vec<Vector>> {
        self.check_point(xi)?;
        self.check_anchor(m)?;
        Ok(linear_orbit(&self.sys, m, xi, self.policy.series_horizon))
    }

    /// `z*(·;(m,ξ))` on `[0, J]`.
    pub fn z_sequence(&self, m: usize, xi: &Vector) -> Result<Arc<Vec<Vector>>> {
        self.check_point(xi)?;
        self.check_anchor(m)?;
        let k = key(m, xi);
        if let Some(z) = self.z_cache.read().expect("cache poisoned").get(&k) {
            return Ok(Arc::clone(z));
        }
        let z = Arc::new(self.picard(m, xi)?);
        let mut cache = self.z_cache.write().expect("cache poisoned");
        Ok(Arc::clone(cache.entry(k).or_insert(z)))
    }

    fn picard(&self, m: usize, xi: &Vector) -> Result<Vec<Vector>> {
        let big_j = self.policy.series_horizon;
        let x = linear_orbit(&self.sys, m, xi, big_j);
        let mut z = vec![Vector::zeros(self.dim()); big_j + 1];
        let stop = self.policy.fp_tol * (1.0 - self.q_trunc);
        let mut update = f64::INFINITY;
        for _ in 0..self.policy.max_iters {
            let forcing: Vec<Vector> = (0..big_j).map(|j| self.pert.eval(j, &(&x[j] + &z[j]))).collect();
            let next = green_apply_vec(&self.sys, &self.cert, &forcing);
            update = next.iter().zip(&z).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            z = next;
            if update <= stop {
                return Ok(z);
            }
        }
        Err(Error::NoConvergence {
            what: "Picard iteration for z*",
            iterations: self.policy.max_iters,
            residual: update,
        })
    }

    pub(crate) fn perturbed_data(&self, m: usize, eta: &Vector) -> Result<Arc<PerturbedData>> {
        self.check_point(eta)?;
        self.check_anchor(m)?;
        let k = key(m, eta);
        if let Some(d) = self.y_cache.read().expect("cache poisoned").get(&k) {
            return Ok(Arc::clone(d));
        }
        let big_j = self.policy.series_horizon;
        let y = perturbed_orbit(&self.sys, &self.pert, m, eta, big_j)?;
        let forcing: Vec<Vector> = (0..big_j).map(|j| self.pert.eval(j, &y[j])).collect();
        let w = green_apply_vec(&self.sys, &self.cert, &forcing)
            .into_iter()
            .map(|v| -v)
            .collect();
        let data = Arc::new(PerturbedData { y, w });
        let mut cache = self.y_cache.write().expect("cache poisoned");
        Ok(Arc::clone(cache.entry(k).or_insert(data)))
    }

    /// Perturbed orbit `y(·,m,η)` on `[0, J]`.
    pub fn perturbed_orbit(&self, m: usize, eta: &Vector) -> Result<Vec<Vector>> {
        Ok(self.perturbed_data(m, eta)?.y.clone())
    }

    pub fn compute_z_star(&self, k: usize, m: usize, xi: &Vector) -> Result<Vector> {
        self.check_index(k)?;
        Ok(self.z_sequence(m, xi)?[k].clone())
    }

    pub fn compute_w_star(&self, k: usize, m: usize, eta: &Vector) -> Result<Vector> {
        self.check_index(k)?;
        Ok(self.perturbed_data(m, eta)?.w[k].clone())
    }

    /// `H(k,ξ) = ξ + z*(k;(k,ξ))`.
    pub fn map_h(&self, k: usize, xi: &Vector) -> Result<Vector> {
        Ok(xi + self.compute_z_star(k, k, xi)?)
    }

    /// `G(k,η) = η + w*(k;(k,η))`.
    pub fn map_g(&self, k: usize, eta: &Vector) -> Result<Vector> {
        Ok(eta + self.compute_w_star(k, k, eta)?)
    }

    pub fn map(&self, direction: Direction, k: usize, point: &Vector) -> Result<Vector> {
        match direction {
            Direction::H => self.map_h(k, point),
            Direction::G => self.map_g(k, point),
        }
    }

    /// `G(k,η) = Φ(k,0)[y(0,k,η) + w*(0;(k,η))]`.
    pub fn map_g_alternate(&self, k: usize, eta: &Vector) -> Result<Vector> {
        self.check_index(k)?;
        let data = self.perturbed_data(k, eta)?;
        Ok(transition_matrix(&self.sys, k, 0) * (&data.y[0] + &data.w[0]))
    }
}

/// Bound on the dropped part `Σ_{j≥J} ‖𝒢(k,j+1)‖μ(j)` of row `k`.
fn row_tail(table: &GreenTable, cert: &DichotomyCertificate, pert: &PerturbationModel, k: usize, big_j: usize) -> f64 {
    if let Some(t) = cert.green_tail(Weight::Mu, k, big_j) {
        return t;
    }
    let terms: Vec<f64> = (k.max(big_j * 3 / 4)..big_j)
        .map(|j| table.norm(k, j + 1) * pert.mu(j))
        .collect();
    match heuristic_tail(&terms) {
        HeuristicTail::Finite(t) => t,
        _ => f64::INFINITY,
    }
}

/// Smallest solution of `e = T + K e` with `K(k,j) = ‖𝒢(k,j+1)‖γ(j)`, which
/// bounds `|z*_true(k) − z*_J(k)|` for the exact fixed points.
fn propagate_truncation(table: &GreenTable, gamma: &[f64], tails: &[f64], q: f64) -> Vec<f64> {
    let big_j = gamma.len();
    let mul = |a: f64, b: f64| if a == 0.0 || b == 0.0 { 0.0 } else { a * b };
    let mut e = tails.to_vec();
    let mut delta = 0.0;
    for _ in 0..1000 {
        let next: Vec<f64> = (0..=big_j)
            .map(|k| {
                tails[k]
                    + (0..big_j)
                        .map(|j| mul(table.norm(k, j + 1) * gamma[j], e[j]))
                        .sum::<f64>()
            })
            .collect();
        delta = next.iter().zip(&e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let size = next.iter().copied().fold(0.0, f64::max);
        e = next;
        if !delta.is_finite() || delta <= 1e-6 * size {
            break;
        }
    }
    let slack = q / (1.0 - q) * delta;
    e.into_iter().map(|x| x + slack).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::Variant;

    #[test]
    fn policy_validation() {
        assert!(TruncationPolicy::default().validate().is_ok());
        let bad = TruncationPolicy {
            fp_tol: 0.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::PolicyRejected(_))));
    }

    #[test]
    fn zero_perturbation_gives_identity_maps() {
        let sc = Scenario::preset(Variant::Ex188).unwrap().without_perturbation();
        let eng = ConjugacyEngine::new(&sc, TruncationPolicy::default()).unwrap();
        let xi = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(eng.map_h(3, &xi).unwrap(), xi);
        assert_eq!(eng.map_g(3, &xi).unwrap(), xi);
        assert_eq!(eng.compute_z_star(2, 0, &xi).unwrap(), Vector::zeros(3));
    }

    #[test]
    fn evaluation_range_enforced() {
        let sc = Scenario::preset(Variant::Ex188).unwrap();
        let eng = ConjugacyEngine::new(&sc, TruncationPolicy::default()).unwrap();
        let xi = Vector::zeros(3);
        assert!(matches!(eng.map_h(65, &xi), Err(Error::PolicyRejected(_))));
        assert!(matches!(
            eng.map_h(0, &Vector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inverse_pair_on_ex188() {
        let sc = Scenario::preset(Variant::Ex188).unwrap();
        let eng = ConjugacyEngine::new(&sc, TruncationPolicy::default()).unwrap();
        let xi = Vector::from_vec(vec![3.0, -1.0, 2.0]);
        for k in [0, 1, 4] {
            let h = eng.map_h(k, &xi).unwrap();
            let back = eng.map_g(k, &h).unwrap();
            assert!((back - &xi).norm() < 1e-9, "k = {k}");
            let alt = eng.map_g_alternate(k, &h).unwrap();
            assert!((alt - eng.map_g(k, &h).unwrap()).norm() < 2e-9);
        }
    }
}
