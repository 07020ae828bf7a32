//! Linear systems `x(k+1) = A(k)x(k)`, their perturbations
//! `y(k+1) = A(k)y(k) + f(k, y(k))`, transition matrices and trajectories.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use crate::certificates::DichotomyCertificate;
use crate::error::{Error, Result};
use crate::linalg::{identity, op_norm, Matrix, Tensor3, Vector};

pub type ScalarSeq = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(usize) -> Matrix + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(usize, &Vector) -> Vector + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(usize, &Vector) -> Matrix + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(usize, &Vector) -> Tensor3 + Send + Sync>;

pub fn constant_seq(c: f64) -> ScalarSeq {
    Arc::new(move |_| c)
}

/// Demand-filled per-index cache. Filling is idempotent, so concurrent
/// readers only ever observe identical values.
pub(crate) struct IndexedCache<T> {
    gen: Arc<dyn Fn(usize) -> T + Send + Sync>,
    items: RwLock<Vec<Arc<T>>>,
}

impl<T> IndexedCache<T> {
    pub(crate) fn new(gen: Arc<dyn Fn(usize) -> T + Send + Sync>) -> Self {
        Self {
            gen,
            items: RwLock::new(Vec::new()),
        }
    }

    pub(crate) fn get(&self, k: usize) -> Arc<T> {
        if let Some(v) = self.items.read().expect("cache poisoned").get(k) {
            return Arc::clone(v);
        }
        let mut items = self.items.write().expect("cache poisoned");
        while items.len() <= k {
            let idx = items.len();
            items.push(Arc::new((self.gen)(idx)));
        }
        Arc::clone(&items[k])
    }
}

/// Coefficient data at one index.
#[derive(Debug)]
pub struct Step {
    pub a: Matrix,
    pub a_inv: Matrix,
    pub norm_a: f64,
    pub norm_a_inv: f64,
}

/// The coefficient sequence `A(k)` with inverses and the declared uniform bound `M`.
#[derive(Clone)]
pub struct MatrixSequence {
    dim: usize,
    bound_m: f64,
    steps: Arc<IndexedCache<Step>>,
}

impl fmt::Debug for MatrixSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixSequence")
            .field("dim", &self.dim)
            .field("bound_m", &self.bound_m)
            .finish()
    }
}

impl MatrixSequence {
    /// `inverse` may be omitted, in which case each `A(k)` is inverted by LU.
    /// A singular coefficient panics on first access.
    pub fn new(dim: usize, coeff: MatrixFn, inverse: Option<MatrixFn>, bound_m: f64) -> Self {
        let gen = move |k: usize| {
            let a = coeff(k);
            let a_inv = match &inverse {
                Some(inv) => inv(k),
                None => a.clone().try_inverse().unwrap_or_else(|| panic!("A({k}) is singular")),
            };
            Step {
                norm_a: op_norm(&a),
                norm_a_inv: op_norm(&a_inv),
                a,
                a_inv,
            }
        };
        Self {
            dim,
            bound_m,
            steps: Arc::new(IndexedCache::new(Arc::new(gen))),
        }
    }

    /// A constant coefficient matrix.
    pub fn constant(a: Matrix, bound_m: f64) -> Self {
        let dim = a.nrows();
        let inv = a.clone().try_inverse().expect("constant coefficient is singular");
        Self::new(
            dim,
            Arc::new(move |_| a.clone()),
            Some(Arc::new(move |_| inv.clone())),
            bound_m,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    pub fn step(&self, k: usize) -> Arc<Step> {
        self.steps.get(k)
    }

    pub fn coeff(&self, k: usize) -> Matrix {
        self.step(k).a.clone()
    }

    pub fn inv_coeff(&self, k: usize) -> Matrix {
        self.step(k).a_inv.clone()
    }
}

/// The nonlinearity `f(k, u)` with derivative callbacks and its envelopes.
///
/// `gamma` bounds the Lipschitz constant (and the first derivative), `mu` the
/// size of `f`, and `gamma_s[s - 2]` the `s`-th derivative for `s ≥ 2`.
#[derive(Clone)]
pub struct PerturbationModel {
    dim: usize,
    order: usize,
    f: FieldFn,
    jac: Option<JacobianFn>,
    hess: Option<HessianFn>,
    gamma: ScalarSeq,
    mu: ScalarSeq,
    higher: Vec<ScalarSeq>,
    linear_in_u: bool,
}

impl fmt::Debug for PerturbationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbationModel")
            .field("dim", &self.dim)
            .field("order", &self.order)
            .finish()
    }
}

impl PerturbationModel {
    pub fn new(dim: usize, f: FieldFn, gamma: ScalarSeq, mu: ScalarSeq) -> Self {
        Self {
            dim,
            order: 0,
            f,
            jac: None,
            hess: None,
            gamma,
            mu,
            higher: Vec::new(),
            linear_in_u: false,
        }
    }

    pub fn with_jacobian(mut self, jac: JacobianFn) -> Self {
        self.jac = Some(jac);
        self.order = self.order.max(1);
        self
    }

    /// Adds the second derivative and its envelope `Γ_2`.
    pub fn with_hessian(mut self, hess: HessianFn, gamma_2: ScalarSeq) -> Self {
        assert!(self.jac.is_some(), "hessian requires a jacobian");
        self.hess = Some(hess);
        self.order = self.order.max(2);
        if self.higher.is_empty() {
            self.higher.push(gamma_2);
        } else {
            self.higher[0] = gamma_2;
        }
        self
    }

    /// Envelopes `Γ_s` for `s ≥ 3`, used only by the symbolic condition
    /// evaluation; numeric derivatives stop at order two.
    pub fn with_higher_envelopes(mut self, envelopes: Vec<ScalarSeq>) -> Self {
        assert!(!self.higher.is_empty(), "set Γ_2 through with_hessian first");
        self.higher.truncate(1);
        self.higher.extend(envelopes);
        self
    }

    /// `f ≡ 0` with all derivatives identically zero.
    pub fn zero(dim: usize) -> Self {
        let zero = constant_seq(0.0);
        let mut m = Self::new(
            dim,
            Arc::new(move |_, _| Vector::zeros(dim)),
            Arc::clone(&zero),
            Arc::clone(&zero),
        )
        .with_jacobian(Arc::new(move |_, _| Matrix::zeros(dim, dim)))
        .with_hessian(Arc::new(move |_, _| Tensor3::zeros(dim)), zero);
        m.linear_in_u = true;
        m
    }

    /// Marks `f` as affine in `u` (second derivative identically zero).
    pub fn mark_linear(mut self) -> Self {
        self.linear_in_u = true;
        self
    }

    pub fn is_linear_in_u(&self) -> bool {
        self.linear_in_u
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn eval(&self, k: usize, u: &Vector) -> Vector {
        (self.f)(k, u)
    }

    pub fn jacobian(&self, k: usize, u: &Vector) -> Result<Matrix> {
        match &self.jac {
            Some(j) => Ok(j(k, u)),
            None => Err(Error::MissingDerivative {
                needed: 1,
                available: self.order,
            }),
        }
    }

    pub fn hessian(&self, k: usize, u: &Vector) -> Result<Tensor3> {
        match &self.hess {
            Some(h) => Ok(h(k, u)),
            None => Err(Error::MissingDerivative {
                needed: 2,
                available: self.order,
            }),
        }
    }

    pub fn gamma(&self, k: usize) -> f64 {
        (self.gamma)(k)
    }

    pub fn mu(&self, k: usize) -> f64 {
        (self.mu)(k)
    }

    pub fn gamma_seq(&self) -> ScalarSeq {
        Arc::clone(&self.gamma)
    }

    pub fn mu_seq(&self) -> ScalarSeq {
        Arc::clone(&self.mu)
    }

    /// `Γ_s(k)`: `s = 1` is `γ`; higher orders come from the declared envelopes.
    pub fn gamma_s(&self, s: usize, k: usize) -> Option<f64> {
        match s {
            0 => None,
            1 => Some(self.gamma(k)),
            _ => self.higher.get(s - 2).map(|g| g(k)),
        }
    }

    pub fn max_envelope_order(&self) -> usize {
        1 + self.higher.len()
    }

    /// Same map scaled by `factor` (f, derivatives and envelopes).
    pub fn scaled(&self, factor: f64) -> Self {
        let f = Arc::clone(&self.f);
        let mut out = Self::new(
            self.dim,
            Arc::new(move |k, u| f(k, u) * factor),
            scale_seq(&self.gamma, factor),
            scale_seq(&self.mu, factor),
        );
        if let Some(j) = &self.jac {
            let j = Arc::clone(j);
            out = out.with_jacobian(Arc::new(move |k, u| j(k, u) * factor));
        }
        if let Some(h) = &self.hess {
            let h = Arc::clone(h);
            let g2 = scale_seq(&self.higher[0], factor);
            out = out.with_hessian(
                Arc::new(move |k, u| Tensor3::from_flat(u.len(), h(k, u).into_flat() * factor)),
                g2,
            );
            let rest = self.higher[1..].iter().map(|g| scale_seq(g, factor)).collect();
            out = out.with_higher_envelopes(rest);
        }
        out.linear_in_u = self.linear_in_u;
        out
    }
}

fn scale_seq(s: &ScalarSeq, factor: f64) -> ScalarSeq {
    let s = Arc::clone(s);
    Arc::new(move |k| s(k) * factor)
}

/// `Φ(k, n)`: the forward product for `k > n`, the identity for `k = n`,
/// and the product of inverses for `k < n`.
pub fn transition_matrix(sys: &MatrixSequence, k: usize, n: usize) -> Matrix {
    let mut phi = identity(sys.dim());
    if k >= n {
        for i in n..k {
            phi = &sys.step(i).a * phi;
        }
    } else {
        for i in (k..n).rev() {
            phi = &sys.step(i).a_inv * phi;
        }
    }
    phi
}

/// Green operator `𝒢(k, n)`: `Φ(k,n)P(n)` for `k ≥ n` and `−Φ(k,n)Q(n)` otherwise.
///
/// The kernel is propagated from the projector one step at a time and
/// re-projected after each step, which is exact by invariance and keeps the
/// complementary direction from amplifying rounding errors.
pub fn green_operator(sys: &MatrixSequence, cert: &DichotomyCertificate, k: usize, n: usize) -> Matrix {
    if k >= n {
        let mut g = cert.p(n).as_ref().clone();
        for i in n..k {
            g = cert.p(i + 1).as_ref() * (&sys.step(i).a * g);
        }
        g
    } else {
        let mut g = cert.q(n).as_ref().clone();
        for i in (k..n).rev() {
            g = cert.q(i).as_ref() * (&sys.step(i).a_inv * g);
        }
        -g
    }
}

/// `A(k)v (+ f(k, v))`.
pub fn forward_step(sys: &MatrixSequence, pert: Option<&PerturbationModel>, k: usize, v: &Vector) -> Vector {
    let av = &sys.step(k).a * v;
    match pert {
        Some(p) => av + p.eval(k, v),
        None => av,
    }
}

const BACKWARD_MAX_ITERS: usize = 10_000;

/// Solves `w = A(k)v + f(k, v)` for `v` by iterating `v ↦ A⁻¹(k)(w − f(k, v))`
/// from `A⁻¹(k)w`, stopping once the a-priori contraction estimate is below `tol`.
pub fn backward_step(sys: &MatrixSequence, pert: &PerturbationModel, k: usize, w: &Vector, tol: f64) -> Result<Vector> {
    let step = sys.step(k);
    let c = step.norm_a_inv * pert.gamma(k);
    if c >= 1.0 {
        return Err(Error::ContractionViolated { k, factor: c });
    }
    let mut v = &step.a_inv * w;
    if c == 0.0 {
        return Ok(v);
    }
    let stop = tol * (1.0 - c) / c;
    let mut last = f64::INFINITY;
    for _ in 0..BACKWARD_MAX_ITERS {
        let next = &step.a_inv * (w - pert.eval(k, &v));
        let update = (&next - &v).norm();
        v = next;
        // the second test catches stagnation at machine precision
        if update <= stop || update <= 4.0 * f64::EPSILON * v.norm() {
            return Ok(v);
        }
        last = update;
    }
    Err(Error::NoConvergence {
        what: "backward step",
        iterations: BACKWARD_MAX_ITERS,
        residual: last,
    })
}

/// Tolerance used internally for backward continuation of a state of size `scale`.
pub(crate) fn backward_tol(scale: f64) -> f64 {
    1e-14 * (1.0 + scale)
}

/// Linear orbit `x(j, m, ξ)` for `j ∈ [0, upto]`.
pub(crate) fn linear_orbit(sys: &MatrixSequence, m: usize, xi: &Vector, upto: usize) -> Vec<Vector> {
    let len = upto.max(m) + 1;
    let mut out = vec![Vector::zeros(sys.dim()); len];
    out[m] = xi.clone();
    for j in (0..m).rev() {
        out[j] = &sys.step(j).a_inv * &out[j + 1];
    }
    for j in m..upto {
        out[j + 1] = &sys.step(j).a * &out[j];
    }
    out.truncate(upto + 1);
    out
}

/// Perturbed orbit `y(j, m, η)` for `j ∈ [0, upto]` (backward part by `backward_step`).
pub(crate) fn perturbed_orbit(
    sys: &MatrixSequence,
    pert: &PerturbationModel,
    m: usize,
    eta: &Vector,
    upto: usize,
) -> Result<Vec<Vector>> {
    let len = upto.max(m) + 1;
    let mut out = vec![Vector::zeros(sys.dim()); len];
    out[m] = eta.clone();
    for j in (0..m).rev() {
        let w = &out[j + 1];
        out[j] = backward_step(sys, pert, j, w, backward_tol(w.norm()))?;
    }
    for j in m..upto {
        out[j + 1] = forward_step(sys, Some(pert), j, &out[j]);
    }
    out.truncate(upto + 1);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    Linear,
    Perturbed,
}

/// A solution through `(m, value)`, evaluated on demand and memoized.
pub struct Trajectory {
    sys: MatrixSequence,
    pert: Option<PerturbationModel>,
    anchor: (usize, Vector),
    samples: RwLock<BTreeMap<usize, Vector>>,
}

impl fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trajectory")
            .field("anchor", &self.anchor)
            .field("kind", &self.kind())
            .finish()
    }
}

impl Trajectory {
    pub fn new(sys: &MatrixSequence, pert: Option<&PerturbationModel>, m: usize, value: Vector) -> Self {
        let mut samples = BTreeMap::new();
        samples.insert(m, value.clone());
        Self {
            sys: sys.clone(),
            pert: pert.cloned(),
            anchor: (m, value),
            samples: RwLock::new(samples),
        }
    }

    pub fn kind(&self) -> TrajectoryKind {
        if self.pert.is_some() {
            TrajectoryKind::Perturbed
        } else {
            TrajectoryKind::Linear
        }
    }

    pub fn anchor(&self) -> (usize, &Vector) {
        (self.anchor.0, &self.anchor.1)
    }

    /// Value at index `k`, extending from the nearest memoized sample.
    pub fn at(&self, k: usize) -> Result<Vector> {
        if let Some(v) = self.samples.read().expect("trajectory poisoned").get(&k) {
            return Ok(v.clone());
        }
        let m = self.anchor.0;
        let (mut idx, mut v) = {
            let samples = self.samples.read().expect("trajectory poisoned");
            if k > m {
                let (i, v) = samples.range(..k).next_back().expect("anchor is cached");
                (*i, v.clone())
            } else {
                let (i, v) = samples.range(k..).next().expect("anchor is cached");
                (*i, v.clone())
            }
        };
        let mut fresh = Vec::new();
        while idx != k {
            if idx < k {
                v = forward_step(&self.sys, self.pert.as_ref(), idx, &v);
                idx += 1;
            } else {
                idx -= 1;
                v = match &self.pert {
                    Some(p) => backward_step(&self.sys, p, idx, &v, backward_tol(v.norm()))?,
                    None => &self.sys.step(idx).a_inv * &v,
                };
            }
            fresh.push((idx, v.clone()));
        }
        let mut samples = self.samples.write().expect("trajectory poisoned");
        for (i, val) in fresh {
            samples.entry(i).or_insert(val);
        }
        Ok(v)
    }
}

/// Trajectory through `(m, v0)` with the indices in `lo..=hi` filled.
pub fn solve_trajectory(
    sys: &MatrixSequence,
    pert: Option<&PerturbationModel>,
    m: usize,
    v0: &Vector,
    lo: usize,
    hi: usize,
) -> Result<Trajectory> {
    if v0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: v0.len(),
        });
    }
    let t = Trajectory::new(sys, pert, m, v0.clone());
    t.at(lo)?;
    t.at(hi)?;
    Ok(t)
}
