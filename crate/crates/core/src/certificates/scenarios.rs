//! Scenario presets: each builds a linear system, a perturbation and a
//! dichotomy certificate whose tail bounds are closed forms for that family.
//!
//! Every preset perturbation has the form `f(k, u) = γ(k)·S·tanh(u)` with `S`
//! orthogonal and `tanh` applied componentwise. Then `Lip f(k,·) = γ(k)`,
//! `|f(k,u)| ≤ √d·γ(k)` and the second-derivative bound used by the checks is
//! `√d·(4/(3√3))·γ(k)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DichotomyCertificate, TailBounds, TailFn};
use crate::error::{Error, Result};
use crate::linalg::{identity, op_norm, orthonormalize, plane_rotation, Matrix, Tensor3, Vector};
use crate::sequence::SeqSpec;
use crate::system::{IndexedCache, MatrixSequence, PerturbationModel, ScalarSeq};

const PRESET_DIM: usize = 3;
/// `sup |tanh''|`.
const TANH2_MAX: f64 = 0.769_800_358_919_501_2;
const VALIDATION_SPAN: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cor175,
    Cor176,
    Ex187,
    Ex188,
    Ex189,
    C2Corollary,
    Custom,
}

impl Variant {
    pub const PRESETS: [Variant; 6] = [
        Variant::Cor175,
        Variant::Cor176,
        Variant::Ex187,
        Variant::Ex188,
        Variant::Ex189,
        Variant::C2Corollary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cor175 => "cor175",
            Variant::Cor176 => "cor176",
            Variant::Ex187 => "ex187",
            Variant::Ex188 => "ex188",
            Variant::Ex189 => "ex189",
            Variant::C2Corollary => "c2_corollary",
            Variant::Custom => "custom",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Variant::Cor175 => "classical exponential dichotomy, constant γ and μ",
            Variant::Cor176 => "nonuniform exponential dichotomy, exponentially decaying γ",
            Variant::Ex187 => "diagonal 3×3, c_n = 1 + 1/n², r_n = 2^(-n-1), γ_n = r_n c_n/(1 + Σ r)",
            Variant::Ex188 => "diagonal 3×3, c_n ≡ 1, r_n = 2^(-n-1), γ_n = r_n/(1 + Σ r)",
            Variant::Ex189 => "similarity-transformed diagonal 3×3, random orthogonal E(n), γ_n = 4^(-n)",
            Variant::C2Corollary => "nonuniform dichotomy with second-derivative envelope, M²e^(-λ) < 1",
            Variant::Custom => "constant coefficient matrix and projector from a config file",
        }
    }

    fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            Variant::Cor175 => &[("theta", 0.1), ("M", 2.0), ("gamma", 0.4), ("D", 1.0)],
            Variant::Cor176 => &[
                ("C", 1.0),
                ("lambda", 1.0),
                ("epsilon", 0.2),
                ("nu", 0.05),
                ("kappa", 1.0),
                ("tau", 0.0),
            ],
            Variant::C2Corollary => &[
                ("C", 1.0),
                ("M", 1.2),
                ("lambda", 0.5),
                ("epsilon", 0.35),
                ("nu", 0.05),
                ("tau", 0.35),
                ("zeta", 0.07),
            ],
            Variant::Ex187 => &[("a", 0.5), ("b", 0.8), ("alpha", 0.25), ("M", 2.0)],
            Variant::Ex188 => &[("a", 0.5), ("b", 0.8), ("alpha", 0.5), ("M", 1.0)],
            Variant::Ex189 => &[("a", 0.5), ("b", 0.8), ("c", 1.25), ("delta", 0.5)],
            Variant::Custom => &[("D", 1.0)],
        }
    }

    /// Keys accepted besides the defaults (their defaults depend on other keys).
    fn derived_keys(self) -> &'static [&'static str] {
        match self {
            Variant::Cor175 => &["mu"],
            Variant::Cor176 => &["M", "zeta"],
            Variant::C2Corollary => &["kappa"],
            Variant::Custom => &["M"],
            _ => &[],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = match s.to_ascii_lowercase().as_str() {
            "cor175" => Variant::Cor175,
            "cor176" => Variant::Cor176,
            "ex187" => Variant::Ex187,
            "ex188" => Variant::Ex188,
            "ex189" => Variant::Ex189,
            "c2" | "c2_corollary" | "c2corollary" => Variant::C2Corollary,
            "custom" => Variant::Custom,
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?} (expected one of cor175, cor176, ex187, ex188, ex189, c2_corollary)"
                )))
            }
        };
        Ok(v)
    }
}

/// Scenario configuration. Unlisted constants take the variant defaults;
/// `gamma_scale` (default 1) multiplies the perturbation and all its envelopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub variant: Variant,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub sequences: BTreeMap<String, SeqSpec>,
    #[serde(default)]
    pub matrices: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ScenarioParams {
    pub fn preset(variant: Variant) -> Self {
        Self {
            variant,
            constants: BTreeMap::new(),
            sequences: BTreeMap::new(),
            matrices: BTreeMap::new(),
            seed: None,
        }
    }

    pub fn with_constant(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.to_string(), value);
        self
    }

    fn resolved(&self) -> Result<Consts> {
        let defaults = self.variant.defaults();
        let mut map: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        map.insert("gamma_scale".into(), 1.0);
        for (k, v) in &self.constants {
            let known = map.contains_key(k) || self.variant.derived_keys().contains(&k.as_str());
            if !known {
                return Err(Error::InvalidParams(format!(
                    "unknown constant {k:?} for {}",
                    self.variant
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("constant {k} is not finite")));
            }
            map.insert(k.clone(), *v);
        }
        Ok(Consts(map))
    }
}

struct Consts(BTreeMap<String, f64>);

impl Consts {
    fn get(&self, k: &str) -> f64 {
        self.0[k]
    }

    fn get_or(&self, k: &str, default: f64) -> f64 {
        self.0.get(k).copied().unwrap_or(default)
    }
}

/// A fully built scenario.
#[derive(Clone)]
pub struct Scenario {
    pub id: String,
    pub params: ScenarioParams,
    pub sys: MatrixSequence,
    pub pert: PerturbationModel,
    pub cert: DichotomyCertificate,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario").field("id", &self.id).finish()
    }
}

impl Scenario {
    pub fn preset(variant: Variant) -> Result<Self> {
        make_scenario(&ScenarioParams::preset(variant))
    }

    pub fn triple(&self) -> (&MatrixSequence, &PerturbationModel, &DichotomyCertificate) {
        (&self.sys, &self.pert, &self.cert)
    }

    pub fn dim(&self) -> usize {
        self.sys.dim()
    }

    /// Same linear part and certificate with `f ≡ 0`.
    pub fn without_perturbation(&self) -> Self {
        Self {
            id: format!("{}+zero", self.id),
            params: self.params.clone(),
            sys: self.sys.clone(),
            pert: PerturbationModel::zero(self.dim()),
            cert: self.cert.clone().with_tails(Some(TailBounds::zero())),
        }
    }
}

/// Builds the scenario after validating the variant's parameter constraints.
pub fn make_scenario(params: &ScenarioParams) -> Result<Scenario> {
    build(params, true)
}

/// Builds the scenario without the parameter constraints, so the condition
/// checks can report what fails on deliberately broken inputs.
pub fn make_scenario_unchecked(params: &ScenarioParams) -> Result<Scenario> {
    build(params, false)
}

fn build(params: &ScenarioParams, validate: bool) -> Result<Scenario> {
    let c = params.resolved()?;
    if c.get("gamma_scale") < 0.0 {
        return Err(Error::InvalidParams("gamma_scale must be ≥ 0".into()));
    }
    if params.variant != Variant::Custom && !(params.sequences.is_empty() && params.matrices.is_empty()) {
        return Err(Error::InvalidParams(format!(
            "{} takes constants only; sequences and matrices are for custom scenarios",
            params.variant
        )));
    }
    let (sys, pert, cert) = match params.variant {
        Variant::Cor175 => cor175(&c, validate)?,
        Variant::Cor176 => exponential(&c, false, validate)?,
        Variant::C2Corollary => exponential(&c, true, validate)?,
        Variant::Ex187 | Variant::Ex188 => diagonal_example(params.variant, &c, validate)?,
        Variant::Ex189 => ex189(&c, params.seed.unwrap_or(7), validate)?,
        Variant::Custom => custom(params, &c)?,
    };
    Ok(Scenario {
        id: params.variant.name().to_string(),
        params: params.clone(),
        sys,
        pert,
        cert,
    })
}

type Triple = (MatrixSequence, PerturbationModel, DichotomyCertificate);

fn invalid(what: impl Into<String>) -> Error {
    Error::InvalidParams(what.into())
}

fn require(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(invalid(what))
    }
}

/// Fixed orthogonal mixing matrix of the preset nonlinearity.
pub(crate) fn mixing_matrix(d: usize) -> Matrix {
    if d < 2 {
        return identity(d);
    }
    let mut s = plane_rotation(d, 0, 1, 0.9);
    if d > 2 {
        s = plane_rotation(d, 0, 2, 0.5) * s;
    }
    s
}

/// Time-varying rotation used to make the uniform presets genuinely nonautonomous.
fn rotation(d: usize, k: usize) -> Matrix {
    let t = k as f64;
    let mut r = plane_rotation(d, 0, 1, 0.3 + 0.7 * t);
    if d > 2 {
        r = plane_rotation(d, 1, 2, 0.2 + 0.4 * t) * r;
    }
    r
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}

/// `f(k,u) = γ(k)·S·tanh(u)` with the given envelopes.
pub(crate) fn tanh_perturbation(s: Matrix, gamma: ScalarSeq, mu: ScalarSeq, gamma_2: ScalarSeq) -> PerturbationModel {
    let d = s.nrows();
    let (s1, s2, s3) = (s.clone(), s.clone(), s);
    let (g1, g2, g3) = (Arc::clone(&gamma), Arc::clone(&gamma), Arc::clone(&gamma));
    PerturbationModel::new(d, Arc::new(move |k, u| &s1 * u.map(f64::tanh) * g1(k)), gamma, mu)
        .with_jacobian(Arc::new(move |k, u| {
            let diag = Matrix::from_diagonal(&u.map(sech2));
            &s2 * diag * g2(k)
        }))
        .with_hessian(
            Arc::new(move |k, u: &Vector| {
                let g = g3(k);
                let mut t = Tensor3::zeros(d);
                for a in 0..d {
                    let second = -2.0 * u[a].tanh() * sech2(u[a]) * g;
                    for i in 0..d {
                        t.set(i, a, a, s3[(i, a)] * second);
                    }
                }
                t
            }),
            gamma_2,
        )
}

fn scaled(seq: impl Fn(usize) -> f64 + Send + Sync + 'static) -> ScalarSeq {
    Arc::new(seq)
}

fn tail(f: impl Fn(usize) -> f64 + Send + Sync + 'static) -> TailFn {
    Arc::new(f)
}

/// `x / (1 − ρ)` when `ρ < 1`, else `+∞`.
fn geometric_sum(x: f64, rho: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if rho < 1.0 {
        x / (1.0 - rho)
    } else {
        f64::INFINITY
    }
}

fn cor175(c: &Consts, validate: bool) -> Result<Triple> {
    let d = PRESET_DIM;
    let theta = c.get("theta");
    let m = c.get("M");
    let gamma0 = c.get("gamma");
    let dd = c.get("D");
    let s = c.get("gamma_scale");
    let mu0 = c.get_or("mu", (d as f64).sqrt() * gamma0);
    let g = gamma0 * s;
    if validate {
        require(theta > 0.0 && theta < 1.0, "Cor175: θ must lie in (0,1)")?;
        require(m >= 1.0, "Cor175: M must be ≥ 1")?;
        require(
            dd > 0.0 && gamma0 > 0.0 && mu0 > 0.0,
            "Cor175: D, γ, μ must be positive",
        )?;
        require(m * g < 1.0, "Cor175: Mγ < 1 violated")?;
        require(dd * g / (1.0 - theta) < 1.0, "Cor175: Dγ/(1−θ) < 1 violated")?;
        require(theta * (m + g) < 1.0, "Cor175: θ(M+γ) < 1 violated")?;
    } else {
        require(theta > 0.0 && theta < 1.0, "Cor175: θ must lie in (0,1)")?;
    }
    // P ≡ I: the only dichotomy compatible with h(n) = θⁿ here
    let sys = MatrixSequence::new(
        d,
        Arc::new(move |k| rotation(d, k) * theta),
        Some(Arc::new(move |k| rotation(d, k).transpose() / theta)),
        m,
    );
    let mu = mu0 * s;
    let gam2 = g * (d as f64).sqrt() * TANH2_MAX;
    let pert = tanh_perturbation(
        mixing_matrix(d),
        scaled(move |_| g),
        scaled(move |_| mu),
        scaled(move |_| gam2),
    );
    let a_sup = theta;
    let dh = move |big_j: usize| dd * theta.powi(big_j as i32 + 1);
    let tails = TailBounds {
        mu: tail(move |j| geometric_sum(mu * dh(j), theta)),
        gamma: tail(move |j| geometric_sum(g * dh(j), theta)),
        d7_unit: tail(move |j| geometric_sum(g * dh(j), theta * (a_sup + g))),
        c2_gamma_unit: Some(tail(move |j| geometric_sum(gam2 * dh(j), theta * (a_sup + g).powi(2)))),
        c2_pi_unit: Some(tail(move |j| geometric_sum(g * dh(j), theta * gam2))),
    };
    let cert = DichotomyCertificate::constant(
        identity(d),
        scaled(move |_| dd),
        scaled(move |n| theta.powi(n as i32)),
        Some(tails),
    );
    Ok((sys, pert, cert))
}

/// Cor176 and the C² corollary: `A(k) = e^{λ−ε}R(k)` with `Q ≡ I`.
fn exponential(c: &Consts, second_order: bool, validate: bool) -> Result<Triple> {
    let d = PRESET_DIM;
    let cc = c.get("C");
    let lambda = c.get("lambda");
    let eps = c.get("epsilon");
    let nu = c.get("nu");
    let tau = c.get("tau");
    let s = c.get("gamma_scale");
    let growth = (lambda - eps).exp();
    let m = c.get_or("M", growth);
    let kappa = c.get_or("kappa", nu * (d as f64).sqrt());
    let zeta = c.get_or("zeta", nu * (d as f64).sqrt() * TANH2_MAX);
    let name = if second_order { "C2Corollary" } else { "Cor176" };
    require(
        lambda > 0.0 && eps > 0.0 && cc > 0.0,
        &format!("{name}: C, λ, ε must be positive"),
    )?;
    if validate {
        require(
            nu > 0.0 && kappa > 0.0 && zeta > 0.0,
            &format!("{name}: ν, κ, ζ must be positive"),
        )?;
        require(tau > eps - lambda, &format!("{name}: τ > ε − λ violated"))?;
        require(m * (-lambda).exp() < 1.0, &format!("{name}: M·e^(−λ) < 1 violated"))?;
        if second_order {
            require(m * m * (-lambda).exp() < 1.0, "C2Corollary: M²·e^(−λ) < 1 violated")?;
        }
    }
    let sys = MatrixSequence::new(
        d,
        Arc::new(move |k| rotation(d, k) * growth),
        Some(Arc::new(move |k| rotation(d, k).transpose() / growth)),
        m,
    );
    let gamma = move |k: usize| nu * s * (-eps * (k as f64 + 1.0)).exp();
    let mu = move |k: usize| kappa * s * (-tau * (k as f64 + 1.0)).exp();
    let big_gamma = move |k: usize| zeta * s * (-eps * (k as f64 + 1.0)).exp();
    let pert = tanh_perturbation(mixing_matrix(d), scaled(gamma), scaled(mu), scaled(big_gamma));
    let el = (-lambda).exp();
    let base = move |j: usize| cc * (-lambda * (j as f64 + 1.0)).exp();
    let tails = TailBounds {
        mu: tail(move |j| {
            let r = (eps - lambda - tau).exp();
            geometric_sum(cc * kappa * s * ((eps - lambda - tau) * (j as f64 + 1.0)).exp(), r)
        }),
        gamma: tail(move |j| geometric_sum(nu * s * base(j), el)),
        d7_unit: tail(move |j| geometric_sum(nu * s * base(j), el * (growth + gamma(j)))),
        c2_gamma_unit: Some(tail(move |j| {
            geometric_sum(zeta * s * base(j), el * (growth + gamma(j)).powi(2))
        })),
        c2_pi_unit: Some(tail(move |j| geometric_sum(nu * s * base(j), el * big_gamma(j)))),
    };
    let cert = DichotomyCertificate::constant(
        Matrix::zeros(d, d),
        scaled(move |n| cc * (eps * n as f64).exp()),
        scaled(move |n| (-lambda * n as f64).exp()),
        Some(tails),
    );
    Ok((sys, pert, cert))
}

/// `h(n) = ∏_{p=1}^{n-1} c_p⁻¹`, memoized.
fn product_h(cfun: Arc<dyn Fn(usize) -> f64 + Send + Sync>) -> ScalarSeq {
    let cache = Arc::new(IndexedCache::new(Arc::new(move |n: usize| {
        (1..n).fold(1.0, |acc, p| acc / cfun(p))
    })));
    Arc::new(move |n| *cache.get(n))
}

/// Geometric envelope `γ_j ≤ g0·ρ^j` plus `sup_{p>J} c_p`, used by the
/// closed-form tails of the diagonal examples.
struct DiagonalTailData {
    g0: f64,
    rho: f64,
    c_sup_after: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
}

fn diagonal_tails(
    data: DiagonalTailData,
    h: ScalarSeq,
    cfun: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    gamma: ScalarSeq,
    d: usize,
) -> TailBounds {
    let DiagonalTailData { g0, rho, c_sup_after } = data;
    let k2 = (d as f64).sqrt() * TANH2_MAX;
    let sqrt_d = (d as f64).sqrt();
    let gt = move |j: usize| geometric_sum(g0 * rho.powi(j as i32), rho);
    let (h1, h2, h3, h4, h5) = (
        Arc::clone(&h),
        Arc::clone(&h),
        Arc::clone(&h),
        Arc::clone(&h),
        Arc::clone(&h),
    );
    let (c1, c2) = (Arc::clone(&cfun), Arc::clone(&cfun));
    let (ga1, ga2, ga3) = (Arc::clone(&gamma), Arc::clone(&gamma), Arc::clone(&gamma));
    TailBounds {
        mu: tail(move |j| h1(j + 1) * sqrt_d * gt(j)),
        gamma: tail(move |j| h2(j + 1) * gt(j)),
        d7_unit: tail(move |j| {
            let lead = (c1(j) + ga1(j)).max(1.0);
            h3(j + 1) * lead * gt(j + 1).exp() * gt(j)
        }),
        c2_gamma_unit: Some(tail(move |j| {
            let lead = (c2(j) + ga2(j)).powi(2).max(1.0);
            let x = c_sup_after(j) * (1.0 + ga2(j + 1).max(ga2(j))).powi(2);
            let inner = 1.0 + geometric_sum(rho, rho * x);
            h4(j + 1) * lead * k2 * g0 * rho.powi(j as i32) * inner
        })),
        c2_pi_unit: Some(tail(move |j| {
            h5(j + 1) * geometric_sum(g0 * rho.powi(j as i32), rho * k2 * ga3(j))
        })),
    }
}

fn diagonal_example(variant: Variant, c: &Consts, validate: bool) -> Result<Triple> {
    let d = PRESET_DIM;
    let a_scale = c.get("a");
    let b_scale = c.get("b");
    let alpha = c.get("alpha");
    let m = c.get("M");
    let s = c.get("gamma_scale");
    let is187 = variant == Variant::Ex187;
    let cfun: Arc<dyn Fn(usize) -> f64 + Send + Sync> = if is187 {
        Arc::new(|n| if n == 0 { 1.0 } else { 1.0 + 1.0 / (n * n) as f64 })
    } else {
        Arc::new(|_| 1.0)
    };
    let r = |n: usize| if n == 0 { 0.0 } else { 0.5_f64.powi(n as i32 + 1) };
    // γ_n = r_n c_n^σ / (1 + r_1 + ⋯ + r_{n−1}), σ = 1 for Ex187 and 0 for Ex188
    let cg = Arc::clone(&cfun);
    let gamma_cache = Arc::new(IndexedCache::new(Arc::new(move |n: usize| {
        if n == 0 {
            return 0.0;
        }
        let partial: f64 = 1.0 + (1..n).map(r).sum::<f64>();
        let cn = if is187 { cg(n) } else { 1.0 };
        r(n) * cn / partial
    })));
    let gamma: ScalarSeq = Arc::new(move |n| gamma_cache.get(n).as_ref() * s);
    if validate {
        let name = variant.name();
        require(alpha > 0.0, &format!("{name}: α must be positive"))?;
        for n in 0..VALIDATION_SPAN {
            let cn = cfun(n);
            let (an, bn) = (a_scale / cn, b_scale / cn);
            require(
                alpha <= an.min(bn) && an.max(bn) <= 1.0 / cn + 1e-15 && 1.0 / cn <= 1.0 && cn <= m + 1e-15,
                &format!("{name}: 0 < α ≤ a_n, b_n ≤ c_n⁻¹ ≤ 1 ≤ c_n ≤ M violated at n = {n}"),
            )?;
        }
        let r_norm = 0.5;
        if is187 {
            let mut worst = 0.0_f64;
            for k in 2..VALIDATION_SPAN {
                let partial: f64 = 1.0 + (1..k - 1).map(r).sum::<f64>();
                worst = worst.max(cfun(k - 1) * r(k - 1) / partial + r_norm - r(k - 1));
            }
            require(
                worst < 1.0,
                "Ex187: sup_k c_{k−1}r_{k−1}/(1+⋯) + Σ_{j≠k−1} r_j < 1 violated",
            )?;
        } else {
            require(r_norm < 1.0, "Ex188: ‖r‖₁ < 1 violated")?;
        }
    }
    let (ca, cinv) = (Arc::clone(&cfun), Arc::clone(&cfun));
    let sys = MatrixSequence::new(
        d,
        Arc::new(move |n| {
            let cn = ca(n);
            Matrix::from_diagonal(&Vector::from_vec(vec![a_scale / cn, b_scale / cn, cn]))
        }),
        Some(Arc::new(move |n| {
            let cn = cinv(n);
            Matrix::from_diagonal(&Vector::from_vec(vec![cn / a_scale, cn / b_scale, 1.0 / cn]))
        })),
        m.max(1.0 / alpha),
    );
    let sqrt_d = (d as f64).sqrt();
    let (g1, g2) = (Arc::clone(&gamma), Arc::clone(&gamma));
    let pert = tanh_perturbation(
        mixing_matrix(d),
        Arc::clone(&gamma),
        scaled(move |k| sqrt_d * g1(k)),
        scaled(move |k| sqrt_d * TANH2_MAX * g2(k)),
    );
    let h = product_h(Arc::clone(&cfun));
    let data = if is187 {
        DiagonalTailData {
            g0: s,
            rho: 0.5,
            c_sup_after: Arc::new(|j| 1.0 + 1.0 / ((j + 1) * (j + 1)) as f64),
        }
    } else {
        DiagonalTailData {
            g0: 0.5 * s,
            rho: 0.5,
            c_sup_after: Arc::new(|_| 1.0),
        }
    };
    let tails = diagonal_tails(data, Arc::clone(&h), cfun, Arc::clone(&gamma), d);
    let cert = DichotomyCertificate::constant(
        Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.0, 0.0])),
        scaled(|_| 1.0),
        h,
        Some(tails),
    );
    Ok((sys, pert, cert))
}

/// Random orthogonal `E(n)` for `n ≥ 1`; `E(0) = I`. Seeded per index, so the
/// value does not depend on evaluation order.
pub(crate) fn random_orthogonal(d: usize, seed: u64, n: usize) -> Matrix {
    if n == 0 {
        return identity(d);
    }
    let mix = seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(mix);
    let m = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    orthonormalize(&m)
}

fn ex189(c: &Consts, seed: u64, validate: bool) -> Result<Triple> {
    let d = PRESET_DIM;
    let a = c.get("a");
    let b = c.get("b");
    let cc = c.get("c");
    let delta = c.get("delta");
    let s = c.get("gamma_scale");
    // E(n) orthogonal: ℰ⁺ = ℰ⁻ = 1
    let e_plus = 1.0;
    let e_minus = 1.0;
    let gamma = move |n: usize| if n == 0 { 0.0 } else { s * 0.25_f64.powi(n as i32) };
    if validate {
        require(
            a > 0.0 && b > 0.0 && a.max(b) <= 1.0 / cc && cc >= 1.0,
            "Ex189: 0 < a_n, b_n ≤ c_n⁻¹ ≤ 1 ≤ c_n violated",
        )?;
        require(delta > 0.0, "Ex189: δ must be positive")?;
        let gamma_l1 = s / 3.0;
        require(e_minus * e_plus * gamma_l1 < 1.0, "Ex189: ℰ⁻ℰ⁺‖γ‖₁ < 1 violated")?;
        // Σ γ_j (ℰ⁻ℰ⁺ + δ)^j is geometric with ratio (ℰ⁻ℰ⁺ + δ)/4
        require(
            s == 0.0 || (e_minus * e_plus + delta) * 0.25 < 1.0,
            "Ex189: Σ γ_j (ℰ⁻ℰ⁺ + δ)^j < ∞ violated",
        )?;
    }
    let diag = move |_n: usize| Matrix::from_diagonal(&Vector::from_vec(vec![a, b, cc]));
    let diag_inv = move |_n: usize| Matrix::from_diagonal(&Vector::from_vec(vec![1.0 / a, 1.0 / b, 1.0 / cc]));
    let e = move |n: usize| random_orthogonal(d, seed, n);
    // E(n − 1) with E(−1) = I
    let e_prev = move |n: usize| if n == 0 { identity(d) } else { e(n - 1) };
    let sys = MatrixSequence::new(
        d,
        Arc::new(move |n| e(n).transpose() * diag(n) * e_prev(n)),
        Some(Arc::new(move |n| e_prev(n).transpose() * diag_inv(n) * e(n))),
        (cc * e_minus * e_plus).max(e_minus * e_plus / a.min(b)),
    );
    let sqrt_d = (d as f64).sqrt();
    let pert = tanh_perturbation(
        mixing_matrix(d),
        scaled(gamma),
        scaled(move |k| sqrt_d * gamma(k)),
        scaled(move |k| sqrt_d * TANH2_MAX * gamma(k)),
    );
    let cfun: Arc<dyn Fn(usize) -> f64 + Send + Sync> = Arc::new(move |_| cc);
    let h = product_h(Arc::clone(&cfun));
    let tails = diagonal_tails(
        DiagonalTailData {
            g0: s,
            rho: 0.25,
            c_sup_after: Arc::new(move |_| cc),
        },
        Arc::clone(&h),
        cfun,
        scaled(gamma),
        d,
    );
    let p = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.0, 0.0]));
    let cert = DichotomyCertificate::new(
        d,
        Arc::new(move |n| {
            let en = e_prev(n);
            en.transpose() * &p * en
        }),
        scaled(move |_| e_minus),
        h,
        Some(tails),
    );
    Ok((sys, pert, cert))
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(format!("matrix {name} must be square and nonempty")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid(format!("matrix {name} has non-finite entries")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn custom(params: &ScenarioParams, c: &Consts) -> Result<Triple> {
    for key in params.matrices.keys() {
        if key != "A" && key != "P" {
            return Err(invalid(format!("unknown matrix {key:?} (expected A, P)")));
        }
    }
    for key in params.sequences.keys() {
        if !matches!(key.as_str(), "h" | "gamma" | "mu") {
            return Err(invalid(format!("unknown sequence {key:?} (expected h, gamma, mu)")));
        }
    }
    let a = matrix_from_rows(
        "A",
        params
            .matrices
            .get("A")
            .ok_or_else(|| invalid("custom scenario needs matrix A"))?,
    )?;
    let d = a.nrows();
    let a_inv = a.clone().try_inverse().ok_or_else(|| invalid("matrix A is singular"))?;
    let p = match params.matrices.get("P") {
        Some(rows) => matrix_from_rows("P", rows)?,
        None => identity(d),
    };
    if p.nrows() != d {
        return Err(invalid("matrices A and P differ in size"));
    }
    let seq = |name: &str| -> Result<&SeqSpec> {
        let spec = params
            .sequences
            .get(name)
            .ok_or_else(|| invalid(format!("custom scenario needs sequence {name}")))?;
        spec.validate(name)?;
        Ok(spec)
    };
    let h = seq("h")?.to_seq();
    let gamma_spec = seq("gamma")?.clone();
    let s = c.get("gamma_scale");
    let sqrt_d = (d as f64).sqrt();
    let mu: ScalarSeq = match params.sequences.get("mu") {
        Some(spec) => {
            spec.validate("mu")?;
            let spec = spec.clone();
            Arc::new(move |k| s * spec.value(k))
        }
        None => {
            let g = gamma_spec.clone();
            Arc::new(move |k| s * sqrt_d * g.value(k))
        }
    };
    let (g1, g2) = (gamma_spec.clone(), gamma_spec);
    let m = c.get_or("M", op_norm(&a).max(op_norm(&a_inv)));
    let dd = c.get("D");
    let sys = MatrixSequence::constant(a, m);
    let pert = tanh_perturbation(
        identity(d),
        Arc::new(move |k| s * g1.value(k)),
        mu,
        Arc::new(move |k| s * sqrt_d * TANH2_MAX * g2.value(k)),
    );
    let cert = DichotomyCertificate::constant(p, Arc::new(move |_| dd), h, None);
    Ok((sys, pert, cert))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh2_constant() {
        let x = (1.0_f64 / 3.0).sqrt().atanh();
        let v = (2.0 * x.tanh() * sech2(x)).abs();
        assert!((v - TANH2_MAX).abs() < 1e-15);
        assert!((TANH2_MAX - 4.0 / (3.0 * 3.0_f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn presets_build() {
        for v in Variant::PRESETS {
            let sc = Scenario::preset(v).unwrap();
            assert_eq!(sc.dim(), 3, "{v}");
            let a = sc.sys.coeff(4);
            let ai = sc.sys.inv_coeff(4);
            assert!((a * ai - identity(3)).amax() < 1e-12, "{v}");
        }
    }

    #[test]
    fn unknown_constant_rejected() {
        let p = ScenarioParams::preset(Variant::Cor175).with_constant("lambda", 1.0);
        assert!(matches!(make_scenario(&p), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn invalid_constraints_named() {
        let p = ScenarioParams::preset(Variant::Cor175).with_constant("gamma", 0.9);
        match make_scenario(&p) {
            Err(Error::InvalidParams(msg)) => assert!(msg.contains("Mγ < 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(make_scenario_unchecked(&p).is_ok());
        let p = ScenarioParams::preset(Variant::Cor176).with_constant("tau", -2.0);
        assert!(make_scenario(&p).is_err());
    }

    #[test]
    fn ex187_gamma_identity() {
        // γ_j = r_j c_j ∏_{p<j} c_p/(γ_p + c_p)
        let sc = Scenario::preset(Variant::Ex187).unwrap();
        let c = |n: usize| 1.0 + 1.0 / (n * n) as f64;
        for j in 1..60 {
            let r = 0.5_f64.powi(j as i32 + 1);
            let prod: f64 = (1..j).map(|p| c(p) / (sc.pert.gamma(p) + c(p))).product();
            assert!((sc.pert.gamma(j) - r * c(j) * prod).abs() < 1e-12, "j = {j}");
        }
    }

    #[test]
    fn ex189_identity_similarity_is_diagonal() {
        let e = random_orthogonal(3, 11, 5);
        assert!((e.transpose() * &e - identity(3)).amax() < 1e-14);
        assert_eq!(random_orthogonal(3, 11, 5), e);
        assert_eq!(random_orthogonal(3, 11, 0), identity(3));
    }

    #[test]
    fn params_round_trip_json() {
        let p = ScenarioParams::preset(Variant::Ex189).with_constant("delta", 0.25);
        let s = serde_json::to_string(&p).unwrap();
        let back: ScenarioParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(s.contains("\"ex189\""));
    }

    #[test]
    fn custom_requires_matrix() {
        let p = ScenarioParams::preset(Variant::Custom);
        assert!(matches!(make_scenario(&p), Err(Error::InvalidParams(_))));
    }
}
