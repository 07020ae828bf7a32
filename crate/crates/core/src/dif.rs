//! Symbolic derivation on monomials `Γ_s·∏_k π_{k,m}^{e_k}` with integer
//! coefficients, and numeric evaluation of the summability conditions
//! `Σ_{j≥m} D(j+1)h(j+1)·𝔻_m^s(Γ_0)(j) < ∞`.
//!
//! The derivation acts by `𝔻(Γ_s) = Γ_{s+1}π_1`, `𝔻(π_k) = π_{k+1}` and the
//! Leibniz rule. Orders are capped by a declared `r`; exceeding it is an
//! error rather than a silent extension.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::certificates::{
    heuristic_tail, scaled_tail, ConditionEntry, ConditionStatus, DichotomyCertificate, HeuristicTail, TailMode,
};
use crate::engine::GrowthEnvelopes;
use crate::error::{Error, Result};
use crate::system::{PerturbationModel, ScalarSeq};

/// Exponents `k ↦ e_k` of a π-monomial; only nonzero exponents are stored.
pub type PiExponents = BTreeMap<u32, u32>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifTerm {
    pub coefficient: i64,
    pub gamma_index: u32,
    pub pi_exponents: PiExponents,
}

impl DifTerm {
    pub fn new(coefficient: i64, gamma_index: u32, pi: &[(u32, u32)]) -> Self {
        Self {
            coefficient,
            gamma_index,
            pi_exponents: pi.iter().copied().filter(|&(_, e)| e > 0).collect(),
        }
    }

    /// Total π-degree weighted by order, `Σ k·e_k`.
    pub fn weight(&self) -> u32 {
        self.pi_exponents.iter().map(|(k, e)| k * e).sum()
    }
}

fn exponent_vector(e: &PiExponents) -> Vec<u32> {
    let top = e.keys().next_back().copied().unwrap_or(0);
    (1..=top).map(|k| e.get(&k).copied().unwrap_or(0)).collect()
}

/// Descending `s`, then descending exponent vector `(e_1, e_2, …)`.
fn term_order(a: &(u32, PiExponents), b: &(u32, PiExponents)) -> Ordering {
    b.0.cmp(&a.0)
        .then_with(|| exponent_vector(&b.1).cmp(&exponent_vector(&a.1)))
}

fn pi_product(a: &PiExponents, b: &PiExponents) -> PiExponents {
    let mut out = a.clone();
    for (k, e) in b {
        *out.entry(*k).or_insert(0) += e;
    }
    out
}

/// `𝔻` of a π-monomial: `Σ_k e_k·π_k^{e_k−1}π_{k+1}·(rest)`.
fn derive_pi(e: &PiExponents, r: u32) -> Result<Vec<(i64, PiExponents)>> {
    let mut out = Vec::new();
    for (&k, &ek) in e {
        if k + 1 > r {
            return Err(Error::OrderOverflow { needed: k + 1, r });
        }
        let mut next = e.clone();
        if ek == 1 {
            next.remove(&k);
        } else {
            next.insert(k, ek - 1);
        }
        *next.entry(k + 1).or_insert(0) += 1;
        out.push((ek as i64, next));
    }
    Ok(out)
}

/// An element of the free module on the monomials, in canonical form.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DifExpression {
    terms: Vec<DifTerm>,
}

impl DifExpression {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The seed `Γ_0`.
    pub fn gamma0() -> Self {
        Self::from_terms(vec![DifTerm::new(1, 0, &[])])
    }

    pub fn from_terms(terms: Vec<DifTerm>) -> Self {
        let mut merged: Vec<((u32, PiExponents), i64)> = Vec::new();
        for t in terms {
            let key = (
                t.gamma_index,
                t.pi_exponents
                    .into_iter()
                    .filter(|&(_, e)| e > 0)
                    .collect::<PiExponents>(),
            );
            match merged.iter_mut().find(|(k, _)| *k == key) {
                Some((_, c)) => *c += t.coefficient,
                None => merged.push((key, t.coefficient)),
            }
        }
        merged.retain(|(_, c)| *c != 0);
        merged.sort_by(|a, b| term_order(&a.0, &b.0));
        Self {
            terms: merged
                .into_iter()
                .map(|((s, pi), c)| DifTerm {
                    coefficient: c,
                    gamma_index: s,
                    pi_exponents: pi,
                })
                .collect(),
        }
    }

    pub fn terms(&self) -> &[DifTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn canonicalize(&self) -> Self {
        Self::from_terms(self.terms.clone())
    }

    pub fn coefficients(&self) -> Vec<i64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    pub fn coefficient_sum(&self) -> i64 {
        self.terms.iter().map(|t| t.coefficient).sum()
    }

    /// Coefficient of `Γ_s·∏π_k^{e_k}` (zero if absent).
    pub fn coefficient_of(&self, gamma_index: u32, pi: &[(u32, u32)]) -> i64 {
        let probe = DifTerm::new(1, gamma_index, pi);
        self.terms
            .iter()
            .find(|t| t.gamma_index == probe.gamma_index && t.pi_exponents == probe.pi_exponents)
            .map_or(0, |t| t.coefficient)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms.iter().chain(&other.terms).cloned().collect())
    }

    /// Product with a Γ-free polynomial.
    pub fn mul_pi(&self, p: &PiPolynomial) -> Self {
        let mut out = Vec::new();
        for t in &self.terms {
            for (c, e) in &p.terms {
                out.push(DifTerm {
                    coefficient: t.coefficient * c,
                    gamma_index: t.gamma_index,
                    pi_exponents: pi_product(&t.pi_exponents, e),
                });
            }
        }
        Self::from_terms(out)
    }

    /// Largest Γ or π order appearing.
    pub fn max_order(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| {
                t.gamma_index
                    .max(t.pi_exponents.keys().next_back().copied().unwrap_or(0))
            })
            .max()
            .unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("expressions serialize")
    }
}

/// `𝔻_m` applied term by term; orders above `r` are an error.
pub fn apply_d(expr: &DifExpression, r: u32) -> Result<DifExpression> {
    let mut out = Vec::new();
    for t in &expr.terms {
        let s = t.gamma_index;
        if s + 1 > r {
            return Err(Error::OrderOverflow { needed: s + 1, r });
        }
        if r < 1 {
            return Err(Error::OrderOverflow { needed: 1, r });
        }
        let mut pi = t.pi_exponents.clone();
        *pi.entry(1).or_insert(0) += 1;
        out.push(DifTerm {
            coefficient: t.coefficient,
            gamma_index: s + 1,
            pi_exponents: pi,
        });
        for (c, e) in derive_pi(&t.pi_exponents, r)? {
            out.push(DifTerm {
                coefficient: t.coefficient * c,
                gamma_index: s,
                pi_exponents: e,
            });
        }
    }
    Ok(DifExpression::from_terms(out))
}

/// `𝔻_m^s(Γ_0)`.
pub fn expand_d_power(s: u32, r: u32) -> Result<DifExpression> {
    if s > r {
        return Err(Error::OrderOverflow { needed: s, r });
    }
    let mut e = DifExpression::gamma0();
    for _ in 0..s {
        e = apply_d(&e, r)?;
    }
    Ok(e)
}

/// Γ-free polynomial in the `π_k`, used to state the Leibniz rule.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PiPolynomial {
    terms: Vec<(i64, PiExponents)>,
}

impl PiPolynomial {
    pub fn from_terms(terms: Vec<(i64, PiExponents)>) -> Self {
        let mut merged: Vec<(i64, PiExponents)> = Vec::new();
        for (c, e) in terms {
            let e: PiExponents = e.into_iter().filter(|&(_, x)| x > 0).collect();
            match merged.iter_mut().find(|(_, k)| *k == e) {
                Some((acc, _)) => *acc += c,
                None => merged.push((c, e)),
            }
        }
        merged.retain(|(c, _)| *c != 0);
        merged.sort_by_key(|t| std::cmp::Reverse(exponent_vector(&t.1)));
        Self { terms: merged }
    }

    pub fn terms(&self) -> &[(i64, PiExponents)] {
        &self.terms
    }

    pub fn apply_d(&self, r: u32) -> Result<Self> {
        let mut out = Vec::new();
        for (c, e) in &self.terms {
            for (k, d) in derive_pi(e, r)? {
                out.push((c * k, d));
            }
        }
        Ok(Self::from_terms(out))
    }
}

const SUBSCRIPTS: [char; 10] = ['₀', '₁', '₂', '₃', '₄', '₅', '₆', '₇', '₈', '₉'];
const SUPERSCRIPTS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];

fn digits(n: u32, table: &[char; 10]) -> String {
    n.to_string()
        .chars()
        .map(|c| table[c.to_digit(10).expect("decimal") as usize])
        .collect()
}

fn monomial(t: &DifTerm) -> String {
    let mut parts = vec![format!("Γ_{}", t.gamma_index)];
    for (&k, &e) in t.pi_exponents.iter().rev() {
        let mut p = format!("π{}", digits(k, &SUBSCRIPTS));
        if e > 1 {
            p.push_str(&digits(e, &SUPERSCRIPTS));
        }
        parts.push(p);
    }
    parts.join("·")
}

impl fmt::Display for DifExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let c = t.coefficient;
            match (i, c < 0) {
                (0, true) => write!(f, "−")?,
                (0, false) => {}
                (_, true) => write!(f, " − ")?,
                (_, false) => write!(f, " + ")?,
            }
            if c.abs() != 1 {
                write!(f, "{}·", c.abs())?;
            }
            write!(f, "{}", monomial(t))?;
        }
        Ok(())
    }
}

/// Numeric values of the `Γ_s`. `Γ_0` has no value unless bound explicitly.
#[derive(Clone)]
pub struct GammaEvaluator {
    pert: PerturbationModel,
    gamma0: Option<ScalarSeq>,
    gamma0_is_mu: bool,
}

impl GammaEvaluator {
    /// `Γ_s` from the perturbation's envelopes, `Γ_0` unbound.
    pub fn from_perturbation(pert: &PerturbationModel) -> Self {
        Self {
            pert: pert.clone(),
            gamma0: None,
            gamma0_is_mu: false,
        }
    }

    /// Additionally binds `Γ_0 ↦ μ`.
    pub fn with_mu_as_gamma0(pert: &PerturbationModel) -> Self {
        Self {
            pert: pert.clone(),
            gamma0: Some(pert.mu_seq()),
            gamma0_is_mu: true,
        }
    }

    pub fn with_gamma0(mut self, seq: ScalarSeq) -> Self {
        self.gamma0 = Some(seq);
        self.gamma0_is_mu = false;
        self
    }

    pub fn value(&self, s: u32, j: usize) -> Option<f64> {
        match s {
            0 => self.gamma0.as_ref().map(|g| g(j)),
            _ => self.pert.gamma_s(s as usize, j),
        }
    }
}

fn term_value(t: &DifTerm, gammas: &GammaEvaluator, env: &GrowthEnvelopes, j: usize) -> Result<f64> {
    let g = gammas
        .value(t.gamma_index, j)
        .ok_or_else(|| Error::MissingEnvelope(format!("Γ_{}", t.gamma_index)))?;
    let mut v = t.coefficient as f64 * g;
    for (&k, &e) in &t.pi_exponents {
        let p = env
            .pi_s_m(k, j)
            .ok_or_else(|| Error::MissingEnvelope(format!("π_{k},m")))?;
        v *= p.powi(e as i32);
    }
    Ok(v)
}

/// Certified tail of one term beyond `horizon`, when a closed form applies.
fn certified_term_tail(
    t: &DifTerm,
    cert: &DichotomyCertificate,
    gammas: &GammaEvaluator,
    env: &GrowthEnvelopes,
    horizon: usize,
) -> Option<f64> {
    let tails = cert.tails()?;
    let c = t.coefficient.unsigned_abs() as f64;
    let pis: Vec<(u32, u32)> = t.pi_exponents.iter().map(|(k, e)| (*k, *e)).collect();
    let unit_value = match (t.gamma_index, pis.as_slice()) {
        (0, []) if gammas.gamma0_is_mu => (tails.mu)(horizon),
        (1, [(1, 1)]) => scaled_tail(env.psi_m(horizon), (tails.d7_unit)(horizon)),
        (2, [(1, 2)]) => {
            let psi = env.psi_m(horizon);
            scaled_tail(psi * psi, (tails.c2_gamma_unit.as_ref()?)(horizon))
        }
        (1, [(2, 1)]) => scaled_tail(env.pi_m(horizon)?, (tails.c2_pi_unit.as_ref()?)(horizon)),
        _ => return None,
    };
    Some(scaled_tail(c, unit_value))
}

/// `Σ_{j≥m} D(j+1)h(j+1)·expr(j)`: partial sum up to the horizon plus a
/// certified tail when every term has one, else a ratio-test estimate.
pub fn evaluate_dif_condition(
    name: &str,
    expr: &DifExpression,
    cert: &DichotomyCertificate,
    envelopes: &GrowthEnvelopes,
    gammas: &GammaEvaluator,
    horizon: usize,
) -> Result<ConditionEntry> {
    let m = envelopes.anchor();
    if envelopes.upto() < horizon {
        return Err(Error::MissingEnvelope(format!(
            "envelopes end at {} before the horizon {horizon}",
            envelopes.upto()
        )));
    }
    let mut terms = Vec::with_capacity(horizon.saturating_sub(m));
    for j in m..horizon {
        let mut v = 0.0;
        for t in expr.terms() {
            v += term_value(t, gammas, envelopes, j)?;
        }
        terms.push(scaled_tail(cert.weight(j), v));
    }
    let partial: f64 = terms.iter().sum();
    let certified: Option<f64> = expr
        .terms()
        .iter()
        .map(|t| certified_term_tail(t, cert, gammas, envelopes, horizon))
        .sum();
    let (tail, mode) = match certified {
        Some(t) if t.is_finite() => (Some(t), TailMode::Certified),
        Some(_) => {
            return Err(Error::TailUnbounded {
                series: name.to_string(),
                ratio: f64::INFINITY,
            })
        }
        None => match heuristic_tail(&terms) {
            HeuristicTail::Finite(t) => (Some(t), TailMode::Heuristic),
            HeuristicTail::Borderline(_) => (None, TailMode::Heuristic),
            HeuristicTail::Divergent(ratio) => {
                return Err(Error::TailUnbounded {
                    series: name.to_string(),
                    ratio,
                })
            }
        },
    };
    Ok(match tail {
        Some(t) => ConditionEntry::new(name, ConditionStatus::Satisfied, partial + t, Some(mode)),
        None => ConditionEntry::new(
            name,
            ConditionStatus::HorizonLimited {
                reason: "tail ratio in (0.99, 1)".into(),
            },
            partial,
            Some(mode),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_rules() {
        let d1 = apply_d(&DifExpression::gamma0(), 4).unwrap();
        assert_eq!(d1.to_string(), "Γ_1·π₁");
        let d2 = apply_d(&d1, 4).unwrap();
        assert_eq!(d2.to_string(), "Γ_2·π₁² + Γ_1·π₂");
        assert!(apply_d(&DifExpression::zero(), 4).unwrap().is_zero());
    }

    #[test]
    fn third_power_prints_in_order() {
        let e = expand_d_power(3, 3).unwrap();
        assert_eq!(e.to_string(), "Γ_3·π₁³ + 3·Γ_2·π₂·π₁ + Γ_1·π₃");
        assert_eq!(e.coefficients(), vec![1, 3, 1]);
    }

    #[test]
    fn overflow_is_reported() {
        assert_eq!(expand_d_power(7, 6), Err(Error::OrderOverflow { needed: 7, r: 6 }));
        let e = expand_d_power(2, 2).unwrap();
        assert!(matches!(apply_d(&e, 2), Err(Error::OrderOverflow { .. })));
    }

    #[test]
    fn json_round_trip() {
        let e = expand_d_power(4, 4).unwrap();
        let back: DifExpression = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(back, e);
        assert_eq!(e.canonicalize(), e);
    }

    #[test]
    fn negative_coefficients_print() {
        let e = DifExpression::from_terms(vec![DifTerm::new(-2, 1, &[(1, 1)]), DifTerm::new(1, 2, &[])]);
        assert_eq!(e.to_string(), "Γ_2 − 2·Γ_1·π₁");
    }
}
