//! Finite-horizon checks of the dichotomy conditions.
//!
//! Each infinite sum is split into a partial sum up to the horizon plus a
//! tail. The tail is either a scenario's closed-form bound (certified) or a
//! ratio-test estimate on the last quartile of computed terms (heuristic).
//! Violations are only declared from finite data, so a violated status found
//! at one horizon persists at every larger one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{ConditionEntry, ConditionReport, ConditionStatus, TailMode, Witness};
use super::{DichotomyCertificate, Scenario, Weight};
use crate::engine::GrowthEnvelopes;
use crate::error::{Error, Result};
use crate::linalg::{identity, op_norm, Matrix, Vector};
use crate::system::{MatrixSequence, PerturbationModel};

/// Anchors `m` at which the d7 and C² series are evaluated.
pub const D7_ANCHORS: [usize; 8] = [0, 1, 2, 3, 5, 10, 20, 50];

const REL_SLACK: f64 = 1e-12;
const ABS_SLACK: f64 = 1e-14;
const HEURISTIC_RATIO: f64 = 0.99;
const D2_SEED: u64 = 0xD2;

fn within(actual: f64, bound: f64) -> bool {
    actual <= bound * (1.0 + REL_SLACK) + ABS_SLACK
}

fn satisfied(name: &str, value: f64, tail: Option<TailMode>) -> ConditionEntry {
    ConditionEntry::new(name, ConditionStatus::Satisfied, value, tail)
}

fn violated(name: &str, witness: Witness, value: f64, tail: Option<TailMode>) -> ConditionEntry {
    ConditionEntry::new(name, ConditionStatus::Violated { witness }, value, tail)
}

/// Outcome of the ratio test on a run of series terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum HeuristicTail {
    Finite(f64),
    Borderline(f64),
    Divergent(f64),
}

/// Ratio test on the last quartile of `terms`: the largest consecutive ratio
/// `ρ` must stay ≤ 0.99, and the tail is then estimated as `t_last·ρ/(1−ρ)`.
pub(crate) fn heuristic_tail(terms: &[f64]) -> HeuristicTail {
    let n = terms.len();
    if n == 0 {
        return HeuristicTail::Finite(0.0);
    }
    let start = n - (n / 4).max(2).min(n);
    let window = &terms[start..];
    let mut rho = 0.0_f64;
    for w in window.windows(2) {
        let (a, b) = (w[0].abs(), w[1].abs());
        if b == 0.0 {
            continue;
        }
        rho = rho.max(if a == 0.0 { f64::INFINITY } else { b / a });
    }
    let last = window.last().map_or(0.0, |x| x.abs());
    if last == 0.0 && rho == 0.0 {
        HeuristicTail::Finite(0.0)
    } else if rho <= HEURISTIC_RATIO {
        HeuristicTail::Finite(last * rho / (1.0 - rho))
    } else if rho < 1.0 {
        HeuristicTail::Borderline(rho)
    } else {
        HeuristicTail::Divergent(rho)
    }
}

/// Tail estimate usable inside a condition; `Ok(None)` signals borderline.
fn heuristic_or_err(series: &str, terms: &[f64]) -> Result<Option<f64>> {
    match heuristic_tail(terms) {
        HeuristicTail::Finite(t) => Ok(Some(t)),
        HeuristicTail::Borderline(_) => Ok(None),
        HeuristicTail::Divergent(ratio) => Err(Error::TailUnbounded {
            series: series.to_string(),
            ratio,
        }),
    }
}

fn certified_or_err(series: &str, t: f64) -> Result<f64> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::TailUnbounded {
            series: series.to_string(),
            ratio: f64::INFINITY,
        })
    }
}

/// (d0): `‖A(k)‖, ‖A⁻¹(k)‖ ≤ M` for `k ≤ horizon`. Returns the entry and the observed sup.
pub fn check_d0(sys: &MatrixSequence, horizon: usize) -> (ConditionEntry, f64) {
    let declared = sys.bound_m();
    let mut worst = 0.0_f64;
    let mut witness = None;
    for k in 0..=horizon {
        let st = sys.step(k);
        let v = st.norm_a.max(st.norm_a_inv);
        worst = worst.max(v);
        if witness.is_none() && !within(v, declared) {
            witness = Some(Witness::at(
                k,
                v,
                format!("max(‖A‖, ‖A⁻¹‖) = {v:.6} exceeds declared M = {declared}"),
            ));
        }
    }
    let entry = match witness {
        Some(w) => violated("d0", w, worst, None),
        None => satisfied("d0", worst, None),
    };
    (entry, worst)
}

/// Norms `‖𝒢(k, n)‖` for `k, n ∈ [0, horizon + 1]`, plus `‖Q(n)‖`.
///
/// Computed by projected one-step recursions from each `n`, which agree with
/// `Φ(k,n)P(n)` and `Φ(k,n)Q(n)` whenever the projectors are invariant.
#[derive(Clone, Debug)]
pub struct GreenTable {
    size: usize,
    norms: Vec<f64>,
    q_norms: Vec<f64>,
}

impl GreenTable {
    pub fn compute(sys: &MatrixSequence, cert: &DichotomyCertificate, horizon: usize) -> Self {
        let size = horizon + 2;
        let mut norms = vec![0.0; size * size];
        let mut q_norms = vec![0.0; size];
        for n in 0..size {
            let mut g = cert.p(n).as_ref().clone();
            norms[n * size + n] = op_norm(&g);
            for k in n..size - 1 {
                g = cert.p(k + 1).as_ref() * (&sys.step(k).a * g);
                norms[(k + 1) * size + n] = op_norm(&g);
            }
            let mut g = cert.q(n).as_ref().clone();
            q_norms[n] = op_norm(&g);
            for k in (0..n).rev() {
                g = cert.q(k).as_ref() * (&sys.step(k).a_inv * g);
                norms[k * size + n] = op_norm(&g);
            }
        }
        Self { size, norms, q_norms }
    }

    pub fn horizon(&self) -> usize {
        self.size - 2
    }

    /// `‖𝒢(k, n)‖`.
    pub fn norm(&self, k: usize, n: usize) -> f64 {
        self.norms[k * self.size + n]
    }

    /// `‖Φ(k,n)Q(n)‖` for `k ≤ n`.
    pub fn q_branch(&self, k: usize, n: usize) -> f64 {
        if k == n {
            self.q_norms[n]
        } else {
            self.norm(k, n)
        }
    }
}

fn projector_algebra(sys: &MatrixSequence, cert: &DichotomyCertificate, upto: usize) -> Option<Witness> {
    let d = cert.dim();
    let id = identity(d);
    for n in 0..=upto {
        let p = cert.p(n);
        let q = cert.q(n);
        let scale = op_norm(&p).max(1.0);
        let tol = 1e-12 * scale * scale;
        let sum_err = (p.as_ref() + q.as_ref() - &id).amax();
        if sum_err > tol {
            return Some(Witness::at(n, sum_err, "P + Q ≠ I"));
        }
        let idem = (p.as_ref() * p.as_ref() - p.as_ref()).amax();
        if idem > tol {
            return Some(Witness::at(n, idem, "P² ≠ P"));
        }
        let idem_q = (q.as_ref() * q.as_ref() - q.as_ref()).amax();
        if idem_q > tol {
            return Some(Witness::at(n, idem_q, "Q² ≠ Q"));
        }
        if n < upto {
            let a = &sys.step(n).a;
            let inv = (cert.p(n + 1).as_ref() * a - a * p.as_ref()).amax();
            if inv > 1e-10 * scale * op_norm(a).max(1.0) {
                return Some(Witness::at(n, inv, "P(n+1)A(n) ≠ A(n)P(n)"));
            }
        }
    }
    None
}

/// (d1): projector algebra, the shape of `h`, and both dichotomy inequalities
/// for all index pairs up to the horizon. Pairs are scanned by increasing
/// `max(k, n)`, so the reported witness does not depend on the horizon.
pub fn check_d1(
    sys: &MatrixSequence,
    cert: &DichotomyCertificate,
    table: &GreenTable,
) -> (ConditionEntry, Vec<String>) {
    let horizon = table.horizon();
    let mut notes = Vec::new();
    if let Some(w) = projector_algebra(sys, cert, horizon + 1) {
        return (violated("d1", w, f64::NAN, None), notes);
    }
    if (cert.h(0) - 1.0).abs() > 1e-15 {
        return (
            violated("d1", Witness::at(0, cert.h(0), "h(0) ≠ 1"), f64::NAN, None),
            notes,
        );
    }
    for n in 0..=horizon + 1 {
        let (hn, hnext) = (cert.h(n), cert.h(n + 1));
        if !(hn > 0.0) {
            return (
                violated("d1", Witness::at(n, hn, "h must stay positive"), f64::NAN, None),
                notes,
            );
        }
        if hnext > hn * (1.0 + REL_SLACK) {
            return (
                violated(
                    "d1",
                    Witness::at(n, hnext - hn, "h is not nonincreasing"),
                    f64::NAN,
                    None,
                ),
                notes,
            );
        }
    }
    if !(cert.h(horizon) < cert.h(0) / 100.0) {
        notes.push(format!(
            "h({horizon}) = {:.4e} has not decayed below h(0)/100; decay to zero is not visible on this horizon",
            cert.h(horizon)
        ));
    }
    let mut worst = 0.0_f64;
    for s in 0..=horizon {
        for other in 0..=s {
            // P-branch: k = s ≥ n = other
            let bound_p = cert.d(other) * cert.h(s) / cert.h(other);
            let actual_p = table.norm(s, other);
            worst = worst.max(ratio(actual_p, bound_p));
            if !within(actual_p, bound_p) {
                let w = Witness::at(
                    s,
                    actual_p,
                    format!("‖Φ({s},{other})P({other})‖ = {actual_p:.6e} > D(n)h(k)/h(n) = {bound_p:.6e}"),
                );
                return (violated("d1", w, worst, None), notes);
            }
            // Q-branch: k = other ≤ n = s
            let bound_q = cert.d(s) * cert.h(s) / cert.h(other);
            let actual_q = table.q_branch(other, s);
            worst = worst.max(ratio(actual_q, bound_q));
            if !within(actual_q, bound_q) {
                let w = Witness::at(
                    s,
                    actual_q,
                    format!("‖Φ({other},{s})Q({s})‖ = {actual_q:.6e} > D(n)h(n)/h(k) = {bound_q:.6e}"),
                );
                return (violated("d1", w, worst, None), notes);
            }
        }
    }
    (satisfied("d1", worst, None), notes)
}

fn ratio(actual: f64, bound: f64) -> f64 {
    if actual == 0.0 {
        0.0
    } else {
        actual / bound
    }
}

/// Sample points for the pointwise checks: a box of radius 10 plus a few
/// large-norm points.
fn sample_points(rng: &mut ChaCha8Rng, d: usize, count: usize) -> Vec<Vector> {
    let mut out: Vec<Vector> = (0..count)
        .map(|_| Vector::from_fn(d, |_, _| rng.random_range(-10.0..10.0)))
        .collect();
    for _ in 0..2 {
        let v = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        out.push(v.normalize() * 1e3);
    }
    out
}

/// (d2): Lipschitz, size and derivative envelopes on sampled points.
pub fn check_d2(pert: &PerturbationModel, horizon: usize) -> ConditionEntry {
    let d = pert.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(D2_SEED);
    let mut worst = 0.0_f64;
    for k in 0..=horizon {
        let pts = sample_points(&mut rng, d, 4);
        let (g, mu) = (pert.gamma(k), pert.mu(k));
        for (i, u) in pts.iter().enumerate() {
            let fu = pert.eval(k, u);
            let size = fu.norm();
            worst = worst.max(ratio(size, mu));
            if !within(size, mu) {
                return violated(
                    "d2",
                    Witness::at(k, size, format!("|f(k,u)| = {size:.6e} > μ(k) = {mu:.6e}")),
                    worst,
                    None,
                );
            }
            let v = &pts[(i + 1) % pts.len()];
            let lip = (&fu - pert.eval(k, v)).norm();
            let bound = g * (u - v).norm();
            worst = worst.max(ratio(lip, bound));
            if !within(lip, bound) {
                return violated(
                    "d2",
                    Witness::at(
                        k,
                        lip,
                        format!("|f(k,u) − f(k,v)| = {lip:.6e} > γ(k)|u − v| = {bound:.6e}"),
                    ),
                    worst,
                    None,
                );
            }
            if let Ok(jac) = pert.jacobian(k, u) {
                let n = op_norm(&jac);
                if n > g * (1.0 + 1e-9) + ABS_SLACK {
                    return violated(
                        "d2",
                        Witness::at(k, n, format!("‖∂f/∂u‖ = {n:.6e} > γ(k) = {g:.6e}")),
                        worst,
                        None,
                    );
                }
            }
            if let (Ok(hess), Some(g2)) = (pert.hessian(k, u), pert.gamma_s(2, k)) {
                let n = hess.norm_bound();
                if n > g2 * (1.0 + 1e-9) + ABS_SLACK {
                    return violated(
                        "d2",
                        Witness::at(k, n, format!("‖∂²f/∂u²‖ = {n:.6e} > Γ(k) = {g2:.6e}")),
                        worst,
                        None,
                    );
                }
            }
        }
    }
    satisfied("d2", worst, None)
}

struct RowSums {
    sup: f64,
    first_partial_at_least_one: Option<(usize, f64)>,
    borderline: bool,
}

fn green_rows(
    table: &GreenTable,
    cert: &DichotomyCertificate,
    w: Weight,
    weight: &dyn Fn(usize) -> f64,
    series: &str,
) -> Result<RowSums> {
    let horizon = table.horizon();
    let mut out = RowSums {
        sup: 0.0,
        first_partial_at_least_one: None,
        borderline: false,
    };
    for k in 0..=horizon / 2 {
        let terms: Vec<f64> = (0..horizon).map(|j| table.norm(k, j + 1) * weight(j)).collect();
        let partial: f64 = terms.iter().sum();
        let tail = match cert.green_tail(w, k, horizon) {
            Some(t) => certified_or_err(series, t)?,
            None => match heuristic_or_err(series, &terms[k.max(horizon * 3 / 4)..])? {
                Some(t) => t,
                None => {
                    out.borderline = true;
                    0.0
                }
            },
        };
        if partial >= 1.0 && out.first_partial_at_least_one.is_none() {
            out.first_partial_at_least_one = Some((k, partial));
        }
        out.sup = out.sup.max(partial + tail);
    }
    Ok(out)
}

/// (d3) and (d4): `sup_k Σ_j ‖𝒢(k,j+1)‖ w(j)` for `w = μ` and `w = γ`, with the
/// sup taken over rows `k ≤ horizon/2` so each row has a long partial sum.
/// Returns the two entries and `(p, q)`.
pub fn check_d3_d4(
    table: &GreenTable,
    cert: &DichotomyCertificate,
    pert: &PerturbationModel,
) -> Result<(ConditionEntry, ConditionEntry, f64, f64)> {
    let mode = Some(tail_mode(cert));
    let mu_rows = green_rows(table, cert, Weight::Mu, &|j| pert.mu(j), "d3")?;
    let gamma_rows = green_rows(table, cert, Weight::Gamma, &|j| pert.gamma(j), "d4")?;
    let d3 = if mu_rows.borderline {
        ConditionEntry::new(
            "d3",
            ConditionStatus::HorizonLimited {
                reason: "tail ratio in (0.99, 1)".into(),
            },
            mu_rows.sup,
            mode,
        )
    } else {
        satisfied("d3", mu_rows.sup, mode)
    };
    let q = gamma_rows.sup;
    let d4 = if let Some((k, partial)) = gamma_rows.first_partial_at_least_one {
        violated(
            "d4",
            Witness::at(k, partial, format!("row {k} partial sum {partial:.6} ≥ 1")),
            q,
            mode,
        )
    } else if gamma_rows.borderline {
        ConditionEntry::new(
            "d4",
            ConditionStatus::HorizonLimited {
                reason: "tail ratio in (0.99, 1)".into(),
            },
            q,
            mode,
        )
    } else if q >= 1.0 {
        ConditionEntry::new(
            "d4",
            ConditionStatus::HorizonLimited {
                reason: format!("partial sums < 1 but partial + tail bound = {q:.6} ≥ 1"),
            },
            q,
            mode,
        )
    } else {
        satisfied("d4", q, mode)
    };
    Ok((d3, d4, mu_rows.sup, q))
}

/// (d5): `‖A⁻¹(ℓ)‖γ(ℓ) < 1` for `ℓ ≤ horizon`.
pub fn check_d5(sys: &MatrixSequence, pert: &PerturbationModel, horizon: usize) -> ConditionEntry {
    let mut worst = 0.0_f64;
    for l in 0..=horizon {
        let v = sys.step(l).norm_a_inv * pert.gamma(l);
        worst = worst.max(v);
        if v >= 1.0 {
            return violated(
                "d5",
                Witness::at(l, v, format!("‖A⁻¹({l})‖γ({l}) = {v:.6} ≥ 1")),
                worst,
                None,
            );
        }
    }
    satisfied("d5", worst, None)
}

/// (d6): derivative available to order ≥ 1 and consistent with finite differences.
pub fn check_d6(pert: &PerturbationModel, horizon: usize, fd_step: f64) -> ConditionEntry {
    if pert.order() < 1 {
        return violated(
            "d6",
            Witness::note("perturbation provides no u-derivative"),
            f64::NAN,
            None,
        );
    }
    let d = pert.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(D2_SEED + 6);
    let mut worst = 0.0_f64;
    for &k in D7_ANCHORS.iter().filter(|&&k| k <= horizon) {
        for u in sample_points(&mut rng, d, 3).iter().take(3) {
            let ana = pert.jacobian(k, u).expect("order ≥ 1");
            let mut num = Matrix::zeros(d, d);
            for b in 0..d {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[b] += fd_step;
                dn[b] -= fd_step;
                let col = (pert.eval(k, &up) - pert.eval(k, &dn)) / (2.0 * fd_step);
                num.set_column(b, &col);
            }
            let err = crate::engine::fd_error(&num, &ana);
            worst = worst.max(err);
            if err > 1e-5 {
                return violated(
                    "d6",
                    Witness::at(k, err, "∂f/∂u disagrees with central differences"),
                    worst,
                    None,
                );
            }
        }
    }
    satisfied("d6", worst, None)
}

pub(crate) fn tail_mode(cert: &DichotomyCertificate) -> TailMode {
    if cert.tails().is_some() {
        TailMode::Certified
    } else {
        TailMode::Heuristic
    }
}

/// Value of `Σ_{j≥m} D(j+1)h(j+1)γ(j)Ψ_m(j)`: partial sum to the horizon plus
/// tail. `Ok(None)` when the heuristic ratio is borderline.
pub(crate) fn d7_series(
    sys: &MatrixSequence,
    cert: &DichotomyCertificate,
    pert: &PerturbationModel,
    m: usize,
    horizon: usize,
) -> Result<Option<f64>> {
    let env = GrowthEnvelopes::new(sys, pert, m, horizon);
    let terms: Vec<f64> = (m..horizon)
        .map(|j| cert.weight(j) * pert.gamma(j) * env.psi_m(j))
        .collect();
    let partial: f64 = terms.iter().sum();
    let tail = match cert.tails() {
        Some(t) => Some(scaled_tail(
            env.psi_m(horizon),
            certified_or_err("d7", (t.d7_unit)(horizon))?,
        )),
        None => heuristic_or_err("d7", &terms)?,
    };
    Ok(tail.map(|t| partial + t))
}

/// `factor·unit` with `0·∞` read as 0 (a vanishing series needs no tail).
pub(crate) fn scaled_tail(factor: f64, unit: f64) -> f64 {
    if factor == 0.0 || unit == 0.0 {
        0.0
    } else {
        factor * unit
    }
}

/// (d7) for one anchor `m`.
pub fn check_d7(
    sys: &MatrixSequence,
    cert: &DichotomyCertificate,
    pert: &PerturbationModel,
    m: usize,
    horizon: usize,
) -> Result<ConditionEntry> {
    let mode = Some(tail_mode(cert));
    Ok(match d7_series(sys, cert, pert, m, horizon)? {
        Some(v) => satisfied("d7", v, mode),
        None => ConditionEntry::new(
            "d7",
            ConditionStatus::HorizonLimited {
                reason: format!("tail ratio in (0.99, 1) at m = {m}"),
            },
            f64::NAN,
            mode,
        ),
    })
}

/// Value of the second-order series
/// `Σ_{j≥m} D(j+1)h(j+1)[π_m(j)γ(j) + Γ(j)Ψ_m(j)²]`.
pub(crate) fn c2_series(
    sys: &MatrixSequence,
    cert: &DichotomyCertificate,
    pert: &PerturbationModel,
    env: &GrowthEnvelopes,
    horizon: usize,
) -> Result<(Option<f64>, TailMode)> {
    let m = env.anchor();
    if pert.gamma_s(2, m).is_none() {
        return Err(Error::MissingEnvelope("Γ (second-derivative envelope)".into()));
    }
    if env.pi_m(m).is_none() {
        return Err(Error::MissingEnvelope("π_m".into()));
    }
    if env.upto() < horizon {
        return Err(Error::MissingEnvelope(format!(
            "envelopes end at {} before the horizon {horizon}",
            env.upto()
        )));
    }
    let _ = sys;
    let terms: Vec<f64> = (m..horizon)
        .map(|j| {
            let big_gamma = pert.gamma_s(2, j).unwrap_or(0.0);
            let pi = env.pi_m(j).unwrap_or(0.0);
            let psi = env.psi_m(j);
            cert.weight(j) * (pi * pert.gamma(j) + big_gamma * psi * psi)
        })
        .collect();
    let partial: f64 = terms.iter().sum();
    let units = cert
        .tails()
        .and_then(|t| Some((t.c2_gamma_unit.as_ref()?, t.c2_pi_unit.as_ref()?)));
    match units {
        Some((gu, pu)) => {
            let psi = env.psi_m(horizon);
            let pi = env.pi_m(horizon).unwrap_or(0.0);
            let t = scaled_tail(psi * psi, certified_or_err("c2", gu(horizon))?)
                + scaled_tail(pi, certified_or_err("c2", pu(horizon))?);
            Ok((Some(partial + t), TailMode::Certified))
        }
        None => Ok((
            heuristic_or_err("c2", &terms)?.map(|t| partial + t),
            TailMode::Heuristic,
        )),
    }
}

/// The second-order summability condition at anchor `envelopes.anchor()`.
pub fn check_c2_conditions(
    sys: &MatrixSequence,
    cert: &DichotomyCertificate,
    pert: &PerturbationModel,
    envelopes: &GrowthEnvelopes,
    horizon: usize,
) -> Result<ConditionEntry> {
    let (value, mode) = c2_series(sys, cert, pert, envelopes, horizon)?;
    Ok(match value {
        Some(v) => satisfied("c2", v, Some(mode)),
        None => ConditionEntry::new(
            "c2",
            ConditionStatus::HorizonLimited {
                reason: "tail ratio in (0.99, 1)".into(),
            },
            f64::NAN,
            Some(mode),
        ),
    })
}

fn error_entry(name: &str, e: &Error, mode: Option<TailMode>) -> ConditionEntry {
    violated(name, Witness::note(e.to_string()), f64::NAN, mode)
}

/// Folds per-anchor entries: the first non-satisfied entry wins, else the max value.
fn fold_anchors(name: &str, entries: Vec<(usize, Result<ConditionEntry>)>, mode: Option<TailMode>) -> ConditionEntry {
    let mut worst = 0.0_f64;
    for (m, e) in entries {
        match e {
            Ok(entry) => match entry.status {
                ConditionStatus::Satisfied => worst = worst.max(entry.value.unwrap_or(0.0)),
                ConditionStatus::Violated { mut witness } => {
                    witness.index = witness.index.or(Some(m));
                    return violated(name, witness, f64::NAN, entry.tail);
                }
                ConditionStatus::HorizonLimited { reason } => {
                    return ConditionEntry::new(name, ConditionStatus::HorizonLimited { reason }, f64::NAN, entry.tail)
                }
            },
            Err(err) => {
                let mut w = Witness::note(err.to_string());
                w.index = Some(m);
                return violated(name, w, f64::NAN, mode);
            }
        }
    }
    satisfied(name, worst, mode)
}

/// Runs every condition check on a scenario.
pub fn check_all(scenario: &Scenario, horizon: usize) -> ConditionReport {
    let (sys, pert, cert) = scenario.triple();
    let mode = tail_mode(cert);
    let (d0, m_obs) = check_d0(sys, horizon);
    let table = GreenTable::compute(sys, cert, horizon);
    let (d1, mut notes) = check_d1(sys, cert, &table);
    let d2 = check_d2(pert, horizon);
    let (d3, d4, p, q) = match check_d3_d4(&table, cert, pert) {
        Ok(v) => v,
        Err(e) => (
            error_entry("d3", &e, Some(mode)),
            error_entry("d4", &e, Some(mode)),
            f64::NAN,
            f64::NAN,
        ),
    };
    let d5 = check_d5(sys, pert, horizon);
    let d6 = check_d6(pert, horizon, 1e-5);
    let anchors: Vec<usize> = D7_ANCHORS.iter().copied().filter(|&m| m <= horizon / 2).collect();
    let d7 = fold_anchors(
        "d7",
        anchors
            .iter()
            .map(|&m| (m, check_d7(sys, cert, pert, m, horizon)))
            .collect(),
        Some(mode),
    );
    let mut conditions = vec![d0, d1, d2, d3, d4, d5, d6, d7];
    if pert.order() >= 2 {
        let c2 = fold_anchors(
            "c2",
            anchors
                .iter()
                .map(|&m| {
                    let env = GrowthEnvelopes::new(sys, pert, m, horizon);
                    (m, check_c2_conditions(sys, cert, pert, &env, horizon))
                })
                .collect(),
            None,
        );
        conditions.push(c2);
    }
    let p = conditions[3].status.is_satisfied().then_some(p);
    let q = conditions[4].status.is_satisfied().then_some(q);
    if mode == TailMode::Heuristic {
        notes.push("no closed-form tail bounds for this scenario; tails estimated by a ratio test".into());
    }
    ConditionReport {
        scenario: scenario.id.clone(),
        horizon,
        tail_mode: mode,
        m: m_obs,
        p,
        q,
        conditions,
        notes,
    }
}
