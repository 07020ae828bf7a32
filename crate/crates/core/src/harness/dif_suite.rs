use std::collections::BTreeMap;

use super::{timed, Counterexample, Outcome, PropertyResult, RunSettings, SuiteResult, VerificationReport};
use crate::certificates::{
    check_c2_conditions, check_d3_d4, check_d7, ConditionEntry, GreenTable, Scenario, Variant, D7_ANCHORS,
};
use crate::dif::{evaluate_dif_condition, expand_d_power, DifExpression, DifTerm, GammaEvaluator, PiExponents};
use crate::engine::GrowthEnvelopes;
use crate::error::{Error, Result};

/// (coefficient, Γ index, π exponents).
type Row = (i64, u32, &'static [(u32, u32)]);

/// Expected expansions of `𝔻^s(Γ_0)` for `s = 1..=4`.
const GOLDEN: [&[Row]; 4] = [
    &[(1, 1, &[(1, 1)])],
    &[(1, 2, &[(1, 2)]), (1, 1, &[(2, 1)])],
    &[(1, 3, &[(1, 3)]), (3, 2, &[(1, 1), (2, 1)]), (1, 1, &[(3, 1)])],
    &[
        (1, 4, &[(1, 4)]),
        (6, 3, &[(1, 2), (2, 1)]),
        (4, 2, &[(1, 1), (3, 1)]),
        (3, 2, &[(2, 2)]),
        (1, 1, &[(4, 1)]),
    ],
];

/// The four terms listed for `s = 4` in the source expansion, with their coefficients.
const LISTED_S4: [Row; 4] = [
    (1, 4, &[(1, 4)]),
    (6, 3, &[(1, 2), (2, 1)]),
    (4, 2, &[(1, 1), (3, 1)]),
    (1, 1, &[(4, 1)]),
];

fn golden(s: usize) -> DifExpression {
    DifExpression::from_terms(
        GOLDEN[s - 1]
            .iter()
            .map(|(c, g, pi)| DifTerm::new(*c, *g, pi))
            .collect(),
    )
}

/// Number of set partitions of `{1..s}` of each block type, keyed by
/// (number of blocks, block-size multiplicities), by walking restricted
/// growth strings.
pub fn partition_type_counts(s: usize) -> BTreeMap<(u32, PiExponents), i64> {
    let mut out = BTreeMap::new();
    if s == 0 {
        out.insert((0, PiExponents::new()), 1);
        return out;
    }
    let mut a = vec![0usize; s];
    loop {
        let blocks = a.iter().copied().max().unwrap_or(0) + 1;
        let mut sizes = vec![0u32; blocks];
        for &b in &a {
            sizes[b] += 1;
        }
        let mut exps = PiExponents::new();
        for sz in sizes {
            *exps.entry(sz).or_insert(0) += 1;
        }
        *out.entry((blocks as u32, exps)).or_insert(0) += 1;
        // next restricted growth string: a[0] = 0, a[i] ≤ 1 + max(a[..i])
        let mut i = s;
        loop {
            if i == 1 {
                return out;
            }
            i -= 1;
            let prefix_max = a[..i].iter().copied().max().unwrap_or(0);
            if a[i] <= prefix_max {
                a[i] += 1;
                for x in a.iter_mut().skip(i + 1) {
                    *x = 0;
                }
                break;
            }
        }
    }
}

fn symbolic(name: &str, checks: Vec<(bool, String)>) -> PropertyResult {
    let failure = checks.iter().find(|(ok, _)| !ok).map(|(_, d)| Counterexample {
        k: None,
        point: Vec::new(),
        residual: Some(1.0),
        detail: Some(d.clone()),
    });
    PropertyResult {
        name: name.to_string(),
        outcome: if failure.is_some() {
            Outcome::Fail
        } else {
            Outcome::Pass
        },
        samples: checks.len(),
        worst_residual: Some(if failure.is_some() { 1.0 } else { 0.0 }),
        tolerance: 0.0,
        counterexample: failure,
        note: None,
    }
}

fn verdict(r: &Result<ConditionEntry>) -> &'static str {
    match r {
        Ok(e) if e.status.is_satisfied() => "satisfied",
        Ok(e) if e.status.is_violated() => "violated",
        Ok(_) => "horizon_limited",
        Err(Error::TailUnbounded { .. }) => "violated",
        Err(_) => "error",
    }
}

/// Golden expansions, set-partition counts and agreement of the symbolic
/// conditions with (d3), (d7) and the second-order check on every preset.
pub fn run_dif_suite(r: u32, settings: &RunSettings) -> Result<VerificationReport> {
    if !(1..=6).contains(&r) {
        return Err(Error::InvalidParams(format!("dif suite needs 1 ≤ r ≤ 6, got {r}")));
    }
    let (properties, wall) = timed(settings.timings, || properties(r, settings.horizon));
    Ok(VerificationReport {
        scenario: "dif".into(),
        policy: settings.echo(),
        conditions: None,
        suites: vec![SuiteResult {
            name: "dif".into(),
            anchor: "derivation 𝔻_m on ℤ[𝔖_m]; (DIF,0) ≡ d3, (DIF,1) ≡ d7".into(),
            properties: properties?,
            wall_time_ms: wall,
        }],
    })
}

fn properties(r: u32, horizon: usize) -> Result<Vec<PropertyResult>> {
    let mut out = Vec::new();
    let expansions: Vec<DifExpression> = (1..=r).map(|s| expand_d_power(s, r)).collect::<Result<_>>()?;

    let gold = (1..=(r as usize).min(4))
        .map(|s| {
            let e = &expansions[s - 1];
            (*e == golden(s), format!("s = {s}: got {e}, expected {}", golden(s)))
        })
        .collect();
    out.push(symbolic("golden_expansions", gold));

    if r >= 4 {
        let e = &expansions[3];
        let listed = LISTED_S4
            .iter()
            .map(|(c, g, pi)| {
                let got = e.coefficient_of(*g, pi);
                (
                    got == *c,
                    format!(
                        "{} has coefficient {got}, listed {c}",
                        DifExpression::from_terms(vec![DifTerm::new(1, *g, pi)])
                    ),
                )
            })
            .collect();
        out.push(symbolic("listed_terms_s4", listed));
    } else {
        out.push(PropertyResult::skipped("listed_terms_s4", 0.0, "needs r ≥ 4"));
    }

    let mut bell = Vec::new();
    let mut counts = Vec::new();
    for s in 1..=(r as usize).min(6) {
        let e = &expansions[s - 1];
        let types = partition_type_counts(s);
        let total: i64 = types.values().sum();
        bell.push((
            e.coefficient_sum() == total,
            format!("s = {s}: coefficient sum {} vs {total} partitions", e.coefficient_sum()),
        ));
        let expected = DifExpression::from_terms(
            types
                .iter()
                .map(|((g, pi), c)| DifTerm {
                    coefficient: *c,
                    gamma_index: *g,
                    pi_exponents: pi.clone(),
                })
                .collect(),
        );
        counts.push((
            *e == expected,
            format!("s = {s}: got {e}, partition counts give {expected}"),
        ));
    }
    out.push(symbolic("bell_sums", bell));
    out.push(symbolic("partition_counts", counts));

    let d1 = &expansions[0];
    let d2 = expansions.get(1);
    let mut dif1 = Vec::new();
    let mut dif0 = Vec::new();
    let mut dif2 = Vec::new();
    for v in Variant::PRESETS {
        let sc = Scenario::preset(v)?;
        let (sys, pert, cert) = sc.triple();
        let gammas = GammaEvaluator::from_perturbation(pert);
        for &m in D7_ANCHORS.iter().filter(|&&m| m <= horizon / 2) {
            let env = GrowthEnvelopes::new(sys, pert, m, horizon);
            let a = check_d7(sys, cert, pert, m, horizon);
            let b = evaluate_dif_condition("dif_1", d1, cert, &env, &gammas, horizon);
            dif1.push((
                verdict(&a) == verdict(&b),
                format!("{v} m = {m}: d7 {} vs (DIF,1) {}", verdict(&a), verdict(&b)),
            ));
            if let (Some(d2), true) = (d2, pert.order() >= 2) {
                let a = check_c2_conditions(sys, cert, pert, &env, horizon);
                let b = evaluate_dif_condition("dif_2", d2, cert, &env, &gammas, horizon);
                dif2.push((
                    verdict(&a) == verdict(&b),
                    format!("{v} m = {m}: c2 {} vs (DIF,2) {}", verdict(&a), verdict(&b)),
                ));
            }
        }
        let table = GreenTable::compute(sys, cert, horizon);
        let d3 = check_d3_d4(&table, cert, pert).map(|(d3, ..)| d3);
        let env = GrowthEnvelopes::new(sys, pert, 0, horizon);
        let seed = DifExpression::gamma0();
        let b = evaluate_dif_condition(
            "dif_0",
            &seed,
            cert,
            &env,
            &GammaEvaluator::with_mu_as_gamma0(pert),
            horizon,
        );
        dif0.push((
            verdict(&d3) == verdict(&b),
            format!("{v}: d3 {} vs (DIF,0) {}", verdict(&d3), verdict(&b)),
        ));
    }
    out.push(symbolic("dif1_matches_d7", dif1));
    out.push(symbolic("dif0_matches_d3", dif0));
    if dif2.is_empty() {
        out.push(PropertyResult::skipped("dif2_matches_c2", 0.0, "needs r ≥ 2"));
    } else {
        out.push(symbolic("dif2_matches_c2", dif2));
    }
    Ok(out)
}
