use super::{
    require_conditions, timed, PropertyResult, RunSettings, Sampler, SuiteResult, Tracker, VerificationReport,
};
use crate::certificates::{ConditionReport, Scenario};
use crate::engine::{fd_error, ConjugacyEngine, GrowthEnvelopes};
use crate::error::Result;
use crate::linalg::{identity, op_norm, Matrix, Tensor3, Vector};

const PRECONDITIONS: [&str; 8] = ["d0", "d1", "d2", "d3", "d4", "d5", "d6", "d7"];
const FD_TOL: f64 = 1e-5;
const FD2_TOL: f64 = 1e-4;
const PRODUCT_TOL: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-8;
const ENVELOPE_SLACK: f64 = 1e-9;

const SECOND_ORDER: [(&str, f64); 3] = [
    ("hessian_w_fd", FD2_TOL),
    ("hessian_g_fd", FD2_TOL),
    ("hessian_symmetry", SYMMETRY_TOL),
];

/// Finite-difference validation of the first derivatives, the inverse
/// Jacobian identity and the growth envelopes; second derivatives too when
/// the perturbation has order two and the second-order condition holds.
pub fn run_smoothness_suite(scenario: &Scenario, settings: &RunSettings) -> Result<VerificationReport> {
    let conditions = require_conditions(scenario, settings.horizon, &PRECONDITIONS)?;
    let engine = ConjugacyEngine::new(scenario, settings.policy)?;
    let second = second_order_leg(scenario, &conditions);
    let (properties, wall) = timed(settings.timings, || {
        properties(&engine, scenario.dim(), settings, &second)
    });
    Ok(VerificationReport {
        scenario: scenario.id.clone(),
        policy: settings.echo(),
        conditions: Some(conditions),
        suites: vec![SuiteResult {
            name: "smoothness".into(),
            anchor: "C¹ and C² equivalence: ∂G·∂H = I, derivatives of w* and G by variational series".into(),
            properties,
            wall_time_ms: wall,
        }],
    })
}

/// `Ok(())` when the second-order leg runs, else the reason it is skipped.
fn second_order_leg(scenario: &Scenario, conditions: &ConditionReport) -> std::result::Result<(), String> {
    if scenario.pert.order() < 2 {
        return Err("perturbation has no second derivative".into());
    }
    if !conditions.is_satisfied("c2") {
        return Err("second-order summability condition c2 is not satisfied".into());
    }
    Ok(())
}

fn central_jacobian(f: impl Fn(&Vector) -> crate::Result<Vector>, at: &Vector, step: f64) -> crate::Result<Matrix> {
    let d = at.len();
    let mut out = Matrix::zeros(d, d);
    for b in 0..d {
        let mut up = at.clone();
        let mut dn = at.clone();
        up[b] += step;
        dn[b] -= step;
        let col = (f(&up)? - f(&dn)?) / (2.0 * step);
        out.set_column(b, &col);
    }
    Ok(out)
}

/// Differences of a matrix-valued map along each coordinate, as `T[i][a][b] = ∂_b M[i][a]`.
fn central_tensor(f: impl Fn(&Vector) -> crate::Result<Matrix>, at: &Vector, step: f64) -> crate::Result<Tensor3> {
    let d = at.len();
    let mut out = Tensor3::zeros(d);
    for b in 0..d {
        let mut up = at.clone();
        let mut dn = at.clone();
        up[b] += step;
        dn[b] -= step;
        let diff = (f(&up)? - f(&dn)?) / (2.0 * step);
        for i in 0..d {
            for a in 0..d {
                out.set(i, a, b, diff[(i, a)]);
            }
        }
    }
    Ok(out)
}

fn record<T>(t: &mut Tracker, k: usize, p: &Vector, r: crate::Result<T>, residual: impl FnOnce(T) -> f64) {
    match r {
        Ok(v) => t.record(Some(k), p, residual(v)),
        Err(e) => t.record_error(Some(k), p, &e),
    }
}

fn properties(
    engine: &ConjugacyEngine,
    dim: usize,
    settings: &RunSettings,
    second: &std::result::Result<(), String>,
) -> Vec<PropertyResult> {
    let h = settings.policy.fd_step;
    let big_j = settings.policy.series_horizon;
    let sys = engine.system();
    let pert = engine.perturbation();
    let table = engine.green_table();
    let mut rng = Sampler::new(settings.seed ^ 0x5EED, dim, engine);

    let mut jw = Tracker::new("jacobian_w_fd", FD_TOL);
    let mut jg = Tracker::new("jacobian_g_fd", FD_TOL);
    let mut prod = Tracker::new("inverse_jacobian_product", PRODUCT_TOL);
    let mut var_env = Tracker::new("variational_envelope", ENVELOPE_SLACK);
    let mut lip_env = Tracker::new("lipschitz_envelope", ENVELOPE_SLACK);
    let mut dom = Tracker::new("jacobian_w_domination", ENVELOPE_SLACK);
    let mut hw = Tracker::new(SECOND_ORDER[0].0, SECOND_ORDER[0].1);
    let mut hg = Tracker::new(SECOND_ORDER[1].0, SECOND_ORDER[1].1);
    let mut sym = Tracker::new(SECOND_ORDER[2].0, SECOND_ORDER[2].1);
    let run_second = second.is_ok();

    for _ in 0..settings.samples {
        let eta = rng.point();
        let m = rng.index();
        let k = rng.index();

        let ana_w = engine.jacobian_w_star(m, &eta);
        let num_w = central_jacobian(|v| engine.compute_w_star(0, m, v), &eta, h);
        match (&ana_w, &num_w) {
            (Ok(a), Ok(n)) => jw.record(Some(m), &eta, fd_error(n, a)),
            (Err(e), _) | (_, Err(e)) => jw.record_error(Some(m), &eta, e),
        }

        let ana_g = engine.jacobian_g(k, &eta);
        let num_g = central_jacobian(|v| engine.map_g(k, v), &eta, h);
        match (&ana_g, &num_g) {
            (Ok(a), Ok(n)) => jg.record(Some(k), &eta, fd_error(n, a)),
            (Err(e), _) | (_, Err(e)) => jg.record_error(Some(k), &eta, e),
        }

        let xi = rng.point();
        let pr = (|| {
            let hx = engine.map_h(k, &xi)?;
            let jh = engine.jacobian_h(k, &xi)?;
            Ok((engine.jacobian_g(k, &hx)? * jh - identity(dim)).amax())
        })();
        record(&mut prod, k, &xi, pr, |r| r);

        // ‖∂y/∂η(j)‖ ≤ 𝒜_m(j) and |y(j,η) − y(j,η̃)| ≤ 𝒜_m(j)|η − η̃|
        let env = GrowthEnvelopes::new(sys, pert, m, big_j);
        record(&mut var_env, m, &eta, engine.variational(m, &eta), |z| {
            (0..=big_j)
                .map(|j| excess(op_norm(&z[j]), env.a_m(j)))
                .fold(0.0, f64::max)
        });
        let other = rng.point();
        let lip = (|| Ok((engine.perturbed_orbit(m, &eta)?, engine.perturbed_orbit(m, &other)?)))();
        let gap = (&eta - &other).norm();
        record(&mut lip_env, m, &eta, lip, |(y1, y2)| {
            (0..=big_j)
                .map(|j| excess((&y1[j] - &y2[j]).norm(), env.a_m(j) * gap))
                .fold(0.0, f64::max)
        });
        // columns of ∂w*(0;(m,η)) are dominated by Σ_j ‖𝒢(0,j+1)‖γ(j)𝒜_m(j)
        let bound: f64 = (0..big_j)
            .map(|j| {
                let t = table.norm(0, j + 1) * pert.gamma(j);
                if t == 0.0 {
                    0.0
                } else {
                    t * env.a_m(j)
                }
            })
            .sum();
        record(&mut dom, m, &eta, ana_w, |a| {
            (0..dim).map(|b| excess(a.column(b).norm(), bound)).fold(0.0, f64::max)
        });

        if run_second {
            let ana = engine.hessian_w_star(m, &eta);
            let num = central_tensor(|v| engine.jacobian_w_star(m, v), &eta, h);
            match (&ana, &num) {
                (Ok(a), Ok(n)) => hw.record(Some(m), &eta, fd_error(n.flat(), a.flat())),
                (Err(e), _) | (_, Err(e)) => hw.record_error(Some(m), &eta, e),
            }
            record(&mut sym, m, &eta, ana, |a| a.asymmetry());
            let ana = engine.hessian_g(k, &eta);
            let num = central_tensor(|v| engine.jacobian_g(k, v), &eta, h);
            match (&ana, &num) {
                (Ok(a), Ok(n)) => hg.record(Some(k), &eta, fd_error(n.flat(), a.flat())),
                (Err(e), _) | (_, Err(e)) => hg.record_error(Some(k), &eta, e),
            }
            if let Ok(a) = &ana {
                sym.record(Some(k), &eta, a.asymmetry());
            }
        }
    }

    let mut out: Vec<PropertyResult> = [jw, jg, prod, var_env, lip_env, dom]
        .into_iter()
        .map(Tracker::finish)
        .collect();
    match second {
        Ok(()) => out.extend([hw, hg, sym].into_iter().map(Tracker::finish)),
        Err(why) => out.extend(
            SECOND_ORDER
                .iter()
                .map(|(name, tol)| PropertyResult::skipped(name, *tol, why.clone())),
        ),
    }
    out
}

/// Relative amount by which `actual` exceeds `bound` (0 when within).
fn excess(actual: f64, bound: f64) -> f64 {
    if actual <= bound * (1.0 + 1e-12) {
        0.0
    } else {
        (actual - bound) / bound.max(f64::MIN_POSITIVE)
    }
}
