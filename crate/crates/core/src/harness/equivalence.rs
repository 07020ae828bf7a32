use super::{require_conditions, timed, RunSettings, Sampler, SuiteResult, Tracker, VerificationReport, LARGE_POINTS};
use crate::certificates::Scenario;
use crate::engine::ConjugacyEngine;
use crate::error::Result;
use crate::linalg::Vector;

const PRECONDITIONS: [&str; 6] = ["d0", "d1", "d2", "d3", "d4", "d5"];
const FLOW_TOL: f64 = 1e-10;

/// Conjugacy, boundedness, inverse-pair and flow-identity residuals of `H`
/// and `G` on seeded samples. Requires d0–d5.
pub fn run_equivalence_suite(scenario: &Scenario, settings: &RunSettings) -> Result<VerificationReport> {
    let conditions = require_conditions(scenario, settings.horizon, &PRECONDITIONS)?;
    let engine = ConjugacyEngine::new(scenario, settings.policy)?;
    let (properties, wall) = timed(settings.timings, || properties(&engine, scenario.dim(), settings));
    Ok(VerificationReport {
        scenario: scenario.id.clone(),
        policy: settings.echo(),
        conditions: Some(conditions),
        suites: vec![SuiteResult {
            name: "equivalence".into(),
            anchor: "topological equivalence: H(k,x(k)) solves the perturbed system, H − id bounded, G = H⁻¹".into(),
            properties,
            wall_time_ms: wall,
        }],
    })
}

fn properties(engine: &ConjugacyEngine, dim: usize, settings: &RunSettings) -> Vec<super::PropertyResult> {
    let tol = settings.policy.fp_tol;
    let p = engine.p();
    let sys = engine.system();
    let pert = engine.perturbation();
    let mut rng = Sampler::new(settings.seed, dim, engine);

    let mut conj = Tracker::new("conjugacy_residual", 10.0 * tol);
    let mut bound_h = Tracker::new("bounded_h", p + tol);
    let mut bound_g = Tracker::new("bounded_g", p + tol);
    let mut g_of_h = Tracker::new("inverse_g_of_h", 10.0 * tol);
    let mut h_of_g = Tracker::new("inverse_h_of_g", 10.0 * tol);
    let mut alt = Tracker::new("g_alternate", 20.0 * tol);
    let mut flow_x = Tracker::new("flow_identity_linear", FLOW_TOL);
    let mut flow_z = Tracker::new("flow_identity_z", 10.0 * tol);

    for _ in 0..settings.samples {
        let xi = rng.point();
        let k = rng.index();

        // H(k+1, x(k+1)) = A(k)H(k,x(k)) + f(k, H(k,x(k)))
        let step = (|| {
            let x_next = &sys.step(k).a * &xi;
            let hk = engine.map_h(k, &xi)?;
            let hk1 = engine.map_h(k + 1, &x_next)?;
            Ok::<_, crate::Error>((&hk1 - &sys.step(k).a * &hk - pert.eval(k, &hk)).norm())
        })();
        match step {
            Ok(r) => conj.record(Some(k), &xi, r),
            Err(e) => conj.record_error(Some(k), &xi, &e),
        }

        match engine.map_h(k, &xi) {
            Ok(h) => {
                bound_h.record(Some(k), &xi, (&h - &xi).norm());
                match engine.map_g(k, &h) {
                    Ok(back) => g_of_h.record(Some(k), &xi, (back - &xi).norm()),
                    Err(e) => g_of_h.record_error(Some(k), &xi, &e),
                }
            }
            Err(e) => {
                bound_h.record_error(Some(k), &xi, &e);
                g_of_h.record_error(Some(k), &xi, &e);
            }
        }

        let eta = rng.point();
        let kg = rng.index();
        match engine.map_g(kg, &eta) {
            Ok(g) => {
                bound_g.record(Some(kg), &eta, (&g - &eta).norm());
                match engine.map_h(kg, &g) {
                    Ok(back) => h_of_g.record(Some(kg), &eta, (back - &eta).norm()),
                    Err(e) => h_of_g.record_error(Some(kg), &eta, &e),
                }
                match engine.map_g_alternate(kg, &eta) {
                    Ok(a) => alt.record(Some(kg), &eta, (a - &g).norm()),
                    Err(e) => alt.record_error(Some(kg), &eta, &e),
                }
            }
            Err(e) => {
                bound_g.record_error(Some(kg), &eta, &e);
                h_of_g.record_error(Some(kg), &eta, &e);
                alt.record_error(Some(kg), &eta, &e);
            }
        }

        // x(k,m,ξ) = x(k,p,x(p,m,ξ)) and z*(k;(m,ξ)) = z*(k;(p,x(p,m,ξ)))
        let (m, pp, kk) = (rng.index(), rng.index(), rng.index());
        let flows = (|| {
            let direct = engine.linear_orbit(m, &xi)?;
            let via = engine.linear_orbit(pp, &direct[pp])?;
            let rel = (&direct[kk] - &via[kk]).norm() / (1.0 + direct[kk].norm());
            let z1 = engine.compute_z_star(kk, m, &xi)?;
            let z2 = engine.compute_z_star(kk, pp, &direct[pp])?;
            Ok::<_, crate::Error>((rel, (z1 - z2).norm()))
        })();
        match flows {
            Ok((rx, rz)) => {
                flow_x.record(Some(kk), &xi, rx);
                flow_z.record(Some(kk), &xi, rz);
            }
            Err(e) => {
                flow_x.record_error(Some(kk), &xi, &e);
                flow_z.record_error(Some(kk), &xi, &e);
            }
        }
    }

    for _ in 0..LARGE_POINTS {
        let v: Vector = rng.large_point();
        let k = rng.index();
        match engine.map_h(k, &v) {
            Ok(h) => bound_h.record(Some(k), &v, (h - &v).norm()),
            Err(e) => bound_h.record_error(Some(k), &v, &e),
        }
        match engine.map_g(k, &v) {
            Ok(g) => bound_g.record(Some(k), &v, (g - &v).norm()),
            Err(e) => bound_g.record_error(Some(k), &v, &e),
        }
    }

    [conj, bound_h, bound_g, g_of_h, h_of_g, alt, flow_x, flow_z]
        .into_iter()
        .map(Tracker::finish)
        .collect()
}
