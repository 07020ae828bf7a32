//! Named property suites over a scenario, with machine-readable reports.
//!
//! Sample points are drawn from a seeded generator on the box `[−10, 10]^d`;
//! boundedness checks add ten points of norm `10³`. Sample indices stay in
//! `[0, 8]` because `G(k,η) = Φ(k,0)[…]` amplifies rounding by
//! `‖Φ(k,0)‖‖Φ(0,k)‖`, which grows geometrically when rates are mixed.

mod dif_suite;
mod equivalence;
mod report;
mod smoothness;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certificates::{check_all, ConditionReport, Scenario};
use crate::engine::{ConjugacyEngine, TruncationPolicy};
use crate::error::{Error, Result};
use crate::linalg::Vector;

pub use dif_suite::{partition_type_counts, run_dif_suite};
pub use equivalence::run_equivalence_suite;
pub use report::{Counterexample, Outcome, PolicyEcho, PropertyResult, SuiteResult, VerificationReport};
pub use smoothness::run_smoothness_suite;

pub(crate) use report::Tracker;

/// Default horizon for condition checks.
pub const DEFAULT_HORIZON: usize = 200;
/// Largest sampled time index.
pub const SAMPLE_INDEX_MAX: usize = 8;

const BOX: f64 = 10.0;
const LARGE_NORM: f64 = 1e3;
const LARGE_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSettings {
    pub policy: TruncationPolicy,
    /// Horizon for the condition checks.
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    /// Record wall time per suite (makes reports non-reproducible).
    pub timings: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            policy: TruncationPolicy::default(),
            horizon: DEFAULT_HORIZON,
            samples: 100,
            seed: 42,
            timings: false,
        }
    }
}

impl RunSettings {
    pub(crate) fn echo(&self) -> PolicyEcho {
        PolicyEcho {
            series_horizon: self.policy.series_horizon,
            fp_tol: self.policy.fp_tol,
            fd_step: self.policy.fd_step,
            horizon: self.horizon,
            samples: self.samples,
            seed: self.seed,
        }
    }
}

pub(crate) struct Sampler {
    rng: ChaCha8Rng,
    dim: usize,
    max_index: usize,
}

impl Sampler {
    pub fn new(seed: u64, dim: usize, engine: &ConjugacyEngine) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dim,
            max_index: SAMPLE_INDEX_MAX.min(engine.max_index().saturating_sub(1)),
        }
    }

    pub fn point(&mut self) -> Vector {
        let d = self.dim;
        Vector::from_fn(d, |_, _| self.rng.random_range(-BOX..BOX))
    }

    pub fn large_point(&mut self) -> Vector {
        let d = self.dim;
        let v = Vector::from_fn(d, |_, _| self.rng.random_range(-1.0..1.0));
        v.normalize() * LARGE_NORM
    }

    pub fn index(&mut self) -> usize {
        self.rng.random_range(0..=self.max_index)
    }
}

/// Runs the condition checks and fails with the first unsatisfied name.
pub(crate) fn require_conditions(scenario: &Scenario, horizon: usize, names: &[&str]) -> Result<ConditionReport> {
    let report = check_all(scenario, horizon);
    match report.first_unsatisfied(names) {
        Some(name) => Err(Error::PreconditionFailed {
            condition: name.to_string(),
        }),
        None => Ok(report),
    }
}

pub(crate) fn timed<T>(enabled: bool, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = Instant::now();
    let out = f();
    (out, enabled.then(|| start.elapsed().as_secs_f64() * 1e3))
}

/// Every suite on one scenario, merged into one report.
pub fn run_all(scenario: &Scenario, settings: &RunSettings, r: u32) -> Result<VerificationReport> {
    let eq = run_equivalence_suite(scenario, settings)?;
    let sm = run_smoothness_suite(scenario, settings)?;
    let mut dif = run_dif_suite(r, settings)?;
    dif.scenario = scenario.id.clone();
    Ok(eq.merge(sm).merge(dif))
}
