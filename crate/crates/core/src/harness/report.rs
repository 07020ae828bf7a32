use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::certificates::{finite, ConditionReport};
use crate::error::Error;
use crate::linalg::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub k: Option<usize>,
    pub point: Vec<f64>,
    pub residual: Option<f64>,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub outcome: Outcome,
    pub samples: usize,
    pub worst_residual: Option<f64>,
    pub tolerance: f64,
    pub counterexample: Option<Counterexample>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl PropertyResult {
    pub fn skipped(name: &str, tolerance: f64, why: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            outcome: Outcome::Skipped,
            samples: 0,
            worst_residual: None,
            tolerance,
            counterexample: None,
            note: Some(why.into()),
        }
    }

    pub fn passed(&self) -> bool {
        self.outcome != Outcome::Fail
    }
}

/// Accumulates residuals of one property over samples.
pub(crate) struct Tracker {
    name: String,
    tolerance: f64,
    samples: usize,
    worst: f64,
    worst_sample: Option<Counterexample>,
    failure: Option<Counterexample>,
    failure_residual: f64,
}

impl Tracker {
    pub fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            tolerance,
            samples: 0,
            worst: 0.0,
            worst_sample: None,
            failure: None,
            failure_residual: f64::NEG_INFINITY,
        }
    }

    pub fn record(&mut self, k: Option<usize>, point: &Vector, residual: f64) {
        self.record_with(k, point, residual, self.tolerance);
    }

    /// Records a residual checked against a per-sample tolerance.
    pub fn record_with(&mut self, k: Option<usize>, point: &Vector, residual: f64, tolerance: f64) {
        self.samples += 1;
        let ce = || Counterexample {
            k,
            point: point.iter().copied().collect(),
            residual: finite(residual),
            detail: None,
        };
        if !(residual <= self.worst) {
            self.worst = if residual.is_nan() { f64::INFINITY } else { residual };
            self.worst_sample = Some(ce());
        }
        let excess = if residual.is_nan() {
            f64::INFINITY
        } else {
            residual - tolerance
        };
        if !(residual <= tolerance) && excess > self.failure_residual {
            self.failure_residual = excess;
            let mut c = ce();
            if tolerance != self.tolerance {
                c.detail = Some(format!("tolerance at this sample {tolerance:.3e}"));
            }
            self.failure = Some(c);
        }
    }

    pub fn record_error(&mut self, k: Option<usize>, point: &Vector, err: &Error) {
        self.samples += 1;
        self.worst = f64::INFINITY;
        if self.failure_residual < f64::INFINITY {
            self.failure_residual = f64::INFINITY;
            self.failure = Some(Counterexample {
                k,
                point: point.iter().copied().collect(),
                residual: None,
                detail: Some(err.to_string()),
            });
        }
    }

    pub fn finish(self) -> PropertyResult {
        let failed = self.failure.is_some();
        PropertyResult {
            name: self.name,
            outcome: if failed { Outcome::Fail } else { Outcome::Pass },
            samples: self.samples,
            worst_residual: finite(self.worst),
            tolerance: self.tolerance,
            counterexample: if failed { self.failure } else { None },
            note: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    /// Statement the suite exercises.
    pub anchor: String,
    pub properties: Vec<PropertyResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_ms: Option<f64>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEcho {
    pub series_horizon: usize,
    pub fp_tol: f64,
    pub fd_step: f64,
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub scenario: String,
    pub policy: PolicyEcho,
    pub conditions: Option<ConditionReport>,
    pub suites: Vec<SuiteResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }

    /// 0 when every property passes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }

    pub fn property(&self, suite: &str, name: &str) -> Option<&PropertyResult> {
        self.suite(suite)?.property(name)
    }

    /// Appends the suites of `other`, keeping the first condition report.
    pub fn merge(mut self, other: VerificationReport) -> Self {
        if self.conditions.is_none() {
            self.conditions = other.conditions;
        }
        self.suites.extend(other.suites);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.policy;
        let _ = writeln!(
            out,
            "scenario {}  J = {}  fp_tol = {:e}  fd_step = {:e}  horizon = {}  samples = {}  seed = {}",
            self.scenario, p.series_horizon, p.fp_tol, p.fd_step, p.horizon, p.samples, p.seed
        );
        if let Some(c) = &self.conditions {
            out.push_str(&c.to_text());
        }
        let fmt_opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3e}"));
        for s in &self.suites {
            let _ = write!(out, "\n[{}] {}", s.name, s.anchor);
            if let Some(t) = s.wall_time_ms {
                let _ = write!(out, "  ({t:.1} ms)");
            }
            out.push('\n');
            for pr in &s.properties {
                let label = match pr.outcome {
                    Outcome::Pass => "pass",
                    Outcome::Fail => "FAIL",
                    Outcome::Skipped => "skip",
                };
                let _ = write!(
                    out,
                    "  {label:<5} {:<28} n={:<5} worst={:<10} tol={:.1e}",
                    pr.name,
                    pr.samples,
                    fmt_opt(pr.worst_residual),
                    pr.tolerance
                );
                if let Some(ce) = &pr.counterexample {
                    let _ = write!(out, "  counterexample k={:?} residual={}", ce.k, fmt_opt(ce.residual));
                    if let Some(d) = &ce.detail {
                        let _ = write!(out, " ({d})");
                    }
                }
                if let Some(n) = &pr.note {
                    let _ = write!(out, "  [{n}]");
                }
                out.push('\n');
            }
        }
        out
    }
}
