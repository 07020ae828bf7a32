use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// How the infinite tail of a series was bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// Closed-form bound supplied by the scenario.
    Certified,
    /// Ratio test on the last quartile of computed terms.
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub index: Option<usize>,
    pub value: Option<f64>,
    pub detail: String,
}

impl Witness {
    pub fn at(index: usize, value: f64, detail: impl Into<String>) -> Self {
        Self {
            index: Some(index),
            value: finite(value),
            detail: detail.into(),
        }
    }

    pub fn note(detail: impl Into<String>) -> Self {
        Self {
            index: None,
            value: None,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConditionStatus {
    Satisfied,
    Violated { witness: Witness },
    HorizonLimited { reason: String },
}

impl ConditionStatus {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, ConditionStatus::Satisfied)
    }

    pub fn is_violated(&self) -> bool {
        matches!(self, ConditionStatus::Violated { .. })
    }

    fn label(&self) -> &'static str {
        match self {
            ConditionStatus::Satisfied => "satisfied",
            ConditionStatus::Violated { .. } => "violated",
            ConditionStatus::HorizonLimited { .. } => "horizon-limited",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    #[serde(flatten)]
    pub status: ConditionStatus,
    /// Main computed quantity: a sup, a worst ratio, or a series value.
    pub value: Option<f64>,
    pub tail: Option<TailMode>,
}

impl ConditionEntry {
    pub fn new(name: &str, status: ConditionStatus, value: f64, tail: Option<TailMode>) -> Self {
        Self {
            name: name.to_string(),
            status,
            value: finite(value),
            tail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub scenario: String,
    pub horizon: usize,
    pub tail_mode: TailMode,
    /// Observed `sup max(‖A(k)‖, ‖A⁻¹(k)‖)`.
    pub m: f64,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub conditions: Vec<ConditionEntry>,
    pub notes: Vec<String>,
}

pub(crate) fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl ConditionReport {
    pub fn get(&self, name: &str) -> Option<&ConditionEntry> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn status(&self, name: &str) -> Option<&ConditionStatus> {
        self.get(name).map(|c| &c.status)
    }

    pub fn is_satisfied(&self, name: &str) -> bool {
        self.status(name).is_some_and(ConditionStatus::is_satisfied)
    }

    /// First condition in `names` that is not satisfied.
    pub fn first_unsatisfied<'a>(&self, names: &[&'a str]) -> Option<&'a str> {
        names.iter().copied().find(|n| !self.is_satisfied(n))
    }

    pub fn any_violated(&self) -> bool {
        self.conditions.iter().any(|c| c.status.is_violated())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {}  horizon {}  tails {:?}",
            self.scenario, self.horizon, self.tail_mode
        );
        let fmt_opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6e}"));
        let _ = writeln!(
            out,
            "M = {:.6e}  p = {}  q = {}",
            self.m,
            fmt_opt(self.p),
            fmt_opt(self.q)
        );
        let _ = writeln!(out, "{:<10} {:<16} {:<14} detail", "condition", "status", "value");
        for c in &self.conditions {
            let detail = match &c.status {
                ConditionStatus::Satisfied => String::new(),
                ConditionStatus::Violated { witness } => match witness.index {
                    Some(i) => format!("at {i}: {}", witness.detail),
                    None => witness.detail.clone(),
                },
                ConditionStatus::HorizonLimited { reason } => reason.clone(),
            };
            let _ = writeln!(
                out,
                "{:<10} {:<16} {:<14} {}",
                c.name,
                c.status.label(),
                fmt_opt(c.value),
                detail
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}
