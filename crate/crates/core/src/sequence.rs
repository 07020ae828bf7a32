//! Closed-form scalar sequences used in scenario configuration files.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::ScalarSeq;

/// A nonnegative scalar sequence given by a closed-form tag.
///
/// ```json
/// {"geometric": {"scale": 0.1, "ratio": 0.5}}
/// {"power": {"scale": 1.0, "exponent": -2.0}}
/// {"explicit": [0.0, 0.25, 0.125]}
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SeqSpec {
    /// `scale · ratio^(n + offset)`.
    Geometric {
        scale: f64,
        ratio: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `scale · max(n + offset, 1)^exponent`.
    Power {
        scale: f64,
        exponent: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Listed values, zero past the end.
    Explicit(Vec<f64>),
}

impl SeqSpec {
    pub fn value(&self, n: usize) -> f64 {
        match *self {
            SeqSpec::Geometric { scale, ratio, offset } => scale * ratio.powf(n as f64 + offset),
            SeqSpec::Power {
                scale,
                exponent,
                offset,
            } => scale * (n as f64 + offset).max(1.0).powf(exponent),
            SeqSpec::Explicit(ref v) => v.get(n).copied().unwrap_or(0.0),
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidParams(format!("sequence {name}: {why}")));
        match *self {
            SeqSpec::Geometric { scale, ratio, offset } => {
                if !(scale >= 0.0 && ratio > 0.0 && offset.is_finite()) {
                    return bad("geometric needs scale ≥ 0, ratio > 0");
                }
            }
            SeqSpec::Power {
                scale,
                exponent,
                offset,
            } => {
                if !(scale >= 0.0 && exponent.is_finite() && offset.is_finite()) {
                    return bad("power needs scale ≥ 0 and finite exponent/offset");
                }
            }
            SeqSpec::Explicit(ref v) => {
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return bad("explicit values must be finite and nonnegative");
                }
            }
        }
        Ok(())
    }

    /// Upper bound on `Σ_{n ≥ start} value(n)`, `None` when the series diverges.
    pub fn tail_sum(&self, start: usize) -> Option<f64> {
        match *self {
            SeqSpec::Geometric { scale, ratio, .. } => {
                if scale == 0.0 {
                    Some(0.0)
                } else if ratio < 1.0 {
                    Some(self.value(start) / (1.0 - ratio))
                } else {
                    None
                }
            }
            SeqSpec::Power {
                scale,
                exponent,
                offset,
            } => {
                if scale == 0.0 {
                    return Some(0.0);
                }
                if exponent >= -1.0 {
                    return None;
                }
                // terms are constant while n + offset ≤ 1, then decreasing
                let mut n = start;
                let mut acc = 0.0;
                while (n as f64 + offset) < 2.0 {
                    acc += self.value(n);
                    n += 1;
                }
                let x0 = n as f64 + offset - 1.0;
                Some(acc + scale * x0.powf(exponent + 1.0) / (-exponent - 1.0))
            }
            SeqSpec::Explicit(ref v) => Some(v.iter().skip(start).sum()),
        }
    }

    pub fn to_seq(&self) -> ScalarSeq {
        let s = self.clone();
        Arc::new(move |n| s.value(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        let g = SeqSpec::Geometric {
            scale: 2.0,
            ratio: 0.5,
            offset: 1.0,
        };
        assert_eq!(g.value(0), 1.0);
        assert_eq!(g.value(2), 0.25);
        let p = SeqSpec::Power {
            scale: 1.0,
            exponent: -2.0,
            offset: 0.0,
        };
        assert_eq!(p.value(0), 1.0);
        assert_eq!(p.value(1), 1.0);
        assert_eq!(p.value(4), 1.0 / 16.0);
        assert_eq!(SeqSpec::Explicit(vec![1.0, 2.0]).value(5), 0.0);
    }

    #[test]
    fn tail_sums_bound_brute_force() {
        let specs = [
            SeqSpec::Geometric {
                scale: 1.0,
                ratio: 0.7,
                offset: 0.0,
            },
            SeqSpec::Power {
                scale: 3.0,
                exponent: -2.5,
                offset: -1.0,
            },
            SeqSpec::Explicit(vec![0.5, 0.25, 0.125]),
        ];
        for s in &specs {
            for start in [0, 1, 5, 20] {
                let brute: f64 = (start..200_000).map(|n| s.value(n)).sum();
                let bound = s.tail_sum(start).unwrap();
                assert!(bound >= brute * (1.0 - 1e-12), "{s:?} start {start}");
                assert!(bound <= brute * 1.5 + 1e-12, "{s:?} start {start} too loose");
            }
        }
    }

    #[test]
    fn divergent_tails() {
        let p = SeqSpec::Power {
            scale: 1.0,
            exponent: -1.0,
            offset: 0.0,
        };
        assert_eq!(p.tail_sum(3), None);
        let g = SeqSpec::Geometric {
            scale: 1.0,
            ratio: 1.0,
            offset: 0.0,
        };
        assert_eq!(g.tail_sum(0), None);
    }

    #[test]
    fn json_forms() {
        let s: SeqSpec = serde_json::from_str(r#"{"geometric": {"scale": 0.1, "ratio": 0.5}}"#).unwrap();
        assert_eq!(s.value(1), 0.05);
        let e: SeqSpec = serde_json::from_str(r#"{"explicit": [0.0, 0.5]}"#).unwrap();
        assert_eq!(e, SeqSpec::Explicit(vec![0.0, 0.5]));
        assert!(serde_json::from_str::<SeqSpec>(r#"{"cubic": 1}"#).is_err());
    }
}
