//! Bounds on how far the truncated maps and derivatives at horizon `J` can
//! lie from their infinite-series values.
//!
//! * `H`: the smallest solution `ē` of `ē = T + Kē`, with `T(k)` the dropped
//!   (d3) tail of row `k` and `K(k,j) = ‖𝒢(k,j+1)‖γ(j)`, plus `fp_tol`.
//! * `G`: the dropped tail `T(k)` (the series is summed directly).
//! * `∂w*`, `∂G`: `‖∂y/∂η(j)‖ ≤ Ψ_m(j)` for `j ≥ m`, so the dropped part of
//!   row `k` is at most `Ψ_m(J)/h(k)` times the (d7) tail unit.
//! * `∂²w*`, `∂²G`: `‖∂²y/∂η²(j)‖ ≤ Ψ_m(j)σ_m(j)` with
//!   `σ_m(j) = Σ_{i=m}^{j-1} Γ(i)Ψ_m(i)/(‖A(i)‖+γ(i))`; the dropped part is at
//!   most `Ψ_m(J)σ̄·u₇(J) + Ψ_m(J)²·u_Γ(J)` with `σ̄ = σ_m(2J)`.
//! * `∂H`: perturbation of a matrix inverse, including the shift of the base
//!   point `H(k,ξ)` through `‖∂²G‖`.
//!
//! Each bound also carries a rounding allowance `64·ε·J·(1 + scale)`.

use serde::{Deserialize, Serialize};

use super::ConjugacyEngine;
use crate::certificates::{heuristic_tail, scaled_tail, HeuristicTail, TailMode};
use crate::engine::GrowthEnvelopes;
use crate::error::Result;
use crate::linalg::{op_norm, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationBounds {
    pub mode: TailMode,
    pub map_h: f64,
    pub map_g: f64,
    pub jacobian_w: f64,
    pub jacobian_g: f64,
    pub jacobian_h: f64,
    pub hessian_w: Option<f64>,
    pub hessian_g: Option<f64>,
}

fn finite_or_inf(t: HeuristicTail) -> f64 {
    match t {
        HeuristicTail::Finite(x) => x,
        _ => f64::INFINITY,
    }
}

struct DerivTails {
    jacobian: f64,
    hessian: Option<f64>,
}

impl ConjugacyEngine {
    fn rounding(&self, scale: f64) -> f64 {
        64.0 * f64::EPSILON * self.policy.series_horizon as f64 * (1.0 + scale)
    }

    /// Dropped parts of the `∂w*(row;(m,·))` and `∂²w*(row;(m,·))` series.
    fn derivative_tails(&self, m: usize, row: usize) -> Result<DerivTails> {
        let big_j = self.policy.series_horizon;
        let env = GrowthEnvelopes::new(&self.sys, &self.pert, m, 2 * big_j);
        let psi_j = env.psi_m(big_j);
        let second = self.pert.order() >= 2 && self.pert.gamma_s(2, m).is_some();
        let sigma = |upto: usize| -> f64 {
            (m..upto)
                .map(|i| {
                    let g2 = self.pert.gamma_s(2, i).unwrap_or(0.0);
                    let growth = self.sys.step(i).norm_a + self.pert.gamma(i);
                    scaled_tail(g2, env.psi_m(i) / growth)
                })
                .sum()
        };
        let sigma_bar = if second { sigma(2 * big_j) } else { 0.0 };
        let tails = self.cert.tails();
        let h_row = self.cert.h(row);
        let jacobian = match tails {
            Some(t) => scaled_tail(psi_j, (t.d7_unit)(big_j)) / h_row,
            None => {
                let terms: Vec<f64> = (m.max(big_j * 3 / 4)..big_j)
                    .map(|j| self.table.norm(row, j + 1) * self.pert.gamma(j) * env.psi_m(j))
                    .collect();
                finite_or_inf(heuristic_tail(&terms))
            }
        };
        let hessian = second.then(|| {
            let certified = tails.and_then(|t| t.c2_gamma_unit.as_ref()).map(|unit| {
                let first = scaled_tail(psi_j * sigma_bar, (tails.expect("some").d7_unit)(big_j));
                (first + scaled_tail(psi_j * psi_j, unit(big_j))) / h_row
            });
            certified.unwrap_or_else(|| {
                let terms: Vec<f64> = (m.max(big_j * 3 / 4)..big_j)
                    .map(|j| {
                        let psi = env.psi_m(j);
                        let g2 = self.pert.gamma_s(2, j).unwrap_or(0.0);
                        self.table.norm(row, j + 1) * (self.pert.gamma(j) * psi * sigma(j) + g2 * psi * psi)
                    })
                    .collect();
                finite_or_inf(heuristic_tail(&terms))
            })
        });
        Ok(DerivTails { jacobian, hessian })
    }

    /// Truncation bounds at index `k` for `H(k,point)`, `G(k,point)` and
    /// their derivatives (the `w*` derivatives are anchored at `m = k`).
    pub fn truncation_bounds(&self, k: usize, point: &Vector) -> Result<TruncationBounds> {
        self.check_index(k)?;
        let h_val = self.map_h(k, point)?;
        let g_val = self.map_g(k, point)?;
        let map_h = self.trunc_err[k] + self.policy.fp_tol + self.rounding(h_val.norm());
        let map_g = self.row_tails[k] + self.rounding(g_val.norm());

        // ∂w* is reported in row 0 and ∂G in row k, both anchored at m = k
        let w_tails = self.derivative_tails(k, 0)?;
        let g_tails = self.derivative_tails(k, k)?;

        let g_bounds = |eta: &Vector| -> Result<(f64, f64)> {
            let v = self.variations(k, eta, false)?;
            let jw = self.jacobian_w_from(k, eta, &v.z, 0)?;
            let jg = self.jacobian_w_from(k, eta, &v.z, k)?;
            Ok((
                w_tails.jacobian + self.rounding(op_norm(&jw)),
                g_tails.jacobian + self.rounding(1.0 + op_norm(&jg)),
            ))
        };
        let (jacobian_w, jacobian_g) = g_bounds(point)?;

        let (hessian_w, hessian_g) = match (w_tails.hessian, g_tails.hessian) {
            (Some(tw), Some(tg)) => {
                let hw = self.hessian_w_star(k, point)?;
                let hg = self.hessian_g(k, point)?;
                (
                    Some(tw + self.rounding(hw.norm_bound())),
                    Some(tg + self.rounding(hg.norm_bound())),
                )
            }
            _ => (None, None),
        };

        // ∂H(k,ξ) = [∂G(k, H(k,ξ))]⁻¹: the truncated inverse sees the ∂G error
        // at the image point plus the drift of the image point itself.
        let jh = self.jacobian_h(k, point)?;
        let jh_norm = op_norm(&jh);
        let (_, jg_at_image) = g_bounds(&h_val)?;
        let curvature = if self.pert.order() >= 2 {
            self.hessian_g(k, &h_val)?.norm_bound()
        } else {
            0.0
        };
        let delta = jg_at_image + curvature * map_h;
        let denom = 1.0 - jh_norm * delta;
        let inverse_shift = if denom > 0.0 {
            jh_norm * jh_norm * delta / denom
        } else {
            f64::INFINITY
        };
        let jacobian_h = inverse_shift + self.rounding(jh_norm) * jh_norm.max(1.0);

        Ok(TruncationBounds {
            mode: self.mode,
            map_h,
            map_g,
            jacobian_w,
            jacobian_g,
            jacobian_h,
            hessian_w,
            hessian_g,
        })
    }
}
