//! Truncated Green-operator series `z(k) = Σ_{j<J} 𝒢(k, j+1) F_j`.
//!
//! With `S_P(k) = Σ_{j<k} Φ(k,j+1)P(j+1)F_j` and
//! `S_Q(k) = Σ_{k≤j<J} Φ(k,j+1)Q(j+1)F_j` one has `z = S_P − S_Q` and
//!
//! ```text
//! S_P(0) = 0,  S_P(k+1) = P(k+1)[A(k)S_P(k) + F_k]
//! S_Q(J) = 0,  S_Q(k)   = Q(k)A⁻¹(k)[Q(k+1)F_k + S_Q(k+1)]
//! ```
//!
//! so every row costs O(1) and no transition matrix is ever formed. The
//! projections are exact by invariance and keep rounding errors out of the
//! complementary directions. `z(k+1) = A(k)z(k) + F_k` holds for `k < J`.

use crate::certificates::DichotomyCertificate;
use crate::linalg::{Matrix, Vector};
use crate::system::MatrixSequence;

/// Rows `0..=J` of the truncated series for matrix-valued forcing `F_0..F_{J-1}`.
pub fn green_apply(sys: &MatrixSequence, cert: &DichotomyCertificate, forcing: &[Matrix]) -> Vec<Matrix> {
    let big_j = forcing.len();
    let (rows, cols) = forcing.first().map_or((sys.dim(), 1), |f| (f.nrows(), f.ncols()));
    let mut sp = Vec::with_capacity(big_j + 1);
    sp.push(Matrix::zeros(rows, cols));
    for (k, f) in forcing.iter().enumerate() {
        let next = cert.p(k + 1).as_ref() * (&sys.step(k).a * &sp[k] + f);
        sp.push(next);
    }
    let mut sq = Matrix::zeros(rows, cols);
    let mut out = sp;
    for k in (0..big_j).rev() {
        sq = cert.q(k).as_ref() * (&sys.step(k).a_inv * (cert.q(k + 1).as_ref() * &forcing[k] + &sq));
        out[k] -= &sq;
    }
    out
}

/// Vector form of [`green_apply`].
pub fn green_apply_vec(sys: &MatrixSequence, cert: &DichotomyCertificate, forcing: &[Vector]) -> Vec<Vector> {
    let mats: Vec<Matrix> = forcing.iter().map(as_column).collect();
    green_apply(sys, cert, &mats)
        .into_iter()
        .map(|m| m.column(0).into_owned())
        .collect()
}

pub(crate) fn as_column(v: &Vector) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{constant_seq, green_operator};
    use std::sync::Arc;

    #[test]
    fn matches_explicit_green_sum() {
        let a = Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 3.0]);
        let sys = MatrixSequence::constant(a, 3.0);
        let p = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let cert = DichotomyCertificate::constant(p, constant_seq(1.0), Arc::new(|n| 0.5f64.powi(n as i32)), None);
        let forcing: Vec<Vector> = (0..12)
            .map(|j| Vector::from_vec(vec![(j as f64).sin(), 1.0 / (1.0 + j as f64)]))
            .collect();
        let z = green_apply_vec(&sys, &cert, &forcing);
        for (k, zk) in z.iter().enumerate() {
            let mut expect = Vector::zeros(2);
            for (j, f) in forcing.iter().enumerate() {
                expect += green_operator(&sys, &cert, k, j + 1) * f;
            }
            assert!((zk - expect).amax() < 1e-13, "row {k}");
        }
        for k in 0..12 {
            let r = &z[k + 1] - &sys.step(k).a * &z[k] - &forcing[k];
            assert!(r.amax() < 1e-13);
        }
    }
}
