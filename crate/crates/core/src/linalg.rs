//! Small dense linear algebra used throughout the crate.
//!
//! Every norm reported by this crate is the operator 2-norm, computed as the
//! square root of the largest eigenvalue of the Gram matrix. The eigenvalue
//! comes from a cyclic Jacobi sweep, which is exact enough for the tiny
//! matrices (d ≤ 16) this library targets.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
///
/// Only the lower triangle is trusted; the input is symmetrized first.
pub fn symmetric_eigenvalues(sym: &Matrix) -> Vec<f64> {
    let n = sym.nrows();
    debug_assert_eq!(n, sym.ncols());
    let mut a = sym.clone();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            diag += a[(i, i)] * a[(i, i)];
            for j in 0..i {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off <= f64::EPSILON * f64::EPSILON * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

/// Operator 2-norm (largest singular value).
pub fn op_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let scale = m.amax();
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    // scaling keeps the Gram entries away from overflow for huge transition matrices
    let s = m / scale;
    let gram = if s.nrows() < s.ncols() {
        &s * s.transpose()
    } else {
        s.transpose() * &s
    };
    let lmax = symmetric_eigenvalues(&gram).into_iter().fold(0.0_f64, f64::max);
    scale * lmax.max(0.0).sqrt()
}

/// Euclidean norm of a vector.
pub fn vnorm(v: &Vector) -> f64 {
    v.norm()
}

/// Condition number in the 2-norm, `None` when the matrix is not invertible.
pub fn condition_number(m: &Matrix) -> Option<f64> {
    let inv = m.clone().try_inverse()?;
    Some(op_norm(m) * op_norm(&inv))
}

pub fn identity(d: usize) -> Matrix {
    Matrix::identity(d, d)
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax()
}

/// A `d × d × d` array stored as a `d × d²` matrix: entry `(i, a·d + b)` holds
/// `T[i][a][b]`. Used for second derivatives, which act as symmetric bilinear
/// maps `ℝ^d × ℝ^d → ℝ^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Matrix,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: Matrix::zeros(dim, dim * dim),
        }
    }

    pub fn from_flat(dim: usize, data: Matrix) -> Self {
        assert_eq!(data.nrows(), dim);
        assert_eq!(data.ncols(), dim * dim);
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, a: usize, b: usize) -> f64 {
        self.data[(i, a * self.dim + b)]
    }

    pub fn set(&mut self, i: usize, a: usize, b: usize, v: f64) {
        self.data[(i, a * self.dim + b)] = v;
    }

    pub fn flat(&self) -> &Matrix {
        &self.data
    }

    pub fn into_flat(self) -> Matrix {
        self.data
    }

    /// Slice `T[i][·][·]` as a `d × d` matrix.
    pub fn slice(&self, i: usize) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |a, b| self.get(i, a, b))
    }

    /// `T(v, w)`.
    pub fn apply(&self, v: &Vector, w: &Vector) -> Vector {
        let d = self.dim;
        Vector::from_fn(d, |i, _| {
            let mut acc = 0.0;
            for a in 0..d {
                for b in 0..d {
                    acc += self.get(i, a, b) * v[a] * w[b];
                }
            }
            acc
        })
    }

    /// `(M T)[i][a][b] = Σ_l M[i][l] T[l][a][b]`.
    pub fn left_mul(&self, m: &Matrix) -> Tensor3 {
        Tensor3 {
            dim: self.dim,
            data: m * &self.data,
        }
    }

    /// `T(Z·, Z·)`: `[i][a][b] = Σ_{l,n} T[i][l][n] Z[l][a] Z[n][b]`.
    pub fn pullback(&self, z: &Matrix) -> Tensor3 {
        let d = self.dim;
        let mut out = Tensor3::zeros(d);
        for i in 0..d {
            let s = self.slice(i);
            let p = z.transpose() * s * z;
            for a in 0..d {
                for b in 0..d {
                    out.set(i, a, b, p[(a, b)]);
                }
            }
        }
        out
    }

    /// Upper bound on the bilinear operator norm, `sqrt(Σ_i ‖T[i]‖²)`.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|i| op_norm(&self.slice(i)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest `|T[i][a][b] − T[i][b][a]|`.
    pub fn asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0_f64;
        for i in 0..d {
            for a in 0..d {
                for b in 0..a {
                    worst = worst.max((self.get(i, a, b) - self.get(i, b, a)).abs());
                }
            }
        }
        worst
    }

    pub fn amax(&self) -> f64 {
        self.data.amax()
    }
}

impl std::ops::Add for &Tensor3 {
    type Output = Tensor3;
    fn add(self, rhs: &Tensor3) -> Tensor3 {
        Tensor3 {
            dim: self.dim,
            data: &self.data + &rhs.data,
        }
    }
}

impl std::ops::Sub for &Tensor3 {
    type Output = Tensor3;
    fn sub(self, rhs: &Tensor3) -> Tensor3 {
        Tensor3 {
            dim: self.dim,
            data: &self.data - &rhs.data,
        }
    }
}

/// Orthonormalize the columns of a square matrix (modified Gram-Schmidt).
pub fn orthonormalize(m: &Matrix) -> Matrix {
    let n = m.ncols();
    let mut q = m.clone();
    for j in 0..n {
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let ci = q.column(i).clone_owned();
            let mut cj = q.column_mut(j);
            cj -= ci * proj;
        }
        let nrm = q.column(j).norm();
        let mut cj = q.column_mut(j);
        cj /= nrm;
    }
    q
}

/// Plane rotation by `angle` acting on coordinates `(i, j)` of ℝ^d.
pub fn plane_rotation(d: usize, i: usize, j: usize, angle: f64) -> Matrix {
    let mut r = identity(d);
    let (s, c) = angle.sin_cos();
    r[(i, i)] = c;
    r[(j, j)] = c;
    r[(i, j)] = -s;
    r[(j, i)] = s;
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_norm_of_diagonal_is_max_abs_entry() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, -3.0, 2.0]));
        assert!((op_norm(&m) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn op_norm_of_rank_one() {
        // u vᵀ has norm |u||v|
        let u = Vector::from_vec(vec![1.0, 2.0, 2.0]);
        let v = Vector::from_vec(vec![0.0, 3.0, 4.0]);
        let m = &u * v.transpose();
        assert!((op_norm(&m) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn op_norm_rectangular_and_zero() {
        let m = Matrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 4.0, 0.0]);
        assert!((op_norm(&m) - 4.0).abs() < 1e-14);
        assert_eq!(op_norm(&Matrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn op_norm_invariant_under_rotation() {
        let r = plane_rotation(3, 0, 2, 0.7);
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![0.1, 0.2, 7.0]));
        assert!((op_norm(&(&r * m * r.transpose())) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let s = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let mut ev = symmetric_eigenvalues(&s);
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn huge_entries_do_not_overflow() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![1e200, 1.0]));
        assert!((op_norm(&m) / 1e200 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tensor_pullback_and_apply_agree() {
        let d = 2;
        let mut t = Tensor3::zeros(d);
        t.set(0, 0, 1, 1.0);
        t.set(0, 1, 0, 1.0);
        t.set(1, 1, 1, 2.0);
        let z = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let pb = t.pullback(&z);
        let e0 = Vector::from_vec(vec![1.0, 0.0]);
        let e1 = Vector::from_vec(vec![0.0, 1.0]);
        let lhs = pb.apply(&e0, &e1);
        let rhs = t.apply(&(&z * &e0), &(&z * &e1));
        assert!((lhs - rhs).amax() < 1e-14);
        assert_eq!(pb.asymmetry(), 0.0);
    }

    #[test]
    fn orthonormalize_gives_orthogonal() {
        let m = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, 0.3, 1.0, 2.0, 0.1, 0.0, 1.0]);
        let q = orthonormalize(&m);
        assert!(max_abs_diff(&(q.transpose() * &q), &identity(3)) < 1e-14);
    }
}
