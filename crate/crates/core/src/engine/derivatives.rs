use super::{green_apply, ConjugacyEngine};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, identity, Matrix, Tensor3, Vector};

/// First and second variations along one perturbed orbit.
pub(crate) struct Variations {
    pub z: Vec<Matrix>,
    /// `Z₂(j)` flattened to `d × d²`.
    pub z2: Option<Vec<Matrix>>,
}

impl ConjugacyEngine {
    fn b_matrix(&self, j: usize, y: &Vector) -> Result<Matrix> {
        Ok(&self.sys.step(j).a + self.pert.jacobian(j, y)?)
    }

    fn solve_b(b: &Matrix, rhs: &Matrix, j: usize) -> Result<Matrix> {
        b.clone().lu().solve(rhs).ok_or(Error::SingularJacobian {
            k: j,
            condition: f64::INFINITY,
        })
    }

    pub(crate) fn variations(&self, m: usize, eta: &Vector, second: bool) -> Result<Variations> {
        let data = self.perturbed_data(m, eta)?;
        let y = &data.y;
        let big_j = self.policy.series_horizon;
        let d = self.dim();
        let mut z = vec![Matrix::zeros(d, d); big_j + 1];
        z[m] = identity(d);
        let mut z2 = second.then(|| vec![Matrix::zeros(d, d * d); big_j + 1]);
        for j in m..big_j {
            let b = self.b_matrix(j, &y[j])?;
            if let Some(z2) = z2.as_mut() {
                let curv = self.pert.hessian(j, &y[j])?.pullback(&z[j]).into_flat();
                z2[j + 1] = &b * &z2[j] + curv;
            }
            z[j + 1] = &b * &z[j];
        }
        for j in (0..m).rev() {
            let b = self.b_matrix(j, &y[j])?;
            z[j] = Self::solve_b(&b, &z[j + 1], j)?;
            if let Some(z2) = z2.as_mut() {
                let curv = self.pert.hessian(j, &y[j])?.pullback(&z[j]).into_flat();
                z2[j] = Self::solve_b(&b, &(&z2[j + 1] - curv), j)?;
            }
        }
        Ok(Variations { z, z2 })
    }

    /// `∂y/∂η(j,m,η)` for `j ∈ [0, J]`.
    pub fn variational(&self, m: usize, eta: &Vector) -> Result<Vec<Matrix>> {
        Ok(self.variations(m, eta, false)?.z)
    }

    /// `∂²y/∂η²(j,m,η)` for `j ∈ [0, J]`.
    pub fn second_variational(&self, m: usize, eta: &Vector) -> Result<Vec<Tensor3>> {
        let d = self.dim();
        let v = self.variations(m, eta, true)?;
        Ok(v.z2
            .expect("requested")
            .into_iter()
            .map(|f| Tensor3::from_flat(d, f))
            .collect())
    }

    /// Row `row` of `∂w*(·;(m,η))/∂η`.
    pub(crate) fn jacobian_w_from(&self, m: usize, eta: &Vector, z: &[Matrix], row: usize) -> Result<Matrix> {
        let y = &self.perturbed_data(m, eta)?.y;
        let forcing = (0..self.policy.series_horizon)
            .map(|j| Ok(self.pert.jacobian(j, &y[j])? * &z[j]))
            .collect::<Result<Vec<_>>>()?;
        Ok(-green_apply(&self.sys, &self.cert, &forcing).swap_remove(row))
    }

    /// Row `row` of `∂²w*(·;(m,η))/∂η²`.
    pub(crate) fn hessian_w_from(&self, m: usize, eta: &Vector, v: &Variations, row: usize) -> Result<Tensor3> {
        let y = &self.perturbed_data(m, eta)?.y;
        let z2 = v.z2.as_ref().expect("second variation computed");
        let forcing = (0..self.policy.series_horizon)
            .map(|j| {
                let curv = self.pert.hessian(j, &y[j])?.pullback(&v.z[j]).into_flat();
                Ok(self.pert.jacobian(j, &y[j])? * &z2[j] + curv)
            })
            .collect::<Result<Vec<_>>>()?;
        let flat = -green_apply(&self.sys, &self.cert, &forcing).swap_remove(row);
        Ok(Tensor3::from_flat(self.dim(), flat))
    }

    fn require_order(&self, needed: usize) -> Result<()> {
        if self.pert.order() < needed {
            Err(Error::MissingDerivative {
                needed,
                available: self.pert.order(),
            })
        } else {
            Ok(())
        }
    }

    /// `∂w*(0;(m,η))/∂η`.
    pub fn jacobian_w_star(&self, m: usize, eta: &Vector) -> Result<Matrix> {
        self.require_order(1)?;
        let v = self.variations(m, eta, false)?;
        self.jacobian_w_from(m, eta, &v.z, 0)
    }

    /// `∂G(k,η)/∂η = I + ∂w*(k;(k,η))/∂η`. Equal to
    /// `Φ(k,0)[∂y/∂η(0,k,η) + ∂w*(0;(k,η))/∂η]` but without the rounding
    /// amplification of the transition matrices.
    pub fn jacobian_g(&self, k: usize, eta: &Vector) -> Result<Matrix> {
        self.require_order(1)?;
        self.check_index(k)?;
        let v = self.variations(k, eta, false)?;
        Ok(identity(self.dim()) + self.jacobian_w_from(k, eta, &v.z, k)?)
    }

    /// `∂H(k,ξ)/∂ξ = [∂G(k, H(k,ξ))]⁻¹`.
    pub fn jacobian_h(&self, k: usize, xi: &Vector) -> Result<Matrix> {
        let h = self.map_h(k, xi)?;
        let jg = self.jacobian_g(k, &h)?;
        invert_checked(&jg, k)
    }

    /// `∂²w*(0;(m,η))/∂η²`.
    pub fn hessian_w_star(&self, m: usize, eta: &Vector) -> Result<Tensor3> {
        self.require_order(2)?;
        let v = self.variations(m, eta, true)?;
        self.hessian_w_from(m, eta, &v, 0)
    }

    /// `∂²G(k,η)/∂η² = ∂²w*(k;(k,η))/∂η²`.
    pub fn hessian_g(&self, k: usize, eta: &Vector) -> Result<Tensor3> {
        self.require_order(2)?;
        self.check_index(k)?;
        let v = self.variations(k, eta, true)?;
        self.hessian_w_from(k, eta, &v, k)
    }
}

const SINGULAR_CONDITION: f64 = 1e12;

pub(crate) fn invert_checked(m: &Matrix, k: usize) -> Result<Matrix> {
    let cond = condition_number(m).unwrap_or(f64::INFINITY);
    if !(cond <= SINGULAR_CONDITION) {
        return Err(Error::SingularJacobian { k, condition: cond });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::SingularJacobian { k, condition: cond })
}

#[cfg(test)]
mod tests {
    use crate::certificates::{Scenario, Variant};
    use crate::engine::{fd_error, ConjugacyEngine, TruncationPolicy};
    use crate::linalg::{Matrix, Vector};

    #[test]
    fn jacobian_w_matches_differences_on_ex188() {
        let sc = Scenario::preset(Variant::Ex188).unwrap();
        let eng = ConjugacyEngine::new(&sc, TruncationPolicy::default()).unwrap();
        let eta = Vector::from_vec(vec![0.4, -1.5, 2.0]);
        let ana = eng.jacobian_w_star(3, &eta).unwrap();
        let h = 1e-5;
        let mut num = Matrix::zeros(3, 3);
        for b in 0..3 {
            let mut up = eta.clone();
            let mut dn = eta.clone();
            up[b] += h;
            dn[b] -= h;
            let col = (eng.compute_w_star(0, 3, &up).unwrap() - eng.compute_w_star(0, 3, &dn).unwrap()) / (2.0 * h);
            num.set_column(b, &col);
        }
        assert!(fd_error(&num, &ana) < 1e-6);
    }

    #[test]
    fn zero_perturbation_derivatives() {
        let sc = Scenario::preset(Variant::Ex188).unwrap().without_perturbation();
        let eng = ConjugacyEngine::new(&sc, TruncationPolicy::default()).unwrap();
        let eta = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(eng.jacobian_w_star(2, &eta).unwrap().amax() == 0.0);
        assert!(eng.hessian_w_star(2, &eta).unwrap().amax() == 0.0);
        let jg = eng.jacobian_g(4, &eta).unwrap();
        assert!((jg - Matrix::identity(3, 3)).amax() < 1e-14);
    }
}
