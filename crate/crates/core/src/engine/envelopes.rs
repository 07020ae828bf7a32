//! Growth envelopes for solutions of the perturbed system anchored at `m`.
//!
//! * `𝒞_m(j) = ∏_{i=j}^{m-1} ‖A⁻¹(i)‖ / (1 − ‖A⁻¹(i)‖γ(i))` for `j < m`
//! * `ℬ_m(j) = Ψ_m(j) = ∏_{i=m}^{j-1} (‖A(i)‖ + γ(i))` for `j ≥ m`
//! * `𝒜_m` splices them, with `𝒜_m(m) = 1`
//! * `π_{1,m} = Ψ_m`, `π_{2,m}(j) = ∏_{i=m}^{j-1} Γ_2(i)`; higher orders only
//!   when supplied explicitly.

use std::collections::BTreeMap;

use crate::system::{MatrixSequence, PerturbationModel};

#[derive(Clone, Debug)]
pub struct GrowthEnvelopes {
    m: usize,
    upto: usize,
    backward: Vec<f64>,
    forward: Vec<f64>,
    pi2: Option<Vec<f64>>,
    extra: BTreeMap<u32, Vec<f64>>,
}

impl GrowthEnvelopes {
    /// Envelopes on `[0, upto]` for anchor `m`.
    pub fn new(sys: &MatrixSequence, pert: &PerturbationModel, m: usize, upto: usize) -> Self {
        let upto = upto.max(m);
        let mut backward = vec![1.0; m + 1];
        for j in (0..m).rev() {
            let st = sys.step(j);
            let c = st.norm_a_inv * pert.gamma(j);
            let factor = if c < 1.0 {
                st.norm_a_inv / (1.0 - c)
            } else {
                f64::INFINITY
            };
            backward[j] = backward[j + 1] * factor;
        }
        let mut forward = Vec::with_capacity(upto - m + 1);
        forward.push(1.0);
        for i in m..upto {
            let last = *forward.last().expect("nonempty");
            forward.push(last * (sys.step(i).norm_a + pert.gamma(i)));
        }
        let pi2 = (pert.max_envelope_order() >= 2).then(|| {
            let mut v = Vec::with_capacity(upto - m + 1);
            v.push(1.0);
            for i in m..upto {
                let last = *v.last().expect("nonempty");
                v.push(last * pert.gamma_s(2, i).expect("order checked"));
            }
            v
        });
        Self {
            m,
            upto,
            backward,
            forward,
            pi2,
            extra: BTreeMap::new(),
        }
    }

    /// Supplies `π_{s,m}(j)` for `j ∈ [m, upto]` and some `s ≥ 3`.
    pub fn with_pi(mut self, s: u32, values: Vec<f64>) -> Self {
        assert!(s >= 3, "π_1 and π_2 are built in");
        assert_eq!(values.len(), self.upto - self.m + 1, "π values must cover [m, upto]");
        self.extra.insert(s, values);
        self
    }

    pub fn anchor(&self) -> usize {
        self.m
    }

    pub fn upto(&self) -> usize {
        self.upto
    }

    /// `𝒞_m(j)`, defined for `j ≤ m`.
    pub fn c_m(&self, j: usize) -> f64 {
        self.backward[j]
    }

    /// `ℬ_m(j)`, defined for `m ≤ j ≤ upto`.
    pub fn b_m(&self, j: usize) -> f64 {
        self.forward[j - self.m]
    }

    pub fn psi_m(&self, j: usize) -> f64 {
        self.b_m(j)
    }

    pub fn a_m(&self, j: usize) -> f64 {
        if j < self.m {
            self.c_m(j)
        } else {
            self.b_m(j)
        }
    }

    /// `π_{s,m}(j)` for `j ≥ m`, `None` when that order has no envelope.
    pub fn pi_s_m(&self, s: u32, j: usize) -> Option<f64> {
        let i = j.checked_sub(self.m)?;
        match s {
            1 => self.forward.get(i).copied(),
            2 => self.pi2.as_ref()?.get(i).copied(),
            _ => self.extra.get(&s)?.get(i).copied(),
        }
    }

    pub fn pi_m(&self, j: usize) -> Option<f64> {
        self.pi_s_m(2, j)
    }
}
