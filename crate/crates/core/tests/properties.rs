use std::sync::OnceLock;

use proptest::prelude::*;
use topeq_core::linalg::{op_norm, Tensor3};
use topeq_core::{
    apply_d, ConjugacyEngine, DifExpression, DifTerm, Matrix, Scenario, TruncationPolicy, Variant, Vector,
};

const R: u32 = 12;

fn term() -> impl Strategy<Value = DifTerm> {
    (
        -5i64..=5,
        1u32..=4,
        proptest::collection::vec((1u32..=3, 0u32..=3), 0..3),
    )
        .prop_map(|(c, s, pi)| DifTerm::new(c, s, &pi))
}

fn expr() -> impl Strategy<Value = DifExpression> {
    proptest::collection::vec(term(), 0..5).prop_map(DifExpression::from_terms)
}

fn ex188() -> &'static ConjugacyEngine {
    static E: OnceLock<ConjugacyEngine> = OnceLock::new();
    E.get_or_init(|| {
        ConjugacyEngine::new(&Scenario::preset(Variant::Ex188).unwrap(), TruncationPolicy::default()).unwrap()
    })
}

fn vec3() -> impl Strategy<Value = Vector> {
    proptest::array::uniform3(-10.0f64..10.0).prop_map(|a| Vector::from_row_slice(&a))
}

proptest! {
    #[test]
    fn derivation_is_additive(a in expr(), b in expr()) {
        let lhs = apply_d(&a.add(&b), R).unwrap();
        let rhs = apply_d(&a, R).unwrap().add(&apply_d(&b, R).unwrap());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn derivation_raises_pi_weight_by_one(t in term()) {
        prop_assume!(t.coefficient != 0);
        let out = apply_d(&DifExpression::from_terms(vec![t.clone()]), R).unwrap();
        for u in out.terms() {
            prop_assert_eq!(u.weight(), t.weight() + 1);
            prop_assert!(u.gamma_index == t.gamma_index || u.gamma_index == t.gamma_index + 1);
        }
        // one term from Γ_s, one per π factor
        let degree: u32 = t.pi_exponents.values().sum();
        prop_assert_eq!(out.coefficient_sum(), t.coefficient * (1 + degree as i64));
    }

    #[test]
    fn canonical_form_is_idempotent(a in expr()) {
        prop_assert_eq!(a.canonicalize(), a.clone());
        let json = a.to_json();
        let back: DifExpression = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn pullback_preserves_symmetry(vals in proptest::collection::vec(-2.0f64..2.0, 27), z in proptest::collection::vec(-2.0f64..2.0, 9)) {
        let mut t = Tensor3::zeros(3);
        for i in 0..3 {
            for a in 0..3 {
                for b in a..3 {
                    let v = vals[9 * i + 3 * a + b];
                    t.set(i, a, b, v);
                    t.set(i, b, a, v);
                }
            }
        }
        let z = Matrix::from_row_slice(3, 3, &z);
        prop_assert!(t.pullback(&z).asymmetry() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn g_inverts_h(xi in vec3(), k in 0usize..=8) {
        let e = ex188();
        let h = e.map_h(k, &xi).unwrap();
        let back = e.map_g(k, &h).unwrap();
        prop_assert!((back - &xi).norm() <= 1e-9);
        prop_assert!((h - &xi).norm() <= e.p() + 1e-10);
    }

    #[test]
    fn jacobians_of_h_and_g_are_inverse(eta in vec3(), k in 0usize..=8) {
        let e = ex188();
        let g = e.map_g(k, &eta).unwrap();
        let prod = e.jacobian_h(k, &g).unwrap() * e.jacobian_g(k, &eta).unwrap();
        prop_assert!(op_norm(&(prod - Matrix::identity(3, 3))) <= 1e-8);
    }
}
