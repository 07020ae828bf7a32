//! Engine quantities against direct evaluations of their defining formulas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topeq_core::certificates::GreenTable;
use topeq_core::engine::green_apply;
use topeq_core::linalg::op_norm;
use topeq_core::system::{green_operator, transition_matrix};
use topeq_core::{ConjugacyEngine, Matrix, Scenario, TruncationPolicy, Variant, Vector};

fn engine(v: Variant) -> (Scenario, ConjugacyEngine) {
    let sc = Scenario::preset(v).unwrap();
    let e = ConjugacyEngine::new(&sc, TruncationPolicy::default()).unwrap();
    (sc, e)
}

fn point(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    Vector::from_fn(d, |_, _| rng.random_range(-10.0..10.0))
}

#[test]
fn op_norm_matches_largest_singular_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 1..6 {
        for _ in 0..20 {
            let m = Matrix::from_fn(d, d, |_, _| rng.random_range(-3.0..3.0));
            let sv = m.clone().svd(false, false).singular_values.max();
            assert!(
                (op_norm(&m) - sv).abs() <= 1e-12 * sv.max(1.0),
                "{} vs {sv}",
                op_norm(&m)
            );
        }
    }
}

#[test]
fn transition_matrix_is_the_ordered_product() {
    let (sc, _) = engine(Variant::Ex189);
    let mut prod = Matrix::identity(3, 3);
    for i in 2..9 {
        prod = sc.sys.coeff(i) * prod;
    }
    let phi = transition_matrix(&sc.sys, 9, 2);
    assert!((&phi - &prod).amax() <= 1e-12 * prod.amax());
    let back = transition_matrix(&sc.sys, 2, 9);
    assert!((back * prod - Matrix::identity(3, 3)).amax() <= 1e-10);
}

#[test]
fn green_table_holds_operator_norms() {
    let (sc, e) = engine(Variant::Ex189);
    let table: &GreenTable = e.green_table();
    for (k, n) in [(0, 1), (3, 1), (5, 9), (10, 4), (2, 2)] {
        let g = green_operator(&sc.sys, &sc.cert, k, n);
        assert!((table.norm(k, n) - op_norm(&g)).abs() <= 1e-12, "({k},{n})");
    }
}

#[test]
fn green_apply_matches_the_explicit_kernel_sum() {
    let (sc, e) = engine(Variant::Ex189);
    let big_j = e.policy().series_horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let forcing: Vec<Matrix> = (0..big_j)
        .map(|j| Matrix::from_fn(3, 1, |_, _| rng.random_range(-1.0..1.0) * 0.8f64.powi(j as i32)))
        .collect();
    let fast = green_apply(&sc.sys, &sc.cert, &forcing);
    for k in [0usize, 1, 4, 8, 30] {
        let direct = (0..big_j).fold(Matrix::zeros(3, 1), |acc, j| {
            acc + green_operator(&sc.sys, &sc.cert, k, j + 1) * &forcing[j]
        });
        assert!((&fast[k] - &direct).amax() <= 1e-12, "row {k}");
    }
}

#[test]
fn w_star_is_the_green_series_along_the_perturbed_orbit() {
    for v in [Variant::Ex188, Variant::Ex189, Variant::C2Corollary] {
        let (sc, e) = engine(v);
        let big_j = e.policy().series_horizon;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..4 {
            let eta = point(&mut rng, 3);
            let m = rng.random_range(0..=6usize);
            let y = e.perturbed_orbit(m, &eta).unwrap();
            // orbit satisfies the perturbed recursion
            for j in 0..big_j.min(40) {
                let next = sc.sys.coeff(j) * &y[j] + sc.pert.eval(j, &y[j]);
                assert!(
                    (&y[j + 1] - next).norm() <= 1e-10 * (1.0 + y[j + 1].norm()),
                    "{v} j={j}"
                );
            }
            for k in [0usize, 3, 8] {
                let direct = (0..big_j).fold(Vector::zeros(3), |acc, j| {
                    acc - green_operator(&sc.sys, &sc.cert, k, j + 1) * sc.pert.eval(j, &y[j])
                });
                let w = e.compute_w_star(k, m, &eta).unwrap();
                assert!((w - direct).norm() <= 1e-11, "{v} k={k} m={m}");
            }
        }
    }
}

#[test]
fn z_star_is_a_fixed_point_of_the_green_series() {
    for v in [Variant::Ex188, Variant::Ex189, Variant::Cor176] {
        let (sc, e) = engine(v);
        let big_j = e.policy().series_horizon;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..4 {
            let xi = point(&mut rng, 3);
            let m = rng.random_range(0..=6usize);
            let x = e.linear_orbit(m, &xi).unwrap();
            let z = e.z_sequence(m, &xi).unwrap();
            for k in [0usize, 2, 7] {
                let rhs = (0..big_j).fold(Vector::zeros(3), |acc, j| {
                    acc + green_operator(&sc.sys, &sc.cert, k, j + 1) * sc.pert.eval(j, &(&x[j] + &z[j]))
                });
                assert!((&z[k] - rhs).norm() <= 1e-9, "{v} k={k}");
            }
        }
    }
}

#[test]
fn h_conjugates_the_orbits() {
    let (sc, e) = engine(Variant::Ex189);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xi = point(&mut rng, 3);
    // H(k, x(k,0,ξ)) follows the perturbed system for every k
    let x = e.linear_orbit(0, &xi).unwrap();
    let mut prev = e.map_h(0, &xi).unwrap();
    for k in 0..8 {
        let next = e.map_h(k + 1, &x[k + 1]).unwrap();
        let step = sc.sys.coeff(k) * &prev + sc.pert.eval(k, &prev);
        assert!((&next - step).norm() <= 1e-9, "k={k}");
        prev = next;
    }
}
