use std::sync::Arc;

use proptest::prelude::*;
use rellich_lab::field::{BumpField, Dilated, ScalarField};
use rellich_lab::group::GroupModel;
use rellich_lab::jet::Jet3;
use rellich_lab::ops::{
    apply_frame, character, drift_laplacian, horizontal_gradient, sub_laplacian, CharacterSign,
    DriftSpec,
};

fn groups() -> Vec<GroupModel> {
    ["euclidean:3", "euclidean:5", "heisenberg:1", "heisenberg:2"]
        .iter()
        .map(|id| GroupModel::parse(id).unwrap())
        .collect()
}

/// Smooth test function `exp(⟨c,x⟩)(1 + x₀x₁ + x₁²x₂)` as a jet and as plain values.
fn test_fn(c: &[f64], x: &[f64]) -> f64 {
    let lin: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
    lin.exp() * (1.0 + x[0] * x[1] + x[1] * x[1] * x[x.len() - 1])
}

fn test_jet(c: &[f64], x: &[f64]) -> Jet3 {
    let v = Jet3::variables(x).unwrap();
    let n = x.len();
    let mut lin = Jet3::zero(n).unwrap();
    for i in 0..n {
        lin = &lin + &v[i].scale(c[i]);
    }
    let poly = (&v[0] * &v[1]).add_scalar(1.0);
    let poly = &poly + &(&(&v[1] * &v[1]) * &v[n - 1]);
    &lin.exp() * &poly
}

fn fd_partial(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    let mut m = x.to_vec();
    p[i] += h;
    m[i] -= h;
    (f(&p) - f(&m)) / (2.0 * h)
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.2f64..1.2, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jet_derivatives_match_finite_differences(x in point(3), c in point(3)) {
        let j = test_jet(&c, &x);
        let f = |y: &[f64]| test_fn(&c, y);
        let h = 1e-4;
        prop_assert!((j.value() - f(&x)).abs() <= 1e-12 * f(&x).abs().max(1.0));
        for i in 0..3 {
            let fd = fd_partial(&f, &x, i, h);
            prop_assert!((j.grad(i) - fd).abs() <= 1e-6 * fd.abs().max(1.0));
            for k in 0..3 {
                let gk = |y: &[f64]| test_jet(&c, y).grad(k);
                let fd2 = fd_partial(&gk, &x, i, h);
                prop_assert!((j.hess(i, k) - fd2).abs() <= 1e-6 * fd2.abs().max(1.0));
                for l in 0..3 {
                    let hkl = |y: &[f64]| test_jet(&c, y).hess(k, l);
                    let fd3 = fd_partial(&hkl, &x, i, h);
                    prop_assert!((j.third(i, k, l) - fd3).abs() <= 1e-5 * fd3.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn frame_commutes_with_left_translation(
        x in point(3), y in point(3), c in point(3), k in 0usize..2,
    ) {
        let g = GroupModel::heisenberg(1).unwrap();
        // u(z) = f(y·z) has X_k u(z) = (X_k f)(y·z).
        let yz = g.product(&y, &x).unwrap();
        let lhs = {
            let u = |z: &[f64]| test_fn(&c, &g.product(&y, z).unwrap());
            let h = 1e-5;
            g.frame()[k].terms.iter().map(|(i, p)| p.value(&x) * fd_partial(&u, &x, *i, h)).sum::<f64>()
        };
        let rhs = apply_frame(&g, k, &test_jet(&c, &yz), &yz).unwrap().value();
        prop_assert!((lhs - rhs).abs() <= 1e-6 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn character_is_a_homomorphism(x in point(5), y in point(5), gamma in -1.5f64..1.5) {
        let g = GroupModel::heisenberg(2).unwrap();
        let d = DriftSpec::new(&g, gamma, vec![0.3, -0.7, 0.2, 1.1]).unwrap();
        let xy = g.product(&x, &y).unwrap();
        let lhs = character(&d, &xy);
        let rhs = character(&d, &x) * character(&d, &y);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }
}

#[test]
fn sub_laplacian_is_homogeneous_of_degree_two() {
    for g in groups() {
        let n = g.dim();
        let mut center = vec![0.3; n];
        center[0] = 1.1;
        let bump: Arc<dyn ScalarField> =
            Arc::new(BumpField::new(&g, center.clone(), vec![0.6; n], 0.2).unwrap());
        for lambda in [0.5, 1.7] {
            let dil = Dilated::new(&g, bump.clone(), lambda).unwrap();
            // (f∘δ_λ)(x) at x = δ_{1/λ}(center + offset).
            let mut p = center.clone();
            p[1] += 0.13;
            let x = g.dilate(1.0 / lambda, &p).unwrap();
            let lhs = sub_laplacian(&g, &dil.jet(&x), &x);
            let rhs = lambda * lambda * sub_laplacian(&g, &bump.jet(&p), &p);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0),
                "{}: λ={lambda}: {lhs} vs {rhs}",
                g.id()
            );
        }
    }
}

#[test]
fn sub_laplacian_matches_second_differences_along_the_frame() {
    for g in groups() {
        let n = g.dim();
        let c: Vec<f64> = (0..n).map(|i| 0.2 - 0.1 * i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| 0.4 + 0.15 * i as f64).collect();
        let h = 1e-4;
        // X_k² f(x) = d²/ds² f(x·exp(s e_k)) at s = 0 for the horizontal basis vectors.
        let mut fd = 0.0;
        for k in 0..g.horizontal_dim() {
            let mut e = vec![0.0; n];
            let mut at = |s: f64| {
                e[k] = s;
                test_fn(&c, &g.product(&x, &e).unwrap())
            };
            let (p, z, m) = (at(h), at(0.0), at(-h));
            fd += (p - 2.0 * z + m) / (h * h);
        }
        let exact = sub_laplacian(&g, &test_jet(&c, &x), &x);
        assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "{}: {fd} vs {exact}", g.id());
    }
}

#[test]
fn negative_sign_equals_flipped_direction() {
    let g = GroupModel::heisenberg(1).unwrap();
    let x = [0.7, -0.4, 0.3];
    let f = test_jet(&[0.1, 0.2, -0.3], &x);
    let neg = DriftSpec::new(&g, 0.8, vec![0.6, 0.8]).unwrap().with_sign(CharacterSign::Negative);
    let flipped = DriftSpec::new(&g, 0.8, vec![-0.6, -0.8]).unwrap();
    assert_eq!(character(&neg, &x), character(&flipped, &x));
    let a = drift_laplacian(&g, &neg, &f, &x);
    let b = drift_laplacian(&g, &flipped, &f, &x);
    assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
}

#[test]
fn horizontal_gradient_on_euclidean_space_is_the_gradient() {
    let g = GroupModel::euclidean(3).unwrap();
    let x = [0.3, -0.2, 0.9];
    let f = test_jet(&[0.5, 0.1, -0.4], &x);
    let gh = horizontal_gradient(&g, &f, &x);
    for (i, v) in gh.iter().enumerate() {
        assert_eq!(*v, f.grad(i));
    }
}
