use rellich_lab::catalog::{InstanceId, Params};
use rellich_lab::group::GroupModel;
use rellich_lab::quadrature::QuadratureSpec;
use rellich_lab::sharpness::{
    best_constant_estimate, extremal_exponent, extremal_field, minimizing_sequence_ratio, ratio_series,
    witness_field, RadialFunctional, SearchBudget, Witness,
};

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn extremal_exponents_sit_at_the_critical_powers() {
    let e5 = GroupModel::euclidean(5).unwrap();
    let h1 = GroupModel::heisenberg(1).unwrap();
    let cases = [
        (InstanceId::ClassicalRellich, &e5, Params::default(), -0.5),
        (InstanceId::HorizontalHardy, &e5, Params::beta(1.0), -1.5),
        (InstanceId::HorizontalWeightedRellich, &e5, Params::delta(-1.0), -1.5),
        (InstanceId::KombeRellich, &h1, Params::theta(1.0), -1.0),
    ];
    for (id, g, p, expected) in cases {
        let c = extremal_exponent(&id.instance(), g, &p).unwrap();
        assert!((c - expected).abs() < 1e-3, "{id}: {c} vs {expected}");
    }
}

#[test]
fn davies_hinz_has_no_power_extremal() {
    let g = GroupModel::euclidean(5).unwrap();
    let inst = InstanceId::DaviesHinzWeighted.instance();
    assert!(RadialFunctional::of(&inst, &g, &Params::alpha(0.0).with_p(2.0)).is_err());
}

#[test]
fn one_dimensional_reduction_matches_radial_oracle() {
    let g = GroupModel::euclidean(5).unwrap();
    let n = 5.0;
    let inst = InstanceId::ClassicalRellich.instance();
    let spec = QuadratureSpec::default();
    let fun = RadialFunctional::of(&inst, &g, &Params::default()).unwrap();
    for (c, k) in [(-0.5, 1), (-0.2, 2), (-0.9, 3)] {
        let field = extremal_field(&inst, &g, c, k).unwrap();
        let kf = k as f64;
        let r = (1.0 - 2.0 * kf).exp();
        let (lo, hi) = ((r * (-2.0 * kf).exp()).ln(), (r * (2.0 * kf).exp()).ln());
        // Integrate in t = ln s, so the volume element is s^n dt.
        let num = simpson(lo, hi, 400_000, |t| {
            let s = t.exp();
            let f = field.profile(s);
            let lap = f[2] + (n - 1.0) * f[1] / s;
            lap * lap * s.powf(n)
        });
        let den = simpson(lo, hi, 400_000, |t| {
            let s = t.exp();
            let f = field.profile(s)[0];
            f * f * s.powf(n - 4.0)
        });
        let oracle = num / den;
        let reduced = fun.cutoff_ratio(c, k, &spec).unwrap();
        let full = minimizing_sequence_ratio(&inst, &g, None, &Params::default(), c, k, &spec).unwrap();
        assert!(full.converged);
        assert!((reduced - oracle).abs() <= 1e-7 * oracle, "k={k}: {reduced} vs {oracle}");
        assert!((full.ratio - oracle).abs() <= 1e-6 * oracle, "k={k}: {} vs {oracle}", full.ratio);
    }
}

#[test]
fn classical_series_decreases_towards_the_sharp_constant() {
    let g = GroupModel::euclidean(5).unwrap();
    let inst = InstanceId::ClassicalRellich.instance();
    let p = Params::default();
    let c = extremal_exponent(&inst, &g, &p).unwrap();
    let s = ratio_series(&inst, &g, None, &p, c, &[1, 2, 3, 4, 5], &QuadratureSpec::default()).unwrap();
    assert!(s.is_monotone(), "{:?}", s.points);
    assert!(s.violations().is_empty());
    let gap = s.relative_gap.unwrap();
    assert!(gap > 0.0 && gap < 0.25, "gap {gap}");
    assert!(s.points.iter().all(|q| q.ratio >= 25.0 / 16.0));
}

#[test]
fn heisenberg_hardy_series_is_monotone() {
    let g = GroupModel::heisenberg(1).unwrap();
    let inst = InstanceId::HorizontalHardy.instance();
    let p = Params::beta(0.0);
    let c = extremal_exponent(&inst, &g, &p).unwrap();
    let s = ratio_series(&inst, &g, None, &p, c, &[1, 2, 3], &QuadratureSpec::default()).unwrap();
    assert!(s.is_monotone(), "{:?}", s.points);
    assert!(s.violations().is_empty());
}

#[test]
fn best_constant_is_attained_by_its_witness() {
    let g = GroupModel::euclidean(5).unwrap();
    let inst = InstanceId::HorizontalHardy.instance();
    let p = Params::beta(1.0);
    let budget = SearchBudget {
        k_max: 3,
        window: 0.5,
        exponents: 3,
        random_fields: 4,
        seed: 7,
    };
    let spec = QuadratureSpec::default();
    let best = best_constant_estimate(&inst, &g, None, &p, &budget, &spec).unwrap();
    assert_eq!(best.evaluations, 3 * 3 + 4);
    assert!(best.estimate >= best.sharp_constant.unwrap());
    assert!(best.power_min.unwrap() <= best.random_min.unwrap());
    assert!(matches!(best.witness, Witness::Power { k: 3, .. }));
    let f = witness_field(&inst, &g, &best.witness).unwrap();
    let r = rellich_lab::catalog::evaluate(&inst, &g, None, &p, f.as_ref(), &spec).unwrap();
    assert_eq!(r.ratio, best.estimate);
}
