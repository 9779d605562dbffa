use std::sync::Arc;

use rellich_lab::catalog::{catalog, evaluate, CatalogError, InstanceId, Params};
use rellich_lab::field::{BumpField, Scaled, ScalarField};
use rellich_lab::group::GroupModel;
use rellich_lab::ops::DriftSpec;
use rellich_lab::quadrature::QuadratureSpec;
use rellich_lab::sampling::FieldSampler;

fn e(n: usize) -> GroupModel {
    GroupModel::euclidean(n).unwrap()
}

fn h(m: usize) -> GroupModel {
    GroupModel::heisenberg(m).unwrap()
}

fn params_for(id: InstanceId) -> Params {
    use InstanceId::*;
    match id {
        DaviesHinzWeighted => Params::alpha(-0.25).with_p(2.0),
        EuclidWeightedDriftRellich => Params::alpha(1.0),
        HorizontalWeightedRellich | DriftRellichStratified | DriftRellichStratifiedReduced => Params::delta(-1.0),
        HardyRellich => Params::delta(-1.5),
        HorizontalHardy => Params::beta(1.0),
        KombeRellich | PolarizableDriftRellich => Params::theta(1.0),
        KombeHardy => Params::theta(1.0).with_p(2.0),
        _ => Params::default(),
    }
}

#[test]
fn catalog_has_eleven_entries_in_order() {
    let c = catalog();
    assert_eq!(c.len(), 11);
    for (i, inst) in c.iter().enumerate() {
        assert_eq!(inst.entry as usize, i + 1);
        assert_eq!(inst.term_labels.len(), inst.constants(&e(5), &params_for(inst.id), None).len());
    }
}

#[test]
fn ids_round_trip_and_unknown_ids_list_the_valid_ones() {
    for id in InstanceId::ALL {
        assert_eq!(id.as_str().parse::<InstanceId>().unwrap(), id);
    }
    let err = "rellich".parse::<InstanceId>().unwrap_err();
    assert!(matches!(err, CatalogError::UnknownInstance(_)));
    let msg = err.to_string();
    for id in InstanceId::ALL {
        assert!(msg.contains(id.as_str()), "{msg}");
    }
}

#[test]
fn known_constants() {
    let c = InstanceId::ClassicalRellich.instance();
    assert_eq!(c.leading_constant(&e(5), &Params::default()), 25.0 / 16.0);
    assert_eq!(c.leading_constant(&e(8), &Params::default()), 64.0 * 16.0 / 16.0);
    let w = InstanceId::HorizontalWeightedRellich.instance();
    assert_eq!(w.leading_constant(&e(5), &Params::delta(-1.0)), 9.0 / 4.0);
    let hardy = InstanceId::HorizontalHardy.instance();
    assert_eq!(hardy.leading_constant(&h(1), &Params::beta(0.0)), 1.0);
    let k = InstanceId::KombeRellich.instance();
    // Q = 4, θ = 1: (Q+2θ−4)²(Q−2θ)²/16 = 4·4/16.
    assert_eq!(k.leading_constant(&h(1), &Params::theta(1.0)), 1.0);
    let dh = InstanceId::DaviesHinzWeighted.instance();
    assert_eq!(dh.sharp_constant(&e(5), &params_for(dh.id)), None);
}

#[test]
fn weighted_rellich_constant_factors_through_hardy_rellich_and_hardy() {
    let w = InstanceId::HorizontalWeightedRellich.instance();
    let hr = InstanceId::HardyRellich.instance();
    let hardy = InstanceId::HorizontalHardy.instance();
    for g in [e(3), e(5), e(7), h(2), h(3)] {
        let n = g.horizontal_dim() as f64;
        let mut d = -1.0;
        while d >= -n / 2.0 {
            let c5 = w.leading_constant(&g, &Params::delta(d));
            let c7 = hr.leading_constant(&g, &Params::delta(d));
            let c6 = hardy.leading_constant(&g, &Params::beta(d + 2.0));
            assert!((c5 - c7 * c6).abs() <= 1e-12 * c5.max(1.0), "{} δ={d}", g.id());
            d -= 0.25;
        }
    }
}

#[test]
fn admissibility() {
    use InstanceId::*;
    let ok = |id: InstanceId, g: &GroupModel, p: Params| id.instance().admissible(g, &p);
    assert!(ok(ClassicalRellich, &e(5), Params::default()).is_ok());
    assert!(ok(ClassicalRellich, &e(3), Params::default()).is_err());
    assert!(ok(ClassicalRellich, &h(2), Params::default()).is_err());
    assert!(ok(HorizontalWeightedRellich, &e(5), Params::delta(0.0)).is_err());
    assert!(ok(HorizontalWeightedRellich, &e(5), Params::delta(-2.5)).is_ok());
    assert!(ok(HorizontalWeightedRellich, &e(5), Params::delta(-2.6)).is_err());
    assert!(ok(HorizontalWeightedRellich, &e(5), Params::default()).is_err());
    assert!(ok(DaviesHinzWeighted, &e(5), Params::alpha(0.5).with_p(2.0)).is_err());
    assert!(ok(DaviesHinzWeighted, &e(5), Params::alpha(0.0).with_p(1.0)).is_err());
    assert!(ok(DriftRellichUnweighted, &h(2), Params::default()).is_err());
    assert!(ok(DriftRellichUnweighted, &e(5), Params::default()).is_ok());
    assert!(ok(KombeRellich, &h(1), Params::theta(0.0)).is_err());
    assert!(ok(KombeRellich, &h(1), Params::theta(0.5)).is_ok());
    assert!(ok(KombeHardy, &h(1), Params::theta(0.0).with_p(4.0)).is_err());
    assert!(ok(PolarizableDriftRellich, &e(5), Params::theta(1.0)).is_ok());
    assert!(ok(EuclidWeightedDriftRellich, &e(3), Params::alpha(0.0)).is_err());
    assert!(ok(EuclidWeightedDriftRellich, &e(3), Params::alpha(1.0)).is_ok());
}

#[test]
fn evaluation_rejects_bad_inputs() {
    let g = e(5);
    let spec = QuadratureSpec::default();
    let f = FieldSampler::new(&g, 0).field(0).unwrap();
    let inst = InstanceId::HorizontalWeightedRellich.instance();
    let err = evaluate(&inst, &g, None, &Params::delta(1.0), f.as_ref(), &spec).unwrap_err();
    assert!(matches!(err, CatalogError::Inadmissible { .. }));
    let other = FieldSampler::new(&e(3), 0).field(0).unwrap();
    let err = evaluate(&inst, &g, None, &Params::delta(-1.0), other.as_ref(), &spec).unwrap_err();
    assert!(matches!(err, CatalogError::Dimension { .. }));
    // A bump straddling x′ = 0 on the Heisenberg group meets the singular set.
    let g = h(1);
    let bump = BumpField::new(&g, vec![0.1, 0.0, 0.0], vec![0.5; 3], 0.0).unwrap();
    let err = evaluate(&inst, &h(2), None, &Params::delta(-1.0), &bump, &spec).unwrap_err();
    assert!(matches!(err, CatalogError::Dimension { .. }));
    let hardy = InstanceId::HorizontalHardy.instance();
    let err = evaluate(&hardy, &g, None, &Params::beta(0.0), &bump, &spec).unwrap_err();
    assert!(matches!(err, CatalogError::Support { .. }));
}

#[test]
fn every_entry_holds_on_random_fields() {
    let g = e(5);
    let drift = DriftSpec::new(&g, 0.5, vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let spec = QuadratureSpec::default();
    let sampler = FieldSampler::new(&g, 42);
    for inst in catalog() {
        let p = params_for(inst.id);
        for i in 0..3 {
            let f = sampler.field(i).unwrap();
            let r = evaluate(&inst, &g, Some(&drift), &p, f.as_ref(), &spec).unwrap();
            assert!(r.converged);
            assert!(r.holds(), "{} field {i}: deficit {} budget {}", inst.id, r.deficit, r.quad_err.budget);
            assert!(r.ratio >= r.leading_constant * (1.0 - 1e-9), "{}: {} < {}", inst.id, r.ratio, r.leading_constant);
        }
    }
}

#[test]
fn ratio_is_invariant_under_scaling_of_the_field() {
    let g = h(1);
    let spec = QuadratureSpec::default();
    let f = FieldSampler::new(&g, 8).field(2).unwrap();
    let s: Arc<dyn ScalarField> = Arc::new(Scaled::new(f.clone(), -7.25));
    for (id, p) in [
        (InstanceId::HorizontalHardy, Params::beta(0.0)),
        (InstanceId::KombeRellich, Params::theta(1.0)),
    ] {
        let inst = id.instance();
        let a = evaluate(&inst, &g, None, &p, f.as_ref(), &spec).unwrap();
        let b = evaluate(&inst, &g, None, &p, s.as_ref(), &spec).unwrap();
        assert!((a.ratio - b.ratio).abs() <= 1e-12 * a.ratio, "{id}: {} vs {}", a.ratio, b.ratio);
    }
}

#[test]
fn drift_rellich_without_drift_squares_the_weighted_rellich() {
    let g = e(5);
    let drift = DriftSpec::new(&g, 0.0, vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let spec = QuadratureSpec::default();
    let f = FieldSampler::new(&g, 1).field(0).unwrap();
    for d in [-1.0, -2.0] {
        let p = Params::delta(d);
        let five = evaluate(&InstanceId::HorizontalWeightedRellich.instance(), &g, None, &p, f.as_ref(), &spec).unwrap();
        let eight =
            evaluate(&InstanceId::DriftRellichStratified.instance(), &g, Some(&drift), &p, f.as_ref(), &spec).unwrap();
        assert!((eight.lhs - five.lhs * five.lhs).abs() <= 1e-10 * eight.lhs);
        let c5 = five.rhs_terms[0].constant;
        assert!((eight.rhs_terms[0].constant - c5 * c5).abs() <= 1e-12 * c5 * c5);
        assert_eq!(eight.rhs_terms[1].product, 0.0);
        assert_eq!(eight.rhs_terms[2].product, 0.0);
    }
}

#[test]
fn reduced_forms_drop_nonnegative_terms() {
    let g = e(5);
    let drift = DriftSpec::new(&g, 0.8, vec![0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
    let spec = QuadratureSpec::default();
    let f = FieldSampler::new(&g, 2).field(3).unwrap();
    for (full, reduced, p) in [
        (InstanceId::DriftRellichStratified, InstanceId::DriftRellichStratifiedReduced, Params::delta(-1.0)),
        (InstanceId::DriftRellichUnweighted, InstanceId::DriftRellichUnweightedReduced, Params::default()),
    ] {
        let a = evaluate(&full.instance(), &g, Some(&drift), &p, f.as_ref(), &spec).unwrap();
        let b = evaluate(&reduced.instance(), &g, Some(&drift), &p, f.as_ref(), &spec).unwrap();
        assert!(a.rhs_terms.iter().skip(1).all(|t| t.product >= 0.0));
        assert!(b.deficit >= a.deficit);
        assert!((a.lhs - b.lhs).abs() <= 1e-7 * a.lhs);
    }
}
