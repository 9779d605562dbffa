//! Acceptance criteria, one test each. Every test prints a `PASS` or `FAIL`
//! line to stderr, uncaptured, before asserting.

use std::io::Write;
use std::time::Instant;

use rellich_lab::catalog::{evaluate, InstanceId, Params};
use rellich_lab::group::GroupModel;
use rellich_lab::identities::{differential_identities, random_point};
use rellich_lab::integrals::{domain_for, rayleigh_quotient, symmetry_defect};
use rellich_lab::ops::{polarizable_identity_lhs, DriftSpec, OpsError};
use rellich_lab::quadrature::QuadratureSpec;
use rellich_lab::runner::{execute, run, ExperimentConfig, Mode};
use rellich_lab::sampling::{FieldRng, FieldSampler};
use rellich_lab::sharpness::{extremal_exponent, ratio_series};

fn report(n: u32, name: &str, pass: bool, start: Instant, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "acceptance {n} {name}: {verdict} ({detail}; {:.1} s)\n",
        start.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn group(id: &str) -> GroupModel {
    GroupModel::parse(id).unwrap()
}

fn unit(n: usize, v: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = v.iter().copied().chain(std::iter::repeat(0.0)).take(n).collect();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.iter_mut().for_each(|x| *x /= norm);
    a
}

#[test]
fn criterion_1_identities() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut all = true;
    for id in ["euclidean:3", "euclidean:5", "heisenberg:1", "heisenberg:2"] {
        for c in differential_identities(&group(id), 1000, 2024) {
            all &= c.passed && c.points == 1000;
            worst = worst.max(c.max_relative);
        }
    }
    let pass = all && worst <= 1e-9;
    report(1, "identity suite", pass, start, &format!("max relative residual {worst:.2e}"));
}

#[test]
fn criterion_2_polarizable_identity() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut evaluated = 0;
    for (id, exact) in [("euclidean:5", 4.0 / 3.0), ("heisenberg:1", 1.5)] {
        let g = group(id);
        let mut rng = FieldRng::new(7);
        let mut count = 0;
        while count < 1000 {
            let x = random_point(&g, &mut rng);
            match polarizable_identity_lhs(&g, &x) {
                Ok(v) => {
                    worst = worst.max((v - exact).abs());
                    count += 1;
                }
                Err(OpsError::Characteristic) => {}
                Err(e) => panic!("{id}: {e}"),
            }
        }
        evaluated += count;
    }
    let pass = worst <= 1e-8;
    report(2, "polarizable identity", pass, start, &format!("{evaluated} points, max |residual| {worst:.2e}"));
}

#[test]
fn criterion_3_symmetry() {
    let start = Instant::now();
    let spec = QuadratureSpec::default();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut errors = Vec::new();
    for id in ["euclidean:3", "euclidean:5", "heisenberg:1"] {
        let g = group(id);
        let n = g.horizontal_dim();
        let sampler = FieldSampler::new(&g, 11);
        for gamma in [0.3, 1.0] {
            for dir in [unit(n, &[1.0]), unit(n, &[0.6, 0.8])] {
                let d = DriftSpec::new(&g, gamma, dir).unwrap();
                for i in 0..20 {
                    let (phi, psi) = sampler.pair(i).unwrap();
                    let dom = domain_for(&g, &[phi.as_ref(), psi.as_ref()], Some(&d));
                    match symmetry_defect(&g, &d, phi.as_ref(), psi.as_ref(), &dom, &spec) {
                        Ok(s) => {
                            worst = worst.max(s.relative());
                            count += 1;
                        }
                        Err(e) => errors.push(format!("{id} γ={gamma} pair {i}: {e}")),
                    }
                }
            }
        }
    }
    let pass = errors.is_empty() && worst <= 1e-6;
    report(
        3,
        "symmetry",
        pass,
        start,
        &format!("{count} pairs, max relative defect {worst:.2e}, {} errors {:?}", errors.len(), errors),
    );
}

#[test]
fn criterion_4_spectrum_bound() {
    let start = Instant::now();
    let spec = QuadratureSpec {
        max_depth: 14,
        ..QuadratureSpec::default()
    };
    let mut min_margin = f64::INFINITY;
    let mut count = 0;
    let mut errors = Vec::new();
    let cases = [("euclidean:3", 2.0, vec![1.0]), ("heisenberg:1", 1.0, vec![0.6, 0.8])];
    for (id, gamma, a) in cases {
        let g = group(id);
        let d = DriftSpec::new(&g, gamma, unit(g.horizontal_dim(), &a)).unwrap();
        if id == "euclidean:3" {
            assert_eq!(d.gamma2_b2(), 1.0);
        }
        let sampler = FieldSampler::new(&g, 4);
        for i in 0..50 {
            let f = sampler.field(i).unwrap();
            let dom = domain_for(&g, &[f.as_ref()], Some(&d));
            match rayleigh_quotient(&g, &d, f.as_ref(), &dom, &spec) {
                Ok(r) => {
                    min_margin = min_margin.min(r.value - d.gamma2_b2());
                    count += 1;
                }
                Err(e) => errors.push(format!("{id} field {i}: {e}")),
            }
        }
    }
    let pass = errors.is_empty() && min_margin >= -1e-8;
    report(
        4,
        "spectrum bound",
        pass,
        start,
        &format!("{count} fields, min(rayleigh − γ²b²) {min_margin:.4e}, errors {errors:?}"),
    );
}

#[test]
fn criterion_5_decomposition() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut failures = 0;
    for (id, gammas) in [("euclidean:5", vec![0.0, 1.0]), ("heisenberg:2", vec![0.5])] {
        let g = group(id);
        let mut a = vec![0.0; g.horizontal_dim()];
        a[0] = 1.0;
        let cfg = ExperimentConfig {
            mode: Mode::Decomposition,
            group: id.into(),
            delta: Some(vec![-1.0]),
            gamma: gammas,
            drift_a: vec![a],
            samples: 20,
            ..ExperimentConfig::default()
        };
        let out = execute(&cfg);
        failures += out.failures.len();
        for r in &out.summary.decomposition {
            worst = worst.max(r.relative);
            count += 1;
        }
    }
    let pass = failures == 0 && count == 60 && worst <= 1e-6;
    report(5, "decomposition", pass, start, &format!("{count} fields, max |residual|/lhs {worst:.2e}"));
}

#[test]
fn criterion_6_deficits() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for id in ["euclidean:5", "heisenberg:1"] {
        let g = group(id);
        let mut a = vec![0.0; g.horizontal_dim()];
        a[0] = 1.0;
        let cfg = ExperimentConfig {
            mode: Mode::Inequalities,
            group: id.into(),
            instances: InstanceId::ALL.to_vec(),
            drift_a: vec![a],
            fields: 100,
            ..ExperimentConfig::default()
        };
        let out = execute(&cfg);
        let s = out.summary.inequalities.as_ref().unwrap();
        let entries: std::collections::BTreeSet<u8> = out.reports.iter().map(|r| r.entry).collect();
        if id == "euclidean:5" {
            pass &= entries.len() == 11;
            let dh: std::collections::BTreeSet<String> = out
                .reports
                .iter()
                .filter(|r| r.instance == InstanceId::DaviesHinzWeighted)
                .map(|r| r.params.p.unwrap().to_string())
                .collect();
            pass &= dh.len() == 3;
        }
        pass &= out.failures.is_empty() && s.failed == 0 && s.not_converged == 0;
        lines.push(format!(
            "{id}: {} reports over entries {entries:?}, {} failed, {} unconverged, min relative deficit {:.3e}",
            s.evaluated,
            s.failed,
            s.not_converged,
            s.min_relative_deficit.unwrap_or(f64::NAN)
        ));
    }
    report(6, "deficit nonnegativity", pass, start, &lines.join("; "));
}

#[test]
fn criterion_7_sharpness() {
    let start = Instant::now();
    let spec = QuadratureSpec::default();
    let ks: Vec<u32> = (1..=8).collect();
    let cases = [
        (InstanceId::ClassicalRellich, "euclidean:5", Params::default(), 25.0 / 16.0),
        (InstanceId::HorizontalWeightedRellich, "euclidean:5", Params::delta(-1.0), 9.0 / 4.0),
        (InstanceId::HorizontalHardy, "euclidean:5", Params::beta(1.0), 1.5),
        (InstanceId::KombeRellich, "heisenberg:1", Params::theta(1.0), 1.0),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (id, gid, p, expected) in cases {
        let g = group(gid);
        let inst = id.instance();
        let sharp = inst.sharp_constant(&g, &p).unwrap();
        let c = extremal_exponent(&inst, &g, &p).unwrap();
        let s = ratio_series(&inst, &g, None, &p, c, &ks, &spec).unwrap();
        let gap = s.relative_gap.unwrap();
        let ok = (sharp - expected).abs() <= 1e-12 * expected
            && s.points.iter().all(|q| q.converged)
            && s.is_monotone()
            && s.violations().is_empty()
            && gap <= 0.10;
        pass &= ok;
        lines.push(format!("{id} on {gid}: C*={c:.4}, sharp {sharp}, best ratio {:.6}, gap {:.2}%", s.infimum, 100.0 * gap));
    }
    report(7, "sharpness approach", pass, start, &lines.join("; "));
}

#[test]
fn criterion_8_euclidean_cancellation() {
    let start = Instant::now();
    let g = group("euclidean:5");
    let spec = QuadratureSpec::default();
    let sampler = FieldSampler::new(&g, 3);
    let polar = InstanceId::PolarizableDriftRellich.instance();
    let weighted = InstanceId::EuclidWeightedDriftRellich.instance();
    let mut worst_cancel: f64 = 0.0;
    let mut worst_match: f64 = 0.0;
    for (gamma, theta) in [(0.5, 1.0), (1.0, 1.5)] {
        let d = DriftSpec::new(&g, gamma, unit(5, &[0.6, 0.8])).unwrap();
        for i in 0..20 {
            let f = sampler.field(i).unwrap();
            let r11 = evaluate(&polar, &g, Some(&d), &Params::theta(theta), f.as_ref(), &spec).unwrap();
            let r4 = evaluate(&weighted, &g, Some(&d), &Params::alpha(theta), f.as_ref(), &spec).unwrap();
            let (t4, t5) = (r11.rhs_terms[3].product, r11.rhs_terms[4].product);
            worst_cancel = worst_cancel.max((t4 + t5).abs() / t4.abs().max(t5.abs()));
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            worst_match = worst_match.max(rel(r11.lhs, r4.lhs));
            for k in 0..3 {
                let (a, b) = (&r11.rhs_terms[k], &r4.rhs_terms[k]);
                worst_match = worst_match.max(rel(a.constant, b.constant)).max(rel(a.product, b.product));
            }
        }
    }
    let pass = worst_cancel <= 1e-8 && worst_match <= 1e-6;
    report(
        8,
        "euclidean cancellation",
        pass,
        start,
        &format!("max |t4+t5|/max|t| {worst_cancel:.2e}, max term mismatch vs entry 4 {worst_match:.2e}"),
    );
}

#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut csv = Vec::new();
    for name in ["first", "second"] {
        let cfg = ExperimentConfig {
            mode: Mode::Sharpness,
            group: "euclidean:5".into(),
            instances: vec![InstanceId::ClassicalRellich, InstanceId::HorizontalHardy],
            seed: 5,
            k_max: 3,
            random_fields: 5,
            out: dir.path().join(name),
            ..ExperimentConfig::default()
        };
        run(&cfg).unwrap();
        csv.push(std::fs::read(dir.path().join(name).join("ratios.csv")).unwrap());
    }
    let rows = csv[0].iter().filter(|&&b| b == b'\n').count();
    let pass = rows > 1 && csv[0] == csv[1];
    report(9, "determinism", pass, start, &format!("{} bytes, {rows} lines", csv[0].len()));
}
