//! Pointwise identity suites at seeded random points.

use serde::Serialize;

use crate::group::GroupModel;
use crate::jet::Jet3;
use crate::ops::{
    character_residuals, gauge_residual, polarizable_identity_residual, power_divergence_residual,
    power_gradient_residual, DriftSpec, OpsError, Residual,
};
use crate::sampling::FieldRng;

/// Maximum relative residual of one identity over a point set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub group: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    pub points: usize,
    /// Points rejected as characteristic.
    pub skipped: usize,
    pub max_relative: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Tolerance of the differential identities.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Tolerance of the polarizable identity.
pub const POLARIZABLE_TOL: f64 = 1e-8;

/// A random point with `|x′| ≥ 0.05` in `[−2, 2]ⁿ`.
pub fn random_point(g: &GroupModel, rng: &mut FieldRng) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..g.dim()).map(|_| rng.range(-2.0, 2.0)).collect();
        if g.horizontal_norm(&x) >= 0.05 {
            return x;
        }
    }
}

/// `exp(⟨c, x⟩)·(1 + Σ q_i x_i x_{i+1})` with random `c`, `q`, as a jet at `x`.
fn random_smooth_jet(rng: &mut FieldRng, x: &[f64]) -> Jet3 {
    let n = x.len();
    let vars = Jet3::variables(x).expect("valid dimension");
    let mut lin = Jet3::zero(n).expect("valid dimension");
    let mut poly = Jet3::constant(n, 1.0).expect("valid dimension");
    for i in 0..n {
        lin = &lin + &vars[i].scale(rng.range(-0.7, 0.7));
        let j = (i + 1) % n;
        poly = &poly + &(&vars[i] * &vars[j]).scale(rng.range(-0.5, 0.5));
    }
    &lin.exp() * &poly
}

fn random_drift(g: &GroupModel, rng: &mut FieldRng) -> DriftSpec {
    let a = rng.direction(g.horizontal_dim());
    let scale = rng.range(0.2, 2.0);
    DriftSpec::new(g, rng.range(-1.5, 1.5), a.into_iter().map(|v| v * scale).collect())
        .expect("finite drift")
}

fn check<F>(
    name: &str,
    g: &GroupModel,
    b: Option<f64>,
    points: usize,
    seed: u64,
    tol: f64,
    mut residual: F,
) -> IdentityCheck
where
    F: FnMut(&mut FieldRng, &[f64]) -> Result<Vec<Residual>, OpsError>,
{
    let mut rng = FieldRng::new(seed);
    let mut max_rel: f64 = 0.0;
    let mut skipped = 0;
    let mut failed = false;
    for _ in 0..points {
        let x = random_point(g, &mut rng);
        match residual(&mut rng, &x) {
            Ok(rs) => {
                for r in rs {
                    let rel = r.relative();
                    if !rel.is_finite() {
                        failed = true;
                    }
                    max_rel = max_rel.max(rel);
                }
            }
            Err(OpsError::Characteristic) => skipped += 1,
            Err(_) => failed = true,
        }
    }
    IdentityCheck {
        name: name.to_string(),
        group: g.id().to_string(),
        b,
        points,
        skipped,
        max_relative: max_rel,
        tolerance: tol,
        passed: !failed && max_rel <= tol && skipped < points,
    }
}

/// Power-gradient, power-divergence, gauge and character identities.
pub fn differential_identities(g: &GroupModel, points: usize, seed: u64) -> Vec<IdentityCheck> {
    let n = g.horizontal_dim() as f64;
    let mut out = Vec::new();
    for (i, b) in [-3.0, -1.0, 0.5, 2.0].into_iter().enumerate() {
        out.push(check("power_gradient", g, Some(b), points, seed ^ (i as u64 + 1), IDENTITY_TOL, |_, x| {
            Ok(vec![power_gradient_residual(g, b, x)?])
        }));
    }
    for (i, b) in [0.0, 1.0, 2.0, n].into_iter().enumerate() {
        out.push(check("power_divergence", g, Some(b), points, seed ^ (i as u64 + 11), IDENTITY_TOL, |_, x| {
            Ok(vec![power_divergence_residual(g, b, x)?])
        }));
    }
    out.push(check("gauge", g, None, points, seed ^ 21, IDENTITY_TOL, |rng, x| {
        let drift = random_drift(g, rng);
        let f = random_smooth_jet(rng, x);
        Ok(vec![gauge_residual(g, &drift, &f, x)?])
    }));
    out.push(check("character", g, None, points, seed ^ 31, IDENTITY_TOL, |rng, x| {
        let drift = random_drift(g, rng);
        character_residuals(g, &drift, x)
    }));
    out
}

/// The polarizable identity at random non-characteristic points.
pub fn polarizable_identity(g: &GroupModel, points: usize, seed: u64) -> IdentityCheck {
    check("polarizable", g, None, points, seed ^ 41, POLARIZABLE_TOL, |_, x| {
        Ok(vec![polarizable_identity_residual(g, x)?])
    })
}
