//! Weighted norms, the symmetry defect and the Rayleigh quotient of `𝓛_X`.

use serde::Serialize;
use thiserror::Error;

use crate::field::ScalarField;
use crate::group::GroupModel;
use crate::ops::{character, drift_laplacian, DriftSpec};
use crate::quadrature::{integrate, AngularReduction, IntegrationDomain, QuadratureError, QuadratureSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegralError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// A value with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Domain for integrands built from `fields`, reduced by the symmetry of the drift.
pub fn domain_for(g: &GroupModel, fields: &[&dyn ScalarField], drift: Option<&DriftSpec>) -> IntegrationDomain {
    let supports: Vec<_> = fields.iter().map(|f| f.support()).collect();
    IntegrationDomain::covering(g, &supports, AngularReduction::for_drift(g, drift))
}

/// `(∫ |weight·f|^p χ dx)^{1/p}`, with `χ = 1` when `drift` is `None`.
pub fn weighted_norm(
    g: &GroupModel,
    drift: Option<&DriftSpec>,
    f: &dyn ScalarField,
    weight: &(dyn Fn(&[f64]) -> f64 + Sync),
    p: f64,
    dom: &IntegrationDomain,
    spec: &QuadratureSpec,
) -> Result<Estimate, IntegralError> {
    if !(p >= 1.0) {
        return Err(IntegralError::Invalid(format!("p = {p} must be at least 1")));
    }
    let _ = g;
    let r = integrate(dom, 1, spec, |x, out| {
        let v = f.jet_to(x, 0).value();
        if v != 0.0 {
            let chi = drift.map_or(1.0, |d| character(d, x));
            out[0] = (weight(x) * v).abs().powf(p) * chi;
        }
    })?;
    let i = r.values[0];
    let value = i.max(0.0).powf(1.0 / p);
    let error = if i > 0.0 {
        value / (p * i) * r.errors[0]
    } else {
        r.errors[0].powf(1.0 / p)
    };
    Ok(Estimate { value, error })
}

/// Defect of the symmetry of `𝓛_X` on `L²(μ_X)` for one pair of fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryDefect {
    /// `∫(𝓛_Xφ)ψ dμ_X − ∫φ(𝓛_Xψ) dμ_X`.
    pub defect: f64,
    /// `‖𝓛_Xφ‖·‖ψ‖` over the common support.
    pub scale: f64,
    pub error: f64,
}

impl SymmetryDefect {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.defect.abs()
        } else {
            self.defect.abs() / self.scale
        }
    }
}

pub fn symmetry_defect(
    g: &GroupModel,
    drift: &DriftSpec,
    phi: &dyn ScalarField,
    psi: &dyn ScalarField,
    dom: &IntegrationDomain,
    spec: &QuadratureSpec,
) -> Result<SymmetryDefect, IntegralError> {
    let r = integrate(dom, 4, spec, |x, out| {
        let fp = phi.jet_to(x, 2);
        let fq = psi.jet_to(x, 2);
        if fp.is_zero() && fq.is_zero() {
            return;
        }
        let chi = character(drift, x);
        let lp = drift_laplacian(g, drift, &fp, x);
        let lq = drift_laplacian(g, drift, &fq, x);
        out[0] = lp * fq.value() * chi;
        out[1] = fp.value() * lq * chi;
        out[2] = lp * lp * chi;
        out[3] = fq.value() * fq.value() * chi;
    })?;
    let v = &r.values;
    Ok(SymmetryDefect {
        defect: v[0] - v[1],
        scale: (v[2].max(0.0) * v[3].max(0.0)).sqrt(),
        error: r.errors[0] + r.errors[1],
    })
}

/// `⟨𝓛_X f, f⟩_{μ_X} / ‖f‖²_{μ_X}`.
pub fn rayleigh_quotient(
    g: &GroupModel,
    drift: &DriftSpec,
    f: &dyn ScalarField,
    dom: &IntegrationDomain,
    spec: &QuadratureSpec,
) -> Result<Estimate, IntegralError> {
    let r = integrate(dom, 2, spec, |x, out| {
        let j = f.jet_to(x, 2);
        if j.is_zero() {
            return;
        }
        let chi = character(drift, x);
        out[0] = drift_laplacian(g, drift, &j, x) * j.value() * chi;
        out[1] = j.value() * j.value() * chi;
    })?;
    let (a, b) = (r.values[0], r.values[1]);
    if b <= 0.0 {
        return Err(IntegralError::Invalid("field has zero norm".into()));
    }
    Ok(Estimate {
        value: a / b,
        error: r.errors[0] / b + a.abs() * r.errors[1] / (b * b),
    })
}
