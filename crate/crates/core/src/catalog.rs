//! Rellich, Hardy and drift inequalities as evaluable objects.
//!
//! Every instance is a list of integrals evaluated on shared quadrature nodes:
//! the left-hand side first, then one integral per right-hand term. The
//! report combines them with the closed-form constants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{ScalarField, SupportShape};
use crate::group::{Family, GroupModel};
use crate::jet::Jet3;
use crate::ops::{
    character, character_jet, drift_laplacian, horizontal_gradient, horizontal_gradient_jets,
    sub_laplacian, DriftSpec,
};
use crate::quadrature::{
    integrate, AngularReduction, Integral, IntegrationDomain, QuadratureError, QuadratureSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown instance `{0}`; valid ids: {ids}", ids = valid_ids())]
    UnknownInstance(String),
    #[error("{instance} is not admissible: {reason}")]
    Inadmissible { instance: InstanceId, reason: String },
    #[error("field support is not admissible for {instance}: {reason}")]
    Support { instance: InstanceId, reason: String },
    #[error("field dimension {got} does not match group dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("quadrature did not converge for {}", .0.instance)]
    NotConverged(Box<EvaluationReport>),
    #[error(transparent)]
    Quadrature(QuadratureError),
}

fn valid_ids() -> String {
    InstanceId::ALL.map(InstanceId::as_str).join(", ")
}

impl CatalogError {
    /// Best available report after a quadrature failure.
    pub fn partial(&self) -> Option<&EvaluationReport> {
        match self {
            CatalogError::NotConverged(r) => Some(r),
            _ => None,
        }
    }
}

/// Identifier of an evaluable inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceId {
    ClassicalRellich,
    DaviesHinzWeighted,
    EuclidDriftRellich,
    EuclidWeightedDriftRellich,
    HorizontalWeightedRellich,
    HorizontalHardy,
    HardyRellich,
    DriftRellichStratified,
    DriftRellichStratifiedReduced,
    DriftRellichUnweighted,
    DriftRellichUnweightedReduced,
    KombeRellich,
    KombeHardy,
    PolarizableDriftRellich,
}

impl InstanceId {
    pub const ALL: [InstanceId; 14] = [
        Self::ClassicalRellich,
        Self::DaviesHinzWeighted,
        Self::EuclidDriftRellich,
        Self::EuclidWeightedDriftRellich,
        Self::HorizontalWeightedRellich,
        Self::HorizontalHardy,
        Self::HardyRellich,
        Self::DriftRellichStratified,
        Self::DriftRellichStratifiedReduced,
        Self::DriftRellichUnweighted,
        Self::DriftRellichUnweightedReduced,
        Self::KombeRellich,
        Self::KombeHardy,
        Self::PolarizableDriftRellich,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ClassicalRellich => "classical_rellich",
            Self::DaviesHinzWeighted => "davies_hinz_weighted",
            Self::EuclidDriftRellich => "euclid_drift_rellich",
            Self::EuclidWeightedDriftRellich => "euclid_weighted_drift_rellich",
            Self::HorizontalWeightedRellich => "horizontal_weighted_rellich",
            Self::HorizontalHardy => "horizontal_hardy",
            Self::HardyRellich => "hardy_rellich",
            Self::DriftRellichStratified => "drift_rellich_stratified",
            Self::DriftRellichStratifiedReduced => "drift_rellich_stratified_reduced",
            Self::DriftRellichUnweighted => "drift_rellich_unweighted",
            Self::DriftRellichUnweightedReduced => "drift_rellich_unweighted_reduced",
            Self::KombeRellich => "kombe_rellich",
            Self::KombeHardy => "kombe_hardy",
            Self::PolarizableDriftRellich => "polarizable_drift_rellich",
        }
    }

    /// Position in the catalog, 1 through 11.
    pub fn entry(self) -> u8 {
        match self {
            Self::ClassicalRellich => 1,
            Self::DaviesHinzWeighted => 2,
            Self::EuclidDriftRellich => 3,
            Self::EuclidWeightedDriftRellich => 4,
            Self::HorizontalWeightedRellich => 5,
            Self::HorizontalHardy => 6,
            Self::HardyRellich => 7,
            Self::DriftRellichStratified | Self::DriftRellichStratifiedReduced => 8,
            Self::DriftRellichUnweighted | Self::DriftRellichUnweightedReduced => 9,
            Self::KombeRellich | Self::KombeHardy => 10,
            Self::PolarizableDriftRellich => 11,
        }
    }

    pub fn instance(self) -> InequalityInstance {
        InequalityInstance::new(self)
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InstanceId {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| CatalogError::UnknownInstance(s.to_string()))
    }
}

/// Real parameters of an instance; unused ones are ignored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl Params {
    pub fn delta(delta: f64) -> Self {
        Self { delta: Some(delta), ..Self::default() }
    }
    pub fn alpha(alpha: f64) -> Self {
        Self { alpha: Some(alpha), ..Self::default() }
    }
    pub fn theta(theta: f64) -> Self {
        Self { theta: Some(theta), ..Self::default() }
    }
    pub fn beta(beta: f64) -> Self {
        Self { beta: Some(beta), ..Self::default() }
    }
    pub fn with_p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }
}

/// Which parameter an instance reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    Delta,
    Alpha,
    Theta,
    Beta,
    P,
}

/// Measure on both sides of an inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Haar,
    Drift,
}

/// How the printed inequality combines its integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// `∫ lhs ≥ Σ c_i ∫ term_i`.
    Integral,
    /// `(∫ lhs)^{1/2} ≥ c (∫ term)^{1/2}`.
    Norm,
    /// `∫ lhs ≤ c ∫ term`; the deficit is `c ∫ term − ∫ lhs`.
    Reversed,
}

/// Group hypotheses of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GroupRequirements {
    pub euclidean_only: bool,
    pub polarizable: bool,
    pub min_horizontal_dim: usize,
    pub min_homogeneous_dim: usize,
}

/// One inequality of the catalog.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityInstance {
    pub id: InstanceId,
    pub entry: u8,
    pub title: &'static str,
    pub measure: Measure,
    pub form: Form,
    pub requires: GroupRequirements,
    pub params: &'static [ParamName],
    pub term_labels: &'static [&'static str],
}

const DRIFT_LABELS: &[&str] = &["rellich", "drift_gamma2", "drift_gamma4"];

impl InequalityInstance {
    pub fn new(id: InstanceId) -> Self {
        use InstanceId::*;
        use ParamName::*;
        let req = |euclidean_only, polarizable, n, q| GroupRequirements {
            euclidean_only,
            polarizable,
            min_horizontal_dim: n,
            min_homogeneous_dim: q,
        };
        let (title, measure, form, requires, params, term_labels): (
            &'static str,
            Measure,
            Form,
            GroupRequirements,
            &'static [ParamName],
            &'static [&'static str],
        ) = match id {
            ClassicalRellich => (
                "classical Rellich inequality",
                Measure::Haar,
                Form::Integral,
                req(true, false, 5, 5),
                &[],
                &["rellich"],
            ),
            DaviesHinzWeighted => (
                "weighted L^p Rellich inequality with reversed constant",
                Measure::Haar,
                Form::Reversed,
                req(true, false, 1, 1),
                &[P, Alpha],
                &["laplacian"],
            ),
            EuclidDriftRellich => (
                "Rellich inequality for the Laplacian with drift",
                Measure::Drift,
                Form::Integral,
                req(true, false, 5, 5),
                &[],
                DRIFT_LABELS,
            ),
            EuclidWeightedDriftRellich => (
                "weighted Rellich inequality for the Laplacian with drift",
                Measure::Drift,
                Form::Integral,
                req(true, false, 3, 3),
                &[Alpha],
                DRIFT_LABELS,
            ),
            HorizontalWeightedRellich => (
                "horizontal weighted Rellich inequality",
                Measure::Haar,
                Form::Norm,
                req(false, false, 3, 3),
                &[Delta],
                &["rellich"],
            ),
            HorizontalHardy => (
                "horizontal weighted Hardy inequality",
                Measure::Haar,
                Form::Norm,
                req(false, false, 1, 1),
                &[Beta],
                &["hardy"],
            ),
            HardyRellich => (
                "horizontal Hardy–Rellich inequality",
                Measure::Haar,
                Form::Norm,
                req(false, false, 3, 3),
                &[Delta],
                &["hardy_rellich"],
            ),
            DriftRellichStratified => (
                "horizontal weighted Rellich inequality with drift",
                Measure::Drift,
                Form::Integral,
                req(false, false, 3, 3),
                &[Delta],
                DRIFT_LABELS,
            ),
            DriftRellichStratifiedReduced => (
                "horizontal weighted Rellich inequality with drift, drift terms dropped",
                Measure::Drift,
                Form::Integral,
                req(false, false, 3, 3),
                &[Delta],
                &["rellich"],
            ),
            DriftRellichUnweighted => (
                "horizontal Rellich inequality with drift",
                Measure::Drift,
                Form::Integral,
                req(false, false, 5, 5),
                &[],
                DRIFT_LABELS,
            ),
            DriftRellichUnweightedReduced => (
                "horizontal Rellich inequality with drift, drift terms dropped",
                Measure::Drift,
                Form::Integral,
                req(false, false, 5, 5),
                &[],
                &["rellich"],
            ),
            KombeRellich => (
                "Rellich inequality with weights from the fundamental solution",
                Measure::Haar,
                Form::Integral,
                req(false, true, 1, 3),
                &[Theta],
                &["rellich"],
            ),
            KombeHardy => (
                "Hardy inequality with weights from the fundamental solution",
                Measure::Haar,
                Form::Integral,
                req(false, true, 1, 3),
                &[Theta, P],
                &["hardy"],
            ),
            PolarizableDriftRellich => (
                "Rellich inequality with drift on a polarizable group",
                Measure::Drift,
                Form::Integral,
                req(false, true, 1, 3),
                &[Theta],
                &["rellich", "drift_gamma2", "drift_gamma4", "polar_gamma2", "polar_integral"],
            ),
        };
        Self {
            id,
            entry: id.entry(),
            title,
            measure,
            form,
            requires,
            params,
            term_labels,
        }
    }

    /// Checks every hypothesis on `(g, params)`; the error names the first failure.
    pub fn admissible(&self, g: &GroupModel, params: &Params) -> Result<(), String> {
        use InstanceId::*;
        let n = g.horizontal_dim() as f64;
        let q = g.homogeneous_dim() as f64;
        let r = &self.requires;
        if r.euclidean_only && g.family() != Family::Euclidean {
            return Err("needs a Euclidean group".into());
        }
        if r.polarizable && !g.is_polarizable() {
            return Err("needs a polarizable group".into());
        }
        if g.horizontal_dim() < r.min_horizontal_dim {
            return Err(format!("N ≥ {} fails", r.min_horizontal_dim));
        }
        if g.homogeneous_dim() < r.min_homogeneous_dim {
            return Err(format!("Q ≥ {} fails", r.min_homogeneous_dim));
        }
        let get = |name: ParamName| -> Result<f64, String> {
            let v = match name {
                ParamName::Delta => params.delta,
                ParamName::Alpha => params.alpha,
                ParamName::Theta => params.theta,
                ParamName::Beta => params.beta,
                ParamName::P => match self.id {
                    KombeHardy => Some(params.p.unwrap_or(2.0)),
                    _ => params.p,
                },
            };
            match v {
                Some(v) if v.is_finite() => Ok(v),
                Some(_) => Err(format!("{name:?} is not finite").to_lowercase()),
                None => Err(format!("missing parameter {name:?}").to_lowercase()),
            }
        };
        for &name in self.params {
            get(name)?;
        }
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(format!("{what} fails")) };
        match self.id {
            ClassicalRellich | EuclidDriftRellich => Ok(()),
            DaviesHinzWeighted => {
                let p = get(ParamName::P)?;
                let a = get(ParamName::Alpha)?;
                check(p > 1.0, "p > 1")?;
                check(-1.0 < a && a < (n - 4.0) / 2.0, "−1 < α < (n−4)/2")
            }
            EuclidWeightedDriftRellich => {
                let a = get(ParamName::Alpha)?;
                check(n + 2.0 * a - 4.0 > 0.0, "n + 2α − 4 > 0")
            }
            HorizontalWeightedRellich | DriftRellichStratified => {
                let d = get(ParamName::Delta)?;
                check(-n / 2.0 <= d && d <= -1.0, "−N/2 ≤ δ ≤ −1")
            }
            DriftRellichStratifiedReduced => {
                let d = get(ParamName::Delta)?;
                check(-n / 2.0 <= d && d <= -1.0, "−N/2 ≤ δ ≤ −1")?;
                check(
                    (n - 2.0 * d - 2.0) * (n + 2.0 * d - 2.0) >= 0.0,
                    "(N−2δ−2)(N+2δ−2) ≥ 0",
                )
            }
            HorizontalHardy => Ok(()),
            HardyRellich => {
                let d = get(ParamName::Delta)?;
                check(2.0 - n <= 2.0 * d + 2.0 && 2.0 * d + 2.0 <= 0.0, "2 − N ≤ 2δ + 2 ≤ 0")
            }
            DriftRellichUnweighted | DriftRellichUnweightedReduced => check(n > 4.0, "N > 4"),
            KombeRellich | PolarizableDriftRellich => {
                let t = get(ParamName::Theta)?;
                check(q + 2.0 * t - 4.0 > 0.0, "Q + 2θ − 4 > 0")
            }
            KombeHardy => {
                let t = get(ParamName::Theta)?;
                let p = get(ParamName::P)?;
                check(1.0 < p && p < q, "1 < p < Q")?;
                check(2.0 * t - 2.0 > -q, "2θ − 2 > −Q")
            }
        }
    }

    /// Right-hand constants in the order of `term_labels`.
    ///
    /// For [`Form::Norm`] the constant multiplies a norm; otherwise it
    /// multiplies an integral. Panics on inadmissible parameters only through
    /// `unwrap_or(0.0)` defaults, so call [`Self::admissible`] first.
    pub fn constants(&self, g: &GroupModel, params: &Params, drift: Option<&DriftSpec>) -> Vec<f64> {
        use InstanceId::*;
        let n = g.horizontal_dim() as f64;
        let q = g.homogeneous_dim() as f64;
        let gb2 = drift.map_or(0.0, |d| d.gamma2_b2());
        let gb4 = gb2 * gb2;
        let delta = params.delta.unwrap_or(0.0);
        let alpha = params.alpha.unwrap_or(0.0);
        let theta = params.theta.unwrap_or(0.0);
        let beta = params.beta.unwrap_or(0.0);
        let p = params.p.unwrap_or(2.0);
        let stratified = |d: f64| {
            vec![
                ((n - 2.0 * d - 4.0) * (n + 2.0 * d) / 4.0).powi(2),
                gb2 * (n - 2.0 * d - 2.0) * (n + 2.0 * d - 2.0) / 2.0,
                gb4,
            ]
        };
        match self.id {
            ClassicalRellich => vec![n * n * (n - 4.0).powi(2) / 16.0],
            DaviesHinzWeighted => {
                let k = p * p / ((n - 2.0 * alpha - 4.0) * ((p - 1.0) * n + 2.0 * alpha + 4.0 - 2.0 * p));
                vec![k.powf(p)]
            }
            EuclidDriftRellich => vec![n * n * (n - 4.0).powi(2) / 16.0, gb2 * (n - 2.0).powi(2) / 2.0, gb4],
            EuclidWeightedDriftRellich => vec![
                (n + 2.0 * alpha - 4.0).powi(2) * (n - 2.0 * alpha).powi(2) / 16.0,
                gb2 * (n + 2.0 * alpha - 2.0) * (n - 2.0 * alpha - 2.0) / 2.0,
                gb4,
            ],
            HorizontalWeightedRellich => vec![((n - 2.0 * delta - 4.0) * (n + 2.0 * delta) / 4.0).abs()],
            HorizontalHardy => vec![((n - 2.0 * beta) / 2.0).abs()],
            HardyRellich => vec![((n + 2.0 * delta) / 2.0).abs()],
            DriftRellichStratified => stratified(delta),
            DriftRellichStratifiedReduced => vec![stratified(delta)[0]],
            DriftRellichUnweighted => stratified(0.0),
            DriftRellichUnweightedReduced => vec![stratified(0.0)[0]],
            KombeRellich => vec![(q + 2.0 * theta - 4.0).powi(2) * (q - 2.0 * theta).powi(2) / 16.0],
            KombeHardy => vec![((q + 2.0 * theta - 2.0) / p).powf(p)],
            PolarizableDriftRellich => vec![
                (q + 2.0 * theta - 4.0).powi(2) * (q - 2.0 * theta).powi(2) / 16.0,
                gb2 * (q + 2.0 * theta - 2.0) * (q - 2.0 * theta - 2.0) / 2.0,
                gb4,
                2.0 * gb2 * (q - 1.0) * (3.0 * q - 4.0),
                2.0 * gb2,
            ],
        }
    }

    /// Lower bound for [`EvaluationReport::ratio`] implied by the inequality.
    pub fn leading_constant(&self, g: &GroupModel, params: &Params) -> f64 {
        let c = self.constants(g, params, None)[0];
        match self.form {
            Form::Reversed => 1.0 / c,
            _ => c,
        }
    }

    /// The leading constant when it is claimed to be sharp.
    pub fn sharp_constant(&self, g: &GroupModel, params: &Params) -> Option<f64> {
        use InstanceId::*;
        let n = g.horizontal_dim() as f64;
        let c = self.leading_constant(g, params);
        let claimed = match self.id {
            DaviesHinzWeighted | PolarizableDriftRellich => false,
            EuclidWeightedDriftRellich => {
                let a = params.alpha.unwrap_or(0.0);
                (n - 2.0 * a) * (n - 2.0 * a - 2.0) != 0.0 && a >= 1.0 && n >= 2.0 * a
            }
            HorizontalWeightedRellich | HardyRellich => n + 2.0 * params.delta.unwrap_or(0.0) != 0.0,
            DriftRellichStratified | DriftRellichStratifiedReduced => {
                let d = params.delta.unwrap_or(0.0);
                (n + 2.0 * d) * (n + 2.0 * d - 2.0) != 0.0
            }
            HorizontalHardy => n - 2.0 * params.beta.unwrap_or(0.0) != 0.0,
            _ => true,
        };
        (claimed && c > 0.0).then_some(c)
    }

    fn needs_d(&self) -> bool {
        matches!(
            self.id,
            InstanceId::KombeRellich | InstanceId::KombeHardy | InstanceId::PolarizableDriftRellich
        )
    }

    /// Rejects fields whose support meets the singular set of the weights.
    pub fn check_support(&self, g: &GroupModel, f: &dyn ScalarField) -> Result<(), CatalogError> {
        if f.dim() != g.dim() {
            return Err(CatalogError::Dimension { expected: g.dim(), got: f.dim() });
        }
        let s = f.support();
        let radial_gap = match &s.shape {
            SupportShape::Homogeneous { radius, .. } => radius.0,
            _ => 0.0,
        };
        let euclid = g.family() == Family::Euclidean;
        let ok = if s.shape == SupportShape::Empty || s.r_min > 0.0 {
            true
        } else if self.needs_d() {
            radial_gap > 0.0 && (euclid || self.id != InstanceId::PolarizableDriftRellich)
        } else {
            euclid && radial_gap > 0.0
        };
        if ok {
            Ok(())
        } else {
            Err(CatalogError::Support {
                instance: self.id,
                reason: "support must stay away from the singular set of the weights".into(),
            })
        }
    }

    /// Integrals evaluated by [`evaluate`]: the left side, then one per
    /// distinct right-hand integrand.
    fn component_count(&self) -> usize {
        match self.id {
            InstanceId::PolarizableDriftRellich => 5,
            _ => 1 + self.term_labels.len(),
        }
    }

    fn uses_drift(&self) -> bool {
        self.measure == Measure::Drift
    }
}

/// The 11 catalog entries, one primary instance each.
pub fn catalog() -> Vec<InequalityInstance> {
    use InstanceId::*;
    [
        ClassicalRellich,
        DaviesHinzWeighted,
        EuclidDriftRellich,
        EuclidWeightedDriftRellich,
        HorizontalWeightedRellich,
        HorizontalHardy,
        HardyRellich,
        DriftRellichStratified,
        DriftRellichUnweighted,
        KombeRellich,
        PolarizableDriftRellich,
    ]
    .into_iter()
    .map(InequalityInstance::new)
    .collect()
}

/// One right-hand term of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermReport {
    pub label: String,
    pub constant: f64,
    /// The norm for [`Form::Norm`], otherwise the integral (squared norm for `p = 2`).
    pub norm: f64,
    pub product: f64,
    pub error: f64,
}

/// Quadrature error estimates attached to a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadErr {
    pub lhs: f64,
    pub terms: Vec<f64>,
    /// Bound on the error of the deficit, including a rounding floor.
    pub budget: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub instance: InstanceId,
    pub entry: u8,
    pub group: String,
    pub params: Params,
    pub gamma: f64,
    pub a: Vec<f64>,
    pub form: Form,
    pub lhs: f64,
    pub rhs_terms: Vec<TermReport>,
    pub rhs_total: f64,
    /// `lhs − rhs_total`, or `rhs_total − lhs` for [`Form::Reversed`].
    pub deficit: f64,
    /// Left side over the leading norm, or the leading integral over the
    /// left side for [`Form::Reversed`]; bounded below by `leading_constant`.
    pub ratio: f64,
    pub ratio_error: f64,
    pub leading_constant: f64,
    pub sharp_constant: Option<f64>,
    pub sharpness_claimed: bool,
    pub quad_err: QuadErr,
    pub converged: bool,
}

impl EvaluationReport {
    /// `deficit ≥ −budget`.
    pub fn holds(&self) -> bool {
        self.deficit >= -self.quad_err.budget
    }
}

/// Pointwise weights that depend on the homogeneous norm.
struct NormWeights {
    d: f64,
    grad_d: f64,
}

fn norm_weights(g: &GroupModel, x: &[f64], order: u8) -> Option<(NormWeights, Jet3)> {
    let dj = g.norm_jet_to(x, order).ok()?;
    let gd = horizontal_gradient(g, &dj, x);
    let grad_d = gd.iter().map(|v| v * v).sum::<f64>().sqrt();
    Some((NormWeights { d: dj.value(), grad_d }, dj))
}

/// `w 𝓛w − 3|∇_H w|²` for `w = d^{1−Q}|∇_H d|`.
fn polar_defect(g: &GroupModel, dj: &Jet3, x: &[f64]) -> f64 {
    let q = g.homogeneous_dim() as f64;
    let gj = horizontal_gradient_jets(g, dj, x).expect("dimension validated");
    let mut s = Jet3::zero(x.len()).expect("dimension validated").truncated(2);
    for v in &gj {
        s = &s + &(v * v);
    }
    let w = &dj.powf(1.0 - q).expect("d > 0") * &s.sqrt().expect("non-characteristic point");
    let lw = sub_laplacian(g, &w, x);
    let gw: f64 = horizontal_gradient(g, &w, x).iter().map(|v| v * v).sum();
    w.value() * lw - 3.0 * gw
}

fn fill_components(
    inst: &InequalityInstance,
    g: &GroupModel,
    drift: &DriftSpec,
    params: &Params,
    x: &[f64],
    f: &Jet3,
    out: &mut [f64],
) {
    use InstanceId::*;
    let fv = f.value();
    let r = g.horizontal_norm(x);
    let chi = if inst.uses_drift() { character(drift, x) } else { 1.0 };
    let f2 = fv * fv;
    let lap = || sub_laplacian(g, f, x);
    let lx = || drift_laplacian(g, drift, f, x);
    let grad2 = || horizontal_gradient(g, f, x).iter().map(|v| v * v).sum::<f64>();
    let rp = |e: f64| r.powf(e);
    match inst.id {
        ClassicalRellich => {
            let l = lap();
            out[0] = l * l;
            out[1] = f2 / r.powi(4);
        }
        DaviesHinzWeighted => {
            let p = params.p.unwrap_or(2.0);
            let a = params.alpha.unwrap_or(0.0);
            out[0] = fv.abs().powf(p) * rp(-(2.0 * a + 4.0));
            out[1] = lap().abs().powf(p) * rp(-(2.0 * a + 4.0 - 2.0 * p));
        }
        EuclidDriftRellich | DriftRellichUnweighted | DriftRellichUnweightedReduced
        | EuclidWeightedDriftRellich | DriftRellichStratified | DriftRellichStratifiedReduced => {
            // Weight exponent `2α` on the left side; `α = −δ` for the stratified forms.
            let a = match inst.id {
                EuclidWeightedDriftRellich => params.alpha.unwrap_or(0.0),
                DriftRellichStratified | DriftRellichStratifiedReduced => -params.delta.unwrap_or(0.0),
                _ => 0.0,
            };
            let l = lx();
            let w = rp(2.0 * a);
            out[0] = l * l * chi * w;
            out[1] = f2 * chi * w / (r * r * r * r);
            if out.len() > 2 {
                out[2] = f2 * chi * w / (r * r);
                out[3] = f2 * chi * w;
            }
        }
        HorizontalWeightedRellich => {
            let d = params.delta.unwrap_or(0.0);
            let l = lap();
            out[0] = l * l * rp(-2.0 * d);
            out[1] = f2 * rp(-2.0 * d - 4.0);
        }
        HorizontalHardy => {
            let b = params.beta.unwrap_or(0.0);
            out[0] = grad2() * rp(2.0 - 2.0 * b);
            out[1] = f2 * rp(-2.0 * b);
        }
        HardyRellich => {
            let d = params.delta.unwrap_or(0.0);
            let l = lap();
            out[0] = l * l * rp(-2.0 * d);
            out[1] = grad2() * rp(-2.0 * d - 2.0);
        }
        KombeRellich => {
            let t = params.theta.unwrap_or(0.0);
            let Some((w, _)) = norm_weights(g, x, 1) else { return };
            let l = lap();
            let g2 = w.grad_d * w.grad_d;
            out[0] = w.d.powf(2.0 * t) / g2 * l * l;
            out[1] = w.d.powf(2.0 * t - 4.0) * g2 * f2;
        }
        KombeHardy => {
            let t = params.theta.unwrap_or(0.0);
            let p = params.p.unwrap_or(2.0);
            let Some((w, dj)) = norm_weights(g, x, 1) else { return };
            let gd = horizontal_gradient(g, &dj, x);
            let gf = horizontal_gradient(g, f, x);
            let dot: f64 = gd.iter().zip(&gf).map(|(a, b)| a * b).sum();
            out[0] = w.d.powf(2.0 * t - 2.0 + p) * dot.abs().powf(p) / w.grad_d.powf(2.0 * p);
            out[1] = w.d.powf(2.0 * t - 2.0) * fv.abs().powf(p);
        }
        PolarizableDriftRellich => {
            let t = params.theta.unwrap_or(0.0);
            let q = g.homogeneous_dim() as f64;
            let Some((w, dj)) = norm_weights(g, x, 3) else { return };
            let l = lx();
            let g2 = w.grad_d * w.grad_d;
            let d2t = w.d.powf(2.0 * t);
            out[0] = d2t / g2 * l * l * chi;
            out[1] = w.d.powf(2.0 * t - 4.0) * g2 * f2 * chi;
            out[2] = w.d.powf(2.0 * t - 2.0) * f2 * chi;
            out[3] = d2t / g2 * f2 * chi;
            out[4] = w.d.powf(2.0 * t + 2.0 * q - 2.0) / (g2 * g2) * polar_defect(g, &dj, x) * f2 * chi;
        }
    }
}

fn integrand_components(inst: &InequalityInstance) -> Vec<usize> {
    match inst.id {
        InstanceId::PolarizableDriftRellich => vec![1, 2, 3, 2, 4],
        _ => (1..=inst.term_labels.len()).collect(),
    }
}

/// Evaluates both sides of `inst` on `f`.
///
/// `drift` is ignored for Haar-measure instances; `None` means no drift.
pub fn evaluate(
    inst: &InequalityInstance,
    g: &GroupModel,
    drift: Option<&DriftSpec>,
    params: &Params,
    f: &dyn ScalarField,
    spec: &QuadratureSpec,
) -> Result<EvaluationReport, CatalogError> {
    inst.admissible(g, params)
        .map_err(|reason| CatalogError::Inadmissible { instance: inst.id, reason })?;
    inst.check_support(g, f)?;
    let none = DriftSpec::none(g);
    let drift = if inst.uses_drift() { drift.unwrap_or(&none) } else { &none };
    let reduction = AngularReduction::for_drift(g, Some(drift));
    let dom = IntegrationDomain::covering(g, &[f.support()], reduction);
    let ncomp = inst.component_count();
    let result = integrate(&dom, ncomp, spec, |x, out| {
        let j = f.jet_to(x, 2);
        if !j.is_zero() {
            fill_components(inst, g, drift, params, x, &j, out);
        }
    });
    let (integral, converged) = match result {
        Ok(i) => (i, true),
        Err(QuadratureError::NotConverged(i)) => (i, false),
        Err(e) => return Err(CatalogError::Quadrature(e)),
    };
    let report = assemble(inst, g, drift, params, &integral, converged);
    if converged {
        Ok(report)
    } else {
        Err(CatalogError::NotConverged(Box::new(report)))
    }
}

fn assemble(
    inst: &InequalityInstance,
    g: &GroupModel,
    drift: &DriftSpec,
    params: &Params,
    integral: &Integral,
    converged: bool,
) -> EvaluationReport {
    let consts = inst.constants(g, params, Some(drift));
    let comps = integrand_components(inst);
    let v = &integral.values;
    let e = &integral.errors;
    let norm_form = inst.form == Form::Norm;
    let as_norm = |i: usize| -> (f64, f64) {
        if norm_form {
            let s = v[i].max(0.0).sqrt();
            let err = if s > 0.0 { e[i] / (2.0 * s) } else { e[i].sqrt() };
            (s, err)
        } else {
            (v[i], e[i])
        }
    };
    let (lhs, lhs_err) = as_norm(0);
    let mut rhs_terms = Vec::with_capacity(consts.len());
    let mut budget = lhs_err;
    let mut scale = lhs.abs();
    for (k, (&c, label)) in consts.iter().zip(inst.term_labels).enumerate() {
        let (norm, err) = as_norm(comps[k]);
        let product = c * norm;
        budget += c.abs() * err;
        scale += product.abs();
        rhs_terms.push(TermReport {
            label: label.to_string(),
            constant: c,
            norm,
            product,
            error: c.abs() * err,
        });
    }
    budget += 64.0 * f64::EPSILON * scale;
    let rhs_total: f64 = rhs_terms.iter().map(|t| t.product).sum();
    let lead = &rhs_terms[0];
    let (deficit, ratio, ratio_error) = match inst.form {
        Form::Reversed => {
            let r = lead.norm / lhs;
            let re = r * (e[comps[0]] / lead.norm.abs() + lhs_err / lhs.abs());
            (rhs_total - lhs, r, re)
        }
        _ => {
            let (n0, e0) = as_norm(comps[0]);
            let r = lhs / n0;
            (lhs - rhs_total, r, r * (lhs_err / lhs.abs() + e0 / n0.abs()))
        }
    };
    let sharp = inst.sharp_constant(g, params);
    EvaluationReport {
        instance: inst.id,
        entry: inst.entry,
        group: g.id().to_string(),
        params: *params,
        gamma: drift.gamma,
        a: drift.a.clone(),
        form: inst.form,
        lhs,
        rhs_terms,
        rhs_total,
        deficit,
        ratio,
        ratio_error,
        leading_constant: inst.leading_constant(g, params),
        sharp_constant: sharp,
        sharpness_claimed: sharp.is_some(),
        quad_err: QuadErr {
            lhs: lhs_err,
            terms: comps.iter().map(|&i| e[i]).collect(),
            budget,
            evaluations: integral.evaluations,
        },
        converged,
    }
}

/// Both sides of the expansion of `‖𝓛_X f/|x′|^δ‖²_{μ_X}` in `g = χ^{1/2} f`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionResidual {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs`.
    pub residual: f64,
    pub error: f64,
}

impl DecompositionResidual {
    pub fn relative(&self) -> f64 {
        self.residual.abs() / self.lhs.abs().max(f64::MIN_POSITIVE)
    }
}

/// `‖𝓛_X f/|x′|^δ‖²_{μ_X} − (‖𝓛₀g/|x′|^δ‖² + 2γ²b²‖∇_H g/|x′|^δ‖²
/// + 2δ(N−2δ−2)γ²b²‖g/|x′|^{δ+1}‖² + γ⁴b⁴‖g/|x′|^δ‖²)`.
pub fn decomposition_residual(
    g: &GroupModel,
    drift: &DriftSpec,
    delta: f64,
    f: &dyn ScalarField,
    spec: &QuadratureSpec,
) -> Result<DecompositionResidual, CatalogError> {
    if f.dim() != g.dim() {
        return Err(CatalogError::Dimension { expected: g.dim(), got: f.dim() });
    }
    if !(f.support().r_min > 0.0) {
        return Err(CatalogError::Support {
            instance: InstanceId::DriftRellichStratified,
            reason: "support must avoid x′ = 0".into(),
        });
    }
    let dom = IntegrationDomain::covering(g, &[f.support()], AngularReduction::for_drift(g, Some(drift)));
    let res = integrate(&dom, 5, spec, |x, out| {
        let fj = f.jet_to(x, 2);
        if fj.is_zero() {
            return;
        }
        let r = g.horizontal_norm(x);
        let w = r.powf(-2.0 * delta);
        let chi = character(drift, x);
        let lx = drift_laplacian(g, drift, &fj, x);
        let gj = &character_jet(drift, x, 0.5).expect("dimension validated") * &fj;
        let l0 = -sub_laplacian(g, &gj, x);
        let grad2: f64 = horizontal_gradient(g, &gj, x).iter().map(|v| v * v).sum();
        let gv = gj.value();
        out[0] = lx * lx * chi * w;
        out[1] = l0 * l0 * w;
        out[2] = grad2 * w;
        out[3] = gv * gv * w / (r * r);
        out[4] = gv * gv * w;
    })
    .map_err(CatalogError::Quadrature)?;
    let n = g.horizontal_dim() as f64;
    let gb2 = drift.gamma2_b2();
    let c = [1.0, 2.0 * gb2, 2.0 * delta * (n - 2.0 * delta - 2.0) * gb2, gb2 * gb2];
    let v = &res.values;
    let rhs: f64 = c.iter().enumerate().map(|(i, c)| c * v[i + 1]).sum();
    let err = res.errors[0]
        + c.iter().enumerate().map(|(i, c)| c.abs() * res.errors[i + 1]).sum::<f64>();
    Ok(DecompositionResidual {
        lhs: v[0],
        rhs,
        residual: v[0] - rhs,
        error: err,
    })
}
