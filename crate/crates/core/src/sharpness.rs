//! Approaching sharp constants with power profiles and random searches.
//!
//! The extremal family is `ρ^C` times logarithmic cutoffs whose plateau widens
//! with the index `k` (see [`PowerCutoffField`]). Each cutoff index is anchored
//! with its outer edge at `ρ = e`, so drift characters stay bounded along a
//! series while the plateau grows towards the origin.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::{evaluate, CatalogError, InequalityInstance, InstanceId, Params};
use crate::field::{FieldError, PowerCutoffField, RadialVariable, ScalarField};
use crate::group::GroupModel;
use crate::ops::DriftSpec;
use crate::quadrature::{integrate, IntegrationDomain, QuadratureError, QuadratureSpec};
use crate::sampling::{FieldSampler, FieldTag};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SharpnessError {
    #[error("{0} has no power-type extremal")]
    NoPowerExtremal(InstanceId),
    #[error("cutoff index must be at least 1")]
    CutoffIndex,
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// One-dimensional reduction of an instance's Rayleigh ratio for profiles
/// `f(s)` of a radial variable `s` with volume density `s^{dim−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RadialFunctional {
    /// `∫(f″ + (D−1)f′/s)² s^{2w}` over `∫f² s^{2w−4}`.
    Rellich { dim: f64, weight: f64 },
    /// `∫f′² s^{2−2β}` over `∫f² s^{−2β}`.
    Hardy { dim: f64, beta: f64 },
    /// `∫(f″ + (D−1)f′/s)² s^{−2δ}` over `∫f′² s^{−2δ−2}`.
    HardyRellich { dim: f64, delta: f64 },
    /// `∫|f′|^p s^{2θ−2+p}` over `∫|f|^p s^{2θ−2}`.
    PowerHardy { dim: f64, theta: f64, p: f64 },
}

impl RadialFunctional {
    /// Reduction of `inst` on `g`, with `s = |x′|` or `s = d`.
    pub fn of(inst: &InequalityInstance, g: &GroupModel, params: &Params) -> Result<Self, SharpnessError> {
        use InstanceId::*;
        let n = g.horizontal_dim() as f64;
        let q = g.homogeneous_dim() as f64;
        let delta = params.delta.unwrap_or(0.0);
        Ok(match inst.id {
            ClassicalRellich | EuclidDriftRellich | DriftRellichUnweighted
            | DriftRellichUnweightedReduced => Self::Rellich { dim: n, weight: 0.0 },
            EuclidWeightedDriftRellich => Self::Rellich {
                dim: n,
                weight: params.alpha.unwrap_or(0.0),
            },
            HorizontalWeightedRellich | DriftRellichStratified | DriftRellichStratifiedReduced => {
                Self::Rellich { dim: n, weight: -delta }
            }
            HorizontalHardy => Self::Hardy {
                dim: n,
                beta: params.beta.unwrap_or(0.0),
            },
            HardyRellich => Self::HardyRellich { dim: n, delta },
            KombeRellich | PolarizableDriftRellich => Self::Rellich {
                dim: q,
                weight: params.theta.unwrap_or(0.0),
            },
            KombeHardy => Self::PowerHardy {
                dim: q,
                theta: params.theta.unwrap_or(0.0),
                p: params.p.unwrap_or(2.0),
            },
            DaviesHinzWeighted => return Err(SharpnessError::NoPowerExtremal(inst.id)),
        })
    }

    fn dim(&self) -> f64 {
        match *self {
            Self::Rellich { dim, .. }
            | Self::Hardy { dim, .. }
            | Self::HardyRellich { dim, .. }
            | Self::PowerHardy { dim, .. } => dim,
        }
    }

    /// Integrands of both sides at `s` for the profile jet `[f, f′, f″, f‴]`.
    fn integrands(&self, s: f64, f: [f64; 4]) -> (f64, f64) {
        let d = self.dim();
        let lap = f[2] + (d - 1.0) * f[1] / s;
        match *self {
            Self::Rellich { weight, .. } => {
                let w = s.powf(2.0 * weight);
                (lap * lap * w, f[0] * f[0] * w / s.powi(4))
            }
            Self::Hardy { beta, .. } => {
                let w = s.powf(-2.0 * beta);
                (f[1] * f[1] * w * s * s, f[0] * f[0] * w)
            }
            Self::HardyRellich { delta, .. } => {
                let w = s.powf(-2.0 * delta);
                (lap * lap * w, f[1] * f[1] * w / (s * s))
            }
            Self::PowerHardy { theta, p, .. } => {
                let w = s.powf(2.0 * theta - 2.0);
                (f[1].abs().powf(p) * w * s.powf(p), f[0].abs().powf(p) * w)
            }
        }
    }

    /// Ratio of the two sides for `s^C` with cutoffs of index `k` centred at
    /// `s = 1`, integrated in `ln s`.
    pub fn cutoff_ratio(&self, c: f64, k: u32, spec: &QuadratureSpec) -> Result<f64, SharpnessError> {
        let line = GroupModel::euclidean(1).expect("dimension 1 is valid");
        let field = PowerCutoffField::new(&line, RadialVariable::Horizontal, c, k, 1.0, 1.0)?;
        let kf = k as f64;
        let dom = IntegrationDomain::Box {
            lo: vec![-2.0 * kf],
            hi: vec![2.0 * kf],
        };
        let d = self.dim();
        let res = integrate(&dom, 2, spec, |t, out| {
            let s = t[0].exp();
            let (a, b) = self.integrands(s, field.profile(s));
            let vol = s.powf(d);
            out[0] = a * vol;
            out[1] = b * vol;
        })?;
        Ok(res.values[0] / res.values[1])
    }
}

/// Cutoff index used by the exponent scan.
const SCAN_INDEX: u32 = 4;

/// Exponent `C*` minimising the one-dimensional cutoff ratio of `inst`.
///
/// A grid scan over `[−D−4, D+4]` brackets the minimum, then golden-section
/// search refines it.
pub fn extremal_exponent(
    inst: &InequalityInstance,
    g: &GroupModel,
    params: &Params,
) -> Result<f64, SharpnessError> {
    let fun = RadialFunctional::of(inst, g, params)?;
    let spec = QuadratureSpec::default().with_tol(1e-10);
    let ratio = |c: f64| fun.cutoff_ratio(c, SCAN_INDEX, &spec);
    let span = fun.dim() + 4.0;
    let step = 0.25;
    let steps = (2.0 * span / step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| -span + step * i as f64).collect();
    let values = grid
        .iter()
        .map(|&c| ratio(c))
        .collect::<Result<Vec<_>, _>>()?;
    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(steps / 2);
    let (mut lo, mut hi) = (grid[best] - step, grid[best] + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = ratio(x1)?;
    let mut f2 = ratio(x2)?;
    while hi - lo > 1e-7 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = ratio(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = ratio(x2)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Radial variable of the extremal family for `inst`.
pub fn extremal_variable(inst: &InequalityInstance) -> RadialVariable {
    match inst.id {
        InstanceId::KombeRellich | InstanceId::KombeHardy | InstanceId::PolarizableDriftRellich => {
            RadialVariable::Homogeneous
        }
        _ => RadialVariable::Horizontal,
    }
}

/// The power-cutoff field of exponent `c` and index `k` with outer edge at `e`.
pub fn extremal_field(
    inst: &InequalityInstance,
    g: &GroupModel,
    c: f64,
    k: u32,
) -> Result<PowerCutoffField, SharpnessError> {
    if k == 0 {
        return Err(SharpnessError::CutoffIndex);
    }
    let r = (1.0 - 2.0 * k as f64).exp();
    Ok(PowerCutoffField::new(g, extremal_variable(inst), c, k, r, r)?)
}

/// One evaluation of a minimizing sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub k: u32,
    pub c: f64,
    pub ratio: f64,
    pub err: f64,
    pub converged: bool,
}

/// `lhs / leading norm` on the power-cutoff field `(c, k)`.
///
/// A quadrature failure still yields a point, flagged as not converged.
pub fn minimizing_sequence_ratio(
    inst: &InequalityInstance,
    g: &GroupModel,
    drift: Option<&DriftSpec>,
    params: &Params,
    c: f64,
    k: u32,
    spec: &QuadratureSpec,
) -> Result<SeriesPoint, SharpnessError> {
    let f = extremal_field(inst, g, c, k)?;
    let (report, converged) = match evaluate(inst, g, drift, params, &f, spec) {
        Ok(r) => (r, true),
        Err(CatalogError::NotConverged(r)) => (*r, false),
        Err(e) => return Err(e.into()),
    };
    Ok(SeriesPoint {
        k,
        c,
        ratio: report.ratio,
        err: report.ratio_error,
        converged,
    })
}

/// Ratios along a minimizing sequence at fixed exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSeries {
    pub instance: InstanceId,
    pub group: String,
    pub params: Params,
    pub exponent: f64,
    pub variable: RadialVariable,
    pub points: Vec<SeriesPoint>,
    pub infimum: f64,
    pub sharp_constant: Option<f64>,
    /// `infimum / sharp − 1`.
    pub relative_gap: Option<f64>,
}

impl RatioSeries {
    /// Ratios never increase by more than the combined error bars.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| {
            w[1].ratio <= w[0].ratio + w[0].err + w[1].err + 1e-12 * w[0].ratio.abs()
        })
    }

    /// Points whose ratio falls below the sharp constant beyond their error bar.
    pub fn violations(&self) -> Vec<SeriesPoint> {
        match self.sharp_constant {
            Some(s) => self
                .points
                .iter()
                .filter(|p| p.ratio < s - p.err - 1e-12 * s)
                .copied()
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Evaluates the minimizing sequence `(c, k)` for every `k` in `ks`.
pub fn ratio_series(
    inst: &InequalityInstance,
    g: &GroupModel,
    drift: Option<&DriftSpec>,
    params: &Params,
    c: f64,
    ks: &[u32],
    spec: &QuadratureSpec,
) -> Result<RatioSeries, SharpnessError> {
    let points = ks
        .par_iter()
        .map(|&k| minimizing_sequence_ratio(inst, g, drift, params, c, k, spec))
        .collect::<Result<Vec<_>, _>>()?;
    let infimum = points.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    let sharp = inst.sharp_constant(g, params);
    Ok(RatioSeries {
        instance: inst.id,
        group: g.id().to_string(),
        params: *params,
        exponent: c,
        variable: extremal_variable(inst),
        points,
        infimum,
        sharp_constant: sharp,
        relative_gap: sharp.map(|s| infimum / s - 1.0),
    })
}

/// Effort for [`best_constant_estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchBudget {
    /// Largest cutoff index of the power grid.
    pub k_max: u32,
    /// Half-width of the exponent window around `C*`.
    pub window: f64,
    /// Number of exponents in the window.
    pub exponents: usize,
    /// Number of random bumps.
    pub random_fields: u64,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            k_max: 8,
            window: 1.0,
            exponents: 9,
            random_fields: 200,
            seed: 0,
        }
    }
}

/// Field achieving a ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Witness {
    Power { c: f64, k: u32 },
    RandomBump { seed: u64, index: u64 },
}

/// Smallest ratio found, per family and overall.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestConstant {
    pub instance: InstanceId,
    pub estimate: f64,
    pub error: f64,
    pub witness: Witness,
    pub power_min: Option<f64>,
    pub random_min: Option<f64>,
    pub sharp_constant: Option<f64>,
    pub evaluations: usize,
}

/// Infimum of the ratio over the power grid `C* ± window`, `k ≤ k_max`, and
/// over seeded random bumps. Grid points are skipped when the instance has
/// no power extremal; unconverged evaluations are ignored.
pub fn best_constant_estimate(
    inst: &InequalityInstance,
    g: &GroupModel,
    drift: Option<&DriftSpec>,
    params: &Params,
    budget: &SearchBudget,
    spec: &QuadratureSpec,
) -> Result<BestConstant, SharpnessError> {
    inst.admissible(g, params)
        .map_err(|reason| CatalogError::Inadmissible { instance: inst.id, reason })?;
    let mut candidates: Vec<(f64, f64, Witness)> = Vec::new();
    let mut power_min = None;
    match extremal_exponent(inst, g, params) {
        Ok(c_star) => {
            let m = budget.exponents.max(1);
            let grid: Vec<(f64, u32)> = (0..m)
                .flat_map(|i| {
                    let c = if m == 1 {
                        c_star
                    } else {
                        c_star - budget.window + 2.0 * budget.window * i as f64 / (m - 1) as f64
                    };
                    (1..=budget.k_max).map(move |k| (c, k))
                })
                .collect();
            let pts: Vec<SeriesPoint> = grid
                .par_iter()
                .map(|&(c, k)| minimizing_sequence_ratio(inst, g, drift, params, c, k, spec))
                .collect::<Result<Vec<_>, _>>()?;
            for p in pts.into_iter().filter(|p| p.converged) {
                power_min = Some(power_min.map_or(p.ratio, |m: f64| m.min(p.ratio)));
                candidates.push((p.ratio, p.err, Witness::Power { c: p.c, k: p.k }));
            }
        }
        Err(SharpnessError::NoPowerExtremal(_)) => {}
        Err(e) => return Err(e),
    }
    let sampler = FieldSampler::new(g, budget.seed);
    let random: Vec<Option<(f64, f64, FieldTag)>> = (0..budget.random_fields)
        .into_par_iter()
        .map(|i| -> Result<_, SharpnessError> {
            let f = sampler.field(i)?;
            match evaluate(inst, g, drift, params, f.as_ref(), spec) {
                Ok(r) => Ok(Some((r.ratio, r.ratio_error, sampler.tag(i)))),
                Err(CatalogError::NotConverged(_)) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut random_min = None;
    for (ratio, err, tag) in random.into_iter().flatten() {
        random_min = Some(random_min.map_or(ratio, |m: f64| m.min(ratio)));
        candidates.push((
            ratio,
            err,
            Witness::RandomBump {
                seed: tag.seed,
                index: tag.index,
            },
        ));
    }
    let evaluations = candidates.len();
    let (estimate, error, witness) = candidates
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or(SharpnessError::Catalog(CatalogError::Inadmissible {
            instance: inst.id,
            reason: "no evaluation converged".into(),
        }))?;
    Ok(BestConstant {
        instance: inst.id,
        estimate,
        error,
        witness,
        power_min,
        random_min,
        sharp_constant: inst.sharp_constant(g, params),
        evaluations,
    })
}

/// The field behind a witness.
pub fn witness_field(
    inst: &InequalityInstance,
    g: &GroupModel,
    witness: &Witness,
) -> Result<std::sync::Arc<dyn ScalarField>, SharpnessError> {
    Ok(match *witness {
        Witness::Power { c, k } => std::sync::Arc::new(extremal_field(inst, g, c, k)?),
        Witness::RandomBump { seed, index } => FieldSampler::new(g, seed).field(index)?,
    })
}
