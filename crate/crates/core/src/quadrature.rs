//! Adaptive tensor-product Gauss–Legendre quadrature for vector-valued integrands.
//!
//! The domain is mapped to boxes in a parameter space (Cartesian, or
//! log-radius/angle coordinates that exploit the rotation symmetry of the
//! integrand). Each panel is compared against its two halves: the difference
//! is the panel's error estimate, and the halves become the panel's value. The
//! panel with the largest error relative to the tolerance is bisected along the
//! axis whose highest Legendre coefficients are largest. All components share
//! the nodes, so linear relations between components hold to rounding.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Support, SupportShape};
use crate::group::{Family, GroupModel};
use crate::ops::DriftSpec;

/// Accuracy and effort controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss–Legendre nodes per axis per panel.
    pub order: usize,
    /// Target relative error per component.
    pub rel_tol: f64,
    /// Absolute error floor per component.
    pub abs_tol: f64,
    /// Maximum number of bisections of an initial panel.
    pub max_depth: u32,
    /// Integrand evaluation budget.
    pub max_evals: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            order: 8,
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            max_depth: 12,
            max_evals: 50_000_000,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if !(4..=64).contains(&self.order) {
            return Err(QuadratureError::InvalidSpec(format!(
                "order {} outside 4..=64",
                self.order
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) || !(self.abs_tol >= 0.0) {
            return Err(QuadratureError::InvalidSpec(
                "tolerances must satisfy 0 < rel_tol < 1 and abs_tol ≥ 0".into(),
            ));
        }
        if self.max_depth > 64 || self.max_evals == 0 {
            return Err(QuadratureError::InvalidSpec("depth or budget out of range".into()));
        }
        Ok(())
    }
}

/// Integral values with per-component error estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Integral {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error("integrand is not finite at {0:?}")]
    NonFinite(Vec<f64>),
    #[error("quadrature did not reach tolerance: values {:?}, errors {:?}", .0.values, .0.errors)]
    NotConverged(Integral),
    #[error("domain dimension {0} does not match the integrand")]
    Dimension(usize),
}

impl QuadratureError {
    /// Best available estimate, if the failure produced one.
    pub fn partial(&self) -> Option<&Integral> {
        match self {
            QuadratureError::NotConverged(i) => Some(i),
            _ => None,
        }
    }
}

/// Symmetry used to integrate out directions of `x′`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AngularReduction {
    /// Integrand depends on `x′` only through `|x′|`.
    Full,
    /// Integrand depends on `x′` through `|x′|` and `⟨axis, x′⟩`.
    Zonal { axis: Vec<f64>, normal: Vec<f64> },
    /// Integrand depends on `x′` through `|x′|`, `⟨a, x′⟩` and `⟨b, x′⟩` for
    /// orthonormal `a`, `b`; `normal` is a unit vector orthogonal to both when `N ≥ 3`.
    Planar {
        a: Vec<f64>,
        b: Vec<f64>,
        normal: Option<Vec<f64>>,
    },
}

impl AngularReduction {
    /// Reduction valid for drift integrands built from the group frame, the
    /// character and radial weights; `None` if no reduction applies.
    pub fn for_drift(g: &GroupModel, drift: Option<&DriftSpec>) -> Option<Self> {
        let n = g.horizontal_dim();
        let a = match drift {
            Some(d) if !d.is_trivial() => d.effective_a(),
            _ => return Some(Self::Full),
        };
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let a: Vec<f64> = a.iter().map(|v| v / na).collect();
        match g.family() {
            Family::Euclidean if n >= 2 => {
                let normal = orthonormal_complement(&[&a], n)?;
                Some(Self::Zonal { axis: a, normal })
            }
            Family::Heisenberg => {
                let b = g.bracket_partner(&a)?;
                let normal = if n >= 3 {
                    Some(orthonormal_complement(&[&a, &b], n)?)
                } else {
                    None
                };
                Some(Self::Planar { a, b, normal })
            }
            _ => None,
        }
    }
}

fn orthonormal_complement(basis: &[&[f64]], n: usize) -> Option<Vec<f64>> {
    for e in 0..n {
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        for b in basis {
            let d: f64 = v.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.5 {
            return Some(v.into_iter().map(|x| x / norm).collect());
        }
    }
    None
}

/// Radial coordinate of a polar domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RadialKind {
    /// `ρ = |x′|`, higher strata integrated in Cartesian coordinates.
    Horizontal,
    /// `ρ = (|x′|⁴ + 16t²)^{1/4}` on `ℍᵐ`, with `|x′|² = ρ² cos ψ`, `t = ρ² sin ψ / 4`.
    Kaplan,
}

/// Polar coordinates adapted to a symmetric integrand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarDomain {
    pub dim: usize,
    pub horizontal_dim: usize,
    pub radial: RadialKind,
    pub radius: (f64, f64),
    pub breaks: Vec<f64>,
    pub higher_lo: Vec<f64>,
    pub higher_hi: Vec<f64>,
    pub angular: AngularReduction,
}

/// Region of integration with its parametrization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum IntegrationDomain {
    Empty,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Polar(PolarDomain),
}

/// Area of the unit sphere `S^k ⊂ ℝ^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

impl IntegrationDomain {
    /// Domain covering the common support of `supports`, reduced by `angular`
    /// when every support is rotation invariant in `x′`.
    pub fn covering(g: &GroupModel, supports: &[&Support], angular: Option<AngularReduction>) -> Self {
        if supports.is_empty() || supports.iter().any(|s| s.shape == SupportShape::Empty) {
            return Self::Empty;
        }
        let n_h = g.horizontal_dim();
        let kaplan = g.family() == Family::Heisenberg;
        let euclid = g.family() == Family::Euclidean;
        let all_h = supports.iter().all(|s| {
            matches!(s.shape, SupportShape::Horizontal { .. })
                || (euclid && matches!(s.shape, SupportShape::Homogeneous { .. }))
        });
        let all_d = supports
            .iter()
            .all(|s| matches!(s.shape, SupportShape::Homogeneous { .. }));
        if let Some(angular) = angular.filter(|_| all_h || (all_d && kaplan)) {
            let n_z = g.dim() - n_h;
            let mut radius = (0.0_f64, f64::INFINITY);
            let mut breaks = Vec::new();
            let mut higher_lo = vec![f64::NEG_INFINITY; if all_h { n_z } else { 0 }];
            let mut higher_hi = vec![f64::INFINITY; higher_lo.len()];
            for s in supports {
                match &s.shape {
                    SupportShape::Horizontal {
                        radius: r,
                        breaks: b,
                        higher_lo: lo,
                        higher_hi: hi,
                    } => {
                        radius = (radius.0.max(r.0), radius.1.min(r.1));
                        breaks.extend_from_slice(b);
                        for i in 0..n_z {
                            higher_lo[i] = higher_lo[i].max(lo[i]);
                            higher_hi[i] = higher_hi[i].min(hi[i]);
                        }
                    }
                    SupportShape::Homogeneous { radius: r, breaks: b } => {
                        radius = (radius.0.max(r.0), radius.1.min(r.1));
                        breaks.extend_from_slice(b);
                    }
                    _ => unreachable!(),
                }
            }
            if !(radius.0 > 0.0 && radius.0 < radius.1)
                || higher_lo.iter().zip(&higher_hi).any(|(l, h)| l >= h)
            {
                return Self::Empty;
            }
            breaks.retain(|b| *b > radius.0 && *b < radius.1);
            breaks.sort_by(|a, b| a.total_cmp(b));
            breaks.dedup();
            let radial = if all_h {
                RadialKind::Horizontal
            } else {
                RadialKind::Kaplan
            };
            return Self::Polar(PolarDomain {
                dim: g.dim(),
                horizontal_dim: n_h,
                radial,
                radius,
                breaks,
                higher_lo,
                higher_hi,
                angular,
            });
        }
        let dim = g.dim();
        let mut lo = vec![f64::NEG_INFINITY; dim];
        let mut hi = vec![f64::INFINITY; dim];
        for s in supports {
            let (blo, bhi) = bounding_box(g, s);
            for i in 0..dim {
                lo[i] = lo[i].max(blo[i]);
                hi[i] = hi[i].min(bhi[i]);
            }
        }
        if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return Self::Empty;
        }
        Self::Box { lo, hi }
    }

    /// Parameter-space boxes and the number of parameters.
    fn param_boxes(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Empty => vec![],
            Self::Box { lo, hi } => vec![(lo.clone(), hi.clone())],
            Self::Polar(p) => {
                let mut cuts = vec![p.radius.0.ln()];
                cuts.extend(p.breaks.iter().map(|b| b.ln()));
                cuts.push(p.radius.1.ln());
                let mut tail_lo = Vec::new();
                let mut tail_hi = Vec::new();
                let mut psi_split = false;
                if p.radial == RadialKind::Kaplan {
                    psi_split = true;
                    tail_lo.push(-PI / 2.0);
                    tail_hi.push(0.0);
                }
                match (&p.angular, p.horizontal_dim) {
                    (AngularReduction::Full, _) => {}
                    (AngularReduction::Zonal { .. }, _) => {
                        tail_lo.push(0.0);
                        tail_hi.push(PI);
                    }
                    (AngularReduction::Planar { .. }, 2) => {
                        tail_lo.push(0.0);
                        tail_hi.push(2.0 * PI);
                    }
                    (AngularReduction::Planar { .. }, _) => {
                        tail_lo.extend([0.0, 0.0]);
                        tail_hi.extend([PI / 2.0, 2.0 * PI]);
                    }
                }
                if p.radial == RadialKind::Horizontal {
                    tail_lo.extend_from_slice(&p.higher_lo);
                    tail_hi.extend_from_slice(&p.higher_hi);
                }
                let mut boxes = Vec::new();
                for w in cuts.windows(2) {
                    let mut lo = vec![w[0]];
                    let mut hi = vec![w[1]];
                    lo.extend_from_slice(&tail_lo);
                    hi.extend_from_slice(&tail_hi);
                    if psi_split {
                        let mut lo2 = lo.clone();
                        let mut hi2 = hi.clone();
                        lo2[1] = 0.0;
                        hi2[1] = PI / 2.0;
                        boxes.push((lo, hi));
                        boxes.push((lo2, hi2));
                    } else {
                        boxes.push((lo, hi));
                    }
                }
                boxes
            }
        }
    }

    /// Maps parameters `u` to a point `x`; returns the Jacobian factor.
    fn map(&self, u: &[f64], x: &mut [f64]) -> f64 {
        match self {
            Self::Empty => 0.0,
            Self::Box { .. } => {
                x.copy_from_slice(u);
                1.0
            }
            Self::Polar(p) => {
                let n = p.horizontal_dim;
                let rho = u[0].exp();
                let mut idx = 1;
                let (hr, jac_r) = match p.radial {
                    RadialKind::Horizontal => (rho, rho.powi(n as i32)),
                    RadialKind::Kaplan => {
                        let psi = u[1];
                        idx = 2;
                        let c = psi.cos().max(0.0);
                        let m = n / 2;
                        x[n] = rho * rho * psi.sin() / 4.0;
                        (
                            rho * c.sqrt(),
                            rho.powi(n as i32 + 2) * c.powi(m as i32 - 1) / 4.0,
                        )
                    }
                };
                let w = match &p.angular {
                    AngularReduction::Full => {
                        x[..n].iter_mut().for_each(|v| *v = 0.0);
                        x[0] = hr;
                        sphere_area(n - 1)
                    }
                    AngularReduction::Zonal { axis, normal } => {
                        let phi = u[idx];
                        idx += 1;
                        let (s, c) = phi.sin_cos();
                        for i in 0..n {
                            x[i] = hr * (c * axis[i] + s * normal[i]);
                        }
                        sphere_area(n - 2) * s.powi(n as i32 - 2)
                    }
                    AngularReduction::Planar { a, b, normal } => {
                        if n == 2 {
                            let phi = u[idx];
                            idx += 1;
                            let (s, c) = phi.sin_cos();
                            for i in 0..n {
                                x[i] = hr * (c * a[i] + s * b[i]);
                            }
                            1.0
                        } else {
                            let th = u[idx];
                            let phi = u[idx + 1];
                            idx += 2;
                            let (st, ct) = th.sin_cos();
                            let (s, c) = phi.sin_cos();
                            let e = normal.as_ref().expect("normal present for N ≥ 3");
                            for i in 0..n {
                                x[i] = hr * (st * (c * a[i] + s * b[i]) + ct * e[i]);
                            }
                            sphere_area(n - 3) * st * ct.powi(n as i32 - 3)
                        }
                    }
                };
                if p.radial == RadialKind::Horizontal {
                    x[n..].copy_from_slice(&u[idx..]);
                }
                jac_r * w
            }
        }
    }

    /// Ambient dimension of the points produced by the parametrization.
    pub fn point_dim(&self) -> usize {
        match self {
            Self::Empty => 0,
            Self::Box { lo, .. } => lo.len(),
            Self::Polar(p) => p.dim,
        }
    }
}

fn bounding_box(g: &GroupModel, s: &Support) -> (Vec<f64>, Vec<f64>) {
    let n_h = g.horizontal_dim();
    let dim = g.dim();
    match &s.shape {
        SupportShape::Box { lo, hi } => (lo.clone(), hi.clone()),
        SupportShape::Horizontal {
            radius,
            higher_lo,
            higher_hi,
            ..
        } => {
            let mut lo = vec![-radius.1; n_h];
            let mut hi = vec![radius.1; n_h];
            lo.extend_from_slice(higher_lo);
            hi.extend_from_slice(higher_hi);
            (lo, hi)
        }
        SupportShape::Homogeneous { radius, .. } => {
            let r = radius.1;
            let lo = g.weights().iter().map(|&w| -bound_for_weight(g, r, w)).collect();
            let hi = g.weights().iter().map(|&w| bound_for_weight(g, r, w)).collect();
            (lo, hi)
        }
        SupportShape::Empty => (vec![0.0; dim], vec![0.0; dim]),
    }
}

fn bound_for_weight(g: &GroupModel, r: f64, w: u32) -> f64 {
    match (g.family(), w) {
        (Family::Heisenberg, 2) => r * r / 4.0,
        _ => r.powi(w as i32),
    }
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    p_hi: Vec<f64>,
    p_lo: Vec<f64>,
}

impl Rule {
    fn new(q: usize) -> Self {
        let gl = GaussLegendre::new(NonZeroUsize::new(q).expect("order ≥ 4"));
        let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let legendre = |k: usize, t: f64| {
            let (mut p0, mut p1) = (1.0, t);
            if k == 0 {
                return p0;
            }
            for j in 1..k {
                let jf = j as f64;
                let p2 = ((2.0 * jf + 1.0) * t * p1 - jf * p0) / (jf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        };
        let p_hi = nodes
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| w * legendre(q - 1, t))
            .collect();
        let p_lo = nodes
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| w * legendre(q - 2, t))
            .collect();
        Self {
            nodes,
            weights,
            p_hi,
            p_lo,
        }
    }
}

struct RuleResult {
    value: Vec<f64>,
    axis: usize,
}

struct Engine<'a, F> {
    dom: &'a IntegrationDomain,
    rule: Rule,
    ncomp: usize,
    f: F,
    evals: usize,
    abs_tol: f64,
    u: Vec<f64>,
    x: Vec<f64>,
    out: Vec<f64>,
    samples: Vec<f64>,
}

impl<F: FnMut(&[f64], &mut [f64])> Engine<'_, F> {
    fn apply(&mut self, lo: &[f64], hi: &[f64]) -> Result<RuleResult, QuadratureError> {
        let d = lo.len();
        let q = self.rule.nodes.len();
        let npts = q.pow(d as u32);
        let nc = self.ncomp;
        self.samples.clear();
        self.samples.resize(npts * nc, 0.0);
        let mut value = vec![0.0; nc];
        let mut idx = vec![0usize; d];
        let half: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (h - l)).collect();
        let mid: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (h + l)).collect();
        let vol: f64 = half.iter().product();
        for p in 0..npts {
            let mut w = vol;
            for a in 0..d {
                self.u[a] = mid[a] + half[a] * self.rule.nodes[idx[a]];
                w *= self.rule.weights[idx[a]];
            }
            let jac = self.dom.map(&self.u[..d], &mut self.x);
            self.out.iter_mut().for_each(|v| *v = 0.0);
            if jac != 0.0 {
                (self.f)(&self.x, &mut self.out);
            }
            for c in 0..nc {
                let g = self.out[c] * jac;
                if !g.is_finite() {
                    return Err(QuadratureError::NonFinite(self.x.clone()));
                }
                self.samples[p * nc + c] = g * vol;
                value[c] += w * g;
            }
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < q {
                    break;
                }
                idx[a] = 0;
            }
        }
        self.evals += npts;
        let axis = if d == 1 { 0 } else { self.split_axis(d, &value) };
        Ok(RuleResult { value, axis })
    }

    fn split_axis(&self, d: usize, value: &[f64]) -> usize {
        let q = self.rule.nodes.len();
        let nc = self.ncomp;
        let scale: Vec<f64> = value.iter().map(|v| v.abs().max(self.abs_tol).max(1e-300)).collect();
        let mut best = (0usize, -1.0f64);
        let nlines = q.pow(d as u32 - 1);
        let mut acc_hi = vec![0.0; nlines * nc];
        let mut acc_lo = vec![0.0; nlines * nc];
        let mut wline = vec![1.0; nlines];
        for a in 0..d {
            acc_hi.iter_mut().for_each(|v| *v = 0.0);
            acc_lo.iter_mut().for_each(|v| *v = 0.0);
            wline.iter_mut().for_each(|v| *v = 1.0);
            let stride = q.pow((d - 1 - a) as u32);
            let npts = nlines * q;
            for p in 0..npts {
                let ia = (p / stride) % q;
                let line = (p / (stride * q)) * stride + p % stride;
                if ia == 0 {
                    let mut rest = p;
                    let mut w = 1.0;
                    for b in (0..d).rev() {
                        if b != a {
                            w *= self.rule.weights[rest % q];
                        }
                        rest /= q;
                    }
                    wline[line] = w;
                }
                for c in 0..nc {
                    let s = self.samples[p * nc + c];
                    acc_hi[line * nc + c] += self.rule.p_hi[ia] * s;
                    acc_lo[line * nc + c] += self.rule.p_lo[ia] * s;
                }
            }
            let mut ind = 0.0;
            for line in 0..nlines {
                for c in 0..nc {
                    ind += wline[line]
                        * (acc_hi[line * nc + c].abs() + acc_lo[line * nc + c].abs())
                        / scale[c];
                }
            }
            if ind > best.1 {
                best = (a, ind);
            }
        }
        best.0
    }
}

struct Panel {
    depth: u32,
    halves: [(Vec<f64>, Vec<f64>, RuleResult); 2],
    fine: Vec<f64>,
    err: Vec<f64>,
}

fn make_panel<F: FnMut(&[f64], &mut [f64])>(
    eng: &mut Engine<'_, F>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    coarse: RuleResult,
    depth: u32,
) -> Result<Panel, QuadratureError> {
    let a = coarse.axis;
    let m = 0.5 * (lo[a] + hi[a]);
    let mut hi_l = hi.clone();
    hi_l[a] = m;
    let mut lo_r = lo.clone();
    lo_r[a] = m;
    let left = eng.apply(&lo, &hi_l)?;
    let right = eng.apply(&lo_r, &hi)?;
    let fine: Vec<f64> = left.value.iter().zip(&right.value).map(|(l, r)| l + r).collect();
    let err = coarse
        .value
        .iter()
        .zip(&fine)
        .map(|(c, f)| (c - f).abs())
        .collect();
    Ok(Panel {
        depth,
        halves: [(lo, hi_l, left), (lo_r, hi, right)],
        fine,
        err,
    })
}

/// Integrates `f` over `dom`; `f(x, out)` writes `ncomp` components at `x`.
pub fn integrate<F>(
    dom: &IntegrationDomain,
    ncomp: usize,
    spec: &QuadratureSpec,
    f: F,
) -> Result<Integral, QuadratureError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    spec.validate()?;
    let boxes = dom.param_boxes();
    if boxes.is_empty() {
        return Ok(Integral {
            values: vec![0.0; ncomp],
            errors: vec![0.0; ncomp],
            evaluations: 0,
            converged: true,
        });
    }
    let pdim = boxes[0].0.len();
    let mut eng = Engine {
        dom,
        rule: Rule::new(spec.order),
        ncomp,
        f,
        evals: 0,
        abs_tol: spec.abs_tol,
        u: vec![0.0; pdim],
        x: vec![0.0; dom.point_dim()],
        out: vec![0.0; ncomp],
        samples: Vec::new(),
    };
    let mut active = Vec::new();
    for (lo, hi) in boxes {
        let coarse = eng.apply(&lo, &hi)?;
        active.push(make_panel(&mut eng, lo, hi, coarse, 0)?);
    }
    let mut frozen_val = vec![0.0; ncomp];
    let mut frozen_err = vec![0.0; ncomp];
    loop {
        let mut total = frozen_val.clone();
        let mut err = frozen_err.clone();
        for p in &active {
            for c in 0..ncomp {
                total[c] += p.fine[c];
                err[c] += p.err[c];
            }
        }
        let target: Vec<f64> = total
            .iter()
            .map(|t| (spec.rel_tol * t.abs()).max(spec.abs_tol).max(f64::MIN_POSITIVE))
            .collect();
        let done = err.iter().zip(&target).all(|(e, t)| e <= t);
        let result = |converged| Integral {
            values: total.clone(),
            errors: err.clone(),
            evaluations: eng.evals,
            converged,
        };
        if done {
            return Ok(result(true));
        }
        if eng.evals >= spec.max_evals || active.is_empty() {
            return Err(QuadratureError::NotConverged(result(false)));
        }
        let score = |p: &Panel| {
            p.err
                .iter()
                .zip(&target)
                .map(|(e, t)| e / t)
                .fold(0.0f64, f64::max)
        };
        let (worst, _) = active
            .iter()
            .enumerate()
            .map(|(i, p)| (i, score(p)))
            .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
        let panel = active.swap_remove(worst);
        if panel.depth >= spec.max_depth {
            for c in 0..ncomp {
                frozen_val[c] += panel.fine[c];
                frozen_err[c] += panel.err[c];
            }
            continue;
        }
        let [(lo_l, hi_l, left), (lo_r, hi_r, right)] = panel.halves;
        active.push(make_panel(&mut eng, lo_l, hi_l, left, panel.depth + 1)?);
        active.push(make_panel(&mut eng, lo_r, hi_r, right, panel.depth + 1)?);
    }
}

/// Scalar integral of `f` over `[a, b]`.
pub fn integrate_1d<F>(a: f64, b: f64, spec: &QuadratureSpec, mut f: F) -> Result<Integral, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    let dom = IntegrationDomain::Box {
        lo: vec![a],
        hi: vec![b],
    };
    integrate(&dom, 1, spec, |x, out| out[0] = f(x[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(4) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn polynomial_exact_on_box() {
        let dom = IntegrationDomain::Box {
            lo: vec![0.0, -1.0],
            hi: vec![2.0, 1.0],
        };
        let r = integrate(&dom, 2, &QuadratureSpec::default(), |x, o| {
            o[0] = x[0].powi(5) * x[1].powi(2);
            o[1] = 1.0;
        })
        .unwrap();
        assert!((r.values[0] - 64.0 / 6.0 * 2.0 / 3.0).abs() < 1e-12);
        assert!((r.values[1] - 4.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_1d() {
        let r = integrate_1d(-8.0, 8.0, &QuadratureSpec::default(), |x| (-x * x).exp()).unwrap();
        assert!((r.values[0] - PI.sqrt()).abs() < 1e-10);
        assert!(r.converged);
    }

    #[test]
    fn budget_exhaustion_reports_partial() {
        let spec = QuadratureSpec {
            max_evals: 10,
            rel_tol: 1e-14,
            ..QuadratureSpec::default()
        };
        let e = integrate_1d(0.0, 1.0, &spec, |x| x.sqrt()).unwrap_err();
        let p = e.partial().unwrap();
        assert!((p.values[0] - 2.0 / 3.0).abs() < 1e-3);
        assert!(!p.converged);
    }

    #[test]
    fn non_finite_is_reported() {
        let e = integrate_1d(-1.0, 1.0, &QuadratureSpec::default(), |x| 1.0 / (x - x)).unwrap_err();
        assert!(matches!(e, QuadratureError::NonFinite(_)));
    }
}
