//! Compactly supported test fields with exact jets.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::group::{GroupError, GroupModel};
use crate::jet::{uni, Jet3, JetError, Taylor, MAX_DIM};
use crate::ops::{character_jet, DriftSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid field parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// Shape of a support, used to choose integration coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SupportShape {
    /// Contained in an axis-aligned box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Depends on `x` only through `|x′|` and the higher strata.
    Horizontal {
        radius: (f64, f64),
        breaks: Vec<f64>,
        higher_lo: Vec<f64>,
        higher_hi: Vec<f64>,
    },
    /// Depends on `x` only through the homogeneous norm `d`.
    Homogeneous { radius: (f64, f64), breaks: Vec<f64> },
    Empty,
}

/// Where a field may be nonzero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Support {
    /// The field vanishes where `|x′| ≤ r_min`.
    pub r_min: f64,
    pub shape: SupportShape,
}

/// A real function on a group with exact jets and a declared support.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    /// Jet at `x` exact to `order`; the zero jet outside the support.
    fn jet_to(&self, x: &[f64], order: u8) -> Jet3;
    /// Jet at `x` exact to order 3.
    fn jet(&self, x: &[f64]) -> Jet3 {
        self.jet_to(x, 3)
    }
    fn support(&self) -> &Support;
}

/// `H(τ) = ψ(τ)/(ψ(τ)+ψ(1−τ))`, `ψ(τ) = e^{−1/τ}` for `τ > 0`, with derivatives.
pub fn smooth_step(tau: f64) -> Taylor {
    if tau <= 0.0 {
        return uni::constant(0.0);
    }
    if tau >= 1.0 {
        return uni::constant(1.0);
    }
    let a = psi(uni::variable(tau));
    let b = psi(uni::add(uni::scale(uni::variable(tau), -1.0), uni::constant(1.0)));
    uni::mul(a, uni::recip(uni::add(a, b)))
}

fn psi(t: Taylor) -> Taylor {
    if t[0] <= 2e-3 {
        return uni::constant(0.0);
    }
    uni::exp(uni::scale(uni::recip(t), -1.0))
}

/// Switch-on profile equal to 0 for `s ≤ a` and 1 for `s ≥ b`, linear in `s`.
pub fn transition(s: f64, a: f64, b: f64) -> Taylor {
    let w = b - a;
    let h = smooth_step((s - a) / w);
    [h[0], h[1] / w, h[2] / (w * w), h[3] / (w * w * w)]
}

/// Switch-on profile equal to 0 for `s ≤ a` and 1 for `s ≥ b`, linear in `ln s`.
pub fn log_transition(s: f64, a: f64, b: f64) -> Taylor {
    let w = (b / a).ln();
    let tau = uni::scale(uni::add(uni::ln(uni::variable(s)), uni::constant(-a.ln())), 1.0 / w);
    uni::chain(smooth_step(tau[0]), tau)
}

/// `exp(−ε q/(1−q))` for `q < 1`, else 0, with derivatives in `q`.
pub fn bump_profile(q: f64, eps: f64) -> Taylor {
    if q >= 1.0 {
        return uni::constant(0.0);
    }
    let w = 1.0 - q;
    let h = -eps * q / w;
    if h < -700.0 {
        return uni::constant(0.0);
    }
    let h1 = -eps / (w * w);
    let h2 = -2.0 * eps / (w * w * w);
    let h3 = -6.0 * eps / (w * w * w * w);
    let e = h.exp();
    [
        e,
        h1 * e,
        (h2 + h1 * h1) * e,
        (h3 + 3.0 * h1 * h2 + h1 * h1 * h1) * e,
    ]
}

/// Jet of `|x′|`, the norm of the first `upto` coordinates of `x`.
fn radius_jet(x: &[f64], upto: usize, order: u8) -> Result<Jet3, JetError> {
    let n = x.len();
    if n > MAX_DIM {
        return Err(JetError::Dimension(n));
    }
    let mut grad = [0.0; MAX_DIM];
    let mut hess = [0.0; MAX_DIM];
    let mut r2 = 0.0;
    for i in 0..upto {
        r2 += x[i] * x[i];
        grad[i] = 2.0 * x[i];
        hess[i] = 2.0;
    }
    if !(r2 > 0.0) {
        return Err(JetError::Domain { op: "sqrt", value: r2 });
    }
    let r = r2.sqrt();
    let s = Jet3::diagonal_quadratic_to(r2, &grad[..n], &hess[..n], order)?;
    Ok(s.compose([r, 0.5 / r, -0.25 / (r * r2), 0.375 / (r2 * r2 * r)]))
}

/// A smooth bump `exp(−ε s²/(1−s²))`, `s² = Σ((x_i−c_i)/σ_i)²`, optionally
/// tilted by `1 + Σκ_i(x_i−c_i)/σ_i` and cut off near `x′ = 0`.
#[derive(Debug, Clone)]
pub struct BumpField {
    center: Vec<f64>,
    scale: Vec<f64>,
    steepness: f64,
    tilt: Option<Vec<f64>>,
    n_h: usize,
    cutoff: (f64, f64),
    support: Support,
}

impl BumpField {
    /// Bump at `center` with half-widths `scale`, vanishing for `|x′| ≤ r_min`.
    /// The cutoff rises over `[r_min, 2r_min]`; the value at the center is 1
    /// whenever `|center′| ≥ 2r_min`.
    pub fn new(
        g: &GroupModel,
        center: Vec<f64>,
        scale: Vec<f64>,
        r_min: f64,
    ) -> Result<Self, FieldError> {
        g.check_point(&center)?;
        if scale.len() != center.len() || scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(FieldError::Invalid("scales must be positive".into()));
        }
        if !(r_min >= 0.0) {
            return Err(FieldError::Invalid("r_min must be nonnegative".into()));
        }
        let n_h = g.horizontal_dim();
        if g.horizontal_norm(&center) <= r_min {
            return Err(FieldError::Invalid("center lies inside the excluded core".into()));
        }
        let lo = center.iter().zip(&scale).map(|(c, s)| c - s).collect();
        let hi = center.iter().zip(&scale).map(|(c, s)| c + s).collect();
        Ok(Self {
            center,
            scale,
            steepness: 4.0,
            tilt: None,
            n_h,
            cutoff: (r_min, 2.0 * r_min),
            support: Support {
                r_min,
                shape: SupportShape::Box { lo, hi },
            },
        })
    }

    /// Sets `ε` in `exp(−ε s²/(1−s²))`.
    pub fn with_steepness(mut self, eps: f64) -> Result<Self, FieldError> {
        if !(eps > 0.0) {
            return Err(FieldError::Invalid("steepness must be positive".into()));
        }
        self.steepness = eps;
        Ok(self)
    }

    /// Multiplies by `1 + Σκ_i(x_i−c_i)/σ_i`; requires `|κ| < 1`.
    pub fn with_tilt(mut self, kappa: Vec<f64>) -> Result<Self, FieldError> {
        let norm = kappa.iter().map(|v| v * v).sum::<f64>().sqrt();
        if kappa.len() != self.center.len() || norm >= 1.0 {
            return Err(FieldError::Invalid("tilt must have norm below 1".into()));
        }
        self.tilt = Some(kappa);
        Ok(self)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }
}

impl ScalarField for BumpField {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn jet_to(&self, x: &[f64], order: u8) -> Jet3 {
        let n = x.len();
        let zero = || Jet3::constant_to(n, 0.0, order).expect("dimension validated");
        let r = x[..self.n_h].iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= self.cutoff.0 {
            return zero();
        }
        let mut q = 0.0;
        let mut grad = [0.0; MAX_DIM];
        let mut hess = [0.0; MAX_DIM];
        let mut lin_grad = [0.0; MAX_DIM];
        let mut lin = 1.0;
        for i in 0..n {
            let u = (x[i] - self.center[i]) / self.scale[i];
            q += u * u;
            grad[i] = 2.0 * u / self.scale[i];
            hess[i] = 2.0 / (self.scale[i] * self.scale[i]);
            if let Some(kappa) = &self.tilt {
                lin += kappa[i] * u;
                lin_grad[i] = kappa[i] / self.scale[i];
            }
        }
        if q >= 1.0 {
            return zero();
        }
        let qj = Jet3::diagonal_quadratic_to(q, &grad[..n], &hess[..n], order)
            .expect("dimension validated");
        let mut f = qj.compose(bump_profile(q, self.steepness));
        if f.value() == 0.0 {
            return zero();
        }
        if self.tilt.is_some() {
            let lj = Jet3::diagonal_quadratic_to(lin, &lin_grad[..n], &[0.0; MAX_DIM][..n], order)
                .expect("dimension validated");
            f = &f * &lj;
        }
        let (a, b) = self.cutoff;
        if a > 0.0 && r < b {
            let rj = radius_jet(x, self.n_h, order).expect("r > 0");
            f = &f * &rj.compose(transition(r, a, b));
        }
        f
    }

    fn support(&self) -> &Support {
        &self.support
    }
}

/// A bump in `(|x′|, higher strata)`: invariant under rotations of `x′`.
#[derive(Debug, Clone)]
pub struct CylindricalBump {
    rho: (f64, f64),
    higher_center: Vec<f64>,
    higher_scale: Vec<f64>,
    steepness: f64,
    tilt: Vec<f64>,
    n_h: usize,
    support: Support,
}

impl CylindricalBump {
    /// Bump centred at `|x′| = rho_c`, half-width `rho_s`, and at
    /// `higher_center` with half-widths `higher_scale`.
    pub fn new(
        g: &GroupModel,
        rho_c: f64,
        rho_s: f64,
        higher_center: Vec<f64>,
        higher_scale: Vec<f64>,
    ) -> Result<Self, FieldError> {
        let n_h = g.horizontal_dim();
        let nz = g.dim() - n_h;
        if higher_center.len() != nz || higher_scale.len() != nz {
            return Err(FieldError::Invalid("higher-strata arrays have wrong length".into()));
        }
        if !(rho_s > 0.0 && rho_c - rho_s > 0.0) || higher_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(FieldError::Invalid(
                "radial interval must stay away from x′ = 0 and scales must be positive".into(),
            ));
        }
        let higher_lo = higher_center.iter().zip(&higher_scale).map(|(c, s)| c - s).collect();
        let higher_hi = higher_center.iter().zip(&higher_scale).map(|(c, s)| c + s).collect();
        Ok(Self {
            rho: (rho_c, rho_s),
            higher_center,
            higher_scale,
            steepness: 4.0,
            tilt: vec![0.0; nz + 1],
            n_h,
            support: Support {
                r_min: rho_c - rho_s,
                shape: SupportShape::Horizontal {
                    radius: (rho_c - rho_s, rho_c + rho_s),
                    breaks: vec![],
                    higher_lo,
                    higher_hi,
                },
            },
        })
    }

    pub fn with_steepness(mut self, eps: f64) -> Result<Self, FieldError> {
        if !(eps > 0.0) {
            return Err(FieldError::Invalid("steepness must be positive".into()));
        }
        self.steepness = eps;
        Ok(self)
    }

    /// Multiplies by `1 + κ_0 u_ρ + Σ κ_i u_i` in the scaled bump coordinates.
    pub fn with_tilt(mut self, kappa: Vec<f64>) -> Result<Self, FieldError> {
        let norm = kappa.iter().map(|v| v * v).sum::<f64>().sqrt();
        if kappa.len() != self.tilt.len() || norm >= 1.0 {
            return Err(FieldError::Invalid("tilt must have norm below 1".into()));
        }
        self.tilt = kappa;
        Ok(self)
    }
}

impl ScalarField for CylindricalBump {
    fn dim(&self) -> usize {
        self.n_h + self.higher_center.len()
    }

    fn jet_to(&self, x: &[f64], order: u8) -> Jet3 {
        let n = x.len();
        let zero = Jet3::constant_to(n, 0.0, order).expect("dimension validated");
        let r: f64 = x[..self.n_h].iter().map(|v| v * v).sum::<f64>().sqrt();
        let (rc, rs) = self.rho;
        let ur = (r - rc) / rs;
        if ur.abs() >= 1.0 {
            return zero;
        }
        let mut q = ur * ur;
        for (i, (c, s)) in self.higher_center.iter().zip(&self.higher_scale).enumerate() {
            let u = (x[self.n_h + i] - c) / s;
            q += u * u;
        }
        if q >= 1.0 {
            return zero;
        }
        let rj = radius_jet(x, self.n_h, order).expect("r > 0 on the support");
        let urj = rj.add_scalar(-rc).scale(1.0 / rs);
        let mut grad = [0.0; MAX_DIM];
        let mut hess = [0.0; MAX_DIM];
        let mut lin_grad = [0.0; MAX_DIM];
        let mut hq = 0.0;
        let mut hl = 1.0;
        for (i, (c, s)) in self.higher_center.iter().zip(&self.higher_scale).enumerate() {
            let u = (x[self.n_h + i] - c) / s;
            hq += u * u;
            hl += self.tilt[i + 1] * u;
            grad[self.n_h + i] = 2.0 * u / s;
            hess[self.n_h + i] = 2.0 / (s * s);
            lin_grad[self.n_h + i] = self.tilt[i + 1] / s;
        }
        let qj = &(&urj * &urj)
            + &Jet3::diagonal_quadratic_to(hq, &grad[..n], &hess[..n], order).expect("dimension validated");
        let lin = &urj.scale(self.tilt[0])
            + &Jet3::diagonal_quadratic_to(hl, &lin_grad[..n], &[0.0; MAX_DIM][..n], order)
                .expect("dimension validated");
        let f = qj.compose(bump_profile(q, self.steepness));
        if self.tilt.iter().all(|&k| k == 0.0) {
            f
        } else {
            &f * &lin
        }
    }

    fn support(&self) -> &Support {
        &self.support
    }
}

/// Radial variable of a power-cutoff field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialVariable {
    /// `ρ = |x′|`.
    Horizontal,
    /// `ρ = d(x)`.
    Homogeneous,
}

/// `ρ^C ζ(ρ) ζ̄(ρ) v`: a power of a radial variable with logarithmic cutoffs.
///
/// The plateau is `[r_min e^{−k}, r_max e^{k}]`; the inner and outer
/// transitions each span a factor `e^k`. For `ρ = |x′|` on groups with higher
/// strata, `v` is a bump in the higher coordinates rescaled by the outer radius
/// through the dilations, so `f` lives in a dilate of a fixed box.
#[derive(Debug, Clone)]
pub struct PowerCutoffField {
    g: GroupModel,
    variable: RadialVariable,
    exponent: f64,
    k: u32,
    edges: [f64; 4],
    higher_scale: Vec<f64>,
    support: Support,
}

impl PowerCutoffField {
    pub fn new(
        g: &GroupModel,
        variable: RadialVariable,
        exponent: f64,
        k: u32,
        r_min: f64,
        r_max: f64,
    ) -> Result<Self, FieldError> {
        if k == 0 || !(r_min > 0.0 && r_max >= r_min) || !exponent.is_finite() {
            return Err(FieldError::Invalid(
                "need k ≥ 1 and 0 < r_min ≤ r_max".into(),
            ));
        }
        if variable == RadialVariable::Homogeneous && !g.is_polarizable() {
            return Err(FieldError::Invalid("homogeneous family needs a polarizable norm".into()));
        }
        let kf = k as f64;
        let edges = [
            r_min * (-2.0 * kf).exp(),
            r_min * (-kf).exp(),
            r_max * kf.exp(),
            r_max * (2.0 * kf).exp(),
        ];
        let outer = edges[3];
        let n_h = g.horizontal_dim();
        let higher_scale: Vec<f64> = g.weights()[n_h..]
            .iter()
            .map(|&w| outer.powi(w as i32))
            .collect();
        let shape = match variable {
            RadialVariable::Horizontal => SupportShape::Horizontal {
                radius: (edges[0], edges[3]),
                breaks: vec![edges[1], edges[2]],
                higher_lo: higher_scale.iter().map(|s| -s).collect(),
                higher_hi: higher_scale.clone(),
            },
            RadialVariable::Homogeneous => SupportShape::Homogeneous {
                radius: (edges[0], edges[3]),
                breaks: vec![edges[1], edges[2]],
            },
        };
        let r_floor = match variable {
            RadialVariable::Horizontal => edges[0],
            RadialVariable::Homogeneous => 0.0,
        };
        Ok(Self {
            g: g.clone(),
            variable,
            exponent,
            k,
            edges,
            higher_scale,
            support: Support {
                r_min: r_floor,
                shape,
            },
        })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn variable(&self) -> RadialVariable {
        self.variable
    }

    /// `ρ ↦ ρ^C ζ(ρ) ζ̄(ρ)` with derivatives.
    pub fn profile(&self, rho: f64) -> Taylor {
        let [a, b, c, d] = self.edges;
        if rho <= a || rho >= d {
            return uni::constant(0.0);
        }
        let mut p = uni::powf(uni::variable(rho), self.exponent);
        if rho < b {
            p = uni::mul(p, log_transition(rho, a, b));
        }
        if rho > c {
            let off = log_transition(rho, c, d);
            p = uni::mul(p, [1.0 - off[0], -off[1], -off[2], -off[3]]);
        }
        p
    }
}

impl ScalarField for PowerCutoffField {
    fn dim(&self) -> usize {
        self.g.dim()
    }

    fn jet_to(&self, x: &[f64], order: u8) -> Jet3 {
        let n = x.len();
        let zero = Jet3::constant_to(n, 0.0, order).expect("dimension validated");
        let n_h = self.g.horizontal_dim();
        let rho = match self.variable {
            RadialVariable::Horizontal => {
                let r = self.g.horizontal_norm(x);
                if r <= self.edges[0] || r >= self.edges[3] {
                    return zero;
                }
                radius_jet(x, n_h, order).expect("r > 0")
            }
            RadialVariable::Homogeneous => match self.g.norm_jet_to(x, order) {
                Ok(d) if d.value() > self.edges[0] && d.value() < self.edges[3] => d,
                _ => return zero,
            },
        };
        let mut f = rho.compose(self.profile(rho.value()));
        if self.variable == RadialVariable::Horizontal && !self.higher_scale.is_empty() {
            let mut q = 0.0;
            for (i, s) in self.higher_scale.iter().enumerate() {
                let u = x[n_h + i] / s;
                q += u * u;
            }
            if q >= 1.0 {
                return zero;
            }
            let mut grad = [0.0; MAX_DIM];
            let mut hess = [0.0; MAX_DIM];
            for (i, s) in self.higher_scale.iter().enumerate() {
                grad[n_h + i] = 2.0 * x[n_h + i] / (s * s);
                hess[n_h + i] = 2.0 / (s * s);
            }
            let qj = Jet3::diagonal_quadratic_to(q, &grad[..n], &hess[..n], order)
                .expect("dimension validated");
            f = &f * &qj.compose(bump_profile(q, 1.0));
        }
        f
    }

    fn support(&self) -> &Support {
        &self.support
    }
}

/// `χ^s · f` for a drift character `χ`.
#[derive(Debug, Clone)]
pub struct CharacterScaled {
    inner: Arc<dyn ScalarField>,
    drift: DriftSpec,
    power: f64,
}

impl CharacterScaled {
    pub fn new(inner: Arc<dyn ScalarField>, drift: DriftSpec, power: f64) -> Self {
        Self {
            inner,
            drift,
            power,
        }
    }
}

impl ScalarField for CharacterScaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn jet_to(&self, x: &[f64], order: u8) -> Jet3 {
        let f = self.inner.jet_to(x, order);
        if f.is_zero() {
            return f;
        }
        let chi = character_jet(&self.drift, x, self.power).expect("dimension validated");
        &chi * &f
    }

    fn support(&self) -> &Support {
        self.inner.support()
    }
}

/// `c · f`.
#[derive(Debug, Clone)]
pub struct Scaled {
    inner: Arc<dyn ScalarField>,
    factor: f64,
}

impl Scaled {
    pub fn new(inner: Arc<dyn ScalarField>, factor: f64) -> Self {
        Self { inner, factor }
    }
}

impl ScalarField for Scaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn jet_to(&self, x: &[f64], order: u8) -> Jet3 {
        self.inner.jet_to(x, order).scale(self.factor)
    }

    fn support(&self) -> &Support {
        self.inner.support()
    }
}

/// `f ∘ δ_λ`.
#[derive(Debug, Clone)]
pub struct Dilated {
    inner: Arc<dyn ScalarField>,
    weights: Vec<u32>,
    lambda: f64,
    support: Support,
}

impl Dilated {
    pub fn new(g: &GroupModel, inner: Arc<dyn ScalarField>, lambda: f64) -> Result<Self, FieldError> {
        if !(lambda > 0.0) {
            return Err(FieldError::Invalid("dilation factor must be positive".into()));
        }
        let weights = g.weights().to_vec();
        let n_h = g.horizontal_dim();
        let inv = 1.0 / lambda;
        let scale_box = |lo: &[f64], w: &[u32]| -> Vec<f64> {
            lo.iter().zip(w).map(|(v, &k)| v * inv.powi(k as i32)).collect()
        };
        let s = inner.support();
        let shape = match &s.shape {
            SupportShape::Box { lo, hi } => SupportShape::Box {
                lo: scale_box(lo, &weights),
                hi: scale_box(hi, &weights),
            },
            SupportShape::Horizontal {
                radius,
                breaks,
                higher_lo,
                higher_hi,
            } => SupportShape::Horizontal {
                radius: (radius.0 * inv, radius.1 * inv),
                breaks: breaks.iter().map(|b| b * inv).collect(),
                higher_lo: scale_box(higher_lo, &weights[n_h..]),
                higher_hi: scale_box(higher_hi, &weights[n_h..]),
            },
            SupportShape::Homogeneous { radius, breaks } => SupportShape::Homogeneous {
                radius: (radius.0 * inv, radius.1 * inv),
                breaks: breaks.iter().map(|b| b * inv).collect(),
            },
            SupportShape::Empty => SupportShape::Empty,
        };
        let support = Support {
            r_min: s.r_min * inv,
            shape,
        };
        Ok(Self {
            inner,
            weights,
            lambda,
            support,
        })
    }
}

impl ScalarField for Dilated {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn jet_to(&self, x: &[f64], order: u8) -> Jet3 {
        let n = x.len();
        let s: Vec<f64> = self.weights.iter().map(|&w| self.lambda.powi(w as i32)).collect();
        let y: Vec<f64> = x.iter().zip(&s).map(|(v, si)| v * si).collect();
        let f = self.inner.jet_to(&y, order);
        let grad: Vec<f64> = (0..n).map(|i| f.grad(i) * s[i]).collect();
        let hess: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| f.hess(i, j) * s[i] * s[j]).collect())
            .collect();
        let third: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| f.third(i, j, k) * s[i] * s[j] * s[k]).collect())
                    .collect()
            })
            .collect();
        Jet3::from_dense(f.value(), &grad, &hess, &third)
            .expect("dimension validated")
            .truncated(f.order())
    }

    fn support(&self) -> &Support {
        &self.support
    }
}
