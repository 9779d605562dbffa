//! Horizontal gradient, divergence, sub-Laplacian and the drift operator.
//!
//! With `𝓛 = Σ X_k²`, `𝓛₀ = −𝓛` and a drift `X = Σ a_j X_j`, the drift
//! operator is `𝓛_X = 𝓛₀ − γX`. It is symmetric on `L²(μ_X)` with
//! `dμ_X = χ dx`, `χ(x) = exp(γ⟨a, x′⟩)`, and `b_X = |a|/2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupError, GroupModel};
use crate::jet::{Jet3, JetError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpsError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("drift direction has {got} components, horizontal dimension is {expected}")]
    DriftLength { expected: usize, got: usize },
    #[error("{0} is not finite")]
    NonFinite(&'static str),
    #[error("point is characteristic: the horizontal gradient of the norm vanishes")]
    Characteristic,
    #[error("group is not polarizable or has Q ≤ 2")]
    NotPolarizable,
}

/// Orientation convention for the character and the drift.
///
/// `Positive` uses `χ = exp(+γ⟨a,x′⟩)` with `𝓛_X = 𝓛₀ − γΣa_jX_j`.
/// `Negative` uses `χ = exp(−γ⟨a,x′⟩)` and correspondingly
/// `𝓛_X = 𝓛₀ + γΣa_jX_j`; it equals `Positive` with `a` replaced by `−a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharacterSign {
    #[default]
    Positive,
    Negative,
}

/// Drift strength `γ`, direction `a` and sign convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub gamma: f64,
    pub a: Vec<f64>,
    #[serde(default)]
    pub sign: CharacterSign,
}

impl DriftSpec {
    pub fn new(g: &GroupModel, gamma: f64, a: Vec<f64>) -> Result<Self, OpsError> {
        if a.len() != g.horizontal_dim() {
            return Err(OpsError::DriftLength {
                expected: g.horizontal_dim(),
                got: a.len(),
            });
        }
        if !gamma.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(OpsError::NonFinite("drift"));
        }
        Ok(Self {
            gamma,
            a,
            sign: CharacterSign::Positive,
        })
    }

    /// No drift: `μ_X` is the Haar measure.
    pub fn none(g: &GroupModel) -> Self {
        Self {
            gamma: 0.0,
            a: vec![0.0; g.horizontal_dim()],
            sign: CharacterSign::Positive,
        }
    }

    pub fn with_sign(mut self, sign: CharacterSign) -> Self {
        self.sign = sign;
        self
    }

    /// `b_X = |a|/2`.
    pub fn b(&self) -> f64 {
        0.5 * self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `γ²b_X²`.
    pub fn gamma2_b2(&self) -> f64 {
        let gb = self.gamma * self.b();
        gb * gb
    }

    pub fn is_trivial(&self) -> bool {
        self.gamma == 0.0 || self.a.iter().all(|&v| v == 0.0)
    }

    /// Direction entering both `χ` and `𝓛_X` after the sign convention.
    pub fn effective_a(&self) -> Vec<f64> {
        match self.sign {
            CharacterSign::Positive => self.a.clone(),
            CharacterSign::Negative => self.a.iter().map(|v| -v).collect(),
        }
    }

    fn exponent(&self, x: &[f64]) -> f64 {
        let s = match self.sign {
            CharacterSign::Positive => 1.0,
            CharacterSign::Negative => -1.0,
        };
        s * self.gamma * self.a.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }
}

/// `χ(x)`.
pub fn character(drift: &DriftSpec, x: &[f64]) -> f64 {
    drift.exponent(x).exp()
}

/// `χ^s` as an exact jet at `x`.
pub fn character_jet(drift: &DriftSpec, x: &[f64], s: f64) -> Result<Jet3, JetError> {
    let a = drift.effective_a();
    let mut lin = Jet3::constant(x.len(), s * drift.exponent(x))?;
    for (i, ai) in a.iter().enumerate() {
        if *ai != 0.0 {
            lin = &lin + &Jet3::variable(x.len(), i, 0.0)?.scale(s * drift.gamma * ai);
        }
    }
    Ok(lin.exp())
}

/// `X_k f` as a jet, exact to one order less than `f`.
pub fn apply_frame(g: &GroupModel, k: usize, f: &Jet3, x: &[f64]) -> Result<Jet3, JetError> {
    let order = f.order().saturating_sub(1);
    let mut acc = Jet3::zero(x.len())?.truncated(order);
    for (i, c) in &g.frame()[k].terms {
        let cj = c.jet(x, order)?;
        acc = &acc + &(&cj * &f.partial(*i));
    }
    Ok(acc)
}

/// `(X_1 f, …, X_N f)` at `x`; needs `f` exact to order 1.
pub fn horizontal_gradient(g: &GroupModel, f: &Jet3, x: &[f64]) -> Vec<f64> {
    debug_assert!(f.order() >= 1);
    g.frame()
        .iter()
        .map(|v| v.terms.iter().map(|(i, c)| c.value(x) * f.grad(*i)).sum())
        .collect()
}

/// `∇_H f` as jets, exact to one order less than `f`.
pub fn horizontal_gradient_jets(
    g: &GroupModel,
    f: &Jet3,
    x: &[f64],
) -> Result<Vec<Jet3>, JetError> {
    (0..g.horizontal_dim())
        .map(|k| apply_frame(g, k, f, x))
        .collect()
}

/// `div_H v = Σ X_k v_k` for a horizontal field given by jets at `x`.
pub fn horizontal_divergence(g: &GroupModel, v: &[Jet3], x: &[f64]) -> f64 {
    g.frame()
        .iter()
        .zip(v)
        .map(|(fv, vk)| {
            fv.terms
                .iter()
                .map(|(i, c)| c.value(x) * vk.grad(*i))
                .sum::<f64>()
        })
        .sum()
}

/// `𝓛f = Σ X_k² f` at `x`; needs `f` exact to order 2.
pub fn sub_laplacian(g: &GroupModel, f: &Jet3, x: &[f64]) -> f64 {
    debug_assert!(f.order() >= 2);
    let (second, first) = g.sub_laplacian_coefficients();
    let a: f64 = second.iter().map(|(i, j, p)| p.value(x) * f.hess(*i, *j)).sum();
    let b: f64 = first.iter().map(|(j, p)| p.value(x) * f.grad(*j)).sum();
    a + b
}

/// `𝓛f` as a jet, exact to two orders less than `f`.
pub fn sub_laplacian_jet(g: &GroupModel, f: &Jet3, x: &[f64]) -> Result<Jet3, JetError> {
    let order = f.order().saturating_sub(2);
    let mut acc = Jet3::zero(x.len())?.truncated(order);
    for k in 0..g.horizontal_dim() {
        let xk = apply_frame(g, k, f, x)?;
        acc = &acc + &apply_frame(g, k, &xk, x)?;
    }
    Ok(acc)
}

/// `Xf = Σ a_j X_j f` with the effective direction of `drift`.
pub fn drift_derivative(g: &GroupModel, drift: &DriftSpec, f: &Jet3, x: &[f64]) -> f64 {
    let a = drift.effective_a();
    horizontal_gradient(g, f, x)
        .iter()
        .zip(&a)
        .map(|(d, a)| d * a)
        .sum()
}

/// `𝓛_X f = −𝓛f − γXf` at `x`.
pub fn drift_laplacian(g: &GroupModel, drift: &DriftSpec, f: &Jet3, x: &[f64]) -> f64 {
    -sub_laplacian(g, f, x) - drift.gamma * drift_derivative(g, drift, f, x)
}

/// A residual together with the magnitude it should be compared to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub value: f64,
    pub scale: f64,
}

impl Residual {
    /// `|value| / max(scale, 1)`.
    pub fn relative(&self) -> f64 {
        self.value.abs() / self.scale.max(1.0)
    }
}

/// `χ^{1/2}𝓛_X(χ^{−1/2}f) − (𝓛₀ + γ²b_X²)f` at `x`; needs `f` exact to order 2.
pub fn gauge_residual(
    g: &GroupModel,
    drift: &DriftSpec,
    f: &Jet3,
    x: &[f64],
) -> Result<Residual, OpsError> {
    let h = &character_jet(drift, x, -0.5)? * f;
    let lhs = character(drift, x).sqrt() * drift_laplacian(g, drift, &h, x);
    let l0 = -sub_laplacian(g, f, x);
    let rhs = l0 + drift.gamma2_b2() * f.value();
    Ok(Residual {
        value: lhs - rhs,
        scale: lhs.abs().max(l0.abs()).max(f.magnitude()),
    })
}

/// `X_kχ − γa_kχ` at `x` for every `k`.
pub fn character_residuals(
    g: &GroupModel,
    drift: &DriftSpec,
    x: &[f64],
) -> Result<Vec<Residual>, OpsError> {
    let chi = character_jet(drift, x, 1.0)?;
    let grad = horizontal_gradient(g, &chi, x);
    let a = drift.effective_a();
    Ok(grad
        .iter()
        .zip(&a)
        .map(|(xk, ak)| {
            let expected = drift.gamma * ak * chi.value();
            Residual {
                value: xk - expected,
                scale: expected.abs().max(xk.abs()),
            }
        })
        .collect())
}

fn horizontal_radius_jet(g: &GroupModel, x: &[f64]) -> Result<Jet3, OpsError> {
    let vars = Jet3::variables(x)?;
    let mut r2 = Jet3::zero(x.len())?;
    for v in &vars[..g.horizontal_dim()] {
        r2 = &r2 + &(v * v);
    }
    if r2.value() == 0.0 {
        return Err(OpsError::Characteristic);
    }
    Ok(r2.sqrt()?)
}

/// `|∇_H |x′|^b| − |b|·|x′|^{b−1}` at `x` with `x′ ≠ 0`.
pub fn power_gradient_residual(g: &GroupModel, b: f64, x: &[f64]) -> Result<Residual, OpsError> {
    let r = horizontal_radius_jet(g, x)?;
    let f = r.powf(b)?;
    let grad = horizontal_gradient(g, &f, x);
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    let expected = b.abs() * r.value().powf(b - 1.0);
    Ok(Residual {
        value: norm - expected,
        scale: expected.max(norm),
    })
}

/// `div_H(x′/|x′|^b) − (N−b)/|x′|^b` at `x` with `x′ ≠ 0`.
pub fn power_divergence_residual(
    g: &GroupModel,
    b: f64,
    x: &[f64],
) -> Result<Residual, OpsError> {
    let r = horizontal_radius_jet(g, x)?;
    let w = r.powf(-b)?;
    let vars = Jet3::variables(x)?;
    let v: Vec<Jet3> = vars[..g.horizontal_dim()].iter().map(|xi| xi * &w).collect();
    let div = horizontal_divergence(g, &v, x);
    let expected = (g.horizontal_dim() as f64 - b) * w.value();
    Ok(Residual {
        value: div - expected,
        scale: expected.abs().max(div.abs()),
    })
}

/// `Σ_j u X_ju X_j|∇_H u| / |∇_H u|³` with `u = d^{2−Q}`, evaluated at a
/// non-characteristic point; equals `(Q−1)/(Q−2)` on polarizable groups.
pub fn polarizable_identity_lhs(g: &GroupModel, x: &[f64]) -> Result<f64, OpsError> {
    let q = g.homogeneous_dim() as f64;
    if !g.is_polarizable() || q <= 2.0 {
        return Err(OpsError::NotPolarizable);
    }
    let d = g.norm_jet(x)?;
    let u = d.powf(2.0 - q)?;
    let grad = horizontal_gradient_jets(g, &u, x)?;
    let mut n2 = Jet3::zero(x.len())?.truncated(2);
    for gk in &grad {
        n2 = &n2 + &(gk * gk);
    }
    if n2.value() <= 1e-300 {
        return Err(OpsError::Characteristic);
    }
    let norm = n2.sqrt()?;
    let dn = horizontal_gradient(g, &norm, x);
    let s: f64 = grad.iter().zip(&dn).map(|(gu, dn)| gu.value() * dn).sum();
    Ok(u.value() * s / norm.value().powi(3))
}

/// [`polarizable_identity_lhs`] minus `(Q−1)/(Q−2)`.
pub fn polarizable_identity_residual(g: &GroupModel, x: &[f64]) -> Result<Residual, OpsError> {
    let q = g.homogeneous_dim() as f64;
    let lhs = polarizable_identity_lhs(g, x)?;
    let expected = (q - 1.0) / (q - 2.0);
    Ok(Residual {
        value: lhs - expected,
        scale: expected,
    })
}
