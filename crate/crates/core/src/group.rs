//! Stratified groups in exponential coordinates.
//!
//! Coordinates are ordered stratum by stratum, so the first `N` entries of a
//! point are its horizontal part `x′`. A group is described by its strata, a
//! left-invariant horizontal frame with polynomial coefficients, the group law,
//! dilations and a homogeneous norm. Two families are built in: `ℝⁿ` and the
//! Heisenberg groups `ℍᵐ`. Other groups implement [`GroupLaw`] and are wrapped
//! with [`GroupModel::custom`].

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::jet::{Jet3, JetError, MAX_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("unknown group id `{0}`; expected `euclidean:<n>` or `heisenberg:<m>`")]
    UnknownId(String),
    #[error("unsupported group dimension {0}")]
    Dimension(usize),
    #[error("point has {got} coordinates, group dimension is {expected}")]
    PointLength { expected: usize, got: usize },
    #[error("homogeneous norm is not smooth at the origin")]
    Origin,
    #[error("{0} is not available for this group")]
    Unsupported(&'static str),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// A monomial `c · Π x_i^{p_i}` with sparse exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<(usize, u32)>,
}

/// A sparse polynomial in the group coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    pub terms: Vec<Monomial>,
}

impl Poly {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![Monomial {
                coeff: c,
                powers: vec![],
            }],
        }
    }

    /// `c · x_i`.
    pub fn linear(c: f64, i: usize) -> Self {
        Self {
            terms: vec![Monomial {
                coeff: c,
                powers: vec![(i, 1)],
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|m| m.coeff == 0.0)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|m| {
                m.powers
                    .iter()
                    .fold(m.coeff, |acc, &(i, p)| acc * x[i].powi(p as i32))
            })
            .sum()
    }

    /// Exact partial derivative in `x_i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut terms = Vec::new();
        for m in &self.terms {
            if let Some(pos) = m.powers.iter().position(|&(j, _)| j == i) {
                let (_, p) = m.powers[pos];
                let mut powers = m.powers.clone();
                if p == 1 {
                    powers.remove(pos);
                } else {
                    powers[pos].1 = p - 1;
                }
                terms.push(Monomial {
                    coeff: m.coeff * p as f64,
                    powers,
                });
            }
        }
        Self { terms }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                let mut powers = a.powers.clone();
                for &(i, p) in &b.powers {
                    match powers.iter_mut().find(|(j, _)| *j == i) {
                        Some(e) => e.1 += p,
                        None => powers.push((i, p)),
                    }
                }
                powers.sort_unstable();
                terms.push(Monomial {
                    coeff: a.coeff * b.coeff,
                    powers,
                });
            }
        }
        Self { terms }.simplified()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self { terms }.simplified()
    }

    fn simplified(self) -> Self {
        let mut out: Vec<Monomial> = Vec::new();
        for mut m in self.terms {
            m.powers.sort_unstable();
            match out.iter_mut().find(|o| o.powers == m.powers) {
                Some(o) => o.coeff += m.coeff,
                None => out.push(m),
            }
        }
        out.retain(|m| m.coeff != 0.0);
        Self { terms: out }
    }

    /// Jet of the polynomial at `x`, exact to order `order`.
    pub fn jet(&self, x: &[f64], order: u8) -> Result<Jet3, JetError> {
        let n = x.len();
        let value = self.value(x);
        let mut grad = vec![0.0; n];
        let mut hess = vec![vec![0.0; n]; n];
        let mut third = vec![vec![vec![0.0; n]; n]; n];
        if order >= 1 {
            for (i, gi) in grad.iter_mut().enumerate() {
                let di = self.derivative(i);
                if di.is_zero() {
                    continue;
                }
                *gi = di.value(x);
                if order >= 2 {
                    for j in 0..n {
                        let dij = di.derivative(j);
                        if dij.is_zero() {
                            continue;
                        }
                        hess[i][j] = dij.value(x);
                        if order >= 3 {
                            for k in 0..n {
                                third[i][j][k] = dij.derivative(k).value(x);
                            }
                        }
                    }
                }
            }
        }
        Ok(Jet3::from_dense(value, &grad, &hess, &third)?.truncated(order))
    }
}

/// One horizontal frame vector `Σ c_i(x) ∂/∂x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameVector {
    pub terms: Vec<(usize, Poly)>,
}

impl FrameVector {
    /// Applies the vector field to a polynomial.
    pub fn apply_poly(&self, p: &Poly) -> Poly {
        self.terms
            .iter()
            .fold(Poly::default(), |acc, (i, c)| acc.add(&c.mul(&p.derivative(*i))))
    }
}

/// Group operations that are not determined by the frame alone.
pub trait GroupLaw: Send + Sync + fmt::Debug {
    fn product(&self, x: &[f64], y: &[f64]) -> Vec<f64>;
    fn inverse(&self, x: &[f64]) -> Vec<f64>;
    /// Homogeneous norm as a jet at `x ≠ 0`, exact to `order`.
    fn norm_jet(&self, x: &[f64], order: u8) -> Result<Jet3, GroupError>;
    /// True when `d^{2−Q}` is a multiple of the fundamental solution of `𝓛`.
    fn polarizable(&self) -> bool;
}

/// Built-in families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Euclidean,
    Heisenberg,
    Custom,
}

/// A stratified group with its horizontal frame.
#[derive(Debug, Clone)]
pub struct GroupModel {
    id: String,
    family: Family,
    strata: Vec<usize>,
    weights: Vec<u32>,
    frame: Vec<FrameVector>,
    second_order: Vec<(usize, usize, Poly)>,
    first_order: Vec<(usize, Poly)>,
    law: Arc<dyn GroupLaw>,
}

#[derive(Debug)]
struct EuclideanLaw;

impl GroupLaw for EuclideanLaw {
    fn product(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter().zip(y).map(|(a, b)| a + b).collect()
    }

    fn inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|a| -a).collect()
    }

    fn norm_jet(&self, x: &[f64], order: u8) -> Result<Jet3, GroupError> {
        let vars = Jet3::variables_to(x, order)?;
        let r2 = sum_squares(&vars, x.len())?;
        if r2.value() == 0.0 {
            return Err(GroupError::Origin);
        }
        Ok(r2.sqrt()?)
    }

    fn polarizable(&self) -> bool {
        true
    }
}

#[derive(Debug)]
struct HeisenbergLaw {
    m: usize,
}

impl GroupLaw for HeisenbergLaw {
    fn product(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
        let twist: f64 = (0..m).map(|j| x[j] * y[m + j] - x[m + j] * y[j]).sum();
        out[2 * m] += 0.5 * twist;
        out
    }

    fn inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|a| -a).collect()
    }

    fn norm_jet(&self, x: &[f64], order: u8) -> Result<Jet3, GroupError> {
        let n = x.len();
        let vars = Jet3::variables_to(x, order)?;
        let r2 = sum_squares(&vars, 2 * self.m)?;
        let t = &vars[2 * self.m];
        let u = &(&r2 * &r2) + &(t * t).scale(16.0);
        if u.value() == 0.0 {
            return Err(GroupError::Origin);
        }
        debug_assert_eq!(u.dim(), n);
        Ok(u.powf(0.25)?)
    }

    fn polarizable(&self) -> bool {
        true
    }
}

fn sum_squares(vars: &[Jet3], upto: usize) -> Result<Jet3, JetError> {
    let mut acc = Jet3::constant_to(vars[0].dim(), 0.0, vars[0].order())?;
    for v in &vars[..upto] {
        acc = &acc + &(v * v);
    }
    Ok(acc)
}

impl GroupModel {
    /// `ℝⁿ` with the coordinate frame.
    pub fn euclidean(n: usize) -> Result<Self, GroupError> {
        if n == 0 || n > MAX_DIM {
            return Err(GroupError::Dimension(n));
        }
        let frame = (0..n)
            .map(|k| FrameVector {
                terms: vec![(k, Poly::constant(1.0))],
            })
            .collect();
        Ok(Self::assemble(
            format!("euclidean:{n}"),
            Family::Euclidean,
            vec![n],
            frame,
            Arc::new(EuclideanLaw),
        ))
    }

    /// `ℍᵐ` with `X_j = ∂_{x_j} − (y_j/2)∂_t`, `X_{m+j} = ∂_{y_j} + (x_j/2)∂_t`.
    pub fn heisenberg(m: usize) -> Result<Self, GroupError> {
        if m == 0 || 2 * m + 1 > MAX_DIM {
            return Err(GroupError::Dimension(2 * m + 1));
        }
        let t = 2 * m;
        let mut frame = Vec::with_capacity(2 * m);
        for j in 0..m {
            frame.push(FrameVector {
                terms: vec![(j, Poly::constant(1.0)), (t, Poly::linear(-0.5, m + j))],
            });
        }
        for j in 0..m {
            frame.push(FrameVector {
                terms: vec![(m + j, Poly::constant(1.0)), (t, Poly::linear(0.5, j))],
            });
        }
        Ok(Self::assemble(
            format!("heisenberg:{m}"),
            Family::Heisenberg,
            vec![2 * m, 1],
            frame,
            Arc::new(HeisenbergLaw { m }),
        ))
    }

    /// A user supplied group: strata sizes, horizontal frame and group law.
    pub fn custom(
        id: impl Into<String>,
        strata: Vec<usize>,
        frame: Vec<FrameVector>,
        law: Arc<dyn GroupLaw>,
    ) -> Result<Self, GroupError> {
        let dim: usize = strata.iter().sum();
        if dim == 0 || dim > MAX_DIM || frame.len() != strata[0] {
            return Err(GroupError::Dimension(dim));
        }
        Ok(Self::assemble(id.into(), Family::Custom, strata, frame, law))
    }

    /// Parses `euclidean:<n>` or `heisenberg:<m>`.
    pub fn parse(id: &str) -> Result<Self, GroupError> {
        let unknown = || GroupError::UnknownId(id.to_string());
        let (kind, size) = id.trim().split_once(':').ok_or_else(unknown)?;
        let size: usize = size.trim().parse().map_err(|_| unknown())?;
        match kind.trim() {
            "euclidean" => Self::euclidean(size),
            "heisenberg" => Self::heisenberg(size),
            _ => Err(unknown()),
        }
    }

    fn assemble(
        id: String,
        family: Family,
        strata: Vec<usize>,
        frame: Vec<FrameVector>,
        law: Arc<dyn GroupLaw>,
    ) -> Self {
        let weights = strata
            .iter()
            .enumerate()
            .flat_map(|(l, &s)| std::iter::repeat_n(l as u32 + 1, s))
            .collect();
        let mut second: Vec<(usize, usize, Poly)> = Vec::new();
        let mut first: Vec<(usize, Poly)> = Vec::new();
        for v in &frame {
            for (i, ci) in &v.terms {
                for (j, cj) in &v.terms {
                    push_poly2(&mut second, *i, *j, ci.mul(cj));
                    push_poly1(&mut first, *j, ci.mul(&cj.derivative(*i)));
                }
            }
        }
        second.retain(|(_, _, p)| !p.is_zero());
        first.retain(|(_, p)| !p.is_zero());
        Self {
            id,
            family,
            strata,
            weights,
            frame,
            second_order: second,
            first_order: first,
            law,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Topological dimension.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Dimension `N` of the first stratum.
    pub fn horizontal_dim(&self) -> usize {
        self.strata[0]
    }

    /// Homogeneous dimension `Q = Σ ℓ·dim(stratum ℓ)`.
    pub fn homogeneous_dim(&self) -> usize {
        self.weights.iter().map(|&w| w as usize).sum()
    }

    pub fn step(&self) -> usize {
        self.strata.len()
    }

    pub fn strata(&self) -> &[usize] {
        &self.strata
    }

    /// Dilation weight of each coordinate.
    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn frame(&self) -> &[FrameVector] {
        &self.frame
    }

    pub fn is_polarizable(&self) -> bool {
        self.law.polarizable()
    }

    pub fn check_point(&self, x: &[f64]) -> Result<(), GroupError> {
        if x.len() != self.dim() {
            return Err(GroupError::PointLength {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn product(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, GroupError> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.law.product(x, y))
    }

    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>, GroupError> {
        self.check_point(x)?;
        Ok(self.law.inverse(x))
    }

    /// `δ_λ(x)`: stratum `ℓ` scaled by `λ^ℓ`.
    pub fn dilate(&self, lambda: f64, x: &[f64]) -> Result<Vec<f64>, GroupError> {
        self.check_point(x)?;
        Ok(x
            .iter()
            .zip(&self.weights)
            .map(|(v, &w)| v * lambda.powi(w as i32))
            .collect())
    }

    /// `|x′|`.
    pub fn horizontal_norm(&self, x: &[f64]) -> f64 {
        x[..self.horizontal_dim()].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Homogeneous norm `d(x)`.
    pub fn homogeneous_norm(&self, x: &[f64]) -> Result<f64, GroupError> {
        if x.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        Ok(self.norm_jet(x)?.value())
    }

    /// Jet of `d` at `x ≠ 0`.
    pub fn norm_jet(&self, x: &[f64]) -> Result<Jet3, GroupError> {
        self.norm_jet_to(x, 3)
    }

    /// Jet of `d` at `x ≠ 0` with `order` exact levels.
    pub fn norm_jet_to(&self, x: &[f64], order: u8) -> Result<Jet3, GroupError> {
        self.check_point(x)?;
        self.law.norm_jet(x, order)
    }

    /// Characteristic points of `d`: where `∇_H d` vanishes.
    pub fn is_characteristic(&self, x: &[f64]) -> bool {
        self.horizontal_norm(x) == 0.0
    }

    /// A horizontal direction paired with `a` by the group bracket, when the
    /// drift integrand depends on `x′` only through `⟨a, x′⟩`, `⟨Ja, x′⟩` and `|x′|`.
    pub fn bracket_partner(&self, a: &[f64]) -> Option<Vec<f64>> {
        match self.family {
            Family::Heisenberg => {
                let m = self.horizontal_dim() / 2;
                let mut b = vec![0.0; 2 * m];
                for j in 0..m {
                    b[j] = -a[m + j];
                    b[m + j] = a[j];
                }
                Some(b)
            }
            _ => None,
        }
    }

    /// Coefficients `(i, j, A_ij)` and `(j, B_j)` with `𝓛 = Σ A_ij ∂_i∂_j + Σ B_j ∂_j`.
    pub fn sub_laplacian_coefficients(&self) -> (&[(usize, usize, Poly)], &[(usize, Poly)]) {
        (&self.second_order, &self.first_order)
    }
}

fn push_poly2(v: &mut Vec<(usize, usize, Poly)>, i: usize, j: usize, p: Poly) {
    match v.iter_mut().find(|(a, b, _)| *a == i && *b == j) {
        Some(e) => e.2 = e.2.add(&p),
        None => v.push((i, j, p)),
    }
}

fn push_poly1(v: &mut Vec<(usize, Poly)>, j: usize, p: Poly) {
    match v.iter_mut().find(|(a, _)| *a == j) {
        Some(e) => e.1 = e.1.add(&p),
        None => v.push((j, p)),
    }
}
