//! Order-3 jets of scalar functions on ℝᵈ.
//!
//! A [`Jet3`] stores the value, gradient, Hessian and third derivative tensor of a
//! function at one point. Symmetric tensors are stored by their unique entries
//! (i ≤ j ≤ k). Every jet carries an `order`: the number of derivative levels
//! that are exact. Applying a vector field consumes one level, so operator
//! nesting never silently reads missing data.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use smallvec::{smallvec, SmallVec};
use thiserror::Error;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("jet dimension {0} outside 1..={MAX_DIM}")]
    Dimension(usize),
    #[error("jet dimensions differ: {0} and {1}")]
    Mismatch(usize, usize),
    #[error("{op} is not defined at {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("{op} takes {expected} argument(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Index tables for symmetric storage in a fixed dimension.
#[derive(Debug)]
pub struct Layout {
    n: usize,
    pair_index: Vec<usize>,
    triple_index: Vec<usize>,
    pairs: Vec<[usize; 2]>,
    triples: Vec<[usize; 3]>,
    triple_pairs: Vec<[usize; 3]>,
}

impl Layout {
    fn build(n: usize) -> Self {
        let mut pairs = Vec::new();
        let mut pair_index = vec![0; n * n];
        for i in 0..n {
            for j in i..n {
                pair_index[i * n + j] = pairs.len();
                pair_index[j * n + i] = pairs.len();
                pairs.push([i, j]);
            }
        }
        let mut triples = Vec::new();
        let mut triple_pairs = Vec::new();
        let mut triple_index = vec![0; n * n * n];
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let idx = triples.len();
                    for [a, b, c] in [
                        [i, j, k],
                        [i, k, j],
                        [j, i, k],
                        [j, k, i],
                        [k, i, j],
                        [k, j, i],
                    ] {
                        triple_index[(a * n + b) * n + c] = idx;
                    }
                    triples.push([i, j, k]);
                    triple_pairs.push([
                        pair_index[i * n + j],
                        pair_index[i * n + k],
                        pair_index[j * n + k],
                    ]);
                }
            }
        }
        Self {
            n,
            pair_index,
            triple_index,
            pairs,
            triples,
            triple_pairs,
        }
    }

    fn get(n: usize) -> Result<&'static Layout, JetError> {
        static LAYOUTS: [OnceLock<Layout>; MAX_DIM + 1] = [const { OnceLock::new() }; MAX_DIM + 1];
        if n == 0 || n > MAX_DIM {
            return Err(JetError::Dimension(n));
        }
        Ok(LAYOUTS[n].get_or_init(|| Layout::build(n)))
    }

    fn np(&self) -> usize {
        self.pairs.len()
    }

    fn nt(&self) -> usize {
        self.triples.len()
    }

    fn len(&self) -> usize {
        1 + self.n + self.np() + self.nt()
    }

    /// Number of coefficients exact at `order`.
    fn active(&self, order: u8) -> usize {
        match order {
            0 => 1,
            1 => 1 + self.n,
            2 => 1 + self.n + self.np(),
            _ => self.len(),
        }
    }

    fn g0(&self) -> usize {
        1
    }

    fn h0(&self) -> usize {
        1 + self.n
    }

    fn t0(&self) -> usize {
        1 + self.n + self.np()
    }
}

/// Value and derivatives up to order 3 of a scalar function at a point.
#[derive(Clone, Debug)]
pub struct Jet3 {
    layout: &'static Layout,
    order: u8,
    data: SmallVec<[f64; INLINE]>,
}

/// Coefficients stored inline: enough for dimension 5.
const INLINE: usize = 56;

/// Derivatives `[φ, φ', φ'', φ''']` of a univariate function at one argument.
pub type Taylor = [f64; 4];

impl Jet3 {
    /// Exact constant jet.
    pub fn constant(n: usize, c: f64) -> Result<Self, JetError> {
        Self::constant_to(n, c, 3)
    }

    /// Constant jet with `order` exact levels; later arithmetic stops at that order.
    pub fn constant_to(n: usize, c: f64, order: u8) -> Result<Self, JetError> {
        let layout = Layout::get(n)?;
        let mut data = smallvec![0.0; layout.len()];
        data[0] = c;
        Ok(Self {
            layout,
            order: order.min(3),
            data,
        })
    }

    /// Exact zero jet.
    pub fn zero(n: usize) -> Result<Self, JetError> {
        Self::constant(n, 0.0)
    }

    /// The coordinate function `x ↦ x_i` at a point where it equals `value`.
    pub fn variable(n: usize, i: usize, value: f64) -> Result<Self, JetError> {
        Self::variable_to(n, i, value, 3)
    }

    /// [`Jet3::variable`] with `order` exact levels.
    pub fn variable_to(n: usize, i: usize, value: f64, order: u8) -> Result<Self, JetError> {
        if i >= n {
            return Err(JetError::Dimension(i));
        }
        let mut j = Self::constant_to(n, value, order)?;
        if order >= 1 {
            j.data[1 + i] = 1.0;
        }
        Ok(j)
    }

    /// All coordinate jets at `x`.
    pub fn variables(x: &[f64]) -> Result<Vec<Self>, JetError> {
        Self::variables_to(x, 3)
    }

    /// All coordinate jets at `x` with `order` exact levels.
    pub fn variables_to(x: &[f64], order: u8) -> Result<Vec<Self>, JetError> {
        (0..x.len())
            .map(|i| Self::variable_to(x.len(), i, x[i], order))
            .collect()
    }

    /// Builds a jet from dense derivative arrays (`hess[i][j]`, `third[i][j][k]`).
    pub fn from_dense(
        value: f64,
        grad: &[f64],
        hess: &[Vec<f64>],
        third: &[Vec<Vec<f64>>],
    ) -> Result<Self, JetError> {
        let n = grad.len();
        let mut j = Self::constant(n, value)?;
        let l = j.layout;
        j.data[1..1 + n].copy_from_slice(grad);
        for (p, &[a, b]) in l.pairs.iter().enumerate() {
            j.data[l.h0() + p] = hess[a][b];
        }
        for (q, &[a, b, c]) in l.triples.iter().enumerate() {
            j.data[l.t0() + q] = third[a][b][c];
        }
        Ok(j)
    }

    /// Jet of `c + Σ gᵢ(yᵢ − xᵢ) + ½ Σ hᵢ(yᵢ − xᵢ)²` at `y = x`, exact to `order`.
    pub fn diagonal_quadratic_to(
        value: f64,
        grad: &[f64],
        hess_diag: &[f64],
        order: u8,
    ) -> Result<Self, JetError> {
        let n = grad.len();
        if hess_diag.len() != n {
            return Err(JetError::Mismatch(n, hess_diag.len()));
        }
        let mut j = Self::constant_to(n, value, order)?;
        let l = j.layout;
        if j.order >= 1 {
            j.data[1..1 + n].copy_from_slice(grad);
        }
        if j.order >= 2 {
            for (i, &h) in hess_diag.iter().enumerate() {
                j.data[l.h0() + l.pair_index[i * n + i]] = h;
            }
        }
        Ok(j)
    }

    pub fn dim(&self) -> usize {
        self.layout.n
    }

    /// Number of exact derivative levels (0 to 3).
    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.data[0]
    }

    pub fn grad(&self, i: usize) -> f64 {
        self.data[1 + i]
    }

    pub fn gradient(&self) -> &[f64] {
        &self.data[1..1 + self.layout.n]
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        let l = self.layout;
        self.data[l.h0() + l.pair_index[i * l.n + j]]
    }

    pub fn third(&self, i: usize, j: usize, k: usize) -> f64 {
        let l = self.layout;
        self.data[l.t0() + l.triple_index[(i * l.n + j) * l.n + k]]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Largest absolute entry, used to scale residuals.
    pub fn magnitude(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same jet with the exactness order lowered to `order`.
    pub fn truncated(mut self, order: u8) -> Self {
        if order < self.order {
            self.order = order;
            self.clear_above_order();
        }
        self
    }

    fn clear_above_order(&mut self) {
        let l = self.layout;
        if self.order < 3 {
            self.data[l.t0()..].iter_mut().for_each(|v| *v = 0.0);
        }
        if self.order < 2 {
            self.data[l.h0()..l.t0()].iter_mut().for_each(|v| *v = 0.0);
        }
        if self.order < 1 {
            self.data[l.g0()..l.h0()].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn blank(layout: &'static Layout, order: u8) -> Self {
        Self {
            layout,
            order,
            data: smallvec![0.0; layout.len()],
        }
    }

    fn check(&self, other: &Self) {
        assert_eq!(
            self.layout.n, other.layout.n,
            "jet dimensions must agree"
        );
    }

    /// Jet of `∂f/∂x_i`; exact to one order less.
    pub fn partial(&self, i: usize) -> Self {
        let l = self.layout;
        let order = self.order.saturating_sub(1);
        let mut out = Self::blank(l, order);
        if self.order == 0 {
            return out;
        }
        out.data[0] = self.grad(i);
        if order >= 1 {
            for j in 0..l.n {
                out.data[1 + j] = self.hess(i, j);
            }
        }
        if order >= 2 {
            for (p, &[a, b]) in l.pairs.iter().enumerate() {
                out.data[l.h0() + p] = self.third(i, a, b);
            }
        }
        out
    }

    /// Composition `φ ∘ f` given `φ` and its first three derivatives at `f(x)`.
    pub fn compose(&self, phi: Taylor) -> Self {
        let l = self.layout;
        let mut out = Self::blank(l, self.order);
        let d = &self.data;
        out.data[0] = phi[0];
        if self.order >= 1 {
            for i in 0..l.n {
                out.data[1 + i] = phi[1] * d[1 + i];
            }
        }
        if self.order >= 2 {
            for (p, &[i, j]) in l.pairs.iter().enumerate() {
                out.data[l.h0() + p] = phi[2] * d[1 + i] * d[1 + j] + phi[1] * d[l.h0() + p];
            }
        }
        if self.order >= 3 {
            let h = l.h0();
            for (q, (&[i, j, k], &[ij, ik, jk])) in
                l.triples.iter().zip(l.triple_pairs.iter()).enumerate()
            {
                let (gi, gj, gk) = (d[1 + i], d[1 + j], d[1 + k]);
                out.data[l.t0() + q] = phi[3] * gi * gj * gk
                    + phi[2] * (gi * d[h + jk] + gj * d[h + ik] + gk * d[h + ij])
                    + phi[1] * d[l.t0() + q];
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        let k = self.layout.active(self.order);
        out.data[..k].iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data[0] += c;
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose([e, e, e, e])
    }

    pub fn ln(&self) -> Result<Self, JetError> {
        let x = self.value();
        if x <= 0.0 {
            return Err(JetError::Domain { op: "ln", value: x });
        }
        Ok(self.compose([x.ln(), 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x)]))
    }

    /// `f^p` for real `p`; requires `f > 0` unless `p` is a nonnegative integer.
    pub fn powf(&self, p: f64) -> Result<Self, JetError> {
        let x = self.value();
        if p.fract() == 0.0 && p >= 0.0 {
            return Ok(self.powi(p as i32));
        }
        if x <= 0.0 {
            return Err(JetError::Domain { op: "powf", value: x });
        }
        let v = x.powf(p);
        Ok(self.compose([
            v,
            p * v / x,
            p * (p - 1.0) * v / (x * x),
            p * (p - 1.0) * (p - 2.0) * v / (x * x * x),
        ]))
    }

    /// `f^p` for integer `p`; negative powers require `f ≠ 0`.
    pub fn powi(&self, p: i32) -> Self {
        let x = self.value();
        let pf = p as f64;
        let term = |k: i32| x.powi(p - k);
        let phi = [
            term(0),
            if p == 0 { 0.0 } else { pf * term(1) },
            if p == 0 || p == 1 {
                0.0
            } else {
                pf * (pf - 1.0) * term(2)
            },
            if (0..=2).contains(&p) {
                0.0
            } else {
                pf * (pf - 1.0) * (pf - 2.0) * term(3)
            },
        ];
        self.compose(phi)
    }

    pub fn sqrt(&self) -> Result<Self, JetError> {
        let x = self.value();
        if x <= 0.0 {
            return Err(JetError::Domain { op: "sqrt", value: x });
        }
        let s = x.sqrt();
        Ok(self.compose([s, 0.5 / s, -0.25 / (s * x), 0.375 / (s * x * x)]))
    }

    pub fn recip(&self) -> Result<Self, JetError> {
        let x = self.value();
        if x == 0.0 {
            return Err(JetError::Domain { op: "recip", value: x });
        }
        let r = 1.0 / x;
        Ok(self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r]))
    }

    pub fn div(&self, other: &Self) -> Result<Self, JetError> {
        Ok(self * &other.recip()?)
    }

    fn zip(&self, other: &Self, sign: f64) -> Self {
        self.check(other);
        let order = self.order.min(other.order);
        let mut out = Self::blank(self.layout, order);
        let k = self.layout.active(order);
        for (o, (a, b)) in out.data[..k]
            .iter_mut()
            .zip(self.data[..k].iter().zip(other.data[..k].iter()))
        {
            *o = a + sign * b;
        }
        out
    }

    fn product(&self, other: &Self) -> Self {
        self.check(other);
        let l = self.layout;
        let order = self.order.min(other.order);
        let mut out = Self::blank(l, order);
        let (a, b) = (&self.data, &other.data);
        out.data[0] = a[0] * b[0];
        if order >= 1 {
            for i in 1..=l.n {
                out.data[i] = a[0] * b[i] + a[i] * b[0];
            }
        }
        if order >= 2 {
            let h = l.h0();
            for (p, &[i, j]) in l.pairs.iter().enumerate() {
                out.data[h + p] = a[0] * b[h + p]
                    + a[1 + i] * b[1 + j]
                    + a[1 + j] * b[1 + i]
                    + a[h + p] * b[0];
            }
        }
        if order >= 3 {
            let (h, t) = (l.h0(), l.t0());
            for (q, (&[i, j, k], &[ij, ik, jk])) in
                l.triples.iter().zip(l.triple_pairs.iter()).enumerate()
            {
                out.data[t + q] = a[0] * b[t + q]
                    + a[t + q] * b[0]
                    + a[1 + i] * b[h + jk]
                    + a[1 + j] * b[h + ik]
                    + a[1 + k] * b[h + ij]
                    + a[h + ij] * b[1 + k]
                    + a[h + ik] * b[1 + j]
                    + a[h + jk] * b[1 + i];
            }
        }
        out
    }
}

impl Add for &Jet3 {
    type Output = Jet3;
    fn add(self, rhs: &Jet3) -> Jet3 {
        self.zip(rhs, 1.0)
    }
}

impl Sub for &Jet3 {
    type Output = Jet3;
    fn sub(self, rhs: &Jet3) -> Jet3 {
        self.zip(rhs, -1.0)
    }
}

impl Mul for &Jet3 {
    type Output = Jet3;
    fn mul(self, rhs: &Jet3) -> Jet3 {
        self.product(rhs)
    }
}

impl Add for Jet3 {
    type Output = Jet3;
    fn add(self, rhs: Jet3) -> Jet3 {
        &self + &rhs
    }
}

impl Sub for Jet3 {
    type Output = Jet3;
    fn sub(self, rhs: Jet3) -> Jet3 {
        &self - &rhs
    }
}

impl Mul for Jet3 {
    type Output = Jet3;
    fn mul(self, rhs: Jet3) -> Jet3 {
        &self * &rhs
    }
}

impl Mul<f64> for &Jet3 {
    type Output = Jet3;
    fn mul(self, rhs: f64) -> Jet3 {
        self.scale(rhs)
    }
}

impl Mul<f64> for Jet3 {
    type Output = Jet3;
    fn mul(self, rhs: f64) -> Jet3 {
        self.scale(rhs)
    }
}

impl Neg for &Jet3 {
    type Output = Jet3;
    fn neg(self) -> Jet3 {
        self.scale(-1.0)
    }
}

impl Neg for Jet3 {
    type Output = Jet3;
    fn neg(self) -> Jet3 {
        self.scale(-1.0)
    }
}

/// Named operations for [`compose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
    Exp,
    Ln,
    Sqrt,
    Recip,
    Powf(f64),
    Scale(f64),
}

/// Applies `op` to `args`, checking arity and dimensions.
pub fn compose(op: JetOp, args: &[&Jet3]) -> Result<Jet3, JetError> {
    let arity = match op {
        JetOp::Add | JetOp::Sub | JetOp::Mul | JetOp::Div => 2,
        _ => 1,
    };
    if args.len() != arity {
        return Err(JetError::Arity {
            op: op_name(op),
            expected: arity,
            got: args.len(),
        });
    }
    if arity == 2 && args[0].dim() != args[1].dim() {
        return Err(JetError::Mismatch(args[0].dim(), args[1].dim()));
    }
    let a = args[0];
    match op {
        JetOp::Add => Ok(a + args[1]),
        JetOp::Sub => Ok(a - args[1]),
        JetOp::Mul => Ok(a * args[1]),
        JetOp::Div => a.div(args[1]),
        JetOp::Exp => Ok(a.exp()),
        JetOp::Ln => a.ln(),
        JetOp::Sqrt => a.sqrt(),
        JetOp::Recip => a.recip(),
        JetOp::Powf(p) => a.powf(p),
        JetOp::Scale(c) => Ok(a.scale(c)),
    }
}

fn op_name(op: JetOp) -> &'static str {
    match op {
        JetOp::Add => "add",
        JetOp::Sub => "sub",
        JetOp::Mul => "mul",
        JetOp::Div => "div",
        JetOp::Exp => "exp",
        JetOp::Ln => "ln",
        JetOp::Sqrt => "sqrt",
        JetOp::Recip => "recip",
        JetOp::Powf(_) => "powf",
        JetOp::Scale(_) => "scale",
    }
}

/// Univariate Taylor arithmetic on `[f, f', f'', f''']`.
pub mod uni {
    use super::Taylor;

    pub fn constant(c: f64) -> Taylor {
        [c, 0.0, 0.0, 0.0]
    }

    pub fn variable(x: f64) -> Taylor {
        [x, 1.0, 0.0, 0.0]
    }

    pub fn add(a: Taylor, b: Taylor) -> Taylor {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
    }

    pub fn scale(a: Taylor, c: f64) -> Taylor {
        [a[0] * c, a[1] * c, a[2] * c, a[3] * c]
    }

    pub fn mul(a: Taylor, b: Taylor) -> Taylor {
        [
            a[0] * b[0],
            a[1] * b[0] + a[0] * b[1],
            a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2],
            a[3] * b[0] + 3.0 * a[2] * b[1] + 3.0 * a[1] * b[2] + a[0] * b[3],
        ]
    }

    /// `φ ∘ u` where `phi` holds the derivatives of `φ` at `u[0]`.
    pub fn chain(phi: Taylor, u: Taylor) -> Taylor {
        [
            phi[0],
            phi[1] * u[1],
            phi[2] * u[1] * u[1] + phi[1] * u[2],
            phi[3] * u[1] * u[1] * u[1] + 3.0 * phi[2] * u[1] * u[2] + phi[1] * u[3],
        ]
    }

    pub fn recip(a: Taylor) -> Taylor {
        let r = 1.0 / a[0];
        chain([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r], a)
    }

    pub fn exp(a: Taylor) -> Taylor {
        let e = a[0].exp();
        chain([e, e, e, e], a)
    }

    pub fn ln(a: Taylor) -> Taylor {
        let x = a[0];
        chain([x.ln(), 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x)], a)
    }

    /// `a^p`, with `a > 0`.
    pub fn powf(a: Taylor, p: f64) -> Taylor {
        let x = a[0];
        let v = x.powf(p);
        chain(
            [
                v,
                p * v / x,
                p * (p - 1.0) * v / (x * x),
                p * (p - 1.0) * (p - 2.0) * v / (x * x * x),
            ],
            a,
        )
    }
}
