//! Concrete barrier oracles and numerical self-concordance checks.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, sqrt_and_inv_sqrt, sym_eigen, Cholesky, SymMatrix, Vector};
use crate::oracle::GradientOracle;

/// A self-concordant barrier with known parameter `ν`.
pub trait Barrier: GradientOracle {
    fn nu(&self) -> f64;
    fn value(&self, y: &Vector) -> Result<f64>;
}

impl<B: Barrier + ?Sized> Barrier for &B {
    fn nu(&self) -> f64 {
        (**self).nu()
    }
    fn value(&self, y: &Vector) -> Result<f64> {
        (**self).value(y)
    }
}

/// `φ(y) = −scale · Σ [ln(yᵢ − lᵢ) + ln(uᵢ − yᵢ)]`
#[derive(Debug, Clone)]
pub struct BoxBarrier {
    lower: Vector,
    upper: Vector,
    scale: f64,
}

impl BoxBarrier {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        Self::with_scale(lower, upper, 1.0)
    }

    pub fn with_scale(lower: Vector, upper: Vector, scale: f64) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument("box needs lower < upper".into()));
        }
        if !(scale >= 1.0) {
            return Err(Error::InvalidArgument(format!("box scale {scale} < 1")));
        }
        Ok(BoxBarrier {
            lower,
            upper,
            scale,
        })
    }

    pub fn unit(n: usize) -> Self {
        Self::new(Vector::zeros(n), Vector::from_element(n, 1.0)).expect("unit box is valid")
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn center(&self) -> Vector {
        (&self.lower + &self.upper) / 2.0
    }

    fn check(&self, y: &Vector) -> Result<()> {
        check_dim(self.lower.len(), y.len())?;
        if self.contains(y) {
            Ok(())
        } else {
            Err(Error::Infeasible)
        }
    }

    pub fn hessian(&self, y: &Vector) -> Result<SymMatrix> {
        self.check(y)?;
        let d: Vec<f64> = (0..y.len())
            .map(|i| {
                let a = y[i] - self.lower[i];
                let b = self.upper[i] - y[i];
                self.scale * (1.0 / (a * a) + 1.0 / (b * b))
            })
            .collect();
        Ok(SymMatrix::from_diagonal(&d))
    }
}

impl GradientOracle for BoxBarrier {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn contains(&self, y: &Vector) -> bool {
        y.len() == self.dim()
            && (0..y.len()).all(|i| y[i] > self.lower[i] && y[i] < self.upper[i])
    }

    fn gradient(&self, y: &Vector) -> Result<Vector> {
        self.check(y)?;
        Ok(Vector::from_fn(y.len(), |i, _| {
            self.scale * (1.0 / (self.upper[i] - y[i]) - 1.0 / (y[i] - self.lower[i]))
        }))
    }

    fn exact_hessian(&self, y: &Vector) -> Option<Result<SymMatrix>> {
        Some(self.hessian(y))
    }
}

impl Barrier for BoxBarrier {
    fn nu(&self) -> f64 {
        2.0 * self.dim() as f64 * self.scale
    }

    fn value(&self, y: &Vector) -> Result<f64> {
        self.check(y)?;
        Ok(-self.scale
            * (0..y.len())
                .map(|i| (y[i] - self.lower[i]).ln() + (self.upper[i] - y[i]).ln())
                .sum::<f64>())
    }
}

/// `φ(y) = −scale · ln det(B − Σ yᵢAᵢ)`, with `scale = √m` by default.
#[derive(Debug)]
pub struct SdpBarrier {
    a: Vec<SymMatrix>,
    b: SymMatrix,
    scale: f64,
    hessian_calls: AtomicU64,
}

impl Clone for SdpBarrier {
    fn clone(&self) -> Self {
        SdpBarrier {
            a: self.a.clone(),
            b: self.b.clone(),
            scale: self.scale,
            hessian_calls: AtomicU64::new(self.hessian_calls()),
        }
    }
}

impl SdpBarrier {
    pub fn new(a: Vec<SymMatrix>, b: SymMatrix) -> Result<Self> {
        let scale = (a.len() as f64).sqrt();
        Self::with_scale(a, b, scale)
    }

    pub fn with_scale(a: Vec<SymMatrix>, b: SymMatrix, scale: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidArgument("SDP needs at least one constraint matrix".into()));
        }
        for ai in &a {
            check_dim(b.dim(), ai.dim())?;
        }
        Ok(SdpBarrier {
            a,
            b,
            scale,
            hessian_calls: AtomicU64::new(0),
        })
    }

    /// Number of constraint matrices.
    pub fn m(&self) -> usize {
        self.a.len()
    }

    /// Matrix side.
    pub fn n(&self) -> usize {
        self.b.dim()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn constraints(&self) -> &[SymMatrix] {
        &self.a
    }

    pub fn b(&self) -> &SymMatrix {
        &self.b
    }

    /// `S_y = B − Σ yᵢAᵢ`
    pub fn slack(&self, y: &Vector) -> Result<SymMatrix> {
        check_dim(self.m(), y.len())?;
        let mut s = self.b.as_matrix().clone();
        for (ai, yi) in self.a.iter().zip(y.iter()) {
            s -= ai.as_matrix() * *yi;
        }
        Ok(SymMatrix::symmetrize(s))
    }

    fn slack_inverse(&self, y: &Vector) -> Result<SymMatrix> {
        let s = self.slack(y)?;
        Ok(Cholesky::factor(&s).map_err(|_| Error::Infeasible)?.inverse())
    }

    /// `Hᵢⱼ = scale · tr(S⁻¹AᵢS⁻¹Aⱼ)`; counted, since the solver itself must never need it.
    pub fn hessian_exact(&self, y: &Vector) -> Result<SymMatrix> {
        self.hessian_calls.fetch_add(1, Ordering::Relaxed);
        let s_inv = self.slack_inverse(y)?;
        let ms: Vec<_> = self.a.iter().map(|ai| s_inv.as_matrix() * ai.as_matrix()).collect();
        let m = self.m();
        let mut h = nalgebra::DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let t = ms[i].component_mul(&ms[j].transpose()).sum() * self.scale;
                h[(i, j)] = t;
                h[(j, i)] = t;
            }
        }
        Ok(SymMatrix::symmetrize(h))
    }

    pub fn hessian_calls(&self) -> u64 {
        self.hessian_calls.load(Ordering::Relaxed)
    }
}

impl GradientOracle for SdpBarrier {
    fn dim(&self) -> usize {
        self.m()
    }

    fn contains(&self, y: &Vector) -> bool {
        y.len() == self.m()
            && self
                .slack(y)
                .map(|s| Cholesky::factor(&s).is_ok())
                .unwrap_or(false)
    }

    /// `[∇φ]ᵢ = scale · ⟨Aᵢ, S⁻¹⟩`
    fn gradient(&self, y: &Vector) -> Result<Vector> {
        let s_inv = self.slack_inverse(y)?;
        Ok(Vector::from_iterator(
            self.m(),
            self.a.iter().map(|ai| self.scale * ai.inner(&s_inv)),
        ))
    }

    fn exact_hessian(&self, y: &Vector) -> Option<Result<SymMatrix>> {
        Some(self.hessian_exact(y))
    }
}

impl Barrier for SdpBarrier {
    /// `n · scale`, i.e. `n√m` at the default scale.
    fn nu(&self) -> f64 {
        self.n() as f64 * self.scale
    }

    fn value(&self, y: &Vector) -> Result<f64> {
        let s = self.slack(y)?;
        Ok(-self.scale * Cholesky::factor(&s).map_err(|_| Error::Infeasible)?.log_det())
    }
}

fn hessian_of<O: GradientOracle + ?Sized>(o: &O, y: &Vector) -> Result<SymMatrix> {
    o.exact_hessian(y)
        .unwrap_or_else(|| Err(Error::InvalidArgument("oracle has no exact Hessian".into())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfConcordanceCheck {
    /// `‖δ‖_{H_y}`
    pub norm: f64,
    /// `‖H_y^{-1/2}(H_{y+δ} − H_y)H_y^{-1/2}‖_F`
    pub lhs: f64,
    /// `‖δ‖_{H_y}/(1 − ‖δ‖_{H_y})²`
    pub rhs: f64,
    pub holds: bool,
}

impl SelfConcordanceCheck {
    /// The same bound with constant 2, as obtained by integrating the derivative bound.
    pub fn holds_with_constant_two(&self) -> bool {
        self.lhs <= 2.0 * self.rhs + STRONG_SC_SLACK
    }
}

/// Absolute slack allowed by [`strong_self_concordance_check`].
pub const STRONG_SC_SLACK: f64 = 1e-9;

/// Compares the Frobenius-norm change of the Hessian along `δ` against the strong
/// self-concordance bound.
pub fn strong_self_concordance_check<O: GradientOracle + ?Sized>(
    o: &O,
    y: &Vector,
    delta: &Vector,
) -> Result<SelfConcordanceCheck> {
    check_dim(o.dim(), delta.len())?;
    if !o.contains(y) {
        return Err(Error::Infeasible);
    }
    let h = hessian_of(o, y)?;
    let norm = h.quad_form(delta).max(0.0).sqrt();
    if norm >= 1.0 {
        return Err(Error::NormTooLarge { norm });
    }
    let moved = y + delta;
    if !o.contains(&moved) {
        return Err(Error::Infeasible);
    }
    let h_moved = hessian_of(o, &moved)?;
    let (_, inv_half) = sqrt_and_inv_sqrt(&h)?;
    let lhs = h_moved.sub(&h).congruence(inv_half.as_matrix()).frobenius_norm();
    let rhs = norm / (1.0 - norm).powi(2);
    Ok(SelfConcordanceCheck {
        norm,
        lhs,
        rhs,
        holds: lhs <= rhs + STRONG_SC_SLACK,
    })
}

/// `‖∇g(y)‖²_{H_y⁻¹}`, to be compared against `ν`.
pub fn nu_check<O: GradientOracle + ?Sized>(o: &O, y: &Vector) -> Result<f64> {
    let g = o.gradient(y)?;
    let h = hessian_of(o, y)?;
    Ok(Cholesky::factor(&h)?.inv_quad_form(&g))
}

/// Extreme generalized eigenvalues of `H_{y+δ}` relative to `H_y` together with the
/// self-concordance sandwich `[(1 − ‖δ‖)², (1 − ‖δ‖)⁻²]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sandwich {
    pub min: f64,
    pub max: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Sandwich {
    pub fn holds(&self, slack: f64) -> bool {
        self.min >= self.lower - slack && self.max <= self.upper + slack
    }
}

pub fn sandwich_check<O: GradientOracle + ?Sized>(o: &O, y: &Vector, delta: &Vector) -> Result<Sandwich> {
    let h = hessian_of(o, y)?;
    let norm = h.quad_form(delta).max(0.0).sqrt();
    if norm >= 1.0 {
        return Err(Error::NormTooLarge { norm });
    }
    let h_moved = hessian_of(o, &(y + delta))?;
    let (_, inv_half) = sqrt_and_inv_sqrt(&h)?;
    let eig = sym_eigen(&h_moved.congruence(inv_half.as_matrix()))?;
    Ok(Sandwich {
        min: eig.min(),
        max: eig.max(),
        lower: (1.0 - norm).powi(2),
        upper: (1.0 - norm).powi(-2),
    })
}
