//! Gradient oracles and the two finite-difference estimators built from them:
//! `p_y(v) ≈ H_y v` and `n_y(v) ≈ ‖v‖_{H_y}` (biased upward).

use std::cell::Cell;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, SymMatrix, Vector};

/// Black-box first-order access to a convex function.
pub trait GradientOracle {
    fn dim(&self) -> usize;

    /// Strict feasibility of `y`.
    fn contains(&self, y: &Vector) -> bool;

    /// `∇g(y)`; `Infeasible` outside the domain.
    fn gradient(&self, y: &Vector) -> Result<Vector>;

    /// Exact Hessian, for test oracles that have one.
    fn exact_hessian(&self, _y: &Vector) -> Option<Result<SymMatrix>> {
        None
    }
}

impl<O: GradientOracle + ?Sized> GradientOracle for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn contains(&self, y: &Vector) -> bool {
        (**self).contains(y)
    }
    fn gradient(&self, y: &Vector) -> Result<Vector> {
        (**self).gradient(y)
    }
    fn exact_hessian(&self, y: &Vector) -> Option<Result<SymMatrix>> {
        (**self).exact_hessian(y)
    }
}

/// Wraps an oracle and counts gradient queries.
pub struct CountingOracle<O> {
    inner: O,
    queries: Cell<u64>,
}

impl<O: GradientOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        CountingOracle {
            inner,
            queries: Cell::new(0),
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries.get()
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: GradientOracle> GradientOracle for CountingOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn contains(&self, y: &Vector) -> bool {
        self.inner.contains(y)
    }
    fn gradient(&self, y: &Vector) -> Result<Vector> {
        self.queries.set(self.queries.get() + 1);
        self.inner.gradient(y)
    }
    fn exact_hessian(&self, y: &Vector) -> Option<Result<SymMatrix>> {
        self.inner.exact_hessian(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Literal constants from the analysis; only meaningful in exact arithmetic.
    Paper,
    #[default]
    Practical,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Mode::Paper),
            "practical" => Ok(Mode::Practical),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Bound on the norms of `H_y`, `H̃` and their inverses.
    pub bound: f64,
    pub mode: Mode,
    /// Replaces the mode's step when set.
    pub tau_override: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            bound: 1e4,
            mode: Mode::Practical,
            tau_override: None,
        }
    }
}

/// `eps_mach^{1/3}`
pub fn practical_tau0() -> f64 {
    f64::EPSILON.cbrt()
}

/// The `1/(1 − 1/1000)` inflation applied to `n_y`.
pub const NORM_INFLATION: f64 = 1000.0 / 999.0;

impl EstimatorConfig {
    /// Step for `p_y`: `1/(1000‖v‖B²¹)` in paper mode, `τ₀/‖v‖` otherwise.
    pub fn hvp_tau(&self, v_norm: f64) -> f64 {
        self.tau_override.unwrap_or_else(|| match self.mode {
            Mode::Paper => 1.0 / (1000.0 * v_norm * self.bound.powi(21)),
            Mode::Practical => practical_tau0() / v_norm,
        })
    }

    /// Step for `n_y`: `1/(1000‖v‖B)` in paper mode, `τ₀/‖v‖` otherwise.
    pub fn norm_tau(&self, v_norm: f64) -> f64 {
        self.tau_override.unwrap_or_else(|| match self.mode {
            Mode::Paper => 1.0 / (1000.0 * v_norm * self.bound),
            Mode::Practical => practical_tau0() / v_norm,
        })
    }
}

/// Practical mode shrinks `τ` by this factor while the probe is infeasible.
const PROBE_SHRINK: f64 = 0.25;
const MAX_PROBE_SHRINKS: usize = 40;

/// `∇g(y + τv) − ∇g(y)` and the `τ` actually used.
fn gradient_difference<O: GradientOracle + ?Sized>(
    o: &O,
    y: &Vector,
    v: &Vector,
    tau: f64,
    mode: Mode,
) -> Result<(Vector, f64)> {
    check_dim(o.dim(), y.len())?;
    check_dim(o.dim(), v.len())?;
    let mut tau = tau;
    let mut probe = y + v * tau;
    let mut shrinks = 0;
    while !o.contains(&probe) {
        if mode == Mode::Paper || shrinks == MAX_PROBE_SHRINKS {
            return Err(Error::InfeasibleProbe { tau });
        }
        tau *= PROBE_SHRINK;
        shrinks += 1;
        probe = y + v * tau;
    }
    let g1 = o.gradient(&probe)?;
    let g0 = o.gradient(y)?;
    Ok((g1 - g0, tau))
}

/// `p_y(v) = (∇g(y + τv) − ∇g(y))/τ`, two gradient queries (none for `v = 0`).
pub fn hvp_estimate<O: GradientOracle + ?Sized>(
    o: &O,
    y: &Vector,
    v: &Vector,
    cfg: &EstimatorConfig,
) -> Result<Vector> {
    let norm = v.norm();
    if norm == 0.0 {
        check_dim(o.dim(), v.len())?;
        return Ok(Vector::zeros(v.len()));
    }
    let (d, tau) = gradient_difference(o, y, v, cfg.hvp_tau(norm), cfg.mode)?;
    Ok(d / tau)
}

/// `n_y(v) = (1000/999) √(⟨v, ∇g(y + τv) − ∇g(y)⟩/τ)`, two gradient queries (none for `v = 0`).
pub fn norm_estimate<O: GradientOracle + ?Sized>(
    o: &O,
    y: &Vector,
    v: &Vector,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let norm = v.norm();
    if norm == 0.0 {
        check_dim(o.dim(), v.len())?;
        return Ok(0.0);
    }
    let (d, tau) = gradient_difference(o, y, v, cfg.norm_tau(norm), cfg.mode)?;
    Ok(NORM_INFLATION * (v.dot(&d) / tau).max(0.0).sqrt())
}

/// `g(y) = ½ yᵀHy`.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    h: SymMatrix,
}

impl QuadraticOracle {
    pub fn new(h: SymMatrix) -> Self {
        QuadraticOracle { h }
    }

    pub fn hessian(&self) -> &SymMatrix {
        &self.h
    }
}

pub fn quadratic_oracle(h: SymMatrix) -> QuadraticOracle {
    QuadraticOracle::new(h)
}

impl GradientOracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.h.dim()
    }
    fn contains(&self, _y: &Vector) -> bool {
        true
    }
    fn gradient(&self, y: &Vector) -> Result<Vector> {
        check_dim(self.dim(), y.len())?;
        Ok(self.h.mul_vec(y))
    }
    fn exact_hessian(&self, _y: &Vector) -> Option<Result<SymMatrix>> {
        Some(Ok(self.h.clone()))
    }
}

/// Paper-mode estimators in exact rational arithmetic.
///
/// The paper-mode steps `1/(1000‖v‖B²¹)` underflow any floating-point format, so the
/// literal constants can only be checked here. `‖v‖` must be rational.
pub mod exact {
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, Signed, Zero};

    use crate::error::{Error, Result};

    pub type Q = BigRational;

    pub fn q(n: i64) -> Q {
        Q::from_integer(BigInt::from(n))
    }

    pub fn ratio(n: i64, d: i64) -> Q {
        Q::new(BigInt::from(n), BigInt::from(d))
    }

    pub fn dot(a: &[Q], b: &[Q]) -> Q {
        a.iter().zip(b).fold(Q::zero(), |acc, (x, y)| acc + x * y)
    }

    pub fn mat_vec(m: &[Vec<Q>], v: &[Q]) -> Vec<Q> {
        m.iter().map(|row| dot(row, v)).collect()
    }

    /// `√x` when `x` is the square of a rational.
    pub fn sqrt(x: &Q) -> Option<Q> {
        if x.is_negative() {
            return None;
        }
        let n = x.numer().sqrt();
        let d = x.denom().sqrt();
        (&n * &n == *x.numer() && &d * &d == *x.denom()).then(|| Q::new(n, d))
    }

    /// Solves `m x = b` by Gaussian elimination.
    pub fn solve(m: &[Vec<Q>], b: &[Q]) -> Result<Vec<Q>> {
        let n = b.len();
        let mut a: Vec<Vec<Q>> = m
            .iter()
            .zip(b)
            .map(|(row, bi)| row.iter().cloned().chain(std::iter::once(bi.clone())).collect())
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| !a[r][col].is_zero())
                .ok_or(Error::NotPositiveDefinite {
                    index: col,
                    pivot: 0.0,
                })?;
            a.swap(col, pivot);
            let p = a[col][col].clone();
            for j in col..=n {
                a[col][j] = &a[col][j] / &p;
            }
            for r in 0..n {
                if r != col && !a[r][col].is_zero() {
                    let f = a[r][col].clone();
                    for j in col..=n {
                        let t = &f * &a[col][j];
                        a[r][j] -= t;
                    }
                }
            }
        }
        Ok(a.into_iter().map(|row| row[n].clone()).collect())
    }

    pub trait RationalOracle {
        fn contains(&self, y: &[Q]) -> bool;
        fn gradient(&self, y: &[Q]) -> Vec<Q>;
        fn hessian(&self, y: &[Q]) -> Vec<Vec<Q>>;
    }

    /// `½ yᵀHy` with integer `H`.
    pub struct RationalQuadratic {
        pub h: Vec<Vec<Q>>,
    }

    impl RationalQuadratic {
        pub fn from_integers(h: &[Vec<i64>]) -> Self {
            RationalQuadratic {
                h: h.iter().map(|row| row.iter().map(|&x| q(x)).collect()).collect(),
            }
        }
    }

    impl RationalOracle for RationalQuadratic {
        fn contains(&self, _y: &[Q]) -> bool {
            true
        }
        fn gradient(&self, y: &[Q]) -> Vec<Q> {
            mat_vec(&self.h, y)
        }
        fn hessian(&self, _y: &[Q]) -> Vec<Vec<Q>> {
            self.h.clone()
        }
    }

    /// `−Σ ln(yᵢ) − Σ ln(1 − yᵢ)` on the open unit box; gradient and Hessian are rational.
    pub struct RationalUnitBox {
        pub n: usize,
    }

    impl RationalOracle for RationalUnitBox {
        fn contains(&self, y: &[Q]) -> bool {
            y.iter().all(|v| v.is_positive() && (Q::one() - v).is_positive())
        }
        fn gradient(&self, y: &[Q]) -> Vec<Q> {
            y.iter()
                .map(|v| (Q::one() - v).recip() - v.recip())
                .collect()
        }
        fn hessian(&self, y: &[Q]) -> Vec<Vec<Q>> {
            let n = self.n;
            let mut h = vec![vec![Q::zero(); n]; n];
            for (i, v) in y.iter().enumerate() {
                let a = v.recip();
                let b = (Q::one() - v).recip();
                h[i][i] = &a * &a + &b * &b;
            }
            h
        }
    }

    fn probe_difference<O: RationalOracle>(o: &O, y: &[Q], v: &[Q], tau: &Q) -> Result<Vec<Q>> {
        let probe: Vec<Q> = y.iter().zip(v).map(|(a, b)| a + b * tau).collect();
        if !o.contains(&probe) {
            return Err(Error::InfeasibleProbe { tau: 0.0 });
        }
        Ok(o.gradient(&probe)
            .iter()
            .zip(o.gradient(y))
            .map(|(a, b)| a - b)
            .collect())
    }

    fn v_norm(v: &[Q]) -> Result<Q> {
        sqrt(&dot(v, v))
            .ok_or_else(|| Error::InvalidArgument("‖v‖ is not rational".into()))
    }

    /// `τ = 1/(1000‖v‖B²¹)`
    pub fn hvp_tau(v: &[Q], bound: &Q) -> Result<Q> {
        Ok((q(1000) * v_norm(v)? * num_traits::pow(bound.clone(), 21)).recip())
    }

    /// `τ = 1/(1000‖v‖B)`
    pub fn norm_tau(v: &[Q], bound: &Q) -> Result<Q> {
        Ok((q(1000) * v_norm(v)? * bound).recip())
    }

    pub fn hvp_estimate<O: RationalOracle>(o: &O, y: &[Q], v: &[Q], bound: &Q) -> Result<Vec<Q>> {
        let tau = hvp_tau(v, bound)?;
        Ok(probe_difference(o, y, v, &tau)?
            .into_iter()
            .map(|d| d / &tau)
            .collect())
    }

    /// `n_y(v)²`, exactly: `(1000/999)² ⟨v, Δ∇g⟩/τ`.
    pub fn norm_estimate_sq<O: RationalOracle>(o: &O, y: &[Q], v: &[Q], bound: &Q) -> Result<Q> {
        let tau = norm_tau(v, bound)?;
        let d = probe_difference(o, y, v, &tau)?;
        let inflation = ratio(1000, 999);
        let inner = dot(v, &d) / tau;
        let inner = if inner.is_negative() { Q::zero() } else { inner };
        Ok(&inflation * &inflation * inner)
    }

    /// Exact checks of the two estimator guarantees at `(y, v)`.
    #[derive(Debug, Clone)]
    pub struct BoundReport {
        /// `‖v‖²_H`
        pub norm_sq: Q,
        /// `n_y(v)²`
        pub estimate_sq: Q,
        /// `‖v‖²_H ≤ n_y² ≤ (1000/999)⁴ ‖v‖²_H`
        pub norm_sandwich: bool,
        /// `‖p_y(v) − Hv‖²_{H⁻¹}`
        pub hvp_error_sq: Q,
        /// `(‖v‖_H / (400 B²⁰))²`
        pub hvp_bound_sq: Q,
        pub hvp_within_bound: bool,
    }

    pub fn check_bounds<O: RationalOracle>(o: &O, y: &[Q], v: &[Q], bound: &Q) -> Result<BoundReport> {
        let h = o.hessian(y);
        let hv = mat_vec(&h, v);
        let norm_sq = dot(v, &hv);
        let estimate_sq = norm_estimate_sq(o, y, v, bound)?;
        let hi = num_traits::pow(ratio(1000, 999), 4);
        let norm_sandwich = norm_sq <= estimate_sq && estimate_sq <= &hi * &norm_sq;

        let p = hvp_estimate(o, y, v, bound)?;
        let err: Vec<Q> = p.iter().zip(&hv).map(|(a, b)| a - b).collect();
        let hvp_error_sq = dot(&err, &solve(&h, &err)?);
        let scale = q(400) * num_traits::pow(bound.clone(), 20);
        let hvp_bound_sq = &norm_sq / (&scale * &scale);
        let hvp_within_bound = hvp_error_sq <= hvp_bound_sq;
        Ok(BoundReport {
            norm_sq,
            estimate_sq,
            norm_sandwich,
            hvp_error_sq,
            hvp_bound_sq,
            hvp_within_bound,
        })
    }
}
