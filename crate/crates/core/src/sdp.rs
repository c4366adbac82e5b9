//! Dual SDP front end: `min ⟨c, y⟩` subject to `B − Σ yᵢAᵢ ⪰ 0`.

use crate::barriers::SdpBarrier;
use crate::error::{Error, Result};
use crate::ipm::{solve_from_interior, BarrierProblem, IpmConfig};
use crate::linalg::{check_dim, sym_eigen, Cholesky, SymMatrix, Vector};
use crate::oracle::GradientOracle;
use crate::trace::TraceEvent;

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub c: Vector,
    pub a: Vec<SymMatrix>,
    pub b: SymMatrix,
    /// Strictly feasible start; `y = 0` is used when absent and `B ≻ 0`.
    pub y0: Option<Vector>,
}

impl SdpProblem {
    pub fn new(c: Vector, a: Vec<SymMatrix>, b: SymMatrix) -> Result<Self> {
        check_dim(c.len(), a.len())?;
        for ai in &a {
            check_dim(b.dim(), ai.dim())?;
        }
        Ok(SdpProblem { c, a, b, y0: None })
    }

    pub fn with_start(mut self, y0: Vector) -> Result<Self> {
        check_dim(self.m(), y0.len())?;
        self.y0 = Some(y0);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.c.len()
    }

    pub fn n(&self) -> usize {
        self.b.dim()
    }

    pub fn slack(&self, y: &Vector) -> Result<SymMatrix> {
        check_dim(self.m(), y.len())?;
        let mut s = self.b.as_matrix().clone();
        for (ai, yi) in self.a.iter().zip(y.iter()) {
            s -= ai.as_matrix() * *yi;
        }
        Ok(SymMatrix::symmetrize(s))
    }

    fn start(&self) -> Result<Vector> {
        let y0 = self.y0.clone().unwrap_or_else(|| Vector::zeros(self.m()));
        Cholesky::factor(&self.slack(&y0)?).map_err(|_| Error::Infeasible)?;
        Ok(y0)
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub y: Vector,
    pub objective: f64,
    pub mu_final: f64,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub gradient_queries: u64,
    pub slack: SymMatrix,
    /// Exact-Hessian evaluations made by the solve (zero unless verifying).
    pub hessian_calls: u64,
    pub trace: Vec<TraceEvent>,
}

/// Scaled log-det barrier with `ν = n√m`, centering, then path following.
pub fn solve_sdp(p: &SdpProblem, eps: f64, cfg: &IpmConfig) -> Result<SdpSolution> {
    let y0 = p.start()?;
    let barrier = SdpBarrier::new(p.a.clone(), p.b.clone())?;
    let problem = BarrierProblem::new(p.c.clone(), barrier)?;
    let cfg = IpmConfig {
        eps,
        ..cfg.clone()
    };
    let sol = solve_from_interior(&problem, &y0, &cfg)?;
    debug_assert!(problem.barrier.contains(&sol.y));
    Ok(SdpSolution {
        slack: p.slack(&sol.y)?,
        objective: sol.objective,
        mu_final: sol.mu_final,
        iterations: sol.state.outer_iterations,
        inner_iterations: sol.state.inner_iterations,
        gradient_queries: sol.state.gradient_queries,
        hessian_calls: problem.barrier.hessian_calls(),
        trace: sol.state.trace,
        y: sol.y,
    })
}

/// `min s` subject to `sI − Bmat ⪰ 0`, i.e. `λ_max(Bmat)`.
///
/// Solved in shifted form: with `t` above every Gershgorin disc, `y = t − s` and the
/// constraint reads `(tI − Bmat) − yI ⪰ 0`, which is strictly feasible at `y = 0`.
pub fn max_eigenvalue_via_sdp(bmat: &SymMatrix, eps: f64, cfg: &IpmConfig) -> Result<f64> {
    let n = bmat.dim();
    let m = bmat.as_matrix();
    let t = (0..n)
        .map(|i| m[(i, i)] + (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    let p = SdpProblem::new(
        Vector::from_element(1, -1.0),
        vec![SymMatrix::identity(n)],
        SymMatrix::identity(n).scale(t).sub(bmat),
    )?;
    let sol = solve_sdp(&p, eps, cfg)?;
    Ok(t + sol.objective)
}

/// `λ_min(Bmat)` as `−min(−y)` subject to `Bmat − yI ⪰ 0`; requires `Bmat ≻ 0`.
pub fn min_eigenvalue_via_sdp(bmat: &SymMatrix, eps: f64, cfg: &IpmConfig) -> Result<f64> {
    let n = bmat.dim();
    let p = SdpProblem::new(
        Vector::from_element(1, -1.0),
        vec![SymMatrix::identity(n)],
        bmat.clone(),
    )?;
    Ok(-solve_sdp(&p, eps, cfg)?.objective)
}

/// Reference answer for eigenvalue fixtures.
pub fn eigen_oracle(bmat: &SymMatrix) -> Result<(f64, f64)> {
    let e = sym_eigen(bmat)?;
    Ok((e.min(), e.max()))
}
