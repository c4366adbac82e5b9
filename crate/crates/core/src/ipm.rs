//! Robust preconditioner updates driven only by gradient queries, and the short-step
//! path-following loop built on them.

use serde::{Deserialize, Serialize};

use crate::barriers::Barrier;
use crate::error::{Error, Result};
use crate::excentricity::excentricity_pair;
use crate::linalg::{check_dim, Cholesky, SymMatrix, Vector};
use crate::linear::{CertificateType, Preconditioner, StepDiagnostics, StepKind, StepOutcome};
use crate::oracle::{
    hvp_estimate, norm_estimate, practical_tau0, CountingOracle, EstimatorConfig, GradientOracle,
    Mode,
};
use crate::trace::{Phase, TraceEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpmConfig {
    pub beta: f64,
    /// Bound on `‖H_y‖`, `‖H_y⁻¹‖` along the path (paper mode only).
    pub bound_h: f64,
    /// Bound on `‖H̃‖`, `‖H̃⁻¹‖` (paper mode only).
    pub bound_htilde: f64,
    /// Estimator bound `B`; paper mode uses `B_H̃¹⁰`.
    pub bound: f64,
    pub mode: Mode,
    pub eps: f64,
    pub mu0: f64,
    /// Overrides the inner iteration count `T`.
    pub inner_cap: Option<usize>,
    /// Base finite-difference step in practical mode.
    pub tau0: f64,
    /// Recompute exact Hessians and excentricities to check the analysis on live runs.
    pub verify: bool,
    /// Reset `H̃` to the identity at the start of every outer step.
    pub reset_preconditioner: bool,
    /// Use exact-Hessian damped Newton for centering when the barrier has one.
    pub phase1_exact_newton: bool,
    /// Preconditioner updates allowed in a single inner loop before giving up.
    pub max_updates_per_step: usize,
}

impl Default for IpmConfig {
    fn default() -> Self {
        IpmConfig {
            beta: 0.01,
            bound_h: 1e4,
            bound_htilde: 1e4,
            bound: 1e4,
            mode: Mode::Practical,
            eps: 1e-4,
            mu0: 1.0,
            inner_cap: None,
            tau0: practical_tau0(),
            verify: false,
            reset_preconditioner: false,
            phase1_exact_newton: false,
            max_updates_per_step: 10_000,
        }
    }
}

impl IpmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bound >= 1.0) {
            return Err(Error::InvalidArgument(format!("B = {} < 1", self.bound)));
        }
        if !(self.beta > 1.0 / self.bound && self.beta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "beta = {} not in (1/B, 1)",
                self.beta
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidArgument(format!("eps = {} not in (0, 1)", self.eps)));
        }
        if !(self.mu0 > 0.0) {
            return Err(Error::InvalidArgument(format!("mu0 = {} must be positive", self.mu0)));
        }
        Ok(())
    }

    /// Estimator bound: `B` in practical mode, `B_H̃¹⁰` in paper mode.
    pub fn estimator_bound(&self) -> f64 {
        match self.mode {
            Mode::Paper => self.bound_htilde.powi(10),
            Mode::Practical => self.bound,
        }
    }

    /// Non-update inner iterations per outer step:
    /// `(100/β) ln(B_H B_H̃)` in paper mode, `200 ln(1/eps)` in practical mode.
    pub fn inner_iterations(&self) -> usize {
        if let Some(t) = self.inner_cap {
            return t;
        }
        let t = match self.mode {
            Mode::Paper => 100.0 / self.beta * (self.bound_h * self.bound_htilde).ln(),
            Mode::Practical => 200.0 * (1.0 / self.eps).ln(),
        };
        t.ceil().max(1.0) as usize
    }

    /// `(20β/9)`-adjusted type-1 threshold `1/√(20β/9)`.
    pub fn certificate_threshold(&self) -> f64 {
        1.0 / (20.0 * self.beta / 9.0).sqrt()
    }

    /// Guaranteed excentricity ratio of a robust update: `2/√(1 + 0.99/√(20β/9))`.
    pub fn update_ratio_bound(&self) -> f64 {
        2.0 / (1.0 + 0.99 * self.certificate_threshold()).sqrt()
    }

    fn estimator(&self, p: &Preconditioner, v: &Vector) -> EstimatorConfig {
        match self.mode {
            Mode::Paper => EstimatorConfig {
                bound: self.estimator_bound(),
                mode: Mode::Paper,
                tau_override: None,
            },
            Mode::Practical => {
                let scale = v.norm().max(p.h_tilde().quad_form(v).max(0.0).sqrt());
                EstimatorConfig {
                    bound: self.bound,
                    mode: Mode::Practical,
                    tau_override: Some(self.tau0 / scale),
                }
            }
        }
    }
}

/// `(1 + 1/(400B²⁰))²`
fn type2_inflation(bound: f64) -> f64 {
    (1.0 + 1.0 / (400.0 * bound.powi(20))).powi(2)
}

/// Estimates shared by a step and the update it may trigger.
struct Estimates {
    z: Vector,
    /// `n_y(z)`
    nz: f64,
    /// `p_y(z)`
    pz: Vector,
}

fn estimate<O: GradientOracle + ?Sized>(
    o: &O,
    y: &Vector,
    p: &Preconditioner,
    r: &Vector,
    cfg: &IpmConfig,
) -> Result<Estimates> {
    let z = p.apply_inv(r);
    let est = cfg.estimator(p, &z);
    let nz = norm_estimate(o, y, &z, &est)?;
    let pz = hvp_estimate(o, y, &z, &est)?;
    Ok(Estimates { z, nz, pz })
}

fn apply_update(
    p: &Preconditioner,
    r: &Vector,
    e: &Estimates,
    cert: CertificateType,
    cfg: &IpmConfig,
) -> Result<Preconditioner> {
    let nz_sq = e.nz * e.nz;
    if !(nz_sq > 0.0) {
        return Err(Error::NotPositiveDefinite {
            index: 0,
            pivot: nz_sq,
        });
    }
    match cert {
        // H̃′ = H̃ − rrᵀ/(n_y(z)² + rᵀz), H̃′⁻¹ = H̃⁻¹ + zzᵀ/n_y(z)²
        CertificateType::One => p.rank_one(r, -1.0 / (nz_sq + r.dot(&e.z))),
        // H̃′ = H̃ + p_y(z)p_y(z)ᵀ/((1 + 1/(400B²⁰))² n_y(z)²)
        CertificateType::Two => {
            p.rank_one(&e.pz, 1.0 / (type2_inflation(cfg.estimator_bound()) * nz_sq))
        }
    }
}

/// Rank-1 update of `H̃` certified by residual `r` at `y`, using four gradient queries.
pub fn robust_update_preconditioner<O: GradientOracle + ?Sized>(
    o: &O,
    y: &Vector,
    p: &Preconditioner,
    r: &Vector,
    cert: CertificateType,
    cfg: &IpmConfig,
) -> Result<Preconditioner> {
    check_dim(p.dim(), r.len())?;
    let e = estimate(o, y, p, r, cfg)?;
    apply_update(p, r, &e, cert, cfg)
}

/// One robust step on `H_y x = b` with the default residual target `1/B`.
pub fn robust_step_or_update<O: GradientOracle + ?Sized>(
    o: &O,
    y: &Vector,
    p: &Preconditioner,
    b: &Vector,
    x: &Vector,
    cfg: &IpmConfig,
) -> Result<StepOutcome> {
    robust_step_or_update_to(o, y, p, b, x, cfg, 1.0 / cfg.estimator_bound())
}

/// One robust step on `H_y x = b`, where `H_y` is only reached through gradients of `o`.
///
/// Returns `Converged` once `‖b − p_y(x)‖_{H̃⁻¹} ≤ target`, before or after the step.
/// Uses at most eight gradient queries.
pub fn robust_step_or_update_to<O: GradientOracle + ?Sized>(
    o: &O,
    y: &Vector,
    p: &Preconditioner,
    b: &Vector,
    x: &Vector,
    cfg: &IpmConfig,
    target: f64,
) -> Result<StepOutcome> {
    check_dim(p.dim(), b.len())?;
    check_dim(p.dim(), x.len())?;
    let residual = |x: &Vector| -> Result<Vector> { Ok(b - hvp_estimate(o, y, x, &cfg.estimator(p, x))?) };

    let r = residual(x)?;
    let r_sq = p.dual_norm_sq(&r);
    if r_sq.sqrt() <= target {
        return Ok(StepOutcome {
            kind: StepKind::Converged(x.clone()),
            diagnostics: StepDiagnostics {
                residual_before_sq: r_sq,
                residual_after_sq: r_sq,
                ..StepDiagnostics::default()
            },
        });
    }

    let e = estimate(o, y, p, &r, cfg)?;
    let nz_sq = e.nz * e.nz;
    let pz_sq = p.dual_norm_sq(&e.pz);
    if !(nz_sq > 0.0 && pz_sq > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference estimates vanished (n_y² = {nz_sq:e}); paper-mode steps need exact arithmetic"
        )));
    }
    let step = nz_sq / pz_sq;
    let x_next = x + &e.z * step;
    let r_next = residual(&x_next)?;
    let r_next_sq = p.dual_norm_sq(&r_next);
    let diagnostics = StepDiagnostics {
        step_size: step,
        residual_before_sq: r_sq,
        residual_after_sq: r_next_sq,
        type1_ratio: r_sq / nz_sq,
        type2_ratio: pz_sq / nz_sq,
    };
    if r_next_sq.sqrt() <= target {
        return Ok(StepOutcome {
            kind: StepKind::Converged(x_next),
            diagnostics,
        });
    }
    if r_next_sq <= (1.0 - cfg.beta) * r_sq {
        return Ok(StepOutcome {
            kind: StepKind::Progress(x_next),
            diagnostics,
        });
    }
    let cert = if diagnostics.type1_ratio >= cfg.certificate_threshold() {
        CertificateType::One
    } else {
        CertificateType::Two
    };
    let next = apply_update(p, &r, &e, cert, cfg)?;
    Ok(StepOutcome {
        kind: StepKind::PreconditionerUpdated(next, cert),
        diagnostics,
    })
}

/// `min ⟨c, y⟩` over the domain of a barrier `φ`, solved through `g_μ = ⟨c,y⟩/μ + φ`.
#[derive(Debug, Clone)]
pub struct BarrierProblem<B> {
    pub c: Vector,
    pub barrier: B,
}

impl<B: Barrier> BarrierProblem<B> {
    pub fn new(c: Vector, barrier: B) -> Result<Self> {
        check_dim(barrier.dim(), c.len())?;
        Ok(BarrierProblem { c, barrier })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn nu(&self) -> f64 {
        self.barrier.nu()
    }

    pub fn objective(&self, y: &Vector) -> f64 {
        self.c.dot(y)
    }

    /// `∇g_μ(y) = c/μ + ∇φ(y)`
    pub fn gradient_mu(&self, y: &Vector, mu: f64) -> Result<Vector> {
        Ok(&self.c / mu + self.barrier.gradient(y)?)
    }

    /// `μ′/μ = 1/(1 + 1/(200√(nν)))`
    pub fn mu_factor(&self) -> f64 {
        1.0 + 1.0 / (200.0 * (self.dim() as f64 * self.nu()).sqrt())
    }

    /// `1/(20√n)`
    pub fn centrality_threshold(&self) -> f64 {
        1.0 / (20.0 * (self.dim() as f64).sqrt())
    }

    /// `‖∇g_μ(y)‖_{H_y⁻¹}` with the exact Hessian, when the barrier has one.
    pub fn exact_centrality(&self, y: &Vector, mu: f64) -> Option<Result<f64>> {
        let h = self.barrier.exact_hessian(y)?;
        Some(h.and_then(|h| {
            let g = self.gradient_mu(y, mu)?;
            Ok(Cholesky::factor(&h)?.inv_quad_form(&g).sqrt())
        }))
    }
}

/// `g_μ` as a gradient oracle.
struct MuObjective<'a, O> {
    c: &'a Vector,
    mu: f64,
    phi: &'a O,
}

impl<O: GradientOracle> GradientOracle for MuObjective<'_, O> {
    fn dim(&self) -> usize {
        self.phi.dim()
    }
    fn contains(&self, y: &Vector) -> bool {
        self.phi.contains(y)
    }
    fn gradient(&self, y: &Vector) -> Result<Vector> {
        Ok(self.c / self.mu + self.phi.gradient(y)?)
    }
    fn exact_hessian(&self, y: &Vector) -> Option<Result<SymMatrix>> {
        self.phi.exact_hessian(y)
    }
}

/// Checks of the analysis recorded on each outer step when `verify` is on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterDiagnostics {
    pub iteration: usize,
    pub mu: f64,
    pub mu_next: f64,
    /// `‖∇g_μ(y)‖_{H_y⁻¹}`
    pub centrality_before: f64,
    /// `‖∇g_μ(y) − H_y x‖_{H_y⁻¹}`
    pub inner_residual: f64,
    /// `‖∇g_μ(y′)‖_{H_{y′}⁻¹}`, same `μ`.
    pub centrality_after: f64,
    /// `‖∇g_{μ′}(y′)‖_{H_{y′}⁻¹}`
    pub centrality_next_mu: f64,
    /// `2ε + 7 ‖∇g_μ(y)‖²_{H_y⁻¹}`
    pub ipm_prog_bound: f64,
    /// Whether the hypotheses `‖∇g_μ(y)‖ ≤ 1/20`, `ε ≤ 1/20` hold.
    pub ipm_prog_applies: bool,
    /// `‖y′ − y‖_{H_y}`
    pub delta_norm: f64,
    pub excentricity_before: f64,
    pub excentricity_after: f64,
    /// `½√n ‖δ‖/((1 − ‖δ‖)² − ‖δ‖)`, when `‖δ‖ < (1 − ‖δ‖)²`.
    pub new_excent_bound: Option<f64>,
    /// Exact `ℰ` ratios of the updates made during this step.
    pub update_ratios: Vec<f64>,
    /// Progress steps violating `‖r′‖² ≤ max{2/B, (1 − β/2)‖r‖²}` against the exact Hessian.
    pub contract_violations: usize,
}

impl OuterDiagnostics {
    pub fn ipm_prog_holds(&self) -> bool {
        self.centrality_after <= self.ipm_prog_bound + 1e-9
    }

    pub fn new_excent_holds(&self) -> bool {
        match self.new_excent_bound {
            Some(b) => self.excentricity_after - self.excentricity_before <= b + 1e-9,
            None => true,
        }
    }

    /// The excentricity growth bound rederived with constant 2 in the integrated
    /// self-concordance bound: `½√n · 2‖δ‖/((1 − ‖δ‖)² − 2‖δ‖)`.
    pub fn new_excent_relaxed_bound(&self, n: usize) -> Option<f64> {
        let d = self.delta_norm;
        let slack = (1.0 - d).powi(2) - 2.0 * d;
        (slack > 0.0).then(|| 0.5 * (n as f64).sqrt() * 2.0 * d / slack)
    }

    pub fn new_excent_holds_relaxed(&self, n: usize) -> bool {
        match self.new_excent_relaxed_bound(n) {
            Some(b) => self.excentricity_after - self.excentricity_before <= b + 1e-9,
            None => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CentralPathState {
    pub y: Vector,
    pub mu: f64,
    pub p: Preconditioner,
    pub nu: f64,
    pub trace: Vec<TraceEvent>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub updates: usize,
    pub gradient_queries: u64,
    pub diagnostics: Vec<OuterDiagnostics>,
}

impl CentralPathState {
    pub fn new(y: Vector, mu: f64, nu: f64) -> Self {
        let n = y.len();
        CentralPathState {
            y,
            mu,
            p: Preconditioner::identity(n),
            nu,
            trace: Vec::new(),
            outer_iterations: 0,
            inner_iterations: 0,
            updates: 0,
            gradient_queries: 0,
            diagnostics: Vec::new(),
        }
    }
}

/// Result of an inner solve `H_y x ≈ b` by repeated robust steps.
struct InnerSolve {
    x: Vector,
    p: Preconditioner,
    iterations: usize,
    updates: usize,
    update_ratios: Vec<f64>,
    contract_violations: usize,
    residual_before: f64,
    residual_after: f64,
}

/// Inner residual target: `min(1/B, 1/(200√n))`.
fn inner_target<B: Barrier>(problem: &BarrierProblem<B>, cfg: &IpmConfig) -> f64 {
    (1.0 / cfg.estimator_bound()).min(problem.centrality_threshold() / 10.0)
}

#[allow(clippy::too_many_arguments)]
fn inner_solve<O: GradientOracle>(
    phi: &CountingOracle<O>,
    y: &Vector,
    b: &Vector,
    mut p: Preconditioner,
    cfg: &IpmConfig,
    target: f64,
    mu: Option<f64>,
    trace: &mut Vec<TraceEvent>,
) -> Result<InnerSolve> {
    let n = y.len();
    let cap = cfg.inner_iterations();
    let exact_h = if cfg.verify {
        phi.exact_hessian(y).transpose()?
    } else {
        None
    };
    let mut x = Vector::zeros(n);
    let mut progress = 0;
    let mut iterations = 0;
    let mut updates = 0;
    let mut update_ratios = Vec::new();
    let mut contract_violations = 0;
    let mut retried = false;
    let residual_before = p.dual_norm_sq(b).sqrt();
    let mut residual_after = residual_before;

    while progress < cap {
        let before = phi.queries();
        let outcome = match robust_step_or_update_to(phi, y, &p, b, &x, cfg, target) {
            Ok(o) => o,
            Err(Error::NotPositiveDefinite { .. }) | Err(Error::SingularUpdate { .. }) if !retried => {
                retried = true;
                continue;
            }
            Err(Error::NotPositiveDefinite { .. }) | Err(Error::SingularUpdate { .. }) => {
                return Err(Error::InnerLoopStall { iterations });
            }
            Err(e) => return Err(e),
        };
        let d = outcome.diagnostics;
        let mut event = TraceEvent::new(Phase::Robust, trace.len());
        event.mu = mu;
        event.residual_before = d.residual_before_sq.sqrt();
        event.residual_after = d.residual_after_sq.sqrt();
        event.gradient_queries = phi.queries() - before;
        iterations += 1;
        match outcome.kind {
            StepKind::Progress(next) => {
                if let Some(h) = &exact_h {
                    let r = p.dual_norm_sq(&(b - h.mul_vec(&x)));
                    let r_next = p.dual_norm_sq(&(b - h.mul_vec(&next)));
                    let bound = (2.0 / cfg.estimator_bound()).max((1.0 - cfg.beta / 2.0) * r);
                    if r_next > bound * (1.0 + 1e-9) {
                        contract_violations += 1;
                    }
                }
                event.step_size = Some(d.step_size);
                x = next;
                progress += 1;
                residual_after = event.residual_after;
                retried = false;
            }
            StepKind::PreconditionerUpdated(next, cert) => {
                if let Some(h) = &exact_h {
                    let e0 = excentricity_pair(p.h_tilde_inv(), h)?;
                    let e1 = excentricity_pair(next.h_tilde_inv(), h)?;
                    update_ratios.push(e1.ratio_from(e0));
                    event.excentricity_log = Some(e1.value());
                }
                event.certificate = Some(cert.as_u8());
                p = next;
                updates += 1;
                retried = false;
                if updates > cfg.max_updates_per_step {
                    return Err(Error::InnerLoopStall { iterations });
                }
            }
            StepKind::Converged(next) => {
                if d.step_size > 0.0 {
                    event.step_size = Some(d.step_size);
                }
                x = next;
                residual_after = event.residual_after;
                trace.push(event);
                break;
            }
        }
        trace.push(event);
    }
    Ok(InnerSolve {
        x,
        p,
        iterations,
        updates,
        update_ratios,
        contract_violations,
        residual_before,
        residual_after,
    })
}

/// One outer step: an approximate Newton step on `g_μ` followed by `μ ← μ/(1 + 1/(200√(nν)))`.
pub fn path_following_step<B: Barrier>(
    mut state: CentralPathState,
    problem: &BarrierProblem<B>,
    cfg: &IpmConfig,
) -> Result<CentralPathState> {
    let phi = CountingOracle::new(&problem.barrier);
    let y = state.y.clone();
    let mu = state.mu;
    if cfg.reset_preconditioner {
        state.p = Preconditioner::identity(y.len());
    }
    let b = {
        let g_mu = MuObjective {
            c: &problem.c,
            mu,
            phi: &phi,
        };
        g_mu.gradient(&y)?
    };
    let inner = inner_solve(
        &phi,
        &y,
        &b,
        state.p.clone(),
        cfg,
        inner_target(problem, cfg),
        Some(mu),
        &mut state.trace,
    )?;
    let y_next = &y - &inner.x;
    if !problem.barrier.contains(&y_next) {
        return Err(Error::Infeasible);
    }
    let mu_next = mu / problem.mu_factor();

    if cfg.verify {
        if let Some(d) = verify_outer(problem, &state, &y, &y_next, &b, &inner, mu, mu_next)? {
            state.diagnostics.push(d);
        }
    }

    let mut event = TraceEvent::new(Phase::Outer, state.outer_iterations);
    event.mu = Some(mu_next);
    event.residual_before = inner.residual_before;
    event.residual_after = inner.residual_after;
    event.gradient_queries = phi.queries();
    state.trace.push(event);

    state.y = y_next;
    state.mu = mu_next;
    state.p = inner.p;
    state.outer_iterations += 1;
    state.inner_iterations += inner.iterations;
    state.updates += inner.updates;
    state.gradient_queries += phi.queries();
    Ok(state)
}

#[allow(clippy::too_many_arguments)]
fn verify_outer<B: Barrier>(
    problem: &BarrierProblem<B>,
    state: &CentralPathState,
    y: &Vector,
    y_next: &Vector,
    b: &Vector,
    inner: &InnerSolve,
    mu: f64,
    mu_next: f64,
) -> Result<Option<OuterDiagnostics>> {
    let Some(h) = problem.barrier.exact_hessian(y).transpose()? else {
        return Ok(None);
    };
    let h_next = problem
        .barrier
        .exact_hessian(y_next)
        .transpose()?
        .expect("exact Hessian available at y is available at y′");
    let chol = Cholesky::factor(&h)?;
    let chol_next = Cholesky::factor(&h_next)?;
    let centrality_before = chol.inv_quad_form(b).sqrt();
    let inner_residual = chol.inv_quad_form(&(b - h.mul_vec(&inner.x))).sqrt();
    let centrality_after = chol_next
        .inv_quad_form(&problem.gradient_mu(y_next, mu)?)
        .sqrt();
    let centrality_next_mu = chol_next
        .inv_quad_form(&problem.gradient_mu(y_next, mu_next)?)
        .sqrt();
    let delta_norm = h.quad_form(&inner.x).max(0.0).sqrt();
    let excentricity_before = excentricity_pair(inner.p.h_tilde_inv(), &h)?.value();
    let excentricity_after = excentricity_pair(inner.p.h_tilde_inv(), &h_next)?.value();
    let slack = (1.0 - delta_norm).powi(2) - delta_norm;
    let new_excent_bound = (slack > 0.0)
        .then(|| 0.5 * (problem.dim() as f64).sqrt() * delta_norm / slack);
    Ok(Some(OuterDiagnostics {
        iteration: state.outer_iterations,
        mu,
        mu_next,
        centrality_before,
        inner_residual,
        centrality_after,
        centrality_next_mu,
        ipm_prog_bound: 2.0 * inner_residual + 7.0 * centrality_before.powi(2),
        ipm_prog_applies: centrality_before <= 0.05 && inner_residual <= 0.05,
        delta_norm,
        excentricity_before,
        excentricity_after,
        new_excent_bound,
        update_ratios: inner.update_ratios.clone(),
        contract_violations: inner.contract_violations,
    }))
}

/// Centering at `μ₀`: result of [`centering_phase1_with`].
#[derive(Debug, Clone)]
pub struct Centered {
    pub y: Vector,
    pub p: Preconditioner,
    pub iterations: usize,
    pub gradient_queries: u64,
    /// Final Newton decrement (exact, or the `n_y` estimate).
    pub decrement: f64,
}

const PHASE1_MAX_ITERATIONS: usize = 1000;

/// Moves a strictly feasible point close to the minimizer of `g_{μ₀}`.
pub fn centering_phase1<B: Barrier>(
    problem: &BarrierProblem<B>,
    y_interior: &Vector,
    cfg: &IpmConfig,
) -> Result<Vector> {
    Ok(centering_phase1_with(problem, y_interior, cfg)?.y)
}

/// Damped Newton `y ← y − x/(1 + λ)` on `g_{μ₀}`, where `x ≈ H_y⁻¹∇g_{μ₀}(y)` and `λ ≈ ‖x‖_{H_y}`.
///
/// With `phase1_exact_newton` and an exact Hessian the step is exact; otherwise `x` comes
/// from robust inner solves and `λ = n_y(x)`, which over-estimates the decrement.
pub fn centering_phase1_with<B: Barrier>(
    problem: &BarrierProblem<B>,
    y_interior: &Vector,
    cfg: &IpmConfig,
) -> Result<Centered> {
    check_dim(problem.dim(), y_interior.len())?;
    if !problem.barrier.contains(y_interior) {
        return Err(Error::Infeasible);
    }
    let n = problem.dim();
    let threshold = problem.centrality_threshold();
    let phi = CountingOracle::new(&problem.barrier);
    let g_mu = MuObjective {
        c: &problem.c,
        mu: cfg.mu0,
        phi: &phi,
    };
    let exact = cfg.phase1_exact_newton && problem.barrier.exact_hessian(y_interior).is_some();
    let mut y = y_interior.clone();
    let mut p = Preconditioner::identity(n);
    let mut trace = Vec::new();
    for it in 0..PHASE1_MAX_ITERATIONS {
        let g = g_mu.gradient(&y)?;
        let (x, lambda) = if exact {
            let h = problem.barrier.exact_hessian(&y).expect("checked above")?;
            let x = Cholesky::factor(&h)?.solve(&g);
            let lambda = g.dot(&x).max(0.0).sqrt();
            (x, lambda)
        } else {
            let inner = inner_solve(&phi, &y, &g, p.clone(), cfg, threshold / 10.0, None, &mut trace)?;
            p = inner.p;
            let est = cfg.estimator(&p, &inner.x);
            let lambda = norm_estimate(&phi, &y, &inner.x, &est)?;
            (inner.x, lambda)
        };
        let stop = if exact { threshold } else { threshold / 2.0 };
        if lambda <= stop {
            return Ok(Centered {
                y,
                p,
                iterations: it,
                gradient_queries: phi.queries(),
                decrement: lambda,
            });
        }
        let next = &y - x / (1.0 + lambda);
        if !problem.barrier.contains(&next) {
            return Err(Error::Infeasible);
        }
        y = next;
    }
    Err(Error::NoProgress {
        iterations: PHASE1_MAX_ITERATIONS,
    })
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub y: Vector,
    pub objective: f64,
    pub mu_final: f64,
    pub state: CentralPathState,
}

/// `μ` at which the path stops: `eps/(ν(1 + 2/20))`.
pub fn final_mu(eps: f64, nu: f64) -> f64 {
    eps / (nu * (1.0 + 2.0 * (1.0 / 20.0)))
}

/// Follows the central path from a point centered for `g_{μ₀}` until `μ ≤ eps/(1.1ν)`.
pub fn solve_barrier_problem<B: Barrier>(
    problem: &BarrierProblem<B>,
    y0: &Vector,
    cfg: &IpmConfig,
) -> Result<BarrierSolution> {
    solve_barrier_problem_from(problem, y0, Preconditioner::identity(problem.dim()), cfg)
}

pub fn solve_barrier_problem_from<B: Barrier>(
    problem: &BarrierProblem<B>,
    y0: &Vector,
    p0: Preconditioner,
    cfg: &IpmConfig,
) -> Result<BarrierSolution> {
    cfg.validate()?;
    check_dim(problem.dim(), y0.len())?;
    check_dim(problem.dim(), p0.dim())?;
    if !problem.barrier.contains(y0) {
        return Err(Error::Infeasible);
    }
    let threshold = problem.centrality_threshold();
    let exact = if cfg.verify {
        problem.exact_centrality(y0, cfg.mu0)
    } else {
        None
    };
    let centrality = match exact {
        Some(c) => c?,
        None => {
            // Proxy: ‖x‖_{H} for the robust Newton direction x ≈ H⁻¹∇g_{μ₀}, via n_y.
            let phi = CountingOracle::new(&problem.barrier);
            let b = problem.gradient_mu(y0, cfg.mu0)?;
            let inner = inner_solve(&phi, y0, &b, p0.clone(), cfg, threshold / 10.0, None, &mut Vec::new())?;
            let est = cfg.estimator(&inner.p, &inner.x);
            norm_estimate(&phi, y0, &inner.x, &est)? / crate::oracle::NORM_INFLATION
        }
    };
    if centrality > threshold {
        return Err(Error::NotCentered {
            centrality,
            threshold,
        });
    }

    let stop = final_mu(cfg.eps, problem.nu());
    let mut state = CentralPathState::new(y0.clone(), cfg.mu0, problem.nu());
    state.p = p0;
    while state.mu > stop {
        state = path_following_step(state, problem, cfg)?;
    }
    Ok(BarrierSolution {
        objective: problem.objective(&state.y),
        y: state.y.clone(),
        mu_final: state.mu,
        state,
    })
}

/// Phase 1 followed by path following.
pub fn solve_from_interior<B: Barrier>(
    problem: &BarrierProblem<B>,
    y_interior: &Vector,
    cfg: &IpmConfig,
) -> Result<BarrierSolution> {
    cfg.validate()?;
    let centered = centering_phase1_with(problem, y_interior, cfg)?;
    let p0 = if cfg.reset_preconditioner {
        Preconditioner::identity(problem.dim())
    } else {
        centered.p
    };
    let mut sol = solve_barrier_problem_from(problem, &centered.y, p0, cfg)?;
    sol.state.gradient_queries += centered.gradient_queries;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::BoxBarrier;
    use crate::linear::{exact_step_size, step_or_update};
    use crate::oracle::{quadratic_oracle, NORM_INFLATION};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn exact_tau() -> IpmConfig {
        // Finite differences are exact on quadratics for any step; a unit step avoids
        // cancellation.
        IpmConfig {
            tau0: 1.0,
            ..IpmConfig::default()
        }
    }

    #[test]
    fn schedule_arithmetic() {
        let problem = BarrierProblem::new(v(&[0.0]), BoxBarrier::unit(1)).unwrap();
        // n = 1, ν = 2: factor 1 + 1/(200√2)
        assert_close!(problem.mu_factor(), 1.0 + 1.0 / (200.0 * 2f64.sqrt()), 1e-15);
        let cfg = IpmConfig {
            mode: Mode::Paper,
            beta: 0.01,
            bound_h: std::f64::consts::E,
            bound_htilde: 1.0,
            ..IpmConfig::default()
        };
        assert_eq!(cfg.inner_iterations(), 10_000);
        assert!(cfg.update_ratio_bound() <= 0.75);
        assert_close!(cfg.update_ratio_bound(), 0.7235, 1e-3);
    }

    #[test]
    fn unit_schedule_example() {
        // n = ν = 1 gives μ′ = 1/1.005.
        let f: f64 = 1.0 + 1.0 / (200.0 * (1.0f64 * 1.0).sqrt());
        assert_close!(1.0 / f, 0.995025, 1e-6);
    }

    #[test]
    fn robust_step_converges_on_identity() {
        let o = quadratic_oracle(SymMatrix::identity(2));
        let cfg = exact_tau();
        let p = Preconditioner::identity(2);
        let b = v(&[1.0, 1.0]);
        let mut x = Vector::zeros(2);
        // The n_y inflation overshoots by (1000/999)², so convergence takes a few steps.
        for _ in 0..10 {
            match robust_step_or_update(&o, &Vector::zeros(2), &p, &b, &x, &cfg).unwrap().kind {
                StepKind::Converged(_) => return,
                StepKind::Progress(next) => x = next,
                StepKind::PreconditionerUpdated(..) => panic!("identity needs no update"),
            }
        }
        panic!("did not converge");
    }

    #[test]
    fn small_residual_returns_immediately() {
        let o = CountingOracle::new(quadratic_oracle(SymMatrix::identity(2)));
        let cfg = IpmConfig::default();
        let b = v(&[0.5 / cfg.bound, 0.0]);
        let out = robust_step_or_update(&o, &Vector::zeros(2), &Preconditioner::identity(2), &b, &Vector::zeros(2), &cfg)
            .unwrap();
        assert_eq!(out.kind, StepKind::Converged(Vector::zeros(2)));
        assert_eq!(o.queries(), 0);
    }

    #[test]
    fn robust_matches_exact_arithmetic() {
        let h = SymMatrix::from_diagonal(&[1.0, 100.0]);
        let o = quadratic_oracle(h.clone());
        let cfg = exact_tau();
        let p = Preconditioner::identity(2);
        let b = v(&[1.0, 1.0]);
        let x = Vector::zeros(2);
        let robust = robust_step_or_update(&o, &Vector::zeros(2), &p, &b, &x, &cfg).unwrap();
        let exact = step_or_update(&h, &p, &b, &x, cfg.beta).unwrap();
        let scale = NORM_INFLATION * NORM_INFLATION;
        assert_close!(robust.diagnostics.step_size, exact.diagnostics.step_size * scale, 1e-12);
        assert_close!(exact_step_size(&h, &p, &b), 101.0 / 10001.0, 1e-15);
        assert_close!(robust.diagnostics.residual_before_sq, exact.diagnostics.residual_before_sq, 1e-12);
    }

    #[test]
    fn robust_type2_update_on_identity() {
        let o = quadratic_oracle(SymMatrix::identity(2));
        let cfg = exact_tau();
        let p = robust_update_preconditioner(
            &o,
            &Vector::zeros(2),
            &Preconditioner::identity(2),
            &v(&[1.0, 0.0]),
            CertificateType::Two,
            &cfg,
        )
        .unwrap();
        // H̃′ = I + e₁e₁ᵀ/(1000/999)², i.e. diag(2, 1) up to the n_y inflation.
        let expect = 1.0 + 1.0 / (NORM_INFLATION * NORM_INFLATION);
        assert_close!(p.h_tilde().as_matrix()[(0, 0)], expect, 1e-12);
        assert_close!(p.h_tilde().as_matrix()[(1, 1)], 1.0, 1e-15);
    }

    #[test]
    fn robust_updates_reduce_excentricity() {
        let h = SymMatrix::from_row_major(3, &[50.0, 3.0, 0.0, 3.0, 2.0, 0.5, 0.0, 0.5, 0.2]).unwrap();
        let o = CountingOracle::new(quadratic_oracle(h.clone()));
        let cfg = IpmConfig::default();
        let mut p = Preconditioner::identity(3);
        let b = v(&[1.0, -1.0, 0.5]);
        let mut x = Vector::zeros(3);
        let mut updates = 0;
        for _ in 0..200 {
            let before = o.queries();
            let out = robust_step_or_update_to(&o, &Vector::zeros(3), &p, &b, &x, &cfg, 1e-10).unwrap();
            assert!(o.queries() - before <= 8);
            match out.kind {
                StepKind::Converged(_) => break,
                StepKind::Progress(next) => x = next,
                StepKind::PreconditionerUpdated(next, _) => {
                    let e0 = excentricity_pair(p.h_tilde_inv(), &h).unwrap();
                    let e1 = excentricity_pair(next.h_tilde_inv(), &h).unwrap();
                    assert!(e1.ratio_from(e0) <= cfg.update_ratio_bound() + 1e-9);
                    p = next;
                    updates += 1;
                }
            }
        }
        assert!(updates > 0);
    }

    #[test]
    fn centered_box_stays_put() {
        let problem = BarrierProblem::new(Vector::zeros(2), BoxBarrier::unit(2)).unwrap();
        let cfg = IpmConfig::default();
        let y = problem.barrier.center();
        assert_eq!(centering_phase1(&problem, &y, &cfg).unwrap(), y);
        let state = CentralPathState::new(y.clone(), 1.0, problem.nu());
        let next = path_following_step(state, &problem, &cfg).unwrap();
        assert!((&next.y - &y).norm() <= 1e-12);
    }

    #[test]
    fn phase1_centers_from_corner() {
        let problem = BarrierProblem::new(Vector::zeros(2), BoxBarrier::unit(2)).unwrap();
        for exact in [true, false] {
            let cfg = IpmConfig {
                phase1_exact_newton: exact,
                ..IpmConfig::default()
            };
            let y = centering_phase1(&problem, &v(&[0.9, 0.9]), &cfg).unwrap();
            let c = problem.exact_centrality(&y, cfg.mu0).unwrap().unwrap();
            assert!(c <= problem.centrality_threshold(), "exact = {exact}: {c}");
        }
    }

    #[test]
    fn new_grad_identity() {
        let problem = BarrierProblem::new(v(&[0.3, -1.2]), BoxBarrier::unit(2)).unwrap();
        let y = v(&[0.2, 0.7]);
        let (mu, delta) = (0.37, 0.01);
        let lhs = problem.gradient_mu(&y, mu / (1.0 + delta)).unwrap();
        let rhs = problem.gradient_mu(&y, mu).unwrap() * (1.0 + delta)
            - problem.barrier.gradient(&y).unwrap() * delta;
        assert!((lhs - rhs).norm() <= 1e-14);
    }

    #[test]
    fn pure_centering_reaches_analytic_center() {
        let problem = BarrierProblem::new(Vector::zeros(3), BoxBarrier::unit(3)).unwrap();
        let cfg = IpmConfig {
            eps: 0.5,
            ..IpmConfig::default()
        };
        let y0 = v(&[0.5, 0.5, 0.5]);
        let sol = solve_barrier_problem(&problem, &y0, &cfg).unwrap();
        assert!(problem.barrier.gradient(&sol.y).unwrap().norm() <= 1e-6);
    }

    #[test]
    fn uncentered_start_rejected() {
        let problem = BarrierProblem::new(v(&[1.0, 1.0]), BoxBarrier::unit(2)).unwrap();
        let err = solve_barrier_problem(&problem, &v(&[0.5, 0.5]), &IpmConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NotCentered { .. }));
    }

    #[test]
    fn small_box_lp_with_verification() {
        let c = v(&[0.7, -0.4, 0.1]);
        let problem = BarrierProblem::new(c.clone(), BoxBarrier::unit(3)).unwrap();
        let cfg = IpmConfig {
            eps: 1e-3,
            verify: true,
            phase1_exact_newton: true,
            ..IpmConfig::default()
        };
        let sol = solve_from_interior(&problem, &v(&[0.5, 0.5, 0.5]), &cfg).unwrap();
        let opt: f64 = c.iter().map(|ci| ci.min(0.0)).sum();
        assert!((sol.objective - opt).abs() <= 1e-3, "{} vs {opt}", sol.objective);
        let ds = &sol.state.diagnostics;
        assert_eq!(ds.len(), sol.state.outer_iterations);
        for d in ds {
            assert_eq!(d.mu_next, d.mu / problem.mu_factor());
            if d.ipm_prog_applies {
                assert!(d.ipm_prog_holds(), "{d:?}");
            }
            assert!(d.new_excent_holds_relaxed(3), "{d:?}");
            assert!(d.update_ratios.iter().all(|&r| r <= 0.75), "{d:?}");
            assert!(d.centrality_next_mu <= problem.centrality_threshold(), "{d:?}");
        }
    }
}
