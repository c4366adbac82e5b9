//! Preconditioned Richardson iteration with certificate-driven rank-1 preconditioner
//! updates, and the standalone linear solver built on it.

use crate::error::{Error, Result};
use crate::excentricity::{excentricity_log, excentricity_pair};
use crate::linalg::{check_dim, sym_eigen, Cholesky, SymMatrix, Vector};
use crate::trace::{Phase, TraceEvent};

/// The pair `(H̃, H̃⁻¹)`, kept consistent under rank-1 updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    h_tilde: SymMatrix,
    h_tilde_inv: SymMatrix,
}

/// Allowed drift of `‖H̃ H̃⁻¹ − I‖_F`, per unit of dimension.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-8;

impl Preconditioner {
    pub fn identity(n: usize) -> Self {
        Preconditioner {
            h_tilde: SymMatrix::identity(n),
            h_tilde_inv: SymMatrix::identity(n),
        }
    }

    pub fn new(h_tilde: SymMatrix) -> Result<Self> {
        let h_tilde_inv = h_tilde.inverse()?;
        Ok(Preconditioner {
            h_tilde,
            h_tilde_inv,
        })
    }

    /// Trusts the caller that `h_tilde_inv` inverts `h_tilde`, up to the consistency tolerance.
    pub fn from_pair(h_tilde: SymMatrix, h_tilde_inv: SymMatrix) -> Result<Self> {
        check_dim(h_tilde.dim(), h_tilde_inv.dim())?;
        let p = Preconditioner {
            h_tilde,
            h_tilde_inv,
        };
        let err = p.consistency_error();
        if !(err <= CONSISTENCY_TOLERANCE * p.dim() as f64) {
            return Err(Error::InvalidArgument(format!(
                "preconditioner pair is inconsistent (‖H̃H̃⁻¹ − I‖_F = {err:e})"
            )));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.h_tilde.dim()
    }

    pub fn h_tilde(&self) -> &SymMatrix {
        &self.h_tilde
    }

    pub fn h_tilde_inv(&self) -> &SymMatrix {
        &self.h_tilde_inv
    }

    /// `H̃⁻¹ r`
    pub fn apply_inv(&self, r: &Vector) -> Vector {
        self.h_tilde_inv.mul_vec(r)
    }

    /// `‖r‖²_{H̃⁻¹}`
    pub fn dual_norm_sq(&self, r: &Vector) -> f64 {
        self.h_tilde_inv.quad_form(r).max(0.0)
    }

    /// `‖H̃ H̃⁻¹ − I‖_F`
    pub fn consistency_error(&self) -> f64 {
        let n = self.dim();
        (self.h_tilde.as_matrix() * self.h_tilde_inv.as_matrix() - nalgebra::DMatrix::identity(n, n))
            .norm()
    }

    fn debug_check(&self) {
        debug_assert!(
            self.consistency_error() <= CONSISTENCY_TOLERANCE * self.dim() as f64 * 1e4
                || !self.h_tilde.is_finite(),
            "preconditioner pair drifted: {:e}",
            self.consistency_error()
        );
    }

    /// `H̃ + α w wᵀ` with `H̃⁻¹` updated by Sherman–Morrison; requires `1 + α wᵀH̃⁻¹w > 0`.
    pub(crate) fn rank_one(&self, w: &Vector, alpha: f64) -> Result<Self> {
        let hw = self.apply_inv(w);
        let denom = 1.0 + alpha * w.dot(&hw);
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::NotPositiveDefinite {
                index: 0,
                pivot: denom,
            });
        }
        let next = Preconditioner {
            h_tilde: self.h_tilde.rank_one_update(w, alpha),
            h_tilde_inv: self.h_tilde_inv.rank_one_update(&hw, -alpha / denom),
        };
        next.debug_check();
        Ok(next)
    }
}

/// Which side of the spectrum of `H̃⁻¹H` the failing residual exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateType {
    /// `H̃` is too large along some direction: downdate.
    One,
    /// `H̃` is too small along some direction: update.
    Two,
}

impl CertificateType {
    pub fn as_u8(self) -> u8 {
        match self {
            CertificateType::One => 1,
            CertificateType::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    Progress(Vector),
    PreconditionerUpdated(Preconditioner, CertificateType),
    Converged(Vector),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    pub step_size: f64,
    /// `‖r‖²_{H̃⁻¹}` before the step.
    pub residual_before_sq: f64,
    /// `‖r′‖²_{H̃⁻¹}` of the candidate step, measured with the old `H̃`.
    pub residual_after_sq: f64,
    /// `‖r‖²_{H̃⁻¹} / ‖H̃⁻¹r‖²_H`
    pub type1_ratio: f64,
    /// `‖H H̃⁻¹r‖²_{H̃⁻¹} / ‖H̃⁻¹r‖²_H`
    pub type2_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub kind: StepKind,
    pub diagnostics: StepDiagnostics,
}

/// The rank-1 update certified by residual `r`.
///
/// Type 1: `H̃′ = H̃ − rrᵀ/(‖z‖²_H + rᵀz)`, type 2: `H̃′ = H̃ + (Hz)(Hz)ᵀ/‖z‖²_H`,
/// where `z = H̃⁻¹r`.
pub fn update_preconditioner(
    p: &Preconditioner,
    h: &SymMatrix,
    r: &Vector,
    cert: CertificateType,
) -> Result<Preconditioner> {
    check_dim(p.dim(), h.dim())?;
    check_dim(p.dim(), r.len())?;
    let z = p.apply_inv(r);
    let hz = h.mul_vec(&z);
    let a = z.dot(&hz);
    if !(a > 0.0) {
        return Err(Error::NotPositiveDefinite { index: 0, pivot: a });
    }
    match cert {
        CertificateType::One => {
            let denom = a + r.dot(&z);
            p.rank_one(r, -1.0 / denom)
        }
        CertificateType::Two => p.rank_one(&hz, 1.0 / a),
    }
}

/// Residual-minimizing step size `‖z‖²_H / ‖Hz‖²_{H̃⁻¹}` along `z = H̃⁻¹r`.
pub fn exact_step_size(h: &SymMatrix, p: &Preconditioner, r: &Vector) -> f64 {
    let z = p.apply_inv(r);
    let hz = h.mul_vec(&z);
    z.dot(&hz) / p.dual_norm_sq(&hz)
}

/// One Richardson step with preconditioner `H̃`, or a preconditioner update when the
/// step fails to shrink `‖r‖²_{H̃⁻¹}` by `1 − β`.
pub fn step_or_update(
    h: &SymMatrix,
    p: &Preconditioner,
    b: &Vector,
    x: &Vector,
    beta: f64,
) -> Result<StepOutcome> {
    check_dim(h.dim(), p.dim())?;
    check_dim(h.dim(), b.len())?;
    check_dim(h.dim(), x.len())?;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta = {beta} not in (0, 1)")));
    }
    let r = b - h.mul_vec(x);
    step_from_residual(h, p, &r, x, beta)
}

fn step_from_residual(
    h: &SymMatrix,
    p: &Preconditioner,
    r: &Vector,
    x: &Vector,
    beta: f64,
) -> Result<StepOutcome> {
    if r.iter().all(|&v| v == 0.0) {
        return Ok(StepOutcome {
            kind: StepKind::Converged(x.clone()),
            diagnostics: StepDiagnostics::default(),
        });
    }
    let z = p.apply_inv(r);
    let hz = h.mul_vec(&z);
    let a = z.dot(&hz);
    let r_sq = r.dot(&z).max(0.0);
    let hz_sq = p.dual_norm_sq(&hz);
    if !(a > 0.0) || !(hz_sq > 0.0) {
        return Err(Error::NotPositiveDefinite { index: 0, pivot: a });
    }
    let step = a / hz_sq;
    let r_next = r - &hz * step;
    let r_next_sq = p.dual_norm_sq(&r_next);
    let diagnostics = StepDiagnostics {
        step_size: step,
        residual_before_sq: r_sq,
        residual_after_sq: r_next_sq,
        type1_ratio: r_sq / a,
        type2_ratio: hz_sq / a,
    };
    if r_next_sq <= (1.0 - beta) * r_sq {
        return Ok(StepOutcome {
            kind: StepKind::Progress(x + z * step),
            diagnostics,
        });
    }
    let cert = if diagnostics.type1_ratio >= 1.0 / beta.sqrt() {
        CertificateType::One
    } else {
        CertificateType::Two
    };
    let next = update_preconditioner(p, h, r, cert)?;
    Ok(StepOutcome {
        kind: StepKind::PreconditionerUpdated(next, cert),
        diagnostics,
    })
}

#[derive(Debug, Clone)]
pub struct LinearOptions {
    pub eps: f64,
    pub beta: f64,
    /// Record exact `ln ℰ(H̃⁻¹H)` in every trace event.
    pub record_excentricity: bool,
    /// Fail with `IterationCapExceeded` once the iteration bound is passed.
    pub enforce_bound: bool,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions {
            eps: 1e-8,
            beta: 0.5,
            record_excentricity: false,
            enforce_bound: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vector,
    pub iterations: usize,
    pub updates: usize,
    /// `‖b − Hx‖₂` at exit.
    pub residual: f64,
    /// `‖b − Hx₀‖₂`
    pub initial_residual: f64,
    /// `100 (ln ℰ(H) + ln 1/eps)`
    pub iteration_bound: f64,
    pub preconditioner: Preconditioner,
    pub trace: Vec<TraceEvent>,
}

/// What an observer sees for each step of [`solve_linear_observed`].
pub struct StepContext<'a> {
    pub iteration: usize,
    pub h: &'a SymMatrix,
    pub before: &'a Preconditioner,
    pub x: &'a Vector,
    pub outcome: &'a StepOutcome,
}

/// Eigenvalues below this fraction of `‖H‖` are treated as a null space.
pub const NULL_SPACE_THRESHOLD: f64 = 1e-10;

pub fn solve_linear(h: &SymMatrix, b: &Vector, x0: &Vector, eps: f64) -> Result<LinearSolution> {
    solve_linear_with(
        h,
        b,
        x0,
        &LinearOptions {
            eps,
            ..LinearOptions::default()
        },
    )
}

pub fn solve_linear_with(
    h: &SymMatrix,
    b: &Vector,
    x0: &Vector,
    opts: &LinearOptions,
) -> Result<LinearSolution> {
    solve_linear_observed(h, b, x0, opts, |_| {})
}

/// Starting from `H̃ = I`, iterates [`step_or_update`] until
/// `‖b − Hx‖₂ ≤ eps ‖b − Hx₀‖₂`.
///
/// A singular PSD `H` is handled by solving on its range; the null-space part of `x₀`
/// is carried through unchanged and the null-space part of `b` is ignored.
pub fn solve_linear_observed(
    h: &SymMatrix,
    b: &Vector,
    x0: &Vector,
    opts: &LinearOptions,
    mut observer: impl FnMut(&StepContext),
) -> Result<LinearSolution> {
    check_dim(h.dim(), b.len())?;
    check_dim(h.dim(), x0.len())?;
    if !(opts.eps > 0.0 && opts.eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps = {} not in (0, 1)", opts.eps)));
    }
    if Cholesky::factor(h).is_ok() {
        return solve_pd(h, b, x0, opts, &mut observer);
    }

    let eig = sym_eigen(h)?;
    let threshold = NULL_SPACE_THRESHOLD * eig.max().abs().max(eig.min().abs());
    if eig.min() < -threshold {
        return Err(Error::NotPositiveDefinite {
            index: 0,
            pivot: eig.min(),
        });
    }
    let range: Vec<usize> = (0..h.dim()).filter(|&i| eig.values[i] > threshold).collect();
    if range.is_empty() {
        return Err(Error::InvalidArgument("matrix is numerically zero".into()));
    }
    let v = eig.vectors.select_columns(&range);
    let h_r = h.congruence(&v);
    let b_r = v.transpose() * b;
    let x0_r = v.transpose() * x0;
    let sol = solve_pd(&h_r, &b_r, &x0_r, opts, &mut observer)?;
    let x = &v * &sol.x + (x0 - &v * &x0_r);
    Ok(LinearSolution {
        x,
        preconditioner: Preconditioner::new(
            SymMatrix::symmetrize(&v * sol.preconditioner.h_tilde().as_matrix() * v.transpose())
                .add(&SymMatrix::symmetrize(
                    nalgebra::DMatrix::identity(h.dim(), h.dim()) - &v * v.transpose(),
                )),
        )?,
        ..sol
    })
}

fn solve_pd(
    h: &SymMatrix,
    b: &Vector,
    x0: &Vector,
    opts: &LinearOptions,
    observer: &mut dyn FnMut(&StepContext),
) -> Result<LinearSolution> {
    let n = h.dim();
    let iteration_bound = 100.0 * (excentricity_log(h)?.value() + (1.0 / opts.eps).ln());
    let initial_residual = (b - h.mul_vec(x0)).norm();
    let target = opts.eps * initial_residual;

    let mut p = Preconditioner::identity(n);
    let mut x = x0.clone();
    let mut r = b - h.mul_vec(&x);
    let mut iterations = 0;
    let mut updates = 0;
    let mut trace = Vec::new();

    while r.norm() > target {
        if opts.enforce_bound && iterations as f64 >= iteration_bound {
            return Err(Error::IterationCapExceeded {
                iterations,
                bound: iteration_bound,
            });
        }
        let outcome = step_from_residual(h, &p, &r, &x, opts.beta)?;
        observer(&StepContext {
            iteration: iterations,
            h,
            before: &p,
            x: &x,
            outcome: &outcome,
        });
        let d = outcome.diagnostics;
        let mut event = TraceEvent::new(Phase::Linear, iterations);
        event.residual_before = d.residual_before_sq.sqrt();
        event.residual_after = d.residual_after_sq.sqrt();
        event.step_size = Some(d.step_size);
        iterations += 1;
        match outcome.kind {
            StepKind::Progress(next) => {
                x = next;
                r = b - h.mul_vec(&x);
            }
            StepKind::PreconditionerUpdated(next, cert) => {
                p = next;
                updates += 1;
                event.certificate = Some(cert.as_u8());
                event.residual_after = p.dual_norm_sq(&r).sqrt();
                event.step_size = None;
            }
            StepKind::Converged(next) => {
                x = next;
                r = b - h.mul_vec(&x);
            }
        }
        if opts.record_excentricity {
            event.excentricity_log = Some(excentricity_pair(p.h_tilde_inv(), h)?.value());
        }
        trace.push(event);
        if r.iter().all(|&v| v == 0.0) {
            break;
        }
    }

    Ok(LinearSolution {
        residual: r.norm(),
        x,
        iterations,
        updates,
        initial_residual,
        iteration_bound,
        preconditioner: p,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excentricity::{certificate_downdate_ratio, rank1_update_ratio};
    use crate::linalg::sqrt_and_inv_sqrt;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn e1() -> Vector {
        v(&[1.0, 0.0])
    }

    #[test]
    fn update_examples() {
        let id = SymMatrix::identity(2);
        let p = Preconditioner::identity(2);
        let one = update_preconditioner(&p, &id, &e1(), CertificateType::One).unwrap();
        assert_eq!(one.h_tilde(), &SymMatrix::from_diagonal(&[0.5, 1.0]));
        assert_eq!(one.h_tilde_inv(), &SymMatrix::from_diagonal(&[2.0, 1.0]));
        let two = update_preconditioner(&p, &id, &e1(), CertificateType::Two).unwrap();
        assert_eq!(two.h_tilde(), &SymMatrix::from_diagonal(&[2.0, 1.0]));
        assert_eq!(two.h_tilde_inv(), &SymMatrix::from_diagonal(&[0.5, 1.0]));
    }

    #[test]
    fn one_step_with_perfect_preconditioner() {
        let h = SymMatrix::identity(2);
        let out = step_or_update(&h, &Preconditioner::identity(2), &v(&[1.0, 1.0]), &Vector::zeros(2), 0.5)
            .unwrap();
        assert_eq!(out.kind, StepKind::Progress(v(&[1.0, 1.0])));
        assert_eq!(out.diagnostics.residual_after_sq, 0.0);
    }

    #[test]
    fn step_size_example() {
        let h = SymMatrix::from_diagonal(&[1.0, 100.0]);
        let out = step_or_update(&h, &Preconditioner::identity(2), &v(&[1.0, 1.0]), &Vector::zeros(2), 0.25)
            .unwrap();
        let d = out.diagnostics;
        assert_close!(d.step_size, 101.0 / 10001.0, 1e-15);
        assert_close!(d.residual_after_sq / d.residual_before_sq, 0.49, 1e-4);
        assert!(matches!(out.kind, StepKind::Progress(_)));
    }

    #[test]
    fn zero_residual_converges() {
        let h = SymMatrix::from_diagonal(&[2.0, 3.0]);
        let x = v(&[0.5, 1.0]);
        let out = step_or_update(&h, &Preconditioner::identity(2), &v(&[1.0, 3.0]), &x, 0.5).unwrap();
        assert_eq!(out.kind, StepKind::Converged(x));
    }

    /// Search over extreme 2×2 diagonals for a failing progress test; the certified
    /// eigenvalue bound must then hold for `H̃⁻¹H`.
    #[test]
    fn certificate_found_by_search() {
        let beta = 0.5;
        let mut found = 0;
        for k in 0..40 {
            let kappa = 10f64.powi(k % 8 + 1);
            let h = SymMatrix::from_diagonal(&[1.0, kappa]);
            let theta = k as f64 * 0.15;
            let b = v(&[theta.cos(), theta.sin()]);
            let out = step_or_update(&h, &Preconditioner::identity(2), &b, &Vector::zeros(2), beta).unwrap();
            if let StepKind::PreconditionerUpdated(_, cert) = out.kind {
                found += 1;
                let eig = sym_eigen(&h).unwrap();
                match cert {
                    CertificateType::One => assert!(1.0 / eig.min() >= 1.0 / beta.sqrt()),
                    CertificateType::Two => assert!(eig.max() >= 1.0 / beta.sqrt()),
                }
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn diagonal_fixture_converges() {
        let h = SymMatrix::from_diagonal(&[1.0, 10.0, 100.0, 1000.0]);
        let b = Vector::from_element(4, 1.0);
        let sol = solve_linear(&h, &b, &Vector::zeros(4), 1e-8).unwrap();
        assert!(sol.residual <= 1e-8 * b.norm());
        assert!((sol.iterations as f64) <= sol.iteration_bound);
    }

    #[test]
    fn identity_converges_in_one_step() {
        let h = SymMatrix::identity(3);
        let sol = solve_linear(&h, &v(&[1.0, -2.0, 3.0]), &Vector::zeros(3), 1e-8).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.updates, 0);
    }

    #[test]
    fn singular_system_solved_on_range() {
        let h = SymMatrix::from_diagonal(&[2.0, 5.0, 0.0]);
        let b = v(&[2.0, 5.0, 7.0]);
        let x0 = v(&[0.0, 0.0, 4.0]);
        let sol = solve_linear(&h, &b, &x0, 1e-10).unwrap();
        assert_close!(sol.x[0], 1.0, 1e-9);
        assert_close!(sol.x[1], 1.0, 1e-9);
        assert_close!(sol.x[2], 4.0, 1e-12);
    }

    fn random_spd(seed: u64, n: usize, log_cond: f64) -> SymMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        let d = nalgebra::DVector::from_fn(n, |i, _| {
            10f64.powf(log_cond * (i as f64 / (n - 1).max(1) as f64 - 0.5))
        });
        SymMatrix::symmetrize(&q * nalgebra::DMatrix::from_diagonal(&d) * q.transpose())
    }

    #[test]
    fn updates_obey_excentricity_laws() {
        // Each update acts on X = H^{1/2} H̃⁻¹ H^{1/2} as a rank-1 change, so the exact
        // ℰ ratio must match the closed-form laws; the norm change of H̃ stays within
        // [1, (2/ratio)²].
        let h = random_spd(11, 8, 4.0);
        let b = Vector::from_element(8, 1.0);
        let (h_half, _) = sqrt_and_inv_sqrt(&h).unwrap();
        let mut checked = 0;
        solve_linear_observed(&h, &b, &Vector::zeros(8), &LinearOptions::default(), |ctx| {
            let StepKind::PreconditionerUpdated(next, cert) = &ctx.outcome.kind else {
                return;
            };
            checked += 1;
            let before = excentricity_pair(ctx.before.h_tilde_inv(), &h).unwrap();
            let direct = excentricity_pair(next.h_tilde_inv(), &h).unwrap().ratio_from(before);

            let x = ctx.before.h_tilde_inv().congruence(h_half.as_matrix());
            let r = &b - h.mul_vec(ctx.x);
            let z = ctx.before.apply_inv(&r);
            let u = h_half.mul_vec(&z) / h.quad_form(&z).sqrt();
            let (half, inv_half) = sqrt_and_inv_sqrt(ctx.before.h_tilde()).unwrap();
            let (predicted, change) = match cert {
                // H̃′⁻¹ = H̃⁻¹ + zzᵀ/a  ⇒  X′ = X + uuᵀ
                CertificateType::One => (
                    rank1_update_ratio(&x, &u).unwrap(),
                    next.h_tilde_inv().congruence(half.as_matrix()),
                ),
                // H̃′ = H̃ + wwᵀ/a  ⇒  X′⁻¹ = X⁻¹ + uuᵀ
                CertificateType::Two => (
                    certificate_downdate_ratio(&x, &u).unwrap(),
                    next.h_tilde().congruence(inv_half.as_matrix()),
                ),
            };
            assert!((direct - predicted).abs() <= 1e-8 * direct, "{direct} vs {predicted}");
            let eig = sym_eigen(&change).unwrap();
            assert!(eig.min() >= 1.0 - 1e-8);
            assert!(eig.max() <= (2.0 / direct).powi(2) * (1.0 + 1e-8));
        })
        .unwrap();
        assert!(checked > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn progress_or_certificate(seed in 0u64..1000, log_cond in 0.5f64..5.0, beta in 0.05f64..0.95) {
            let n = 6;
            let h = random_spd(seed, n, log_cond);
            let b = Vector::from_fn(n, |i, _| ((i as u64 * 7 + seed) % 5) as f64 - 2.0);
            let p = Preconditioner::identity(n);
            let out = step_or_update(&h, &p, &b, &Vector::zeros(n), beta).unwrap();
            let d = out.diagnostics;
            match out.kind {
                StepKind::Progress(_) => prop_assert!(d.residual_after_sq <= (1.0 - beta) * d.residual_before_sq),
                StepKind::PreconditionerUpdated(next, _) => {
                    prop_assert!(d.type1_ratio.max(d.type2_ratio) >= 1.0 / beta.sqrt() - 1e-9);
                    prop_assert!(next.consistency_error() <= 1e-8 * n as f64);
                }
                StepKind::Converged(_) => {}
            }
        }
    }
}
