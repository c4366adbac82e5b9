//! Seeded randomized invariant checks, runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::barriers::{nu_check, sandwich_check, BoxBarrier};
use crate::excentricity::{eig_ineq_check, excentricity_log, rank1_update_ratio};
use crate::ipm::{robust_step_or_update, IpmConfig};
use crate::linalg::{cholesky_logdet, sherman_morrison, sym_eigen, SymMatrix, Vector};
use crate::linear::{solve_linear, step_or_update, Preconditioner, StepKind};
use crate::oracle::{hvp_estimate, quadratic_oracle, EstimatorConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

const CASES: usize = 50;

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// `MᵀM + shift·I` with uniform entries; condition number grows as `shift` shrinks.
fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> SymMatrix {
    let m = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::symmetrize(m.transpose() * &m + nalgebra::DMatrix::identity(n, n) * shift)
}

fn suite(name: &'static str, seed: u64, mut case: impl FnMut(&mut ChaCha8Rng) -> bool) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let failures = (0..CASES).filter(|_| !case(&mut rng)).count();
    SuiteReport {
        name,
        cases: CASES,
        failures,
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![
        suite("sherman-morrison", seed, |rng| {
            let n = rng.random_range(1..7);
            let a = random_spd(rng, n, 1.0);
            let u = random_vector(rng, n);
            let Ok(inv) = sherman_morrison(&a.inverse().unwrap(), &u, &u) else {
                return false;
            };
            let direct = a.add(&SymMatrix::outer(&u)).inverse().unwrap();
            (inv - direct.as_matrix()).amax() <= 1e-10
        }),
        suite("logdet-eigen", seed + 1, |rng| {
            let n = rng.random_range(1..8);
            let a = random_spd(rng, n, 0.1);
            let eig: f64 = sym_eigen(&a).unwrap().values.iter().map(|v| v.ln()).sum();
            rel_close(cholesky_logdet(&a).unwrap(), eig, 1e-10)
        }),
        suite("excentricity", seed + 2, |rng| {
            let n = rng.random_range(1..6);
            let x = random_spd(rng, n, 0.05);
            let u = random_vector(rng, n);
            let e = excentricity_log(&x).unwrap().value();
            let e_inv = excentricity_log(&x.inverse().unwrap()).unwrap().value();
            let after = excentricity_log(&x.add(&SymMatrix::outer(&u))).unwrap().value();
            let law = rank1_update_ratio(&x, &u).unwrap();
            e >= -1e-12 && rel_close(e, e_inv, 1e-8) && rel_close((after - e).exp(), law, 1e-8)
        }),
        suite("eig-inequality", seed + 3, |rng| {
            let n = rng.random_range(1..6);
            let a = random_spd(rng, n, 0.01);
            let d = random_spd(rng, n, 0.01).scale(rng.random_range(0.1..3.0));
            eig_ineq_check(&a, &d).unwrap()
        }),
        suite("linear-progress", seed + 4, |rng| {
            let n = rng.random_range(1..6);
            let h = random_spd(rng, n, 0.1);
            let p = Preconditioner::new(random_spd(rng, n, 0.5)).unwrap();
            let b = random_vector(rng, n);
            let x = random_vector(rng, n);
            let Ok(out) = step_or_update(&h, &p, &b, &x, 0.5) else {
                return false;
            };
            match out.kind {
                StepKind::Progress(_) | StepKind::Converged(_) => {
                    out.diagnostics.residual_after_sq <= 0.5 * out.diagnostics.residual_before_sq * (1.0 + 1e-12)
                }
                StepKind::PreconditionerUpdated(next, _) => next.h_tilde().cholesky().is_ok(),
            }
        }),
        suite("linear-solve", seed + 5, |rng| {
            let n = rng.random_range(1..6);
            let h = random_spd(rng, n, 0.05);
            let b = random_vector(rng, n);
            let Ok(sol) = solve_linear(&h, &b, &Vector::zeros(n), 1e-8) else {
                return false;
            };
            sol.residual <= 1e-8 * sol.initial_residual * 10.0 && (sol.iterations as f64) < sol.iteration_bound
        }),
        suite("quadratic-estimator", seed + 6, |rng| {
            let n = rng.random_range(1..6);
            let h = random_spd(rng, n, 0.1);
            let o = quadratic_oracle(h.clone());
            let y = Vector::zeros(n);
            let v = random_vector(rng, n);
            let cfg = EstimatorConfig {
                tau_override: Some(1.0),
                ..EstimatorConfig::default()
            };
            let est = hvp_estimate(&o, &y, &v, &cfg).unwrap();
            (est - h.mul_vec(&v)).amax() <= 1e-12 * (1.0 + h.max_abs() * v.amax())
        }),
        suite("robust-update-ratio", seed + 7, |rng| {
            let n = rng.random_range(2..6);
            let h = random_spd(rng, n, 0.1);
            let o = quadratic_oracle(h.clone());
            let cfg = IpmConfig {
                tau0: 1.0,
                ..IpmConfig::default()
            };
            let p = Preconditioner::new(random_spd(rng, n, 0.5)).unwrap();
            let y = Vector::zeros(n);
            let b = random_vector(rng, n);
            let x = random_vector(rng, n);
            let before = crate::excentricity::excentricity_pair(p.h_tilde_inv(), &h).unwrap();
            match robust_step_or_update(&o, &y, &p, &b, &x, &cfg) {
                Ok(out) => match out.kind {
                    StepKind::PreconditionerUpdated(next, _) => {
                        let after = crate::excentricity::excentricity_pair(next.h_tilde_inv(), &h).unwrap();
                        after.ratio_from(before) <= cfg.update_ratio_bound() * (1.0 + 1e-9)
                    }
                    _ => true,
                },
                Err(_) => false,
            }
        }),
        suite("box-barrier", seed + 8, |rng| {
            let n = rng.random_range(1..6);
            let b = BoxBarrier::unit(n);
            let y = Vector::from_fn(n, |_, _| rng.random_range(0.05..0.95));
            let nu = nu_check(&b, &y).unwrap();
            let h = b.hessian(&y).unwrap();
            let dir = random_vector(rng, n);
            let len = rng.random_range(0.0..0.9) / h.quad_form(&dir).sqrt();
            let s = sandwich_check(&b, &y, &(dir * len)).unwrap();
            nu <= 2.0 * n as f64 * (1.0 + 1e-12) && s.holds(1e-9)
        }),
    ]
}
