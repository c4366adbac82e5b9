#![allow(dead_code)]

use gradient_ipm::barriers::SdpBarrier;
use gradient_ipm::{SymMatrix, Vector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q()
}

/// `Q diag(λ) Qᵀ` with `log₁₀ λ` spread over `[−k/2, k/2]`, endpoints included, so the
/// condition number is exactly `10^k`.
pub fn spd_with_condition(rng: &mut ChaCha8Rng, n: usize, log10_cond: f64) -> SymMatrix {
    let q = random_orthogonal(rng, n);
    let lambda: Vec<f64> = (0..n)
        .map(|i| {
            let t = match i {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.0..1.0),
            };
            10f64.powf(log10_cond * (t - 0.5))
        })
        .collect();
    let d = DMatrix::from_diagonal(&Vector::from_vec(lambda));
    SymMatrix::symmetrize(&q * d * q.transpose())
}

/// `MᵀM + shift·I` with uniform entries.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> SymMatrix {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::symmetrize(m.transpose() * &m + DMatrix::identity(n, n) * shift)
}

pub fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::symmetrize(&g + g.transpose())
}

/// Scaled log-det barrier for `I − Σ yᵢAᵢ ⪰ 0` with a strictly feasible `y`.
pub fn random_sdp_point(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (SdpBarrier, Vector) {
    let a: Vec<_> = (0..m).map(|_| random_sym(rng, n)).collect();
    let barrier = SdpBarrier::new(a, SymMatrix::identity(n)).unwrap();
    loop {
        let y = random_vector(rng, m) * 0.3;
        if gradient_ipm::oracle::GradientOracle::contains(&barrier, &y) {
            return (barrier, y);
        }
    }
}

/// Random direction with local norm `t`.
pub fn direction(rng: &mut ChaCha8Rng, h: &SymMatrix, t: f64) -> Vector {
    let d = random_vector(rng, h.dim());
    let norm = h.quad_form(&d).sqrt();
    d * (t / norm)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
