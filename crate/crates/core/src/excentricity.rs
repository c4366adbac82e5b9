//! The excentricity potential `ℰ(X) = 2⁻ⁿ det(X + I) / √det X` and its update laws.
//!
//! `ℰ(X) ≥ 1` with equality iff `X = I`, so it measures how far a preconditioner
//! `H̃` is from `H` through `X = H̃⁻¹H`. All values are kept in log domain.

use crate::error::{Error, Result};
use crate::linalg::{check_dim, sym_eigen, Cholesky, SymMatrix, Vector};

/// `ln ℰ(X)` for some positive-definite `X`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExcentricityLog(pub f64);

impl ExcentricityLog {
    pub fn value(self) -> f64 {
        self.0
    }

    /// `ℰ(self) / ℰ(before)`
    pub fn ratio_from(self, before: ExcentricityLog) -> f64 {
        (self.0 - before.0).exp()
    }
}

/// `ln det(X + I) − ½ ln det X − n ln 2`
pub fn excentricity_log(x: &SymMatrix) -> Result<ExcentricityLog> {
    let n = x.dim();
    let logdet_x = Cholesky::factor(x)?.log_det();
    let logdet_xi = Cholesky::factor(&x.add(&SymMatrix::identity(n)))?.log_det();
    Ok(ExcentricityLog(
        logdet_xi - 0.5 * logdet_x - n as f64 * std::f64::consts::LN_2,
    ))
}

/// `ln ℰ(H̃⁻¹ H)`, evaluated on the symmetric similar matrix `Lᵀ H̃⁻¹ L` with `H = L Lᵀ`.
pub fn excentricity_pair(h_tilde_inv: &SymMatrix, h: &SymMatrix) -> Result<ExcentricityLog> {
    check_dim(h.dim(), h_tilde_inv.dim())?;
    let l = Cholesky::factor(h)?;
    excentricity_log(&h_tilde_inv.congruence(l.l()))
}

/// `ℰ(X + uuᵀ) / ℰ(X) = (1 + uᵀ(I + X)⁻¹u) / √(1 + uᵀX⁻¹u)`
pub fn rank1_update_ratio(x: &SymMatrix, u: &Vector) -> Result<f64> {
    check_dim(x.dim(), u.len())?;
    let n = x.dim();
    let x_chol = Cholesky::factor(x)?;
    let xi_chol = Cholesky::factor(&x.add(&SymMatrix::identity(n)))?;
    Ok((1.0 + xi_chol.inv_quad_form(u)) / (1.0 + x_chol.inv_quad_form(u)).sqrt())
}

/// `ℰ(X − XuuᵀX/(1 + uᵀXu)) / ℰ(X)`.
///
/// The downdated matrix is `(X⁻¹ + uuᵀ)⁻¹`, so by inverse invariance the ratio
/// equals `(1 + uᵀ(I + X⁻¹)⁻¹u) / √(1 + uᵀXu)` with `(I + X⁻¹)⁻¹ = X(X + I)⁻¹`.
pub fn certificate_downdate_ratio(x: &SymMatrix, u: &Vector) -> Result<f64> {
    check_dim(x.dim(), u.len())?;
    let n = x.dim();
    Cholesky::factor(x)?;
    let xi_chol = Cholesky::factor(&x.add(&SymMatrix::identity(n)))?;
    let xu = x.mul_vec(u);
    // uᵀ X (X + I)⁻¹ u
    let num = 1.0 + xu.dot(&xi_chol.solve(u));
    let den = (1.0 + u.dot(&xu)).sqrt();
    Ok(num / den)
}

/// Slack of `ln det(AD + I) ≤ ln det(A + I) + ln det(D_{≥1})`, where `D_{≥1}`
/// keeps only the eigenvalues of `D` that are at least one.
///
/// `det(AD + I)` is evaluated as `det(LᵀDL + I)` with `A = LLᵀ`.
pub fn eig_ineq_slack(a: &SymMatrix, d: &SymMatrix) -> Result<f64> {
    check_dim(a.dim(), d.dim())?;
    let n = a.dim();
    let id = SymMatrix::identity(n);
    let la = Cholesky::factor(a)?;
    Cholesky::factor(d)?;
    let lhs = Cholesky::factor(&d.congruence(la.l()).add(&id))?.log_det();
    let a_plus = Cholesky::factor(&a.add(&id))?.log_det();
    let d_geq1: f64 = sym_eigen(d)?
        .values
        .iter()
        .filter(|&&l| l >= 1.0)
        .map(|l| l.ln())
        .sum();
    Ok(a_plus + d_geq1 - lhs)
}

/// Tolerance for [`eig_ineq_check`].
pub const EIG_INEQ_SLACK: f64 = -1e-9;

pub fn eig_ineq_check(a: &SymMatrix, d: &SymMatrix) -> Result<bool> {
    Ok(eig_ineq_slack(a, d)? >= EIG_INEQ_SLACK)
}

/// `½ ln(det B_{≥1} / det B_{<1}) = ½ Σ |ln λᵢ(B)|`, the log of the factor by which
/// multiplying with `B` can inflate excentricity.
pub fn split_log_det_ratio(b: &SymMatrix) -> Result<f64> {
    let eig = sym_eigen(b)?;
    if eig.min() <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            index: 0,
            pivot: eig.min(),
        });
    }
    Ok(0.5 * eig.values.iter().map(|l| l.ln().abs()).sum::<f64>())
}

/// Excentricity of `X` from its eigenvalues: `Σ ln((λ + 1)/(2√λ))`.
pub fn excentricity_from_eigenvalues(values: impl IntoIterator<Item = f64>) -> f64 {
    values
        .into_iter()
        .map(|l| ((l + 1.0) / (2.0 * l.sqrt())).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
        let g = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::symmetrize(&g * g.transpose() + nalgebra::DMatrix::identity(n, n) * 0.1)
    }

    #[test]
    fn diagonal_examples() {
        assert_close!(excentricity_log(&SymMatrix::identity(3)).unwrap().value(), 0.0, 1e-15);
        let x = SymMatrix::from_diagonal(&[4.0, 0.25]);
        assert_close!(excentricity_log(&x).unwrap().value(), 1.5625f64.ln(), 1e-12);
        let x = SymMatrix::from_diagonal(&[9.0, 1.0]);
        assert_close!(excentricity_log(&x).unwrap().value(), (20.0f64 / 12.0).ln(), 1e-12);
    }

    #[test]
    fn pair_examples() {
        let h = SymMatrix::from_diagonal(&[4.0, 0.25]);
        let direct = excentricity_log(&h).unwrap().value();
        let pair = excentricity_pair(&SymMatrix::identity(2), &h).unwrap().value();
        assert_close!(pair, direct, 1e-12);
        assert_close!(pair, 0.446287, 1e-6);

        let h = SymMatrix::from_row_major(2, &[3.0, 1.0, 1.0, 2.0]).unwrap();
        let h_inv = h.inverse().unwrap();
        assert_close!(excentricity_pair(&h_inv, &h).unwrap().value(), 0.0, 1e-12);
    }

    #[test]
    fn update_ratio_examples() {
        let x = SymMatrix::from_diagonal(&[3.0, 1.0]);
        assert_eq!(rank1_update_ratio(&x, &Vector::zeros(2)).unwrap(), 1.0);
        let e1 = Vector::from_column_slice(&[1.0, 0.0]);
        assert_close!(
            rank1_update_ratio(&SymMatrix::identity(2), &e1).unwrap(),
            1.5 / 2f64.sqrt(),
            1e-14
        );
        assert_close!(
            rank1_update_ratio(&x, &e1).unwrap(),
            1.25 / (4.0f64 / 3.0).sqrt(),
            1e-14
        );
    }

    #[test]
    fn downdate_ratio_examples() {
        let e1 = Vector::from_column_slice(&[1.0, 0.0]);
        assert_close!(
            certificate_downdate_ratio(&SymMatrix::identity(2), &e1).unwrap(),
            1.5 / 2f64.sqrt(),
            1e-14
        );
        let x = SymMatrix::from_diagonal(&[9.0, 1.0]);
        let r = certificate_downdate_ratio(&x, &e1).unwrap();
        // X' = diag(9/10, 1): ℰ(X') = 1.9·2 / (4·√0.9), ℰ(X) = 20/12
        let by_hand = (1.9 * 2.0 / (4.0 * 0.9f64.sqrt())) / (20.0 / 12.0);
        assert_close!(r, by_hand, 1e-13);
        assert_close!(r, 0.600832, 1e-6);
        assert!(r <= 2.0 / 10f64.sqrt());
    }

    #[test]
    fn downdate_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..6);
            let x = random_pd(&mut rng, n);
            let mut u = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            u /= u.norm();
            let xu = x.mul_vec(&u);
            let down = x.rank_one_update(&xu, -1.0 / (1.0 + u.dot(&xu)));
            let direct = excentricity_log(&down)
                .unwrap()
                .ratio_from(excentricity_log(&x).unwrap());
            let r = certificate_downdate_ratio(&x, &u).unwrap();
            assert!((r - direct).abs() <= 1e-9 * direct, "{r} vs {direct}");
            let gamma = u.dot(&xu);
            assert!(r <= 2.0 / (1.0 + gamma).sqrt() + 1e-12);
        }
    }

    #[test]
    fn eig_ineq_equalities() {
        let n = 3;
        let id = SymMatrix::identity(n);
        assert_close!(eig_ineq_slack(&id, &id).unwrap(), 0.0, 1e-12);
        let a = SymMatrix::from_row_major(3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0]).unwrap();
        assert_close!(eig_ineq_slack(&a, &id).unwrap(), 0.0, 1e-12);
        assert!(eig_ineq_check(&a, &id).unwrap());
    }

    #[test]
    fn eig_ineq_rejects_indefinite() {
        let a = SymMatrix::from_row_major(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(eig_ineq_check(&a, &SymMatrix::identity(2)).is_err());
    }

    #[test]
    fn eigenvalue_formula_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_pd(&mut rng, 5);
        let eig = sym_eigen(&x).unwrap();
        assert_close!(
            excentricity_from_eigenvalues(eig.values.iter().copied()),
            excentricity_log(&x).unwrap().value(),
            1e-10
        );
    }

    fn pd_from_seed(seed: u64, n: usize) -> SymMatrix {
        random_pd(&mut ChaCha8Rng::seed_from_u64(seed), n)
    }

    proptest::proptest! {
        #[test]
        fn excentricity_at_least_one(seed in 0u64..10_000, n in 1usize..7) {
            proptest::prop_assert!(excentricity_log(&pd_from_seed(seed, n)).unwrap().value() >= -1e-12);
        }

        #[test]
        fn inverse_invariance(seed in 0u64..10_000, n in 1usize..7) {
            let x = pd_from_seed(seed, n);
            let a = excentricity_log(&x).unwrap().value();
            let b = excentricity_log(&x.inverse().unwrap()).unwrap().value();
            proptest::prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        }

        #[test]
        fn product_bound_on_commuting_diagonals(
            a in proptest::collection::vec(1e-3f64..1e3, 1..8),
            seed in 0u64..10_000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = a.iter().map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect();
            let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
            let lhs = excentricity_log(&SymMatrix::from_diagonal(&ab)).unwrap().value();
            let rhs = excentricity_log(&SymMatrix::from_diagonal(&a)).unwrap().value()
                + split_log_det_ratio(&SymMatrix::from_diagonal(&b)).unwrap();
            proptest::prop_assert!(rhs - lhs >= -1e-9, "{lhs} > {rhs}");
        }
    }
}
