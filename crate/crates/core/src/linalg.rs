//! Dense symmetric linear algebra.
//!
//! Everything above this module works with [`SymMatrix`] and [`Vector`]. Products
//! go through `nalgebra`; factorizations that carry tolerances the rest of the
//! crate relies on (Cholesky pivots, Sherman–Morrison denominators) live here.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Relative pivot tolerance for Cholesky: a pivot is accepted if it exceeds
/// `PIVOT_TOLERANCE * max_i a_ii`.
pub const PIVOT_TOLERANCE: f64 = 1e-13;

/// Default iteration cap for the symmetric eigensolver.
pub const EIGEN_MAX_ITERATIONS: usize = 10_000;

/// Dense symmetric matrix. Symmetry is exact: constructors either check it or
/// enforce it by averaging the two triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m` after checking exact symmetry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Wraps `m`, replacing it with `(m + mᵀ)/2`.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn from_row_major(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// `u uᵀ`
    pub fn outer(u: &Vector) -> Self {
        SymMatrix(u * u.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vector {
        self.0.diagonal()
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        &self.0 * v
    }

    /// `vᵀ M v`
    pub fn quad_form(&self, v: &Vector) -> f64 {
        v.dot(&(&self.0 * v))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        SymMatrix(&self.0 * alpha)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 - &other.0)
    }

    /// `self + alpha · w wᵀ`, kept exactly symmetric.
    pub fn rank_one_update(&self, w: &Vector, alpha: f64) -> Self {
        let n = self.dim();
        let mut m = self.0.clone();
        for j in 0..n {
            let wj = alpha * w[j];
            for i in j..n {
                let v = m[(i, j)] + w[i] * wj;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    /// Congruence `Bᵀ M B` for a square `B`, symmetrized.
    pub fn congruence(&self, b: &DMatrix<f64>) -> Self {
        SymMatrix::symmetrize(b.transpose() * &self.0 * b)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(self)
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        Ok(self.cholesky()?.inverse())
    }

    /// Trace of `self · other` for symmetric arguments (Frobenius inner product).
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    pub fn factor(a: &SymMatrix) -> Result<Self> {
        let n = a.dim();
        let m = a.as_matrix();
        let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max(m[(i, i)]));
        let tol = PIVOT_TOLERANCE * max_diag;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > tol) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `ln det A = 2 Σ ln l_ii`
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &Vector) -> Vector {
        let n = self.dim();
        let mut z = b.clone();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn solve_upper(&self, z: &Vector) -> Vector {
        let n = self.dim();
        let mut x = z.clone();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim();
        let mut inv = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = Vector::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        SymMatrix::symmetrize(inv)
    }

    /// `bᵀ A⁻¹ b`, evaluated as `‖L⁻¹ b‖²`.
    pub fn inv_quad_form(&self, b: &Vector) -> f64 {
        self.solve_lower(b).norm_squared()
    }
}

/// `ln det A` from the Cholesky pivots.
pub fn cholesky_logdet(a: &SymMatrix) -> Result<f64> {
    Ok(Cholesky::factor(a)?.log_det())
}

/// `‖v‖_M = √(vᵀ M v)`. Tiny negative quadratic forms from rounding clamp to 0.
pub fn weighted_norm(v: &Vector, m: &SymMatrix) -> Result<f64> {
    check_dim(m.dim(), v.len())?;
    Ok(m.quad_form(v).max(0.0).sqrt())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Relative threshold below which `|1 + vᵀA⁻¹u|` is treated as zero.
pub const SINGULAR_UPDATE_TOLERANCE: f64 = 1e-12;

/// Inverse of `A + u vᵀ` from `A⁻¹`:
/// `A⁻¹ − A⁻¹ u vᵀ A⁻¹ / (1 + vᵀ A⁻¹ u)`.
///
/// The result is symmetric only when `u ∥ v`, so it is returned as a plain matrix.
pub fn sherman_morrison(a_inv: &SymMatrix, u: &Vector, v: &Vector) -> Result<DMatrix<f64>> {
    check_dim(a_inv.dim(), u.len())?;
    check_dim(a_inv.dim(), v.len())?;
    let au = a_inv.mul_vec(u);
    let va = a_inv.mul_vec(v);
    let denom = 1.0 + v.dot(&au);
    let scale = 1.0 + u.norm() * va.norm();
    if denom.abs() <= SINGULAR_UPDATE_TOLERANCE * scale {
        return Err(Error::SingularUpdate { denominator: denom });
    }
    Ok(a_inv.as_matrix() - (&au * va.transpose()) / denom)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vector,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V f(Λ) Vᵀ`
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = DMatrix::from_diagonal(&self.values.map(f));
        SymMatrix::symmetrize(&self.vectors * d * self.vectors.transpose())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn sym_eigen(a: &SymMatrix) -> Result<SymEigen> {
    sym_eigen_capped(a, EIGEN_MAX_ITERATIONS)
}

pub fn sym_eigen_capped(a: &SymMatrix, max_iterations: usize) -> Result<SymEigen> {
    let eig = SymmetricEigen::try_new(a.as_matrix().clone(), f64::EPSILON, max_iterations)
        .ok_or(Error::NoConvergence {
            iterations: max_iterations,
        })?;
    let n = a.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok(SymEigen { values, vectors })
}

/// Principal square root and inverse square root of a PD matrix.
pub fn sqrt_and_inv_sqrt(a: &SymMatrix) -> Result<(SymMatrix, SymMatrix)> {
    let eig = sym_eigen(a)?;
    if eig.min() <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            index: 0,
            pivot: eig.min(),
        });
    }
    Ok((eig.map(f64::sqrt), eig.map(|l| 1.0 / l.sqrt())))
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm(a: &SymMatrix) -> Result<f64> {
    let eig = sym_eigen(a)?;
    Ok(eig.min().abs().max(eig.max().abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn logdet_examples() {
        assert_close!(cholesky_logdet(&SymMatrix::identity(2)).unwrap(), 0.0, 1e-15);
        assert_close!(
            cholesky_logdet(&SymMatrix::from_diagonal(&[2.0, 8.0])).unwrap(),
            16f64.ln(),
            1e-12
        );
        let indefinite = SymMatrix::from_row_major(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            cholesky_logdet(&indefinite),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn pivot_tolerance_is_relative_to_diagonal() {
        let a = SymMatrix::from_row_major(2, &[1e6, 1e6, 1e6, 1e6 + 1e-9]).unwrap();
        assert!(a.cholesky().is_err());
        let b = SymMatrix::from_diagonal(&[1e-20, 1e-20]);
        assert!(b.cholesky().is_ok());
    }

    #[test]
    fn weighted_norm_examples() {
        let m = SymMatrix::from_diagonal(&[4.0, 1.0]);
        assert_close!(weighted_norm(&v(&[1.0, 0.0]), &m).unwrap(), 2.0, 1e-15);
        assert_eq!(weighted_norm(&v(&[0.0, 0.0]), &m).unwrap(), 0.0);
        let m = SymMatrix::from_row_major(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        assert_close!(weighted_norm(&v(&[1.0, 1.0]), &m).unwrap(), 6f64.sqrt(), 1e-15);
        assert!(matches!(
            weighted_norm(&v(&[1.0]), &m),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn weighted_norm_identity_is_euclidean() {
        let x = v(&[3.0, -4.0, 12.0]);
        assert_eq!(weighted_norm(&x, &SymMatrix::identity(3)).unwrap(), x.norm());
    }

    #[test]
    fn sherman_morrison_examples() {
        let e1 = v(&[1.0, 0.0]);
        let r = sherman_morrison(&SymMatrix::identity(2), &e1, &e1).unwrap();
        assert_close!(r[(0, 0)], 0.5, 1e-15);
        assert_close!(r[(1, 1)], 1.0, 1e-15);
        assert_close!(r[(0, 1)], 0.0, 1e-15);

        let half = SymMatrix::from_diagonal(&[0.5, 0.5]);
        let ones = v(&[1.0, 1.0]);
        let r = sherman_morrison(&half, &ones, &ones).unwrap();
        let expected = [[0.375, -0.125], [-0.125, 0.375]];
        for i in 0..2 {
            for j in 0..2 {
                assert_close!(r[(i, j)], expected[i][j], 1e-15);
            }
        }

        let minus = v(&[-1.0, 0.0]);
        assert!(matches!(
            sherman_morrison(&SymMatrix::identity(2), &e1, &minus),
            Err(Error::SingularUpdate { .. })
        ));
    }

    #[test]
    fn eigen_examples() {
        let eig = sym_eigen(&SymMatrix::identity(3)).unwrap();
        for l in eig.values.iter() {
            assert_close!(*l, 1.0, 1e-14);
        }
        let swap = SymMatrix::from_row_major(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let eig = sym_eigen(&swap).unwrap();
        assert_close!(eig.values[0], -1.0, 1e-14);
        assert_close!(eig.values[1], 1.0, 1e-14);
    }

    #[test]
    fn constructor_rejects_asymmetry() {
        assert!(matches!(
            SymMatrix::from_row_major(2, &[1.0, 2.0, 2.5, 1.0]),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn rank_one_update_matches_outer_product() {
        let a = SymMatrix::from_row_major(2, &[2.0, 1.0, 1.0, 3.0]).unwrap();
        let w = v(&[1.0, -2.0]);
        let b = a.rank_one_update(&w, 0.5);
        let c = a.add(&SymMatrix::outer(&w).scale(0.5));
        assert_eq!(b, c);
    }

    fn matrix_from(entries: &[f64], n: usize, shift: f64) -> SymMatrix {
        let g = DMatrix::from_column_slice(n, n, &entries[..n * n]);
        SymMatrix::symmetrize(&g * g.transpose() + DMatrix::identity(n, n) * shift)
    }

    proptest::proptest! {
        #[test]
        fn sherman_morrison_inverts_update(
            n in 1usize..6,
            entries in proptest::collection::vec(-1.0f64..1.0, 36),
            u in proptest::collection::vec(-1.0f64..1.0, 6),
            w in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            let a = matrix_from(&entries, n, 0.5);
            let (u, w) = (Vector::from_column_slice(&u[..n]), Vector::from_column_slice(&w[..n]));
            let updated = a.as_matrix() + &u * w.transpose();
            match sherman_morrison(&a.inverse().unwrap(), &u, &w) {
                Ok(inv) => {
                    let err = (&updated * &inv - DMatrix::identity(n, n)).amax();
                    let cond = updated.norm() * inv.norm();
                    proptest::prop_assert!(err <= 1e-12 * cond, "{err} (cond {cond})");
                }
                Err(Error::SingularUpdate { .. }) => {}
                Err(e) => proptest::prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn log_det_matches_eigenvalues(
            n in 1usize..7,
            entries in proptest::collection::vec(-1.0f64..1.0, 36),
        ) {
            let a = matrix_from(&entries, n, 1e-2);
            let eig: f64 = sym_eigen(&a).unwrap().values.iter().map(|l| l.ln()).sum();
            let chol = cholesky_logdet(&a).unwrap();
            proptest::prop_assert!((chol - eig).abs() <= 1e-9 * (1.0 + eig.abs()), "{chol} vs {eig}");
        }
    }
}
