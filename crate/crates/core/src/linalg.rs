//! Small dense helpers shared by the modules: J₀, the R^{2d} ≅ C^d
//! identification, symmetric matrix functions and complex determinants.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// J₀ = [[0, −I], [I, 0]] in the (x₁..x_d, y₁..y_d) ordering, so that J₀
/// acts as multiplication by i under (x, y) ↦ x + iy.
pub fn j0(d: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    for a in 0..d {
        j[(a, d + a)] = -1.0;
        j[(d + a, a)] = 1.0;
    }
    j
}

/// (x, y) ↦ x + iy, componentwise.
pub fn to_complex(v: &DVector<f64>) -> DVector<Complex64> {
    let d = v.len() / 2;
    DVector::from_fn(d, |a, _| Complex64::new(v[a], v[d + a]))
}

pub fn from_complex(z: &DVector<Complex64>) -> DVector<f64> {
    let d = z.len();
    DVector::from_fn(2 * d, |a, _| if a < d { z[a].re } else { z[a - d].im })
}

pub fn symmetry_residual(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Symmetric eigendecomposition with the input symmetrized first; callers
/// that care about asymmetry check it separately.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s)
}

/// g(M) for symmetric M via its eigendecomposition.
pub fn sym_apply(m: &DMatrix<f64>, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    let v = &eig.eigenvectors;
    let diag = DMatrix::from_diagonal(&eig.eigenvalues.map(g));
    v * diag * v.transpose()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).eigenvalues.min()
}

pub fn require_positive_definite(m: &DMatrix<f64>) -> Result<()> {
    let lo = min_eigenvalue(m);
    if lo > 0.0 && lo.is_finite() {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite { min_eigenvalue: lo })
    }
}

pub fn complex_matrix(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn complex_det(m: &DMatrix<Complex64>) -> Complex64 {
    m.clone().lu().determinant()
}

/// det(M)^{-1/2} for a complex symmetric M with positive-definite real
/// part, taken on the branch that is continuous from the real
/// positive-definite case: the product of principal square roots of the
/// eigenvalues (each eigenvalue lies in the open right half-plane).
pub fn inv_sqrt_det_right_half_plane(m: &DMatrix<Complex64>) -> Complex64 {
    let eig = m.clone().complex_eigenvalues_general();
    eig.iter()
        .fold(Complex64::new(1.0, 0.0), |acc, l| acc / l.sqrt())
}

/// Eigenvalues of a general complex matrix via the Schur form.
trait GeneralEigen {
    fn complex_eigenvalues_general(self) -> Vec<Complex64>;
}

impl GeneralEigen for DMatrix<Complex64> {
    fn complex_eigenvalues_general(self) -> Vec<Complex64> {
        let n = self.nrows();
        let schur = nalgebra::Schur::new(self);
        let (_, t) = schur.unpack();
        (0..n).map(|i| t[(i, i)]).collect()
    }
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn spectral_norm_complex(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, s| acc.max(*s))
}
