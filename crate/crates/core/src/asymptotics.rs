//! Closed-form scaling predictions for the kernel of a quantized linear
//! flow: leading term, decay envelope, unitarization modulus, diagonal
//! composition and the fixed-point trace contribution.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_det, inv_sqrt_det_right_half_plane, j0, require_positive_definite};
use crate::symplectic::{polar_decompose, PolarFactors, SymplecticMatrix};

/// Below this |det S| a fixed point is treated as degenerate.
pub const DEGENERATE_DET_TOL: f64 = 1e-10;

/// Value of the zeroth-order Toeplitz symbol ϱ at the base point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolValue(pub Complex64);

impl SymbolValue {
    pub fn one() -> Self {
        SymbolValue(Complex64::new(1.0, 0.0))
    }

    pub fn real(x: f64) -> Self {
        SymbolValue(Complex64::new(x, 0.0))
    }

    pub fn modulus(&self) -> f64 {
        self.0.norm()
    }

    pub fn phase(&self) -> f64 {
        self.0.arg()
    }
}

impl From<f64> for SymbolValue {
    fn from(x: f64) -> Self {
        SymbolValue::real(x)
    }
}

/// ϱ(k/π)^d 2^d/ν · e^{𝒮_A(u,w)} split into its factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeadingKernelPrediction {
    pub k: f64,
    pub value: Complex64,
    pub exponent: Complex64,
    pub prefactor: Complex64,
}

pub fn kernel_prefactor(pf: &PolarFactors, rho: SymbolValue, k: f64) -> Complex64 {
    let d = pf.d() as i32;
    let nu = pf.q.determinant().sqrt();
    rho.0 * (k / PI).powi(d) * 2f64.powi(d) / nu
}

/// Leading term of the rescaled kernel U(x + u/√k, x_τ + w/√k).
pub fn leading_kernel(
    a: &SymplecticMatrix,
    rho: SymbolValue,
    k: f64,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<LeadingKernelPrediction> {
    let pf = polar_decompose(a)?;
    leading_kernel_with(&pf, rho, k, u, w)
}

pub fn leading_kernel_with(
    pf: &PolarFactors,
    rho: SymbolValue,
    k: f64,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<LeadingKernelPrediction> {
    if !(k > 0.0) {
        return Err(Error::InvalidInput(format!(
            "level must be positive, got {k}"
        )));
    }
    let exponent = pf.s_form(u, w)?;
    let prefactor = kernel_prefactor(pf, rho, k);
    Ok(LeadingKernelPrediction {
        k,
        value: prefactor * exponent.exp(),
        exponent,
        prefactor,
    })
}

/// |ϱ| = 2^{−d/2}√ν, the modulus that makes the leading diagonal of UU*
/// match Π_k.
pub fn unitarization_modulus(a: &SymplecticMatrix) -> Result<f64> {
    let d = a.d() as i32;
    let pf = polar_decompose(a)?;
    Ok(2f64.powi(-d).sqrt() * pf.q.determinant().sqrt().sqrt())
}

/// 2^{−d/2} det(AJ₀ + J₀A)^{1/4}, the second expression for the same
/// modulus.
pub fn unitarization_modulus_anticommutator(a: &SymplecticMatrix) -> f64 {
    let d = a.d() as i32;
    let m = a.matrix();
    let j = j0(a.d());
    2f64.powi(-d).sqrt() * (m * &j + &j * m).determinant().powf(0.25)
}

/// e^{Re 𝒮_A(u,w)} for rescaled offsets: the attenuation of the kernel
/// modulus relative to its on-graph value.
pub fn decay_envelope(a: &SymplecticMatrix, u: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
    Ok(polar_decompose(a)?.s_form(u, w)?.re.exp())
}

/// e^{k Re 𝒮_A(δu,δw)} for offsets δ measured in unrescaled units; the
/// exponent is linear in k because 𝒮_A is quadratic.
pub fn decay_envelope_unscaled(
    a: &SymplecticMatrix,
    k: f64,
    du: &DVector<f64>,
    dw: &DVector<f64>,
) -> Result<f64> {
    Ok((k * polar_decompose(a)?.s_form(du, dw)?.re).exp())
}

/// (k/π)^d |ϱ|² 2^d/√det Q, the leading diagonal value of U∘U*.
pub fn diagonal_composition(a: &SymplecticMatrix, rho: SymbolValue, k: f64) -> Result<f64> {
    let d = a.d() as i32;
    let pf = polar_decompose(a)?;
    Ok((k / PI).powi(d) * rho.0.norm_sqr() * 2f64.powi(d) / pf.q.determinant().sqrt())
}

/// ∫_{R^{2d}} exp(−2vᵗQ⁻¹v) dv = 2^{−2d}(2π)^d √det Q.
pub fn gaussian_diag_integral(q: &DMatrix<f64>) -> Result<f64> {
    if !q.is_square() || q.nrows() % 2 != 0 {
        return Err(Error::InvalidInput("Q must be 2d×2d".into()));
    }
    require_positive_definite(q)?;
    let d = (q.nrows() / 2) as i32;
    Ok(2f64.powi(-2 * d) * (2.0 * PI).powi(d) * q.determinant().sqrt())
}

/// Leading contribution of an isolated fixed point to the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePrediction {
    pub value: Complex64,
    /// S with 𝒮_A(u,u) = −½uᵗSu.
    pub s_matrix: DMatrix<Complex64>,
    pub det_s: Complex64,
    /// det(S)^{−1/2} on the branch continuous from positive-definite S.
    pub inv_sqrt_det: Complex64,
    pub nu: f64,
}

/// ϱ·2^{2d}/ν·det(S)^{−1/2}.
pub fn trace_leading(a: &SymplecticMatrix, rho: SymbolValue) -> Result<TracePrediction> {
    let pf = polar_decompose(a)?;
    let s = pf.fixed_point_form();
    let det_s = complex_det(&s);
    if !(det_s.norm() > DEGENERATE_DET_TOL) {
        return Err(Error::DegenerateFixedPoint { det: det_s.norm() });
    }
    let inv_sqrt_det = inv_sqrt_det_right_half_plane(&s);
    let d = a.d() as i32;
    let nu = pf.q.determinant().sqrt();
    Ok(TracePrediction {
        value: rho.0 * 2f64.powi(2 * d) / nu * inv_sqrt_det,
        s_matrix: s,
        det_s,
        inv_sqrt_det,
        nu,
    })
}
