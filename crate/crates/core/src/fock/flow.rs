use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::{j0, symmetry_residual};
use crate::symplectic::SymplecticMatrix;

/// Coefficient c of the fiber phase e^{ikcτf} in the lifted pullback.
/// Pinned by requiring the H = I rotation flow to give a unitary operator
/// (see `calibrate_lift_constant`); only c = 0 does.
pub const LIFT_CONSTANT: f64 = 0.0;

/// Flow of f(v) = ½vᵗHv with the vector field fixed by ω₀(υ_f(v), w) = vᵗHw,
/// i.e. υ_f = −J₀H: φ_τ = exp(−τJ₀H) and A_τ = dφ_{−τ} = exp(τJ₀H).
#[derive(Debug, Clone)]
pub struct QuadraticFlow {
    pub h: DMatrix<f64>,
    pub tau: f64,
    pub a_tau: SymplecticMatrix,
    pub lift_constant: f64,
}

pub fn flow_from_hamiltonian(h: &DMatrix<f64>, tau: f64) -> Result<QuadraticFlow> {
    if !h.is_square() || h.nrows() % 2 != 0 || h.nrows() == 0 {
        return Err(Error::InvalidInput(
            "Hamiltonian matrix must be 2d×2d".into(),
        ));
    }
    let res = symmetry_residual(h);
    if res > 1e-12 * h.amax().max(1.0) {
        return Err(Error::NotSymmetric { residual: res });
    }
    if !tau.is_finite() {
        return Err(Error::InvalidInput("flow time must be finite".into()));
    }
    // exp(τJ₀H) = exp(−J₀(−τH))
    let a_tau = SymplecticMatrix::from_hamiltonian_generator(&(h * -tau))?;
    Ok(QuadraticFlow {
        h: h.clone(),
        tau,
        a_tau,
        lift_constant: LIFT_CONSTANT,
    })
}

impl QuadraticFlow {
    pub fn d(&self) -> usize {
        self.h.nrows() / 2
    }

    pub fn energy(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(&self.h * v))
    }

    /// υ_f(v) = −J₀Hv.
    pub fn vector_field(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.h.nrows(), v.len())?;
        Ok(-(j0(self.d()) * (&self.h * v)))
    }

    /// φ_τ(v) = exp(−τJ₀H)v, the forward flow.
    pub fn flow_map(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.h.nrows(), v.len())?;
        Ok(self.a_tau.inverse().matrix() * v)
    }

    /// The same Hamiltonian at a different time.
    pub fn at_time(&self, tau: f64) -> Result<QuadraticFlow> {
        let mut f = flow_from_hamiltonian(&self.h, tau)?;
        f.lift_constant = self.lift_constant;
        Ok(f)
    }

    pub fn with_lift_constant(mut self, c: f64) -> Self {
        self.lift_constant = c;
        self
    }

    /// True when H commutes with J₀, so the flow is unitary and the model
    /// operator is block-diagonal in total degree.
    pub fn is_circle_equivariant(&self) -> bool {
        let j = j0(self.d());
        (&j * &self.h - &self.h * &j).amax() <= 1e-13 * self.h.amax().max(1.0)
    }
}
