use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use super::{degree_blocks, quadrature_matrix, ModelSpace, QuadraticFlow};
use crate::error::{check_len, Error, Result};
use crate::linalg::to_complex;
use crate::quadrature::GaussianRule;

/// Kernel samples whose estimated truncation error exceeds this relative
/// size are flagged.
pub const KERNEL_TAIL_TOL: f64 = 1e-7;
/// Pullbacks with ‖A‖₂ beyond this are refused: the mapped nodes leave the
/// range where the basis can be evaluated without overflow.
const MAX_PULLBACK_NORM: f64 = 1e3;

/// An operator on the truncated space as a matrix in the normalized basis,
/// entry (m, n) = ⟨T e_n, e_m⟩.
#[derive(Debug, Clone)]
pub struct TruncatedOperator {
    space: Arc<ModelSpace>,
    matrix: DMatrix<Complex64>,
}

impl TruncatedOperator {
    pub fn new(space: Arc<ModelSpace>, matrix: DMatrix<Complex64>) -> Result<Self> {
        check_len(space.dim(), matrix.nrows())?;
        check_len(space.dim(), matrix.ncols())?;
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidInput(
                "operator matrix has non-finite entries".into(),
            ));
        }
        Ok(TruncatedOperator { space, matrix })
    }

    /// Π_k, the identity on the truncated space.
    pub fn identity(space: Arc<ModelSpace>) -> Self {
        let n = space.dim();
        TruncatedOperator {
            space,
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn space(&self) -> &Arc<ModelSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        TruncatedOperator {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    /// self ∘ other.
    pub fn compose(&self, other: &TruncatedOperator) -> Result<Self> {
        check_len(self.dim(), other.dim())?;
        Ok(TruncatedOperator {
            space: self.space.clone(),
            matrix: &self.matrix * &other.matrix,
        })
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        TruncatedOperator {
            space: self.space.clone(),
            matrix: &self.matrix * c,
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }
}

/// R_τ with constant symbol ϱ: multiplies the operator by ϱ.
pub fn apply_symbol(op: &TruncatedOperator, rho: Complex64) -> TruncatedOperator {
    op.scaled(rho)
}

/// Π∘(φ_{−τ})*∘Π with the lift constant stored in the flow.
pub fn pullback_operator(
    space: &Arc<ModelSpace>,
    flow: &QuadraticFlow,
) -> Result<TruncatedOperator> {
    pullback_operator_with_lift(space, flow, flow.lift_constant)
}

/// Matrix entries ∫ e^{icτf(ζ)} F_n(Aζ) conj F_m(ζ) dλ(ζ), A = dφ_{−τ}. The
/// rule is adapted to the Gaussian e^{−(|ζ|² + |Aζ|²)/2}, which makes it exact
/// for c = 0.
pub fn pullback_operator_with_lift(
    space: &Arc<ModelSpace>,
    flow: &QuadraticFlow,
    lift_constant: f64,
) -> Result<TruncatedOperator> {
    check_len(space.d(), flow.d())?;
    let a = flow.a_tau.matrix();
    let n = a.nrows();
    let norm = a.clone().singular_values().max();
    if !(norm <= MAX_PULLBACK_NORM) {
        return Err(Error::QuadratureOverflow {
            norm,
            truncation: space.n_max(),
        });
    }
    let precision = (DMatrix::<f64>::identity(n, n) + a.transpose() * a) * 0.5;
    let rule = GaussianRule::new(&precision, space.points_per_dim())?;
    let ct = lift_constant * flow.tau;
    let h = flow.h.clone();
    let phase = move |t: &[f64]| {
        let v = DVector::from_column_slice(t);
        Complex64::from_polar(1.0, ct * 0.5 * v.dot(&(&h * &v)))
    };
    let extra: Option<super::PointFactor<'_>> = if ct != 0.0 { Some(&phase) } else { None };
    let blocks = flow
        .is_circle_equivariant()
        .then(|| degree_blocks(space.indices()));
    let m = quadrature_matrix(
        space.indices(),
        space.d(),
        space.n_max(),
        &rule,
        Some(a),
        extra,
        blocks.as_deref(),
    );
    TruncatedOperator::new(space.clone(), m).map_err(|_| Error::QuadratureOverflow {
        norm,
        truncation: space.n_max(),
    })
}

/// Π∘M_g∘Π for a symbol g given in rescaled real coordinates, with the
/// quadrature rule adapted to the Gaussian precision of |F|²·g.
pub fn compress_symbol(
    space: &Arc<ModelSpace>,
    precision: &DMatrix<f64>,
    extra_points: usize,
    radial: bool,
    g: &(dyn Fn(&[f64]) -> Complex64 + Sync),
) -> Result<TruncatedOperator> {
    let rule = GaussianRule::new(precision, space.points_per_dim() + extra_points)?;
    let blocks = radial.then(|| degree_blocks(space.indices()));
    let m = quadrature_matrix(
        space.indices(),
        space.d(),
        space.n_max(),
        &rule,
        None,
        Some(g),
        blocks.as_deref(),
    );
    TruncatedOperator::new(space.clone(), m)
}

/// T_f^{(k)} for f(v) = ½vᵗHv. Since f(ζ/√k) = f(ζ)/k, the matrix is the
/// k-independent compression of f(ζ) divided by k.
pub fn toeplitz_f(space: &Arc<ModelSpace>, h: &DMatrix<f64>) -> Result<TruncatedOperator> {
    let n = 2 * space.d();
    check_len(n, h.nrows())?;
    check_len(n, h.ncols())?;
    let hk = h.clone() / space.k();
    let g = move |t: &[f64]| {
        let v = DVector::from_column_slice(t);
        Complex64::new(0.5 * v.dot(&(&hk * &v)), 0.0)
    };
    // One extra node per direction covers the degree-2 symbol.
    compress_symbol(space, &DMatrix::identity(n, n), 1, false, &g)
}

/// Toeplitz operator of the bump γ(z) = exp(−|z|²/R²) centred at the origin.
pub fn toeplitz_gaussian_bump(
    space: &Arc<ModelSpace>,
    radius_sq: f64,
) -> Result<TruncatedOperator> {
    if !(radius_sq > 0.0) {
        return Err(Error::InvalidInput("bump radius must be positive".into()));
    }
    let n = 2 * space.d();
    let eps = 1.0 / (space.k() * radius_sq);
    let g = move |t: &[f64]| {
        let r2: f64 = t.iter().map(|x| x * x).sum();
        Complex64::new((-eps * r2).exp(), 0.0)
    };
    compress_symbol(space, &(DMatrix::identity(n, n) * (1.0 + eps)), 0, true, &g)
}

/// Closed-form reproducing kernel (k/π)^d exp(k(z·w̄ − |z|²/2 − |w|²/2)) in
/// the unitary frame.
pub fn szego_kernel(
    space: &ModelSpace,
    z: &DVector<Complex64>,
    w: &DVector<Complex64>,
) -> Result<Complex64> {
    check_len(space.d(), z.len())?;
    check_len(space.d(), w.len())?;
    let k = space.k();
    let zw: Complex64 = z.iter().zip(w.iter()).map(|(a, b)| a * b.conj()).sum();
    let e = zw - 0.5 * z.norm_squared() - 0.5 * w.norm_squared();
    Ok((k / PI).powi(space.d() as i32) * (e * k).exp())
}

/// One evaluation of a kernel in Heisenberg coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct KernelSample {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub value: Complex64,
    /// Estimated relative truncation error.
    pub tail_estimate: f64,
    pub flagged: bool,
}

/// U(x + u/√k, x_τ + w/√k) with x the base point (unrescaled real
/// coordinates) and x_τ = A·base its image. Values are reported in the
/// Heisenberg frames at x and x_τ; at the origin these frames are trivial.
pub fn kernel_value(
    op: &TruncatedOperator,
    base: &DVector<f64>,
    flow: &QuadraticFlow,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<KernelSample> {
    let space = op.space();
    let n = 2 * space.d();
    check_len(n, base.len())?;
    check_len(n, u.len())?;
    check_len(n, w.len())?;
    check_len(space.d(), flow.d())?;
    let sk = space.k().sqrt();
    let qx = base * sk;
    let qy = flow.a_tau.matrix() * base * sk;
    let zx = &qx + u;
    let zy = &qy + w;
    let (raw, tail) = kernel_raw(op, zx.as_slice(), zy.as_slice());
    let frame = |off: &DVector<f64>, q: &DVector<f64>| {
        let a = to_complex(off);
        let b = to_complex(q);
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x * y.conj()).im)
            .sum::<f64>()
    };
    let phase = -frame(u, &qx) + frame(w, &qy);
    let value = raw * Complex64::from_polar(1.0, phase);
    Ok(KernelSample {
        u: u.iter().copied().collect(),
        w: w.iter().copied().collect(),
        value,
        tail_estimate: tail,
        flagged: !(tail <= KERNEL_TAIL_TOL),
    })
}

/// k^d Σ F_m(ζx) U_mn conj F_n(ζy) and a relative truncation estimate.
pub(crate) fn kernel_raw(op: &TruncatedOperator, zx: &[f64], zy: &[f64]) -> (Complex64, f64) {
    let space = op.space();
    let d = space.d();
    let fx = DVector::from_vec(space.basis_at(zx));
    let fy = DVector::from_vec(space.basis_at(zy)).map(|z| z.conj());
    let u = op.matrix();
    let kd = space.k().powi(d as i32);
    // r_n = Σ_m F_m(ζx) U_mn, s_m = Σ_n U_mn conj F_n(ζy)
    let r = u.transpose() * &fx;
    let s = u * &fy;
    let value = r.dot(&fy) * kd;

    // Coherent-state mass beyond N: the degree-n mass is π^{−d} times the
    // Poisson(|ζ|²) weight of n.
    let full = PI.powi(-(d as i32));
    let tail_x = full * poisson_upper_tail(zx.iter().map(|x| x * x).sum(), space.n_max());
    let tail_y = full * poisson_upper_tail(zy.iter().map(|x| x * x).sum(), space.n_max());
    // Mass of r and s in the top degree band stands in for their unseen
    // continuation past N.
    let band = top_band_start(space);
    let band_mass = |v: &DVector<Complex64>| -> f64 {
        (0..v.len())
            .filter(|&i| space.degree(i) >= band)
            .map(|i| v[i].norm_sqr())
            .sum()
    };
    let est = (tail_x.sqrt() * s.norm() + band_mass(&r).sqrt() * tail_y.sqrt()) * kd;
    let rel = est / value.norm().max(f64::MIN_POSITIVE);
    (value, rel)
}

/// P(X > n) for X ~ Poisson(λ), summed directly so that tiny tails are not
/// lost to cancellation.
pub(crate) fn poisson_upper_tail(lambda: f64, n: usize) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let m = n + 1;
    let log_fact: f64 = (2..=m).map(|j| (j as f64).ln()).sum();
    let mut term = (m as f64 * lambda.ln() - lambda - log_fact).exp();
    let mut sum = 0.0;
    let mut j = m;
    loop {
        sum += term;
        j += 1;
        term *= lambda / j as f64;
        if (j as f64 > lambda && term <= 1e-17 * sum) || term == 0.0 {
            break;
        }
    }
    sum.min(1.0)
}

/// First degree of the top band used by the truncation proxies.
pub(crate) fn top_band_start(space: &ModelSpace) -> usize {
    let n = space.n_max();
    let width = (n / 16).max(4).min(n + 1);
    n + 1 - width
}
