//! The phase Ψ(t, θ, u, ϑ) = it(1 − e^{−iθ}) + iu(1 − e^{i(θ+ϑ)}) − ϑ of the
//! composed kernel, its stationary point and Hessian path, and the Gaussian
//! reductions that turn the composition into the leading kernel term.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::linalg::{complex_det, j0, min_eigenvalue};
use crate::quadrature::integrate_adaptive_2d;
use crate::symplectic::{
    gamma_fg_with, omega0_unchecked, polar_decompose, psi2_unchecked, SymplecticMatrix,
};

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_TOL: f64 = 1e-10;

/// A point (t, θ, u, ϑ) of the phase domain; t, u > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub t: f64,
    pub theta: f64,
    pub u: f64,
    pub vartheta: f64,
}

impl PhasePoint {
    pub fn new(t: f64, theta: f64, u: f64, vartheta: f64) -> Result<Self> {
        if !(t > 0.0 && u > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dilation variables must be positive, got t={t}, u={u}"
            )));
        }
        Ok(PhasePoint {
            t,
            theta,
            u,
            vartheta,
        })
    }

    /// The stationary point (1, 0, 1, 0).
    pub fn critical() -> Self {
        PhasePoint {
            t: 1.0,
            theta: 0.0,
            u: 1.0,
            vartheta: 0.0,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.t, self.theta, self.u, self.vartheta]
    }

    fn complex(&self) -> [Complex64; 4] {
        self.to_array().map(|x| Complex64::new(x, 0.0))
    }

    fn in_basin(&self) -> bool {
        self.theta.abs() < 1.0
            && self.vartheta.abs() < 1.0
            && (0.25..4.0).contains(&self.t)
            && (0.25..4.0).contains(&self.u)
    }
}

fn psi_c(p: &[Complex64; 4]) -> Complex64 {
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    let [t, th, u, vt] = *p;
    i * t * (one - (-i * th).exp()) + i * u * (one - (i * (th + vt)).exp()) - vt
}

fn gradient_c(p: &[Complex64; 4]) -> [Complex64; 4] {
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    let [t, th, u, vt] = *p;
    let a = (-i * th).exp();
    let b = (i * (th + vt)).exp();
    [i * (one - a), -t * a + u * b, i * (one - b), u * b - one]
}

fn hessian_c(p: &[Complex64; 4]) -> DMatrix<Complex64> {
    let i = Complex64::i();
    let [t, th, u, vt] = *p;
    let a = (-i * th).exp();
    let b = (i * (th + vt)).exp();
    let z = Complex64::new(0.0, 0.0);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            z,
            -a,
            z,
            z,
            -a,
            i * t * a + i * u * b,
            b,
            i * u * b,
            z,
            b,
            z,
            b,
            z,
            i * u * b,
            b,
            i * u * b,
        ],
    )
}

pub fn phase_psi(p: &PhasePoint) -> Complex64 {
    psi_c(&p.complex())
}

pub fn phase_gradient(p: &PhasePoint) -> [Complex64; 4] {
    gradient_c(&p.complex())
}

/// Analytic Hessian of Ψ.
pub fn phase_hessian(p: &PhasePoint) -> DMatrix<Complex64> {
    hessian_c(&p.complex())
}

/// Newton iteration on the complexified gradient. Fails if it does not
/// converge or lands on a periodic copy of the critical point outside the
/// basin around (1, 0, 1, 0).
pub fn stationary_point(start: &PhasePoint) -> Result<PhasePoint> {
    let mut p = start.complex();
    let mut res = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let g = gradient_c(&p);
        res = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !res.is_finite() {
            break;
        }
        if res < NEWTON_TOL * 1e-2 {
            let q = PhasePoint {
                t: p[0].re,
                theta: p[1].re,
                u: p[2].re,
                vartheta: p[3].re,
            };
            let imag = p.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            if imag < NEWTON_TOL && q.in_basin() {
                return Ok(q);
            }
            break;
        }
        let h = hessian_c(&p);
        let rhs = DVector::from_iterator(4, g.iter().map(|z| -z));
        let Some(step) = h.lu().solve(&rhs) else {
            break;
        };
        for (x, dx) in p.iter_mut().zip(step.iter()) {
            *x += dx;
        }
    }
    Err(Error::NonConvergence {
        iterations: NEWTON_MAX_ITER,
        residual: res,
    })
}

/// H(s): the linear path from the real signature-zero H(0) to the Hessian
/// of Ψ at the critical point, H(1).
pub fn hessian_path(s: f64) -> DMatrix<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let si = Complex64::new(0.0, s);
    DMatrix::from_row_slice(
        4,
        4,
        &[z, -o, z, z, -o, si * 2.0, o, si, z, o, z, o, z, si, o, si],
    )
}

pub fn hessian_path_det(s: f64) -> Complex64 {
    complex_det(&hessian_path(s))
}

/// √det(kH/2πi) tracked continuously along H(s) from s = 0.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SqrtFactor {
    pub value: Complex64,
    /// Total change of arg √det along the path.
    pub net_phase: f64,
    /// Largest single-step jump of arg √det (continuity witness).
    pub max_step_phase: f64,
}

pub fn sqrt_factor(k: f64) -> Result<SqrtFactor> {
    if !(k >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "level must be at least 1, got {k}"
        )));
    }
    let steps = 1000;
    let scale = Complex64::new(0.0, -k / (2.0 * PI)); // k/(2πi)
    let det_at = |s: f64| complex_det(&(hessian_path(s) * scale));
    // At s = 0 the matrix is real symmetric with signature zero, so the
    // determinant is positive and the branch is the positive root.
    let d0 = det_at(0.0);
    let mut root = d0.sqrt();
    if root.re < 0.0 {
        root = -root;
    }
    let start_arg = root.arg();
    let mut net = 0.0;
    let mut max_step: f64 = 0.0;
    for j in 1..=steps {
        let s = j as f64 / steps as f64;
        let cand = det_at(s).sqrt();
        let next = if (cand - root).norm() <= (-cand - root).norm() {
            cand
        } else {
            -cand
        };
        let dphi = (next / root).arg();
        net += dphi;
        max_step = max_step.max(dphi.abs());
        root = next;
    }
    debug_assert!((start_arg + net - root.arg()).abs() < 1e-9 || root.norm() == 0.0);
    Ok(SqrtFactor {
        value: root,
        net_phase: net,
        max_step_phase: max_step,
    })
}

/// Which matrix multiplies Q⁻¹L in the second substitution r = s − Q⁻¹XL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SubstitutionVariant {
    /// X = A, as printed.
    A,
    /// X = Aᵗ, consistent with Γ.
    ATranspose,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReductionCheck {
    /// Residual of the v = r + u manipulation (independent of the variant).
    pub first: f64,
    pub second_with_a: f64,
    pub second_with_at: f64,
    pub variant: SubstitutionVariant,
}

impl ReductionCheck {
    pub fn residual(&self) -> f64 {
        let second = match self.variant {
            SubstitutionVariant::A => self.second_with_a,
            SubstitutionVariant::ATranspose => self.second_with_at,
        };
        self.first.max(second)
    }
}

/// Residual tolerance for the reduction identities.
pub const REDUCTION_TOL: f64 = 1e-9;

/// Checks ψ₂(u,v) + ψ₂(Av,w) against both Gaussian-reduction forms, with
/// v = r + u and r = s − Q⁻¹XL for X ∈ {A, Aᵗ}. Residuals are relative to
/// max(1, |lhs|).
pub fn gaussian_reduction_check(
    a: &SymplecticMatrix,
    u: &DVector<f64>,
    w: &DVector<f64>,
    s: &DVector<f64>,
) -> Result<ReductionCheck> {
    let n = 2 * a.d();
    check_len(n, u.len())?;
    check_len(n, w.len())?;
    check_len(n, s.len())?;
    let pf = polar_decompose(a)?;
    let m = a.matrix();
    let j = j0(a.d());
    let a_inv = a.inverse().into_matrix();
    let l = m * u - w;
    let ainv_l = &a_inv * &l;
    let gfg = gamma_fg_with(a, &pf, u, w)?;
    let i = Complex64::i();

    let lhs = |r: &DVector<f64>| {
        let v = r + u;
        psi2_unchecked(u, &v) + psi2_unchecked(&(m * &v), w)
    };
    let first_rhs = |r: &DVector<f64>| {
        psi2_unchecked(&(m * u), w)
            - i * omega0_unchecked(&ainv_l, r)
            - r.dot(&(m.transpose() * &l))
            - 0.5 * r.dot(&(&pf.q * r))
    };
    let second_rhs = gfg.gamma - i * s.dot(&(&j * &ainv_l)) - 0.5 * s.dot(&(&pf.q * s));

    let rel = |x: Complex64, y: Complex64| (x - y).norm() / x.norm().max(1.0);
    let r_a = s - &pf.q_inv * (m * &l);
    let r_at = s - &pf.q_inv * (m.transpose() * &l);
    // The first manipulation holds for any r; check it at both points.
    let first = rel(lhs(&r_a), first_rhs(&r_a)).max(rel(lhs(&r_at), first_rhs(&r_at)));
    let second_with_a = rel(lhs(&r_a), second_rhs);
    let second_with_at = rel(lhs(&r_at), second_rhs);
    let variant = if second_with_at <= REDUCTION_TOL {
        SubstitutionVariant::ATranspose
    } else if second_with_a <= REDUCTION_TOL {
        SubstitutionVariant::A
    } else {
        return Err(Error::ReductionFailed {
            with_a: second_with_a,
            with_at: second_with_at,
        });
    };
    Ok(ReductionCheck {
        first,
        second_with_a,
        second_with_at,
        variant,
    })
}

/// The two routes to the leading term, without the (k/π)^d ϱ factor:
/// e^Γ · ∫e^{isᵗF − ½sᵗQs}ds and π^d 2^d/√det Q · e^{𝒮_A(u,w)}.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LeadingGaussian {
    /// (2π)^d det(Q)^{−1/2} e^{−½FᵗQ⁻¹F}.
    pub gaussian: Complex64,
    pub gamma: Complex64,
    /// e^Γ times the Gaussian integral.
    pub via_gamma: Complex64,
    /// π^d 2^d/√det Q · e^{𝒮_A}.
    pub via_s: Complex64,
}

impl LeadingGaussian {
    pub fn route_discrepancy(&self) -> f64 {
        (self.via_gamma - self.via_s).norm() / self.via_s.norm().max(f64::MIN_POSITIVE)
    }
}

pub fn leading_gaussian_integral(
    a: &SymplecticMatrix,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<LeadingGaussian> {
    let pf = polar_decompose(a)?;
    let gfg = gamma_fg_with(a, &pf, u, w)?;
    let d = a.d() as i32;
    let sqrt_det_q = pf.q.determinant().sqrt();
    let quad = gfg.f.dot(&(&pf.q_inv * &gfg.f));
    let gaussian = Complex64::new((2.0 * PI).powi(d) / sqrt_det_q * (-0.5 * quad).exp(), 0.0);
    let via_gamma = gfg.gamma.exp() * gaussian;
    let via_s = PI.powi(d) * 2f64.powi(d) / sqrt_det_q * pf.s_form(u, w)?.exp();
    Ok(LeadingGaussian {
        gaussian,
        gamma: gfg.gamma,
        via_gamma,
        via_s,
    })
}

/// Direct adaptive quadrature of ∫_{R²} e^{isᵗF − ½sᵗQs} ds for d = 1,
/// compared with the closed form.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GaussianQuadratureCheck {
    pub quadrature: Complex64,
    pub closed_form: Complex64,
    pub relative_error: f64,
}

pub fn gaussian_quadrature_check(
    a: &SymplecticMatrix,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<GaussianQuadratureCheck> {
    if a.d() != 1 {
        return Err(Error::InvalidInput(
            "quadrature cross-check is implemented for d = 1".into(),
        ));
    }
    let pf = polar_decompose(a)?;
    let gfg = gamma_fg_with(a, &pf, u, w)?;
    let closed = leading_gaussian_integral(a, u, w)?.gaussian;
    let q = pf.q.clone();
    let f = gfg.f.clone();
    // e^{−½λ_min L²} ≤ e^{−37} makes the truncated box negligible.
    let half = (74.0 / min_eigenvalue(&q)).sqrt();
    let integrand = |x: f64, y: f64| {
        let qf = q[(0, 0)] * x * x + 2.0 * q[(0, 1)] * x * y + q[(1, 1)] * y * y;
        Complex64::new(-0.5 * qf, f[0] * x + f[1] * y).exp()
    };
    let quadrature = integrate_adaptive_2d(integrand, half, 1e-9 * closed.norm())?;
    Ok(GaussianQuadratureCheck {
        quadrature,
        closed_form: closed,
        relative_error: (quadrature - closed).norm() / closed.norm(),
    })
}

/// Critical data of Ψ_τ = u(τf₀ + ϑ + θ) − tθ − ϑ.
#[derive(Debug, Clone, Serialize)]
pub struct PropPhase {
    pub point: [f64; 4],
    pub value: f64,
    pub hessian: DMatrix<f64>,
}

pub fn prop_phase_value(tau: f64, f0: f64, p: &[f64; 4]) -> f64 {
    let [t, th, u, vt] = *p;
    u * (tau * f0 + vt + th) - t * th - vt
}

pub fn prop_phase_gradient(tau: f64, f0: f64, p: &[f64; 4]) -> [f64; 4] {
    let [t, th, u, vt] = *p;
    [-th, u - t, tau * f0 + vt + th, u - 1.0]
}

pub fn prop_phase(tau: f64, f0: f64) -> PropPhase {
    let point = [1.0, 0.0, 1.0, -tau * f0];
    let hessian = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, -1.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0,
        ],
    );
    PropPhase {
        value: prop_phase_value(tau, f0, &point),
        point,
        hessian,
    }
}

/// Hessian of a complex function on R⁴ by central second differences with
/// one Richardson step (error O(h⁴) plus round-off O(ε/h²)).
pub fn finite_difference_hessian(
    f: impl Fn(&[f64; 4]) -> Complex64,
    p: &[f64; 4],
    h: f64,
) -> DMatrix<Complex64> {
    let second = |h: f64, i: usize, j: usize| -> Complex64 {
        let at = |di: f64, dj: f64| {
            let mut q = *p;
            q[i] += di;
            q[j] += dj;
            f(&q)
        };
        if i == j {
            (at(h, 0.0) - at(0.0, 0.0) * 2.0 + at(-h, 0.0)) / (h * h)
        } else {
            (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
        }
    };
    DMatrix::from_fn(4, 4, |i, j| {
        (second(0.5 * h, i, j) * 4.0 - second(h, i, j)) / 3.0
    })
}

/// Eigenvalue sign counts (positive, negative) of a real symmetric matrix.
pub fn signature(m: &DMatrix<f64>) -> (usize, usize) {
    let ev = crate::linalg::sym_eigen(m).eigenvalues;
    (
        ev.iter().filter(|&&x| x > 0.0).count(),
        ev.iter().filter(|&&x| x < 0.0).count(),
    )
}

pub fn real_part(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    m.map(|z| z.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::random_symplectic;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    #[test]
    fn phase_hand_values() {
        assert_eq!(phase_psi(&PhasePoint::critical()), Complex64::new(0.0, 0.0));
        let p = PhasePoint::new(1.0, 0.0, 1.0, PI / 2.0).unwrap();
        let want = Complex64::new(1.0 - PI / 2.0, 1.0);
        assert!((phase_psi(&p) - want).norm() < 1e-15);
        let g = phase_gradient(&PhasePoint::critical());
        assert!(g.iter().all(|z| z.norm() < 1e-15));
        assert!(PhasePoint::new(0.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn analytic_hessian_at_critical_point_is_path_endpoint() {
        let h = phase_hessian(&PhasePoint::critical());
        assert!((h - hessian_path(1.0)).camax() < 1e-15);
    }

    #[test]
    fn newton_converges_from_nearby_start() {
        let p = stationary_point(&PhasePoint::new(1.2, 0.1, 0.9, -0.1).unwrap()).unwrap();
        let c = PhasePoint::critical().to_array();
        for (a, b) in p.to_array().iter().zip(c.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(
            stationary_point(&PhasePoint::critical()).unwrap(),
            PhasePoint::critical()
        );
    }

    #[test]
    fn newton_fails_far_from_basin() {
        let far = PhasePoint::new(40.0, 5.0, 0.01, -7.0).unwrap();
        assert!(matches!(
            stationary_point(&far),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn hessian_path_endpoints() {
        for j in 0..=10 {
            let s = j as f64 / 10.0;
            assert!((hessian_path_det(s) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        assert_eq!(signature(&real_part(&hessian_path(0.0))), (2, 2));
    }

    #[test]
    fn sqrt_factor_values() {
        let f = sqrt_factor(2.0 * PI).unwrap();
        assert!((f.value - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let f = sqrt_factor(1.0).unwrap();
        assert!((f.value - Complex64::new(1.0 / (4.0 * PI * PI), 0.0)).norm() < 1e-14);
        assert!(f.net_phase.abs() < 1e-12);
        assert!(sqrt_factor(0.5).is_err());
    }

    #[test]
    fn reduction_on_graph_is_exact() {
        let a = random_symplectic(1, 1.0, 5).unwrap();
        let u = v(&[0.3, -0.4]);
        let w = a.matrix() * &u;
        let c = gaussian_reduction_check(&a, &u, &w, &v(&[0.2, 0.7])).unwrap();
        assert!(c.residual() < 1e-12);
        // With L = 0 both variants coincide.
        assert!(c.second_with_a < 1e-12);
    }

    #[test]
    fn reduction_selects_transpose_variant() {
        let a = random_symplectic(1, 1.5, 17).unwrap();
        let c = gaussian_reduction_check(&a, &v(&[0.5, -0.2]), &v(&[-0.3, 0.8]), &v(&[0.1, 0.4]))
            .unwrap();
        assert_eq!(c.variant, SubstitutionVariant::ATranspose);
        assert!(c.second_with_a > 1e-6);
        assert!(c.residual() < 1e-12);
    }

    #[test]
    fn reduction_for_identity_is_two_kernel_composition() {
        let a = SymplecticMatrix::identity(1);
        let c = gaussian_reduction_check(&a, &v(&[0.5, -0.2]), &v(&[-0.3, 0.8]), &v(&[0.1, 0.4]))
            .unwrap();
        assert!(c.residual() < 1e-12);
    }

    #[test]
    fn leading_routes_agree_and_on_graph_value() {
        let a = random_symplectic(2, 1.0, 3).unwrap();
        let u = v(&[0.2, 0.1, -0.3, 0.5]);
        let w = v(&[0.0, 0.4, 0.1, -0.2]);
        assert!(
            leading_gaussian_integral(&a, &u, &w)
                .unwrap()
                .route_discrepancy()
                < 1e-12
        );
        let w = a.matrix() * &u;
        let lg = leading_gaussian_integral(&a, &u, &w).unwrap();
        let pf = polar_decompose(&a).unwrap();
        let want = (2.0 * PI).powi(2) / pf.q.determinant().sqrt();
        assert!((lg.gaussian.re - want).abs() < 1e-12 * want);
        assert!((lg.gamma.re).abs() < 1e-14);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let a = random_symplectic(1, 1.0, 8).unwrap();
        let c = gaussian_quadrature_check(&a, &v(&[0.6, -0.1]), &v(&[0.2, 0.9])).unwrap();
        assert!(c.relative_error < 1e-6, "{:?}", c);
    }

    #[test]
    fn prop_phase_values() {
        let p = prop_phase(0.0, 3.0);
        assert_eq!(p.point, [1.0, 0.0, 1.0, 0.0]);
        assert_eq!(p.value, 0.0);
        let p = prop_phase(0.5, 2.0);
        assert_eq!(p.point, [1.0, 0.0, 1.0, -1.0]);
        assert_eq!(p.value, 1.0);
        let g = prop_phase_gradient(0.5, 2.0, &p.point);
        assert!(g.iter().all(|x| x.abs() < 1e-12));
        assert_eq!(signature(&p.hessian), (2, 2));
        let fd = finite_difference_hessian(
            |q| Complex64::new(prop_phase_value(0.5, 2.0, q), 0.0),
            &p.point,
            1e-3,
        );
        assert!((real_part(&fd) - &p.hessian).amax() < 1e-8);
        assert_eq!(prop_phase(1.7, -0.3).hessian, p.hessian);
    }
}
