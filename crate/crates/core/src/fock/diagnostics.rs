use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use super::operator::{kernel_raw, top_band_start};
use super::{
    build_space, pullback_operator, pullback_operator_with_lift, toeplitz_f,
    toeplitz_gaussian_bump, ModelSpace, QuadraticFlow, TruncatedOperator,
};
use crate::error::{check_len, Error, Result};
use crate::linalg::spectral_norm_complex;
use crate::symplectic::polar_decompose;

/// Relative bump mass beyond the truncation accepted by [`localized_trace`].
pub const TRACE_TAIL_TOL: f64 = 1e-6;
/// A row of U enters the unitarity check only if its top-band mass fraction
/// is below this.
pub const UNITARITY_TAIL_TOL: f64 = 1e-12;
/// Relative diagonal defects below this are indistinguishable from
/// round-off in the symbol-correction fit.
pub const FIT_NOISE_FLOOR: f64 = 1e-11;
const FIT_MIN_R2: f64 = 0.95;

/// Plain matrix trace, with the fraction of |diagonal| mass in the top
/// degree band as a convergence indicator.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModelTrace {
    pub value: Complex64,
    pub top_band_fraction: f64,
}

pub fn model_trace(op: &TruncatedOperator) -> ModelTrace {
    let space = op.space();
    let band = top_band_start(space);
    let m = op.matrix();
    let (mut all, mut top) = (0.0, 0.0);
    for i in 0..op.dim() {
        let a = m[(i, i)].norm();
        all += a;
        if space.degree(i) >= band {
            top += a;
        }
    }
    ModelTrace {
        value: m.trace(),
        top_band_fraction: if all > 0.0 { top / all } else { 0.0 },
    }
}

/// Tr(U∘T_γ) for the bump γ = exp(−|z|²/R²) around the fixed point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LocalizedTrace {
    pub value: Complex64,
    pub radius_sq: f64,
    /// Fraction of Tr(T_γ) on the full space lying beyond degree N.
    pub tail: f64,
}

pub fn localized_trace(op: &TruncatedOperator, radius_sq: f64) -> Result<LocalizedTrace> {
    let space = op.space();
    let bump = toeplitz_gaussian_bump(space, radius_sq)?;
    let tail = bump_tail(space, radius_sq);
    if !(tail <= TRACE_TAIL_TOL) {
        return Err(Error::TailGate {
            estimate: tail,
            tolerance: TRACE_TAIL_TOL,
        });
    }
    let u = op.matrix();
    let t = bump.matrix();
    let mut value = Complex64::new(0.0, 0.0);
    for m in 0..op.dim() {
        for n in 0..op.dim() {
            value += u[(m, n)] * t[(n, m)];
        }
    }
    Ok(LocalizedTrace {
        value,
        radius_sq,
        tail,
    })
}

/// Degree-n diagonal entries of T_γ are (1+ε)^{−(n+d)}, ε = 1/(kR²), with
/// multiplicity C(n+d−1, d−1); their full sum is ε^{−d}.
fn bump_tail(space: &ModelSpace, radius_sq: f64) -> f64 {
    let d = space.d() as i32;
    let eps = 1.0 / (space.k() * radius_sq);
    let x = 1.0 / (1.0 + eps);
    let mut kept = 0.0;
    let mut mult = 1.0;
    for n in 0..=space.n_max() {
        if n > 0 {
            mult *= (n as f64 + d as f64 - 1.0) / n as f64;
        }
        kept += mult * x.powi(n as i32 + d);
    }
    (1.0 - kept * eps.powi(d)).max(0.0)
}

/// ‖UU† − I‖₂ on the low-degree rows whose truncation is negligible.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UnitarityDefect {
    pub defect: f64,
    /// Highest degree kept.
    pub kept_degree: usize,
    pub kept_dim: usize,
    /// N − kept_degree: the excluded top band.
    pub band_width: usize,
}

pub fn unitarity_defect(op: &TruncatedOperator) -> Result<UnitarityDefect> {
    let space = op.space();
    let u = op.matrix();
    let band = top_band_start(space);
    // Rows are graded by degree; keep the longest prefix of degrees whose
    // rows all have negligible mass in the top band.
    let mut kept_degree: Option<usize> = None;
    let mut row = 0;
    'degrees: for deg in 0..band {
        while row < op.dim() && space.degree(row) == deg {
            let (mut all, mut top) = (0.0, 0.0);
            for n in 0..op.dim() {
                let a = u[(row, n)].norm_sqr();
                all += a;
                if space.degree(n) >= band {
                    top += a;
                }
            }
            if !(top <= UNITARITY_TAIL_TOL * all) {
                break 'degrees;
            }
            row += 1;
        }
        kept_degree = Some(deg);
    }
    let kept_degree = kept_degree.ok_or(Error::TailGate {
        estimate: f64::NAN,
        tolerance: UNITARITY_TAIL_TOL,
    })?;
    let kept_dim = (0..op.dim())
        .filter(|&i| space.degree(i) <= kept_degree)
        .count();
    let rows = u.rows(0, kept_dim);
    let gram = rows * rows.adjoint() - DMatrix::<Complex64>::identity(kept_dim, kept_dim);
    Ok(UnitarityDefect {
        defect: spectral_norm_complex(&gram),
        kept_degree,
        kept_dim,
        band_width: space.n_max() - kept_degree,
    })
}

/// Normalized residual of d/dτ U_τ = i·kT_f∘U_τ at one kernel point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SchrodingerResidual {
    /// Residual with step dτ/2, divided by k^d e^{Re 𝒮}.
    pub residual: f64,
    /// The same with step dτ.
    pub residual_full_step: f64,
    pub relative_change: f64,
    pub derivative: Complex64,
    pub generator_term: Complex64,
}

/// Maximum relative change under step halving accepted as converged.
pub const STEP_HALVING_TOL: f64 = 0.1;

pub fn schrodinger_residual(
    space: &Arc<ModelSpace>,
    flow: &QuadraticFlow,
    u: &DVector<f64>,
    w: &DVector<f64>,
    dtau: f64,
) -> Result<SchrodingerResidual> {
    let n = 2 * space.d();
    check_len(n, u.len())?;
    check_len(n, w.len())?;
    if !(dtau > 0.0) {
        return Err(Error::InvalidInput(
            "finite-difference step must be positive".into(),
        ));
    }
    let tau0 = flow.tau;
    let kernel_at = |tau: f64| -> Result<Complex64> {
        let f = flow.at_time(tau)?;
        let op = pullback_operator(space, &f)?;
        Ok(kernel_raw(&op, u.as_slice(), w.as_slice()).0)
    };
    let central = |h: f64| -> Result<Complex64> {
        Ok((kernel_at(tau0 + h)? - kernel_at(tau0 - h)?) / (2.0 * h))
    };
    let d_full = central(dtau)?;
    let d_half = central(0.5 * dtau)?;

    let op = pullback_operator(space, flow)?;
    let kt = toeplitz_f(space, &flow.h)?.scaled(Complex64::new(space.k(), 0.0));
    let tu = kt.compose(&op)?;
    let gen = Complex64::i() * kernel_raw(&tu, u.as_slice(), w.as_slice()).0;

    let pf = polar_decompose(&flow.a_tau)?;
    let norm = space.k().powi(space.d() as i32) * pf.s_form(u, w)?.re.exp();
    let residual_full_step = (d_full - gen).norm() / norm;
    let residual = (d_half - gen).norm() / norm;
    let relative_change = (residual - residual_full_step).abs() / residual.max(f64::MIN_POSITIVE);
    if !(relative_change < STEP_HALVING_TOL) {
        return Err(Error::StepTooLarge { relative_change });
    }
    Ok(SchrodingerResidual {
        residual,
        residual_full_step,
        relative_change,
        derivative: d_half,
        generator_term: gen,
    })
}

/// First-order symbol correction: ϱ₀ + f₁/k cancels the k^{d−1} term of
/// (UU*)(x,x) − Π_k(x,x) at the fixed point.
#[derive(Debug, Clone, Serialize)]
pub struct SymbolCorrection {
    pub f1: f64,
    /// Fitted coefficient c₁ of k^{d−1}.
    pub c1: f64,
    pub r2: f64,
    /// All measured defects were at round-off level; f₁ = 0.
    pub below_noise: bool,
    /// (k, (UU*)(0,0)/(k/π)^d − 1) per level.
    pub relative_defects: Vec<(f64, f64)>,
}

pub fn fit_symbol_correction(
    levels: &[f64],
    truncation: impl Fn(f64) -> usize,
    flow: &QuadraticFlow,
    rho0: f64,
) -> Result<SymbolCorrection> {
    if levels.len() < 2 {
        return Err(Error::InvalidInput(
            "symbol correction needs at least two levels".into(),
        ));
    }
    let d = flow.d() as i32;
    let mut pts = Vec::with_capacity(levels.len());
    for &k in levels {
        let space = build_space(flow.d(), k, truncation(k))?;
        let op = pullback_operator(&space, flow)?;
        let row = op.matrix().row(0);
        // (UU*)(0,0) = (k/π)^d ϱ₀² Σ_n |U_0n|² since F_m(0) = δ_m0 π^{−d/2}.
        let diag = rho0 * rho0 * row.iter().map(|z| z.norm_sqr()).sum::<f64>();
        pts.push((k, diag - 1.0));
    }
    if pts.iter().all(|(_, r)| r.abs() < FIT_NOISE_FLOOR) {
        return Ok(SymbolCorrection {
            f1: 0.0,
            c1: 0.0,
            r2: 1.0,
            below_noise: true,
            relative_defects: pts,
        });
    }
    // D_k = (k/π)^d·rel ≈ c₁ k^{d−1}: least squares through the origin.
    let xs: Vec<f64> = pts.iter().map(|(k, _)| k.powi(d - 1)).collect();
    let ys: Vec<f64> = pts.iter().map(|(k, r)| (k / PI).powi(d) * r).collect();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let c1 = sxy / sxx;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c1 * x).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        0.0
    };
    if !(r2 >= FIT_MIN_R2) {
        return Err(Error::IllConditionedFit { r2 });
    }
    let pf = polar_decompose(&flow.a_tau)?;
    let sqrt_det_q = pf.q.determinant().sqrt();
    let f1 = -c1 * PI.powi(d) * sqrt_det_q / (2.0 * rho0 * 2f64.powi(d));
    Ok(SymbolCorrection {
        f1,
        c1,
        r2,
        below_noise: false,
        relative_defects: pts,
    })
}

/// Unitarity defect of the rotation flow for each candidate lift constant.
#[derive(Debug, Clone, Serialize)]
pub struct LiftCalibration {
    pub best: f64,
    pub defects: Vec<(f64, f64)>,
}

pub fn calibrate_lift_constant(
    space: &Arc<ModelSpace>,
    tau: f64,
    candidates: &[f64],
) -> Result<LiftCalibration> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate lift constants".into()));
    }
    let n = 2 * space.d();
    let flow = super::flow_from_hamiltonian(&DMatrix::identity(n, n), tau)?;
    let mut defects = Vec::with_capacity(candidates.len());
    for &c in candidates {
        let op = pullback_operator_with_lift(space, &flow, c)?;
        defects.push((c, unitarity_defect(&op)?.defect));
    }
    let best = defects
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|p| p.0)
        .expect("candidates are nonempty");
    Ok(LiftCalibration { best, defects })
}

#[cfg(test)]
mod tests {
    use super::super::{flow_from_hamiltonian, truncation_for, LIFT_CONSTANT};
    use super::*;

    fn hyperbolic(tau: f64) -> QuadraticFlow {
        flow_from_hamiltonian(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), tau).unwrap()
    }

    #[test]
    fn projector_trace_is_dimension() {
        let space = build_space(1, 4.0, 9).unwrap();
        let t = model_trace(&TruncatedOperator::identity(space));
        assert!((t.value - Complex64::new(10.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn trace_is_linear() {
        let space = build_space(1, 4.0, 9).unwrap();
        let op = pullback_operator(&space, &hyperbolic(0.2)).unwrap();
        let a = Complex64::new(0.3, -1.1);
        let lhs = model_trace(&op.scaled(a)).value;
        assert!((lhs - a * model_trace(&op).value).norm() < 1e-13);
    }

    #[test]
    fn localized_trace_of_rotation_is_finite_geometric_sum() {
        let (k, r2, a) = (16.0, 0.5, 0.7);
        let n = 200;
        let space = build_space(1, k, n).unwrap();
        let flow = flow_from_hamiltonian(&DMatrix::identity(2, 2), a).unwrap();
        let op = pullback_operator(&space, &flow).unwrap();
        let t = localized_trace(&op, r2).unwrap();
        let rho = k * r2 / (k * r2 + 1.0);
        let q = Complex64::from_polar(rho, a);
        let one = Complex64::new(1.0, 0.0);
        let want = rho * (one - q.powu(n as u32 + 1)) / (one - q);
        assert!((t.value - want).norm() < 1e-10 * want.norm());
    }

    #[test]
    fn localized_trace_tail_gate() {
        let space = build_space(1, 64.0, 20).unwrap();
        let op = TruncatedOperator::identity(space);
        assert!(matches!(
            localized_trace(&op, 1.0),
            Err(Error::TailGate { .. })
        ));
    }

    #[test]
    fn rotation_is_unitary() {
        let space = build_space(1, 32.0, 46).unwrap();
        let flow = flow_from_hamiltonian(&DMatrix::identity(2, 2), 1.3).unwrap();
        let op = pullback_operator(&space, &flow).unwrap();
        let u = unitarity_defect(&op).unwrap();
        assert!(u.defect <= 1e-7);
        assert!(u.band_width >= 4);
    }

    #[test]
    fn hyperbolic_defect_with_unit_symbol() {
        let space = build_space(1, 64.0, 64).unwrap();
        let flow = hyperbolic(0.3);
        let op = pullback_operator(&space, &flow).unwrap();
        let u = unitarity_defect(&op).unwrap();
        let nu = 2.0 * 0.3f64.cosh();
        assert!((u.defect - (1.0 - 2.0 / nu)).abs() < 1e-9, "{:?}", u);
    }

    #[test]
    fn lift_constant_calibration_selects_frozen_value() {
        let space = build_space(1, 16.0, 24).unwrap();
        let cal =
            calibrate_lift_constant(&space, 0.5, &[-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]).unwrap();
        assert_eq!(cal.best, LIFT_CONSTANT);
        let others = cal.defects.iter().filter(|(c, _)| *c != 0.0);
        assert!(others.into_iter().all(|(_, d)| *d > 1e-3));
    }

    #[test]
    fn rotation_needs_no_symbol_correction() {
        let flow = flow_from_hamiltonian(&DMatrix::identity(2, 2), 0.4).unwrap();
        let c = fit_symbol_correction(
            &[16.0, 32.0, 64.0],
            |k| truncation_for(k, 8.0, 8),
            &flow,
            1.0,
        )
        .unwrap();
        assert!(c.below_noise);
        assert_eq!(c.f1, 0.0);
    }

    #[test]
    fn schrodinger_residual_is_order_one() {
        let space = build_space(1, 32.0, truncation_for(32.0, 8.0, 8)).unwrap();
        let z = DVector::zeros(2);
        let r = schrodinger_residual(&space, &hyperbolic(0.3), &z, &z, 1e-3).unwrap();
        assert!(r.relative_change < 0.1);
        assert!(r.residual < 1.0);
    }
}
