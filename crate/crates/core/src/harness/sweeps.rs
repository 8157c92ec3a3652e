use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fit::{fit_line, fit_loglog};
use super::record::{sort_records, GateFlags, SweepRecord};
use super::report::{CheckItem, SuiteOutcome};
use super::scenario::{RhoMode, Scenario};
use crate::asymptotics::{
    diagonal_composition, leading_kernel_with, trace_leading, unitarization_modulus, SymbolValue,
};
use crate::error::{Error, Result};
use crate::fock::{
    apply_symbol, build_space, fit_symbol_correction, kernel_value, localized_trace,
    pullback_operator, schrodinger_residual, unitarity_defect, QuadraticFlow, SymbolCorrection,
    TruncatedOperator, FIT_NOISE_FLOOR,
};
use crate::stationary::{
    finite_difference_hessian, gaussian_quadrature_check, gaussian_reduction_check, hessian_path,
    hessian_path_det, leading_gaussian_integral, phase_gradient, phase_psi, prop_phase,
    prop_phase_gradient, signature, sqrt_factor, stationary_point, PhasePoint, SubstitutionVariant,
    REDUCTION_TOL,
};
use crate::symplectic::{
    lemma_identities, nu_routes, polar_decompose, random_symplectic, random_unitary_symplectic,
    random_vector, s_from_fg, SymplecticMatrix,
};

/// Relative residual tolerance of every algebraic identity.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Largest generator norm of the random symplectic samples.
pub const IDENTITY_GENERATOR_NORM: f64 = 2.0;

fn per_sample_seeds(seed: u64, samples: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).map(|_| rng.random()).collect()
}

struct IdentitySample {
    polar: f64,
    nu: f64,
    lemma: f64,
    invariance: f64,
    closure: f64,
    trace_invariance: Option<f64>,
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1.0)
}

fn identity_sample(index: usize, seed: u64) -> Result<IdentitySample> {
    let d = 1 + index % 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = IDENTITY_GENERATOR_NORM * rng.random_range(0.0..=1.0);
    let a = random_symplectic(d, scale, rng.random())?;
    let pf = polar_decompose(&a)?;
    let n = 2 * d;
    let u = random_vector(&mut rng, n, 1.0);
    let w = random_vector(&mut rng, n, 1.0);

    let id = DMatrix::<f64>::identity(n, n);
    let recon = (&pf.o * &pf.p - a.matrix()).amax() / a.matrix().amax();
    let orth = (pf.o.transpose() * &pf.o - &id).amax();
    let polar = recon.max(orth);

    let nu = nu_routes(&a)?.max_relative_spread();
    let lemma = lemma_identities(&a)?.max_residual();

    let r = random_unitary_symplectic(d, rng.random())?;
    let s = random_unitary_symplectic(d, rng.random())?;
    let conj = SymplecticMatrix::new(r.matrix() * a.matrix() * s.matrix().transpose())?;
    let s0 = pf.s_form(&u, &w)?;
    let s1 = polar_decompose(&conj)?.s_form(&(s.matrix() * &u), &(r.matrix() * &w))?;
    let invariance = rel(s0, s1);

    let gfg = crate::symplectic::gamma_fg(&a, &u, &w)?;
    let closure = rel(s0, s_from_fg(&a, &pf, &u, &w)?)
        .max(rel(s0, gfg.completed_square(&pf.q_inv)))
        .max(gfg.f_route_residual / gfg.f.amax().max(1.0));

    let rot = SymplecticMatrix::new(r.matrix() * a.matrix() * r.matrix().transpose())?;
    let trace_invariance = match (
        trace_leading(&a, SymbolValue::one()),
        trace_leading(&rot, SymbolValue::one()),
    ) {
        (Ok(t0), Ok(t1)) => Some(rel(t0.value, t1.value)),
        _ => None,
    };
    Ok(IdentitySample {
        polar,
        nu,
        lemma,
        invariance,
        closure,
        trace_invariance,
    })
}

/// Algebraic identities of the symplectic layer on `samples` seeded random
/// matrices with d cycling through 1, 2, 3.
pub fn run_identity_suite(seed: u64, samples: usize) -> Result<SuiteOutcome> {
    if samples == 0 {
        return Err(Error::InvalidInput(
            "identity suite needs at least one sample".into(),
        ));
    }
    let seeds = per_sample_seeds(seed, samples);
    let results: Vec<IdentitySample> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| identity_sample(i, s))
        .collect::<Result<_>>()?;
    let max_of = |f: &dyn Fn(&IdentitySample) -> f64| results.iter().map(f).fold(0.0, f64::max);
    let trace_samples = results
        .iter()
        .filter(|r| r.trace_invariance.is_some())
        .count();
    let items: [(&str, f64); 6] = [
        ("polar_reconstruction", max_of(&|r| r.polar)),
        ("nu_three_routes", max_of(&|r| r.nu)),
        ("lemma_matrix_identities", max_of(&|r| r.lemma)),
        ("s_unitary_invariance", max_of(&|r| r.invariance)),
        ("leading_term_closure", max_of(&|r| r.closure)),
        (
            "trace_conjugation_invariance",
            max_of(&|r| r.trace_invariance.unwrap_or(0.0)),
        ),
    ];
    let mut out = SuiteOutcome::new("identities", &format!("seed-{seed}"));
    for (name, value) in items {
        out.records.push(SweepRecord::real(
            &out.scenario,
            0.0,
            name,
            value,
            0.0,
            GateFlags::ok(),
        ));
        out.checks
            .push(CheckItem::at_most(name, Some(value), IDENTITY_TOL));
    }
    out.push_value("samples", samples as f64);
    out.push_value("trace_samples", trace_samples as f64);
    sort_records(&mut out.records);
    Ok(out)
}

/// Executable checks of the stationary-phase computation; `samples`
/// random draws feed the Gaussian-reduction identities.
pub fn run_stationary_phase_suite(seed: u64, samples: usize) -> Result<SuiteOutcome> {
    if samples == 0 {
        return Err(Error::InvalidInput(
            "stationary-phase suite needs at least one sample".into(),
        ));
    }
    let mut out = SuiteOutcome::new("stationary-phase", &format!("seed-{seed}"));
    let crit = PhasePoint::critical();
    let push = |out: &mut SuiteOutcome, name: &str, value: f64, tol: f64| {
        out.records.push(SweepRecord::real(
            &out.scenario,
            0.0,
            name,
            value,
            0.0,
            GateFlags::ok(),
        ));
        out.checks.push(CheckItem::at_most(name, Some(value), tol));
    };

    let grad = phase_gradient(&crit)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    push(
        &mut out,
        "gradient_at_critical_point",
        grad + phase_psi(&crit).norm(),
        1e-12,
    );

    let psi = |q: &[f64; 4]| {
        phase_psi(&PhasePoint {
            t: q[0],
            theta: q[1],
            u: q[2],
            vartheta: q[3],
        })
    };
    let fd = finite_difference_hessian(psi, &crit.to_array(), 1e-3);
    push(
        &mut out,
        "finite_difference_hessian",
        (fd - hessian_path(1.0)).map(|z| z.norm()).max(),
        1e-8,
    );

    let det_dev = (0..=100)
        .map(|j| (hessian_path_det(j as f64 / 100.0) - 1.0).norm())
        .fold(0.0, f64::max);
    push(&mut out, "hessian_path_determinant", det_dev, 1e-12);
    let (pos, neg) = signature(&hessian_path(0.0).map(|z| z.re));
    out.checks.push(CheckItem::holds(
        "hessian_path_start_signature",
        (pos, neg) == (2, 2),
        "signature (2, 2)",
    ));

    let mut sqrt_dev: f64 = 0.0;
    for k in [1.0, 2.0 * PI, 10.0, 100.0, 1000.0] {
        let f = sqrt_factor(k)?;
        let want = (k / (2.0 * PI)).powi(2);
        sqrt_dev = sqrt_dev.max((f.value - want).norm() / want);
    }
    push(&mut out, "sqrt_factor", sqrt_dev, 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut newton_dev: f64 = 0.0;
    for _ in 0..16 {
        let start = PhasePoint::new(
            1.0 + rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            1.0 + rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
        )?;
        let p = stationary_point(&start)?;
        let dev = p
            .to_array()
            .iter()
            .zip(crit.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        newton_dev = newton_dev.max(dev);
    }
    push(&mut out, "newton_stationary_point", newton_dev, 1e-10);
    let far = PhasePoint::new(40.0, 5.0, 0.01, -7.0)?;
    out.checks.push(CheckItem::holds(
        "newton_far_start_rejected",
        matches!(stationary_point(&far), Err(Error::NonConvergence { .. })),
        "non-convergence error",
    ));

    let seeds = per_sample_seeds(seed ^ 0x5eed, samples);
    let draws: Vec<(f64, f64, bool)> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| -> Result<(f64, f64, bool)> {
            let d = 1 + i % 3;
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let a = random_symplectic(
                d,
                IDENTITY_GENERATOR_NORM * rng.random_range(0.0..=1.0),
                rng.random(),
            )?;
            let u = random_vector(&mut rng, 2 * d, 1.0);
            let w = random_vector(&mut rng, 2 * d, 1.0);
            let sv = random_vector(&mut rng, 2 * d, 1.0);
            let check = gaussian_reduction_check(&a, &u, &w, &sv)?;
            let routes = leading_gaussian_integral(&a, &u, &w)?.route_discrepancy();
            Ok((
                check.residual(),
                routes,
                check.variant == SubstitutionVariant::ATranspose,
            ))
        })
        .collect::<Result<_>>()?;
    push(
        &mut out,
        "gaussian_reduction",
        draws.iter().map(|x| x.0).fold(0.0, f64::max),
        REDUCTION_TOL,
    );
    push(
        &mut out,
        "leading_term_routes",
        draws.iter().map(|x| x.1).fold(0.0, f64::max),
        IDENTITY_TOL,
    );
    let transposed = draws.iter().filter(|x| x.2).count();
    out.push_value("reduction_samples", samples as f64);
    out.push_value("reduction_transpose_variant", transposed as f64);

    let mut quad_dev: f64 = 0.0;
    for _ in 0..3 {
        let a = random_symplectic(1, rng.random_range(0.2..1.0), rng.random())?;
        let u = random_vector(&mut rng, 2, 1.0);
        let w = random_vector(&mut rng, 2, 1.0);
        quad_dev = quad_dev.max(gaussian_quadrature_check(&a, &u, &w)?.relative_error);
    }
    push(&mut out, "oscillatory_quadrature_d1", quad_dev, 1e-6);

    let mut prop_dev: f64 = 0.0;
    let h0 = prop_phase(0.0, 1.0).hessian;
    for (tau, f0) in [(0.0, 1.0), (0.5, 2.0), (1.7, -0.3), (-2.0, 0.8)] {
        let p = prop_phase(tau, f0);
        let g = prop_phase_gradient(tau, f0, &p.point)
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        prop_dev = prop_dev
            .max(g)
            .max((p.value - tau * f0).abs())
            .max((&p.hessian - &h0).amax());
    }
    push(&mut out, "propagator_phase", prop_dev, 1e-12);
    sort_records(&mut out.records);
    Ok(out)
}

/// Symbol ϱ(k) for each level of a scenario, with the fitted correction
/// in corrected mode.
struct SymbolSchedule {
    rho0: f64,
    f1: f64,
}

impl SymbolSchedule {
    fn at(&self, k: f64) -> SymbolValue {
        SymbolValue::real(self.rho0 + self.f1 / k)
    }
}

fn schedule(
    sc: &Scenario,
    flow: &QuadraticFlow,
    mode: RhoMode,
    levels: &[f64],
) -> Result<(SymbolSchedule, Option<SymbolCorrection>)> {
    Ok(match mode {
        RhoMode::One => (SymbolSchedule { rho0: 1.0, f1: 0.0 }, None),
        RhoMode::Unitarized => (
            SymbolSchedule {
                rho0: unitarization_modulus(&flow.a_tau)?,
                f1: 0.0,
            },
            None,
        ),
        RhoMode::Corrected => {
            let rho0 = unitarization_modulus(&flow.a_tau)?;
            let c = fit_symbol_correction(levels, |k| sc.truncation_at(k), flow, rho0)?;
            (SymbolSchedule { rho0, f1: c.f1 }, Some(c))
        }
    })
}

fn model_operator(
    sc: &Scenario,
    flow: &QuadraticFlow,
    k: f64,
    rho: SymbolValue,
) -> Result<TruncatedOperator> {
    let space = build_space(sc.d, k, sc.truncation_at(k))?;
    Ok(apply_symbol(&pullback_operator(&space, flow)?, rho.0))
}

fn noise_gate(rel_err: f64) -> GateFlags {
    if rel_err < FIT_NOISE_FLOOR {
        GateFlags::NOISE
    } else {
        GateFlags::ok()
    }
}

fn collect_sorted(per_k: Vec<Vec<SweepRecord>>) -> Vec<SweepRecord> {
    let mut records: Vec<SweepRecord> = per_k.into_iter().flatten().collect();
    sort_records(&mut records);
    records
}

fn series<'a>(
    records: &'a [SweepRecord],
    quantity: &'a str,
) -> impl Iterator<Item = &'a SweepRecord> + 'a {
    records.iter().filter(move |r| r.quantity == quantity)
}

/// Model kernel against the leading prediction at each offset and level,
/// plus the off-graph decay series when configured.
pub fn run_kernel_sweep(sc: &Scenario) -> Result<SuiteOutcome> {
    sc.validate()?;
    let flow = sc.flow()?;
    let pf = polar_decompose(&flow.a_tau)?;
    let levels = sc.levels();
    let (sched, _) = schedule(sc, &flow, sc.rho_mode, &levels)?;
    let offsets: Vec<(String, DVector<f64>, DVector<f64>)> = sc
        .offsets
        .iter()
        .map(|o| {
            o.resolve(&flow.a_tau)
                .map(|(u, w)| (format!("kernel:{}", o.label), u, w))
        })
        .collect::<Result<_>>()?;
    let n = 2 * sc.d;
    let base = DVector::zeros(n);
    let id = sc.id.as_str();

    let per_k: Vec<Vec<SweepRecord>> = levels
        .par_iter()
        .map(|&k| {
            let rho = sched.at(k);
            let mut quantities: Vec<(String, DVector<f64>, DVector<f64>)> = offsets.clone();
            if let Some(dc) = &sc.decay {
                let w = DVector::from_column_slice(&dc.delta) * k.sqrt();
                quantities.push(("decay".into(), DVector::zeros(n), w));
            }
            let op = match model_operator(sc, &flow, k, rho) {
                Ok(op) => op,
                Err(e) => {
                    return quantities
                        .iter()
                        .map(|(q, _, _)| SweepRecord::failed(id, k, q, &e))
                        .collect()
                }
            };
            quantities
                .iter()
                .map(|(q, u, w)| {
                    let eval = || -> Result<SweepRecord> {
                        let s = kernel_value(&op, &base, &flow, u, w)?;
                        let p = leading_kernel_with(&pf, rho, k, u, w)?;
                        let mut r = SweepRecord::new(id, k, q, s.value, p.value, GateFlags::ok());
                        if s.flagged {
                            r.gate = r.gate.with(GateFlags::TAIL);
                        }
                        if q != "decay" {
                            r.gate = r.gate.with(noise_gate(r.rel_err));
                        }
                        Ok(r)
                    };
                    eval().unwrap_or_else(|e| SweepRecord::failed(id, k, q, &e))
                })
                .collect()
        })
        .collect();

    let mut out = SuiteOutcome::new("kernel-sweep", id);
    out.records = collect_sorted(per_k);
    let th = &sc.thresholds;
    for o in &sc.offsets {
        let q = format!("kernel:{}", o.label);
        let pts: Vec<(f64, f64, bool)> = series(&out.records, &q)
            .map(|r| (r.k, r.rel_err, r.gate.is_ok()))
            .collect();
        let fit = fit_loglog(&pts);
        out.push_fit(&q, true, fit, &pts);
        if let Some([lo, hi]) = o.slope_range {
            out.checks.push(CheckItem::within(
                format!("slope:{}", o.label),
                fit.slope,
                lo,
                hi,
            ));
        }
        if let Some(tol) = th.ratio_tolerance {
            let worst = series(&out.records, &q)
                .filter(|r| th.ratio_k.is_none_or(|k| r.k == k as f64))
                .map(|r| r.rel_err)
                .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
            let at = th
                .ratio_k
                .map_or_else(|| "all k".to_string(), |k| format!("k={k}"));
            out.checks.push(CheckItem::at_most(
                format!("ratio:{} ({at})", o.label),
                worst,
                tol,
            ));
        }
    }
    if let Some(decay) = &sc.decay {
        let d = sc.d as f64;
        let pts: Vec<(f64, f64, bool)> = series(&out.records, "decay")
            .map(|r| (r.k, r.model.norm().ln() - d * r.k.ln(), r.gate.is_ok()))
            .collect();
        let fit = fit_line(&pts);
        out.push_fit("decay", false, fit, &pts);
        out.checks
            .push(CheckItem::at_most("decay:slope", fit.slope, 0.0));
        if let Some(min) = th.decay_min_r2 {
            out.checks
                .push(CheckItem::at_least("decay:r2", fit.r2, min));
        }
        let predicted_slope = pf
            .s_form(
                &DVector::zeros(n),
                &DVector::from_column_slice(&decay.delta),
            )?
            .re;
        out.push_value("decay_predicted_slope", predicted_slope);
    }
    out.push_gate_check();
    Ok(out)
}

fn defect_series(
    sc: &Scenario,
    flow: &QuadraticFlow,
    mode: RhoMode,
    sched: &SymbolSchedule,
) -> Vec<SweepRecord> {
    let quantity = format!("unitarity_defect:{}", mode_name(mode));
    let id = sc.id.as_str();
    let kd = |k: f64| (k / PI).powi(sc.d as i32);
    let per_k: Vec<Vec<SweepRecord>> = sc
        .levels()
        .par_iter()
        .map(|&k| {
            let rho = sched.at(k);
            let eval = || -> Result<SweepRecord> {
                let op = model_operator(sc, flow, k, rho)?;
                let defect = unitarity_defect(&op)?.defect;
                // Leading diagonal of UU* relative to Π_k.
                let leading =
                    diagonal_composition(&flow.a_tau, SymbolValue::real(sched.rho0), k)? / kd(k);
                let mut r = SweepRecord::real(
                    id,
                    k,
                    &quantity,
                    defect,
                    (leading - 1.0).abs(),
                    GateFlags::ok(),
                );
                if defect < FIT_NOISE_FLOOR {
                    r.gate = GateFlags::NOISE;
                }
                Ok(r)
            };
            vec![eval().unwrap_or_else(|e| SweepRecord::failed(id, k, &quantity, &e))]
        })
        .collect();
    collect_sorted(per_k)
}

fn mode_name(mode: RhoMode) -> &'static str {
    match mode {
        RhoMode::One => "one",
        RhoMode::Unitarized => "unitarized",
        RhoMode::Corrected => "corrected",
    }
}

/// ‖UU† − I‖ per level for the scenario's symbol mode; corrected mode also
/// runs the unitarized symbol for comparison.
pub fn run_unitarity_sweep(sc: &Scenario) -> Result<SuiteOutcome> {
    sc.validate()?;
    let flow = sc.flow()?;
    let levels = sc.levels();
    let mut out = SuiteOutcome::new("unitarity-sweep", &sc.id);
    let mut modes = vec![sc.rho_mode];
    if sc.rho_mode == RhoMode::Corrected {
        modes.insert(0, RhoMode::Unitarized);
    }
    for &mode in &modes {
        let (sched, corr) = schedule(sc, &flow, mode, &levels)?;
        out.records.extend(defect_series(sc, &flow, mode, &sched));
        if let Some(c) = corr {
            out.push_value("rho0", sched.rho0);
            out.push_value("f1", c.f1);
            out.push_value("c1", c.c1);
            out.push_value("f1_fit_r2", c.r2);
            out.push_value("f1_below_noise", if c.below_noise { 1.0 } else { 0.0 });
        }
    }
    sort_records(&mut out.records);
    for &mode in &modes {
        let q = format!("unitarity_defect:{}", mode_name(mode));
        let pts: Vec<(f64, f64, bool)> = series(&out.records, &q)
            .map(|r| (r.k, r.model.re, r.gate.is_ok()))
            .collect();
        out.push_fit(&q, true, fit_loglog(&pts), &pts);
    }
    let primary = format!("unitarity_defect:{}", mode_name(sc.rho_mode));
    let primary_fit = *out.fit(&primary).expect("primary series was fitted");
    let th = sc.thresholds.clone();
    if let Some(max) = th.defect_max {
        let worst = series(&out.records, &primary)
            .map(|r| r.model.re)
            .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
        out.checks
            .push(CheckItem::at_most("defect_max", worst, max));
    }
    if let Some(max) = th.defect_slope_max {
        out.checks
            .push(CheckItem::at_most("defect_slope", primary_fit.slope, max));
    }
    if let Some(max) = th.plateau_slope_max {
        out.checks.push(CheckItem::at_most(
            "plateau_slope",
            primary_fit.slope.map(f64::abs),
            max,
        ));
    }
    if sc.rho_mode == RhoMode::Corrected {
        if let Some(min) = th.improvement_min {
            let base = out.fit("unitarity_defect:unitarized").and_then(|f| f.slope);
            let improvement = base.zip(primary_fit.slope).map(|(b, c)| b - c);
            out.checks
                .push(CheckItem::at_least("slope_improvement", improvement, min));
        }
        if let Some(tol) = th.window_stability {
            if levels.len() < 3 {
                return Err(Error::InvalidInput(
                    "window stability needs at least three levels".into(),
                ));
            }
            let rho0 = unitarization_modulus(&flow.a_tau)?;
            let fa = fit_symbol_correction(
                &levels[..levels.len() - 1],
                |k| sc.truncation_at(k),
                &flow,
                rho0,
            )?
            .f1;
            let fb = fit_symbol_correction(&levels[1..], |k| sc.truncation_at(k), &flow, rho0)?.f1;
            let scale = fa.abs().max(fb.abs());
            let spread = if scale == 0.0 {
                0.0
            } else {
                (fa - fb).abs() / scale
            };
            out.push_value("f1_window_low", fa);
            out.push_value("f1_window_high", fb);
            out.checks
                .push(CheckItem::at_most("f1_window_stability", Some(spread), tol));
        }
    }
    out.push_gate_check();
    Ok(out)
}

/// Σ_{n ≤ N} C(n+d−1, d−1) ρ^{n+d} e^{ian}: the exact localized trace of
/// the rotation z ↦ e^{ia}z (geometric series for d = 1).
pub fn rotation_trace_oracle(
    d: usize,
    k: f64,
    n_max: usize,
    radius_sq: f64,
    angle: f64,
) -> Complex64 {
    let rho = k * radius_sq / (k * radius_sq + 1.0);
    let q = Complex64::from_polar(rho, angle);
    let one = Complex64::new(1.0, 0.0);
    if d == 1 {
        return rho * (one - q.powu(n_max as u32 + 1)) / (one - q);
    }
    let mut sum = Complex64::new(0.0, 0.0);
    let mut mult = 1.0;
    let mut qn = one;
    for n in 0..=n_max {
        if n > 0 {
            mult *= (n + d - 1) as f64 / n as f64;
            qn *= q;
        }
        sum += mult * qn;
    }
    sum * rho.powi(d as i32)
}

/// If H = h·I the flow is the rotation by hτ; returns the angle.
fn rotation_angle(sc: &Scenario) -> Option<f64> {
    let h = sc.hamiltonian_matrix();
    let c = h[(0, 0)];
    let n = h.nrows();
    ((&h - DMatrix::identity(n, n) * c).amax() == 0.0 && c != 0.0).then_some(c * sc.tau)
}

/// Localized model trace against the fixed-point formula.
pub fn run_trace_sweep(sc: &Scenario) -> Result<SuiteOutcome> {
    sc.validate()?;
    let cfg = sc
        .trace
        .ok_or_else(|| Error::InvalidInput("trace sweep needs a [trace] section".into()))?;
    let flow = sc.flow()?;
    let levels = sc.levels();
    let (sched, _) = schedule(sc, &flow, sc.rho_mode, &levels)?;
    // Rejects degenerate fixed points before any model work.
    trace_leading(&flow.a_tau, sched.at(levels[0]))?;
    let angle = rotation_angle(sc);
    let id = sc.id.as_str();
    let per_k: Vec<Vec<SweepRecord>> = levels
        .par_iter()
        .map(|&k| {
            let rho = sched.at(k);
            let eval = || -> Result<Vec<SweepRecord>> {
                let pred = trace_leading(&flow.a_tau, rho)?;
                let op = model_operator(sc, &flow, k, rho)?;
                let lt = localized_trace(&op, cfg.radius_sq)?;
                let mut recs = vec![SweepRecord::new(
                    id,
                    k,
                    "trace",
                    lt.value,
                    pred.value,
                    GateFlags::ok(),
                )];
                if let Some(a) = angle {
                    let oracle =
                        rotation_trace_oracle(sc.d, k, sc.truncation_at(k), cfg.radius_sq, a)
                            * rho.0;
                    recs.push(SweepRecord::new(
                        id,
                        k,
                        "trace_oracle",
                        lt.value,
                        oracle,
                        GateFlags::ok(),
                    ));
                }
                Ok(recs)
            };
            eval().unwrap_or_else(|e| vec![SweepRecord::failed(id, k, "trace", &e)])
        })
        .collect();
    let mut out = SuiteOutcome::new("trace-sweep", id);
    out.records = collect_sorted(per_k);
    let pts: Vec<(f64, f64, bool)> = series(&out.records, "trace")
        .map(|r| (r.k, r.rel_err, r.gate.is_ok()))
        .collect();
    let fit = fit_loglog(&pts);
    out.push_fit("trace", true, fit, &pts);
    let th = &sc.thresholds;
    if let Some(tol) = th.trace_tolerance {
        let k_ref = th
            .trace_k
            .map(|k| k as f64)
            .unwrap_or(*levels.last().unwrap());
        let err = series(&out.records, "trace")
            .find(|r| r.k == k_ref && r.gate.is_ok())
            .map(|r| r.rel_err);
        out.checks.push(CheckItem::at_most(
            format!("trace_rel_err (k={k_ref})"),
            err,
            tol,
        ));
    }
    if th.trace_decreasing == Some(true) {
        let errs: Vec<f64> = series(&out.records, "trace")
            .filter(|r| r.gate.is_ok())
            .map(|r| r.rel_err)
            .collect();
        let decreasing = errs.len() == levels.len() && errs.windows(2).all(|p| p[1] < p[0]);
        out.checks.push(CheckItem::holds(
            "trace_decreasing",
            decreasing,
            "strictly decreasing in k",
        ));
        out.checks
            .push(CheckItem::at_most("trace_slope", fit.slope, 0.0));
    }
    if let Some(tol) = th.oracle_tolerance {
        let worst = series(&out.records, "trace_oracle")
            .map(|r| r.rel_err)
            .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
        out.checks
            .push(CheckItem::at_most("trace_oracle", worst, tol));
    }
    out.push_gate_check();
    Ok(out)
}

/// Normalized residual of the Schrödinger equation per level.
pub fn run_schrodinger_check(sc: &Scenario) -> Result<SuiteOutcome> {
    sc.validate()?;
    let cfg = sc.schrodinger.clone().ok_or_else(|| {
        Error::InvalidInput("schrodinger check needs a [schrodinger] section".into())
    })?;
    let flow = sc.flow()?;
    let u = DVector::from_column_slice(&cfg.u);
    let w = DVector::from_column_slice(&cfg.w);
    let id = sc.id.as_str();
    let q = "schrodinger_residual";
    let per_k: Vec<Vec<SweepRecord>> = sc
        .levels()
        .par_iter()
        .map(|&k| {
            let eval = || -> Result<SweepRecord> {
                let space = build_space(sc.d, k, sc.truncation_at(k))?;
                let r = schrodinger_residual(&space, &flow, &u, &w, cfg.dtau)?;
                Ok(SweepRecord::real(
                    id,
                    k,
                    q,
                    r.residual,
                    0.0,
                    GateFlags::ok(),
                ))
            };
            vec![eval().unwrap_or_else(|e| SweepRecord::failed(id, k, q, &e))]
        })
        .collect();
    let mut out = SuiteOutcome::new("schrodinger-check", id);
    out.records = collect_sorted(per_k);
    let pts: Vec<(f64, f64, bool)> = series(&out.records, q)
        .map(|r| (r.k, r.model.re, r.gate.is_ok()))
        .collect();
    let fit = fit_loglog(&pts);
    out.push_fit(q, true, fit, &pts);
    if let Some(max) = sc.thresholds.schrodinger_slope_max {
        out.checks
            .push(CheckItem::at_most("residual_slope", fit.slope, max));
    }
    out.push_gate_check();
    Ok(out)
}
