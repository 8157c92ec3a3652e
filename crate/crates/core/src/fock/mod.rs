//! The Bargmann–Fock model at level k: holomorphic functions on C^d with
//! weight e^{−k|z|²}, truncated to monomials of total degree ≤ N.
//!
//! Everything is computed in rescaled coordinates ζ = √k·z. The normalized
//! basis is F_m(ζ) = ζ^m e^{−|ζ|²/2}/√(π^d m!), orthonormal for Lebesgue
//! measure on C^d ≅ R^{2d}, and e_m(z) = k^{d/2}F_m(√k z). Matrices of
//! pulled-back flows and of Toeplitz operators with k-homogeneous symbols are
//! therefore k-independent; k only enters through N(k), evaluation points
//! and explicit powers of k.

mod container;
mod diagnostics;
mod flow;
mod operator;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::GaussianRule;

pub use container::OperatorContainer;
pub use diagnostics::{
    calibrate_lift_constant, fit_symbol_correction, localized_trace, model_trace,
    schrodinger_residual, unitarity_defect, LiftCalibration, LocalizedTrace, ModelTrace,
    SchrodingerResidual, SymbolCorrection, UnitarityDefect, FIT_NOISE_FLOOR, STEP_HALVING_TOL,
    TRACE_TAIL_TOL, UNITARITY_TAIL_TOL,
};
pub use flow::{flow_from_hamiltonian, QuadraticFlow, LIFT_CONSTANT};
pub use operator::{
    apply_symbol, compress_symbol, kernel_value, pullback_operator, pullback_operator_with_lift,
    szego_kernel, toeplitz_f, toeplitz_gaussian_bump, KernelSample, TruncatedOperator,
    KERNEL_TAIL_TOL,
};

/// Maximum entry of |G − I| accepted by the Gram gate.
pub const GRAM_TOL: f64 = 1e-9;

/// Truncated level-k model space.
#[derive(Debug, Clone)]
pub struct ModelSpace {
    d: usize,
    k: f64,
    n_max: usize,
    indices: Vec<Vec<usize>>,
    points_per_dim: usize,
    gram_residual: f64,
}

/// Builds the space and runs the Gram gate.
pub fn build_space(d: usize, k: f64, n_max: usize) -> Result<Arc<ModelSpace>> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if !(k > 0.0) {
        return Err(Error::InvalidInput(format!(
            "level must be positive, got {k}"
        )));
    }
    let indices = multi_indices(d, n_max);
    let points_per_dim = n_max + 2;
    let gram_residual = gram_residual_cached(d, n_max, points_per_dim, &indices)?;
    if !(gram_residual <= GRAM_TOL) {
        return Err(Error::GramGate {
            residual: gram_residual,
            tolerance: GRAM_TOL,
        });
    }
    Ok(Arc::new(ModelSpace {
        d,
        k,
        n_max,
        indices,
        points_per_dim,
        gram_residual,
    }))
}

/// The default truncation rule N(k) = ⌈multiplier·√k⌉, at least `minimum`.
pub fn truncation_for(k: f64, multiplier: f64, minimum: usize) -> usize {
    ((multiplier * k.sqrt()).ceil() as usize).max(minimum)
}

impl ModelSpace {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn degree(&self, i: usize) -> usize {
        self.indices[i].iter().sum()
    }

    pub fn gram_residual(&self) -> f64 {
        self.gram_residual
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    /// F_m(ζ) for every basis element, ζ given in real coordinates.
    pub fn basis_at(&self, t: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        let tables = one_dim_tables(self.d, self.n_max, t);
        fill_basis(&self.indices, &tables, self.d, &mut out);
        out
    }
}

/// Multi-indices of total degree ≤ N, graded by degree.
fn multi_indices(d: usize, n_max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for deg in 0..=n_max {
        let mut cur = vec![0usize; d];
        push_compositions(deg, 0, &mut cur, &mut out);
    }
    out
}

fn push_compositions(rest: usize, slot: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if slot + 1 == cur.len() {
        cur[slot] = rest;
        out.push(cur.clone());
        return;
    }
    for v in (0..=rest).rev() {
        cur[slot] = v;
        push_compositions(rest - v, slot + 1, cur, out);
    }
    cur[slot] = 0;
}

/// Per coordinate a, the values g_n = ζ_a^n e^{−|ζ_a|²/2}/√n! for n ≤ N.
pub(crate) fn one_dim_tables(d: usize, n_max: usize, t: &[f64]) -> Vec<Vec<Complex64>> {
    (0..d)
        .map(|a| {
            let z = Complex64::new(t[a], t[d + a]);
            scaled_powers(z, n_max)
        })
        .collect()
}

/// ζ^n e^{−|ζ|²/2}/√n!, switching to logarithms where the Gaussian factor
/// would underflow.
pub(crate) fn scaled_powers(z: Complex64, n_max: usize) -> Vec<Complex64> {
    let r2 = z.norm_sqr();
    let mut out = Vec::with_capacity(n_max + 1);
    if r2 < 1200.0 {
        let mut g = Complex64::new((-0.5 * r2).exp(), 0.0);
        out.push(g);
        for n in 0..n_max {
            g = g * z / ((n + 1) as f64).sqrt();
            out.push(g);
        }
    } else {
        let ln_r = 0.5 * r2.ln();
        let arg = z.arg();
        let mut ln_fact = 0.0;
        for n in 0..=n_max {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            let ln_mod = n as f64 * ln_r - 0.5 * ln_fact - 0.5 * r2;
            out.push(Complex64::from_polar(ln_mod.exp(), n as f64 * arg));
        }
    }
    out
}

pub(crate) fn fill_basis(
    indices: &[Vec<usize>],
    tables: &[Vec<Complex64>],
    d: usize,
    out: &mut [Complex64],
) {
    let norm = PI.powf(-(d as f64) / 2.0);
    for (slot, m) in out.iter_mut().zip(indices) {
        let mut v = Complex64::new(norm, 0.0);
        for (a, &ma) in m.iter().enumerate() {
            v *= tables[a][ma];
        }
        *slot = v;
    }
}

/// Real and imaginary parts of F_m at the rule's nodes (optionally mapped
/// through a real linear map first), laid out as count × dim.
pub(crate) fn basis_block(
    indices: &[Vec<usize>],
    d: usize,
    n_max: usize,
    nodes: &DMatrix<f64>,
    cols: std::ops::Range<usize>,
    map: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let count = cols.len();
    let dim = indices.len();
    let mut re = DMatrix::zeros(count, dim);
    let mut im = DMatrix::zeros(count, dim);
    let mut vals = vec![Complex64::new(0.0, 0.0); dim];
    for (row, c) in cols.enumerate() {
        let t = nodes.column(c).into_owned();
        let t = match map {
            Some(m) => m * t,
            None => t,
        };
        let tables = one_dim_tables(d, n_max, t.as_slice());
        fill_basis(indices, &tables, d, &mut vals);
        for (j, v) in vals.iter().enumerate() {
            re[(row, j)] = v.re;
            im[(row, j)] = v.im;
        }
    }
    (re, im)
}

/// Nodes per block in the chunked quadrature products.
pub(crate) const CHUNK: usize = 4096;

/// Extra factor evaluated at each quadrature point.
pub(crate) type PointFactor<'a> = &'a (dyn Fn(&[f64]) -> Complex64 + Sync);

/// Σ_i ω_i conj(F_m(x_i)) F_n(y_i) g_i as a dim × dim complex matrix, with
/// x_i the rule's nodes and y_i = map·x_i. `row_filter`, when given,
/// restricts the computation to pairs (m, n) in the same block.
pub(crate) fn quadrature_matrix(
    indices: &[Vec<usize>],
    d: usize,
    n_max: usize,
    rule: &GaussianRule,
    map: Option<&DMatrix<f64>>,
    extra: Option<PointFactor<'_>>,
    blocks: Option<&[std::ops::Range<usize>]>,
) -> DMatrix<Complex64> {
    let dim = indices.len();
    let count = rule.len();
    let mut acc_re = DMatrix::<f64>::zeros(dim, dim);
    let mut acc_im = DMatrix::<f64>::zeros(dim, dim);
    let mut start = 0;
    while start < count {
        let end = (start + CHUNK).min(count);
        let (xr, xi) = basis_block(indices, d, n_max, &rule.nodes, start..end, None);
        let (mut yr, mut yi) = match map {
            Some(_) => basis_block(indices, d, n_max, &rule.nodes, start..end, map),
            None => (xr.clone(), xi.clone()),
        };
        // Fold weights (and the extra factor) into the y side.
        for (row, c) in (start..end).enumerate() {
            let mut w = Complex64::new(rule.weights[c], 0.0);
            if let Some(g) = extra {
                let t = rule.nodes.column(c);
                w *= g(t.as_slice());
            }
            for j in 0..dim {
                let y = Complex64::new(yr[(row, j)], yi[(row, j)]) * w;
                yr[(row, j)] = y.re;
                yi[(row, j)] = y.im;
            }
        }
        match blocks {
            None => {
                let xrt = xr.transpose();
                let xit = xi.transpose();
                acc_re += &xrt * &yr + &xit * &yi;
                acc_im += &xrt * &yi - &xit * &yr;
            }
            Some(bs) => {
                for b in bs {
                    let n = b.len();
                    let xrb = xr.columns(b.start, n).transpose();
                    let xib = xi.columns(b.start, n).transpose();
                    let yrb = yr.columns(b.start, n);
                    let yib = yi.columns(b.start, n);
                    let re = &xrb * yrb + &xib * yib;
                    let im = &xrb * yib - &xib * yrb;
                    let mut tr = acc_re.view_mut((b.start, b.start), (n, n));
                    tr += re;
                    let mut ti = acc_im.view_mut((b.start, b.start), (n, n));
                    ti += im;
                }
            }
        }
        start = end;
    }
    DMatrix::from_fn(dim, dim, |i, j| {
        Complex64::new(acc_re[(i, j)], acc_im[(i, j)])
    })
}

/// Index ranges of equal total degree.
pub(crate) fn degree_blocks(indices: &[Vec<usize>]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=indices.len() {
        let deg = |j: usize| indices[j].iter().sum::<usize>();
        if i == indices.len() || deg(i) != deg(start) {
            out.push(start..i);
            start = i;
        }
    }
    out
}

type GramKey = (usize, usize, usize);

fn gram_cache() -> &'static Mutex<HashMap<GramKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<GramKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// max |G − I| for the standard rule. The Gram matrix does not depend on
/// k, so results are memoized per (d, N, M).
fn gram_residual_cached(d: usize, n_max: usize, m: usize, indices: &[Vec<usize>]) -> Result<f64> {
    let key = (d, n_max, m);
    if let Some(r) = gram_cache().lock().expect("gram cache poisoned").get(&key) {
        return Ok(*r);
    }
    let rule = GaussianRule::new(&DMatrix::identity(2 * d, 2 * d), m)?;
    let g = quadrature_matrix(indices, d, n_max, &rule, None, None, None);
    let dim = indices.len();
    let mut res: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let want = if i == j { 1.0 } else { 0.0 };
            res = res.max((g[(i, j)] - want).norm());
        }
    }
    gram_cache()
        .lock()
        .expect("gram cache poisoned")
        .insert(key, res);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_space() {
        let s = build_space(1, 1.0, 0).unwrap();
        assert_eq!(s.dim(), 1);
        assert!(s.gram_residual() < 1e-14);
    }

    #[test]
    fn dimension_is_binomial() {
        assert_eq!(multi_indices(2, 3).len(), 10);
        assert_eq!(multi_indices(3, 4).len(), 35);
        assert_eq!(multi_indices(1, 7).len(), 8);
        let idx = multi_indices(2, 2);
        let blocks = degree_blocks(&idx);
        assert_eq!(blocks, vec![0..1, 1..3, 3..6]);
    }

    #[test]
    fn gram_gate_large_truncation() {
        let s = build_space(1, 64.0, 256).unwrap();
        assert!(s.gram_residual() <= 1e-9, "{}", s.gram_residual());
    }

    #[test]
    fn gram_gate_two_dimensions() {
        let s = build_space(2, 5.0, 6).unwrap();
        assert_eq!(s.dim(), 28);
        assert!(s.gram_residual() <= 1e-12);
    }

    #[test]
    fn scaled_powers_branches_agree() {
        // Both branches at a radius where the direct one is still accurate.
        let z = Complex64::new(20.0, 25.0);
        let direct = {
            let mut out = vec![Complex64::new((-0.5 * z.norm_sqr()).exp(), 0.0)];
            for n in 0..60 {
                let g = out[n] * z / ((n + 1) as f64).sqrt();
                out.push(g);
            }
            out
        };
        let r2 = z.norm_sqr();
        let ln_r = 0.5 * r2.ln();
        let mut ln_fact = 0.0;
        for (n, want) in direct.iter().enumerate() {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            let got = Complex64::from_polar(
                (n as f64 * ln_r - 0.5 * ln_fact - 0.5 * r2).exp(),
                n as f64 * z.arg(),
            );
            assert!((got - want).norm() <= 1e-12 * want.norm() + 1e-300);
        }
    }
}
