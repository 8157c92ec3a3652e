//! Quadrature rules: Gauss–Hermite nodes with e^{x²}-scaled weights for the
//! Gaussian-weighted model integrals, and adaptive Gauss–Kronrod for the
//! oscillatory cross-checks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Nodes x_i and scaled weights W_i = w_i e^{x_i²} of the M-point
/// Gauss–Hermite rule, so Σ W_i g(x_i) e^{−x_i²} ≈ ∫ g(x) e^{−x²} dx and
/// Σ W_i h(x_i) ≈ ∫ h(x) dx for h = polynomial × e^{−x²}.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub scaled_weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput(
                "Gauss–Hermite rule needs at least one node".into(),
            ));
        }
        // Golub–Welsch: eigenvalues of the Jacobi matrix with off-diagonal
        // √(j/2), then Newton polish on the orthonormal Hermite function ψ_m.
        let jacobi = DMatrix::from_fn(m, m, |i, j| {
            if i.abs_diff(j) == 1 {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut scaled_weights = Vec::with_capacity(m);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (psi_m, psi_m1, _) = hermite_functions(m, *x);
                let step = psi_m / ((2.0 * m as f64).sqrt() * psi_m1);
                if step.is_finite() {
                    *x -= step;
                }
            }
            let (_, _, sum_sq) = hermite_functions(m, *x);
            scaled_weights.push(1.0 / sum_sq);
        }
        // Symmetrize exactly.
        for i in 0..m / 2 {
            let j = m - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (scaled_weights[i] + scaled_weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            scaled_weights[i] = w;
            scaled_weights[j] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Ok(GaussHermite {
            nodes,
            scaled_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Orthonormal Hermite functions ψ_j(x) = p_j(x)e^{−x²/2}: returns
/// (ψ_m(x), ψ_{m−1}(x), Σ_{j<m} ψ_j(x)²).
fn hermite_functions(m: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    let mut sum = 0.0;
    for j in 0..m {
        sum += cur * cur;
        let next =
            x * (2.0 / (j + 1) as f64).sqrt() * cur - (j as f64 / (j + 1) as f64).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev, sum)
}

/// Tensor Gauss–Hermite rule on R^n adapted to a Gaussian with precision
/// matrix P: nodes s = Ct with C = P^{−1/2}, weights W·det C, so that
/// Σ ω_i g(s_i) = ∫ g exactly when g(s) = polynomial × e^{−sᵗPs} of degree
/// below 2M per direction.
#[derive(Debug, Clone)]
pub struct GaussianRule {
    /// n × count node matrix.
    pub nodes: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl GaussianRule {
    pub fn new(precision: &DMatrix<f64>, points_per_dim: usize) -> Result<Self> {
        let n = precision.nrows();
        crate::linalg::require_positive_definite(precision)?;
        let c = crate::linalg::sym_apply(precision, |l| 1.0 / l.sqrt());
        let det_c = c.determinant();
        let gh = GaussHermite::new(points_per_dim)?;
        let m = gh.len();
        let count = m
            .checked_pow(n as u32)
            .ok_or_else(|| Error::InvalidInput("too many quadrature nodes".into()))?;
        let mut t = DMatrix::zeros(n, count);
        let mut weights = Vec::with_capacity(count);
        let mut idx = vec![0usize; n];
        for col in 0..count {
            let mut w = det_c;
            for (r, &i) in idx.iter().enumerate() {
                t[(r, col)] = gh.nodes[i];
                w *= gh.scaled_weights[i];
            }
            weights.push(w);
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < m {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(GaussianRule {
            nodes: c * t,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

// 7-point Gauss / 15-point Kronrod abscissae and weights on [−1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut impl FnMut(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    (kron * h, ((kron - gauss) * h).norm())
}

struct Interval {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) on [a, b] for a complex
/// integrand; stops when the summed error estimate is below
/// max(abs_tol, rel_tol·|I|).
pub fn integrate_adaptive(
    mut f: impl FnMut(f64) -> Complex64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Complex64> {
    let mut heap = BinaryHeap::new();
    let (value, error) = gk15(&mut f, a, b);
    heap.push(Interval { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut n = 1;
    while total_err > abs_tol.max(rel_tol * total.norm()) {
        if n >= max_intervals {
            return Err(Error::NonConvergence {
                iterations: n,
                residual: total_err,
            });
        }
        let worst = heap.pop().expect("heap holds at least one interval");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Interval {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Interval {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        n += 1;
        // Recompute occasionally to stop round-off drift in the running sums.
        if n % 64 == 0 {
            total = heap.iter().map(|i| i.value).sum();
            total_err = heap.iter().map(|i| i.error).sum();
        }
    }
    Ok(heap.iter().map(|i| i.value).sum())
}

/// Nested adaptive integration over the box [−L, L]².
pub fn integrate_adaptive_2d(
    f: impl Fn(f64, f64) -> Complex64,
    half_width: f64,
    tol: f64,
) -> Result<Complex64> {
    let mut inner_err = None;
    let outer = integrate_adaptive(
        |x| match integrate_adaptive(|y| f(x, y), -half_width, half_width, 0.01 * tol, 0.0, 4000) {
            Ok(v) => v,
            Err(e) => {
                inner_err.get_or_insert(e);
                Complex64::new(f64::NAN, f64::NAN)
            }
        },
        -half_width,
        half_width,
        tol,
        0.0,
        4000,
    );
    if let Some(e) = inner_err {
        return Err(e);
    }
    outer
}
