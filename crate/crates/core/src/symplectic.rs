//! Symplectic linear algebra on R^{2d} with ω₀(u, v) = uᵗ(−J₀)v, the polar
//! decomposition A = OP and the quadratic forms built from it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{j0, sym_eigen, symmetry_residual};

/// Relative residual accepted for Aᵗ(−J₀)A = −J₀.
pub const SYMPLECTIC_TOL: f64 = 1e-10;
/// Inputs whose condition number exceeds this are rejected by
/// [`polar_decompose`] instead of producing meaningless factors.
pub const MAX_CONDITION: f64 = 1e6;
const POLAR_TOL: f64 = 1e-12;

/// A real 2d×2d matrix preserving ω₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymplecticRepr", into = "SymplecticRepr")]
pub struct SymplecticMatrix {
    d: usize,
    m: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct SymplecticRepr {
    d: usize,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<SymplecticRepr> for SymplecticMatrix {
    type Error = Error;
    fn try_from(r: SymplecticRepr) -> Result<Self> {
        let n = 2 * r.d;
        check_len(n, r.rows.len())?;
        for row in &r.rows {
            check_len(n, row.len())?;
        }
        SymplecticMatrix::new(DMatrix::from_fn(n, n, |i, j| r.rows[i][j]))
    }
}

impl From<SymplecticMatrix> for SymplecticRepr {
    fn from(a: SymplecticMatrix) -> Self {
        let rows =
            a.m.row_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
        SymplecticRepr { d: a.d, rows }
    }
}

impl SymplecticMatrix {
    /// Validates the symplectic condition (relative to ‖A‖²) and det A = 1.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() % 2 != 0 || m.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "symplectic matrix must be 2d×2d, got {}×{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let residual = symplectic_residual(&m);
        if !(residual <= SYMPLECTIC_TOL) {
            return Err(Error::NotSymplectic { residual });
        }
        let det = m.determinant();
        if !((det - 1.0).abs() <= 1e-8 * m.norm().powi(m.nrows() as i32).max(1.0)) {
            return Err(Error::NotSymplectic {
                residual: (det - 1.0).abs(),
            });
        }
        Ok(SymplecticMatrix {
            d: m.nrows() / 2,
            m,
        })
    }

    pub fn identity(d: usize) -> Self {
        SymplecticMatrix {
            d,
            m: DMatrix::identity(2 * d, 2 * d),
        }
    }

    /// exp(−J₀H) for symmetric H; symplectic by construction.
    pub fn from_hamiltonian_generator(h: &DMatrix<f64>) -> Result<Self> {
        if !h.is_square() || h.nrows() % 2 != 0 {
            return Err(Error::InvalidInput("generator must be 2d×2d".into()));
        }
        let res = symmetry_residual(h);
        if res > 1e-12 * h.amax().max(1.0) {
            return Err(Error::NotSymmetric { residual: res });
        }
        let d = h.nrows() / 2;
        let gen = -j0(d) * h;
        SymplecticMatrix::new(gen.exp())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// A⁻¹ = −J₀AᵗJ₀, exact for symplectic A.
    pub fn inverse(&self) -> SymplecticMatrix {
        let j = j0(self.d);
        SymplecticMatrix {
            d: self.d,
            m: -(&j * self.m.transpose() * &j),
        }
    }

    pub fn transpose(&self) -> SymplecticMatrix {
        SymplecticMatrix {
            d: self.d,
            m: self.m.transpose(),
        }
    }

    pub fn mul(&self, other: &SymplecticMatrix) -> SymplecticMatrix {
        SymplecticMatrix {
            d: self.d,
            m: &self.m * &other.m,
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(2 * self.d, v.len())?;
        Ok(&self.m * v)
    }

    /// True when A is orthogonal (hence unitary on C^d).
    pub fn is_unitary(&self, tol: f64) -> bool {
        let g = self.m.transpose() * &self.m;
        (g - DMatrix::identity(2 * self.d, 2 * self.d)).amax() <= tol
    }
}

/// ‖Aᵗ(−J₀)A + J₀‖_max / max(1, ‖A‖²_F).
pub fn symplectic_residual(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows() / 2;
    let j = j0(d);
    let r = m.transpose() * (-&j) * m + &j;
    r.amax() / m.norm_squared().max(1.0)
}

/// exp(−J₀H) with H a random symmetric matrix scaled to spectral norm
/// `scale`. Deterministic for a given seed.
pub fn random_symplectic(d: usize, scale: f64, seed: u64) -> Result<SymplecticMatrix> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if !(scale >= 0.0) {
        return Err(Error::InvalidInput("scale must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_symmetric(&mut rng, 2 * d, scale);
    SymplecticMatrix::from_hamiltonian_generator(&h)
}

/// A random orthogonal symplectic matrix: exp(−J₀H) with H commuting
/// with J₀, i.e. H = [[a, −b], [b, a]] for a symmetric, b antisymmetric.
pub fn random_unitary_symplectic(d: usize, seed: u64) -> Result<SymplecticMatrix> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in i..d {
            let a: f64 = rng.random_range(-2.0..2.0);
            h[(i, j)] = a;
            h[(j, i)] = a;
            h[(d + i, d + j)] = a;
            h[(d + j, d + i)] = a;
            if i != j {
                let b: f64 = rng.random_range(-2.0..2.0);
                // b antisymmetric: b_ij = −b_ji
                h[(d + i, j)] = b;
                h[(d + j, i)] = -b;
                h[(i, d + j)] = -b;
                h[(j, d + i)] = b;
            }
        }
    }
    SymplecticMatrix::from_hamiltonian_generator(&h)
}

pub(crate) fn random_symmetric(rng: &mut impl Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = (&g + g.transpose()) * 0.5;
    let norm = sym_eigen(&h).eigenvalues.amax();
    if norm == 0.0 || scale == 0.0 {
        DMatrix::zeros(n, n)
    } else {
        h * (scale / norm)
    }
}

pub(crate) fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// A = OP with the matrices derived from it.
#[derive(Debug, Clone)]
pub struct PolarFactors {
    pub a: DMatrix<f64>,
    pub o: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Q = I + P².
    pub q: DMatrix<f64>,
    pub q_inv: DMatrix<f64>,
    /// 𝒫 = OQ⁻¹Oᵗ.
    pub pcal: DMatrix<f64>,
    /// ℛ = O(I − P²)Q⁻¹J₀Oᵗ.
    pub rcal: DMatrix<f64>,
    pub condition: f64,
}

/// Positive polar decomposition through the eigendecomposition of AᵗA.
pub fn polar_decompose(a: &SymplecticMatrix) -> Result<PolarFactors> {
    let d = a.d();
    let n = 2 * d;
    let m = a.matrix();
    let eig = sym_eigen(&(m.transpose() * m));
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if !(lo > 0.0) {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
            limit: MAX_CONDITION,
        });
    }
    let condition = (hi / lo).sqrt();
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned {
            condition,
            limit: MAX_CONDITION,
        });
    }
    let v = &eig.eigenvectors;
    let sqrt = eig.eigenvalues.map(f64::sqrt);
    let p = v * DMatrix::from_diagonal(&sqrt) * v.transpose();
    let p_inv = v * DMatrix::from_diagonal(&sqrt.map(|s| 1.0 / s)) * v.transpose();
    let o = m * &p_inv;

    let id = DMatrix::<f64>::identity(n, n);
    let recon = (&o * &p - m).amax() / m.amax();
    let orth = (o.transpose() * &o - &id).amax();
    let residual = recon.max(orth);
    if residual > POLAR_TOL * condition.max(1.0) * 100.0 {
        return Err(Error::PolarNotConverged { residual });
    }

    let p2 = &p * &p;
    let q = &id + &p2;
    // Q shares P's eigenvectors, so its inverse is diagonal in that basis.
    let q_inv =
        v * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / (1.0 + l))) * v.transpose();
    let pcal = &o * &q_inv * o.transpose();
    let rcal = &o * (&id - &p2) * &q_inv * j0(d) * o.transpose();
    Ok(PolarFactors {
        a: m.clone(),
        o,
        p,
        q,
        q_inv,
        pcal,
        rcal,
        condition,
    })
}

impl PolarFactors {
    pub fn d(&self) -> usize {
        self.a.nrows() / 2
    }

    /// 𝒮_A(u, w) = −Lᵗ(𝒫 + (i/2)ℛ)L − iω₀(Au, w), L = Au − w.
    pub fn s_form(&self, u: &DVector<f64>, w: &DVector<f64>) -> Result<Complex64> {
        let n = self.a.nrows();
        check_len(n, u.len())?;
        check_len(n, w.len())?;
        let au = &self.a * u;
        let l = &au - w;
        let re = -l.dot(&(&self.pcal * &l));
        let im = -0.5 * l.dot(&(&self.rcal * &l));
        Ok(Complex64::new(re, im) - Complex64::i() * omega0_unchecked(&au, w))
    }

    /// The matrix S with 𝒮_A(u, u) = −½uᵗSu, symmetrized.
    pub fn fixed_point_form(&self) -> DMatrix<Complex64> {
        let n = self.a.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let b = &self.a - &id;
        let j = j0(self.d());
        // 𝒮_A(u,u) = −uᵗBᵗ(𝒫 + (i/2)ℛ)Bu − i uᵗAᵗ(−J₀)u
        let re = b.transpose() * &self.pcal * &b;
        let im = b.transpose() * &self.rcal * &b * 0.5 - self.a.transpose() * &j;
        let coeff = DMatrix::from_fn(n, n, |r, c| Complex64::new(re[(r, c)], im[(r, c)]));
        let sym = (&coeff + coeff.transpose()) * Complex64::new(0.5, 0.0);
        sym * Complex64::new(2.0, 0.0)
    }
}

/// ω₀(u, v) = uᵗ(−J₀)v.
pub fn omega0(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    check_len(u.len(), v.len())?;
    if u.len() % 2 != 0 {
        return Err(Error::InvalidInput("vectors must have even length".into()));
    }
    Ok(omega0_unchecked(u, v))
}

pub(crate) fn omega0_unchecked(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    // uᵗ(−J₀)v = Σ_a u_a v_{d+a} − u_{d+a} v_a
    let d = u.len() / 2;
    (0..d).map(|a| u[a] * v[d + a] - u[d + a] * v[a]).sum()
}

/// ψ₂(u, v) = −iω₀(u, v) − ½‖u − v‖².
pub fn psi2(u: &DVector<f64>, v: &DVector<f64>) -> Result<Complex64> {
    let om = omega0(u, v)?;
    Ok(psi2_parts(om, (u - v).norm_squared()))
}

fn psi2_parts(omega: f64, dist2: f64) -> Complex64 {
    Complex64::new(-0.5 * dist2, -omega)
}

pub(crate) fn psi2_unchecked(u: &DVector<f64>, v: &DVector<f64>) -> Complex64 {
    psi2_parts(omega0_unchecked(u, v), (u - v).norm_squared())
}

/// 𝒮_A(u, w); computes the polar factors on every call, use
/// [`PolarFactors::s_form`] in loops.
pub fn s_form(a: &SymplecticMatrix, u: &DVector<f64>, w: &DVector<f64>) -> Result<Complex64> {
    polar_decompose(a)?.s_form(u, w)
}

/// The three expressions for ν: √det(I + P²), det(I + AᵗA)^{1/2} and
/// det(AJ₀ + J₀A)^{1/2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NuRoutes {
    pub polar: f64,
    pub gram: f64,
    pub anticommutator: f64,
}

impl NuRoutes {
    pub fn max_relative_spread(&self) -> f64 {
        let v = [self.polar, self.gram, self.anticommutator];
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi - lo) / self.polar.abs()
    }
}

pub fn nu(a: &SymplecticMatrix) -> Result<f64> {
    Ok(polar_decompose(a)?.q.determinant().sqrt())
}

pub fn nu_routes(a: &SymplecticMatrix) -> Result<NuRoutes> {
    let pf = polar_decompose(a)?;
    let m = a.matrix();
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let j = j0(a.d());
    Ok(NuRoutes {
        polar: pf.q.determinant().sqrt(),
        gram: (&id + m.transpose() * m).determinant().sqrt(),
        anticommutator: (m * &j + &j * m).determinant().sqrt(),
    })
}

/// Orthonormal bases of graph(A) = {(u, Au)} and its orthocomplement in
/// R^{2d} × R^{2d}; vectors are stacked as (u, w).
#[derive(Debug, Clone)]
pub struct GraphSplitting {
    /// 4d × 2d, orthonormal columns spanning graph(A).
    pub tangent: DMatrix<f64>,
    /// 4d × 2d, orthonormal columns spanning the normal space.
    pub normal: DMatrix<f64>,
}

pub fn graph_splitting(a: &SymplecticMatrix) -> GraphSplitting {
    let n = 2 * a.d();
    let m = a.matrix();
    let mut t = DMatrix::zeros(2 * n, n);
    t.view_mut((0, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    t.view_mut((n, 0), (n, n)).copy_from(m);
    let mut nn = DMatrix::zeros(2 * n, n);
    nn.view_mut((0, 0), (n, n)).copy_from(&(-m.transpose()));
    nn.view_mut((n, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    GraphSplitting {
        tangent: orthonormal_columns(t),
        normal: orthonormal_columns(nn),
    }
}

fn orthonormal_columns(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

impl GraphSplitting {
    /// Splits a stacked (u, w) into its tangent and normal components.
    pub fn decompose(&self, uw: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_len(self.tangent.nrows(), uw.len())?;
        let t = &self.tangent * (self.tangent.transpose() * uw);
        let n = &self.normal * (self.normal.transpose() * uw);
        Ok((t, n))
    }

    /// The stacked vector built from a normal-space coordinate vector.
    pub fn normal_vector(&self, coords: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.normal.ncols(), coords.len())?;
        Ok(&self.normal * coords)
    }
}

pub(crate) fn unstack(uw: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = uw.len() / 2;
    (uw.rows(0, n).into_owned(), uw.rows(n, n).into_owned())
}

/// Γ, F and G of the Gaussian reduction of the composed kernel.
#[derive(Debug, Clone)]
pub struct GammaFg {
    pub gamma: Complex64,
    /// F = −J₀A⁻¹L.
    pub f: DVector<f64>,
    /// G = AᵗL.
    pub g: DVector<f64>,
    /// ‖−J₀A⁻¹L − (−AᵗJ₀L)‖, the two printed expressions for F.
    pub f_route_residual: f64,
}

impl GammaFg {
    /// Γ − ½FᵗQ⁻¹F, which should equal 𝒮_A(u, w).
    pub fn completed_square(&self, q_inv: &DMatrix<f64>) -> Complex64 {
        self.gamma - 0.5 * self.f.dot(&(q_inv * &self.f))
    }
}

pub fn gamma_fg(a: &SymplecticMatrix, u: &DVector<f64>, w: &DVector<f64>) -> Result<GammaFg> {
    let pf = polar_decompose(a)?;
    gamma_fg_with(a, &pf, u, w)
}

pub(crate) fn gamma_fg_with(
    a: &SymplecticMatrix,
    pf: &PolarFactors,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<GammaFg> {
    let n = 2 * a.d();
    check_len(n, u.len())?;
    check_len(n, w.len())?;
    let m = a.matrix();
    let j = j0(a.d());
    let a_inv = a.inverse().into_matrix();
    let au = m * u;
    let l = &au - w;
    let ainv_l = &a_inv * &l;
    let qat_l = &pf.q_inv * (m.transpose() * &l);
    let gamma = psi2_unchecked(&au, w)
        + Complex64::i() * omega0_unchecked(&ainv_l, &qat_l)
        + 0.5 * l.dot(&(m * &qat_l));
    let f = -(&j * &ainv_l);
    let f_alt = -(m.transpose() * (&j * &l));
    let f_route_residual = (&f - &f_alt).amax();
    let g = m.transpose() * &l;
    Ok(GammaFg {
        gamma,
        f,
        g,
        f_route_residual,
    })
}

/// S assembled from ψ₂, F, G and Q as in the completed-square expression
/// ψ₂(Au,w) − iGᵗQ⁻¹F + ½GᵗQ⁻¹G − ½FᵗQ⁻¹F.
pub fn s_from_fg(
    a: &SymplecticMatrix,
    pf: &PolarFactors,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<Complex64> {
    let gfg = gamma_fg_with(a, pf, u, w)?;
    let au = a.matrix() * u;
    let qf = &pf.q_inv * &gfg.f;
    let qg = &pf.q_inv * &gfg.g;
    Ok(
        psi2_unchecked(&au, w) - Complex64::i() * gfg.g.dot(&qf) + 0.5 * gfg.g.dot(&qg)
            - 0.5 * gfg.f.dot(&qf),
    )
}

/// Residuals of I − J₀AQ⁻¹AᵗJ₀ − AQ⁻¹Aᵗ = 2𝒫 and
/// AQ⁻¹AᵗJ₀ + (AQ⁻¹AᵗJ₀)ᵗ = −ℛ, plus the symmetry of Q, 𝒫, ℛ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaReport {
    pub pcal_identity: f64,
    pub rcal_identity: f64,
    pub symmetry: f64,
}

impl LemmaReport {
    pub fn max_residual(&self) -> f64 {
        self.pcal_identity
            .max(self.rcal_identity)
            .max(self.symmetry)
    }
}

pub fn lemma_identities(a: &SymplecticMatrix) -> Result<LemmaReport> {
    let pf = polar_decompose(a)?;
    Ok(lemma_identities_with(&pf))
}

pub(crate) fn lemma_identities_with(pf: &PolarFactors) -> LemmaReport {
    let n = pf.a.nrows();
    let j = j0(n / 2);
    let id = DMatrix::<f64>::identity(n, n);
    let aqa = &pf.a * &pf.q_inv * pf.a.transpose();
    let lhs_p = &id - &j * &aqa * &j - &aqa;
    let scale = pf.a.norm_squared().max(1.0);
    let pcal_identity = (lhs_p - &pf.pcal * 2.0).amax() / scale;
    let x = &aqa * &j;
    let rcal_identity = (&x + x.transpose() + &pf.rcal).amax() / scale;
    let symmetry = symmetry_residual(&pf.q)
        .max(symmetry_residual(&pf.pcal))
        .max(symmetry_residual(&pf.rcal))
        / scale;
    LemmaReport {
        pcal_identity,
        rcal_identity,
        symmetry,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    fn squeeze() -> SymplecticMatrix {
        SymplecticMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap()
    }

    #[test]
    fn zero_scale_generator_gives_identity() {
        let a = random_symplectic(1, 0.0, 99).unwrap();
        assert_eq!(a, SymplecticMatrix::identity(1));
    }

    #[test]
    fn random_symplectic_has_unit_determinant() {
        let a = random_symplectic(1, 1.0, 7).unwrap();
        assert!((a.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_symplectic_d3_preserves_omega() {
        let a = random_symplectic(3, 2.0, 1).unwrap();
        let m = a.matrix();
        let j = j0(3);
        assert!((m.transpose() * (-&j) * m + &j).amax() < 1e-10);
    }

    #[test]
    fn random_unitary_is_orthogonal_and_symplectic() {
        for seed in 0..5 {
            let r = random_unitary_symplectic(2, seed).unwrap();
            assert!(r.is_unitary(1e-12));
        }
    }

    #[test]
    fn rejects_non_symplectic() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        assert!(matches!(
            SymplecticMatrix::new(m),
            Err(Error::NotSymplectic { .. })
        ));
    }

    #[test]
    fn polar_of_identity() {
        let pf = polar_decompose(&SymplecticMatrix::identity(2)).unwrap();
        assert!((pf.o.clone() - DMatrix::identity(4, 4)).amax() < 1e-15);
        assert!((pf.p.clone() - DMatrix::identity(4, 4)).amax() < 1e-15);
    }

    #[test]
    fn polar_of_positive_input_is_trivial() {
        let pf = polar_decompose(&squeeze()).unwrap();
        assert!((pf.o.clone() - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!((pf.p.clone() - squeeze().into_matrix()).amax() < 1e-14);
    }

    #[test]
    fn polar_reconstructs_random_input() {
        let a = random_symplectic(2, 1.5, 3).unwrap();
        let pf = polar_decompose(&a).unwrap();
        assert!((&pf.o * &pf.p - a.matrix()).amax() < 1e-10);
        assert!((pf.o.transpose() * &pf.o - DMatrix::identity(4, 4)).amax() < 1e-10);
        assert!(symplectic_residual(&pf.p) < 1e-10);
        assert!(symplectic_residual(&pf.o) < 1e-10);
    }

    #[test]
    fn polar_rejects_ill_conditioned() {
        let m = DMatrix::from_row_slice(2, 2, &[1e4, 0.0, 0.0, 1e-4]);
        let a = SymplecticMatrix::new(m).unwrap();
        assert!(matches!(
            polar_decompose(&a),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn omega_and_psi2_hand_values() {
        let e1 = v(&[1.0, 0.0]);
        let e2 = v(&[0.0, 1.0]);
        assert_eq!(omega0(&e1, &e2).unwrap(), 1.0);
        assert_eq!(omega0(&e1, &e1).unwrap(), 0.0);
        assert_eq!(psi2(&e1, &e2).unwrap(), Complex64::new(-1.0, -1.0));
        let u = v(&[0.3, -1.2]);
        assert_eq!(psi2(&u, &u).unwrap(), Complex64::new(0.0, 0.0));
        let z = v(&[0.0, 0.0]);
        assert_relative_eq!(psi2(&u, &z).unwrap().re, -0.5 * u.norm_squared());
        assert!(omega0(&e1, &v(&[1.0, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn s_form_of_identity_on_diagonal_vanishes() {
        let a = SymplecticMatrix::identity(1);
        let u = v(&[0.4, -0.7]);
        assert_eq!(s_form(&a, &u, &u).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn nu_of_squeeze() {
        let r = nu_routes(&squeeze()).unwrap();
        assert_relative_eq!(r.polar, 2.5, epsilon = 1e-14);
        assert_relative_eq!(r.gram, 2.5, epsilon = 1e-14);
        assert_relative_eq!(r.anticommutator, 2.5, epsilon = 1e-14);
    }

    #[test]
    fn nu_of_unitary_is_power_of_two() {
        let r = random_unitary_symplectic(3, 4).unwrap();
        assert_relative_eq!(nu(&r).unwrap(), 8.0, max_relative = 1e-12);
    }

    #[test]
    fn graph_splitting_of_identity() {
        let gs = graph_splitting(&SymplecticMatrix::identity(1));
        // tangent spans (u, u), normal spans (u, −u)
        for c in 0..2 {
            let t = gs.tangent.column(c);
            assert!((t.rows(0, 2) - t.rows(2, 2)).amax() < 1e-14);
            let n = gs.normal.column(c);
            assert!((n.rows(0, 2) + n.rows(2, 2)).amax() < 1e-14);
        }
    }

    #[test]
    fn gamma_fg_frozen_squeeze_value() {
        // Independent scalar evaluation: Γ = −0.4, F = (0, −1), G = (4, 0),
        // and Γ − ½FᵗQ⁻¹F = 𝒮 = −0.8.
        let a = squeeze();
        let g = gamma_fg(&a, &v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(g.gamma.re, -0.4, epsilon = 1e-14);
        assert_relative_eq!(g.gamma.im, 0.0, epsilon = 1e-14);
        assert!((g.f.clone() - v(&[0.0, -1.0])).amax() < 1e-14);
        assert!((g.g.clone() - v(&[4.0, 0.0])).amax() < 1e-14);
        assert!(g.f_route_residual < 1e-14);
        let pf = polar_decompose(&a).unwrap();
        let s = g.completed_square(&pf.q_inv);
        assert_relative_eq!(s.re, -0.8, epsilon = 1e-14);
        assert_relative_eq!(
            pf.s_form(&v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap().re,
            -0.8,
            epsilon = 1e-14
        );
    }

    #[test]
    fn gamma_fg_on_graph() {
        let a = random_symplectic(1, 1.0, 11).unwrap();
        let u = v(&[0.5, 0.25]);
        let w = a.matrix() * &u;
        let g = gamma_fg(&a, &u, &w).unwrap();
        assert!(g.f.amax() < 1e-15 && g.g.amax() < 1e-15);
        let want = psi2(&w, &w).unwrap();
        assert!((g.gamma - want).norm() < 1e-15);
    }

    #[test]
    fn lemma_identities_for_identity_are_exact() {
        let r = lemma_identities(&SymplecticMatrix::identity(2)).unwrap();
        assert_eq!(r.max_residual(), 0.0);
    }

    #[test]
    fn rcal_of_squeeze_matches_hand_value() {
        // O = I, P = diag(2, ½): (I − P²)Q⁻¹ = diag(−3/5, 3/5), times J₀.
        let pf = polar_decompose(&squeeze()).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 0.6, 0.6, 0.0]);
        assert!((pf.rcal.clone() - want).amax() < 1e-15);
        assert!(lemma_identities_with(&pf).max_residual() < 1e-15);
    }

    #[test]
    fn serde_roundtrip_validates() {
        let a = random_symplectic(2, 1.0, 5).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        let b: SymplecticMatrix = serde_json::from_str(&s).unwrap();
        assert!((a.matrix() - b.matrix()).amax() < 1e-15);
        let bad = r#"{"d":1,"rows":[[2.0,0.0],[0.0,2.0]]}"#;
        assert!(serde_json::from_str::<SymplecticMatrix>(bad).is_err());
    }
}
