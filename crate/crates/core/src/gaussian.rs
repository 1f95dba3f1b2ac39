//! Dense linear algebra and Gaussian-conditioning primitives.
//!
//! Everything here is a pure function over value types. Covariances are kept
//! symmetric by re-symmetrizing `(M + M') / 2` after every update.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative cut-off below which singular values are treated as zero.
pub const PINV_RELATIVE_TOL: f64 = 1e-10;
/// Most negative eigenvalue a matrix may have and still count as PSD.
pub const PSD_TOL: f64 = 1e-9;

const DARE_TOL: f64 = 1e-12;
const DARE_MAX_ITER: usize = 100_000;
const DARE_RESIDUAL_TOL: f64 = 1e-9;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}

/// `a^k` by repeated multiplication.
pub fn matrix_power(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = a * out;
    }
    out
}

/// A symmetric positive semidefinite matrix.
///
/// Construction symmetrizes the input; [`CovarianceMatrix::new`] additionally
/// rejects matrices whose smallest eigenvalue is below `-1e-9`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "covariance must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariance entries must be finite"));
        }
        let sym = symmetrize(&m);
        let lmin = min_eigenvalue(&sym);
        if lmin < -PSD_TOL {
            return Err(Error::invalid(format!(
                "covariance is not positive semidefinite (min eigenvalue {lmin:e})"
            )));
        }
        Ok(Self(sym))
    }

    /// Symmetrizes without the PSD check. Used for internally propagated
    /// covariances whose round-off may dip marginally below zero.
    pub fn from_symmetrized(m: &DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(symmetrize(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        max_eigenvalue(&self.0)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.dim() > 0 && self.min_eigenvalue() > 0.0
    }

    /// `m * self * m'`
    pub fn congruence(&self, m: &DMatrix<f64>) -> CovarianceMatrix {
        Self::from_symmetrized(&(m * &self.0 * m.transpose()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }
}

impl Deref for CovarianceMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// A named contiguous coordinate range inside a [`GaussianBelief`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl Block {
    fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Mean and covariance over an ordered list of labelled state blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: CovarianceMatrix,
    blocks: Vec<Block>,
}

impl GaussianBelief {
    /// `blocks` lists `(name, size)` in coordinate order; the sizes must add
    /// up to the mean length.
    pub fn new(mean: DVector<f64>, cov: CovarianceMatrix, blocks: &[(&str, usize)]) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::invalid(format!(
                "mean length {} does not match covariance dimension {}",
                mean.len(),
                cov.dim()
            )));
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(blocks.len());
        for (name, len) in blocks {
            if out.iter().any(|b: &Block| b.name == *name) {
                return Err(Error::invalid(format!("duplicate block label `{name}`")));
            }
            out.push(Block {
                name: (*name).to_string(),
                start,
                len: *len,
            });
            start += len;
        }
        if start != mean.len() {
            return Err(Error::invalid(format!(
                "block sizes sum to {start}, expected {}",
                mean.len()
            )));
        }
        Ok(Self {
            mean,
            cov,
            blocks: out,
        })
    }

    /// Single-block belief.
    pub fn single(name: &str, mean: DVector<f64>, cov: CovarianceMatrix) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, cov, &[(name, n)])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &CovarianceMatrix {
        &self.cov
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    fn require_block(&self, name: &str) -> Result<&Block> {
        self.block(name)
            .ok_or_else(|| Error::invalid(format!("belief has no block named `{name}`")))
    }

    pub fn marginal(&self, name: &str) -> Result<GaussianBelief> {
        let b = self.require_block(name)?;
        let idx: Vec<usize> = b.indices().collect();
        let mean = self.mean.select_rows(&idx);
        let cov = self.cov.select_rows(&idx).select_columns(&idx);
        GaussianBelief::single(name, mean, CovarianceMatrix::from_symmetrized(&cov))
    }

    /// Pushes the belief through `x ↦ map·x + noise` with `noise ~ N(0, noise_cov)`,
    /// relabelling the result with `blocks`.
    pub fn linear_map(
        &self,
        map: &DMatrix<f64>,
        noise_cov: &DMatrix<f64>,
        blocks: &[(&str, usize)],
    ) -> Result<GaussianBelief> {
        if map.ncols() != self.dim() || noise_cov.nrows() != map.nrows() || !noise_cov.is_square() {
            return Err(Error::invalid(format!(
                "linear map {}x{} with noise {}x{} is incompatible with belief of dimension {}",
                map.nrows(),
                map.ncols(),
                noise_cov.nrows(),
                noise_cov.ncols(),
                self.dim()
            )));
        }
        let mean = map * &self.mean;
        let cov = map * self.cov.matrix() * map.transpose() + noise_cov;
        GaussianBelief::new(mean, CovarianceMatrix::from_symmetrized(&cov), blocks)
    }
}

/// Conditions `joint` on the block `observed` taking the value `value`.
///
/// Returns the posterior over the remaining blocks (in their original order):
/// `μ_x + Σ_xz Σ_zz† (z − μ_z)` and `Σ_xx − Σ_xz Σ_zz† Σ_zx`. The
/// pseudoinverse makes a singular `Σ_zz` legal.
pub fn condition(joint: &GaussianBelief, observed: &str, value: &DVector<f64>) -> Result<GaussianBelief> {
    let zb = joint.require_block(observed)?;
    if value.len() != zb.len {
        return Err(Error::invalid(format!(
            "observed value has length {}, block `{observed}` has size {}",
            value.len(),
            zb.len
        )));
    }
    if joint.blocks.len() < 2 {
        return Err(Error::invalid("conditioning needs at least one unobserved block"));
    }
    let z_idx: Vec<usize> = zb.indices().collect();
    let kept: Vec<&Block> = joint.blocks.iter().filter(|b| b.name != observed).collect();
    let x_idx: Vec<usize> = kept.iter().flat_map(|b| b.indices()).collect();

    let sigma = joint.cov.matrix();
    let s_xx = sigma.select_rows(&x_idx).select_columns(&x_idx);
    let s_xz = sigma.select_rows(&x_idx).select_columns(&z_idx);
    let s_zz = sigma.select_rows(&z_idx).select_columns(&z_idx);
    let mu_x = joint.mean.select_rows(&x_idx);
    let mu_z = joint.mean.select_rows(&z_idx);

    let gain = &s_xz * pseudoinverse(&s_zz);
    let mean = mu_x + &gain * (value - mu_z);
    let cov = s_xx - &gain * s_xz.transpose();

    let labels: Vec<(&str, usize)> = kept.iter().map(|b| (b.name.as_str(), b.len)).collect();
    GaussianBelief::new(mean, CovarianceMatrix::from_symmetrized(&cov), &labels)
}

/// Moore–Penrose pseudoinverse; singular values below `1e-10 · σ_max` are
/// treated as zero.
///
/// Symmetric input goes through a symmetric eigendecomposition, where the
/// singular values are `|λ_i|`. Other shapes go through the smaller Gram
/// matrix (`M'(MM')†` or `(M'M)†M'`), which resolves rank only down to about
/// `√ε · σ_max`. nalgebra's SVD is avoided
/// because it can lose accuracy on matrices with repeated singular values.
pub fn pseudoinverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    if m.is_square() && max_abs(&(m - m.transpose())) <= 1e-14 * max_abs(m) {
        return symmetric_pinv(&symmetrize(m), PINV_RELATIVE_TOL);
    }
    // Gram eigenvalues are σ², so the cutoff squares, but it cannot usefully
    // go below the rounding level of the Gram matrix itself.
    let tol = (PINV_RELATIVE_TOL * PINV_RELATIVE_TOL).max(64.0 * f64::EPSILON);
    if r <= c {
        m.transpose() * symmetric_pinv(&symmetrize(&(m * m.transpose())), tol)
    } else {
        symmetric_pinv(&symmetrize(&(m.transpose() * m)), tol) * m.transpose()
    }
}

fn symmetric_pinv(m: &DMatrix<f64>, relative_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.amax();
    if lmax == 0.0 || !lmax.is_finite() {
        return DMatrix::zeros(n, n);
    }
    let inv = eig.eigenvalues.map(|l| if l.abs() > relative_tol * lmax { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Max-norm residual of the Riccati equation at `p`.
pub fn dare_residual(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> f64 {
    max_abs(&(riccati_map(p, a, c, q, r) - p))
}

fn riccati_map(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DMatrix<f64> {
    let s = c * p * c.transpose() + r;
    let s_inv = s
        .clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .unwrap_or_else(|| pseudoinverse(&s));
    let apc = a * p * c.transpose();
    symmetrize(&(a * p * a.transpose() + q - &apc * s_inv * apc.transpose()))
}

/// Stabilizing solution of `P = APA' + Q − APC'(CPC'+R)⁻¹CPA'` by
/// fixed-point iteration of the Riccati map starting from `Q`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<CovarianceMatrix> {
    let n = a.nrows();
    if !a.is_square() || c.ncols() != n || q.shape() != (n, n) || r.shape() != (c.nrows(), c.nrows()) {
        return Err(Error::invalid(format!(
            "DARE dimensions: A {:?}, C {:?}, Q {:?}, R {:?}",
            a.shape(),
            c.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let mut p = symmetrize(q);
    let mut step = f64::INFINITY;
    for _ in 0..DARE_MAX_ITER {
        let next = riccati_map(&p, a, c, q, r);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("DARE iteration produced non-finite values"));
        }
        step = max_abs(&(&next - &p));
        p = next;
        if step <= DARE_TOL {
            break;
        }
    }
    let residual = dare_residual(&p, a, c, q, r);
    if step > DARE_TOL || residual > DARE_RESIDUAL_TOL {
        return Err(Error::numeric(format!(
            "DARE did not converge in {DARE_MAX_ITER} iterations (last step {step:e}, residual {residual:e})"
        )));
    }
    Ok(CovarianceMatrix::from_symmetrized(&p))
}

/// Steady-state gain `K = P̄C'(CP̄C'+R)⁻¹`; fails if the innovation
/// covariance is numerically singular.
pub fn kalman_gain(p: &DMatrix<f64>, c: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = innovation_cov(p, c, r)?;
    let sv = SymmetricEigen::new(symmetrize(&s)).eigenvalues.abs();
    let (smin, smax) = (sv.min(), sv.max());
    if smax == 0.0 || smin <= 1e-14 * smax {
        return Err(Error::numeric(format!(
            "innovation covariance CPC'+R is singular (singular values in [{smin:e}, {smax:e}])"
        )));
    }
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::numeric("innovation covariance CPC'+R is not invertible"))?;
    Ok(p * c.transpose() * s_inv)
}

/// Gain with `(CPC'+R)†` in place of the inverse; admits `R = 0`.
pub fn kalman_gain_pinv(p: &DMatrix<f64>, c: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = innovation_cov(p, c, r)?;
    Ok(p * c.transpose() * pseudoinverse(&s))
}

fn innovation_cov(p: &DMatrix<f64>, c: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c.ncols() != p.nrows() || r.shape() != (c.nrows(), c.nrows()) {
        return Err(Error::invalid(format!(
            "gain dimensions: P {:?}, C {:?}, R {:?}",
            p.shape(),
            c.shape(),
            r.shape()
        )));
    }
    Ok(c * p * c.transpose() + r)
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().copied().collect()
}

/// `max |λ_i(A)|`.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Left eigenvector `v` with `v^H A = λ v^H` for an eigenvalue of maximal modulus.
pub fn dominant_left_eigenvector(a: &DMatrix<f64>) -> (Complex64, DVector<Complex64>) {
    let n = a.nrows();
    let lambda = eigenvalues(a)
        .into_iter()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .unwrap_or_default();
    // v^H A = λ v^H  ⇔  A' v = conj(λ) v for real A.
    let shifted = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        let base = Complex64::new(a[(j, i)], 0.0);
        if i == j {
            base - lambda.conj()
        } else {
            base
        }
    });
    // The null vector of the shifted matrix is the eigenvector of its Gram
    // matrix with the smallest eigenvalue.
    let gram = shifted.adjoint() * &shifted;
    let gram = (&gram + gram.adjoint()).map(|x| x * 0.5);
    let eig = SymmetricEigen::new(gram);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty matrix");
    (lambda, eig.eigenvectors.column(imin).into_owned())
}

/// `Re(v^H M v) / Re(v^H v)`.
pub fn rayleigh_quotient(v: &DVector<Complex64>, m: &DMatrix<f64>) -> f64 {
    let mc = m.map(|x| Complex64::new(x, 0.0));
    let num = (v.adjoint() * mc * v)[(0, 0)].re;
    let den = v.norm_squared();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    fn two_block(mu: &[f64], sigma: DMatrix<f64>) -> GaussianBelief {
        GaussianBelief::new(
            DVector::from_column_slice(mu),
            CovarianceMatrix::new(sigma).unwrap(),
            &[("x", 1), ("z", 1)],
        )
        .unwrap()
    }

    #[test]
    fn condition_hand_schur_complement() {
        let joint = two_block(&[0.0, 0.0], dmatrix![2.0, 1.0; 1.0, 1.0]);
        let post = condition(&joint, "z", &dvector![1.0]).unwrap();
        assert_abs_diff_eq!(post.mean()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(post.cov()[(0, 0)], 1.0, epsilon = 1e-14);
        assert_eq!(post.blocks()[0].name, "x");
    }

    #[test]
    fn condition_independent_block_is_prior() {
        let joint = two_block(&[0.5, -2.0], dmatrix![3.0, 0.0; 0.0, 7.0]);
        let post = condition(&joint, "z", &dvector![41.0]).unwrap();
        assert_abs_diff_eq!(post.mean()[0], 0.5);
        assert_abs_diff_eq!(post.cov()[(0, 0)], 3.0);
    }

    #[test]
    fn condition_perfect_observation() {
        let joint = two_block(&[0.0, 0.0], dmatrix![2.5, 2.5; 2.5, 2.5]);
        let post = condition(&joint, "z", &dvector![-1.75]).unwrap();
        assert_abs_diff_eq!(post.mean()[0], -1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(post.cov()[(0, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn condition_rejects_bad_dimensions() {
        let joint = two_block(&[0.0, 0.0], dmatrix![1.0, 0.0; 0.0, 1.0]);
        assert!(matches!(
            condition(&joint, "z", &dvector![1.0, 2.0]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(condition(&joint, "nope", &dvector![1.0]).is_err());
    }

    #[test]
    fn belief_label_validation() {
        let cov = CovarianceMatrix::identity(3);
        assert!(GaussianBelief::new(DVector::zeros(3), cov.clone(), &[("a", 1), ("b", 1)]).is_err());
        assert!(GaussianBelief::new(DVector::zeros(3), cov.clone(), &[("a", 1), ("a", 2)]).is_err());
        assert!(GaussianBelief::new(DVector::zeros(2), cov, &[("a", 2)]).is_err());
    }

    #[test]
    fn covariance_rejects_indefinite() {
        assert!(CovarianceMatrix::new(dmatrix![1.0, 2.0; 2.0, 1.0]).is_err());
        assert!(CovarianceMatrix::new(dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0]).is_err());
        let c = CovarianceMatrix::new(dmatrix![1.0, 0.2; 0.4, 1.0]).unwrap();
        assert_abs_diff_eq!(c[(0, 1)], 0.3);
        assert_abs_diff_eq!(c[(1, 0)], 0.3);
    }

    #[test]
    fn pseudoinverse_examples() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_abs_diff_eq!(pseudoinverse(&i3), i3, epsilon = 1e-14);
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(pseudoinverse(&z), z);
        let d = dmatrix![2.0, 0.0; 0.0, 0.0];
        assert_abs_diff_eq!(pseudoinverse(&d), dmatrix![0.5, 0.0; 0.0, 0.0], epsilon = 1e-14);
    }

    #[test]
    fn pseudoinverse_of_rectangular_is_transposed_shape() {
        let m = dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0];
        let p = pseudoinverse(&m);
        assert_eq!(p.shape(), (3, 2));
        assert_abs_diff_eq!(&m * &p * &m, m, epsilon = 1e-12);
        let tall = m.transpose();
        let pt = pseudoinverse(&tall);
        assert_abs_diff_eq!(&tall * &pt * &tall, tall, epsilon = 1e-12);
        let rank_one = dmatrix![1.0, 2.0; 2.0, 4.0; 3.0, 6.0];
        let pr = pseudoinverse(&rank_one);
        assert_abs_diff_eq!(&rank_one * &pr * &rank_one, rank_one, epsilon = 1e-12);
        assert_abs_diff_eq!(&pr * &rank_one * &pr, pr, epsilon = 1e-12);
    }

    #[test]
    fn dare_scalar_golden_ratio_case() {
        let one = dmatrix![1.0];
        let p = solve_dare(&dmatrix![2.0], &one, &one, &one).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 2.0 + 5f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn dare_with_zero_dynamics_is_q() {
        let a = DMatrix::zeros(2, 2);
        let c = DMatrix::identity(2, 2);
        let q = dmatrix![0.6, 0.2; 0.2, 0.5];
        let r = DMatrix::identity(2, 2);
        let p = solve_dare(&a, &c, &q, &r).unwrap();
        assert_abs_diff_eq!(p.matrix(), &q, epsilon = 1e-14);
    }

    /// Reference value produced by iterating the Riccati map from `Q` until the
    /// increment stalls (golden value frozen from that run).
    #[test]
    fn dare_output_scenario_is_fixed_point() {
        let a = dmatrix![1.2, 0.1; 0.0, 0.5];
        let c = dmatrix![1.0, 1.0];
        let q = dmatrix![0.6, 0.2; 0.2, 0.5];
        let r = dmatrix![1.0];
        let p = solve_dare(&a, &c, &q, &r).unwrap();
        assert!(dare_residual(p.matrix(), &a, &c, &q, &r) <= 1e-9);

        let mut it = q.clone();
        for _ in 0..10_000 {
            it = riccati_map(&it, &a, &c, &q, &r);
        }
        assert_abs_diff_eq!(p.matrix(), &it, epsilon = 1e-11);
        assert_abs_diff_eq!(p[(0, 0)], GOLDEN_P11, epsilon = 1e-9);
        assert_abs_diff_eq!(p[(0, 1)], GOLDEN_P12, epsilon = 1e-9);
        assert_abs_diff_eq!(p[(1, 1)], GOLDEN_P22, epsilon = 1e-9);
    }

    // Cross-checked against an independent numpy iteration and scipy's
    // Schur-based DARE solver.
    const GOLDEN_P11: f64 = 1.692_800_051_020_255_9;
    const GOLDEN_P12: f64 = 0.047_992_777_877_472_83;
    const GOLDEN_P22: f64 = 0.622_712_770_824_901_8;

    #[test]
    fn dare_reports_divergence() {
        // (A, C) not detectable: the unobservable unstable mode blows up.
        let a = dmatrix![2.0, 0.0; 0.0, 0.5];
        let c = dmatrix![0.0, 1.0];
        let q = DMatrix::identity(2, 2);
        let r = dmatrix![1.0];
        assert!(matches!(solve_dare(&a, &c, &q, &r), Err(Error::Numeric(_))));
    }

    #[test]
    fn gain_examples() {
        let pbar = 2.0 + 5f64.sqrt();
        let k = kalman_gain(&dmatrix![pbar], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], pbar / (pbar + 1.0), epsilon = 1e-14);
        assert_abs_diff_eq!(k[(0, 0)], 0.809_016_994_374_947_4, epsilon = 1e-12);

        let p = dmatrix![0.9, 0.1; 0.1, 0.4];
        let big = kalman_gain(&p, &DMatrix::identity(2, 2), &(DMatrix::identity(2, 2) * 1e12)).unwrap();
        assert!(big.norm() <= 1e-11);

        let zero_r = DMatrix::zeros(2, 2);
        assert!(matches!(
            kalman_gain(&DMatrix::zeros(2, 2), &DMatrix::identity(2, 2), &zero_r),
            Err(Error::Numeric(_))
        ));
        let k = kalman_gain_pinv(&p, &DMatrix::identity(2, 2), &zero_r).unwrap();
        assert_abs_diff_eq!(k, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn spectral_radius_examples() {
        assert_abs_diff_eq!(spectral_radius(&dmatrix![1.2, 0.1; 0.0, 0.5]), 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(spectral_radius(&DMatrix::identity(4, 4)), 1.0, epsilon = 1e-12);
        let rot = dmatrix![0.0, -2.0; 2.0, 0.0];
        assert_abs_diff_eq!(spectral_radius(&rot), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn left_eigenvector_satisfies_definition() {
        for a in [dmatrix![1.2, 0.1; 0.0, 0.5], dmatrix![0.3, -1.1; 1.4, 0.2], dmatrix![2.0]] {
            let (lambda, v) = dominant_left_eigenvector(&a);
            let ac = a.map(|x| Complex64::new(x, 0.0));
            let lhs = v.adjoint() * ac;
            let rhs = v.adjoint() * lambda;
            assert!((lhs - rhs).norm() < 1e-10, "a = {a}");
            assert_abs_diff_eq!(lambda.norm(), spectral_radius(&a), epsilon = 1e-12);
        }
    }

    #[test]
    fn rayleigh_quotient_on_real_vector() {
        let v = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        let m = dmatrix![2.0, 1.0; 1.0, 4.0];
        assert_abs_diff_eq!(rayleigh_quotient(&v, &m), 4.0, epsilon = 1e-14);
    }
}
