//! Ground-truth eavesdropper posterior by one-shot batch conditioning.
//!
//! All states up to `k` are linear in `ξ = (x_0, w_1, …, w_k)`, and every
//! intercepted packet `z_m = x_m − A^{m−t_m} x_{t_m}` is a linear functional of
//! `ξ` once the reference times are fixed by the user's outcomes. Stacking
//! those functionals and conditioning the Gaussian prior on `ξ` gives the
//! exact posterior of `x_k`. Cost grows like `(n k)^3`, so this is for
//! validation only.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::channel::OutcomeTrace;
use crate::code::CodeMode;
use crate::error::{Error, Result};
use crate::gaussian::{matrix_power, symmetrize, CovarianceMatrix, PINV_RELATIVE_TOL};
use crate::plant::LinearSystem;

/// Largest `n·(k+1)` the oracle accepts.
pub const ORACLE_MAX_DIM: usize = 60;

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Posterior mean of `x_k` (or `x̄_k`), given `payloads`.
    pub mean: DVector<f64>,
    /// `P_k` (state mode) or `H_k` (output mode).
    pub cov: CovarianceMatrix,
}

/// Posterior of the encoded process at step `k` given the packets intercepted
/// up to `k` on `trace`.
///
/// In output mode the process is the sensor's local estimate, whose initial
/// value and increments are `N(0, Q̄)`; pass `Q̄` as `increment_cov`. `payloads`
/// supplies `z_m` for each intercepted `m ≤ k` (entries at other steps are
/// ignored); pass `None` to compute the covariance only.
pub fn batch_oracle(
    sys: &LinearSystem,
    mode: CodeMode,
    increment_cov: Option<&CovarianceMatrix>,
    trace: &OutcomeTrace,
    payloads: Option<&[DVector<f64>]>,
    k: usize,
) -> Result<OracleResult> {
    let n = sys.n();
    let dim = n * (k + 1);
    if dim > ORACLE_MAX_DIM {
        return Err(Error::invalid(format!(
            "oracle size n·(k+1) = {dim} exceeds the cap of {ORACLE_MAX_DIM}"
        )));
    }
    if k >= trace.len() {
        return Err(Error::invalid(format!("k = {k} is beyond the trace (length {})", trace.len())));
    }
    let (initial, noise) = match (mode, increment_cov) {
        (CodeMode::State, _) => (sys.sigma0().matrix().clone(), sys.q().matrix().clone()),
        (CodeMode::Output, Some(q_bar)) => (q_bar.matrix().clone(), q_bar.matrix().clone()),
        (CodeMode::Output, None) => return Err(Error::invalid("output-mode oracle needs Q̄")),
    };

    // Whitened prior: ξ = D^{1/2} η with η ~ N(0, I), D = blockdiag(initial, noise, …).
    let root = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let eig = SymmetricEigen::new(m.clone());
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose()
    };
    let mut scale = DMatrix::zeros(dim, dim);
    scale.view_mut((0, 0), (n, n)).copy_from(&root(&initial));
    let noise_root = root(&noise);
    for j in 1..=k {
        scale.view_mut((j * n, j * n), (n, n)).copy_from(&noise_root);
    }

    // phi[j] maps ξ to x_j: x_j = A^j x_0 + Σ_{i=1..j} A^{j−i} w_i.
    let a = sys.a();
    let powers: Vec<DMatrix<f64>> = (0..=k).map(|p| matrix_power(a, p)).collect();
    let phi = |j: usize| -> DMatrix<f64> {
        let mut row = DMatrix::zeros(n, dim);
        row.view_mut((0, 0), (n, n)).copy_from(&powers[j]);
        for i in 1..=j {
            row.view_mut((0, i * n), (n, n)).copy_from(&powers[j - i]);
        }
        row
    };

    let t = trace.reference_times();
    let observed: Vec<usize> = (0..=k).filter(|&m| trace.eve(m)).collect();
    let px = phi(k) * &scale;
    if observed.is_empty() {
        return Ok(OracleResult {
            mean: DVector::zeros(n),
            cov: CovarianceMatrix::from_symmetrized(&(&px * px.transpose())),
        });
    }

    // Rows of `l` are the intercepted packets as functionals of η. With a
    // reference at t ≥ 0 the packet is Σ_{j=t+1..m} A^{m−j} w_j, so only those
    // blocks are filled; subtracting A^{m−t} x_t from x_m would cancel the rest
    // only up to rounding.
    let mut l = DMatrix::zeros(n * observed.len(), dim);
    let mut z = DVector::zeros(n * observed.len());
    for (row, &m) in observed.iter().enumerate() {
        let functional = if t[m] >= 0 {
            let mut f = DMatrix::zeros(n, dim);
            for j in (t[m] as usize + 1)..=m {
                f.view_mut((0, j * n), (n, n)).copy_from(&powers[m - j]);
            }
            f
        } else {
            phi(m)
        };
        l.view_mut((row * n, 0), (n, dim)).copy_from(&(functional * &scale));
        if let Some(p) = payloads {
            let zm = p.get(m).ok_or_else(|| Error::invalid(format!("no payload for intercepted step {m}")))?;
            if zm.len() != n {
                return Err(Error::invalid(format!("payload at {m} has length {}, expected {n}", zm.len())));
            }
            z.rows_mut(row * n, n).copy_from(zm);
        }
    }

    // Conditioning η on l·η = z is an orthogonal projection onto the null
    // space of l: the posterior of η is N(l† z, I − l† l), the Schur
    // complement of the joint covariance. With l l' = V Λ V', the rows of
    // B = Λ^{−1/2} V' l are an orthonormal basis of the row space of l and
    // l† z = B' Λ^{−1/2} V' z. Directions with λ ≤ 1e-10·λ_max are dropped.
    let eig = SymmetricEigen::new(symmetrize(&(&l * l.transpose())));
    let lmax = eig.eigenvalues.max();
    let mut eta_mean = DVector::zeros(dim);
    let mut projector = DMatrix::<f64>::identity(dim, dim);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > PINV_RELATIVE_TOL * lmax {
            let scale = lambda.sqrt().recip();
            let b = (l.transpose() * eig.eigenvectors.column(i)) * scale;
            eta_mean += &b * (eig.eigenvectors.column(i).dot(&z) * scale);
            projector -= &b * b.transpose();
        }
    }
    let spread = &px * projector;
    Ok(OracleResult {
        mean: &px * eta_mean,
        cov: CovarianceMatrix::from_symmetrized(&(&spread * spread.transpose())),
    })
}
