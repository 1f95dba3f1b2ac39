//! Exact MMSE filter for the eavesdropper.
//!
//! The eavesdropper sees every acknowledgment, so she always knows the
//! reference time `r` the sensor is encoding against. Her belief is a joint
//! Gaussian over two blocks:
//!
//! * `reference`: the reference value `x_r` (or `x̄_r`),
//! * `pending`: `current − M·reference` with `M = A^{k−r}`,
//!
//! so an intercepted packet observes the `pending` block directly. Tracking the
//! difference instead of the raw current state keeps the intercepted
//! coordinates well scaled: with `M` growing like `ρ(A)^{k−r}`, forming
//! `current − M·reference` from a `(current, reference)` covariance would
//! cancel almost all significant digits.

use nalgebra::{DMatrix, DVector};

use crate::code::CodeMode;
use crate::error::{Error, Result};
use crate::gaussian::{condition, CovarianceMatrix, GaussianBelief};
use crate::plant::LinearSystem;

const REFERENCE: &str = "reference";
const PENDING: &str = "pending";

#[derive(Debug, Clone)]
pub struct EveFilter {
    mode: CodeMode,
    a: DMatrix<f64>,
    /// Increment covariance of the encoded process: `Q`, or `Q̄` in output mode.
    noise: DMatrix<f64>,
    belief: GaussianBelief,
    /// `A^{k−r}`.
    power: DMatrix<f64>,
    r: i64,
    k: usize,
}

impl EveFilter {
    /// Belief at `k = 0` before the first packet: reference pinned at `0`,
    /// pending block `N(0, Σ0)`.
    pub fn state(sys: &LinearSystem) -> Self {
        Self::prior(sys, CodeMode::State, sys.q().matrix().clone(), sys.sigma0().matrix().clone())
    }

    /// Output-mode filter over `x̄_k`. `increment_cov` is `Q̄ = K(CP̄C'+R)K'`,
    /// which is also the covariance of `x̄_0 = K y_0` when `Σ0 = P̄`.
    pub fn output(sys: &LinearSystem, increment_cov: &CovarianceMatrix) -> Self {
        let q_bar = increment_cov.matrix().clone();
        Self::prior(sys, CodeMode::Output, q_bar.clone(), q_bar)
    }

    fn prior(sys: &LinearSystem, mode: CodeMode, noise: DMatrix<f64>, initial: DMatrix<f64>) -> Self {
        let n = sys.n();
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        cov.view_mut((n, n), (n, n)).copy_from(&initial);
        let belief = GaussianBelief::new(
            DVector::zeros(2 * n),
            CovarianceMatrix::from_symmetrized(&cov),
            &[(REFERENCE, n), (PENDING, n)],
        )
        .expect("prior blocks are consistent by construction");
        Self {
            mode,
            a: sys.a().clone(),
            noise,
            belief,
            power: sys.a().clone(),
            r: -1,
            k: 0,
        }
    }

    pub fn mode(&self) -> CodeMode {
        self.mode
    }

    /// Current time index.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Reference time the sensor uses at step `k`, i.e. `t_k`.
    pub fn reference_time(&self) -> i64 {
        self.r
    }

    pub fn joint(&self) -> &GaussianBelief {
        &self.belief
    }

    fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Advances from `k − 1` to `k`. `user_received_prev` is `γ_u,k−1`, learned
    /// from the acknowledgment.
    pub fn predict(&mut self, user_received_prev: bool) -> Result<()> {
        let n = self.n();
        let mut map = DMatrix::zeros(2 * n, 2 * n);
        let mut noise = DMatrix::zeros(2 * n, 2 * n);
        noise.view_mut((n, n), (n, n)).copy_from(&self.noise);
        if user_received_prev {
            // The previous current value becomes the reference; the new
            // pending block is the fresh increment alone.
            map.view_mut((0, 0), (n, n)).copy_from(&self.power);
            map.view_mut((0, n), (n, n)).fill_with_identity();
            self.power = self.a.clone();
            self.r = self.k as i64;
        } else {
            map.view_mut((0, 0), (n, n)).fill_with_identity();
            map.view_mut((n, n), (n, n)).copy_from(&self.a);
            self.power = &self.a * &self.power;
        }
        self.belief = self.belief.linear_map(&map, &noise, &[(REFERENCE, n), (PENDING, n)])?;
        self.k += 1;
        Ok(())
    }

    /// Folds in step `k`'s channel output. `intercepted` is `γ_k`; `payload` must
    /// be present exactly when it is 1.
    pub fn update(&mut self, intercepted: bool, payload: Option<&DVector<f64>>) -> Result<()> {
        let n = self.n();
        match (intercepted, payload) {
            (false, None) => Ok(()),
            (true, Some(z)) => {
                if z.len() != n {
                    return Err(Error::invalid(format!("payload has length {}, expected {n}", z.len())));
                }
                let post = condition(&self.belief, PENDING, z)?;
                let mut mean = DVector::zeros(2 * n);
                mean.rows_mut(0, n).copy_from(post.mean());
                mean.rows_mut(n, n).copy_from(z);
                let mut cov = DMatrix::zeros(2 * n, 2 * n);
                cov.view_mut((0, 0), (n, n)).copy_from(post.cov().matrix());
                self.belief = GaussianBelief::new(
                    mean,
                    CovarianceMatrix::from_symmetrized(&cov),
                    &[(REFERENCE, n), (PENDING, n)],
                )?;
                Ok(())
            }
            (true, None) => Err(Error::invalid(format!("γ_k = 1 at k = {} but no payload given", self.k))),
            (false, Some(_)) => Err(Error::invalid(format!("γ_k = 0 at k = {} but a payload was given", self.k))),
        }
    }

    /// `[M I]`, mapping the joint state to the encoded process at time `k`.
    fn readout(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = DMatrix::zeros(n, 2 * n);
        l.view_mut((0, 0), (n, n)).copy_from(&self.power);
        l.view_mut((0, n), (n, n)).fill_with_identity();
        l
    }

    /// Estimate of `x_k` (state mode) or `η_k`, the estimate of `x̄_k` (output mode).
    pub fn estimate(&self) -> DVector<f64> {
        self.readout() * self.belief.mean()
    }

    /// `P_k` in state mode, `H_k` in output mode.
    pub fn covariance(&self) -> CovarianceMatrix {
        self.belief.cov().congruence(&self.readout())
    }
}
