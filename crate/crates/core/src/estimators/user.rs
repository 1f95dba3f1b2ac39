use nalgebra::DVector;

use crate::code::{user_decode, CodeMode, Reference};
use crate::error::{Error, Result};
use crate::gaussian::CovarianceMatrix;
use crate::plant::LinearSystem;

/// The user's MMSE estimate of `x_k`.
///
/// At a reception the user decodes `x_k` (state mode) or `x̄_k` (output mode)
/// exactly, so the error covariance is `0` or `P̄ − KCP̄`. Between receptions
/// it predicts open loop.
#[derive(Debug, Clone, PartialEq)]
pub struct UserBelief {
    pub est: DVector<f64>,
    pub cov: CovarianceMatrix,
    pub last_decoded: Reference,
    /// Error covariance right after a reception.
    reception_cov: CovarianceMatrix,
    next_k: usize,
}

impl UserBelief {
    /// `reception_cov` is `0` in state mode and `P̄ − KCP̄` in output mode.
    pub fn new(sys: &LinearSystem, mode: CodeMode, reception_cov: Option<CovarianceMatrix>) -> Result<Self> {
        let n = sys.n();
        let reception_cov = match (mode, reception_cov) {
            (CodeMode::State, None) => CovarianceMatrix::zeros(n),
            (CodeMode::Output, Some(c)) if c.dim() == n => c,
            (CodeMode::State, Some(_)) => {
                return Err(Error::invalid("state mode decodes exactly; no reception covariance expected"))
            }
            (CodeMode::Output, _) => return Err(Error::invalid("output mode needs P̄ − KCP̄ of matching size")),
        };
        Ok(Self {
            est: DVector::zeros(n),
            cov: sys.sigma0().clone(),
            last_decoded: Reference::initial(n),
            reception_cov,
            next_k: 0,
        })
    }

    /// Time index the next call to [`UserBelief::step`] will process.
    pub fn next_k(&self) -> usize {
        self.next_k
    }

    /// Processes step `k` with the packet (or erasure) the user got.
    pub fn step(&mut self, sys: &LinearSystem, received: Option<&DVector<f64>>) {
        let k = self.next_k;
        match user_decode(received, &self.last_decoded, k, sys.a()) {
            Some(value) => {
                self.est = value.clone();
                self.cov = self.reception_cov.clone();
                self.last_decoded = Reference {
                    time: k as i64,
                    value,
                };
            }
            None if k == 0 => {
                self.est = DVector::zeros(sys.n());
                self.cov = sys.sigma0().clone();
            }
            None => {
                self.est = sys.a() * &self.est;
                let next = sys.a() * self.cov.matrix() * sys.a().transpose() + sys.q().matrix();
                self.cov = CovarianceMatrix::from_symmetrized(&next);
            }
        }
        self.next_k += 1;
    }
}
