//! The state-secrecy encoder, its sensor-side local Kalman filter, and the
//! user's decoder.
//!
//! The sensor sends `z_k = x_k − A^{k−t_k} x_{t_k}` (or the same difference of
//! local estimates `x̄_k` when only outputs are measured), where `t_k` is the
//! last step the user acknowledged. Before any acknowledgment the reference is
//! `t = −1`, `x_{−1} = 0`, so the first packet carries `x_0` in the clear.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{kalman_gain, matrix_power, solve_dare, CovarianceMatrix};
use crate::plant::LinearSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeMode {
    /// The sensor measures `x_k` directly.
    State,
    /// The sensor measures `y_k` and encodes its local estimate `x̄_k`.
    Output,
}

/// Steady-state Kalman filter run at the sensor:
/// `x̄_k = A x̄_{k−1} + K (y_k − C A x̄_{k−1})`, with `x̄_{−1} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalKalmanFilter {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    est: DVector<f64>,
    pred_cov: CovarianceMatrix,
    gain: DMatrix<f64>,
    innovation_cov: CovarianceMatrix,
    last_innovation: Option<DVector<f64>>,
}

impl LocalKalmanFilter {
    /// Solves the DARE for `sys` and starts from `x̄_{−1} = 0`.
    pub fn steady(sys: &LinearSystem) -> Result<Self> {
        let p = solve_dare(sys.a(), sys.c(), sys.q(), sys.r())?;
        Self::from_prediction_cov(sys, p)
    }

    /// Uses a precomputed `P̄`.
    pub fn from_prediction_cov(sys: &LinearSystem, pbar: CovarianceMatrix) -> Result<Self> {
        let gain = kalman_gain(&pbar, sys.c(), sys.r())?;
        let s = sys.c() * pbar.matrix() * sys.c().transpose() + sys.r().matrix();
        Ok(Self {
            a: sys.a().clone(),
            c: sys.c().clone(),
            est: DVector::zeros(sys.n()),
            pred_cov: pbar,
            gain,
            innovation_cov: CovarianceMatrix::from_symmetrized(&s),
            last_innovation: None,
        })
    }

    pub fn step(&mut self, y: &DVector<f64>) -> Result<&DVector<f64>> {
        if y.len() != self.c.nrows() {
            return Err(Error::invalid(format!(
                "measurement has length {}, expected {}",
                y.len(),
                self.c.nrows()
            )));
        }
        let pred = &self.a * &self.est;
        let innovation = y - &self.c * &pred;
        self.est = pred + &self.gain * &innovation;
        self.last_innovation = Some(innovation);
        Ok(&self.est)
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.est
    }

    /// `P̄`, the steady one-step prediction covariance.
    pub fn prediction_cov(&self) -> &CovarianceMatrix {
        &self.pred_cov
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn last_innovation(&self) -> Option<&DVector<f64>> {
        self.last_innovation.as_ref()
    }

    /// `P̄ − K C P̄`, the filtered error covariance of `x̄_k` about `x_k`.
    pub fn filtered_cov(&self) -> CovarianceMatrix {
        let m = self.pred_cov.matrix() - &self.gain * &self.c * self.pred_cov.matrix();
        CovarianceMatrix::from_symmetrized(&m)
    }

    /// `Q̄ = K (C P̄ C' + R) K'`, the covariance of the increment `K·innovation`.
    pub fn increment_cov(&self) -> CovarianceMatrix {
        self.innovation_cov.congruence(&self.gain)
    }
}

/// Sensor-side encoder memory.
#[derive(Debug, Clone)]
pub struct Encoder {
    mode: CodeMode,
    a: DMatrix<f64>,
    ref_time: i64,
    ref_value: DVector<f64>,
    /// `A^{last − ref_time}`, or `I` before the first encode.
    power: DMatrix<f64>,
    last_encoded: Option<usize>,
    pending: Option<DVector<f64>>,
    kf: Option<LocalKalmanFilter>,
}

impl Encoder {
    pub fn state(sys: &LinearSystem) -> Self {
        Self::with_filter(sys, CodeMode::State, None)
    }

    pub fn output(sys: &LinearSystem) -> Result<Self> {
        Ok(Self::with_filter(sys, CodeMode::Output, Some(LocalKalmanFilter::steady(sys)?)))
    }

    /// Output-mode encoder around an existing local filter.
    pub fn output_with(sys: &LinearSystem, kf: LocalKalmanFilter) -> Self {
        Self::with_filter(sys, CodeMode::Output, Some(kf))
    }

    fn with_filter(sys: &LinearSystem, mode: CodeMode, kf: Option<LocalKalmanFilter>) -> Self {
        let n = sys.n();
        Self {
            mode,
            a: sys.a().clone(),
            ref_time: -1,
            ref_value: DVector::zeros(n),
            power: DMatrix::identity(n, n),
            last_encoded: None,
            pending: None,
            kf,
        }
    }

    pub fn mode(&self) -> CodeMode {
        self.mode
    }

    pub fn ref_time(&self) -> i64 {
        self.ref_time
    }

    pub fn ref_value(&self) -> &DVector<f64> {
        &self.ref_value
    }

    pub fn last_encoded(&self) -> Option<usize> {
        self.last_encoded
    }

    pub fn local_filter(&self) -> Option<&LocalKalmanFilter> {
        self.kf.as_ref()
    }

    /// Encodes step `k`. `measurement` is `x_k` in state mode and `y_k` in
    /// output mode (the local filter is advanced first).
    pub fn encode(&mut self, k: usize, measurement: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(last) = self.last_encoded {
            if k <= last {
                return Err(Error::invalid(format!("encode at k = {k} after k = {last}")));
            }
        }
        let steps = k as i64 - self.last_encoded.map_or(-1, |l| l as i64);
        let current = match &mut self.kf {
            Some(kf) => kf.step(measurement)?.clone(),
            None => {
                if measurement.len() != self.ref_value.len() {
                    return Err(Error::invalid(format!(
                        "state has length {}, expected {}",
                        measurement.len(),
                        self.ref_value.len()
                    )));
                }
                measurement.clone()
            }
        };
        for _ in 0..steps {
            self.power = &self.a * &self.power;
        }
        let z = &current - &self.power * &self.ref_value;
        self.pending = Some(current);
        self.last_encoded = Some(k);
        Ok(z)
    }

    /// Records the user's acknowledgment of packet `k`.
    pub fn ack(&mut self, k: usize) -> Result<()> {
        match (self.last_encoded, self.pending.take()) {
            (Some(last), Some(value)) if last == k => {
                self.ref_time = k as i64;
                self.ref_value = value;
                self.power = DMatrix::identity(self.a.nrows(), self.a.nrows());
                Ok(())
            }
            (last, pending) => {
                self.pending = pending;
                Err(Error::invalid(format!(
                    "acknowledgment for k = {k} but last encoded index is {last:?}"
                )))
            }
        }
    }
}

/// The user's copy of the reference `(t, x_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub time: i64,
    pub value: DVector<f64>,
}

impl Reference {
    pub fn initial(n: usize) -> Self {
        Self {
            time: -1,
            value: DVector::zeros(n),
        }
    }
}

/// Inverts the code at the user: `z_k + A^{k−t} x_t`. Returns `None` on erasure.
pub fn user_decode(received: Option<&DVector<f64>>, reference: &Reference, k: usize, a: &DMatrix<f64>) -> Option<DVector<f64>> {
    let z = received?;
    let exponent = (k as i64 - reference.time) as usize;
    Some(z + matrix_power(a, exponent) * &reference.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar_output() -> LinearSystem {
        LinearSystem::new(dmatrix![2.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0]).unwrap()
    }

    #[test]
    fn noiseless_difference_is_zero() {
        let a = dmatrix![1.2, 0.1; 0.0, 0.5];
        let sys = LinearSystem::noiseless(a.clone(), DMatrix::identity(2, 2)).unwrap();
        let mut enc = Encoder::state(&sys);
        let mut x = dvector![1.0, -1.0];
        enc.encode(0, &x).unwrap();
        enc.ack(0).unwrap();
        for k in 1..6 {
            x = &a * x;
            let z = enc.encode(k, &x).unwrap();
            assert_abs_diff_eq!(z, DVector::zeros(2), epsilon = 1e-14);
        }
    }

    #[test]
    fn example1_packets() {
        let a = dmatrix![1.2, 0.1; 0.0, 0.5];
        let sys = LinearSystem::noiseless(a.clone(), DMatrix::identity(2, 2)).unwrap();
        let xs = [dvector![1.0, 2.0], dvector![0.5, -1.0], dvector![3.0, 0.0], dvector![-2.0, 1.0]];
        let gamma_u = [false, true, true, true];
        let mut enc = Encoder::state(&sys);
        let mut times = Vec::new();
        let mut zs = Vec::new();
        for k in 0..4 {
            times.push(enc.ref_time());
            zs.push(enc.encode(k, &xs[k]).unwrap());
            if gamma_u[k] {
                enc.ack(k).unwrap();
            }
        }
        assert_eq!(times, vec![-1, -1, 1, 2]);
        assert_eq!(zs[0], xs[0]);
        assert_abs_diff_eq!(zs[1], xs[1].clone() - &a * &a * DVector::zeros(2), epsilon = 0.0);
        assert_abs_diff_eq!(zs[2], &xs[2] - &a * &xs[1], epsilon = 1e-15);
        assert_abs_diff_eq!(zs[3], &xs[3] - &a * &xs[2], epsilon = 1e-15);
    }

    #[test]
    fn scalar_zero_reference_convention() {
        let sys = LinearSystem::noiseless(dmatrix![2.0], dmatrix![1.0]).unwrap();
        let mut enc = Encoder::state(&sys);
        enc.encode(0, &dvector![1.0]).unwrap();
        assert_eq!(enc.encode(1, &dvector![3.0]).unwrap(), dvector![3.0]);
    }

    #[test]
    fn reference_power_skips_missing_indices() {
        let sys = LinearSystem::noiseless(dmatrix![2.0], dmatrix![1.0]).unwrap();
        let mut enc = Encoder::state(&sys);
        enc.encode(0, &dvector![1.0]).unwrap();
        enc.ack(0).unwrap();
        assert_eq!(enc.encode(3, &dvector![8.0]).unwrap(), dvector![0.0]);
    }

    #[test]
    fn ack_bookkeeping() {
        let sys = LinearSystem::noiseless(dmatrix![2.0], dmatrix![1.0]).unwrap();
        let mut enc = Encoder::state(&sys);
        enc.encode(0, &dvector![1.0]).unwrap();
        enc.ack(0).unwrap();
        assert_eq!(enc.ref_time(), 0);

        let mut enc = Encoder::state(&sys);
        enc.encode(0, &dvector![1.0]).unwrap();
        enc.encode(1, &dvector![5.0]).unwrap();
        assert!(enc.ack(0).is_err());
        enc.ack(1).unwrap();
        assert_eq!((enc.ref_time(), enc.ref_value().clone()), (1, dvector![5.0]));
        assert!(enc.ack(1).is_err(), "double ack");
        assert!(enc.encode(1, &dvector![0.0]).is_err(), "non-monotone k");
    }

    #[test]
    fn local_filter_zero_innovation() {
        let sys = scalar_output();
        let mut kf = LocalKalmanFilter::steady(&sys).unwrap();
        kf.step(&dvector![0.7]).unwrap();
        let prev = kf.estimate().clone();
        let y = sys.c() * sys.a() * &prev;
        let next = kf.step(&y).unwrap().clone();
        assert_abs_diff_eq!(next, sys.a() * prev, epsilon = 1e-15);
        assert_abs_diff_eq!(kf.last_innovation().unwrap()[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn local_filter_scalar_gain() {
        let sys = scalar_output();
        let mut kf = LocalKalmanFilter::steady(&sys).unwrap();
        let s5 = 5f64.sqrt();
        let gain = (2.0 + s5) / (3.0 + s5);
        // x̄_0 = K y_0 with y_0 = 0 keeps the estimate at 0.
        kf.step(&dvector![0.0]).unwrap();
        let x1 = kf.step(&dvector![1.0]).unwrap()[0];
        assert_abs_diff_eq!(x1, gain, epsilon = 1e-9);
        assert_abs_diff_eq!(kf.filtered_cov()[(0, 0)], gain, epsilon = 1e-9);
        assert!(kf.step(&dvector![1.0, 2.0]).is_err());
    }

    #[test]
    fn decode_round_trip() {
        let a = dmatrix![1.2, 0.1; 0.0, 0.5];
        let x1 = dvector![0.3, -0.4];
        let x2 = dvector![1.1, 0.9];
        let z2 = &x2 - &a * &x1;
        let r = Reference { time: 1, value: x1 };
        assert_abs_diff_eq!(user_decode(Some(&z2), &r, 2, &a).unwrap(), x2, epsilon = 1e-15);
        assert_eq!(user_decode(None, &r, 2, &a), None);
        let x0 = dvector![4.0, 5.0];
        assert_eq!(user_decode(Some(&x0), &Reference::initial(2), 0, &a).unwrap(), x0);
    }
}
