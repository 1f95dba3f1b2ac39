//! The linear plant `x_{k+1} = A x_k + w_{k+1}`, `y_k = C x_k + v_k`.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{spectral_radius, symmetrize, CovarianceMatrix};
use crate::rng::{self, Purpose};

/// Plant matrices and noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    q: CovarianceMatrix,
    r: CovarianceMatrix,
    sigma0: CovarianceMatrix,
    noiseless: bool,
}

impl LinearSystem {
    /// General output-measurement plant. Requires `Q, R, Σ0 ≻ 0`.
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        sigma0: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::invalid(format!("A must be square and non-empty, got {:?}", a.shape())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::invalid(format!("C must be m x {n} with m > 0, got {:?}", c.shape())));
        }
        if a.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("A and C must be finite"));
        }
        let q = positive_definite("Q", q, n)?;
        let r = positive_definite("R", r, c.nrows())?;
        let sigma0 = positive_definite("Sigma0", sigma0, n)?;
        Ok(Self {
            a,
            c,
            q,
            r,
            sigma0,
            noiseless: false,
        })
    }

    /// Direct state measurements: `C = I`, `R = 0`. Requires `Q, Σ0 ≻ 0`.
    pub fn state_measurement(a: DMatrix<f64>, q: DMatrix<f64>, sigma0: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("A must be square, finite and non-empty, got {:?}", a.shape())));
        }
        let q = positive_definite("Q", q, n)?;
        let sigma0 = positive_definite("Sigma0", sigma0, n)?;
        Ok(Self {
            c: DMatrix::identity(n, n),
            r: CovarianceMatrix::zeros(n),
            a,
            q,
            sigma0,
            noiseless: false,
        })
    }

    /// Test hook: `Q = R = Σ0 = 0`, bypassing the positive-definiteness
    /// invariants so analytic examples can run deterministically.
    pub fn noiseless(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() || c.ncols() != n {
            return Err(Error::invalid("noiseless system needs square A and C with matching columns"));
        }
        let m = c.nrows();
        Ok(Self {
            a,
            c,
            q: CovarianceMatrix::zeros(n),
            r: CovarianceMatrix::zeros(m),
            sigma0: CovarianceMatrix::zeros(n),
            noiseless: true,
        })
    }

    pub fn with_sigma0(mut self, sigma0: DMatrix<f64>) -> Result<Self> {
        self.sigma0 = positive_definite("Sigma0", sigma0, self.n())?;
        Ok(self)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn q(&self) -> &CovarianceMatrix {
        &self.q
    }

    pub fn r(&self) -> &CovarianceMatrix {
        &self.r
    }

    pub fn sigma0(&self) -> &CovarianceMatrix {
        &self.sigma0
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_noiseless(&self) -> bool {
        self.noiseless
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    /// Secrecy guarantees need `ρ(A) > 1`; stable plants are allowed but flagged.
    pub fn is_unstable(&self) -> bool {
        self.spectral_radius() > 1.0
    }
}

fn positive_definite(name: &str, m: DMatrix<f64>, dim: usize) -> Result<CovarianceMatrix> {
    if m.shape() != (dim, dim) {
        return Err(Error::invalid(format!("{name} must be {dim}x{dim}, got {:?}", m.shape())));
    }
    let cov = CovarianceMatrix::new(m).map_err(|e| Error::invalid(format!("{name}: {e}")))?;
    if !cov.is_positive_definite() {
        return Err(Error::invalid(format!(
            "{name} must be positive definite (min eigenvalue {:e})",
            cov.min_eigenvalue()
        )));
    }
    Ok(cov)
}

/// Draws `N(0, cov)`. Uses a Cholesky factor, falling back to an
/// eigendecomposition with negative eigenvalues clamped to zero when the
/// matrix is only semidefinite.
pub fn sample_gaussian<R: Rng + ?Sized>(rng: &mut R, cov: &DMatrix<f64>) -> DVector<f64> {
    let n = cov.nrows();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    if let Some(ch) = cov.clone().cholesky() {
        return ch.l() * z;
    }
    let eig = SymmetricEigen::new(symmetrize(cov));
    let mut factor = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    factor * z
}

/// A simulated realization of the plant over `k = 0..=horizon`.
///
/// `process_noise[0]` is stored as zero; the initial state is drawn from `Σ0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub process_noise: Vec<DVector<f64>>,
    pub measurement_noise: Vec<DVector<f64>>,
    pub seed: u64,
    pub trace_id: u64,
}

impl Trajectory {
    /// Last time index `K` (the trajectory holds `K + 1` samples).
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Writes `k, x_1..x_n, y_1..y_m, w_1..w_n, v_1..v_m` with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let n = self.states.first().map_or(0, |x| x.len());
        let m = self.outputs.first().map_or(0, |y| y.len());
        w.write_record(trajectory_header(n, m)).map_err(|e| csv_io(path, e))?;
        for k in 0..self.states.len() {
            let mut row = vec![k.to_string()];
            for v in [
                &self.states[k],
                &self.outputs[k],
                &self.process_noise[k],
                &self.measurement_noise[k],
            ] {
                row.extend(v.iter().map(|x| x.to_string()));
            }
            w.write_record(&row).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a file produced by [`Trajectory::write_csv`]; `n` and `m` are the
    /// state and output dimensions.
    pub fn read_csv(path: &Path, n: usize, m: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| csv_io(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != trajectory_header(n, m) {
            return Err(Error::Csv {
                path: path.into(),
                line: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
        let mut t = Trajectory {
            states: Vec::new(),
            outputs: Vec::new(),
            process_noise: Vec::new(),
            measurement_noise: Vec::new(),
            seed: 0,
            trace_id: 0,
        };
        for (i, rec) in r.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| csv_io(path, e))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Csv {
                    path: path.into(),
                    line,
                    message: e.to_string(),
                })?;
            if vals[0] as usize != i {
                return Err(Error::Csv {
                    path: path.into(),
                    line,
                    message: format!("expected k = {i}, found {}", vals[0]),
                });
            }
            let mut at = 1;
            let mut take = |len: usize| {
                let v = DVector::from_column_slice(&vals[at..at + len]);
                at += len;
                v
            };
            t.states.push(take(n));
            t.outputs.push(take(m));
            t.process_noise.push(take(n));
            t.measurement_noise.push(take(m));
        }
        Ok(t)
    }
}

fn trajectory_header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    for (prefix, len) in [("x", n), ("y", m), ("w", n), ("v", m)] {
        h.extend((1..=len).map(|i| format!("{prefix}_{i}")));
    }
    h
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv {
        path: path.into(),
        line,
        message: e.to_string(),
    }
}

/// Simulates `horizon + 1` samples using the plant stream of `(seed, trace_id)`.
pub fn simulate(sys: &LinearSystem, horizon: usize, seed: u64, trace_id: u64) -> Result<Trajectory> {
    simulate_inner(sys, horizon, seed, trace_id, None)
}

/// As [`simulate`] but with `x_0` forced to `x0`.
pub fn simulate_from(
    sys: &LinearSystem,
    horizon: usize,
    seed: u64,
    trace_id: u64,
    x0: DVector<f64>,
) -> Result<Trajectory> {
    if x0.len() != sys.n() {
        return Err(Error::invalid(format!("x0 has length {}, expected {}", x0.len(), sys.n())));
    }
    simulate_inner(sys, horizon, seed, trace_id, Some(x0))
}

fn simulate_inner(
    sys: &LinearSystem,
    horizon: usize,
    seed: u64,
    trace_id: u64,
    x0: Option<DVector<f64>>,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut rng = rng::stream(seed, trace_id, Purpose::Plant);
    let (n, m) = (sys.n(), sys.m());
    let mut states = Vec::with_capacity(horizon + 1);
    let mut outputs = Vec::with_capacity(horizon + 1);
    let mut process_noise = Vec::with_capacity(horizon + 1);
    let mut measurement_noise = Vec::with_capacity(horizon + 1);

    let mut x = match x0 {
        Some(x0) => x0,
        None => sample_gaussian(&mut rng, sys.sigma0()),
    };
    process_noise.push(DVector::zeros(n));
    for k in 0..=horizon {
        if k > 0 {
            let w = sample_gaussian(&mut rng, sys.q());
            x = sys.a() * &x + &w;
            process_noise.push(w);
        }
        let v = if sys.r().iter().all(|&e| e == 0.0) {
            DVector::zeros(m)
        } else {
            sample_gaussian(&mut rng, sys.r())
        };
        outputs.push(sys.c() * &x + &v);
        measurement_noise.push(v);
        states.push(x.clone());
    }
    Ok(Trajectory {
        states,
        outputs,
        process_noise,
        measurement_noise,
        seed,
        trace_id,
    })
}

/// Prior covariance of `x_k` with no measurements: `P_0 = Σ0`,
/// `P_k = A P_{k-1} A' + Q`. Returns `horizon + 1` matrices.
pub fn open_loop_covariance(sys: &LinearSystem, horizon: usize) -> Vec<CovarianceMatrix> {
    let mut out = Vec::with_capacity(horizon + 1);
    let mut p = sys.sigma0().clone();
    out.push(p.clone());
    for _ in 0..horizon {
        let next = sys.a() * p.matrix() * sys.a().transpose() + sys.q().matrix();
        p = CovarianceMatrix::from_symmetrized(&next);
        out.push(p.clone());
    }
    out
}
