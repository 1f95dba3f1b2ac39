//! Numerical verification suites.
//!
//! Each suite runs a set of checks, each comparing one measured quantity with
//! a bound. Suites are deterministic given the seed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::channel::{sample_trace, ChannelLaw, OutcomeTrace};
use crate::code::{CodeMode, LocalKalmanFilter};
use crate::error::{Error, Result};
use crate::estimators::batch_oracle;
use crate::gaussian::{
    dominant_left_eigenvector, matrix_power, max_abs, min_eigenvalue, rayleigh_quotient, solve_dare, spectral_radius,
    CovarianceMatrix,
};
use crate::harness::config::{scenario1, scenario2, CodeChoice, Scenario};
use crate::harness::exec::{map_traces, Execution};
use crate::harness::runner::{run_scenario, simulate_coded, write_outputs, CodedTrace, ScenarioResult};
use crate::harness::stats::{least_squares_slope, mean_and_standard_error};
use crate::plant::{open_loop_covariance, simulate, LinearSystem};
use crate::rng::{self, Purpose};

/// One measured-versus-bound comparison.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
    /// The claim is conditional and its condition never occurred.
    pub skipped: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            passed: measured <= bound,
            skipped: false,
        }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            passed: measured >= bound,
            skipped: false,
        }
    }

    pub fn skipped(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            measured: f64::NAN,
            bound: f64::NAN,
            passed: true,
            skipped: true,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.skipped, self.passed) {
            (true, _) => "SKIP",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        write!(f, "{status} {} measured={:e} bound={:e}", self.name, self.measured, self.bound)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Report {
    fn new(suite: Suite, seed: u64, checks: Vec<Check>) -> Self {
        Self {
            suite: suite.to_string(),
            seed,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    WorstCase,
    Theorem1,
    Theorem2,
    Monotonicity,
    Remark1,
    Corollary1,
    Figures,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Oracle,
        Suite::WorstCase,
        Suite::Theorem1,
        Suite::Theorem2,
        Suite::Monotonicity,
        Suite::Remark1,
        Suite::Corollary1,
        Suite::Figures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::WorstCase => "worst_case",
            Suite::Theorem1 => "theorem1",
            Suite::Theorem2 => "theorem2",
            Suite::Monotonicity => "monotonicity",
            Suite::Remark1 => "remark1",
            Suite::Corollary1 => "corollary1",
            Suite::Figures => "figures",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|suite| suite.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
            Error::invalid(format!("unknown suite `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// Knobs shared by all suites.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Overrides the Monte Carlo run counts of the statistical checks.
    pub runs: Option<usize>,
    /// Directory for the CSV artifacts of the `figures` suite.
    pub out: PathBuf,
    pub exec: Execution,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 2024,
            runs: None,
            out: PathBuf::from("out/verify"),
            exec: Execution::default(),
        }
    }
}

impl VerifyOptions {
    fn runs_or(&self, default: usize) -> usize {
        self.runs.unwrap_or(default)
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Report> {
    let checks = match suite {
        Suite::Oracle => oracle_equivalence(opts.seed, 100)?,
        Suite::WorstCase => {
            let mut c = worst_case_closed_form(opts.seed)?;
            c.extend(growth_rate(opts.seed)?);
            c
        }
        Suite::Theorem1 => {
            let mut c = divergence_lower_bound(opts.seed, opts.runs_or(500))?;
            c.extend(user_optimality_state(opts.seed, opts.runs_or(100))?);
            c
        }
        Suite::Theorem2 => {
            let mut c = output_mode_bounds(opts.seed, opts.runs_or(500), opts.runs_or(2000))?;
            c.extend(user_optimality_output(opts.seed, opts.runs_or(100))?);
            c
        }
        Suite::Monotonicity => comparison_lemma(opts.seed, opts.runs_or(200))?,
        Suite::Remark1 => packet_noise_identity(opts.seed, opts.runs_or(100))?,
        Suite::Corollary1 => openloop_ratio_boundedness(opts.seed)?,
        Suite::Figures => {
            let runs = opts.runs_or(1000);
            let first = shipped_scenario_runs(opts.seed, runs, Execution::Sequential, &opts.out.join("first"))?;
            shipped_scenario_runs(opts.seed, runs, opts.exec, &opts.out.join("second"))?;
            let mut c = scenario1_trends(&first.0)?;
            c.extend(scenario2_trends(&first.1, opts.seed)?);
            c.push(reproducibility(&opts.out.join("first"), &opts.out.join("second"))?);
            c
        }
    };
    Ok(Report::new(suite, opts.seed, checks))
}

// ---------------------------------------------------------------------------
// Shared helpers

fn two_state_plant() -> LinearSystem {
    scenario1().system
}

fn scalar_unstable() -> LinearSystem {
    LinearSystem::state_measurement(DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0))
        .expect("valid scalar plant")
}

fn relative_gap(actual: &DMatrix<f64>, expected: &DMatrix<f64>) -> f64 {
    max_abs(&(actual - expected)) / max_abs(expected).max(f64::MIN_POSITIVE)
}

/// Which outcomes the user sees after the critical event on a worst-case trace.
#[derive(Debug, Clone, Copy)]
pub enum UserPattern {
    AllReceived,
    AllLost,
    Random,
}

/// A trace with a critical event at `k0` (user receives, eavesdropper
/// misses) after which the eavesdropper intercepts everything. Steps before
/// `k0` are drawn at random without any critical event.
pub fn worst_case_trace(k0: usize, horizon: usize, pattern: UserPattern, seed: u64, id: u64) -> OutcomeTrace {
    let mut rng = rng::stream(seed, id, Purpose::Instance);
    let mut gu = Vec::with_capacity(horizon + 1);
    let mut ge = Vec::with_capacity(horizon + 1);
    for _ in 0..k0 {
        let u: bool = rng.random();
        gu.push(u);
        // A critical event before k0 would move the first one earlier.
        ge.push(u || rng.random());
    }
    gu.push(true);
    ge.push(false);
    for _ in k0 + 1..=horizon {
        gu.push(match pattern {
            UserPattern::AllReceived => true,
            UserPattern::AllLost => false,
            UserPattern::Random => rng.random(),
        });
        ge.push(true);
    }
    OutcomeTrace::new(gu, ge).expect("equal lengths")
}

fn coded_on(sys: &LinearSystem, mode: CodeMode, kf: Option<&LocalKalmanFilter>, trace: &OutcomeTrace, seed: u64, id: u64) -> Result<CodedTrace> {
    let traj = simulate(sys, trace.horizon(), seed, id)?;
    simulate_coded(sys, mode, kf, &traj, trace)
}

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

fn random_pd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let b = random_matrix(rng, n, n);
    &b * b.transpose() + DMatrix::identity(n, n) * 0.1
}

fn random_unstable<R: Rng>(rng: &mut R, n: usize, rho: f64) -> DMatrix<f64> {
    loop {
        let a = random_matrix(rng, n, n);
        let r = spectral_radius(&a);
        if r > 1e-2 {
            return a * (rho / r);
        }
    }
}

fn random_channel<R: Rng>(rng: &mut R) -> ChannelLaw {
    let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|v| v / s).collect();
    let p00 = 1.0 - p[0] - p[1] - p[2];
    ChannelLaw::iid(p[0], p[1], p[2], p00).expect("normalized probabilities")
}

// ---------------------------------------------------------------------------
// Checks

/// Recursive eavesdropper filter against one-shot batch conditioning on
/// random unstable systems (`ρ(A) = 1.3`, `n ≤ 3`, `k ≤ 12`).
pub fn oracle_equivalence(seed: u64, instances: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let run = |output: bool| -> Result<(f64, f64)> {
        let per = map_traces(instances, Execution::default(), |id| -> Result<(f64, f64)> {
            let mut rng = rng::stream(seed ^ u64::from(output), id, Purpose::Instance);
            let n = rng.random_range(1..=3usize);
            let a = random_unstable(&mut rng, n, 1.3);
            let q = random_pd(&mut rng, n);
            let law = random_channel(&mut rng);
            let horizon = 12;
            let (sys, mode, kf) = if output {
                let m = rng.random_range(1..=2usize);
                let c = random_matrix(&mut rng, m, n);
                let r = random_pd(&mut rng, m);
                let provisional = LinearSystem::new(a, c, q, r, DMatrix::identity(n, n))?;
                let pbar = solve_dare(provisional.a(), provisional.c(), provisional.q(), provisional.r())?;
                let sys = provisional.with_sigma0(pbar.matrix().clone())?;
                let kf = LocalKalmanFilter::from_prediction_cov(&sys, pbar)?;
                (sys, CodeMode::Output, Some(kf))
            } else {
                let sigma0 = random_pd(&mut rng, n);
                (LinearSystem::state_measurement(a, q, sigma0)?, CodeMode::State, None)
            };
            let trace = sample_trace(&law, horizon, seed, id)?;
            let coded = coded_on(&sys, mode, kf.as_ref(), &trace, seed, id)?;
            let q_bar = kf.as_ref().map(LocalKalmanFilter::increment_cov);
            let (mut cov_gap, mut mean_gap) = (0.0f64, 0.0f64);
            for k in 0..=horizon {
                let o = batch_oracle(&sys, mode, q_bar.as_ref(), &trace, Some(&coded.packets), k)?;
                cov_gap = cov_gap.max(max_abs(&(coded.eve_cov[k].matrix() - o.cov.matrix())));
                mean_gap = mean_gap.max((&coded.eve_est[k] - &o.mean).amax());
            }
            Ok((cov_gap, mean_gap))
        });
        per.into_iter().try_fold((0.0f64, 0.0f64), |acc, r| {
            let (c, m) = r?;
            Ok((acc.0.max(c), acc.1.max(m)))
        })
    };
    let (state_cov, state_mean) = run(false)?;
    let elapsed = start.elapsed().as_secs_f64();
    let (output_cov, output_mean) = run(true)?;
    Ok(vec![
        Check::at_most("oracle_state_cov_max_abs_gap", state_cov, 1e-8),
        Check::at_most("oracle_state_runtime_seconds", elapsed, 30.0),
        Check::at_most("oracle_state_mean_max_abs_gap", state_mean, 1e-8),
        Check::at_most("oracle_output_cov_max_abs_gap", output_cov, 1e-8),
        Check::at_most("oracle_output_mean_max_abs_gap", output_mean, 1e-8),
    ])
}

/// Worst-case traces (critical event at `k0`, every later packet
/// intercepted) follow `P_k = A^{k−k0} P_{k0} A'^{k−k0}`.
pub fn worst_case_closed_form(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (label, sys) in [("scalar", scalar_unstable()), ("two_state", two_state_plant())] {
        let mut worst = 0.0f64;
        for (i, &k0) in [0usize, 3].iter().enumerate() {
            for (j, pattern) in [UserPattern::AllReceived, UserPattern::AllLost, UserPattern::Random].into_iter().enumerate() {
                let id = (i * 3 + j) as u64;
                let trace = worst_case_trace(k0, 30, pattern, seed, id);
                let coded = coded_on(&sys, CodeMode::State, None, &trace, seed, id)?;
                worst = worst.max(max_closed_form_gap(sys.a(), &coded.eve_cov, k0));
            }
        }
        checks.push(Check::at_most(format!("worst_case_{label}_max_relative_gap"), worst, 1e-9));
    }
    Ok(checks)
}

fn max_closed_form_gap(a: &DMatrix<f64>, covs: &[CovarianceMatrix], k0: usize) -> f64 {
    let base = covs[k0].matrix();
    (k0..covs.len())
        .map(|k| {
            let ak = matrix_power(a, k - k0);
            relative_gap(covs[k].matrix(), &(&ak * base * ak.transpose()))
        })
        .fold(0.0, f64::max)
}

fn log_trace_slope(traces: &[f64], from: usize, to: usize) -> f64 {
    let xs: Vec<f64> = (from..=to).map(|k| k as f64).collect();
    let ys: Vec<f64> = (from..=to).map(|k| traces[k].ln()).collect();
    least_squares_slope(&xs, &ys)
}

/// On worst-case traces `ln Tr P_k` grows with slope `2 ln ρ(A)`.
pub fn growth_rate(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (label, sys) in [("scalar", scalar_unstable()), ("two_state", two_state_plant())] {
        let target = 2.0 * sys.spectral_radius().ln();
        let mut worst = 0.0f64;
        for (i, &k0) in [0usize, 3].iter().enumerate() {
            let trace = worst_case_trace(k0, k0 + 30, UserPattern::Random, seed, 100 + i as u64);
            let coded = coded_on(&sys, CodeMode::State, None, &trace, seed, i as u64)?;
            let tr: Vec<f64> = coded.eve_cov.iter().map(|p| p.trace()).collect();
            let slope = log_trace_slope(&tr, k0 + 5, k0 + 30);
            worst = worst.max((slope - target).abs() / target);
        }
        checks.push(Check::at_most(format!("growth_rate_{label}_relative_slope_error"), worst, 0.01));
    }
    Ok(checks)
}

/// `Tr P_k ≥ c ρ(A)^{2(k−k0)}` with `c = min(λ_min(Q), λ_min(Σ0))` on sampled
/// traces that contain a critical event.
pub fn divergence_lower_bound(seed: u64, traces: usize) -> Result<Vec<Check>> {
    let scn = scenario1();
    let sys = &scn.system;
    let c = sys.q().min_eigenvalue().min(sys.sigma0().min_eigenvalue());
    let rho = sys.spectral_radius();
    let mut found = 0usize;
    let mut worst = f64::INFINITY;
    let mut id = 0u64;
    // Sample until enough traces carry a critical event; guard against
    // channels where that never happens.
    while found < traces && id < 100 * traces as u64 {
        let trace = sample_trace(&scn.channel, scn.horizon, seed, id)?;
        if let Some(k0) = trace.first_critical_time() {
            let coded = coded_on(sys, CodeMode::State, None, &trace, seed, id)?;
            for k in k0..trace.len() {
                let bound = c * rho.powi(2 * (k - k0) as i32);
                worst = worst.min(coded.eve_cov[k].trace() - bound);
            }
            found += 1;
        }
        id += 1;
    }
    let mut checks = vec![if found == 0 {
        Check::skipped("theorem1_min_slack_over_sampled_traces")
    } else {
        Check::at_least("theorem1_min_slack_over_sampled_traces", worst, -1e-9)
    }];
    checks.push(Check::at_least("theorem1_traces_with_critical_event", found as f64, traces as f64));

    // A trace without a critical event makes the claim vacuous.
    let quiet = OutcomeTrace::all_received(scn.horizon + 1);
    checks.push(match quiet.first_critical_time() {
        None => Check::skipped("theorem1_trace_without_critical_event"),
        Some(_) => unreachable!("all-received trace has no critical event"),
    });
    Ok(checks)
}

/// Coupling the trace at `k0` (eavesdropper gets every later packet) can only
/// shrink her covariance: `P_k ⪰ P̃_k`.
pub fn comparison_lemma(seed: u64, pairs: usize) -> Result<Vec<Check>> {
    let scn = scenario1();
    let horizon = 30;
    let per = map_traces(pairs as u64, Execution::default(), |id| -> Result<f64> {
        let mut rng = rng::stream(seed, id, Purpose::Instance);
        let trace = sample_trace(&scn.channel, horizon, seed, id)?;
        let k0 = rng.random_range(0..=horizon);
        let coupled = trace.couple(k0)?;
        let p = coded_on(&scn.system, CodeMode::State, None, &trace, seed, id)?;
        let pt = coded_on(&scn.system, CodeMode::State, None, &coupled, seed, id)?;
        Ok((0..=horizon)
            .map(|k| min_eigenvalue(&(p.eve_cov[k].matrix() - pt.eve_cov[k].matrix())))
            .fold(f64::INFINITY, f64::min))
    });
    let worst = per.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(f64::INFINITY, f64::min);
    Ok(vec![Check::at_least("comparison_min_eigenvalue_of_difference", worst, -1e-9)])
}

/// State mode: the user decodes `x_k` exactly at every reception.
pub fn user_optimality_state(seed: u64, traces: usize) -> Result<Vec<Check>> {
    let scn = scenario1();
    let horizon = 30;
    let per = map_traces(traces as u64, Execution::default(), |id| -> Result<(f64, f64)> {
        let trace = sample_trace(&scn.channel, horizon, seed, id)?;
        let traj = simulate(&scn.system, horizon, seed, id)?;
        let coded = simulate_coded(&scn.system, CodeMode::State, None, &traj, &trace)?;
        let (mut err, mut cov) = (0.0f64, 0.0f64);
        for k in (0..=horizon).filter(|&k| trace.user(k)) {
            err = err.max((&coded.user_est[k] - &traj.states[k]).amax());
            cov = cov.max(coded.user_cov[k].amax());
        }
        Ok((err, cov))
    });
    let (err, cov) = per.into_iter().try_fold((0.0f64, 0.0f64), |acc, r| -> Result<_> {
        let (e, c) = r?;
        Ok((acc.0.max(e), acc.1.max(c)))
    })?;
    Ok(vec![
        Check::at_most("user_state_decode_max_abs_error", err, 1e-12),
        Check::at_most("user_state_reception_cov_max_abs", cov, 0.0),
    ])
}

/// Filtered estimates and covariances, one per step.
type FilterHistory = (Vec<DVector<f64>>, Vec<DMatrix<f64>>);

/// Textbook time-varying Kalman filter over the whole output record.
fn centralized_kalman(sys: &LinearSystem, outputs: &[DVector<f64>]) -> Result<FilterHistory> {
    let (a, c, q, r) = (sys.a(), sys.c(), sys.q().matrix(), sys.r().matrix());
    let n = sys.n();
    let mut x_pred = DVector::zeros(n);
    let mut p_pred = sys.sigma0().matrix().clone();
    let (mut xs, mut ps) = (Vec::new(), Vec::new());
    for y in outputs {
        let s = c * &p_pred * c.transpose() + r;
        let s_inv = s.try_inverse().ok_or_else(|| Error::numeric("singular innovation covariance"))?;
        let gain = &p_pred * c.transpose() * s_inv;
        let x = &x_pred + &gain * (y - c * &x_pred);
        let p = (DMatrix::identity(n, n) - &gain * c) * &p_pred;
        let p = (&p + p.transpose()) * 0.5;
        x_pred = a * &x;
        p_pred = a * &p * a.transpose() + q;
        xs.push(x);
        ps.push(p);
    }
    Ok((xs, ps))
}

/// Output mode: at every reception the user's estimate and covariance match
/// a centralized Kalman filter that sees every output.
pub fn user_optimality_output(seed: u64, traces: usize) -> Result<Vec<Check>> {
    let scn = scenario2();
    let kf = scn.local_filter.as_ref().expect("output scenario has a local filter");
    let per = map_traces(traces as u64, Execution::default(), |id| -> Result<(f64, f64)> {
        let trace = sample_trace(&scn.channel, scn.horizon, seed, id)?;
        let traj = simulate(&scn.system, scn.horizon, seed, id)?;
        let coded = simulate_coded(&scn.system, CodeMode::Output, Some(kf), &traj, &trace)?;
        let (xs, ps) = centralized_kalman(&scn.system, &traj.outputs)?;
        let (mut est, mut cov) = (0.0f64, 0.0f64);
        for k in (0..trace.len()).filter(|&k| trace.user(k)) {
            est = est.max((&coded.user_est[k] - &xs[k]).amax());
            cov = cov.max(max_abs(&(coded.user_cov[k].matrix() - &ps[k])));
        }
        Ok((est, cov))
    });
    let (est, cov) = per.into_iter().try_fold((0.0f64, 0.0f64), |acc, r| -> Result<_> {
        let (e, c) = r?;
        Ok((acc.0.max(e), acc.1.max(c)))
    })?;
    Ok(vec![
        Check::at_most("user_output_estimate_max_abs_gap", est, 1e-8),
        Check::at_most("user_output_cov_max_abs_gap", cov, 1e-8),
    ])
}

/// Every packet is the noise accumulated since the reference:
/// `z_k = Σ_{j=t_k+1}^{k} A^{k−j} w_j`, with `x_0` standing in for `w_0`.
pub fn packet_noise_identity(seed: u64, traces: usize) -> Result<Vec<Check>> {
    let scn = scenario1();
    let horizon = 30;
    let a = scn.system.a();
    let per = map_traces(traces as u64, Execution::default(), |id| -> Result<f64> {
        let trace = sample_trace(&scn.channel, horizon, seed, id)?;
        let traj = simulate(&scn.system, horizon, seed, id)?;
        let coded = simulate_coded(&scn.system, CodeMode::State, None, &traj, &trace)?;
        let mut worst = 0.0f64;
        for k in 0..=horizon {
            let from = (coded.ref_times[k] + 1) as usize;
            let mut sum = DVector::zeros(scn.system.n());
            for j in from..=k {
                let w = if j == 0 { &traj.states[0] } else { &traj.process_noise[j] };
                sum += matrix_power(a, k - j) * w;
            }
            worst = worst.max((&coded.packets[k] - sum).amax());
        }
        Ok(worst)
    });
    let worst = per.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    Ok(vec![Check::at_most("remark1_max_abs_residual", worst, 1e-12)])
}

/// Output-measurement secrecy: worst-case closed form for `H_k`, the
/// eigenvector growth bound, and the Monte Carlo lower bound on the state error.
pub fn output_mode_bounds(seed: u64, traces: usize, mc_runs: usize) -> Result<Vec<Check>> {
    let scn = scenario2();
    let sys = &scn.system;
    let kf = scn.local_filter.as_ref().expect("output scenario has a local filter");
    let q_bar = kf.increment_cov();
    let filtered = kf.filtered_cov();
    let mut checks = Vec::new();

    // (a) worst-case closed form.
    let mut worst = 0.0f64;
    for (i, &k0) in [0usize, 3].iter().enumerate() {
        for (j, pattern) in [UserPattern::AllReceived, UserPattern::AllLost, UserPattern::Random].into_iter().enumerate() {
            let id = (i * 3 + j) as u64;
            let trace = worst_case_trace(k0, 30, pattern, seed, id);
            let coded = coded_on(sys, CodeMode::Output, Some(kf), &trace, seed, id)?;
            worst = worst.max(max_closed_form_gap(sys.a(), &coded.eve_cov, k0));
        }
    }
    checks.push(Check::at_most("output_worst_case_max_relative_gap", worst, 1e-9));

    // (b) Tr H_k ≥ (v'Q̄v / v'v) ρ^{2(k−k0)}.
    let (_, v) = dominant_left_eigenvector(sys.a());
    let c = rayleigh_quotient(&v, &q_bar);
    let rho = sys.spectral_radius();
    let mut slack = f64::INFINITY;
    let mut found = 0usize;
    let mut id = 0u64;
    while found < traces && id < 100 * traces as u64 {
        let trace = sample_trace(&scn.channel, scn.horizon, seed, id)?;
        if let Some(k0) = trace.first_critical_time() {
            let coded = coded_on(sys, CodeMode::Output, Some(kf), &trace, seed, id)?;
            for k in k0..trace.len() {
                slack = slack.min(coded.eve_cov[k].trace() - c * rho.powi(2 * (k - k0) as i32));
            }
            found += 1;
        }
        id += 1;
    }
    checks.push(if found == 0 {
        Check::skipped("output_growth_bound_min_slack")
    } else {
        Check::at_least("output_growth_bound_min_slack", slack, -1e-9)
    });

    // (c) mean ‖x_k − η_k‖² ≥ ½ Tr H_k − Tr(P̄ − KCP̄), at 3 standard errors.
    let tr_f = filtered.trace();
    let per = map_traces(mc_runs as u64, Execution::default(), |id| -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = sample_trace(&scn.channel, scn.horizon, seed, id)?;
        let traj = simulate(sys, scn.horizon, seed, id)?;
        let coded = simulate_coded(sys, CodeMode::Output, Some(kf), &traj, &trace)?;
        let mut lower = Vec::with_capacity(trace.len());
        let mut exact = Vec::with_capacity(trace.len());
        for k in 0..trace.len() {
            let err = (&traj.states[k] - &coded.eve_est[k]).norm_squared();
            let tr_h = coded.eve_cov[k].trace();
            lower.push(err - (0.5 * tr_h - tr_f));
            exact.push(err - (tr_h + tr_f));
        }
        Ok((lower, exact))
    });
    let per = per.into_iter().collect::<Result<Vec<_>>>()?;
    let mut worst_lower = f64::INFINITY;
    let mut worst_exact = 0.0f64;
    for k in 0..=scn.horizon {
        let lower: Vec<f64> = per.iter().map(|(l, _)| l[k]).collect();
        let exact: Vec<f64> = per.iter().map(|(_, e)| e[k]).collect();
        let (m, se) = mean_and_standard_error(&lower);
        worst_lower = worst_lower.min(m / se);
        let (m, se) = mean_and_standard_error(&exact);
        worst_exact = worst_exact.max(m.abs() / se);
    }
    checks.push(Check::at_least("output_state_error_lower_bound_min_z_score", worst_lower, -3.0));
    // The split x_k − η_k = (x_k − x̄_k) + (x̄_k − η_k) into independent parts
    // makes Tr P_k = Tr H_k + Tr(P̄ − KCP̄) exactly.
    checks.push(Check::at_most("output_state_error_exact_identity_max_abs_z_score", worst_exact, 4.0));
    Ok(checks)
}

/// `Tr P^op_k / (Tr P_k + 1)` stays bounded on worst-case traces: its maximum
/// over `[k0, 60]` exceeds the maximum over `[k0, 40]` by at most 5%.
pub fn openloop_ratio_boundedness(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (label, sys) in [("scalar", scalar_unstable()), ("two_state", two_state_plant())] {
        let op = open_loop_covariance(&sys, 60);
        let mut worst = 0.0f64;
        for (i, &k0) in [0usize, 3, 10].iter().enumerate() {
            let trace = worst_case_trace(k0, 60, UserPattern::Random, seed, 200 + i as u64);
            let coded = coded_on(&sys, CodeMode::State, None, &trace, seed, i as u64)?;
            let ratio: Vec<f64> = (0..=60).map(|k| op[k].trace() / (coded.eve_cov[k].trace() + 1.0)).collect();
            let upto40 = ratio[k0..=40].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let upto60 = ratio[k0..=60].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(upto60 / upto40);
        }
        checks.push(Check::at_most(format!("corollary1_{label}_max_ratio_growth_after_40"), worst, 1.05));
    }
    Ok(checks)
}

fn with_overrides(mut scn: Scenario, seed: u64, runs: usize) -> Scenario {
    scn.seed = seed;
    scn.runs = runs;
    scn
}

/// Runs both shipped scenarios and writes their artifacts under `out`.
pub fn shipped_scenario_runs(seed: u64, runs: usize, exec: Execution, out: &Path) -> Result<(ScenarioResult, ScenarioResult)> {
    let s1 = with_overrides(scenario1(), seed, runs);
    let s2 = with_overrides(scenario2(), seed, runs);
    let r1 = run_scenario(&s1, exec)?;
    let r2 = run_scenario(&s2, exec)?;
    write_outputs(&s1, &r1, &out.join(&s1.name))?;
    write_outputs(&s2, &r2, &out.join(&s2.name))?;
    Ok((r1, r2))
}

/// Direct-measurement comparison: the code drives the eavesdropper's error up
/// once a critical event occurs, while the withholding baselines let it reset.
pub fn scenario1_trends(result: &ScenarioResult) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for run in &result.runs {
        let last = |r: &crate::harness::runner::RunRecord| r.rows.last().expect("non-empty run").tr_p_eve;
        match run.code {
            CodeChoice::StateSecrecy => {
                let early: Vec<_> = run.records.iter().filter(|r| r.k0.is_some_and(|k0| k0 <= 10)).collect();
                let large = early.iter().filter(|r| last(r) >= 1e3).count();
                checks.push(if early.is_empty() {
                    Check::skipped("scenario1_code_fraction_large_eve_error")
                } else {
                    Check::at_least("scenario1_code_fraction_large_eve_error", large as f64 / early.len() as f64, 0.99)
                });
            }
            CodeChoice::Withholding(_) | CodeChoice::Uncoded => {
                let small = run.records.iter().filter(|r| last(r) < 10.0).count();
                checks.push(Check::at_least(
                    format!("scenario1_{}_fraction_small_eve_error", run.code.label()),
                    small as f64 / run.records.len() as f64,
                    0.5,
                ));
            }
        }
    }
    Ok(checks)
}

/// Output-measurement picture: the stable coordinate of the open-loop
/// covariance converges while the eavesdropper's unstable coordinate diverges
/// at rate `2 ln ρ(A)`.
pub fn scenario2_trends(result: &ScenarioResult, seed: u64) -> Result<Vec<Check>> {
    let scn = scenario2();
    let a = scn.system.a();
    let q = scn.system.q();
    // Scalarized recursion of the stable coordinate, iterated to its fixed point.
    let mut p = 0.0f64;
    for _ in 0..10_000 {
        let next = a[(1, 1)] * a[(1, 1)] * p + q[(1, 1)];
        if (next - p).abs() < 1e-15 {
            break;
        }
        p = next;
    }
    let op_last = result.openloop.last().expect("non-empty horizon")[(1, 1)];
    let mut checks = vec![Check::at_most("scenario2_openloop_stable_entry_gap_to_fixed_point", (op_last - p).abs(), 1e-6)];

    let kf = scn.local_filter.as_ref().expect("output scenario has a local filter");
    let k0 = 11;
    let trace = worst_case_trace(k0, k0 + 30, UserPattern::Random, seed, 300);
    let coded = coded_on(&scn.system, CodeMode::Output, Some(kf), &trace, seed, 0)?;
    let h11: Vec<f64> = coded.eve_cov.iter().map(|h| h[(0, 0)]).collect();
    let target = 2.0 * scn.system.spectral_radius().ln();
    let slope = log_trace_slope(&h11, k0 + 5, k0 + 30);
    checks.push(Check::at_most("scenario2_eve_unstable_entry_relative_slope_error", (slope - target).abs() / target, 0.01));
    Ok(checks)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Counts files that differ between two artifact trees (missing files count).
pub fn reproducibility(first: &Path, second: &Path) -> Result<Check> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    collect_files(first, &mut a)?;
    collect_files(second, &mut b)?;
    let rel = |root: &Path, files: &[PathBuf]| -> Vec<PathBuf> {
        files.iter().map(|p| p.strip_prefix(root).expect("under root").to_path_buf()).collect()
    };
    let (ra, rb) = (rel(first, &a), rel(second, &b));
    let mut differing = ra.iter().filter(|p| !rb.contains(p)).count() + rb.iter().filter(|p| !ra.contains(p)).count();
    for p in ra.iter().filter(|p| rb.contains(p)) {
        let x = fs::read(first.join(p)).map_err(|e| Error::io(first.join(p), e))?;
        let y = fs::read(second.join(p)).map_err(|e| Error::io(second.join(p), e))?;
        if x != y {
            differing += 1;
        }
    }
    let mut check = Check::at_most("reproducibility_differing_files", differing as f64, 0.0);
    if a.is_empty() {
        check.passed = false;
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("theorem3".parse::<Suite>().is_err());
    }

    #[test]
    fn worst_case_trace_shape() {
        let t = worst_case_trace(4, 20, UserPattern::Random, 1, 0);
        assert_eq!(t.len(), 21);
        assert_eq!(t.first_critical_time(), Some(4));
        assert!(t.gamma_e()[5..].iter().all(|&g| g));
    }

    #[test]
    fn centralized_filter_matches_steady_gain_from_dare_prior() {
        let scn = scenario2();
        let traj = simulate(&scn.system, 20, 5, 0).unwrap();
        let (_, ps) = centralized_kalman(&scn.system, &traj.outputs).unwrap();
        let f = scn.filtered_cov().unwrap();
        for p in ps {
            assert!(max_abs(&(p - f.matrix())) < 1e-9);
        }
    }
}
