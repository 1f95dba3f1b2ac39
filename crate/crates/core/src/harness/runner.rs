//! Monte Carlo execution of a scenario and its CSV/JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use crate::baselines::{baseline_covariances, WithholdPolicy};
use crate::channel::{sample_trace, OutcomeTrace};
use crate::code::{CodeMode, Encoder, LocalKalmanFilter};
use crate::error::{Error, Result};
use crate::estimators::{EveFilter, UserBelief};
use crate::gaussian::CovarianceMatrix;
use crate::harness::config::{CodeChoice, Scenario};
use crate::harness::exec::{map_traces, Execution};
use crate::harness::stats::{least_squares_slope, mean_and_standard_error, median, quantile};
use crate::plant::{csv_io, open_loop_covariance, simulate, LinearSystem, Trajectory};

/// Everything the sensor, user and eavesdropper produced on one coded trace.
#[derive(Debug, Clone)]
pub struct CodedTrace {
    pub packets: Vec<DVector<f64>>,
    /// `t_k` used by the encoder at each step.
    pub ref_times: Vec<i64>,
    /// Sensor local estimates `x̄_k` (output mode).
    pub local_estimates: Option<Vec<DVector<f64>>>,
    pub user_est: Vec<DVector<f64>>,
    pub user_cov: Vec<CovarianceMatrix>,
    /// Eavesdropper estimate of `x_k` (state mode) or of `x̄_k` (output mode).
    pub eve_est: Vec<DVector<f64>>,
    /// `P_k` (state mode) or `H_k` (output mode).
    pub eve_cov: Vec<CovarianceMatrix>,
}

/// Runs encoder, user and eavesdropper over a realized trajectory and channel.
pub fn simulate_coded(
    sys: &LinearSystem,
    mode: CodeMode,
    local_filter: Option<&LocalKalmanFilter>,
    traj: &Trajectory,
    trace: &OutcomeTrace,
) -> Result<CodedTrace> {
    let len = trace.len();
    if traj.states.len() < len {
        return Err(Error::invalid(format!(
            "trajectory has {} steps, channel trace has {len}",
            traj.states.len()
        )));
    }
    let (mut encoder, mut user, mut eve) = match (mode, local_filter) {
        (CodeMode::State, _) => (
            Encoder::state(sys),
            UserBelief::new(sys, mode, None)?,
            EveFilter::state(sys),
        ),
        (CodeMode::Output, Some(kf)) => (
            Encoder::output_with(sys, kf.clone()),
            UserBelief::new(sys, mode, Some(kf.filtered_cov()))?,
            EveFilter::output(sys, &kf.increment_cov()),
        ),
        (CodeMode::Output, None) => return Err(Error::invalid("output mode needs the sensor's local filter")),
    };
    let mut out = CodedTrace {
        packets: Vec::with_capacity(len),
        ref_times: Vec::with_capacity(len),
        local_estimates: (mode == CodeMode::Output).then(|| Vec::with_capacity(len)),
        user_est: Vec::with_capacity(len),
        user_cov: Vec::with_capacity(len),
        eve_est: Vec::with_capacity(len),
        eve_cov: Vec::with_capacity(len),
    };
    for k in 0..len {
        out.ref_times.push(encoder.ref_time());
        let measurement = match mode {
            CodeMode::State => &traj.states[k],
            CodeMode::Output => &traj.outputs[k],
        };
        let z = encoder.encode(k, measurement)?;
        if let (Some(est), Some(kf)) = (out.local_estimates.as_mut(), encoder.local_filter()) {
            est.push(kf.estimate().clone());
        }

        user.step(sys, trace.user(k).then_some(&z));
        if k > 0 {
            eve.predict(trace.user(k - 1))?;
        }
        eve.update(trace.eve(k), trace.eve(k).then_some(&z))?;
        if trace.user(k) {
            encoder.ack(k)?;
        }

        out.user_est.push(user.est.clone());
        out.user_cov.push(user.cov.clone());
        out.eve_est.push(eve.estimate());
        out.eve_cov.push(eve.covariance());
        out.packets.push(z);
    }
    Ok(out)
}

/// One row of the per-step log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub k: usize,
    pub gamma_u: bool,
    pub gamma_e: bool,
    pub critical: bool,
    pub tr_p_user: f64,
    pub tr_p_eve: f64,
    pub tr_p_openloop: f64,
    pub tr_h: Option<f64>,
    pub eve_diag: Vec<f64>,
    pub user_diag: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub trace_id: u64,
    pub k0: Option<usize>,
    pub rows: Vec<StepRow>,
    /// `‖x_k − x̂_k‖²` of the eavesdropper's estimate, for coded runs.
    pub eve_sq_err: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct CodeRun {
    pub code: CodeChoice,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub openloop: Vec<CovarianceMatrix>,
    pub runs: Vec<CodeRun>,
}

/// Simulates one trace of `scn` under `code`.
pub fn simulate_trace(scn: &Scenario, code: CodeChoice, trace_id: u64, openloop: &[CovarianceMatrix]) -> Result<RunRecord> {
    let trace = sample_trace(&scn.channel, scn.horizon, scn.seed, trace_id)?;
    let len = trace.len();
    let k0 = trace.first_critical_time();
    let mut rows = Vec::with_capacity(len);
    let row = |k: usize, pu: &CovarianceMatrix, pe: &CovarianceMatrix, h: Option<&CovarianceMatrix>| StepRow {
        k,
        gamma_u: trace.user(k),
        gamma_e: trace.eve(k),
        critical: trace.is_critical(k),
        tr_p_user: pu.trace(),
        tr_p_eve: pe.trace(),
        tr_p_openloop: openloop[k].trace(),
        tr_h: h.map(|h| h.trace()),
        eve_diag: pe.diagonal(),
        user_diag: pu.diagonal(),
    };

    let eve_sq_err = match code {
        CodeChoice::StateSecrecy => {
            let traj = simulate(&scn.system, scn.horizon, scn.seed, trace_id)?;
            let coded = simulate_coded(&scn.system, scn.mode, scn.local_filter.as_ref(), &traj, &trace)?;
            let offset = scn.filtered_cov();
            let mut errs = Vec::with_capacity(len);
            for k in 0..len {
                errs.push((&traj.states[k] - &coded.eve_est[k]).norm_squared());
                match &offset {
                    // The state error splits into x_k − x̄_k, which is
                    // independent of everything the eavesdropper sees, plus
                    // x̄_k − η_k, so P_k = H_k + (P̄ − KCP̄).
                    Some(f) => {
                        let p = CovarianceMatrix::from_symmetrized(&(coded.eve_cov[k].matrix() + f.matrix()));
                        rows.push(row(k, &coded.user_cov[k], &p, Some(&coded.eve_cov[k])));
                    }
                    None => rows.push(row(k, &coded.user_cov[k], &coded.eve_cov[k], None)),
                }
            }
            Some(errs)
        }
        CodeChoice::Withholding(policy) => {
            let run = baseline_covariances(policy, &scn.system, &trace, scn.seed, trace_id)?;
            for k in 0..len {
                rows.push(row(k, &run.user_cov[k], &run.eve_cov[k], None));
            }
            None
        }
        CodeChoice::Uncoded => {
            let run = baseline_covariances(WithholdPolicy::Random { p: 0.0 }, &scn.system, &trace, scn.seed, trace_id)?;
            for k in 0..len {
                rows.push(row(k, &run.user_cov[k], &run.eve_cov[k], None));
            }
            None
        }
    };
    Ok(RunRecord {
        trace_id,
        k0,
        rows,
        eve_sq_err,
    })
}

/// Runs every configured code over `scn.runs` traces. Trace `i` sees the same
/// channel realization under every code.
pub fn run_scenario(scn: &Scenario, exec: Execution) -> Result<ScenarioResult> {
    let openloop = open_loop_covariance(&scn.system, scn.horizon);
    let mut runs = Vec::with_capacity(scn.codes.len());
    for &code in &scn.codes {
        let records = map_traces(scn.runs as u64, exec, |id| simulate_trace(scn, code, id, &openloop))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        runs.push(CodeRun { code, records });
    }
    Ok(ScenarioResult { openloop, runs })
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn bit(b: bool) -> String {
    u8::from(b).to_string()
}

/// Header of `runs.csv` for an `n`-dimensional state.
pub fn runs_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "trace_id",
        "k",
        "gamma_u",
        "gamma_e",
        "critical_flag",
        "tr_P_user",
        "tr_P_eve",
        "tr_P_openloop",
        "tr_H",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=n).map(|i| format!("P_eve_{i}{i}")));
    h.push("log1p_tr_P_eve".into());
    h
}

fn write_runs_csv(path: &Path, n: usize, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(runs_header(n)).map_err(|e| csv_io(path, e))?;
    for rec in records {
        for r in &rec.rows {
            let mut line = vec![
                rec.trace_id.to_string(),
                r.k.to_string(),
                bit(r.gamma_u),
                bit(r.gamma_e),
                bit(r.critical),
                fmt(r.tr_p_user),
                fmt(r.tr_p_eve),
                fmt(r.tr_p_openloop),
                r.tr_h.map(fmt).unwrap_or_default(),
            ];
            line.extend(r.eve_diag.iter().copied().map(fmt));
            line.push(fmt(r.tr_p_eve.ln_1p()));
            w.write_record(&line).map_err(|e| csv_io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_summary_csv(path: &Path, n: usize, openloop: &[CovarianceMatrix], records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let output_mode = records.first().is_some_and(|r| r.rows[0].tr_h.is_some());
    let coded = records.first().is_some_and(|r| r.eve_sq_err.is_some());
    let mut header: Vec<String> = [
        "k",
        "frac_critical_by_k",
        "median_tr_P_eve",
        "q10_tr_P_eve",
        "q90_tr_P_eve",
        "log1p_median_tr_P_eve",
        "log1p_q10_tr_P_eve",
        "log1p_q90_tr_P_eve",
        "median_tr_P_user",
        "tr_P_openloop",
        "log1p_tr_P_openloop",
        "mean_sq_err_eve",
        "se_sq_err_eve",
        "median_tr_H",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=n).map(|i| format!("median_P_eve_{i}{i}")));
    header.extend((1..=n).map(|i| format!("median_P_user_{i}{i}")));
    header.extend((1..=n).map(|i| format!("P_openloop_{i}{i}")));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;

    let runs = records.len() as f64;
    for (k, op) in openloop.iter().enumerate() {
        let col = |f: &dyn Fn(&StepRow) -> f64| -> Vec<f64> { records.iter().map(|r| f(&r.rows[k])).collect() };
        let eve = col(&|r| r.tr_p_eve);
        let critical = records.iter().filter(|r| r.k0.is_some_and(|k0| k0 <= k)).count() as f64 / runs;
        let (med, q10, q90) = (median(&eve), quantile(&eve, 0.1), quantile(&eve, 0.9));
        let (mse, se) = if coded {
            let errs: Vec<f64> = records.iter().map(|r| r.eve_sq_err.as_ref().map_or(f64::NAN, |e| e[k])).collect();
            let (m, s) = mean_and_standard_error(&errs);
            (fmt(m), fmt(s))
        } else {
            (String::new(), String::new())
        };
        let tr_h = if output_mode {
            fmt(median(&col(&|r| r.tr_h.unwrap_or(f64::NAN))))
        } else {
            String::new()
        };
        let mut line = vec![
            k.to_string(),
            fmt(critical),
            fmt(med),
            fmt(q10),
            fmt(q90),
            fmt(med.ln_1p()),
            fmt(q10.ln_1p()),
            fmt(q90.ln_1p()),
            fmt(median(&col(&|r| r.tr_p_user))),
            fmt(op.trace()),
            fmt(op.trace().ln_1p()),
            mse,
            se,
            tr_h,
        ];
        for i in 0..n {
            line.push(fmt(median(&col(&|r| r.eve_diag[i]))));
        }
        for i in 0..n {
            line.push(fmt(median(&col(&|r| r.user_diag[i]))));
        }
        line.extend(op.diagonal().into_iter().map(fmt));
        w.write_record(&line).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Aggregate statistics written to `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub code: String,
    pub mode: CodeMode,
    pub runs: usize,
    pub horizon: usize,
    pub seed: u64,
    pub spectral_radius: f64,
    /// `2 ln ρ(A)`, the growth rate of the open-loop covariance.
    pub open_loop_log_slope: f64,
    pub runs_with_critical_event: usize,
    /// Median over runs with a critical event of the least-squares slope of
    /// `ln Tr P_eve` over `[k0, K]`; runs with fewer than three points or a
    /// zero covariance in that window are skipped.
    pub median_log_slope_after_k0: Option<f64>,
    pub runs_in_slope: usize,
    pub final_median_tr_p_eve: f64,
    pub final_median_tr_p_user: f64,
    pub final_tr_p_openloop: f64,
}

pub fn summarize(scn: &Scenario, run: &CodeRun, openloop: &[CovarianceMatrix]) -> Summary {
    let records = &run.records;
    let mut slopes = Vec::new();
    for rec in records {
        let Some(k0) = rec.k0 else { continue };
        let window = &rec.rows[k0..];
        if window.len() < 3 || window.iter().any(|r| r.tr_p_eve <= 0.0) {
            continue;
        }
        let xs: Vec<f64> = window.iter().map(|r| r.k as f64).collect();
        let ys: Vec<f64> = window.iter().map(|r| r.tr_p_eve.ln()).collect();
        slopes.push(least_squares_slope(&xs, &ys));
    }
    let last = |f: &dyn Fn(&StepRow) -> f64| -> f64 { median(&records.iter().map(|r| f(r.rows.last().unwrap())).collect::<Vec<_>>()) };
    let rho = scn.system.spectral_radius();
    Summary {
        scenario: scn.name.clone(),
        code: run.code.label().to_string(),
        mode: scn.mode,
        runs: records.len(),
        horizon: scn.horizon,
        seed: scn.seed,
        spectral_radius: rho,
        open_loop_log_slope: 2.0 * rho.ln(),
        runs_with_critical_event: records.iter().filter(|r| r.k0.is_some()).count(),
        median_log_slope_after_k0: (!slopes.is_empty()).then(|| median(&slopes)),
        runs_in_slope: slopes.len(),
        final_median_tr_p_eve: last(&|r| r.tr_p_eve),
        final_median_tr_p_user: last(&|r| r.tr_p_user),
        final_tr_p_openloop: openloop.last().map_or(f64::NAN, |p| p.trace()),
    }
}

/// Writes `<out>/<code>/{runs.csv, summary.csv, summary.json}` for every code
/// and returns the files written.
pub fn write_outputs(scn: &Scenario, result: &ScenarioResult, out: &Path) -> Result<Vec<PathBuf>> {
    let n = scn.system.n();
    let mut written = Vec::new();
    for run in &result.runs {
        let dir = out.join(run.code.label());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let runs_path = dir.join("runs.csv");
        write_runs_csv(&runs_path, n, &run.records)?;
        let summary_path = dir.join("summary.csv");
        write_summary_csv(&summary_path, n, &result.openloop, &run.records)?;
        let json_path = dir.join("summary.json");
        let summary = summarize(scn, run, &result.openloop);
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::numeric(e.to_string()))?;
        fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))?;
        written.extend([runs_path, summary_path, json_path]);
    }
    Ok(written)
}

/// Writes each trace's plant trajectory and channel outcomes to
/// `<out>/traces/trace_<id>_{trajectory,channel}.csv`.
pub fn export_traces(scn: &Scenario, out: &Path, exec: Execution) -> Result<Vec<PathBuf>> {
    let dir = out.join("traces");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let width = scn.runs.saturating_sub(1).to_string().len();
    let files = map_traces(scn.runs as u64, exec, |id| -> Result<Vec<PathBuf>> {
        let traj = simulate(&scn.system, scn.horizon, scn.seed, id)?;
        let trace = sample_trace(&scn.channel, scn.horizon, scn.seed, id)?;
        let traj_path = dir.join(format!("trace_{id:0width$}_trajectory.csv"));
        let chan_path = dir.join(format!("trace_{id:0width$}_channel.csv"));
        traj.write_csv(&traj_path)?;
        trace.write_csv(&chan_path)?;
        Ok(vec![traj_path, chan_path])
    });
    Ok(files.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}
