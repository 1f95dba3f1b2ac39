//! TOML scenario files.
//!
//! ```toml
//! name = "scenario1"
//! mode = "state"            # or "output"
//! horizon = 60              # last time index K
//! runs = 1000
//! seed = 2024
//! outputs = "out/scenario1"
//!
//! [system]
//! a = [[1.2, 0.1], [0.0, 0.5]]
//! q = [[0.6, 0.2], [0.2, 0.5]]
//! sigma0 = "q"              # "q", "dare" (output mode) or a matrix
//! # c = [[1.0, 1.0]]        # output mode only
//! # r = [[1.0]]
//!
//! [channel]
//! kind = "iid"
//! p11 = 0.54
//! p10 = 0.36
//! p01 = 0.06
//! p00 = 0.04
//!
//! [[code]]
//! kind = "state_secrecy"
//!
//! [[code]]
//! kind = "baseline_random"
//! p = 0.29
//! ```
//!
//! A scripted channel is either `kind = "scripted"` with `path = "trace.csv"`
//! (relative to the config file) or inline `gamma_u = [...]`, `gamma_e = [...]`.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::baselines::WithholdPolicy;
use crate::channel::{ChannelLaw, OutcomeTrace};
use crate::code::{CodeMode, LocalKalmanFilter};
use crate::error::{Error, Result};
use crate::gaussian::{max_abs, solve_dare, CovarianceMatrix};
use crate::plant::LinearSystem;

pub const DEFAULT_HORIZON: usize = 60;
pub const DEFAULT_RUNS: usize = 1000;

/// Raw, unvalidated scenario file contents.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: CodeMode,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    pub system: SystemSpec,
    pub channel: ChannelSpec,
    #[serde(rename = "code")]
    pub codes: Vec<CodeSpec>,
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub c: Option<Vec<Vec<f64>>>,
    pub r: Option<Vec<Vec<f64>>>,
    pub sigma0: Sigma0Spec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Sigma0Spec {
    /// `"q"` or `"dare"`.
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Iid { p11: f64, p10: f64, p01: f64, p00: f64 },
    Scripted {
        path: Option<PathBuf>,
        gamma_u: Option<Vec<u8>>,
        gamma_e: Option<Vec<u8>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodeSpec {
    StateSecrecy,
    BaselineRandom { p: f64 },
    BaselineDeterministic { s: u32 },
    /// Raw state sent every step.
    None,
}

/// What the sensor sends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CodeChoice {
    StateSecrecy,
    Withholding(WithholdPolicy),
    Uncoded,
}

impl CodeChoice {
    pub fn label(&self) -> &'static str {
        match self {
            CodeChoice::StateSecrecy => "state_secrecy",
            CodeChoice::Withholding(WithholdPolicy::Random { .. }) => "baseline_random",
            CodeChoice::Withholding(WithholdPolicy::Deterministic { .. }) => "baseline_deterministic",
            CodeChoice::Uncoded => "none",
        }
    }
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mode: CodeMode,
    pub system: LinearSystem,
    pub channel: ChannelLaw,
    pub codes: Vec<CodeChoice>,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub outputs: PathBuf,
    /// Sensor-side steady filter, present in output mode.
    pub local_filter: Option<LocalKalmanFilter>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| {
                    let before = &text[..s.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {column}")
                })
                .unwrap_or_else(|| "<document>".to_string());
            Error::config(field, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config { field, message } => Error::config(format!("{}: {field}", path.display()), message),
            other => other,
        })
    }

    /// Checks every field and builds the runnable scenario. Relative script
    /// paths resolve against `base_dir`.
    pub fn validate(&self, base_dir: &Path) -> Result<Scenario> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs", "must be at least 1"));
        }
        if self.codes.is_empty() {
            return Err(Error::config("code", "at least one [[code]] entry is required"));
        }

        let a = matrix("system.a", &self.system.a)?;
        let q = covariance("system.q", &self.system.q)?;
        let (system, local_filter) = match self.mode {
            CodeMode::State => {
                if self.system.c.is_some() || self.system.r.is_some() {
                    return Err(Error::config("system.c", "state mode measures x_k directly; omit c and r"));
                }
                let sigma0 = match &self.system.sigma0 {
                    Sigma0Spec::Named(s) if s == "q" => q.clone(),
                    Sigma0Spec::Named(s) => {
                        return Err(Error::config("system.sigma0", format!("`{s}` is not valid in state mode; use \"q\" or a matrix")))
                    }
                    Sigma0Spec::Matrix(m) => covariance("system.sigma0", m)?,
                };
                let sys = LinearSystem::state_measurement(a, q, sigma0).map_err(|e| Error::config("system", detail(e)))?;
                (sys, None)
            }
            CodeMode::Output => {
                let c = matrix("system.c", self.system.c.as_ref().ok_or_else(|| Error::config("system.c", "required in output mode"))?)?;
                let r = covariance("system.r", self.system.r.as_ref().ok_or_else(|| Error::config("system.r", "required in output mode"))?)?;
                let n = a.nrows();
                let provisional = LinearSystem::new(a.clone(), c.clone(), q.clone(), r.clone(), DMatrix::identity(n, n))
                    .map_err(|e| Error::config("system", detail(e)))?;
                let pbar = solve_dare(provisional.a(), provisional.c(), provisional.q(), provisional.r())?;
                let sigma0 = match &self.system.sigma0 {
                    Sigma0Spec::Named(s) if s == "dare" => pbar.matrix().clone(),
                    Sigma0Spec::Named(s) => {
                        return Err(Error::config("system.sigma0", format!("output mode needs sigma0 = \"dare\", got `{s}`")))
                    }
                    Sigma0Spec::Matrix(m) => {
                        let m = matrix("system.sigma0", m)?;
                        if m.shape() != pbar.shape() || max_abs(&(&m - pbar.matrix())) > 1e-9 {
                            return Err(Error::config("system.sigma0", "output mode assumes the local filter has converged, so sigma0 must equal the DARE solution"));
                        }
                        m
                    }
                };
                let sys = provisional.with_sigma0(sigma0).map_err(|e| Error::config("system.sigma0", detail(e)))?;
                let kf = LocalKalmanFilter::from_prediction_cov(&sys, pbar)?;
                (sys, Some(kf))
            }
        };

        let channel = match &self.channel {
            ChannelSpec::Iid { p11, p10, p01, p00 } => {
                ChannelLaw::iid(*p11, *p10, *p01, *p00).map_err(|e| Error::config("channel", detail(e)))?
            }
            ChannelSpec::Scripted { path, gamma_u, gamma_e } => {
                let trace = match (path, gamma_u, gamma_e) {
                    (Some(p), None, None) => OutcomeTrace::read_csv(&base_dir.join(p))?,
                    (None, Some(gu), Some(ge)) => {
                        OutcomeTrace::from_bits(gu, ge).map_err(|e| Error::config("channel", detail(e)))?
                    }
                    _ => return Err(Error::config("channel", "scripted channel needs either `path` or both `gamma_u` and `gamma_e`")),
                };
                if trace.len() < self.horizon + 1 {
                    return Err(Error::config(
                        "channel",
                        format!("script has {} steps but horizon {} needs {}", trace.len(), self.horizon, self.horizon + 1),
                    ));
                }
                ChannelLaw::Scripted(trace)
            }
        };

        let mut codes = Vec::with_capacity(self.codes.len());
        for (i, spec) in self.codes.iter().enumerate() {
            let choice = match spec {
                CodeSpec::StateSecrecy => CodeChoice::StateSecrecy,
                CodeSpec::BaselineRandom { p } => CodeChoice::Withholding(WithholdPolicy::Random { p: *p }),
                CodeSpec::BaselineDeterministic { s } => CodeChoice::Withholding(WithholdPolicy::Deterministic { s: *s }),
                CodeSpec::None => CodeChoice::Uncoded,
            };
            let field = format!("code[{i}]");
            if let CodeChoice::Withholding(policy) = choice {
                policy.validate().map_err(|e| Error::config(field.clone(), detail(e)))?;
            }
            if choice != CodeChoice::StateSecrecy && self.mode == CodeMode::Output {
                return Err(Error::config(field, "uncoded mechanisms are only defined for state measurements"));
            }
            if codes.iter().any(|c: &CodeChoice| c.label() == choice.label()) {
                return Err(Error::config(field, format!("duplicate code `{}`", choice.label())));
            }
            codes.push(choice);
        }

        Ok(Scenario {
            name: self.name.clone(),
            mode: self.mode,
            system,
            channel,
            codes,
            horizon: self.horizon,
            runs: self.runs,
            seed: self.seed,
            outputs: self.outputs.clone(),
            local_filter,
        })
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::config(field, "matrix must be non-empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::config(field, format!("row {i} has {} entries, expected {ncols}", rows[i].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::config(field, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn covariance(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = matrix(field, rows)?;
    CovarianceMatrix::new(m.clone()).map_err(|e| Error::config(field, detail(e)))?;
    Ok(m)
}

/// The message of a library error without its category prefix.
fn detail(e: Error) -> String {
    match e {
        Error::InvalidArgument(msg) | Error::Numeric(msg) => msg,
        other => other.to_string(),
    }
}

impl Scenario {
    /// Loads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg = ScenarioConfig::load(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.validate(base)
    }

    /// Output-mode `P̄ − KCP̄`.
    pub fn filtered_cov(&self) -> Option<CovarianceMatrix> {
        self.local_filter.as_ref().map(LocalKalmanFilter::filtered_cov)
    }
}

/// The shipped direct-measurement scenario (`scenarios/scenario1.toml`).
pub const SCENARIO1_TOML: &str = include_str!("../../scenarios/scenario1.toml");
/// The shipped output-measurement scenario (`scenarios/scenario2.toml`).
pub const SCENARIO2_TOML: &str = include_str!("../../scenarios/scenario2.toml");

pub fn scenario1() -> Scenario {
    shipped(SCENARIO1_TOML)
}

pub fn scenario2() -> Scenario {
    shipped(SCENARIO2_TOML)
}

fn shipped(text: &str) -> Scenario {
    ScenarioConfig::from_toml(text)
        .and_then(|c| c.validate(Path::new(".")))
        .expect("shipped scenario files are valid")
}
