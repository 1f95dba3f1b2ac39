//! Uncoded comparison mechanisms that send the raw state but sometimes
//! withhold it.
//!
//! A withheld step puts nothing on the channel, so neither receiver gets a
//! packet; both receivers (the eavesdropper included) know whether something
//! was sent. A receiver's error resets to zero whenever a packet is sent and
//! it receives it, and otherwise grows open loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::OutcomeTrace;
use crate::error::{Error, Result};
use crate::gaussian::CovarianceMatrix;
use crate::plant::LinearSystem;
use crate::rng::{self, Purpose, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WithholdPolicy {
    /// Withhold each packet independently with probability `p`.
    Random { p: f64 },
    /// Transmit only after the user has gone more than `s` consecutive steps
    /// without a packet.
    Deterministic { s: u32 },
}

impl WithholdPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WithholdPolicy::Random { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::invalid(format!("withholding probability {p} is outside [0, 1]")))
            }
            WithholdPolicy::Deterministic { s: 0 } => Err(Error::invalid("loss threshold s must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// Sensor-side transmit decisions for one trace.
#[derive(Debug, Clone)]
pub struct Withholder {
    policy: WithholdPolicy,
    rng: StreamRng,
    /// Consecutive steps, up to now, in which the user got nothing
    /// (withheld steps count as losses).
    user_losses: u32,
}

impl Withholder {
    pub fn new(policy: WithholdPolicy, seed: u64, trace_id: u64) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            policy,
            rng: rng::stream(seed, trace_id, Purpose::Withholding),
            user_losses: 0,
        })
    }

    /// Whether to send at the current step.
    pub fn decide(&mut self) -> bool {
        match self.policy {
            WithholdPolicy::Random { p } => self.rng.random::<f64>() >= p,
            WithholdPolicy::Deterministic { s } => self.user_losses > s,
        }
    }

    /// Reports whether the user actually got a packet this step.
    pub fn observe(&mut self, user_received: bool) {
        self.user_losses = if user_received { 0 } else { self.user_losses.saturating_add(1) };
    }
}

/// Per-step outcome of a baseline run.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub transmitted: Vec<bool>,
    pub user_cov: Vec<CovarianceMatrix>,
    pub eve_cov: Vec<CovarianceMatrix>,
}

/// Error covariances of the user and eavesdropper under `policy` on `trace`.
pub fn baseline_covariances(
    policy: WithholdPolicy,
    sys: &LinearSystem,
    trace: &OutcomeTrace,
    seed: u64,
    trace_id: u64,
) -> Result<BaselineRun> {
    let mut withholder = Withholder::new(policy, seed, trace_id)?;
    let len = trace.len();
    let mut out = BaselineRun {
        transmitted: Vec::with_capacity(len),
        user_cov: Vec::with_capacity(len),
        eve_cov: Vec::with_capacity(len),
    };
    let zero = CovarianceMatrix::zeros(sys.n());
    let propagate = |prev: Option<&CovarianceMatrix>| match prev {
        None => sys.sigma0().clone(),
        Some(p) => {
            let next = sys.a() * p.matrix() * sys.a().transpose() + sys.q().matrix();
            CovarianceMatrix::from_symmetrized(&next)
        }
    };
    for k in 0..len {
        let send = withholder.decide();
        let user_gets = send && trace.user(k);
        let eve_gets = send && trace.eve(k);
        withholder.observe(user_gets);
        let pu = if user_gets { zero.clone() } else { propagate(out.user_cov.last()) };
        let pe = if eve_gets { zero.clone() } else { propagate(out.eve_cov.last()) };
        out.transmitted.push(send);
        out.user_cov.push(pu);
        out.eve_cov.push(pe);
    }
    Ok(out)
}
