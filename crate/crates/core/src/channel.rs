//! Two-receiver packet-drop channel: user outcomes `γ_u,k`, eavesdropper
//! outcomes `γ_k`, acknowledgment reference times and critical events.

use std::path::Path;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::plant::csv_io;
use crate::rng::{self, Purpose};

/// Joint reception sequence over `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeTrace {
    gamma_u: Vec<bool>,
    gamma_e: Vec<bool>,
}

impl OutcomeTrace {
    pub fn new(gamma_u: Vec<bool>, gamma_e: Vec<bool>) -> Result<Self> {
        if gamma_u.len() != gamma_e.len() {
            return Err(Error::invalid(format!(
                "gamma_u has {} entries but gamma_e has {}",
                gamma_u.len(),
                gamma_e.len()
            )));
        }
        if gamma_u.is_empty() {
            return Err(Error::invalid("outcome trace must not be empty"));
        }
        Ok(Self { gamma_u, gamma_e })
    }

    /// Builds a trace from 0/1 integers; anything else is rejected.
    pub fn from_bits(gamma_u: &[u8], gamma_e: &[u8]) -> Result<Self> {
        let conv = |name: &str, v: &[u8]| -> Result<Vec<bool>> {
            v.iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::invalid(format!("{name} entry {other} is not 0 or 1"))),
                })
                .collect()
        };
        Self::new(conv("gamma_u", gamma_u)?, conv("gamma_e", gamma_e)?)
    }

    /// Every packet reaches both receivers.
    pub fn all_received(len: usize) -> Self {
        Self {
            gamma_u: vec![true; len],
            gamma_e: vec![true; len],
        }
    }

    pub fn len(&self) -> usize {
        self.gamma_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma_u.is_empty()
    }

    /// Last time index `K`.
    pub fn horizon(&self) -> usize {
        self.len() - 1
    }

    pub fn gamma_u(&self) -> &[bool] {
        &self.gamma_u
    }

    pub fn gamma_e(&self) -> &[bool] {
        &self.gamma_e
    }

    pub fn user(&self, k: usize) -> bool {
        self.gamma_u[k]
    }

    pub fn eve(&self, k: usize) -> bool {
        self.gamma_e[k]
    }

    /// `t_k` for every `k`; see [`reference_times`].
    pub fn reference_times(&self) -> Vec<i64> {
        reference_times(&self.gamma_u)
    }

    /// Whether step `k` is critical: the user receives and the eavesdropper misses.
    pub fn is_critical(&self, k: usize) -> bool {
        self.gamma_u[k] && !self.gamma_e[k]
    }

    pub fn first_critical_time(&self) -> Option<usize> {
        (0..self.len()).find(|&k| self.is_critical(k))
    }

    /// Keeps the trace up to `k0` and hands the eavesdropper every packet
    /// afterwards, leaving the user's outcomes untouched.
    pub fn couple(&self, k0: usize) -> Result<Self> {
        if k0 > self.horizon() {
            return Err(Error::invalid(format!(
                "coupling time {k0} exceeds horizon {}",
                self.horizon()
            )));
        }
        let mut out = self.clone();
        for g in &mut out.gamma_e[k0 + 1..] {
            *g = true;
        }
        Ok(out)
    }

    /// First `len` steps.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::invalid(format!(
                "cannot take {len} steps from a trace of length {}",
                self.len()
            )));
        }
        Ok(Self {
            gamma_u: self.gamma_u[..len].to_vec(),
            gamma_e: self.gamma_e[..len].to_vec(),
        })
    }

    /// Reads `k,gamma_u,gamma_e` rows. Indices must run 0,1,2,… and bits must be
    /// exactly `0` or `1`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| csv_io(path, e))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if header != ["k", "gamma_u", "gamma_e"] {
            return Err(Error::Csv {
                path: path.into(),
                line: 1,
                message: format!("expected header k,gamma_u,gamma_e, found {}", header.join(",")),
            });
        }
        let (mut gu, mut ge) = (Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| csv_io(path, e))?;
            let bad = |message: String| Error::Csv {
                path: path.into(),
                line,
                message,
            };
            let k: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad index `{}`", &rec[0])))?;
            if k != i {
                return Err(bad(format!("expected k = {i}, found {k}")));
            }
            let bit = |s: &str| match s.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(bad(format!("`{other}` is not 0 or 1"))),
            };
            gu.push(bit(&rec[1])?);
            ge.push(bit(&rec[2])?);
        }
        Self::new(gu, ge).map_err(|e| Error::Csv {
            path: path.into(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["k", "gamma_u", "gamma_e"]).map_err(|e| csv_io(path, e))?;
        for k in 0..self.len() {
            w.write_record([
                k.to_string(),
                u8::from(self.gamma_u[k]).to_string(),
                u8::from(self.gamma_e[k]).to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// `t_k = max{0 ≤ t < k : γ_u,t = 1}`, or `-1` when no such `t` exists.
pub fn reference_times(gamma_u: &[bool]) -> Vec<i64> {
    let mut last = -1i64;
    gamma_u
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            let t = last;
            if g {
                last = k as i64;
            }
            t
        })
        .collect()
}

/// How channel outcomes are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelLaw {
    /// Pairs `(γ_u,k, γ_k)` drawn i.i.d. with `p[i][j] = P(γ_u = i, γ = j)`.
    IidJoint { p: [[f64; 2]; 2] },
    /// A fixed outcome sequence.
    Scripted(OutcomeTrace),
}

impl ChannelLaw {
    /// Arguments are `p_11, p_10, p_01, p_00`.
    pub fn iid(p11: f64, p10: f64, p01: f64, p00: f64) -> Result<Self> {
        let p = [[p00, p01], [p10, p11]];
        let flat = [p11, p10, p01, p00];
        if flat.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!("channel probabilities must be nonnegative, got {flat:?}")));
        }
        let total: f64 = flat.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("channel probabilities sum to {total}, expected 1")));
        }
        Ok(ChannelLaw::IidJoint { p })
    }

    /// Marginal probability that the user receives a packet.
    pub fn user_success(&self) -> Option<f64> {
        match self {
            ChannelLaw::IidJoint { p } => Some(p[1][0] + p[1][1]),
            ChannelLaw::Scripted(_) => None,
        }
    }
}

/// Draws `horizon + 1` outcomes from the channel stream of `(seed, trace_id)`.
pub fn sample_trace(law: &ChannelLaw, horizon: usize, seed: u64, trace_id: u64) -> Result<OutcomeTrace> {
    match law {
        ChannelLaw::Scripted(script) => {
            if script.len() < horizon + 1 {
                return Err(Error::invalid(format!(
                    "scripted trace has {} steps, horizon {horizon} needs {}",
                    script.len(),
                    horizon + 1
                )));
            }
            script.truncated(horizon + 1)
        }
        ChannelLaw::IidJoint { p } => {
            let mut rng = rng::stream(seed, trace_id, Purpose::Channel);
            let mut gu = Vec::with_capacity(horizon + 1);
            let mut ge = Vec::with_capacity(horizon + 1);
            let order = [(true, true), (true, false), (false, true)];
            for _ in 0..=horizon {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = (false, false);
                for &(i, j) in &order {
                    acc += p[usize::from(i)][usize::from(j)];
                    if u < acc {
                        pick = (i, j);
                        break;
                    }
                }
                gu.push(pick.0);
                ge.push(pick.1);
            }
            OutcomeTrace::new(gu, ge)
        }
    }
}

/// What a receiver sees at one step: the packet, or an erasure.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelOutput {
    Payload(DVector<f64>),
    Erasure,
}

impl ChannelOutput {
    /// Delivers `packet` iff `received`.
    pub fn deliver(received: bool, packet: &DVector<f64>) -> Self {
        if received {
            ChannelOutput::Payload(packet.clone())
        } else {
            ChannelOutput::Erasure
        }
    }

    pub fn payload(&self) -> Option<&DVector<f64>> {
        match self {
            ChannelOutput::Payload(v) => Some(v),
            ChannelOutput::Erasure => None,
        }
    }

    pub fn is_erasure(&self) -> bool {
        matches!(self, ChannelOutput::Erasure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> OutcomeTrace {
        OutcomeTrace::from_bits(&[0, 1, 1, 1], &[1, 0, 1, 1]).unwrap()
    }

    #[test]
    fn degenerate_laws() {
        let t = sample_trace(&ChannelLaw::iid(1.0, 0.0, 0.0, 0.0).unwrap(), 20, 1, 0).unwrap();
        assert!(t.gamma_u().iter().all(|&g| g) && t.gamma_e().iter().all(|&g| g));
        let t = sample_trace(&ChannelLaw::iid(0.0, 0.0, 1.0, 0.0).unwrap(), 20, 1, 0).unwrap();
        assert!(t.gamma_u().iter().all(|&g| !g) && t.gamma_e().iter().all(|&g| g));
        let t = sample_trace(&ChannelLaw::iid(0.0, 0.0, 0.0, 1.0).unwrap(), 20, 1, 0).unwrap();
        assert!(t.gamma_u().iter().all(|&g| !g) && t.gamma_e().iter().all(|&g| !g));
        assert_eq!(t.len(), 21);
    }

    #[test]
    fn invalid_laws_rejected() {
        assert!(ChannelLaw::iid(0.5, 0.5, 0.1, 0.0).is_err());
        assert!(ChannelLaw::iid(1.1, -0.1, 0.0, 0.0).is_err());
        assert!(ChannelLaw::iid(f64::NAN, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn scenario1_frequencies_within_binomial_bands() {
        let (p11, p10, p01, p00) = (0.54, 0.36, 0.06, 0.04);
        let law = ChannelLaw::iid(p11, p10, p01, p00).unwrap();
        let t = sample_trace(&law, 99_999, 17, 0).unwrap();
        let n = t.len() as f64;
        let mut counts = [[0usize; 2]; 2];
        for k in 0..t.len() {
            counts[usize::from(t.user(k))][usize::from(t.eve(k))] += 1;
        }
        for (i, j, p) in [(1, 1, p11), (1, 0, p10), (0, 1, p01), (0, 0, p00)] {
            let freq = counts[i][j] as f64 / n;
            let sd = (p * (1.0 - p) / n).sqrt();
            assert!((freq - p).abs() <= 3.0 * sd, "p_{i}{j}: {freq} vs {p}");
        }
    }

    #[test]
    fn scripted_truncation_and_short_script() {
        let law = ChannelLaw::Scripted(example1());
        assert_eq!(sample_trace(&law, 2, 0, 0).unwrap().gamma_u(), &[false, true, true]);
        assert!(sample_trace(&law, 4, 0, 0).is_err());
    }

    #[test]
    fn reference_times_example1() {
        assert_eq!(example1().reference_times(), vec![-1, -1, 1, 2]);
        assert_eq!(reference_times(&[false; 4]), vec![-1; 4]);
        assert_eq!(reference_times(&[true; 4]), vec![-1, 0, 1, 2]);
    }

    #[test]
    fn critical_times() {
        assert_eq!(example1().first_critical_time(), Some(1));
        let none = OutcomeTrace::from_bits(&[1, 0, 1], &[1, 1, 1]).unwrap();
        assert_eq!(none.first_critical_time(), None);
        let zero = OutcomeTrace::from_bits(&[1], &[0]).unwrap();
        assert_eq!(zero.first_critical_time(), Some(0));
    }

    #[test]
    fn coupling() {
        let t = OutcomeTrace::from_bits(&[1, 1, 0, 1], &[1, 0, 0, 0]).unwrap();
        let c = t.couple(1).unwrap();
        assert_eq!(c.gamma_e(), &[true, false, true, true]);
        assert_eq!(c.gamma_u(), t.gamma_u());
        assert_eq!(c.couple(1).unwrap(), c);
        assert_eq!(example1().couple(1).unwrap(), example1());
        assert!(t.couple(4).is_err());
    }

    #[test]
    fn bits_must_be_binary() {
        assert!(OutcomeTrace::from_bits(&[0, 2], &[0, 1]).is_err());
        assert!(OutcomeTrace::from_bits(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn csv_round_trip_and_strict_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        example1().write_csv(&path).unwrap();
        assert_eq!(OutcomeTrace::read_csv(&path).unwrap(), example1());

        std::fs::write(&path, "k,gamma_u,gamma_e\n0,1,1\n1,true,0\n").unwrap();
        let err = OutcomeTrace::read_csv(&path).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 3, .. }), "{err}");
        std::fs::write(&path, "k,gamma_u,gamma_e\n0,1,1\n2,1,0\n").unwrap();
        assert!(OutcomeTrace::read_csv(&path).is_err());
    }

    #[test]
    fn delivery() {
        let z = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(ChannelOutput::deliver(true, &z).payload(), Some(&z));
        assert!(ChannelOutput::deliver(false, &z).is_erasure());
    }
}
