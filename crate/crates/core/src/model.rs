//! Domain types shared by every allocation stage.
//!
//! All powers are linear watts and all gains are linear power ratios. Rates
//! are in nats. Every type validates its invariants on construction, so the
//! algorithms downstream never see malformed data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar configuration of one simulated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub cell_radius_m: f64,
    /// Receiver noise power n0 (W).
    pub noise_power_w: f64,
    pub pathloss_exp: f64,
    /// Transmit power of every cellular user (W).
    pub cu_power_w: f64,
    /// Maximum D2D transmit power P_m (W).
    pub max_d2d_power_w: f64,
    pub d2d_link_length_m: f64,
    pub num_channels: usize,
    pub num_d2d: usize,
    /// Interference tolerance relative to the cellular signal received at the BS (dB).
    pub tolerance_rel_db: f64,
    /// Revenue weight on the D2D gain term.
    pub xi1: f64,
    /// Cost weight on interference-budget violation.
    pub xi2: f64,
    /// Channel usage price.
    pub theta: f64,
    /// Tradeoff coefficient on interference terms (1/W).
    pub w_tradeoff: f64,
    /// Width of the final price bracket, relative to the bracket scale
    /// `members / Q_k` of each channel.
    pub bisect_epsilon: f64,
    pub rng_seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            cell_radius_m: 500.0,
            noise_power_w: 1e-13,
            pathloss_exp: 4.0,
            cu_power_w: 0.02,
            max_d2d_power_w: 0.02,
            d2d_link_length_m: 50.0,
            num_channels: 4,
            num_d2d: 10,
            tolerance_rel_db: 0.0,
            xi1: 1.0,
            xi2: 1.0,
            theta: 1.0,
            w_tradeoff: 6e6,
            bisect_epsilon: 1e-13,
            rng_seed: 1,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "{name} must be finite and > 0 (got {v})"
        )))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "{name} must be finite and >= 0 (got {v})"
        )))
    }
}

impl SimParams {
    /// Default cell parameters with the given channel and pair counts.
    pub fn with_counts(num_channels: usize, num_d2d: usize) -> Self {
        Self {
            num_channels,
            num_d2d,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("cell_radius_m", self.cell_radius_m)?;
        positive("noise_power_w", self.noise_power_w)?;
        positive("cu_power_w", self.cu_power_w)?;
        positive("max_d2d_power_w", self.max_d2d_power_w)?;
        positive("d2d_link_length_m", self.d2d_link_length_m)?;
        positive("bisect_epsilon", self.bisect_epsilon)?;
        positive("xi1", self.xi1)?;
        non_negative("xi2", self.xi2)?;
        non_negative("theta", self.theta)?;
        non_negative("w_tradeoff", self.w_tradeoff)?;
        if !(self.pathloss_exp.is_finite() && self.pathloss_exp >= 2.0) {
            return Err(Error::InvalidParams(format!(
                "pathloss_exp must be >= 2 (got {})",
                self.pathloss_exp
            )));
        }
        if !self.tolerance_rel_db.is_finite() {
            return Err(Error::InvalidParams(
                "tolerance_rel_db must be finite".into(),
            ));
        }
        if self.num_channels < 1 {
            return Err(Error::InvalidParams("num_channels must be ≥ 1".into()));
        }
        if self.num_d2d < 1 {
            return Err(Error::InvalidParams("num_d2d must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Raw gain tables of one network draw, indexed `[channel][..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    /// D2D transmitter `d` to its own receiver: `own[k][d]`.
    pub own: Vec<Vec<f64>>,
    /// D2D transmitter `i` to D2D receiver `d`: `cross[k][i][d]`. The diagonal is unused.
    pub cross: Vec<Vec<Vec<f64>>>,
    /// Cellular user `k` to D2D receiver `d`: `cu_to_rx[k][d]`.
    pub cu_to_rx: Vec<Vec<f64>>,
    /// D2D transmitter `d` to the base station: `tx_to_bs[k][d]`.
    pub tx_to_bs: Vec<Vec<f64>>,
    /// Cellular user `k` to the base station.
    pub cu_to_bs: Vec<f64>,
    /// Interference tolerance Q_k (W).
    pub budget: Vec<f64>,
}

/// One immutable network realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    params: SimParams,
    gains: Gains,
}

fn check_gain(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInstance(format!(
            "{name} must be finite and > 0 (got {v})"
        )))
    }
}

impl NetworkInstance {
    pub fn new(params: SimParams, gains: Gains) -> Result<Self> {
        params.validate()?;
        let (nk, nd) = (params.num_channels, params.num_d2d);
        let dims_ok = gains.own.len() == nk
            && gains.cu_to_rx.len() == nk
            && gains.tx_to_bs.len() == nk
            && gains.cross.len() == nk
            && gains.cu_to_bs.len() == nk
            && gains.budget.len() == nk
            && gains.own.iter().all(|r| r.len() == nd)
            && gains.cu_to_rx.iter().all(|r| r.len() == nd)
            && gains.tx_to_bs.iter().all(|r| r.len() == nd)
            && gains
                .cross
                .iter()
                .all(|m| m.len() == nd && m.iter().all(|r| r.len() == nd));
        if !dims_ok {
            return Err(Error::InvalidInstance(format!(
                "gain tables do not match {nk} channels x {nd} pairs"
            )));
        }
        for k in 0..nk {
            check_gain("cu_to_bs", gains.cu_to_bs[k])?;
            check_gain("budget", gains.budget[k])?;
            for d in 0..nd {
                check_gain("own", gains.own[k][d])?;
                check_gain("cu_to_rx", gains.cu_to_rx[k][d])?;
                check_gain("tx_to_bs", gains.tx_to_bs[k][d])?;
                for i in 0..nd {
                    if i != d {
                        check_gain("cross", gains.cross[k][i][d])?;
                    }
                }
            }
        }
        Ok(Self { params, gains })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn gains(&self) -> &Gains {
        &self.gains
    }

    pub fn num_channels(&self) -> usize {
        self.params.num_channels
    }

    pub fn num_d2d(&self) -> usize {
        self.params.num_d2d
    }

    #[inline]
    pub fn own_gain(&self, k: usize, d: usize) -> f64 {
        self.gains.own[k][d]
    }

    #[inline]
    pub fn cross_gain(&self, k: usize, tx: usize, rx: usize) -> f64 {
        self.gains.cross[k][tx][rx]
    }

    #[inline]
    pub fn cu_to_rx_gain(&self, k: usize, d: usize) -> f64 {
        self.gains.cu_to_rx[k][d]
    }

    #[inline]
    pub fn tx_to_bs_gain(&self, k: usize, d: usize) -> f64 {
        self.gains.tx_to_bs[k][d]
    }

    #[inline]
    pub fn cu_to_bs_gain(&self, k: usize) -> f64 {
        self.gains.cu_to_bs[k]
    }

    #[inline]
    pub fn budget(&self, k: usize) -> f64 {
        self.gains.budget[k]
    }
}

/// Assignment of D2D pairs to channels. Each pair holds at most one channel,
/// so the channel member sets are disjoint by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMatching")]
pub struct Matching {
    num_channels: usize,
    assign: Vec<Option<usize>>,
}

#[derive(Deserialize)]
struct RawMatching {
    num_channels: usize,
    assign: Vec<Option<usize>>,
}

impl TryFrom<RawMatching> for Matching {
    type Error = Error;

    fn try_from(raw: RawMatching) -> Result<Self> {
        Matching::new(raw.assign, raw.num_channels)
    }
}

impl Matching {
    pub fn new(assign: Vec<Option<usize>>, num_channels: usize) -> Result<Self> {
        if let Some((d, k)) = assign
            .iter()
            .enumerate()
            .find_map(|(d, k)| k.filter(|&k| k >= num_channels).map(|k| (d, k)))
        {
            return Err(Error::InvalidMatching(format!(
                "pair {d} assigned to channel {k}, but only {num_channels} channels exist"
            )));
        }
        Ok(Self {
            num_channels,
            assign,
        })
    }

    /// Every pair on the channel given by `channels[d]`.
    pub fn from_channels(channels: &[usize], num_channels: usize) -> Result<Self> {
        Self::new(channels.iter().map(|&k| Some(k)).collect(), num_channels)
    }

    pub fn empty(num_d2d: usize, num_channels: usize) -> Self {
        Self {
            num_channels,
            assign: vec![None; num_d2d],
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.assign.len()
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assign
    }

    #[inline]
    pub fn channel_of(&self, d: usize) -> Option<usize> {
        self.assign[d]
    }

    /// Pairs on channel `k`, in ascending index order.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.assign
            .iter()
            .enumerate()
            .filter_map(|(d, &c)| (c == Some(k)).then_some(d))
            .collect()
    }

    pub fn occupancy(&self, k: usize) -> usize {
        self.assign.iter().filter(|&&c| c == Some(k)).count()
    }

    pub fn is_complete(&self) -> bool {
        self.assign.iter().all(Option::is_some)
    }

    pub fn first_unmatched(&self) -> Option<usize> {
        self.assign.iter().position(Option::is_none)
    }

    pub(crate) fn set(&mut self, d: usize, k: Option<usize>) {
        debug_assert!(k.is_none_or(|k| k < self.num_channels));
        self.assign[d] = k;
    }

    /// Checks that the matching covers exactly the pairs and channels of `inst`.
    pub fn check_dims(&self, inst: &NetworkInstance) -> Result<()> {
        if self.num_pairs() != inst.num_d2d() || self.num_channels != inst.num_channels() {
            return Err(Error::InvalidMatching(format!(
                "matching is {}x{} but instance is {}x{}",
                self.num_channels,
                self.num_pairs(),
                inst.num_channels(),
                inst.num_d2d()
            )));
        }
        Ok(())
    }
}

/// Per-pair transmit powers (W).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerProfile {
    p: Vec<f64>,
}

impl PowerProfile {
    pub fn new(p: Vec<f64>, max_power_w: f64) -> Result<Self> {
        if let Some((d, v)) = p
            .iter()
            .copied()
            .enumerate()
            .find(|&(_, v)| !(v.is_finite() && (0.0..=max_power_w).contains(&v)))
        {
            return Err(Error::InvalidPower(format!(
                "p[{d}] = {v} outside [0, {max_power_w}]"
            )));
        }
        Ok(Self { p })
    }

    pub fn zeros(num_d2d: usize) -> Self {
        Self {
            p: vec![0.0; num_d2d],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    #[inline]
    pub fn get(&self, d: usize) -> f64 {
        self.p[d]
    }

    pub(crate) fn set(&mut self, d: usize, v: f64) {
        self.p[d] = v;
    }
}

/// Outcome of the per-channel price search.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriceResult {
    /// Virtual price factor c_k.
    pub price: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Whether the interference budget binds on the channel.
    pub tight: Vec<bool>,
}

impl PriceResult {
    pub fn new(num_channels: usize) -> Self {
        Self {
            price: vec![0.0; num_channels],
            iterations: vec![0; num_channels],
            tight: vec![false; num_channels],
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.iterations.iter().sum()
    }
}

/// Allocation schemes that can be compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    Random,
    InterferenceMin,
    Orthogonal,
    BruteForce,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Proposed,
        Scheme::Random,
        Scheme::InterferenceMin,
        Scheme::Orthogonal,
        Scheme::BruteForce,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Random => "random",
            Scheme::InterferenceMin => "interference_min",
            Scheme::Orthogonal => "orthogonal",
            Scheme::BruteForce => "brute_force",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// One CSV row of experiment output. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub run_id: u64,
    pub seed: u64,
    pub scheme: Scheme,
    pub k_channels: usize,
    pub d_pairs: usize,
    pub tolerance_rel_db: f64,
    pub d2d_sum_rate_nats: f64,
    pub cu_sum_rate_nats: f64,
    pub swap_count: usize,
    pub bisect_iters_total: usize,
    pub converged: bool,
}

impl MetricsRecord {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d2d_sum_rate_nats", self.d2d_sum_rate_nats),
            ("cu_sum_rate_nats", self.cu_sum_rate_nats),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0 (got {v})"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_are_valid() {
        SimParams::default().validate().unwrap();
    }

    #[test]
    fn zero_pairs_rejected() {
        let err = SimParams::with_counts(2, 0).validate().unwrap_err();
        assert!(err.to_string().contains("num_d2d must be ≥ 1"), "{err}");
    }

    #[test]
    fn bad_scalars_rejected() {
        let mut p = SimParams::default();
        p.pathloss_exp = 1.5;
        assert!(p.validate().is_err());
        let mut p = SimParams::default();
        p.bisect_epsilon = 0.0;
        assert!(p.validate().is_err());
        let mut p = SimParams::default();
        p.max_d2d_power_w = -1.0;
        assert!(p.validate().is_err());
        let mut p = SimParams::default();
        p.num_channels = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn matching_rejects_out_of_range_channel() {
        assert!(Matching::new(vec![Some(0), Some(2)], 2).is_err());
        let m = Matching::new(vec![Some(1), None, Some(1)], 2).unwrap();
        assert_eq!(m.members(1), vec![0, 2]);
        assert!(m.members(0).is_empty());
        assert_eq!(m.first_unmatched(), Some(1));
    }

    #[test]
    fn matching_deserialization_validates() {
        let bad = r#"{"num_channels":1,"assign":[0,3]}"#;
        assert!(serde_json::from_str::<Matching>(bad).is_err());
    }

    #[test]
    fn power_profile_box() {
        assert!(PowerProfile::new(vec![0.0, 0.02], 0.02).is_ok());
        assert!(PowerProfile::new(vec![0.021], 0.02).is_err());
        assert!(PowerProfile::new(vec![-1e-9], 0.02).is_err());
        assert!(PowerProfile::new(vec![f64::NAN], 0.02).is_err());
    }

    #[test]
    fn scheme_parse() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("greedy".parse::<Scheme>().is_err());
    }

    #[test]
    fn instance_rejects_bad_gain() {
        let params = SimParams::with_counts(1, 1);
        let gains = Gains {
            own: vec![vec![1.0]],
            cross: vec![vec![vec![0.0]]],
            cu_to_rx: vec![vec![1.0]],
            tx_to_bs: vec![vec![0.0]],
            cu_to_bs: vec![1.0],
            budget: vec![1.0],
        };
        assert!(NetworkInstance::new(params.clone(), gains.clone()).is_err());
        let ok = Gains {
            tx_to_bs: vec![vec![1.0]],
            ..gains
        };
        // the unused cross-gain diagonal may be zero
        assert!(NetworkInstance::new(params, ok).is_ok());
    }
}
