//! Stage 1: channel allocation as a many-to-one matching game with
//! externalities.
//!
//! D2D pairs and channels first run deferred acceptance on preference lists
//! built from interference-free estimates. Pairs then keep executing swaps
//! approved by every player involved until the matching is strongly
//! swap-stable. Each approved swap strictly raises [`potential`], which
//! bounds the number of swaps.
//!
//! Channel quotas are `D` (every pair fits on any channel), so a channel
//! always has a vacancy ("hole") for any pair not already on it. Holes are
//! implicit and a swap with a hole is a unilateral move.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{Matching, NetworkInstance};

/// A utility change counts as a strict improvement only above this margin.
pub const STRICT_IMPROVEMENT: f64 = 1e-9;
/// A utility change counts as "not worse" down to this (rounding) margin.
pub const WEAK_SLACK: f64 = 1e-12;

/// Utility of a D2D pair. `Unmatched` orders below every value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Utility {
    Unmatched,
    Value(f64),
}

impl Utility {
    pub fn value(self) -> Option<f64> {
        match self {
            Utility::Unmatched => None,
            Utility::Value(v) => Some(v),
        }
    }
}

/// Interference-free SINR a pair expects on a channel at full power.
pub fn estimated_sinr(d: usize, k: usize, inst: &NetworkInstance) -> f64 {
    let p = inst.params();
    p.max_d2d_power_w * inst.own_gain(k, d)
        / (p.noise_power_w + p.cu_power_w * inst.cu_to_rx_gain(k, d))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceLists {
    /// Channels per pair, best (highest estimated SINR) first.
    pub d2d_pref: Vec<Vec<usize>>,
    /// Pairs per channel, best (lowest gain towards the BS) first.
    pub ch_pref: Vec<Vec<usize>>,
}

impl PreferenceLists {
    pub fn build(inst: &NetworkInstance) -> Self {
        let (nk, nd) = (inst.num_channels(), inst.num_d2d());
        let d2d_pref = (0..nd)
            .map(|d| {
                let mut ks: Vec<usize> = (0..nk).collect();
                // stable: equal keys keep index order
                ks.sort_by(|&a, &b| {
                    estimated_sinr(d, b, inst)
                        .partial_cmp(&estimated_sinr(d, a, inst))
                        .unwrap_or(Ordering::Equal)
                });
                ks
            })
            .collect();
        let ch_pref = (0..nk)
            .map(|k| {
                let mut ds: Vec<usize> = (0..nd).collect();
                ds.sort_by(|&a, &b| {
                    inst.tx_to_bs_gain(k, a)
                        .partial_cmp(&inst.tx_to_bs_gain(k, b))
                        .unwrap_or(Ordering::Equal)
                });
                ds
            })
            .collect();
        Self { d2d_pref, ch_pref }
    }
}

/// Deferred-acceptance initialisation with quota `D` on every channel.
pub fn gs_initialize(inst: &NetworkInstance) -> Matching {
    gs_initialize_with_quota(inst, inst.num_d2d())
}

/// Deferred acceptance in synchronous rounds: every unmatched pair proposes
/// to its best channel that has not rejected it, and each channel keeps its
/// `quota` most preferred pairs among those held and the new proposers.
/// Pairs rejected by every channel stay unmatched.
pub fn gs_initialize_with_quota(inst: &NetworkInstance, quota: usize) -> Matching {
    let (nk, nd) = (inst.num_channels(), inst.num_d2d());
    let prefs = PreferenceLists::build(inst);
    let mut rank = vec![vec![0usize; nd]; nk];
    for (k, list) in prefs.ch_pref.iter().enumerate() {
        for (r, &d) in list.iter().enumerate() {
            rank[k][d] = r;
        }
    }
    let mut next = vec![0usize; nd];
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); nk];
    let mut matching = Matching::empty(nd, nk);
    loop {
        let proposers: Vec<usize> = (0..nd)
            .filter(|&d| matching.channel_of(d).is_none() && next[d] < nk)
            .collect();
        if proposers.is_empty() {
            break;
        }
        for d in proposers {
            let k = prefs.d2d_pref[d][next[d]];
            next[d] += 1;
            held[k].push(d);
            matching.set(d, Some(k));
        }
        for (k, list) in held.iter_mut().enumerate() {
            if list.len() > quota {
                list.sort_by_key(|&d| rank[k][d]);
                for d in list.drain(quota..) {
                    matching.set(d, None);
                }
            }
        }
    }
    matching
}

/// Gain `phi_d` of pair `d` on channel `k` shared with `others` (entries equal
/// to `d` are skipped).
pub fn gain_term(d: usize, k: usize, others: &[usize], inst: &NetworkInstance) -> f64 {
    let p = inst.params();
    let pm = p.max_d2d_power_w;
    let w = p.w_tradeoff;
    let mutual: f64 = others
        .iter()
        .filter(|&&i| i != d)
        .map(|&i| inst.cross_gain(k, d, i) + inst.cross_gain(k, i, d))
        .sum();
    (pm * inst.own_gain(k, d) / p.noise_power_w).ln()
        - w * p.cu_power_w * inst.cu_to_rx_gain(k, d)
        - 0.5 * w * pm * mutual
}

/// `xi2 * max(0, sum P_m h / Q_k - 1)` for the given channel members.
fn violation_cost(k: usize, members: &[usize], inst: &NetworkInstance) -> f64 {
    let p = inst.params();
    let load: f64 = members
        .iter()
        .map(|&d| p.max_d2d_power_w * inst.tx_to_bs_gain(k, d))
        .sum::<f64>()
        / inst.budget(k);
    p.xi2 * (load - 1.0).max(0.0)
}

pub fn d2d_utility(mu: &Matching, d: usize, inst: &NetworkInstance) -> Utility {
    match mu.channel_of(d) {
        None => Utility::Unmatched,
        Some(k) => {
            let p = inst.params();
            Utility::Value(p.xi1 * gain_term(d, k, &mu.members(k), inst) - p.theta)
        }
    }
}

fn channel_utility_of(k: usize, members: &[usize], inst: &NetworkInstance) -> f64 {
    inst.params().theta * members.len() as f64 - violation_cost(k, members, inst)
}

pub fn channel_utility(mu: &Matching, k: usize, inst: &NetworkInstance) -> f64 {
    channel_utility_of(k, &mu.members(k), inst)
}

/// Potential of a complete matching; strictly increases under every
/// approved swap.
pub fn potential(mu: &Matching, inst: &NetworkInstance) -> Result<f64> {
    mu.check_dims(inst)?;
    if let Some(d) = mu.first_unmatched() {
        return Err(Error::Unmatched(d));
    }
    let p = inst.params();
    let pm = p.max_d2d_power_w;
    let w = p.w_tradeoff;
    let mut total = 0.0;
    for k in 0..inst.num_channels() {
        let members = mu.members(k);
        for &d in &members {
            let incoming: f64 = members
                .iter()
                .filter(|&&i| i != d)
                .map(|&i| pm * inst.cross_gain(k, i, d) / 2.0)
                .sum();
            total += p.xi1
                * ((pm * inst.own_gain(k, d) / p.noise_power_w).ln()
                    - w * (p.cu_power_w * inst.cu_to_rx_gain(k, d) + incoming));
        }
        total -= violation_cost(k, &members, inst);
    }
    Ok(total)
}

/// The other side of a swap on the target channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapPartner {
    /// A vacancy: the swap moves `s` alone.
    Hole,
    Pair(usize),
}

/// Utility changes of the players involved in a swap.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SwapDeltas {
    pub pair_s: f64,
    /// Zero for a hole.
    pub pair_t: f64,
    /// Change of the summed utility of the two channels involved.
    pub channels: f64,
}

impl SwapDeltas {
    pub fn total(&self) -> f64 {
        self.pair_s + self.pair_t + self.channels
    }

    /// All three conditions weakly hold and at least one strictly.
    pub fn is_approved(&self) -> bool {
        let d = [self.pair_s, self.pair_t, self.channels];
        d.iter().all(|&x| x >= -WEAK_SLACK) && d.iter().any(|&x| x > STRICT_IMPROVEMENT)
    }
}

/// Matching after swapping `s` with `partner` on `target`.
pub fn apply_swap(mu: &Matching, s: usize, partner: SwapPartner, target: usize) -> Matching {
    let mut out = mu.clone();
    let from = mu.channel_of(s);
    out.set(s, Some(target));
    if let SwapPartner::Pair(t) = partner {
        out.set(t, from);
    }
    out
}

fn check_swap(
    mu: &Matching,
    s: usize,
    partner: SwapPartner,
    target: usize,
    inst: &NetworkInstance,
) -> Result<usize> {
    mu.check_dims(inst)?;
    if target >= inst.num_channels() {
        return Err(Error::InvalidMatching(format!(
            "channel {target} does not exist"
        )));
    }
    let m = mu.channel_of(s).ok_or(Error::Unmatched(s))?;
    match partner {
        SwapPartner::Pair(t) if mu.channel_of(t) != Some(target) => Err(Error::InvalidMatching(
            format!("pair {t} is not matched to channel {target}"),
        )),
        SwapPartner::Hole if m != target && mu.occupancy(target) >= inst.num_d2d() => Err(
            Error::InvalidMatching(format!("channel {target} has no vacancy")),
        ),
        _ => Ok(m),
    }
}

/// Utility deltas of the swap. Channel occupancy terms cancel exactly, so the
/// channel delta carries only the violation costs (and `theta` never enters).
pub fn swap_deltas(
    mu: &Matching,
    s: usize,
    partner: SwapPartner,
    target: usize,
    inst: &NetworkInstance,
) -> Result<SwapDeltas> {
    let m = check_swap(mu, s, partner, target, inst)?;
    let n = target;
    if m == n || partner == SwapPartner::Pair(s) {
        return Ok(SwapDeltas::default());
    }
    let xi1 = inst.params().xi1;
    let before_m = mu.members(m);
    let before_n = mu.members(n);
    let mut after_m: Vec<usize> = before_m.iter().copied().filter(|&d| d != s).collect();
    let mut after_n: Vec<usize> = before_n.clone();
    let mut pair_t = 0.0;
    if let SwapPartner::Pair(t) = partner {
        after_n.retain(|&d| d != t);
        after_m.push(t);
        pair_t = xi1 * (gain_term(t, m, &after_m, inst) - gain_term(t, n, &before_n, inst));
    }
    after_n.push(s);
    let pair_s = xi1 * (gain_term(s, n, &after_n, inst) - gain_term(s, m, &before_m, inst));
    let channels = (violation_cost(m, &before_m, inst) + violation_cost(n, &before_n, inst))
        - (violation_cost(m, &after_m, inst) + violation_cost(n, &after_n, inst));
    Ok(SwapDeltas {
        pair_s,
        pair_t,
        channels,
    })
}

pub fn is_approved_swap(
    mu: &Matching,
    s: usize,
    partner: SwapPartner,
    target: usize,
    inst: &NetworkInstance,
) -> Result<bool> {
    swap_deltas(mu, s, partner, target, inst).map(|d| d.is_approved())
}

/// Candidate swaps of `s` in scan order: target channels by index, on each
/// the hole first and then the occupants by index.
fn candidates(mu: &Matching, s: usize, inst: &NetworkInstance) -> Vec<(usize, SwapPartner)> {
    let own = mu.channel_of(s);
    let mut out = Vec::new();
    for n in (0..inst.num_channels()).filter(|&n| Some(n) != own) {
        if mu.occupancy(n) < inst.num_d2d() {
            out.push((n, SwapPartner::Hole));
        }
        out.extend(mu.members(n).into_iter().map(|t| (n, SwapPartner::Pair(t))));
    }
    out
}

/// One executed swap, as reported to [`run_swap_phase_traced`] observers.
#[derive(Debug, Clone)]
pub struct SwapEvent<'a> {
    pub s: usize,
    pub partner: SwapPartner,
    pub from: usize,
    pub to: usize,
    pub deltas: SwapDeltas,
    pub before: &'a Matching,
    pub after: &'a Matching,
}

fn first_approved(
    mu: &Matching,
    inst: &NetworkInstance,
) -> Result<Option<(usize, SwapPartner, usize, SwapDeltas)>> {
    for s in 0..mu.num_pairs() {
        for (n, partner) in candidates(mu, s, inst) {
            let deltas = swap_deltas(mu, s, partner, n, inst)?;
            if deltas.is_approved() {
                return Ok(Some((s, partner, n, deltas)));
            }
        }
    }
    Ok(None)
}

/// Applies the first approved swap in scan order until none remains.
/// Returns the final matching and the number of swaps executed.
pub fn run_swap_phase(mu: Matching, inst: &NetworkInstance) -> Result<(Matching, usize)> {
    run_swap_phase_traced(mu, inst, |_| {})
}

pub fn run_swap_phase_traced<F>(
    mut mu: Matching,
    inst: &NetworkInstance,
    mut observe: F,
) -> Result<(Matching, usize)>
where
    F: FnMut(&SwapEvent<'_>),
{
    mu.check_dims(inst)?;
    if let Some(d) = mu.first_unmatched() {
        return Err(Error::Unmatched(d));
    }
    let mut swaps = 0;
    while let Some((s, partner, n, deltas)) = first_approved(&mu, inst)? {
        let from = mu.channel_of(s).expect("complete matching");
        let next = apply_swap(&mu, s, partner, n);
        debug_assert!(potential(&next, inst)? > potential(&mu, inst)?);
        observe(&SwapEvent {
            s,
            partner,
            from,
            to: n,
            deltas,
            before: &mu,
            after: &next,
        });
        mu = next;
        swaps += 1;
    }
    Ok((mu, swaps))
}

/// Exhaustive check that no swap (with a pair or a hole, on any channel) is
/// approved.
pub fn is_strongly_swap_stable(mu: &Matching, inst: &NetworkInstance) -> Result<bool> {
    mu.check_dims(inst)?;
    if let Some(d) = mu.first_unmatched() {
        return Err(Error::Unmatched(d));
    }
    for s in 0..mu.num_pairs() {
        for n in 0..inst.num_channels() {
            let mut partners: Vec<SwapPartner> =
                mu.members(n).into_iter().map(SwapPartner::Pair).collect();
            if mu.occupancy(n) < inst.num_d2d() {
                partners.push(SwapPartner::Hole);
            }
            for partner in partners {
                if is_approved_swap(mu, s, partner, n, inst)? {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Full Stage 1: deferred acceptance followed by the swap phase.
pub fn allocate_channels(inst: &NetworkInstance) -> Result<(Matching, usize)> {
    run_swap_phase(gs_initialize(inst), inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SimParams;
    use crate::scenario::{generate_instance, InstanceBuilder};
    use approx::assert_relative_eq;

    fn cell(k: usize, d: usize) -> SimParams {
        SimParams::with_counts(k, d)
    }

    #[test]
    fn estimated_sinr_hand_value() {
        let inst = InstanceBuilder::new(cell(1, 1)).build().unwrap();
        assert_relative_eq!(
            estimated_sinr(0, 0, &inst),
            3.2e-9 / 1.2e-13,
            max_relative = 1e-12
        );
        assert_relative_eq!(estimated_sinr(0, 0, &inst), 2.6667e4, max_relative = 1e-4);
    }

    #[test]
    fn estimated_sinr_monotone_and_limit() {
        let a = InstanceBuilder::new(cell(1, 1)).build().unwrap();
        let b = InstanceBuilder::new(cell(1, 1))
            .cu_to_rx(0, 0, 1e-11)
            .build()
            .unwrap();
        assert!(estimated_sinr(0, 0, &b) < estimated_sinr(0, 0, &a));
        // a vanishing CU power leaves the noise-limited ratio
        let mut p = cell(1, 1);
        p.cu_power_w = 1e-300;
        let c = InstanceBuilder::new(p).build().unwrap();
        assert_relative_eq!(
            estimated_sinr(0, 0, &c),
            0.02 * 1.6e-7 / 1e-13,
            max_relative = 1e-12
        );
    }

    #[test]
    fn preference_lists_are_sorted_permutations() {
        let inst = generate_instance(&cell(4, 10), 3).unwrap();
        let prefs = PreferenceLists::build(&inst);
        for (d, list) in prefs.d2d_pref.iter().enumerate() {
            let mut sorted = list.clone();
            sorted.sort();
            assert_eq!(sorted, (0..4).collect::<Vec<_>>());
            for w in list.windows(2) {
                assert!(estimated_sinr(d, w[0], &inst) >= estimated_sinr(d, w[1], &inst));
            }
        }
        for (k, list) in prefs.ch_pref.iter().enumerate() {
            let mut sorted = list.clone();
            sorted.sort();
            assert_eq!(sorted, (0..10).collect::<Vec<_>>());
            for w in list.windows(2) {
                assert!(inst.tx_to_bs_gain(k, w[0]) <= inst.tx_to_bs_gain(k, w[1]));
            }
        }
    }

    #[test]
    fn ties_break_by_index() {
        let inst = InstanceBuilder::new(cell(3, 3)).build().unwrap();
        let prefs = PreferenceLists::build(&inst);
        assert!(prefs.d2d_pref.iter().all(|l| l == &vec![0, 1, 2]));
        assert!(prefs.ch_pref.iter().all(|l| l == &vec![0, 1, 2]));
    }

    #[test]
    fn gs_no_contention() {
        let inst = InstanceBuilder::new(cell(2, 2))
            .own(0, 0, 1e-6)
            .own(1, 1, 1e-6)
            .build()
            .unwrap();
        let m = gs_initialize(&inst);
        assert_eq!(m.assignment(), &[Some(0), Some(1)]);
    }

    #[test]
    fn gs_shared_favourite_keeps_both() {
        let inst = InstanceBuilder::new(cell(2, 2))
            .own(0, 0, 1e-6)
            .own(0, 1, 1e-6)
            .build()
            .unwrap();
        let m = gs_initialize(&inst);
        assert_eq!(m.assignment(), &[Some(0), Some(0)]);
    }

    #[test]
    fn gs_sub_quota_rejects_by_channel_preference() {
        // both want channel 0; channel 0 prefers pair 1 (lower gain to the BS)
        let inst = InstanceBuilder::new(cell(2, 2))
            .own(0, 0, 1e-6)
            .own(0, 1, 1e-6)
            .tx_to_bs(0, 0, 5e-12)
            .build()
            .unwrap();
        let m = gs_initialize_with_quota(&inst, 1);
        assert_eq!(m.assignment(), &[Some(1), Some(0)]);
        // total capacity below D leaves someone out
        let one = InstanceBuilder::new(cell(1, 2)).build().unwrap();
        let m = gs_initialize_with_quota(&one, 1);
        assert_eq!(m.assignment(), &[Some(0), None]);
    }

    #[test]
    fn gs_matches_everyone() {
        for seed in 0..20 {
            let inst = generate_instance(&cell(4, 10), seed).unwrap();
            assert!(gs_initialize(&inst).is_complete());
        }
    }

    #[test]
    fn utility_sole_occupant() {
        let inst = InstanceBuilder::new(cell(1, 1)).build().unwrap();
        let m = Matching::from_channels(&[0], 1).unwrap();
        let u = d2d_utility(&m, 0, &inst).value().unwrap();
        let expected = (3.2e4f64).ln() - 6e6 * 0.02 * 1e-12 - 1.0;
        assert_relative_eq!(u, expected, max_relative = 1e-14);
        assert_relative_eq!(u, 9.3734, epsilon = 1e-4);
    }

    #[test]
    fn unmatched_utility_is_bottom() {
        let inst = InstanceBuilder::new(cell(1, 2)).build().unwrap();
        let m = Matching::new(vec![None, Some(0)], 1).unwrap();
        let u = d2d_utility(&m, 0, &inst);
        assert_eq!(u, Utility::Unmatched);
        assert!(u < Utility::Value(f64::MIN));
        assert!(u < d2d_utility(&m, 1, &inst));
    }

    #[test]
    fn co_channel_pair_costs_symmetric_cross_gain() {
        let g = 1e-9;
        let inst = InstanceBuilder::new(cell(2, 2))
            .all_cross(g)
            .build()
            .unwrap();
        let alone = Matching::from_channels(&[0, 1], 2).unwrap();
        let shared = Matching::from_channels(&[0, 0], 2).unwrap();
        let drop = d2d_utility(&alone, 0, &inst).value().unwrap()
            - d2d_utility(&shared, 0, &inst).value().unwrap();
        assert_relative_eq!(drop, 6e6 * 0.02 * g, max_relative = 1e-6);
    }

    #[test]
    fn channel_utility_hinge() {
        // P_m h / Q = 0.02 * h / Q; pick Q = 0.02 * 1e-12 so each member adds h/1e-12
        let q = 0.02 * 1e-12;
        let base = InstanceBuilder::new(cell(1, 2)).budget(0, q);
        let both = Matching::from_channels(&[0, 0], 1).unwrap();

        let inst = base
            .clone()
            .tx_to_bs(0, 0, 0.5e-12)
            .tx_to_bs(0, 1, 0.3e-12)
            .build()
            .unwrap();
        assert_relative_eq!(channel_utility(&both, 0, &inst), 2.0, max_relative = 1e-12);

        let inst = base
            .tx_to_bs(0, 0, 0.75e-12)
            .tx_to_bs(0, 1, 0.75e-12)
            .build()
            .unwrap();
        assert_relative_eq!(channel_utility(&both, 0, &inst), 1.5, max_relative = 1e-12);

        let empty = Matching::empty(2, 1);
        assert_eq!(channel_utility(&empty, 0, &inst), 0.0);
    }

    #[test]
    fn potential_single_pair() {
        let inst = InstanceBuilder::new(cell(1, 1))
            .tx_to_bs(0, 0, 3e-10)
            .build()
            .unwrap();
        let m = Matching::from_channels(&[0], 1).unwrap();
        let phi = (3.2e4f64).ln() - 6e6 * 0.02 * 1e-12;
        let load = 0.02 * 3e-10 / inst.budget(0);
        let expected = phi - (load - 1.0).max(0.0);
        assert!(load > 1.0);
        assert_relative_eq!(
            potential(&m, &inst).unwrap(),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn potential_separate_channels_add() {
        let inst = generate_instance(&cell(2, 2), 8).unwrap();
        let m = Matching::from_channels(&[0, 1], 2).unwrap();
        let solo =
            |d: usize, k: usize| gain_term(d, k, &[], &inst) - violation_cost(k, &[d], &inst);
        assert_relative_eq!(
            potential(&m, &inst).unwrap(),
            solo(0, 0) + solo(1, 1),
            max_relative = 1e-14
        );
    }

    #[test]
    fn potential_requires_complete_matching() {
        let inst = InstanceBuilder::new(cell(1, 2)).build().unwrap();
        let m = Matching::new(vec![Some(0), None], 1).unwrap();
        assert!(matches!(potential(&m, &inst), Err(Error::Unmatched(1))));
    }

    #[test]
    fn self_swap_not_approved() {
        let inst = generate_instance(&cell(2, 3), 1).unwrap();
        let m = Matching::from_channels(&[0, 0, 1], 2).unwrap();
        assert!(!is_approved_swap(&m, 0, SwapPartner::Pair(0), 0, &inst).unwrap());
        assert!(!is_approved_swap(&m, 0, SwapPartner::Pair(1), 0, &inst).unwrap());
        assert!(!is_approved_swap(&m, 0, SwapPartner::Hole, 0, &inst).unwrap());
    }

    fn hole_move_instance() -> NetworkInstance {
        // one pair, channel 1 has the stronger own link; same h everywhere
        InstanceBuilder::new(cell(2, 1))
            .own(1, 0, 4e-7)
            .build()
            .unwrap()
    }

    #[test]
    fn profitable_hole_move() {
        let inst = hole_move_instance();
        let m = Matching::from_channels(&[0], 2).unwrap();
        let d = swap_deltas(&m, 0, SwapPartner::Hole, 1, &inst).unwrap();
        assert_relative_eq!(d.pair_s, (4e-7f64 / 1.6e-7).ln(), max_relative = 1e-12);
        assert_eq!(d.pair_t, 0.0);
        assert_eq!(d.channels, 0.0);
        assert!(is_approved_swap(&m, 0, SwapPartner::Hole, 1, &inst).unwrap());
        assert!(!is_strongly_swap_stable(&m, &inst).unwrap());
        let moved = Matching::from_channels(&[1], 2).unwrap();
        assert!(is_strongly_swap_stable(&moved, &inst).unwrap());
    }

    #[test]
    fn swap_rejected_by_channel_side() {
        // s=0 on ch0, t=1 on ch1; each prefers the other's channel, but s is
        // loud towards the BS on ch1 and xi2 is large
        let mut p = cell(2, 2);
        p.xi2 = 100.0;
        let inst = InstanceBuilder::new(p)
            .own(1, 0, 4e-7)
            .own(0, 1, 4e-7)
            .tx_to_bs(1, 0, 1e-9)
            .build()
            .unwrap();
        let m = Matching::from_channels(&[0, 1], 2).unwrap();
        let d = swap_deltas(&m, 0, SwapPartner::Pair(1), 1, &inst).unwrap();
        assert!(
            d.pair_s > 0.0 && d.pair_t > 0.0 && d.channels < 0.0,
            "{d:?}"
        );
        assert!(!is_approved_swap(&m, 0, SwapPartner::Pair(1), 1, &inst).unwrap());
    }

    #[test]
    fn swap_errors() {
        let inst = generate_instance(&cell(2, 3), 1).unwrap();
        let m = Matching::new(vec![None, Some(0), Some(1)], 2).unwrap();
        assert!(matches!(
            is_approved_swap(&m, 0, SwapPartner::Hole, 1, &inst),
            Err(Error::Unmatched(0))
        ));
        assert!(is_approved_swap(&m, 1, SwapPartner::Pair(2), 0, &inst).is_err());
    }

    #[test]
    fn stable_input_is_untouched() {
        let inst = hole_move_instance();
        let m = Matching::from_channels(&[1], 2).unwrap();
        let (out, swaps) = run_swap_phase(m.clone(), &inst).unwrap();
        assert_eq!(out, m);
        assert_eq!(swaps, 0);
    }

    #[test]
    fn mutual_interferers_separate() {
        let inst = InstanceBuilder::new(cell(2, 2))
            .all_cross(1e-5)
            .build()
            .unwrap();
        let together = Matching::from_channels(&[0, 0], 2).unwrap();
        assert!(!is_strongly_swap_stable(&together, &inst).unwrap());
        let (out, swaps) = run_swap_phase(together, &inst).unwrap();
        assert_eq!(swaps, 1);
        assert_ne!(out.channel_of(0), out.channel_of(1));
        assert!(is_strongly_swap_stable(&out, &inst).unwrap());
    }

    #[test]
    fn single_channel_is_trivially_stable() {
        let inst = generate_instance(&cell(1, 5), 2).unwrap();
        let (m, swaps) = allocate_channels(&inst).unwrap();
        assert_eq!(swaps, 0);
        assert!(m.assignment().iter().all(|&k| k == Some(0)));
        let one = InstanceBuilder::new(cell(1, 1)).build().unwrap();
        assert!(is_strongly_swap_stable(&Matching::from_channels(&[0], 1).unwrap(), &one).unwrap());
    }

    #[test]
    fn allocation_is_deterministic_and_stable() {
        for seed in 0..10 {
            let inst = generate_instance(&cell(4, 10), seed).unwrap();
            let (a, sa) = allocate_channels(&inst).unwrap();
            let (b, sb) = allocate_channels(&inst).unwrap();
            assert_eq!((a.clone(), sa), (b, sb));
            assert!(is_strongly_swap_stable(&a, &inst).unwrap());
            assert!(sa <= 10_000);
        }
    }

    #[test]
    fn swap_phase_never_lowers_potential() {
        for seed in 0..10 {
            let inst = generate_instance(&cell(3, 6), seed).unwrap();
            let start = gs_initialize(&inst);
            let phi0 = potential(&start, &inst).unwrap();
            let (end, swaps) = run_swap_phase(start, &inst).unwrap();
            let phi1 = potential(&end, &inst).unwrap();
            if swaps > 0 {
                assert!(phi1 > phi0);
            } else {
                assert_eq!(phi1, phi0);
            }
        }
    }

    #[test]
    fn swap_deltas_match_utility_differences() {
        let inst = generate_instance(&cell(3, 6), 4).unwrap();
        let m = Matching::from_channels(&[0, 0, 1, 1, 2, 0], 3).unwrap();
        let (s, t, n) = (1, 3, 1);
        let after = apply_swap(&m, s, SwapPartner::Pair(t), n);
        let d = swap_deltas(&m, s, SwapPartner::Pair(t), n, &inst).unwrap();
        let du = |x: usize| {
            d2d_utility(&after, x, &inst).value().unwrap()
                - d2d_utility(&m, x, &inst).value().unwrap()
        };
        assert_relative_eq!(d.pair_s, du(s), epsilon = 1e-12);
        assert_relative_eq!(d.pair_t, du(t), epsilon = 1e-12);
        let cs = |mu: &Matching| channel_utility(mu, 0, &inst) + channel_utility(mu, 1, &inst);
        assert_relative_eq!(d.channels, cs(&after) - cs(&m), epsilon = 1e-12);
    }
}
