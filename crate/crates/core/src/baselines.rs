//! Comparison schemes: random and interference-minimising channel choice,
//! one-pair-per-channel (orthogonal) assignment, and exhaustive search.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::local_opt::{local_power_opt, LocalOptOptions};
use crate::model::{Matching, NetworkInstance, PowerProfile};
use crate::power::{bisect_price, default_epsilon};

/// Largest number of assignments the exhaustive search will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// Each pair on an independent uniformly random channel.
pub fn random_allocation(inst: &NetworkInstance, seed: u64) -> Matching {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nk = inst.num_channels();
    let channels: Vec<usize> = (0..inst.num_d2d())
        .map(|_| rng.random_range(0..nk))
        .collect();
    Matching::from_channels(&channels, nk).expect("channels drawn in range")
}

/// Each pair on the channel where its gain towards the BS is smallest (lowest
/// index on ties). With unbounded quotas this minimises `sum h P_m` globally.
pub fn interference_min_allocation(inst: &NetworkInstance) -> Matching {
    let channels: Vec<usize> = (0..inst.num_d2d())
        .map(|d| {
            (0..inst.num_channels())
                .reduce(|best, k| {
                    if inst.tx_to_bs_gain(k, d) < inst.tx_to_bs_gain(best, d) {
                        k
                    } else {
                        best
                    }
                })
                .expect("at least one channel")
        })
        .collect();
    Matching::from_channels(&channels, inst.num_channels()).expect("channels in range")
}

/// Rate of pair `d` alone on channel `k` at its priced single-member power.
pub fn solo_rate(d: usize, k: usize, inst: &NetworkInstance) -> Result<f64> {
    let p = inst.params();
    let eps = default_epsilon(p.bisect_epsilon, 1, inst.budget(k));
    let power = bisect_price(k, &[d], inst, eps)?.powers[0];
    let sinr =
        power * inst.own_gain(k, d) / (p.noise_power_w + p.cu_power_w * inst.cu_to_rx_gain(k, d));
    Ok(sinr.ln_1p())
}

/// Maximum-weight assignment of rows to columns (Hungarian method on the
/// square padding). Returns the column of every row, `None` for padding.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -weights[i][j]
        } else {
            0.0
        }
    };
    // 1-based potentials/augmenting-path formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for (j, &i) in col_owner.iter().enumerate().skip(1) {
        if (1..=rows).contains(&i) && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// At most one pair per channel: picks `min(K, D)` pairs and distinct
/// channels maximising the summed solo rates. Unpicked pairs stay unmatched.
pub fn orthogonal_allocation(inst: &NetworkInstance) -> Result<Matching> {
    let weights = (0..inst.num_d2d())
        .map(|d| {
            (0..inst.num_channels())
                .map(|k| solo_rate(d, k, inst))
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Matching::new(max_weight_assignment(&weights), inst.num_channels())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub matching: Matching,
    pub powers: PowerProfile,
    /// D2D sum rate, in nats.
    pub objective: f64,
    /// Whether every channel solve of the winning assignment converged.
    pub converged: bool,
    pub assignments: u64,
}

/// `K^D`, or an error when it exceeds [`BRUTE_FORCE_LIMIT`].
pub fn assignment_count(num_channels: usize, num_d2d: usize) -> Result<u64> {
    let count = u32::try_from(num_d2d)
        .ok()
        .and_then(|d| (num_channels as u64).checked_pow(d));
    match count {
        Some(n) if n <= BRUTE_FORCE_LIMIT => Ok(n),
        _ => Err(Error::InstanceTooLarge {
            channels: num_channels,
            pairs: num_d2d,
            limit: BRUTE_FORCE_LIMIT,
        }),
    }
}

#[derive(Clone)]
struct ChannelSolve {
    powers: Vec<f64>,
    objective: f64,
    converged: bool,
}

/// Enumerates every assignment of pairs to channels, solves each channel's
/// power problem locally and keeps the assignment with the highest D2D sum
/// rate (first in enumeration order on ties).
pub fn brute_force_allocation(
    inst: &NetworkInstance,
    opts: &LocalOptOptions,
) -> Result<BruteForceResult> {
    let (nk, nd) = (inst.num_channels(), inst.num_d2d());
    let total = assignment_count(nk, nd)?;
    let mut memo: HashMap<(usize, Vec<usize>), ChannelSolve> = HashMap::new();
    let mut channels = vec![0usize; nd];
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..total {
        let mut objective = 0.0;
        for k in 0..nk {
            let members: Vec<usize> = (0..nd).filter(|&d| channels[d] == k).collect();
            if members.is_empty() {
                continue;
            }
            let key = (k, members);
            let solve = match memo.get(&key) {
                Some(s) => s.objective,
                None => {
                    let r = local_power_opt(&key.1, k, inst, opts)?;
                    let s = ChannelSolve {
                        powers: r.powers,
                        objective: r.objective,
                        converged: r.converged,
                    };
                    let v = s.objective;
                    memo.insert(key, s);
                    v
                }
            };
            objective += solve;
        }
        if best.as_ref().is_none_or(|(b, _)| objective > *b) {
            best = Some((objective, channels.clone()));
        }
        // next assignment, base-K counter with pair 0 least significant
        for c in channels.iter_mut() {
            *c += 1;
            if *c < nk {
                break;
            }
            *c = 0;
        }
    }
    let (objective, chosen) = best.expect("at least one assignment");
    let matching = Matching::from_channels(&chosen, nk)?;
    let mut powers = vec![0.0; nd];
    let mut converged = true;
    for k in 0..nk {
        let members = matching.members(k);
        if let Some(s) = memo.get(&(k, members.clone())) {
            converged &= s.converged;
            for (&d, &p) in members.iter().zip(&s.powers) {
                powers[d] = p;
            }
        }
    }
    Ok(BruteForceResult {
        matching,
        powers: PowerProfile::new(powers, inst.params().max_d2d_power_w)?,
        objective,
        converged,
        assignments: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::d2d_sum_rate;
    use crate::model::SimParams;
    use crate::scenario::{generate_instance, InstanceBuilder};

    #[test]
    fn random_single_channel_and_determinism() {
        let inst = generate_instance(&SimParams::with_counts(1, 6), 1).unwrap();
        assert!(random_allocation(&inst, 3)
            .assignment()
            .iter()
            .all(|&k| k == Some(0)));
        let inst = generate_instance(&SimParams::with_counts(4, 10), 1).unwrap();
        assert_eq!(random_allocation(&inst, 9), random_allocation(&inst, 9));
    }

    #[test]
    fn random_occupancy_is_binomial() {
        let (nk, nd, draws) = (4usize, 10usize, 10_000u64);
        let inst = generate_instance(&SimParams::with_counts(nk, nd), 1).unwrap();
        let mut occ = vec![0.0; nk];
        for s in 0..draws {
            let m = random_allocation(&inst, s);
            for (k, o) in occ.iter_mut().enumerate() {
                *o += m.occupancy(k) as f64;
            }
        }
        let mean_expected = nd as f64 / nk as f64;
        let p = 1.0 / nk as f64;
        let sigma_of_mean = (nd as f64 * p * (1.0 - p) / draws as f64).sqrt();
        for o in occ {
            let mean = o / draws as f64;
            assert!(
                (mean - mean_expected).abs() <= 3.0 * sigma_of_mean,
                "{mean}"
            );
        }
    }

    #[test]
    fn interference_min_examples() {
        let inst = InstanceBuilder::new(SimParams::with_counts(2, 2))
            .tx_to_bs(0, 0, 1e-10)
            .tx_to_bs(1, 0, 5e-10)
            .tx_to_bs(0, 1, 7e-10)
            .tx_to_bs(1, 1, 5e-10)
            .build()
            .unwrap();
        assert_eq!(
            interference_min_allocation(&inst).assignment(),
            &[Some(0), Some(1)]
        );
        let tie = InstanceBuilder::new(SimParams::with_counts(3, 1))
            .build()
            .unwrap();
        assert_eq!(interference_min_allocation(&tie).assignment(), &[Some(0)]);
    }

    #[test]
    fn interference_min_beats_random_matchings() {
        let inst = generate_instance(&SimParams::with_counts(4, 10), 5).unwrap();
        let total = |m: &Matching| -> f64 {
            (0..10)
                .map(|d| inst.tx_to_bs_gain(m.channel_of(d).unwrap(), d) * 0.02)
                .sum()
        };
        let best = total(&interference_min_allocation(&inst));
        for s in 0..1000 {
            assert!(best <= total(&random_allocation(&inst, s)));
        }
    }

    fn brute_assignment(weights: &[Vec<f64>]) -> f64 {
        // every injective partial map rows -> cols
        fn go(r: usize, used: &mut Vec<bool>, w: &[Vec<f64>]) -> f64 {
            if r == w.len() {
                return 0.0;
            }
            let mut best = go(r + 1, used, w);
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    best = best.max(w[r][c] + go(r + 1, used, w));
                    used[c] = false;
                }
            }
            best
        }
        go(0, &mut vec![false; weights[0].len()], weights)
    }

    #[test]
    fn hungarian_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (rows, cols) in [(1, 1), (3, 3), (5, 2), (2, 5), (6, 4), (4, 6)] {
            for _ in 0..50 {
                let w: Vec<Vec<f64>> = (0..rows)
                    .map(|_| (0..cols).map(|_| rng.random_range(0.1..10.0)).collect())
                    .collect();
                let a = max_weight_assignment(&w);
                let mut seen = vec![false; cols];
                let mut total = 0.0;
                for (r, c) in a.iter().enumerate() {
                    if let Some(c) = *c {
                        assert!(!seen[c]);
                        seen[c] = true;
                        total += w[r][c];
                    }
                }
                assert_eq!(a.iter().flatten().count(), rows.min(cols));
                assert!((total - brute_assignment(&w)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn orthogonal_single_pair_takes_best_channel() {
        let inst = InstanceBuilder::new(SimParams::with_counts(2, 1))
            .own(1, 0, 5e-7)
            .build()
            .unwrap();
        assert_eq!(
            orthogonal_allocation(&inst).unwrap().assignment(),
            &[Some(1)]
        );
    }

    #[test]
    fn orthogonal_diagonal_dominance() {
        let mut b = InstanceBuilder::new(SimParams::with_counts(3, 3));
        for d in 0..3 {
            b = b.own(d, d, 1e-5);
        }
        let inst = b
            .budget(0, 1.0)
            .budget(1, 1.0)
            .budget(2, 1.0)
            .build()
            .unwrap();
        assert_eq!(
            orthogonal_allocation(&inst).unwrap().assignment(),
            &[Some(0), Some(1), Some(2)]
        );
    }

    #[test]
    fn orthogonal_never_shares() {
        for seed in 0..10 {
            let inst = generate_instance(&SimParams::with_counts(4, 10), seed).unwrap();
            let m = orthogonal_allocation(&inst).unwrap();
            assert!((0..4).all(|k| m.occupancy(k) == 1));
            assert_eq!(m.assignment().iter().flatten().count(), 4);
        }
    }

    #[test]
    fn brute_force_guard() {
        let inst = generate_instance(&SimParams::with_counts(4, 10), 1).unwrap();
        let err = brute_force_allocation(&inst, &LocalOptOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::InstanceTooLarge {
                channels: 4,
                pairs: 10,
                ..
            }
        ));
        assert!(err.to_string().contains("4^10"));
        assert_eq!(assignment_count(2, 6).unwrap(), 64);
        assert_eq!(assignment_count(1, 500).unwrap(), 1);
    }

    #[test]
    fn brute_force_single_channel_is_power_stage() {
        let inst = generate_instance(&SimParams::with_counts(1, 3), 2).unwrap();
        let opts = LocalOptOptions::default();
        let r = brute_force_allocation(&inst, &opts).unwrap();
        assert_eq!(r.assignments, 1);
        let direct = local_power_opt(&[0, 1, 2], 0, &inst, &opts).unwrap();
        assert_eq!(r.objective, direct.objective);
        assert!((d2d_sum_rate(&r.matching, &r.powers, &inst) - r.objective).abs() < 1e-12);
    }

    #[test]
    fn brute_force_counts_assignments() {
        let inst = generate_instance(&SimParams::with_counts(2, 2), 2).unwrap();
        let r = brute_force_allocation(&inst, &LocalOptOptions::default()).unwrap();
        assert_eq!(r.assignments, 4);
        assert!(r.matching.is_complete());
    }
}
