//! Stage 2: per-channel power control through a virtual interference price.
//!
//! Given a price `c_k`, each pair's payoff `ln(sinr) - c_k h p` has the
//! dominant best response `min(P_m, 1/(c_k h))`. The base station bisects on
//! `c_k` until the induced interference meets the budget `Q_k`, which makes
//! the resulting profile Pareto optimal among budget-feasible profiles.

use crate::error::{Error, Result};
use crate::model::{Matching, NetworkInstance, PowerProfile, PriceResult};

/// Multiplier on `members / Q_k` for the initial upper price.
pub const PRICE_SAFETY: f64 = 2.0;

/// SINR of pair `d` on channel `k` among `members`, with powers indexed by pair.
pub fn sinr(d: usize, k: usize, powers: &[f64], members: &[usize], inst: &NetworkInstance) -> f64 {
    let p = inst.params();
    let interference: f64 = members
        .iter()
        .filter(|&&i| i != d)
        .map(|&i| powers[i] * inst.cross_gain(k, i, d))
        .sum();
    powers[d] * inst.own_gain(k, d)
        / (p.noise_power_w + p.cu_power_w * inst.cu_to_rx_gain(k, d) + interference)
}

/// `ln(sinr) - c h p`; `-inf` at zero power.
pub fn payoff(
    d: usize,
    powers: &[f64],
    price: f64,
    k: usize,
    members: &[usize],
    inst: &NetworkInstance,
) -> f64 {
    if powers[d] <= 0.0 {
        return f64::NEG_INFINITY;
    }
    sinr(d, k, powers, members, inst).ln() - price * inst.tx_to_bs_gain(k, d) * powers[d]
}

/// `min(p_max, 1/(c h))`, and `p_max` at zero price.
pub fn best_response(price: f64, h: f64, p_max: f64) -> f64 {
    if price <= 0.0 {
        p_max
    } else {
        (1.0 / (price * h)).min(p_max)
    }
}

/// A price at which the best responses of `members_count` pairs certainly
/// stay below `q`: each pair contributes at most `1/c` interference.
pub fn price_upper_bound(members_count: usize, q: f64, safety: f64) -> f64 {
    safety * members_count as f64 / q
}

/// Default final bracket width for a channel: `rel * members / Q_k`.
pub fn default_epsilon(rel: f64, members_count: usize, q: f64) -> f64 {
    rel * members_count as f64 / q
}

fn interference_at(price: f64, k: usize, members: &[usize], inst: &NetworkInstance) -> f64 {
    let pm = inst.params().max_d2d_power_w;
    members
        .iter()
        .map(|&d| {
            let h = inst.tx_to_bs_gain(k, d);
            best_response(price, h, pm) * h
        })
        .sum()
}

/// Price search result for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPrice {
    pub price: f64,
    /// Powers aligned with the `members` slice.
    pub powers: Vec<f64>,
    pub iterations: usize,
    pub tight: bool,
}

/// Bisects the channel price until the bracket is narrower than `epsilon`.
///
/// If full power already fits the budget the price is zero. Otherwise the
/// returned price is the upper bracket end, whose profile always satisfies
/// the budget.
pub fn bisect_price(
    k: usize,
    members: &[usize],
    inst: &NetworkInstance,
    epsilon: f64,
) -> Result<ChannelPrice> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let pm = inst.params().max_d2d_power_w;
    let q = inst.budget(k);
    if interference_at(0.0, k, members, inst) <= q {
        return Ok(ChannelPrice {
            price: 0.0,
            powers: vec![pm; members.len()],
            iterations: 0,
            tight: false,
        });
    }
    let mut upper = price_upper_bound(members.len(), q, PRICE_SAFETY);
    let mut lower = 0.0;
    let mut iterations = 0;
    while upper - lower >= epsilon {
        let mid = 0.5 * (upper + lower);
        if interference_at(mid, k, members, inst) < q {
            upper = mid;
        } else {
            lower = mid;
        }
        iterations += 1;
    }
    let powers = members
        .iter()
        .map(|&d| best_response(upper, inst.tx_to_bs_gain(k, d), pm))
        .collect();
    Ok(ChannelPrice {
        price: upper,
        powers,
        iterations,
        tight: true,
    })
}

/// The budget binds to within `rel_tol`, or full power fits within it.
pub fn is_pareto_tight(
    powers: &[f64],
    k: usize,
    members: &[usize],
    inst: &NetworkInstance,
    rel_tol: f64,
) -> bool {
    let q = inst.budget(k);
    let pm = inst.params().max_d2d_power_w;
    let load: f64 = powers
        .iter()
        .zip(members)
        .map(|(&p, &d)| p * inst.tx_to_bs_gain(k, d))
        .sum();
    if (load - q).abs() <= rel_tol * q {
        return true;
    }
    powers.iter().all(|&p| p == pm) && load <= q
}

/// Runs the price search on every occupied channel. Unmatched pairs stay silent.
pub fn allocate_power(
    mu: &Matching,
    inst: &NetworkInstance,
) -> Result<(PowerProfile, PriceResult)> {
    mu.check_dims(inst)?;
    let rel = inst.params().bisect_epsilon;
    let mut powers = PowerProfile::zeros(inst.num_d2d());
    let mut prices = PriceResult::new(inst.num_channels());
    for k in 0..inst.num_channels() {
        let members = mu.members(k);
        if members.is_empty() {
            continue;
        }
        let eps = default_epsilon(rel, members.len(), inst.budget(k));
        let cp = bisect_price(k, &members, inst, eps)?;
        for (&d, &p) in members.iter().zip(&cp.powers) {
            powers.set(d, p);
        }
        prices.price[k] = cp.price;
        prices.iterations[k] = cp.iterations;
        prices.tight[k] = cp.tight;
    }
    Ok((powers, prices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SimParams;
    use crate::scenario::{generate_instance, InstanceBuilder};
    use approx::assert_relative_eq;

    fn single(h: f64, q: f64) -> NetworkInstance {
        InstanceBuilder::new(SimParams::with_counts(1, 1))
            .tx_to_bs(0, 0, h)
            .budget(0, q)
            .build()
            .unwrap()
    }

    #[test]
    fn sinr_examples() {
        let inst = InstanceBuilder::new(SimParams::with_counts(1, 2))
            .build()
            .unwrap();
        let p = [0.02, 0.0];
        assert_relative_eq!(
            sinr(0, 0, &p, &[0], &inst),
            3.2e-9 / 1.2e-13,
            max_relative = 1e-12
        );
        assert_eq!(sinr(1, 0, &p, &[0, 1], &inst), 0.0);
        let inst = InstanceBuilder::new(SimParams::with_counts(1, 2))
            .all_cross(1e-10)
            .build()
            .unwrap();
        let lo = sinr(0, 0, &[0.01, 0.005], &[0, 1], &inst);
        let hi = sinr(0, 0, &[0.01, 0.01], &[0, 1], &inst);
        assert!(hi < lo);
    }

    #[test]
    fn payoff_examples() {
        // own gain chosen so that sinr = 2000 at p = 0.01 with noise + CU = 1.2e-13
        let own = 2000.0 * 1.2e-13 / 0.01;
        let inst = InstanceBuilder::new(SimParams::with_counts(1, 1))
            .own(0, 0, own)
            .build()
            .unwrap();
        let v = payoff(0, &[0.01], 1e10, 0, &[0], &inst);
        assert_relative_eq!(v, 2000f64.ln() - 1e-4, max_relative = 1e-12);
        assert_relative_eq!(v, 7.6008, epsilon = 1e-4);
        assert_relative_eq!(
            payoff(0, &[0.01], 0.0, 0, &[0], &inst),
            2000f64.ln(),
            max_relative = 1e-12
        );
        let doubled = payoff(0, &[0.01], 2e10, 0, &[0], &inst);
        assert_relative_eq!(v - doubled, 1e10 * 1e-12 * 0.01, max_relative = 1e-6);
        assert_eq!(payoff(0, &[0.0], 1e10, 0, &[0], &inst), f64::NEG_INFINITY);
    }

    #[test]
    fn best_response_examples() {
        assert_relative_eq!(
            best_response(1000.0, 0.05, 0.02),
            0.02,
            max_relative = 1e-12
        );
        assert_relative_eq!(best_response(200.0, 1.0, 0.02), 0.005, max_relative = 1e-12);
        assert_eq!(best_response(0.0, 1e-12, 0.02), 0.02);
    }

    #[test]
    fn upper_bound_examples() {
        assert_relative_eq!(price_upper_bound(3, 1e-9, 2.0), 6e9, max_relative = 1e-12);
        assert_eq!(price_upper_bound(1, 1.0, 2.0), 2.0);
    }

    #[test]
    fn bisect_single_member_closed_form() {
        let inst = single(1e-10, 1e-12);
        let eps = default_epsilon(1e-13, 1, 1e-12);
        let cp = bisect_price(0, &[0], &inst, eps).unwrap();
        assert!(cp.tight);
        assert_relative_eq!(cp.powers[0], 0.01, max_relative = 1e-12);
        assert_relative_eq!(cp.price, 1e12, max_relative = 1e-12);
        assert!(cp.powers[0] * 1e-10 <= 1e-12);
    }

    #[test]
    fn bisect_unconstrained() {
        let inst = single(1e-10, 1e-2);
        let cp = bisect_price(0, &[0], &inst, 1.0).unwrap();
        assert_eq!(cp.price, 0.0);
        assert_eq!(cp.powers, vec![0.02]);
        assert_eq!(cp.iterations, 0);
        assert!(!cp.tight);
    }

    #[test]
    fn bisect_rejects_bad_epsilon() {
        let inst = single(1e-10, 1e-12);
        assert!(matches!(
            bisect_price(0, &[0], &inst, 0.0),
            Err(Error::InvalidEpsilon(_))
        ));
        assert!(bisect_price(0, &[0], &inst, -1.0).is_err());
    }

    #[test]
    fn bisect_iteration_count() {
        for seed in 0..20 {
            let inst = generate_instance(&SimParams::with_counts(1, 5), seed).unwrap();
            let members: Vec<usize> = (0..5).collect();
            let q = inst.budget(0);
            let eps = default_epsilon(1e-13, 5, q);
            let cp = bisect_price(0, &members, &inst, eps).unwrap();
            if cp.tight {
                let expected = (price_upper_bound(5, q, PRICE_SAFETY) / eps).log2().ceil() as usize;
                assert_eq!(cp.iterations, expected);
            }
        }
    }

    #[test]
    fn tightness_checks() {
        let inst = generate_instance(&SimParams::with_counts(1, 4), 9).unwrap();
        let members: Vec<usize> = (0..4).collect();
        let eps = default_epsilon(1e-13, 4, inst.budget(0));
        let cp = bisect_price(0, &members, &inst, eps).unwrap();
        assert!(is_pareto_tight(&cp.powers, 0, &members, &inst, 1e-6));
        assert!(!is_pareto_tight(&[0.0; 4], 0, &members, &inst, 1e-6));
        if cp.tight {
            let half: Vec<f64> = cp.powers.iter().map(|p| 0.5 * p).collect();
            assert!(!is_pareto_tight(&half, 0, &members, &inst, 1e-6));
        }
    }

    #[test]
    fn allocate_power_per_channel() {
        let inst = generate_instance(&SimParams::with_counts(3, 5), 2).unwrap();
        let mu = Matching::new(vec![Some(0), Some(0), None, Some(2), Some(0)], 3).unwrap();
        let (p, prices) = allocate_power(&mu, &inst).unwrap();
        assert_eq!(p.get(2), 0.0);
        assert_eq!(prices.price[1], 0.0);
        assert_eq!(prices.iterations[1], 0);
        assert!(!prices.tight[1]);
        for k in [0, 2] {
            let members = mu.members(k);
            let load: f64 = members
                .iter()
                .map(|&d| p.get(d) * inst.tx_to_bs_gain(k, d))
                .sum();
            assert!(load <= inst.budget(k) * (1.0 + 1e-12));
            let powers: Vec<f64> = members.iter().map(|&d| p.get(d)).collect();
            assert!(is_pareto_tight(&powers, k, &members, &inst, 1e-6));
        }
    }
}
