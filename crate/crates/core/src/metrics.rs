//! Sum rates and the lower-bound audit of the matching utility.

use crate::error::{Error, Result};
use crate::matching::gain_term;
use crate::model::{Matching, NetworkInstance, PowerProfile};
use crate::power::sinr;

/// `sum ln(1 + sinr)` over `members` of channel `k`; silent pairs add nothing.
pub fn channel_sum_rate(
    k: usize,
    members: &[usize],
    powers: &[f64],
    inst: &NetworkInstance,
) -> f64 {
    members
        .iter()
        .filter(|&&d| powers[d] > 0.0)
        .map(|&d| sinr(d, k, powers, members, inst).ln_1p())
        .sum()
}

/// Sum rate of all D2D pairs, in nats.
pub fn d2d_sum_rate(mu: &Matching, powers: &PowerProfile, inst: &NetworkInstance) -> f64 {
    (0..inst.num_channels())
        .map(|k| channel_sum_rate(k, &mu.members(k), powers.as_slice(), inst))
        .sum()
}

/// Uplink sum rate of the cellular users with D2D interference at the BS, in nats.
pub fn cu_sum_rate(mu: &Matching, powers: &PowerProfile, inst: &NetworkInstance) -> f64 {
    let p = inst.params();
    (0..inst.num_channels())
        .map(|k| {
            let interference: f64 = mu
                .members(k)
                .iter()
                .map(|&d| powers.get(d) * inst.tx_to_bs_gain(k, d))
                .sum();
            (p.cu_power_w * inst.cu_to_bs_gain(k) / (p.noise_power_w + interference)).ln_1p()
        })
        .sum()
}

/// Per-pair additive constant `ln(w n0) + 1 - w n0` of the lower bound.
///
/// From `ln(1+x) > ln x` and `-ln y >= 1 - y` applied to
/// `y = w (n0 + q_c g_cu + sum P_m g_id)`:
/// `ln(1 + sinr_d) > ln(P_m g_dd / n0) + ln(w n0) + 1 - w n0 - w (q_c g_cu + sum_i P_m g_id)`.
/// Summed over pairs, the incoming cross terms equal the symmetrised ones of
/// the matching gain, so the right side is `sum phi_d + D * constant`.
pub fn lemma1_constant(w: f64, noise_w: f64) -> f64 {
    (w * noise_w).ln() + 1.0 - w * noise_w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundAudit {
    /// `sum phi_d + D * constant`.
    pub lhs: f64,
    /// D2D sum rate with every pair at full power.
    pub rhs: f64,
    pub holds: bool,
}

/// Compares the summed matching gains (plus constant) against the full-power sum rate.
pub fn lemma1_audit(mu: &Matching, inst: &NetworkInstance) -> Result<LowerBoundAudit> {
    mu.check_dims(inst)?;
    if let Some(d) = mu.first_unmatched() {
        return Err(Error::Unmatched(d));
    }
    let p = inst.params();
    let full = PowerProfile::new(vec![p.max_d2d_power_w; inst.num_d2d()], p.max_d2d_power_w)?;
    let gains: f64 = (0..inst.num_channels())
        .map(|k| {
            let members = mu.members(k);
            members
                .iter()
                .map(|&d| gain_term(d, k, &members, inst))
                .sum::<f64>()
        })
        .sum();
    let lhs = gains + inst.num_d2d() as f64 * lemma1_constant(p.w_tradeoff, p.noise_power_w);
    let rhs = d2d_sum_rate(mu, &full, inst);
    Ok(LowerBoundAudit {
        lhs,
        rhs,
        holds: lhs < rhs,
    })
}
