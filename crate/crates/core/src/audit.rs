//! Invariant suites over random instances: potential ascent, swap stability,
//! price equilibrium, Pareto tightness and the utility lower bound.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::random_allocation;
use crate::error::Result;
use crate::experiment::derive_seed;
use crate::matching::{
    allocate_channels, gs_initialize, is_strongly_swap_stable, run_swap_phase_traced,
};
use crate::metrics::lemma1_audit;
use crate::model::{NetworkInstance, SimParams};
use crate::power::{bisect_price, default_epsilon, payoff, sinr};
use crate::scenario::generate_instance;

pub const IDENTITY_TOL: f64 = 1e-9;
pub const NE_TOL: f64 = 1e-9;
pub const NE_GRID_POINTS: usize = 1001;
pub const TIGHTNESS_TOL: f64 = 1e-6;
pub const DOMINANCE_SLACK: f64 = 1e-12;
pub const PERTURBATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub suite: &'static str,
    /// Number of individual checks made.
    pub checked: usize,
    pub failures: usize,
    /// Largest observed value of the suite's violation measure.
    pub worst: f64,
}

impl AuditReport {
    fn new(suite: &'static str) -> Self {
        Self {
            suite,
            checked: 0,
            failures: 0,
            worst: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, measure: f64, ok: bool) {
        self.checked += 1;
        self.worst = self.worst.max(measure);
        if !ok {
            self.failures += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} ({} checks, {} failures, worst {:e})",
            self.suite,
            if self.passed() { "PASS" } else { "FAIL" },
            self.checked,
            self.failures,
            self.worst
        )
    }
}

fn instances(
    params: &SimParams,
    count: usize,
    master: u64,
) -> impl Iterator<Item = Result<NetworkInstance>> + '_ {
    (0..count as u64).map(move |i| generate_instance(params, derive_seed(master, i)))
}

/// Every executed swap raises the potential, and the summed utility deltas of
/// the four players equal the potential change. Worst: relative identity error.
pub fn audit_potential(params: &SimParams, count: usize, master: u64) -> Result<AuditReport> {
    let mut rep = AuditReport::new("potential");
    for inst in instances(params, count, master) {
        let inst = inst?;
        let mut err = None;
        run_swap_phase_traced(gs_initialize(&inst), &inst, |ev| {
            let before = crate::matching::potential(ev.before, &inst);
            let after = crate::matching::potential(ev.after, &inst);
            match (before, after) {
                (Ok(b), Ok(a)) => {
                    let scale = b.abs().max(a.abs()).max(1.0);
                    let rel = ((a - b) - ev.deltas.total()).abs() / scale;
                    rep.record(rel, rel <= IDENTITY_TOL && a > b);
                }
                (Err(e), _) | (_, Err(e)) => err = Some(e),
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(rep)
}

/// The Stage-1 result admits no approved swap. Worst: 1 for any unstable result.
pub fn audit_stability(params: &SimParams, count: usize, master: u64) -> Result<AuditReport> {
    let mut rep = AuditReport::new("stability");
    for inst in instances(params, count, master) {
        let inst = inst?;
        let (mu, _) = allocate_channels(&inst)?;
        let stable = is_strongly_swap_stable(&mu, &inst)?;
        rep.record(if stable { 0.0 } else { 1.0 }, stable);
    }
    Ok(rep)
}

/// No member of a priced channel gains more than [`NE_TOL`] by moving to any
/// point of a uniform power grid. Worst: largest payoff gain.
pub fn audit_nash(params: &SimParams, count: usize, master: u64) -> Result<AuditReport> {
    let mut rep = AuditReport::new("nash");
    let pm = params.max_d2d_power_w;
    for inst in instances(params, count, master) {
        let inst = inst?;
        let (mu, _) = allocate_channels(&inst)?;
        for k in 0..inst.num_channels() {
            let members = mu.members(k);
            if members.is_empty() {
                continue;
            }
            let eps = default_epsilon(params.bisect_epsilon, members.len(), inst.budget(k));
            let cp = bisect_price(k, &members, &inst, eps)?;
            let mut powers = vec![0.0; inst.num_d2d()];
            for (&d, &p) in members.iter().zip(&cp.powers) {
                powers[d] = p;
            }
            for &d in &members {
                let base = payoff(d, &powers, cp.price, k, &members, &inst);
                let mut trial = powers.clone();
                let mut gain = f64::NEG_INFINITY;
                for g in 0..NE_GRID_POINTS {
                    trial[d] = pm * g as f64 / (NE_GRID_POINTS - 1) as f64;
                    gain = gain.max(payoff(d, &trial, cp.price, k, &members, &inst) - base);
                }
                rep.record(gain, gain <= NE_TOL);
            }
        }
    }
    Ok(rep)
}

fn rates(powers: &[f64], k: usize, members: &[usize], inst: &NetworkInstance) -> Vec<f64> {
    members
        .iter()
        .map(|&d| sinr(d, k, powers, members, inst).ln_1p())
        .collect()
}

/// `a` Pareto-dominates `b` beyond `slack`.
pub fn dominates(a: &[f64], b: &[f64], slack: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| *x >= y - slack) && a.iter().zip(b).any(|(x, y)| *x > y + slack)
}

/// On budget-constrained channels the priced profile meets the budget to
/// [`TIGHTNESS_TOL`] and no random feasible perturbation dominates its rates.
/// Worst: largest relative budget gap.
pub fn audit_pareto(params: &SimParams, count: usize, master: u64) -> Result<AuditReport> {
    let mut rep = AuditReport::new("pareto");
    let pm = params.max_d2d_power_w;
    for (i, inst) in instances(params, count, master).enumerate() {
        let inst = inst?;
        let (mu, _) = allocate_channels(&inst)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master ^ 0xa5a5, i as u64));
        for k in 0..inst.num_channels() {
            let members = mu.members(k);
            if members.is_empty() {
                continue;
            }
            let q = inst.budget(k);
            let eps = default_epsilon(params.bisect_epsilon, members.len(), q);
            let cp = bisect_price(k, &members, &inst, eps)?;
            if !cp.tight {
                continue;
            }
            let mut powers = vec![0.0; inst.num_d2d()];
            for (&d, &p) in members.iter().zip(&cp.powers) {
                powers[d] = p;
            }
            let load = |p: &[f64]| -> f64 {
                members
                    .iter()
                    .map(|&d| p[d] * inst.tx_to_bs_gain(k, d))
                    .sum()
            };
            let gap = (load(&powers) - q).abs() / q;
            let base = rates(&powers, k, &members, &inst);
            let mut dominated = false;
            for _ in 0..PERTURBATIONS {
                let scale = 10f64.powf(rng.random_range(-6.0..-0.3));
                let mut trial = powers.clone();
                for &d in &members {
                    trial[d] =
                        (trial[d] * (1.0 + scale * rng.random_range(-1.0..1.0))).clamp(0.0, pm);
                }
                let l = load(&trial);
                if l > q {
                    for &d in &members {
                        trial[d] *= q / l;
                    }
                }
                if dominates(&rates(&trial, k, &members, &inst), &base, DOMINANCE_SLACK) {
                    dominated = true;
                }
            }
            rep.record(gap, gap <= TIGHTNESS_TOL && !dominated);
        }
    }
    Ok(rep)
}

/// The summed matching gains plus the constant stay below the full-power
/// D2D sum rate on random complete matchings. Worst: largest `lhs - rhs`.
pub fn audit_lemma1(params: &SimParams, count: usize, master: u64) -> Result<AuditReport> {
    let mut rep = AuditReport::new("lemma1");
    for (i, inst) in instances(params, count, master).enumerate() {
        let inst = inst?;
        let mu = random_allocation(&inst, derive_seed(master ^ 0x5a5a, i as u64));
        let a = lemma1_audit(&mu, &inst)?;
        rep.record(a.lhs - a.rhs, a.holds);
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Potential,
    Stability,
    Nash,
    Pareto,
    Lemma1,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Potential,
        Suite::Stability,
        Suite::Nash,
        Suite::Pareto,
        Suite::Lemma1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Potential => "potential",
            Suite::Stability => "stability",
            Suite::Nash => "nash",
            Suite::Pareto => "pareto",
            Suite::Lemma1 => "lemma1",
        }
    }

    pub fn run(self, params: &SimParams, count: usize, master: u64) -> Result<AuditReport> {
        match self {
            Suite::Potential => audit_potential(params, count, master),
            Suite::Stability => audit_stability(params, count, master),
            Suite::Nash => audit_nash(params, count, master),
            Suite::Pareto => audit_pareto(params, count, master),
            Suite::Lemma1 => audit_lemma1(params, count, master),
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| crate::error::Error::Config(format!("unknown audit suite '{s}'")))
    }
}
