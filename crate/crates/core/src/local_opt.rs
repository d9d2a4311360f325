//! Local maximisation of a channel's D2D sum rate under the power box and
//! the interference budget, by monotone projected gradient ascent with
//! Barzilai-Borwein steps and Armijo backtracking, from several starts.
//!
//! Work is done in normalised powers `x = p / P_m`, so the feasible set is
//! `{0 <= x <= 1, a.x <= 1}` with `a_d = P_m h_d / Q_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::NetworkInstance;
use crate::power::{bisect_price, default_epsilon};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptOptions {
    pub max_iters: usize,
    /// Stop once `|x - P(x + grad)|_inf` falls below this.
    pub tol: f64,
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for LocalOptOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-9,
            random_starts: 3,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOptResult {
    /// Powers in watts, aligned with `members`.
    pub powers: Vec<f64>,
    /// Channel sum rate at `powers`, in nats.
    pub objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Sum-rate objective of one channel in normalised coordinates.
struct ChannelRate {
    signal: Vec<f64>,
    floor: Vec<f64>,
    /// `cross[j][d]`: normalised gain from member j's transmitter to member d's receiver.
    cross: Vec<Vec<f64>>,
    load: Vec<f64>,
}

impl ChannelRate {
    fn new(k: usize, members: &[usize], inst: &NetworkInstance) -> Self {
        let p = inst.params();
        let pm = p.max_d2d_power_w;
        let q = inst.budget(k);
        Self {
            signal: members.iter().map(|&d| pm * inst.own_gain(k, d)).collect(),
            floor: members
                .iter()
                .map(|&d| p.noise_power_w + p.cu_power_w * inst.cu_to_rx_gain(k, d))
                .collect(),
            cross: members
                .iter()
                .map(|&j| {
                    members
                        .iter()
                        .map(|&d| {
                            if j == d {
                                0.0
                            } else {
                                pm * inst.cross_gain(k, j, d)
                            }
                        })
                        .collect()
                })
                .collect(),
            load: members
                .iter()
                .map(|&d| pm * inst.tx_to_bs_gain(k, d) / q)
                .collect(),
        }
    }

    fn len(&self) -> usize {
        self.signal.len()
    }

    fn interference(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|d| {
                self.floor[d]
                    + (0..self.len())
                        .map(|j| x[j] * self.cross[j][d])
                        .sum::<f64>()
            })
            .collect()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let base = self.interference(x);
        (0..self.len())
            .map(|d| (x[d] * self.signal[d] / base[d]).ln_1p())
            .sum()
    }

    /// `d/dx_j sum_d [ln(base_d + x_d s_d) - ln(base_d)]`.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let base = self.interference(x);
        let total: Vec<f64> = (0..self.len())
            .map(|d| base[d] + x[d] * self.signal[d])
            .collect();
        (0..self.len())
            .map(|j| {
                let own = self.signal[j] / total[j];
                let harm: f64 = (0..self.len())
                    .filter(|&d| d != j)
                    .map(|d| self.cross[j][d] * (1.0 / total[d] - 1.0 / base[d]))
                    .sum();
                own + harm
            })
            .collect()
    }

    /// Euclidean projection onto `{0 <= x <= 1, load.x <= 1}`.
    fn project(&self, y: &[f64]) -> Vec<f64> {
        let clamp = |lambda: f64| -> Vec<f64> {
            y.iter()
                .zip(&self.load)
                .map(|(&v, &a)| (v - lambda * a).clamp(0.0, 1.0))
                .collect()
        };
        let used = |x: &[f64]| x.iter().zip(&self.load).map(|(v, a)| v * a).sum::<f64>();
        let boxed = clamp(0.0);
        if used(&boxed) <= 1.0 {
            return boxed;
        }
        // used(clamp(lambda)) is piecewise linear and non-increasing; find the
        // piece that crosses 1 and interpolate on it
        let mut breaks: Vec<f64> = y
            .iter()
            .zip(&self.load)
            .flat_map(|(&v, &a)| [(v - 1.0) / a, v / a])
            .filter(|&l| l > 0.0)
            .collect();
        breaks.sort_by(f64::total_cmp);
        let mut lo = 0.0;
        let mut used_lo = used(&boxed);
        for &hi in &breaks {
            let used_hi = used(&clamp(hi));
            if used_hi <= 1.0 {
                let lambda = if used_lo > used_hi {
                    lo + (used_lo - 1.0) / (used_lo - used_hi) * (hi - lo)
                } else {
                    hi
                };
                let mut x = clamp(lambda);
                let u = used(&x);
                if u > 1.0 {
                    x.iter_mut().for_each(|v| *v /= u);
                }
                return x;
            }
            lo = hi;
            used_lo = used_hi;
        }
        vec![0.0; y.len()]
    }

    fn residual(&self, x: &[f64], g: &[f64]) -> f64 {
        let step: Vec<f64> = x.iter().zip(g).map(|(a, b)| a + b).collect();
        self.project(&step)
            .iter()
            .zip(x)
            .map(|(p, a)| (p - a).abs())
            .fold(0.0, f64::max)
    }
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
const MAX_STEP: f64 = 1e14;

struct Ascent {
    x: Vec<f64>,
    value: f64,
    residual: f64,
    converged: bool,
    iterations: usize,
}

fn ascend(f: &ChannelRate, start: Vec<f64>, opts: &LocalOptOptions) -> Ascent {
    let mut x = f.project(&start);
    let mut value = f.value(&x);
    let mut g = f.gradient(&x);
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut alpha = if gmax > 0.0 { 1.0 / gmax } else { 1.0 };
    let mut residual = f.residual(&x, &g);
    let mut iterations = 0;
    while iterations < opts.max_iters && residual > opts.tol {
        iterations += 1;
        let mut t = alpha;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + t * b).collect();
            let xn = f.project(&trial);
            let gain: f64 = g
                .iter()
                .zip(xn.iter().zip(&x))
                .map(|(gi, (n, o))| gi * (n - o))
                .sum();
            let vn = f.value(&xn);
            if vn >= value + ARMIJO * gain && vn >= value {
                break Some((xn, vn));
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((xn, vn)) = accepted else { break };
        let gn = f.gradient(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        // ascent: curvature shows up as s.y < 0
        alpha = if sy < 0.0 {
            (ss / -sy).clamp(MIN_STEP, MAX_STEP)
        } else {
            MAX_STEP.min(t * 4.0)
        };
        x = xn;
        value = vn;
        g = gn;
        residual = f.residual(&x, &g);
        if ss == 0.0 {
            break;
        }
    }
    Ascent {
        converged: residual <= opts.tol,
        x,
        value,
        residual,
        iterations,
    }
}

fn start_seed(base: u64, k: usize, members: &[usize]) -> u64 {
    members.iter().fold(
        base ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        |h, &d| {
            (h ^ d as u64)
                .wrapping_mul(0x1000_0000_01b3)
                .rotate_left(17)
        },
    )
}

/// Best local maximum of the channel sum rate among the starts: uniform full
/// power scaled into the budget, the priced (bisection) profile, and
/// `random_starts` random feasible points.
pub fn local_power_opt(
    members: &[usize],
    k: usize,
    inst: &NetworkInstance,
    opts: &LocalOptOptions,
) -> Result<LocalOptResult> {
    let pm = inst.params().max_d2d_power_w;
    if members.is_empty() {
        return Ok(LocalOptResult {
            powers: Vec::new(),
            objective: 0.0,
            kkt_residual: 0.0,
            converged: true,
            iterations: 0,
        });
    }
    let f = ChannelRate::new(k, members, inst);
    let n = members.len();
    let total_load: f64 = f.load.iter().sum();

    let mut starts = vec![vec![(1.0 / total_load).min(1.0); n]];
    let eps = default_epsilon(inst.params().bisect_epsilon, n, inst.budget(k));
    let priced = bisect_price(k, members, inst, eps)?;
    starts.push(priced.powers.iter().map(|p| p / pm).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(start_seed(opts.seed, k, members));
    for _ in 0..opts.random_starts {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let used: f64 = x.iter().zip(&f.load).map(|(a, b)| a * b).sum();
        if used > 1.0 {
            x.iter_mut().for_each(|v| *v /= used);
        }
        starts.push(x);
    }

    let mut best: Option<Ascent> = None;
    let mut iterations = 0;
    for s in starts {
        let run = ascend(&f, s, opts);
        iterations += run.iterations;
        if best.as_ref().is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    Ok(LocalOptResult {
        powers: best.x.iter().map(|v| (v * pm).clamp(0.0, pm)).collect(),
        objective: best.value,
        kkt_residual: best.residual,
        converged: best.converged,
        iterations,
    })
}
