//! Random network draws: uniform drops in a single cell, distance path loss
//! and exponential (Rayleigh power) fading.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::{Gains, NetworkInstance, SimParams};

pub type Point = (f64, f64);

/// Node positions of one draw. The base station sits at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub cu: Vec<Point>,
    pub d2d_tx: Vec<Point>,
    pub d2d_rx: Vec<Point>,
}

impl Placement {
    pub const BS: Point = (0.0, 0.0);
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// `beta * distance^-eta`.
pub fn path_gain(distance_m: f64, eta: f64, beta: f64) -> Result<f64> {
    if distance_m.is_nan() || distance_m <= 0.0 {
        return Err(Error::NonPositiveDistance(distance_m));
    }
    Ok(beta * distance_m.powf(-eta))
}

pub fn dbm_to_watts(x_dbm: f64) -> f64 {
    10f64.powf((x_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(x_w: f64) -> f64 {
    10.0 * x_w.log10() + 30.0
}

pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

/// Interference tolerance of a channel: `rho * q_c * g_cu_bs`, with `rho`
/// the linear value of `tolerance_rel_db`.
pub fn interference_budget(params: &SimParams, cu_to_bs_gain: f64) -> f64 {
    db_to_linear(params.tolerance_rel_db) * params.cu_power_w * cu_to_bs_gain
}

fn uniform_in_disk<R: Rng>(rng: &mut R, radius: f64) -> Point {
    loop {
        let r = radius * rng.random::<f64>().sqrt();
        let a = std::f64::consts::TAU * rng.random::<f64>();
        // the BS is at the origin; a coincident drop would have zero distance
        if r > 0.0 {
            return (r * a.cos(), r * a.sin());
        }
    }
}

/// Drops CUs and D2D transmitters uniformly in the cell; each D2D receiver is
/// placed at exactly the link length in a uniform random direction.
pub fn generate_placement<R: Rng>(params: &SimParams, rng: &mut R) -> Placement {
    let cu = (0..params.num_channels)
        .map(|_| uniform_in_disk(rng, params.cell_radius_m))
        .collect();
    let mut d2d_tx = Vec::with_capacity(params.num_d2d);
    let mut d2d_rx = Vec::with_capacity(params.num_d2d);
    for _ in 0..params.num_d2d {
        let tx = uniform_in_disk(rng, params.cell_radius_m);
        let a = std::f64::consts::TAU * rng.random::<f64>();
        let l = params.d2d_link_length_m;
        d2d_tx.push(tx);
        d2d_rx.push((tx.0 + l * a.cos(), tx.1 + l * a.sin()));
    }
    Placement { cu, d2d_tx, d2d_rx }
}

fn has_coincident_nodes(p: &Placement) -> bool {
    let tx_hits = p.d2d_tx.iter().any(|&t| {
        distance(t, Placement::BS) == 0.0 || p.d2d_rx.iter().any(|&r| distance(t, r) == 0.0)
    });
    tx_hits
        || p.cu
            .iter()
            .any(|&c| p.d2d_rx.iter().any(|&r| distance(c, r) == 0.0))
}

/// Computes every link gain of a fixed placement, drawing an independent
/// Exp(1) fading coefficient per link and per channel.
pub fn gains_for_placement<R: Rng>(
    params: &SimParams,
    place: &Placement,
    rng: &mut R,
) -> Result<Gains> {
    let (nk, nd) = (params.num_channels, params.num_d2d);
    let eta = params.pathloss_exp;
    let mut fade = |dist: f64| -> Result<f64> {
        let beta: f64 = rng.sample(Exp1);
        path_gain(dist, eta, beta)
    };
    let mut gains = Gains {
        own: vec![vec![0.0; nd]; nk],
        cross: vec![vec![vec![0.0; nd]; nd]; nk],
        cu_to_rx: vec![vec![0.0; nd]; nk],
        tx_to_bs: vec![vec![0.0; nd]; nk],
        cu_to_bs: vec![0.0; nk],
        budget: vec![0.0; nk],
    };
    for k in 0..nk {
        let cu = place.cu[k];
        gains.cu_to_bs[k] = fade(distance(cu, Placement::BS))?;
        gains.budget[k] = interference_budget(params, gains.cu_to_bs[k]);
        for d in 0..nd {
            gains.own[k][d] = fade(distance(place.d2d_tx[d], place.d2d_rx[d]))?;
            gains.cu_to_rx[k][d] = fade(distance(cu, place.d2d_rx[d]))?;
            gains.tx_to_bs[k][d] = fade(distance(place.d2d_tx[d], Placement::BS))?;
            for i in 0..nd {
                if i != d {
                    gains.cross[k][i][d] = fade(distance(place.d2d_tx[i], place.d2d_rx[d]))?;
                }
            }
        }
    }
    Ok(gains)
}

/// Draws one network instance; deterministic in `(params, seed)`.
pub fn generate_instance(params: &SimParams, seed: u64) -> Result<NetworkInstance> {
    generate_instance_with_placement(params, seed).map(|(inst, _)| inst)
}

pub fn generate_instance_with_placement(
    params: &SimParams,
    seed: u64,
) -> Result<(NetworkInstance, Placement)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let place = loop {
        let p = generate_placement(params, &mut rng);
        if !has_coincident_nodes(&p) {
            break p;
        }
    };
    let gains = gains_for_placement(params, &place, &mut rng)?;
    let inst = NetworkInstance::new(params.clone(), gains)?;
    Ok((inst, place))
}

/// Hand-built instances with uniform default gains, for constructed
/// scenarios and tests. Unset budgets follow [`interference_budget`].
#[derive(Debug, Clone)]
pub struct InstanceBuilder {
    params: SimParams,
    gains: Gains,
    budget_set: Vec<bool>,
}

impl InstanceBuilder {
    pub fn new(params: SimParams) -> Self {
        let (nk, nd) = (params.num_channels, params.num_d2d);
        let gains = Gains {
            own: vec![vec![1.6e-7; nd]; nk],
            cross: vec![vec![vec![1e-20; nd]; nd]; nk],
            cu_to_rx: vec![vec![1e-12; nd]; nk],
            tx_to_bs: vec![vec![1e-12; nd]; nk],
            cu_to_bs: vec![1e-10; nk],
            budget: vec![0.0; nk],
        };
        Self {
            params,
            gains,
            budget_set: vec![false; nk],
        }
    }

    pub fn own(mut self, k: usize, d: usize, v: f64) -> Self {
        self.gains.own[k][d] = v;
        self
    }

    /// Sets the gain from transmitter `tx` to receiver `rx` on channel `k`.
    pub fn cross(mut self, k: usize, tx: usize, rx: usize, v: f64) -> Self {
        self.gains.cross[k][tx][rx] = v;
        self
    }

    /// Sets every off-diagonal cross gain on every channel.
    pub fn all_cross(mut self, v: f64) -> Self {
        for m in &mut self.gains.cross {
            for row in m.iter_mut() {
                row.fill(v);
            }
        }
        self
    }

    pub fn cu_to_rx(mut self, k: usize, d: usize, v: f64) -> Self {
        self.gains.cu_to_rx[k][d] = v;
        self
    }

    pub fn tx_to_bs(mut self, k: usize, d: usize, v: f64) -> Self {
        self.gains.tx_to_bs[k][d] = v;
        self
    }

    pub fn cu_to_bs(mut self, k: usize, v: f64) -> Self {
        self.gains.cu_to_bs[k] = v;
        self
    }

    pub fn budget(mut self, k: usize, v: f64) -> Self {
        self.gains.budget[k] = v;
        self.budget_set[k] = true;
        self
    }

    pub fn build(mut self) -> Result<NetworkInstance> {
        self.params.validate()?;
        for k in 0..self.params.num_channels {
            if !self.budget_set[k] {
                self.gains.budget[k] = interference_budget(&self.params, self.gains.cu_to_bs[k]);
            }
        }
        NetworkInstance::new(self.params, self.gains)
    }
}
