//! Experiment harness: configuration, scheme evaluation, seeded Monte-Carlo
//! sweeps and CSV output.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{
    assignment_count, brute_force_allocation, interference_min_allocation, orthogonal_allocation,
    random_allocation,
};
use crate::error::{Error, Result};
use crate::local_opt::LocalOptOptions;
use crate::matching::allocate_channels;
use crate::metrics::{cu_sum_rate, d2d_sum_rate};
use crate::model::{Matching, MetricsRecord, NetworkInstance, PowerProfile, Scheme, SimParams};
use crate::power::allocate_power;
use crate::scenario::{dbm_to_watts, generate_instance};

pub const CSV_HEADER: &str = "run_id,seed,scheme,k_channels,d_pairs,tolerance_rel_db,d2d_sum_rate_nats,cu_sum_rate_nats,swap_count,bisect_iters_total,converged";

/// Keys accepted in a configuration file or as override flags.
pub const CONFIG_KEYS: &[&str] = &[
    "cell_radius_m",
    "noise_power_w",
    "noise_power_dbm",
    "pathloss_exp",
    "cu_power_w",
    "cu_power_dbm",
    "max_d2d_power_w",
    "max_d2d_power_dbm",
    "d2d_link_length_m",
    "num_channels",
    "num_d2d",
    "tolerance_rel_db",
    "xi1",
    "xi2",
    "theta",
    "w_tradeoff",
    "bisect_epsilon",
    "rng_seed",
    "schemes",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: SimParams,
    pub schemes: Vec<Scheme>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            params: SimParams::default(),
            schemes: vec![Scheme::Proposed],
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

/// Comma-separated scheme names; `all` selects every scheme.
pub fn parse_schemes(value: &str) -> Result<Vec<Scheme>> {
    if value.trim() == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    let schemes = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Scheme::from_str)
        .collect::<Result<Vec<_>>>()?;
    if schemes.is_empty() {
        return Err(Error::Config("no schemes selected".into()));
    }
    Ok(schemes)
}

impl Config {
    /// Sets one key from its textual value. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.params;
        match key {
            "cell_radius_m" => p.cell_radius_m = parse_num(key, value)?,
            "noise_power_w" => p.noise_power_w = parse_num(key, value)?,
            "noise_power_dbm" => p.noise_power_w = dbm_to_watts(parse_num(key, value)?),
            "pathloss_exp" => p.pathloss_exp = parse_num(key, value)?,
            "cu_power_w" => p.cu_power_w = parse_num(key, value)?,
            "cu_power_dbm" => p.cu_power_w = dbm_to_watts(parse_num(key, value)?),
            "max_d2d_power_w" => p.max_d2d_power_w = parse_num(key, value)?,
            "max_d2d_power_dbm" => p.max_d2d_power_w = dbm_to_watts(parse_num(key, value)?),
            "d2d_link_length_m" => p.d2d_link_length_m = parse_num(key, value)?,
            "num_channels" => p.num_channels = parse_num(key, value)?,
            "num_d2d" => p.num_d2d = parse_num(key, value)?,
            "tolerance_rel_db" => p.tolerance_rel_db = parse_num(key, value)?,
            "xi1" => p.xi1 = parse_num(key, value)?,
            "xi2" => p.xi2 = parse_num(key, value)?,
            "theta" => p.theta = parse_num(key, value)?,
            "w_tradeoff" => p.w_tradeoff = parse_num(key, value)?,
            "bisect_epsilon" => p.bisect_epsilon = parse_num(key, value)?,
            "rng_seed" => p.rng_seed = parse_num(key, value)?,
            "schemes" => self.schemes = parse_schemes(value)?,
            other => return Err(Error::UnknownKeys(vec![other.to_string()])),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. Every unknown key is reported at once.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let unknown: Vec<String> = table
            .keys()
            .filter(|k| !CONFIG_KEYS.contains(&k.as_str()))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownKeys(unknown));
        }
        let mut cfg = Config::default();
        for (key, value) in &table {
            let text = match value {
                toml::Value::String(s) => s.clone(),
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Array(items) => items
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .map(str::to_string)
                            .unwrap_or_else(|| v.to_string())
                    })
                    .collect::<Vec<_>>()
                    .join(","),
                other => return Err(Error::Config(format!("{key}: unsupported value {other}"))),
            };
            cfg.set(key, &text)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of draw `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Outcome of one scheme on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub matching: Matching,
    pub powers: PowerProfile,
    pub swap_count: usize,
    pub bisect_iters_total: usize,
    pub converged: bool,
}

/// Runs `scheme` end to end. `seed` only drives the random baseline.
pub fn evaluate(scheme: Scheme, inst: &NetworkInstance, seed: u64) -> Result<Evaluation> {
    let (matching, swap_count) = match scheme {
        Scheme::Proposed => allocate_channels(inst)?,
        Scheme::Random => (random_allocation(inst, derive_seed(seed, u64::MAX)), 0),
        Scheme::InterferenceMin => (interference_min_allocation(inst), 0),
        Scheme::Orthogonal => (orthogonal_allocation(inst)?, 0),
        Scheme::BruteForce => {
            let r = brute_force_allocation(inst, &LocalOptOptions::default())?;
            return Ok(Evaluation {
                matching: r.matching,
                powers: r.powers,
                swap_count: 0,
                bisect_iters_total: 0,
                converged: r.converged,
            });
        }
    };
    let (powers, prices) = allocate_power(&matching, inst)?;
    Ok(Evaluation {
        matching,
        powers,
        swap_count,
        bisect_iters_total: prices.total_iterations(),
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    ToleranceRelDb,
    NumD2d,
    NumChannels,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::ToleranceRelDb => "tolerance_rel_db",
            SweepAxis::NumD2d => "num_d2d",
            SweepAxis::NumChannels => "num_channels",
        }
    }

    /// `base` with the axis set to `value`.
    pub fn apply(self, base: &SimParams, value: f64) -> Result<SimParams> {
        let mut p = base.clone();
        let count = || -> Result<usize> {
            if value.is_finite() && value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!(
                    "{}: expected a positive integer, got {value}",
                    self.as_str()
                )))
            }
        };
        match self {
            SweepAxis::ToleranceRelDb => p.tolerance_rel_db = value,
            SweepAxis::NumD2d => p.num_d2d = count()?,
            SweepAxis::NumChannels => p.num_channels = count()?,
        }
        p.validate()?;
        Ok(p)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tolerance_rel_db" => Ok(SweepAxis::ToleranceRelDb),
            "num_d2d" => Ok(SweepAxis::NumD2d),
            "num_channels" => Ok(SweepAxis::NumChannels),
            other => Err(Error::Config(format!(
                "unknown sweep axis '{other}' (expected tolerance_rel_db, num_d2d or num_channels)"
            ))),
        }
    }
}

/// Records of every scheme on one draw. All schemes share the instance.
pub fn run_draw(
    params: &SimParams,
    schemes: &[Scheme],
    run_id: u64,
    seed: u64,
) -> Result<Vec<MetricsRecord>> {
    let inst = generate_instance(params, seed)?;
    schemes
        .iter()
        .map(|&scheme| {
            let e = evaluate(scheme, &inst, seed)?;
            let rec = MetricsRecord {
                run_id,
                seed,
                scheme,
                k_channels: params.num_channels,
                d_pairs: params.num_d2d,
                tolerance_rel_db: params.tolerance_rel_db,
                d2d_sum_rate_nats: d2d_sum_rate(&e.matching, &e.powers, &inst),
                cu_sum_rate_nats: cu_sum_rate(&e.matching, &e.powers, &inst),
                swap_count: e.swap_count,
                bisect_iters_total: e.bisect_iters_total,
                converged: e.converged,
            };
            rec.validate()?;
            Ok(rec)
        })
        .collect()
}

fn check_guard(params: &SimParams, schemes: &[Scheme]) -> Result<()> {
    if schemes.contains(&Scheme::BruteForce) {
        assignment_count(params.num_channels, params.num_d2d)?;
    }
    Ok(())
}

/// One draw of every configured scheme, seeded as run 0 of a sweep.
pub fn run_single(config: &Config) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    check_guard(&config.params, &config.schemes)?;
    run_draw(
        &config.params,
        &config.schemes,
        0,
        derive_seed(config.params.rng_seed, 0),
    )
}

/// Point parameters of a sweep, validated (including the brute-force guard)
/// before any draw runs.
fn sweep_points(
    config: &Config,
    axis: SweepAxis,
    values: &[f64],
    runs: usize,
) -> Result<Vec<SimParams>> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    let points = values
        .iter()
        .map(|&v| axis.apply(&config.params, v))
        .collect::<Result<Vec<_>>>()?;
    for p in &points {
        check_guard(p, &config.schemes)?;
    }
    Ok(points)
}

/// Checks a sweep's arguments and guards without running any draw.
pub fn validate_sweep(config: &Config, axis: SweepAxis, values: &[f64], runs: usize) -> Result<()> {
    sweep_points(config, axis, values, runs).map(|_| ())
}

fn sweep_point(
    config: &Config,
    params: &SimParams,
    point: usize,
    runs: usize,
) -> Result<Vec<MetricsRecord>> {
    // run r uses the same seed at every point (common random numbers)
    let per_run = (0..runs)
        .into_par_iter()
        .map(|r| {
            let run_id = (point * runs + r) as u64;
            run_draw(
                params,
                &config.schemes,
                run_id,
                derive_seed(params.rng_seed, r as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_run.into_iter().flatten().collect())
}

/// All records of a sweep, ordered by run id and then by configured scheme order.
pub fn sweep_records(
    config: &Config,
    axis: SweepAxis,
    values: &[f64],
    runs: usize,
) -> Result<Vec<MetricsRecord>> {
    let points = sweep_points(config, axis, values, runs)?;
    let mut out = Vec::new();
    for (i, p) in points.iter().enumerate() {
        out.extend(sweep_point(config, p, i, runs)?);
    }
    Ok(out)
}

/// CSV writer with the fixed header already written.
pub fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(true).from_writer(out)
}

pub fn write_csv<W: Write>(records: &[MetricsRecord], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the sweep and writes its CSV point by point. Returns the number of rows.
pub fn run_sweep<W: Write>(
    config: &Config,
    axis: SweepAxis,
    values: &[f64],
    runs: usize,
    out: W,
) -> Result<usize> {
    let points = sweep_points(config, axis, values, runs)?;
    let mut w = csv_writer(out);
    let mut rows = 0;
    for (i, p) in points.iter().enumerate() {
        for r in sweep_point(config, p, i, runs)? {
            w.serialize(&r)?;
            rows += 1;
        }
        w.flush()?;
    }
    Ok(rows)
}
