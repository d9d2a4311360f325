use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use d2d_core::audit::Suite;
use d2d_core::experiment::{
    derive_seed, run_single, run_sweep, validate_sweep, write_csv, Config, SweepAxis,
};
use d2d_core::instance_io::dump_instance;
use d2d_core::scenario::generate_instance;
use d2d_core::Error;

const WORKERS_ENV: &str = "D2DSIM_WORKERS";

#[derive(Parser)]
#[command(
    name = "d2dsim",
    version,
    about = "Channel and power allocation for D2D pairs underlaying a cellular uplink"
)]
struct Cli {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one network instance and write its dump.
    Generate {
        /// Instance seed; defaults to the seed `run` uses for its draw.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every configured scheme on one draw and write CSV.
    Run {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo sweep over one parameter, written as CSV.
    Sweep {
        /// tolerance_rel_db, num_d2d or num_channels
        #[arg(long)]
        axis: String,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        values: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run invariant suites on random instances.
    Audit {
        /// potential, stability, nash, pareto or lemma1 (default: all)
        #[arg(long = "suite", value_delimiter = ',')]
        suites: Vec<String>,
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
}

macro_rules! overrides {
    ($($field:ident),* $(,)?) => {
        #[derive(Args)]
        struct Overrides {
            $(
                #[arg(long = stringify!($field), global = true, value_name = "VALUE", allow_hyphen_values = true)]
                $field: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field), v.as_str()));
                    }
                )*
                out
            }
        }
    };
}

overrides!(
    cell_radius_m,
    noise_power_w,
    noise_power_dbm,
    pathloss_exp,
    cu_power_w,
    cu_power_dbm,
    max_d2d_power_w,
    max_d2d_power_dbm,
    d2d_link_length_m,
    num_channels,
    num_d2d,
    tolerance_rel_db,
    xi1,
    xi2,
    theta,
    w_tradeoff,
    bisect_epsilon,
    rng_seed,
    schemes,
);

enum Failure {
    Config(String),
    Guard(String),
    Other(String),
    Audit,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InstanceTooLarge { .. } => Failure::Guard(e.to_string()),
            Error::Config(_)
            | Error::UnknownKeys(_)
            | Error::InvalidParams(_)
            | Error::InvalidEpsilon(_) => Failure::Config(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            Config::from_toml_str(&text)?
        }
        None => Config::default(),
    };
    for (key, value) in cli.overrides.pairs() {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Failure::Other(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn init_workers() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Config(format!(
            "{WORKERS_ENV} must be a positive integer (got '{raw}')"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Other(e.to_string()))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    init_workers()?;
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Generate { seed, out } => {
            let seed = seed.unwrap_or_else(|| derive_seed(cfg.params.rng_seed, 0));
            let inst = generate_instance(&cfg.params, seed)?;
            let mut w = output(out.as_deref())?;
            w.write_all(dump_instance(&inst).as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| Failure::Other(e.to_string()))?;
        }
        Command::Run { out } => {
            let records = run_single(&cfg)?;
            write_csv(&records, output(out.as_deref())?)?;
        }
        Command::Sweep {
            axis,
            values,
            runs,
            out,
        } => {
            let axis: SweepAxis = axis.parse()?;
            validate_sweep(&cfg, axis, values, *runs)?;
            run_sweep(&cfg, axis, values, *runs, output(out.as_deref())?)?;
        }
        Command::Audit { suites, instances } => {
            let suites: Vec<Suite> = if suites.is_empty() {
                Suite::ALL.to_vec()
            } else {
                suites.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
            };
            let mut ok = true;
            for s in suites {
                let rep = s.run(&cfg.params, *instances, cfg.params.rng_seed)?;
                println!("{rep}");
                ok &= rep.passed();
            }
            if !ok {
                return Err(Failure::Audit);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Guard(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
        Err(Failure::Audit) => ExitCode::FAILURE,
    }
}
