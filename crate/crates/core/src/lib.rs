//! Two-stage channel and power allocation for D2D pairs underlaying a
//! cellular uplink: swap matching over channels, then priced power control.

pub mod audit;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod instance_io;
pub mod local_opt;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod power;
pub mod scenario;

pub use error::{Error, Result};
pub use model::{
    Gains, Matching, MetricsRecord, NetworkInstance, PowerProfile, PriceResult, Scheme, SimParams,
};
