//! Synthetic problem generators, experiment runner, trace export and rate
//! verification for `bcprox`.

pub mod config;
pub mod corpus;
pub mod error;
pub mod fit;
pub mod generate;
pub mod plot;
pub mod runner;
pub mod trace_csv;
pub mod verify;

pub use config::{RunConfig, SamplerChoice};
pub use error::{BenchError, Result};
pub use generate::{generate_problem, Generated, Instance};
pub use runner::{run_experiment, Summary};
pub use verify::{verify_rates, RateReport, RateRule, VerifyConfig};
