//! Experiment plumbing: JSON configs, runs, trace files and summaries.

pub mod config;
pub mod output;
pub mod polyak;
pub mod run;

pub use config::{AlgorithmSpec, ExperimentConfig, OutputSpec, ALGORITHMS, SCHEMA};
pub use output::{config_hash, write_csv, write_jsonl};
pub use polyak::{polyak_subgradient, PolyakOptions};
pub use run::{run_algorithm, run_experiment, CertRecord, RunOutcome, RunSummary, SummaryReport};
