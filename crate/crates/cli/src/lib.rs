//! Configuration, orchestration and CSV output for qubit-lattice experiments.

pub mod config;
pub mod manifest;
pub mod output;
pub mod run;

pub use config::RunConfig;
pub use manifest::{manifest_path, Manifest, Status};
pub use run::{execute, run, Command, Report};
