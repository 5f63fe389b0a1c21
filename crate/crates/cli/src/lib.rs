//! Manifest-driven experiment runner and verification suites.
//!
//! A manifest declares one run (model, data, driver, scheme, numerics,
//! outputs) and `run` executes it into a [`runner::RunRecord`] whose scalar
//! results are digested bit-for-bit for reproducibility.  The verification
//! suites re-run the laboratory's oracle-backed criteria with their pinned
//! tolerances.

pub mod manifest;
pub mod runner;
pub mod suites;

pub use manifest::ExperimentManifest;
pub use runner::{exit_code, run_manifest_text, RunRecord};
