//! Experiment runner for symmetry-aware variational inference.
//!
//! Each experiment writes machine-readable artifacts (CSV grids with `#`
//! header comments, JSON summaries with matrices as arrays of rows) into the
//! output directory.

// Negated comparisons deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod euclid;
pub mod output;
pub mod sphere_exp;
pub mod verify;

pub use config::{Cli, Experiment, ExperimentConfig, TargetKind};
pub use error::{CliError, CliResult};

/// Runs the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> CliResult<()> {
    match cfg.experiment {
        Experiment::EvenRecovery => euclid::run_even_recovery(cfg).map(|_| ()),
        Experiment::EllipticalRecovery => euclid::run_elliptical_recovery(cfg).map(|_| ()),
        Experiment::SphereThreshold => sphere_exp::run_threshold(cfg).map(|_| ()),
        Experiment::SphereContours => sphere_exp::run_contours(cfg).map(|_| ()),
        Experiment::VerifyAll => {
            let report = verify::run_verify_all(cfg.seed, cfg.quad_tol, &cfg.out)?;
            for c in &report.criteria {
                for check in c.checks.iter().filter(|c| !c.pass) {
                    eprintln!(
                        "FAIL {}: measured {} (tolerance {})",
                        check.name, check.measured, check.tolerance
                    );
                }
            }
            match report.n_failed {
                0 => Ok(()),
                n => Err(CliError::Verification(n)),
            }
        }
    }
}
