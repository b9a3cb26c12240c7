use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use nalgebra::{DMatrix, DVector};
use symvi_core::{DivergenceGenerator, OptConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    EvenRecovery,
    EllipticalRecovery,
    SphereThreshold,
    SphereContours,
    VerifyAll,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::EvenRecovery => "even-recovery",
            Self::EllipticalRecovery => "elliptical-recovery",
            Self::SphereThreshold => "sphere-threshold",
            Self::SphereContours => "sphere-contours",
            Self::VerifyAll => "verify-all",
        }
    }

    fn is_sphere(self) -> bool {
        matches!(self, Self::SphereThreshold | Self::SphereContours)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetKind {
    /// The canonical non-Gaussian target of the experiment.
    Canonical,
    /// A Gaussian with the same centre and shape.
    Gaussian,
}

/// Symmetry-aware variational inference experiments.
#[derive(Debug, Clone, Parser)]
#[command(name = "symvi", version, about)]
pub struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    pub experiment: Experiment,

    /// Seed for every random choice.
    #[arg(long, env = "SYMVI_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Sphere dimension: points live on S^{d-1} in R^d.
    #[arg(long)]
    pub d: Option<usize>,

    /// Linear coefficient of the axial profile.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub lambda: f64,

    /// Quadratic coefficient of the axial profile.
    #[arg(long)]
    pub eta: Option<f64>,

    /// Fixed vMF concentration.
    #[arg(long, default_value_t = 2.5)]
    pub kappa0: f64,

    /// f-divergence to minimise.
    #[arg(long, default_value = DivergenceGenerator::REVERSE_KL)]
    pub divergence: String,

    /// Points per axis of the written density grids.
    #[arg(long)]
    pub resolution: Option<usize>,

    /// Worker threads; 1 gives a fully sequential run.
    #[arg(long)]
    pub threads: Option<usize>,

    /// Symmetry centre, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub m: Option<Vec<f64>>,

    /// Shape matrix, row-major and comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub shape: Option<Vec<f64>>,

    /// Target family for the Euclidean experiments.
    #[arg(long, value_enum, default_value_t = TargetKind::Canonical)]
    pub target: TargetKind,

    /// Optimizer starts.
    #[arg(long)]
    pub starts: Option<usize>,

    /// Overrides the tolerance of every quadrature-based verification check.
    #[arg(long)]
    pub quad_tol: Option<f64>,
}

pub const MIN_RESOLUTION: usize = 32;
pub const DEFAULT_GRID_RESOLUTION: usize = 101;
pub const DEFAULT_CONTOUR_RESOLUTION: usize = 64;

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub out: PathBuf,
    pub d: usize,
    pub lambda: f64,
    pub eta: Option<f64>,
    pub kappa0: f64,
    pub divergence: DivergenceGenerator,
    pub resolution: usize,
    pub m: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub target: TargetKind,
    pub n_starts: usize,
    pub quad_tol: Option<f64>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_cli(cli: &Cli) -> CliResult<Self> {
        let e = cli.experiment;
        let d = match (e.is_sphere(), cli.d) {
            (true, Some(d)) if d < 3 => {
                return Err(config_err(format!(
                    "sphere experiments need d >= 3, got {d}"
                )))
            }
            (true, Some(d)) => d,
            (true, None) => 3,
            (false, Some(d)) if d != 2 => {
                return Err(config_err("Euclidean experiments are two-dimensional"))
            }
            (false, _) => 2,
        };
        if e == Experiment::SphereContours && d != 3 {
            return Err(config_err("sphere-contours needs d = 3"));
        }
        if cli.lambda == 0.0 || !cli.lambda.is_finite() {
            return Err(config_err("lambda must be finite and nonzero"));
        }
        if let Some(eta) = cli.eta {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(config_err("eta must be finite and positive"));
            }
        }
        if !(cli.kappa0 > 0.0) || !cli.kappa0.is_finite() {
            return Err(config_err("kappa0 must be finite and positive"));
        }
        let divergence = DivergenceGenerator::from_name(&cli.divergence)?;
        let default_res = if e == Experiment::SphereContours {
            DEFAULT_CONTOUR_RESOLUTION
        } else {
            DEFAULT_GRID_RESOLUTION
        };
        let resolution = cli.resolution.unwrap_or(default_res);
        if resolution < MIN_RESOLUTION {
            return Err(config_err(format!(
                "resolution must be >= {MIN_RESOLUTION}, got {resolution}"
            )));
        }
        if cli.threads == Some(0) {
            return Err(config_err("threads must be >= 1"));
        }
        let m = match &cli.m {
            Some(v) if v.len() != 2 => return Err(config_err("--m needs two values")),
            Some(v) => DVector::from_column_slice(v),
            None => DVector::from_vec(vec![1.0, 1.0]),
        };
        let shape = match &cli.shape {
            Some(v) if v.len() != 4 => return Err(config_err("--shape needs four values")),
            Some(v) => DMatrix::from_row_slice(2, 2, v),
            None => default_shape(),
        };
        symvi_core::linalg::check_spd(&shape, "shape")?;
        let n_starts = cli.starts.unwrap_or(if e.is_sphere() { 8 } else { 4 });
        if n_starts == 0 {
            return Err(config_err("starts must be >= 1"));
        }
        if let Some(t) = cli.quad_tol {
            if !(t > 0.0) {
                return Err(config_err("quad-tol must be positive"));
            }
        }
        Ok(Self {
            experiment: e,
            seed: cli.seed,
            out: cli.out.clone(),
            d,
            lambda: cli.lambda,
            eta: cli.eta,
            kappa0: cli.kappa0,
            divergence,
            resolution,
            m,
            shape,
            target: cli.target,
            n_starts,
            quad_tol: cli.quad_tol,
        })
    }

    pub fn opt_config(&self) -> OptConfig {
        OptConfig {
            n_starts: self.n_starts,
            seed: self.seed,
            ..OptConfig::default()
        }
    }

    /// Config with defaults for `experiment`, writing to `out`.
    pub fn defaults(experiment: Experiment, out: impl Into<PathBuf>) -> Self {
        let cli = Cli::parse_from(["symvi", experiment.name(), "--seed", "0"]);
        let mut cfg = Self::from_cli(&cli).expect("defaults are valid");
        cfg.out = out.into();
        cfg
    }
}

pub fn default_shape() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0])
}
