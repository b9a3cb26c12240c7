//! Two-dimensional recovery experiments.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use symvi_core::euclidean::{
    canonical_even_target, correlation_from_covariance, covariance, fixed_set_checks,
    make_elliptical_target, mean, RadialProfile,
};
use symvi_core::linalg::to_rows;
use symvi_core::optimize::{fit_locscale, FitResult};
use symvi_core::{Density, EllipticalTargetSpec, LocScaleFamily, LocScaleParams, QuadratureSpec};

use crate::config::{ExperimentConfig, TargetKind};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, num, write_json, CsvWriter};

/// Half-width, in shape standard deviations, of the box used for the
/// moments of the heavy-tailed elliptical target.
pub const STAT_BOX_HALF_WIDTH: f64 = 150.0;
pub const STAT_NODES: usize = 1000;

/// Density grids span this many target standard deviations each way.
const GRID_HALF_WIDTH: f64 = 4.0;

#[derive(Debug, Clone, Serialize)]
pub struct StartRecord {
    pub index: usize,
    pub objective: f64,
    pub converged: bool,
    pub nu: Vec<f64>,
    pub s: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    pub divergence: String,
    pub objective: f64,
    pub converged: bool,
    pub n_evals: usize,
    pub n_starts: usize,
    pub start_dispersion: f64,
    pub starts: Vec<StartRecord>,
}

impl FitDiagnostics {
    fn new(divergence: &str, fit: &FitResult, n_starts: usize) -> Self {
        let starts = fit
            .starts
            .iter()
            .filter_map(|s| {
                let p = s.params.as_locscale()?;
                Some(StartRecord {
                    index: s.index,
                    objective: s.objective,
                    converged: s.converged,
                    nu: p.nu().iter().copied().collect(),
                    s: to_rows(p.scale()),
                })
            })
            .collect();
        Self {
            divergence: divergence.to_string(),
            objective: fit.objective,
            converged: fit.converged,
            n_evals: fit.n_evals,
            n_starts,
            start_dispersion: fit.start_dispersion,
            starts,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    pub resolution: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub omitted_nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvenSummary {
    pub experiment: String,
    pub seed: u64,
    pub target: String,
    pub m: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub nu_star: Vec<f64>,
    pub s_star: Vec<Vec<f64>>,
    pub nu_error: f64,
    pub fit: FitDiagnostics,
    pub grid: GridInfo,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nodes_per_axis: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticalSummary {
    pub experiment: String,
    pub seed: u64,
    pub target: String,
    pub m: Vec<f64>,
    pub shape: Vec<Vec<f64>>,
    pub statistics_box: StatBox,
    pub sigma_p: Vec<Vec<f64>>,
    pub sigma_q: Vec<Vec<f64>>,
    pub lambda_hat_p: f64,
    pub lambda_hat_q: f64,
    pub residual_p: f64,
    pub residual_q: f64,
    pub rho_p: Vec<Vec<f64>>,
    pub rho_q: Vec<Vec<f64>>,
    pub rho_shape: Vec<Vec<f64>>,
    /// Entrywise max of `|rho_p - rho_q|`.
    pub max_rho_gap: f64,
    pub max_rho_gap_p_shape: f64,
    pub max_rho_gap_q_shape: f64,
    pub nu_star: Vec<f64>,
    pub nu_error: f64,
    pub fit: FitDiagnostics,
    pub grid: GridInfo,
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Writes `log p` on a regular `res x res` grid; returns omitted nodes.
pub fn write_density_grid(
    path: &Path,
    p: &Density,
    label: &str,
    lower: &[f64],
    upper: &[f64],
    res: usize,
) -> CliResult<usize> {
    let axis = |k: usize| -> Vec<f64> {
        (0..res)
            .map(|i| lower[k] + (upper[k] - lower[k]) * i as f64 / (res - 1) as f64)
            .collect()
    };
    let (xs, ys) = (axis(0), axis(1));
    let rows: Vec<Vec<(f64, f64, f64)>> = xs
        .par_iter()
        .map(|&x| ys.iter().map(|&y| (x, y, p.log_pdf(&[x, y]))).collect())
        .collect();
    let comments = vec![
        format!("log-density of the {label} on a {res} x {res} regular grid"),
        "x varies slowest; y varies fastest".to_string(),
        "columns: x, y, log_density (natural log, Lebesgue reference)".to_string(),
        "nodes with non-finite log-density are omitted".to_string(),
    ];
    let mut w = CsvWriter::create(path, &comments, &["x", "y", "log_density"])?;
    let mut omitted = 0;
    for (x, y, lp) in rows.into_iter().flatten() {
        if lp.is_finite() {
            w.row(&[num(x), num(y), num(lp)])?;
        } else {
            omitted += 1;
        }
    }
    w.finish()?;
    Ok(omitted)
}

fn grid_bounds(center: &DVector<f64>, scale: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lower = (0..2)
        .map(|k| center[k] - GRID_HALF_WIDTH * scale[k])
        .collect();
    let upper = (0..2)
        .map(|k| center[k] + GRID_HALF_WIDTH * scale[k])
        .collect();
    (lower, upper)
}

fn write_grids(
    cfg: &ExperimentConfig,
    target: &Density,
    fit: &LocScaleParams,
    fam: &LocScaleFamily,
) -> CliResult<GridInfo> {
    let scale = target
        .extent()
        .map(|e| e.scale.clone())
        .unwrap_or_else(|| vec![1.0, 1.0]);
    let (lower, upper) = grid_bounds(&cfg.m, &scale);
    let q = fam.member_density(fit)?;
    let out = &cfg.out;
    let mut omitted = write_density_grid(
        &out.join("target_density.csv"),
        target,
        "target",
        &lower,
        &upper,
        cfg.resolution,
    )?;
    omitted += write_density_grid(
        &out.join("fit_density.csv"),
        &q,
        "fitted variational distribution",
        &lower,
        &upper,
        cfg.resolution,
    )?;
    Ok(GridInfo {
        resolution: cfg.resolution,
        lower,
        upper,
        omitted_nodes: omitted,
    })
}

fn fit(
    cfg: &ExperimentConfig,
    target: &Density,
    fam: &LocScaleFamily,
    quad: &QuadratureSpec,
) -> CliResult<FitResult> {
    let result = fit_locscale(target, fam, &cfg.divergence, quad, &cfg.opt_config(), None)?;
    if !result.objective.is_finite() {
        return Err(CliError::Optimization("objective is not finite".into()));
    }
    Ok(result)
}

pub fn even_target(cfg: &ExperimentConfig) -> CliResult<(Density, String)> {
    Ok(match cfg.target {
        TargetKind::Canonical => (
            canonical_even_target(&cfg.m)?,
            "canonical even Gaussian mixture".to_string(),
        ),
        TargetKind::Gaussian => (
            Density::gaussian(cfg.m.as_slice(), &cfg.shape)?,
            "Gaussian".to_string(),
        ),
    })
}

pub fn run_even_recovery(cfg: &ExperimentConfig) -> CliResult<EvenSummary> {
    ensure_dir(&cfg.out)?;
    let (target, label) = even_target(cfg)?;
    let fam = LocScaleFamily::gaussian(2)?;
    let quad = QuadratureSpec::default_for(&[&target])?;
    let result = fit(cfg, &target, &fam, &quad)?;
    let params = result
        .params
        .as_locscale()
        .ok_or_else(|| CliError::Optimization("unexpected parameter type".into()))?
        .clone();
    let target_mean = mean(&target, &quad)?;
    let grid = write_grids(cfg, &target, &params, &fam)?;
    let summary = EvenSummary {
        experiment: cfg.experiment.name().to_string(),
        seed: cfg.seed,
        target: label,
        m: vec_of(&cfg.m),
        target_mean: vec_of(&target_mean),
        nu_star: vec_of(params.nu()),
        s_star: to_rows(params.scale()),
        nu_error: (params.nu() - &cfg.m).norm(),
        fit: FitDiagnostics::new(cfg.divergence.name(), &result, cfg.n_starts),
        grid,
    };
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn elliptical_spec(cfg: &ExperimentConfig) -> EllipticalTargetSpec {
    let mut spec = EllipticalTargetSpec::canonical(cfg.m.clone(), cfg.shape.clone());
    if cfg.target == TargetKind::Gaussian {
        spec.profile = RadialProfile::Gaussian;
    }
    spec
}

/// Wide box for the moments of an elliptical target.
pub fn statistics_quadrature(spec: &EllipticalTargetSpec) -> CliResult<(QuadratureSpec, StatBox)> {
    let sd: Vec<f64> = (0..2).map(|k| spec.shape[(k, k)].sqrt()).collect();
    let lower: Vec<f64> = (0..2)
        .map(|k| spec.m[k] - STAT_BOX_HALF_WIDTH * sd[k])
        .collect();
    let upper: Vec<f64> = (0..2)
        .map(|k| spec.m[k] + STAT_BOX_HALF_WIDTH * sd[k])
        .collect();
    let quad = QuadratureSpec::tensor(lower.clone(), upper.clone(), STAT_NODES)?;
    Ok((
        quad,
        StatBox {
            lower,
            upper,
            nodes_per_axis: STAT_NODES,
        },
    ))
}

pub fn run_elliptical_recovery(cfg: &ExperimentConfig) -> CliResult<EllipticalSummary> {
    ensure_dir(&cfg.out)?;
    let spec = elliptical_spec(cfg);
    let label = match &spec.profile {
        RadialProfile::Student { dof } => format!("elliptical Student-t, {dof} degrees of freedom"),
        _ => "Gaussian".to_string(),
    };
    let target = make_elliptical_target(&spec)?;
    let fam = LocScaleFamily::gaussian(2)?;
    let quad = QuadratureSpec::default_for(&[&target])?;
    let result = fit(cfg, &target, &fam, &quad)?;
    let params = result
        .params
        .as_locscale()
        .ok_or_else(|| CliError::Optimization("unexpected parameter type".into()))?
        .clone();

    let (stat_quad, statistics_box) = statistics_quadrature(&spec)?;
    let sigma_p = covariance(&target, &stat_quad)?;
    let sigma_q = fam
        .member_covariance(&params)
        .expect("Gaussian family has a known covariance");
    let check_p = fixed_set_checks(&sigma_p, &spec.shape)?;
    let check_q = fixed_set_checks(&sigma_q, &spec.shape)?;
    let rho_p = correlation_from_covariance(&sigma_p)?;
    let rho_q = correlation_from_covariance(&sigma_q)?;
    let rho_shape = correlation_from_covariance(&spec.shape)?;
    let grid = write_grids(cfg, &target, &params, &fam)?;
    let summary = EllipticalSummary {
        experiment: cfg.experiment.name().to_string(),
        seed: cfg.seed,
        target: label,
        m: vec_of(&cfg.m),
        shape: to_rows(&spec.shape),
        statistics_box,
        sigma_p: to_rows(&sigma_p),
        sigma_q: to_rows(&sigma_q),
        lambda_hat_p: check_p.lambda_hat,
        lambda_hat_q: check_q.lambda_hat,
        residual_p: check_p.residual,
        residual_q: check_q.residual,
        max_rho_gap: max_abs_diff(&rho_p, &rho_q),
        max_rho_gap_p_shape: max_abs_diff(&rho_p, &rho_shape),
        max_rho_gap_q_shape: max_abs_diff(&rho_q, &rho_shape),
        rho_p: to_rows(&rho_p),
        rho_q: to_rows(&rho_q),
        rho_shape: to_rows(&rho_shape),
        nu_star: vec_of(params.nu()),
        nu_error: (params.nu() - &cfg.m).norm(),
        fit: FitDiagnostics::new(cfg.divergence.name(), &result, cfg.n_starts),
        grid,
    };
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(summary)
}
