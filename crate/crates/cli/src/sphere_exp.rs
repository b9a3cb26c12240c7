//! Sphere experiments: the phase-transition sweep and the Lambert contour data.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use symvi_core::optimize::{fit_vmf, FitResult};
use symvi_core::sphere::{
    axial_log_density, eta_critical, lambert_project, lambert_radius, latitude_circle,
    marginal_moments, predicted_minimizer_c, rotation_to_north, vmf_log_density, AxisStatistic,
};
use symvi_core::{AxialTarget, VmfParams};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, num, write_json, CsvWriter};

/// A fitted axis within this angle (radians) of the target axis counts as
/// recovered.
pub const AXIS_TOL: f64 = 1e-3;
pub const SWEEP_POINTS: usize = 20;
pub const SWEEP_LO: f64 = 0.2;
pub const SWEEP_HI: f64 = 3.0;
const CIRCLE_POINTS: usize = 72;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetry axis `e_d`.
pub fn default_axis(d: usize) -> Vec<f64> {
    let mut u = vec![0.0; d];
    u[d - 1] = 1.0;
    u
}

pub fn fit_sphere(cfg: &ExperimentConfig, target: &AxialTarget) -> CliResult<FitResult> {
    let closed = cfg.divergence.is_reverse_kl();
    let r = fit_vmf(
        target,
        &cfg.divergence,
        &cfg.opt_config(),
        Some(cfg.kappa0),
        closed,
    )?;
    if !r.objective.is_finite() {
        return Err(CliError::Optimization("objective is not finite".into()));
    }
    Ok(r)
}

fn fitted_vmf(r: &FitResult) -> CliResult<VmfParams> {
    r.params
        .as_vmf()
        .cloned()
        .ok_or_else(|| CliError::Optimization("unexpected parameter type".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub eta: f64,
    pub eta_ratio: f64,
    pub source: String,
    /// Closed-form reverse-KL prediction; absent for other divergences.
    pub predicted_c: Option<f64>,
    pub fitted_c: f64,
    pub gap: Option<f64>,
    pub axis_angle: f64,
    pub axis_recovered: bool,
    pub predicted_recovery: Option<bool>,
    pub nu_star: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub start_dispersion: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub experiment: String,
    pub seed: u64,
    pub d: usize,
    pub lambda: f64,
    pub kappa0: f64,
    pub u: Vec<f64>,
    pub divergence: String,
    pub objective_kind: String,
    #[serde(rename = "A")]
    pub a: f64,
    pub m2: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub eta_c: f64,
    pub axis_tolerance: f64,
    pub n_starts: usize,
    pub sweep: Vec<ThresholdRow>,
}

/// `eta` values of the sweep with their labels, sorted by `eta`.
pub fn sweep_etas(eta_c: f64, extra: Option<f64>) -> Vec<(f64, String)> {
    let mut etas: Vec<(f64, String)> = (0..SWEEP_POINTS)
        .map(|k| {
            let t = SWEEP_LO + (SWEEP_HI - SWEEP_LO) * k as f64 / (SWEEP_POINTS - 1) as f64;
            (t * eta_c, "sweep".to_string())
        })
        .collect();
    etas.push((1.0, "eta=1".into()));
    etas.push((2.0, "eta=2".into()));
    if let Some(e) = extra {
        etas.push((e, "user".into()));
    }
    etas.sort_by(|a, b| a.0.total_cmp(&b.0));
    etas
}

pub fn threshold_row(
    cfg: &ExperimentConfig,
    u: &[f64],
    eta: f64,
    eta_c: f64,
    source: &str,
) -> CliResult<ThresholdRow> {
    let target = AxialTarget::new(u, cfg.lambda, eta)?;
    let r = fit_sphere(cfg, &target)?;
    let v = fitted_vmf(&r)?;
    let fitted_c = dot(v.nu(), u);
    let axis_angle = v.axis().angle_to(&target.axis());
    let predicted_c = if cfg.divergence.is_reverse_kl() {
        Some(predicted_minimizer_c(cfg.d, cfg.lambda, eta, cfg.kappa0)?)
    } else {
        None
    };
    Ok(ThresholdRow {
        eta,
        eta_ratio: eta / eta_c,
        source: source.to_string(),
        predicted_c,
        fitted_c,
        gap: predicted_c.map(|p| (fitted_c - p).abs()),
        axis_angle,
        axis_recovered: axis_angle <= AXIS_TOL,
        predicted_recovery: predicted_c.map(|_| eta <= eta_c),
        nu_star: v.nu().to_vec(),
        objective: r.objective,
        converged: r.converged,
        start_dispersion: r.start_dispersion,
    })
}

pub fn run_threshold(cfg: &ExperimentConfig) -> CliResult<ThresholdReport> {
    ensure_dir(&cfg.out)?;
    let u = default_axis(cfg.d);
    let moments = marginal_moments(cfg.d, cfg.kappa0)?;
    let eta_c = eta_critical(cfg.d, cfg.lambda, cfg.kappa0)?;
    let etas = sweep_etas(eta_c, cfg.eta);
    let sweep = etas
        .par_iter()
        .map(|(eta, source)| threshold_row(cfg, &u, *eta, eta_c, source))
        .collect::<CliResult<Vec<_>>>()?;
    let report = ThresholdReport {
        experiment: cfg.experiment.name().to_string(),
        seed: cfg.seed,
        d: cfg.d,
        lambda: cfg.lambda,
        kappa0: cfg.kappa0,
        u,
        divergence: cfg.divergence.name().to_string(),
        objective_kind: if cfg.divergence.is_reverse_kl() {
            "closed-form".into()
        } else {
            "monte-carlo".into()
        },
        a: moments.a,
        m2: moments.m2,
        b: moments.b,
        eta_c,
        axis_tolerance: AXIS_TOL,
        n_starts: cfg.n_starts,
        sweep,
    };
    write_json(&cfg.out.join("threshold.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct Projected {
    pub x: Vec<f64>,
    #[serde(rename = "X")]
    pub px: f64,
    #[serde(rename = "Y")]
    pub py: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizerRecord {
    pub index: usize,
    pub c: f64,
    pub objective: f64,
    pub converged: bool,
    pub position: Option<Projected>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContourGrid {
    pub n_theta: usize,
    pub n_phi: usize,
    pub nodes_written: usize,
    pub omitted_nodes: usize,
    /// Polar step `pi / (n_theta - 1)` in radians.
    pub polar_spacing: f64,
    /// Lambert radius of the first ring off the centre.
    pub radial_spacing: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContourSummary {
    pub experiment: String,
    pub seed: u64,
    pub d: usize,
    pub lambda: f64,
    pub eta: f64,
    pub kappa0: f64,
    pub divergence: String,
    pub u: Vec<f64>,
    pub eta_c: f64,
    pub predicted_c: Option<f64>,
    pub fitted_c: f64,
    pub predicted_radius: Option<f64>,
    pub fitted_radius: f64,
    pub nu_star: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub start_dispersion: f64,
    pub minimizers: Vec<MinimizerRecord>,
    /// Grid node with the largest fitted log-density.
    pub qmax: Projected,
    pub grid: ContourGrid,
}

/// Grid indices, point on the sphere and its projection.
type GridNode = (usize, usize, [f64; 3], Projected);

fn project(x: &[f64], center: &[f64]) -> Option<Projected> {
    let [px, py] = lambert_project(x, center).ok()?;
    Some(Projected {
        x: x.to_vec(),
        px,
        py,
        radius: px.hypot(py),
    })
}

pub fn run_contours(cfg: &ExperimentConfig) -> CliResult<ContourSummary> {
    ensure_dir(&cfg.out)?;
    let eta = cfg.eta.unwrap_or(1.0);
    let u = default_axis(3);
    let target = AxialTarget::new(&u, cfg.lambda, eta)?;
    let eta_c = eta_critical(3, cfg.lambda, cfg.kappa0)?;
    let r = fit_sphere(cfg, &target)?;
    let v = fitted_vmf(&r)?;
    let fitted_c = dot(v.nu(), &u);
    let predicted_c = if cfg.divergence.is_reverse_kl() {
        Some(predicted_minimizer_c(3, cfg.lambda, eta, cfg.kappa0)?)
    } else {
        None
    };

    let n_theta = cfg.resolution;
    let n_phi = 2 * cfg.resolution;
    let rot = rotation_to_north(&u)?.transpose();
    let rows: Vec<Vec<Option<GridNode>>> = (0..n_theta)
        .into_par_iter()
        .map(|i| {
            let theta = PI * i as f64 / (n_theta - 1) as f64;
            (0..n_phi)
                .map(|j| {
                    let phi = 2.0 * PI * j as f64 / n_phi as f64;
                    let y = nalgebra::Vector3::new(
                        theta.sin() * phi.cos(),
                        theta.sin() * phi.sin(),
                        theta.cos(),
                    );
                    let x = rot * y;
                    let x = [x.x, x.y, x.z];
                    project(&x, &u).map(|p| (i, j, x, p))
                })
                .collect()
        })
        .collect();

    let comments = vec![
        "Lambert azimuthal equal-area coordinates centred at the target axis u".to_string(),
        format!("grid: polar angle theta_i = pi i / {}, azimuth phi_j = 2 pi j / {n_phi}", n_theta - 1),
        "log_p: target log-density, log_q: fitted vMF log-density, both w.r.t. the uniform probability measure".to_string(),
        "kind: grid | center | minimizer | fit | qmax | circle; antipodal grid nodes are omitted".to_string(),
    ];
    let mut w = CsvWriter::create(
        &cfg.out.join("contours.csv"),
        &comments,
        &["kind", "i", "j", "X", "Y", "log_p", "log_q"],
    )?;
    let log_p = |x: &[f64]| axial_log_density(&target, x).map_err(CliError::from);
    let log_q = |x: &[f64]| vmf_log_density(&v, x).map_err(CliError::from);
    let mut written = 0;
    let mut omitted = 0;
    let mut best: Option<(f64, Projected)> = None;
    for node in rows.into_iter().flatten() {
        let Some((i, j, x, p)) = node else {
            omitted += 1;
            continue;
        };
        let (lp, lq) = (log_p(&x)?, log_q(&x)?);
        w.row(&[
            "grid".into(),
            i.to_string(),
            j.to_string(),
            num(p.px),
            num(p.py),
            num(lp),
            num(lq),
        ])?;
        written += 1;
        if best.as_ref().is_none_or(|(b, _)| lq > *b) {
            best = Some((lq, p));
        }
    }
    let (_, qmax) = best.ok_or_else(|| CliError::Optimization("empty contour grid".into()))?;

    let mut marker = |kind: &str, i: String, x: &[f64]| -> CliResult<Option<Projected>> {
        let Some(p) = project(x, &u) else {
            return Ok(None);
        };
        w.row(&[
            kind.into(),
            i,
            String::new(),
            num(p.px),
            num(p.py),
            num(log_p(x)?),
            num(log_q(x)?),
        ])?;
        Ok(Some(p))
    };
    marker("center", String::new(), &u)?;
    let mut minimizers = Vec::new();
    for s in &r.starts {
        let Some(sv) = s.params.as_vmf() else {
            continue;
        };
        let position = marker("minimizer", s.index.to_string(), sv.nu())?;
        minimizers.push(MinimizerRecord {
            index: s.index,
            c: dot(sv.nu(), &u),
            objective: s.objective,
            converged: s.converged,
            position,
        });
    }
    marker("fit", String::new(), v.nu())?;
    marker("qmax", String::new(), &qmax.x)?;
    if let Some(c) = predicted_c {
        if eta > eta_c {
            for (k, x) in latitude_circle(&u, c, CIRCLE_POINTS)?.iter().enumerate() {
                marker("circle", k.to_string(), x)?;
            }
        }
    }
    w.finish()?;

    let summary = ContourSummary {
        experiment: cfg.experiment.name().to_string(),
        seed: cfg.seed,
        d: 3,
        lambda: cfg.lambda,
        eta,
        kappa0: cfg.kappa0,
        divergence: cfg.divergence.name().to_string(),
        u: u.clone(),
        eta_c,
        predicted_c,
        fitted_c,
        predicted_radius: predicted_c.map(lambert_radius),
        fitted_radius: lambert_radius(fitted_c),
        nu_star: v.nu().to_vec(),
        objective: r.objective,
        converged: r.converged,
        start_dispersion: r.start_dispersion,
        minimizers,
        qmax,
        grid: ContourGrid {
            n_theta,
            n_phi,
            nodes_written: written,
            omitted_nodes: omitted,
            polar_spacing: PI / (n_theta - 1) as f64,
            radial_spacing: lambert_radius((PI / (n_theta - 1) as f64).cos()),
        },
    };
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(summary)
}
