//! Named verification checks and the `verify-all` runner.
//!
//! Each criterion function returns its checks as data; failures never abort
//! the run.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use symvi_core::divergence::check_pushforward_invariance;
use symvi_core::euclidean::{
    canonical_even_target, correlation, make_elliptical_target, pushforward_density,
    random_rotation, random_spd,
};
use symvi_core::linalg::to_rows;
use symvi_core::optimize::{fit_locscale, orbit_objective_check};
use symvi_core::sphere::{eta_critical, marginal_moments, sample_vmf};
use symvi_core::{
    divergence_quadrature, AffineMap, AxialTarget, Density, DivergenceGenerator,
    EllipticalTargetSpec, LocScaleFamily, LocScaleParams, OptConfig, QuadratureSpec, VmfParams,
};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliResult;
use crate::euclid::{run_elliptical_recovery, run_even_recovery};
use crate::output::{ensure_dir, write_json};
use crate::sphere_exp::{
    default_axis, fit_sphere, threshold_row, SWEEP_HI, SWEEP_LO, SWEEP_POINTS,
};

/// `|p - q|` has a kink, so total variation needs a finer grid.
const TV_NODES: usize = 1600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|measured - expected| <= tolerance`.
    AbsDiff,
    /// `measured <= tolerance`.
    AtMost,
    /// `measured > tolerance`.
    Above,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    pub tolerance: f64,
    pub comparison: Comparison,
    /// Whether `--quad-tol` overrides the tolerance.
    pub quadrature: bool,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl Check {
    fn evaluate(mut self) -> Self {
        let m = self.measured;
        self.pass = match self.comparison {
            Comparison::AbsDiff => {
                let e = self.expected.unwrap_or(0.0);
                (m - e).abs() <= self.tolerance
            }
            Comparison::AtMost => m <= self.tolerance,
            Comparison::Above => m > self.tolerance,
        };
        self
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub criterion: String,
    /// Wall time; kept out of the report so reruns are byte-identical.
    #[serde(skip)]
    pub seconds: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub quad_tol: Option<f64>,
    pub n_checks: usize,
    pub n_failed: usize,
    pub criteria: Vec<CriterionReport>,
}

/// Check factory carrying the seed, output root and tolerance override.
#[derive(Debug, Clone)]
pub struct Verifier {
    pub seed: u64,
    pub quad_tol: Option<f64>,
}

impl Verifier {
    pub fn new(seed: u64, quad_tol: Option<f64>) -> Self {
        Self { seed, quad_tol }
    }

    fn make(
        &self,
        name: &str,
        measured: f64,
        expected: Option<f64>,
        tolerance: f64,
        comparison: Comparison,
        quadrature: bool,
    ) -> Check {
        let tolerance = match (quadrature, self.quad_tol) {
            (true, Some(t)) => t,
            _ => tolerance,
        };
        Check {
            name: name.to_string(),
            measured,
            expected,
            tolerance,
            comparison,
            quadrature,
            pass: false,
            details: None,
        }
        .evaluate()
    }

    fn near(&self, name: &str, measured: f64, expected: f64, tol: f64, quad: bool) -> Check {
        self.make(
            name,
            measured,
            Some(expected),
            tol,
            Comparison::AbsDiff,
            quad,
        )
    }

    fn at_most(&self, name: &str, measured: f64, tol: f64, quad: bool) -> Check {
        // NaN never passes.
        let m = if measured.is_nan() {
            f64::INFINITY
        } else {
            measured
        };
        self.make(name, m, None, tol, Comparison::AtMost, quad)
    }

    fn above(&self, name: &str, measured: f64, bound: f64) -> Check {
        self.make(name, measured, None, bound, Comparison::Above, false)
    }

    fn failure(&self, name: &str, err: impl std::fmt::Display) -> Check {
        self.at_most(name, f64::INFINITY, 0.0, false)
            .with_details(json!({ "error": err.to_string() }))
    }

    /// Sphere constants for `d = 3, lambda = 1, kappa0 = 2.5`.
    pub fn sphere_constants(&self) -> Vec<Check> {
        let m = match marginal_moments(3, 2.5) {
            Ok(m) => m,
            Err(e) => return vec![self.failure("sphere_constants", e)],
        };
        let mut out = vec![
            self.near("sphere_constants.A", m.a, 0.6135, 5e-4, true),
            self.near("sphere_constants.B", m.b, 0.2637, 5e-4, true),
        ];
        match eta_critical(3, 1.0, 2.5) {
            Ok(eta_c) => out.push(self.near("sphere_constants.eta_c", eta_c, 1.1632, 1e-3, true)),
            Err(e) => out.push(self.failure("sphere_constants.eta_c", e)),
        }
        let cfg = self.sphere_config();
        let u = default_axis(3);
        let c = AxialTarget::new(&u, 1.0, 2.0)
            .map_err(Into::into)
            .and_then(|t| fit_sphere(&cfg, &t))
            .map(|r| {
                let nu = r
                    .params
                    .as_vmf()
                    .map(|v| v.nu().to_vec())
                    .unwrap_or_default();
                nu.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>()
            });
        match c {
            Ok(c) => out.push(self.near("sphere_constants.c_at_eta_2", c, 0.5816, 1e-3, false)),
            Err(e) => out.push(self.failure("sphere_constants.c_at_eta_2", e)),
        }
        out
    }

    /// Quadrature moments against the `d = 3` closed forms.
    pub fn closed_form_moments(&self) -> Vec<Check> {
        let kappas = [0.25, 0.5, 1.0, 1.5, 2.5, 4.0, 7.5, 12.0, 20.0, 35.0];
        let coth = |x: f64| 1.0 / x.tanh();
        let mut gap_a: f64 = 0.0;
        let mut gap_b: f64 = 0.0;
        for &k in &kappas {
            match marginal_moments(3, k) {
                Ok(m) => {
                    gap_a = gap_a.max((m.a - (coth(k) - 1.0 / k)).abs());
                    gap_b = gap_b.max((m.b - (1.0 - 3.0 / k * coth(k) + 3.0 / (k * k))).abs());
                }
                Err(e) => return vec![self.failure("closed_form_moments", e)],
            }
        }
        let details = json!({ "d": 3, "kappa0": kappas });
        vec![
            self.at_most("closed_form_moments.A_max_gap", gap_a, 1e-10, true)
                .with_details(details.clone()),
            self.at_most("closed_form_moments.B_max_gap", gap_b, 1e-10, true)
                .with_details(details),
        ]
    }

    fn sphere_config(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(Experiment::SphereThreshold, "");
        cfg.seed = self.seed;
        cfg
    }

    /// Closed-form sweep over `[0.2, 3] eta_c`.
    pub fn phase_transition(&self) -> Vec<Check> {
        let cfg = self.sphere_config();
        let u = default_axis(3);
        let eta_c = match eta_critical(3, cfg.lambda, cfg.kappa0) {
            Ok(e) => e,
            Err(e) => return vec![self.failure("phase_transition", e)],
        };
        let mut max_gap: f64 = 0.0;
        let mut mismatches = 0usize;
        let mut rows = Vec::new();
        for k in 0..SWEEP_POINTS {
            let t = SWEEP_LO + (SWEEP_HI - SWEEP_LO) * k as f64 / (SWEEP_POINTS - 1) as f64;
            match threshold_row(&cfg, &u, t * eta_c, eta_c, "sweep") {
                Ok(row) => {
                    max_gap = max_gap.max(row.gap.unwrap_or(f64::INFINITY));
                    if Some(row.axis_recovered) != row.predicted_recovery {
                        mismatches += 1;
                    }
                    rows.push(json!({
                        "eta": row.eta,
                        "predicted_c": row.predicted_c,
                        "fitted_c": row.fitted_c,
                        "axis_recovered": row.axis_recovered,
                    }));
                }
                Err(e) => return vec![self.failure("phase_transition", e)],
            }
        }
        vec![
            self.at_most("phase_transition.max_c_gap", max_gap, 1e-4, false),
            self.at_most(
                "phase_transition.recovery_mismatches",
                mismatches as f64,
                0.0,
                false,
            )
            .with_details(json!({ "eta_c": eta_c, "rows": rows })),
        ]
    }

    /// Random generator, Gaussian pair and affine map per trial.
    pub fn pushforward_invariance(&self, trials: usize) -> Vec<Check> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0001);
        let gens = DivergenceGenerator::builtins();
        let mut worst: f64 = 0.0;
        let mut errors = Vec::new();
        let mut worst_by: Vec<(String, f64)> =
            gens.iter().map(|g| (g.name().to_string(), 0.0)).collect();
        for trial in 0..trials {
            let gi = trial % gens.len();
            let g = &gens[gi];
            let cov_p = random_spd(2, 0.5, 2.0, &mut rng);
            let mut cov_q = random_spd(2, 0.5, 2.0, &mut rng);
            if g.name() == DivergenceGenerator::CHI_SQUARED {
                // chi-squared between Gaussians is finite only for such pairs.
                cov_q += &cov_p;
            }
            let shift: Vec<f64> = (0..4)
                .map(|k| ((trial * 4 + k) as f64 * 0.7).sin())
                .collect();
            let a = random_rotation(2, &mut rng) * random_spd(2, 0.5, 2.0, &mut rng);
            let gap = (|| {
                let p = Density::gaussian(&shift[..2], &cov_p)?;
                let q = Density::gaussian(&shift[2..], &cov_q)?;
                let map = AffineMap::new(a, DVector::from_vec(vec![1.0, -2.0]))?;
                let nodes = if g.name() == DivergenceGenerator::TOTAL_VARIATION {
                    TV_NODES
                } else {
                    200
                };
                let quad = QuadratureSpec::default_for(&[&p, &q])?.with_nodes(nodes)?;
                check_pushforward_invariance(g, &p, &q, &map, &quad)
            })();
            let gap = match gap {
                Ok(g) => g,
                Err(e) => {
                    errors.push(format!("trial {trial} ({}): {e}", g.name()));
                    f64::INFINITY
                }
            };
            worst = worst.max(if gap.is_nan() { f64::INFINITY } else { gap });
            worst_by[gi].1 = worst_by[gi].1.max(gap);
        }
        let by: serde_json::Map<String, Value> =
            worst_by.into_iter().map(|(k, v)| (k, json!(v))).collect();
        vec![self
            .at_most("pushforward_invariance.max_gap", worst, 1e-5, true)
            .with_details(
                json!({ "trials": trials, "max_gap_by_generator": by, "errors": errors }),
            )]
    }

    /// Even-target mean recovery for reverse KL, forward KL and chi-squared.
    /// Artifacts go under `out` when given.
    pub fn even_recovery(&self, out: Option<&Path>) -> Vec<Check> {
        [
            DivergenceGenerator::REVERSE_KL,
            DivergenceGenerator::FORWARD_KL,
            DivergenceGenerator::CHI_SQUARED,
        ]
        .iter()
        .map(|name| {
            let check_name = format!("even_recovery.{name}.nu_error");
            let mut cfg = ExperimentConfig::defaults(Experiment::EvenRecovery, "");
            cfg.seed = self.seed;
            cfg.divergence = DivergenceGenerator::from_name(name).expect("built-in");
            cfg.out = scratch_dir(out, &format!("even-recovery-{name}"));
            let r = run_even_recovery(&cfg);
            cleanup(out, &cfg.out);
            match r {
                Ok(s) => self
                    .at_most(&check_name, s.nu_error, 1e-3, false)
                    .with_details(
                        json!({ "m": s.m, "nu_star": s.nu_star, "objective": s.fit.objective }),
                    ),
                Err(e) => self.failure(&check_name, e),
            }
        })
        .collect()
    }

    /// Proportionality and correlation checks on the elliptical fit.
    pub fn elliptical_recovery(&self, out: Option<&Path>) -> Vec<Check> {
        let mut cfg = ExperimentConfig::defaults(Experiment::EllipticalRecovery, "");
        cfg.seed = self.seed;
        cfg.out = scratch_dir(out, "elliptical-recovery");
        let r = run_elliptical_recovery(&cfg);
        cleanup(out, &cfg.out);
        match r {
            Ok(s) => vec![
                self.at_most("elliptical_recovery.residual_q", s.residual_q, 1e-3, false)
                    .with_details(json!({ "sigma_q": s.sigma_q, "lambda_hat_q": s.lambda_hat_q })),
                self.at_most("elliptical_recovery.residual_p", s.residual_p, 1e-5, true)
                    .with_details(json!({ "sigma_p": s.sigma_p, "lambda_hat_p": s.lambda_hat_p })),
                self.at_most(
                    "elliptical_recovery.rho_q_vs_shape",
                    s.max_rho_gap_q_shape,
                    1e-3,
                    false,
                )
                .with_details(json!({ "rho_q": s.rho_q, "rho_shape": s.rho_shape })),
                self.at_most(
                    "elliptical_recovery.rho_p_vs_rho_q",
                    s.max_rho_gap,
                    1e-3,
                    false,
                ),
            ],
            Err(e) => vec![self.failure("elliptical_recovery", e)],
        }
    }

    /// Rotating `N(0, diag(1, 3))` by 45 degrees changes its correlation;
    /// rotating `N(0, I)` does not.
    pub fn counterexample(&self) -> Vec<Check> {
        let s = 0.5f64.sqrt();
        let r = DMatrix::from_row_slice(2, 2, &[s, -s, s, s]);
        let sigma_iso = DMatrix::<f64>::identity(2, 2);
        let sigma_aniso = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let corr = |sigma: &DMatrix<f64>| -> symvi_core::Result<DMatrix<f64>> {
            let rot = AffineMap::new(r.clone(), DVector::zeros(2))?;
            let pushed = pushforward_density(&Density::gaussian(&[0.0, 0.0], sigma)?, &rot)?;
            let quad = QuadratureSpec::default_for(&[&pushed])?;
            correlation(&pushed, &quad)
        };
        let expected_aniso = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        match (corr(&sigma_iso), corr(&sigma_aniso)) {
            (Ok(c_iso), Ok(c_aniso)) => {
                let details = json!({
                    "rotation": to_rows(&r),
                    "sigma_isotropic": to_rows(&sigma_iso),
                    "sigma_anisotropic": to_rows(&sigma_aniso),
                    "rho_rotated_isotropic": to_rows(&c_iso),
                    "rho_rotated_anisotropic": to_rows(&c_aniso),
                    "expected_rotated_anisotropic": to_rows(&expected_aniso),
                });
                vec![
                    self.at_most(
                        "counterexample.rotated_anisotropic",
                        (&c_aniso - &expected_aniso).amax(),
                        1e-9,
                        true,
                    )
                    .with_details(details),
                    self.at_most(
                        "counterexample.rotated_isotropic",
                        (&c_iso - &sigma_iso).amax(),
                        1e-9,
                        true,
                    ),
                ]
            }
            (Err(e), _) | (_, Err(e)) => vec![self.failure("counterexample", e)],
        }
    }

    /// vMF sample moments against quadrature predictions, in standard errors.
    pub fn sampler_moments(&self) -> Vec<Check> {
        let n = 100_000;
        let mut out = Vec::new();
        for (k, &(d, kappa)) in [(3usize, 2.5f64), (5, 10.0), (8, 0.5)].iter().enumerate() {
            let name = format!("sampler_moments.d{d}_kappa{kappa}.max_z");
            let mut nu = vec![0.0; d];
            nu[0] = 0.6;
            nu[d - 1] = 0.8;
            let r = (|| -> symvi_core::Result<(f64, Value)> {
                let params = VmfParams::new(&nu, kappa)?;
                let xs = sample_vmf(&params, n, self.seed.wrapping_add(k as u64))?;
                let m = marginal_moments(d, kappa)?;
                let t: Vec<f64> = xs.iter().map(|x| dot(x, &nu)).collect();
                let z_a = z_score(&t, m.a);
                // Along w = e_1, c = w^T nu = 0.6.
                let c = nu[0];
                let predicted = (1.0 - m.m2) / (d as f64 - 1.0) + m.b * c * c;
                let sq: Vec<f64> = xs.iter().map(|x| x[0] * x[0]).collect();
                let z_sq = z_score(&sq, predicted);
                Ok((
                    z_a.abs().max(z_sq.abs()),
                    json!({ "n": n, "z_mean": z_a, "z_second_moment": z_sq }),
                ))
            })();
            out.push(match r {
                Ok((z, details)) => self.at_most(&name, z, 4.0, false).with_details(details),
                Err(e) => self.failure(&name, e),
            });
        }
        for (k, d) in [3usize, 6].into_iter().enumerate() {
            let name = format!("sampler_moments.uniform_limit_d{d}.z");
            let mut nu = vec![0.0; d];
            nu[1] = 1.0;
            let r = VmfParams::new(&nu, 1e-6)
                .and_then(|p| sample_vmf(&p, n, self.seed.wrapping_add(100 + k as u64)));
            out.push(match r {
                Ok(xs) => {
                    let sq: Vec<f64> = xs.iter().map(|x| x[1] * x[1]).collect();
                    let z = z_score(&sq, 1.0 / d as f64);
                    self.at_most(&name, z.abs(), 4.0, false)
                }
                Err(e) => self.failure(&name, e),
            });
        }
        out
    }

    /// Property suites: sphere moment bounds, orbit constancy, self-divergence,
    /// duality and the well-specified fit.
    pub fn properties(&self) -> Vec<Check> {
        let mut out = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0002);

        let mut min_excess = f64::INFINITY;
        let mut min_b = f64::INFINITY;
        for d in 3..=12 {
            for kappa in [0.01, 0.1, 0.5, 1.0, 2.5, 5.0, 10.0, 25.0, 50.0, 100.0] {
                match marginal_moments(d, kappa) {
                    Ok(m) => {
                        min_excess = min_excess.min(m.m2 - 1.0 / d as f64);
                        min_b = min_b.min(m.b);
                    }
                    Err(_) => {
                        min_excess = f64::NEG_INFINITY;
                        min_b = f64::NEG_INFINITY;
                    }
                }
            }
        }
        out.push(self.above("properties.min_m2_minus_uniform", min_excess, 0.0));
        out.push(self.above("properties.min_B", min_b, 0.0));

        let gens = DivergenceGenerator::builtins();
        let fam = LocScaleFamily::gaussian(2).expect("d >= 1");
        let m = DVector::from_vec(vec![1.0, 1.0]);
        let even_gap = (|| -> symvi_core::Result<f64> {
            let target = canonical_even_target(&m)?;
            let quad = QuadratureSpec::default_for(&[&target])?;
            let mut worst: f64 = 0.0;
            for g in &gens {
                let nu = DVector::from_fn(2, |_, _| rand::Rng::random_range(&mut rng, -1.0..3.0));
                let params = LocScaleParams::new(nu, random_spd(2, 0.5, 2.0, &mut rng))?;
                let gap = orbit_objective_check(
                    &target,
                    &fam,
                    g,
                    &params,
                    &[AffineMap::reflection(&m)],
                    &quad,
                )?;
                worst = worst.max(gap);
            }
            Ok(worst)
        })();
        out.push(match even_gap {
            Ok(g) => self.at_most("properties.orbit_constancy_even", g, 1e-6, true),
            Err(e) => self.failure("properties.orbit_constancy_even", e),
        });

        let ell_gap = (|| -> symvi_core::Result<f64> {
            let shape = crate::config::default_shape();
            let target =
                make_elliptical_target(&EllipticalTargetSpec::canonical(m.clone(), shape.clone()))?;
            let quad = QuadratureSpec::tensor(vec![-29.0, -29.0], vec![31.0, 31.0], 400)?;
            let maps = (0..5)
                .map(|_| AffineMap::elliptical_rotation(&m, &shape, &random_rotation(2, &mut rng)))
                .collect::<symvi_core::Result<Vec<_>>>()?;
            let params = LocScaleParams::new(
                DVector::from_vec(vec![1.3, 0.6]),
                random_spd(2, 0.5, 2.0, &mut rng),
            )?;
            orbit_objective_check(
                &target,
                &fam,
                &DivergenceGenerator::reverse_kl(),
                &params,
                &maps,
                &quad,
            )
        })();
        out.push(match ell_gap {
            Ok(g) => self.at_most("properties.orbit_constancy_elliptical", g, 1e-5, true),
            Err(e) => self.failure("properties.orbit_constancy_elliptical", e),
        });

        let mut self_div: f64 = 0.0;
        let mut dual_gap: f64 = 0.0;
        let mut nonneg: f64 = f64::INFINITY;
        for g in &gens {
            let r = (|| -> symvi_core::Result<(f64, f64, f64)> {
                let p = Density::gaussian(&[0.0, 0.5], &random_spd(2, 0.5, 2.0, &mut rng))?;
                let q = Density::gaussian(&[0.3, 0.0], &random_spd(2, 0.5, 2.0, &mut rng))?;
                let even = canonical_even_target(&m)?;
                let quad_pp = QuadratureSpec::default_for(&[&p])?;
                let quad_even = QuadratureSpec::default_for(&[&even])?;
                let s = divergence_quadrature(g, &p, &p, &quad_pp)?
                    .abs()
                    .max(divergence_quadrature(g, &even, &even, &quad_even)?.abs());
                let quad = QuadratureSpec::default_for(&[&p, &q])?;
                let a = divergence_quadrature(g, &p, &q, &quad)?;
                let b = divergence_quadrature(&g.dual(), &q, &p, &quad)?;
                Ok((s, (a - b).abs(), a))
            })();
            match r {
                Ok((s, d, a)) => {
                    self_div = self_div.max(s);
                    dual_gap = dual_gap.max(d);
                    nonneg = nonneg.min(a);
                }
                Err(_) => {
                    self_div = f64::INFINITY;
                    dual_gap = f64::INFINITY;
                }
            }
        }
        out.push(self.at_most("properties.self_divergence", self_div, 1e-8, true));
        out.push(self.at_most("properties.duality_gap", dual_gap, 1e-8, true));
        out.push(self.above("properties.min_divergence_plus_1e-9", nonneg + 1e-9, 0.0));

        let well = (|| -> symvi_core::Result<f64> {
            let target = Density::gaussian(&[1.0, -0.5], &crate::config::default_shape())?;
            let quad = QuadratureSpec::default_for(&[&target])?;
            let cfg = OptConfig {
                seed: self.seed,
                ..OptConfig::default()
            };
            let r = fit_locscale(
                &target,
                &fam,
                &DivergenceGenerator::forward_kl(),
                &quad,
                &cfg,
                None,
            )?;
            Ok(r.objective)
        })();
        out.push(match well {
            Ok(v) => self.at_most("properties.well_specified_objective", v, 1e-8, false),
            Err(e) => self.failure("properties.well_specified_objective", e),
        });
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(mean(v) - expected) / se(v)`.
fn z_score(v: &[f64], expected: f64) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean - expected) / (var / n).sqrt()
}

fn scratch_dir(out: Option<&Path>, name: &str) -> std::path::PathBuf {
    match out {
        Some(dir) => dir.join(name),
        None => std::env::temp_dir().join(format!("symvi-verify-{}-{name}", std::process::id())),
    }
}

fn cleanup(out: Option<&Path>, dir: &Path) {
    if out.is_none() {
        let _ = std::fs::remove_dir_all(dir);
    }
}

fn timed(name: &str, f: impl FnOnce() -> Vec<Check>) -> CriterionReport {
    let start = Instant::now();
    let checks = f();
    CriterionReport {
        criterion: name.to_string(),
        seconds: start.elapsed().as_secs_f64(),
        pass: checks.iter().all(|c| c.pass),
        checks,
    }
}

pub const PUSHFORWARD_TRIALS: usize = 50;

/// Runs every criterion, writing `verification.json` and the recovery
/// artifacts under `out`.
pub fn run_verify_all(
    seed: u64,
    quad_tol: Option<f64>,
    out: &Path,
) -> CliResult<VerificationReport> {
    ensure_dir(out)?;
    let v = Verifier::new(seed, quad_tol);
    let criteria = vec![
        timed("sphere_constants", || v.sphere_constants()),
        timed("closed_form_moments", || v.closed_form_moments()),
        timed("phase_transition", || v.phase_transition()),
        timed("pushforward_invariance", || {
            v.pushforward_invariance(PUSHFORWARD_TRIALS)
        }),
        timed("even_recovery", || v.even_recovery(Some(out))),
        timed("elliptical_recovery", || v.elliptical_recovery(Some(out))),
        timed("counterexample", || v.counterexample()),
        timed("sampler_moments", || v.sampler_moments()),
        timed("properties", || v.properties()),
    ];
    let n_checks = criteria.iter().map(|c| c.checks.len()).sum();
    let n_failed = criteria
        .iter()
        .flat_map(|c| &c.checks)
        .filter(|c| !c.pass)
        .count();
    let report = VerificationReport {
        seed,
        quad_tol,
        n_checks,
        n_failed,
        criteria,
    };
    write_json(&out.join("verification.json"), &report)?;
    Ok(report)
}
