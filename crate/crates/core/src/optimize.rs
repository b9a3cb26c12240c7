//! Multi-start minimisation of divergence objectives.
//!
//! Location-scale fits optimise `(nu, L)` where `S = L L^T` and `L` is lower
//! triangular with its diagonal stored as logarithms. Sphere fits optimise an
//! ambient vector whose normalisation is the mean direction, optionally
//! followed by `log kappa`; search directions are projected onto the tangent
//! space and iterates are renormalised after every step.
//!
//! Each start is an independent deterministic run, so starts may execute in
//! parallel; the reported fit is the start with the lowest objective, ties
//! broken by start index.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::divergence::{
    divergence_from_log_values, divergence_monte_carlo, log_values, Density, DivergenceGenerator,
    QuadratureSpec, DEFAULT_BOX_HALF_WIDTH, MIN_MONTE_CARLO_SAMPLES,
};
use crate::error::{invalid, Error, Result};
use crate::euclidean::{pushforward_params, AffineMap, LocScaleFamily, LocScaleParams};
use crate::linalg::{check_spd, frobenius};
use crate::quadrature::pairwise_sum;
use crate::sphere::{AxialTarget, ReducedObjective, VmfParams, VmfSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMethod {
    /// BFGS with central finite-difference gradients and Armijo backtracking.
    QuasiNewton,
    /// Nelder-Mead simplex search.
    DirectSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    pub method: OptMethod,
    pub max_iters: usize,
    /// Relative step of the central differences.
    pub grad_step: f64,
    pub tol_obj: f64,
    pub tol_param: f64,
    pub n_starts: usize,
    pub seed: u64,
    /// Draws per Monte Carlo objective evaluation.
    pub mc_samples: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            method: OptMethod::QuasiNewton,
            max_iters: 500,
            grad_step: 1e-5,
            tol_obj: 1e-12,
            tol_param: 1e-9,
            n_starts: 4,
            seed: 0,
            mc_samples: 20_000,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if self.n_starts < 1 {
            return Err(invalid("n_starts must be >= 1"));
        }
        for (name, v) in [
            ("grad_step", self.grad_step),
            ("tol_obj", self.tol_obj),
            ("tol_param", self.tol_param),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.mc_samples < MIN_MONTE_CARLO_SAMPLES {
            return Err(invalid(format!(
                "mc_samples must be >= {MIN_MONTE_CARLO_SAMPLES}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedParams {
    LocScale(LocScaleParams),
    Vmf(VmfParams),
}

impl FittedParams {
    pub fn as_locscale(&self) -> Option<&LocScaleParams> {
        match self {
            Self::LocScale(p) => Some(p),
            Self::Vmf(_) => None,
        }
    }

    pub fn as_vmf(&self) -> Option<&VmfParams> {
        match self {
            Self::Vmf(p) => Some(p),
            Self::LocScale(_) => None,
        }
    }
}

/// Outcome of one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub index: usize,
    pub params: FittedParams,
    pub objective: f64,
    pub n_evals: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: FittedParams,
    pub objective: f64,
    /// Objective evaluations summed over all starts.
    pub n_evals: usize,
    /// Largest pairwise parameter distance among finite per-start optima.
    pub start_dispersion: f64,
    pub converged: bool,
    pub starts: Vec<StartOutcome>,
    /// Best objective after each iteration of the winning start.
    pub trace: Vec<f64>,
}

/// Chart hooks for a local solver: tangent projection and retraction.
trait Geometry: Sync {
    fn project(&self, _x: &[f64], _v: &mut [f64]) {}
    fn retract(&self, _x: &mut [f64]) {}
}

struct Flat;
impl Geometry for Flat {}

/// First `d` coordinates live on the unit sphere.
struct SphereBlock(usize);

impl Geometry for SphereBlock {
    fn project(&self, x: &[f64], v: &mut [f64]) {
        let d = self.0;
        let n2: f64 = x[..d].iter().map(|a| a * a).sum();
        let dot: f64 = x[..d].iter().zip(&v[..d]).map(|(a, b)| a * b).sum();
        for i in 0..d {
            v[i] -= dot / n2 * x[i];
        }
    }

    fn retract(&self, x: &mut [f64]) {
        let d = self.0;
        let n = x[..d].iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 0.0 {
            x[..d].iter_mut().for_each(|a| *a /= n);
        }
    }
}

struct LocalResult {
    x: Vec<f64>,
    f: f64,
    n_evals: usize,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn clean(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fd_gradient(
    obj: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    step: f64,
    evals: &mut usize,
) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = clean(obj(&xp));
        xp[i] = x[i] - h;
        let fm = clean(obj(&xp));
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
        if !g[i].is_finite() {
            g[i] = 0.0;
        }
    }
    *evals += 2 * x.len();
    g
}

fn bfgs(
    obj: &(dyn Fn(&[f64]) -> f64 + Sync),
    geom: &dyn Geometry,
    x0: &[f64],
    cfg: &OptConfig,
) -> LocalResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    geom.retract(&mut x);
    let mut f = clean(obj(&x));
    let mut evals = 1;
    let mut trace = vec![f];
    if !f.is_finite() {
        return LocalResult {
            x,
            f,
            n_evals: evals,
            iterations: 0,
            converged: false,
            trace,
        };
    }
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut g = fd_gradient(obj, &x, cfg.grad_step, &mut evals);
    geom.project(&x, &mut g);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= cfg.tol_param {
            converged = true;
            break;
        }
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut p: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        geom.project(&x, &mut p);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            geom.retract(&mut xn);
            let fn_ = clean(obj(&xn));
            evals += 1;
            if fn_.is_finite() && fn_ <= f + 1e-4 * alpha * slope {
                accepted = Some((xn, fn_));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            // No decrease along the direction: at the finite-difference
            // noise floor.
            converged = gmax <= 1e-5 * f.abs().max(1.0);
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let mut gn = fd_gradient(obj, &xn, cfg.grad_step, &mut evals);
        geom.project(&xn, &mut gn);
        let mut y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let mut s_t = s.clone();
        geom.project(&xn, &mut s_t);
        geom.project(&xn, &mut y);
        let sy = dot(&s_t, &y);
        if sy > 1e-12 * norm(&s_t) * norm(&y) && sy > 0.0 {
            let rho = 1.0 / sy;
            let sv = DVector::from_column_slice(&s_t);
            let yv = DVector::from_column_slice(&y);
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - &sv * yv.transpose() * rho;
            let right = &eye - &yv * sv.transpose() * rho;
            h = &left * &h * &right + &sv * sv.transpose() * rho;
        }
        let df = (f - fn_).abs();
        let step = norm(&s);
        x = xn;
        f = fn_;
        g = gn;
        trace.push(f);
        if df <= cfg.tol_obj * f.abs().max(1.0) && step <= cfg.tol_param * norm(&x).max(1.0) {
            converged = true;
            break;
        }
    }
    LocalResult {
        x,
        f,
        n_evals: evals,
        iterations,
        converged,
        trace,
    }
}

fn nelder_mead(
    obj: &(dyn Fn(&[f64]) -> f64 + Sync),
    geom: &dyn Geometry,
    x0: &[f64],
    cfg: &OptConfig,
) -> LocalResult {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &mut Vec<f64>| {
        geom.retract(x);
        evals += 1;
        clean(obj(x))
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    let f0 = eval(&mut start);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut v = start.clone();
        v[i] += 0.1 * start[i].abs().max(1.0);
        let fv = eval(&mut v);
        simplex.push((v, fv));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);
    let mut trace = vec![simplex[0].1];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| {
                norm(
                    &v.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                )
            })
            .fold(0.0, f64::max);
        if best.is_finite()
            && (worst - best).abs() <= cfg.tol_obj * best.abs().max(1.0)
            && diameter <= cfg.tol_param * norm(&simplex[0].0).max(1.0)
        {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(v, _)| v[k]).sum::<f64>() / n as f64)
            .collect();
        let towards = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let mut xr = towards(-1.0);
        let fr = eval(&mut xr);
        if fr < simplex[0].1 {
            let mut xe = towards(-2.0);
            let fe = eval(&mut xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (mut xc, t) = if fr < simplex[n].1 {
                (towards(-0.5), fr)
            } else {
                (towards(0.5), simplex[n].1)
            };
            let fc = eval(&mut xc);
            if fc < t {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let mut v: Vec<f64> = x_best
                        .iter()
                        .zip(&item.0)
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    let fv = eval(&mut v);
                    *item = (v, fv);
                }
            }
        }
        order(&mut simplex);
        trace.push(simplex[0].1);
    }
    let (x, f) = simplex.swap_remove(0);
    LocalResult {
        x,
        f,
        n_evals: evals,
        iterations,
        converged: converged && f.is_finite(),
        trace,
    }
}

fn run_local(
    obj: &(dyn Fn(&[f64]) -> f64 + Sync),
    geom: &dyn Geometry,
    x0: &[f64],
    cfg: &OptConfig,
) -> LocalResult {
    match cfg.method {
        OptMethod::QuasiNewton => bfgs(obj, geom, x0, cfg),
        OptMethod::DirectSearch => nelder_mead(obj, geom, x0, cfg),
    }
}

/// Runs every start, then merges deterministically.
fn multi_start(
    obj: &(dyn Fn(&[f64]) -> f64 + Sync),
    geom: &dyn Geometry,
    starts: &[Vec<f64>],
    cfg: &OptConfig,
    decode: &(dyn Fn(&[f64]) -> Result<FittedParams> + Sync),
    distance: &dyn Fn(&FittedParams, &FittedParams) -> f64,
) -> Result<FitResult> {
    let locals: Vec<LocalResult> = starts
        .par_iter()
        .map(|x0| run_local(obj, geom, x0, cfg))
        .collect();
    let mut outcomes = Vec::with_capacity(locals.len());
    let mut best: Option<usize> = None;
    for (i, r) in locals.iter().enumerate() {
        if !r.f.is_finite() {
            continue;
        }
        let Ok(params) = decode(&r.x) else { continue };
        if best.is_none_or(|b| r.f < locals[b].f) {
            best = Some(i);
        }
        outcomes.push(StartOutcome {
            index: i,
            params,
            objective: r.f,
            n_evals: r.n_evals,
            iterations: r.iterations,
            converged: r.converged,
        });
    }
    let n_evals = locals.iter().map(|r| r.n_evals).sum();
    let Some(b) = best else {
        return Err(Error::OptimizationFailed(
            "objective is not finite at any start".into(),
        ));
    };
    let mut start_dispersion: f64 = 0.0;
    for i in 0..outcomes.len() {
        for j in (i + 1)..outcomes.len() {
            start_dispersion =
                start_dispersion.max(distance(&outcomes[i].params, &outcomes[j].params));
        }
    }
    let winner = outcomes
        .iter()
        .find(|o| o.index == b)
        .expect("best start has an outcome");
    Ok(FitResult {
        params: winner.params.clone(),
        objective: winner.objective,
        n_evals,
        start_dispersion,
        converged: winner.converged,
        trace: locals[b].trace.clone(),
        starts: outcomes,
    })
}

fn lower_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// `(nu, log-diagonal Cholesky factor)` of `params`.
pub fn encode_locscale(params: &LocScaleParams) -> Result<Vec<f64>> {
    let d = params.dim();
    let l = params
        .scale()
        .clone()
        .cholesky()
        .ok_or_else(|| invalid("scale matrix has no Cholesky factor"))?
        .l();
    let mut x: Vec<f64> = params.nu().iter().copied().collect();
    for i in 0..d {
        for j in 0..=i {
            x.push(if i == j { l[(i, i)].ln() } else { l[(i, j)] });
        }
    }
    Ok(x)
}

pub fn decode_scale(d: usize, theta: &[f64]) -> DMatrix<f64> {
    let mut l = DMatrix::<f64>::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            l[(i, j)] = if i == j { theta[k].exp() } else { theta[k] };
            k += 1;
        }
    }
    &l * l.transpose()
}

/// Grid mass of `Q` within which the target grid is trusted.
const FAST_MASS_TOL: f64 = 1e-9;
/// Grid mass of `Q` beyond which `Q` counts as unresolved and infeasible.
const RESOLVED_MASS_TOL: f64 = 1e-6;

/// Largest per-axis growth of the fallback box before the target itself
/// would be under-resolved.
const MAX_WIDENING: f64 = 4.0;

fn within_widening(base: &QuadratureSpec, wide: &QuadratureSpec) -> bool {
    match (&base.truncation_box, &wide.truncation_box) {
        (Some(b), Some(w)) => (0..b.lower.len())
            .all(|k| w.upper[k] - w.lower[k] <= MAX_WIDENING * (b.upper[k] - b.lower[k])),
        _ => false,
    }
}

fn log_mass(log_q: &[f64], weights: &[f64]) -> f64 {
    let terms: Vec<f64> = log_q
        .iter()
        .zip(weights)
        .map(|(l, w)| w * l.exp())
        .collect();
    pairwise_sum(&terms)
}

/// Minimises `D_f(target || Q_{nu,S})` over a location-scale family, or over
/// `nu` alone when `fix_s` is given.
///
/// The objective is integrated on `quad`. Where `Q` is not resolved there,
/// a box covering the target and `Q` is used instead; members that no grid
/// of that size resolves get `+∞`.
pub fn fit_locscale(
    target: &Density,
    fam: &LocScaleFamily,
    g: &DivergenceGenerator,
    quad: &QuadratureSpec,
    cfg: &OptConfig,
    fix_s: Option<&DMatrix<f64>>,
) -> Result<FitResult> {
    cfg.validate()?;
    let d = fam.dim();
    if target.dim() != d {
        return Err(invalid(format!(
            "target has dim {}, family has dim {d}",
            target.dim()
        )));
    }
    if let Some(s) = fix_s {
        if s.nrows() != d {
            return Err(invalid("fixed scale has the wrong dimension"));
        }
        check_spd(s, "fixed scale")?;
    }
    let grid = quad.grid(&[target])?;
    let log_p = log_values(target, &grid);

    let build = |x: &[f64]| -> Result<LocScaleParams> {
        let nu = DVector::from_column_slice(&x[..d]);
        let s = match fix_s {
            Some(s) => s.clone(),
            None => decode_scale(d, &x[d..]),
        };
        LocScaleParams::new(nu, s)
    };
    let objective = |x: &[f64]| -> f64 {
        let Ok(params) = build(x) else {
            return f64::INFINITY;
        };
        let Ok(q) = fam.member_density(&params) else {
            return f64::INFINITY;
        };
        let log_q = log_values(&q, &grid);
        if (log_mass(&log_q, &grid.weights) - 1.0).abs() <= FAST_MASS_TOL {
            return divergence_from_log_values(g, &log_p, &log_q, &grid.weights);
        }
        // Q leaves the box or is narrower than the node spacing: retry on a
        // box covering both, and reject Q if that still cannot resolve it.
        let Ok(wide) =
            QuadratureSpec::covering(&[target, &q], DEFAULT_BOX_HALF_WIDTH, quad.nodes_per_axis)
        else {
            return f64::INFINITY;
        };
        if !within_widening(quad, &wide) {
            return f64::INFINITY;
        }
        let Ok(wide) = wide.grid(&[target, &q]) else {
            return f64::INFINITY;
        };
        let log_q = log_values(&q, &wide);
        if (log_mass(&log_q, &wide.weights) - 1.0).abs() > RESOLVED_MASS_TOL {
            return f64::INFINITY;
        }
        let log_p = log_values(target, &wide);
        divergence_from_log_values(g, &log_p, &log_q, &wide.weights)
    };

    let (center, spread) = match (target.extent(), quad.truncation_box.as_ref()) {
        (Some(e), _) => (e.center.clone(), e.scale.clone()),
        (None, Some(b)) => (
            b.lower
                .iter()
                .zip(&b.upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
            b.lower
                .iter()
                .zip(&b.upper)
                .map(|(l, u)| 0.125 * (u - l))
                .collect(),
        ),
        (None, None) => (vec![0.0; d], vec![1.0; d]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<Vec<f64>> = (0..cfg.n_starts)
        .map(|_| {
            let mut x: Vec<f64> = (0..d)
                .map(|i| center[i] + spread[i] * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            let u: f64 = rng.random();
            let scale = (0.25f64.ln() + u * (16.0f64).ln()).exp();
            if fix_s.is_none() {
                for i in 0..d {
                    for j in 0..=i {
                        x.push(if i == j { 0.5 * scale.ln() } else { 0.0 });
                    }
                }
            }
            x
        })
        .collect();
    debug_assert!(starts
        .iter()
        .all(|s| s.len() == d + if fix_s.is_some() { 0 } else { lower_len(d) }));

    let decode = |x: &[f64]| build(x).map(FittedParams::LocScale);
    let distance = |a: &FittedParams, b: &FittedParams| match (a, b) {
        (FittedParams::LocScale(a), FittedParams::LocScale(b)) => a.distance(b),
        _ => f64::INFINITY,
    };
    multi_start(&objective, &Flat, &starts, cfg, &decode, &distance)
}

/// Minimises `D_f(target || vMF(nu, kappa))` over the sphere, and over
/// `kappa` unless `kappa0` fixes it.
///
/// With `use_closed_form` the generator must be reverse KL and the reduced
/// quadratic objective is used. Otherwise each evaluation is a Monte Carlo
/// estimate with the same seed, so the objective is a fixed function of the
/// parameters. The vMF marginal sampler uses rejection, which makes that
/// function discontinuous in `kappa`; a free `kappa` therefore forces direct
/// search on the Monte Carlo route.
pub fn fit_vmf(
    target: &AxialTarget,
    g: &DivergenceGenerator,
    cfg: &OptConfig,
    kappa0: Option<f64>,
    use_closed_form: bool,
) -> Result<FitResult> {
    cfg.validate()?;
    if let Some(k) = kappa0 {
        if !(k > 0.0) || !k.is_finite() {
            return Err(invalid(format!("kappa0 must be positive, got {k}")));
        }
    }
    if use_closed_form && !g.is_reverse_kl() {
        return Err(invalid(format!(
            "the closed-form sphere objective requires reverse KL, got '{}'",
            g.name()
        )));
    }
    let d = target.dim();
    let free_kappa = kappa0.is_none();
    let split = |x: &[f64]| -> (Vec<f64>, f64) {
        let n = norm(&x[..d]);
        let nu: Vec<f64> = x[..d].iter().map(|a| a / n).collect();
        let kappa = match kappa0 {
            Some(k) => k,
            None => x[d].exp(),
        };
        (nu, kappa)
    };

    let fixed_reduced = match (use_closed_form, kappa0) {
        (true, Some(k)) => Some(ReducedObjective::new(target, k)?),
        _ => None,
    };
    let p = target.density()?;
    let objective = |x: &[f64]| -> f64 {
        if norm(&x[..d]) == 0.0 {
            return f64::INFINITY;
        }
        let (nu, kappa) = split(x);
        if !(kappa > 0.0) || !kappa.is_finite() {
            return f64::INFINITY;
        }
        if use_closed_form {
            return match &fixed_reduced {
                Some(r) => r.eval(&nu),
                None => ReducedObjective::new(target, kappa)
                    .map(|r| r.eval(&nu))
                    .unwrap_or(f64::INFINITY),
            };
        }
        let Ok(params) = VmfParams::new(&nu, kappa) else {
            return f64::INFINITY;
        };
        let Ok(q) = params.density() else {
            return f64::INFINITY;
        };
        let sampler = VmfSampler::new(&params);
        divergence_monte_carlo(g, &p, &q, &sampler, cfg.mc_samples, cfg.seed)
            .map(|e| e.estimate)
            .unwrap_or(f64::INFINITY)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<Vec<f64>> = (0..cfg.n_starts)
        .map(|_| {
            let mut x: Vec<f64>;
            loop {
                x = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&x);
                if n > 1e-8 {
                    x.iter_mut().for_each(|a| *a /= n);
                    break;
                }
            }
            let u: f64 = rng.random();
            if free_kappa {
                x.push(0.25f64.ln() + u * 16.0f64.ln());
            }
            x
        })
        .collect();

    let mut local_cfg = cfg.clone();
    if free_kappa && !use_closed_form {
        local_cfg.method = OptMethod::DirectSearch;
    }
    let decode = |x: &[f64]| {
        let (nu, kappa) = split(x);
        VmfParams::new(&nu, kappa).map(FittedParams::Vmf)
    };
    let distance = |a: &FittedParams, b: &FittedParams| match (a, b) {
        (FittedParams::Vmf(a), FittedParams::Vmf(b)) => {
            let dn = a
                .nu()
                .iter()
                .zip(b.nu())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>();
            (dn + (a.kappa() - b.kappa()).powi(2)).sqrt()
        }
        _ => f64::INFINITY,
    };
    multi_start(
        &objective,
        &SphereBlock(d),
        &starts,
        &local_cfg,
        &decode,
        &distance,
    )
}

/// Largest change of `D_f(target || Q_params)` when `params` is moved along
/// the orbit of each map.
pub fn orbit_objective_check(
    target: &Density,
    fam: &LocScaleFamily,
    g: &DivergenceGenerator,
    params: &LocScaleParams,
    maps: &[AffineMap],
    quad: &QuadratureSpec,
) -> Result<f64> {
    let grid = quad.grid(&[target])?;
    let log_p = log_values(target, &grid);
    let value = |params: &LocScaleParams| -> Result<f64> {
        let q = fam.member_density(params)?;
        let log_q = log_values(&q, &grid);
        Ok(divergence_from_log_values(g, &log_p, &log_q, &grid.weights))
    };
    let base = value(params)?;
    let mut gap: f64 = 0.0;
    for map in maps {
        let moved = pushforward_params(params, map)?;
        let v = value(&moved)?;
        let diff = if base.is_infinite() && v == base {
            0.0
        } else {
            (v - base).abs()
        };
        gap = gap.max(diff);
    }
    Ok(gap)
}

/// Frobenius distance between scale matrices, for reporting.
pub fn scale_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    frobenius(&(a - b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::Density;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn config_validation() {
        assert!(OptConfig::default().validate().is_ok());
        let bad = OptConfig {
            n_starts: 0,
            ..OptConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptConfig {
            tol_obj: 0.0,
            ..OptConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptConfig {
            max_iters: 0,
            ..OptConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bfgs_solves_rosenbrock_with_monotone_trace() {
        let cfg = OptConfig {
            max_iters: 2000,
            ..OptConfig::default()
        };
        let r = bfgs(&rosenbrock, &Flat, &[-1.2, 1.0], &cfg);
        assert!(
            (r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            r.x
        );
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn nelder_mead_solves_quadratic() {
        let cfg = OptConfig {
            max_iters: 5000,
            tol_param: 1e-8,
            ..OptConfig::default()
        };
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.7).powi(2);
        let r = nelder_mead(&f, &Flat, &[2.0, 2.0], &cfg);
        assert!(r.converged);
        assert!((r.x[0] - 0.3).abs() < 1e-6 && (r.x[1] + 0.7).abs() < 1e-6);
    }

    #[test]
    fn sphere_geometry_keeps_unit_norm() {
        let f = |x: &[f64]| {
            let n = norm(&x[..3]);
            -(x[2] / n)
        };
        let r = bfgs(&f, &SphereBlock(3), &[1.0, 0.2, 0.1], &OptConfig::default());
        assert!((norm(&r.x) - 1.0).abs() < 1e-14);
        assert!((r.x[2] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cholesky_round_trip() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0]);
        let p = LocScaleParams::new(DVector::from_vec(vec![1.0, -1.0]), s.clone()).unwrap();
        let x = encode_locscale(&p).unwrap();
        assert!(frobenius(&(decode_scale(2, &x[2..]) - s)) < 1e-14);
    }

    #[test]
    fn nonfinite_everywhere_fails() {
        let target = Density::uniform_box(&[100.0], &[101.0]).unwrap();
        let fam = LocScaleFamily::new(Density::uniform_box(&[-0.5], &[0.5]).unwrap()).unwrap();
        let quad = QuadratureSpec::tensor(vec![99.0], vec![102.0], 50).unwrap();
        let cfg = OptConfig {
            n_starts: 2,
            ..OptConfig::default()
        };
        let r = fit_locscale(
            &target,
            &fam,
            &DivergenceGenerator::forward_kl(),
            &quad,
            &cfg,
            Some(&DMatrix::from_element(1, 1, 1e-4)),
        );
        assert!(matches!(r, Err(Error::OptimizationFailed(_))));
    }

    #[test]
    fn closed_form_requires_reverse_kl() {
        let t = AxialTarget::new(&[0.0, 0.0, 1.0], 1.0, 1.0).unwrap();
        let r = fit_vmf(
            &t,
            &DivergenceGenerator::forward_kl(),
            &OptConfig::default(),
            Some(2.5),
            true,
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
