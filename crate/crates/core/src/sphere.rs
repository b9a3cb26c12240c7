//! von Mises-Fisher family and rotationally symmetric targets on `S^{d-1}`.
//!
//! Densities are taken with respect to the uniform probability measure `σ`
//! on the sphere. Every sphere integral here involves a function of a single
//! projection `t = w^T x`, whose law under `σ` has density proportional to
//! `rho_d(t) = (1 - t^2)^{(d-3)/2}` on `[-1, 1]`; such integrals are done
//! with [`crate::quadrature::zonal_rule`].
//!
//! For `X ~ vMF(nu, kappa0)` let `T = nu^T X`, `A = E[T]`, `m2 = E[T^2]` and
//! `B = (d m2 - 1) / (d - 1)`. The reverse KL from `vMF(nu, kappa0)` to the
//! axial target `exp(lambda t - eta t^2) / Z`, `t = u^T x`, depends on `nu`
//! only through `c = u^T nu`:
//!
//! ```text
//! KL(Q || P) = eta B c^2 - lambda A c + C.
//! ```
//!
//! Its minimiser over `c ∈ [-1, 1]` is `sgn(lambda)` when
//! `eta <= eta_c = |lambda| A / (2B)`, and `c* = lambda A / (2 eta B)`
//! otherwise, in which case the minimisers form a latitude circle and the
//! axis is not recovered.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::divergence::{Density, Sampler, Support};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{pairwise_sum, zonal_rule};

/// Nodes of the 1D rule used for normalisers and marginal moments.
pub const MARGINAL_NODES: usize = 500;

const UNIT_TOL: f64 = 1e-9;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_unit(x: &[f64], tol: f64, what: &str) -> Result<()> {
    let n = norm(x);
    if !((n - 1.0).abs() <= tol) {
        return Err(invalid(format!("{what} must be a unit vector (norm {n})")));
    }
    Ok(())
}

fn unit_from(v: &[f64], what: &str) -> Result<Vec<f64>> {
    if v.len() < 3 {
        return Err(invalid(format!(
            "{what} needs dimension >= 3, got {}",
            v.len()
        )));
    }
    check_unit(v, 1e-12, what)?;
    let n = norm(v);
    Ok(v.iter().map(|x| x / n).collect())
}

/// `log E_σ[exp(s(t))]` for a zonal exponent, computed stably.
fn log_zonal_mean_exp(d: usize, s: impl Fn(f64) -> f64) -> Result<f64> {
    let (t, w) = zonal_rule(d, MARGINAL_NODES)?;
    let vals: Vec<f64> = t.iter().map(|&t| s(t)).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<f64> = vals
        .iter()
        .zip(&w)
        .map(|(v, w)| w * (v - max).exp())
        .collect();
    Ok(max + pairwise_sum(&terms).ln())
}

/// `log c_d(kappa) = -log E_σ[exp(kappa T)]`.
pub fn log_vmf_normalizer(d: usize, kappa: f64) -> Result<f64> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(invalid(format!(
            "kappa must be finite and >= 0, got {kappa}"
        )));
    }
    Ok(-log_zonal_mean_exp(d, |t| kappa * t)?)
}

/// Mean direction and concentration of a vMF distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfParams {
    nu: Vec<f64>,
    kappa: f64,
}

impl VmfParams {
    /// `nu` must have unit norm to within 1e-12; it is renormalised exactly.
    pub fn new(nu: &[f64], kappa: f64) -> Result<Self> {
        let nu = unit_from(nu, "mean direction")?;
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(invalid(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { nu, kappa })
    }

    /// Normalises any nonzero `v` into a mean direction.
    pub fn from_direction(v: &[f64], kappa: f64) -> Result<Self> {
        let n = norm(v);
        if !(n > 0.0) {
            return Err(invalid("zero direction"));
        }
        let u: Vec<f64> = v.iter().map(|x| x / n).collect();
        Self::new(&u, kappa)
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn log_normalizer(&self) -> f64 {
        log_vmf_normalizer(self.dim(), self.kappa).expect("validated kappa")
    }

    pub fn density(&self) -> Result<Density> {
        let log_c = self.log_normalizer();
        let nu = self.nu.clone();
        let kappa = self.kappa;
        Density::new(self.dim(), Support::UnitSphere, move |x| {
            log_c + kappa * dot(&nu, x)
        })
    }
}

/// `log c_d(kappa) + kappa nu^T x`.
pub fn vmf_log_density(params: &VmfParams, x: &[f64]) -> Result<f64> {
    if x.len() != params.dim() {
        return Err(invalid("point dimension mismatch"));
    }
    check_unit(x, UNIT_TOL, "point")?;
    Ok(params.log_normalizer() + params.kappa * dot(&params.nu, x))
}

/// Rotationally symmetric target with axial profile
/// `psi(t) = exp(lambda t - eta t^2) / Z`, `t = u^T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxialTarget {
    u: Vec<f64>,
    lambda: f64,
    eta: f64,
    log_z: f64,
}

impl AxialTarget {
    pub fn new(u: &[f64], lambda: f64, eta: f64) -> Result<Self> {
        let u = unit_from(u, "symmetry axis")?;
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(invalid("lambda must be finite and nonzero"));
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(invalid("eta must be finite and positive"));
        }
        let log_z = log_zonal_mean_exp(u.len(), |t| lambda * t - eta * t * t)?;
        if !log_z.is_finite() {
            return Err(invalid("axial profile normaliser is not finite"));
        }
        Ok(Self {
            u,
            lambda,
            eta,
            log_z,
        })
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `log Z_{lambda, eta}` against `σ`.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    fn log_profile(&self, t: f64) -> f64 {
        self.lambda * t - self.eta * t * t - self.log_z
    }

    pub fn density(&self) -> Result<Density> {
        let me = self.clone();
        Density::new(self.dim(), Support::UnitSphere, move |x| {
            me.log_profile(dot(&me.u, x))
        })
    }
}

pub fn axial_log_density(target: &AxialTarget, x: &[f64]) -> Result<f64> {
    if x.len() != target.dim() {
        return Err(invalid("point dimension mismatch"));
    }
    check_unit(x, UNIT_TOL, "point")?;
    Ok(target.log_profile(dot(&target.u, x)))
}

/// `E[T]`, `E[T^2]` and `B = (d E[T^2] - 1)/(d - 1)` for `T = nu^T X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereMoments {
    pub a: f64,
    pub m2: f64,
    pub b: f64,
}

pub fn marginal_moments(d: usize, kappa0: f64) -> Result<SphereMoments> {
    if d < 3 {
        return Err(invalid(format!("sphere dimension must be >= 3, got {d}")));
    }
    if !(kappa0 > 0.0) || !kappa0.is_finite() {
        return Err(invalid(format!("kappa0 must be positive, got {kappa0}")));
    }
    let (t, w) = zonal_rule(d, MARGINAL_NODES)?;
    let shift = kappa0 * t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mass: Vec<f64> = t
        .iter()
        .zip(&w)
        .map(|(&t, &w)| w * (kappa0 * t - shift).exp())
        .collect();
    let z = pairwise_sum(&mass);
    let first: Vec<f64> = mass.iter().zip(&t).map(|(m, t)| m * t).collect();
    let second: Vec<f64> = mass.iter().zip(&t).map(|(m, t)| m * t * t).collect();
    let a = pairwise_sum(&first) / z;
    let m2 = pairwise_sum(&second) / z;
    let b = (d as f64 * m2 - 1.0) / (d as f64 - 1.0);
    Ok(SphereMoments { a, m2, b })
}

/// Reverse KL `KL(vMF(nu, kappa0) || target)` reduced to a quadratic in
/// `c = u^T nu`, with the moments and constant precomputed.
#[derive(Debug, Clone)]
pub struct ReducedObjective {
    target: AxialTarget,
    kappa0: f64,
    moments: SphereMoments,
    constant: f64,
}

impl ReducedObjective {
    pub fn new(target: &AxialTarget, kappa0: f64) -> Result<Self> {
        let d = target.dim();
        let moments = marginal_moments(d, kappa0)?;
        let constant = log_vmf_normalizer(d, kappa0)?
            + target.log_z()
            + kappa0 * moments.a
            + target.eta() * (1.0 - moments.m2) / (d as f64 - 1.0);
        Ok(Self {
            target: target.clone(),
            kappa0,
            moments,
            constant,
        })
    }

    pub fn moments(&self) -> SphereMoments {
        self.moments
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    /// The `nu`-independent constant `C`.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// `eta B c^2 - lambda A c + C`.
    pub fn at_c(&self, c: f64) -> f64 {
        let SphereMoments { a, b, .. } = self.moments;
        self.target.eta() * b * c * c - self.target.lambda() * a * c + self.constant
    }

    pub fn eval(&self, nu: &[f64]) -> f64 {
        self.at_c(dot(self.target.u(), nu))
    }
}

pub fn reverse_kl_objective(nu: &[f64], target: &AxialTarget, kappa0: f64) -> Result<f64> {
    if nu.len() != target.dim() {
        return Err(invalid("direction dimension mismatch"));
    }
    check_unit(nu, UNIT_TOL, "mean direction")?;
    Ok(ReducedObjective::new(target, kappa0)?.eval(nu))
}

/// `eta_c = |lambda| A / (2 B)`.
pub fn eta_critical(d: usize, lambda: f64, kappa0: f64) -> Result<f64> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(invalid("lambda must be finite and nonzero"));
    }
    let m = marginal_moments(d, kappa0)?;
    Ok(lambda.abs() * m.a / (2.0 * m.b))
}

/// Minimiser of the reduced quadratic over `[-1, 1]`:
/// `clamp(lambda A / (2 eta B), -1, 1)`.
pub fn predicted_minimizer_c(d: usize, lambda: f64, eta: f64, kappa0: f64) -> Result<f64> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(invalid("lambda must be finite and nonzero"));
    }
    if !(eta > 0.0) {
        return Err(invalid("eta must be positive"));
    }
    let m = marginal_moments(d, kappa0)?;
    Ok((lambda * m.a / (2.0 * eta * m.b)).clamp(-1.0, 1.0))
}

/// A line through the origin, stored as a unit vector whose first
/// coordinate with magnitude above 1e-9 is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    direction: Vec<f64>,
}

impl Line {
    pub fn new(v: &[f64]) -> Result<Self> {
        let n = norm(v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(invalid("a line needs a nonzero direction"));
        }
        let mut direction: Vec<f64> = v.iter().map(|x| x / n).collect();
        if let Some(&lead) = direction.iter().find(|x| x.abs() > 1e-9) {
            if lead < 0.0 {
                direction.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Ok(Self { direction })
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// Angle in `[0, π/2]` between two lines.
    pub fn angle_to(&self, other: &Line) -> f64 {
        let s = if dot(&self.direction, &other.direction) < 0.0 {
            -1.0
        } else {
            1.0
        };
        let chord = self
            .direction
            .iter()
            .zip(&other.direction)
            .map(|(a, b)| (a - s * b).powi(2))
            .sum::<f64>()
            .sqrt();
        2.0 * (0.5 * chord).min(1.0).asin()
    }

    pub fn coincides_with(&self, other: &Line, tol: f64) -> bool {
        self.angle_to(other) <= tol
    }

    /// Image of the line under a linear map (e.g. a rotation).
    pub fn transformed(&self, r: &DMatrix<f64>) -> Result<Self> {
        let d = self.direction.len();
        if r.nrows() != d || r.ncols() != d {
            return Err(invalid("matrix dimension mismatch"));
        }
        let v: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| r[(i, j)] * self.direction[j]).sum())
            .collect();
        Self::new(&v)
    }
}

/// The axis statistic: the line spanned by a symmetry axis.
pub trait AxisStatistic {
    fn axis(&self) -> Line;
}

impl AxisStatistic for VmfParams {
    fn axis(&self) -> Line {
        Line::new(&self.nu).expect("unit mean direction")
    }
}

impl AxisStatistic for AxialTarget {
    fn axis(&self) -> Line {
        Line::new(&self.u).expect("unit axis")
    }
}

pub fn axis_statistic(x: &impl AxisStatistic) -> Line {
    x.axis()
}

/// One piece of a piecewise-exponential envelope `exp(offset + slope t)`.
#[derive(Debug, Clone)]
struct Piece {
    lo: f64,
    hi: f64,
    offset: f64,
    slope: f64,
}

impl Piece {
    fn line(&self, t: f64) -> f64 {
        self.offset + self.slope * t
    }

    fn log_mass(&self) -> f64 {
        let w = self.hi - self.lo;
        let gw = self.slope * w;
        if gw.abs() < 1e-12 {
            self.line(self.lo) + w.ln()
        } else if self.slope > 0.0 {
            self.line(self.hi) + (-(-gw).exp_m1()).ln() - self.slope.ln()
        } else {
            self.line(self.lo) + (-gw.exp_m1()).ln() - (-self.slope).ln()
        }
    }

    fn inverse_cdf(&self, u: f64) -> f64 {
        let w = self.hi - self.lo;
        let g = self.slope;
        let gw = g * w;
        let t = if gw.abs() < 1e-12 {
            self.lo + u * w
        } else if g > 0.0 {
            let e = (-gw).exp();
            self.hi + (e + u * (-(-gw).exp_m1())).ln() / g
        } else {
            self.lo + (u * gw.exp_m1()).ln_1p() / g
        };
        t.clamp(self.lo, self.hi)
    }
}

/// Rejection sampler for `T = nu^T X`, with density proportional to
/// `exp(kappa t) (1 - t^2)^{(d-3)/2}`. The log-density is concave, so
/// tangent lines at a set of points bound it from above.
#[derive(Debug, Clone)]
struct MarginalSampler {
    kappa: f64,
    half_expo: f64,
    pieces: Vec<Piece>,
    cumulative: Vec<f64>,
}

impl MarginalSampler {
    fn new(d: usize, kappa: f64) -> Self {
        let a = (d as f64 - 3.0) / 2.0;
        let log_h = |t: f64| kappa * t + a * (1.0 - t * t).ln();
        let slope = |t: f64| kappa - 2.0 * a * t / (1.0 - t * t);
        let mut points: Vec<f64> = vec![-0.95, -0.5, 0.0, 0.5, 0.95];
        if a > 0.0 {
            let mode = if kappa > 0.0 {
                (-a + (a * a + kappa * kappa).sqrt()) / kappa
            } else {
                0.0
            };
            let curv = 2.0 * a * (1.0 + mode * mode) / (1.0 - mode * mode).powi(2);
            let s = 1.0 / curv.sqrt();
            for k in [-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0] {
                points.push(mode + k * s);
            }
        }
        points.retain(|t| t.abs() < 1.0 - 1e-9);
        points.sort_by(f64::total_cmp);
        points.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        let lines: Vec<(f64, f64)> = points
            .iter()
            .map(|&t| {
                let g = slope(t);
                (log_h(t) - g * t, g)
            })
            .collect();
        let mut edges = vec![-1.0];
        for i in 0..lines.len() - 1 {
            let (o1, g1) = lines[i];
            let (o2, g2) = lines[i + 1];
            let z = if (g1 - g2).abs() < 1e-12 {
                0.5 * (points[i] + points[i + 1])
            } else {
                ((o2 - o1) / (g1 - g2)).clamp(points[i], points[i + 1])
            };
            edges.push(z);
        }
        edges.push(1.0);
        let pieces: Vec<Piece> = lines
            .iter()
            .enumerate()
            .map(|(i, &(offset, slope))| Piece {
                lo: edges[i],
                hi: edges[i + 1],
                offset,
                slope,
            })
            .filter(|p| p.hi > p.lo)
            .collect();
        let log_masses: Vec<f64> = pieces.iter().map(Piece::log_mass).collect();
        let max = log_masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = log_masses
            .iter()
            .map(|lm| {
                acc += (lm - max).exp();
                acc
            })
            .collect();
        let total = acc;
        cumulative.iter_mut().for_each(|c| *c /= total);
        Self {
            kappa,
            half_expo: a,
            pieces,
            cumulative,
        }
    }

    fn log_h(&self, t: f64) -> f64 {
        if self.half_expo == 0.0 {
            self.kappa * t
        } else {
            self.kappa * t + self.half_expo * (1.0 - t * t).ln()
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            let k = self
                .cumulative
                .partition_point(|&c| c < u)
                .min(self.pieces.len() - 1);
            let piece = &self.pieces[k];
            let t = piece.inverse_cdf(rng.random());
            let accept = (self.log_h(t) - piece.line(t)).exp();
            if rng.random::<f64>() < accept {
                return t;
            }
        }
    }
}

/// vMF sampler: marginal `T` by rejection, then a uniform direction in the
/// tangent space of `nu`.
#[derive(Debug, Clone)]
pub struct VmfSampler {
    params: VmfParams,
    marginal: MarginalSampler,
}

impl VmfSampler {
    pub fn new(params: &VmfParams) -> Self {
        Self {
            marginal: MarginalSampler::new(params.dim(), params.kappa()),
            params: params.clone(),
        }
    }

    pub fn params(&self) -> &VmfParams {
        &self.params
    }
}

impl Sampler for VmfSampler {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let nu = self.params.nu();
        let d = nu.len();
        let t = self.marginal.sample(rng);
        let mut v: Vec<f64>;
        loop {
            v = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let proj = dot(&v, nu);
            v.iter_mut().zip(nu).for_each(|(vi, ni)| *vi -= proj * ni);
            let n = norm(&v);
            if n > 1e-12 {
                v.iter_mut().for_each(|vi| *vi /= n);
                break;
            }
        }
        let s = (1.0 - t * t).max(0.0).sqrt();
        let mut x: Vec<f64> = nu.iter().zip(&v).map(|(n, v)| t * n + s * v).collect();
        let n = norm(&x);
        x.iter_mut().for_each(|xi| *xi /= n);
        x
    }
}

/// `n` i.i.d. vMF draws, deterministic given `seed`.
pub fn sample_vmf(params: &VmfParams, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(invalid("sample count must be >= 1"));
    }
    let sampler = VmfSampler::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// Rotation taking `center` to the north pole `(0, 0, 1)`.
pub fn rotation_to_north(center: &[f64]) -> Result<Matrix3<f64>> {
    if center.len() != 3 {
        return Err(invalid("Lambert projection is defined on S^2"));
    }
    check_unit(center, UNIT_TOL, "projection centre")?;
    let c = Vector3::new(center[0], center[1], center[2]).normalize();
    let north = Vector3::z();
    let k = c.cross(&north);
    let s = k.norm();
    let cos = c.dot(&north);
    if s < 1e-15 {
        return Ok(if cos > 0.0 {
            Matrix3::identity()
        } else {
            Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))
        });
    }
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Ok(Matrix3::identity() + kx + kx * kx * ((1.0 - cos) / (s * s)))
}

/// Lambert azimuthal equal-area projection centred at `center`.
pub fn lambert_project(x: &[f64], center: &[f64]) -> Result<[f64; 2]> {
    let r = rotation_to_north(center)?;
    if x.len() != 3 {
        return Err(invalid("Lambert projection is defined on S^2"));
    }
    check_unit(x, UNIT_TOL, "point")?;
    let antipode_gap = x
        .iter()
        .zip(center)
        .map(|(a, b)| (a + b).powi(2))
        .sum::<f64>();
    let y = r * Vector3::new(x[0], x[1], x[2]);
    if antipode_gap.sqrt() < 1e-12 || 1.0 + y.z <= 0.0 {
        return Err(Error::ProjectionUndefined(
            "point is antipodal to the projection centre".into(),
        ));
    }
    let f = (2.0 / (1.0 + y.z)).sqrt();
    Ok([f * y.x, f * y.y])
}

/// Inverse of [`lambert_project`] for points with radius at most 2.
pub fn lambert_unproject(p: [f64; 2], center: &[f64]) -> Result<[f64; 3]> {
    let r = rotation_to_north(center)?;
    let rho2 = p[0] * p[0] + p[1] * p[1];
    if rho2 > 4.0 {
        return Err(invalid("point lies outside the Lambert disk"));
    }
    let f = (1.0 - rho2 / 4.0).sqrt();
    let y = Vector3::new(p[0] * f, p[1] * f, 1.0 - rho2 / 2.0);
    let x = r.transpose() * y;
    Ok([x.x, x.y, x.z])
}

/// Lambert radius of points with `center^T x = c`.
pub fn lambert_radius(c: f64) -> f64 {
    (2.0 * (1.0 - c)).max(0.0).sqrt()
}

/// Points on the latitude circle `{x : u^T x = c}` in `S^2`.
pub fn latitude_circle(u: &[f64], c: f64, n: usize) -> Result<Vec<[f64; 3]>> {
    if !(-1.0..=1.0).contains(&c) {
        return Err(invalid("latitude must lie in [-1, 1]"));
    }
    let r = rotation_to_north(u)?;
    let s = (1.0 - c * c).max(0.0).sqrt();
    Ok((0..n)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / n as f64;
            let y = r.transpose() * Vector3::new(s * phi.cos(), s * phi.sin(), c);
            [y.x, y.y, y.z]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{total_mass, QuadratureSpec};

    const E3: [f64; 3] = [0.0, 0.0, 1.0];

    #[test]
    fn tiny_kappa_is_nearly_uniform() {
        let p = VmfParams::new(&E3, 1e-10).unwrap();
        for x in [[1.0, 0.0, 0.0], E3, [0.0, -1.0, 0.0]] {
            assert!(vmf_log_density(&p, &x).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn d3_density_at_mode() {
        // Against the uniform probability measure, c_3(k) = k / sinh k.
        let k: f64 = 2.5;
        let p = VmfParams::new(&E3, k).unwrap();
        let expected = (k / k.sinh()).ln() + k;
        assert!((vmf_log_density(&p, &E3).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn vmf_normalises_on_product_grid() {
        let p = VmfParams::from_direction(&[1.0, 2.0, -0.5], 2.5).unwrap();
        let m = total_mass(&p.density().unwrap(), &QuadratureSpec::sphere_default()).unwrap();
        assert!((m - 1.0).abs() < 1e-8, "{m}");
    }

    #[test]
    fn invalid_points_and_params() {
        let p = VmfParams::new(&E3, 1.0).unwrap();
        assert!(vmf_log_density(&p, &[0.0, 0.0, 2.0]).is_err());
        assert!(VmfParams::new(&[0.0, 0.0, 1.1], 1.0).is_err());
        assert!(VmfParams::new(&E3, 0.0).is_err());
        assert!(VmfParams::new(&[0.0, 1.0], 1.0).is_err());
        assert!(AxialTarget::new(&E3, 0.0, 1.0).is_err());
        assert!(AxialTarget::new(&E3, 1.0, 0.0).is_err());
        assert!(marginal_moments(2, 1.0).is_err());
        assert!(eta_critical(3, 0.0, 1.0).is_err());
        assert!(predicted_minimizer_c(3, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn axial_density_properties() {
        let lambda = 0.7;
        let t = AxialTarget::new(&E3, lambda, 1e-12).unwrap();
        let up = axial_log_density(&t, &E3).unwrap();
        let down = axial_log_density(&t, &[0.0, 0.0, -1.0]).unwrap();
        assert!(((up - down).exp() - (2.0 * lambda).exp()).abs() < 1e-6);
        let t = AxialTarget::new(&E3, 1.0, 2.0).unwrap();
        let a = axial_log_density(&t, &[0.6, 0.0, 0.8]).unwrap();
        let b = axial_log_density(&t, &[0.0, -0.6, 0.8]).unwrap();
        assert_eq!(a, b);
        let m = total_mass(&t.density().unwrap(), &QuadratureSpec::sphere_default()).unwrap();
        assert!((m - 1.0).abs() < 1e-8);
    }

    #[test]
    fn objective_gap_between_pole_and_equator() {
        let t = AxialTarget::new(&E3, 1.0, 1.5).unwrap();
        let obj = ReducedObjective::new(&t, 2.5).unwrap();
        let m = obj.moments();
        let gap = obj.eval(&E3) - obj.eval(&[1.0, 0.0, 0.0]);
        assert!((gap - (1.5 * m.b - m.a)).abs() < 1e-14);
    }

    #[test]
    fn eta_critical_is_linear_in_lambda() {
        let a = eta_critical(4, 0.8, 1.7).unwrap();
        let b = eta_critical(4, 1.6, 1.7).unwrap();
        assert_eq!(b, 2.0 * a);
        assert_eq!(eta_critical(4, -0.8, 1.7).unwrap(), a);
    }

    #[test]
    fn predicted_c_cases() {
        assert_eq!(predicted_minimizer_c(3, 1.0, 1.0, 2.5).unwrap(), 1.0);
        assert_eq!(predicted_minimizer_c(3, -1.0, 0.5, 2.5).unwrap(), -1.0);
        let c = predicted_minimizer_c(3, 1.0, 2.0, 2.5).unwrap();
        assert!((c - 0.5816).abs() < 1e-3);
    }

    #[test]
    fn line_canonicalisation() {
        let a = Line::new(&[0.0, -0.6, 0.8]).unwrap();
        let b = Line::new(&[0.0, 0.6, -0.8]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.direction(), &[0.0, 0.6, -0.8]);
        assert!(a.angle_to(&b) == 0.0);
        let c = Line::new(&[1.0, 0.0, 0.0]).unwrap();
        assert!((a.angle_to(&c) - PI / 2.0).abs() < 1e-12);
        assert!(Line::new(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn axis_is_sign_invariant() {
        let p = VmfParams::new(&[0.0, 0.6, 0.8], 1.0).unwrap();
        let q = VmfParams::new(&[0.0, -0.6, -0.8], 7.0).unwrap();
        assert_eq!(axis_statistic(&p), axis_statistic(&q));
        let t = AxialTarget::new(&[0.0, 0.6, 0.8], -1.0, 2.0).unwrap();
        assert_eq!(axis_statistic(&t), Line::new(&[0.0, 0.6, 0.8]).unwrap());
    }

    #[test]
    fn sampler_outputs_unit_vectors_and_is_seeded() {
        for d in [3, 4, 7] {
            let mut nu = vec![0.0; d];
            nu[1] = 1.0;
            let p = VmfParams::new(&nu, 3.0).unwrap();
            let xs = sample_vmf(&p, 500, 11).unwrap();
            assert!(xs.iter().all(|x| (norm(x) - 1.0).abs() < 1e-12));
            assert_eq!(xs, sample_vmf(&p, 500, 11).unwrap());
        }
        assert!(sample_vmf(&VmfParams::new(&E3, 1.0).unwrap(), 0, 0).is_err());
    }

    #[test]
    fn envelope_dominates_marginal() {
        for d in [3, 4, 5, 10, 30] {
            for kappa in [1e-6, 0.5, 2.5, 10.0, 50.0] {
                let s = MarginalSampler::new(d, kappa);
                for p in &s.pieces {
                    for k in 0..=20 {
                        let t = p.lo + (p.hi - p.lo) * k as f64 / 20.0;
                        if t.abs() >= 1.0 {
                            continue;
                        }
                        assert!(s.log_h(t) <= p.line(t) + 1e-9, "d={d} k={kappa} t={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn acceptance_rate_is_reasonable() {
        use crate::quadrature::gauss_legendre;
        for d in [3, 4, 8, 20] {
            for kappa in [0.1, 2.5, 10.0, 50.0] {
                let s = MarginalSampler::new(d, kappa);
                let rule = gauss_legendre(2000);
                let (th, w) = rule.on_interval(-PI / 2.0, PI / 2.0);
                let target: f64 = th
                    .iter()
                    .zip(&w)
                    .map(|(th, w)| w * th.cos() * (s.log_h(th.sin())).exp())
                    .sum();
                let envelope: f64 = s.pieces.iter().map(|p| p.log_mass().exp()).sum();
                let rate = target / envelope;
                assert!(rate > 0.3 && rate <= 1.0 + 1e-9, "d={d} k={kappa}: {rate}");
            }
        }
    }

    #[test]
    fn lambert_basics() {
        let c = [0.0, 0.6, 0.8];
        let p = lambert_project(&c, &c).unwrap();
        assert!(p[0].abs() < 1e-15 && p[1].abs() < 1e-15);
        let perp = [1.0, 0.0, 0.0];
        let q = lambert_project(&perp, &c).unwrap();
        assert!(((q[0] * q[0] + q[1] * q[1]).sqrt() - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            lambert_project(&[0.0, -0.6, -0.8], &c),
            Err(Error::ProjectionUndefined(_))
        ));
        let x = [0.48, 0.6, 0.64];
        let back = lambert_unproject(lambert_project(&x, &c).unwrap(), &c).unwrap();
        for k in 0..3 {
            assert!((back[k] - x[k]).abs() < 1e-12);
        }
        // South-pole centre uses the flip rotation.
        let s = lambert_project(&[1.0, 0.0, 0.0], &[0.0, 0.0, -1.0]).unwrap();
        assert!(((s[0] * s[0] + s[1] * s[1]).sqrt() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn latitude_circle_has_constant_lambert_radius() {
        let u = [0.0, 0.6, 0.8];
        for x in latitude_circle(&u, 0.5816, 24).unwrap() {
            let p = lambert_project(&x, &u).unwrap();
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - lambert_radius(0.5816)).abs() < 1e-12);
        }
    }
}
