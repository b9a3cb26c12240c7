//! Location-scale families on `R^d`, even and elliptical targets, and the
//! affine group actions that act on them.
//!
//! A location-scale family generated by a base density `q0` consists of the
//! laws of `nu + S^{1/2} X0`, `X0 ~ q0`, with `S^{1/2}` the symmetric square
//! root. Its members have density
//!
//! ```text
//! log q(x) = log q0(S^{-1/2}(x - nu)) - ½ log det S.
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use smallvec::SmallVec;
use statrs::function::gamma::ln_gamma;

use crate::divergence::{Density, Extent, QuadratureSpec, Sampler, Support, LOG_ZERO_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, check_spd, frobenius, log_det_spd, sym_inv_sqrt, sym_sqrt, symmetrize};
use crate::quadrature::{gauss_legendre, pairwise_sum};

type Buf = SmallVec<[f64; 8]>;

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = a.shape();
    (0..r)
        .flat_map(|i| (0..c).map(move |j| (i, j)))
        .map(|(i, j)| a[(i, j)])
        .collect()
}

/// `(nu, S)` indexing a member of a location-scale family.
#[derive(Debug, Clone, PartialEq)]
pub struct LocScaleParams {
    nu: DVector<f64>,
    s: DMatrix<f64>,
}

impl LocScaleParams {
    pub fn new(nu: DVector<f64>, s: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != nu.len() {
            return Err(invalid(format!(
                "location has dim {} but scale is {}x{}",
                nu.len(),
                s.nrows(),
                s.ncols()
            )));
        }
        check_spd(&s, "scale matrix")?;
        Ok(Self {
            nu,
            s: symmetrize(&s),
        })
    }

    pub fn from_slices(nu: &[f64], s_row_major: &[f64]) -> Result<Self> {
        let d = nu.len();
        if s_row_major.len() != d * d {
            return Err(invalid("scale matrix has wrong number of entries"));
        }
        Self::new(
            DVector::from_column_slice(nu),
            DMatrix::from_row_slice(d, d, s_row_major),
        )
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    pub fn nu(&self) -> &DVector<f64> {
        &self.nu
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// Distance `sqrt(|Δnu|² + |ΔS|_F²)`.
    pub fn distance(&self, other: &Self) -> f64 {
        let dn = (&self.nu - &other.nu).norm_squared();
        let ds = frobenius(&(&self.s - &other.s)).powi(2);
        (dn + ds).sqrt()
    }
}

/// Family `{ (T_{nu,S})# Q0 }` generated by a base density on `R^d`.
#[derive(Debug, Clone)]
pub struct LocScaleFamily {
    base: Density,
    /// Covariance of the base, if known; the base is assumed centred.
    base_cov_scale: Option<f64>,
}

impl LocScaleFamily {
    pub fn new(base: Density) -> Result<Self> {
        if base.support() == &Support::UnitSphere {
            return Err(invalid("location-scale bases live on R^d"));
        }
        Ok(Self {
            base,
            base_cov_scale: None,
        })
    }

    /// Gaussian family generated by `N(0, I_d)`.
    pub fn gaussian(d: usize) -> Result<Self> {
        let base = Density::gaussian(&vec![0.0; d], &DMatrix::identity(d, d))?;
        Ok(Self {
            base,
            base_cov_scale: Some(1.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &Density {
        &self.base
    }

    /// Covariance of a member, `c · S` when the base covariance is `c · I`.
    pub fn member_covariance(&self, params: &LocScaleParams) -> Option<DMatrix<f64>> {
        self.base_cov_scale.map(|c| params.scale() * c)
    }

    /// Density of `Q_{nu,S}`.
    pub fn member_density(&self, params: &LocScaleParams) -> Result<Density> {
        let d = self.dim();
        if params.dim() != d {
            return Err(invalid(format!(
                "family has dim {d}, parameters have dim {}",
                params.dim()
            )));
        }
        let w = row_major(&sym_inv_sqrt(params.scale()));
        let half_log_det = 0.5 * log_det_spd(params.scale());
        let nu: Vec<f64> = params.nu().iter().copied().collect();
        let base = self.base.log_density_fn();
        let base_scale = self.base.extent().map(|e| e.scale.clone());
        let root = sym_sqrt(params.scale());
        let extent = Extent {
            center: nu.clone(),
            scale: (0..d)
                .map(|i| {
                    // Marginal spread of S^{1/2} X0, bounded row-wise.
                    let bs = base_scale.as_ref();
                    let v: f64 = (0..d)
                        .map(|j| {
                            let s0 = bs.map_or(1.0, |b| b[j]);
                            (root[(i, j)] * s0).powi(2)
                        })
                        .sum();
                    v.sqrt()
                })
                .collect(),
        };
        let density = Density::new(d, Support::FullSpace, move |x| {
            let mut z: Buf = SmallVec::from_elem(0.0, d);
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += w[i * d + j] * (x[j] - nu[j]);
                }
                z[i] = acc;
            }
            base(&z) - half_log_det
        })?;
        Ok(density.with_extent(extent))
    }
}

/// `x ↦ b + A x` with `A` invertible.
#[derive(Clone, PartialEq)]
pub struct AffineMap {
    a: DMatrix<f64>,
    b: DVector<f64>,
    a_inv: DMatrix<f64>,
    log_abs_det: f64,
}

impl fmt::Debug for AffineMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineMap")
            .field("a", &self.a)
            .field("b", &self.b)
            .finish()
    }
}

impl AffineMap {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(invalid(
                "affine map needs a square matrix matching the offset",
            ));
        }
        let det = a.determinant();
        if !(det.abs() > 1e-300) || !det.is_finite() {
            return Err(invalid(format!("affine map is singular (det = {det:e})")));
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| invalid("affine map is singular"))?;
        Ok(Self {
            log_abs_det: det.abs().ln(),
            a,
            b,
            a_inv,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            a: DMatrix::identity(d, d),
            b: DVector::zeros(d),
            a_inv: DMatrix::identity(d, d),
            log_abs_det: 0.0,
        }
    }

    /// Point reflection `r_m(x) = 2m - x`.
    pub fn reflection(m: &DVector<f64>) -> Self {
        let d = m.len();
        Self {
            a: -DMatrix::identity(d, d),
            b: m * 2.0,
            a_inv: -DMatrix::identity(d, d),
            log_abs_det: 0.0,
        }
    }

    /// `g_R(x) = m + A_R (x - m)` with `A_R = M^{1/2} R M^{-1/2}`, for an
    /// orthogonal `R`. These maps fix every elliptical distribution with
    /// centre `m` and shape `M`.
    pub fn elliptical_rotation(
        m: &DVector<f64>,
        shape: &DMatrix<f64>,
        r: &DMatrix<f64>,
    ) -> Result<Self> {
        let d = m.len();
        if shape.nrows() != d || r.nrows() != d || !r.is_square() {
            return Err(invalid("elliptical rotation dimension mismatch"));
        }
        check_spd(shape, "shape matrix")?;
        if frobenius(&(r.transpose() * r - DMatrix::identity(d, d))) > 1e-9 {
            return Err(invalid("R is not orthogonal"));
        }
        let a_r = sym_sqrt(shape) * r * sym_inv_sqrt(shape);
        let b = m - &a_r * m;
        Self::new(a_r, b)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn log_abs_det(&self) -> f64 {
        self.log_abs_det
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| self.b[i] + (0..d).map(|j| self.a[(i, j)] * x[j]).sum::<f64>())
            .collect()
    }

    pub fn apply_inverse(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| self.a_inv[(i, j)] * (y[j] - self.b[j]))
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn compose(&self, inner: &AffineMap) -> Result<AffineMap> {
        Self::new(&self.a * &inner.a, &self.a * &inner.b + &self.b)
    }
}

/// Density of `T#P`: `p(T^{-1} y) / |det A|`.
pub fn pushforward_density(p: &Density, map: &AffineMap) -> Result<Density> {
    let d = p.dim();
    if map.dim() != d {
        return Err(invalid("map and density dimensions differ"));
    }
    if p.support() == &Support::UnitSphere {
        return Err(invalid(
            "affine pushforward is defined for Euclidean densities",
        ));
    }
    let a = map.matrix();
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || a[(i, j)] == 0.0));
    let support = match p.support() {
        Support::Box { lower, upper } if diagonal => {
            let lo = map.apply(lower);
            let hi = map.apply(upper);
            Support::Box {
                lower: lo.iter().zip(&hi).map(|(a, b)| a.min(*b)).collect(),
                upper: lo.iter().zip(&hi).map(|(a, b)| a.max(*b)).collect(),
            }
        }
        _ => Support::FullSpace,
    };
    let a_inv = row_major(&map.a_inv);
    let b: Vec<f64> = map.b.iter().copied().collect();
    let log_det = map.log_abs_det;
    let inner = p.log_density_fn();
    let extent = p.extent().map(|e| Extent {
        center: map.apply(&e.center),
        scale: (0..d)
            .map(|i| (0..d).map(|j| a[(i, j)].abs() * e.scale[j]).sum())
            .collect(),
    });
    let density = Density::new(d, support, move |y| {
        let mut x: Buf = SmallVec::from_elem(0.0, d);
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += a_inv[i * d + j] * (y[j] - b[j]);
            }
            x[i] = acc;
        }
        inner(&x) - log_det
    })?;
    Ok(match extent {
        Some(e) => density.with_extent(e),
        None => density,
    })
}

/// Parameters `(b + A nu, A S A^T)` of `map#Q_{nu,S}`, valid whenever the
/// base is invariant under the linear part (reflections always, rotations
/// for `O(d)`-invariant bases).
pub fn pushforward_params(params: &LocScaleParams, map: &AffineMap) -> Result<LocScaleParams> {
    if map.dim() != params.dim() {
        return Err(invalid("map and parameter dimensions differ"));
    }
    let a = map.matrix();
    let nu = map.offset() + a * params.nu();
    let s = symmetrize(&(a * params.scale() * a.transpose()));
    LocScaleParams::new(nu, s)
}

/// Weighted first and second moments about the box centre in one sweep.
struct Moments {
    mass: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn moments(p: &Density, quad: &QuadratureSpec) -> Result<Moments> {
    if p.support() == &Support::UnitSphere {
        return Err(invalid("moment statistics need a Euclidean density"));
    }
    let grid = quad.grid(&[p])?;
    let d = p.dim();
    let centre: Vec<f64> = match &quad.truncation_box {
        Some(b) => b
            .lower
            .iter()
            .zip(&b.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect(),
        None => vec![0.0; d],
    };
    let f = p.log_density_fn();
    let width = 1 + d + d * (d + 1) / 2;
    let rows: Vec<Vec<f64>> = grid
        .points
        .par_chunks_exact(d)
        .zip(grid.weights.par_iter())
        .map(|(x, &w)| {
            let mut row = vec![0.0; width];
            let lp = f(x);
            if lp < LOG_ZERO_THRESHOLD {
                return row;
            }
            let m = w * lp.exp();
            row[0] = m;
            let mut k = 1 + d;
            for i in 0..d {
                let yi = x[i] - centre[i];
                row[1 + i] = m * yi;
                for j in i..d {
                    row[k] = m * yi * (x[j] - centre[j]);
                    k += 1;
                }
            }
            row
        })
        .collect();
    let sums: Vec<f64> = (0..width)
        .map(|c| pairwise_sum(&rows.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .collect();
    let mass = sums[0];
    if !(mass > 0.0) {
        return Err(Error::DegenerateStatistic(
            "density has no mass on the quadrature grid".into(),
        ));
    }
    let shift = DVector::from_fn(d, |i, _| sums[1 + i] / mass);
    let mut cov = DMatrix::zeros(d, d);
    let mut k = 1 + d;
    for i in 0..d {
        for j in i..d {
            let v = sums[k] / mass - shift[i] * shift[j];
            cov[(i, j)] = v;
            cov[(j, i)] = v;
            k += 1;
        }
    }
    let mean = DVector::from_fn(d, |i, _| centre[i] + shift[i]);
    Ok(Moments { mass, mean, cov })
}

/// `∫ x dP(x)` over the quadrature grid, normalised by the grid mass.
pub fn mean(p: &Density, quad: &QuadratureSpec) -> Result<DVector<f64>> {
    Ok(moments(p, quad)?.mean)
}

/// `∫ (x - μ)(x - μ)^T dP(x)` over the quadrature grid.
pub fn covariance(p: &Density, quad: &QuadratureSpec) -> Result<DMatrix<f64>> {
    Ok(moments(p, quad)?.cov)
}

/// Total probability mass seen by the grid.
pub fn grid_mass(p: &Density, quad: &QuadratureSpec) -> Result<f64> {
    Ok(moments(p, quad)?.mass)
}

/// Marginal variances below this make correlation undefined.
pub const MIN_MARGINAL_VARIANCE: f64 = 1e-12;

/// `D^{-1/2} Σ D^{-1/2}` with `D = diag(Σ)`; the diagonal is exactly one.
pub fn correlation_from_covariance(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() {
        return Err(invalid("covariance must be square"));
    }
    let d = sigma.nrows();
    for i in 0..d {
        let v = sigma[(i, i)];
        if !(v > MIN_MARGINAL_VARIANCE) {
            return Err(Error::DegenerateStatistic(format!(
                "marginal variance {i} is {v:e}"
            )));
        }
    }
    let mut rho = DMatrix::identity(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt();
            rho[(i, j)] = v;
            rho[(j, i)] = v;
        }
    }
    Ok(rho)
}

pub fn correlation(p: &Density, quad: &QuadratureSpec) -> Result<DMatrix<f64>> {
    correlation_from_covariance(&covariance(p, quad)?)
}

/// One Gaussian mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

const PAIRING_TOL: f64 = 1e-12;

/// Gaussian mixture that is even about `m`.
///
/// Every component must be matched by one with mean `2m - mean`, the same
/// covariance and the same weight (a component centred at `m` matches
/// itself). Weights are normalised. The density is evaluated in offsets
/// from `m`, so `p(m + y)` and `p(m - y)` use the same arithmetic.
pub fn make_even_target(m: &DVector<f64>, components: &[GaussianComponent]) -> Result<Density> {
    let d = m.len();
    if components.is_empty() {
        return Err(invalid("even target needs at least one component"));
    }
    let mut used = vec![false; components.len()];
    for i in 0..components.len() {
        if used[i] {
            continue;
        }
        let c = &components[i];
        if c.mean.len() != d || c.cov.nrows() != d {
            return Err(invalid("component dimension mismatch"));
        }
        check_spd(&c.cov, "component covariance")?;
        if !(c.weight > 0.0) {
            return Err(invalid("component weights must be positive"));
        }
        let mirror = m * 2.0 - &c.mean;
        let partner = (0..components.len()).find(|&j| {
            !used[j]
                && (j != i || (&c.mean - m).amax() <= PAIRING_TOL)
                && (&components[j].mean - &mirror).amax() <= PAIRING_TOL
                && (&components[j].cov - &c.cov).amax() <= PAIRING_TOL
                && (components[j].weight - c.weight).abs() <= PAIRING_TOL
        });
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => {
                return Err(invalid(format!(
                    "component {i} has no reflected partner about m"
                )))
            }
        }
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    struct Prepared {
        log_w: f64,
        offset: Vec<f64>,
        l_inv: Vec<f64>,
    }
    let prepared: Vec<Prepared> = components
        .iter()
        .map(|c| {
            let chol = symmetrize(&c.cov).cholesky().expect("checked SPD");
            let l = chol.l();
            let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            Prepared {
                log_w: (c.weight / total).ln() - 0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
                offset: (&c.mean - m).iter().copied().collect(),
                l_inv: row_major(&l.try_inverse().expect("checked SPD")),
            }
        })
        .collect();
    let centre: Vec<f64> = m.iter().copied().collect();
    let mix_mean = centre.clone();
    let mix_cov = components.iter().fold(DMatrix::zeros(d, d), |acc, c| {
        let off = &c.mean - m;
        acc + (&c.cov + &off * off.transpose()) * (c.weight / total)
    });
    let density = Density::new(d, Support::FullSpace, move |x| {
        let mut terms: SmallVec<[f64; 8]> = SmallVec::with_capacity(prepared.len());
        let mut y: Buf = SmallVec::from_elem(0.0, d);
        for c in &prepared {
            for k in 0..d {
                y[k] = (x[k] - centre[k]) - c.offset[k];
            }
            let mut q = 0.0;
            for i in 0..d {
                let mut z = 0.0;
                for j in 0..=i {
                    z += c.l_inv[i * d + j] * y[j];
                }
                q += z * z;
            }
            terms.push(c.log_w - 0.5 * q);
        }
        log_sum_exp(&terms)
    })?;
    Ok(density.with_extent(Extent {
        center: mix_mean,
        scale: (0..d).map(|i| mix_cov[(i, i)].sqrt()).collect(),
    }))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// The default even target: an equal-weight pair of Gaussians at
/// `m ± (0.5, 0.3, 0, ...)` with a shared anisotropic covariance. The
/// components overlap enough that the mixture stays unimodal.
pub fn canonical_even_components(m: &DVector<f64>) -> Vec<GaussianComponent> {
    let d = m.len();
    let mut offset = DVector::zeros(d);
    offset[0] = 0.5;
    if d > 1 {
        offset[1] = 0.3;
    }
    let mut cov = DMatrix::identity(d, d) * 0.5;
    cov[(0, 0)] = 0.6;
    if d > 1 {
        cov[(1, 1)] = 0.4;
        cov[(0, 1)] = 0.15;
        cov[(1, 0)] = 0.15;
    }
    vec![
        GaussianComponent {
            weight: 0.5,
            mean: m + &offset,
            cov: cov.clone(),
        },
        GaussianComponent {
            weight: 0.5,
            mean: m - &offset,
            cov,
        },
    ]
}

pub fn canonical_even_target(m: &DVector<f64>) -> Result<Density> {
    make_even_target(m, &canonical_even_components(m))
}

/// Density generator of an `O(d)`-invariant core `p0(z) = g(|z|²)`.
#[derive(Clone)]
pub enum RadialProfile {
    Gaussian,
    /// Multivariate Student-t shape `(1 + r²/dof)^{-(dof + d)/2}`.
    Student {
        dof: f64,
    },
    /// Unnormalised `log g(r²)`; normalised numerically.
    Custom {
        name: String,
        log_g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => write!(f, "Gaussian"),
            Self::Student { dof } => write!(f, "Student {{ dof: {dof} }}"),
            Self::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Degrees of freedom of the default elliptical profile.
pub const CANONICAL_STUDENT_DOF: f64 = 5.0;

impl RadialProfile {
    fn unnormalised(&self, d: usize) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        match self {
            Self::Gaussian => Arc::new(|r2| -0.5 * r2),
            Self::Student { dof } => {
                let dof = *dof;
                let expo = -0.5 * (dof + d as f64);
                Arc::new(move |r2| expo * (r2 / dof).ln_1p())
            }
            Self::Custom { log_g, .. } => log_g.clone(),
        }
    }

    /// `log` of the constant making `g(|z|²)` a probability density on `R^d`.
    pub fn log_normalizer(&self, d: usize) -> Result<f64> {
        let df = d as f64;
        match self {
            Self::Gaussian => Ok(-0.5 * df * (2.0 * PI).ln()),
            Self::Student { dof } => {
                if !(*dof > 0.0) {
                    return Err(invalid("Student profile needs dof > 0"));
                }
                Ok(ln_gamma(0.5 * (dof + df)) - ln_gamma(0.5 * dof) - 0.5 * df * (dof * PI).ln())
            }
            Self::Custom { .. } => {
                let log_g = self.unnormalised(d);
                // r^d g(r²) must vanish for the radial integral to converge.
                let far = 1e6_f64;
                if !(log_g(far * far) + df * far.ln() < -7.0) {
                    return Err(invalid("radial profile is not normalisable"));
                }
                let radial = radial_integral(&*log_g, d, |_| 1.0);
                if !(radial.is_finite() && radial > 0.0) {
                    return Err(invalid("radial profile is not normalisable"));
                }
                Ok(-radial.ln())
            }
        }
    }

    /// `E|Z|² / d` for the normalised core, i.e. the core covariance is this
    /// multiple of `I`. `None` when the second moment is infinite.
    pub fn variance_factor(&self, d: usize) -> Option<f64> {
        match self {
            Self::Gaussian => Some(1.0),
            Self::Student { dof } => (*dof > 2.0).then(|| dof / (dof - 2.0)),
            Self::Custom { .. } => {
                let log_g = self.unnormalised(d);
                let mass = radial_integral(&*log_g, d, |_| 1.0);
                let second = radial_integral(&*log_g, d, |r| r * r);
                let v = second / mass / d as f64;
                v.is_finite().then_some(v)
            }
        }
    }
}

/// `|S^{d-1}| ∫_0^∞ h(r) g(r²) r^{d-1} dr` via `r = s / (1 - s)`.
fn radial_integral(
    log_g: &(dyn Fn(f64) -> f64 + Send + Sync),
    d: usize,
    h: impl Fn(f64) -> f64,
) -> f64 {
    let df = d as f64;
    let log_area = (2.0f64).ln() + 0.5 * df * PI.ln() - ln_gamma(0.5 * df);
    let rule = gauss_legendre(400);
    let (s, w) = rule.on_interval(0.0, 1.0);
    let terms: Vec<f64> = s
        .iter()
        .zip(&w)
        .map(|(&s, &w)| {
            let r = s / (1.0 - s);
            let jac = 1.0 / ((1.0 - s) * (1.0 - s));
            let lv = log_g(r * r) + (df - 1.0) * r.ln() + log_area;
            w * jac * lv.exp() * h(r)
        })
        .collect();
    pairwise_sum(&terms)
}

/// Elliptical target `(T_{m, M})# P0` with `P0` radial.
#[derive(Debug, Clone)]
pub struct EllipticalTargetSpec {
    pub m: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub profile: RadialProfile,
}

impl EllipticalTargetSpec {
    /// Student-t core with 5 degrees of freedom.
    pub fn canonical(m: DVector<f64>, shape: DMatrix<f64>) -> Self {
        Self {
            m,
            shape,
            profile: RadialProfile::Student {
                dof: CANONICAL_STUDENT_DOF,
            },
        }
    }

    /// Covariance `c · M` of the target, when finite.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        self.profile
            .variance_factor(self.m.len())
            .map(|c| &self.shape * c)
    }
}

/// `log p(x) = log p0(M^{-1/2}(x - m)) - ½ log det M`.
pub fn make_elliptical_target(spec: &EllipticalTargetSpec) -> Result<Density> {
    let d = spec.m.len();
    if spec.shape.nrows() != d {
        return Err(invalid("shape matrix dimension mismatch"));
    }
    check_spd(&spec.shape, "shape matrix")?;
    let log_c = spec.profile.log_normalizer(d)? - 0.5 * log_det_spd(&spec.shape);
    let log_g = spec.profile.unnormalised(d);
    let w = row_major(&sym_inv_sqrt(&spec.shape));
    let m: Vec<f64> = spec.m.iter().copied().collect();
    let var = spec.profile.variance_factor(d).unwrap_or(1.0);
    let extent = Extent {
        center: m.clone(),
        scale: (0..d).map(|i| (var * spec.shape[(i, i)]).sqrt()).collect(),
    };
    let density = Density::new(d, Support::FullSpace, move |x| {
        let mut r2 = 0.0;
        for i in 0..d {
            let mut z = 0.0;
            for j in 0..d {
                z += w[i * d + j] * (x[j] - m[j]);
            }
            r2 += z * z;
        }
        log_c + log_g(r2)
    })?;
    Ok(density.with_extent(extent))
}

/// Largest `|log p(x) - log (T#p)(x)|` over sampled points and maps.
///
/// Points are drawn around the density's extent (or from `N(0, I)`).
/// Points where both sides are `-∞` are skipped.
pub fn check_invariance(
    p: &Density,
    maps: &[AffineMap],
    n_points: usize,
    seed: u64,
) -> Result<f64> {
    let d = p.dim();
    if maps.iter().any(|m| m.dim() != d) {
        return Err(invalid("map dimension mismatch"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (centre, scale) = match p.extent() {
        Some(e) => (e.center.clone(), e.scale.clone()),
        None => (vec![0.0; d], vec![1.0; d]),
    };
    let mut worst: f64 = 0.0;
    for _ in 0..n_points {
        let x: Vec<f64> = (0..d)
            .map(|k| centre[k] + 2.0 * scale[k] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = p.log_pdf(&x);
        for map in maps {
            let pulled = p.log_pdf(&map.apply_inverse(&x)) - map.log_abs_det();
            if lp == f64::NEG_INFINITY && pulled == f64::NEG_INFINITY {
                continue;
            }
            let gap = (lp - pulled).abs();
            worst = if gap.is_nan() {
                f64::INFINITY
            } else {
                worst.max(gap)
            };
        }
    }
    Ok(worst)
}

/// Result of testing `Σ̂ ∈ { λ M : λ >= 0 }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedSetCheck {
    pub lambda_hat: f64,
    pub residual: f64,
}

impl FixedSetCheck {
    pub fn is_member(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// Proportionality of `Σ̂` to `M`: with `K = M^{-1/2} Σ̂ M^{-1/2}`,
/// `λ̂ = tr(K) / d` and `residual = |K - λ̂ I|_F / max(λ̂, 1e-12)`.
pub fn fixed_set_checks(sigma_hat: &DMatrix<f64>, shape: &DMatrix<f64>) -> Result<FixedSetCheck> {
    let d = shape.nrows();
    if sigma_hat.nrows() != d || !sigma_hat.is_square() {
        return Err(invalid("matrix dimension mismatch"));
    }
    check_spd(shape, "shape matrix")?;
    let w = sym_inv_sqrt(shape);
    let k = symmetrize(&(&w * sigma_hat * &w));
    let lambda_hat = k.trace() / d as f64;
    let residual = frobenius(&(&k - DMatrix::identity(d, d) * lambda_hat)) / lambda_hat.max(1e-12);
    Ok(FixedSetCheck {
        lambda_hat,
        residual,
    })
}

/// Draws from `N(mean, cov)`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vec<f64>,
    chol: Vec<f64>,
}

impl GaussianSampler {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d {
            return Err(invalid("covariance dimension mismatch"));
        }
        check_spd(cov, "covariance")?;
        let l = symmetrize(cov)
            .cholesky()
            .ok_or_else(|| invalid("covariance is not positive definite"))?
            .l();
        Ok(Self {
            mean: mean.to_vec(),
            chol: row_major(&l),
        })
    }
}

impl Sampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.mean.len();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|j| self.chol[i * d + j] * z[j]).sum::<f64>())
            .collect()
    }
}

pub use linalg::{random_orthogonal, random_rotation, random_spd};
