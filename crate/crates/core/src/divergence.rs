//! f-divergences between densities.
//!
//! For a convex generator `f` with `f(1) = 0`,
//!
//! ```text
//! D_f(P || Q) = ∫_{q > 0} q f(p / q) dμ + f'(∞) P({q = 0})
//! ```
//!
//! where `f'(∞) = lim_{t↓0} t f(1/t)`. Everything is evaluated in log space:
//! a generator is stored as `r ↦ f(e^r)` so that ratios `p / q` never have
//! to be formed explicitly.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::euclidean::{pushforward_density, AffineMap};
use crate::quadrature::{self, pairwise_sum, QuadGrid};

/// Log-densities below this contribute nothing to expectations and moments.
/// Divergences do not use it: they work with log-ratios, and only `-∞`
/// marks a point outside the support.
pub const LOG_ZERO_THRESHOLD: f64 = -700.0;

/// Gauss-Legendre nodes per axis for Euclidean integrals.
pub const DEFAULT_NODES_PER_AXIS: usize = 200;

/// Polar nodes of the default `S^2` product grid (azimuth uses twice as many).
pub const DEFAULT_SPHERE_POLAR_NODES: usize = 400;

/// Half-width of default truncation boxes, in marginal standard deviations.
pub const DEFAULT_BOX_HALF_WIDTH: f64 = 8.0;

type LogFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Convex generator of an f-divergence.
#[derive(Clone)]
pub struct DivergenceGenerator {
    name: String,
    /// `r ↦ f(e^r)` for finite `r`.
    f_log: LogFn,
    /// `r ↦ f(e^r) e^{-r}`, used where `p > q` so that `p` carries the weight.
    f_log_p: LogFn,
    f_at_zero: f64,
    f_prime_at_inf: f64,
}

impl fmt::Debug for DivergenceGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DivergenceGenerator")
            .field("name", &self.name)
            .field("f_at_zero", &self.f_at_zero)
            .field("f_prime_at_inf", &self.f_prime_at_inf)
            .finish()
    }
}

impl DivergenceGenerator {
    pub const FORWARD_KL: &'static str = "forward-kl";
    pub const REVERSE_KL: &'static str = "reverse-kl";
    pub const CHI_SQUARED: &'static str = "chi-squared";
    pub const TOTAL_VARIATION: &'static str = "total-variation";
    pub const SQUARED_HELLINGER: &'static str = "squared-hellinger";

    fn from_log(
        name: &str,
        f_log: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_log_p: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_at_zero: f64,
        f_prime_at_inf: f64,
    ) -> Self {
        Self {
            name: name.to_owned(),
            f_log: Arc::new(f_log),
            f_log_p: Arc::new(f_log_p),
            f_at_zero,
            f_prime_at_inf,
        }
    }

    /// `f(t) = t log t`, giving `KL(P || Q)`.
    pub fn forward_kl() -> Self {
        Self::from_log(Self::FORWARD_KL, |r| r * r.exp(), |r| r, 0.0, f64::INFINITY)
    }

    /// `f(t) = -log t`, giving `KL(Q || P)`.
    pub fn reverse_kl() -> Self {
        Self::from_log(
            Self::REVERSE_KL,
            |r| -r,
            |r| -r * (-r).exp(),
            f64::INFINITY,
            0.0,
        )
    }

    /// `f(t) = (t - 1)^2`.
    pub fn chi_squared() -> Self {
        Self::from_log(
            Self::CHI_SQUARED,
            |r| r.exp_m1().powi(2),
            |r| r.exp_m1() * -(-r).exp_m1(),
            1.0,
            f64::INFINITY,
        )
    }

    /// `f(t) = |t - 1| / 2`.
    pub fn total_variation() -> Self {
        Self::from_log(
            Self::TOTAL_VARIATION,
            |r| 0.5 * r.exp_m1().abs(),
            |r| 0.5 * (-r).exp_m1().abs(),
            0.5,
            0.5,
        )
    }

    /// `f(t) = (1 - sqrt t)^2`.
    pub fn squared_hellinger() -> Self {
        Self::from_log(
            Self::SQUARED_HELLINGER,
            |r| (0.5 * r).exp_m1().powi(2),
            |r| (-0.5 * r).exp_m1().powi(2),
            1.0,
            1.0,
        )
    }

    pub fn builtins() -> Vec<Self> {
        vec![
            Self::forward_kl(),
            Self::reverse_kl(),
            Self::chi_squared(),
            Self::total_variation(),
            Self::squared_hellinger(),
        ]
    }

    pub fn builtin_names() -> [&'static str; 5] {
        [
            Self::FORWARD_KL,
            Self::REVERSE_KL,
            Self::CHI_SQUARED,
            Self::TOTAL_VARIATION,
            Self::SQUARED_HELLINGER,
        ]
    }

    /// Looks up a built-in generator. Accepts a few common aliases.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "forward-kl" | "kl" | "fkl" => Ok(Self::forward_kl()),
            "reverse-kl" | "rkl" => Ok(Self::reverse_kl()),
            "chi-squared" | "chi2" | "chisq" => Ok(Self::chi_squared()),
            "total-variation" | "tv" => Ok(Self::total_variation()),
            "squared-hellinger" | "hellinger" => Ok(Self::squared_hellinger()),
            other => Err(invalid(format!(
                "unknown divergence '{other}', expected one of {:?}",
                Self::builtin_names()
            ))),
        }
    }

    /// User-supplied generator `f` on `(0, ∞)` with its boundary limits.
    ///
    /// Rejects generators with `f(1) != 0`.
    pub fn custom(
        name: &str,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_at_zero: f64,
        f_prime_at_inf: f64,
    ) -> Result<Self> {
        let at_one = f(1.0);
        if at_one != 0.0 {
            return Err(invalid(format!("generator '{name}' has f(1) = {at_one}")));
        }
        let f = Arc::new(f);
        let fp = f.clone();
        Ok(Self::from_log(
            name,
            move |r| f(r.exp()),
            move |r| fp(r.exp()) * (-r).exp(),
            f_at_zero,
            f_prime_at_inf,
        ))
    }

    /// The generator `t ↦ t f(1/t)` of the swapped divergence:
    /// `D_{dual}(Q || P) = D_f(P || Q)`.
    pub fn dual(&self) -> Self {
        let (a, b) = (self.f_log.clone(), self.f_log_p.clone());
        Self {
            name: format!("dual({})", self.name),
            f_log: Arc::new(move |r| b(-r)),
            f_log_p: Arc::new(move |r| a(-r)),
            f_at_zero: self.f_prime_at_inf,
            f_prime_at_inf: self.f_at_zero,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn f_at_zero(&self) -> f64 {
        self.f_at_zero
    }

    pub fn f_prime_at_inf(&self) -> f64 {
        self.f_prime_at_inf
    }

    pub fn is_reverse_kl(&self) -> bool {
        self.name == Self::REVERSE_KL
    }

    /// `f(t)` for `t ∈ [0, ∞]`; `t = 0` returns the stored limit `f(0)`.
    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0, "generator argument must be >= 0, got {t}");
        if t.is_nan() || t < 0.0 {
            return f64::NAN;
        }
        self.eval_log_ratio(t.ln())
    }

    /// `f(e^r)` for `r ∈ [-∞, ∞]`.
    pub fn eval_log_ratio(&self, r: f64) -> f64 {
        if r == f64::NEG_INFINITY {
            self.f_at_zero
        } else {
            (self.f_log)(r)
        }
    }

    /// `q f(p/q)` from `log p` and `log q`, weighting by the larger density so
    /// that neither factor overflows. `log q = -∞` is not handled here.
    pub fn weighted_term(&self, log_p: f64, log_q: f64) -> f64 {
        if log_p == f64::NEG_INFINITY {
            let q = log_q.exp();
            return if q == 0.0 { 0.0 } else { q * self.f_at_zero };
        }
        let r = log_p - log_q;
        let (weight, v) = if r <= 0.0 {
            (log_q.exp(), (self.f_log)(r))
        } else {
            (log_p.exp(), (self.f_log_p)(r))
        };
        // 0 * ∞ = 0
        if weight == 0.0 || v == 0.0 {
            0.0
        } else {
            weight * v
        }
    }
}

/// Evaluates a generator at `t ∈ [0, ∞]`.
pub fn eval_generator(g: &DivergenceGenerator, t: f64) -> f64 {
    g.eval(t)
}

/// Where a density may be nonzero.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    FullSpace,
    /// Axis-aligned box; the density is zero outside.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    UnitSphere,
}

/// Dominating measure the density is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMeasure {
    Lebesgue,
    /// Uniform probability measure on the unit sphere.
    SphereUniform,
}

/// Location and per-axis spread, used to choose truncation boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Extent {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

pub type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A log-density on `R^dim` or `S^{dim-1}`. `-∞` encodes zero density.
#[derive(Clone)]
pub struct Density {
    dim: usize,
    log_density: LogDensityFn,
    support: Support,
    reference: ReferenceMeasure,
    extent: Option<Extent>,
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Density")
            .field("dim", &self.dim)
            .field("support", &self.support)
            .field("reference", &self.reference)
            .field("extent", &self.extent)
            .finish()
    }
}

impl Density {
    /// Wraps a log-density. For box supports the result is `-∞` outside the
    /// box regardless of what `log_density` returns there.
    pub fn new(
        dim: usize,
        support: Support,
        log_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("density dimension must be positive"));
        }
        let reference = match support {
            Support::UnitSphere => ReferenceMeasure::SphereUniform,
            _ => ReferenceMeasure::Lebesgue,
        };
        let log_density: LogDensityFn = match &support {
            Support::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(invalid("box support dimension mismatch"));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return Err(invalid("box support must have positive volume"));
                }
                let (lo, hi) = (lower.clone(), upper.clone());
                Arc::new(move |x: &[f64]| {
                    let inside = x
                        .iter()
                        .zip(lo.iter().zip(&hi))
                        .all(|(v, (l, u))| v >= l && v <= u);
                    if inside {
                        log_density(x)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
            }
            Support::UnitSphere if dim < 3 => {
                return Err(invalid("sphere densities need dim >= 3"));
            }
            _ => Arc::new(log_density),
        };
        Ok(Self {
            dim,
            log_density,
            support,
            reference,
            extent: None,
        })
    }

    pub fn with_extent(mut self, extent: Extent) -> Self {
        self.extent = Some(extent);
        self
    }

    /// Multivariate normal `N(mean, cov)`.
    pub fn gaussian(mean: &[f64], cov: &nalgebra::DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(invalid("gaussian covariance dimension mismatch"));
        }
        crate::linalg::check_spd(cov, "covariance")?;
        let chol = crate::linalg::symmetrize(cov)
            .cholesky()
            .ok_or_else(|| invalid("covariance is not positive definite"))?;
        let l_inv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| invalid("singular covariance"))?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        let l_inv: Vec<f64> = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| l_inv[(i, j)])
            .collect();
        let mu = mean.to_vec();
        let extent = Extent {
            center: mean.to_vec(),
            scale: (0..d).map(|i| cov[(i, i)].sqrt()).collect(),
        };
        let density = Self::new(d, Support::FullSpace, move |x| {
            let mut quad = 0.0;
            for i in 0..d {
                let mut z = 0.0;
                for j in 0..=i {
                    z += l_inv[i * d + j] * (x[j] - mu[j]);
                }
                quad += z * z;
            }
            norm - 0.5 * quad
        })?;
        Ok(density.with_extent(extent))
    }

    /// Uniform density on an axis-aligned box.
    pub fn uniform_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let log_vol: f64 = lower.iter().zip(upper).map(|(l, u)| (u - l).ln()).sum();
        let extent = Extent {
            center: lower
                .iter()
                .zip(upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
            scale: lower
                .iter()
                .zip(upper)
                .map(|(l, u)| (u - l) / 12f64.sqrt())
                .collect(),
        };
        Ok(Self::new(
            lower.len(),
            Support::Box {
                lower: lower.to_vec(),
                upper: upper.to_vec(),
            },
            move |_| -log_vol,
        )?
        .with_extent(extent))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn reference(&self) -> ReferenceMeasure {
        self.reference
    }

    pub fn extent(&self) -> Option<&Extent> {
        self.extent.as_ref()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.log_density)(x)
    }

    pub fn log_density_fn(&self) -> LogDensityFn {
        self.log_density.clone()
    }

    fn is_spherical(&self) -> bool {
        matches!(self.support, Support::UnitSphere)
    }
}

/// Axis-aligned truncation box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(invalid("truncation box bounds have mismatched lengths"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(invalid("truncation box must have positive finite volume"));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Smallest box containing the image of this box under `map`.
    pub fn image_under(&self, map: &AffineMap) -> Result<Self> {
        let d = self.dim();
        if map.dim() != d {
            return Err(invalid("map and box dimensions differ"));
        }
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for mask in 0..(1usize << d) {
            let corner: Vec<f64> = (0..d)
                .map(|k| {
                    if mask >> k & 1 == 1 {
                        self.upper[k]
                    } else {
                        self.lower[k]
                    }
                })
                .collect();
            let y = map.apply(&corner);
            for k in 0..d {
                lower[k] = lower[k].min(y[k]);
                upper[k] = upper[k].max(y[k]);
            }
        }
        Self::new(lower, upper)
    }
}

/// Integration scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadScheme {
    /// Tensor Gauss-Legendre on a truncation box.
    TensorGaussLegendre,
    /// Gauss-Legendre in `t = axis^T x` with the `rho_d` weight folded in.
    /// Exact only for integrands that depend on `x` through `axis^T x`.
    SphereZonal { axis: Vec<f64> },
    /// Polar-by-azimuth product grid on `S^2`.
    SphereProductGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub scheme: QuadScheme,
    pub nodes_per_axis: usize,
    pub truncation_box: Option<BoxBounds>,
}

impl QuadratureSpec {
    pub fn tensor(lower: Vec<f64>, upper: Vec<f64>, nodes_per_axis: usize) -> Result<Self> {
        let spec = Self {
            scheme: QuadScheme::TensorGaussLegendre,
            nodes_per_axis,
            truncation_box: Some(BoxBounds::new(lower, upper)?),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Tensor rule over `center ± 8 sd` of the widest of `densities`, using
    /// each density's [`Extent`].
    pub fn default_for(densities: &[&Density]) -> Result<Self> {
        Self::covering(densities, DEFAULT_BOX_HALF_WIDTH, DEFAULT_NODES_PER_AXIS)
    }

    /// Tensor rule over `center ± half_width · sd` of every density.
    pub fn covering(
        densities: &[&Density],
        half_width: f64,
        nodes_per_axis: usize,
    ) -> Result<Self> {
        let first = densities
            .first()
            .ok_or_else(|| invalid("need at least one density to size a box"))?;
        let d = first.dim();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for p in densities {
            if p.dim() != d {
                return Err(invalid("densities have different dimensions"));
            }
            let ext = p
                .extent()
                .ok_or_else(|| invalid("density carries no extent; pass an explicit box"))?;
            for k in 0..d {
                lower[k] = lower[k].min(ext.center[k] - half_width * ext.scale[k]);
                upper[k] = upper[k].max(ext.center[k] + half_width * ext.scale[k]);
            }
        }
        Self::tensor(lower, upper, nodes_per_axis)
    }

    pub fn sphere_product(n_polar: usize) -> Result<Self> {
        let spec = Self {
            scheme: QuadScheme::SphereProductGrid,
            nodes_per_axis: n_polar,
            truncation_box: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 400 × 800 product grid on `S^2`.
    pub fn sphere_default() -> Self {
        Self {
            scheme: QuadScheme::SphereProductGrid,
            nodes_per_axis: DEFAULT_SPHERE_POLAR_NODES,
            truncation_box: None,
        }
    }

    pub fn sphere_zonal(axis: Vec<f64>, nodes: usize) -> Result<Self> {
        let spec = Self {
            scheme: QuadScheme::SphereZonal { axis },
            nodes_per_axis: nodes,
            truncation_box: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_nodes(mut self, nodes_per_axis: usize) -> Result<Self> {
        self.nodes_per_axis = nodes_per_axis;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_axis < 2 {
            return Err(invalid("nodes_per_axis must be >= 2"));
        }
        match &self.scheme {
            QuadScheme::TensorGaussLegendre => {
                let b = self
                    .truncation_box
                    .as_ref()
                    .ok_or_else(|| invalid("tensor quadrature needs a truncation box"))?;
                BoxBounds::new(b.lower.clone(), b.upper.clone()).map(|_| ())
            }
            QuadScheme::SphereZonal { axis } => {
                let n: f64 = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
                if axis.len() < 3 || (n - 1.0).abs() > 1e-9 {
                    return Err(invalid("zonal axis must be a unit vector with dim >= 3"));
                }
                Ok(())
            }
            QuadScheme::SphereProductGrid => Ok(()),
        }
    }

    fn is_spherical(&self) -> bool {
        !matches!(self.scheme, QuadScheme::TensorGaussLegendre)
    }

    /// Nodes and weights for integrating the given densities. Box supports
    /// contribute breakpoints so that density jumps fall on piece edges.
    pub fn grid(&self, densities: &[&Density]) -> Result<QuadGrid> {
        self.validate()?;
        let dim = densities
            .first()
            .map(|p| p.dim())
            .ok_or_else(|| invalid("no densities given"))?;
        for p in densities {
            if p.dim() != dim {
                return Err(invalid(format!(
                    "dimension mismatch: {} vs {}",
                    p.dim(),
                    dim
                )));
            }
            if p.is_spherical() != self.is_spherical() {
                return Err(invalid("quadrature scheme does not match density support"));
            }
        }
        if densities
            .windows(2)
            .any(|w| w[0].reference() != w[1].reference())
        {
            return Err(invalid("densities use different reference measures"));
        }
        match &self.scheme {
            QuadScheme::TensorGaussLegendre => {
                let b = self.truncation_box.as_ref().expect("validated");
                if b.dim() != dim {
                    return Err(invalid("truncation box dimension mismatch"));
                }
                let axes: Vec<_> = (0..dim)
                    .map(|k| {
                        let breaks: Vec<f64> = densities
                            .iter()
                            .filter_map(|p| match p.support() {
                                Support::Box { lower, upper } => Some([lower[k], upper[k]]),
                                _ => None,
                            })
                            .flatten()
                            .collect();
                        quadrature::composite_rule(
                            b.lower[k],
                            b.upper[k],
                            &breaks,
                            self.nodes_per_axis,
                        )
                    })
                    .collect();
                Ok(quadrature::tensor_grid(&axes))
            }
            QuadScheme::SphereProductGrid => {
                if dim != 3 {
                    return Err(invalid("product grid is only available on S^2"));
                }
                Ok(quadrature::sphere_product_grid(
                    self.nodes_per_axis,
                    2 * self.nodes_per_axis,
                ))
            }
            QuadScheme::SphereZonal { axis } => {
                if axis.len() != dim {
                    return Err(invalid("zonal axis dimension mismatch"));
                }
                let (t, w) = quadrature::zonal_rule(dim, self.nodes_per_axis)?;
                let perp = orthogonal_unit(axis);
                let mut points = Vec::with_capacity(dim * t.len());
                for &ti in &t {
                    let s = (1.0 - ti * ti).max(0.0).sqrt();
                    points.extend(axis.iter().zip(&perp).map(|(a, p)| ti * a + s * p));
                }
                Ok(QuadGrid {
                    dim,
                    points,
                    weights: w,
                })
            }
        }
    }
}

/// Some unit vector orthogonal to `v` (assumed unit, dim >= 2).
pub(crate) fn orthogonal_unit(v: &[f64]) -> Vec<f64> {
    let k = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let mut e = vec![0.0; v.len()];
    e[k] = 1.0;
    let dot = v[k];
    for (ei, vi) in e.iter_mut().zip(v) {
        *ei -= dot * vi;
    }
    let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    e.iter().map(|x| x / n).collect()
}

/// Log-density values at every grid node, in node order.
pub fn log_values(p: &Density, grid: &QuadGrid) -> Vec<f64> {
    let f = p.log_density_fn();
    grid.points
        .par_chunks_exact(grid.dim)
        .map(|x| f(x))
        .collect()
}

/// `∫ g dP` over the grid.
pub fn expectation(p: &Density, grid: &QuadGrid, g: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
    let f = p.log_density_fn();
    let terms: Vec<f64> = grid
        .points
        .par_chunks_exact(grid.dim)
        .zip(grid.weights.par_iter())
        .map(|(x, &w)| {
            let lp = f(x);
            if lp < LOG_ZERO_THRESHOLD {
                0.0
            } else {
                w * lp.exp() * g(x)
            }
        })
        .collect();
    pairwise_sum(&terms)
}

/// Total mass of `p` under `quad`.
pub fn total_mass(p: &Density, quad: &QuadratureSpec) -> Result<f64> {
    let grid = quad.grid(&[p])?;
    Ok(expectation(p, &grid, |_| 1.0))
}

/// Divergence from precomputed log-densities at grid nodes. Not clamped.
pub fn divergence_from_log_values(
    g: &DivergenceGenerator,
    log_p: &[f64],
    log_q: &[f64],
    weights: &[f64],
) -> f64 {
    debug_assert!(log_p.len() == log_q.len() && log_q.len() == weights.len());
    let (regular, singular): (Vec<f64>, Vec<f64>) = log_p
        .par_iter()
        .zip(log_q.par_iter())
        .zip(weights.par_iter())
        .map(|((&lp, &lq), &w)| {
            if lq == f64::NEG_INFINITY {
                (0.0, w * lp.exp())
            } else {
                let t = g.weighted_term(lp, lq);
                (if t == 0.0 { 0.0 } else { w * t }, 0.0)
            }
        })
        .unzip();
    let mut total = pairwise_sum(&regular);
    let singular_mass = pairwise_sum(&singular);
    if singular_mass > 0.0 {
        total += g.f_prime_at_inf() * singular_mass;
    }
    total
}

/// `D_f(P || Q)` by deterministic quadrature.
///
/// Small negative values produced by quadrature error are reported as 0.
/// Returns `+∞` when `f'(∞) = ∞` and `P` puts mass on `{q = 0}`, the set
/// where `log q = -∞`.
pub fn divergence_quadrature(
    g: &DivergenceGenerator,
    p: &Density,
    q: &Density,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if (p.support() == &Support::UnitSphere || q.support() == &Support::UnitSphere)
        && p.support() != q.support()
    {
        return Err(invalid("cannot compare sphere and Euclidean densities"));
    }
    let grid = quad.grid(&[p, q])?;
    let log_p = log_values(p, &grid);
    let log_q = log_values(q, &grid);
    let value = divergence_from_log_values(g, &log_p, &log_q, &grid.weights);
    if value.is_nan() {
        return Err(invalid(format!(
            "divergence '{}' evaluated to NaN",
            g.name()
        )));
    }
    Ok(value.max(0.0))
}

/// Draws i.i.d. points from a fixed distribution.
pub trait Sampler: Sync {
    fn dim(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MonteCarloEstimate {
    pub fn is_infinite(&self) -> bool {
        self.estimate.is_infinite()
    }

    /// Mean and standard error of `values`; any `+∞` makes both infinite.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if values.iter().any(|v| v.is_infinite()) {
            return Self {
                estimate: f64::INFINITY,
                std_error: f64::INFINITY,
                n,
            };
        }
        let mean = pairwise_sum(values) / n as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = pairwise_sum(&sq) / (n as f64 - 1.0).max(1.0);
        Self {
            estimate: mean,
            std_error: (var / n as f64).sqrt(),
            n,
        }
    }
}

pub const MIN_MONTE_CARLO_SAMPLES: usize = 100;

/// `D_f(P || Q) = E_Q[f(p(X) / q(X))]` estimated from `n` draws of `Q`.
///
/// Deterministic given `seed`. For reverse KL the summand is
/// `log q(X) - log p(X)`.
pub fn divergence_monte_carlo<S: Sampler>(
    g: &DivergenceGenerator,
    p: &Density,
    q: &Density,
    sampler_for_q: &S,
    n: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if n < MIN_MONTE_CARLO_SAMPLES {
        return Err(invalid(format!(
            "Monte Carlo needs at least {MIN_MONTE_CARLO_SAMPLES} samples, got {n}"
        )));
    }
    if p.dim() != q.dim() || sampler_for_q.dim() != q.dim() {
        return Err(invalid("dimension mismatch between P, Q and sampler"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..n).map(|_| sampler_for_q.sample(&mut rng)).collect();
    Ok(monte_carlo_on_draws(g, p, q, &draws))
}

/// Monte Carlo estimate on a fixed set of draws from `Q`.
pub fn monte_carlo_on_draws(
    g: &DivergenceGenerator,
    p: &Density,
    q: &Density,
    draws: &[Vec<f64>],
) -> MonteCarloEstimate {
    let values: Vec<f64> = draws
        .par_iter()
        .map(|x| {
            let lq = q.log_pdf(x);
            let lp = p.log_pdf(x);
            g.eval_log_ratio(lp - lq)
        })
        .collect();
    MonteCarloEstimate::from_values(&values)
}

/// `|D_f(T#P || T#Q) - D_f(P || Q)|` for an invertible affine `T`.
///
/// The pushed-forward side is integrated over the bounding box of the image
/// of `quad`'s truncation box with the same number of nodes per axis.
pub fn check_pushforward_invariance(
    g: &DivergenceGenerator,
    p: &Density,
    q: &Density,
    map: &AffineMap,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let b = quad
        .truncation_box
        .as_ref()
        .filter(|_| quad.scheme == QuadScheme::TensorGaussLegendre)
        .ok_or_else(|| invalid("pushforward check needs a tensor quadrature with a box"))?;
    let pushed_p = pushforward_density(p, map)?;
    let pushed_q = pushforward_density(q, map)?;
    let image = b.image_under(map)?;
    let pushed_quad = QuadratureSpec {
        scheme: QuadScheme::TensorGaussLegendre,
        nodes_per_axis: quad.nodes_per_axis,
        truncation_box: Some(image),
    };
    let original = divergence_quadrature(g, p, q, quad)?;
    let pushed = divergence_quadrature(g, &pushed_p, &pushed_q, &pushed_quad)?;
    if original.is_infinite() && pushed.is_infinite() {
        return Ok(0.0);
    }
    Ok((pushed - original).abs())
}
