//! Gauss-Legendre rules, tensor and spherical grids, and a fixed-order
//! pairwise sum so that reductions are bit-stable regardless of how the
//! per-node work was scheduled.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{invalid, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    fn compute(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        // Roots are symmetric; solve for the upper half and mirror.
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let nodes = self.nodes.iter().map(|&x| mid + half * x).collect();
        let weights = self.weights.iter().map(|&w| half * w).collect();
        (nodes, weights)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached `n`-point Gauss-Legendre rule.
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(GaussLegendre::compute(n)))
        .clone()
}

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// A finite set of weighted nodes in `R^dim`, stored row-major.
#[derive(Debug, Clone)]
pub struct QuadGrid {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadGrid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }
}

/// Composite Gauss-Legendre rule on `[lower, upper]` split at `breaks`.
///
/// Breakpoints outside the open interval are ignored. Each piece gets
/// `ceil(n / pieces)` nodes (at least two).
pub fn composite_rule(lower: f64, upper: f64, breaks: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| b > lower && b < upper)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(lower);
    edges.extend(cuts);
    edges.push(upper);
    let pieces = edges.len() - 1;
    let per_piece = n.div_ceil(pieces).max(2);
    let rule = gauss_legendre(per_piece);
    let mut nodes = Vec::with_capacity(per_piece * pieces);
    let mut weights = Vec::with_capacity(per_piece * pieces);
    for w in edges.windows(2) {
        let (x, wt) = rule.on_interval(w[0], w[1]);
        nodes.extend(x);
        weights.extend(wt);
    }
    (nodes, weights)
}

/// Tensor product of per-axis rules.
pub fn tensor_grid(axes: &[(Vec<f64>, Vec<f64>)]) -> QuadGrid {
    let dim = axes.len();
    let total: usize = axes.iter().map(|(x, _)| x.len()).product();
    let mut points = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut w = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            points.push(axes[k].0[i]);
            w *= axes[k].1[i];
        }
        weights.push(w);
        // Last axis varies fastest.
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].0.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    QuadGrid {
        dim,
        points,
        weights,
    }
}

/// Rule for `E_sigma[g(u^T X)]`, `X` uniform on `S^{d-1}`.
///
/// Returns nodes `t_i` in `(-1, 1)` and weights summing to one such that
/// `sum_i w_i g(t_i)` approximates `int g(t) rho_d(t) dt / int rho_d(t) dt`
/// with `rho_d(t) = (1 - t^2)^{(d-3)/2}`. The substitution `t = sin(theta)`
/// turns the weight into `cos(theta)^{d-2}`, which is smooth for every
/// `d >= 3`, so a plain Gauss-Legendre rule in `theta` converges
/// geometrically.
pub fn zonal_rule(d: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if d < 3 {
        return Err(invalid(format!("sphere dimension must be >= 3, got {d}")));
    }
    if n < 2 {
        return Err(invalid("zonal rule needs at least 2 nodes"));
    }
    let rule = gauss_legendre(n);
    let (theta, w) = rule.on_interval(-FRAC_PI_2, FRAC_PI_2);
    let expo = (d - 2) as i32;
    let raw: Vec<f64> = theta
        .iter()
        .zip(&w)
        .map(|(&th, &wt)| wt * th.cos().powi(expo))
        .collect();
    let total = pairwise_sum(&raw);
    let t = theta.iter().map(|th| th.sin()).collect();
    let weights = raw.into_iter().map(|r| r / total).collect();
    Ok((t, weights))
}

/// Product grid on `S^2` for the uniform probability measure.
///
/// Polar coordinate `z = cos(theta)` uses Gauss-Legendre with `n_polar`
/// nodes; azimuth uses `n_azimuth` equispaced midpoints. Weights sum to one.
pub fn sphere_product_grid(n_polar: usize, n_azimuth: usize) -> QuadGrid {
    let rule = gauss_legendre(n_polar);
    let mut points = Vec::with_capacity(3 * n_polar * n_azimuth);
    let mut weights = Vec::with_capacity(n_polar * n_azimuth);
    let dphi = 2.0 * PI / n_azimuth as f64;
    for (&z, &wz) in rule.nodes.iter().zip(&rule.weights) {
        let r = (1.0 - z * z).max(0.0).sqrt();
        for j in 0..n_azimuth {
            let phi = (j as f64 + 0.5) * dphi;
            points.extend_from_slice(&[r * phi.cos(), r * phi.sin(), z]);
            weights.push(wz / (2.0 * n_azimuth as f64));
        }
    }
    QuadGrid {
        dim: 3,
        points,
        weights,
    }
}
