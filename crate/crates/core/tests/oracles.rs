//! Library values against closed forms computed independently here.

use nalgebra::{DMatrix, DVector};
use symvi_core::euclidean::{
    correlation, covariance, make_elliptical_target, pushforward_density, RadialProfile,
};
use symvi_core::sphere::{
    eta_critical, log_vmf_normalizer, marginal_moments, predicted_minimizer_c, ReducedObjective,
};
use symvi_core::{
    divergence_quadrature, AffineMap, AxialTarget, Density, DivergenceGenerator,
    EllipticalTargetSpec, QuadratureSpec,
};

fn gauss(mean: &[f64], cov: &[f64]) -> (DVector<f64>, DMatrix<f64>, Density) {
    let d = mean.len();
    let m = DVector::from_column_slice(mean);
    let c = DMatrix::from_row_slice(d, d, cov);
    let p = Density::gaussian(mean, &c).unwrap();
    (m, c, p)
}

fn kl_gauss(m0: &DVector<f64>, s0: &DMatrix<f64>, m1: &DVector<f64>, s1: &DMatrix<f64>) -> f64 {
    let d = m0.len() as f64;
    let inv1 = s1.clone().try_inverse().unwrap();
    let dm = m1 - m0;
    0.5 * ((&inv1 * s0).trace() + (dm.transpose() * &inv1 * &dm)[0] - d
        + (s1.determinant() / s0.determinant()).ln())
}

fn chi2_gauss(a: &DVector<f64>, sa: &DMatrix<f64>, b: &DVector<f64>, sb: &DMatrix<f64>) -> f64 {
    let ia = sa.clone().try_inverse().unwrap();
    let ib = sb.clone().try_inverse().unwrap();
    let k = &ia * 2.0 - &ib;
    let h = &ia * a * 2.0 - &ib * b;
    let ik = k.clone().try_inverse().unwrap();
    let expo = 0.5 * (h.transpose() * &ik * &h)[0] - (a.transpose() * &ia * a)[0]
        + 0.5 * (b.transpose() * &ib * b)[0];
    sb.determinant().sqrt() / (sa.determinant() * k.determinant().sqrt()) * expo.exp() - 1.0
}

fn hellinger_gauss(
    a: &DVector<f64>,
    sa: &DMatrix<f64>,
    b: &DVector<f64>,
    sb: &DMatrix<f64>,
) -> f64 {
    let avg = (sa + sb) * 0.5;
    let dm = a - b;
    let iavg = avg.clone().try_inverse().unwrap();
    let bc = (sa.determinant() * sb.determinant()).powf(0.25) / avg.determinant().sqrt()
        * (-0.125 * (dm.transpose() * &iavg * &dm)[0]).exp();
    2.0 * (1.0 - bc)
}

#[test]
fn gaussian_kl_both_directions() {
    let (m0, s0, p) = gauss(&[0.2, -0.1], &[1.0, 0.3, 0.3, 0.8]);
    let (m1, s1, q) = gauss(&[0.7, 0.4], &[1.5, -0.2, -0.2, 1.1]);
    let quad = QuadratureSpec::default_for(&[&p, &q]).unwrap();
    let fwd = divergence_quadrature(&DivergenceGenerator::forward_kl(), &p, &q, &quad).unwrap();
    let rev = divergence_quadrature(&DivergenceGenerator::reverse_kl(), &p, &q, &quad).unwrap();
    assert!((fwd - kl_gauss(&m0, &s0, &m1, &s1)).abs() < 1e-9);
    assert!((rev - kl_gauss(&m1, &s1, &m0, &s0)).abs() < 1e-9);
}

#[test]
fn gaussian_chi_squared_and_hellinger() {
    let (a, sa, p) = gauss(&[0.0, 0.3], &[0.9, 0.1, 0.1, 0.7]);
    let (b, sb, q) = gauss(&[0.4, 0.0], &[1.4, 0.2, 0.2, 1.2]);
    let quad = QuadratureSpec::default_for(&[&p, &q]).unwrap();
    let chi = divergence_quadrature(&DivergenceGenerator::chi_squared(), &p, &q, &quad).unwrap();
    assert!((chi - chi2_gauss(&a, &sa, &b, &sb)).abs() < 1e-8, "{chi}");
    let h =
        divergence_quadrature(&DivergenceGenerator::squared_hellinger(), &p, &q, &quad).unwrap();
    assert!((h - hellinger_gauss(&a, &sa, &b, &sb)).abs() < 1e-10);
}

#[test]
fn one_dimensional_total_variation() {
    // TV(N(0,1), N(1,1)) = 2 Phi(1/2) - 1.
    let p = Density::gaussian(&[0.0], &DMatrix::identity(1, 1)).unwrap();
    let q = Density::gaussian(&[1.0], &DMatrix::identity(1, 1)).unwrap();
    let quad = QuadratureSpec::default_for(&[&p, &q]).unwrap();
    let tv = divergence_quadrature(&DivergenceGenerator::total_variation(), &p, &q, &quad).unwrap();
    let exact = 0.382_924_922_548_026;
    // The integrand has a kink at x = 1/2, so plain Gauss-Legendre is only
    // algebraically convergent.
    assert!((tv - exact).abs() < 5e-4, "{tv}");
    let fine = quad.with_nodes(800).unwrap();
    let tv_fine =
        divergence_quadrature(&DivergenceGenerator::total_variation(), &p, &q, &fine).unwrap();
    assert!((tv_fine - exact).abs() < (tv - exact).abs() / 4.0);
}

#[test]
fn partially_overlapping_uniforms() {
    let p = Density::uniform_box(&[0.0], &[1.0]).unwrap();
    let q = Density::uniform_box(&[0.5], &[1.5]).unwrap();
    let quad = QuadratureSpec::default_for(&[&p, &q]).unwrap();
    let tv = divergence_quadrature(&DivergenceGenerator::total_variation(), &p, &q, &quad).unwrap();
    assert!((tv - 0.5).abs() < 1e-12);
    let h =
        divergence_quadrature(&DivergenceGenerator::squared_hellinger(), &p, &q, &quad).unwrap();
    assert!((h - 1.0).abs() < 1e-12);
    let kl = divergence_quadrature(&DivergenceGenerator::forward_kl(), &p, &q, &quad).unwrap();
    assert!(kl.is_infinite());
}

fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

#[test]
fn d3_marginal_moments_closed_form() {
    for k in [0.05, 0.3, 0.9, 1.7, 2.5, 4.0, 7.5, 12.0, 20.0, 35.0] {
        let m = marginal_moments(3, k).unwrap();
        let a = coth(k) - 1.0 / k;
        let m2 = 1.0 - 2.0 / k * coth(k) + 2.0 / (k * k);
        let b = 1.0 - 3.0 / k * coth(k) + 3.0 / (k * k);
        // Cancellation in the closed forms limits small-kappa comparisons.
        let tol = if k < 0.1 { 1e-7 } else { 1e-10 };
        assert!((m.a - a).abs() < tol, "A at {k}: {} vs {a}", m.a);
        assert!((m.m2 - m2).abs() < tol, "m2 at {k}");
        assert!((m.b - b).abs() < tol, "B at {k}");
    }
}

#[test]
fn d3_normaliser_closed_form() {
    for k in [0.01f64, 1.0, 2.5, 10.0, 50.0] {
        let exact = (k / k.sinh()).ln();
        assert!((log_vmf_normalizer(3, k).unwrap() - exact).abs() < 1e-10);
    }
}

#[test]
fn d3_threshold_closed_form() {
    for (lambda, k) in [(1.0f64, 2.5f64), (0.4, 1.0), (-2.0, 6.0)] {
        let c = coth(k);
        let exact = lambda.abs() * k * (k * c - 1.0) / (2.0 * (k * k - 3.0 * k * c + 3.0));
        assert!((eta_critical(3, lambda, k).unwrap() - exact).abs() < 1e-9);
    }
    let m = marginal_moments(3, 2.5).unwrap();
    assert!((m.a - 0.6135).abs() < 5e-4);
    assert!((m.b - 0.2637).abs() < 5e-4);
    assert!((eta_critical(3, 1.0, 2.5).unwrap() - 1.1632).abs() < 1e-3);
    assert!((predicted_minimizer_c(3, 1.0, 2.0, 2.5).unwrap() - 0.5816).abs() < 1e-3);
}

#[test]
fn reduced_objective_matches_sphere_quadrature() {
    let u = [0.0, 0.6, 0.8];
    let target = AxialTarget::new(&u, 1.0, 2.0).unwrap();
    let obj = ReducedObjective::new(&target, 2.5).unwrap();
    let p = target.density().unwrap();
    let quad = QuadratureSpec::sphere_default();
    for nu in [[0.0, 0.6, 0.8], [1.0, 0.0, 0.0], [0.48, 0.36, -0.8]] {
        let q = symvi_core::VmfParams::new(&nu, 2.5)
            .unwrap()
            .density()
            .unwrap();
        let direct =
            divergence_quadrature(&DivergenceGenerator::reverse_kl(), &p, &q, &quad).unwrap();
        assert!(
            (obj.eval(&nu) - direct).abs() < 1e-8,
            "{nu:?}: {} vs {direct}",
            obj.eval(&nu)
        );
    }
}

#[test]
fn student_target_covariance() {
    let m = DVector::from_vec(vec![1.0, 1.0]);
    let shape = DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0]);
    let spec = EllipticalTargetSpec {
        m: m.clone(),
        shape: shape.clone(),
        profile: RadialProfile::Student { dof: 7.0 },
    };
    let p = make_elliptical_target(&spec).unwrap();
    let quad = QuadratureSpec::tensor(vec![-119.0, -119.0], vec![121.0, 121.0], 600).unwrap();
    let cov = covariance(&p, &quad).unwrap();
    let exact = &shape * (7.0 / 5.0);
    assert!((cov - exact).amax() < 1e-4);
}

#[test]
fn rotated_gaussian_correlation_counterexample() {
    let s = 0.5f64.sqrt();
    let r = DMatrix::from_row_slice(2, 2, &[s, -s, s, s]);
    let rot = AffineMap::new(r, DVector::zeros(2)).unwrap();
    let p1 = Density::gaussian(&[0.0, 0.0], &DMatrix::identity(2, 2)).unwrap();
    let p2 = Density::gaussian(
        &[0.0, 0.0],
        &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0])),
    )
    .unwrap();
    let corr = |p: &Density| {
        let pushed = pushforward_density(p, &rot).unwrap();
        let quad = QuadratureSpec::default_for(&[&pushed]).unwrap();
        correlation(&pushed, &quad).unwrap()
    };
    let c1 = corr(&p1);
    let c2 = corr(&p2);
    assert!((c1 - DMatrix::identity(2, 2)).amax() < 1e-9);
    let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
    assert!((c2 - expected).amax() < 1e-9);
}
