use nalgebra::{DMatrix, DVector};
use symvi_core::euclidean::{
    canonical_even_target, correlation_from_covariance, fixed_set_checks, make_elliptical_target,
};
use symvi_core::optimize::{fit_locscale, fit_vmf};
use symvi_core::sphere::{predicted_minimizer_c, AxisStatistic};
use symvi_core::{
    AxialTarget, Density, DivergenceGenerator, EllipticalTargetSpec, Line, LocScaleFamily,
    OptConfig, QuadratureSpec,
};

fn shape() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0])
}

#[test]
fn well_specified_gaussian() {
    let cov = shape();
    let target = Density::gaussian(&[1.0, -0.5], &cov).unwrap();
    let quad = QuadratureSpec::default_for(&[&target]).unwrap();
    let fam = LocScaleFamily::gaussian(2).unwrap();
    let r = fit_locscale(
        &target,
        &fam,
        &DivergenceGenerator::forward_kl(),
        &quad,
        &OptConfig::default(),
        None,
    )
    .unwrap();
    let p = r.params.as_locscale().unwrap();
    assert!(r.converged);
    assert!(r.objective <= 1e-8, "{}", r.objective);
    assert!((p.nu() - DVector::from_vec(vec![1.0, -0.5])).amax() < 1e-4);
    assert!((p.scale() - cov).norm() < 1e-3);
}

#[test]
fn even_target_mean_is_recovered() {
    let m = DVector::from_vec(vec![1.0, 1.0]);
    let target = canonical_even_target(&m).unwrap();
    let quad = QuadratureSpec::default_for(&[&target]).unwrap();
    let fam = LocScaleFamily::gaussian(2).unwrap();
    for g in [
        DivergenceGenerator::reverse_kl(),
        DivergenceGenerator::forward_kl(),
        DivergenceGenerator::chi_squared(),
        DivergenceGenerator::squared_hellinger(),
    ] {
        let r = fit_locscale(&target, &fam, &g, &quad, &OptConfig::default(), None).unwrap();
        let nu = r.params.as_locscale().unwrap().nu();
        assert!((nu - &m).norm() <= 1e-3, "{}: {nu}", g.name());
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}

#[test]
fn location_family_with_fixed_scale() {
    let m = DVector::from_vec(vec![-0.5, 2.0]);
    let target = canonical_even_target(&m).unwrap();
    let quad = QuadratureSpec::default_for(&[&target]).unwrap();
    let fam = LocScaleFamily::gaussian(2).unwrap();
    let s = DMatrix::from_row_slice(2, 2, &[0.5, -0.1, -0.1, 0.3]);
    let r = fit_locscale(
        &target,
        &fam,
        &DivergenceGenerator::reverse_kl(),
        &quad,
        &OptConfig::default(),
        Some(&s),
    )
    .unwrap();
    let p = r.params.as_locscale().unwrap();
    assert_eq!(p.scale(), &s);
    assert!((p.nu() - &m).norm() <= 1e-3);
}

#[test]
fn elliptical_covariance_recovered_up_to_scale() {
    let m = DVector::from_vec(vec![1.0, 1.0]);
    let target =
        make_elliptical_target(&EllipticalTargetSpec::canonical(m.clone(), shape())).unwrap();
    let quad = QuadratureSpec::default_for(&[&target]).unwrap();
    let fam = LocScaleFamily::gaussian(2).unwrap();
    let r = fit_locscale(
        &target,
        &fam,
        &DivergenceGenerator::reverse_kl(),
        &quad,
        &OptConfig::default(),
        None,
    )
    .unwrap();
    let p = r.params.as_locscale().unwrap();
    let cov_q = fam.member_covariance(p).unwrap();
    assert!(fixed_set_checks(&cov_q, &shape()).unwrap().residual <= 1e-3);
    let expected = correlation_from_covariance(&shape()).unwrap();
    let got = correlation_from_covariance(&cov_q).unwrap();
    assert!((got - expected).amax() <= 1e-3);
    assert!((p.nu() - &m).norm() <= 1e-3);
}

#[test]
fn isotropic_elliptical_target_gives_isotropic_fit() {
    let m = DVector::from_vec(vec![0.0, 0.0]);
    let target =
        make_elliptical_target(&EllipticalTargetSpec::canonical(m, DMatrix::identity(2, 2)))
            .unwrap();
    let quad = QuadratureSpec::default_for(&[&target]).unwrap();
    let fam = LocScaleFamily::gaussian(2).unwrap();
    let r = fit_locscale(
        &target,
        &fam,
        &DivergenceGenerator::reverse_kl(),
        &quad,
        &OptConfig::default(),
        None,
    )
    .unwrap();
    let s = r.params.as_locscale().unwrap().scale().clone();
    let check = fixed_set_checks(&s, &DMatrix::identity(2, 2)).unwrap();
    assert!(check.residual <= 1e-3);
}

fn sphere_cfg(n_starts: usize) -> OptConfig {
    OptConfig {
        n_starts,
        seed: 3,
        ..OptConfig::default()
    }
}

#[test]
fn sphere_below_threshold_recovers_axis() {
    let u = [0.0, 0.6, 0.8];
    let target = AxialTarget::new(&u, 1.0, 1.0).unwrap();
    let r = fit_vmf(
        &target,
        &DivergenceGenerator::reverse_kl(),
        &sphere_cfg(8),
        Some(2.5),
        true,
    )
    .unwrap();
    let v = r.params.as_vmf().unwrap();
    let c: f64 = v.nu().iter().zip(&u).map(|(a, b)| a * b).sum();
    assert!((c - 1.0).abs() <= 1e-6);
    assert!(v.axis().coincides_with(&target.axis(), 1e-4));
    let lines: Vec<Line> = r
        .starts
        .iter()
        .map(|s| s.params.as_vmf().unwrap().axis())
        .collect();
    for a in &lines {
        for b in &lines {
            assert!(a.angle_to(b) <= 1e-4);
        }
    }
}

#[test]
fn sphere_above_threshold_spreads_on_circle() {
    let u = [0.0, 0.6, 0.8];
    let target = AxialTarget::new(&u, 1.0, 2.0).unwrap();
    let r = fit_vmf(
        &target,
        &DivergenceGenerator::reverse_kl(),
        &sphere_cfg(8),
        Some(2.5),
        true,
    )
    .unwrap();
    let predicted = predicted_minimizer_c(3, 1.0, 2.0, 2.5).unwrap();
    let cs: Vec<f64> = r
        .starts
        .iter()
        .map(|s| {
            s.params
                .as_vmf()
                .unwrap()
                .nu()
                .iter()
                .zip(&u)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    let spread =
        cs.iter().copied().fold(f64::MIN, f64::max) - cs.iter().copied().fold(f64::MAX, f64::min);
    assert!(spread <= 1e-3);
    assert!(r.start_dispersion > 0.1);
    assert!((cs[0] - 0.5816).abs() <= 1e-3 && (cs[0] - predicted).abs() <= 1e-4);
    let axis = r.params.as_vmf().unwrap().axis();
    assert!(!axis.coincides_with(&target.axis(), 1e-2));
}

#[test]
fn negative_lambda_points_away() {
    let u = [0.6, 0.0, 0.8];
    let target = AxialTarget::new(&u, -1.0, 0.05).unwrap();
    let r = fit_vmf(
        &target,
        &DivergenceGenerator::reverse_kl(),
        &sphere_cfg(4),
        Some(2.5),
        true,
    )
    .unwrap();
    let v = r.params.as_vmf().unwrap();
    for (a, b) in v.nu().iter().zip(&u) {
        assert!((a + b).abs() < 1e-5);
    }
    assert!(v.axis().coincides_with(&target.axis(), 1e-4));
}

#[test]
fn free_kappa_closed_form_fit() {
    let u = [0.0, 0.0, 1.0];
    let target = AxialTarget::new(&u, 1.0, 1.0).unwrap();
    let r = fit_vmf(
        &target,
        &DivergenceGenerator::reverse_kl(),
        &sphere_cfg(3),
        None,
        true,
    )
    .unwrap();
    let v = r.params.as_vmf().unwrap();
    assert!(r.converged);
    assert!(v.kappa() > 0.0);
    assert!(v.axis().coincides_with(&target.axis(), 1e-4));
}

#[test]
fn monte_carlo_fit_is_close_to_closed_form() {
    let u = [0.0, 0.0, 1.0];
    let target = AxialTarget::new(&u, 1.0, 2.0).unwrap();
    let cfg = OptConfig {
        n_starts: 2,
        mc_samples: 20_000,
        ..OptConfig::default()
    };
    let r = fit_vmf(
        &target,
        &DivergenceGenerator::reverse_kl(),
        &cfg,
        Some(2.5),
        false,
    )
    .unwrap();
    let c = r.params.as_vmf().unwrap().nu()[2];
    assert!((c - 0.5816).abs() < 0.05, "{c}");
}

#[test]
fn fits_are_deterministic() {
    let m = DVector::from_vec(vec![1.0, 1.0]);
    let target = canonical_even_target(&m).unwrap();
    let quad = QuadratureSpec::default_for(&[&target])
        .unwrap()
        .with_nodes(60)
        .unwrap();
    let fam = LocScaleFamily::gaussian(2).unwrap();
    let cfg = OptConfig {
        n_starts: 3,
        seed: 42,
        ..OptConfig::default()
    };
    let g = DivergenceGenerator::reverse_kl();
    let a = fit_locscale(&target, &fam, &g, &quad, &cfg, None).unwrap();
    let b = fit_locscale(&target, &fam, &g, &quad, &cfg, None).unwrap();
    assert_eq!(a, b);
    let t = AxialTarget::new(&[0.0, 0.0, 1.0], 1.0, 2.0).unwrap();
    let a = fit_vmf(&t, &g, &sphere_cfg(4), Some(2.5), true).unwrap();
    let b = fit_vmf(&t, &g, &sphere_cfg(4), Some(2.5), true).unwrap();
    assert_eq!(a, b);
}

#[test]
fn collapsing_starts_are_rejected() {
    // These seeds draw starts that used to shrink below the node spacing.
    let m = DVector::from_vec(vec![1.0, 1.0]);
    let target = canonical_even_target(&m).unwrap();
    let quad = QuadratureSpec::default_for(&[&target]).unwrap();
    let fam = LocScaleFamily::gaussian(2).unwrap();
    for seed in [1, 3] {
        let cfg = OptConfig {
            seed,
            ..OptConfig::default()
        };
        let r = fit_locscale(
            &target,
            &fam,
            &DivergenceGenerator::reverse_kl(),
            &quad,
            &cfg,
            None,
        )
        .unwrap();
        for s in &r.starts {
            let nu = s.params.as_locscale().unwrap().nu();
            assert!(
                (nu - &m).norm() <= 1e-3,
                "seed {seed} start {}: {nu}",
                s.index
            );
        }
    }
}

#[test]
fn forward_kl_to_heavy_tails_stays_bounded() {
    let m = DVector::from_vec(vec![1.0, 1.0]);
    let target =
        make_elliptical_target(&EllipticalTargetSpec::canonical(m.clone(), shape())).unwrap();
    let quad = QuadratureSpec::default_for(&[&target]).unwrap();
    let fam = LocScaleFamily::gaussian(2).unwrap();
    let cfg = OptConfig {
        seed: 2,
        ..OptConfig::default()
    };
    let r = fit_locscale(
        &target,
        &fam,
        &DivergenceGenerator::forward_kl(),
        &quad,
        &cfg,
        None,
    )
    .unwrap();
    let p = r.params.as_locscale().unwrap();
    assert!(r.objective > 0.05);
    assert!((p.nu() - &m).norm() <= 1e-3);
    assert!(p.scale().amax() < 10.0);
}
