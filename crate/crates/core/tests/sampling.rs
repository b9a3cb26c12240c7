use symvi_core::divergence::divergence_monte_carlo;
use symvi_core::euclidean::GaussianSampler;
use symvi_core::sphere::{marginal_moments, sample_vmf, ReducedObjective, VmfSampler};
use symvi_core::{AxialTarget, Density, DivergenceGenerator, QuadratureSpec, VmfParams};

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn vmf_marginal_moments_match() {
    let n = 100_000;
    for (d, kappa, seed) in [(3, 2.5, 1), (4, 0.7, 2), (6, 12.0, 3), (10, 40.0, 4)] {
        let mut nu = vec![0.0; d];
        nu[0] = 0.6;
        nu[d - 1] = 0.8;
        let params = VmfParams::new(&nu, kappa).unwrap();
        let xs = sample_vmf(&params, n, seed).unwrap();
        let m = marginal_moments(d, kappa).unwrap();

        let t: Vec<f64> = xs.iter().map(|x| dot(x, &nu)).collect();
        let (a, se) = mean_and_se(&t);
        assert!(
            (a - m.a).abs() <= 4.0 * se,
            "d={d} k={kappa}: A {a} vs {}",
            m.a
        );

        // Second moment along u with c = u^T nu.
        let mut u = vec![0.0; d];
        u[0] = 0.8;
        u[d - 1] = -0.6;
        let c = dot(&u, &nu);
        let sq: Vec<f64> = xs.iter().map(|x| dot(x, &u).powi(2)).collect();
        let (e, se) = mean_and_se(&sq);
        let predicted = (1.0 - m.m2) / (d as f64 - 1.0) + m.b * c * c;
        assert!(
            (e - predicted).abs() <= 4.0 * se,
            "d={d}: {e} vs {predicted}"
        );

        // A direction with c != 0.
        let w: Vec<f64> = (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let c = dot(&w, &nu);
        let sq: Vec<f64> = xs.iter().map(|x| dot(x, &w).powi(2)).collect();
        let (e, se) = mean_and_se(&sq);
        let predicted = (1.0 - m.m2) / (d as f64 - 1.0) + m.b * c * c;
        assert!(
            (e - predicted).abs() <= 4.0 * se,
            "d={d}: {e} vs {predicted}"
        );
    }
}

#[test]
fn near_uniform_second_moment() {
    for d in [3, 5, 8] {
        let mut nu = vec![0.0; d];
        nu[1] = 1.0;
        let params = VmfParams::new(&nu, 1e-6).unwrap();
        let xs = sample_vmf(&params, 100_000, 9).unwrap();
        let sq: Vec<f64> = xs.iter().map(|x| x[1] * x[1]).collect();
        let (e, se) = mean_and_se(&sq);
        assert!((e - 1.0 / d as f64).abs() <= 4.0 * se, "d={d}: {e}");
    }
}

#[test]
fn closed_form_objective_matches_monte_carlo() {
    let u = [0.0, 0.6, 0.8];
    let target = AxialTarget::new(&u, 1.0, 2.0).unwrap();
    let p = target.density().unwrap();
    let reduced = ReducedObjective::new(&target, 2.5).unwrap();
    for (i, nu) in [[0.0, 0.6, 0.8], [0.0, 0.8, -0.6], [0.6, 0.0, 0.8]]
        .iter()
        .enumerate()
    {
        let params = VmfParams::new(nu, 2.5).unwrap();
        let q = params.density().unwrap();
        let est = divergence_monte_carlo(
            &DivergenceGenerator::reverse_kl(),
            &p,
            &q,
            &VmfSampler::new(&params),
            200_000,
            i as u64,
        )
        .unwrap();
        let exact = reduced.eval(nu);
        assert!(
            (est.estimate - exact).abs() <= 3.0 * est.std_error,
            "{nu:?}: {} ± {} vs {exact}",
            est.estimate,
            est.std_error
        );
    }
}

#[test]
fn gaussian_monte_carlo_matches_quadrature() {
    let cov_p = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.6]);
    let cov_q = nalgebra::DMatrix::from_row_slice(2, 2, &[1.4, -0.1, -0.1, 0.9]);
    let p = Density::gaussian(&[0.0, 0.0], &cov_p).unwrap();
    let q = Density::gaussian(&[0.3, 0.2], &cov_q).unwrap();
    let quad = QuadratureSpec::default_for(&[&p, &q]).unwrap();
    let sampler = GaussianSampler::new(&[0.3, 0.2], &cov_q).unwrap();
    for g in DivergenceGenerator::builtins() {
        let exact = symvi_core::divergence_quadrature(&g, &p, &q, &quad).unwrap();
        let est = divergence_monte_carlo(&g, &p, &q, &sampler, 100_000, 17).unwrap();
        assert!(
            (est.estimate - exact).abs() <= 4.0 * est.std_error,
            "{}: {} ± {} vs {exact}",
            g.name(),
            est.estimate,
            est.std_error
        );
    }
}
