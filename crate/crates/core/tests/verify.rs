mod common;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use volumetrica::annealing::{sample_well_rounded, AnnealingConfig, AnnealingTarget};
use volumetrica::bodies::{Body, Polytope};
use volumetrica::verify::{
    anti_concentration_test, ball_volume, bounding_box, brute_force_volume, cube_volume,
    min_eigenvalue_test, sampler_goodness, simplex_volume, RejectionOracle,
};
use volumetrica::walks::RngStream;

#[test]
fn disk_area_by_rejection() {
    let disk = Body::ball(2, 1.0).unwrap();
    let lo = DVector::from_element(2, -1.0);
    let hi = DVector::from_element(2, 1.0);
    let (est, se) = brute_force_volume(&disk, &lo, &hi, 1_000_000, &mut RngStream::new(1, 0)).unwrap();
    assert!((est - PI).abs() <= 3.0 * se, "{est} ± {se}");
}

#[test]
fn cube_in_its_box_is_exact() {
    let cube = Body::cube(3, 1.0).unwrap();
    let (lo, hi) = bounding_box(&cube).unwrap();
    let (est, se) = brute_force_volume(&cube, &lo, &hi, 10_000, &mut RngStream::new(2, 0)).unwrap();
    assert!((est - 8.0).abs() < 1e-6, "{est}");
    assert_eq!(se, 0.0);
}

#[test]
fn simplex_volume_by_rejection() {
    let simplex = Body::simplex(3).unwrap();
    let lo = DVector::zeros(3);
    let hi = DVector::from_element(3, 1.0);
    let (est, se) = brute_force_volume(&simplex, &lo, &hi, 1_000_000, &mut RngStream::new(3, 0)).unwrap();
    assert!((est - 1.0 / 6.0).abs() <= 3.0 * se, "{est} ± {se}");
}

#[test]
fn oracle_calibrates_against_analytic_volumes() {
    let mut rng = RngStream::new(4, 0);
    for n in 2..=8 {
        let ball = Body::ball(n, 1.0).unwrap();
        let (lo, hi) = bounding_box(&ball).unwrap();
        let (est, se) = brute_force_volume(&ball, &lo, &hi, 200_000, &mut rng).unwrap();
        let truth = PI.powf(n as f64 / 2.0) / statrs::function::gamma::gamma(n as f64 / 2.0 + 1.0);
        assert!((est - truth).abs() <= 3.0 * se, "ball n={n}: {est} ± {se} vs {truth}");
        assert!((ball_volume(n, 1.0) / truth - 1.0).abs() < 1e-12);
    }
    for n in 2..=6 {
        let simplex = Body::simplex(n).unwrap();
        let (lo, hi) = bounding_box(&simplex).unwrap();
        let (est, se) = brute_force_volume(&simplex, &lo, &hi, 200_000, &mut rng).unwrap();
        let truth = 1.0 / (1..=n).product::<usize>() as f64;
        assert!((est - truth).abs() <= 3.0 * se, "simplex n={n}: {est} ± {se}");
        assert!((simplex_volume(n) / truth - 1.0).abs() < 1e-12);
    }
    assert_eq!(cube_volume(5, 1.0), 32.0);
}

#[test]
fn square_slab_anti_concentration() {
    let cube = Body::cube(2, 1.0).unwrap();
    let pts = RejectionOracle::for_body(&cube).unwrap().samples(20_000, &mut RngStream::new(5, 0)).unwrap();
    let a = DVector::from_vec(vec![1.0, 0.0]);
    let report = anti_concentration_test(&pts, &a, 0.0, 1.0 / 3f64.sqrt(), &[0.05]).unwrap();
    assert!(report.pass && !report.vacuous);
    let row = &report.rows[0];
    assert!((row.bound - 0.1 * 3f64.sqrt()).abs() < 1e-12);
    assert!((row.p_hat - 0.05).abs() <= 3.0 * (0.05f64 * 0.95 / 20_000.0).sqrt());

    let vacuous = anti_concentration_test(&pts, &a, 0.0, 0.01, &[0.05]).unwrap();
    assert!(vacuous.pass && vacuous.vacuous);
}

#[test]
fn minimum_eigenvalue_examples() {
    for n in [2usize, 4] {
        let cube = Body::cube(n, 1.0).unwrap();
        let pts = RejectionOracle::for_body(&cube).unwrap().samples(20_000, &mut RngStream::new(6, 0)).unwrap();
        let r = min_eigenvalue_test(&pts, 1.0).unwrap();
        assert!(r.pass);
        assert!((r.lambda_min - 1.0 / 3.0).abs() <= 0.02);
    }
    let slab = Body::polytope(Polytope::axis_box(&[1.0, 0.2]).unwrap()).unwrap();
    assert!((slab.inner_radius() - 0.2).abs() < 1e-9);
    let pts = RejectionOracle::for_body(&slab).unwrap().samples(20_000, &mut RngStream::new(7, 0)).unwrap();
    let r = min_eigenvalue_test(&pts, 0.2).unwrap();
    assert!(r.pass);
    assert!((r.bound - 0.04 / 9.0).abs() < 1e-12);
    assert!((r.lambda_min - 0.04 / 3.0).abs() <= 3.0 * r.stderr + 1e-3);
}

#[test]
fn exact_sampler_passes_goodness() {
    let n = 3;
    let cube = Body::cube(n, 1.0).unwrap();
    let pts = RejectionOracle::for_body(&cube).unwrap().samples(20_000, &mut RngStream::new(8, 0)).unwrap();
    let cdf = |_: usize, x: f64| ((x + 1.0) / 2.0).clamp(0.0, 1.0);
    let g = sampler_goodness(&pts, &DVector::zeros(n), &(DMatrix::identity(n, n) / 3.0), Some(&cdf)).unwrap();
    assert!(g.within_3_stderr(), "{g:?}");
    assert!(g.cdf_pass(), "{g:?}");
}

#[test]
fn a_walk_that_never_rejects_is_flagged() {
    let n = 3;
    let mut rng = RngStream::new(9, 0);
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; n];
    let pts: Vec<DVector<f64>> = (0..5000)
        .map(|_| {
            for _ in 0..20 {
                rng.ball_step(0.5, &mut z);
                x.iter_mut().zip(&z).for_each(|(a, b)| *a += b);
            }
            DVector::from_column_slice(&x)
        })
        .collect();
    let g = sampler_goodness(&pts, &DVector::zeros(n), &(DMatrix::identity(n, n) / 3.0), None).unwrap();
    assert!(!g.within_3_stderr(), "{g:?}");
}

#[test]
fn annealing_sampler_on_a_ball() {
    let n = 4;
    let ball = Body::ball(n, 1.0).unwrap();
    let pts = sample_well_rounded(
        AnnealingTarget::new(&ball).unwrap(),
        10_000,
        &AnnealingConfig::default(),
        &mut RngStream::new(10, 0),
    )
    .unwrap();
    let (_, cov) = common::moments(&pts);
    let want = 1.0 / (n + 2) as f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { want } else { 0.0 };
            assert!((cov[(i, j)] - target).abs() <= 0.15 * want, "{cov}");
        }
    }
}
