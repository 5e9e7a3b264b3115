mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use volumetrica::bodies::{format_body, parse_body, AffineMap, Body, Polytope};
use volumetrica::covariance::{final_isotropy_estimate, low_eigenspace_projection, split_sample_covariance};
use volumetrica::linalg::op_norm;
use volumetrica::verify::random_polytope;
use volumetrica::walks::{
    ball_walk, polytope_ball_walk_amortized, BatchedWalk, RngStream, SlackMode,
};

/// Well-conditioned square matrix: identity plus a small perturbation.
fn near_identity(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-0.4f64..0.4, n * n)
        .prop_map(move |v| DMatrix::identity(n, n) + DMatrix::from_vec(n, n, v) / n as f64)
}

fn points(n: usize, count: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n), count)
        .prop_map(|rows| rows.into_iter().map(DVector::from_vec).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compose_multiplies_and_adds_log_det(a in near_identity(3), b in near_identity(3),
                                           x in prop::collection::vec(-2.0f64..2.0, 3)) {
        let base = AffineMap::new(a.clone(), DVector::from_vec(vec![0.5, -1.0, 2.0])).unwrap();
        let composed = base.compose(&b).unwrap();
        let expect_det = base.log_abs_det() + b.determinant().abs().ln();
        prop_assert!((composed.log_abs_det() - expect_det).abs() < 1e-9);
        let direct = &b * base.apply(&x);
        prop_assert!((composed.apply(&x) - direct).norm() < 1e-9);
        let back = composed.pull_back(composed.apply(&x).as_slice());
        prop_assert!((back - DVector::from_vec(x)).norm() < 1e-9);
    }

    #[test]
    fn recentering_moves_the_origin(a in near_identity(2), c in prop::collection::vec(-1.0f64..1.0, 2)) {
        let map = AffineMap::new(a, DVector::from_vec(vec![0.3, -0.2])).unwrap();
        let c = DVector::from_vec(c);
        let moved = map.recentered(&c).unwrap();
        let target = map.pull_back(c.as_slice());
        prop_assert!(moved.apply(target.as_slice()).norm() < 1e-12);
        prop_assert_eq!(moved.log_abs_det(), map.log_abs_det());
    }

    #[test]
    fn split_covariance_is_translation_equivariant(pts in points(3, 12),
                                                   v in prop::collection::vec(-5.0f64..5.0, 3)) {
        let v = DVector::from_vec(v);
        let a = split_sample_covariance(&pts).unwrap();
        let shifted: Vec<_> = pts.iter().map(|p| p + &v).collect();
        let b = split_sample_covariance(&shifted).unwrap();
        prop_assert!((&b.mean - &a.mean - &v).norm() < 1e-9);
        prop_assert!(op_norm(&(&b.a_hat - &a.a_hat)) < 1e-9);
    }

    #[test]
    fn split_covariance_ignores_order_within_halves(pts in points(2, 10)) {
        let a = split_sample_covariance(&pts).unwrap();
        let mut p = pts.clone();
        p[..5].reverse();
        p[5..].rotate_left(2);
        let b = split_sample_covariance(&p).unwrap();
        prop_assert!((&a.mean - &b.mean).norm() < 1e-12);
        prop_assert!(op_norm(&(&a.a_hat - &b.a_hat)) < 1e-12);
    }

    #[test]
    fn low_projection_is_an_orthogonal_projector(pts in points(4, 20), lambda in 0.1f64..6.0) {
        let est = split_sample_covariance(&pts).unwrap();
        let proj = low_eigenspace_projection(&est.a_hat, lambda).unwrap();
        let p = &proj.p;
        prop_assert!(op_norm(&(p * p - p)) < 1e-9);
        prop_assert!(op_norm(&(p - p.transpose())) < 1e-12);
        prop_assert!((p.trace() - proj.rank as f64).abs() < 1e-9);
        let below = common::sorted_eigenvalues(&est.a_hat).iter().filter(|&&e| e <= lambda).count();
        let near = common::sorted_eigenvalues(&est.a_hat)
            .iter()
            .filter(|&&e| (e - lambda).abs() <= 1e-9 * lambda.max(1.0))
            .count();
        prop_assert!(proj.rank + near >= below && proj.rank <= below + near);
    }

    #[test]
    fn whitening_inverts_the_estimate(pts in points(3, 30)) {
        if let Ok(iso) = final_isotropy_estimate(&pts) {
            let cond = iso.eigenvalues[2] / iso.eigenvalues[0];
            prop_assume!(cond < 1e6);
            let id = &iso.w * &iso.a_hat * &iso.w;
            prop_assert!(op_norm(&(id - DMatrix::identity(3, 3))) <= 1e-6);
        }
    }

    #[test]
    fn walk_variants_agree(seed in any::<u64>(), n in 2usize..7, steps in 1u64..400) {
        let rp = random_polytope(n, &mut RngStream::new(seed, 100)).unwrap();
        let body = rp.body().unwrap();
        let delta = rp.radius / (n as f64).sqrt();
        let x0 = rp.center.as_slice();
        let naive = ball_walk(&body, x0, delta, steps, &mut RngStream::new(seed, 1)).unwrap();
        let w = BatchedWalk::new(&rp.poly, delta).unwrap().with_block(1 + (seed % 64) as usize);
        let mut s = w.start(x0).unwrap();
        w.advance(&mut s, steps, &mut RngStream::new(seed, 1));
        prop_assert_eq!(&s.x, &naive.x);
        let (amortized, _) = polytope_ball_walk_amortized(
            &rp.poly, x0, delta, f64::INFINITY, steps, &mut RngStream::new(seed, 1), SlackMode::Deterministic,
        ).unwrap();
        prop_assert_eq!(&amortized.x, &naive.x);
        prop_assert!(rp.poly.contains(naive.x.as_slice()));
    }

    #[test]
    fn polytope_files_round_trip(seed in any::<u64>(), n in 1usize..6) {
        let rp = random_polytope(n, &mut RngStream::new(seed, 7)).unwrap();
        let body = rp.body().unwrap();
        let text = format_body(&body).unwrap();
        let again = parse_body(&text, "rt").unwrap();
        let (p, q) = (body.as_polytope().unwrap(), again.as_polytope().unwrap());
        prop_assert_eq!(p.a(), q.a());
        prop_assert_eq!(p.b(), q.b());
        prop_assert_eq!(again.inner_ball(), body.inner_ball());
    }

    #[test]
    fn box_membership_matches_coordinates(h in prop::collection::vec(0.1f64..5.0, 3),
                                          x in prop::collection::vec(-6.0f64..6.0, 3)) {
        let body = Body::polytope(Polytope::axis_box(&h).unwrap()).unwrap();
        let inside = x.iter().zip(&h).all(|(v, w)| v.abs() <= *w);
        prop_assert_eq!(body.contains(&x).unwrap(), inside);
    }
}
