mod common;

use common::*;
use framescale::linalg::{logdet_psd, numerical_rank, pinv_trace};
use framescale::{leverage_scores, Frame, GramContext, Scaling, ScaleError};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn leverage_sums_to_dimension(f in frame_strategy(6, 14), seed in any::<u64>()) {
        let n = f.len();
        let z = Scaling::new((0..n).map(|j| 1.0 + ((seed >> (j % 60)) & 7) as f64).collect()).unwrap();
        let lev = leverage_scores(&f, &z).unwrap();
        let d = f.dim() as f64;
        prop_assert!((lev.iter().sum::<f64>() - d).abs() <= 1e-9 * d);
        prop_assert!(lev.iter().all(|&l| (-1e-12..=1.0 + 1e-9).contains(&l)));
    }

    #[test]
    fn leverage_matches_eigen_oracle((f, z, _) in instance_strategy(5, 10, 3.0)) {
        let lev = leverage_scores(&f, &z).unwrap();
        let oracle = leverage_oracle(&f, &z);
        for (a, b) in lev.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-7, "{} vs {}", a, b);
        }
    }

    #[test]
    fn leverage_is_invariant_under_uniform_scaling((f, z, _) in instance_strategy(4, 9, 2.0), t in -6.0f64..6.0) {
        let a = leverage_scores(&f, &z).unwrap();
        let b = leverage_scores(&f, &z.scaled(10f64.powf(t)).unwrap()).unwrap();
        prop_assert!(l1_dist(&a, &b) < 1e-10);
    }

    #[test]
    fn one_dimensional_closed_form(u in proptest::collection::vec(0.1f64..3.0, 2..10), seed in any::<u64>()) {
        let n = u.len();
        let f = Frame::from_row_slice(1, n, &u).unwrap();
        let z = Scaling::new((0..n).map(|j| 0.5 + ((seed >> (3 * (j % 20))) & 7) as f64).collect()).unwrap();
        let total: f64 = (0..n).map(|k| z.as_slice()[k] * u[k] * u[k]).sum();
        let lev = leverage_scores(&f, &z).unwrap();
        for j in 0..n {
            prop_assert!((lev[j] - z.as_slice()[j] * u[j] * u[j] / total).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_of_planted_products(d in 2usize..7, k in 2usize..9, r in 1usize..6, seed in any::<u64>()) {
        let r = r.min(d).min(k);
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((s >> 40) as f64) / (1u64 << 24) as f64 - 0.5 };
        let a = DMatrix::from_fn(d, r, |_, _| next());
        let b = DMatrix::from_fn(r, k, |_, _| next());
        let m = &a * &b;
        let expected = SymmetricEigen::new(m.transpose() * &m).eigenvalues.iter().filter(|&&l| l > 1e-10 * m.norm_squared()).count();
        prop_assert_eq!(numerical_rank(&m), expected);
    }

    #[test]
    fn logdet_and_pinv_match_spectrum(f in frame_strategy(5, 9)) {
        let g = f.matrix().transpose() * f.matrix();
        let eig = SymmetricEigen::new(g.clone()).eigenvalues;
        let top = eig.max();
        let nonzero: Vec<f64> = eig.iter().copied().filter(|&l| l > 1e-10 * top).collect();
        let expect_pinv: f64 = nonzero.iter().map(|l| 1.0 / l).sum();
        prop_assert!((pinv_trace(&g) - expect_pinv).abs() <= 1e-8 * expect_pinv);
        let gram = f.matrix() * f.matrix().transpose();
        let ld: f64 = SymmetricEigen::new(gram.clone()).eigenvalues.iter().map(|l| l.ln()).sum();
        prop_assert!((logdet_psd(&gram).unwrap() - ld).abs() < 1e-8);
        if f.len() > f.dim() {
            prop_assert_eq!(logdet_psd(&g).unwrap(), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn gram_context_solves((f, z, _) in instance_strategy(5, 10, 2.0)) {
        let ctx = GramContext::new(&f, &z).unwrap();
        let d = f.dim();
        let eye = DMatrix::<f64>::identity(d, d);
        let prod = ctx.gram() * ctx.solve(&eye);
        prop_assert!((prod - &eye).amax() < 1e-6);
        prop_assert!((ctx.gram() - ctx.gram().transpose()).amax() == 0.0);
    }
}

#[test]
fn graded_scalings_keep_leverage_accurate() {
    // G = [[1e12+1, 1], [1, 1+1e-12]]; the exact scores are ≈ (1 − 1e-24, 1e-12, 1 − 1e-12).
    let f = Frame::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
    let z = Scaling::new(vec![1e12, 1e-12, 1.0]).unwrap();
    let lev = leverage_scores(&f, &z).unwrap();
    assert!((lev[0] - 1.0).abs() < 1e-9);
    assert!((lev[1] / 1e-12 - 1.0).abs() < 1e-3);
    assert!((lev[2] - 1.0).abs() < 1e-9);
}

#[test]
fn rejects_invalid_inputs() {
    assert!(matches!(
        Frame::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        Err(ScaleError::InvalidInput(_))
    ));
    assert!(Scaling::new(vec![1.0, 0.0]).is_err());
    let f = Frame::identity(2);
    assert!(matches!(
        GramContext::new(&f, &Scaling::ones(3)),
        Err(ScaleError::DimensionMismatch(_))
    ));
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(matches!(logdet_psd(&asym), Err(ScaleError::NotSymmetric { .. })));
}

#[test]
fn random_graded_scalings_match_svd_oracle() {
    use framescale::instances::{gaussian_frame, rng};
    use rand::Rng;
    for seed in 0..2000u64 {
        let mut r = rng(seed);
        let d = r.random_range(1..=5);
        let n = r.random_range(d..=10);
        let f = gaussian_frame(d, n, seed).unwrap();
        let z = Scaling::new((0..n).map(|_| 10f64.powf(r.random_range(-12.0..12.0))).collect()).unwrap();
        let lev = leverage_scores(&f, &z).unwrap();
        assert!(l1_dist(&lev, &leverage_oracle(&f, &z)) < 1e-9, "seed {seed}");
        if n == d {
            assert!(lev.iter().all(|l| (l - 1.0).abs() < 1e-9), "seed {seed}: {lev:?}");
        }
    }
}
