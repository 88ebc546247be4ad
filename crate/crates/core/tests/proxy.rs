mod common;

use common::*;
use framescale::frame::{check_infeasibility, select_margin_set};
use framescale::{leverage_scores, numerical_rank, Frame, GramContext, ProxyContext, Scaling};
use proptest::prelude::*;

fn scale_set(z: &Scaling, set: &[usize], alpha: f64) -> Scaling {
    z.scale_up(set, alpha).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn h_at_one_is_subset_leverage((f, z, t) in instance_strategy(5, 10, 1.5)) {
        let ctx = ProxyContext::new(&f, &z, &t).unwrap();
        let lev = leverage_scores(&f, &z).unwrap();
        let sum: f64 = t.iter().map(|&j| lev[j]).sum();
        prop_assert!((ctx.h(1.0).unwrap() - sum).abs() < 1e-10);
        let g = GramContext::new(&f, &z).unwrap();
        let total = &ctx.m_t + &ctx.m_tbar;
        prop_assert!((total - g.gram()).amax() <= 1e-10 * g.gram().amax());
    }

    #[test]
    fn h_matches_spectral_form((f, z, t) in instance_strategy(5, 10, 1.5), alpha in 1.0f64..50.0) {
        let ctx = ProxyContext::new(&f, &z, &t).unwrap();
        let mu = subset_spectrum(&f, &z, &t);
        prop_assert!((ctx.h(alpha).unwrap() - spectral_h(&mu, alpha)).abs() < 1e-8);
        prop_assert!((ctx.h_prime(alpha).unwrap() - spectral_h_prime(&mu, alpha)).abs() < 1e-8);
        let gain = ctx.gain(alpha).unwrap();
        prop_assert!((gain - (ctx.h(alpha).unwrap() - ctx.h(1.0).unwrap())).abs() < 1e-9);
        // h also equals the leverage mass of T after scaling it by α.
        let lev = leverage_scores(&f, &scale_set(&z, &t, alpha)).unwrap();
        let direct: f64 = t.iter().map(|&j| lev[j]).sum();
        prop_assert!((ctx.h(alpha).unwrap() - direct).abs() < 1e-8);
    }

    #[test]
    fn derivative_matches_central_difference((f, z, t) in instance_strategy(4, 9, 1.0), alpha in 1.5f64..20.0) {
        let ctx = ProxyContext::new(&f, &z, &t).unwrap();
        let s = 1e-5;
        let fd = (ctx.h(alpha + s).unwrap() - ctx.h(alpha - s).unwrap()) / (2.0 * s);
        prop_assert!((fd - ctx.h_prime(alpha).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn h_is_increasing_and_concave((f, z, t) in instance_strategy(4, 9, 1.5), a in 1.0f64..10.0, b in 0.0f64..1.0, c in 0.01f64..10.0) {
        let ctx = ProxyContext::new(&f, &z, &t).unwrap();
        let (a1, a3) = (a, a + c);
        let a2 = a1 + b * c;
        let (h1, h2, h3) = (ctx.h(a1).unwrap(), ctx.h(a2).unwrap(), ctx.h(a3).unwrap());
        prop_assert!(h1 <= h2 + 1e-12 && h2 <= h3 + 1e-12);
        let interp = h1 + (h3 - h1) * (a2 - a1) / (a3 - a1);
        prop_assert!(h2 >= interp - 1e-9);
        prop_assert!(ctx.h_prime(a1).unwrap() >= -1e-12);
        prop_assert!((0.0..=f.dim() as f64 + 1e-9).contains(&h3));
    }

    #[test]
    fn bregman_sandwich((f, z, t) in instance_strategy(4, 9, 1.5), a in 1.0f64..10.0, c in 0.0f64..10.0) {
        let ctx = ProxyContext::new(&f, &z, &t).unwrap();
        let (alpha, beta) = (a, a + c);
        let breg = ctx.h_prime(alpha).unwrap() * (beta - alpha) + ctx.h(alpha).unwrap() - ctx.h(beta).unwrap();
        prop_assert!(breg >= -1e-9);
        prop_assert!(breg <= (beta / alpha - 1.0) * (ctx.h(beta).unwrap() - ctx.h(alpha).unwrap()) + 1e-9);
    }

    #[test]
    fn subset_scale_up_moves_leverage_monotonically((f, z, t) in instance_strategy(4, 9, 1.5), a in 1.0f64..10.0, c in 0.0f64..10.0) {
        let lo = leverage_scores(&f, &scale_set(&z, &t, a)).unwrap();
        let hi = leverage_scores(&f, &scale_set(&z, &t, a + c)).unwrap();
        for j in 0..f.len() {
            if t.contains(&j) {
                prop_assert!(hi[j] >= lo[j] - 1e-9);
            } else {
                prop_assert!(hi[j] <= lo[j] + 1e-9);
            }
        }
    }

    #[test]
    fn margin_set_invariants(x in proptest::collection::vec(-1.0f64..1.0, 2..30)) {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let lev: Vec<f64> = x.iter().map(|v| v - mean + 0.5).collect();
        let c = vec![0.5; n];
        let ms = select_margin_set(&lev, &c).unwrap();
        let err: Vec<f64> = lev.iter().map(|l| l - 0.5).collect();
        let t = ms.members();
        prop_assert!(!t.is_empty() && t.len() < n);
        for j in 0..n {
            if t.contains(&j) {
                prop_assert!(err[j] <= ms.nu - ms.gamma + 1e-15);
            } else {
                prop_assert!(err[j] >= ms.nu + ms.gamma - 1e-15);
            }
        }
        let norm_sq: f64 = err.iter().map(|e| e * e).sum();
        prop_assert!(ms.gamma * ms.gamma >= norm_sq / (2.0 * (n as f64).powi(3)) - 1e-12);
        // ⟨c, 1_T⟩ − h(1) ≥ γ
        let gap: f64 = t.iter().map(|&j| c[j] - lev[j]).sum();
        prop_assert!(gap >= ms.gamma - 1e-12);
    }

    #[test]
    fn progress_lemma((f, z, _t) in instance_strategy(4, 9, 1.0), cseed in proptest::collection::vec(0.1f64..1.0, 9), frac in 0.0f64..1.0) {
        // Marginals near the current leverage, renormalized to sum d.
        let n = f.len();
        let lev = leverage_scores(&f, &z).unwrap();
        let raw: Vec<f64> = (0..n).map(|j| lev[j] + 0.05 * cseed[j]).collect();
        let total: f64 = raw.iter().sum();
        let c: Vec<f64> = raw.iter().map(|v| v * f.dim() as f64 / total).collect();
        let ms = select_margin_set(&lev, &c).unwrap();
        let set = ms.members();
        let ctx = ProxyContext::new(&f, &z, &set).unwrap();
        // Pick α with h(α) − h(1) ≈ frac·γ by bisection (or the largest probed α).
        let goal = frac * ms.gamma;
        let mut hi = 2.0;
        while ctx.gain(hi).unwrap() < goal && hi < 1e8 {
            hi *= 2.0;
        }
        let mut lo = 1.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if ctx.gain(mid).unwrap() < goal { lo = mid } else { hi = mid }
        }
        let alpha = lo;
        let progress = ctx.gain(alpha).unwrap();
        prop_assert!(progress <= ms.gamma);
        let after = leverage_scores(&f, &scale_set(&z, &set, alpha)).unwrap();
        let drop = sq_dist(&lev, &c) - sq_dist(&after, &c);
        prop_assert!(drop >= 2.0 * ms.gamma * progress - 1e-8);
    }
}

#[test]
fn limit_recovers_rank() {
    let cases: Vec<(Frame, Vec<usize>)> = vec![
        (Frame::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 1.0]).unwrap(), vec![0, 1]),
        (Frame::from_row_slice(2, 4, &[1.0, 0.0, 3.0, 1.0, 0.0, 1.0, 1.0, -1.0]).unwrap(), vec![0, 2, 3]),
        (Frame::from_row_slice(3, 5, &[1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap(), vec![1, 3]),
        (Frame::identity(3), vec![0, 2]),
    ];
    for (f, t) in cases {
        let ctx = ProxyContext::new(&f, &Scaling::ones(f.len()), &t).unwrap();
        let rank = numerical_rank(&f.select(&t)) as f64;
        let h = ctx.h(1e12).unwrap();
        assert!((h - rank).abs() < 1e-6, "h = {h}, rank = {rank}");
    }
}

#[test]
fn limit_recovers_rank_on_random_frames() {
    // For generic frames rk(U_T) = min(|T|, d), so the limit is exact there too.
    for seed in 0..50 {
        let f = framescale::instances::gaussian_frame(3, 7, seed).unwrap();
        for t in [vec![0], vec![1, 4], vec![0, 2, 5], vec![0, 1, 2, 3]] {
            let ctx = ProxyContext::new(&f, &Scaling::ones(7), &t).unwrap();
            let rank = numerical_rank(&f.select(&t)) as f64;
            assert!((ctx.h(1e12).unwrap() - rank).abs() < 1e-6);
        }
    }
}

#[test]
fn unit_spectrum_has_flat_proxy() {
    // T = {e₂} inside [e₁, e₂, e₁]: the only eigenvalue is 1.
    let f = Frame::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    let ctx = ProxyContext::new(&f, &Scaling::ones(3), &[1]).unwrap();
    for alpha in [1.0, 3.0, 1e6] {
        assert!(ctx.h_prime(alpha).unwrap().abs() < 1e-14);
    }
}

#[test]
fn certificate_examples() {
    let f = Frame::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(check_infeasibility(&f, &[0.8, 0.8, 0.4], &[0, 1]), Some(vec![0, 1]));
    assert_eq!(check_infeasibility(&f, &[0.5, 0.5, 1.0], &[0, 1]), None);
}
