//! Property checks over the closed-form layer.

use gridbeam::config::{validate_config, SystemConfig};
use gridbeam::cost::{battery_step, cost_lt, cost_rt, cost_rt_max_form, sinr};
use gridbeam::sampling::{sample_fast_state, sample_slow_state, seeded_rng};
use gridbeam::state::Beamformers;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn cost_rt_piecewise_equals_max_form_on_a_million_triples() {
    let mut rng = seeded_rng(314);
    for _ in 0..1_000_000 {
        let beta: f64 = rng.random_range(0.0..5.0);
        let alpha = beta + rng.random_range(1e-9..5.0);
        let p: f64 = rng.random_range(-50.0..50.0);
        let a = cost_rt(p, alpha, beta);
        let b = cost_rt_max_form(p, alpha, beta);
        // Exact agreement to one ulp.
        let ulp = a.abs().max(f64::MIN_POSITIVE) * f64::EPSILON;
        assert!((a - b).abs() <= ulp, "p={p} alpha={alpha} beta={beta}: {a} vs {b}");
    }
}

proptest! {
    #[test]
    fn cost_lt_is_convex_and_nondecreasing(
        a in 0.0..60.0f64,
        e1 in 0.0..100.0f64,
        d1 in 0.01..40.0f64,
        d2 in 0.01..40.0f64,
        alpha in 0.5..4.0f64,
        ratio in 0.1..0.99f64,
    ) {
        let beta = ratio * alpha;
        let (e2, e3) = (e1 + d1, e1 + d1 + d2);
        let f = |e: f64| cost_lt(e, a, alpha, beta);
        // Nondecreasing in the planned amount.
        prop_assert!(f(e2) >= f(e1) - 1e-12);
        // Midpoint convexity on the ordered triple.
        let lam = d2 / (d1 + d2);
        let bound = lam * f(e1) + (1.0 - lam) * f(e3);
        prop_assert!(f(e2) <= bound + 1e-9 * bound.abs().max(1.0));
    }

    #[test]
    fn battery_step_is_affine(
        c1 in 0.0..80.0f64,
        c2 in 0.0..80.0f64,
        p1 in -2.0..2.0f64,
        p2 in -2.0..2.0f64,
        a in 0.0..1.0f64,
        eta in 0.5..1.0f64,
    ) {
        let mixed = battery_step(a * c1 + (1.0 - a) * c2, a * p1 + (1.0 - a) * p2, eta);
        let split = a * battery_step(c1, p1, eta) + (1.0 - a) * battery_step(c2, p2, eta);
        prop_assert!((mixed - split).abs() <= 1e-12 * mixed.abs().max(1.0));
    }
}

#[test]
fn sinr_invariant_under_own_phase_rotation() {
    let cfg = validate_config(SystemConfig::default()).unwrap();
    let mut rng = seeded_rng(2718);
    for _ in 0..50 {
        let fast = sample_fast_state(&mut rng, &cfg);
        let mi = cfg.mi();
        let data: Vec<Complex64> = (0..mi * cfg.users)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let w = Beamformers::new(mi, cfg.users, data.clone());
        let k = rng.random_range(0..cfg.users);
        let base = sinr(&fast.h, &w, &cfg.sigma2, k);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mut rotated = data;
        for z in rotated[k * mi..(k + 1) * mi].iter_mut() {
            *z *= Complex64::from_polar(1.0, theta);
        }
        let w_rot = Beamformers::new(mi, cfg.users, rotated);
        let got = sinr(&fast.h, &w_rot, &cfg.sigma2, k);
        assert!(
            (got - base).abs() <= 1e-12 * base.max(1e-12),
            "phase rotation moved sinr: {base} vs {got}"
        );
    }
}

#[test]
fn sampled_prices_keep_purchase_above_sell_always() {
    let cfg = validate_config(SystemConfig::default()).unwrap();
    let mut rng = seeded_rng(1618);
    for _ in 0..30_000 {
        let s = sample_slow_state(&mut rng, &cfg);
        assert!(s.alpha_lt > s.beta_lt && s.beta_lt > 0.0);
        let f = sample_fast_state(&mut rng, &cfg);
        assert!(f.alpha_rt > f.beta_rt && f.beta_rt > 0.0);
    }
}
