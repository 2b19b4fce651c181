//! Gap-analysis verification: joint convexity of the objective over the
//! admissible set and self-consistency of the nested search.

use gridbeam::config::{validate_config, SystemConfig, ValidatedConfig};
use gridbeam::controller::{max_admissible_v, parameter_window};
use gridbeam::gap::{gap_constants, min_gap};
use gridbeam::sampling::seeded_rng;
use rand::Rng;

fn cfg_eta(eta: f64) -> ValidatedConfig {
    validate_config(SystemConfig {
        eta,
        ..SystemConfig::default()
    })
    .unwrap()
}

#[test]
fn objective_is_convex_along_feasible_segments() {
    // Midpoint inequality on random segments inside the coupled (V, Gamma)
    // region, for lossy and lossless batteries.
    let mut rng = seeded_rng(77);
    for &eta in &[0.9, 0.95, 1.0] {
        let cfg = cfg_eta(eta);
        let (ab, bu) = (cfg.alpha_bar(), cfg.beta_under());
        let v_hi = max_admissible_v(&cfg, ab, bu);
        let mut checked = 0usize;
        while checked < 10_000 {
            let v1 = rng.random_range(0.05 * v_hi..v_hi);
            let v2 = rng.random_range(0.05 * v_hi..v_hi);
            let (Ok(w1), Ok(w2)) = (
                parameter_window(&cfg, ab, bu, v1),
                parameter_window(&cfg, ab, bu, v2),
            ) else {
                continue;
            };
            let g1 = rng.random_range(w1.gamma_min..=w1.gamma_max.max(w1.gamma_min + 1e-12));
            let g2 = rng.random_range(w2.gamma_min..=w2.gamma_max.max(w2.gamma_min + 1e-12));
            // The constraint set is an intersection of half-planes, so the
            // midpoint is feasible by construction.
            let (vm, gm) = (0.5 * (v1 + v2), 0.5 * (g1 + g2));
            let f1 = gap_constants(g1, v1, &cfg).gap;
            let f2 = gap_constants(g2, v2, &cfg).gap;
            let fm = gap_constants(gm, vm, &cfg).gap;
            assert!(
                fm <= 0.5 * (f1 + f2) + 1e-9 * (f1 + f2).abs().max(1.0),
                "midpoint convexity broken at eta {eta}"
            );
            checked += 1;
        }
    }
}

#[test]
fn refined_minimum_never_beaten_by_grid_points() {
    // Self-consistency on randomized configurations: no feasible grid point
    // may undercut the refined optimum beyond tolerance.
    let mut rng = seeded_rng(101);
    for trial in 0..10 {
        let eta = [0.88, 0.92, 0.95, 0.97, 1.0][trial % 5];
        let c_max = rng.random_range(40.0..150.0);
        let pb = rng.random_range(1.0..3.0);
        let cfg = validate_config(SystemConfig {
            eta,
            c_max,
            c0: 0.0,
            p_b_min: -pb,
            p_b_max: pb,
            ..SystemConfig::default()
        })
        .unwrap();
        let (ab, bu) = (cfg.alpha_bar(), cfg.beta_under());
        let v_hi = max_admissible_v(&cfg, ab, bu);
        if v_hi <= 0.0 {
            continue;
        }
        let res = min_gap(v_hi, &cfg).unwrap();
        let mut grid_best = f64::INFINITY;
        for j in 1..=333 {
            let v = v_hi * j as f64 / 333.0;
            let Ok(w) = parameter_window(&cfg, ab, bu, v) else { continue };
            for k in 0..100 {
                let g = w.gamma_min + (w.gamma_max - w.gamma_min) * k as f64 / 99.0;
                grid_best = grid_best.min(gap_constants(g, v, &cfg).gap);
            }
        }
        assert!(
            res.g_min <= grid_best * (1.0 + 1e-4),
            "trial {trial}: refined {} vs grid {}",
            res.g_min,
            grid_best
        );
    }
}

#[test]
fn single_point_sweep_equals_direct_call() {
    let cfg = cfg_eta(0.95);
    let rows = gridbeam::gap::gap_vs_capacity_curve(&cfg, &[80.0], &[0.95]);
    assert_eq!(rows.len(), 1);
    let v_max = rows[0].v_max.unwrap();
    let direct = min_gap(v_max, &cfg).unwrap();
    let got = rows[0].g_min.unwrap();
    assert!((got - direct.g_min).abs() <= 1e-9 * direct.g_min.abs().max(1.0));
}

#[test]
fn infeasible_points_are_skipped_with_reasons() {
    let cfg = cfg_eta(0.95);
    // c_max = 10 violates the SoC-range condition at these battery bounds.
    let rows = gridbeam::gap::gap_vs_capacity_curve(&cfg, &[10.0, 80.0], &[0.95]);
    assert!(rows[0].skipped.is_some());
    assert!(rows[0].g_min.is_none());
    assert!(rows[1].skipped.is_none());
    assert!(rows[1].g_min.is_some());
}
