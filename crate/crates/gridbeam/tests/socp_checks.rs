//! Cross-checks of the per-slot conic solve against closed forms, the
//! independent barrier solver, and its own structural invariants.

use gridbeam::config::{validate_config, SystemConfig, ValidatedConfig};
use gridbeam::cost::{cost_rt, sinr};
use gridbeam::oracle::{single_user_optimal_power, solve_realtime_barrier};
use gridbeam::sampling::{sample_fast_state, seeded_rng};
use gridbeam::socp::{
    build_realtime_problem, solve_planning_sample, SocpEngine, SolveStatus,
};
use gridbeam::state::FastState;
use num_complex::Complex64;

fn table_cfg() -> ValidatedConfig {
    validate_config(SystemConfig::default()).unwrap()
}

fn single_user_cfg() -> ValidatedConfig {
    validate_config(SystemConfig {
        bs: 1,
        users: 1,
        antennas: 2,
        gamma: vec![2.0],
        sigma2: vec![1.5],
        ..SystemConfig::default()
    })
    .unwrap()
}

#[test]
fn single_user_matches_matched_filter_over_100_channels() {
    let cfg = single_user_cfg();
    let mut rng = seeded_rng(100);
    let mut engine = SocpEngine::new();
    for _ in 0..100 {
        let fast = sample_fast_state(&mut rng, &cfg);
        let prob = build_realtime_problem(&fast, &[50.0], &[-3.0], 5.0, &cfg).unwrap();
        let (dec, report) = engine.solve(&prob).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        // Certificates on every optimal exit (gap in absolute or relative form).
        assert!(
            report.duality_gap.min(report.duality_gap_rel) <= 1e-7,
            "gap {}",
            report.duality_gap
        );
        assert!(report.primal_residual <= 1e-7);
        assert!(report.dual_residual <= 1e-7);

        let want = single_user_optimal_power(fast.h.col(0), cfg.gamma[0], cfg.sigma2[0]);
        let got = dec.w.bs_power(0, cfg.antennas);
        assert!(
            (got - want).abs() <= 1e-6 * want,
            "power {got} vs {want}"
        );
        // Scaled matched filter: Cauchy-Schwarz equality |h^H w|^2 = |h|^2 |w|^2.
        let h = fast.h.col(0);
        let w = dec.w.col(0);
        let dot: Complex64 = h.iter().zip(w).map(|(a, b)| a.conj() * b).sum();
        let hn: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        let wn: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        assert!((dot.norm_sqr() - hn * wn).abs() <= 1e-6 * hn * wn);
    }
}

#[test]
fn multiuser_objective_matches_barrier_oracle_20_instances() {
    let cfg = table_cfg();
    let mut rng = seeded_rng(200);
    let mut engine = SocpEngine::new();
    for idx in 0..20 {
        let fast = sample_fast_state(&mut rng, &cfg);
        // Mix of queue regimes: interior, deep-negative, near-zero.
        let q = match idx % 3 {
            0 => vec![-30.0, -45.0],
            1 => vec![-70.0, -20.0],
            _ => vec![-5.0, -90.0],
        };
        let e = vec![40.0 + 5.0 * (idx % 4) as f64, 60.0];
        let v = 10.0;
        let prob = build_realtime_problem(&fast, &e, &q, v, &cfg).unwrap();
        let (dec, _) = engine.solve(&prob).unwrap();
        let oracle = solve_realtime_barrier(&fast, &e, &q, v, &cfg).unwrap();
        let scale = oracle.objective.abs().max(1.0);
        assert!(
            (dec.objective_value - oracle.objective).abs() <= 1e-5 * scale,
            "instance {idx}: {} vs oracle {}",
            dec.objective_value,
            oracle.objective
        );
    }
}

#[test]
fn optimum_invariant_under_channel_phase_rotation() {
    let cfg = table_cfg();
    let mut rng = seeded_rng(300);
    let mut engine = SocpEngine::new();
    for trial in 0..5 {
        let fast = sample_fast_state(&mut rng, &cfg);
        let e = vec![50.0, 50.0];
        let q = vec![-40.0, -40.0];
        let prob = build_realtime_problem(&fast, &e, &q, 8.0, &cfg).unwrap();
        let (dec, _) = engine.solve(&prob).unwrap();

        // Rotate every user's channel by its own phase.
        let mi = cfg.mi();
        let mut data = Vec::with_capacity(mi * cfg.users);
        for k in 0..cfg.users {
            let phase = Complex64::from_polar(1.0, 0.7 + 1.3 * (k as f64) + 0.2 * trial as f64);
            data.extend(fast.h.col(k).iter().map(|z| z * phase));
        }
        let rotated = FastState {
            h: gridbeam::state::ChannelMatrix::new(mi, cfg.users, data),
            ..fast.clone()
        };
        let prob_rot = build_realtime_problem(&rotated, &e, &q, 8.0, &cfg).unwrap();
        let (dec_rot, _) = engine.solve(&prob_rot).unwrap();
        let scale = dec.objective_value.abs().max(1.0);
        assert!(
            (dec.objective_value - dec_rot.objective_value).abs() <= 1e-8 * scale,
            "rotation changed optimum: {} vs {}",
            dec.objective_value,
            dec_rot.objective_value
        );
    }
}

#[test]
fn epigraph_objective_agrees_with_piecewise_form() {
    let cfg = table_cfg();
    let mut rng = seeded_rng(400);
    let mut engine = SocpEngine::new();
    for _ in 0..10 {
        let fast = sample_fast_state(&mut rng, &cfg);
        let prob = build_realtime_problem(&fast, &[55.0, 45.0], &[-50.0, -60.0], 12.0, &cfg).unwrap();
        let (dec, report) = engine.solve(&prob).unwrap();
        let scale = dec.objective_value.abs().max(1.0);
        assert!(
            (dec.objective_value - report.objective).abs() <= 1e-8 * scale,
            "piecewise {} vs epigraph {}",
            dec.objective_value,
            report.objective
        );
    }
}

#[test]
fn more_free_supply_never_increases_optimum() {
    let cfg = table_cfg();
    let mut rng = seeded_rng(500);
    let mut engine = SocpEngine::new();
    for _ in 0..8 {
        let fast = sample_fast_state(&mut rng, &cfg);
        let q = vec![-45.0, -45.0];
        let e0 = vec![40.0, 55.0];
        let prob = build_realtime_problem(&fast, &e0, &q, 10.0, &cfg).unwrap();
        let (dec0, _) = engine.solve(&prob).unwrap();
        for delta in [2.5, 10.0, 40.0] {
            let e1: Vec<f64> = e0.iter().map(|&x| x + delta).collect();
            let prob1 = build_realtime_problem(&fast, &e1, &q, 10.0, &cfg).unwrap();
            let (dec1, _) = engine.solve(&prob1).unwrap();
            assert!(
                dec1.objective_value <= dec0.objective_value + 1e-7,
                "supply +{delta} raised the optimum"
            );
        }
    }
}

#[test]
fn surplus_supply_sells_and_charges_when_queue_rewards_it() {
    // E/T beyond the consumption cap forces selling; a queue below -V*beta
    // makes max charging optimal.
    let cfg = table_cfg();
    let mut rng = seeded_rng(600);
    let mut engine = SocpEngine::new();
    let fast = sample_fast_state(&mut rng, &cfg);
    let v = 5.0;
    let e = vec![300.0, 300.0]; // E/T = 60 > P_g_max + P_b_max
    let q: Vec<f64> = (0..cfg.bs).map(|_| -v * fast.beta_rt - 1.0).collect();
    let prob = build_realtime_problem(&fast, &e, &q, v, &cfg).unwrap();
    let (dec, _) = engine.solve(&prob).unwrap();
    for i in 0..cfg.bs {
        assert!(dec.p[i] < 0.0, "BS {i} should sell surplus, P = {}", dec.p[i]);
        assert!(
            (dec.p_b[i] - cfg.p_b_max).abs() <= 1e-6,
            "BS {i} should charge at the max, P_b = {}",
            dec.p_b[i]
        );
    }
}

#[test]
fn deep_negative_queue_forces_max_charge_regardless_of_channels() {
    let cfg = table_cfg();
    let mut rng = seeded_rng(700);
    let mut engine = SocpEngine::new();
    for _ in 0..10 {
        let fast = sample_fast_state(&mut rng, &cfg);
        let v = 10.0;
        // Q < -V * alpha_bar.
        let q: Vec<f64> = (0..cfg.bs).map(|_| -v * cfg.alpha_bar() - 5.0).collect();
        let prob = build_realtime_problem(&fast, &[50.0, 50.0], &q, v, &cfg).unwrap();
        let (dec, _) = engine.solve(&prob).unwrap();
        for i in 0..cfg.bs {
            assert!((dec.p_b_solver[i] - cfg.p_b_max).abs() <= 1e-6);
        }
    }
}

#[test]
fn planning_sample_consumption_is_plan_independent_off_the_kink() {
    // With the queue deep in the force-charge regime and the real-time trade
    // strictly positive for both plans, the inner optimum (and hence the
    // consumption level) cannot depend on the plan.
    let cfg = table_cfg();
    let mut rng = seeded_rng(800);
    let mut engine = SocpEngine::new();
    for _ in 0..2 {
        let fast = sample_fast_state(&mut rng, &cfg);
        let v = 5.0;
        let q: Vec<f64> = (0..cfg.bs).map(|_| -v * cfg.alpha_bar() - 2.0).collect();
        let s0 = solve_planning_sample(&fast, &[0.0, 0.0], &q, v, &cfg, &mut engine).unwrap();
        let s1 = solve_planning_sample(&fast, &[5.0, 5.0], &q, v, &cfg, &mut engine).unwrap();
        for i in 0..cfg.bs {
            assert!(s0.decision.p[i] > 0.0 && s1.decision.p[i] > 0.0);
            // Same inner optimum up to solver noise in the iterate space.
            assert!(
                (s0.delta[i] - s1.delta[i]).abs() <= 1e-4,
                "delta moved with the plan: {} vs {}",
                s0.delta[i],
                s1.delta[i]
            );
        }
        // With the purchase branch active everywhere, the two values differ
        // exactly by the constant V * alpha * sum(e1 - e0) / T.
        let t = cfg.slots_per_interval as f64;
        let offset = v * fast.alpha_rt * (5.0 + 5.0) / t;
        let diff = s0.inner_value - s1.inner_value;
        assert!(
            (diff - offset).abs() <= 1e-6 * offset.abs().max(1.0),
            "value offset {diff} vs expected {offset}"
        );
    }
}

#[test]
fn balance_identity_and_sinr_hold_at_optimum() {
    let cfg = table_cfg();
    let mut rng = seeded_rng(900);
    let mut engine = SocpEngine::new();
    for _ in 0..10 {
        let fast = sample_fast_state(&mut rng, &cfg);
        let e = vec![55.0, 55.0];
        let prob = build_realtime_problem(&fast, &e, &[-40.0, -40.0], 10.0, &cfg).unwrap();
        let (dec, report) = engine.solve(&prob).unwrap();
        let t = cfg.slots_per_interval as f64;
        for i in 0..cfg.bs {
            let lhs = cfg.p_c + dec.w.bs_power(i, cfg.antennas) + dec.p_b[i];
            let rhs = e[i] / t + dec.p[i];
            assert!((lhs - rhs).abs() <= 1e-7, "balance residual {}", lhs - rhs);
            assert!(dec.p_b[i] >= cfg.p_b_min && dec.p_b[i] <= cfg.p_b_max);
        }
        for k in 0..cfg.users {
            let s = sinr(&fast.h, &dec.w, &cfg.sigma2, k);
            assert!(s >= cfg.gamma[k] - 1e-6, "user {k} sinr {s}");
        }
        assert!(report.power_epi_slack <= 1e-6);
        // The reported objective must be reproducible from the decision.
        let mut obj = 0.0;
        for i in 0..cfg.bs {
            obj += 10.0 * cost_rt(dec.p[i], fast.alpha_rt, fast.beta_rt) - 40.0 * dec.p_b[i];
        }
        assert!((obj - dec.objective_value).abs() <= 1e-9 * obj.abs().max(1.0));
    }
}
