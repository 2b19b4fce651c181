//! Comparison policies: matched-path runs of the two-scale controller, its
//! one-scale and storage-free variants, and the clairvoyant offline optimum.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::ValidatedConfig;
use crate::controller::{
    ControllerError, IntervalOutcome, PolicyOptions, SlotOutcome, TwoScaleController,
};
use crate::cost::{cost_lt, cost_rt, sinr};
use crate::sampling::{sample_fast_state, sample_slow_state};
use crate::socp::CooMatrix;
use crate::state::{Beamformers, FastState, SlowState};

/// Offline programs beyond this horizon are rejected, not subsampled.
pub const OFFLINE_SLOT_CAP: usize = 100;

/// A full realization shared across policies: one slow state per interval,
/// one fast state per slot.
#[derive(Debug, Clone)]
pub struct SamplePath {
    pub slow: Vec<SlowState>,
    pub fast: Vec<FastState>,
    pub slots_per_interval: u32,
}

impl SamplePath {
    /// Generate `n_slots` slots (a whole number of intervals) from a seed.
    pub fn generate(cfg: &ValidatedConfig, seed: u64, n_slots: usize) -> SamplePath {
        let t = cfg.slots_per_interval as usize;
        assert!(n_slots % t == 0, "horizon must be a whole number of intervals");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_int = n_slots / t;
        let slow = (0..n_int).map(|_| sample_slow_state(&mut rng, cfg)).collect();
        let fast = (0..n_slots).map(|_| sample_fast_state(&mut rng, cfg)).collect();
        SamplePath {
            slow,
            fast,
            slots_per_interval: cfg.slots_per_interval,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.fast.len()
    }

    pub fn n_intervals(&self) -> usize {
        self.slow.len()
    }

    /// Fast states of interval `n`.
    pub fn interval_fast(&self, n: usize) -> &[FastState] {
        let t = self.slots_per_interval as usize;
        &self.fast[n * t..(n + 1) * t]
    }
}

/// Outcome of one policy on one path.
#[derive(Debug)]
pub struct PolicyRun {
    pub intervals: Vec<IntervalOutcome>,
    pub total_cost: f64,
}

impl PolicyRun {
    /// Cluster-wide transaction cost per slot.
    pub fn slot_costs(&self) -> Vec<f64> {
        self.intervals
            .iter()
            .flat_map(|iv| iv.slots.iter().map(|s| s.phi.iter().sum::<f64>()))
            .collect()
    }

    pub fn slots(&self) -> impl Iterator<Item = &SlotOutcome> {
        self.intervals.iter().flat_map(|iv| iv.slots.iter())
    }
}

fn run_policy(
    path: &SamplePath,
    cfg: &ValidatedConfig,
    seed: u64,
    options: PolicyOptions,
) -> Result<PolicyRun, ControllerError> {
    let mut ctl = TwoScaleController::new(cfg, seed, options)?;
    let mut intervals = Vec::with_capacity(path.n_intervals());
    for n in 0..path.n_intervals() {
        intervals.push(ctl.step_interval(&path.slow[n], path.interval_fast(n))?);
    }
    Ok(PolicyRun {
        intervals,
        total_cost: ctl.cumulative_cost,
    })
}

/// The two-scale policy on a fixed path.
pub fn run_tsoc(
    path: &SamplePath,
    cfg: &ValidatedConfig,
    seed: u64,
) -> Result<PolicyRun, ControllerError> {
    run_policy(path, cfg, seed, PolicyOptions::two_scale())
}

/// One-scale baseline: no ahead-of-time planning (plan identically zero),
/// batteries retained under the same queue rule.
pub fn run_alg1(
    path: &SamplePath,
    cfg: &ValidatedConfig,
    seed: u64,
) -> Result<PolicyRun, ControllerError> {
    run_policy(path, cfg, seed, PolicyOptions::one_scale())
}

/// Two-scale baseline without renewables or storage: the planner sees no
/// renewable arrivals and the battery is pinned to zero. Accounting still
/// credits the real arrivals.
pub fn run_alg2(
    path: &SamplePath,
    cfg: &ValidatedConfig,
    seed: u64,
) -> Result<PolicyRun, ControllerError> {
    run_policy(path, cfg, seed, PolicyOptions::no_res_no_storage())
}

/// How the offline program treats the initial state of charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialSoc {
    /// Pinned (the physical situation).
    Fixed(f64),
    /// Free within the SoC box; relaxation used by the block lower bound.
    Free,
}

#[derive(Debug, Error)]
pub enum OfflineError {
    #[error("offline horizon {got} exceeds the {cap}-slot cap")]
    HorizonTooLong { got: usize, cap: usize },
    #[error("offline horizon must be a whole number of intervals (got {got} slots, T = {t})")]
    RaggedHorizon { got: usize, t: u32 },
    #[error("offline program infeasible")]
    Infeasible,
    #[error("offline solver failed: {0}")]
    Solver(String),
}

/// Clairvoyant optimum over the whole path.
#[derive(Debug, Clone)]
pub struct OfflineSolution {
    pub total_cost: f64,
    /// Cluster-wide cost per slot, recomputed from the decisions.
    pub slot_costs: Vec<f64>,
    /// Plan per interval per BS.
    pub e: Vec<Vec<f64>>,
    /// Battery action per slot per BS.
    pub p_b: Vec<Vec<f64>>,
    /// State of charge after each slot, per BS.
    pub c: Vec<Vec<f64>>,
    /// Real-time trade per slot per BS.
    pub p: Vec<Vec<f64>>,
    /// Record-shaped view of the trajectory.
    pub records: Vec<SlotOutcome>,
    pub iterations: u32,
    pub duality_gap: f64,
}

/// Solve the stacked convex program over the full realization: all slots'
/// beamformers, battery actions and interval plans jointly, with battery
/// dynamics as equality constraints and the true (unweighted) transaction
/// cost as objective.
pub fn solve_offline(
    path: &SamplePath,
    cfg: &ValidatedConfig,
    initial: InitialSoc,
) -> Result<OfflineSolution, OfflineError> {
    let nt = path.n_slots();
    let t_len = cfg.slots_per_interval as usize;
    if nt > OFFLINE_SLOT_CAP {
        return Err(OfflineError::HorizonTooLong {
            got: nt,
            cap: OFFLINE_SLOT_CAP,
        });
    }
    if nt % t_len != 0 || nt == 0 {
        return Err(OfflineError::RaggedHorizon {
            got: nt,
            t: cfg.slots_per_interval,
        });
    }
    let n_int = nt / t_len;
    let (bs, users, m, mi) = (cfg.bs, cfg.users, cfg.antennas, cfg.mi());
    let nw = 2 * mi * users;
    let slot_width = nw + 3 * bs;

    // Variable layout: per-slot blocks, then C stamps, then E and its
    // ahead-of-time cost epigraph u.
    let slot_off = |t: usize| t * slot_width;
    let w_re = |t: usize, k: usize, a: usize| slot_off(t) + 2 * (k * mi + a);
    let w_im = |t: usize, k: usize, a: usize| slot_off(t) + 2 * (k * mi + a) + 1;
    let pb_at = |t: usize, i: usize| slot_off(t) + nw + i;
    let s_at = |t: usize, i: usize| slot_off(t) + nw + bs + i;
    let p_at = |t: usize, i: usize| slot_off(t) + nw + 2 * bs + i;
    let base_c = nt * slot_width;
    let c_at = |ts: usize, i: usize| base_c + ts * bs + i;
    let base_e = base_c + (nt + 1) * bs;
    let e_at = |n: usize, i: usize| base_e + n * bs + i;
    let base_u = base_e + n_int * bs;
    let u_at = |n: usize, i: usize| base_u + n * bs + i;
    let n_vars = base_u + n_int * bs;

    let mut a = CooMatrix::new(n_vars);
    let mut b: Vec<f64> = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0usize;
    let t_f = t_len as f64;

    // Zero cone: phase rows, battery dynamics, optional pinned start.
    for (t, fast) in path.fast.iter().enumerate() {
        for k in 0..users {
            let hk = fast.h.col(k);
            for an in 0..mi {
                a.push(row, w_re(t, k, an), -hk[an].im);
                a.push(row, w_im(t, k, an), hk[an].re);
            }
            b.push(0.0);
            row += 1;
        }
    }
    for t in 0..nt {
        for i in 0..bs {
            a.push(row, c_at(t + 1, i), 1.0);
            a.push(row, c_at(t, i), -cfg.eta);
            a.push(row, pb_at(t, i), -1.0);
            b.push(0.0);
            row += 1;
        }
    }
    let mut zero_rows = nt * users + nt * bs;
    if let InitialSoc::Fixed(c0) = initial {
        for i in 0..bs {
            a.push(row, c_at(0, i), 1.0);
            b.push(c0);
            row += 1;
        }
        zero_rows += bs;
    }
    cones.push(SupportedConeT::ZeroConeT(zero_rows));

    // Nonnegative rows.
    let mut nonneg = 0usize;
    for (t, fast) in path.fast.iter().enumerate() {
        let n = t / t_len;
        for i in 0..bs {
            for price in [fast.alpha_rt, fast.beta_rt] {
                a.push(row, p_at(t, i), price);
                a.push(row, pb_at(t, i), price);
                a.push(row, e_at(n, i), -price / t_f);
                a.push(row, s_at(t, i), -1.0);
                b.push(-price * cfg.p_c);
                row += 1;
            }
            a.push(row, pb_at(t, i), 1.0);
            b.push(cfg.p_b_max);
            row += 1;
            a.push(row, pb_at(t, i), -1.0);
            b.push(-cfg.p_b_min);
            row += 1;
            a.push(row, p_at(t, i), 1.0);
            b.push(cfg.p_g_max - cfg.p_c);
            row += 1;
            nonneg += 5;
        }
    }
    for ts in 0..=nt {
        for i in 0..bs {
            a.push(row, c_at(ts, i), 1.0);
            b.push(cfg.c_max);
            row += 1;
            a.push(row, c_at(ts, i), -1.0);
            b.push(-cfg.c_min);
            row += 1;
            nonneg += 2;
        }
    }
    for (n, slow) in path.slow.iter().enumerate() {
        for i in 0..bs {
            a.push(row, e_at(n, i), -1.0);
            b.push(0.0);
            row += 1;
            // Plans share the policies' domain [0, T * P_g_max]; without the
            // cap a clairvoyant path with a cheap ahead price and expensive
            // real-time sell-backs would buy unboundedly for pure resale.
            a.push(row, e_at(n, i), 1.0);
            b.push(t_f * cfg.p_g_max);
            row += 1;
            for price in [slow.alpha_lt, slow.beta_lt] {
                a.push(row, e_at(n, i), price);
                a.push(row, u_at(n, i), -1.0);
                b.push(price * slow.a_res[i]);
                row += 1;
            }
            nonneg += 4;
        }
    }
    cones.push(SupportedConeT::NonnegativeConeT(nonneg));

    // SOC cones per slot.
    for (t, fast) in path.fast.iter().enumerate() {
        for k in 0..users {
            let hk = fast.h.col(k);
            let gain = 1.0 / cfg.gamma[k].sqrt();
            for an in 0..mi {
                a.push(row, w_re(t, k, an), -gain * hk[an].re);
                a.push(row, w_im(t, k, an), -gain * hk[an].im);
            }
            b.push(0.0);
            row += 1;
            for l in 0..users {
                if l == k {
                    continue;
                }
                for an in 0..mi {
                    a.push(row, w_re(t, l, an), -hk[an].re);
                    a.push(row, w_im(t, l, an), -hk[an].im);
                }
                b.push(0.0);
                row += 1;
                for an in 0..mi {
                    a.push(row, w_re(t, l, an), hk[an].im);
                    a.push(row, w_im(t, l, an), -hk[an].re);
                }
                b.push(0.0);
                row += 1;
            }
            b.push(cfg.sigma2[k].sqrt());
            row += 1;
            cones.push(SupportedConeT::SecondOrderConeT(2 * (users - 1) + 2));
        }
        for i in 0..bs {
            a.push(row, p_at(t, i), -0.5);
            b.push(0.5);
            row += 1;
            for k in 0..users {
                for an in (i * m)..((i + 1) * m) {
                    a.push(row, w_re(t, k, an), -1.0);
                    b.push(0.0);
                    row += 1;
                    a.push(row, w_im(t, k, an), -1.0);
                    b.push(0.0);
                    row += 1;
                }
            }
            a.push(row, p_at(t, i), -0.5);
            b.push(-0.5);
            row += 1;
            cones.push(SupportedConeT::SecondOrderConeT(2 * m * users + 2));
        }
    }
    a.m = row;

    let mut q = vec![0.0; n_vars];
    for t in 0..nt {
        for i in 0..bs {
            q[s_at(t, i)] = 1.0;
        }
    }
    for n in 0..n_int {
        for i in 0..bs {
            q[u_at(n, i)] = 1.0;
        }
    }

    let settings = clarabel::solver::DefaultSettings {
        verbose: false,
        max_iter: 300,
        tol_gap_abs: 1e-9,
        tol_gap_rel: 1e-9,
        tol_feas: 1e-9,
        ..Default::default()
    };
    let p_csc = CscMatrix::<f64>::zeros((n_vars, n_vars));
    let mut solver = DefaultSolver::new(&p_csc, &q, &a.to_csc(), &b, &cones, settings)
        .map_err(|e| OfflineError::Solver(format!("{e:?}")))?;
    solver.solve();
    let gap_ok = solver.info.gap_abs.min(solver.info.gap_rel) <= 1e-7
        && solver.info.res_primal <= 1e-5
        && solver.info.res_dual <= 1e-5;
    match solver.solution.status {
        SolverStatus::Solved => {}
        SolverStatus::AlmostSolved if gap_ok => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(OfflineError::Infeasible)
        }
        other => return Err(OfflineError::Solver(format!("{other:?}"))),
    }
    let x = &solver.solution.x;

    // Recover trajectories and recompute the cost piecewise.
    let e: Vec<Vec<f64>> = (0..n_int)
        .map(|n| (0..bs).map(|i| x[e_at(n, i)].max(0.0)).collect())
        .collect();
    let mut p_b = Vec::with_capacity(nt);
    let mut c = Vec::with_capacity(nt);
    let mut p = Vec::with_capacity(nt);
    let mut slot_costs = Vec::with_capacity(nt);
    let mut records = Vec::with_capacity(nt);
    let mut total = 0.0;
    for n in 0..n_int {
        for i in 0..bs {
            total += cost_lt(e[n][i], path.slow[n].a_res[i], path.slow[n].alpha_lt, path.slow[n].beta_lt);
        }
    }
    for (t, fast) in path.fast.iter().enumerate() {
        let n = t / t_len;
        let slow = &path.slow[n];
        let w = Beamformers::from_interleaved(mi, users, &x[slot_off(t)..slot_off(t) + nw]);
        let pb_t: Vec<f64> = (0..bs)
            .map(|i| x[pb_at(t, i)].clamp(cfg.p_b_min, cfg.p_b_max))
            .collect();
        let c_t: Vec<f64> = (0..bs).map(|i| x[c_at(t + 1, i)]).collect();
        let p_t: Vec<f64> = (0..bs)
            .map(|i| cfg.p_c + w.bs_power(i, m) + pb_t[i] - e[n][i] / t_f)
            .collect();
        let phi: Vec<f64> = (0..bs)
            .map(|i| {
                cost_lt(e[n][i], slow.a_res[i], slow.alpha_lt, slow.beta_lt) / t_f
                    + cost_rt(p_t[i], fast.alpha_rt, fast.beta_rt)
            })
            .collect();
        let slot_total: f64 = (0..bs)
            .map(|i| cost_rt(p_t[i], fast.alpha_rt, fast.beta_rt))
            .sum();
        total += slot_total;
        slot_costs.push(phi.iter().sum());
        records.push(SlotOutcome {
            t,
            interval: n,
            tau: t % t_len,
            e_share: (0..bs).map(|i| e[n][i] / t_f).collect(),
            p: p_t.clone(),
            p_b: pb_t.clone(),
            p_b_solver: (0..bs).map(|i| x[pb_at(t, i)]).collect(),
            c: c_t.clone(),
            q: c_t.clone(),
            alpha_lt: slow.alpha_lt,
            beta_lt: slow.beta_lt,
            alpha_rt: fast.alpha_rt,
            beta_rt: fast.beta_rt,
            a_res: slow.a_res.clone(),
            sinr: (0..users).map(|k| sinr(&fast.h, &w, &cfg.sigma2, k)).collect(),
            solver_iterations: solver.info.iterations,
            phi,
        });
        p_b.push(pb_t);
        c.push(c_t);
        p.push(p_t);
    }

    Ok(OfflineSolution {
        total_cost: total,
        slot_costs,
        e,
        p_b,
        c,
        p,
        records,
        iterations: solver.info.iterations,
        duality_gap: solver.info.gap_abs,
    })
}

/// Lower bound on the clairvoyant optimum over long horizons: consecutive
/// blocks of at most [`OFFLINE_SLOT_CAP`] slots, the first pinned at the
/// physical initial SoC, later blocks with a free start inside the SoC box.
/// Freeing the block boundaries only enlarges the feasible set, so the
/// summed cost never exceeds the full-horizon optimum.
pub fn offline_block_lower_bound(
    path: &SamplePath,
    cfg: &ValidatedConfig,
    block_slots: usize,
) -> Result<OfflineSolution, OfflineError> {
    let t_len = cfg.slots_per_interval as usize;
    if block_slots == 0 || block_slots % t_len != 0 {
        return Err(OfflineError::RaggedHorizon {
            got: block_slots,
            t: cfg.slots_per_interval,
        });
    }
    let nt = path.n_slots();
    let mut total = 0.0;
    let mut slot_costs = Vec::with_capacity(nt);
    let mut e = Vec::new();
    let mut p_b = Vec::new();
    let mut c = Vec::new();
    let mut p = Vec::new();
    let mut records = Vec::new();
    let mut iterations = 0;
    let mut gap = 0.0f64;
    let mut start = 0usize;
    while start < nt {
        let stop = (start + block_slots).min(nt);
        let sub = SamplePath {
            slow: path.slow[start / t_len..stop / t_len].to_vec(),
            fast: path.fast[start..stop].to_vec(),
            slots_per_interval: path.slots_per_interval,
        };
        let initial = if start == 0 {
            InitialSoc::Fixed(cfg.c0)
        } else {
            InitialSoc::Free
        };
        let mut sol = solve_offline(&sub, cfg, initial)?;
        total += sol.total_cost;
        slot_costs.extend(sol.slot_costs);
        e.extend(sol.e);
        p_b.extend(sol.p_b);
        c.extend(sol.c);
        p.extend(sol.p);
        for r in &mut sol.records {
            r.t += start;
            r.interval += start / t_len;
        }
        records.extend(sol.records);
        iterations += sol.iterations;
        gap = gap.max(sol.duality_gap);
        start = stop;
    }
    Ok(OfflineSolution {
        total_cost: total,
        slot_costs,
        e,
        p_b,
        c,
        p,
        records,
        iterations,
        duality_gap: gap,
    })
}
