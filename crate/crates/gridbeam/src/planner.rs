//! Ahead-of-time energy planning by projected stochastic subgradient.
//!
//! Each interval the planner minimizes, over the nonnegative plan `E`,
//! `sum_i V * G_lt(E_i) + T * Gbar_rt(E)` where `Gbar_rt` is the expected
//! optimal value of the per-slot inner problem. The expectation is never
//! formed: iteration `j` draws one stored past fast-state, solves the inner
//! problem at the current iterate, and descends along the resulting
//! stochastic subgradient with diminishing steps, projecting onto `E >= 0`.

use rand::Rng;
use std::collections::VecDeque;
use thiserror::Error;

use crate::config::ValidatedConfig;
use crate::cost::cost_lt;
use crate::socp::{solve_planning_sample, SocpEngine, SocpError};
use crate::state::{FastState, PlanDecision, SlowState};

/// Ring buffer of past fast-state realizations, capacity `L * T` slots.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    buf: VecDeque<FastState>,
    capacity: usize,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        HistoryBuffer {
            buf: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Capacity for `intervals` coarse intervals of `t` slots each.
    pub fn for_window(intervals: usize, t: u32) -> Self {
        Self::new(intervals.max(1) * t as usize)
    }

    pub fn push(&mut self, state: FastState) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(state);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn get(&self, idx: usize) -> &FastState {
        &self.buf[idx]
    }

    /// Uniform draw over the stored entries.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &FastState {
        &self.buf[rng.random_range(0..self.buf.len())]
    }

    pub fn iter(&self) -> impl Iterator<Item = &FastState> {
        self.buf.iter()
    }
}

/// Diminishing, non-summable stepsize schedule `mu_j = mu0 / sqrt(j + 1)`.
#[derive(Debug, Clone, Copy)]
pub struct SubgradientSchedule {
    pub mu0: f64,
    pub iterations: usize,
}

impl SubgradientSchedule {
    pub fn from_config(cfg: &ValidatedConfig) -> Self {
        SubgradientSchedule {
            mu0: cfg.planner.mu0,
            iterations: cfg.planner.iterations,
        }
    }

    pub fn step(&self, j: usize) -> f64 {
        self.mu0 / ((j + 1) as f64).sqrt()
    }
}

/// Subgradient of the ahead-of-time trading cost in the planned amount.
/// At the kink `e == a` any value in `[beta_lt, alpha_lt]` is valid; the
/// purchase price is returned deterministically.
pub fn subgrad_lt(e: f64, a: f64, alpha_lt: f64, beta_lt: f64) -> f64 {
    if e > a {
        alpha_lt
    } else if e < a {
        beta_lt
    } else {
        alpha_lt
    }
}

/// Partial subgradient of the per-slot trading cost in the plan, evaluated
/// at an inner optimum with consumption level `delta`. At the kink the
/// purchase branch is returned deterministically.
pub fn subgrad_psi(e: f64, delta: f64, alpha_rt: f64, beta_rt: f64, t: u32) -> f64 {
    let t = t as f64;
    if e / t > delta {
        -beta_rt / t
    } else {
        -alpha_rt / t
    }
}

/// Half-width of the band around the cost kink treated as "at the kink"
/// when differentiating through the inner optimum; covers solver noise.
pub const KINK_TOL: f64 = 1e-6;

/// Subgradient selection used inside the planning iteration.
///
/// Away from the kink this is [`subgrad_psi`]. On the kink the admissible
/// interval is `[-alpha/T, -beta/T]`, and the inner problem pins the valid
/// choice: whenever the queue multiplier is interior, the battery parks the
/// real-time trade exactly on the kink across a whole range of plans, and
/// the value function's slope there is `q / T` per unit of `V`-weighted
/// cost. Picking an endpoint instead would mis-slope that entire segment
/// and drag the iteration to its edge.
pub fn subgrad_psi_inner(
    e: f64,
    delta: f64,
    alpha_rt: f64,
    beta_rt: f64,
    t: u32,
    q: f64,
    v: f64,
) -> f64 {
    let t_f = t as f64;
    let gap = e / t_f - delta;
    if gap.abs() <= KINK_TOL * delta.abs().max(1.0) {
        (q / (v * t_f)).clamp(-alpha_rt / t_f, -beta_rt / t_f)
    } else if gap > 0.0 {
        -beta_rt / t_f
    } else {
        -alpha_rt / t_f
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("planner invoked with an empty history and no synthetic fallback")]
    EmptyHistory,
    #[error("finite support probabilities must sum to one (got {0})")]
    BadSupport(f64),
    #[error(transparent)]
    Solver(#[from] SocpError),
}

/// Plan the interval by projected stochastic subgradient, returning the tail
/// average of the second half of the iterates.
#[allow(clippy::too_many_arguments)]
pub fn plan<R: Rng + ?Sized>(
    history: &HistoryBuffer,
    slow: &SlowState,
    q_frozen: &[f64],
    v: f64,
    cfg: &ValidatedConfig,
    sched: &SubgradientSchedule,
    rng: &mut R,
    engine: &mut SocpEngine,
) -> Result<PlanDecision, PlanError> {
    if history.is_empty() {
        return Err(PlanError::EmptyHistory);
    }
    let t = cfg.slots_per_interval;
    // Iterates live in [0, T * P_g_max]: nonnegative, and never more than
    // the cluster could physically consume in one interval.
    let e_cap = t as f64 * cfg.p_g_max;
    // Static load over one interval anchors the initial iterate.
    let mut e: Vec<f64> = vec![t as f64 * cfg.p_c; cfg.bs];
    if sched.iterations == 0 {
        return Ok(PlanDecision {
            e,
            iterations_used: 0,
            final_step: 0.0,
        });
    }

    let tail_start = sched.iterations / 2;
    let mut tail_sum = vec![0.0; cfg.bs];
    let mut tail_count = 0usize;
    let mut final_step = 0.0;

    for j in 0..sched.iterations {
        let fast = history.sample(rng);
        let sample = solve_planning_sample(fast, &e, q_frozen, v, cfg, engine)?;
        let mu = sched.step(j);
        for i in 0..cfg.bs {
            let g_lt = subgrad_lt(e[i], slow.a_res[i], slow.alpha_lt, slow.beta_lt);
            let g_psi = subgrad_psi_inner(
                e[i],
                sample.delta[i],
                fast.alpha_rt,
                fast.beta_rt,
                t,
                q_frozen[i],
                v,
            );
            let g = v * (g_lt + t as f64 * g_psi);
            e[i] = (e[i] - mu * g).clamp(0.0, e_cap);
        }
        final_step = mu;
        if j >= tail_start {
            for i in 0..cfg.bs {
                tail_sum[i] += e[i];
            }
            tail_count += 1;
        }
    }
    let averaged = tail_sum
        .into_iter()
        .map(|s| s / tail_count as f64)
        .collect();
    Ok(PlanDecision {
        e: averaged,
        iterations_used: sched.iterations,
        final_step,
    })
}

/// Exact planning objective for a finite-support fast-state distribution:
/// `sum_i V * G_lt(e_i) + T * sum_j p_j * inner_value(e, state_j)`.
pub fn exact_objective(
    e: &[f64],
    support: &[(FastState, f64)],
    slow: &SlowState,
    q_frozen: &[f64],
    v: f64,
    cfg: &ValidatedConfig,
    engine: &mut SocpEngine,
) -> Result<f64, PlanError> {
    let mut obj = 0.0;
    for i in 0..cfg.bs {
        obj += v * cost_lt(e[i], slow.a_res[i], slow.alpha_lt, slow.beta_lt);
    }
    for (fast, p) in support {
        let sample = solve_planning_sample(fast, e, q_frozen, v, cfg, engine)?;
        obj += cfg.slots_per_interval as f64 * p * sample.inner_value;
    }
    Ok(obj)
}

fn golden_min(
    mut f: impl FnMut(f64) -> Result<f64, PlanError>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64), PlanError> {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok((mid, f(mid)?))
}

/// Exact planning on a finite-support distribution: grid the objective and
/// refine by golden-section (per coordinate when more than one BS) to
/// 1e-3 kWh. Reference oracle for [`plan`].
pub fn plan_exact_finite_support(
    support: &[(FastState, f64)],
    slow: &SlowState,
    q_frozen: &[f64],
    v: f64,
    cfg: &ValidatedConfig,
    grid_step: f64,
    engine: &mut SocpEngine,
) -> Result<(PlanDecision, f64), PlanError> {
    let total_p: f64 = support.iter().map(|(_, p)| p).sum();
    if (total_p - 1.0).abs() > 1e-9 {
        return Err(PlanError::BadSupport(total_p));
    }
    let t = cfg.slots_per_interval as f64;
    let hi = t * cfg.p_g_max;
    let mut evals = 0usize;

    let mut e_best = vec![0.0; cfg.bs];
    if cfg.bs == 1 {
        let mut best = (0.0, f64::INFINITY);
        let steps = (hi / grid_step).ceil() as usize;
        for s in 0..=steps {
            let x = (s as f64 * grid_step).min(hi);
            let f = exact_objective(&[x], support, slow, q_frozen, v, cfg, engine)?;
            evals += 1;
            if f < best.1 {
                best = (x, f);
            }
        }
        let lo_b = (best.0 - grid_step).max(0.0);
        let hi_b = (best.0 + grid_step).min(hi);
        let (x, _) = golden_min(
            |x| {
                evals += 1;
                exact_objective(&[x], support, slow, q_frozen, v, cfg, engine)
            },
            lo_b,
            hi_b,
            1e-3,
        )?;
        e_best[0] = x;
    } else {
        // Coarse per-coordinate sweeps, then cyclic golden refinement.
        let coarse = 32usize;
        let mut e = vec![t * cfg.p_c; cfg.bs];
        for _cycle in 0..3 {
            for i in 0..cfg.bs {
                let mut best = (e[i], f64::INFINITY);
                for s in 0..=coarse {
                    let x = hi * s as f64 / coarse as f64;
                    let mut cand = e.clone();
                    cand[i] = x;
                    let f = exact_objective(&cand, support, slow, q_frozen, v, cfg, engine)?;
                    evals += 1;
                    if f < best.1 {
                        best = (x, f);
                    }
                }
                e[i] = best.0;
            }
        }
        for _cycle in 0..2 {
            for i in 0..cfg.bs {
                let width = hi / coarse as f64;
                let lo_b = (e[i] - width).max(0.0);
                let hi_b = (e[i] + width).min(hi);
                let e_ref = e.clone();
                let (x, _) = golden_min(
                    |x| {
                        let mut cand = e_ref.clone();
                        cand[i] = x;
                        evals += 1;
                        exact_objective(&cand, support, slow, q_frozen, v, cfg, engine)
                    },
                    lo_b,
                    hi_b,
                    1e-3,
                )?;
                e[i] = x;
            }
        }
        e_best = e;
    }

    let f_best = exact_objective(&e_best, support, slow, q_frozen, v, cfg, engine)?;
    Ok((
        PlanDecision {
            e: e_best,
            iterations_used: evals,
            final_step: 1e-3,
        },
        f_best,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subgrad_lt_examples() {
        assert_eq!(subgrad_lt(10.0, 4.0, 1.2, 1.08), 1.2);
        assert_eq!(subgrad_lt(3.0, 4.0, 1.2, 1.08), 1.08);
        // Kink tie-breaks to the purchase price.
        assert_eq!(subgrad_lt(4.0, 4.0, 1.2, 1.08), 1.2);
    }

    #[test]
    fn subgrad_psi_examples() {
        // E/T = 12 > delta = 10.
        assert!((subgrad_psi(60.0, 10.0, 2.3, 0.69, 5) + 0.138).abs() < 1e-15);
        // E/T = 8 < delta = 10.
        assert!((subgrad_psi(40.0, 10.0, 2.3, 0.69, 5) + 0.46).abs() < 1e-15);
        // Kink tie-breaks to the purchase branch.
        assert!((subgrad_psi(50.0, 10.0, 2.3, 0.69, 5) + 0.46).abs() < 1e-15);
    }

    #[test]
    fn schedule_is_diminishing_nonsummable() {
        let sched = SubgradientSchedule {
            mu0: 1.0,
            iterations: 1000,
        };
        assert!(sched.step(0) == 1.0);
        assert!(sched.step(99) < sched.step(9));
        // Partial sums keep growing: sum_{j<n} 1/sqrt(j+1) >= sqrt(n).
        let partial: f64 = (0..10_000).map(|j| sched.step(j)).sum();
        assert!(partial >= 100.0);
    }

    #[test]
    fn history_buffer_evicts_oldest() {
        let mut h = HistoryBuffer::new(2);
        let mk = |price: f64| FastState {
            alpha_rt: price,
            beta_rt: 0.3 * price,
            h: crate::state::ChannelMatrix::from_interleaved(1, 1, &[1.0, 0.0]),
        };
        h.push(mk(1.0));
        h.push(mk(2.0));
        h.push(mk(3.0));
        assert_eq!(h.len(), 2);
        assert_eq!(h.get(0).alpha_rt, 2.0);
        assert_eq!(h.get(1).alpha_rt, 3.0);
    }
}
