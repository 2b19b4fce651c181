//! Per-slot energy balancing and beamforming as a second-order cone program.
//!
//! Per slot the controller minimizes `sum_i V * G_rt(P_i) + Q_i * P_b_i`
//! over beamformers and battery actions, where the real-time trade
//! `P_i = P_c + x_i(w) + P_b_i - E_i/T` is eliminated through the per-BS
//! balance identity and `x_i(w)` is the BS transmit power. The SINR targets
//! become second-order cones after fixing the phase of each user's own
//! channel-beamformer product (`Im{h_k^H w_k} = 0`, real part nonnegative);
//! the per-BS quadratic power gets an epigraph variable through a rotated
//! cone; the piecewise-linear trading cost gets a linear epigraph pair.
//!
//! Variable layout (all real): `[w interleaved re/im | P_b | s | p]`, where
//! `s_i` is the cost epigraph and `p_i` the power epigraph of BS `i`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use thiserror::Error;

use crate::config::ValidatedConfig;
use crate::cost::{cost_rt, sinr};
use crate::state::{Beamformers, FastState, RealtimeDecision};

/// Battery actions this close to a box bound are snapped onto it before the
/// battery update; the raw value is kept alongside for diagnostics.
pub const PB_SNAP_TOL: f64 = 1e-6;
/// Accepted shortfall on achieved SINRs at an optimal exit, linear scale.
pub const SINR_SLACK: f64 = 1e-6;
/// Certificate bar for optimal exits: duality gap and residuals must sit
/// below this.
pub const CERT_TOL: f64 = 1e-7;
/// Residual ceiling for reduced-accuracy exits; beyond the certificate bar
/// such exits are accepted only when the recovered decision passes the
/// physical checks (SINR slack, battery box, consumption cap).
pub const RELAXED_RES_TOL: f64 = 1e-5;

/// Triplet accumulator converted to compressed sparse columns on demand.
#[derive(Debug, Clone)]
pub(crate) struct CooMatrix {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pub m: usize,
    pub n: usize,
}

impl CooMatrix {
    pub fn new(n: usize) -> Self {
        CooMatrix {
            rows: vec![],
            cols: vec![],
            vals: vec![],
            m: 0,
            n,
        }
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(c < self.n);
        self.rows.push(r);
        self.cols.push(c);
        self.vals.push(v);
    }

    pub fn to_csc(&self) -> CscMatrix<f64> {
        let nnz = self.vals.len();
        let mut order: Vec<usize> = (0..nnz).collect();
        order.sort_by_key(|&i| (self.cols[i], self.rows[i]));
        let mut colptr = vec![0usize; self.n + 1];
        let mut rowval = Vec::with_capacity(nnz);
        let mut nzval = Vec::with_capacity(nnz);
        for &i in &order {
            colptr[self.cols[i] + 1] += 1;
            rowval.push(self.rows[i]);
            nzval.push(self.vals[i]);
        }
        for c in 0..self.n {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix::new(self.m, self.n, colptr, rowval, nzval)
    }
}

/// Where each variable block of the per-slot problem lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub bs: usize,
    pub users: usize,
    pub antennas: usize,
    /// Real beamformer block width, `2 * M * I * K`.
    pub nw: usize,
    pub pb_off: usize,
    pub s_off: usize,
    pub p_off: usize,
    /// Total variable count.
    pub n: usize,
}

impl VarLayout {
    pub fn new(bs: usize, users: usize, antennas: usize) -> Self {
        let nw = 2 * antennas * bs * users;
        VarLayout {
            bs,
            users,
            antennas,
            nw,
            pb_off: nw,
            s_off: nw + bs,
            p_off: nw + 2 * bs,
            n: nw + 3 * bs,
        }
    }

    fn mi(&self) -> usize {
        self.antennas * self.bs
    }

    /// Column of the real part of antenna `a` of user `k`'s beamformer.
    pub fn w_re(&self, k: usize, a: usize) -> usize {
        2 * (k * self.mi() + a)
    }

    /// Column of the imaginary part.
    pub fn w_im(&self, k: usize, a: usize) -> usize {
        2 * (k * self.mi() + a) + 1
    }
}

/// Assembled per-slot conic problem plus the data needed to interpret its
/// solution.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub layout: VarLayout,
    pub(crate) a: CscMatrix<f64>,
    pub(crate) b: Vec<f64>,
    pub(crate) q: Vec<f64>,
    pub(crate) cones: Vec<SupportedConeT<f64>>,
    // Recovery data.
    fast: FastState,
    e_over_t: Vec<f64>,
    q_frozen: Vec<f64>,
    v: f64,
    p_c: f64,
    p_g_max: f64,
    p_b_min: f64,
    p_b_max: f64,
    battery: bool,
    gamma: Vec<f64>,
    sigma2: Vec<f64>,
}

/// End state of a conic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalTrouble,
}

/// Solver certificates for one solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Epigraph objective reported by the solver.
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Absolute duality gap at exit.
    pub duality_gap: f64,
    /// Relative duality gap at exit; the gap certificate holds when either
    /// form clears the tolerance.
    pub duality_gap_rel: f64,
    pub iterations: u32,
    /// Slack of the power epigraph, `max_i p_i - x_i(w)`; tiny at optimality.
    pub power_epi_slack: f64,
}

#[derive(Debug, Error)]
pub enum SocpError {
    #[error("user {user} has a zero channel; SINR target unreachable")]
    DegenerateChannel { user: usize },
    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("problem reported primal infeasible (gap {:.3e})", report.duality_gap)]
    Infeasible { report: SolveReport },
    #[error("iteration limit reached after {} iterations", report.iterations)]
    MaxIterations { report: SolveReport },
    #[error("solver numerical trouble: {detail}")]
    Numerical { detail: String, report: SolveReport },
    #[error(
        "optimal exit violates QoS: user {user} achieved {achieved:.9} < target {target:.9}"
    )]
    QosViolation {
        user: usize,
        achieved: f64,
        target: f64,
    },
}

/// Build the per-slot problem for one fast-state realization, a fixed
/// interval plan `e` (interval totals, kWh) and queues frozen at the
/// interval start.
pub fn build_realtime_problem(
    fast: &FastState,
    e: &[f64],
    q_frozen: &[f64],
    v: f64,
    cfg: &ValidatedConfig,
) -> Result<ConicProblem, SocpError> {
    build_problem(fast, e, q_frozen, v, cfg, true)
}

/// Battery-free variant: the battery action is pinned to zero by an
/// equality, and there is no queue term.
pub fn build_realtime_problem_no_battery(
    fast: &FastState,
    e: &[f64],
    v: f64,
    cfg: &ValidatedConfig,
) -> Result<ConicProblem, SocpError> {
    let zeros = vec![0.0; cfg.bs];
    build_problem(fast, e, &zeros, v, cfg, false)
}

fn build_problem(
    fast: &FastState,
    e: &[f64],
    q_frozen: &[f64],
    v: f64,
    cfg: &ValidatedConfig,
    battery: bool,
) -> Result<ConicProblem, SocpError> {
    let (p_b_min, p_b_max) = if battery {
        (cfg.p_b_min, cfg.p_b_max)
    } else {
        (0.0, 0.0)
    };
    let layout = VarLayout::new(cfg.bs, cfg.users, cfg.antennas);
    if e.len() != cfg.bs {
        return Err(SocpError::DimensionMismatch {
            what: "plan length",
            expected: cfg.bs,
            got: e.len(),
        });
    }
    if q_frozen.len() != cfg.bs {
        return Err(SocpError::DimensionMismatch {
            what: "queue length",
            expected: cfg.bs,
            got: q_frozen.len(),
        });
    }
    if fast.h.rows() != layout.mi() || fast.h.users() != cfg.users {
        return Err(SocpError::DimensionMismatch {
            what: "channel matrix rows",
            expected: layout.mi() * cfg.users,
            got: fast.h.rows() * fast.h.users(),
        });
    }
    for k in 0..cfg.users {
        if fast.h.col(k).iter().all(|z| z.norm_sqr() == 0.0) {
            return Err(SocpError::DegenerateChannel { user: k });
        }
    }

    let t = cfg.slots_per_interval as f64;
    let e_over_t: Vec<f64> = e.iter().map(|&ei| ei / t).collect();
    let (alpha, beta) = (fast.alpha_rt, fast.beta_rt);
    let mi = layout.mi();

    let mut a = CooMatrix::new(layout.n);
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut row = 0usize;

    // Phase fixing: Im{h_k^H w_k} = 0.
    for k in 0..cfg.users {
        let hk = fast.h.col(k);
        for an in 0..mi {
            a.push(row, layout.w_re(k, an), -hk[an].im);
            a.push(row, layout.w_im(k, an), hk[an].re);
        }
        b.push(0.0);
        row += 1;
    }
    if !battery {
        for i in 0..cfg.bs {
            a.push(row, layout.pb_off + i, 1.0);
            b.push(0.0);
            row += 1;
        }
    }
    cones.push(SupportedConeT::ZeroConeT(
        cfg.users + if battery { 0 } else { cfg.bs },
    ));

    // Cost epigraph pair: s_i >= price * (P_c + p_i + P_b_i - E_i/T).
    for i in 0..cfg.bs {
        for price in [alpha, beta] {
            a.push(row, layout.p_off + i, price);
            a.push(row, layout.pb_off + i, price);
            a.push(row, layout.s_off + i, -1.0);
            b.push(price * (e_over_t[i] - cfg.p_c));
            row += 1;
        }
    }
    // Battery action box (absent when the battery is pinned by equality).
    if battery {
        for i in 0..cfg.bs {
            a.push(row, layout.pb_off + i, 1.0);
            b.push(p_b_max);
            row += 1;
            a.push(row, layout.pb_off + i, -1.0);
            b.push(-p_b_min);
            row += 1;
        }
    }
    // Consumption cap through the power epigraph: p_i <= P_g_max - P_c.
    for i in 0..cfg.bs {
        a.push(row, layout.p_off + i, 1.0);
        b.push(cfg.p_g_max - cfg.p_c);
        row += 1;
    }
    cones.push(SupportedConeT::NonnegativeConeT(
        if battery { 5 * cfg.bs } else { 3 * cfg.bs },
    ));

    // SINR cones: || (h_k^H w_l)_{l != k}, sigma_k || <= Re{h_k^H w_k}/sqrt(gamma_k).
    for k in 0..cfg.users {
        let hk = fast.h.col(k);
        let gain = 1.0 / cfg.gamma[k].sqrt();
        for an in 0..mi {
            a.push(row, layout.w_re(k, an), -gain * hk[an].re);
            a.push(row, layout.w_im(k, an), -gain * hk[an].im);
        }
        b.push(0.0);
        row += 1;
        for l in 0..cfg.users {
            if l == k {
                continue;
            }
            for an in 0..mi {
                a.push(row, layout.w_re(l, an), -hk[an].re);
                a.push(row, layout.w_im(l, an), -hk[an].im);
            }
            b.push(0.0);
            row += 1;
            for an in 0..mi {
                a.push(row, layout.w_re(l, an), hk[an].im);
                a.push(row, layout.w_im(l, an), -hk[an].re);
            }
            b.push(0.0);
            row += 1;
        }
        b.push(cfg.sigma2[k].sqrt());
        row += 1;
        cones.push(SupportedConeT::SecondOrderConeT(2 * (cfg.users - 1) + 2));
    }

    // Rotated power epigraph as a plain cone:
    // || [w block of BS i; (p_i - 1)/2] || <= (p_i + 1)/2.
    for i in 0..cfg.bs {
        a.push(row, layout.p_off + i, -0.5);
        b.push(0.5);
        row += 1;
        for k in 0..cfg.users {
            for an in (i * cfg.antennas)..((i + 1) * cfg.antennas) {
                a.push(row, layout.w_re(k, an), -1.0);
                b.push(0.0);
                row += 1;
                a.push(row, layout.w_im(k, an), -1.0);
                b.push(0.0);
                row += 1;
            }
        }
        a.push(row, layout.p_off + i, -0.5);
        b.push(-0.5);
        row += 1;
        cones.push(SupportedConeT::SecondOrderConeT(
            2 * cfg.antennas * cfg.users + 2,
        ));
    }

    a.m = row;

    let mut q = vec![0.0; layout.n];
    for i in 0..cfg.bs {
        q[layout.pb_off + i] = q_frozen[i];
        q[layout.s_off + i] = v;
    }

    Ok(ConicProblem {
        layout,
        a: a.to_csc(),
        b,
        q,
        cones,
        fast: fast.clone(),
        e_over_t,
        q_frozen: q_frozen.to_vec(),
        v,
        p_c: cfg.p_c,
        p_g_max: cfg.p_g_max,
        p_b_min,
        p_b_max,
        battery,
        gamma: cfg.gamma.clone(),
        sigma2: cfg.sigma2.clone(),
    })
}

impl ConicProblem {
    /// Plain-text dump of the problem data for cross-checking with external
    /// solvers. Format: a header with dimensions, the cone list, then `q`,
    /// `b` and the `A` triplets (`col row value`), one entry per line.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "# per-slot conic problem: min q'x  s.t.  Ax + s = b, s in K").unwrap();
        writeln!(out, "vars {} rows {}", self.layout.n, self.b.len()).unwrap();
        let mut cones = String::new();
        for c in &self.cones {
            match c {
                SupportedConeT::ZeroConeT(d) => write!(cones, "zero:{d} ").unwrap(),
                SupportedConeT::NonnegativeConeT(d) => write!(cones, "nonneg:{d} ").unwrap(),
                SupportedConeT::SecondOrderConeT(d) => write!(cones, "soc:{d} ").unwrap(),
                _ => write!(cones, "other ").unwrap(),
            }
        }
        writeln!(out, "cones {}", cones.trim_end()).unwrap();
        for (idx, val) in self.q.iter().enumerate() {
            if *val != 0.0 {
                writeln!(out, "q {idx} {val:.17e}").unwrap();
            }
        }
        for (idx, val) in self.b.iter().enumerate() {
            writeln!(out, "b {idx} {val:.17e}").unwrap();
        }
        for col in 0..self.layout.n {
            for p in self.a.colptr[col]..self.a.colptr[col + 1] {
                writeln!(out, "A {col} {} {:.17e}", self.a.rowval[p], self.a.nzval[p]).unwrap();
            }
        }
        out
    }

    fn shape_key(&self) -> (usize, usize, usize, bool) {
        (
            self.layout.bs,
            self.layout.users,
            self.layout.antennas,
            self.battery,
        )
    }
}

fn settings(attempt: u32) -> DefaultSettings<f64> {
    let mut s = DefaultSettings {
        verbose: false,
        max_iter: 200,
        tol_gap_abs: 1e-9,
        tol_gap_rel: 1e-9,
        tol_feas: 1e-9,
        equilibrate_enable: attempt > 0,
        presolve_enable: false,
        input_sparse_dropzeros: false,
        ..DefaultSettings::default()
    };
    if attempt >= 2 {
        // Degenerate instances can stall just short of the feasibility
        // target; heavier regularization usually unsticks them.
        s.max_iter = 400;
        s.static_regularization_constant = 1e-7;
        s.iterative_refinement_abstol = 1e-14;
        s.iterative_refinement_reltol = 1e-14;
    }
    s
}

/// Reusable solve engine. Consecutive problems of the same shape reuse the
/// underlying solver's symbolic factorization through data updates.
pub struct SocpEngine {
    cached: Option<((usize, usize, usize, bool), DefaultSolver<f64>)>,
}

impl Default for SocpEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl SocpEngine {
    pub fn new() -> Self {
        SocpEngine { cached: None }
    }

    fn run(&mut self, prob: &ConicProblem) -> (SolverStatus, Vec<f64>, f64, SolveReport) {
        let key = prob.shape_key();
        let p = CscMatrix::<f64>::zeros((prob.layout.n, prob.layout.n));
        let reusable = matches!(&self.cached, Some((k, _)) if *k == key);
        if !reusable {
            self.cached = None;
        }
        let empty_p: Vec<f64> = vec![];
        let mut updated = false;
        if let Some((_, solver)) = self.cached.as_mut() {
            updated = solver
                .update_data(&empty_p, &prob.q, &prob.a, &prob.b)
                .is_ok();
        }
        if !updated {
            let solver =
                DefaultSolver::new(&p, &prob.q, &prob.a, &prob.b, &prob.cones, settings(0))
                    .expect("well-formed conic data");
            self.cached = Some((key, solver));
        }
        let solver = &mut self.cached.as_mut().unwrap().1;
        solver.solve();
        let status = solver.solution.status;
        let first_report = report_from(solver, prob);
        if acceptable_exit(status, &first_report) {
            let solver = &self.cached.as_ref().unwrap().1;
            return (
                status,
                solver.solution.x.clone(),
                solver.solution.obj_val,
                first_report,
            );
        }

        // The reused path stalled: retry fresh with equilibration, then once
        // more with heavier regularization.
        self.cached = None;
        let mut last = None;
        for attempt in 1..=2u32 {
            let mut fresh = DefaultSolver::new(
                &p,
                &prob.q,
                &prob.a,
                &prob.b,
                &prob.cones,
                settings(attempt),
            )
            .expect("well-formed conic data");
            fresh.solve();
            let status = fresh.solution.status;
            let report = report_from(&fresh, prob);
            let done = acceptable_exit(status, &report);
            last = Some((status, fresh.solution.x.clone(), fresh.solution.obj_val, report));
            if done {
                break;
            }
        }
        last.unwrap()
    }

    /// Solve a per-slot problem and recover the decision.
    pub fn solve(
        &mut self,
        prob: &ConicProblem,
    ) -> Result<(RealtimeDecision, SolveReport), SocpError> {
        let (status, x, obj, mut report) = self.run(prob);
        // Reduced-accuracy exits still count as optimal when the gap
        // certificate holds and the residual stall is small enough for the
        // physical checks below to vouch for the decision.
        let certified = report.duality_gap.min(report.duality_gap_rel) <= CERT_TOL
            && report.primal_residual <= RELAXED_RES_TOL
            && report.dual_residual <= RELAXED_RES_TOL;
        match status {
            SolverStatus::Solved => {}
            SolverStatus::AlmostSolved if certified => {}
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                report.status = SolveStatus::Infeasible;
                return Err(SocpError::Infeasible { report });
            }
            SolverStatus::MaxIterations => {
                report.status = SolveStatus::MaxIterations;
                return Err(SocpError::MaxIterations { report });
            }
            other => {
                report.status = SolveStatus::NumericalTrouble;
                return Err(SocpError::Numerical {
                    detail: format!("{other:?}"),
                    report,
                });
            }
        }
        report.status = SolveStatus::Optimal;
        report.objective = obj;

        let layout = &prob.layout;
        let w = Beamformers::from_interleaved(layout.mi(), layout.users, &x[..layout.nw]);
        let p_b_solver: Vec<f64> = (0..layout.bs).map(|i| x[layout.pb_off + i]).collect();
        for &raw in &p_b_solver {
            if raw < prob.p_b_min - RELAXED_RES_TOL || raw > prob.p_b_max + RELAXED_RES_TOL {
                return Err(SocpError::Numerical {
                    detail: format!("battery action {raw} far outside its box"),
                    report,
                });
            }
        }
        let p_b: Vec<f64> = p_b_solver
            .iter()
            .map(|&v| {
                let snapped = if (v - prob.p_b_max).abs() <= PB_SNAP_TOL {
                    prob.p_b_max
                } else if (v - prob.p_b_min).abs() <= PB_SNAP_TOL {
                    prob.p_b_min
                } else {
                    v
                };
                snapped.clamp(prob.p_b_min, prob.p_b_max)
            })
            .collect();

        let mut epi_slack = 0.0f64;
        let mut p = Vec::with_capacity(layout.bs);
        let mut objective_value = 0.0;
        for i in 0..layout.bs {
            let x_i = w.bs_power(i, layout.antennas);
            if prob.p_c + x_i > prob.p_g_max + 1e-6 {
                return Err(SocpError::Numerical {
                    detail: format!("consumption cap violated at BS {i}: {}", prob.p_c + x_i),
                    report,
                });
            }
            epi_slack = epi_slack.max((x[layout.p_off + i] - x_i).abs());
            let p_i = prob.p_c + x_i + p_b[i] - prob.e_over_t[i];
            objective_value +=
                prob.v * cost_rt(p_i, prob.fast.alpha_rt, prob.fast.beta_rt)
                    + prob.q_frozen[i] * p_b[i];
            p.push(p_i);
        }
        report.power_epi_slack = epi_slack;

        for k in 0..layout.users {
            let achieved = sinr(&prob.fast.h, &w, &prob.sigma2, k);
            if achieved < prob.gamma[k] - SINR_SLACK {
                return Err(SocpError::QosViolation {
                    user: k,
                    achieved,
                    target: prob.gamma[k],
                });
            }
        }

        Ok((
            RealtimeDecision {
                w,
                p_b,
                p_b_solver,
                p,
                objective_value,
                solver: report.clone(),
            },
            report,
        ))
    }
}

fn acceptable_exit(status: SolverStatus, report: &SolveReport) -> bool {
    matches!(
        status,
        SolverStatus::Solved | SolverStatus::PrimalInfeasible | SolverStatus::DualInfeasible
    ) || (matches!(status, SolverStatus::AlmostSolved)
        && report.duality_gap.min(report.duality_gap_rel) <= CERT_TOL
        && report.primal_residual <= CERT_TOL
        && report.dual_residual <= CERT_TOL)
}

fn report_from(solver: &DefaultSolver<f64>, _prob: &ConicProblem) -> SolveReport {
    SolveReport {
        status: SolveStatus::NumericalTrouble,
        objective: solver.solution.obj_val,
        primal_residual: solver.info.res_primal,
        dual_residual: solver.info.res_dual,
        duality_gap: solver.info.gap_abs,
        duality_gap_rel: solver.info.gap_rel,
        iterations: solver.info.iterations,
        power_epi_slack: 0.0,
    }
}

/// One-shot convenience wrapper around [`SocpEngine::solve`].
pub fn solve_realtime(prob: &ConicProblem) -> Result<(RealtimeDecision, SolveReport), SocpError> {
    SocpEngine::new().solve(prob)
}

/// Inner solve for the planner: the per-slot problem at the current plan
/// iterate, plus the consumption level the plan subgradient needs.
#[derive(Debug, Clone)]
pub struct PlanningSample {
    /// `P_c + x_i(w) + P_b_i` at the inner optimum, per BS.
    pub delta: Vec<f64>,
    pub decision: RealtimeDecision,
    /// Inner objective value (trading cost plus queue term).
    pub inner_value: f64,
}

/// Solve the planning inner problem for one sampled fast state with the plan
/// fixed at `e_iterate`.
pub fn solve_planning_sample(
    fast: &FastState,
    e_iterate: &[f64],
    q_frozen: &[f64],
    v: f64,
    cfg: &ValidatedConfig,
    engine: &mut SocpEngine,
) -> Result<PlanningSample, SocpError> {
    let prob = build_realtime_problem(fast, e_iterate, q_frozen, v, cfg)?;
    let (decision, _) = engine.solve(&prob)?;
    let delta = (0..cfg.bs)
        .map(|i| cfg.p_c + decision.w.bs_power(i, cfg.antennas) + decision.p_b[i])
        .collect();
    Ok(PlanningSample {
        delta,
        inner_value: decision.objective_value,
        decision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_config, SystemConfig};
    use crate::sampling::sample_fast_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg_shape(bs: usize, users: usize, antennas: usize) -> ValidatedConfig {
        validate_config(SystemConfig {
            bs,
            users,
            antennas,
            gamma: vec![1.0; users],
            sigma2: vec![1.0; users],
            ..SystemConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn smallest_instance_counts() {
        // I = K = M = 1: five real variables, one SINR cone of dimension 2.
        let cfg = cfg_shape(1, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fast = sample_fast_state(&mut rng, &cfg);
        let prob = build_realtime_problem(&fast, &[10.0], &[-5.0], 1.0, &cfg).unwrap();
        assert_eq!(prob.layout.n, 5);
        let soc_dims: Vec<usize> = prob
            .cones
            .iter()
            .filter_map(|c| match c {
                SupportedConeT::SecondOrderConeT(d) => Some(*d),
                _ => None,
            })
            .collect();
        assert_eq!(soc_dims[0], 2);
        // Phase equality present.
        assert!(matches!(prob.cones[0], SupportedConeT::ZeroConeT(1)));
    }

    #[test]
    fn beamformer_block_width_matches_layout() {
        let layout = VarLayout::new(2, 3, 2);
        assert_eq!(layout.nw, 24);
        assert_eq!(layout.n, 30);
    }

    #[test]
    fn unreachable_target_reports_infeasible() {
        let cfg = validate_config(SystemConfig {
            gamma: vec![1e9; 3],
            ..SystemConfig::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fast = sample_fast_state(&mut rng, &cfg);
        let prob =
            build_realtime_problem(&fast, &[50.0, 50.0], &[-60.0, -60.0], 10.0, &cfg).unwrap();
        match solve_realtime(&prob) {
            Err(SocpError::Infeasible { .. }) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn zero_channel_is_a_build_error() {
        let cfg = cfg_shape(1, 1, 1);
        let fast = FastState {
            alpha_rt: 2.0,
            beta_rt: 0.6,
            h: crate::state::ChannelMatrix::from_interleaved(1, 1, &[0.0, 0.0]),
        };
        assert!(matches!(
            build_realtime_problem(&fast, &[10.0], &[0.0], 1.0, &cfg),
            Err(SocpError::DegenerateChannel { user: 0 })
        ));
    }

    #[test]
    fn dump_contains_dimensions_and_cones() {
        let cfg = cfg_shape(1, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fast = sample_fast_state(&mut rng, &cfg);
        let prob = build_realtime_problem(&fast, &[10.0], &[-5.0], 1.0, &cfg).unwrap();
        let dump = prob.dump();
        assert!(dump.contains("vars 5"));
        assert!(dump.contains("zero:1"));
        assert!(dump.contains("soc:2"));
    }
}
