//! The two-scale control loop.
//!
//! Once per coarse interval the controller freezes the virtual queues
//! `Q_i = C_i + Gamma`, plans the interval's energy, then runs `T` per-slot
//! conic solves against the frozen queues, stepping the batteries and
//! re-deriving the live queues after each slot. The `(Gamma, V)` pair comes
//! from a window that keeps every state of charge inside its physical box on
//! every sample path; outside two SoC thresholds the per-slot optimum pins
//! the battery action to its bounds, which is what makes the window
//! argument work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{geometric_sum, QueueConvention, ValidatedConfig};
use crate::cost::{battery_step, sinr, slot_cost};
use crate::planner::{plan, HistoryBuffer, PlanError, SubgradientSchedule};
use crate::sampling::sample_fast_state;
use crate::socp::{build_realtime_problem, SocpEngine, SocpError};
use crate::state::{BatteryState, FastState, PlanDecision, SlowState};

/// Numerical guard on the SoC box assertions; far below any physical scale.
pub const SOC_EPS: f64 = 1e-9;

/// Admissible `(Gamma, V)` region for the queue parameters.
#[derive(Debug, Clone, Copy)]
pub struct ParameterWindow {
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Per-offset formula bound on V (minimum over in-interval offsets).
    pub v_max: f64,
    /// Largest V with a nonempty `[gamma_min, gamma_max]`; never exceeds
    /// `v_max`, and is strictly smaller when different offsets bind the two
    /// ends of the window.
    pub v_window: f64,
    pub alpha_bar: f64,
    pub beta_under: f64,
}

#[derive(Debug, Error)]
pub enum WindowError {
    #[error(
        "queue parameter window is empty at V = {v} (gamma_min {gamma_min} > gamma_max \
         {gamma_max}): V exceeds the admissible maximum {v_window}"
    )]
    Empty {
        v: f64,
        gamma_min: f64,
        gamma_max: f64,
        v_window: f64,
    },
    #[error("no positive V admits a nonempty window (admissible maximum {v_window})")]
    NoAdmissibleV { v_window: f64 },
    #[error("V override {v} is not positive")]
    NonpositiveV { v: f64 },
    #[error("Gamma override {gamma} lies outside [{gamma_min}, {gamma_max}]")]
    GammaOutsideWindow {
        gamma: f64,
        gamma_min: f64,
        gamma_max: f64,
    },
}

fn window_ends(cfg: &ValidatedConfig) -> (f64, f64) {
    let t = cfg.slots_per_interval;
    let mut a_max = f64::NEG_INFINITY;
    let mut b_min = f64::INFINITY;
    for tau in 1..=t {
        let s = geometric_sum(cfg.eta, tau);
        let scale = cfg.eta.powi(tau as i32);
        a_max = a_max.max((s * cfg.p_b_max - cfg.c_max) / scale);
        b_min = b_min.min((s * cfg.p_b_min - cfg.c_min) / scale);
    }
    (a_max, b_min)
}

/// Largest V for which the Gamma window is nonempty.
pub fn max_admissible_v(cfg: &ValidatedConfig, alpha_bar: f64, beta_under: f64) -> f64 {
    let (a_max, b_min) = window_ends(cfg);
    (b_min - a_max) / (alpha_bar - beta_under)
}

/// Compute the `(Gamma, V)` window at a given V from the a-priori real-time
/// price bounds.
pub fn parameter_window(
    cfg: &ValidatedConfig,
    alpha_bar: f64,
    beta_under: f64,
    v: f64,
) -> Result<ParameterWindow, WindowError> {
    let t = cfg.slots_per_interval;
    let (a_max, b_min) = window_ends(cfg);
    let gamma_min = a_max - v * beta_under;
    let gamma_max = b_min - v * alpha_bar;
    let v_max = (1..=t)
        .map(|tau| {
            let s = geometric_sum(cfg.eta, tau);
            (cfg.c_max - cfg.c_min - s * (cfg.p_b_max - cfg.p_b_min))
                / (cfg.eta.powi(tau as i32) * (alpha_bar - beta_under))
        })
        .fold(f64::INFINITY, f64::min);
    let v_window = (b_min - a_max) / (alpha_bar - beta_under);
    if gamma_min > gamma_max + 1e-9 {
        return Err(WindowError::Empty {
            v,
            gamma_min,
            gamma_max,
            v_window,
        });
    }
    Ok(ParameterWindow {
        gamma_min,
        gamma_max: gamma_max.max(gamma_min),
        v_max,
        v_window,
        alpha_bar,
        beta_under,
    })
}

/// SoC regions of the per-slot battery optimum at the interval start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SocRegion {
    /// Queue so negative that charging at the full rate is optimal for any
    /// realizable prices.
    ForceCharge,
    /// Queue so positive that discharging at the full rate is optimal.
    ForceDischarge,
    /// Neither threshold crossed; the solver decides.
    Interior,
}

/// Classify an interval-start state of charge against the two thresholds.
/// Both thresholds belong to the interior (the forced regions are open).
pub fn classify_soc(c: f64, v: f64, gamma: f64, alpha_bar: f64, beta_under: f64) -> SocRegion {
    if c > -v * beta_under - gamma {
        SocRegion::ForceDischarge
    } else if c < -v * alpha_bar - gamma {
        SocRegion::ForceCharge
    } else {
        SocRegion::Interior
    }
}

/// Resolve `(Gamma, V)` from the configuration: overrides are validated
/// against the window; defaults are the largest admissible V and the window
/// midpoint.
pub fn select_parameters(cfg: &ValidatedConfig) -> Result<(f64, f64, ParameterWindow), WindowError> {
    let alpha_bar = cfg.alpha_bar();
    let beta_under = cfg.beta_under();
    let v = match cfg.lyapunov_v {
        Some(v) if v <= 0.0 => return Err(WindowError::NonpositiveV { v }),
        Some(v) => v,
        None => {
            let v_window = max_admissible_v(cfg, alpha_bar, beta_under);
            let v_formula = parameter_window(cfg, alpha_bar, beta_under, v_window.min(1.0))
                .map(|w| w.v_max)
                .unwrap_or(v_window);
            let v = v_window.min(v_formula);
            if v <= 0.0 {
                return Err(WindowError::NoAdmissibleV { v_window });
            }
            v
        }
    };
    let window = parameter_window(cfg, alpha_bar, beta_under, v)?;
    let gamma = match cfg.lyapunov_gamma {
        Some(g) => {
            if g < window.gamma_min - 1e-9 || g > window.gamma_max + 1e-9 {
                return Err(WindowError::GammaOutsideWindow {
                    gamma: g,
                    gamma_min: window.gamma_min,
                    gamma_max: window.gamma_max,
                });
            }
            g
        }
        None => 0.5 * (window.gamma_min + window.gamma_max),
    };
    Ok((gamma, v, window))
}

/// Per-slot outcome retained for records and checks.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    /// Global slot index.
    pub t: usize,
    /// Interval index and offset within it.
    pub interval: usize,
    pub tau: usize,
    /// Plan share per BS, `E_i / T`.
    pub e_share: Vec<f64>,
    /// Real-time trade per BS.
    pub p: Vec<f64>,
    /// Battery action per BS (snapped) and the raw solver value.
    pub p_b: Vec<f64>,
    pub p_b_solver: Vec<f64>,
    /// State of charge after the battery step.
    pub c: Vec<f64>,
    /// Live queue after the update.
    pub q: Vec<f64>,
    pub alpha_lt: f64,
    pub beta_lt: f64,
    pub alpha_rt: f64,
    pub beta_rt: f64,
    pub a_res: Vec<f64>,
    /// Achieved SINR per user.
    pub sinr: Vec<f64>,
    pub solver_iterations: u32,
    /// Per-BS transaction cost of the slot.
    pub phi: Vec<f64>,
}

/// Per-interval outcome: the plan, the classification at entry and the slots.
#[derive(Debug, Clone)]
pub struct IntervalOutcome {
    pub interval: usize,
    pub plan: PlanDecision,
    pub c_start: Vec<f64>,
    pub q_frozen: Vec<f64>,
    pub regions: Vec<SocRegion>,
    pub slots: Vec<SlotOutcome>,
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Solve(#[from] SocpError),
    #[error("interval must supply exactly {expected} fast states, got {got}")]
    WrongSlotCount { expected: usize, got: usize },
    #[error("state of charge left its box at BS {bs}: {c} not in [{c_min}, {c_max}]")]
    SocViolation {
        bs: usize,
        c: f64,
        c_min: f64,
        c_max: f64,
    },
}

/// What the policy does at each scale; the comparison baselines are obtained
/// by switching parts off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyOptions {
    /// Plan by stochastic subgradient; otherwise the plan is identically 0.
    pub plan_ahead: bool,
    /// The stations harvest renewables; switching this off zeroes the
    /// arrivals everywhere (planning and accounting alike).
    pub res: bool,
    /// Keep the batteries; otherwise battery actions are pinned to zero and
    /// the queue machinery is bypassed. The planner still runs with the
    /// shared drift-penalty weight so the policies stay comparable.
    pub battery: bool,
}

impl PolicyOptions {
    pub fn two_scale() -> Self {
        PolicyOptions {
            plan_ahead: true,
            res: true,
            battery: true,
        }
    }

    /// One-scale policy: no ahead-of-time planning, batteries retained,
    /// renewables sold on the ahead market as they arrive.
    pub fn one_scale() -> Self {
        PolicyOptions {
            plan_ahead: false,
            res: true,
            battery: true,
        }
    }

    /// Two-scale planning without renewables or storage.
    pub fn no_res_no_storage() -> Self {
        PolicyOptions {
            plan_ahead: true,
            res: false,
            battery: false,
        }
    }
}

/// The per-interval / per-slot control loop over externally supplied
/// realizations.
pub struct TwoScaleController {
    cfg: ValidatedConfig,
    pub options: PolicyOptions,
    pub gamma: f64,
    pub v: f64,
    pub window: Option<ParameterWindow>,
    pub battery: BatteryState,
    pub history: HistoryBuffer,
    engine: SocpEngine,
    pub interval_index: usize,
    pub cumulative_cost: f64,
    base_seed: u64,
}

impl TwoScaleController {
    /// Build a controller; `seed` drives the planner's sample draws and the
    /// synthetic cold-start history.
    pub fn new(
        cfg: &ValidatedConfig,
        seed: u64,
        options: PolicyOptions,
    ) -> Result<Self, ControllerError> {
        let (gamma, v, window) = if options.battery {
            let (g, v, w) = select_parameters(cfg)?;
            (g, v, Some(w))
        } else {
            // Battery-free policies keep the shared drift-penalty weight so
            // their planner runs the same iteration; the queue term itself
            // is zero. Fall back to 1 when no window exists at all.
            let v = select_parameters(cfg).map(|(_, v, _)| v).unwrap_or(1.0);
            (0.0, v, None)
        };
        let mut history =
            HistoryBuffer::for_window(cfg.planner.history_intervals, cfg.slots_per_interval);
        let cold = cfg.cold_start_samples();
        if cold > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC01D_57A7);
            for _ in 0..cold {
                history.push(sample_fast_state(&mut rng, cfg));
            }
        }
        Ok(TwoScaleController {
            cfg: cfg.clone(),
            options,
            gamma,
            v,
            window,
            battery: BatteryState::new(vec![cfg.c0; cfg.bs], gamma),
            history,
            engine: SocpEngine::new(),
            interval_index: 0,
            cumulative_cost: 0.0,
            base_seed: seed,
        })
    }

    pub fn config(&self) -> &ValidatedConfig {
        &self.cfg
    }

    /// Classification of each battery at the current (interval-start) SoC.
    pub fn classify(&self) -> Vec<SocRegion> {
        let w = match &self.window {
            Some(w) => w,
            None => return vec![SocRegion::Interior; self.cfg.bs],
        };
        self.battery
            .c
            .iter()
            .map(|&c| classify_soc(c, self.v, self.gamma, w.alpha_bar, w.beta_under))
            .collect()
    }

    /// Run one coarse interval against the supplied realizations.
    pub fn step_interval(
        &mut self,
        slow: &SlowState,
        fast_slots: &[FastState],
    ) -> Result<IntervalOutcome, ControllerError> {
        let t = self.cfg.slots_per_interval as usize;
        if fast_slots.len() != t {
            return Err(ControllerError::WrongSlotCount {
                expected: t,
                got: fast_slots.len(),
            });
        }
        let cfg = self.cfg.clone();
        let slow = &if self.options.res {
            slow.clone()
        } else {
            SlowState {
                a_res: vec![0.0; cfg.bs],
                ..slow.clone()
            }
        };
        let c_start = self.battery.c.clone();
        let q_frozen: Vec<f64> = if self.options.battery {
            self.battery.queues()
        } else {
            vec![0.0; cfg.bs]
        };
        let regions = self.classify();

        let plan_decision = if self.options.plan_ahead {
            let sched = SubgradientSchedule::from_config(&cfg);
            // Draws are pre-assigned per interval so concurrent replays of
            // the same seed reproduce byte-identical traces.
            let mut rng = ChaCha8Rng::seed_from_u64(
                self.base_seed ^ (self.interval_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            plan(
                &self.history,
                slow,
                &q_frozen,
                self.v,
                &cfg,
                &sched,
                &mut rng,
                &mut self.engine,
            )?
        } else {
            PlanDecision {
                e: vec![0.0; cfg.bs],
                iterations_used: 0,
                final_step: 0.0,
            }
        };

        let mut slots = Vec::with_capacity(t);
        for (tau, fast) in fast_slots.iter().enumerate() {
            let q_used: Vec<f64> = if !self.options.battery {
                vec![0.0; cfg.bs]
            } else {
                match cfg.queue_convention {
                    QueueConvention::Frozen => q_frozen.clone(),
                    QueueConvention::Live => self.battery.queues(),
                }
            };
            let prob = build_realtime_problem_for(
                fast,
                &plan_decision.e,
                &q_used,
                self.v,
                &cfg,
                self.options.battery,
            )?;
            let (decision, report) = self.engine.solve(&prob)?;

            for i in 0..cfg.bs {
                let next = battery_step(self.battery.c[i], decision.p_b[i], cfg.eta);
                if next < cfg.c_min - SOC_EPS || next > cfg.c_max + SOC_EPS {
                    return Err(ControllerError::SocViolation {
                        bs: i,
                        c: next,
                        c_min: cfg.c_min,
                        c_max: cfg.c_max,
                    });
                }
                self.battery.c[i] = next;
            }

            let phi: Vec<f64> = (0..cfg.bs)
                .map(|i| {
                    slot_cost(
                        plan_decision.e[i],
                        slow.a_res[i],
                        decision.p[i],
                        slow.alpha_lt,
                        slow.beta_lt,
                        fast.alpha_rt,
                        fast.beta_rt,
                        cfg.slots_per_interval,
                    )
                })
                .collect();
            self.cumulative_cost += phi.iter().sum::<f64>();

            let sinrs = (0..cfg.users)
                .map(|k| sinr(&fast.h, &decision.w, &cfg.sigma2, k))
                .collect();
            slots.push(SlotOutcome {
                t: self.interval_index * t + tau,
                interval: self.interval_index,
                tau,
                e_share: plan_decision.e.iter().map(|&e| e / t as f64).collect(),
                p: decision.p.clone(),
                p_b: decision.p_b.clone(),
                p_b_solver: decision.p_b_solver.clone(),
                c: self.battery.c.clone(),
                q: self.battery.queues(),
                alpha_lt: slow.alpha_lt,
                beta_lt: slow.beta_lt,
                alpha_rt: fast.alpha_rt,
                beta_rt: fast.beta_rt,
                a_res: slow.a_res.clone(),
                sinr: sinrs,
                solver_iterations: report.iterations,
                phi,
            });
        }

        // Only now do these slots become "past" for future planning.
        for fast in fast_slots {
            self.history.push(fast.clone());
        }

        let outcome = IntervalOutcome {
            interval: self.interval_index,
            plan: plan_decision,
            c_start,
            q_frozen,
            regions,
            slots,
        };
        self.interval_index += 1;
        Ok(outcome)
    }
}

/// Per-slot problem with the battery optionally pinned to zero.
fn build_realtime_problem_for(
    fast: &FastState,
    e: &[f64],
    q: &[f64],
    v: f64,
    cfg: &ValidatedConfig,
    battery: bool,
) -> Result<crate::socp::ConicProblem, SocpError> {
    if battery {
        build_realtime_problem(fast, e, q, v, cfg)
    } else {
        crate::socp::build_realtime_problem_no_battery(fast, e, v, cfg)
    }
}
