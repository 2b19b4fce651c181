//! Experiment harness: seeded Monte Carlo execution of the policies,
//! plot-ready CSV emission and summary statistics.
//!
//! Outputs per run: one CSV of per-slot records per seed, a JSON sidecar
//! with the fully resolved configuration (including the derived queue
//! parameters), and an aggregate JSON summary. Identical spec and seed give
//! byte-identical files.

pub mod scenarios;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use gridbeam::baselines::{
    offline_block_lower_bound, run_alg1, run_alg2, run_tsoc, solve_offline, InitialSoc,
    OfflineError, PolicyRun, SamplePath, OFFLINE_SLOT_CAP,
};
use gridbeam::config::{validate_config, ConfigError, SystemConfig, ValidatedConfig};
use gridbeam::controller::{select_parameters, ControllerError, SlotOutcome};
use gridbeam::cost::{cost_lt, cost_rt};

/// Which policy a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Two-scale online control.
    Tsoc,
    /// One-scale baseline (no ahead-of-time planning).
    Alg1,
    /// Two-scale baseline without renewables or storage.
    Alg2,
    /// Clairvoyant offline benchmark.
    Offline,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Tsoc => "tsoc",
            Policy::Alg1 => "alg1",
            Policy::Alg2 => "alg2",
            Policy::Offline => "offline",
        }
    }
}

/// A complete description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: String,
    pub config: SystemConfig,
    pub policy: Policy,
    /// Horizon in slots (a whole number of intervals).
    pub slots: usize,
    pub seeds: Vec<u64>,
    /// Output directory; `None` keeps everything in memory.
    pub out_dir: Option<PathBuf>,
    /// Explicit opt-in to the blockwise offline lower bound for horizons
    /// beyond the stacked-program cap.
    pub offline_block_slots: Option<usize>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration rejected: {0}")]
    Config(#[from] ConfigError),
    #[error("queue parameters: {0}")]
    Window(#[from] gridbeam::controller::WindowError),
    #[error("horizon {slots} is not a whole number of intervals (T = {t})")]
    RaggedHorizon { slots: usize, t: u32 },
    #[error(
        "offline horizon {slots} exceeds the {cap}-slot stacked-program cap; \
         pass an explicit block length to use the chained lower bound"
    )]
    OfflineCap { slots: usize, cap: usize },
    #[error("seed {seed} failed: {source}")]
    Policy {
        seed: u64,
        #[source]
        source: ControllerError,
    },
    #[error("seed {seed} offline solve failed: {source}")]
    Offline {
        seed: u64,
        #[source]
        source: OfflineError,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config file parse: {0}")]
    Toml(#[from] toml::de::Error),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for solver
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::Window(_)
            | HarnessError::RaggedHorizon { .. }
            | HarnessError::OfflineCap { .. }
            | HarnessError::Toml(_) => 2,
            HarnessError::Policy { .. } | HarnessError::Offline { .. } => 3,
            HarnessError::Io(_) => 1,
        }
    }
}

/// Per-seed result.
#[derive(Debug, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub total_cost: f64,
    pub time_averaged_cost: f64,
    pub n_slots: usize,
    #[serde(skip)]
    pub records: Vec<SlotOutcome>,
}

/// Aggregate over seeds.
#[derive(Debug, Serialize)]
pub struct ExperimentSummary {
    pub scenario: String,
    pub policy: Policy,
    pub slots: usize,
    pub seeds: Vec<u64>,
    pub mean_time_averaged_cost: f64,
    /// Half-width of the 95% normal confidence interval over seed means.
    pub ci95_half_width: f64,
    pub per_seed: Vec<SeedOutcome>,
}

/// Prefix means of a cost series.
pub fn running_average(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (idx, &v) in series.iter().enumerate() {
        acc += v;
        out.push(acc / (idx + 1) as f64);
    }
    out
}

/// One row of the queue-price trace.
#[derive(Debug, Clone, Serialize)]
pub struct QueuePriceRow {
    pub t: usize,
    /// Instantaneous discharging price `-Q_1(t) / V`.
    pub neg_q1_over_v: f64,
    /// Running averages of the real-time prices up to `t`.
    pub avg_alpha_rt: f64,
    pub avg_beta_rt: f64,
}

/// The discharging-price trace of BS 1 against running-average prices.
pub fn queue_price_trace(records: &[SlotOutcome], v: f64) -> Vec<QueuePriceRow> {
    let mut rows = Vec::with_capacity(records.len());
    let mut alpha_acc = 0.0;
    let mut beta_acc = 0.0;
    for (idx, r) in records.iter().enumerate() {
        alpha_acc += r.alpha_rt;
        beta_acc += r.beta_rt;
        rows.push(QueuePriceRow {
            t: r.t,
            neg_q1_over_v: -r.q[0] / v,
            avg_alpha_rt: alpha_acc / (idx + 1) as f64,
            avg_beta_rt: beta_acc / (idx + 1) as f64,
        });
    }
    rows
}

/// Run one policy on one seeded path.
pub fn run_seed(
    cfg: &ValidatedConfig,
    policy: Policy,
    slots: usize,
    seed: u64,
    offline_block_slots: Option<usize>,
) -> Result<SeedOutcome, HarnessError> {
    let path = SamplePath::generate(cfg, seed, slots);
    let (records, total): (Vec<SlotOutcome>, f64) = match policy {
        Policy::Tsoc | Policy::Alg1 | Policy::Alg2 => {
            let run: PolicyRun = match policy {
                Policy::Tsoc => run_tsoc(&path, cfg, seed),
                Policy::Alg1 => run_alg1(&path, cfg, seed),
                Policy::Alg2 => run_alg2(&path, cfg, seed),
                Policy::Offline => unreachable!(),
            }
            .map_err(|source| HarnessError::Policy { seed, source })?;
            let records = run.slots().cloned().collect();
            (records, run.total_cost)
        }
        Policy::Offline => {
            let sol = if slots <= OFFLINE_SLOT_CAP {
                solve_offline(&path, cfg, InitialSoc::Fixed(cfg.c0))
            } else {
                let block = offline_block_slots
                    .ok_or(HarnessError::OfflineCap {
                        slots,
                        cap: OFFLINE_SLOT_CAP,
                    })?
                    .min(OFFLINE_SLOT_CAP);
                offline_block_lower_bound(&path, cfg, block)
            }
            .map_err(|source| HarnessError::Offline { seed, source })?;
            (sol.records, sol.total_cost)
        }
    };
    Ok(SeedOutcome {
        seed,
        total_cost: total,
        time_averaged_cost: total / slots as f64,
        n_slots: slots,
        records,
    })
}

fn format_f64(v: f64) -> String {
    // Shortest round-trip formatting; deterministic for a given binary.
    format!("{v}")
}

/// Serialize per-slot records to CSV. Column order: slot and interval
/// indices, per-BS blocks (plan share, trade, battery action raw and
/// snapped, SoC, queue, cost share, renewables), prices in both markets,
/// per-user SINRs, solver iterations.
pub fn records_to_csv(records: &[SlotOutcome], bs: usize, users: usize) -> String {
    let mut head = vec!["t".to_string(), "n".to_string(), "tau".to_string()];
    for i in 0..bs {
        for col in ["e_share", "p", "p_b", "p_b_solver", "c", "q", "phi", "a_res"] {
            head.push(format!("{col}_{i}"));
        }
    }
    for col in ["alpha_lt", "beta_lt", "alpha_rt", "beta_rt"] {
        head.push(col.to_string());
    }
    for k in 0..users {
        head.push(format!("sinr_{k}"));
    }
    head.push("solver_iterations".to_string());

    let mut out = head.join(",");
    out.push('\n');
    for r in records {
        let mut row: Vec<String> = vec![r.t.to_string(), r.interval.to_string(), r.tau.to_string()];
        for i in 0..bs {
            row.push(format_f64(r.e_share[i]));
            row.push(format_f64(r.p[i]));
            row.push(format_f64(r.p_b[i]));
            row.push(format_f64(r.p_b_solver[i]));
            row.push(format_f64(r.c[i]));
            row.push(format_f64(r.q[i]));
            row.push(format_f64(r.phi[i]));
            row.push(format_f64(r.a_res[i]));
        }
        for v in [r.alpha_lt, r.beta_lt, r.alpha_rt, r.beta_rt] {
            row.push(format_f64(v));
        }
        for k in 0..users {
            row.push(format_f64(r.sinr[k]));
        }
        row.push(r.solver_iterations.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Recompute a record's per-BS cost from its own fields.
pub fn recompute_phi(r: &SlotOutcome, i: usize, t: u32) -> f64 {
    cost_lt(r.e_share[i] * t as f64, r.a_res[i], r.alpha_lt, r.beta_lt) / t as f64
        + cost_rt(r.p[i], r.alpha_rt, r.beta_rt)
}

/// Fully resolved provenance sidecar.
#[derive(Debug, Serialize)]
pub struct ResolvedSidecar<'a> {
    pub scenario: &'a str,
    pub policy: Policy,
    pub slots: usize,
    pub seeds: &'a [u64],
    pub config: &'a SystemConfig,
    pub alpha_bar: f64,
    pub beta_under: f64,
    /// Derived queue parameters, absent for battery-free policies.
    pub lyapunov: Option<ResolvedLyapunov>,
    pub offline_block_slots: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ResolvedLyapunov {
    pub gamma: f64,
    pub v: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub v_max: f64,
    pub v_window: f64,
}

/// Execute every seed of the spec, optionally persisting CSVs and the JSON
/// sidecar, and aggregate the summary.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentSummary, HarnessError> {
    let cfg = validate_config(spec.config.clone())?;
    let t = cfg.slots_per_interval;
    if spec.slots == 0 || spec.slots % t as usize != 0 {
        return Err(HarnessError::RaggedHorizon {
            slots: spec.slots,
            t,
        });
    }
    if spec.policy == Policy::Offline
        && spec.slots > OFFLINE_SLOT_CAP
        && spec.offline_block_slots.is_none()
    {
        return Err(HarnessError::OfflineCap {
            slots: spec.slots,
            cap: OFFLINE_SLOT_CAP,
        });
    }

    let mut per_seed: Vec<SeedOutcome> = spec
        .seeds
        .par_iter()
        .map(|&seed| run_seed(&cfg, spec.policy, spec.slots, seed, spec.offline_block_slots))
        .collect::<Result<Vec<_>, _>>()?;
    per_seed.sort_by_key(|s| s.seed);

    if let Some(dir) = &spec.out_dir {
        fs::create_dir_all(dir)?;
        for seed_outcome in &per_seed {
            let file = dir.join(format!(
                "{}_{}_seed{}.csv",
                spec.scenario,
                spec.policy.name(),
                seed_outcome.seed
            ));
            let mut f = fs::File::create(file)?;
            f.write_all(records_to_csv(&seed_outcome.records, cfg.bs, cfg.users).as_bytes())?;
        }
        let lyapunov = match spec.policy {
            Policy::Alg2 | Policy::Offline => None,
            _ => {
                let (gamma, v, w) = select_parameters(&cfg)?;
                Some(ResolvedLyapunov {
                    gamma,
                    v,
                    gamma_min: w.gamma_min,
                    gamma_max: w.gamma_max,
                    v_max: w.v_max,
                    v_window: w.v_window,
                })
            }
        };
        let sidecar = ResolvedSidecar {
            scenario: &spec.scenario,
            policy: spec.policy,
            slots: spec.slots,
            seeds: &spec.seeds,
            config: cfg.inner(),
            alpha_bar: cfg.alpha_bar(),
            beta_under: cfg.beta_under(),
            lyapunov,
            offline_block_slots: spec.offline_block_slots,
        };
        let file = dir.join(format!("{}_{}_config.json", spec.scenario, spec.policy.name()));
        fs::write(file, serde_json::to_string_pretty(&sidecar).unwrap())?;
    }

    let n = per_seed.len();
    let (mean, ci) = if n == 0 {
        (0.0, 0.0)
    } else {
        let means: Vec<f64> = per_seed.iter().map(|s| s.time_averaged_cost).collect();
        let mean = means.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        (mean, 1.96 * (var / n as f64).sqrt())
    };
    Ok(ExperimentSummary {
        scenario: spec.scenario.clone(),
        policy: spec.policy,
        slots: spec.slots,
        seeds: spec.seeds.clone(),
        mean_time_averaged_cost: mean,
        ci95_half_width: ci,
        per_seed,
    })
}

/// Load a configuration from TOML.
pub fn load_config(path: &Path) -> Result<SystemConfig, HarnessError> {
    let text = fs::read_to_string(path)?;
    Ok(toml::from_str(&text)?)
}
