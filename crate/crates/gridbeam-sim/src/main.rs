//! Command-line front end: seeded experiment runs, the theoretical gap
//! sweep, configuration validation and the reference oracles.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridbeam::config::{validate_config, SystemConfig};
use gridbeam::gap::gap_vs_capacity_curve;
use gridbeam::oracle::{single_user_optimal_power, solve_realtime_barrier};
use gridbeam::planner::plan_exact_finite_support;
use gridbeam::sampling::sample_fast_state;
use gridbeam::socp::{build_realtime_problem, solve_realtime, SocpEngine};
use gridbeam::state::SlowState;
use gridbeam_sim::{load_config, run_experiment, scenarios, ExperimentSpec, HarnessError, Policy};

#[derive(Parser)]
#[command(name = "gridbeam-sim", about = "Two-scale energy management simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to a TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset (table_i, fig3, fig5_eta90/95/100, fig7).
    #[arg(long)]
    scenario: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<(String, SystemConfig), HarnessError> {
        if let Some(path) = &self.config {
            return Ok((
                self.scenario.clone().unwrap_or_else(|| "custom".into()),
                load_config(path)?,
            ));
        }
        let name = self.scenario.as_deref().unwrap_or("table_i");
        match scenarios::by_name(name) {
            Some(cfg) => Ok((name.to_string(), cfg)),
            None => {
                eprintln!(
                    "unknown scenario `{name}`; available: {}",
                    scenarios::SCENARIO_NAMES.join(", ")
                );
                std::process::exit(2);
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a policy over seeded sample paths and write CSV records.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value = "tsoc")]
        policy: Policy,
        /// Horizon in slots.
        #[arg(long, default_value_t = 500)]
        slots: usize,
        /// Single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Seed range `N..M` (half-open).
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Block length for the offline lower bound beyond the stacked cap.
        #[arg(long)]
        offline_block_slots: Option<usize>,
    },
    /// Sweep the minimized theoretical gap over capacities and efficiencies.
    GapCurve {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated capacities.
        #[arg(long, default_value = "25,30,40,55,70,85,100,120")]
        c_max: String,
        /// Comma-separated efficiencies.
        #[arg(long, default_value = "0.9,0.95,1.0")]
        eta: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Validate a configuration and print the derived parameters.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the reference oracles and print their comparisons.
    Oracle {
        /// Which oracle: single-user | barrier | plan-grid.
        which: String,
        /// Instance count where applicable.
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

fn parse_seeds(seed: Option<u64>, seeds: Option<&str>) -> Vec<u64> {
    if let Some(s) = seeds {
        if let Some((lo, hi)) = s.split_once("..") {
            let lo: u64 = lo.parse().expect("seed range start");
            let hi: u64 = hi.parse().expect("seed range end");
            return (lo..hi).collect();
        }
        panic!("--seeds expects the form N..M");
    }
    vec![seed.unwrap_or(0)]
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run() -> Result<(), HarnessError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            policy,
            slots,
            seed,
            seeds,
            out,
            offline_block_slots,
        } => {
            let (scenario, cfg) = config.resolve()?;
            let spec = ExperimentSpec {
                scenario,
                config: cfg,
                policy,
                slots,
                seeds: parse_seeds(seed, seeds.as_deref()),
                out_dir: Some(out),
                offline_block_slots,
            };
            let summary = run_experiment(&spec)?;
            println!(
                "{} {} slots={} seeds={} mean_cost={:.6} ci95={:.6}",
                summary.scenario,
                summary.policy.name(),
                summary.slots,
                summary.seeds.len(),
                summary.mean_time_averaged_cost,
                summary.ci95_half_width
            );
            Ok(())
        }
        Command::GapCurve { config, c_max, eta, out } => {
            let (scenario, cfg) = config.resolve()?;
            let cfg = validate_config(cfg)?;
            let c_list: Vec<f64> = c_max.split(',').map(|s| s.trim().parse().unwrap()).collect();
            let e_list: Vec<f64> = eta.split(',').map(|s| s.trim().parse().unwrap()).collect();
            let rows = gap_vs_capacity_curve(&cfg, &c_list, &e_list);
            std::fs::create_dir_all(&out)?;
            let mut csv = String::from("eta,c_max,v_max,g_min,skipped\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.eta,
                    r.c_max,
                    r.v_max.map_or(String::new(), |v| format!("{v}")),
                    r.g_min.map_or(String::new(), |g| format!("{g}")),
                    r.skipped.clone().unwrap_or_default()
                ));
            }
            let file = out.join(format!("{scenario}_gap_curve.csv"));
            std::fs::write(&file, csv)?;
            println!("wrote {}", file.display());
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let (_, cfg) = config.resolve()?;
            let cfg = validate_config(cfg)?;
            println!("configuration valid");
            println!("  alpha_bar = {}", cfg.alpha_bar());
            println!("  beta_under = {}", cfg.beta_under());
            match gridbeam::controller::select_parameters(&cfg) {
                Ok((gamma, v, w)) => {
                    println!("  V = {v}");
                    println!("  Gamma = {gamma} in [{}, {}]", w.gamma_min, w.gamma_max);
                    println!("  V_max = {} (window bound {})", w.v_max, w.v_window);
                }
                Err(e) => println!("  queue parameters unavailable: {e}"),
            }
            Ok(())
        }
        Command::Oracle { which, instances } => {
            oracle_command(&which, instances);
            Ok(())
        }
    }
}

fn oracle_command(which: &str, instances: usize) {
    use gridbeam::sampling::seeded_rng;
    let cfg_single = validate_config(SystemConfig {
        bs: 1,
        users: 1,
        antennas: 2,
        gamma: vec![1.0],
        sigma2: vec![1.0],
        ..SystemConfig::default()
    })
    .unwrap();
    match which {
        "single-user" => {
            let mut rng = seeded_rng(1);
            let mut worst: f64 = 0.0;
            for _ in 0..instances.max(1) {
                let fast = sample_fast_state(&mut rng, &cfg_single);
                let prob =
                    build_realtime_problem(&fast, &[50.0], &[-3.0], 5.0, &cfg_single).unwrap();
                let (dec, _) = solve_realtime(&prob).unwrap();
                let got = dec.w.bs_power(0, cfg_single.antennas);
                let want =
                    single_user_optimal_power(fast.h.col(0), cfg_single.gamma[0], cfg_single.sigma2[0]);
                worst = worst.max((got - want).abs() / want);
            }
            println!("single-user closed form: {instances} instances, worst relative power error {worst:.3e}");
        }
        "barrier" => {
            let cfg = validate_config(SystemConfig::default()).unwrap();
            let mut rng = seeded_rng(2);
            let mut worst: f64 = 0.0;
            for _ in 0..instances.max(1) {
                let fast = sample_fast_state(&mut rng, &cfg);
                let e = vec![55.0; cfg.bs];
                let q = vec![-40.0; cfg.bs];
                let prob = build_realtime_problem(&fast, &e, &q, 10.0, &cfg).unwrap();
                let (dec, _) = solve_realtime(&prob).unwrap();
                let reference = solve_realtime_barrier(&fast, &e, &q, 10.0, &cfg).unwrap();
                let scale = reference.objective.abs().max(1.0);
                worst = worst.max((dec.objective_value - reference.objective).abs() / scale);
            }
            println!("barrier reference: {instances} instances, worst relative objective gap {worst:.3e}");
        }
        "plan-grid" => {
            let cfg = cfg_single;
            let mut rng = seeded_rng(3);
            let atom = sample_fast_state(&mut rng, &cfg);
            let support = vec![(atom, 1.0)];
            let slow = SlowState {
                alpha_lt: 1.15,
                beta_lt: 1.035,
                a_res: vec![5.0],
            };
            let mut engine = SocpEngine::new();
            let (decision, objective) =
                plan_exact_finite_support(&support, &slow, &[-3.0], 5.0, &cfg, 0.25, &mut engine)
                    .unwrap();
            println!(
                "plan-grid oracle: argmin E = {:.4} kWh, objective = {:.6} ({} evaluations)",
                decision.e[0], objective, decision.iterations_used
            );
        }
        other => {
            eprintln!("unknown oracle `{other}`; available: single-user, barrier, plan-grid");
            std::process::exit(2);
        }
    }
}
