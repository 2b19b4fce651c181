//! System configuration and its admissibility checks.
//!
//! All energies are in kWh per slot (slot duration is normalized to one, so
//! energy and power coincide). Beamformer powers, noise variances and the
//! per-slot static draw share that one numeric unit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sum of the geometric series `1 + eta + ... + eta^(tau-1)`, with the
/// `eta = 1` limit handled exactly.
pub fn geometric_sum(eta: f64, tau: u32) -> f64 {
    if eta == 1.0 {
        tau as f64
    } else {
        (1.0 - eta.powi(tau as i32)) / (1.0 - eta)
    }
}

/// Planner knobs: projected stochastic subgradient budget and history window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Initial stepsize; iteration `j` uses `mu0 / sqrt(j + 1)`.
    pub mu0: f64,
    /// Subgradient iteration budget per interval.
    pub iterations: usize,
    /// History window length in coarse intervals (buffer holds `L * T` slots).
    pub history_intervals: usize,
    /// Synthetic draws used to seed the history before the first interval.
    /// `None` means one interval's worth (`T`).
    pub cold_start_samples: Option<usize>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            mu0: 1.0,
            iterations: 2000,
            history_intervals: 20,
            cold_start_samples: None,
        }
    }
}

/// Which queue value the per-slot solves see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueConvention {
    /// Queues frozen at the interval start; the optimality analysis assumes
    /// this convention.
    Frozen,
    /// Live per-slot queues. Feasibility still holds; kept behind this flag
    /// for experimentation only.
    Live,
}

/// Every physical, market and algorithm constant of a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Number of base stations in the cluster (I).
    pub bs: usize,
    /// Number of served single-antenna users (K).
    pub users: usize,
    /// Transmit antennas per base station (M).
    pub antennas: usize,
    /// Slots per coarse-grained interval (T).
    pub slots_per_interval: u32,
    /// Static (non-transmission) consumption per BS per slot, kWh.
    pub p_c: f64,
    /// Cap on total per-BS consumption per slot, kWh.
    pub p_g_max: f64,
    /// Max discharge per slot, kWh (negative).
    pub p_b_min: f64,
    /// Max charge per slot, kWh (positive).
    pub p_b_max: f64,
    /// Minimum state of charge, kWh.
    pub c_min: f64,
    /// Battery capacity, kWh.
    pub c_max: f64,
    /// Initial state of charge, kWh.
    pub c0: f64,
    /// Storage efficiency per slot, in (0, 1].
    pub eta: f64,
    /// Per-user SINR targets, linear scale.
    pub gamma: Vec<f64>,
    /// Per-user noise variances.
    pub sigma2: Vec<f64>,
    /// Mean ahead-of-time purchase price.
    pub price_lt_mean: f64,
    /// Mean real-time purchase price.
    pub price_rt_mean: f64,
    /// Ahead-of-time selling price as a fraction of the purchase price.
    pub sell_ratio_lt: f64,
    /// Real-time selling price as a fraction of the purchase price.
    pub sell_ratio_rt: f64,
    /// Scale of the normal underlying the ahead-of-time price draw.
    /// `None` resolves to `price_lt_mean / 4`.
    pub price_lt_scale: Option<f64>,
    /// Scale of the normal underlying the real-time price draw.
    /// `None` resolves to `price_rt_mean / 4`.
    pub price_rt_scale: Option<f64>,
    /// Hard cap on sampled real-time purchase prices; this is the a-priori
    /// price bound the queue-parameter window is computed from.
    /// `None` resolves to `2 * price_rt_mean`.
    pub price_cap_rt: Option<f64>,
    /// Floor on sampled real-time selling prices; the a-priori lower price
    /// bound. `None` resolves to `0.1 * sell_ratio_rt * price_rt_mean`.
    pub price_floor_rt: Option<f64>,
    /// Mean harvested renewable energy per BS per interval, kWh.
    pub res_mean: f64,
    /// Scale of the normal underlying the renewable draw.
    pub res_scale: f64,
    /// Drift-penalty weight V. `None` selects the largest admissible value.
    pub lyapunov_v: Option<f64>,
    /// Queue perturbation. `None` selects the window midpoint.
    pub lyapunov_gamma: Option<f64>,
    /// Which queue value the per-slot solves use.
    pub queue_convention: QueueConvention,
    /// Planner settings.
    pub planner: PlannerConfig,
    /// Seed for standalone sampling.
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            bs: 2,
            users: 3,
            antennas: 2,
            slots_per_interval: 5,
            p_c: 10.0,
            p_g_max: 50.0,
            p_b_min: -2.0,
            p_b_max: 2.0,
            c_min: 0.0,
            c_max: 80.0,
            c0: 0.0,
            eta: 0.95,
            gamma: vec![1.0; 3],
            sigma2: vec![1.0; 3],
            price_lt_mean: 1.15,
            price_rt_mean: 2.3,
            sell_ratio_lt: 0.9,
            sell_ratio_rt: 0.3,
            price_lt_scale: None,
            price_rt_scale: None,
            price_cap_rt: None,
            price_floor_rt: None,
            res_mean: 40.0,
            res_scale: 10.0,
            lyapunov_v: None,
            lyapunov_gamma: None,
            queue_convention: QueueConvention::Frozen,
            planner: PlannerConfig::default(),
            rng_seed: 0,
        }
    }
}

impl SystemConfig {
    /// Total antennas across the cluster (M * I).
    pub fn mi(&self) -> usize {
        self.antennas * self.bs
    }

    /// Resolved ahead-of-time price scale.
    pub fn lt_scale(&self) -> f64 {
        self.price_lt_scale.unwrap_or(self.price_lt_mean / 4.0)
    }

    /// Resolved real-time price scale.
    pub fn rt_scale(&self) -> f64 {
        self.price_rt_scale.unwrap_or(self.price_rt_mean / 4.0)
    }

    /// A-priori upper bound on real-time purchase prices.
    pub fn alpha_bar(&self) -> f64 {
        self.price_cap_rt.unwrap_or(2.0 * self.price_rt_mean)
    }

    /// A-priori lower bound on real-time selling prices.
    pub fn beta_under(&self) -> f64 {
        self.price_floor_rt
            .unwrap_or(0.1 * self.sell_ratio_rt * self.price_rt_mean)
    }

    /// Resolved cold-start sample count.
    pub fn cold_start_samples(&self) -> usize {
        self.planner
            .cold_start_samples
            .unwrap_or(self.slots_per_interval as usize)
    }
}

/// Rejection reasons, each naming the violated inequality.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("counts must satisfy bs >= 1, users >= 1, antennas >= 1, slots_per_interval >= 1")]
    Counts,
    #[error("battery rate bounds must satisfy p_b_min < 0 < p_b_max (got [{0}, {1}])")]
    BatteryRateBounds(f64, f64),
    #[error("state-of-charge bounds must satisfy c_min <= c_max (got [{0}, {1}])")]
    SocBounds(f64, f64),
    #[error("initial state of charge must satisfy c_min <= c0 <= c_max (got c0 = {0})")]
    InitialSoc(f64),
    #[error("storage efficiency must satisfy 0 < eta <= 1 (got {0})")]
    EtaRange(f64),
    #[error(
        "charging cannot compensate leakage: p_b_max >= (1 - eta) * c_min violated \
         ({lhs} < {rhs})"
    )]
    ChargeCoversLeakage { lhs: f64, rhs: f64 },
    #[error(
        "state-of-charge range too small for one interval of max (dis)charge: \
         c_max - c_min >= (1 - eta^T)/(1 - eta) * (p_b_max - p_b_min) violated \
         ({lhs} < {rhs})"
    )]
    SocRangeTooSmall { lhs: f64, rhs: f64 },
    #[error("selling must be strictly cheaper than buying: 0 < sell_ratio_{market} < 1 (got {0})", market = .1)]
    SellRatio(f64, &'static str),
    #[error("{0} must be positive (got {1})")]
    NonpositiveParameter(&'static str, f64),
    #[error("per-user vector `{0}` must have one entry per user (expected {1}, got {2})")]
    PerUserLength(&'static str, usize, usize),
    #[error("real-time price floor must stay below the cap: floor/sell_ratio_rt < cap ({lhs} >= {rhs})")]
    PriceBandEmpty { lhs: f64, rhs: f64 },
}

/// A configuration that passed every admissibility check.
///
/// Only this type is accepted by samplers, solvers and controllers.
#[derive(Debug, Clone)]
pub struct ValidatedConfig(SystemConfig);

impl std::ops::Deref for ValidatedConfig {
    type Target = SystemConfig;
    fn deref(&self) -> &SystemConfig {
        &self.0
    }
}

impl ValidatedConfig {
    pub fn inner(&self) -> &SystemConfig {
        &self.0
    }

    /// Revalidate a modified copy of this configuration.
    pub fn with(&self, f: impl FnOnce(&mut SystemConfig)) -> Result<ValidatedConfig, ConfigError> {
        let mut cfg = self.0.clone();
        f(&mut cfg);
        validate_config(cfg)
    }
}

/// Check every invariant of [`SystemConfig`] and wrap it on success.
pub fn validate_config(cfg: SystemConfig) -> Result<ValidatedConfig, ConfigError> {
    if cfg.bs == 0 || cfg.users == 0 || cfg.antennas == 0 || cfg.slots_per_interval == 0 {
        return Err(ConfigError::Counts);
    }
    if !(cfg.p_b_min < 0.0 && 0.0 < cfg.p_b_max) {
        return Err(ConfigError::BatteryRateBounds(cfg.p_b_min, cfg.p_b_max));
    }
    if !(cfg.c_min <= cfg.c_max) {
        return Err(ConfigError::SocBounds(cfg.c_min, cfg.c_max));
    }
    if !(cfg.c_min <= cfg.c0 && cfg.c0 <= cfg.c_max) {
        return Err(ConfigError::InitialSoc(cfg.c0));
    }
    if !(cfg.eta > 0.0 && cfg.eta <= 1.0) {
        return Err(ConfigError::EtaRange(cfg.eta));
    }
    // Charging must at least compensate one slot of leakage at the SoC floor.
    let leak = (1.0 - cfg.eta) * cfg.c_min;
    if cfg.p_b_max < leak {
        return Err(ConfigError::ChargeCoversLeakage {
            lhs: cfg.p_b_max,
            rhs: leak,
        });
    }
    // The SoC range must absorb one interval of maximal (dis)charge.
    let swing = geometric_sum(cfg.eta, cfg.slots_per_interval) * (cfg.p_b_max - cfg.p_b_min);
    if cfg.c_max - cfg.c_min < swing {
        return Err(ConfigError::SocRangeTooSmall {
            lhs: cfg.c_max - cfg.c_min,
            rhs: swing,
        });
    }
    for (ratio, market) in [(cfg.sell_ratio_lt, "lt"), (cfg.sell_ratio_rt, "rt")] {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(ConfigError::SellRatio(ratio, market));
        }
    }
    for (name, value) in [
        ("p_c", cfg.p_c),
        ("p_g_max", cfg.p_g_max),
        ("price_lt_mean", cfg.price_lt_mean),
        ("price_rt_mean", cfg.price_rt_mean),
        ("planner.mu0", cfg.planner.mu0),
    ] {
        if !(value > 0.0) {
            return Err(ConfigError::NonpositiveParameter(name, value));
        }
    }
    if cfg.res_mean < 0.0 {
        return Err(ConfigError::NonpositiveParameter("res_mean", cfg.res_mean));
    }
    if cfg.res_scale < 0.0 {
        return Err(ConfigError::NonpositiveParameter("res_scale", cfg.res_scale));
    }
    if cfg.gamma.len() != cfg.users {
        return Err(ConfigError::PerUserLength("gamma", cfg.users, cfg.gamma.len()));
    }
    if cfg.sigma2.len() != cfg.users {
        return Err(ConfigError::PerUserLength("sigma2", cfg.users, cfg.sigma2.len()));
    }
    for &g in &cfg.gamma {
        if !(g > 0.0) {
            return Err(ConfigError::NonpositiveParameter("gamma", g));
        }
    }
    for &s in &cfg.sigma2 {
        if !(s > 0.0) {
            return Err(ConfigError::NonpositiveParameter("sigma2", s));
        }
    }
    // Sampled prices are clamped into [floor/ratio, cap]; the band must exist.
    let alpha_floor = cfg.beta_under() / cfg.sell_ratio_rt;
    if cfg.beta_under() > 0.0 && alpha_floor >= cfg.alpha_bar() {
        return Err(ConfigError::PriceBandEmpty {
            lhs: alpha_floor,
            rhs: cfg.alpha_bar(),
        });
    }
    if let Some(cap) = cfg.price_cap_rt {
        if !(cap > 0.0) {
            return Err(ConfigError::NonpositiveParameter("price_cap_rt", cap));
        }
    }
    if let Some(floor) = cfg.price_floor_rt {
        if floor < 0.0 {
            return Err(ConfigError::NonpositiveParameter("price_floor_rt", floor));
        }
    }
    Ok(ValidatedConfig(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values_are_valid() {
        // P_c = 10, P_g_max = 50, P_b in [-2, 2], C in [0, 80], eta = 0.95, T = 5.
        let cfg = SystemConfig::default();
        assert!(validate_config(cfg).is_ok());
    }

    #[test]
    fn small_capacity_fails_soc_range_check() {
        let cfg = SystemConfig {
            c_max: 10.0,
            c0: 5.0,
            ..SystemConfig::default()
        };
        // (1 - 0.95^5)/0.05 * 4 = 18.12 > 10.
        match validate_config(cfg) {
            Err(ConfigError::SocRangeTooSmall { lhs, rhs }) => {
                assert!((lhs - 10.0).abs() < 1e-12);
                let expected = (1.0 - 0.95f64.powi(5)) / 0.05 * 4.0;
                assert!((rhs - expected).abs() < 1e-12);
                assert!(rhs > 18.0 && rhs < 18.2);
            }
            other => panic!("expected SocRangeTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn lossless_battery_with_zero_floor_passes_leakage_check() {
        // eta = 1, c_min = 0: the leakage condition degenerates to 0 >= 0.
        let cfg = SystemConfig {
            eta: 1.0,
            c_min: 0.0,
            ..SystemConfig::default()
        };
        assert!(validate_config(cfg).is_ok());
    }

    #[test]
    fn geometric_sum_limit() {
        assert_eq!(geometric_sum(1.0, 5), 5.0);
        let s = geometric_sum(0.95, 5);
        assert!((s - (1.0 - 0.95f64.powi(5)) / 0.05).abs() < 1e-12);
    }

    #[test]
    fn battery_rate_bounds_must_straddle_zero() {
        let cfg = SystemConfig {
            p_b_min: 0.5,
            ..SystemConfig::default()
        };
        assert!(matches!(
            validate_config(cfg),
            Err(ConfigError::BatteryRateBounds(_, _))
        ));
    }

    #[test]
    fn sell_ratio_must_be_strict() {
        let cfg = SystemConfig {
            sell_ratio_lt: 1.0,
            ..SystemConfig::default()
        };
        assert!(matches!(
            validate_config(cfg),
            Err(ConfigError::SellRatio(_, "lt"))
        ));
    }
}
