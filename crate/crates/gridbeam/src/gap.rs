//! Theoretical optimality-gap constants and their minimization.
//!
//! The time-averaged cost of the two-scale policy exceeds the clairvoyant
//! optimum by at most `M / V` with `M = M1 + M2 + M3`: `M1` inherited from
//! the stochastic subgradient machinery, `M2` from freezing queues over an
//! interval, `M3` from battery leakage. All three are closed forms in
//! `(Gamma, V)` and the physical bounds; minimizing `M / V` over the
//! admissible window gives the best guarantee a configuration supports.

use thiserror::Error;

use crate::config::ValidatedConfig;
use crate::controller::{max_admissible_v, parameter_window};

/// The gap constants at one `(Gamma, V)` pair.
#[derive(Debug, Clone, Copy)]
pub struct GapConstants {
    pub m_b: f64,
    pub m_c: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m: f64,
    /// `m / v`.
    pub gap: f64,
}

/// Evaluate the gap constants; the `eta = 1` limits are taken exactly.
pub fn gap_constants(gamma: f64, v: f64, cfg: &ValidatedConfig) -> GapConstants {
    let eta = cfg.eta;
    let i = cfg.bs as f64;
    let t = cfg.slots_per_interval as f64;
    let m_b = ((1.0 - eta) * gamma + cfg.p_b_min)
        .powi(2)
        .max(((1.0 - eta) * gamma + cfg.p_b_max).powi(2));
    let m_c = (gamma + cfg.c_min).powi(2).max((gamma + cfg.c_max).powi(2));
    let (m1, m2, m3) = if eta == 1.0 {
        (i * m_b / 2.0, i * (t - 1.0) * m_b / 2.0, 0.0)
    } else {
        let d = 1.0 - eta;
        let t_int = cfg.slots_per_interval;
        let geo = 1.0 - eta.powi(t_int as i32);
        let m1 = i * t * d / (2.0 * eta * geo) * m_b;
        // t*d - (1 - eta^t) cancels catastrophically as eta -> 1; its exact
        // binomial expansion sum_{j>=2} C(t,j) (-1)^j d^j is stable there.
        let numerator = if d * t < 0.5 {
            let mut binom = t * (t - 1.0) / 2.0;
            let mut term = binom * d * d;
            let mut acc = term;
            for j in 3..=t_int {
                binom *= (t - (j - 1) as f64) / j as f64;
                term = binom * d.powi(j as i32);
                acc += if j % 2 == 0 { term } else { -term };
            }
            acc
        } else {
            t * d - geo
        };
        let m2 = i * numerator / (d * geo) * m_b;
        let m3 = i * d * m_c;
        (m1, m2, m3)
    };
    let m = m1 + m2 + m3;
    GapConstants {
        m_b,
        m_c,
        m1,
        m2,
        m3,
        m,
        gap: m / v,
    }
}

#[derive(Debug, Error)]
pub enum GapError {
    #[error("no V in (0, {v_max}] admits a nonempty parameter window")]
    NoFeasibleV { v_max: f64 },
}

/// Result of the gap minimization.
#[derive(Debug, Clone, Copy)]
pub struct MinGapResult {
    pub g_min: f64,
    pub v_star: f64,
    pub gamma_star: f64,
}

fn best_gamma_on_grid(cfg: &ValidatedConfig, v: f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let mut best = (f64::INFINITY, lo);
    if hi - lo < 1e-12 {
        let g = gap_constants(lo, v, cfg).gap;
        return (g, lo);
    }
    for j in 0..points {
        let gamma = lo + (hi - lo) * j as f64 / (points - 1) as f64;
        let g = gap_constants(gamma, v, cfg).gap;
        if g < best.0 {
            best = (g, gamma);
        }
    }
    best
}

fn golden_1d(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Gap at a given V after minimizing over the Gamma window; infinite when
/// the window is empty.
fn gap_at_v(cfg: &ValidatedConfig, alpha_bar: f64, beta_under: f64, v: f64) -> f64 {
    match parameter_window(cfg, alpha_bar, beta_under, v) {
        Ok(w) => {
            let (coarse, gamma0) = best_gamma_on_grid(cfg, v, w.gamma_min, w.gamma_max, 200);
            if w.gamma_max - w.gamma_min < 1e-9 {
                return coarse;
            }
            let span = (w.gamma_max - w.gamma_min) / 199.0;
            let lo = (gamma0 - span).max(w.gamma_min);
            let hi = (gamma0 + span).min(w.gamma_max);
            let (_, refined) = golden_1d(
                |g| gap_constants(g, v, cfg).gap,
                lo,
                hi,
                1e-7 * (1.0 + w.gamma_max.abs()),
            );
            refined.min(coarse)
        }
        Err(_) => f64::INFINITY,
    }
}

/// Minimize `M(Gamma)/V` over the coupled feasible set with `0 < V <= v_max`:
/// a 200 x 200 grid followed by golden refinement on each coordinate.
pub fn min_gap(v_max: f64, cfg: &ValidatedConfig) -> Result<MinGapResult, GapError> {
    let alpha_bar = cfg.alpha_bar();
    let beta_under = cfg.beta_under();
    let v_hi = v_max.min(max_admissible_v(cfg, alpha_bar, beta_under));
    if !(v_hi > 0.0) {
        return Err(GapError::NoFeasibleV { v_max });
    }
    let points = 200usize;
    let mut best = (f64::INFINITY, v_hi);
    for j in 1..=points {
        let v = v_hi * j as f64 / points as f64;
        let g = gap_at_v(cfg, alpha_bar, beta_under, v);
        if g < best.0 {
            best = (g, v);
        }
    }
    if !best.0.is_finite() {
        return Err(GapError::NoFeasibleV { v_max });
    }
    let step = v_hi / points as f64;
    let lo = (best.1 - step).max(step * 1e-3);
    let hi = (best.1 + step).min(v_hi);
    let (v_star, g_v) = golden_1d(
        |v| gap_at_v(cfg, alpha_bar, beta_under, v),
        lo,
        hi,
        1e-6 * v_hi,
    );
    let (g_min, v_star) = if g_v <= best.0 {
        (g_v, v_star)
    } else {
        (best.0, best.1)
    };
    // Recover the matching Gamma.
    let w = parameter_window(cfg, alpha_bar, beta_under, v_star)
        .map_err(|_| GapError::NoFeasibleV { v_max })?;
    let (_, gamma0) = best_gamma_on_grid(cfg, v_star, w.gamma_min, w.gamma_max, 200);
    let (gamma_star, _) = if w.gamma_max - w.gamma_min < 1e-9 {
        (gamma0, 0.0)
    } else {
        golden_1d(
            |g| gap_constants(g, v_star, cfg).gap,
            (gamma0 - (w.gamma_max - w.gamma_min) / 199.0).max(w.gamma_min),
            (gamma0 + (w.gamma_max - w.gamma_min) / 199.0).min(w.gamma_max),
            1e-7 * (1.0 + w.gamma_max.abs()),
        )
    };
    Ok(MinGapResult {
        g_min,
        v_star,
        gamma_star,
    })
}

/// One point of the gap-versus-capacity sweep.
#[derive(Debug, Clone)]
pub struct GapCurveRow {
    pub eta: f64,
    pub c_max: f64,
    /// Per-offset formula bound on V at this point.
    pub v_max: Option<f64>,
    pub g_min: Option<f64>,
    /// Why the point was skipped, if it was.
    pub skipped: Option<String>,
}

/// Sweep the minimized gap over battery capacities and efficiencies,
/// skipping and flagging inadmissible combinations.
pub fn gap_vs_capacity_curve(
    cfg: &ValidatedConfig,
    c_max_list: &[f64],
    eta_list: &[f64],
) -> Vec<GapCurveRow> {
    let mut rows = Vec::with_capacity(c_max_list.len() * eta_list.len());
    for &eta in eta_list {
        for &c_max in c_max_list {
            let modified = cfg.with(|c| {
                c.eta = eta;
                c.c_max = c_max;
                c.c0 = c.c0.min(c_max);
            });
            let row = match modified {
                Err(e) => GapCurveRow {
                    eta,
                    c_max,
                    v_max: None,
                    g_min: None,
                    skipped: Some(e.to_string()),
                },
                Ok(cfg2) => {
                    let alpha_bar = cfg2.alpha_bar();
                    let beta_under = cfg2.beta_under();
                    let v_probe = max_admissible_v(&cfg2, alpha_bar, beta_under);
                    let v_max = parameter_window(&cfg2, alpha_bar, beta_under, v_probe.min(1.0))
                        .map(|w| w.v_max)
                        .unwrap_or(v_probe);
                    match min_gap(v_max, &cfg2) {
                        Ok(res) => GapCurveRow {
                            eta,
                            c_max,
                            v_max: Some(v_max),
                            g_min: Some(res.g_min),
                            skipped: None,
                        },
                        Err(e) => GapCurveRow {
                            eta,
                            c_max,
                            v_max: Some(v_max),
                            g_min: None,
                            skipped: Some(e.to_string()),
                        },
                    }
                }
            };
            rows.push(row);
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_config, SystemConfig};

    fn cfg_eta(eta: f64) -> ValidatedConfig {
        validate_config(SystemConfig {
            eta,
            ..SystemConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn lossless_closed_form() {
        // I*T*max(p_b_min^2, p_b_max^2)/2 = 2*5*4/2 = 20 for the default bounds.
        let cfg = cfg_eta(1.0);
        let g = gap_constants(-50.0, 10.0, &cfg);
        assert_eq!(g.m_b, 4.0);
        assert_eq!(g.m3, 0.0);
        assert!((g.m - 20.0).abs() < 1e-12);
        assert!((g.gap - 2.0).abs() < 1e-12);
    }

    #[test]
    fn continuity_at_unit_efficiency() {
        let gamma = -60.0;
        let v = 5.0;
        let exact = gap_constants(gamma, v, &cfg_eta(1.0));
        let near = gap_constants(gamma, v, &cfg_eta(1.0 - 1e-8));
        assert!((near.m1 - exact.m1).abs() / exact.m1 < 1e-4);
        assert!((near.m2 - exact.m2).abs() / exact.m2 < 1e-4);
        assert!(near.m3.abs() < 1e-4);
        assert!((near.m - exact.m).abs() / exact.m < 1e-4);
    }

    #[test]
    fn m_b_zero_branch() {
        // Gamma = -p_b_max / (1 - eta) zeroes the charge branch.
        let cfg = cfg_eta(0.95);
        let gamma = -cfg.p_b_max / (1.0 - cfg.eta);
        let g = gap_constants(gamma, 1.0, &cfg);
        let expected = ((1.0 - cfg.eta) * gamma + cfg.p_b_min).powi(2);
        assert!((g.m_b - expected).abs() < 1e-12);
    }

    #[test]
    fn lossless_min_gap_is_m_over_vmax() {
        let cfg = cfg_eta(1.0);
        // v_max = (80 - 20) / (4.6 - 0.069)
        let v_max = (80.0 - 20.0) / (cfg.alpha_bar() - cfg.beta_under());
        let res = min_gap(v_max, &cfg).unwrap();
        assert!((res.g_min - 20.0 / v_max).abs() / (20.0 / v_max) < 1e-4);
        assert!((res.v_star - v_max).abs() / v_max < 1e-3);
    }
}
