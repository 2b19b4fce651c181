//! Closed-form costs and physics shared by every module.

use crate::state::{Beamformers, ChannelMatrix};

/// Ahead-of-time transaction cost: buy the shortage at `alpha_lt`, sell the
/// surplus at `beta_lt`.
///
/// Equals `max(alpha_lt * (e - a), beta_lt * (e - a))` whenever
/// `alpha_lt > beta_lt`.
pub fn cost_lt(e: f64, a: f64, alpha_lt: f64, beta_lt: f64) -> f64 {
    alpha_lt * (e - a).max(0.0) - beta_lt * (a - e).max(0.0)
}

/// Max-affine form of [`cost_lt`].
pub fn cost_lt_max_form(e: f64, a: f64, alpha_lt: f64, beta_lt: f64) -> f64 {
    (alpha_lt * (e - a)).max(beta_lt * (e - a))
}

/// Real-time transaction cost: buy `p > 0` at `alpha_rt`, sell `p < 0` at
/// `beta_rt`.
pub fn cost_rt(p: f64, alpha_rt: f64, beta_rt: f64) -> f64 {
    alpha_rt * p.max(0.0) - beta_rt * (-p).max(0.0)
}

/// Max-affine form of [`cost_rt`]; agrees with the piecewise form to within
/// one ulp for `alpha_rt > beta_rt`.
pub fn cost_rt_max_form(p: f64, alpha_rt: f64, beta_rt: f64) -> f64 {
    (alpha_rt * p).max(beta_rt * p)
}

/// One step of the leaky battery recursion: next state of charge after
/// applying `p_b` (charge > 0, discharge < 0) to a battery holding `c`.
///
/// Callers assert the result against the SoC box; a violation there is a
/// controller bug, not a modeling choice.
pub fn battery_step(c: f64, p_b: f64, eta: f64) -> f64 {
    eta * c + p_b
}

/// Achieved SINR of user `k` under beamformers `w`, linear scale.
pub fn sinr(h: &ChannelMatrix, w: &Beamformers, sigma2: &[f64], k: usize) -> f64 {
    let hk = h.col(k);
    let mut signal = num_complex::Complex64::new(0.0, 0.0);
    for (a, &hv) in hk.iter().enumerate() {
        signal += hv.conj() * w.col(k)[a];
    }
    let mut denom = sigma2[k];
    for l in 0..w.users() {
        if l == k {
            continue;
        }
        let mut cross = num_complex::Complex64::new(0.0, 0.0);
        for (a, &hv) in hk.iter().enumerate() {
            cross += hv.conj() * w.col(l)[a];
        }
        denom += cross.norm_sqr();
    }
    signal.norm_sqr() / denom
}

/// Per-slot transaction cost of one BS: the interval's ahead-of-time cost
/// spread over its `t` slots plus the slot's real-time cost.
pub fn slot_cost(
    e_interval: f64,
    a_i: f64,
    p_i: f64,
    alpha_lt: f64,
    beta_lt: f64,
    alpha_rt: f64,
    beta_rt: f64,
    t: u32,
) -> f64 {
    cost_lt(e_interval, a_i, alpha_lt, beta_lt) / t as f64 + cost_rt(p_i, alpha_rt, beta_rt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn cost_lt_examples() {
        assert!((cost_lt(10.0, 4.0, 1.2, 1.08) - 7.2).abs() < 1e-12);
        assert_eq!(cost_lt(4.0, 4.0, 1.2, 1.08), 0.0);
        assert_eq!(cost_lt(0.0, 5.0, 1.2, 1.0), -5.0);
    }

    #[test]
    fn cost_rt_examples() {
        assert_eq!(cost_rt(0.0, 2.3, 0.69), 0.0);
        assert!((cost_rt(3.0, 2.3, 0.69) - 6.9).abs() < 1e-15);
        assert!((cost_rt(-2.0, 2.3, 0.69) + 1.38).abs() < 1e-15);
    }

    #[test]
    fn battery_step_examples() {
        // Fixed point c* = p_b / (1 - eta).
        assert_eq!(battery_step(40.0, 2.0, 0.95), 40.0);
        assert_eq!(battery_step(30.0, -2.0, 1.0), 28.0);
        assert!((battery_step(30.0, -2.0, 0.9) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn slot_cost_composes() {
        // 7.2 / 5 + 6.9 = 8.34
        let c = slot_cost(10.0, 4.0, 3.0, 1.2, 1.08, 2.3, 0.69, 5);
        assert!((c - 8.34).abs() < 1e-12);
        assert_eq!(slot_cost(4.0, 4.0, 0.0, 1.2, 1.08, 2.3, 0.69, 5), 0.0);
    }

    #[test]
    fn sinr_matched_filter_single_user() {
        // K = 1, w = sqrt(p) h / ||h||, sigma2 = 1 gives p * ||h||^2.
        let h = ChannelMatrix::new(
            2,
            1,
            vec![Complex64::new(1.0, 1.0), Complex64::new(0.0, -2.0)],
        );
        let norm2: f64 = h.col(0).iter().map(|z| z.norm_sqr()).sum();
        let p = 2.5;
        let scale = (p / norm2).sqrt();
        let w = Beamformers::new(2, 1, h.col(0).iter().map(|z| z * scale).collect());
        let s = sinr(&h, &w, &[1.0], 0);
        assert!((s - p * norm2).abs() < 1e-12 * p * norm2);
    }

    #[test]
    fn sinr_zero_beamformer() {
        let h = ChannelMatrix::new(
            2,
            2,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(1.0, -1.0),
            ],
        );
        let w = Beamformers::zeros(2, 2);
        assert_eq!(sinr(&h, &w, &[1.0, 1.0], 0), 0.0);
    }

    #[test]
    fn sinr_matches_explicit_recomputation_two_users() {
        // Independent recomputation with scalar complex arithmetic.
        let h = ChannelMatrix::from_interleaved(
            2,
            2,
            &[0.3, -1.2, 0.7, 0.4, -0.9, 0.1, 1.5, -0.6],
        );
        let w = Beamformers::from_interleaved(
            2,
            2,
            &[0.2, 0.9, -0.4, 0.3, 1.1, -0.2, 0.5, 0.8],
        );
        let dot = |x: &[Complex64], y: &[Complex64]| -> Complex64 {
            x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
        };
        for k in 0..2 {
            let l = 1 - k;
            let sig = dot(h.col(k), w.col(k)).norm_sqr();
            let interf = dot(h.col(k), w.col(l)).norm_sqr();
            let expected = sig / (interf + 1.0);
            let got = sinr(&h, &w, &[1.0, 1.0], k);
            assert!((got - expected).abs() <= 1e-14 * expected.max(1.0));
        }
    }
}
