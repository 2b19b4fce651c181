//! Domain types shared across the crate.
//!
//! Complex quantities cross module boundaries as interleaved real pairs
//! `[re0, im0, re1, im1, ...]`; the channel and beamformer types own the
//! conversion so the convention lives in one place.

use num_complex::Complex64;

use crate::socp::SolveReport;

/// One realization of the slow (per-interval) randomness: ahead-of-time
/// prices and harvested renewable energy per base station.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowState {
    /// Ahead-of-time purchase price.
    pub alpha_lt: f64,
    /// Ahead-of-time selling price (strictly below `alpha_lt`).
    pub beta_lt: f64,
    /// Harvested energy per BS for the coming interval, kWh.
    pub a_res: Vec<f64>,
}

/// One realization of the fast (per-slot) randomness: real-time prices and
/// the downlink channel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FastState {
    /// Real-time purchase price.
    pub alpha_rt: f64,
    /// Real-time selling price (strictly below `alpha_rt`).
    pub beta_rt: f64,
    /// Channel matrix, `M * I` rows by `K` columns; column `k` stacks the
    /// per-BS channels of user `k`.
    pub h: ChannelMatrix,
}

/// Dense complex matrix with `M * I` rows and one column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    mi: usize,
    users: usize,
    /// Column-major storage.
    data: Vec<Complex64>,
}

impl ChannelMatrix {
    pub fn new(mi: usize, users: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), mi * users, "channel matrix shape mismatch");
        ChannelMatrix { mi, users, data }
    }

    /// Build from interleaved real pairs, column-major.
    pub fn from_interleaved(mi: usize, users: usize, reals: &[f64]) -> Self {
        assert_eq!(reals.len(), 2 * mi * users);
        let data = reals
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        ChannelMatrix { mi, users, data }
    }

    /// Interleaved real pairs, column-major.
    pub fn to_interleaved(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.data.len());
        for z in &self.data {
            out.push(z.re);
            out.push(z.im);
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.mi
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Channel vector of user `k` (length `M * I`).
    pub fn col(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.mi..(k + 1) * self.mi]
    }
}

/// Per-BS battery states plus the shared queue offset.
///
/// The virtual queue of BS `i` is `q(i) = c[i] + gamma` by definition, so the
/// queue identity holds exactly at all times.
#[derive(Debug, Clone)]
pub struct BatteryState {
    /// Stored energy per BS, kWh.
    pub c: Vec<f64>,
    /// Queue perturbation shared by all BSs.
    pub gamma: f64,
}

impl BatteryState {
    pub fn new(c: Vec<f64>, gamma: f64) -> Self {
        BatteryState { c, gamma }
    }

    /// Virtual queue value of BS `i`.
    pub fn q(&self, i: usize) -> f64 {
        self.c[i] + self.gamma
    }

    /// All queue values.
    pub fn queues(&self) -> Vec<f64> {
        self.c.iter().map(|&c| c + self.gamma).collect()
    }
}

/// Beamforming vectors for all users, stacked across base stations.
///
/// Column `k` is the length-`M * I` vector serving user `k`; rows
/// `(i-1)M .. iM-1` belong to BS `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformers {
    mi: usize,
    users: usize,
    data: Vec<Complex64>,
}

impl Beamformers {
    pub fn new(mi: usize, users: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), mi * users, "beamformer shape mismatch");
        Beamformers { mi, users, data }
    }

    pub fn zeros(mi: usize, users: usize) -> Self {
        Beamformers {
            mi,
            users,
            data: vec![Complex64::new(0.0, 0.0); mi * users],
        }
    }

    /// Build from interleaved real pairs, column-major.
    pub fn from_interleaved(mi: usize, users: usize, reals: &[f64]) -> Self {
        assert_eq!(reals.len(), 2 * mi * users);
        let data = reals
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        Beamformers { mi, users, data }
    }

    /// Interleaved real pairs, column-major.
    pub fn to_interleaved(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.data.len());
        for z in &self.data {
            out.push(z.re);
            out.push(z.im);
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.mi
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Beamforming vector of user `k`.
    pub fn col(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.mi..(k + 1) * self.mi]
    }

    pub fn col_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.data[k * self.mi..(k + 1) * self.mi]
    }

    /// Transmit power drawn at BS `i` (antennas `i*m .. (i+1)*m - 1`):
    /// the summed squared magnitudes of that antenna block over all users.
    pub fn bs_power(&self, i: usize, m: usize) -> f64 {
        let (lo, hi) = (i * m, (i + 1) * m);
        let mut p = 0.0;
        for k in 0..self.users {
            for &z in &self.col(k)[lo..hi] {
                p += z.norm_sqr();
            }
        }
        p
    }
}

/// Outcome of one per-slot energy-balancing and beamforming solve.
#[derive(Debug, Clone)]
pub struct RealtimeDecision {
    pub w: Beamformers,
    /// Battery action per BS after snapping to its box, kWh.
    pub p_b: Vec<f64>,
    /// Raw solver battery action, before snapping.
    pub p_b_solver: Vec<f64>,
    /// Real-time trade per BS (buy > 0, sell < 0), recovered from the
    /// balance identity, kWh.
    pub p: Vec<f64>,
    /// Objective of the per-slot problem at the returned point.
    pub objective_value: f64,
    pub solver: SolveReport,
}

/// Ahead-of-time energy amounts for one coarse interval.
#[derive(Debug, Clone)]
pub struct PlanDecision {
    /// Energy per BS for the interval, kWh (nonnegative).
    pub e: Vec<f64>,
    pub iterations_used: usize,
    /// Last stepsize used.
    pub final_step: f64,
}
