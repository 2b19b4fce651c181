//! Slow reference solvers used to cross-check the fast paths.
//!
//! Everything here is deliberately independent of [`crate::socp`]: a
//! matched-filter closed form for the single-user case and a log-barrier
//! Newton method that solves the per-slot problem directly in its quadratic
//! form, without the conic reformulation or epigraph variables the main
//! engine uses.

use num_complex::Complex64;
use thiserror::Error;

use crate::config::ValidatedConfig;
use crate::state::{Beamformers, FastState};

/// Minimal transmit power serving a single user at SINR target `gamma`:
/// `gamma * sigma2 / ||h||^2`.
pub fn single_user_optimal_power(h: &[Complex64], gamma: f64, sigma2: f64) -> f64 {
    let norm2: f64 = h.iter().map(|z| z.norm_sqr()).sum();
    gamma * sigma2 / norm2
}

/// Matched-filter beamformer with the given transmit power and a real,
/// nonnegative channel-beamformer product.
pub fn matched_filter(h: &[Complex64], power: f64) -> Vec<Complex64> {
    let norm2: f64 = h.iter().map(|z| z.norm_sqr()).sum();
    let scale = (power / norm2).sqrt();
    h.iter().map(|z| z * scale).collect()
}

#[derive(Debug, Error)]
pub enum BarrierError {
    #[error("could not construct a strictly feasible start (zero-forcing init failed: {0})")]
    NoFeasibleStart(&'static str),
    #[error("barrier Newton method stalled at gap bound {0:.3e}")]
    Stalled(f64),
}

/// Solution of the barrier reference solver.
#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub objective: f64,
    pub w: Beamformers,
    pub p_b: Vec<f64>,
    pub newton_steps: usize,
    /// Upper bound on the suboptimality at exit.
    pub gap_bound: f64,
}

/// Solve a complex K x K linear system by Gaussian elimination with partial
/// pivoting. `a` is row-major, consumed.
fn solve_complex(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Option<Vec<Complex64>> {
    let n = b.len();
    for col in 0..n {
        let (piv, mag) = (col..n)
            .map(|r| (r, a[r][col].norm_sqr()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if mag < 1e-24 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in (row + 1)..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Dense real linear solve (partial-pivot LU), row-major, consumed.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let (piv, mag) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if mag < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in (row + 1)..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Zero-forcing beamformers meeting every SINR target with a strict margin,
/// with each user's channel-beamformer product real and positive.
fn zero_forcing_start(
    fast: &FastState,
    cfg: &ValidatedConfig,
    margin: f64,
) -> Option<Vec<Complex64>> {
    let mi = cfg.mi();
    let k = cfg.users;
    if k > mi {
        return None;
    }
    // Gram matrix G[l][j] = h_l^H h_j.
    let mut gram = vec![vec![Complex64::new(0.0, 0.0); k]; k];
    for l in 0..k {
        for j in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..mi {
                acc += fast.h.col(l)[a].conj() * fast.h.col(j)[a];
            }
            gram[l][j] = acc;
        }
    }
    // Solve G Y = diag(c) column by column; w_j = H y_j gives
    // h_l^H w_j = c_j delta_lj.
    let mut w = vec![Complex64::new(0.0, 0.0); mi * k];
    for j in 0..k {
        let c_j = (cfg.gamma[j] * cfg.sigma2[j]).sqrt() * (1.0 + margin);
        let mut rhs = vec![Complex64::new(0.0, 0.0); k];
        rhs[j] = Complex64::new(c_j, 0.0);
        let y = solve_complex(gram.clone(), rhs)?;
        for a in 0..mi {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..k {
                acc += fast.h.col(l)[a] * y[l];
            }
            w[j * mi + a] = acc;
        }
    }
    Some(w)
}

struct BarrierProblem<'a> {
    fast: &'a FastState,
    cfg: &'a ValidatedConfig,
    e_over_t: Vec<f64>,
    q_frozen: Vec<f64>,
    v: f64,
    nw: usize,
    n: usize,
}

impl BarrierProblem<'_> {
    fn bs_power(&self, z: &[f64], i: usize) -> f64 {
        let m = self.cfg.antennas;
        let mi = self.cfg.mi();
        let mut acc = 0.0;
        for k in 0..self.cfg.users {
            for a in (i * m)..((i + 1) * m) {
                let re = z[2 * (k * mi + a)];
                let im = z[2 * (k * mi + a) + 1];
                acc += re * re + im * im;
            }
        }
        acc
    }

    /// h_k^H w_l as (re, im) from the packed variable vector.
    fn hw(&self, z: &[f64], k: usize, l: usize) -> (f64, f64) {
        let mi = self.cfg.mi();
        let hk = self.fast.h.col(k);
        let (mut re, mut im) = (0.0, 0.0);
        for a in 0..mi {
            let wr = z[2 * (l * mi + a)];
            let wi = z[2 * (l * mi + a) + 1];
            re += hk[a].re * wr + hk[a].im * wi;
            im += hk[a].re * wi - hk[a].im * wr;
        }
        (re, im)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let bs = self.cfg.bs;
        let mut acc = 0.0;
        for i in 0..bs {
            acc += self.q_frozen[i] * z[self.nw + i] + self.v * z[self.nw + bs + i];
        }
        acc
    }

    /// All scalar inequality values g_j(z) (feasible iff all negative)
    /// followed by the SOC margins F_k (feasible iff all positive).
    fn constraints(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let cfg = self.cfg;
        let bs = cfg.bs;
        let mut gs = Vec::with_capacity(5 * bs);
        for i in 0..bs {
            let x_i = self.bs_power(z, i);
            let pb = z[self.nw + i];
            let s = z[self.nw + bs + i];
            let base = cfg.p_c + x_i + pb - self.e_over_t[i];
            gs.push(self.fast.alpha_rt * base - s);
            gs.push(self.fast.beta_rt * base - s);
            gs.push(cfg.p_c + x_i - cfg.p_g_max);
            gs.push(pb - cfg.p_b_max);
            gs.push(cfg.p_b_min - pb);
        }
        let mut socs = Vec::with_capacity(cfg.users);
        for k in 0..cfg.users {
            let (re_kk, _) = self.hw(z, k, k);
            let t = re_kk / cfg.gamma[k].sqrt();
            let mut f = t * t - cfg.sigma2[k];
            for l in 0..cfg.users {
                if l == k {
                    continue;
                }
                let (re, im) = self.hw(z, k, l);
                f -= re * re + im * im;
            }
            socs.push(f);
        }
        (gs, socs)
    }

    fn strictly_feasible(&self, z: &[f64]) -> bool {
        let (gs, socs) = self.constraints(z);
        gs.iter().all(|&g| g < 0.0) && socs.iter().all(|&f| f > 0.0)
    }

    fn barrier_value(&self, z: &[f64], tb: f64) -> f64 {
        let (gs, socs) = self.constraints(z);
        let mut phi = tb * self.objective(z);
        for &g in &gs {
            if g >= 0.0 {
                return f64::INFINITY;
            }
            phi -= (-g).ln();
        }
        for &f in &socs {
            if f <= 0.0 {
                return f64::INFINITY;
            }
            phi -= f.ln();
        }
        phi
    }

    /// Gradient and Hessian of the barrier objective at `z`.
    fn derivatives(&self, z: &[f64], tb: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let cfg = self.cfg;
        let (bs, users, m, mi) = (cfg.bs, cfg.users, cfg.antennas, cfg.mi());
        let n = self.n;
        let mut grad = vec![0.0; n];
        let mut hess = vec![vec![0.0; n]; n];

        for i in 0..bs {
            grad[self.nw + i] += tb * self.q_frozen[i];
            grad[self.nw + bs + i] += tb * self.v;
        }

        // Rank-one accumulator for -log(-g): grad += dg / (-g),
        // hess += dg dg' / g^2 + Hg / (-g).
        let add_scalar = |grad: &mut Vec<f64>,
                              hess: &mut Vec<Vec<f64>>,
                              g: f64,
                              dg: &[(usize, f64)],
                              quad_scale: f64,
                              i_bs: usize| {
            let inv = 1.0 / (-g);
            for &(idx, v) in dg {
                grad[idx] += v * inv;
            }
            for &(r, vr) in dg {
                for &(c, vc) in dg {
                    hess[r][c] += vr * vc * inv * inv;
                }
            }
            // Hg is 2*quad_scale on the diagonal of BS i_bs's antenna block.
            if quad_scale != 0.0 {
                for k in 0..users {
                    for a in (i_bs * m)..((i_bs + 1) * m) {
                        let re = 2 * (k * mi + a);
                        hess[re][re] += 2.0 * quad_scale * inv;
                        hess[re + 1][re + 1] += 2.0 * quad_scale * inv;
                    }
                }
            }
        };

        let (gs, _) = self.constraints(z);
        for i in 0..bs {
            // Gradient of x_i: 2 * w restricted to BS i's antennas.
            let mut dx: Vec<(usize, f64)> = Vec::with_capacity(2 * m * users);
            for k in 0..users {
                for a in (i * m)..((i + 1) * m) {
                    let re = 2 * (k * mi + a);
                    dx.push((re, 2.0 * z[re]));
                    dx.push((re + 1, 2.0 * z[re + 1]));
                }
            }
            let g_alpha = gs[5 * i];
            let g_beta = gs[5 * i + 1];
            let g_cap = gs[5 * i + 2];
            let g_up = gs[5 * i + 3];
            let g_lo = gs[5 * i + 4];

            for (g, price) in [(g_alpha, self.fast.alpha_rt), (g_beta, self.fast.beta_rt)] {
                let mut dg: Vec<(usize, f64)> =
                    dx.iter().map(|&(idx, v)| (idx, price * v)).collect();
                dg.push((self.nw + i, price));
                dg.push((self.nw + bs + i, -1.0));
                add_scalar(&mut grad, &mut hess, g, &dg, price, i);
            }
            add_scalar(&mut grad, &mut hess, g_cap, &dx, 1.0, i);
            add_scalar(&mut grad, &mut hess, g_up, &[(self.nw + i, 1.0)], 0.0, i);
            add_scalar(&mut grad, &mut hess, g_lo, &[(self.nw + i, -1.0)], 0.0, i);
        }

        // SOC barriers -log(F_k), F = t^2 - sum |h_k^H w_l|^2 - sigma^2.
        for k in 0..users {
            let hk = self.fast.h.col(k);
            let inv_sq = 1.0 / cfg.gamma[k].sqrt();
            // t row: t = sum_a (hr wr + hi wi) / sqrt(gamma).
            let mut t_row = vec![0.0; n];
            for a in 0..mi {
                t_row[2 * (k * mi + a)] = inv_sq * hk[a].re;
                t_row[2 * (k * mi + a) + 1] = inv_sq * hk[a].im;
            }
            let t_val: f64 = t_row.iter().zip(z).map(|(r, zv)| r * zv).sum();
            let mut f_val = t_val * t_val - cfg.sigma2[k];
            let mut df = vec![0.0; n];
            for idx in 0..n {
                df[idx] += 2.0 * t_val * t_row[idx];
            }
            let mut u_rows: Vec<(Vec<f64>, f64)> = Vec::new();
            for l in 0..users {
                if l == k {
                    continue;
                }
                let mut re_row = vec![0.0; n];
                let mut im_row = vec![0.0; n];
                for a in 0..mi {
                    re_row[2 * (l * mi + a)] = hk[a].re;
                    re_row[2 * (l * mi + a) + 1] = hk[a].im;
                    im_row[2 * (l * mi + a)] = -hk[a].im;
                    im_row[2 * (l * mi + a) + 1] = hk[a].re;
                }
                for row in [re_row, im_row] {
                    let val: f64 = row.iter().zip(z).map(|(r, zv)| r * zv).sum();
                    f_val -= val * val;
                    for idx in 0..n {
                        df[idx] -= 2.0 * val * row[idx];
                    }
                    u_rows.push((row, val));
                }
            }
            let inv = 1.0 / f_val;
            for idx in 0..n {
                grad[idx] -= df[idx] * inv;
            }
            // hess += df df' / F^2 - H_F / F with
            // H_F = 2 t_row t_row' - 2 sum u_row u_row'.
            for r in 0..n {
                if df[r] == 0.0 && t_row[r] == 0.0 {
                    let mut all_zero = true;
                    for (row, _) in &u_rows {
                        if row[r] != 0.0 {
                            all_zero = false;
                            break;
                        }
                    }
                    if all_zero {
                        continue;
                    }
                }
                for c in 0..n {
                    let mut h_f = 2.0 * t_row[r] * t_row[c];
                    for (row, _) in &u_rows {
                        h_f -= 2.0 * row[r] * row[c];
                    }
                    hess[r][c] += df[r] * df[c] * inv * inv - h_f * inv;
                }
            }
        }

        (grad, hess)
    }
}

/// Solve the per-slot problem by a primal log-barrier Newton method.
///
/// `e` holds interval totals (divided by the interval length internally),
/// matching [`crate::socp::build_realtime_problem`].
pub fn solve_realtime_barrier(
    fast: &FastState,
    e: &[f64],
    q_frozen: &[f64],
    v: f64,
    cfg: &ValidatedConfig,
) -> Result<BarrierSolution, BarrierError> {
    let nw = 2 * cfg.mi() * cfg.users;
    let n = nw + 2 * cfg.bs;
    let t = cfg.slots_per_interval as f64;
    let prob = BarrierProblem {
        fast,
        cfg,
        e_over_t: e.iter().map(|&x| x / t).collect(),
        q_frozen: q_frozen.to_vec(),
        v,
        nw,
        n,
    };

    // Strictly feasible start: zero forcing with margin, battery at rest,
    // epigraphs one unit above their active constraints.
    let mut z = vec![0.0; n];
    let mut ok = false;
    for margin in [0.2, 0.05, 0.01] {
        if let Some(w) = zero_forcing_start(fast, cfg, margin) {
            for (idx, zc) in w.iter().enumerate() {
                z[2 * idx] = zc.re;
                z[2 * idx + 1] = zc.im;
            }
            for i in 0..cfg.bs {
                z[nw + i] = 0.0;
                let x_i = prob.bs_power(&z, i);
                let base = cfg.p_c + x_i - prob.e_over_t[i];
                z[nw + cfg.bs + i] = (fast.alpha_rt * base).max(fast.beta_rt * base) + 1.0;
            }
            if prob.strictly_feasible(&z) {
                ok = true;
                break;
            }
        }
    }
    if !ok {
        return Err(BarrierError::NoFeasibleStart(
            "zero-forcing point violates a cap",
        ));
    }

    // Equality rows: Im{h_k^H w_k} = 0.
    let k_eq = cfg.users;
    let mi = cfg.mi();
    let mut a_eq = vec![vec![0.0; n]; k_eq];
    for k in 0..cfg.users {
        let hk = fast.h.col(k);
        for a in 0..mi {
            a_eq[k][2 * (k * mi + a)] = -hk[a].im;
            a_eq[k][2 * (k * mi + a) + 1] = hk[a].re;
        }
    }

    // Barrier degree: one per scalar inequality, two per SOC.
    let m_eff = (5 * cfg.bs + 2 * cfg.users) as f64;
    let mut tb = 1.0;
    let gap_tol = 1e-9;
    let mut newton_steps = 0usize;

    loop {
        // Centering on min tb*objective + barrier, subject to the phase rows.
        for _ in 0..60 {
            let (grad, hess) = prob.derivatives(&z, tb);
            let dim = n + k_eq;
            let mut kkt = vec![vec![0.0; dim]; dim];
            let mut rhs = vec![0.0; dim];
            for r in 0..n {
                kkt[r][..n].copy_from_slice(&hess[r]);
                rhs[r] = -grad[r];
            }
            for (eq, row) in a_eq.iter().enumerate() {
                for c in 0..n {
                    kkt[n + eq][c] = row[c];
                    kkt[c][n + eq] = row[c];
                }
            }
            let Some(sol) = solve_dense(kkt, rhs) else {
                return Err(BarrierError::Stalled(m_eff / tb));
            };
            let dz = &sol[..n];
            let decrement: f64 = -grad.iter().zip(dz).map(|(g, d)| g * d).sum::<f64>();
            newton_steps += 1;
            if decrement < 2e-11 {
                break;
            }
            let phi0 = prob.barrier_value(&z, tb);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> =
                    z.iter().zip(dz).map(|(zv, d)| zv + step * d).collect();
                if prob.strictly_feasible(&cand)
                    && prob.barrier_value(&cand, tb) <= phi0 - 0.25 * step * decrement
                {
                    z = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let obj = prob.objective(&z);
        if m_eff / tb <= gap_tol * obj.abs().max(1.0) {
            let w = Beamformers::from_interleaved(mi, cfg.users, &z[..nw]);
            let p_b = (0..cfg.bs).map(|i| z[nw + i]).collect();
            return Ok(BarrierSolution {
                objective: obj,
                w,
                p_b,
                newton_steps,
                gap_bound: m_eff / tb,
            });
        }
        tb *= 10.0;
        if tb > 1e16 {
            return Err(BarrierError::Stalled(m_eff / tb));
        }
    }
}
