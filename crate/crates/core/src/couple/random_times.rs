use serde::Serialize;

use crate::certify::{DriftCertificate, MinorizationCertificate};
use crate::dynamics::Trajectory;
use crate::error::{ensure, Error, Result};
use crate::stats::fit_exponential_envelope;

/// Environment-measurable times at which drift products, excursion sums and the
/// minorization constant are simultaneously favorable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandomTimes {
    pub c: f64,
    pub beta_bar: f64,
    /// `4 C^2`.
    pub r_c: f64,
    pub j: i64,
    pub horizon: usize,
    /// `tau_tilde_0 = ceil(C) + j` followed by every qualifying time up to `n + j`.
    pub tau_tilde: Vec<i64>,
    /// `tau_i = tau_tilde_{i ceil(C)}`.
    pub tau: Vec<i64>,
}

impl RandomTimes {
    /// `L(n, j) = max{i : tau_i <= n + j}` (0 when no `tau_i` qualifies).
    pub fn l(&self, n: usize) -> usize {
        let lim = n as i64 + self.j;
        self.tau.partition_point(|t| *t <= lim).saturating_sub(1)
    }

    pub fn stride(&self) -> usize {
        self.c.ceil() as usize
    }
}

fn ln_floor(g: f64) -> f64 {
    // a zero factor makes every product through it vanish; 1e-300 keeps sums finite
    g.max(1e-300).ln()
}

/// Scan `t = ceil(C) + j + 1, ..., n + j` for the three conditions
/// `gamma_{t,j}(C) <= 1 - 1/C`, `S_{t,j} <= C`, `beta(R_C, y_t) <= beta_bar`.
pub fn random_times(
    env: &Trajectory,
    drift: &DriftCertificate,
    minor: &MinorizationCertificate,
    c: f64,
    beta_bar: f64,
    j: i64,
    horizon: usize,
) -> Result<RandomTimes> {
    ensure(c > 1.0, "C", "must be > 1")?;
    ensure(beta_bar > 0.0 && beta_bar < 1.0, "beta_bar", "must lie in (0,1)")?;
    ensure(j >= 0, "j", "must be >= 0")?;
    let end = horizon as i64 + j;
    ensure(
        env.covers(j) && env.covers(end),
        "horizon",
        format!("trajectory must cover [{j}, {end}]"),
    )?;
    let ci = c.ceil() as i64;
    let r_c = 4.0 * c * c;
    let thr = (1.0 - 1.0 / c).ln();
    // prefix[k] = sum_{s=j}^{j+k-1} ln gamma_s
    let mut prefix = vec![0.0; (end - j + 1) as usize];
    let mut s_prev = 0.0;
    let mut tau_tilde = vec![ci + j];
    let mut min_prefix = f64::INFINITY;
    for t in (j + 1)..=end {
        let idx = (t - j) as usize;
        let yprev = env.get(t - 1);
        let g = drift.gamma.eval(yprev);
        let kk = drift.k.eval(yprev);
        if !g.is_finite() || !kk.is_finite() {
            return Err(Error::NonFinite {
                step: t - 1,
                context: "gamma/K along the trajectory".into(),
                state: yprev.to_vec(),
            });
        }
        prefix[idx] = prefix[idx - 1] + ln_floor(g);
        // S_{t,j} = K_{t-1} + gamma_{t-1} S_{t-1,j}
        s_prev = kk + if t - 1 > j { g * s_prev } else { 0.0 };
        // sup_{C <= l <= t-j} ln(gamma_{t-1} ... gamma_{t-l}) = prefix[t-j] - min_{k <= t-j-C} prefix[k]
        if idx as i64 - ci >= 0 {
            min_prefix = min_prefix.min(prefix[(idx as i64 - ci) as usize]);
        }
        if t <= ci + j {
            continue;
        }
        let log_gamma_tj = prefix[idx] - min_prefix;
        let ok = log_gamma_tj <= thr && s_prev <= c && minor.beta(r_c, env.get(t)) <= beta_bar;
        if ok {
            tau_tilde.push(t);
        }
    }
    let stride = ci as usize;
    let tau = tau_tilde.iter().step_by(stride).copied().collect();
    Ok(RandomTimes {
        c,
        beta_bar,
        r_c,
        j,
        horizon,
        tau_tilde,
        tau,
    })
}

/// `min(1, M (1 + V1 + V2) rho^L(n, j))`.
pub fn quenched_bound(rt: &RandomTimes, n: usize, m: f64, rho: f64, v1: f64, v2: f64) -> Result<f64> {
    ensure(m > 0.0, "M", "must be positive")?;
    ensure(rho > 0.0 && rho < 1.0, "rho", "must lie in (0,1)")?;
    Ok((m * (1.0 + v1 + v2) * rho.powi(rt.l(n) as i32)).min(1.0))
}

/// Fitted (never certified) `(M, rho)`: least-squares slope of log non-coupling
/// frequency against `L`, intercept raised to the largest residual. `points` are
/// `(L, frequency)` pairs observed from starts with `1 + V1 + V2 = weight`.
pub fn calibrate_quenched(points: &[(usize, f64)], weight: f64) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.iter().map(|(l, f)| (*l as f64, *f)).collect();
    let (c, k) = fit_exponential_envelope(&pts)?;
    if k <= 0.0 {
        return None;
    }
    Some((c / weight, (-k).exp()))
}

/// `(prod_{r=l}^{k-1} gamma(y_r), sum_{r=l}^{k-1} K(y_r) prod_{i=r+1}^{k-1} gamma(y_i))`.
pub fn drift_along_trajectory(cert: &DriftCertificate, env: &Trajectory, l: i64, k: i64) -> Result<(f64, f64)> {
    ensure(l < k, "l", "must be < k")?;
    ensure(
        env.covers(l) && env.covers(k - 1),
        "k",
        format!("trajectory covers [{}, {}]", env.t_min, env.t_max),
    )?;
    let mut log_g = 0.0_f64;
    let mut add = 0.0;
    for r in (l..k).rev() {
        let y = env.get(r);
        add += cert.k.eval(y) * log_g.exp();
        log_g += cert.gamma.eval(y).ln();
    }
    Ok((log_g.exp(), add))
}
