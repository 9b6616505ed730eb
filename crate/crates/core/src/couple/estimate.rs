use serde::Serialize;

use crate::dynamics::{sample_environment_rep, simulate_from, EnvironmentSpec, Trajectory};
use crate::error::{ensure, Error, Result};
use crate::par;
use crate::report::{Cell, Table};
use crate::rng::{derive_seed, Role, Stream};
use crate::stats::{binomial_se, isotonic_nonincreasing};

use super::{couple_paths, CouplingKernel};

/// Law of `X_{jp}` for the `b(n)` estimator.
#[derive(Clone, Debug, PartialEq)]
pub enum InitLaw {
    /// `X_{jp} = x`.
    Point(Vec<f64>),
    /// `X_{jp}` obtained by running the chain from `x` at time 0 through the same environment.
    Simulated(Vec<f64>),
}

/// Non-coupling frequencies `n -> max_j P(Z^{X_j} != Z^{x0})` over a lag grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BCurve {
    pub n_grid: Vec<usize>,
    pub raw: Vec<f64>,
    /// Isotonic (non-increasing) correction of `raw`.
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub j_argmax: Vec<usize>,
    pub reps: usize,
}

impl BCurve {
    /// Columns: n, estimate, stderr, j_argmax (estimate = raw frequency).
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["n", "estimate", "stderr", "j_argmax"]);
        for (k, n) in self.n_grid.iter().enumerate() {
            t.push(vec![
                Cell::from(*n),
                self.raw[k].into(),
                self.stderr[k].into(),
                Cell::from(self.j_argmax[k]),
            ]);
        }
        t
    }
}

fn env_for(
    env: &EnvironmentSpec,
    t_min_block: i64,
    t_max_block: i64,
    p: usize,
    seed: u64,
    rep: u64,
) -> Result<Trajectory> {
    let p = p as i64;
    let base = sample_environment_rep(env, t_min_block * p, (t_max_block + 1) * p - 1, seed, rep)?;
    Ok(if p == 1 { base } else { base.blocks(p as usize) })
}

/// Monte Carlo `b(n) = sup_{j in j_grid} P(Z_{jp,(j+n)p}^{X_{jp}} != Z_{jp,(j+n)p}^{x0})`.
/// Times are in units of the coupling kernel's step count `p`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_b(
    ck: &CouplingKernel,
    env: &EnvironmentSpec,
    x0: &[f64],
    init: &InitLaw,
    n_grid: &[usize],
    j_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<BCurve> {
    ensure(!n_grid.is_empty(), "n_grid", "must not be empty")?;
    ensure(!j_grid.is_empty(), "j_grid", "must not be empty")?;
    ensure(reps >= 1, "reps", "must be >= 1")?;
    env.validate()?;
    let p = ck.base.step_count();
    let n_max = *n_grid.iter().max().unwrap();
    let j_max = *j_grid.iter().max().unwrap();
    let nn = n_grid.len();
    let width = j_grid.len() * nn;
    let counts = par::sum(reps, width, |rep| {
        let y = env_for(env, 0, (j_max + n_max).max(1) as i64, p, seed, rep as u64)?;
        let mut out = vec![0.0; width];
        for (jk, &j) in j_grid.iter().enumerate() {
            let xj = match init {
                InitLaw::Point(x) => x.clone(),
                InitLaw::Simulated(xs) => {
                    let burn = Stream::new(derive_seed(seed, j as u64), rep as u64, Role::BurnIn);
                    simulate_from(&ck.base, &y, xs, 0, j, &burn)?.last().to_vec()
                }
            };
            let run = couple_paths(ck, &y, &xj, x0, j as i64, n_max, derive_seed(seed, j as u64), rep as u64)?;
            for (k, &n) in n_grid.iter().enumerate() {
                if run.uncoupled_at(n) {
                    out[jk * nn + k] = 1.0;
                }
            }
        }
        Ok(out)
    })?;
    let mut raw = vec![0.0; nn];
    let mut j_argmax = vec![j_grid[0]; nn];
    for k in 0..nn {
        let mut best = -1.0;
        for (jk, &j) in j_grid.iter().enumerate() {
            let f = counts[jk * nn + k] / reps as f64;
            if f > best {
                best = f;
                j_argmax[k] = j;
            }
        }
        raw[k] = best;
    }
    let stderr = raw.iter().map(|p| binomial_se(*p, reps)).collect();
    Ok(BCurve {
        n_grid: n_grid.to_vec(),
        values: isotonic_nonincreasing(&raw),
        raw,
        stderr,
        j_argmax,
        reps,
    })
}

/// Forward coupling with an approximate stationary partner.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForwardCoupling {
    /// Coupling step per replication (`None` = not coupled within the horizon).
    pub tau: Vec<Option<usize>>,
    /// `P(tau > n)` for `n = 0..=horizon`.
    pub tail: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `2 P(tau > n)`, an upper bound on the total variation norm `sum |L(X_n) - L(X*_n)|`.
    pub tv: Vec<f64>,
    pub burn_in: usize,
    /// The partner is a burn-in approximation of the stationary solution.
    pub burn_in_approximation: bool,
}

impl ForwardCoupling {
    /// Columns: n, estimate, stderr, j_argmax (j_argmax = 0).
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["n", "estimate", "stderr", "j_argmax"]);
        for (n, p) in self.tail.iter().enumerate() {
            t.push(vec![Cell::from(n), (*p).into(), self.stderr[n].into(), Cell::from(0usize)]);
        }
        t
    }
}

/// Couple the chain from `x0` at time 0 with a partner started at `x0` at time `-burn_in`.
pub fn forward_couple_stationary(
    ck: &CouplingKernel,
    env: &EnvironmentSpec,
    x0: &[f64],
    burn_in: usize,
    horizon: usize,
    reps: usize,
    seed: u64,
) -> Result<ForwardCoupling> {
    env.validate()?;
    if !env.stationary || !env.two_sided {
        return Err(Error::config("env", "forward coupling needs a stationary two-sided environment"));
    }
    ensure(burn_in >= 1, "burn_in", "must be >= 1")?;
    ensure(reps >= 1, "reps", "must be >= 1")?;
    let p = ck.base.step_count();
    let tau = par::map(reps, |rep| {
        let y = env_for(env, -(burn_in as i64), horizon.max(1) as i64, p, seed, rep as u64)?;
        let burn = Stream::new(seed, rep as u64, Role::BurnIn);
        let star = simulate_from(&ck.base, &y, x0, -(burn_in as i64), burn_in, &burn)?;
        let run = couple_paths(ck, &y, x0, star.last(), 0, horizon, seed, rep as u64)?;
        Ok(run.coupled_at)
    })?;
    let mut tail = vec![0.0; horizon + 1];
    for t in &tau {
        let upto = t.map_or(horizon + 1, |c| c.min(horizon + 1));
        for v in tail.iter_mut().take(upto) {
            *v += 1.0;
        }
    }
    for v in tail.iter_mut() {
        *v /= reps as f64;
    }
    let stderr = tail.iter().map(|p| binomial_se(*p, reps)).collect();
    let tv = tail.iter().map(|p| 2.0 * p).collect();
    Ok(ForwardCoupling {
        tau,
        tail,
        stderr,
        tv,
        burn_in,
        burn_in_approximation: true,
    })
}
