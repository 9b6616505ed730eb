use serde::Serialize;

use crate::dynamics::{sample_environment_rep, simulate_from, EnvironmentSpec, FiniteKernel, RandomMapKernel};
use crate::error::{ensure, Error, Result};
use crate::par;
use crate::report::{Cell, Table};
use crate::rng::{Role, StepRng, Stream};

use super::{DriftCertificate, Lyapunov, MinorizationCertificate, SummabilityReport};

/// Draws the `i`-th test pair `(x, y)`.
pub type PairSampler = dyn Fn(usize, &mut StepRng) -> (Vec<f64>, Vec<f64>) + Sync + Send;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub index: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
    pub violation_fraction: f64,
    pub z: f64,
}

impl CheckReport {
    fn from_rows(rows: Vec<CheckRow>, z: f64) -> Self {
        let v = rows.iter().filter(|r| r.violated).count();
        let n = rows.len().max(1);
        CheckReport {
            violation_fraction: v as f64 / n as f64,
            rows,
            z,
        }
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violated).count()
    }

    /// Columns: index, estimate, stderr, bound, violated.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["index", "estimate", "stderr", "bound", "violated"]);
        for r in &self.rows {
            t.push(vec![
                Cell::from(r.index),
                r.estimate.into(),
                r.stderr.into(),
                r.bound.into(),
                r.violated.into(),
            ]);
        }
        t
    }
}

fn check_z(z: f64) -> Result<()> {
    ensure((2.0..=5.0).contains(&z), "z", "violation threshold must lie in [2, 5] standard errors")
}

fn exceeds(estimate: f64, bound: f64, se: f64, z: f64) -> bool {
    estimate - bound > z * se + 1e-12 * bound.abs().max(1.0)
}

#[allow(clippy::too_many_arguments)]
fn mc_expectation_check(
    kernel: &RandomMapKernel,
    v: &Lyapunov,
    bound: &(dyn Fn(&[f64], &[f64]) -> f64 + Sync),
    sampler: &PairSampler,
    n_pairs: usize,
    n_noise: usize,
    seed: u64,
    z: f64,
) -> Result<CheckReport> {
    ensure(n_pairs >= 1, "n_pairs", "must be >= 1")?;
    ensure(n_noise >= 1, "n_noise", "must be >= 1")?;
    check_z(z)?;
    let k = kernel.noise_arity();
    let rows = par::map(n_pairs, |i| {
        let mut srng = Stream::new(seed, i as u64, Role::Sampler).at(0);
        let (x, y) = sampler(i, &mut srng);
        if x.len() != kernel.state_dim() {
            return Err(Error::dim("sampled state", kernel.state_dim(), x.len()));
        }
        if y.len() != kernel.env_dim() {
            return Err(Error::dim("sampled env value", kernel.env_dim(), y.len()));
        }
        let mut nrng = Stream::new(seed, i as u64, Role::Noise).at(0);
        let mut u = vec![0.0; k];
        let mut out = vec![0.0; x.len()];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n_noise {
            nrng.fill_uniform(&mut u);
            kernel.apply_into(&x, &y, &u, &mut out);
            let val = v.eval(&out);
            if !val.is_finite() {
                return Err(Error::NonFinite {
                    step: 1,
                    context: format!("V after one step of {}", kernel.describe()),
                    state: x.clone(),
                });
            }
            s += val;
            s2 += val * val;
        }
        let nf = n_noise as f64;
        let mean = s / nf;
        let var = if n_noise > 1 {
            ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        let se = (var / nf).sqrt();
        let b = bound(&x, &y);
        Ok(CheckRow {
            index: i,
            estimate: mean,
            stderr: se,
            bound: b,
            violated: exceeds(mean, b, se, z),
        })
    })?;
    Ok(CheckReport::from_rows(rows, z))
}

/// Monte Carlo check of the drift inequality at sampled `(x, y)` pairs.
pub fn verify_drift_mc(
    kernel: &RandomMapKernel,
    cert: &DriftCertificate,
    sampler: &PairSampler,
    n_pairs: usize,
    n_noise: usize,
    seed: u64,
    z: f64,
) -> Result<CheckReport> {
    ensure(
        kernel.step_count() == cert.p,
        "cert.p",
        format!("kernel has {} steps, certificate {}", kernel.step_count(), cert.p),
    )?;
    mc_expectation_check(kernel, &cert.v, &|x, y| cert.bound(x, y), sampler, n_pairs, n_noise, seed, z)
}

/// Monte Carlo check of `[Q(y)V](x) <= C (V(x) + 1)`.
#[allow(clippy::too_many_arguments)]
pub fn check_one_step_c(
    kernel: &RandomMapKernel,
    v: &Lyapunov,
    c: f64,
    sampler: &PairSampler,
    n_pairs: usize,
    n_noise: usize,
    seed: u64,
    z: f64,
) -> Result<CheckReport> {
    ensure(c > 1.0, "C", "must be > 1")?;
    mc_expectation_check(kernel, v, &|x, _y| c * (v.eval(x) + 1.0), sampler, n_pairs, n_noise, seed, z)
}

/// Closed box `{lo <= x <= hi}` (coordinatewise).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxEvent {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxEvent {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= *l && *v <= *h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinorRow {
    pub state_index: usize,
    pub event_index: usize,
    pub q_estimate: f64,
    pub kappa_estimate: f64,
    pub one_minus_beta: f64,
    pub pooled_se: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinorReport {
    pub rows: Vec<MinorRow>,
    pub violations: usize,
    pub exact: bool,
}

impl MinorReport {
    /// Columns: index, estimate, stderr, bound, violated (index = state * events + event).
    pub fn to_table(&self, events: usize) -> Table {
        let mut t = Table::new(&["index", "estimate", "stderr", "bound", "violated"]);
        for r in &self.rows {
            t.push(vec![
                Cell::from(r.state_index * events.max(1) + r.event_index),
                r.q_estimate.into(),
                r.pooled_se.into(),
                (r.one_minus_beta * r.kappa_estimate).into(),
                r.violated.into(),
            ]);
        }
        t
    }
}

/// Monte Carlo check of the minorization inequality on box events.
#[allow(clippy::too_many_arguments)]
pub fn verify_minorization_mc(
    kernel: &RandomMapKernel,
    minor: &MinorizationCertificate,
    r: f64,
    events: &[BoxEvent],
    sampler: &PairSampler,
    n_states: usize,
    n_noise: usize,
    seed: u64,
    z: f64,
) -> Result<MinorReport> {
    check_z(z)?;
    ensure(n_noise >= 1, "n_noise", "must be >= 1")?;
    ensure(!events.is_empty(), "events", "need at least one event")?;
    let d = kernel.state_dim();
    for e in events {
        ensure(e.lo.len() == d && e.hi.len() == d, "events", "box dimension must equal state dimension")?;
    }
    let k = kernel.noise_arity();
    let per_state = par::map(n_states, |i| {
        let mut srng = Stream::new(seed, i as u64, Role::Sampler).at(0);
        let (x, y) = sampler(i, &mut srng);
        if !minor.in_small_set(r, &x) {
            return Err(Error::config(
                "states",
                format!("tested state {x:?} lies outside the small set V <= {r}"),
            ));
        }
        let mut qc = vec![0usize; events.len()];
        let mut kc = vec![0usize; events.len()];
        let mut nrng = Stream::new(seed, i as u64, Role::Noise).at(0);
        let mut krng = Stream::new(seed, i as u64, Role::Partner).at(0);
        let mut u = vec![0.0; k];
        let mut out = vec![0.0; d];
        for _ in 0..n_noise {
            nrng.fill_uniform(&mut u);
            kernel.apply_into(&x, &y, &u, &mut out);
            let kx = minor.sample_kappa(r, &y, &mut krng);
            for (j, e) in events.iter().enumerate() {
                qc[j] += e.contains(&out) as usize;
                kc[j] += e.contains(&kx) as usize;
            }
        }
        let nf = n_noise as f64;
        let omb = 1.0 - minor.beta(r, &y);
        Ok((0..events.len())
            .map(|j| {
                let pq = qc[j] as f64 / nf;
                let pk = kc[j] as f64 / nf;
                let se = ((pq * (1.0 - pq) + omb * omb * pk * (1.0 - pk)) / nf).sqrt();
                MinorRow {
                    state_index: i,
                    event_index: j,
                    q_estimate: pq,
                    kappa_estimate: pk,
                    one_minus_beta: omb,
                    pooled_se: se,
                    violated: pq < omb * pk - z * se - 1e-15,
                }
            })
            .collect::<Vec<_>>())
    })?;
    let rows: Vec<MinorRow> = per_state.into_iter().flatten().collect();
    let violations = rows.iter().filter(|r| r.violated).count();
    Ok(MinorReport {
        rows,
        violations,
        exact: false,
    })
}

/// Exact check for finite kernels: `Q(y, x, x') >= (1 - beta(R, y)) kappa(y, x')` for every
/// environment state `y`, every small-set state `x` and every target `x'`.
pub fn verify_minorization_finite(kernel: &FiniteKernel, minor: &MinorizationCertificate, r: f64) -> Result<MinorReport> {
    ensure(minor.has_density(), "minor", "exact check needs the kappa density")?;
    let m = kernel.states();
    let mut rows = Vec::new();
    for y in 0..kernel.env_states() {
        let yv = [y as f64];
        let omb = 1.0 - minor.beta(r, &yv);
        let kappa: Vec<f64> = (0..m)
            .map(|b| minor.kappa_density(r, &yv, &[b as f64]).unwrap_or(0.0))
            .collect();
        let ksum: f64 = kappa.iter().sum();
        if (ksum - 1.0).abs() > 1e-9 && omb > 0.0 {
            return Err(Error::Certificate(format!("kappa(y={y}) sums to {ksum}")));
        }
        for x in 0..m {
            if !minor.in_small_set(r, &[x as f64]) {
                continue;
            }
            for (b, kb) in kappa.iter().enumerate() {
                let q = kernel.table(y)[x][b];
                rows.push(MinorRow {
                    state_index: y * m + x,
                    event_index: b,
                    q_estimate: q,
                    kappa_estimate: *kb,
                    one_minus_beta: omb,
                    pooled_se: 0.0,
                    violated: q < omb * kb - 1e-12,
                });
            }
        }
    }
    let violations = rows.iter().filter(|r| r.violated).count();
    Ok(MinorReport {
        rows,
        violations,
        exact: true,
    })
}

/// Where the moment check starts.
#[derive(Clone, Debug, PartialEq)]
pub enum StartLaw {
    Point(Vec<f64>),
    /// Run from `x0` at time `-burn_in` (two-sided environments only).
    BurnIn { x0: Vec<f64>, burn_in: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub rows: Vec<CheckRow>,
    pub sup_estimate: f64,
    pub r0: f64,
    pub violations: usize,
}

impl MomentReport {
    pub fn to_table(&self) -> Table {
        CheckReport {
            rows: self.rows.clone(),
            violation_fraction: 0.0,
            z: 3.0,
        }
        .to_table()
    }
}

/// Simulated `E[V(X_j)]` against `d_j V(x0) + r_0` for `j = 0..=horizon` (in p-step units).
#[allow(clippy::too_many_arguments)]
pub fn moment_bound_check(
    kernel: &RandomMapKernel,
    cert: &DriftCertificate,
    env: &EnvironmentSpec,
    start: &StartLaw,
    horizon: usize,
    reps: usize,
    seed: u64,
    summary: &SummabilityReport,
) -> Result<MomentReport> {
    ensure(reps >= 2, "reps", "must be >= 2")?;
    ensure(kernel.step_count() == cert.p, "cert.p", "must match the kernel step count")?;
    let r0 = summary.r0();
    ensure(r0.is_finite(), "summary", "r_0 must be finite")?;
    let p = cert.p;
    let (x0, burn) = match start {
        StartLaw::Point(x) => (x.clone(), 0usize),
        StartLaw::BurnIn { x0, burn_in } => {
            ensure(env.two_sided, "env", "burn-in start needs a two-sided environment")?;
            (x0.clone(), *burn_in)
        }
    };
    let v0 = cert.v.eval(&x0);
    let width = 2 * (horizon + 1);
    let sums = par::sum(reps, width, |rep| {
        let t_lo = -(burn as i64) * p as i64;
        let t_hi = ((horizon + 1) * p) as i64 - 1;
        let base = sample_environment_rep(env, t_lo, t_hi.max(t_lo), seed, rep as u64)?;
        let blocks = if p == 1 { base } else { base.blocks(p) };
        let noise = Stream::new(seed, rep as u64, Role::Noise);
        let t0 = -(burn as i64);
        let path = simulate_from(kernel, &blocks, &x0, t0, burn + horizon, &noise)?;
        let mut out = vec![0.0; width];
        for j in 0..=horizon {
            let v = cert.v.eval(path.get(j as i64));
            out[2 * j] = v;
            out[2 * j + 1] = v * v;
        }
        Ok(out)
    })?;
    let nf = reps as f64;
    let mut rows = Vec::with_capacity(horizon + 1);
    let mut sup: f64 = 0.0;
    for j in 0..=horizon {
        let mean = sums[2 * j] / nf;
        let var = ((sums[2 * j + 1] - nf * mean * mean) / (nf - 1.0)).max(0.0);
        let se = (var / nf).sqrt();
        let dj = summary.d_at(j + burn).unwrap_or(r0);
        let bound = dj * v0 + r0;
        sup = sup.max(mean);
        rows.push(CheckRow {
            index: j,
            estimate: mean,
            stderr: se,
            bound,
            violated: exceeds(mean, bound, se, 3.0),
        });
    }
    let violations = rows.iter().filter(|r| r.violated).count();
    Ok(MomentReport {
        rows,
        sup_estimate: sup,
        r0,
        violations,
    })
}
