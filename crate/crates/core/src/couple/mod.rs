//! Split-chain coupling of two copies of an MCRE driven by the same environment.
//!
//! Outside the small set both copies move with shared noise. Inside it (both copies), a
//! shared Bernoulli(1 - beta(R, y)) decides regeneration: on success both jump to one
//! draw from `kappa_R(y, .)`, otherwise each moves by the residual kernel
//! `(Q - (1 - beta) kappa) / beta`, sampled by rejection from `Q` with a proposal and
//! acceptance stream shared by the two copies. Once equal, the copies stay equal.

mod estimate;
mod random_times;

use serde::Serialize;

pub use estimate::{estimate_b, forward_couple_stationary, BCurve, ForwardCoupling, InitLaw};
pub use random_times::{calibrate_quenched, drift_along_trajectory, quenched_bound, random_times, RandomTimes};

use crate::certify::MinorizationCertificate;
use crate::dynamics::{RandomMapKernel, StatePath, Trajectory};
use crate::error::{ensure, Error, Result};
use crate::rng::{Role, StepRng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RegenerationMode {
    /// Nummelin splitting on the small set.
    Split,
    /// Common random numbers only; no regeneration.
    SharedNoise,
}

/// A kernel, its minorization and the small-set level used for coupling.
#[derive(Clone, Debug)]
pub struct CouplingKernel {
    pub base: RandomMapKernel,
    pub minor: MinorizationCertificate,
    pub r: f64,
    pub mode: RegenerationMode,
    /// Cap on rejection iterations for one residual draw.
    pub max_iter: usize,
}

impl CouplingKernel {
    pub fn new(base: RandomMapKernel, minor: MinorizationCertificate, r: f64, mode: RegenerationMode) -> Result<Self> {
        ensure(r >= 0.0, "R", "must be >= 0")?;
        if mode == RegenerationMode::Split {
            ensure(base.has_density(), "kernel", "split coupling needs the transition density")?;
            ensure(minor.has_density(), "minor", "split coupling needs the kappa density")?;
        }
        ensure(
            minor.p == base.step_count(),
            "minor.p",
            "minorization and kernel step counts differ",
        )?;
        Ok(CouplingKernel {
            base,
            minor,
            r,
            mode,
            max_iter: 100_000,
        })
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn both_small(&self, x1: &[f64], x2: &[f64]) -> bool {
        self.minor.in_small_set(self.r, x1) && self.minor.in_small_set(self.r, x2)
    }

    /// Rejection-sampled residual step for both copies from one shared stream.
    fn residual_pair(
        &self,
        x1: &[f64],
        x2: &[f64],
        y: &[f64],
        omb: f64,
        rng: &mut StepRng,
        out1: &mut [f64],
        out2: &mut [f64],
    ) -> Result<()> {
        let k = self.base.noise_arity();
        let mut u = vec![0.0; k];
        let mut prop = vec![0.0; x1.len()];
        let mut done = [false, false];
        for _ in 0..self.max_iter {
            rng.fill_uniform(&mut u);
            let v = rng.uniform();
            for (c, (x, out)) in [(x1, &mut *out1), (x2, &mut *out2)].into_iter().enumerate() {
                if done[c] {
                    continue;
                }
                self.base.apply_into(x, y, &u, &mut prop);
                let q = self.base.density(y, x, &prop).unwrap_or(0.0);
                if q <= 0.0 {
                    continue;
                }
                let kap = self.minor.kappa_density(self.r, y, &prop).unwrap_or(0.0);
                let ratio = (q - omb * kap) / q;
                if ratio < -1e-9 {
                    return Err(Error::Certificate(format!(
                        "residual ratio {ratio} < 0 at x = {x:?}, x' = {prop:?}, y = {y:?}: \
                         Q(y, x, x') = {q} is below (1 - beta) kappa = {}",
                        omb * kap
                    )));
                }
                if v <= ratio {
                    out.copy_from_slice(&prop);
                    done[c] = true;
                }
            }
            if done[0] && done[1] {
                return Ok(());
            }
        }
        Err(Error::Numerical(format!(
            "residual rejection exceeded {} iterations (beta = {}); the certificate leaves almost no residual mass",
            self.max_iter,
            1.0 - omb
        )))
    }
}

/// Two coupled paths on `t = j, ..., j + n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingRun {
    pub j: i64,
    pub p: usize,
    #[serde(skip)]
    pub path1: StatePath,
    #[serde(skip)]
    pub path2: StatePath,
    /// Step offset (from `j`) of the first equality; `None` if the paths never met.
    pub coupled_at: Option<usize>,
    /// Step offsets at which the common regeneration draw fired.
    pub regenerations: Vec<usize>,
}

impl CouplingRun {
    /// `P(Z^1_{j+n} != Z^2_{j+n})` indicator.
    pub fn uncoupled_at(&self, n: usize) -> bool {
        self.coupled_at.is_none_or(|c| c > n)
    }
}

/// Couple copies started at `x1`, `x2` at time `j` for `n` steps. Noise for the step
/// producing `X_{t+1}` comes from slot `t + 1` of the `Noise` (base moves) and
/// `Partner` (regeneration and residual) streams of replication `rep`.
#[allow(clippy::too_many_arguments)]
pub fn couple_paths(
    ck: &CouplingKernel,
    env: &Trajectory,
    x1: &[f64],
    x2: &[f64],
    j: i64,
    n: usize,
    seed: u64,
    rep: u64,
) -> Result<CouplingRun> {
    let base = &ck.base;
    let d = base.state_dim();
    if x1.len() != d || x2.len() != d {
        return Err(Error::dim("coupling start", d, x1.len().min(x2.len())));
    }
    if env.dim != base.env_dim() {
        return Err(Error::dim("environment", base.env_dim(), env.dim));
    }
    if n > 0 && (!env.covers(j) || !env.covers(j + n as i64 - 1)) {
        return Err(Error::config(
            "horizon",
            format!("coupling needs the environment on [{j}, {}]", j + n as i64 - 1),
        ));
    }
    let noise = Stream::new(seed, rep, Role::Noise);
    let partner = Stream::new(seed, rep, Role::Partner);
    let k = base.noise_arity();
    let mut p1 = Vec::with_capacity((n + 1) * d);
    let mut p2 = Vec::with_capacity((n + 1) * d);
    p1.extend_from_slice(x1);
    p2.extend_from_slice(x2);
    let mut coupled_at = if x1 == x2 { Some(0) } else { None };
    let mut regenerations = Vec::new();
    let mut u = vec![0.0; k];
    let mut n1 = vec![0.0; d];
    let mut n2 = vec![0.0; d];
    for s in 0..n {
        let t = j + s as i64;
        let y = env.get(t);
        let a = &p1[s * d..(s + 1) * d];
        let b = &p2[s * d..(s + 1) * d];
        if coupled_at.is_some() {
            noise.at(t + 1).fill_uniform(&mut u);
            base.apply_into(a, y, &u, &mut n1);
            n2.copy_from_slice(&n1);
        } else if ck.mode == RegenerationMode::Split && ck.both_small(a, b) {
            let omb = 1.0 - ck.minor.beta(ck.r, y);
            let mut rng = partner.at(t + 1);
            if rng.uniform() < omb {
                let z = ck.minor.sample_kappa(ck.r, y, &mut rng);
                n1.copy_from_slice(&z);
                n2.copy_from_slice(&z);
                regenerations.push(s + 1);
            } else {
                ck.residual_pair(a, b, y, omb, &mut rng, &mut n1, &mut n2)?;
            }
        } else {
            noise.at(t + 1).fill_uniform(&mut u);
            base.apply_into(a, y, &u, &mut n1);
            base.apply_into(b, y, &u, &mut n2);
        }
        if n1.iter().chain(&n2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: t + 1,
                context: format!("coupling {}", base.describe()),
                state: a.to_vec(),
            });
        }
        if coupled_at.is_none() && n1 == n2 {
            coupled_at = Some(s + 1);
        }
        p1.extend_from_slice(&n1);
        p2.extend_from_slice(&n2);
    }
    Ok(CouplingRun {
        j,
        p: base.step_count(),
        path1: StatePath { t0: j, dim: d, values: p1 },
        path2: StatePath { t0: j, dim: d, values: p2 },
        coupled_at,
        regenerations,
    })
}
