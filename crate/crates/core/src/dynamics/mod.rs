//! Environment processes, random-map kernels and MCRE simulation.
//!
//! A kernel is a map `f(x, y, u)` with `u` uniform on `[0,1]^k`; the argument order
//! (state, environment, noise) is the same everywhere in the crate. Noise for the step
//! that produces `X_{t+1}` is read from the stream slot `t + 1`.

mod environment;
mod kernel;

pub use environment::{
    sample_environment, sample_environment_rep, stream_environment, CustomSource, EnvIter, EnvKind,
    EnvironmentSpec, IidLaw, MixingRateDescriptor, Trajectory,
};
pub use kernel::{
    apply_kernel, compose_apply, compose_p, FiniteKernel, FnKernel, GaussianKernel, RandomMap, RandomMapKernel,
};

use crate::error::{Error, Result};
use crate::mixing::{exact_alpha_finite, AlphaMode, FiniteChain};
use crate::rng::{Role, Stream};

/// A simulated state path `X_{t0}, ..., X_{t0+steps}` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePath {
    pub t0: i64,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl StatePath {
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn get(&self, t: i64) -> &[f64] {
        let i = (t - self.t0) as usize * self.dim;
        &self.values[i..i + self.dim]
    }
    pub fn last(&self) -> &[f64] {
        &self.values[self.values.len() - self.dim..]
    }
    /// First coordinate of every state.
    pub fn first_coordinate(&self) -> Vec<f64> {
        self.values.chunks(self.dim).map(|c| c[0]).collect()
    }
}

/// Run `steps` transitions from `x0` at time `t0`, reading env values `y_{t0}, ...` and
/// noise from `noise`.
pub fn simulate_from(
    kernel: &RandomMapKernel,
    env: &Trajectory,
    x0: &[f64],
    t0: i64,
    steps: usize,
    noise: &Stream,
) -> Result<StatePath> {
    let d = kernel.state_dim();
    if x0.len() != d {
        return Err(Error::dim("initial state", d, x0.len()));
    }
    if env.dim != kernel.env_dim() {
        return Err(Error::dim("environment", kernel.env_dim(), env.dim));
    }
    if steps > 0 && (!env.covers(t0) || !env.covers(t0 + steps as i64 - 1)) {
        return Err(Error::config(
            "horizon",
            format!(
                "needs environment on [{t0}, {}], trajectory covers [{}, {}]",
                t0 + steps as i64 - 1,
                env.t_min,
                env.t_max
            ),
        ));
    }
    let k = kernel.noise_arity();
    let mut values = Vec::with_capacity((steps + 1) * d);
    values.extend_from_slice(x0);
    let mut u = vec![0.0; k];
    let mut next = vec![0.0; d];
    for s in 0..steps {
        let t = t0 + s as i64;
        noise.at(t + 1).fill_uniform(&mut u);
        let cur = &values[s * d..(s + 1) * d];
        kernel.apply_into(cur, env.get(t), &u, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: t + 1,
                context: kernel.describe(),
                state: values[s * d..(s + 1) * d].to_vec(),
            });
        }
        values.extend_from_slice(&next);
    }
    Ok(StatePath { t0, dim: d, values })
}

/// Simulate over the whole trajectory: `X_{t_min} = x0`, last state `X_{t_max + 1}`.
pub fn simulate_mcre(kernel: &RandomMapKernel, env: &Trajectory, x0: &[f64], seed: u64) -> Result<StatePath> {
    let stream = Stream::new(seed, 0, Role::Noise);
    simulate_from(kernel, env, x0, env.t_min, env.len(), &stream)
}

/// Upper bound on the strong mixing coefficient of the environment at lag `n`.
pub fn theoretical_alpha(spec: &EnvironmentSpec, n: usize) -> Result<f64> {
    spec.validate()?;
    if n == 0 {
        return Ok(0.25);
    }
    match &spec.kind {
        EnvKind::Iid(_) => return Ok(0.0),
        EnvKind::MDependent { m, .. } if n > *m => return Ok(0.0),
        EnvKind::FiniteMarkov { transition, .. } => {
            // Emission noise and level maps are functions of the hidden chain plus
            // independent noise, so the hidden chain's coefficient bounds them.
            let init = spec
                .finite_initial_law()
                .ok_or_else(|| Error::config("environment.initial", "required"))?;
            let window = if spec.stationary { 0 } else { 64 };
            let chain = FiniteChain::new(transition.clone(), init)?;
            let r = exact_alpha_finite(&chain, n, window, AlphaMode::Auto)?;
            return Ok(r.value.min(0.25));
        }
        _ => {}
    }
    match &spec.known_rate {
        Some(rate) => Ok(rate.value(n)),
        None => Err(Error::Unsupported(format!(
            "no known mixing rate for a {} environment",
            spec.kind.name()
        ))),
    }
}

/// Time-averaged occupation frequencies of a finite-state path over `0..m`.
pub fn occupation(path: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m];
    for x in path {
        c[*x as usize] += 1.0;
    }
    let n = path.len() as f64;
    c.iter().map(|v| v / n).collect()
}
