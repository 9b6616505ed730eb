use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::linalg;
use crate::rng::{derive_seed, Role, StepRng, Stream};


/// Law of a single draw for i.i.d. environments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum IidLaw {
    /// Finitely many vector values with the given probabilities.
    Categorical { values: Vec<Vec<f64>>, probs: Vec<f64> },
    /// Independent normal coordinates.
    Gaussian { mean: Vec<f64>, sd: f64 },
    /// Independent uniform coordinates on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

/// User-supplied environment source for `custom-stream`. `state` is private generator
/// memory carried between indices; it is empty at the first index.
pub trait CustomSource: Send + Sync {
    fn next(&self, t: i64, state: &mut Vec<f64>, rng: &mut StepRng) -> Vec<f64>;
    fn describe(&self) -> String {
        "custom".into()
    }
}

#[derive(Clone)]
pub enum EnvKind {
    Iid(IidLaw),
    /// Finite Markov chain on `0..m`. The emitted value is `levels[state]` (or the index
    /// itself when `levels` is None) plus optional Gaussian emission noise.
    FiniteMarkov {
        transition: Vec<Vec<f64>>,
        initial: Option<Vec<f64>>,
        levels: Option<Vec<Vec<f64>>>,
        emission_sd: f64,
    },
    /// Coordinatewise `Y_t = a Y_{t-1} + sqrt(noise_var) xi_t`.
    GaussianAr1 { a: f64, noise_var: f64 },
    /// Moving average `Y_t = sum_{i=0..m} w_i xi_{t-i}` of i.i.d. standard normals.
    MDependent { m: usize, weights: Vec<f64> },
    /// Latent stationary AR(1) `U_t` (unit innovations) selects `low` or `high` according
    /// to `U_t >= threshold`; Gaussian emission noise is added.
    ThresholdModulated {
        a: f64,
        threshold: f64,
        low: Vec<f64>,
        high: Vec<f64>,
        emission_sd: f64,
    },
    CustomStream(Arc<dyn CustomSource>),
}

impl fmt::Debug for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvKind::Iid(l) => write!(f, "Iid({l:?})"),
            EnvKind::FiniteMarkov { transition, .. } => {
                write!(f, "FiniteMarkov({} states)", transition.len())
            }
            EnvKind::GaussianAr1 { a, noise_var } => write!(f, "GaussianAr1(a={a}, var={noise_var})"),
            EnvKind::MDependent { m, .. } => write!(f, "MDependent(m={m})"),
            EnvKind::ThresholdModulated { a, threshold, .. } => {
                write!(f, "ThresholdModulated(a={a}, threshold={threshold})")
            }
            EnvKind::CustomStream(s) => write!(f, "CustomStream({})", s.describe()),
        }
    }
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Iid(_) => "iid",
            EnvKind::FiniteMarkov { .. } => "finite-markov",
            EnvKind::GaussianAr1 { .. } => "gaussian-ar1",
            EnvKind::MDependent { .. } => "m-dependent",
            EnvKind::ThresholdModulated { .. } => "threshold-modulated",
            EnvKind::CustomStream(_) => "custom-stream",
        }
    }
}

/// Known mixing-rate envelope for α-type coefficients. Values are capped at 1/4.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MixingRateDescriptor {
    /// `c` up to lag `m`, zero afterwards.
    ZeroAfterLag { c: f64, m: usize },
    Geometric { c: f64, rho: f64 },
    Power { c: f64, a: f64 },
    /// Explicit values for lags 0, 1, ...; lags past the end reuse the last entry.
    Table(Vec<f64>),
}

impl MixingRateDescriptor {
    pub fn validate(&self) -> Result<()> {
        match self {
            MixingRateDescriptor::ZeroAfterLag { c, .. } => ensure(*c >= 0.0, "known_rate.c", "must be >= 0"),
            MixingRateDescriptor::Geometric { c, rho } => {
                ensure(*c >= 0.0, "known_rate.c", "must be >= 0")?;
                ensure(*rho > 0.0 && *rho < 1.0, "known_rate.rho", "must lie in (0,1)")
            }
            MixingRateDescriptor::Power { c, a } => {
                ensure(*c >= 0.0, "known_rate.c", "must be >= 0")?;
                ensure(*a > 0.0, "known_rate.a", "must be > 0")
            }
            MixingRateDescriptor::Table(v) => {
                ensure(!v.is_empty(), "known_rate.table", "must be nonempty")?;
                ensure(v.iter().all(|x| *x >= 0.0), "known_rate.table", "entries must be >= 0")?;
                ensure(
                    v.windows(2).all(|w| w[1] <= w[0]),
                    "known_rate.table",
                    "entries must be non-increasing",
                )
            }
        }
    }

    pub fn value(&self, n: usize) -> f64 {
        let v = match self {
            MixingRateDescriptor::ZeroAfterLag { c, m } => {
                if n > *m {
                    0.0
                } else {
                    *c
                }
            }
            MixingRateDescriptor::Geometric { c, rho } => c * rho.powi(n as i32),
            MixingRateDescriptor::Power { c, a } => {
                if n == 0 {
                    *c
                } else {
                    c * (n as f64).powf(-a)
                }
            }
            MixingRateDescriptor::Table(t) => t[n.min(t.len() - 1)],
        };
        v.min(0.25)
    }
}

/// Description of an environment process.
#[derive(Clone, Debug)]
pub struct EnvironmentSpec {
    pub kind: EnvKind,
    pub dimension: usize,
    pub stationary: bool,
    pub two_sided: bool,
    pub known_rate: Option<MixingRateDescriptor>,
}

impl EnvironmentSpec {
    pub fn new(kind: EnvKind, dimension: usize) -> Self {
        EnvironmentSpec {
            kind,
            dimension,
            stationary: true,
            two_sided: true,
            known_rate: None,
        }
    }

    /// i.i.d. draws from a finite set of scalar values with equal probabilities.
    pub fn iid_uniform_values(values: &[f64]) -> Self {
        let n = values.len();
        Self::new(
            EnvKind::Iid(IidLaw::Categorical {
                values: values.iter().map(|v| vec![*v]).collect(),
                probs: vec![1.0 / n as f64; n],
            }),
            1,
        )
    }

    /// Stationary finite Markov chain emitting its state index.
    pub fn finite_markov(transition: Vec<Vec<f64>>) -> Self {
        Self::new(
            EnvKind::FiniteMarkov {
                transition,
                initial: None,
                levels: None,
                emission_sd: 0.0,
            },
            1,
        )
    }

    pub fn gaussian_ar1(a: f64, noise_var: f64, dimension: usize) -> Self {
        Self::new(EnvKind::GaussianAr1 { a, noise_var }, dimension)
    }

    pub fn with_known_rate(mut self, rate: MixingRateDescriptor) -> Self {
        self.known_rate = Some(rate);
        self
    }

    pub fn one_sided(mut self) -> Self {
        self.two_sided = false;
        self
    }

    /// Identifier used in trajectories and reports.
    pub fn id(&self) -> String {
        format!("{}/d{}", self.kind.name(), self.dimension)
    }

    /// Number of states when the emitted value is a finite-state index.
    pub fn finite_cardinality(&self) -> Option<usize> {
        match &self.kind {
            EnvKind::FiniteMarkov {
                transition,
                levels: None,
                emission_sd,
                ..
            } if *emission_sd == 0.0 => Some(transition.len()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.dimension > 0, "environment.dimension", "must be positive")?;
        if let Some(r) = &self.known_rate {
            r.validate()?;
        }
        match &self.kind {
            EnvKind::Iid(law) => match law {
                IidLaw::Categorical { values, probs } => {
                    ensure(!values.is_empty(), "environment.values", "must be nonempty")?;
                    ensure(values.len() == probs.len(), "environment.probs", "length must match values")?;
                    ensure(
                        values.iter().all(|v| v.len() == self.dimension),
                        "environment.values",
                        "each value must have the environment dimension",
                    )?;
                    linalg::check_distribution(probs, "environment.probs")
                }
                IidLaw::Gaussian { mean, sd } => {
                    ensure(mean.len() == self.dimension, "environment.mean", "length must equal dimension")?;
                    ensure(*sd >= 0.0, "environment.sd", "must be >= 0")
                }
                IidLaw::Uniform { lo, hi } => ensure(lo < hi, "environment.lo", "must be below hi"),
            },
            EnvKind::FiniteMarkov {
                transition,
                initial,
                levels,
                emission_sd,
            } => {
                linalg::check_stochastic(transition, "environment.transition")?;
                if let Some(init) = initial {
                    ensure(init.len() == transition.len(), "environment.initial", "length must equal state count")?;
                    linalg::check_distribution(init, "environment.initial")?;
                }
                match levels {
                    Some(l) => {
                        ensure(l.len() == transition.len(), "environment.levels", "one level per state")?;
                        ensure(
                            l.iter().all(|v| v.len() == self.dimension),
                            "environment.levels",
                            "each level must have the environment dimension",
                        )?;
                    }
                    None => ensure(self.dimension == 1, "environment.dimension", "index-valued chains have dimension 1")?,
                }
                ensure(*emission_sd >= 0.0, "environment.emission_sd", "must be >= 0")?;
                ensure(
                    self.stationary || initial.is_some(),
                    "environment.initial",
                    "required when stationary = false",
                )
            }
            EnvKind::GaussianAr1 { a, noise_var } => {
                ensure(*noise_var >= 0.0, "environment.noise_var", "must be >= 0")?;
                ensure(
                    !self.stationary || a.abs() < 1.0,
                    "environment.a",
                    "|a| < 1 required for a stationary gaussian-ar1",
                )
            }
            EnvKind::MDependent { m, weights } => {
                ensure(weights.len() == m + 1, "environment.weights", "need m + 1 weights")
            }
            EnvKind::ThresholdModulated {
                a,
                low,
                high,
                emission_sd,
                ..
            } => {
                ensure(a.abs() < 1.0, "environment.a", "|a| < 1 required")?;
                ensure(low.len() == self.dimension, "environment.low", "length must equal dimension")?;
                ensure(high.len() == self.dimension, "environment.high", "length must equal dimension")?;
                ensure(*emission_sd >= 0.0, "environment.emission_sd", "must be >= 0")
            }
            EnvKind::CustomStream(_) => Ok(()),
        }
    }

    /// Initial law of a finite-markov environment (stationary law when `stationary`).
    pub fn finite_initial_law(&self) -> Option<Vec<f64>> {
        match &self.kind {
            EnvKind::FiniteMarkov {
                transition, initial, ..
            } => Some(match (self.stationary, initial) {
                (true, _) => linalg::stationary_distribution(transition),
                (false, Some(i)) => i.clone(),
                (false, None) => return None,
            }),
            _ => None,
        }
    }
}

/// A realized environment on `t_min..=t_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t_min: i64,
    pub t_max: i64,
    pub dim: usize,
    pub values: Vec<f64>,
    pub spec_id: String,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        (self.t_max - self.t_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn covers(&self, t: i64) -> bool {
        t >= self.t_min && t <= self.t_max
    }

    /// Value at time `t`. Panics outside the covered range.
    pub fn get(&self, t: i64) -> &[f64] {
        assert!(self.covers(t), "time {t} outside [{}, {}]", self.t_min, self.t_max);
        let i = (t - self.t_min) as usize * self.dim;
        &self.values[i..i + self.dim]
    }

    /// Build a trajectory from explicit values starting at `t_min`.
    pub fn from_values(t_min: i64, dim: usize, rows: &[Vec<f64>]) -> Self {
        Trajectory {
            t_min,
            t_max: t_min + rows.len() as i64 - 1,
            dim,
            values: rows.iter().flatten().copied().collect(),
            spec_id: "explicit".into(),
            seed: 0,
        }
    }

    /// Concatenated values `y_t, ..., y_{t+p-1}`, the environment block of a p-step kernel.
    pub fn block(&self, t: i64, p: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(p * self.dim);
        for s in 0..p as i64 {
            out.extend_from_slice(self.get(t + s));
        }
        out
    }

    /// Re-index as a trajectory of p-blocks: block `k` holds `y_{kp}, ..., y_{kp+p-1}`.
    pub fn blocks(&self, p: usize) -> Trajectory {
        assert!(p >= 1);
        let first = self.t_min.div_euclid(p as i64) + if self.t_min.rem_euclid(p as i64) == 0 { 0 } else { 1 };
        let last = (self.t_max + 1).div_euclid(p as i64) - 1;
        let mut values = Vec::new();
        for k in first..=last {
            values.extend(self.block(k * p as i64, p));
        }
        Trajectory {
            t_min: first,
            t_max: last,
            dim: self.dim * p,
            values,
            spec_id: format!("{}#block{p}", self.spec_id),
            seed: self.seed,
        }
    }
}

/// Sample `Y_{t_min}, ..., Y_{t_max}`.
pub fn sample_environment(spec: &EnvironmentSpec, t_min: i64, t_max: i64, seed: u64) -> Result<Trajectory> {
    spec.validate()?;
    ensure(t_min <= t_max, "t_min", "must not exceed t_max")?;
    if t_min < 0 && !spec.two_sided {
        return Err(Error::config("t_min", "negative index on a one-sided environment"));
    }
    let stream = Stream::new(seed, 0, Role::Environment);
    let len = (t_max - t_min + 1) as usize;
    let mut values = Vec::with_capacity(len * spec.dimension);
    let mut state = GenState::default();
    for t in t_min..=t_max {
        let y = next_value(spec, &stream, t, t == t_min, &mut state);
        debug_assert_eq!(y.len(), spec.dimension);
        values.extend_from_slice(&y);
    }
    Ok(Trajectory {
        t_min,
        t_max,
        dim: spec.dimension,
        values,
        spec_id: spec.id(),
        seed,
    })
}

/// Environment for replication `rep` of an experiment seeded with `seed`.
pub fn sample_environment_rep(spec: &EnvironmentSpec, t_min: i64, t_max: i64, seed: u64, rep: u64) -> Result<Trajectory> {
    sample_environment(spec, t_min, t_max, derive_seed(seed, rep))
}

/// Lazily generated environment values from `t_min` on.
pub struct EnvIter<'a> {
    spec: &'a EnvironmentSpec,
    stream: Stream,
    t: i64,
    first: bool,
    state: GenState,
}

impl Iterator for EnvIter<'_> {
    type Item = (i64, Vec<f64>);
    fn next(&mut self) -> Option<Self::Item> {
        let y = next_value(self.spec, &self.stream, self.t, self.first, &mut self.state);
        self.first = false;
        let t = self.t;
        self.t += 1;
        Some((t, y))
    }
}

/// Streaming generation; yields exactly the values `sample_environment` would produce.
pub fn stream_environment(spec: &EnvironmentSpec, t_min: i64, seed: u64) -> Result<EnvIter<'_>> {
    spec.validate()?;
    if t_min < 0 && !spec.two_sided {
        return Err(Error::config("t_min", "negative index on a one-sided environment"));
    }
    Ok(EnvIter {
        spec,
        stream: Stream::new(seed, 0, Role::Environment),
        t: t_min,
        first: true,
        state: GenState::default(),
    })
}

#[derive(Default)]
struct GenState {
    prev: Vec<f64>,
    regime: usize,
    latent: f64,
    cum: Vec<Vec<f64>>,
}

fn sample_index(cum: &[f64], u: f64) -> usize {
    linalg::inverse_cdf(cum, u)
}

fn next_value(spec: &EnvironmentSpec, stream: &Stream, t: i64, first: bool, st: &mut GenState) -> Vec<f64> {
    let d = spec.dimension;
    let rng = &mut stream.at(t);
    match &spec.kind {
        EnvKind::Iid(law) => match law {
            IidLaw::Categorical { values, probs } => {
                if st.cum.is_empty() {
                    st.cum = vec![linalg::cumulative(probs)];
                }
                values[sample_index(&st.cum[0], rng.uniform())].clone()
            }
            IidLaw::Gaussian { mean, sd } => mean.iter().map(|m| m + sd * rng.normal()).collect(),
            IidLaw::Uniform { lo, hi } => (0..d).map(|_| lo + (hi - lo) * rng.uniform()).collect(),
        },
        EnvKind::FiniteMarkov {
            transition,
            levels,
            emission_sd,
            ..
        } => {
            if st.cum.is_empty() {
                st.cum = transition.iter().map(|r| linalg::cumulative(r)).collect();
            }
            let u = rng.uniform();
            st.regime = if first {
                let init = spec.finite_initial_law().expect("validated");
                sample_index(&linalg::cumulative(&init), u)
            } else {
                sample_index(&st.cum[st.regime], u)
            };
            let mut y = match levels {
                Some(l) => l[st.regime].clone(),
                None => vec![st.regime as f64],
            };
            if *emission_sd > 0.0 {
                for v in y.iter_mut() {
                    *v += emission_sd * rng.normal();
                }
            }
            y
        }
        EnvKind::GaussianAr1 { a, noise_var } => {
            let s = noise_var.sqrt();
            let y: Vec<f64> = if first {
                let sd0 = if spec.stationary { s / (1.0 - a * a).sqrt() } else { 0.0 };
                (0..d).map(|_| sd0 * rng.normal()).collect()
            } else {
                st.prev.iter().map(|p| a * p + s * rng.normal()).collect()
            };
            st.prev = y.clone();
            y
        }
        EnvKind::MDependent { m, weights } => {
            // Innovation xi_s sits at the head of the stream at time s, so the value is a
            // pure function of the index.
            let mut y = vec![0.0; d];
            for (i, w) in weights.iter().enumerate().take(m + 1) {
                let mut r = stream.at(t - i as i64);
                for v in y.iter_mut() {
                    *v += w * r.normal();
                }
            }
            y
        }
        EnvKind::ThresholdModulated {
            a,
            threshold,
            low,
            high,
            emission_sd,
        } => {
            st.latent = if first {
                rng.normal() / (1.0 - a * a).sqrt()
            } else {
                a * st.latent + rng.normal()
            };
            let base = if st.latent >= *threshold { high } else { low };
            base.iter().map(|b| b + emission_sd * rng.normal()).collect()
        }
        EnvKind::CustomStream(src) => {
            if first {
                st.prev.clear();
            }
            src.next(t, &mut st.prev, rng)
        }
    }
}
