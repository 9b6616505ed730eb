use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{ensure, Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::std_normal_quantile;

/// A transition kernel realized as a map `(state, env value, uniform noise) -> state`.
pub trait RandomMap: Send + Sync {
    fn state_dim(&self) -> usize;
    fn env_dim(&self) -> usize;
    /// Number of uniform coordinates consumed per application.
    fn noise_arity(&self) -> usize;
    /// Cardinality when states are the indices `0..m` (stored as a single f64).
    fn finite_states(&self) -> Option<usize> {
        None
    }
    fn apply(&self, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]);
    /// Transition density `q(y, x, x')` with respect to the kernel's reference measure
    /// (counting measure for finite kernels, Lebesgue otherwise).
    fn density(&self, _y: &[f64], _x: &[f64], _x_next: &[f64]) -> Option<f64> {
        None
    }
    fn has_density(&self) -> bool {
        false
    }
    fn describe(&self) -> String;
    /// Downcast hook for finite kernels.
    fn as_finite(&self) -> Option<&FiniteKernel> {
        None
    }
}

/// Shared handle to a random-map kernel together with its step count `p`.
#[derive(Clone)]
pub struct RandomMapKernel {
    map: Arc<dyn RandomMap>,
    step_count: usize,
}

impl fmt::Debug for RandomMapKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RandomMapKernel({}, p={})", self.map.describe(), self.step_count)
    }
}

impl RandomMapKernel {
    pub fn new(map: impl RandomMap + 'static) -> Self {
        RandomMapKernel {
            map: Arc::new(map),
            step_count: 1,
        }
    }

    pub fn from_arc(map: Arc<dyn RandomMap>) -> Self {
        RandomMapKernel { map, step_count: 1 }
    }

    pub fn state_dim(&self) -> usize {
        self.map.state_dim()
    }
    pub fn env_dim(&self) -> usize {
        self.map.env_dim()
    }
    pub fn noise_arity(&self) -> usize {
        self.map.noise_arity()
    }
    pub fn step_count(&self) -> usize {
        self.step_count
    }
    pub fn finite_states(&self) -> Option<usize> {
        self.map.finite_states()
    }
    pub fn has_density(&self) -> bool {
        self.map.has_density()
    }
    pub fn as_finite(&self) -> Option<&FiniteKernel> {
        self.map.as_finite()
    }
    pub fn describe(&self) -> String {
        self.map.describe()
    }

    /// Unchecked application; callers guarantee dimensions.
    #[inline]
    pub fn apply_into(&self, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        self.map.apply(x, y, u, out)
    }

    pub fn apply(&self, x: &[f64], y: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim()];
        self.map.apply(x, y, u, &mut out);
        out
    }

    pub fn density(&self, y: &[f64], x: &[f64], x_next: &[f64]) -> Option<f64> {
        self.map.density(y, x, x_next)
    }
}

/// Checked single application `f(x, y, u)`.
pub fn apply_kernel(kernel: &RandomMapKernel, x: &[f64], y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if x.len() != kernel.state_dim() {
        return Err(Error::dim("apply_kernel state", kernel.state_dim(), x.len()));
    }
    if y.len() != kernel.env_dim() {
        return Err(Error::dim("apply_kernel env", kernel.env_dim(), y.len()));
    }
    if u.len() != kernel.noise_arity() {
        return Err(Error::dim("apply_kernel noise", kernel.noise_arity(), u.len()));
    }
    ensure(
        u.iter().all(|v| (0.0..=1.0).contains(v)),
        "u",
        "noise coordinates must lie in [0,1]",
    )?;
    if let Some(m) = kernel.finite_states() {
        let xi = x[0];
        ensure(
            xi >= 0.0 && xi.fract() == 0.0 && (xi as usize) < m,
            "x",
            format!("finite state must be an index below {m}"),
        )?;
    }
    if let Some(f) = kernel.as_finite() {
        if f.env_states() > 1 {
            let yi = y[0];
            ensure(
                yi >= 0.0 && yi.fract() == 0.0 && (yi as usize) < f.env_states(),
                "y",
                format!("finite environment value must be an index below {}", f.env_states()),
            )?;
        }
    }
    Ok(kernel.apply(x, y, u))
}

/// p-step kernel on environment blocks `(y_1, ..., y_p)` consuming `p` noise vectors.
pub fn compose_p(kernel: &RandomMapKernel, p: usize) -> Result<RandomMapKernel> {
    ensure(p >= 1, "p", "must be >= 1")?;
    if p == 1 {
        return Ok(kernel.clone());
    }
    Ok(RandomMapKernel {
        step_count: kernel.step_count * p,
        map: Arc::new(Composed {
            base: kernel.clone(),
            p,
        }),
    })
}

/// Evaluate the p-step map directly: `env_block` holds p env values, `noise` p noise vectors.
pub fn compose_apply(kernel: &RandomMapKernel, env_block: &[Vec<f64>], x: &[f64], noise: &[Vec<f64>]) -> Result<Vec<f64>> {
    ensure(env_block.len() == noise.len(), "env_block", "block length must equal number of noise vectors")?;
    ensure(!env_block.is_empty(), "env_block", "must be nonempty")?;
    let mut state = x.to_vec();
    for (y, u) in env_block.iter().zip(noise) {
        state = apply_kernel(kernel, &state, y, u)?;
    }
    Ok(state)
}

struct Composed {
    base: RandomMapKernel,
    p: usize,
}

impl RandomMap for Composed {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }
    fn env_dim(&self) -> usize {
        self.base.env_dim() * self.p
    }
    fn noise_arity(&self) -> usize {
        self.base.noise_arity() * self.p
    }
    fn finite_states(&self) -> Option<usize> {
        self.base.finite_states()
    }
    fn apply(&self, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        let e = self.base.env_dim();
        let k = self.base.noise_arity();
        let mut cur = x.to_vec();
        let mut next = vec![0.0; cur.len()];
        for s in 0..self.p {
            self.base.apply_into(&cur, &y[s * e..(s + 1) * e], &u[s * k..(s + 1) * k], &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        out.copy_from_slice(&cur);
    }
    fn has_density(&self) -> bool {
        self.base.has_density() && self.base.finite_states().is_some()
    }
    fn density(&self, y: &[f64], x: &[f64], x_next: &[f64]) -> Option<f64> {
        let m = self.base.finite_states()?;
        let e = self.base.env_dim();
        let mut dist = vec![0.0; m];
        dist[x[0] as usize] = 1.0;
        for s in 0..self.p {
            let ys = &y[s * e..(s + 1) * e];
            let mut nd = vec![0.0; m];
            for (a, pa) in dist.iter().enumerate() {
                if *pa == 0.0 {
                    continue;
                }
                for (b, v) in nd.iter_mut().enumerate() {
                    *v += pa * self.base.density(ys, &[a as f64], &[b as f64])?;
                }
            }
            dist = nd;
        }
        Some(dist[x_next[0] as usize])
    }
    fn describe(&self) -> String {
        format!("{}^{}", self.base.describe(), self.p)
    }
}

/// Finite-state kernel: one transition table per environment state. The environment
/// value is the table index; a single table means the kernel ignores the environment.
#[derive(Clone, Debug)]
pub struct FiniteKernel {
    tables: Vec<Matrix>,
    cum: Vec<Matrix>,
}

impl FiniteKernel {
    pub fn new(tables: Vec<Matrix>) -> Result<Self> {
        ensure(!tables.is_empty(), "tables", "need at least one table")?;
        let m = tables[0].len();
        for (i, t) in tables.iter().enumerate() {
            linalg::check_stochastic(t, &format!("tables[{i}]"))?;
            ensure(t.len() == m, &format!("tables[{i}]"), "all tables must have the same size")?;
        }
        let cum = tables
            .iter()
            .map(|t| t.iter().map(|r| linalg::cumulative(r)).collect())
            .collect();
        Ok(FiniteKernel { tables, cum })
    }

    pub fn states(&self) -> usize {
        self.tables[0].len()
    }

    pub fn env_states(&self) -> usize {
        self.tables.len()
    }

    fn env_index(&self, y: &[f64]) -> usize {
        if self.tables.len() == 1 {
            0
        } else {
            y[0] as usize
        }
    }

    /// Transition table used under environment value `y`.
    pub fn table(&self, y: usize) -> &Matrix {
        &self.tables[if self.tables.len() == 1 { 0 } else { y }]
    }

    pub fn tables(&self) -> &[Matrix] {
        &self.tables
    }

    /// Product of the one-step tables along an environment block.
    pub fn block_table(&self, block: &[usize]) -> Matrix {
        let mut acc = linalg::identity(self.states());
        for y in block {
            acc = linalg::mat_mul(&acc, self.table(*y));
        }
        acc
    }
}

impl RandomMap for FiniteKernel {
    fn state_dim(&self) -> usize {
        1
    }
    fn env_dim(&self) -> usize {
        1
    }
    fn noise_arity(&self) -> usize {
        1
    }
    fn finite_states(&self) -> Option<usize> {
        Some(self.states())
    }
    fn apply(&self, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        let row = &self.cum[self.env_index(y)][x[0] as usize];
        out[0] = linalg::inverse_cdf(row, u[0]) as f64;
    }
    fn has_density(&self) -> bool {
        true
    }
    fn density(&self, y: &[f64], x: &[f64], x_next: &[f64]) -> Option<f64> {
        Some(self.tables[self.env_index(y)][x[0] as usize][x_next[0] as usize])
    }
    fn describe(&self) -> String {
        format!("finite({} states, {} env)", self.states(), self.env_states())
    }
    fn as_finite(&self) -> Option<&FiniteKernel> {
        Some(self)
    }
}

type MeanSd = dyn Fn(&[f64], &[f64], &mut [f64]) -> f64 + Send + Sync;

/// Gaussian kernel `x' = m(x, y) + s(x, y) * Phi^{-1}(u)` applied coordinatewise.
/// The closure writes `m(x, y)` into its output buffer and returns `s(x, y)`.
#[derive(Clone)]
pub struct GaussianKernel {
    state_dim: usize,
    env_dim: usize,
    mean_sd: Arc<MeanSd>,
    label: String,
}

impl GaussianKernel {
    pub fn new(
        state_dim: usize,
        env_dim: usize,
        label: impl Into<String>,
        mean_sd: impl Fn(&[f64], &[f64], &mut [f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        GaussianKernel {
            state_dim,
            env_dim,
            mean_sd: Arc::new(mean_sd),
            label: label.into(),
        }
    }

    /// Mean and standard deviation of the next state.
    pub fn moments(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, f64) {
        let mut m = vec![0.0; self.state_dim];
        let s = (self.mean_sd)(x, y, &mut m);
        (m, s)
    }

    /// VARX(1): `x' = A x + B y + sd * xi`.
    pub fn varx(a: DMatrix<f64>, b: DMatrix<f64>, sd: f64) -> Result<Self> {
        ensure(a.is_square(), "A", "must be square")?;
        ensure(b.nrows() == a.nrows(), "B", "must have as many rows as A")?;
        ensure(sd >= 0.0, "noise_sd", "must be >= 0")?;
        let d = a.nrows();
        let e = b.ncols().max(1);
        Ok(GaussianKernel::new(d, e, format!("varx(d={d})"), move |x, y, out| {
            for i in 0..d {
                let mut v = 0.0;
                for j in 0..d {
                    v += a[(i, j)] * x[j];
                }
                for j in 0..b.ncols() {
                    v += b[(i, j)] * y[j];
                }
                out[i] = v;
            }
            sd
        }))
    }

    /// Scalar AR(1) `x' = a x + sd * xi` that ignores a one-dimensional environment.
    pub fn ar1(a: f64, sd: f64) -> Self {
        GaussianKernel::new(1, 1, format!("ar1(a={a})"), move |x, _y, out| {
            out[0] = a * x[0];
            sd
        })
    }
}

impl RandomMap for GaussianKernel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn env_dim(&self) -> usize {
        self.env_dim
    }
    fn noise_arity(&self) -> usize {
        self.state_dim
    }
    fn apply(&self, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        let s = (self.mean_sd)(x, y, out);
        if s != 0.0 {
            for (o, ui) in out.iter_mut().zip(u) {
                *o += s * std_normal_quantile(*ui);
            }
        }
    }
    fn has_density(&self) -> bool {
        true
    }
    fn density(&self, y: &[f64], x: &[f64], x_next: &[f64]) -> Option<f64> {
        let (m, s) = self.moments(x, y);
        if s <= 0.0 {
            return None;
        }
        let d = self.state_dim as f64;
        let q: f64 = m.iter().zip(x_next).map(|(a, b)| (a - b).powi(2)).sum();
        Some((-0.5 * q / (s * s)).exp() / (2.0 * std::f64::consts::PI * s * s).powf(d / 2.0))
    }
    fn describe(&self) -> String {
        self.label.clone()
    }
}

type MapFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Kernel given by an arbitrary closure, without a density.
#[derive(Clone)]
pub struct FnKernel {
    state_dim: usize,
    env_dim: usize,
    noise_arity: usize,
    f: Arc<MapFn>,
    label: String,
}

impl FnKernel {
    pub fn new(
        state_dim: usize,
        env_dim: usize,
        noise_arity: usize,
        label: impl Into<String>,
        f: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        FnKernel {
            state_dim,
            env_dim,
            noise_arity,
            f: Arc::new(f),
            label: label.into(),
        }
    }
}

impl RandomMap for FnKernel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn env_dim(&self) -> usize {
        self.env_dim
    }
    fn noise_arity(&self) -> usize {
        self.noise_arity
    }
    fn apply(&self, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        (self.f)(x, y, u, out)
    }
    fn describe(&self) -> String {
        self.label.clone()
    }
}
