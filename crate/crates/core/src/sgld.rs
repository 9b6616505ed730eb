//! Stochastic gradient Langevin dynamics driven by a dependent data stream,
//! `X_{n+1} = X_n - lambda H(X_n, Y_n) + sqrt(2 lambda / beta) xi_{n+1}`, and the online
//! logistic-regression example.

use std::sync::Arc;

use num_rational::Ratio;
use serde::Serialize;

use crate::certify::{
    estimate_dl, moment_bound_check, power_transform, sgld_certificate, DriftCertificate, EnvFn, FitForm,
    MinorizationCertificate, MomentReport, SgldConstants, StartLaw, SummabilityReport,
};
use crate::couple::{estimate_b, BCurve, CouplingKernel, InitLaw, RegenerationMode};
use crate::dynamics::{
    sample_environment_rep, simulate_from, CustomSource, EnvKind, EnvironmentSpec, GaussianKernel, RandomMapKernel,
    StatePath, Trajectory,
};
use crate::error::{ensure, Error, Result};
use crate::linalg::{self, Matrix};
use crate::par;
use crate::report::{Cell, Table};
use crate::rng::{derive_seed, Role, StepRng, Stream};
use crate::stats::{self, LineFit};

/// `H(theta, y)` written into the output buffer.
pub type UpdateFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub struct SgldConfig {
    pub lambda: f64,
    /// Inverse temperature; `f64::INFINITY` gives the noiseless recursion.
    pub beta_temp: f64,
    pub d: usize,
    pub env_dim: usize,
    pub h: Arc<UpdateFn>,
    pub h_label: String,
    /// Linear growth constant: `||H(x, y)|| <= L (||x|| + v(y) + 1)`.
    pub l: f64,
    /// Dissipativity: `<x, H(x, y)> >= Delta(y) ||x||^2 - b(y)`.
    pub delta: EnvFn,
    pub b_diss: EnvFn,
    pub v: EnvFn,
    /// Moment exponent for `V(x) = ||x||^{2s}`.
    pub s: f64,
    /// Estimate of `inf_n E[Delta(Y_n)]`; admissibility is checked when present.
    pub delta_tilde: Option<f64>,
    pub allow_inadmissible: bool,
}

impl std::fmt::Debug for SgldConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SgldConfig")
            .field("lambda", &self.lambda)
            .field("beta_temp", &self.beta_temp)
            .field("d", &self.d)
            .field("h", &self.h_label)
            .field("l", &self.l)
            .field("s", &self.s)
            .finish()
    }
}

impl SgldConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.lambda > 0.0 && self.lambda.is_finite(), "lambda", "must be positive")?;
        ensure(self.beta_temp > 0.0, "beta", "must be positive")?;
        ensure(self.d >= 1, "dim", "must be >= 1")?;
        ensure(self.l > 0.0, "L", "must be positive")?;
        ensure(self.s > 0.0 && self.s < 1.0, "s", "must lie in (0,1)")
    }

    /// Noise scale `sqrt(2 lambda / beta)`.
    pub fn sigma(&self) -> f64 {
        (2.0 * self.lambda / self.beta_temp).sqrt()
    }

    pub fn constants(&self) -> SgldConstants {
        SgldConstants {
            l: self.l,
            lambda: self.lambda,
            beta_temp: self.beta_temp,
            d: self.d,
        }
    }

    /// `None` when no `delta_tilde` is available.
    pub fn admissible(&self) -> Option<bool> {
        self.delta_tilde.map(|dt| step_admissibility(self.lambda, self.l, dt))
    }

    /// The SGLD step as a Gaussian random-map kernel.
    pub fn kernel(&self) -> RandomMapKernel {
        let (h, lambda, sd) = (self.h.clone(), self.lambda, self.sigma());
        RandomMapKernel::new(GaussianKernel::new(
            self.d,
            self.env_dim,
            format!("sgld({}, lambda={lambda})", self.h_label),
            move |x, y, out| {
                h(x, y, out);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi - lambda * *o;
                }
                sd
            },
        ))
    }

    pub fn certificates(&self) -> Result<(DriftCertificate, MinorizationCertificate)> {
        sgld_certificate(&self.constants(), self.delta.clone(), self.b_diss.clone(), self.v.clone())
    }
}

/// A simulated parameter path.
#[derive(Clone, Debug, PartialEq)]
pub struct SgldPath {
    pub path: StatePath,
    pub admissible: Option<bool>,
    /// Inadmissible step size accepted through `allow_inadmissible`.
    pub flagged: bool,
}

/// Run `horizon` steps from `theta0` at time 0; `env` must cover `0..horizon`.
pub fn sgld_run(config: &SgldConfig, env: &Trajectory, theta0: &[f64], horizon: usize, seed: u64) -> Result<SgldPath> {
    config.validate()?;
    let admissible = config.admissible();
    if admissible == Some(false) && !config.allow_inadmissible {
        return Err(Error::config(
            "lambda",
            format!(
                "lambda = {} violates 0 < lambda < 2 Delta~ / (3 L^2) = {}",
                config.lambda,
                2.0 * config.delta_tilde.unwrap_or(0.0) / (3.0 * config.l * config.l)
            ),
        ));
    }
    let kernel = config.kernel();
    let path = simulate_from(&kernel, env, theta0, 0, horizon, &Stream::new(seed, 0, Role::Noise))?;
    Ok(SgldPath {
        path,
        admissible,
        flagged: admissible == Some(false),
    })
}

/// `0 < lambda < 2 Delta~ / (3 L^2)`.
pub fn step_admissibility(lambda: f64, l: f64, delta_tilde: f64) -> bool {
    lambda > 0.0 && l > 0.0 && lambda < 2.0 * delta_tilde / (3.0 * l * l)
}

/// `Delta~ = min_n (1/reps) sum_r Delta(Y_n^{(r)})` over `n = 0..horizon`.
pub fn estimate_delta_tilde(delta: &EnvFn, env: &EnvironmentSpec, horizon: usize, reps: usize, seed: u64) -> Result<f64> {
    ensure(reps >= 1, "reps", "must be >= 1")?;
    let sums = par::sum(reps, horizon + 1, |rep| {
        let y = sample_environment_rep(env, 0, horizon as i64, seed, rep as u64)?;
        Ok((0..=horizon as i64).map(|t| delta.eval(y.get(t))).collect())
    })?;
    Ok(sums.iter().map(|s| s / reps as f64).fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DissipativityReport {
    /// `Delta(y) <= L` at every sampled `y`.
    pub delta_below_l: bool,
    pub offset_nonnegative: bool,
    pub consistent: bool,
    /// Indices of samples violating `L^2 (v(y) + 1)^2 <= 4 b(y) (L - Delta(y))`.
    /// Informational: this bound is sufficient but not necessary for the two assumptions.
    pub discriminant_flags: Vec<usize>,
    pub max_delta_excess: f64,
}

/// Necessary conditions for the dissipativity and linear-growth assumptions to hold
/// together: `<x, H> >= Delta ||x||^2 - b` and `<x, H> <= L ||x|| (1 + ||x|| + v)` for all
/// `x` force `Delta(y) <= L` and `b(y) >= 0`.
pub fn dissipativity_consistency(l: f64, delta: &EnvFn, b_diss: &EnvFn, v: &EnvFn, ys: &[Vec<f64>]) -> DissipativityReport {
    let mut excess = f64::NEG_INFINITY;
    let mut nonneg = true;
    let mut flags = Vec::new();
    for (i, y) in ys.iter().enumerate() {
        let (d, b, vy) = (delta.eval(y), b_diss.eval(y), v.eval(y));
        excess = excess.max(d - l);
        nonneg &= b >= 0.0;
        if l * l * (vy + 1.0).powi(2) > 4.0 * b * (l - d) {
            flags.push(i);
        }
    }
    let below = excess <= 0.0 || ys.is_empty();
    DissipativityReport {
        delta_below_l: below,
        offset_nonnegative: nonneg,
        consistent: below && nonneg,
        discriminant_flags: flags,
        max_delta_excess: if ys.is_empty() { 0.0 } else { excess },
    }
}

/// `1 / (1 + e^{-x})` without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-(q - sigma(<theta, z>)) z + 2 c theta`.
pub fn logistic_update(theta: &[f64], q: f64, z: &[f64], c: f64) -> Vec<f64> {
    let mut out = vec![0.0; theta.len()];
    logistic_update_into(theta, q, z, c, &mut out);
    out
}

fn logistic_update_into(theta: &[f64], q: f64, z: &[f64], c: f64, out: &mut [f64]) {
    let r = q - sigmoid(linalg::dot(theta, z));
    for ((o, t), zi) in out.iter_mut().zip(theta).zip(z) {
        *o = -r * zi + 2.0 * c * t;
    }
}

/// Per-sample regularized negative log-likelihood; its gradient is [`logistic_update`].
pub fn logistic_loss(theta: &[f64], q: f64, z: &[f64], c: f64) -> f64 {
    let a = linalg::dot(theta, z);
    // -log sigma(a) = log(1 + e^{-a}), -log(1 - sigma(a)) = log(1 + e^{a})
    let softplus = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    q * softplus(-a) + (1.0 - q) * softplus(a) + c * linalg::norm_sq(theta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogisticConstants {
    pub c: f64,
    pub delta: f64,
    pub l: f64,
    pub lambda_max: f64,
    pub lambda_star: f64,
    pub gamma_star: f64,
}

/// `gamma(lambda) = 3 L^2 lambda^2 - 2 Delta lambda + 1`.
pub fn gamma_of_lambda(lambda: f64, l: f64, delta: f64) -> f64 {
    3.0 * l * l * lambda * lambda - 2.0 * delta * lambda + 1.0
}

pub fn logistic_constants(c: f64) -> Result<LogisticConstants> {
    ensure(c > 0.5 && c.is_finite(), "c", "must exceed 1/2 (Delta = 2c - 1 must be positive)")?;
    let c1 = (c + 1.0) * (c + 1.0);
    let out = LogisticConstants {
        c,
        delta: 2.0 * c - 1.0,
        l: 2.0 * (c + 1.0),
        lambda_max: (2.0 * c - 1.0) / (6.0 * c1),
        lambda_star: (2.0 * c - 1.0) / (12.0 * c1),
        gamma_star: (8.0 * c * c + 28.0 * c + 11.0) / (12.0 * c1),
    };
    let g = gamma_of_lambda(out.lambda_star, out.l, out.delta);
    if (g - out.gamma_star).abs() > 1e-12 * out.gamma_star.max(1.0) {
        return Err(Error::Numerical(format!("gamma(lambda*) = {g} differs from gamma* = {}", out.gamma_star)));
    }
    Ok(out)
}

pub type Rational = Ratio<i128>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactLogisticConstants {
    pub c: Rational,
    pub delta: Rational,
    pub l: Rational,
    pub lambda_max: Rational,
    pub lambda_star: Rational,
    pub gamma_star: Rational,
}

/// Rational version of [`logistic_constants`].
pub fn logistic_constants_exact(c: Rational) -> Result<ExactLogisticConstants> {
    let one = Rational::from_integer(1);
    let two = Rational::from_integer(2);
    let half = Rational::new(1, 2);
    ensure(c > half, "c", "must exceed 1/2 (Delta = 2c - 1 must be positive)")?;
    let c1 = (c + one) * (c + one);
    let out = ExactLogisticConstants {
        c,
        delta: two * c - one,
        l: two * (c + one),
        lambda_max: (two * c - one) / (Rational::from_integer(6) * c1),
        lambda_star: (two * c - one) / (Rational::from_integer(12) * c1),
        gamma_star: (Rational::from_integer(8) * c * c + Rational::from_integer(28) * c + Rational::from_integer(11))
            / (Rational::from_integer(12) * c1),
    };
    let g = Rational::from_integer(3) * out.l * out.l * out.lambda_star * out.lambda_star - two * out.delta * out.lambda_star
        + one;
    if g != out.gamma_star {
        return Err(Error::Numerical(format!("gamma(lambda*) = {g} differs from gamma* = {}", out.gamma_star)));
    }
    Ok(out)
}

/// Exact value of a decimal literal such as `2`, `-0.75` or `1.5e-1`.
pub fn rational_from_decimal(s: &str) -> Option<Rational> {
    let s = s.trim();
    let (mant, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: i128 = format!("{int}{frac}").parse().ok()?;
    let scale = exp - frac.len() as i32;
    if scale.unsigned_abs() > 30 {
        return None;
    }
    let p = 10i128.pow(scale.unsigned_abs());
    let r = if scale >= 0 {
        Rational::from_integer(digits.checked_mul(p)?)
    } else {
        Rational::new(digits, p)
    };
    Some(if neg { -r } else { r })
}

/// `lambda*(c)`, `gamma*(c)` and `lambda_max(c)` along a grid of `c > 1/2`.
pub fn rate_curves(c_grid: &[f64]) -> Result<Table> {
    let mut t = Table::new(&["c", "lambda_star", "gamma_star", "lambda_max"]);
    for c in c_grid {
        let k = logistic_constants(*c)?;
        t.push(vec![(*c).into(), k.lambda_star.into(), k.gamma_star.into(), k.lambda_max.into()]);
    }
    Ok(t)
}

/// Regime-switching Gaussian features with logistic labels:
/// `Z_n = mu(S_n) + sd * N(0, I)`, `Q_n ~ Bernoulli(sigma(<theta_true, Z_n>))`, where `S_n`
/// is a finite Markov chain started from its stationary law. Emits `y = (q, z)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogisticStream {
    pub transition: Matrix,
    pub means: Vec<Vec<f64>>,
    pub sd: f64,
    pub theta_true: Vec<f64>,
}

impl LogisticStream {
    /// Two regimes with means `+-mean * (1, ..., 1)` and switching probability `switch`.
    pub fn two_regime(d: usize, mean: f64, switch: f64, sd: f64, theta_true: Vec<f64>) -> Self {
        LogisticStream {
            transition: vec![vec![1.0 - switch, switch], vec![switch, 1.0 - switch]],
            means: vec![vec![mean; d], vec![-mean; d]],
            sd,
            theta_true,
        }
    }

    /// i.i.d. `N(0, sd^2 I)` features.
    pub fn iid(d: usize, sd: f64, theta_true: Vec<f64>) -> Self {
        LogisticStream {
            transition: vec![vec![1.0]],
            means: vec![vec![0.0; d]],
            sd,
            theta_true,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta_true.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        ensure(d >= 1, "stream.theta_true", "must be nonempty")?;
        linalg::check_stochastic(&self.transition, "stream.transition")?;
        ensure(self.means.len() == self.transition.len(), "stream.means", "one mean per regime")?;
        ensure(self.means.iter().all(|m| m.len() == d), "stream.means", "each mean must have length d")?;
        ensure(self.sd >= 0.0, "stream.sd", "must be >= 0")
    }

    /// Environment spec emitting `(q, z)` of dimension `d + 1`.
    pub fn env_spec(&self) -> Result<EnvironmentSpec> {
        self.validate()?;
        let cum: Vec<Vec<f64>> = self.transition.iter().map(|r| linalg::cumulative(r)).collect();
        let init = linalg::cumulative(&linalg::stationary_distribution(&self.transition));
        let src = StreamSource {
            stream: self.clone(),
            cum,
            init,
        };
        Ok(EnvironmentSpec::new(EnvKind::CustomStream(Arc::new(src)), self.dim() + 1))
    }
}

struct StreamSource {
    stream: LogisticStream,
    cum: Vec<Vec<f64>>,
    init: Vec<f64>,
}

impl CustomSource for StreamSource {
    fn next(&self, _t: i64, state: &mut Vec<f64>, rng: &mut StepRng) -> Vec<f64> {
        let u = rng.uniform();
        let regime = match state.first() {
            None => linalg::inverse_cdf(&self.init, u),
            Some(s) => linalg::inverse_cdf(&self.cum[*s as usize], u),
        };
        *state = vec![regime as f64];
        let s = &self.stream;
        let mut y = Vec::with_capacity(s.dim() + 1);
        y.push(0.0);
        y.extend(s.means[regime].iter().map(|m| m + s.sd * rng.normal()));
        let p = sigmoid(linalg::dot(&s.theta_true, &y[1..]));
        y[0] = if rng.uniform() < p { 1.0 } else { 0.0 };
        y
    }
    fn describe(&self) -> String {
        format!("logistic stream ({} regimes)", self.stream.transition.len())
    }
}

/// Online logistic regression with regularization `c > 1/2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogisticModel {
    pub c: f64,
    pub stream: LogisticStream,
}

impl LogisticModel {
    pub fn d(&self) -> usize {
        self.stream.dim()
    }

    pub fn constants(&self) -> Result<LogisticConstants> {
        logistic_constants(self.c)
    }

    /// SGLD configuration with `Delta = 2c - 1`, `L = 2(c + 1)`, `b(y) = v(y)^2 = ||y||^2`.
    pub fn sgld_config(&self, lambda: f64, beta_temp: f64, s: f64) -> Result<SgldConfig> {
        let k = self.constants()?;
        let c = self.c;
        let h: Arc<UpdateFn> = Arc::new(move |x: &[f64], y: &[f64], out: &mut [f64]| {
            logistic_update_into(x, y[0], &y[1..], c, out)
        });
        Ok(SgldConfig {
            lambda,
            beta_temp,
            d: self.d(),
            env_dim: self.d() + 1,
            h,
            h_label: format!("logistic(c={c})"),
            l: k.l,
            delta: EnvFn::constant(k.delta),
            b_diss: EnvFn::new("||y||^2", linalg::norm_sq),
            v: EnvFn::new("||y||", linalg::norm),
            s,
            delta_tilde: Some(k.delta),
            allow_inadmissible: false,
        })
    }
}

/// Settings of [`run_logistic_experiment`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogisticExperiment {
    pub lambda: f64,
    pub beta_temp: f64,
    pub theta0: Vec<f64>,
    /// Length of the single reported path.
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    /// Lags for the non-coupling curve.
    pub n_grid: Vec<usize>,
    pub j_grid: Vec<usize>,
    /// Small-set level; `None` picks it from the second half of the path (see
    /// `auto_small_set_level`).
    pub r: Option<f64>,
    /// Number of `d_l` terms estimated per candidate exponent.
    pub dl_len: usize,
    /// Horizon of the moment curve.
    pub moment_horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathStats {
    pub horizon: usize,
    pub running_max_norm_sq: f64,
    pub mean_norm_sq: f64,
    pub lag1_autocorrelation: f64,
    pub final_theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentChoice {
    pub s: f64,
    pub fit_rate: f64,
    pub fit_r_squared: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LogisticBundle {
    pub constants: LogisticConstants,
    pub lambda: f64,
    pub beta_temp: f64,
    pub admissible: bool,
    pub dissipativity: DissipativityReport,
    /// `sup_n E||Y_n||^2` over the sampled horizon.
    pub env_moment: f64,
    pub path: PathStats,
    #[serde(skip)]
    pub path_values: StatePath,
    pub exponent: Option<ExponentChoice>,
    /// Why the bundle degraded to simulation only.
    pub degraded: Option<String>,
    #[serde(skip)]
    pub summability: Option<SummabilityReport>,
    pub moment: Option<MomentReport>,
    pub r: f64,
    pub b_curve: Option<BCurve>,
    /// Log-linear fit of `b(n)` against `n` over positive estimates.
    pub b_fit: Option<LineFit>,
}

impl LogisticBundle {
    pub fn path_table(&self) -> Table {
        let d = self.path_values.dim;
        let mut cols = vec!["n".to_string()];
        cols.extend((0..d).map(|i| format!("theta{i}")));
        let refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
        let mut t = Table::new(&refs);
        for n in 0..self.path_values.len() {
            let mut row = vec![Cell::from(n)];
            row.extend(self.path_values.get(n as i64).iter().map(|v| Cell::from(*v)));
            t.push(row);
        }
        t
    }

    pub fn moment_table(&self) -> Option<Table> {
        self.moment.as_ref().map(|m| m.to_table())
    }
}

const S_CANDIDATES: usize = 8;

/// Small-set level maximizing `P(V <= R)^2 (1 - beta(R, y~))`, the chance that both copies
/// sit in the set and regenerate, over quantiles of the observed `V` values. `y~` is the
/// environment value with the median `v(y)`.
fn auto_small_set_level(v_values: &[f64], env: &Trajectory, v: &EnvFn, minor: &MinorizationCertificate) -> f64 {
    let mut sorted = v_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ys: Vec<(f64, i64)> = (env.t_min..=env.t_max).map(|t| (v.eval(env.get(t)), t)).collect();
    ys.sort_by(|a, b| a.0.total_cmp(&b.0));
    let y_med = env.get(ys[ys.len() / 2].1);
    let mut best = (f64::NEG_INFINITY, stats::quantile_sorted(&sorted, 0.5));
    for k in 1..20 {
        let q = k as f64 / 20.0;
        let r = stats::quantile_sorted(&sorted, q);
        let score = 2.0 * q.ln() + (1.0 - minor.beta(r, y_med)).max(1e-300).ln();
        if score > best.0 {
            best = (score, r);
        }
    }
    best.1
}

/// Full logistic SGLD experiment: certificates, exponent selection, moment tracking and
/// the non-coupling curve.
pub fn run_logistic_experiment(model: &LogisticModel, exp: &LogisticExperiment) -> Result<LogisticBundle> {
    let d = model.d();
    ensure(exp.theta0.len() == d, "theta0", format!("must have length {d}"))?;
    ensure(exp.reps >= 2, "reps", "must be >= 2")?;
    ensure(exp.horizon >= 4, "horizon", "must be >= 4")?;
    ensure(!exp.n_grid.is_empty(), "n_grid", "must not be empty")?;
    ensure(!exp.j_grid.is_empty(), "j_grid", "must not be empty")?;
    let constants = model.constants()?;
    let mut config = model.sgld_config(exp.lambda, exp.beta_temp, 0.5)?;
    config.validate()?;
    let env = model.stream.env_spec()?;
    let seed = exp.seed;

    let probe = exp.horizon.min(200);
    let delta_tilde = estimate_delta_tilde(&config.delta, &env, probe, exp.reps.min(200), derive_seed(seed, 1))?;
    config.delta_tilde = Some(delta_tilde);
    let admissible = step_admissibility(config.lambda, config.l, delta_tilde);
    if !admissible {
        return Err(Error::config(
            "lambda",
            format!("lambda = {} is not admissible for Delta~ = {delta_tilde}", config.lambda),
        ));
    }

    let sample = sample_environment_rep(&env, 0, probe as i64, derive_seed(seed, 2), 0)?;
    let ys: Vec<Vec<f64>> = (0..=probe as i64).map(|t| sample.get(t).to_vec()).collect();
    let dissipativity = dissipativity_consistency(config.l, &config.delta, &config.b_diss, &config.v, &ys);
    let moments = par::sum(exp.reps.min(1000), probe + 1, |rep| {
        let y = sample_environment_rep(&env, 0, probe as i64, derive_seed(seed, 3), rep as u64)?;
        Ok((0..=probe as i64).map(|t| linalg::norm_sq(y.get(t))).collect())
    })?;
    let env_moment = moments
        .iter()
        .map(|s| s / exp.reps.min(1000) as f64)
        .fold(0.0, f64::max);
    if !env_moment.is_finite() {
        return Err(Error::Numerical("environment second moment is not finite".into()));
    }

    let y_path = sample_environment_rep(&env, 0, exp.horizon as i64, seed, 0)?;
    let run = sgld_run(&config, &y_path, &exp.theta0, exp.horizon, seed)?;
    let norms: Vec<f64> = (0..=exp.horizon as i64).map(|t| linalg::norm_sq(run.path.get(t))).collect();
    let first: Vec<f64> = run.path.first_coordinate();
    let path = PathStats {
        horizon: exp.horizon,
        running_max_norm_sq: norms.iter().copied().fold(0.0, f64::max),
        mean_norm_sq: norms.iter().sum::<f64>() / norms.len() as f64,
        lag1_autocorrelation: stats::autocorrelation(&first[exp.horizon / 4..], 1),
        final_theta: run.path.last().to_vec(),
    };
    let (drift, minor) = config.certificates()?;
    let r = match exp.r {
        Some(r) => r,
        None => auto_small_set_level(&norms[exp.horizon / 2..], &y_path, &config.v, &minor),
    };
    ensure(r >= 0.0 && r.is_finite(), "R", "must be finite and >= 0")?;

    let mut bundle = LogisticBundle {
        constants,
        lambda: config.lambda,
        beta_temp: config.beta_temp,
        admissible,
        dissipativity,
        env_moment,
        path,
        path_values: run.path,
        exponent: None,
        degraded: None,
        summability: None,
        moment: None,
        r,
        b_curve: None,
        b_fit: None,
    };

    let window: Vec<i64> = vec![0, (exp.dl_len / 2) as i64, exp.dl_len as i64];
    let mut choice = None;
    for k in 1..=S_CANDIDATES {
        let s = 0.5_f64.powi(k as i32);
        let cert = power_transform(&drift, s)?;
        let rep = estimate_dl(&cert, &env, exp.dl_len, &window, exp.reps.min(2000), derive_seed(seed, 10 + k as u64))?;
        let geometric = rep
            .fit
            .as_ref()
            .filter(|f| f.form == FitForm::Geometric && f.rate < 1.0 && f.r_squared >= 0.9);
        if let Some(f) = geometric {
            choice = Some((
                ExponentChoice {
                    s,
                    fit_rate: f.rate,
                    fit_r_squared: f.r_squared,
                },
                cert,
                rep,
            ));
            break;
        }
    }
    let Some((ex, cert_s, summary)) = choice else {
        bundle.degraded = Some("no exponent s in {2^-1, ..., 2^-8} gave geometric d_l".into());
        return Ok(bundle);
    };
    config.s = ex.s;
    let kernel = config.kernel();
    let moment = moment_bound_check(
        &kernel,
        &cert_s,
        &env,
        &StartLaw::Point(exp.theta0.clone()),
        exp.moment_horizon,
        exp.reps,
        derive_seed(seed, 30),
        &summary,
    )?;
    bundle.exponent = Some(ex);
    bundle.summability = Some(summary);
    bundle.moment = Some(moment);

    let ck = CouplingKernel::new(kernel, minor, r, RegenerationMode::Split)?;
    let curve = estimate_b(
        &ck,
        &env,
        &exp.theta0,
        &InitLaw::Simulated(exp.theta0.clone()),
        &exp.n_grid,
        &exp.j_grid,
        exp.reps,
        derive_seed(seed, 40),
    )?;
    let (xs, ls): (Vec<f64>, Vec<f64>) = curve
        .n_grid
        .iter()
        .zip(&curve.raw)
        .filter(|(n, b)| **n > 0 && **b > 0.0)
        .map(|(n, b)| (*n as f64, b.ln()))
        .unzip();
    bundle.b_fit = stats::fit_line(&xs, &ls);
    bundle.b_curve = Some(curve);
    Ok(bundle)
}
