//! Time-series applications: location-scale autoregressions in a random environment,
//! Nadaraya-Watson regression and the quasi-likelihood CLT harness.

mod mle;
mod nw;

pub use mle::{
    clt_coverage, mle_fit, numerical_score, poisson_loglik, simulate_poisson, CoverageCenter, CoverageReport, MleFit,
    MleHarness, PoissonData, PoissonDgp,
};
pub use nw::{nw_bandwidth, nw_estimate, nw_fit_and_error, NwFit, NwKernel, NwResult, NwSpec};

use std::sync::Arc;

use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};

use crate::certify::{DriftCertificate, EnvFn, Lyapunov};
use crate::dynamics::{RandomMap, RandomMapKernel, StatePath, Trajectory};
use crate::error::{ensure, Error, Result};
use crate::rng::{std_normal_pdf, std_normal_quantile, Role, Stream};

/// Centered, unit-variance innovation law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum NoiseLaw {
    Gaussian,
    /// Student t with `nu > 2` degrees of freedom rescaled to unit variance.
    StudentT { nu: f64 },
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    Uniform,
}

impl NoiseLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseLaw::StudentT { nu } => ensure(*nu > 2.0, "noise.nu", "must exceed 2"),
            _ => Ok(()),
        }
    }

    fn t_scale(nu: f64) -> f64 {
        ((nu - 2.0) / nu).sqrt()
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            NoiseLaw::Gaussian => std_normal_quantile(u),
            NoiseLaw::StudentT { nu } => {
                let t = StudentsT::new(0.0, 1.0, *nu).expect("validated");
                t.inverse_cdf(u) * Self::t_scale(*nu)
            }
            NoiseLaw::Uniform => 3f64.sqrt() * (2.0 * u - 1.0),
        }
    }

    pub fn density(&self, e: f64) -> f64 {
        match self {
            NoiseLaw::Gaussian => std_normal_pdf(e),
            NoiseLaw::StudentT { nu } => {
                let s = Self::t_scale(*nu);
                StudentsT::new(0.0, 1.0, *nu).expect("validated").pdf(e / s) / s
            }
            NoiseLaw::Uniform => {
                if e.abs() <= 3f64.sqrt() {
                    0.5 / 3f64.sqrt()
                } else {
                    0.0
                }
            }
        }
    }
}

type ScalarFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;

/// `X_t = r(Y_{t-1}, X_{t-1}) + eps_t sigma(Y_{t-1}, X_{t-1})` with envelopes
/// `|r(y, x)| <= a(y)|x| + b(y)` and `sigma(y, x) <= c(y)|x| + d(y)`.
#[derive(Clone)]
pub struct LocationScaleModel {
    pub label: String,
    pub env_dim: usize,
    pub r: Arc<ScalarFn>,
    pub sigma: Arc<ScalarFn>,
    pub noise: NoiseLaw,
    pub a: EnvFn,
    pub b_env: EnvFn,
    pub c_env: EnvFn,
    pub d_env: EnvFn,
    /// Lower bound on `sigma` when the volatility is known to be bounded away from 0.
    pub sigma_floor: Option<f64>,
}

impl std::fmt::Debug for LocationScaleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LocationScaleModel({})", self.label)
    }
}

const ENVELOPE_SLACK: f64 = 1e-12;

impl LocationScaleModel {
    /// `X_t = a0 Y + a1 X 1(X < thr) + a2 X 1(X >= thr) + eps sqrt(b0^2 + b1^2 X^2 + b2^2 Y^2)`
    /// with a scalar covariate.
    #[allow(clippy::too_many_arguments)]
    pub fn threshold_ar(a0: f64, a1: f64, a2: f64, thr: f64, b0: f64, b1: f64, b2: f64, noise: NoiseLaw) -> Self {
        let amax = a1.abs().max(a2.abs());
        LocationScaleModel {
            label: format!("tar(a0={a0}, a1={a1}, a2={a2}, r={thr}, b0={b0}, b1={b1}, b2={b2})"),
            env_dim: 1,
            r: Arc::new(move |y, x| a0 * y[0] + if x < thr { a1 * x } else { a2 * x }),
            sigma: Arc::new(move |y, x| (b0 * b0 + b1 * b1 * x * x + b2 * b2 * y[0] * y[0]).sqrt()),
            noise,
            a: EnvFn::constant(amax),
            b_env: EnvFn::new("|a0 y|", move |y| (a0 * y[0]).abs()),
            c_env: EnvFn::constant(b1.abs()),
            d_env: EnvFn::new("sqrt(b0^2 + b2^2 y^2)", move |y| (b0 * b0 + b2 * b2 * y[0] * y[0]).sqrt()),
            sigma_floor: (b0 != 0.0).then_some(b0.abs()),
        }
    }

    /// `r(y, x) = (1 - e^{-y}) x`, `sigma = sd`, for nonnegative covariates.
    pub fn persistent(sd: f64, noise: NoiseLaw) -> Self {
        LocationScaleModel {
            label: format!("persistent(sd={sd})"),
            env_dim: 1,
            r: Arc::new(|y, x| (1.0 - (-y[0]).exp()) * x),
            sigma: Arc::new(move |_, _| sd),
            noise,
            a: EnvFn::new("|1 - e^-y|", |y| (1.0 - (-y[0]).exp()).abs()),
            b_env: EnvFn::constant(0.0),
            c_env: EnvFn::constant(0.0),
            d_env: EnvFn::constant(sd),
            sigma_floor: Some(sd),
        }
    }

    /// `r(y, x) = alpha x + <beta, y>`, constant volatility.
    pub fn linear(alpha: f64, beta: Vec<f64>, sd: f64, noise: NoiseLaw) -> Self {
        let bb = beta.clone();
        LocationScaleModel {
            label: format!("linear(alpha={alpha}, beta={beta:?}, sd={sd})"),
            env_dim: beta.len(),
            r: Arc::new(move |y, x| alpha * x + y.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()),
            sigma: Arc::new(move |_, _| sd),
            noise,
            a: EnvFn::constant(alpha.abs()),
            b_env: EnvFn::new("|<beta, y>|", move |y| y.iter().zip(&bb).map(|(a, b)| a * b).sum::<f64>().abs()),
            c_env: EnvFn::constant(0.0),
            d_env: EnvFn::constant(sd),
            sigma_floor: Some(sd),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.env_dim >= 1, "model.env_dim", "must be >= 1")?;
        self.noise.validate()
    }

    /// Drift certificate with `V(x) = |x|`, `gamma = a + c`, `K = b + d` (valid since `E|eps| <= 1`).
    pub fn drift_certificate(&self) -> DriftCertificate {
        let (a, c) = (self.a.clone(), self.c_env.clone());
        let (b, d) = (self.b_env.clone(), self.d_env.clone());
        let gamma = EnvFn::new(format!("{} + {}", a.label, c.label), move |y| a.eval(y) + c.eval(y));
        let k = EnvFn::new(format!("{} + {}", b.label, d.label), move |y| b.eval(y) + d.eval(y));
        let mut cert = DriftCertificate::new(Lyapunov::norm(), gamma, k, 1);
        cert.provenance.push(format!("location-scale envelope ({})", self.label));
        cert
    }

    /// Envelope and positivity checks at one point.
    pub fn check_point(&self, y: &[f64], x: f64) -> Result<()> {
        let r = (self.r)(y, x);
        let s = (self.sigma)(y, x);
        let rb = self.a.eval(y) * x.abs() + self.b_env.eval(y);
        let sb = self.c_env.eval(y) * x.abs() + self.d_env.eval(y);
        if !(s > 0.0) {
            return Err(Error::Numerical(format!("sigma({y:?}, {x}) = {s} is not positive")));
        }
        if let Some(fl) = self.sigma_floor {
            if s < fl * (1.0 - ENVELOPE_SLACK) {
                return Err(Error::Numerical(format!("sigma({y:?}, {x}) = {s} is below the floor {fl}")));
            }
        }
        if r.abs() > rb + ENVELOPE_SLACK * rb.max(1.0) {
            return Err(Error::Numerical(format!("|r({y:?}, {x})| = {} exceeds a|x| + b = {rb}", r.abs())));
        }
        if s > sb + ENVELOPE_SLACK * sb.max(1.0) {
            return Err(Error::Numerical(format!("sigma({y:?}, {x}) = {s} exceeds c|x| + d = {sb}")));
        }
        Ok(())
    }

    /// Check the envelopes on every pair of a grid.
    pub fn check_envelopes(&self, ys: &[Vec<f64>], xs: &[f64]) -> Result<()> {
        for y in ys {
            ensure(y.len() == self.env_dim, "y", "wrong environment dimension")?;
            for x in xs {
                self.check_point(y, *x)?;
            }
        }
        Ok(())
    }

    pub fn kernel(&self) -> RandomMapKernel {
        RandomMapKernel::new(self.clone())
    }
}

impl RandomMap for LocationScaleModel {
    fn state_dim(&self) -> usize {
        1
    }
    fn env_dim(&self) -> usize {
        self.env_dim
    }
    fn noise_arity(&self) -> usize {
        1
    }
    fn apply(&self, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = (self.r)(y, x[0]) + self.noise.quantile(u[0]) * (self.sigma)(y, x[0]);
    }
    fn has_density(&self) -> bool {
        true
    }
    fn density(&self, y: &[f64], x: &[f64], x_next: &[f64]) -> Option<f64> {
        let s = (self.sigma)(y, x[0]);
        (s > 0.0).then(|| self.noise.density((x_next[0] - (self.r)(y, x[0])) / s) / s)
    }
    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// Simulate `X_0 = x0, ..., X_horizon` with `Y_0, ..., Y_{horizon-1}` from `env`, checking
/// the envelopes at every step. Noise for `X_{t+1}` is slot `t + 1` of the `Noise` stream.
pub fn simulate_location_scale(
    model: &LocationScaleModel,
    env: &Trajectory,
    x0: f64,
    horizon: usize,
    seed: u64,
) -> Result<StatePath> {
    simulate_location_scale_from(model, env, x0, 0, horizon, &Stream::new(seed, 0, Role::Noise))
}

pub(crate) fn simulate_location_scale_from(
    model: &LocationScaleModel,
    env: &Trajectory,
    x0: f64,
    t0: i64,
    horizon: usize,
    noise: &Stream,
) -> Result<StatePath> {
    model.validate()?;
    if env.dim != model.env_dim {
        return Err(Error::dim("environment", model.env_dim, env.dim));
    }
    if horizon > 0 && !(env.covers(t0) && env.covers(t0 + horizon as i64 - 1)) {
        return Err(Error::config("horizon", "environment does not cover the horizon"));
    }
    let mut values = Vec::with_capacity(horizon + 1);
    values.push(x0);
    let mut x = x0;
    for s in 0..horizon {
        let t = t0 + s as i64;
        let y = env.get(t);
        model.check_point(y, x)?;
        let u = noise.at(t + 1).uniform();
        let next = (model.r)(y, x) + model.noise.quantile(u) * (model.sigma)(y, x);
        if !next.is_finite() {
            return Err(Error::NonFinite {
                step: t + 1,
                context: model.label.clone(),
                state: vec![x],
            });
        }
        values.push(next);
        x = next;
    }
    Ok(StatePath { t0, dim: 1, values })
}
