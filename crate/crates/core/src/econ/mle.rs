use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_factorial;

use crate::dynamics::{sample_environment_rep, EnvironmentSpec};
use crate::error::{ensure, Error, Result};
use crate::par;
use crate::report::{Cell, Table};
use crate::rng::{derive_seed, Role, Stream};

/// Count process `X_t ~ Poisson(eta0 + eta_x X_{t-1} + <eta_y, Y_{t-1}>)` in the
/// environment `env`. Fitting with fewer covariates than `eta_y` has gives the
/// missing-covariate misspecification.
#[derive(Clone, Debug)]
pub struct PoissonDgp {
    pub eta0: f64,
    pub eta_x: f64,
    pub eta_y: Vec<f64>,
    pub env: EnvironmentSpec,
    pub burn_in: usize,
}

/// Observations `(Y_{t-1}, X_{t-1}, X_t)`, `t = 1..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonData {
    pub y: Vec<Vec<f64>>,
    pub x_prev: Vec<f64>,
    pub x: Vec<f64>,
}

impl PoissonData {
    pub fn len(&self) -> usize {
        self.x.len()
    }
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Smallest `k` with `P(N <= k) > u` for `N ~ Poisson(lambda)`.
fn poisson_quantile(lambda: f64, u: f64) -> f64 {
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cum = p;
    // tail guard: mass beyond lambda + 40 sqrt(lambda) + 40 is negligible
    let cap = (lambda + 40.0 * lambda.sqrt() + 40.0) as u64;
    while cum <= u && k < cap {
        k += 1;
        p *= lambda / k as f64;
        cum += p;
    }
    k as f64
}

pub fn simulate_poisson(dgp: &PoissonDgp, n: usize, seed: u64, rep: u64) -> Result<PoissonData> {
    ensure(n >= 1, "n", "must be >= 1")?;
    ensure(dgp.eta_y.len() == dgp.env.dimension, "eta_y", "one coefficient per environment coordinate")?;
    let burn = dgp.burn_in as i64;
    let env = sample_environment_rep(&dgp.env, -burn, n as i64 - 1, seed, rep)?;
    let noise = Stream::new(seed, rep, Role::Noise);
    let mut x = 0.0;
    let mut out = PoissonData {
        y: Vec::with_capacity(n),
        x_prev: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
    };
    for t in -burn..n as i64 {
        let y = env.get(t);
        let lambda = dgp.eta0 + dgp.eta_x * x + y.iter().zip(&dgp.eta_y).map(|(a, b)| a * b).sum::<f64>();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::NonFinite {
                step: t + 1,
                context: format!("Poisson intensity {lambda}"),
                state: vec![x],
            });
        }
        let next = poisson_quantile(lambda, noise.at(t + 1).uniform());
        if t >= 0 {
            out.y.push(y.to_vec());
            out.x_prev.push(x);
            out.x.push(next);
        }
        x = next;
    }
    Ok(out)
}

/// Quasi-likelihood fit of the Poisson family `lambda_theta(y, x) = theta_1 + theta_2 x +
/// <theta_3, y_obs>` over a box, where `y_obs` is the first `observed_dim` coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MleHarness {
    pub observed_dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub starts: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// HAC lag; `None` = `floor(n^{1/3})`.
    pub hac_lag: Option<usize>,
}

impl MleHarness {
    pub fn new(observed_dim: usize, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        MleHarness {
            observed_dim,
            lower,
            upper,
            starts: 4,
            tol: 1e-8,
            max_iter: 200,
            hac_lag: None,
        }
    }

    pub fn dim(&self) -> usize {
        2 + self.observed_dim
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        ensure(self.lower.len() == p, "lower", format!("must have length {p}"))?;
        ensure(self.upper.len() == p, "upper", format!("must have length {p}"))?;
        ensure(self.lower[0] > 0.0, "lower", "theta_1 must be bounded away from 0")?;
        ensure(
            self.lower.iter().skip(1).all(|v| *v >= 0.0),
            "lower",
            "slope coefficients must be >= 0",
        )?;
        ensure(
            self.lower.iter().zip(&self.upper).all(|(a, b)| a < b),
            "upper",
            "must exceed lower",
        )?;
        ensure(self.starts >= 1, "starts", "must be >= 1")
    }

    fn regressor(&self, data: &PoissonData, t: usize) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.dim());
        g.push(1.0);
        g.push(data.x_prev[t]);
        g.extend_from_slice(&data.y[t][..self.observed_dim]);
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `h_t(theta) = X_t log lambda - lambda - log X_t!`.
fn h_t(theta: &[f64], g: &[f64], x: f64) -> f64 {
    let lambda = dot(theta, g);
    if lambda <= 0.0 {
        return f64::NEG_INFINITY;
    }
    x * lambda.ln() - lambda - ln_factorial(x as u64)
}

/// Average log-likelihood `n^{-1} sum h_t(theta)`.
pub fn poisson_loglik(harness: &MleHarness, theta: &[f64], data: &PoissonData) -> f64 {
    let n = data.len();
    (0..n).map(|t| h_t(theta, &harness.regressor(data, t), data.x[t])).sum::<f64>() / n as f64
}

/// Central finite-difference gradient of `h_t` (step `1e-5 max(1, |theta_i|)`).
pub fn numerical_score(harness: &MleHarness, theta: &[f64], data: &PoissonData, t: usize) -> Vec<f64> {
    let g = harness.regressor(data, t);
    (0..theta.len())
        .map(|i| {
            let e = 1e-5 * theta[i].abs().max(1.0);
            let mut a = theta.to_vec();
            let mut b = theta.to_vec();
            a[i] += e;
            b[i] -= e;
            (h_t(&a, &g, data.x[t]) - h_t(&b, &g, data.x[t])) / (2.0 * e)
        })
        .collect()
}

/// Closed-form score and Hessian of `h_t`.
fn score_hessian(theta: &[f64], g: &[f64], x: f64) -> (DVector<f64>, DMatrix<f64>) {
    let lambda = dot(theta, g);
    let gv = DVector::from_column_slice(g);
    let s = &gv * (x / lambda - 1.0);
    let h = (&gv * gv.transpose()) * (-x / (lambda * lambda));
    (s, h)
}

fn totals(harness: &MleHarness, theta: &[f64], data: &PoissonData) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = harness.dim();
    let n = data.len() as f64;
    let mut f = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    for t in 0..data.len() {
        let g = harness.regressor(data, t);
        f += h_t(theta, &g, data.x[t]);
        let (s, h) = score_hessian(theta, &g, data.x[t]);
        grad += s;
        hess += h;
    }
    (f / n, grad / n, hess / n)
}

fn project(harness: &MleHarness, theta: &mut [f64]) {
    for (i, v) in theta.iter_mut().enumerate() {
        *v = v.clamp(harness.lower[i], harness.upper[i]);
    }
}

/// Projected Newton ascent with backtracking; coordinates pinned at a bound with the
/// gradient pointing outward are frozen for the step.
fn ascend(harness: &MleHarness, start: &[f64], data: &PoissonData) -> (Vec<f64>, f64, usize) {
    let p = harness.dim();
    let mut theta = start.to_vec();
    project(harness, &mut theta);
    let (mut f, mut grad, mut hess) = totals(harness, &theta, data);
    let mut iters = 0;
    while iters < harness.max_iter {
        iters += 1;
        let free: Vec<usize> = (0..p)
            .filter(|&i| {
                let at_lo = theta[i] <= harness.lower[i] && grad[i] < 0.0;
                let at_hi = theta[i] >= harness.upper[i] && grad[i] > 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let pg = free.iter().map(|&i| grad[i].abs()).fold(0.0, f64::max);
        if pg < harness.tol || free.is_empty() {
            break;
        }
        let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| -hess[(free[a], free[b])]);
        let gf = DVector::from_fn(free.len(), |a, _| grad[free[a]]);
        let dir = match hf.clone().cholesky() {
            Some(ch) => ch.solve(&gf),
            None => gf.clone(),
        };
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-12 {
            let mut cand = theta.clone();
            for (a, &i) in free.iter().enumerate() {
                cand[i] += step * dir[a];
            }
            project(harness, &mut cand);
            let fc = poisson_loglik(harness, &cand, data);
            if fc.is_finite() && fc >= f - 1e-15 * f.abs() {
                let moved = cand.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                theta = cand;
                improved = moved > 0.0;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
        let (f2, g2, h2) = totals(harness, &theta, data);
        let gain = f2 - f;
        f = f2;
        grad = g2;
        hess = h2;
        if gain.abs() < 1e-16 * f.abs().max(1.0) {
            break;
        }
    }
    (theta, f, iters)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MleFit {
    pub theta: Vec<f64>,
    pub objective: f64,
    /// Objective at the end point of every multi-start run.
    pub start_objectives: Vec<f64>,
    pub m_hat: Vec<Vec<f64>>,
    pub n_hat: Vec<Vec<f64>>,
    /// Outer-product variance of the scores (the `N` of a martingale-difference score).
    pub v_hat: Vec<Vec<f64>>,
    /// `M^{-1} N M^{-1} / n`.
    pub covariance: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    /// Optimum within `1e-6` (relative to the box width) of a bound; intervals are invalid.
    pub boundary: bool,
    pub lag: usize,
    pub n: usize,
}

impl MleFit {
    /// Columns: index, estimate, stderr, lower, upper (at the normal quantile `z`).
    pub fn to_table(&self, z: f64) -> Table {
        let mut t = Table::new(&["index", "estimate", "stderr", "lower", "upper"]);
        for (i, (th, se)) in self.theta.iter().zip(&self.se).enumerate() {
            t.push(vec![Cell::from(i), (*th).into(), (*se).into(), (th - z * se).into(), (th + z * se).into()]);
        }
        t
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Multi-start maximization, sandwich covariance with a Bartlett HAC estimate of `N`.
pub fn mle_fit(harness: &MleHarness, data: &PoissonData, seed: u64) -> Result<MleFit> {
    harness.validate()?;
    let n = data.len();
    ensure(n >= 10, "data", "need at least 10 observations")?;
    ensure(
        data.y.iter().all(|y| y.len() >= harness.observed_dim),
        "observed_dim",
        "exceeds the covariate dimension of the data",
    )?;
    let p = harness.dim();
    let sampler = Stream::new(seed, 0, Role::Sampler);
    let starts: Vec<Vec<f64>> = (0..harness.starts)
        .map(|k| {
            if k == 0 {
                // interior point near the lower corner where the intensity stays moderate
                (0..p)
                    .map(|i| harness.lower[i] + 0.1 * (harness.upper[i] - harness.lower[i]))
                    .collect()
            } else {
                let mut r = sampler.at(k as i64);
                (0..p)
                    .map(|i| harness.lower[i] + r.uniform() * (harness.upper[i] - harness.lower[i]))
                    .collect()
            }
        })
        .collect();
    let runs: Vec<(Vec<f64>, f64, usize)> = starts.iter().map(|s| ascend(harness, s, data)).collect();
    let best = runs
        .iter()
        .filter(|r| r.1.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Numerical("no start reached a finite log-likelihood".into()))?;
    let theta = best.0.clone();
    let (obj, grad, m) = totals(harness, &theta, data);

    // cross-check the closed-form gradient against finite differences of the objective
    for i in 0..p {
        let e = 1e-5 * theta[i].abs().max(1.0);
        let (mut a, mut b) = (theta.clone(), theta.clone());
        a[i] += e;
        b[i] -= e;
        if b[i] < harness.lower[i] {
            continue;
        }
        let fd = (poisson_loglik(harness, &a, data) - poisson_loglik(harness, &b, data)) / (2.0 * e);
        if (fd - grad[i]).abs() > 1e-4 * (1.0 + grad[i].abs()) {
            return Err(Error::Numerical(format!(
                "score mismatch at coordinate {i}: closed form {} vs finite difference {fd}",
                grad[i]
            )));
        }
    }

    let eig = m.clone().symmetric_eigen();
    let (mn, mx) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(a, b), v| (a.min(v.abs()), b.max(v.abs())));
    if mn == 0.0 || mx / mn > 1e10 {
        return Err(Error::Numerical(format!("Hessian is singular (condition number {})", mx / mn)));
    }
    let m_inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Hessian is not invertible".into()))?;

    let scores: Vec<DVector<f64>> = (0..n)
        .map(|t| score_hessian(&theta, &harness.regressor(data, t), data.x[t]).0)
        .collect();
    let mean = scores.iter().fold(DVector::zeros(p), |a, s| a + s) / n as f64;
    let centered: Vec<DVector<f64>> = scores.iter().map(|s| s - &mean).collect();
    let lag = harness.hac_lag.unwrap_or_else(|| (n as f64).cbrt().floor() as usize);
    let gamma = |l: usize| -> DMatrix<f64> {
        let mut g = DMatrix::zeros(p, p);
        for t in l..n {
            g += &centered[t] * centered[t - l].transpose();
        }
        g / n as f64
    };
    let v = gamma(0);
    let mut nn = v.clone();
    for l in 1..=lag.min(n - 1) {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let g = gamma(l);
        nn += (&g + g.transpose()) * w;
    }
    let cov = &m_inv * &nn * &m_inv / n as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    let se = (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let boundary = (0..p).any(|i| {
        let w = harness.upper[i] - harness.lower[i];
        theta[i] - harness.lower[i] <= 1e-6 * w || harness.upper[i] - theta[i] <= 1e-6 * w
    });
    Ok(MleFit {
        objective: obj,
        start_objectives: runs.iter().map(|r| r.1).collect(),
        theta,
        m_hat: to_rows(&m),
        n_hat: to_rows(&nn),
        v_hat: to_rows(&v),
        covariance: to_rows(&cov),
        se,
        boundary,
        lag,
        n,
    })
}

/// Where the coverage intervals are centred.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CoverageCenter {
    /// A known pseudo-true value (the data-generating parameter when well specified).
    Known(Vec<f64>),
    /// Estimated from a calibration fit on `10 n` observations.
    Calibrate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    pub n: usize,
    pub reps: usize,
    pub level: f64,
    pub center: Vec<f64>,
    pub coverage: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Replications whose optimum sat on the box boundary (counted as misses).
    pub boundary_hits: usize,
    /// `n < 500`: the normal approximation is not expected to hold.
    pub small_sample: bool,
}

impl CoverageReport {
    /// Columns: index, estimate, stderr, bound, violated (bound = nominal level).
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["index", "estimate", "stderr", "bound", "violated"]);
        for (i, c) in self.coverage.iter().enumerate() {
            let off = (c - self.level).abs() > 3.0 * self.stderr[i].max(1e-12);
            t.push(vec![Cell::from(i), (*c).into(), self.stderr[i].into(), self.level.into(), off.into()]);
        }
        t
    }
}

/// Empirical coverage of `theta_hat +- z se` around the centre over `reps` data sets.
pub fn clt_coverage(
    harness: &MleHarness,
    dgp: &PoissonDgp,
    n: usize,
    reps: usize,
    level: f64,
    seed: u64,
    center: &CoverageCenter,
) -> Result<CoverageReport> {
    ensure(reps >= 200, "reps", "must be >= 200")?;
    ensure(level > 0.0 && level < 1.0, "level", "must lie in (0,1)")?;
    let p = harness.dim();
    let center = match center {
        CoverageCenter::Known(c) => {
            ensure(c.len() == p, "center", format!("must have length {p}"))?;
            c.clone()
        }
        CoverageCenter::Calibrate => {
            let cal_seed = derive_seed(seed, u64::MAX);
            let long = mle_fit(harness, &simulate_poisson(dgp, 10 * n, cal_seed, 0)?, cal_seed)?;
            let half = mle_fit(harness, &simulate_poisson(dgp, 5 * n, cal_seed, 1)?, cal_seed)?;
            if long.boundary {
                return Err(Error::Numerical("calibration optimum lies on the parameter boundary".into()));
            }
            for i in 0..p {
                let pooled = (long.se[i].powi(2) + half.se[i].powi(2)).sqrt();
                if (long.theta[i] - half.theta[i]).abs() > 4.0 * pooled {
                    return Err(Error::Numerical(format!(
                        "calibration did not stabilize at coordinate {i}: {} vs {}",
                        long.theta[i], half.theta[i]
                    )));
                }
            }
            long.theta
        }
    };
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0);
    let hits = par::sum(reps, p + 1, |rep| {
        let data = simulate_poisson(dgp, n, seed, rep as u64)?;
        let fit = mle_fit(harness, &data, derive_seed(seed, rep as u64))?;
        let mut out = vec![0.0; p + 1];
        if fit.boundary {
            out[p] = 1.0;
            return Ok(out);
        }
        for i in 0..p {
            if (fit.theta[i] - center[i]).abs() <= z * fit.se[i] {
                out[i] = 1.0;
            }
        }
        Ok(out)
    })?;
    let coverage: Vec<f64> = hits[..p].iter().map(|h| h / reps as f64).collect();
    let stderr = coverage.iter().map(|c| crate::stats::binomial_se(*c, reps)).collect();
    Ok(CoverageReport {
        n,
        reps,
        level,
        center,
        coverage,
        stderr,
        boundary_hits: hits[p] as usize,
        small_sample: n < 500,
    })
}
