use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dynamics::FiniteKernel;
use crate::error::{ensure, Error, Result};
use crate::linalg;
use crate::rng::{std_normal_pdf, StepRng};

use super::{DriftCertificate, EnvFn, Lyapunov, MinorizationCertificate};

/// Constants of an SGLD kernel `x' = x - lambda H(x, y) + sqrt(2 lambda / beta) xi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SgldConstants {
    /// Linear growth constant of `H`.
    pub l: f64,
    pub lambda: f64,
    pub beta_temp: f64,
    pub d: usize,
}

/// `3 L^2 lambda^2 - 2 L lambda + 1`, the smallest drift factor compatible with the growth
/// bound; never below 2/3.
pub fn sgld_gamma_floor(l: f64, lambda: f64) -> f64 {
    3.0 * l * l * lambda * lambda - 2.0 * l * lambda + 1.0
}

/// Minorization of a Gaussian kernel `N(m(x, y), sigma^2 I_d)` on `{V <= R}` where
/// `||m(x, y)|| <= rho(R, y)`: `1 - beta = 2^{-d/2} exp(-rho^2 / sigma^2)` with
/// `kappa = N(0, sigma^2 / 2 I_d)`.
pub fn gaussian_minorization(
    label: impl Into<String>,
    v: Lyapunov,
    d: usize,
    sigma: f64,
    rho: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
) -> Result<MinorizationCertificate> {
    ensure(sigma > 0.0 && sigma.is_finite(), "sigma", "must be positive")?;
    ensure(d >= 1, "d", "must be >= 1")?;
    let s2 = sigma * sigma;
    let ks = sigma / std::f64::consts::SQRT_2;
    let beta = move |r: f64, y: &[f64]| {
        let p = rho(r, y);
        1.0 - (-(d as f64) * 0.5 * std::f64::consts::LN_2 - p * p / s2).exp()
    };
    let sampler = move |_r: f64, _y: &[f64], rng: &mut StepRng| (0..d).map(|_| ks * rng.normal()).collect();
    let density: Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync> =
        Arc::new(move |_r, _y, x: &[f64]| x.iter().map(|xi| std_normal_pdf(xi / ks) / ks).product());
    Ok(MinorizationCertificate::new(label, v, beta, sampler, Some(density)))
}

/// Drift (`V = ||x||^2`) and minorization certificates of the SGLD kernel under the
/// dissipativity data `<x, H(x,y)> >= Delta(y) ||x||^2 - b(y)` and growth bound
/// `||H(x,y)|| <= L (||x|| + v(y) + 1)`.
///
/// `gamma` is clamped at [`sgld_gamma_floor`]: `Delta(y) > L` contradicts the growth bound,
/// and a larger factor keeps the inequality valid.
pub fn sgld_certificate(
    c: &SgldConstants,
    delta: EnvFn,
    b: EnvFn,
    v: EnvFn,
) -> Result<(DriftCertificate, MinorizationCertificate)> {
    ensure(c.l > 0.0, "L", "must be positive")?;
    ensure(c.lambda > 0.0, "lambda", "must be positive")?;
    ensure(c.beta_temp > 0.0, "beta", "must be positive")?;
    ensure(c.d >= 1, "d", "must be >= 1")?;
    let SgldConstants { l, lambda, beta_temp, d } = *c;
    let floor = sgld_gamma_floor(l, lambda);
    debug_assert!(floor >= 2.0 / 3.0 - 1e-12);
    let a = 3.0 * l * l * lambda * lambda;
    let delta_f = delta.clone();
    let gamma = EnvFn::new(format!("sgld gamma ({})", delta.label), move |y| {
        (a - 2.0 * lambda * delta_f.eval(y) + 1.0).max(floor)
    });
    let v_k = v.clone();
    let k = EnvFn::new("sgld K", move |y| {
        let vy = v_k.eval(y);
        a * (vy * vy + 1.0) + 2.0 * lambda * (b.eval(y) + d as f64 / beta_temp)
    });
    let mut drift = DriftCertificate::new(Lyapunov::norm_sq(), gamma, k, 1);
    drift.provenance.push("sgld closed form".into());
    let sigma = (2.0 * lambda / beta_temp).sqrt();
    let minor = gaussian_minorization("sgld", Lyapunov::norm_sq(), d, sigma, move |r, y| {
        (1.0 + lambda * l) * (1.0 + r.max(0.0).sqrt() + v.eval(y))
    })?;
    Ok((drift, minor))
}

/// Exact Doeblin minorization of a finite kernel over the whole state space (`V = 0`):
/// `1 - beta(y) = sum_{x'} min_x Q(y, x, x')`, `kappa(y, x') = min_x Q(y, x, x') / (1 - beta(y))`.
/// When `1 - beta(y) = 0`, `kappa(y)` is uniform and the bound is vacuous.
pub fn finite_doeblin(kernel: &FiniteKernel) -> Result<MinorizationCertificate> {
    let m = kernel.states();
    let mut omb = Vec::new();
    let mut kappa = Vec::new();
    let mut kappa_cum = Vec::new();
    for table in kernel.tables() {
        let mins: Vec<f64> = (0..m)
            .map(|b| table.iter().map(|row| row[b]).fold(f64::INFINITY, f64::min))
            .collect();
        let s: f64 = mins.iter().sum();
        let k: Vec<f64> = if s > 0.0 {
            mins.iter().map(|v| v / s).collect()
        } else {
            vec![1.0 / m as f64; m]
        };
        omb.push(s.min(1.0));
        kappa_cum.push(linalg::cumulative(&k));
        kappa.push(k);
    }
    let single = kernel.env_states() == 1;
    let idx = move |y: &[f64]| if single { 0 } else { y[0] as usize };
    let beta = move |_r: f64, y: &[f64]| 1.0 - omb[idx(y)];
    let sampler = move |_r: f64, y: &[f64], rng: &mut StepRng| {
        vec![linalg::inverse_cdf(&kappa_cum[idx(y)], rng.uniform()) as f64]
    };
    let density: Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync> =
        Arc::new(move |_r, y: &[f64], x: &[f64]| kappa[idx(y)][x[0] as usize]);
    Ok(MinorizationCertificate::new("finite Doeblin", Lyapunov::zero(), beta, sampler, Some(density)))
}

/// p-step drift certificate of `X_{n+1} = A X_n + B Y_n + eps_{n+1}` with `V(x) = ||x||`:
/// `gamma = ||A^p||`, `K(y_1..y_p) = M^p (p + sum ||y_k||)`.
#[derive(Clone, Debug)]
pub struct VarxCertificate {
    pub cert: DriftCertificate,
    pub p: usize,
    pub gamma: f64,
    pub m: f64,
    pub norm_a: f64,
    pub spectral_radius: f64,
}

const P_CAP: usize = 10_000;

/// `p = 0` selects the smallest `p` with `||A^p|| < 1`. `noise_abs_mean` is `E||eps||`.
pub fn varx_pstep_certificate(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    m: f64,
    p: usize,
    noise_abs_mean: f64,
) -> Result<VarxCertificate> {
    let d = a.nrows();
    ensure(a.is_square() && d >= 1, "A", "must be a non-empty square matrix")?;
    ensure(b.nrows() == d, "B", "must have as many rows as A")?;
    let norm_a = linalg::operator_norm(a);
    let norm_b = linalg::operator_norm(b);
    ensure(noise_abs_mean >= 0.0, "noise_abs_mean", "must be >= 0")?;
    ensure(m >= 1.0, "M", "must be >= 1")?;
    ensure(
        m >= norm_a.max(norm_b).max(noise_abs_mean) - 1e-12,
        "M",
        format!("must dominate ||A|| = {norm_a}, ||B|| = {norm_b} and E||eps|| = {noise_abs_mean}"),
    )?;
    let sr = linalg::spectral_radius(a);
    if sr >= 1.0 {
        return Err(Error::Certificate(format!(
            "spectral radius r(A) = {sr} >= 1: no p gives ||A^p|| < 1"
        )));
    }
    let (p, gamma) = if p == 0 {
        let mut pow = a.clone();
        let mut k = 1;
        loop {
            let g = linalg::operator_norm(&pow);
            if g < 1.0 {
                break (k, g);
            }
            if k >= P_CAP {
                return Err(Error::Certificate(format!("no p <= {P_CAP} with ||A^p|| < 1")));
            }
            pow = &pow * a;
            k += 1;
        }
    } else {
        let g = linalg::operator_norm(&a.pow(p as u32));
        if g >= 1.0 {
            return Err(Error::Certificate(format!("||A^{p}|| = {g} >= 1")));
        }
        (p, g)
    };
    let env_dim = b.ncols();
    let mp = m.powi(p as i32);
    let k = EnvFn::new(format!("{m}^{p} (p + sum ||y_k||)"), move |y| {
        mp * (p as f64 + y.chunks(env_dim).map(linalg::norm).sum::<f64>())
    });
    let mut cert = DriftCertificate::new(Lyapunov::norm(), EnvFn::constant(gamma), k, p);
    cert.provenance.push(format!("varx p-step (p = {p})"));
    Ok(VarxCertificate {
        cert,
        p,
        gamma,
        m,
        norm_a,
        spectral_radius: sr,
    })
}
