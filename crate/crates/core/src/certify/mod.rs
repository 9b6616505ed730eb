//! Drift and minorization certificates.
//!
//! A drift certificate states `[Q(y)V](x) <= gamma(y) V(x) + K(y)`; a minorization
//! certificate states `Q(y, x, A) >= (1 - beta(R, y)) kappa_R(y, A)` on `{V <= R}`. Both
//! may refer to a p-step kernel, in which case `y` is a block of p environment values.
//! Verification is Monte Carlo (or exact for finite kernels); the summability sequence
//! `d_l` is estimated by simulating the environment.

mod closed_form;
mod summability;
mod verify;

use std::fmt;
use std::sync::Arc;

pub use closed_form::{
    finite_doeblin, gaussian_minorization, sgld_certificate, sgld_gamma_floor, varx_pstep_certificate, SgldConstants,
    VarxCertificate,
};
pub use summability::{check_a2, estimate_dl, A2Report, DlFit, FitForm, SummabilityReport};
pub use verify::{
    check_one_step_c, moment_bound_check, verify_drift_mc, verify_minorization_finite, verify_minorization_mc,
    BoxEvent, CheckReport, CheckRow, MinorReport, MinorRow, MomentReport, PairSampler, StartLaw,
};

use crate::error::{ensure, Result};
use crate::linalg;
use crate::rng::StepRng;

/// Lyapunov function `V`.
#[derive(Clone)]
pub enum Lyapunov {
    /// `V(x) = ||x||^exponent` (Euclidean norm; `|x|^s` in one dimension).
    NormPower { exponent: f64 },
    Custom { label: String, f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> },
}

impl fmt::Debug for Lyapunov {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl Lyapunov {
    pub fn norm() -> Self {
        Lyapunov::NormPower { exponent: 1.0 }
    }

    pub fn norm_sq() -> Self {
        Lyapunov::NormPower { exponent: 2.0 }
    }

    pub fn custom(label: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Lyapunov::Custom {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    /// `V = 0`, for finite chains whose whole state space is small.
    pub fn zero() -> Self {
        Self::custom("0", |_| 0.0)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Lyapunov::NormPower { exponent } => {
                let s = linalg::norm_sq(x);
                if *exponent == 2.0 {
                    s
                } else {
                    s.powf(exponent / 2.0)
                }
            }
            Lyapunov::Custom { f, .. } => f(x),
        }
    }

    pub fn power(&self, delta: f64) -> Self {
        match self {
            Lyapunov::NormPower { exponent } => Lyapunov::NormPower {
                exponent: exponent * delta,
            },
            Lyapunov::Custom { label, f } => {
                let f = f.clone();
                Lyapunov::Custom {
                    label: format!("({label})^{delta}"),
                    f: Arc::new(move |x| f(x).powf(delta)),
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Lyapunov::NormPower { exponent } => format!("|x|^{exponent}"),
            Lyapunov::Custom { label, .. } => label.clone(),
        }
    }
}

/// A function of an environment value (or p-block).
#[derive(Clone)]
pub struct EnvFn {
    pub label: String,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for EnvFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)
    }
}

impl EnvFn {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        EnvFn {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn constant(v: f64) -> Self {
        Self::new(format!("{v}"), move |_| v)
    }

    /// Lookup by finite environment index `y[0]`.
    pub fn table(values: Vec<f64>) -> Self {
        Self::new(format!("table{values:?}"), move |y| values[y[0] as usize])
    }

    /// Product over a p-block of a one-step function (block = p concatenated values of
    /// dimension `dim`).
    pub fn block_product(one: EnvFn, dim: usize) -> Self {
        let label = format!("prod {}", one.label);
        Self::new(label, move |y| y.chunks(dim).map(|c| one.eval(c)).product())
    }

    #[inline]
    pub fn eval(&self, y: &[f64]) -> f64 {
        (self.f)(y)
    }

    pub fn power(&self, delta: f64) -> Self {
        let f = self.f.clone();
        Self::new(format!("({})^{delta}", self.label), move |y| f(y).powf(delta))
    }

    pub fn clamp_min(&self, lo: f64) -> Self {
        let f = self.f.clone();
        Self::new(format!("max({}, {lo})", self.label), move |y| f(y).max(lo))
    }
}

/// `[Q(y)V](x) <= gamma(y) V(x) + K(y)` for the `p`-step kernel.
#[derive(Clone, Debug)]
pub struct DriftCertificate {
    pub v: Lyapunov,
    pub gamma: EnvFn,
    /// Always `>= 1` (clamped on construction).
    pub k: EnvFn,
    pub p: usize,
    pub provenance: Vec<String>,
}

impl DriftCertificate {
    pub fn new(v: Lyapunov, gamma: EnvFn, k: EnvFn, p: usize) -> Self {
        DriftCertificate {
            v,
            gamma,
            k: k.clamp_min(1.0),
            p: p.max(1),
            provenance: vec![],
        }
    }

    pub fn constant(v: Lyapunov, gamma: f64, k: f64) -> Self {
        Self::new(v, EnvFn::constant(gamma), EnvFn::constant(k), 1)
    }

    pub fn bound(&self, x: &[f64], y: &[f64]) -> f64 {
        self.gamma.eval(y) * self.v.eval(x) + self.k.eval(y)
    }
}

/// `(V^delta, gamma^delta, K^delta)`; valid by Jensen's inequality and subadditivity of
/// `t -> t^delta`.
pub fn power_transform(cert: &DriftCertificate, delta: f64) -> Result<DriftCertificate> {
    ensure(delta > 0.0 && delta <= 1.0, "delta", "must lie in (0,1]")?;
    if delta == 1.0 {
        return Ok(cert.clone());
    }
    let mut out = DriftCertificate {
        v: cert.v.power(delta),
        gamma: cert.gamma.power(delta),
        k: cert.k.power(delta),
        p: cert.p,
        provenance: cert.provenance.clone(),
    };
    out.provenance.push(format!("power-transformed({delta})"));
    Ok(out)
}

type BetaFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
type KappaSampler = dyn Fn(f64, &[f64], &mut StepRng) -> Vec<f64> + Send + Sync;
type KappaDensity = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;

/// `Q(y, x, .) >= (1 - beta(R, y)) kappa_R(y, .)` for `V(x) <= R`.
#[derive(Clone)]
pub struct MinorizationCertificate {
    pub v: Lyapunov,
    pub p: usize,
    beta: Arc<BetaFn>,
    kappa_sampler: Arc<KappaSampler>,
    kappa_density: Option<Arc<KappaDensity>>,
    pub label: String,
}

impl fmt::Debug for MinorizationCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MinorizationCertificate({}, V={})", self.label, self.v.label())
    }
}

impl MinorizationCertificate {
    pub fn new(
        label: impl Into<String>,
        v: Lyapunov,
        beta: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        kappa_sampler: impl Fn(f64, &[f64], &mut StepRng) -> Vec<f64> + Send + Sync + 'static,
        kappa_density: Option<Arc<KappaDensity>>,
    ) -> Self {
        MinorizationCertificate {
            v,
            p: 1,
            beta: Arc::new(beta),
            kappa_sampler: Arc::new(kappa_sampler),
            kappa_density,
            label: label.into(),
        }
    }

    pub fn with_steps(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    /// `beta(R, y)`.
    #[inline]
    pub fn beta(&self, r: f64, y: &[f64]) -> f64 {
        (self.beta)(r, y)
    }

    pub fn sample_kappa(&self, r: f64, y: &[f64], rng: &mut StepRng) -> Vec<f64> {
        (self.kappa_sampler)(r, y, rng)
    }

    pub fn kappa_density(&self, r: f64, y: &[f64], x: &[f64]) -> Option<f64> {
        self.kappa_density.as_ref().map(|f| f(r, y, x))
    }

    pub fn has_density(&self) -> bool {
        self.kappa_density.is_some()
    }

    pub fn in_small_set(&self, r: f64, x: &[f64]) -> bool {
        self.v.eval(x) <= r
    }
}
