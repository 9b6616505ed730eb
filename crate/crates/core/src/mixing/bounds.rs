use serde::Serialize;

use crate::dynamics::MixingRateDescriptor;
use crate::error::{ensure, Error, Result};

/// Extrapolation of a tail sequence beyond its computed range.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TailFit {
    /// `value(i) = c * rho^i`.
    Geometric { c: f64, rho: f64 },
    /// `value(i) = c * i^(-a)`.
    Power { c: f64, a: f64 },
}

impl TailFit {
    pub fn eval(&self, i: usize) -> f64 {
        match self {
            TailFit::Geometric { c, rho } => c * rho.powf(i as f64),
            TailFit::Power { c, a } => c * (i.max(1) as f64).powf(-a),
        }
    }
}

/// The sequence `r_i`, stored for `i = 0..values.len()`, optionally extrapolated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailSequence {
    pub values: Vec<f64>,
    pub extrapolation: Option<TailFit>,
}

impl TailSequence {
    pub fn new(values: Vec<f64>, extrapolation: Option<TailFit>) -> Self {
        TailSequence { values, extrapolation }
    }

    /// `r_i = c rho^i` for all i.
    pub fn geometric(c: f64, rho: f64) -> Self {
        TailSequence {
            values: vec![c],
            extrapolation: Some(TailFit::Geometric { c, rho }),
        }
    }

    pub fn get(&self, i: usize) -> Result<f64> {
        if let Some(v) = self.values.get(i) {
            return Ok(*v);
        }
        match &self.extrapolation {
            Some(f) => Ok(f.eval(i)),
            None => Err(Error::config(
                "r",
                format!("r_{i} requested but only {} terms are available", self.values.len()),
            )),
        }
    }

    pub fn is_geometric(&self) -> bool {
        matches!(self.extrapolation, Some(TailFit::Geometric { rho, .. }) if rho < 1.0)
    }
}

/// Lag argument in the main bound: `q + 1 - i` (one-step) or `q - i` (p-step variant).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundVariant {
    Standard,
    Extended,
}

/// Constants of the main transfer bound `c * inf {r_i + kappa^(n/q) + alpha^Y(lag)}`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundParams {
    pub r: TailSequence,
    pub kappa: f64,
    pub c: f64,
    pub alpha_y: MixingRateDescriptor,
    pub variant: BoundVariant,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.kappa > 0.0 && self.kappa < 1.0, "kappa", "must lie in (0,1)")?;
        ensure(self.c > 0.0, "c", "must be > 0")?;
        self.alpha_y.validate()
    }

    /// `alpha^Y(k)` with the convention `alpha(0) = 1/4`.
    pub fn alpha(&self, k: usize) -> f64 {
        alpha_at(&self.alpha_y, k)
    }
}

pub fn alpha_at(rate: &MixingRateDescriptor, k: usize) -> f64 {
    if k == 0 {
        0.25
    } else {
        rate.value(k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundValue {
    pub n: usize,
    pub value: f64,
    pub i: usize,
    pub q: usize,
}

fn main_term(params: &BoundParams, n: usize, i: usize, q: usize) -> Result<f64> {
    let lag = match params.variant {
        BoundVariant::Standard => q + 1 - i,
        BoundVariant::Extended => q - i,
    };
    Ok(params.c * (params.r.get(i)? + params.kappa.powf(n as f64 / q as f64) + params.alpha(lag)))
}

/// Exhaustive minimization over `1 <= i <= q <= n`. Ties keep the first pair found in
/// the order q ascending, then i ascending.
pub fn main_bound(params: &BoundParams, n: usize) -> Result<BoundValue> {
    params.validate()?;
    ensure(n >= 1, "n", "must be >= 1")?;
    let mut best = BoundValue {
        n,
        value: f64::INFINITY,
        i: 0,
        q: 0,
    };
    for q in 1..=n {
        for i in 1..=q {
            let v = main_term(params, n, i, q)?;
            if v < best.value {
                best.value = v;
                best.i = i;
                best.q = q;
            }
        }
    }
    Ok(best)
}

/// Transfer of environment mixing and coupling to the joint chain:
/// `min_{0 <= m < floor(n/p)} alpha^Y(m p) + b(floor(n/p) - 1 - m)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferValue {
    pub n: usize,
    pub value: f64,
    pub m: usize,
}

pub fn transfer_bound(alpha_y: &dyn Fn(usize) -> f64, b: &[f64], p: usize, n: usize) -> Result<TransferValue> {
    ensure(p >= 1, "p", "must be >= 1")?;
    if n < p {
        return Err(Error::config("n", format!("lag {n} is below the step count {p}")));
    }
    let blocks = n / p;
    ensure(
        b.len() >= blocks,
        "b",
        format!("b must be defined on 0..{}, got {} values", blocks - 1, b.len()),
    )?;
    let mut best = TransferValue {
        n,
        value: f64::INFINITY,
        m: 0,
    };
    for m in 0..blocks {
        let a = if m == 0 { 0.25 } else { alpha_y(m * p) };
        let v = a + b[blocks - 1 - m];
        if v < best.value {
            best = TransferValue { n, value: v, m };
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RateCase {
    /// `alpha^Y(n) ~ rho^n`: plug in `q = ceil(sqrt n)`, `i = floor(q/2)`.
    Geometric,
    /// `alpha^Y(n) ~ n^(-a)`: plug in `q = ceil(c_q n / log n)`, `i = floor(q/2)`.
    Power { c_q: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub i: usize,
    pub q: usize,
    pub envelope: f64,
}

/// Predicted envelope from the rate recipes (evaluates the main-bound expression at the
/// recipe's `(i, q)` rather than minimizing).
pub fn rate_table(case: RateCase, params: &BoundParams, n_grid: &[usize]) -> Result<Vec<RateRow>> {
    params.validate()?;
    ensure(
        params.r.is_geometric(),
        "r",
        "the rate recipes need a geometric (long-term contractive) r sequence",
    )?;
    n_grid
        .iter()
        .map(|&n| {
            ensure(n >= 1, "n", "must be >= 1")?;
            let q = match case {
                RateCase::Geometric => (n as f64).sqrt().ceil() as usize,
                RateCase::Power { c_q } => {
                    if n < 3 {
                        1
                    } else {
                        (c_q * n as f64 / (n as f64).ln()).ceil() as usize
                    }
                }
            }
            .clamp(1, n);
            let i = (q / 2).max(1);
            let i = if params.variant == BoundVariant::Extended { i.min(q) } else { i };
            Ok(RateRow {
                n,
                i,
                q,
                envelope: main_term(params, n, i, q)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ThetaKind {
    Alpha,
    Phi,
    Psi,
}

/// Bounds on `E[Theta_1 ... Theta_n]` under one-step mixing of the factors.
pub fn product_bound_theta(kind: ThetaKind, coeff: f64, theta_hat: f64, theta_bar: Option<f64>, n: usize) -> Result<f64> {
    ensure(theta_hat < 1.0, "theta_hat", "must be < 1")?;
    ensure(theta_hat >= 0.0, "theta_hat", "must be >= 0")?;
    ensure(coeff >= 0.0, "coeff", "must be >= 0")?;
    ensure(n >= 1, "n", "must be >= 1")?;
    let nf = n as f64;
    match kind {
        ThetaKind::Psi => Ok((1.0 + coeff).powf(nf - 1.0) * theta_hat.powf(nf)),
        ThetaKind::Phi => {
            let bar = theta_bar.ok_or_else(|| Error::config("theta_bar", "required for the phi bound"))?;
            ensure(bar.is_finite(), "theta_bar", "must be finite")?;
            Ok((coeff * bar + theta_hat).powf(nf - 1.0) * theta_hat)
        }
        ThetaKind::Alpha => {
            let bar = theta_bar.ok_or_else(|| Error::config("theta_bar", "required for the alpha bound"))?;
            ensure(bar.is_finite(), "theta_bar", "must be finite")?;
            ensure(theta_hat < bar, "theta_hat", "must be below theta_bar")?;
            Ok(coeff * bar.powf(nf) / (1.0 - theta_hat / bar) + theta_hat.powf(nf))
        }
    }
}

/// Mixing decay of the environment used by the block bound.
pub enum Decay<'a> {
    Phi(&'a dyn Fn(usize) -> f64),
    Psi(&'a dyn Fn(usize) -> f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockBound {
    pub p: usize,
    pub delta: f64,
    /// `phi(p) gamma_bar + gamma_hat` or `(1 + psi(p)) gamma_hat`.
    pub base: f64,
    pub c: f64,
    pub kappa: f64,
    pub n: usize,
    /// `sup_j E[gamma_{j+1}^delta ... gamma_{j+n}^delta] <= bound <= c kappa^n`.
    pub bound: f64,
}

/// Block construction for `E[prod gamma^delta]`: pick the smallest admissible block
/// length `p`, split the product into `p` interleaved subsequences of length
/// `q = floor(n/p)`, apply the one-step product bound to each and combine them with
/// Hoelder's inequality at exponent `2p - 1`. The per-block bound is `base^q`, so the
/// product is at most `base^(q/2) <= base^(-1/2) (base^(1/(2p)))^n`.
pub fn block_product_bound(gamma_hat: f64, gamma_bar: Option<f64>, decay: Decay<'_>, n: usize, p_cap: usize) -> Result<BlockBound> {
    ensure(gamma_hat < 1.0 && gamma_hat >= 0.0, "gamma_hat", "must lie in [0,1)")?;
    let (kind, coeff_fn): (ThetaKind, &dyn Fn(usize) -> f64) = match decay {
        Decay::Phi(f) => {
            ensure(gamma_bar.is_some(), "gamma_bar", "required for the phi case")?;
            (ThetaKind::Phi, f)
        }
        Decay::Psi(f) => (ThetaKind::Psi, f),
    };
    let base_at = |p: usize| -> f64 {
        match kind {
            ThetaKind::Phi => coeff_fn(p) * gamma_bar.unwrap_or(f64::INFINITY) + gamma_hat,
            _ => (1.0 + coeff_fn(p)) * gamma_hat,
        }
    };
    let p = (2..=p_cap.max(2))
        .find(|p| base_at(*p) < 1.0)
        .ok_or_else(|| Error::Numerical(format!("no admissible block length p <= {p_cap}; bound unavailable")))?;
    let base = base_at(p);
    let delta = 1.0 / (2 * p - 1) as f64;
    let q = n / p;
    let per_block = if q == 0 {
        1.0
    } else {
        product_bound_theta(kind, coeff_fn(p), gamma_hat, gamma_bar, q)?
    };
    let kappa = base.powf(1.0 / (2 * p) as f64);
    let c = if base > 0.0 { base.powf(-0.5) } else { f64::INFINITY };
    Ok(BlockBound {
        p,
        delta,
        base,
        c,
        kappa,
        n,
        bound: per_block.min(base.powf(q as f64)).sqrt(),
    })
}
