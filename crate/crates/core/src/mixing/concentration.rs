use serde::Serialize;

use crate::dynamics::MixingRateDescriptor;
use crate::error::{ensure, Error, Result};

/// Bound on `E[exp(delta * sum_{i<n} log W_i)]` for sub-Gaussian centred log-sums with
/// drift `-ell` per step and variance proxy `M`:
/// `e^{-delta n ell} + 2 delta sqrt(pi) sqrt(M n) e^{delta^2 M n / 4 - delta n ell}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UsefulBound {
    pub value: f64,
    /// `delta < 4 ell / M`: the bound decays in n.
    pub admissible: bool,
}

pub fn useful_bound(delta: f64, ell: f64, m: f64, n: usize) -> Result<UsefulBound> {
    ensure(delta >= 0.0, "delta", "must be >= 0")?;
    ensure(ell > 0.0, "ell", "must be > 0")?;
    ensure(m > 0.0, "M", "must be > 0")?;
    let nf = n as f64;
    let value = (-delta * nf * ell).exp()
        + 2.0 * delta * std::f64::consts::PI.sqrt() * (m * nf).sqrt() * (delta * delta * m * nf / 4.0 - delta * nf * ell).exp();
    Ok(UsefulBound {
        value,
        admissible: delta < 4.0 * ell / m,
    })
}

/// `4 exp(-(v_q/(2qM)) log(1 + lambda q M / v_q)) + 4 M(n) alpha_{q+1} / lambda`.
pub fn rio_bound(m: f64, v_q: f64, q: usize, lambda: f64, m_n: f64, alpha_q1: f64) -> Result<f64> {
    ensure(q > 1, "q", "must be > 1")?;
    ensure(m > 0.0 && v_q > 0.0, "M", "M and v_q must be > 0")?;
    let qm = q as f64 * m;
    if lambda < qm {
        return Err(Error::config("lambda", format!("must be >= qM = {qm}")));
    }
    Ok(4.0 * (-(v_q / (2.0 * qm)) * (1.0 + lambda * qm / v_q).ln()).exp() + 4.0 * m_n * alpha_q1 / lambda)
}

/// Simplified exponential inequality `c1 (exp(-c2 n delta / q) + alpha_{q+1})`.
pub fn sufexp(c1: f64, c2: f64, n: usize, delta: f64, q: usize, alpha_q1: f64) -> Result<f64> {
    ensure(q >= 1, "q", "must be >= 1")?;
    ensure(c1 >= 0.0 && c2 >= 0.0, "c1", "constants must be >= 0")?;
    Ok(c1 * ((-c2 * n as f64 * delta / q as f64).exp() + alpha_q1))
}

/// `exp(-C delta^2 n / (M^2 + M delta log n log log n))`.
pub fn merlevede_bound(c: f64, m: f64, delta: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::config("n", "must be >= 3 so that log log n is defined"));
    }
    ensure(c > 0.0 && m > 0.0, "C", "C and M must be > 0")?;
    ensure(delta >= 0.0, "delta", "must be >= 0")?;
    let nf = n as f64;
    let ln = nf.ln();
    Ok((-c * delta * delta * nf / (m * m + m * delta * ln * ln.ln())).exp())
}

/// How `p_n(delta_1) = sup_j P(gamma_{j+1} ... gamma_{j+n} > exp(-n delta_1))` is bounded.
#[derive(Clone, Debug, Serialize)]
pub enum PnRoute {
    /// A known value (or a function of n given as a table).
    Given(Vec<f64>),
    /// Polynomial-mixing route: `c1 (exp(-c2 n delta / q) + alpha(q+1))`.
    Sufexp {
        c1: f64,
        c2: f64,
        delta: f64,
        q: usize,
        alpha: MixingRateDescriptor,
    },
    /// Geometric-mixing route through `merlevede_bound`.
    Merlevede { c: f64, m: f64, delta: f64 },
}

/// How `d_n` is bounded from `p_n`.
#[derive(Clone, Debug, Serialize)]
pub enum DnRoute {
    /// Exponential moment of K: `sup E K e^{-n delta_1} - (L/lambda) p log p + L p`.
    ExpMoment { sup_ek: f64, l: f64, lambda: f64 },
    /// k-th moment of K: `L^(1/k) (p^((k-1)/k) + e^{-n s delta_1})`.
    Moment { l: f64, k: f64, s: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct ProductsParams {
    pub delta1: f64,
    pub pn: PnRoute,
    pub dn: DnRoute,
    /// Terms summed for `r_n`; the sum is flagged as truncated.
    pub tail_terms: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductsValue {
    pub n: usize,
    pub p_n: f64,
    pub d_n: f64,
    pub r_n: f64,
    pub r_truncated_at: usize,
}

pub fn pn_bound(params: &ProductsParams, n: usize) -> Result<f64> {
    let v = match &params.pn {
        PnRoute::Given(t) => {
            ensure(!t.is_empty(), "pn", "table must be nonempty")?;
            t[n.min(t.len() - 1)]
        }
        PnRoute::Sufexp { c1, c2, delta, q, alpha } => sufexp(*c1, *c2, n, *delta, *q, alpha.value(q + 1))?,
        PnRoute::Merlevede { c, m, delta } => {
            if n < 3 {
                1.0
            } else {
                merlevede_bound(*c, *m, *delta, n)?
            }
        }
    };
    Ok(v.clamp(0.0, 1.0))
}

pub fn dn_bound(params: &ProductsParams, n: usize, p_n: f64) -> Result<f64> {
    let nf = n as f64;
    match &params.dn {
        DnRoute::ExpMoment { sup_ek, l, lambda } => {
            ensure(*lambda > 0.0, "lambda", "must be > 0")?;
            let plogp = if p_n > 0.0 { p_n * p_n.ln() } else { 0.0 };
            Ok(sup_ek * (-nf * params.delta1).exp() - (l / lambda) * plogp + l * p_n)
        }
        DnRoute::Moment { l, k, s } => {
            ensure(*k > 1.0, "k", "must be > 1")?;
            Ok(l.powf(1.0 / k) * (p_n.powf((k - 1.0) / k) + (-nf * s * params.delta1).exp()))
        }
    }
}

/// `(p_n, d_n, r_n)` with `r_n` the sum of the d-bounds over `n..n + tail_terms`.
pub fn products_pn_and_dn(params: &ProductsParams, n: usize) -> Result<ProductsValue> {
    ensure(params.delta1 > 0.0, "delta1", "must be > 0")?;
    let p_n = pn_bound(params, n)?;
    let d_n = dn_bound(params, n, p_n)?;
    let mut r_n = 0.0;
    for l in n..n + params.tail_terms.max(1) {
        let p = pn_bound(params, l)?;
        r_n += dn_bound(params, l, p)?;
    }
    Ok(ProductsValue {
        n,
        p_n,
        d_n,
        r_n,
        r_truncated_at: n + params.tail_terms.max(1),
    })
}
