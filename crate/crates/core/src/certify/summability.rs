use serde::Serialize;

use crate::dynamics::{sample_environment_rep, EnvironmentSpec, Trajectory};
use crate::error::{ensure, Error, Result};
use crate::mixing::{TailFit, TailSequence};
use crate::par;
use crate::report::{Cell, Table};
use crate::stats::{binomial_se, fit_line, isotonic_nonincreasing};

use super::{DriftCertificate, MinorizationCertificate};

const OVERFLOW_GUARD: f64 = 1e150;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FitForm {
    Geometric,
    Power,
}

/// Upper-envelope fit of `d_l` for `l >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DlFit {
    pub form: FitForm,
    pub constant: f64,
    /// `rho` for the geometric form, `a` for the power form.
    pub rate: f64,
    pub r_squared: f64,
}

impl DlFit {
    pub fn eval(&self, l: f64) -> f64 {
        match self.form {
            FitForm::Geometric => self.constant * self.rate.powf(l),
            FitForm::Power => self.constant * l.max(1.0).powf(-self.rate),
        }
    }

    /// `sum_{l > big_l} d_l` under the fit, or `None` if the fitted sequence is not summable.
    fn tail_after(&self, big_l: usize) -> Option<f64> {
        let l = big_l as f64;
        match self.form {
            FitForm::Geometric if self.rate < 1.0 => {
                Some(self.constant * self.rate.powf(l + 1.0) / (1.0 - self.rate))
            }
            FitForm::Power if self.rate > 1.0 => {
                Some(self.constant * (l + 0.5).powf(1.0 - self.rate) / (self.rate - 1.0))
            }
            _ => None,
        }
    }
}

/// Estimated `d_0..d_L`, the tails `r_i` and the window used for the supremum over `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummabilityReport {
    pub d: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Time attaining the supremum for each `l`.
    pub argmax_t: Vec<i64>,
    /// `r_i = d_i + r_{i+1}`, with `r_L = d_L + tail`.
    pub r: Vec<f64>,
    pub tail: f64,
    pub tail_extrapolated: bool,
    pub fit: Option<DlFit>,
    pub sup_window: Vec<i64>,
    pub reps: usize,
}

impl SummabilityReport {
    pub fn r0(&self) -> f64 {
        self.r[0]
    }

    pub fn d_at(&self, l: usize) -> Option<f64> {
        match self.d.get(l) {
            Some(v) => Some(*v),
            None => self.fit.as_ref().map(|f| f.eval(l as f64)),
        }
    }

    /// `r_i` as a tail sequence, extrapolated by the fit beyond `L`.
    pub fn tail_sequence(&self) -> TailSequence {
        let big_l = self.r.len() - 1;
        let ext = self.fit.as_ref().and_then(|f| {
            // at = r_{L+1} under the fit
            let at = f.tail_after(big_l)?;
            match f.form {
                FitForm::Geometric => Some(TailFit::Geometric {
                    c: at / f.rate.powf((big_l + 1) as f64),
                    rho: f.rate,
                }),
                FitForm::Power => Some(TailFit::Power {
                    c: at * ((big_l + 1) as f64).powf(f.rate - 1.0),
                    a: f.rate - 1.0,
                }),
            }
        });
        TailSequence::new(self.r.clone(), ext)
    }

    /// Columns: index, estimate, stderr, bound, violated (bound = r_i).
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["index", "estimate", "stderr", "bound", "violated"]);
        for (i, d) in self.d.iter().enumerate() {
            t.push(vec![
                Cell::from(i),
                (*d).into(),
                self.stderr[i].into(),
                self.r[i].into(),
                false.into(),
            ]);
        }
        t
    }
}

fn fit_dl(d: &[f64]) -> Option<DlFit> {
    let pts: Vec<(f64, f64)> = d
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(l, v)| (l as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let mut best: Option<DlFit> = None;
    for form in [FitForm::Geometric, FitForm::Power] {
        let xs: Vec<f64> = pts
            .iter()
            .map(|(l, _)| if form == FitForm::Geometric { *l } else { l.ln() })
            .collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let Some(fit) = fit_line(&xs, &ys) else { continue };
        let shift = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| y - fit.intercept - fit.slope * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let constant = (fit.intercept + shift).exp();
        let rate = match form {
            FitForm::Geometric => fit.slope.exp(),
            FitForm::Power => -fit.slope,
        };
        let cand = DlFit {
            form,
            constant,
            rate,
            r_squared: fit.r_squared,
        };
        if best.as_ref().is_none_or(|b| cand.r_squared > b.r_squared) {
            best = Some(cand);
        }
    }
    best
}

/// Monte Carlo estimate of `d_l = sup_t E[K(Y_t) prod_{i=1}^{l} gamma(Y_{t+i})]` for
/// `l = 0..=L` with the supremum taken over `sup_window`. At `t = -1` the factor `K` is
/// replaced by 1; `d_0` is `sup_{t >= 0} E[K(Y_t)]`. For a p-step certificate the times
/// index p-blocks.
pub fn estimate_dl(
    cert: &DriftCertificate,
    env: &EnvironmentSpec,
    big_l: usize,
    sup_window: &[i64],
    reps: usize,
    seed: u64,
) -> Result<SummabilityReport> {
    env.validate()?;
    ensure(!sup_window.is_empty(), "sup_window", "must contain at least one time")?;
    ensure(reps >= 2, "reps", "must be >= 2")?;
    ensure(
        sup_window.iter().all(|&t| t >= -1),
        "sup_window",
        "times must be >= -1",
    )?;
    let p = cert.p as i64;
    let t_lo = sup_window.iter().copied().min().unwrap().max(0);
    let t_hi = sup_window.iter().copied().max().unwrap() + big_l as i64;
    let nw = sup_window.len();
    let per_t = big_l + 1;
    let width = 2 * nw * per_t;
    let sums = par::sum(reps, width, |rep| {
        let base = sample_environment_rep(env, t_lo * p, (t_hi.max(t_lo) + 1) * p - 1, seed, rep as u64)?;
        let y: Trajectory = if p == 1 { base } else { base.blocks(p as usize) };
        let mut out = vec![0.0; width];
        for (w, &t) in sup_window.iter().enumerate() {
            let mut prod = if t < 0 { 1.0 } else { cert.k.eval(y.get(t)) };
            for l in 0..=big_l {
                if l > 0 {
                    prod *= cert.gamma.eval(y.get(t + l as i64));
                }
                if !prod.is_finite() || prod > OVERFLOW_GUARD {
                    return Err(Error::Numerical(format!(
                        "divergent product K(Y_t) gamma(Y_t+1)...gamma(Y_t+l) at t={t}, l={l}"
                    )));
                }
                let idx = 2 * (w * per_t + l);
                out[idx] = prod;
                out[idx + 1] = prod * prod;
            }
        }
        Ok(out)
    })?;
    let nf = reps as f64;
    let mut d = vec![0.0; per_t];
    let mut stderr = vec![0.0; per_t];
    let mut argmax_t = vec![0i64; per_t];
    for l in 0..=big_l {
        let mut best = f64::NEG_INFINITY;
        for (w, &t) in sup_window.iter().enumerate() {
            if l == 0 && t < 0 {
                continue;
            }
            let idx = 2 * (w * per_t + l);
            let mean = sums[idx] / nf;
            if mean > OVERFLOW_GUARD {
                return Err(Error::Numerical(format!("running mean of d_{l} exceeds the overflow guard")));
            }
            if mean > best {
                let var = ((sums[idx + 1] - nf * mean * mean) / (nf - 1.0)).max(0.0);
                best = mean;
                d[l] = mean;
                stderr[l] = (var / nf).sqrt();
                argmax_t[l] = t;
            }
        }
        if best == f64::NEG_INFINITY {
            // only t = -1 in the window; K(Y_{-1}) = 1
            d[l] = 1.0;
            argmax_t[l] = -1;
        }
    }
    let fit = fit_dl(&d);
    let (tail, tail_extrapolated) = if d[big_l] == 0.0 {
        (0.0, false)
    } else {
        match fit.as_ref().and_then(|f| f.tail_after(big_l)) {
            Some(t) => (t, true),
            None => (f64::INFINITY, true),
        }
    };
    let mut r = vec![0.0; per_t];
    let mut acc = tail;
    for l in (0..=big_l).rev() {
        acc += d[l];
        r[l] = acc;
    }
    Ok(SummabilityReport {
        d,
        stderr,
        argmax_t,
        r,
        tail,
        tail_extrapolated,
        fit,
        sup_window: sup_window.to_vec(),
        reps,
    })
}

/// Empirical tail curve `beta_bar -> sup_t P(beta(R, Y_t) > beta_bar)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct A2Report {
    pub beta_grid: Vec<f64>,
    pub raw: Vec<f64>,
    /// Isotonic (non-increasing) correction of `raw`.
    pub curve: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `curve` at the last grid point is below `tolerance`.
    pub holds: bool,
    pub tolerance: f64,
}

/// Checks the tail condition on `beta(R, Y_t)` over `t = 0..=horizon` (p-block times).
#[allow(clippy::too_many_arguments)]
pub fn check_a2(
    minor: &MinorizationCertificate,
    env: &EnvironmentSpec,
    r: f64,
    beta_grid: &[f64],
    horizon: usize,
    reps: usize,
    seed: u64,
) -> Result<A2Report> {
    env.validate()?;
    ensure(!beta_grid.is_empty(), "beta_grid", "must not be empty")?;
    ensure(
        beta_grid.windows(2).all(|w| w[0] < w[1]),
        "beta_grid",
        "must be strictly increasing",
    )?;
    ensure(
        beta_grid.iter().all(|b| *b > 0.0 && *b < 1.0),
        "beta_grid",
        "values must lie in (0,1)",
    )?;
    ensure(reps >= 1, "reps", "must be >= 1")?;
    let p = minor.p.max(1) as i64;
    let ng = beta_grid.len();
    let nt = horizon + 1;
    let counts = par::sum(reps, ng * nt, |rep| {
        let base = sample_environment_rep(env, 0, (horizon as i64 + 1) * p - 1, seed, rep as u64)?;
        let y = if p == 1 { base } else { base.blocks(p as usize) };
        let mut out = vec![0.0; ng * nt];
        for t in 0..nt {
            let b = minor.beta(r, y.get(t as i64));
            for (g, bb) in beta_grid.iter().enumerate() {
                if b > *bb {
                    out[g * nt + t] = 1.0;
                }
            }
        }
        Ok(out)
    })?;
    let raw: Vec<f64> = (0..ng)
        .map(|g| {
            (0..nt)
                .map(|t| counts[g * nt + t] / reps as f64)
                .fold(0.0, f64::max)
        })
        .collect();
    let curve = isotonic_nonincreasing(&raw);
    let lower = curve
        .iter()
        .map(|p| (p - 1.96 * binomial_se(*p, reps)).max(0.0))
        .collect();
    let upper = curve
        .iter()
        .map(|p| (p + 1.96 * binomial_se(*p, reps)).min(1.0))
        .collect();
    let tolerance = 0.05;
    Ok(A2Report {
        beta_grid: beta_grid.to_vec(),
        holds: *curve.last().unwrap() < tolerance,
        raw,
        curve,
        lower,
        upper,
        tolerance,
    })
}
