//! Small statistical helpers shared by the estimators.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Standard error of a binomial proportion.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

/// Least-squares projection onto non-increasing sequences (pool adjacent violators).
pub fn isotonic_nonincreasing(ys: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(ys.len());
    for &y in ys {
        blocks.push((y, 1));
        while blocks.len() > 1 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, w)| std::iter::repeat(m).take(w))
        .collect()
}

/// Ordinary least squares fit `y = a + b x`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub r_squared: f64,
    /// Two-sided p-value for slope = 0 (NaN with fewer than 3 points).
    pub p_value: f64,
    pub n: usize,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    let (slope_se, p_value) = if n > 2 {
        let se = (rss / (n - 2) as f64 / sxx).sqrt();
        let p = if se > 0.0 {
            let t = StudentsT::new(0.0, 1.0, (n - 2) as f64).expect("valid dof");
            2.0 * (1.0 - t.cdf((slope / se).abs()))
        } else if slope != 0.0 {
            0.0
        } else {
            1.0
        };
        (se, p)
    } else {
        (f64::NAN, f64::NAN)
    };
    Some(LineFit {
        intercept,
        slope,
        slope_se,
        r_squared,
        p_value,
        n,
    })
}

/// Fit `y <= c * exp(-k x)` to positive points: least-squares slope in log space, then
/// the intercept is raised to the largest residual so that every point is dominated.
/// Returns `(c, k)`; `None` when fewer than two positive points exist.
pub fn fit_exponential_envelope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pos: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0 && y.is_finite())
        .map(|&(x, y)| (x, y.ln()))
        .collect();
    let xs: Vec<f64> = pos.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pos.iter().map(|p| p.1).collect();
    let fit = fit_line(&xs, &ys)?;
    let shift = pos
        .iter()
        .map(|(x, y)| y - fit.intercept - fit.slope * x)
        .fold(f64::NEG_INFINITY, f64::max);
    Some(((fit.intercept + shift).exp(), -fit.slope))
}

/// Empirical quantile with linear interpolation (type 7). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Lag-1 sample autocorrelation.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if n <= lag + 1 {
        return f64::NAN;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let var: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    let cov: f64 = (0..n - lag).map(|t| (xs[t] - m) * (xs[t + lag] - m)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pava_examples() {
        assert_eq!(isotonic_nonincreasing(&[3.0, 2.0, 1.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(isotonic_nonincreasing(&[1.0, 3.0]), vec![2.0, 2.0]);
        let y = isotonic_nonincreasing(&[5.0, 1.0, 2.0, 3.0, 0.0]);
        assert_eq!(y, vec![5.0, 2.0, 2.0, 2.0, 0.0]);
    }

    #[test]
    fn line_fit_exact() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 2.0).abs() < 1e-12);
        assert_eq!(f.p_value, 0.0);
    }

    #[test]
    fn envelope_dominates() {
        let pts: Vec<(f64, f64)> = (1..20)
            .map(|i| (i as f64, 0.8f64.powi(i) * (1.0 + 0.1 * ((i * 7) % 3) as f64)))
            .collect();
        let (c, k) = fit_exponential_envelope(&pts).unwrap();
        for (x, y) in pts {
            assert!(c * (-k * x).exp() >= y * (1.0 - 1e-12));
        }
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
    }
}
