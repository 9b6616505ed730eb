use serde::Serialize;

use crate::error::{ensure, Result};
use crate::linalg::{self, Matrix};
use crate::rng::StepRng;

/// A finite Markov chain: transition table and law of `Z_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteChain {
    pub transition: Matrix,
    pub initial: Vec<f64>,
}

impl FiniteChain {
    pub fn new(transition: Matrix, initial: Vec<f64>) -> Result<Self> {
        linalg::check_stochastic(&transition, "chain.transition")?;
        ensure(initial.len() == transition.len(), "chain.initial", "length must equal state count")?;
        linalg::check_distribution(&initial, "chain.initial")?;
        Ok(FiniteChain { transition, initial })
    }

    /// Chain started from its stationary law.
    pub fn stationary(transition: Matrix) -> Result<Self> {
        let pi = linalg::stationary_distribution(&transition);
        Self::new(transition, pi)
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    /// Law of `Z_j`.
    pub fn marginal(&self, j: usize) -> Vec<f64> {
        let mut v = self.initial.clone();
        for _ in 0..j {
            v = linalg::vec_mat(&v, &self.transition);
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AlphaMode {
    /// Exhaustive for at most 12 states, alternating ascent otherwise.
    Auto,
    Exhaustive,
    AlternatingAscent,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaResult {
    pub value: f64,
    /// Start index `j` attaining the maximum inside the window.
    pub j_argmax: usize,
    pub window: usize,
    /// False when computed by alternating ascent (a lower bound on the sup).
    pub exact: bool,
    pub set_s: Vec<usize>,
    pub set_t: Vec<usize>,
}

const EXHAUSTIVE_LIMIT: usize = 12;
const EXHAUSTIVE_HARD_LIMIT: usize = 20;
const RESTARTS: usize = 32;

/// `sup_j sup_{S,T} |P(Z_j in S, Z_{j+n} in T) - P(Z_j in S) P(Z_{j+n} in T)|` over
/// `j = 0..=window`. For a Markov chain this equals the strong mixing coefficient between
/// past and future at lag `n` (the sup over sigma-algebras reduces to single times).
pub fn exact_alpha_finite(chain: &FiniteChain, n: usize, window: usize, mode: AlphaMode) -> Result<AlphaResult> {
    let m = chain.states();
    let exhaustive = match mode {
        AlphaMode::Auto => m <= EXHAUSTIVE_LIMIT,
        AlphaMode::Exhaustive => {
            ensure(
                m <= EXHAUSTIVE_HARD_LIMIT,
                "chain",
                format!("exhaustive mode supports at most {EXHAUSTIVE_HARD_LIMIT} states"),
            )?;
            true
        }
        AlphaMode::AlternatingAscent => false,
    };
    let pn = linalg::mat_pow(&chain.transition, n);
    let mut mu = chain.initial.clone();
    let mut best = AlphaResult {
        value: 0.0,
        j_argmax: 0,
        window,
        exact: exhaustive,
        set_s: vec![],
        set_t: vec![],
    };
    for j in 0..=window {
        if j > 0 {
            mu = linalg::vec_mat(&mu, &chain.transition);
        }
        let nu = linalg::vec_mat(&mu, &pn);
        let d: Matrix = (0..m)
            .map(|a| (0..m).map(|b| mu[a] * pn[a][b] - mu[a] * nu[b]).collect())
            .collect();
        let (v, s, t) = if exhaustive {
            max_cov_exhaustive(&d)
        } else {
            max_cov_ascent(&d, j as u64)
        };
        if v > best.value {
            best.value = v;
            best.j_argmax = j;
            best.set_s = s;
            best.set_t = t;
        }
    }
    best.value = best.value.clamp(0.0, 0.25);
    Ok(best)
}

/// Given S (as column sums of D over S), the best T collects the positive columns. Since
/// rows and columns of D sum to zero, `sup |D(S,T)| = sup D(S,T)`.
fn best_t(col: &[f64]) -> (f64, Vec<usize>) {
    let mut v = 0.0;
    let mut t = Vec::new();
    for (b, c) in col.iter().enumerate() {
        if *c > 0.0 {
            v += c;
            t.push(b);
        }
    }
    (v, t)
}

fn max_cov_exhaustive(d: &Matrix) -> (f64, Vec<usize>, Vec<usize>) {
    let m = d.len();
    let mut col = vec![0.0; m];
    let mut best = (0.0, 0u64);
    // Gray-code walk over subsets S, updating column sums by one row per step.
    let mut gray: u64 = 0;
    for k in 1u64..(1u64 << m) {
        let g = k ^ (k >> 1);
        let flip = (g ^ gray).trailing_zeros() as usize;
        let sign = if g & (1 << flip) != 0 { 1.0 } else { -1.0 };
        for (c, x) in col.iter_mut().zip(&d[flip]) {
            *c += sign * x;
        }
        gray = g;
        let v: f64 = col.iter().filter(|c| **c > 0.0).sum();
        if v > best.0 {
            best = (v, g);
        }
    }
    let s: Vec<usize> = (0..m).filter(|a| best.1 & (1 << a) != 0).collect();
    let mut colsum = vec![0.0; m];
    for a in &s {
        for (c, x) in colsum.iter_mut().zip(&d[*a]) {
            *c += x;
        }
    }
    let (v, t) = best_t(&colsum);
    (v.max(best.0), s, t)
}

fn max_cov_ascent(d: &Matrix, salt: u64) -> (f64, Vec<usize>, Vec<usize>) {
    let m = d.len();
    let mut rng = StepRng::from_seed(0xA1FA, salt);
    let mut best: (f64, Vec<usize>, Vec<usize>) = (0.0, vec![], vec![]);
    for restart in 0..RESTARTS {
        let mut in_s: Vec<bool> = if restart < m {
            (0..m).map(|a| a == restart).collect()
        } else {
            (0..m).map(|_| rng.uniform() < 0.5).collect()
        };
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let mut col = vec![0.0; m];
            for a in (0..m).filter(|a| in_s[*a]) {
                for (c, x) in col.iter_mut().zip(&d[a]) {
                    *c += x;
                }
            }
            let in_t: Vec<bool> = col.iter().map(|c| *c > 0.0).collect();
            let row: Vec<f64> = (0..m)
                .map(|a| (0..m).filter(|b| in_t[*b]).map(|b| d[a][b]).sum())
                .collect();
            let next_s: Vec<bool> = row.iter().map(|r| *r > 0.0).collect();
            let v: f64 = row.iter().filter(|r| **r > 0.0).sum();
            if v <= prev + 1e-15 {
                break;
            }
            prev = v;
            if v > best.0 {
                best = (
                    v,
                    (0..m).filter(|a| next_s[*a]).collect(),
                    (0..m).filter(|b| in_t[*b]).collect(),
                );
            }
            in_s = next_s;
        }
    }
    best
}

/// phi/psi coefficients of a stationary finite chain at lag `n`, from single-time
/// reduction: `psi(n) = max_{a,b} |P^n(a,b)/pi(b) - 1|`, `phi(n) = max_a (1/2) sum_b |P^n(a,b) - pi(b)|`.
pub fn psi_finite(transition: &Matrix, n: usize) -> f64 {
    let pi = linalg::stationary_distribution(transition);
    let pn = linalg::mat_pow(transition, n);
    let mut v: f64 = 0.0;
    for (a, row) in pn.iter().enumerate() {
        if pi[a] <= 0.0 {
            continue;
        }
        for (b, x) in row.iter().enumerate() {
            if pi[b] > 0.0 {
                v = v.max((x / pi[b] - 1.0).abs());
            }
        }
    }
    v
}

pub fn phi_finite(transition: &Matrix, n: usize) -> f64 {
    let pi = linalg::stationary_distribution(transition);
    let pn = linalg::mat_pow(transition, n);
    pn.iter()
        .enumerate()
        .filter(|(a, _)| pi[*a] > 0.0)
        .map(|(_, row)| 0.5 * row.iter().zip(&pi).map(|(x, p)| (x - p).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
