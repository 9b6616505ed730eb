//! Exact computations for finite MCREs: the joint (environment, state) chain and the
//! pair chain of the split coupling.
//!
//! The joint chain lives on `z = y * m + x` (environment index `y`, state `x`, `m`
//! states); one step draws `X_{t+1} ~ Q(Y_t, X_t, .)` and `Y_{t+1} ~ P(Y_t, .)`. The pair
//! chain reproduces the coupling construction of [`crate::couple`] exactly: shared
//! inverse-CDF noise outside the small set, and inside it the regeneration branch or the
//! lockstep rejection residual (shared proposal and acceptance draws).

use crate::certify::MinorizationCertificate;
use crate::couple::RegenerationMode;
use crate::dynamics::FiniteKernel;
use crate::error::{ensure, Result};
use crate::linalg::{self, Matrix};
use crate::mixing::FiniteChain;

/// Transition matrix of `(Y_t, X_t)` on `y * m + x`.
pub fn joint_transition(kernel: &FiniteKernel, env: &Matrix) -> Result<Matrix> {
    linalg::check_stochastic(env, "env")?;
    let m = kernel.states();
    let k = env.len();
    ensure(
        kernel.env_states() == 1 || kernel.env_states() == k,
        "kernel",
        "one table per environment state required",
    )?;
    let mut p = vec![vec![0.0; k * m]; k * m];
    for y in 0..k {
        let q = kernel.table(y);
        for x in 0..m {
            for y2 in 0..k {
                for x2 in 0..m {
                    p[y * m + x][y2 * m + x2] = env[y][y2] * q[x][x2];
                }
            }
        }
    }
    Ok(p)
}

/// Joint chain started from `Y_0 ~ env_initial`, `X_0 = x0`.
pub fn joint_chain(kernel: &FiniteKernel, env: &Matrix, env_initial: &[f64], x0: usize) -> Result<FiniteChain> {
    let m = kernel.states();
    let mut init = vec![0.0; env.len() * m];
    for (y, w) in env_initial.iter().enumerate() {
        init[y * m + x0] = *w;
    }
    FiniteChain::new(joint_transition(kernel, env)?, init)
}

/// Law of `X_n`, `n = 0..=horizon`, from `X_0 = x0`, `Y_0 ~ env_initial`.
pub fn state_marginals(
    kernel: &FiniteKernel,
    env: &Matrix,
    env_initial: &[f64],
    x0: usize,
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    let m = kernel.states();
    let p = joint_transition(kernel, env)?;
    let mut w = vec![0.0; env.len() * m];
    for (y, a) in env_initial.iter().enumerate() {
        w[y * m + x0] = *a;
    }
    let mut out = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        if n > 0 {
            w = linalg::vec_mat(&w, &p);
        }
        let mut law = vec![0.0; m];
        for (z, v) in w.iter().enumerate() {
            law[z % m] += v;
        }
        out.push(law);
    }
    Ok(out)
}

/// Cells of `u` in (0,1) on which the inverse CDFs of two rows are constant:
/// `(mass, a, b)`.
fn shared_cells(row1: &[f64], row2: &[f64]) -> Vec<(f64, usize, usize)> {
    let c1 = linalg::cumulative(row1);
    let c2 = linalg::cumulative(row2);
    let mut cuts: Vec<f64> = c1.iter().chain(&c2).copied().filter(|c| *c > 0.0 && *c < 1.0).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            (
                w[1] - w[0],
                linalg::inverse_cdf(&c1, w[0]),
                linalg::inverse_cdf(&c2, w[0]),
            )
        })
        .collect()
}

/// One-step transition of the coupled pair on `a * m + b` under environment index `y`.
pub fn pair_transition(
    kernel: &FiniteKernel,
    minor: &MinorizationCertificate,
    r: f64,
    mode: RegenerationMode,
    y: usize,
) -> Result<Matrix> {
    let m = kernel.states();
    let q = kernel.table(y);
    let yv = [y as f64];
    let omb = 1.0 - minor.beta(r, &yv);
    let kappa: Vec<f64> = (0..m)
        .map(|b| minor.kappa_density(r, &yv, &[b as f64]).unwrap_or(0.0))
        .collect();
    let beta = 1.0 - omb;
    let mut out = vec![vec![0.0; m * m]; m * m];
    for a in 0..m {
        for b in 0..m {
            let row = &mut out[a * m + b];
            if a == b {
                for c in 0..m {
                    row[c * m + c] = q[a][c];
                }
                continue;
            }
            let small = minor.in_small_set(r, &[a as f64]) && minor.in_small_set(r, &[b as f64]);
            if mode == RegenerationMode::SharedNoise || !small {
                for (w, c1, c2) in shared_cells(&q[a], &q[b]) {
                    row[c1 * m + c2] += w;
                }
                continue;
            }
            for c in 0..m {
                row[c * m + c] += omb * kappa[c];
            }
            if beta <= 0.0 {
                continue;
            }
            // acceptance probability of a proposal c from row x
            let acc = |x: usize, c: usize| -> Result<f64> {
                let qq = q[x][c];
                if qq <= 0.0 {
                    return Ok(0.0);
                }
                let ratio = (qq - omb * kappa[c]) / qq;
                ensure(
                    ratio >= -1e-9,
                    "minor",
                    format!("Q({y}, {x}, {c}) = {qq} is below (1 - beta) kappa = {}", omb * kappa[c]),
                )?;
                Ok(ratio.clamp(0.0, 1.0))
            };
            let resid = |x: usize| -> Vec<f64> { (0..m).map(|c| ((q[x][c] - omb * kappa[c]) / beta).max(0.0)).collect() };
            let (ra, rb) = (resid(a), resid(b));
            let mut joint = vec![0.0; m * m];
            let mut none = 0.0;
            for (w, c1, c2) in shared_cells(&q[a], &q[b]) {
                let (p1, p2) = (acc(a, c1)?, acc(b, c2)?);
                let both = p1.min(p2);
                joint[c1 * m + c2] += w * both;
                // first copy accepted alone; the second continues with its residual law
                if p1 > p2 {
                    for d in 0..m {
                        joint[c1 * m + d] += w * (p1 - p2) * rb[d];
                    }
                } else if p2 > p1 {
                    for d in 0..m {
                        joint[d * m + c2] += w * (p2 - p1) * ra[d];
                    }
                }
                none += w * (1.0 - p1.max(p2));
            }
            let norm = 1.0 - none;
            ensure(norm > 0.0, "minor", "residual kernel has no mass")?;
            for (z, v) in joint.iter().enumerate() {
                row[z] += beta * v / norm;
            }
        }
    }
    Ok(out)
}

/// `P(Z^1_n != Z^2_n)` for `n = 0..=horizon` along a fixed environment path `ys`
/// (`ys[t]` drives the step from `t` to `t + 1`).
pub fn noncoupling_quenched(
    kernel: &FiniteKernel,
    minor: &MinorizationCertificate,
    r: f64,
    mode: RegenerationMode,
    ys: &[usize],
    x1: usize,
    x2: usize,
) -> Result<Vec<f64>> {
    let m = kernel.states();
    let max_y = ys.iter().copied().max().unwrap_or(0);
    ensure(
        kernel.env_states() == 1 || max_y < kernel.env_states(),
        "ys",
        "environment index out of range",
    )?;
    let mats: Vec<Matrix> = (0..=max_y)
        .map(|y| pair_transition(kernel, minor, r, mode, y))
        .collect::<Result<_>>()?;
    let mut w = vec![0.0; m * m];
    w[x1 * m + x2] = 1.0;
    let off = |w: &[f64]| -> f64 { (0..m * m).filter(|z| z / m != z % m).map(|z| w[z]).sum() };
    let mut out = vec![off(&w)];
    for y in ys {
        w = linalg::vec_mat(&w, &mats[*y]);
        out.push(off(&w));
    }
    Ok(out)
}

/// Exact annealed non-coupling probabilities for a start law on `(Y_j, X^1_j, X^2_j)`:
/// `w0[y][a * m + b]`. Returns `P(Z^1_{j+n} != Z^2_{j+n})` for `n = 0..=horizon`.
pub fn noncoupling_annealed(
    kernel: &FiniteKernel,
    minor: &MinorizationCertificate,
    r: f64,
    mode: RegenerationMode,
    env: &Matrix,
    w0: &[Vec<f64>],
    horizon: usize,
) -> Result<Vec<f64>> {
    let m = kernel.states();
    let k = env.len();
    ensure(w0.len() == k, "w0", "one block per environment state")?;
    let mats: Vec<Matrix> = (0..k)
        .map(|y| pair_transition(kernel, minor, r, mode, y))
        .collect::<Result<_>>()?;
    let mut w = w0.to_vec();
    let off = |w: &[Vec<f64>]| -> f64 {
        w.iter()
            .map(|blk| (0..m * m).filter(|z| z / m != z % m).map(|z| blk[z]).sum::<f64>())
            .sum()
    };
    let mut out = vec![off(&w)];
    for _ in 0..horizon {
        let mut next = vec![vec![0.0; m * m]; k];
        for y in 0..k {
            let moved = linalg::vec_mat(&w[y], &mats[y]);
            for (y2, nb) in next.iter_mut().enumerate() {
                let py = env[y][y2];
                if py == 0.0 {
                    continue;
                }
                for (z, v) in moved.iter().enumerate() {
                    nb[z] += py * v;
                }
            }
        }
        w = next;
        out.push(off(&w));
    }
    Ok(out)
}

/// Start law for the `b(n)` oracle: `X^1_j` from `x_start` at time 0 run `j` steps,
/// `X^2_j = x0`, `Y_0 ~ env_initial`.
pub fn b_start_law(
    kernel: &FiniteKernel,
    env: &Matrix,
    env_initial: &[f64],
    x_start: usize,
    x0: usize,
    j: usize,
) -> Result<Vec<Vec<f64>>> {
    let m = kernel.states();
    let k = env.len();
    let p = joint_transition(kernel, env)?;
    let mut w = vec![0.0; k * m];
    for (y, a) in env_initial.iter().enumerate() {
        w[y * m + x_start] = *a;
    }
    for _ in 0..j {
        w = linalg::vec_mat(&w, &p);
    }
    let mut out = vec![vec![0.0; m * m]; k];
    for y in 0..k {
        for a in 0..m {
            out[y][a * m + x0] = w[y * m + a];
        }
    }
    Ok(out)
}

/// Start law for the forward-coupling oracle: `Y_0 ~ pi_Y`, `X^1_0 = x0`, and the partner
/// drawn from the stationary joint law `pi(y, b)` of the (y, x) chain.
pub fn forward_start_law(kernel: &FiniteKernel, env: &Matrix, x0: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let m = kernel.states();
    let k = env.len();
    let pi = linalg::stationary_distribution(&joint_transition(kernel, env)?);
    let mut out = vec![vec![0.0; m * m]; k];
    let mut pi_x = vec![0.0; m];
    for y in 0..k {
        for b in 0..m {
            out[y][x0 * m + b] = pi[y * m + b];
            pi_x[b] += pi[y * m + b];
        }
    }
    Ok((out, pi_x))
}

/// `sum_x |L(X_n)(x) - pi_X(x)|` for `n = 0..=horizon`, with `Y_0 ~ pi_Y`, `X_0 = x0`.
pub fn tv_to_stationary(kernel: &FiniteKernel, env: &Matrix, x0: usize, horizon: usize) -> Result<Vec<f64>> {
    let (_, pi_x) = forward_start_law(kernel, env, x0)?;
    let pi_y = linalg::stationary_distribution(env);
    let laws = state_marginals(kernel, env, &pi_y, x0, horizon)?;
    Ok(laws
        .iter()
        .map(|l| l.iter().zip(&pi_x).map(|(a, b)| (a - b).abs()).sum())
        .collect())
}

/// Exact `b(n) = max_{j in j_grid} P(Z^{X_j}_{j+n} != Z^{x0}_{j+n})`, `n = 0..=horizon`, with
/// `X_j` obtained by running the chain from `x_start` at time 0; returns the values and
/// the maximizing `j` per `n`.
#[allow(clippy::too_many_arguments)]
pub fn exact_b(
    kernel: &FiniteKernel,
    minor: &MinorizationCertificate,
    r: f64,
    mode: RegenerationMode,
    env: &Matrix,
    env_initial: &[f64],
    x_start: usize,
    x0: usize,
    j_grid: &[usize],
    horizon: usize,
) -> Result<(Vec<f64>, Vec<usize>)> {
    ensure(!j_grid.is_empty(), "j_grid", "must not be empty")?;
    let mut best = vec![f64::NEG_INFINITY; horizon + 1];
    let mut arg = vec![j_grid[0]; horizon + 1];
    for &j in j_grid {
        let w0 = b_start_law(kernel, env, env_initial, x_start, x0, j)?;
        let curve = noncoupling_annealed(kernel, minor, r, mode, env, &w0, horizon)?;
        for (n, v) in curve.into_iter().enumerate() {
            if v > best[n] {
                best[n] = v;
                arg[n] = j;
            }
        }
    }
    Ok((best, arg))
}
