use serde::Serialize;

use crate::dynamics::{sample_environment_rep, EnvironmentSpec};
use crate::error::{ensure, Error, Result};
use crate::report::{Cell, Table};
use crate::rng::{Role, Stream};

use super::{simulate_location_scale_from, LocationScaleModel};

/// Product smoothing kernel on `R^{d+1}` built from a one-dimensional profile on `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NwKernel {
    Epanechnikov,
    Triangular,
}

impl NwKernel {
    pub fn profile(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            NwKernel::Epanechnikov => 0.75 * (1.0 - a * a),
            NwKernel::Triangular => 1.0 - a,
        }
    }

    pub fn eval(self, u: &[f64]) -> f64 {
        let mut p = 1.0;
        for v in u {
            p *= self.profile(*v);
            if p == 0.0 {
                break;
            }
        }
        p
    }

    /// Midpoint-rule integral of the profile over `[-1, 1]`.
    pub fn profile_integral(self, cells: usize) -> f64 {
        let h = 2.0 / cells as f64;
        (0..cells).map(|i| self.profile(-1.0 + (i as f64 + 0.5) * h) * h).sum()
    }
}

/// `h = c_h (log n / n)^{1/(d+5)}`.
pub fn nw_bandwidth(c_h: f64, n: usize, d: usize) -> f64 {
    let n = n as f64;
    c_h * (n.ln() / n).powf(1.0 / (d as f64 + 5.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NwFit {
    pub h: f64,
    /// `None` where the denominator fell below the guard.
    pub values: Vec<Option<f64>>,
    pub excluded: usize,
    pub guard: f64,
}

/// Ratio estimator `sum X_t K((z - Z_{t-1})/h) / sum K((z - Z_{t-1})/h)` at every grid point.
/// The denominator guard is `1e-8 n h^{dim}`.
pub fn nw_estimate(kernel: NwKernel, h: f64, regressors: &[Vec<f64>], responses: &[f64], grid: &[Vec<f64>]) -> Result<NwFit> {
    ensure(h > 0.0 && h.is_finite(), "h", "must be positive")?;
    ensure(regressors.len() == responses.len(), "responses", "one response per regressor")?;
    ensure(!regressors.is_empty(), "regressors", "must not be empty")?;
    let dim = regressors[0].len();
    ensure(
        regressors.iter().chain(grid).all(|z| z.len() == dim),
        "grid",
        "all points must share the regressor dimension",
    )?;
    let n = regressors.len();
    let guard = 1e-8 * n as f64 * h.powi(dim as i32);
    // sorted by the first coordinate so that each grid point scans a window only
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| regressors[*a][0].total_cmp(&regressors[*b][0]));
    let first: Vec<f64> = order.iter().map(|i| regressors[*i][0]).collect();
    let mut u = vec![0.0; dim];
    let mut values = Vec::with_capacity(grid.len());
    let mut excluded = 0;
    for z in grid {
        let lo = first.partition_point(|v| *v < z[0] - h);
        let hi = first.partition_point(|v| *v <= z[0] + h);
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &order[lo..hi] {
            for (k, uk) in u.iter_mut().enumerate() {
                *uk = (z[k] - regressors[i][k]) / h;
            }
            let w = kernel.eval(&u);
            if w > 0.0 {
                num += w * responses[i];
                den += w;
            }
        }
        if den > guard && den > 0.0 {
            values.push(Some(num / den));
        } else {
            values.push(None);
            excluded += 1;
        }
    }
    Ok(NwFit {
        h,
        values,
        excluded,
        guard,
    })
}

/// Settings of [`nw_fit_and_error`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NwSpec {
    pub kernel: NwKernel,
    pub c_h: f64,
    /// Grid on `[-c, c]^{d+1}`.
    pub grid_radius: f64,
    pub grid_points: usize,
    pub burn_in: usize,
    pub x0: f64,
}

impl Default for NwSpec {
    fn default() -> Self {
        NwSpec {
            kernel: NwKernel::Epanechnikov,
            c_h: 1.0,
            grid_radius: 1.0,
            grid_points: 21,
            burn_in: 200,
            x0: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NwResult {
    pub n: usize,
    pub h: f64,
    /// Points `(x, y_1, ..., y_d)`.
    pub grid: Vec<Vec<f64>>,
    pub truth: Vec<f64>,
    pub estimate: Vec<Option<f64>>,
    pub sup_error: f64,
    pub excluded: usize,
}

impl NwResult {
    /// Columns: x, y1.., truth, estimate, error (empty cells where the guard excluded a point).
    pub fn to_table(&self) -> Table {
        let dim = self.grid.first().map_or(1, |g| g.len());
        let mut cols = vec!["x".to_string()];
        cols.extend((1..dim).map(|i| format!("y{i}")));
        cols.extend(["truth", "estimate", "error"].map(String::from));
        let refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
        let mut t = Table::new(&refs);
        for (k, z) in self.grid.iter().enumerate() {
            let mut row: Vec<Cell> = z.iter().map(|v| Cell::from(*v)).collect();
            row.push(self.truth[k].into());
            match self.estimate[k] {
                Some(e) => {
                    row.push(e.into());
                    row.push((e - self.truth[k]).abs().into());
                }
                None => {
                    row.push(Cell::Empty);
                    row.push(Cell::Empty);
                }
            }
            t.push(row);
        }
        t
    }
}

fn product_grid(dim: usize, radius: f64, points: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if points == 1 {
        vec![0.0]
    } else {
        (0..points)
            .map(|i| -radius + 2.0 * radius * i as f64 / (points - 1) as f64)
            .collect()
    };
    let mut grid = vec![vec![]];
    for _ in 0..dim {
        grid = grid
            .into_iter()
            .flat_map(|g: Vec<f64>| {
                axis.iter().map(move |a| {
                    let mut h = g.clone();
                    h.push(*a);
                    h
                })
            })
            .collect();
    }
    grid
}

/// Simulate `n` transitions of a location-scale model, fit the estimator at the rule
/// bandwidth and measure `sup |r_hat - r|` over the grid.
pub fn nw_fit_and_error(
    spec: &NwSpec,
    model: &LocationScaleModel,
    env: &EnvironmentSpec,
    n: usize,
    seed: u64,
    rep: u64,
) -> Result<NwResult> {
    ensure(n >= 100, "n", "must be >= 100")?;
    ensure(spec.grid_points >= 1, "grid_points", "must be >= 1")?;
    ensure(spec.grid_radius > 0.0, "grid_radius", "must be positive")?;
    ensure(spec.c_h > 0.0, "c_h", "must be positive")?;
    let d = model.env_dim;
    let burn = spec.burn_in as i64;
    let y = sample_environment_rep(env, -burn, n as i64 - 1, seed, rep)?;
    let noise = Stream::new(seed, rep, Role::Noise);
    let path = simulate_location_scale_from(model, &y, spec.x0, -burn, spec.burn_in + n, &noise)?;
    let mut regressors = Vec::with_capacity(n);
    let mut responses = Vec::with_capacity(n);
    for t in 1..=n as i64 {
        let mut z = vec![path.get(t - 1)[0]];
        z.extend_from_slice(y.get(t - 1));
        regressors.push(z);
        responses.push(path.get(t)[0]);
    }
    let h = nw_bandwidth(spec.c_h, n, d);
    let grid = product_grid(d + 1, spec.grid_radius, spec.grid_points);
    let fit = nw_estimate(spec.kernel, h, &regressors, &responses, &grid)?;
    if fit.excluded * 10 > grid.len() {
        return Err(Error::Numerical(format!(
            "{} of {} grid points fell below the denominator guard (bandwidth {h} too small)",
            fit.excluded,
            grid.len()
        )));
    }
    let truth: Vec<f64> = grid.iter().map(|z| (model.r)(&z[1..], z[0])).collect();
    let sup_error = fit
        .values
        .iter()
        .zip(&truth)
        .filter_map(|(e, t)| e.map(|e| (e - t).abs()))
        .fold(0.0, f64::max);
    Ok(NwResult {
        n,
        h,
        grid,
        truth,
        estimate: fit.values,
        sup_error,
        excluded: fit.excluded,
    })
}
