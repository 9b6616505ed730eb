//! One function per experiment. Each reads its sections from the config, runs the core
//! routines and writes tables through [`Output`].

use mcre_core::certify::{
    check_a2, estimate_dl, moment_bound_check, verify_drift_mc, verify_minorization_finite, verify_minorization_mc,
    BoxEvent, StartLaw,
};
use mcre_core::couple::{estimate_b, CouplingKernel, InitLaw, RegenerationMode};
use mcre_core::dynamics::{sample_environment_rep, simulate_from, EnvKind, EnvironmentSpec};
use mcre_core::econ::{
    clt_coverage, mle_fit, nw_fit_and_error, simulate_location_scale, simulate_poisson, CoverageCenter, NwKernel,
    NwSpec,
};
use mcre_core::linalg::Matrix;
use mcre_core::mixing::{
    exact_alpha_curve, exact_alpha_finite, main_bound, transfer_bound, AlphaMode, BoundParams, BoundVariant,
    FiniteChain, TailSequence,
};
use mcre_core::oracle;
use mcre_core::report::{Cell, Table};
use mcre_core::rng::{Role, Stream};
use mcre_core::sgld::{
    logistic_constants, logistic_constants_exact, rational_from_decimal, run_logistic_experiment, LogisticExperiment,
    LogisticModel,
};
use mcre_core::stats::{autocorrelation, binomial_se};
use serde_json::json;

use crate::build;
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::{to_value, Output};

struct Run {
    seed: u64,
    reps: usize,
    horizon: usize,
}

fn run_params(cfg: &Config, reps: usize, horizon: usize) -> CliResult<Run> {
    let r = Run {
        seed: cfg.u64_or("run.seed", 1)?,
        reps: cfg.usize_or("run.reps", reps)?,
        horizon: cfg.usize_or("run.horizon", horizon)?,
    };
    if r.reps == 0 {
        return Err(CliError::invalid("run.reps", "must be >= 1"));
    }
    Ok(r)
}

/// Transition matrix and initial law of an index-valued finite Markov environment.
fn finite_env(env: &EnvironmentSpec) -> Option<(Matrix, Vec<f64>)> {
    match &env.kind {
        EnvKind::FiniteMarkov {
            transition,
            levels: None,
            emission_sd,
            ..
        } if *emission_sd == 0.0 => Some((transition.clone(), env.finite_initial_law()?)),
        _ => None,
    }
}

fn env_section(cfg: &Config) -> CliResult<EnvironmentSpec> {
    if cfg.has_section("env") {
        build::environment(cfg, "env")
    } else {
        Ok(EnvironmentSpec::finite_markov(vec![vec![0.9, 0.1], vec![0.2, 0.8]]))
    }
}

fn state_list(cfg: &Config, key: &str, d: usize) -> CliResult<Vec<f64>> {
    let x = cfg.f64_list_or(key, &vec![0.0; d])?;
    if x.len() != d {
        return Err(CliError::invalid(key, format!("must have length {d}")));
    }
    Ok(x)
}

pub fn simulate(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let env = env_section(cfg)?;
    let ks = build::kernel(cfg, "kernel")?;
    let run = run_params(cfg, 1, 100)?;
    let k = &ks.kernel;
    let p = k.step_count();
    let x0 = state_list(cfg, "run.x0", k.state_dim())?;
    let mut cols = vec!["rep".to_string(), "t".to_string()];
    cols.extend((1..=k.env_dim()).map(|i| format!("y{i}")));
    cols.extend((1..=k.state_dim()).map(|i| format!("x{i}")));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Table::new(&col_refs);
    let paths = mcre_core::par::map(run.reps, |rep| {
        let y = sample_environment_rep(&env, 0, ((run.horizon + 1) * p) as i64 - 1, run.seed, rep as u64)?;
        let y = if p > 1 { y.blocks(p) } else { y };
        let path = simulate_from(k, &y, &x0, 0, run.horizon, &Stream::new(run.seed, rep as u64, Role::Noise))?;
        Ok((y, path))
    })?;
    for (rep, (y, path)) in paths.iter().enumerate() {
        for t in 0..=run.horizon as i64 {
            let mut row = vec![Cell::from(rep), Cell::from(t)];
            row.extend(y.get(t).iter().map(|v| Cell::from(*v)));
            row.extend(path.get(t).iter().map(|v| Cell::from(*v)));
            table.push(row);
        }
    }
    out.table("trajectory.csv", &table)?;
    if let (Some(fk), Some((pm, init))) = (&ks.finite, finite_env(&env)) {
        let m = fk.states();
        let exact = oracle::state_marginals(fk, &pm, &init, x0[0] as usize, run.horizon)?;
        let mut t = Table::new(&["t", "state", "empirical", "stderr", "exact"]);
        for (n, law) in exact.iter().enumerate() {
            for (s, pe) in law.iter().enumerate().take(m) {
                let f = paths.iter().filter(|(_, p)| p.get(n as i64)[0] as usize == s).count() as f64 / run.reps as f64;
                t.push(vec![Cell::from(n), Cell::from(s), f.into(), binomial_se(f, run.reps).into(), (*pe).into()]);
            }
        }
        out.table("marginals.csv", &t)?;
    }
    out.summary("kernel", k.describe());
    Ok(())
}

pub fn certify(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let env = env_section(cfg)?;
    let ks = build::kernel(cfg, "kernel")?;
    let run = run_params(cfg, 1000, 50)?;
    let k = &ks.kernel;
    let d = k.state_dim();
    let p = k.step_count();
    let z = cfg.f64_or("certify.z", 3.0)?;
    if let (Some(fk), Some(minor)) = (&ks.finite, &ks.minor) {
        let rep = verify_minorization_finite(fk, minor, 0.0)?;
        out.table("minorization.csv", &rep.to_table(fk.states()))?;
        out.summary("minorization_violations", rep.violations);
    }
    let Some(drift) = &ks.drift else {
        if ks.finite.is_none() {
            return Err(CliError::invalid("kernel.kind", "this family has no certificate to check"));
        }
        return Ok(());
    };
    let n_pairs = cfg.usize_or("certify.n_pairs", 200)?;
    let n_noise = cfg.usize_or("certify.n_noise", 2000)?;
    let x_range = cfg.f64_or("certify.x_range", 10.0)?;
    let ys = sample_environment_rep(&env, 0, ((n_pairs.max(1) + 1) * p) as i64 - 1, run.seed, u64::MAX)?;
    let ys = if p > 1 { ys.blocks(p) } else { ys };
    let sampler = move |i: usize, rng: &mut mcre_core::rng::StepRng| {
        let x: Vec<f64> = (0..d).map(|_| x_range * (2.0 * rng.uniform() - 1.0)).collect();
        (x, ys.get(i as i64).to_vec())
    };
    let rep = verify_drift_mc(k, drift, &sampler, n_pairs, n_noise, run.seed, z)?;
    out.table("drift_check.csv", &rep.to_table())?;
    out.summary("drift_violation_fraction", rep.violation_fraction);

    if let (Some(minor), None) = (&ks.minor, &ks.finite) {
        let r = cfg.f64_or("certify.r", 4.0)?;
        let mut events = Vec::new();
        for i in 0..d {
            for (a, b) in [(-1.0, 0.0), (0.0, 1.0)] {
                let mut lo = vec![f64::NEG_INFINITY; d];
                let mut hi = vec![f64::INFINITY; d];
                lo[i] = a;
                hi[i] = b;
                events.push(BoxEvent { lo, hi });
            }
        }
        let v = minor.v.clone();
        let ys2 = sample_environment_rep(&env, 0, 64 * p as i64, run.seed, u64::MAX - 1)?;
        let small = move |i: usize, rng: &mut mcre_core::rng::StepRng| {
            let mut x: Vec<f64> = (0..d).map(|_| r.max(0.0) * (2.0 * rng.uniform() - 1.0)).collect();
            while v.eval(&x) > r {
                x.iter_mut().for_each(|c| *c *= 0.5);
            }
            (x, ys2.block((i % 64) as i64 * p as i64, p))
        };
        let n_states = cfg.usize_or("certify.n_states", 20)?;
        let rep = verify_minorization_mc(k, minor, r, &events, &small, n_states, n_noise, run.seed, z)?;
        out.table("minorization.csv", &rep.to_table(events.len()))?;
        out.summary("minorization_violations", rep.violations);

        let beta_grid = cfg.f64_list_or("certify.beta_grid", &[0.5, 0.9, 0.99, 0.999])?;
        let a2 = check_a2(minor, &env, r, &beta_grid, run.horizon, run.reps, run.seed)?;
        let mut t = Table::new(&["beta_bar", "raw", "curve", "lower", "upper"]);
        for (i, b) in a2.beta_grid.iter().enumerate() {
            t.push(vec![(*b).into(), a2.raw[i].into(), a2.curve[i].into(), a2.lower[i].into(), a2.upper[i].into()]);
        }
        out.table("a2.csv", &t)?;
        out.summary("a2_holds", a2.holds);
    }

    let dl_len = cfg.usize_or("certify.dl_len", 20)?;
    let dl = estimate_dl(drift, &env, dl_len, &[0], run.reps, run.seed)?;
    out.table("dl.csv", &dl.to_table())?;
    out.summary("r0", dl.r0());
    let x0 = state_list(cfg, "run.x0", d)?;
    let mom = moment_bound_check(k, drift, &env, &StartLaw::Point(x0), run.horizon, run.reps, run.seed, &dl)?;
    out.table("moment.csv", &mom.to_table())?;
    out.summary("moment_violations", mom.violations);
    Ok(())
}

fn regeneration_mode(cfg: &Config) -> CliResult<RegenerationMode> {
    match cfg.str_or("couple.mode", "split") {
        "split" => Ok(RegenerationMode::Split),
        "shared-noise" => Ok(RegenerationMode::SharedNoise),
        other => Err(CliError::invalid("couple.mode", format!("unknown mode `{other}`"))),
    }
}

pub fn couple(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let env = env_section(cfg)?;
    let ks = build::kernel(cfg, "kernel")?;
    let run = run_params(cfg, 10_000, 20)?;
    let minor = ks
        .minor
        .clone()
        .ok_or_else(|| CliError::invalid("kernel.kind", "coupling needs a minorization certificate"))?;
    let d = ks.kernel.state_dim();
    let r = cfg.f64_or("couple.r", 0.0)?;
    let mode = regeneration_mode(cfg)?;
    let n_grid = cfg.usize_list_or("couple.n_grid", &(0..=run.horizon).collect::<Vec<_>>())?;
    let j_grid = cfg.usize_list_or("couple.j_grid", &[0, 5, 10])?;
    let x0 = state_list(cfg, "couple.x0", d)?;
    let x_start = cfg.f64_list_or("couple.x_start", &vec![1.0; d])?;
    let ck = CouplingKernel::new(ks.kernel.clone(), minor.clone(), r, mode)?;
    let curve = estimate_b(&ck, &env, &x0, &InitLaw::Simulated(x_start.clone()), &n_grid, &j_grid, run.reps, run.seed)?;
    out.table("b_curve.csv", &curve.to_table())?;
    if let (Some(fk), Some((pm, init))) = (&ks.finite, finite_env(&env)) {
        let n_max = *n_grid.iter().max().unwrap_or(&0);
        let (b, arg) = oracle::exact_b(&fk.clone(), &minor, r, mode, &pm, &init, x_start[0] as usize, x0[0] as usize, &j_grid, n_max)?;
        let mut t = Table::new(&["n", "estimate", "stderr", "j_argmax"]);
        let mut worst = 0.0_f64;
        for (k, &n) in n_grid.iter().enumerate() {
            t.push(vec![Cell::from(n), b[n].into(), Cell::Empty, Cell::from(arg[n])]);
            let se = curve.stderr[k].max(1.0 / run.reps as f64);
            worst = worst.max((curve.raw[k] - b[n]).abs() / se);
        }
        out.table("exact_b.csv", &t)?;
        out.summary("max_z_vs_exact", worst);
    }
    Ok(())
}

/// `lambda_star.csv` and `gamma_star.csv` over `c_grid`; nothing for an empty grid.
pub fn emit_rate_figures(out: &mut Output, c_grid: &[f64]) -> CliResult<()> {
    if c_grid.is_empty() {
        return Ok(());
    }
    let mut ls = Table::new(&["c", "lambda_star"]);
    let mut gs = Table::new(&["c", "gamma_star"]);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &c in c_grid {
        let k = logistic_constants(c).map_err(|e| CliError::invalid("rates.c_grid", e))?;
        ls.push(vec![c.into(), k.lambda_star.into()]);
        gs.push(vec![c.into(), k.gamma_star.into()]);
        if k.lambda_star > best.0 {
            best = (k.lambda_star, c);
        }
    }
    out.table("lambda_star.csv", &ls)?;
    out.table("gamma_star.csv", &gs)?;
    out.summary("lambda_star_argmax_c", best.1);
    Ok(())
}

fn rate_grid(cfg: &Config) -> CliResult<Vec<f64>> {
    if cfg.get("rates.c_grid").is_some() {
        return cfg.f64_list_or("rates.c_grid", &[]);
    }
    let lo = cfg.f64_or("rates.c_min", 0.51)?;
    let hi = cfg.f64_or("rates.c_max", 10.0)?;
    let step = cfg.f64_or("rates.c_step", 0.01)?;
    if !(step > 0.0) || hi < lo {
        return Err(CliError::invalid("rates.c_step", "need c_step > 0 and c_max >= c_min"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

pub fn mixing_bounds(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let r = match cfg.str_or("bounds.r_form", "geometric") {
        "geometric" => TailSequence::geometric(cfg.f64_or("bounds.r_c", 1.0)?, cfg.f64_or("bounds.r_rho", 0.5)?),
        "table" => TailSequence::new(cfg.f64_list_or("bounds.r_values", &[])?, None),
        other => return Err(CliError::invalid("bounds.r_form", format!("unknown form `{other}`"))),
    };
    let alpha_y = match cfg.get("bounds.rate") {
        Some(form) => build::rate(cfg, "bounds", form)?,
        None => mcre_core::dynamics::MixingRateDescriptor::ZeroAfterLag { c: 0.0, m: 0 },
    };
    let variant = match cfg.str_or("bounds.variant", "standard") {
        "standard" => BoundVariant::Standard,
        "extended" => BoundVariant::Extended,
        other => return Err(CliError::invalid("bounds.variant", format!("unknown variant `{other}`"))),
    };
    let params = BoundParams {
        r,
        kappa: cfg.f64_or("bounds.kappa", 0.5)?,
        c: cfg.f64_or("bounds.c", 1.0)?,
        alpha_y,
        variant,
    };
    let n_grid = cfg.usize_list_or("bounds.n_grid", &(1..=200).collect::<Vec<_>>())?;
    if n_grid.is_empty() {
        return Err(CliError::invalid("bounds.n_grid", "must not be empty"));
    }
    let mut t = Table::new(&["n", "value", "i", "q"]);
    for &n in &n_grid {
        let b = main_bound(&params, n)?;
        t.push(vec![Cell::from(n), b.value.into(), Cell::from(b.i), Cell::from(b.q)]);
    }
    out.table("main_bound.csv", &t)?;
    if cfg.has_section("env") {
        let env = build::environment(cfg, "env")?;
        if let Some((pm, _)) = finite_env(&env) {
            let lags = cfg.usize_list_or("bounds.alpha_lags", &(1..=20).collect::<Vec<_>>())?;
            let curve = exact_alpha_curve(&FiniteChain::stationary(pm)?, &lags, 0)?;
            out.table("alpha_y.csv", &curve.to_table())?;
        }
    }
    emit_rate_figures(out, &rate_grid(cfg)?)
}

pub fn oracle_cmd(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let env = env_section(cfg)?;
    let ks = build::kernel(cfg, "kernel")?;
    let run = run_params(cfg, 1, 20)?;
    let (Some(fk), Some(minor)) = (&ks.finite, &ks.minor) else {
        return Err(CliError::invalid("kernel.kind", "the oracle needs a finite kernel"));
    };
    let (pm, init) = finite_env(&env).ok_or_else(|| CliError::invalid("env.kind", "the oracle needs an index-valued finite-markov environment"))?;
    let x0 = cfg.usize_or("oracle.x0", 0)?;
    let x_start = cfg.usize_or("oracle.x_start", 1)?;
    let window = cfg.usize_or("oracle.window", 5)?;
    let h = run.horizon;

    let laws = oracle::state_marginals(fk, &pm, &init, x_start, h)?;
    let mut t = Table::new(&["n", "state", "probability"]);
    for (n, l) in laws.iter().enumerate() {
        for (s, v) in l.iter().enumerate() {
            t.push(vec![Cell::from(n), Cell::from(s), (*v).into()]);
        }
    }
    out.table("marginals.csv", &t)?;
    let tv = oracle::tv_to_stationary(fk, &pm, x0, h)?;
    let mut t = Table::new(&["n", "tv"]);
    for (n, v) in tv.iter().enumerate() {
        t.push(vec![Cell::from(n), (*v).into()]);
    }
    out.table("tv.csv", &t)?;

    let j_grid: Vec<usize> = (0..=window + h).collect();
    let (b, arg) = oracle::exact_b(fk, minor, 0.0, RegenerationMode::Split, &pm, &init, x_start, x0, &j_grid, h)?;
    let mut t = Table::new(&["n", "estimate", "stderr", "j_argmax"]);
    for n in 0..=h {
        t.push(vec![Cell::from(n), b[n].into(), Cell::Empty, Cell::from(arg[n])]);
    }
    out.table("exact_b.csv", &t)?;

    let m = fk.states();
    let mut joint_init = vec![0.0; pm.len() * m];
    for (y, w) in init.iter().enumerate() {
        joint_init[y * m + x_start] = *w;
    }
    let joint = FiniteChain::new(oracle::joint_transition(fk, &pm)?, joint_init)?;
    let env_chain = FiniteChain::new(pm.clone(), init.clone())?;
    let mut t = Table::new(&["n", "alpha_xy", "alpha_y", "transfer_bound", "m", "dominates"]);
    let mut all = true;
    for n in 1..=h {
        let axy = exact_alpha_finite(&joint, n, window, AlphaMode::Auto)?.value;
        let ay = |k: usize| exact_alpha_finite(&env_chain, k, window, AlphaMode::Auto).map_or(0.25, |r| r.value);
        let tb = transfer_bound(&ay, &b, 1, n)?;
        let ok = tb.value + 1e-12 >= axy;
        all &= ok;
        t.push(vec![Cell::from(n), axy.into(), ay(n).into(), tb.value.into(), Cell::from(tb.m), ok.into()]);
    }
    out.table("transfer.csv", &t)?;
    out.summary("transfer_dominates", all);
    Ok(())
}

pub fn sgld(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let c_text = cfg.str_or("sgld.c", "2").to_string();
    let c: f64 = c_text
        .parse()
        .map_err(|_| CliError::invalid("sgld.c", format!("cannot parse `{c_text}`")))?;
    let d = cfg.usize_or("sgld.dim", 1)?;
    if d == 0 {
        return Err(CliError::invalid("sgld.dim", "must be >= 1"));
    }
    let beta = cfg.f64_or("sgld.beta", 0.001)?;
    let stream = build::logistic_stream(cfg, "stream", d)?;
    let model = LogisticModel { c, stream };
    let k = model.constants()?;
    let lambda_text = cfg.str_or("sgld.lambda", "star");
    let lambda = if lambda_text == "star" {
        if let Some(exact) = rational_from_decimal(&c_text).and_then(|cr| logistic_constants_exact(cr).ok()) {
            out.summary("lambda_exact", exact.lambda_star.to_string());
            out.summary("gamma_star_exact", exact.gamma_star.to_string());
        }
        k.lambda_star
    } else {
        lambda_text
            .parse()
            .map_err(|_| CliError::invalid("sgld.lambda", format!("cannot parse `{lambda_text}`")))?
    };
    let run = run_params(cfg, 1000, 2000)?;
    let n_grid = cfg.usize_list_or("sgld.n_grid", &(0..=40).collect::<Vec<_>>())?;
    let j_grid = cfg.usize_list_or("sgld.j_grid", &[0, 10, 20])?;
    let r = cfg.get("sgld.r").map(|_| cfg.f64_or("sgld.r", 0.0)).transpose()?;
    let exp = LogisticExperiment {
        lambda,
        beta_temp: beta,
        theta0: state_list(cfg, "sgld.theta0", d)?,
        horizon: run.horizon,
        reps: run.reps,
        seed: run.seed,
        n_grid,
        j_grid,
        r,
        dl_len: cfg.usize_or("sgld.dl_len", 20)?,
        moment_horizon: cfg.usize_or("sgld.moment_horizon", 100)?,
    };
    let bundle = run_logistic_experiment(&model, &exp)?;
    out.summary("c", c);
    out.summary("lambda", lambda);
    out.summary("beta", beta);
    out.summary("gamma_star", k.gamma_star);
    out.summary("admissible", bundle.admissible);
    out.table("path.csv", &bundle.path_table())?;
    if let Some(t) = bundle.moment_table() {
        out.table("moment.csv", &t)?;
    }
    if let Some(s) = &bundle.summability {
        out.table("dl.csv", &s.to_table())?;
    }
    if let Some(b) = &bundle.b_curve {
        out.table("b_curve.csv", &b.to_table())?;
    }
    if let Some(f) = &bundle.b_fit {
        out.summary("b_slope", f.slope);
        out.summary("b_slope_p_value", f.p_value);
    }
    if let Some(reason) = &bundle.degraded {
        out.summary("degraded", reason.clone());
    }
    out.json("bundle.json", to_value(&bundle)?)?;
    emit_rate_figures(out, &rate_grid(cfg)?)
}

fn econ_env(cfg: &Config, dim: usize) -> CliResult<EnvironmentSpec> {
    if cfg.has_section("env") {
        build::environment(cfg, "env")
    } else {
        Ok(EnvironmentSpec::gaussian_ar1(0.5, 0.75, dim))
    }
}

pub fn econ_simulate(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let model = build::location_scale(cfg, "model")?;
    let env = econ_env(cfg, model.env_dim)?;
    let run = run_params(cfg, 1, 1000)?;
    let x0 = cfg.f64_or("run.x0", 0.0)?;
    let y = sample_environment_rep(&env, 0, run.horizon as i64, run.seed, 0)?;
    let path = simulate_location_scale(&model, &y, x0, run.horizon, run.seed)?;
    let mut t = Table::new(&["t", "y", "x"]);
    for s in 0..=run.horizon as i64 {
        t.push(vec![Cell::from(s), y.get(s)[0].into(), path.get(s)[0].into()]);
    }
    out.table("path.csv", &t)?;
    out.summary("lag1_autocorrelation", autocorrelation(&path.first_coordinate(), 1));
    Ok(())
}

fn nw_spec(cfg: &Config) -> CliResult<NwSpec> {
    let d = NwSpec::default();
    Ok(NwSpec {
        kernel: match cfg.str_or("nw.kernel", "epanechnikov") {
            "epanechnikov" => NwKernel::Epanechnikov,
            "triangular" => NwKernel::Triangular,
            other => return Err(CliError::invalid("nw.kernel", format!("unknown kernel `{other}`"))),
        },
        c_h: cfg.f64_or("nw.c_h", d.c_h)?,
        grid_radius: cfg.f64_or("nw.grid_radius", d.grid_radius)?,
        grid_points: cfg.usize_or("nw.grid_points", d.grid_points)?,
        burn_in: cfg.usize_or("nw.burn_in", d.burn_in)?,
        x0: cfg.f64_or("nw.x0", d.x0)?,
    })
}

pub fn econ_nw(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let model = build::location_scale(cfg, "model")?;
    let env = econ_env(cfg, model.env_dim)?;
    let run = run_params(cfg, 1, 0)?;
    let spec = nw_spec(cfg)?;
    let n = cfg.usize_or("nw.n", 10_000)?;
    if n < 100 {
        return Err(CliError::invalid("nw.n", "must be >= 100"));
    }
    let fits = mcre_core::par::map(run.reps, |rep| nw_fit_and_error(&spec, &model, &env, n, run.seed, rep as u64))?;
    out.table("nw_grid.csv", &fits[0].to_table())?;
    let mut t = Table::new(&["rep", "n", "h", "sup_error", "excluded"]);
    for (rep, f) in fits.iter().enumerate() {
        t.push(vec![Cell::from(rep), Cell::from(f.n), f.h.into(), f.sup_error.into(), Cell::from(f.excluded)]);
    }
    out.table("nw_errors.csv", &t)?;
    if cfg.bool_or("nw.rate_check", false)? {
        let big = mcre_core::par::map(run.reps, |rep| {
            nw_fit_and_error(&spec, &model, &env, 16 * n, run.seed, (run.reps + rep) as u64)
        })?;
        let mean = |v: &[mcre_core::econ::NwResult]| v.iter().map(|f| f.sup_error).sum::<f64>() / v.len() as f64;
        let dim = model.env_dim as f64;
        let rate = |n: f64| (n.ln() / n).powf(2.0 / (dim + 5.0));
        let (e1, e16) = (mean(&fits), mean(&big));
        let mut t = Table::new(&["n", "mean_sup_error", "theoretical_rate"]);
        t.push(vec![Cell::from(n), e1.into(), rate(n as f64).into()]);
        t.push(vec![Cell::from(16 * n), e16.into(), rate(16.0 * n as f64).into()]);
        out.table("nw_rate.csv", &t)?;
        out.summary("error_ratio", e1 / e16);
        out.summary("theoretical_ratio", rate(n as f64) / rate(16.0 * n as f64));
    }
    Ok(())
}

pub fn econ_mle(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let dgp = build::poisson_dgp(cfg)?;
    let h = build::mle_harness(cfg, dgp.env.dimension)?;
    let run = run_params(cfg, 1, 0)?;
    let n = cfg.usize_or("mle.n", 10_000)?;
    let data = simulate_poisson(&dgp, n, run.seed, 0)?;
    let fit = mle_fit(&h, &data, run.seed)?;
    out.table("mle_fit.csv", &fit.to_table(1.959_963_984_540_054))?;
    out.summary("boundary", fit.boundary);
    out.json("mle.json", to_value(&fit)?)?;
    Ok(())
}

pub fn econ_clt(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let dgp = build::poisson_dgp(cfg)?;
    let h = build::mle_harness(cfg, dgp.env.dimension)?;
    let run = run_params(cfg, 500, 0)?;
    let n = cfg.usize_or("mle.n", 10_000)?;
    let level = cfg.f64_or("clt.level", 0.95)?;
    let center = match cfg.str_or("clt.center", "truth") {
        "truth" => {
            let mut c = vec![dgp.eta0, dgp.eta_x];
            c.extend(dgp.eta_y.iter().take(h.observed_dim));
            CoverageCenter::Known(c)
        }
        "calibrate" => CoverageCenter::Calibrate,
        other => return Err(CliError::invalid("clt.center", format!("unknown centre `{other}`"))),
    };
    let rep = clt_coverage(&h, &dgp, n, run.reps, level, run.seed, &center)?;
    out.table("coverage.csv", &rep.to_table())?;
    out.summary("small_sample", rep.small_sample);
    out.json("coverage.json", json!(to_value(&rep)?))?;
    Ok(())
}
