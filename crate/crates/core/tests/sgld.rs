use std::sync::Arc;

use mcre_core::certify::EnvFn;
use mcre_core::dynamics::{sample_environment, Trajectory};
use mcre_core::sgld::*;
use mcre_core::stats::autocorrelation;
use num_rational::Ratio;
use proptest::prelude::*;

fn plain_config(h: Arc<UpdateFn>, label: &str, lambda: f64, beta_temp: f64, d: usize) -> SgldConfig {
    SgldConfig {
        lambda,
        beta_temp,
        d,
        env_dim: 1,
        h,
        h_label: label.into(),
        l: 1.0,
        delta: EnvFn::constant(0.0),
        b_diss: EnvFn::constant(0.0),
        v: EnvFn::constant(0.0),
        s: 0.5,
        delta_tilde: None,
        allow_inadmissible: false,
    }
}

fn zero_update() -> Arc<UpdateFn> {
    Arc::new(|_x: &[f64], _y: &[f64], out: &mut [f64]| out.fill(0.0))
}

fn flat_env(horizon: usize) -> Trajectory {
    Trajectory::from_values(0, 1, &vec![vec![0.0]; horizon + 1])
}

#[test]
fn cold_zero_drift_stays_put() {
    let config = plain_config(zero_update(), "zero", 0.01, 1e6, 2);
    let theta0 = [1.0, -2.0];
    let run = sgld_run(&config, &flat_env(100), &theta0, 100, 3).unwrap();
    assert_eq!(run.path.len(), 101);
    let dev = (0..=100)
        .flat_map(|t| run.path.get(t).iter().zip(&theta0).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    assert!(dev < 0.01, "{dev}");
}

#[test]
fn noiseless_linear_update_decays_geometrically() {
    let h: Arc<UpdateFn> = Arc::new(|x: &[f64], _y: &[f64], out: &mut [f64]| out.copy_from_slice(x));
    let config = plain_config(h, "identity", 0.1, f64::INFINITY, 1);
    let run = sgld_run(&config, &flat_env(30), &[5.0], 30, 0).unwrap();
    for n in 0..=30 {
        let expect = 0.9f64.powi(n as i32) * 5.0;
        assert!((run.path.get(n)[0] - expect).abs() < 1e-12 * 5.0, "n={n}");
    }
}

#[test]
fn runs_are_reproducible() {
    let model = LogisticModel {
        c: 2.0,
        stream: LogisticStream::two_regime(2, 1.0, 0.1, 0.5, vec![1.0, 1.0]),
    };
    let config = model.sgld_config(1.0 / 36.0, 1.0, 0.5).unwrap();
    let env = model.stream.env_spec().unwrap();
    let y = sample_environment(&env, 0, 300, 4).unwrap();
    let a = sgld_run(&config, &y, &[0.5, 0.5], 300, 8).unwrap();
    let b = sgld_run(&config, &y, &[0.5, 0.5], 300, 8).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.admissible, Some(true));
    assert!(!a.flagged);
}

#[test]
fn inadmissible_step_is_refused_unless_overridden() {
    let model = LogisticModel {
        c: 2.0,
        stream: LogisticStream::iid(1, 1.0, vec![1.0]),
    };
    let mut config = model.sgld_config(0.1, 1.0, 0.5).unwrap();
    let env = model.stream.env_spec().unwrap();
    let y = sample_environment(&env, 0, 20, 0).unwrap();
    assert!(sgld_run(&config, &y, &[0.0], 20, 0).is_err());
    config.allow_inadmissible = true;
    let run = sgld_run(&config, &y, &[0.0], 20, 0).unwrap();
    assert!(run.flagged);
    assert_eq!(run.admissible, Some(false));
}

#[test]
fn logistic_path_stays_in_the_drift_band() {
    let model = LogisticModel {
        c: 2.0,
        stream: LogisticStream::iid(2, 1.0, vec![1.0, -1.0]),
    };
    let k = model.constants().unwrap();
    let config = model.sgld_config(k.lambda_star, 1.0, 0.5).unwrap();
    let (drift, _) = config.certificates().unwrap();
    let horizon = 10_000usize;
    let env = model.stream.env_spec().unwrap();
    let y = sample_environment(&env, 0, horizon as i64, 12).unwrap();
    let run = sgld_run(&config, &y, &[0.0, 0.0], horizon, 12).unwrap();
    let k_mean = (0..horizon as i64).map(|t| drift.k.eval(y.get(t))).sum::<f64>() / horizon as f64;
    let band = k_mean / (1.0 - k.gamma_star);
    let max = (0..=horizon as i64)
        .map(|t| run.path.get(t).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    assert!(max < 10.0 * band, "{max} vs band {band}");
}

#[test]
fn logistic_update_at_the_origin() {
    let z = [0.4, -1.2, 3.0];
    let up = logistic_update(&[0.0; 3], 1.0, &z, 2.0);
    let down = logistic_update(&[0.0; 3], 0.0, &z, 2.0);
    for i in 0..3 {
        assert!((up[i] + z[i] / 2.0).abs() < 1e-15);
        assert!((down[i] - z[i] / 2.0).abs() < 1e-15);
    }
}

#[test]
fn sigmoid_is_stable_at_the_extremes() {
    assert_eq!(sigmoid(0.0), 0.5);
    assert!(sigmoid(700.0) <= 1.0 && sigmoid(700.0) > 1.0 - 1e-15);
    assert!(sigmoid(-700.0) > 0.0 && sigmoid(-700.0) < 1e-300);
    assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
}

#[test]
fn constants_at_two_match_the_published_values() {
    let k = logistic_constants_exact(Ratio::from_integer(2)).unwrap();
    assert_eq!(k.lambda_star, Ratio::new(1, 36));
    assert_eq!(k.gamma_star, Ratio::new(11, 12));
    assert_eq!(k.lambda_max, Ratio::new(1, 18));
    let f = logistic_constants(2.0).unwrap();
    assert!((f.lambda_star - 1.0 / 36.0).abs() < 1e-15);
    assert!((f.gamma_star - 11.0 / 12.0).abs() < 1e-15);
}

#[test]
fn constants_at_one_match_a_grid_argmin() {
    let k = logistic_constants_exact(Ratio::from_integer(1)).unwrap();
    assert_eq!(k.lambda_star, Ratio::new(1, 48));
    assert_eq!(k.gamma_star, Ratio::new(47, 48));
    let f = logistic_constants(1.0).unwrap();
    let (arg, min) = grid_argmin(f.l, f.delta, f.lambda_max, 100_000);
    assert!((arg - 1.0 / 48.0).abs() < 1e-6, "{arg}");
    assert!((min - 47.0 / 48.0).abs() < 1e-6, "{min}");
}

#[test]
fn constants_reject_the_boundary() {
    assert!(logistic_constants(0.5).is_err());
    assert!(logistic_constants_exact(Ratio::new(1, 2)).is_err());
    assert!(logistic_constants(f64::NAN).is_err());
}

#[test]
fn admissibility_is_strict_and_needs_positive_steps() {
    let (l, dt) = (6.0, 3.0);
    let edge = 2.0 * dt / (3.0 * l * l);
    assert!(!step_admissibility(edge, l, dt));
    assert!(step_admissibility(1.0 / 36.0, l, dt));
    assert!((edge - 1.0 / 18.0).abs() < 1e-15);
    assert!(!step_admissibility(0.0, l, dt));
}

#[test]
fn delta_tilde_of_a_constant_is_the_constant() {
    let env = LogisticStream::iid(1, 1.0, vec![1.0]).env_spec().unwrap();
    let dt = estimate_delta_tilde(&EnvFn::constant(3.0), &env, 10, 5, 0).unwrap();
    assert!((dt - 3.0).abs() < 1e-12);
}

#[test]
fn dissipativity_checks() {
    let ys: Vec<Vec<f64>> = vec![vec![1.0, 0.3, -0.2], vec![0.0, 2.0, 1.0], vec![1.0, 0.0, 0.0]];
    let model = LogisticModel {
        c: 2.0,
        stream: LogisticStream::iid(2, 1.0, vec![1.0, 1.0]),
    };
    let cfg = model.sgld_config(0.01, 1.0, 0.5).unwrap();
    let rep = dissipativity_consistency(cfg.l, &cfg.delta, &cfg.b_diss, &cfg.v, &ys);
    assert!(rep.consistent && rep.delta_below_l && rep.offset_nonnegative);

    let rep = dissipativity_consistency(1.0, &EnvFn::constant(2.0), &EnvFn::constant(1.0), &EnvFn::constant(0.0), &ys);
    assert!(!rep.consistent && !rep.delta_below_l);
    assert!((rep.max_delta_excess - 1.0).abs() < 1e-15);

    let norm = EnvFn::new("||y||", |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>().sqrt());
    let rep = dissipativity_consistency(1.0, &EnvFn::constant(0.0), &EnvFn::constant(0.0), &norm, &ys);
    assert_eq!(rep.discriminant_flags, vec![0, 1, 2]);
}

#[test]
fn iid_features_respect_the_moment_bound() {
    let model = LogisticModel {
        c: 2.0,
        stream: LogisticStream::iid(2, 1.0, vec![1.0, -0.5]),
    };
    let exp = LogisticExperiment {
        lambda: 1.0 / 36.0,
        beta_temp: 1.0,
        theta0: vec![1.0, 1.0],
        horizon: 500,
        reps: 2000,
        seed: 5,
        n_grid: vec![0, 5, 10],
        j_grid: vec![0],
        r: None,
        dl_len: 20,
        moment_horizon: 100,
    };
    let bundle = run_logistic_experiment(&model, &exp).unwrap();
    assert!(bundle.degraded.is_none(), "{:?}", bundle.degraded);
    assert!(bundle.admissible && bundle.dissipativity.consistent);
    let moment = bundle.moment.as_ref().unwrap();
    assert_eq!(moment.violations, 0);
    assert_eq!(moment.rows.len(), 101);
}

#[test]
fn moment_curve_stabilizes() {
    let model = LogisticModel {
        c: 2.0,
        stream: LogisticStream::two_regime(2, 1.0, 0.1, 0.5, vec![1.0, 1.0]),
    };
    let exp = LogisticExperiment {
        lambda: 1.0 / 48.0,
        beta_temp: 1.0,
        theta0: vec![0.0, 0.0],
        horizon: 400,
        reps: 2000,
        seed: 6,
        n_grid: vec![0, 5],
        j_grid: vec![0],
        r: None,
        dl_len: 20,
        moment_horizon: 200,
    };
    let bundle = run_logistic_experiment(&model, &exp).unwrap();
    let rows = &bundle.moment.as_ref().expect("moment curve").rows;
    let h = rows.len() - 1;
    let running = |hi: usize| rows[..=hi].iter().map(|r| r.estimate).fold(0.0, f64::max);
    let (mid, last) = (running(h / 2), running(h));
    assert!(last <= 1.1 * mid, "{last} vs {mid}");
}

#[test]
fn markov_modulated_features_give_a_decaying_curve() {
    let model = LogisticModel {
        c: 2.0,
        stream: LogisticStream::two_regime(1, 1.0, 0.1, 0.5, vec![1.0]),
    };
    let exp = LogisticExperiment {
        lambda: 1.0 / 36.0,
        beta_temp: 0.001,
        theta0: vec![0.0],
        horizon: 2000,
        reps: 10_000,
        seed: 7,
        n_grid: (0..=40).collect(),
        j_grid: vec![0, 10, 20],
        r: None,
        dl_len: 20,
        moment_horizon: 100,
    };
    let bundle = run_logistic_experiment(&model, &exp).unwrap();
    let fit = bundle.b_fit.expect("positive estimates");
    assert!(fit.slope < 0.0, "{}", fit.slope);
}

#[test]
fn zero_features_give_an_ar1_path() {
    let model = LogisticModel {
        c: 2.0,
        stream: LogisticStream::iid(1, 0.0, vec![1.0]),
    };
    let lambda = 1.0 / 36.0;
    let config = model.sgld_config(lambda, 1.0, 0.5).unwrap();
    let horizon = 100_000usize;
    let y = sample_environment(&model.stream.env_spec().unwrap(), 0, horizon as i64, 9).unwrap();
    let run = sgld_run(&config, &y, &[0.0], horizon, 9).unwrap();
    let r = autocorrelation(&run.path.first_coordinate()[1000..], 1);
    let expect = 1.0 - 2.0 * model.c * lambda;
    assert!((r - expect).abs() < 0.03, "{r} vs {expect}");
}

#[test]
fn zero_drift_increments_have_the_langevin_covariance() {
    let (lambda, beta) = (0.05, 2.0);
    let config = plain_config(zero_update(), "zero", lambda, beta, 2);
    let n = 100_000usize;
    let run = sgld_run(&config, &flat_env(n), &[0.0, 0.0], n, 13).unwrap();
    let inc: Vec<[f64; 2]> = (0..n as i64)
        .map(|t| {
            let (a, b) = (run.path.get(t), run.path.get(t + 1));
            [b[0] - a[0], b[1] - a[1]]
        })
        .collect();
    let s2 = 2.0 * lambda / beta;
    let nf = n as f64;
    let cov = |i: usize, j: usize| inc.iter().map(|d| d[i] * d[j]).sum::<f64>() / nf;
    // var of a squared normal is 2 s^4, of a product of independent normals s^4
    let var_se = s2 * (2.0 / nf).sqrt();
    let cross_se = s2 / nf.sqrt();
    assert!((cov(0, 0) - s2).abs() < 3.0 * var_se, "{}", cov(0, 0));
    assert!((cov(1, 1) - s2).abs() < 3.0 * var_se, "{}", cov(1, 1));
    assert!(cov(0, 1).abs() < 3.0 * cross_se, "{}", cov(0, 1));
}

#[test]
fn rate_curves_table_has_one_row_per_c() {
    let t = rate_curves(&[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!(rate_curves(&[0.4]).is_err());
}

#[test]
fn decimal_literals_parse_exactly() {
    assert_eq!(rational_from_decimal("2"), Some(Ratio::from_integer(2)));
    assert_eq!(rational_from_decimal("-0.75"), Some(Ratio::new(-3, 4)));
    assert_eq!(rational_from_decimal("1.5e-1"), Some(Ratio::new(3, 20)));
    assert_eq!(rational_from_decimal(".5"), Some(Ratio::new(1, 2)));
    for bad in ["", ".", "1.2.3", "abc", "1e", "--1"] {
        assert_eq!(rational_from_decimal(bad), None, "{bad}");
    }
}

fn grid_argmin(l: f64, delta: f64, lambda_max: f64, n: usize) -> (f64, f64) {
    (1..n)
        .map(|i| {
            let lam = lambda_max * i as f64 / n as f64;
            (lam, 3.0 * l * l * lam * lam - 2.0 * delta * lam + 1.0)
        })
        .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn closed_form_step_matches_the_grid_argmin(c in 0.51f64..10.0) {
        let k = logistic_constants(c).unwrap();
        let n = 100_000;
        let (arg, _) = grid_argmin(k.l, k.delta, k.lambda_max, n);
        prop_assert!((arg - k.lambda_star).abs() <= k.lambda_max / n as f64);
    }

    #[test]
    fn optimal_factor_identity(c in 0.51f64..10.0) {
        let k = logistic_constants(c).unwrap();
        let g = gamma_of_lambda(k.lambda_star, k.l, k.delta);
        prop_assert!((g - k.gamma_star).abs() <= 1e-12);
        // completing the square gives 1 - Delta^2 / (3 L^2)
        let direct = 1.0 - k.delta * k.delta / (3.0 * k.l * k.l);
        prop_assert!((direct - k.gamma_star).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn decimal_roundtrip(m in -1_000_000_000i64..1_000_000_000, k in 0u32..12, e in -5i32..5) {
        let scale = 10i128.pow(k);
        let int = m.unsigned_abs() as i128 / scale;
        let frac = m.unsigned_abs() as i128 % scale;
        let sign = if m < 0 { "-" } else { "" };
        let text = if k == 0 {
            format!("{sign}{int}e{e}")
        } else {
            format!("{sign}{int}.{frac:0width$}e{e}", width = k as usize)
        };
        let base = Ratio::new(m as i128, scale);
        let expect = if e >= 0 {
            base * Ratio::from_integer(10i128.pow(e as u32))
        } else {
            base / Ratio::from_integer(10i128.pow((-e) as u32))
        };
        prop_assert_eq!(rational_from_decimal(&text), Some(expect));
        let approx: f64 = text.parse().unwrap();
        let exact = *expect.numer() as f64 / *expect.denom() as f64;
        prop_assert!((approx - exact).abs() <= 1e-12 * exact.abs().max(1e-300));
    }

    #[test]
    fn loss_gradient_matches_finite_differences(
        theta in proptest::collection::vec(-2.0f64..2.0, 3),
        z in proptest::collection::vec(-2.0f64..2.0, 3),
        q in 0u8..2,
        c in 0.6f64..5.0,
    ) {
        let q = q as f64;
        let g = logistic_update(&theta, q, &z, c);
        let h = 1e-5;
        for i in 0..3 {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (logistic_loss(&up, q, &z, c) - logistic_loss(&dn, q, &z, c)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "coord {}: {} vs {}", i, fd, g[i]);
        }
    }
}
