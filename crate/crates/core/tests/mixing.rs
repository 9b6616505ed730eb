mod common;

use mcre_core::dynamics::{sample_environment, simulate_mcre, MixingRateDescriptor};
use mcre_core::linalg::{mat_pow, stationary_distribution};
use mcre_core::mixing::*;
use mcre_core::oracle;
use mcre_core::rng::{Role, Stream};
use mcre_core::stats::{binomial_se, fit_line};
use proptest::prelude::*;

fn two_state(a: f64, b: f64) -> Vec<Vec<f64>> {
    vec![vec![1.0 - a, a], vec![b, 1.0 - b]]
}

/// Subset enumeration over a stationary chain, written independently of the library.
fn brute_alpha(p: &[Vec<f64>], n: usize) -> f64 {
    let m = p.len();
    let pi = stationary_distribution(&p.to_vec());
    let pn = mat_pow(&p.to_vec(), n);
    let mut best: f64 = 0.0;
    for s in 0..(1u32 << m) {
        for t in 0..(1u32 << m) {
            let inside = |set: u32, i: usize| set & (1 << i) != 0;
            let ps: f64 = (0..m).filter(|a| inside(s, *a)).map(|a| pi[a]).sum();
            let pt: f64 = (0..m).filter(|b| inside(t, *b)).map(|b| pi[b]).sum();
            let joint: f64 = (0..m)
                .filter(|a| inside(s, *a))
                .map(|a| (0..m).filter(|b| inside(t, *b)).map(|b| pi[a] * pn[a][b]).sum::<f64>())
                .sum();
            best = best.max((joint - ps * pt).abs());
        }
    }
    best
}

#[test]
fn exact_alpha_trivial_chains() {
    let rank_one = FiniteChain::stationary(vec![vec![0.2, 0.3, 0.5]; 3]).unwrap();
    for n in 1..5 {
        assert!(exact_alpha_finite(&rank_one, n, 3, AlphaMode::Auto).unwrap().value < 1e-15);
    }
    let frozen = FiniteChain::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5]).unwrap();
    for n in [1, 5, 50] {
        assert!((exact_alpha_finite(&frozen, n, 0, AlphaMode::Auto).unwrap().value - 0.25).abs() < 1e-15);
    }
    assert!(FiniteChain::stationary(vec![vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
}

#[test]
fn two_state_alpha_phi_psi_closed_forms() {
    let (a, b) = (0.1, 0.3);
    let p = two_state(a, b);
    let pi0 = b / (a + b);
    let pi1 = a / (a + b);
    let lam: f64 = 1.0 - a - b;
    let chain = FiniteChain::stationary(p.clone()).unwrap();
    for n in 1..8 {
        let l = lam.abs().powi(n as i32);
        let alpha = exact_alpha_finite(&chain, n, 0, AlphaMode::Exhaustive).unwrap();
        assert!((alpha.value - pi0 * pi1 * l).abs() < 1e-12);
        assert!((alpha.value - brute_alpha(&p, n)).abs() < 1e-12);
        assert!((phi_finite(&p, n) - pi0.max(pi1) * l).abs() < 1e-12);
        let psi = (pi1 / pi0).max(pi0 / pi1).max(1.0) * l;
        assert!((psi_finite(&p, n) - psi).abs() < 1e-12);
    }
}

#[test]
fn six_state_joint_chain_exhaustive_equals_ascent() {
    let o = common::oracle();
    let joint = oracle::joint_chain(&o.fk, &o.env_matrix, &o.env_initial, 0).unwrap();
    assert_eq!(joint.states(), 6);
    for n in 1..=10 {
        let ex = exact_alpha_finite(&joint, n, 5, AlphaMode::Exhaustive).unwrap();
        let asc = exact_alpha_finite(&joint, n, 5, AlphaMode::AlternatingAscent).unwrap();
        assert!(ex.exact && !asc.exact);
        assert!((ex.value - asc.value).abs() < 1e-12, "n={n}: {} vs {}", ex.value, asc.value);
    }
    let curve = exact_alpha_curve(&joint, &[1, 2, 4, 8], 5).unwrap();
    assert_eq!(curve.provenance, Provenance::ExactFinite);
    assert!(curve.values.iter().all(|v| *v <= 0.25));
}

#[test]
fn empirical_alpha_of_iid_data_is_null() {
    let stream = Stream::new(4, 0, Role::Environment);
    let n = 100_000;
    let rows: Vec<Vec<f64>> = (0..n).map(|t| vec![stream.at(t).uniform()]).collect();
    let curve = empirical_alpha(&rows, &[1, 2, 3, 5, 10], &EventFamily::default()).unwrap();
    assert_eq!(curve.provenance, Provenance::EmpiricalLowerDiagnostic);
    // the null standard error of an indicator covariance is at most 1/4 / sqrt(N)
    let se = 0.25 / (n as f64).sqrt();
    for v in &curve.raw {
        assert!(*v <= 3.0 * se, "{v}");
    }
}

#[test]
fn empirical_alpha_of_a_slow_two_state_path_is_near_a_quarter() {
    let stream = Stream::new(9, 0, Role::Environment);
    let mut z = 0.0;
    let rows: Vec<Vec<f64>> = (0..100_000)
        .map(|t| {
            if stream.at(t).uniform() < 1e-3 {
                z = 1.0 - z;
            }
            vec![z]
        })
        .collect();
    let curve = empirical_alpha(&rows, &[1, 2, 5], &EventFamily::default()).unwrap();
    assert!(curve.raw.iter().all(|v| *v > 0.24), "{:?}", curve.raw);
    assert!(empirical_alpha(&rows[..20], &[1], &EventFamily::default()).is_err());
}

#[test]
fn empirical_alpha_is_dominated_by_the_exact_coefficient() {
    let o = common::oracle();
    let n = 100_000usize;
    let env = sample_environment(&o.env, 0, n as i64 - 1, 30).unwrap();
    let path = simulate_mcre(&o.kernel, &env, &[0.0], 30).unwrap();
    let rows: Vec<Vec<f64>> = (0..n).map(|t| vec![path.values[t], env.get(t as i64)[0]]).collect();
    let lags = [1, 2, 3, 5, 8];
    let curve = empirical_alpha(&rows, &lags, &EventFamily::default()).unwrap();
    let joint = FiniteChain::stationary(oracle::joint_transition(&o.fk, &o.env_matrix).unwrap()).unwrap();
    let se = 0.25 / (n as f64).sqrt();
    for (k, lag) in lags.iter().enumerate() {
        let exact = exact_alpha_finite(&joint, *lag, 0, AlphaMode::Exhaustive).unwrap().value;
        assert!(curve.raw[k] <= exact + 3.0 * se, "lag {lag}: {} vs {exact}", curve.raw[k]);
    }
}

#[test]
fn transfer_bound_examples() {
    let b: Vec<f64> = (0..20).map(|k| 0.9f64.powi(k)).collect();
    let iid = |k: usize| if k == 0 { 0.25 } else { 0.0 };
    let t = transfer_bound(&iid, &b, 1, 10).unwrap();
    assert_eq!(t.m, 1);
    assert_eq!(t.value, b[8]);
    let zero = vec![0.0; 20];
    let geo = |k: usize| 0.2 * 0.5f64.powi(k as i32);
    let t = transfer_bound(&geo, &zero, 2, 10).unwrap();
    assert_eq!(t.m, 4);
    assert_eq!(t.value, geo(8));
    assert!(transfer_bound(&geo, &zero, 3, 2).is_err());
    assert!(transfer_bound(&geo, &zero[..2], 1, 10).is_err());
}

fn params(r_rho: f64, kappa: f64, alpha: MixingRateDescriptor) -> BoundParams {
    BoundParams {
        r: TailSequence::geometric(1.0, r_rho),
        kappa,
        c: 1.0,
        alpha_y: alpha,
        variant: BoundVariant::Standard,
    }
}

/// Direct evaluation over the whole grid.
fn brute_main(p: &BoundParams, n: usize) -> f64 {
    let mut best = f64::INFINITY;
    for q in 1..=n {
        for i in 1..=q {
            let lag = match p.variant {
                BoundVariant::Standard => q + 1 - i,
                BoundVariant::Extended => q - i,
            };
            let a = if lag == 0 { 0.25 } else { p.alpha_y.value(lag) };
            best = best.min(p.c * (p.r.get(i).unwrap() + p.kappa.powf(n as f64 / q as f64) + a));
        }
    }
    best
}

#[test]
fn main_bound_examples() {
    let p = params(0.5, 0.5, MixingRateDescriptor::ZeroAfterLag { c: 0.25, m: 0 });
    let v = main_bound(&p, 16).unwrap();
    assert_eq!((v.value, v.i, v.q), (0.125, 4, 4));
    let one = main_bound(&p, 1).unwrap();
    assert_eq!((one.i, one.q), (1, 1));
    assert_eq!(one.value, 0.5 + 0.5 + 0.0);
    // no mixing: alpha^Y = 1/4 at every lag
    let flat = params(0.5, 0.5, MixingRateDescriptor::Table(vec![0.25]));
    for n in [1, 4, 30] {
        let v = main_bound(&flat, n).unwrap();
        assert!(v.value >= 0.25);
        assert!(v.value >= 0.5f64.powi(n as i32));
    }
    let mut bad = p.clone();
    bad.kappa = 1.0;
    assert!(main_bound(&bad, 3).is_err());
    let mut short = p.clone();
    short.r = TailSequence::new(vec![1.0, 0.5], None);
    assert!(main_bound(&short, 4).is_err());
}

#[test]
fn rate_table_geometric_envelope_tracks_the_minimizer() {
    let p = params(0.5, 0.5, MixingRateDescriptor::Geometric { c: 0.25, rho: 0.5 });
    let grid: Vec<usize> = (1..=400).step_by(7).collect();
    let rows = rate_table(RateCase::Geometric, &p, &grid).unwrap();
    for row in &rows {
        let best = main_bound(&p, row.n).unwrap().value;
        let ratio = row.envelope / best;
        assert!((1.0 - 1e-12..=20.0).contains(&ratio), "n={}: ratio {ratio}", row.n);
        assert_eq!(row.q, (row.n as f64).sqrt().ceil() as usize);
    }
    let non_geo = BoundParams {
        r: TailSequence::new(vec![1.0, 0.5], Some(TailFit::Power { c: 1.0, a: 2.0 })),
        ..p.clone()
    };
    assert!(rate_table(RateCase::Geometric, &non_geo, &[10]).is_err());
}

#[test]
fn rate_table_power_envelope_has_the_predicted_slope() {
    // small r and kappa keep alpha^Y the dominant term; c_q = 2 keeps q large on the grid
    let p = params(0.01, 1e-5, MixingRateDescriptor::Power { c: 0.25, a: 3.0 });
    let grid: Vec<usize> = (0..=20).map(|k| (100.0 * 100f64.powf(k as f64 / 20.0)).round() as usize).collect();
    let rows = rate_table(RateCase::Power { c_q: 2.0 }, &p, &grid).unwrap();
    // envelope ~ n^-3 log^3 n: remove the log factor before fitting
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| (r.envelope / (r.n as f64).ln().powi(3)).ln()).collect();
    let fit = fit_line(&xs, &ys).unwrap();
    assert!((fit.slope + 3.0).abs() <= 0.2, "slope {}", fit.slope);
}

#[test]
fn product_bound_hand_values() {
    assert!((product_bound_theta(ThetaKind::Psi, 0.0, 0.5, None, 3).unwrap() - 0.125).abs() < 1e-15);
    assert!((product_bound_theta(ThetaKind::Phi, 0.1, 0.5, Some(1.0), 3).unwrap() - 0.18).abs() < 1e-15);
    assert!((product_bound_theta(ThetaKind::Alpha, 0.01, 0.5, Some(1.0), 3).unwrap() - 0.145).abs() < 1e-15);
    assert!(product_bound_theta(ThetaKind::Phi, 0.1, 0.5, None, 3).is_err());
    assert!(product_bound_theta(ThetaKind::Psi, 0.1, 1.0, None, 3).is_err());
    assert!(product_bound_theta(ThetaKind::Alpha, 0.1, 0.5, Some(0.4), 3).is_err());
}

#[test]
fn block_bound_examples() {
    let zero = |_p: usize| 0.0;
    let b = block_product_bound(0.81, None, Decay::Psi(&zero), 10, 100).unwrap();
    assert_eq!(b.p, 2);
    assert!((b.delta - 1.0 / 3.0).abs() < 1e-15);
    assert!((b.kappa - 0.81f64.powf(0.25)).abs() < 1e-15);
    let psi = |p: usize| 0.5f64.powi(p as i32);
    let b = block_product_bound(0.9, None, Decay::Psi(&psi), 20, 100).unwrap();
    assert_eq!(b.p, 4);
    assert!((b.base - 0.95625).abs() < 1e-12);
    assert!((b.delta - 1.0 / 7.0).abs() < 1e-15);
    assert!(b.bound <= b.c * b.kappa.powi(20) + 1e-15);
    let never = |_p: usize| 1.0;
    assert!(block_product_bound(0.9, None, Decay::Psi(&never), 5, 50).is_err());
    assert!(block_product_bound(0.9, None, Decay::Phi(&psi), 5, 50).is_err());
}

#[test]
fn useful_bound_values_and_monte_carlo() {
    let v = useful_bound(0.1, 1.0, 1.0, 100).unwrap();
    let hand = (-10.0f64).exp() + 2.0 * 0.1 * std::f64::consts::PI.sqrt() * 10.0 * (-9.75f64).exp();
    assert!((v.value - hand).abs() < 1e-15);
    assert!((v.value - 2.52e-4).abs() < 1e-6);
    assert!(v.admissible);
    assert_eq!(useful_bound(0.0, 1.0, 1.0, 50).unwrap().value, 1.0);
    assert!(!useful_bound(5.0, 1.0, 1.0, 50).unwrap().admissible);
    assert!(useful_bound(0.1, 0.0, 1.0, 50).is_err());

    // log W ~ N(-1, 1): Gaussian sums satisfy the tail condition with M = 2
    let (n, reps, delta) = (50usize, 100_000usize, 0.1);
    let stream = Stream::new(77, 0, Role::Sampler);
    let vals: Vec<f64> = (0..reps)
        .map(|r| {
            let mut rng = stream.at(r as i64);
            let s: f64 = (0..n).map(|_| rng.normal() - 1.0).sum();
            (delta * s).exp()
        })
        .collect();
    let (m, se) = mcre_core::stats::mean_se(&vals);
    let bound = useful_bound(delta, 1.0, 2.0, n).unwrap().value;
    assert!(m <= bound + 3.0 * se, "{m} vs {bound}");
}

#[test]
fn product_bound_routes() {
    let forced = ProductsParams {
        delta1: 0.2,
        pn: PnRoute::Given(vec![0.0]),
        dn: DnRoute::ExpMoment {
            sup_ek: 2.0,
            l: 1.0,
            lambda: 1.0,
        },
        tail_terms: 50,
    };
    let v = products_pn_and_dn(&forced, 5).unwrap();
    assert_eq!(v.p_n, 0.0);
    assert!((v.d_n - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
    assert_eq!(v.r_truncated_at, 55);
    let r_hand: f64 = (5..55).map(|l| 2.0 * (-0.2 * l as f64).exp()).sum();
    assert!((v.r_n - r_hand).abs() < 1e-12);

    let moment = ProductsParams {
        delta1: 1e4f64.ln(),
        pn: PnRoute::Given(vec![1e-4]),
        dn: DnRoute::Moment { l: 1.0, k: 2.0, s: 1.0 },
        tail_terms: 1,
    };
    let v = products_pn_and_dn(&moment, 1).unwrap();
    assert!((v.d_n - (1e-2 + 1e-4)).abs() < 1e-15);

    // gamma in {0.1, 1} iid with equal weights: the product exceeds e^{-n/2} iff fewer
    // than n / (2 ln 10) factors equal 0.1; Hoeffding gives exp(-2 n 0.2829^2)
    let iid = ProductsParams {
        delta1: 0.5,
        pn: PnRoute::Sufexp {
            c1: 1.0,
            c2: 2.0 * (0.5 - 0.5 / 10f64.ln()).powi(2) / 0.5,
            delta: 0.5,
            q: 1,
            alpha: MixingRateDescriptor::ZeroAfterLag { c: 0.0, m: 0 },
        },
        dn: DnRoute::Moment { l: 1.0, k: 2.0, s: 1.0 },
        tail_terms: 1,
    };
    let reps = 20_000;
    let stream = Stream::new(3, 0, Role::Sampler);
    for n in [5usize, 10, 20, 40, 60] {
        let hits = (0..reps)
            .filter(|r| {
                let mut rng = stream.at(*r as i64);
                let log_prod: f64 = (0..n).map(|_| if rng.uniform() < 0.5 { 0.1f64.ln() } else { 0.0 }).sum();
                log_prod > -(n as f64) * 0.5
            })
            .count();
        let p_hat = hits as f64 / reps as f64;
        let bound = pn_bound(&iid, n).unwrap();
        assert!(p_hat <= bound + 3.0 * binomial_se(bound, reps), "n={n}: {p_hat} vs {bound}");
    }
}

#[test]
fn concentration_inequalities() {
    assert!((sufexp(1.0, 1.0, 5, 1.0, 1, 0.0).unwrap() - (-5.0f64).exp()).abs() < 1e-15);
    assert_eq!(merlevede_bound(1.0, 1.0, 0.0, 10).unwrap(), 1.0);
    let v = merlevede_bound(1.0, 1.0, 1.0, 16).unwrap();
    assert!((v - 1.53e-2).abs() < 1e-4, "{v}");
    assert!(merlevede_bound(1.0, 1.0, 1.0, 2).is_err());
    let mut prev = f64::INFINITY;
    for n in 3..=10_000 {
        let v = merlevede_bound(1.0, 1.0, 1.0, n).unwrap();
        assert!(v < prev);
        prev = v;
    }
    // independent transcription of the Rio inequality
    let (m, vq, q, lam, mn, a) = (1.5, 4.0, 3usize, 10.0, 2.0, 0.01);
    let qm = q as f64 * m;
    let hand = 4.0 * (-(vq / (2.0 * qm)) * (1.0 + lam * qm / vq).ln()).exp() + 4.0 * mn * a / lam;
    assert_eq!(rio_bound(m, vq, q, lam, mn, a).unwrap(), hand);
    assert!(rio_bound(m, vq, q, 1.0, mn, a).is_err());
    assert!(rio_bound(m, vq, 1, lam, mn, a).is_err());
}

#[test]
fn hoeffding_form_of_sufexp_dominates_bounded_sums() {
    // uniform[-1, 1] summands: P(S_n >= n delta) <= exp(-n delta^2 / 2)
    let delta = 0.2;
    let reps = 20_000;
    let stream = Stream::new(12, 0, Role::Sampler);
    for n in [10usize, 50, 100, 200] {
        let hits = (0..reps)
            .filter(|r| {
                let mut rng = stream.at(*r as i64);
                let s: f64 = (0..n).map(|_| 2.0 * rng.uniform() - 1.0).sum();
                s >= n as f64 * delta
            })
            .count();
        let p_hat = hits as f64 / reps as f64;
        let bound = sufexp(1.0, delta / 2.0, n, delta, 1, 0.0).unwrap();
        assert!(p_hat <= bound + 3.0 * binomial_se(bound, reps), "n={n}: {p_hat} vs {bound}");
    }
}

fn stochastic_rows(raw: &[f64], m: usize) -> Vec<Vec<f64>> {
    raw.chunks(m)
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_alpha_is_non_increasing_and_matches_enumeration(raw in proptest::collection::vec(0.05f64..1.0, 9)) {
        let p = stochastic_rows(&raw, 3);
        let chain = FiniteChain::stationary(p.clone()).unwrap();
        let mut prev = f64::INFINITY;
        for n in 1..10 {
            let v = exact_alpha_finite(&chain, n, 0, AlphaMode::Exhaustive).unwrap().value;
            prop_assert!(v <= prev + 1e-12);
            prop_assert!((v - brute_alpha(&p, n)).abs() < 1e-12);
            prop_assert!(v <= 0.25 + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn main_bound_is_the_grid_minimum_and_non_increasing(
        rho in 0.1f64..0.95,
        kappa in 0.05f64..0.95,
        arho in 0.1f64..0.95,
        extended in any::<bool>(),
    ) {
        let mut p = params(rho, kappa, MixingRateDescriptor::Geometric { c: 0.25, rho: arho });
        if extended {
            p.variant = BoundVariant::Extended;
        }
        let mut prev = f64::INFINITY;
        for n in 1..=30 {
            let v = main_bound(&p, n).unwrap();
            prop_assert_eq!(v.value, brute_main(&p, n));
            prop_assert!(1 <= v.i && v.i <= v.q && v.q <= n);
            prop_assert!(v.value <= prev);
            prev = v.value;
        }
    }

    #[test]
    fn product_bounds_dominate_the_independent_value(
        coeff in 0.0f64..0.5,
        hat in 0.0f64..0.95,
        gap in 0.01f64..1.0,
        n in 1usize..40,
    ) {
        let bar = hat + gap;
        let base = hat.powf(n as f64);
        for kind in [ThetaKind::Alpha, ThetaKind::Phi, ThetaKind::Psi] {
            let v = product_bound_theta(kind, coeff, hat, Some(bar), n).unwrap();
            prop_assert!(v >= base * (1.0 - 1e-12));
        }
        prop_assert_eq!(product_bound_theta(ThetaKind::Psi, 0.0, hat, None, n).unwrap(), base);
        prop_assert_eq!(product_bound_theta(ThetaKind::Alpha, 0.0, hat, Some(bar), n).unwrap(), base);
    }

    #[test]
    fn calculators_are_pure(n in 1usize..60, rho in 0.1f64..0.9) {
        let p = params(rho, 0.5, MixingRateDescriptor::Geometric { c: 0.25, rho });
        prop_assert_eq!(main_bound(&p, n).unwrap(), main_bound(&p, n).unwrap());
        prop_assert_eq!(
            useful_bound(0.1, 1.0, 2.0, n).unwrap().value.to_bits(),
            useful_bound(0.1, 1.0, 2.0, n).unwrap().value.to_bits()
        );
    }
}
