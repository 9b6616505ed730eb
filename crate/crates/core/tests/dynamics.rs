mod common;

use mcre_core::dynamics::*;
use mcre_core::econ::{LocationScaleModel, NoiseLaw};
use mcre_core::linalg::{mat_mul, mat_pow, stationary_distribution};
use mcre_core::rng::{std_normal_cdf, std_normal_quantile, Role, Stream};
use mcre_core::stats::autocorrelation;
use mcre_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn iid_uniform_values_stay_in_support() {
    let spec = EnvironmentSpec::iid_uniform_values(&[0.0, 1.0]);
    let y = sample_environment(&spec, 0, 9, 7).unwrap();
    assert_eq!(y.len(), 10);
    assert!((0..10).all(|t| y.get(t)[0] == 0.0 || y.get(t)[0] == 1.0));
}

#[test]
fn identity_chain_is_constant() {
    let mut spec = EnvironmentSpec::new(
        EnvKind::FiniteMarkov {
            transition: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            initial: Some(vec![0.2, 0.3, 0.5]),
            levels: None,
            emission_sd: 0.0,
        },
        1,
    );
    spec.stationary = false;
    for seed in 0..20 {
        let y = sample_environment(&spec, 0, 5, seed).unwrap();
        let first = y.get(0)[0];
        assert!((0..=5).all(|t| y.get(t)[0] == first));
    }
}

#[test]
fn gaussian_ar1_lag_one_autocorrelation() {
    let spec = EnvironmentSpec::gaussian_ar1(0.5, 0.75, 1);
    let y = sample_environment(&spec, 0, 10_000, 1).unwrap();
    let r = autocorrelation(&y.values, 1);
    assert!((r - 0.5).abs() < 0.03, "{r}");
}

#[test]
fn sampling_is_deterministic_and_counter_addressed() {
    let spec = EnvironmentSpec::gaussian_ar1(0.5, 1.0, 2);
    let a = sample_environment(&spec, -20, 50, 3).unwrap();
    let b = sample_environment(&spec, -20, 50, 3).unwrap();
    assert_eq!(a, b);
    let c = sample_environment(&spec, -20, 50, 4).unwrap();
    assert_ne!(a.values, c.values);
    let iid = EnvironmentSpec::new(
        EnvKind::Iid(IidLaw::Gaussian {
            mean: vec![0.0],
            sd: 1.0,
        }),
        1,
    );
    let long = sample_environment(&iid, 0, 100, 9).unwrap();
    let short = sample_environment(&iid, 10, 20, 9).unwrap();
    for t in 10..=20 {
        assert_eq!(long.get(t), short.get(t));
    }
}

#[test]
fn one_sided_spec_rejects_negative_times() {
    let spec = EnvironmentSpec::gaussian_ar1(0.5, 1.0, 1).one_sided();
    assert!(sample_environment(&spec, -1, 5, 0).is_err());
    assert!(sample_environment(&spec, 5, 4, 0).is_err());
}

#[test]
fn environment_validation() {
    let bad = EnvironmentSpec::finite_markov(vec![vec![0.5, 0.6], vec![0.5, 0.5]]);
    assert!(matches!(bad.validate(), Err(Error::Config { .. })));
    let explosive = EnvironmentSpec::gaussian_ar1(1.0, 1.0, 1);
    assert!(explosive.validate().is_err());
    let negative = EnvironmentSpec::finite_markov(vec![vec![1.1, -0.1], vec![0.5, 0.5]]);
    assert!(negative.validate().is_err());
}

#[test]
fn theoretical_alpha_trivial_cases() {
    let iid = EnvironmentSpec::iid_uniform_values(&[0.0, 1.0]);
    assert_eq!(theoretical_alpha(&iid, 1).unwrap(), 0.0);
    let md = EnvironmentSpec::new(
        EnvKind::MDependent {
            m: 2,
            weights: vec![1.0, 0.5, 0.25],
        },
        1,
    );
    assert_eq!(theoretical_alpha(&md, 3).unwrap(), 0.0);
    let ar = EnvironmentSpec::gaussian_ar1(0.5, 1.0, 1);
    assert!(theoretical_alpha(&ar, 3).is_err());
    let ar = ar.with_known_rate(MixingRateDescriptor::Geometric { c: 1.0, rho: 0.5 });
    assert_eq!(theoretical_alpha(&ar, 3).unwrap(), 0.125);
}

#[test]
fn theoretical_alpha_two_state_matches_subset_enumeration() {
    let p = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
    let spec = EnvironmentSpec::finite_markov(p.clone());
    let pi = stationary_distribution(&p);
    let p5 = mat_pow(&p, 5);
    let mut best: f64 = 0.0;
    for s in 0..4u32 {
        for t in 0..4u32 {
            let (mut joint, mut ps, mut pt) = (0.0, 0.0, 0.0);
            for a in 0..2 {
                if s & (1 << a) == 0 {
                    continue;
                }
                ps += pi[a];
                for b in 0..2 {
                    if t & (1 << b) != 0 {
                        joint += pi[a] * p5[a][b];
                    }
                }
            }
            for b in 0..2 {
                if t & (1 << b) != 0 {
                    pt += pi[b];
                }
            }
            best = best.max((joint - ps * pt).abs());
        }
    }
    let got = theoretical_alpha(&spec, 5).unwrap();
    assert!((got - best).abs() < 1e-12, "{got} vs {best}");
}

#[test]
fn rate_descriptors_are_capped_and_monotone() {
    let rates = [
        MixingRateDescriptor::Geometric { c: 3.0, rho: 0.7 },
        MixingRateDescriptor::Power { c: 2.0, a: 1.5 },
        MixingRateDescriptor::ZeroAfterLag { c: 0.1, m: 4 },
        MixingRateDescriptor::Table(vec![0.3, 0.2, 0.05]),
    ];
    for r in &rates {
        r.validate().unwrap();
        let v: Vec<f64> = (0..40).map(|n| r.value(n)).collect();
        assert!(v.iter().all(|x| (0.0..=0.25).contains(x)));
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }
    assert!(MixingRateDescriptor::Table(vec![0.1, 0.2]).validate().is_err());
    assert!(MixingRateDescriptor::Geometric { c: 1.0, rho: 1.0 }.validate().is_err());
}

#[test]
fn apply_kernel_trivial_maps() {
    let zero = RandomMapKernel::new(GaussianKernel::varx(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), 0.0).unwrap());
    assert_eq!(apply_kernel(&zero, &[3.0, -1.0], &[2.0], &[0.3, 0.9]).unwrap(), vec![0.0, 0.0]);
    let det = FiniteKernel::new(vec![vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]]).unwrap();
    let det = RandomMapKernel::new(det);
    for u in [0.0, 0.3, 0.999] {
        assert_eq!(apply_kernel(&det, &[1.0], &[0.0], &[u]).unwrap(), vec![2.0]);
    }
    assert!(matches!(apply_kernel(&det, &[1.0, 2.0], &[0.0], &[0.5]), Err(Error::Dimension { .. })));
    assert!(apply_kernel(&det, &[1.0], &[0.0], &[0.5, 0.5]).is_err());
}

#[test]
fn finite_kernel_rejects_non_stochastic_rows() {
    assert!(FiniteKernel::new(vec![vec![vec![0.5, 0.4], vec![0.5, 0.5]]]).is_err());
    assert!(FiniteKernel::new(vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![vec![1.0]]]).is_err());
}

#[test]
fn two_step_finite_table_is_the_matrix_product() {
    let o = common::oracle();
    let k2 = compose_p(&o.kernel, 2).unwrap();
    assert_eq!(k2.step_count(), 2);
    for (y1, y2) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
        let expected = mat_mul(o.fk.table(y1), o.fk.table(y2));
        assert_eq!(o.fk.block_table(&[y1, y2]), expected);
        // the same table from pushing uniform noise through the composed map
        let grid = 400;
        for x in 0..3 {
            let mut freq = [0.0; 3];
            for a in 0..grid {
                for b in 0..grid {
                    let u = [(a as f64 + 0.5) / grid as f64, (b as f64 + 0.5) / grid as f64];
                    let out = k2.apply(&[x as f64], &[y1 as f64, y2 as f64], &u);
                    freq[out[0] as usize] += 1.0 / (grid * grid) as f64;
                }
            }
            for s in 0..3 {
                assert!((freq[s] - expected[x][s]).abs() < 5e-3, "{freq:?} vs {:?}", expected[x]);
            }
        }
    }
}

#[test]
fn p_equal_one_is_the_kernel_itself() {
    let k = RandomMapKernel::new(GaussianKernel::ar1(0.7, 0.5));
    let k1 = compose_p(&k, 1).unwrap();
    for u in [0.1, 0.5, 0.93] {
        assert_eq!(k1.apply(&[1.5], &[0.0], &[u]), k.apply(&[1.5], &[0.0], &[u]));
    }
    assert!(compose_p(&k, 0).is_err());
    assert!(compose_apply(&k, &[vec![0.0]], &[1.0], &[vec![0.5], vec![0.5]]).is_err());
}

#[test]
fn nilpotent_varx_vanishes_after_two_steps() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let k = RandomMapKernel::new(GaussianKernel::varx(a, DMatrix::zeros(2, 1), 0.0).unwrap());
    let out = compose_apply(&k, &[vec![0.0], vec![0.0]], &[5.0, -3.0], &[vec![0.2, 0.7], vec![0.4, 0.1]]).unwrap();
    assert_eq!(out, vec![0.0, 0.0]);
}

#[test]
fn noiseless_ar1_halves() {
    let k = RandomMapKernel::new(GaussianKernel::ar1(0.5, 0.0));
    let env = Trajectory::from_values(0, 1, &vec![vec![0.0]; 4]);
    let path = simulate_mcre(&k, &env, &[8.0], 1).unwrap();
    assert_eq!(path.values, vec![8.0, 4.0, 2.0, 1.0, 0.5]);
    let short = Trajectory::from_values(0, 1, &[vec![0.0]]);
    assert!(simulate_from(&k, &short, &[8.0], 0, 3, &Stream::new(1, 0, Role::Noise)).is_err());
}

#[test]
fn simulation_is_reproducible() {
    let o = common::oracle();
    let env = sample_environment(&o.env, 0, 500, 3).unwrap();
    let a = simulate_mcre(&o.kernel, &env, &[0.0], 11).unwrap();
    let b = simulate_mcre(&o.kernel, &env, &[0.0], 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 502);
}

#[test]
fn finite_mcre_occupation_matches_exact_marginals() {
    let o = common::oracle();
    let horizon = 100_000usize;
    let env = sample_environment(&o.env, 0, horizon as i64 - 1, 21).unwrap();
    let path = simulate_mcre(&o.kernel, &env, &[0.0], 21).unwrap();
    let xs = &path.values[..horizon];
    let laws = mcre_core::oracle::state_marginals(&o.fk, &o.env_matrix, &o.env_initial, 0, horizon - 1).unwrap();
    let exact: Vec<f64> = (0..3)
        .map(|s| laws.iter().map(|l| l[s]).sum::<f64>() / horizon as f64)
        .collect();
    let occ = occupation(xs, 3);
    // batch means for the standard error of a dependent average
    let batches = 100;
    let len = horizon / batches;
    for s in 0..3 {
        let means: Vec<f64> = (0..batches)
            .map(|b| xs[b * len..(b + 1) * len].iter().filter(|x| **x as usize == s).count() as f64 / len as f64)
            .collect();
        let (m, se) = mcre_core::stats::mean_se(&means);
        assert!((m - occ[s]).abs() < 1e-12);
        assert!((occ[s] - exact[s]).abs() <= 3.0 * se, "state {s}: {} vs {} (se {se})", occ[s], exact[s]);
    }
}

#[test]
fn gaussian_map_matches_density_on_intervals() {
    let model = LocationScaleModel::threshold_ar(0.3, 0.4, -0.4, 0.0, 1.0, 0.2, 0.1, NoiseLaw::Gaussian);
    let k = model.kernel();
    let n = 10_000;
    let stream = Stream::new(5, 0, Role::Noise);
    for (x, y) in [(1.0, 0.5), (-2.0, 1.0), (0.0, -1.0)] {
        let draws: Vec<f64> = (0..n)
            .map(|i| k.apply(&[x], &[y], &stream.at(i).uniforms(1))[0])
            .collect();
        for (lo, hi) in [(-1.0, 0.0), (0.0, 1.5), (-3.0, -1.0), (0.5, 4.0)] {
            let p_mc = draws.iter().filter(|v| **v >= lo && **v <= hi).count() as f64 / n as f64;
            // trapezoid integral of the density
            let m = 2000;
            let h = (hi - lo) / m as f64;
            let p_dens: f64 = (0..=m)
                .map(|i| {
                    let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                    w * k.density(&[y], &[x], &[lo + i as f64 * h]).unwrap()
                })
                .sum::<f64>()
                * h;
            let se = common::null_se(p_dens, n as usize);
            assert!((p_mc - p_dens).abs() <= 3.0 * se + 1e-9, "x={x} y={y} [{lo},{hi}]: {p_mc} vs {p_dens}");
        }
    }
}

#[test]
fn gaussian_kernel_uses_the_normal_quantile() {
    let k = RandomMapKernel::new(GaussianKernel::ar1(0.5, 2.0));
    let u = 0.8;
    let out = k.apply(&[1.0], &[0.0], &[u]);
    assert!((out[0] - (0.5 + 2.0 * std_normal_quantile(u))).abs() < 1e-15);
    let err = (std_normal_cdf(std_normal_quantile(u)) - u).abs();
    assert!(err < 1e-12, "{err}");
}

fn tar_kernel() -> RandomMapKernel {
    LocationScaleModel::threshold_ar(0.3, 0.4, -0.4, 0.0, 1.0, 0.2, 0.1, NoiseLaw::Gaussian).kernel()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_is_associative(
        p in 1usize..4,
        q in 1usize..4,
        x in -5.0f64..5.0,
        ys in proptest::collection::vec(-2.0f64..2.0, 6),
        us in proptest::collection::vec(0.001f64..0.999, 6),
    ) {
        let k = tar_kernel();
        let whole = compose_p(&k, p + q).unwrap();
        let first = compose_p(&k, p).unwrap();
        let second = compose_p(&k, q).unwrap();
        let mid = first.apply(&[x], &ys[..p], &us[..p]);
        let two_stage = second.apply(&mid, &ys[p..p + q], &us[p..p + q]);
        prop_assert_eq!(whole.apply(&[x], &ys[..p + q], &us[..p + q]), two_stage);
    }

    #[test]
    fn composed_map_equals_sequential_application(
        p in 1usize..6,
        x in 0usize..3,
        ys in proptest::collection::vec(0usize..2, 6),
        us in proptest::collection::vec(0.0f64..1.0, 6),
    ) {
        let o = common::oracle();
        let block: Vec<Vec<f64>> = ys[..p].iter().map(|y| vec![*y as f64]).collect();
        let noise: Vec<Vec<f64>> = us[..p].iter().map(|u| vec![*u]).collect();
        let mut cur = vec![x as f64];
        for (y, u) in block.iter().zip(&noise) {
            cur = apply_kernel(&o.kernel, &cur, y, u).unwrap();
        }
        prop_assert_eq!(compose_apply(&o.kernel, &block, &[x as f64], &noise).unwrap(), cur);
    }

    #[test]
    fn environment_sampling_is_pure(seed in any::<u64>(), lo in -30i64..0, len in 1i64..60) {
        let spec = EnvironmentSpec::finite_markov(vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
        let a = sample_environment(&spec, lo, lo + len, seed).unwrap();
        let b = sample_environment(&spec, lo, lo + len, seed).unwrap();
        prop_assert_eq!(a.len() as i64, len + 1);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn finite_table_rows_are_distributions(y in 0usize..2, block in proptest::collection::vec(0usize..2, 1..6)) {
        let o = common::oracle();
        for row in o.fk.table(y).iter().chain(o.fk.block_table(&block).iter()) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }
}
