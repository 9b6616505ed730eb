//! Construction of environments, kernels and certificates from config sections.

use mcre_core::certify::{
    finite_doeblin, gaussian_minorization, varx_pstep_certificate, DriftCertificate, Lyapunov,
    MinorizationCertificate,
};
use mcre_core::dynamics::{
    EnvKind, EnvironmentSpec, FiniteKernel, GaussianKernel, IidLaw, MixingRateDescriptor, RandomMapKernel,
};
use mcre_core::econ::{LocationScaleModel, MleHarness, NoiseLaw, PoissonDgp};
use mcre_core::linalg::{load_matrix, Matrix};
use mcre_core::sgld::LogisticStream;
use nalgebra::DMatrix;

use crate::config::Config;
use crate::error::{CliError, CliResult};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Environment from section `sec`.
pub fn environment(cfg: &Config, sec: &str) -> CliResult<EnvironmentSpec> {
    let key = |k: &str| format!("{sec}.{k}");
    let kind = cfg.str_or(&key("kind"), "finite-markov");
    let dim = cfg.usize_or(&key("dimension"), 1)?;
    let mut spec = match kind {
        "iid-values" => {
            let values = cfg.f64_list_or(&key("values"), &[0.0, 1.0])?;
            let n = values.len().max(1);
            let probs = cfg.f64_list_or(&key("probs"), &vec![1.0 / n as f64; values.len()])?;
            EnvironmentSpec::new(
                EnvKind::Iid(IidLaw::Categorical {
                    values: values.iter().map(|v| vec![*v]).collect(),
                    probs,
                }),
                1,
            )
        }
        "iid-gaussian" => {
            let mean = cfg.f64_list_or(&key("mean"), &vec![0.0; dim])?;
            EnvironmentSpec::new(
                EnvKind::Iid(IidLaw::Gaussian {
                    mean,
                    sd: cfg.f64_or(&key("sd"), 1.0)?,
                }),
                dim,
            )
        }
        "iid-uniform" => EnvironmentSpec::new(
            EnvKind::Iid(IidLaw::Uniform {
                lo: cfg.f64_or(&key("lo"), 0.0)?,
                hi: cfg.f64_or(&key("hi"), 1.0)?,
            }),
            dim,
        ),
        "finite-markov" => {
            let transition = cfg
                .matrix(&key("transition"))?
                .unwrap_or_else(|| vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
            let levels = cfg
                .matrix(&key("levels"))?
                .map(|l| if l.len() == 1 { l[0].iter().map(|v| vec![*v]).collect() } else { l });
            let d = levels.as_ref().map_or(1, |l: &Matrix| l[0].len());
            let initial = cfg.get(&key("initial")).map(|_| cfg.f64_list_or(&key("initial"), &[])).transpose()?;
            EnvironmentSpec::new(
                EnvKind::FiniteMarkov {
                    transition,
                    initial,
                    levels,
                    emission_sd: cfg.f64_or(&key("emission_sd"), 0.0)?,
                },
                d,
            )
        }
        "gaussian-ar1" => EnvironmentSpec::gaussian_ar1(cfg.f64_or(&key("a"), 0.5)?, cfg.f64_or(&key("noise_var"), 0.75)?, dim),
        "m-dependent" => {
            let m = cfg.usize_or(&key("m"), 1)?;
            let weights = cfg.f64_list_or(&key("weights"), &vec![1.0; m + 1])?;
            EnvironmentSpec::new(EnvKind::MDependent { m, weights }, dim)
        }
        "threshold-modulated" => EnvironmentSpec::new(
            EnvKind::ThresholdModulated {
                a: cfg.f64_or(&key("a"), 0.8)?,
                threshold: cfg.f64_or(&key("threshold"), 0.0)?,
                low: cfg.f64_list_or(&key("low"), &vec![0.0; dim])?,
                high: cfg.f64_list_or(&key("high"), &vec![1.0; dim])?,
                emission_sd: cfg.f64_or(&key("emission_sd"), 0.0)?,
            },
            dim,
        ),
        other => return Err(CliError::invalid(&key("kind"), format!("unknown environment kind `{other}`"))),
    };
    spec.stationary = cfg.bool_or(&key("stationary"), spec.stationary)?;
    spec.two_sided = cfg.bool_or(&key("two_sided"), spec.two_sided)?;
    if let Some(form) = cfg.get(&key("rate")) {
        spec.known_rate = Some(rate(cfg, sec, form)?);
    }
    spec.validate()?;
    Ok(spec)
}

/// Mixing-rate descriptor named `form` with constants under `sec.rate_*`.
pub fn rate(cfg: &Config, sec: &str, form: &str) -> CliResult<MixingRateDescriptor> {
    let key = |k: &str| format!("{sec}.rate_{k}");
    let r = match form {
        "zero-after-lag" => MixingRateDescriptor::ZeroAfterLag {
            c: cfg.f64_or(&key("c"), 0.25)?,
            m: cfg.usize_or(&key("m"), 0)?,
        },
        "geometric" => MixingRateDescriptor::Geometric {
            c: cfg.f64_or(&key("c"), 0.25)?,
            rho: cfg.f64_req(&key("rho"))?,
        },
        "power" => MixingRateDescriptor::Power {
            c: cfg.f64_or(&key("c"), 0.25)?,
            a: cfg.f64_req(&key("a"))?,
        },
        "table" => MixingRateDescriptor::Table(cfg.f64_list_or(&key("values"), &[])?),
        other => return Err(CliError::invalid(&format!("{sec}.rate"), format!("unknown rate form `{other}`"))),
    };
    r.validate()?;
    Ok(r)
}

/// A kernel with whatever certificates its family provides.
pub struct KernelSetup {
    pub kernel: RandomMapKernel,
    pub finite: Option<FiniteKernel>,
    pub drift: Option<DriftCertificate>,
    pub minor: Option<MinorizationCertificate>,
}

fn finite_tables(cfg: &Config, sec: &str) -> CliResult<Vec<Matrix>> {
    if let Some(files) = cfg.get(&format!("{sec}.files")) {
        return files
            .split(',')
            .map(|f| Ok(load_matrix(&cfg.resolve(f.trim()))?))
            .collect();
    }
    let path = format!("{sec}.tables");
    let text = cfg.get(&path).unwrap_or("0.5,0.5,0;0.2,0.5,0.3;0,0.6,0.4 | 0.1,0.3,0.6;0.4,0.4,0.2;0.3,0.3,0.4");
    text.split('|')
        .map(|t| {
            let mut c = Config::default();
            c.set("t", t);
            c.matrix("t")?
                .ok_or_else(|| CliError::invalid(&path, "empty table"))
        })
        .collect::<CliResult<Vec<_>>>()
        .map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(m.replacen("t:", &format!("{path}:"), 1)),
            e => e,
        })
}

pub fn noise(cfg: &Config, sec: &str) -> CliResult<NoiseLaw> {
    let n = match cfg.str_or(&format!("{sec}.noise"), "gaussian") {
        "gaussian" => NoiseLaw::Gaussian,
        "student-t" => NoiseLaw::StudentT {
            nu: cfg.f64_or(&format!("{sec}.nu"), 5.0)?,
        },
        "uniform" => NoiseLaw::Uniform,
        other => return Err(CliError::invalid(&format!("{sec}.noise"), format!("unknown noise `{other}`"))),
    };
    n.validate()?;
    Ok(n)
}

/// Location-scale model from section `sec`.
pub fn location_scale(cfg: &Config, sec: &str) -> CliResult<LocationScaleModel> {
    let key = |k: &str| format!("{sec}.{k}");
    let nz = noise(cfg, sec)?;
    let m = match cfg.str_or(&key("kind"), "tar") {
        "tar" => LocationScaleModel::threshold_ar(
            cfg.f64_or(&key("a0"), 0.3)?,
            cfg.f64_or(&key("a1"), 0.4)?,
            cfg.f64_or(&key("a2"), -0.4)?,
            cfg.f64_or(&key("threshold"), 0.0)?,
            cfg.f64_or(&key("b0"), 1.0)?,
            cfg.f64_or(&key("b1"), 0.2)?,
            cfg.f64_or(&key("b2"), 0.1)?,
            nz,
        ),
        "persistent" => LocationScaleModel::persistent(cfg.f64_or(&key("sd"), 1.0)?, nz),
        "linear" => LocationScaleModel::linear(
            cfg.f64_or(&key("alpha"), 0.5)?,
            cfg.f64_list_or(&key("beta"), &[0.5])?,
            cfg.f64_or(&key("sd"), 1.0)?,
            nz,
        ),
        other => return Err(CliError::invalid(&key("kind"), format!("unknown model `{other}`"))),
    };
    m.validate()?;
    Ok(m)
}

/// Kernel from section `sec`: `finite`, `ar1`, `varx` or a location-scale family.
pub fn kernel(cfg: &Config, sec: &str) -> CliResult<KernelSetup> {
    let key = |k: &str| format!("{sec}.{k}");
    match cfg.str_or(&key("kind"), "finite") {
        "finite" => {
            let fk = FiniteKernel::new(finite_tables(cfg, sec)?)?;
            let minor = finite_doeblin(&fk)?;
            Ok(KernelSetup {
                kernel: RandomMapKernel::new(fk.clone()),
                finite: Some(fk),
                drift: None,
                minor: Some(minor),
            })
        }
        "ar1" => {
            let a = cfg.f64_or(&key("a"), 0.5)?;
            let sd = cfg.f64_or(&key("sd"), 1.0)?;
            if sd <= 0.0 {
                return Err(CliError::invalid(&key("sd"), "must be positive"));
            }
            let drift = DriftCertificate::constant(Lyapunov::norm(), a.abs(), (sd * SQRT_2_OVER_PI).max(1.0));
            let minor = gaussian_minorization("ar1", Lyapunov::norm(), 1, sd, move |r, _| a.abs() * r)?;
            Ok(KernelSetup {
                kernel: RandomMapKernel::new(GaussianKernel::ar1(a, sd)),
                finite: None,
                drift: Some(drift),
                minor: Some(minor),
            })
        }
        "varx" => {
            let am = cfg
                .matrix(&key("a"))?
                .ok_or_else(|| CliError::invalid(&key("a"), "missing"))?;
            let d = am.len();
            let bm = cfg.matrix(&key("b"))?.unwrap_or_else(|| vec![vec![1.0]; d]);
            let sd = cfg.f64_or(&key("sd"), 1.0)?;
            let a = DMatrix::from_fn(d, am[0].len(), |i, j| am[i][j]);
            let b = DMatrix::from_fn(bm.len(), bm[0].len(), |i, j| bm[i][j]);
            let noise_abs = sd * (d as f64).sqrt();
            let m = mcre_core::linalg::operator_norm(&a)
                .max(mcre_core::linalg::operator_norm(&b))
                .max(noise_abs);
            let cert = varx_pstep_certificate(&a, &b, cfg.f64_or(&key("m"), m)?, cfg.usize_or(&key("p"), 0)?, noise_abs)?;
            let base = RandomMapKernel::new(GaussianKernel::varx(a, b, sd)?);
            let kernel = if cert.p > 1 {
                mcre_core::dynamics::compose_p(&base, cert.p)?
            } else {
                base
            };
            Ok(KernelSetup {
                kernel,
                finite: None,
                drift: Some(cert.cert),
                minor: None,
            })
        }
        "tar" | "persistent" | "linear" => {
            let m = location_scale(cfg, sec)?;
            Ok(KernelSetup {
                kernel: m.kernel(),
                finite: None,
                drift: Some(m.drift_certificate()),
                minor: None,
            })
        }
        other => Err(CliError::invalid(&key("kind"), format!("unknown kernel kind `{other}`"))),
    }
}

/// Logistic feature stream from section `sec`.
pub fn logistic_stream(cfg: &Config, sec: &str, d: usize) -> CliResult<LogisticStream> {
    let key = |k: &str| format!("{sec}.{k}");
    let theta_true = cfg.f64_list_or(&key("theta_true"), &vec![1.0; d])?;
    if theta_true.len() != d {
        return Err(CliError::invalid(&key("theta_true"), format!("must have length {d}")));
    }
    let sd = cfg.f64_or(&key("sd"), 0.5)?;
    let s = match cfg.str_or(&key("kind"), "two-regime") {
        "two-regime" => LogisticStream::two_regime(d, cfg.f64_or(&key("mean"), 1.0)?, cfg.f64_or(&key("switch"), 0.1)?, sd, theta_true),
        "iid" => LogisticStream::iid(d, sd, theta_true),
        other => return Err(CliError::invalid(&key("kind"), format!("unknown stream `{other}`"))),
    };
    s.validate()?;
    Ok(s)
}

/// Poisson data-generating process from `[poisson]` and the environment in `[env]`.
pub fn poisson_dgp(cfg: &Config) -> CliResult<PoissonDgp> {
    let env = if cfg.has_section("env") {
        environment(cfg, "env")?
    } else {
        EnvironmentSpec::new(
            EnvKind::FiniteMarkov {
                transition: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                initial: None,
                levels: Some(vec![vec![0.2], vec![1.0]]),
                emission_sd: 0.0,
            },
            1,
        )
    };
    Ok(PoissonDgp {
        eta0: cfg.f64_or("poisson.eta0", 0.5)?,
        eta_x: cfg.f64_or("poisson.eta_x", 0.4)?,
        eta_y: cfg.f64_list_or("poisson.eta_y", &vec![1.0; env.dimension])?,
        burn_in: cfg.usize_or("poisson.burn_in", 100)?,
        env,
    })
}

pub fn mle_harness(cfg: &Config, env_dim: usize) -> CliResult<MleHarness> {
    let k = cfg.usize_or("mle.observed_dim", env_dim)?;
    let mut lower = vec![1e-3, 0.0];
    lower.extend(vec![0.0; k]);
    let mut upper = vec![20.0, 0.99];
    upper.extend(vec![20.0; k]);
    let mut h = MleHarness::new(k, cfg.f64_list_or("mle.lower", &lower)?, cfg.f64_list_or("mle.upper", &upper)?);
    h.starts = cfg.usize_or("mle.starts", h.starts)?;
    h.tol = cfg.f64_or("mle.tol", h.tol)?;
    if let Some(v) = cfg.get("mle.hac_lag") {
        h.hac_lag = Some(v.parse().map_err(|_| CliError::invalid("mle.hac_lag", "not an integer"))?);
    }
    h.validate()?;
    Ok(h)
}
