#![allow(dead_code)]

use mcre_core::certify::{finite_doeblin, MinorizationCertificate};
use mcre_core::dynamics::{EnvironmentSpec, FiniteKernel, RandomMapKernel};
use mcre_core::linalg::Matrix;

/// The 3-state kernel driven by a 2-state Markov environment used throughout the tests.
pub struct Oracle {
    pub fk: FiniteKernel,
    pub kernel: RandomMapKernel,
    pub minor: MinorizationCertificate,
    pub env_matrix: Matrix,
    pub env: EnvironmentSpec,
    pub env_initial: Vec<f64>,
}

pub fn oracle() -> Oracle {
    let tables = vec![
        vec![vec![0.5, 0.5, 0.0], vec![0.2, 0.5, 0.3], vec![0.0, 0.6, 0.4]],
        vec![vec![0.1, 0.3, 0.6], vec![0.4, 0.4, 0.2], vec![0.3, 0.3, 0.4]],
    ];
    let fk = FiniteKernel::new(tables).unwrap();
    let minor = finite_doeblin(&fk).unwrap();
    let env_matrix = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
    let env = EnvironmentSpec::finite_markov(env_matrix.clone());
    let env_initial = env.finite_initial_law().unwrap();
    Oracle {
        kernel: RandomMapKernel::new(fk.clone()),
        fk,
        minor,
        env_matrix,
        env,
        env_initial,
    }
}

/// Binomial standard error at the true probability `p`.
pub fn null_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
