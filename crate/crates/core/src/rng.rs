//! Counter-addressed random streams.
//!
//! Every random draw in the workbench is addressed by `(seed, replication, role, time)`.
//! A stream is a ChaCha8 generator keyed by the seed, with the ChaCha stream id derived
//! from `(replication, role)` and the word position derived from the time index. Two
//! computations that ask for the same address see the same numbers, no matter in which
//! order or on which thread they run. This is what makes coupled paths share noise and
//! what keeps results independent of the worker count.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per time index. Each f64 consumes two words, so a single step may
/// draw up to 2^31 uniforms before it would spill into the next step.
const WORDS_PER_STEP: u128 = 1 << 32;
/// Time indices are shifted so that negative times (two-sided environments) stay
/// inside the 68-bit ChaCha word counter.
const TIME_OFFSET: i128 = 1 << 31;

/// What a stream is used for. Distinct roles never share numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Environment,
    Noise,
    BurnIn,
    Partner,
    Sampler,
    Custom(u32),
}

impl Role {
    fn code(self) -> u64 {
        match self {
            Role::Environment => 1,
            Role::Noise => 2,
            Role::BurnIn => 3,
            Role::Partner => 4,
            Role::Sampler => 5,
            Role::Custom(k) => 0x100 + k as u64,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed family of per-step generators.
#[derive(Clone, Debug)]
pub struct Stream {
    base: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, replication: u64, role: Role) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(splitmix(splitmix(replication) ^ role.code().rotate_left(40)));
        Stream { base }
    }

    /// Generator positioned at the start of time index `t`.
    pub fn at(&self, t: i64) -> StepRng {
        let mut rng = self.base.clone();
        let slot = (t as i128 + TIME_OFFSET).max(0) as u128;
        rng.set_word_pos(slot * WORDS_PER_STEP);
        StepRng { rng }
    }
}

/// Sequential draws within a single time index.
#[derive(Clone, Debug)]
pub struct StepRng {
    rng: ChaCha8Rng,
}

impl StepRng {
    /// Plain generator for sampling that does not need per-step addressing.
    pub fn from_seed(seed: u64, replication: u64) -> Self {
        Stream::new(seed, replication, Role::Sampler).at(0)
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        open_unit(self.rng.next_u64())
    }

    pub fn fill_uniform(&mut self, out: &mut [f64]) {
        for u in out.iter_mut() {
            *u = self.uniform();
        }
    }

    pub fn uniforms(&mut self, k: usize) -> Vec<f64> {
        (0..k).map(|_| self.uniform()).collect()
    }

    pub fn normal(&mut self) -> f64 {
        std_normal_quantile(self.uniform())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform integer in `0..n` by rejection (unbiased).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }
}

fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal quantile.
pub fn std_normal_quantile(u: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u);
    // erfc_inv is good to about 1e-9; one Newton step brings it to rounding level
    let d = std_normal_pdf(x);
    if x.is_finite() && d > 0.0 {
        x - (std_normal_cdf(x) - u) / d
    } else {
        x
    }
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Derive a child seed; used when a computation needs several independent seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_address_same_numbers() {
        let a = Stream::new(7, 3, Role::Noise);
        let b = Stream::new(7, 3, Role::Noise);
        let mut x = a.at(12);
        let _ = a.at(5).uniform();
        let mut y = b.at(12);
        for _ in 0..10 {
            assert_eq!(x.uniform(), y.uniform());
        }
    }

    #[test]
    fn roles_and_times_differ() {
        let s = Stream::new(7, 0, Role::Noise);
        let e = Stream::new(7, 0, Role::Environment);
        assert_ne!(s.at(0).uniform(), e.at(0).uniform());
        assert_ne!(s.at(0).uniform(), s.at(1).uniform());
        assert_ne!(s.at(-1).uniform(), s.at(0).uniform());
        let r1 = Stream::new(7, 1, Role::Noise);
        assert_ne!(s.at(0).uniform(), r1.at(0).uniform());
    }

    #[test]
    fn uniforms_are_open_and_roughly_uniform() {
        let mut r = StepRng::from_seed(1, 0);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = r.uniform();
            assert!(u > 0.0 && u < 1.0);
            sum += u;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn quantile_roundtrip() {
        for &u in &[1e-10, 0.01, 0.3, 0.5, 0.77, 0.999] {
            let x = std_normal_quantile(u);
            assert!((std_normal_cdf(x) - u).abs() < 1e-12 * u.max(1e-3));
        }
        assert_eq!(std_normal_quantile(0.5), 0.0);
    }
}
