//! Seeded exponential perturbations.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PerturbRng = ChaCha8Rng;

/// A `(seed, stream)` pair; equal specs give bit-identical streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> PerturbRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// When perturbations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// One vector drawn before step 1 and reused at every step.
    Once,
    /// A fresh vector at every step.
    #[default]
    PerStep,
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "once" => Ok(Regime::Once),
            "per-step" | "per_step" => Ok(Regime::PerStep),
            other => Err(Error::validation(format!("unknown regime {other:?}, expected once|per-step"))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Once => "once",
            Regime::PerStep => "per-step",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationVector {
    xi: Vec<f64>,
}

impl PerturbationVector {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if let Some(x) = xi.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::validation(format!("perturbations must be finite and nonnegative, got {x}")));
        }
        Ok(Self { xi })
    }

    pub fn zeros(n: usize) -> Self {
        Self { xi: vec![0.0; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.xi
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.xi.iter().copied().fold(0.0, f64::max)
    }
}

/// Inverse CDF of Exp(1): `-ln(1 - u)` for `u` in [0, 1).
#[inline]
pub fn exp_from_uniform(u: f64) -> f64 {
    -(-u).ln_1p()
}

#[inline]
pub fn draw_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    exp_from_uniform(rng.gen::<f64>())
}

/// Overwrites `out` with i.i.d. Exp(1) draws.
pub fn fill_exponential<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for x in out {
        *x = draw_exponential(rng);
    }
}

pub fn sample_exponential<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PerturbationVector {
    assert!(n >= 1, "need at least one perturbation");
    let mut xi = vec![0.0; n];
    fill_exponential(rng, &mut xi);
    PerturbationVector { xi }
}

/// Union bound `P{max_i xi_i >= a} <= N e^{-a}`.
pub fn max_tail_bound(num_experts: usize, a: f64) -> f64 {
    assert!(a >= 0.0, "tail threshold must be nonnegative");
    num_experts as f64 * (-a).exp()
}

/// `E max_i xi_i <= 1 + ln N`.
pub fn expected_max_bound(num_experts: usize) -> f64 {
    assert!(num_experts >= 1);
    1.0 + (num_experts as f64).ln()
}

/// `H_N = sum_{k<=N} 1/k`, the exact mean of the maximum of `N` Exp(1) draws.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cdf_points() {
        assert_eq!(exp_from_uniform(0.0), 0.0);
        let u = 1.0 - (-1.0f64).exp();
        assert!((exp_from_uniform(u) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reproducible_streams() {
        let spec = RngSpec::new(42, 7);
        let a = sample_exponential(64, &mut spec.rng());
        let b = sample_exponential(64, &mut spec.rng());
        assert_eq!(a, b);
        let c = sample_exponential(64, &mut RngSpec::new(42, 8).rng());
        assert_ne!(a, c);
        assert!(a.as_slice().iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn empirical_mean_is_one() {
        let mut rng = RngSpec::new(1, 0).rng();
        let n = 1_000_000;
        let mean = (0..n).map(|_| draw_exponential(&mut rng)).sum::<f64>() / n as f64;
        assert!((0.997..=1.003).contains(&mean), "mean = {mean}");
    }

    #[test]
    fn tail_bound_examples() {
        assert_eq!(max_tail_bound(1, 0.0), 1.0);
        assert!((max_tail_bound(2, 2f64.ln()) - 1.0).abs() < 1e-15);

        let n = 10;
        let trials = 1_000_000;
        let bound = max_tail_bound(n, 5.0);
        let mut rng = RngSpec::new(3, 0).rng();
        let mut xi = vec![0.0; n];
        let mut hits = 0usize;
        for _ in 0..trials {
            fill_exponential(&mut rng, &mut xi);
            if xi.iter().copied().fold(0.0, f64::max) >= 5.0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        let se = (bound * (1.0 - bound) / trials as f64).sqrt();
        assert!(freq <= bound + 3.0 * se, "freq = {freq}, bound = {bound}");
        assert!((bound - 0.0674).abs() < 1e-4);
    }

    #[test]
    fn expected_max_examples() {
        assert_eq!(expected_max_bound(1), 1.0);
        assert_eq!(harmonic(1), 1.0);
        assert!((expected_max_bound(2) - 1.693).abs() < 1e-3);
        assert_eq!(harmonic(2), 1.5);
        assert!((expected_max_bound(1000) - 7.908).abs() < 1e-3);
        assert!((harmonic(1000) - 7.485).abs() < 1e-3);
        for n in 1..2000 {
            assert!(harmonic(n) <= expected_max_bound(n) + 1e-15);
        }
    }

    #[test]
    fn memoryless_spot_check() {
        let mut rng = RngSpec::new(11, 0).rng();
        let (a, b) = (0.7, 0.9);
        let n = 2_000_000;
        let (mut over_a, mut over_ab) = (0usize, 0usize);
        for _ in 0..n {
            let x = draw_exponential(&mut rng);
            over_a += (x > a) as usize;
            over_ab += (x > a + b) as usize;
        }
        let p_a = over_a as f64 / n as f64;
        let p_ab = over_ab as f64 / n as f64;
        let expected = (-b).exp() * p_a;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((p_ab - expected).abs() < 4.0 * se, "{p_ab} vs {expected}");
    }

    #[test]
    fn regime_parsing() {
        assert_eq!("once".parse::<Regime>().unwrap(), Regime::Once);
        assert_eq!("per-step".parse::<Regime>().unwrap(), Regime::PerStep);
        assert!("sometimes".parse::<Regime>().is_err());
        assert_eq!(Regime::default(), Regime::PerStep);
    }
}
