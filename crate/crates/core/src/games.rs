//! Synthetic oblivious games.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::LossMatrix;
use crate::perturbation::RngSpec;
use crate::schedule::{GammaSchedule, LossMode};

/// Stream id reserved for game generation so it never overlaps a learner's stream.
const GAME_STREAM: u64 = u64::MAX;

/// A named generator with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Random losses whose step maxima keep `fluc(t) <= gamma(t)` from `v_0 = 0`.
    FlucScaled {
        num_experts: usize,
        horizon: usize,
        #[serde(default)]
        seed: u64,
        /// Smallest fraction of the allowed volume increment used at a step.
        #[serde(default = "default_min_fill")]
        min_fill: f64,
    },
    /// `|s^i_t| <= 1` with `max_i |s^i_t| = 1`, so `v_t = v_0 + t`.
    Bounded {
        num_experts: usize,
        horizon: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Experts alternate signs with magnitude `t^exponent` at every step.
    Envelope {
        num_experts: usize,
        horizon: usize,
        exponent: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_min_fill() -> f64 {
    0.25
}

impl GeneratorSpec {
    pub fn num_experts(&self) -> usize {
        match *self {
            GeneratorSpec::FlucScaled { num_experts, .. }
            | GeneratorSpec::Bounded { num_experts, .. }
            | GeneratorSpec::Envelope { num_experts, .. } => num_experts,
        }
    }

    pub fn horizon(&self) -> usize {
        match *self {
            GeneratorSpec::FlucScaled { horizon, .. }
            | GeneratorSpec::Bounded { horizon, .. }
            | GeneratorSpec::Envelope { horizon, .. } => horizon,
        }
    }

    pub fn generate(&self, gamma: &GammaSchedule, mode: LossMode) -> Result<LossMatrix> {
        match *self {
            GeneratorSpec::FlucScaled { num_experts, horizon, seed, min_fill } => {
                fluc_scaled_game(num_experts, horizon, gamma, mode, seed, min_fill)
            }
            GeneratorSpec::Bounded { num_experts, horizon, seed } => bounded_game(num_experts, horizon, mode, seed),
            GeneratorSpec::Envelope { num_experts, horizon, exponent, seed } => {
                envelope_game(num_experts, horizon, exponent, mode, seed)
            }
        }
    }
}

fn check_shape(num_experts: usize, horizon: usize) -> Result<()> {
    if num_experts == 0 {
        return Err(Error::validation("a game needs at least one expert"));
    }
    if horizon == 0 {
        return Err(Error::validation("a game needs at least one step"));
    }
    Ok(())
}

fn raw_loss<R: Rng>(rng: &mut R, mode: LossMode) -> f64 {
    match mode {
        LossMode::General => rng.gen_range(-1.0..=1.0),
        LossMode::Nonnegative => rng.gen_range(0.0..=1.0),
    }
}

/// Fills one row with random losses and rescales it so `max_i |s^i_t| = target`.
fn scaled_row<R: Rng>(rng: &mut R, row: &mut [f64], mode: LossMode, target: f64) {
    for x in row.iter_mut() {
        *x = raw_loss(rng, mode);
    }
    let k = rng.gen_range(0..row.len());
    row[k] = match mode {
        LossMode::Nonnegative => 1.0,
        LossMode::General => {
            if rng.gen::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    };
    for x in row.iter_mut() {
        *x *= target;
    }
}

/// Random game started from `v_0 = 0`. Step 1 has `max_i |s^i_1| = 1`; later
/// steps draw `Delta v_t` uniformly between `min_fill` and 1 times the largest
/// increment allowed by `fluc(t) <= gamma(t)`, i.e. `gamma v_{t-1} / (1 - gamma)`.
pub fn fluc_scaled_game(
    num_experts: usize,
    horizon: usize,
    gamma: &GammaSchedule,
    mode: LossMode,
    seed: u64,
    min_fill: f64,
) -> Result<LossMatrix> {
    check_shape(num_experts, horizon)?;
    gamma.validate()?;
    if !(min_fill > 0.0 && min_fill <= 1.0) {
        return Err(Error::validation(format!("min_fill must lie in (0, 1], got {min_fill}")));
    }
    let mut rng = RngSpec::new(seed, GAME_STREAM).rng();
    let mut values = vec![0.0; num_experts * horizon];
    let mut v = 0.0;
    for (k, row) in values.chunks_exact_mut(num_experts).enumerate() {
        let t = k + 1;
        let g = gamma.eval(t);
        let target = if t == 1 {
            1.0
        } else if g >= 1.0 {
            rng.gen_range(min_fill..=1.0) * v
        } else {
            rng.gen_range(min_fill..=1.0) * g * v / (1.0 - g)
        };
        scaled_row(&mut rng, row, mode, target);
        v += target;
    }
    LossMatrix::new(num_experts, values)
}

/// Bounded-loss game with `max_i |s^i_t| = 1` at every step.
pub fn bounded_game(num_experts: usize, horizon: usize, mode: LossMode, seed: u64) -> Result<LossMatrix> {
    check_shape(num_experts, horizon)?;
    let mut rng = RngSpec::new(seed, GAME_STREAM).rng();
    let mut values = vec![0.0; num_experts * horizon];
    for row in values.chunks_exact_mut(num_experts) {
        scaled_row(&mut rng, row, mode, 1.0);
    }
    LossMatrix::new(num_experts, values)
}

/// Every expert has `|s^i_t| = t^exponent` (general mode) or loses `t^exponent`
/// / 0 (nonnegative mode). Expert signs alternate from step to step, with a
/// random phase per expert, so the leader keeps switching.
pub fn envelope_game(
    num_experts: usize,
    horizon: usize,
    exponent: f64,
    mode: LossMode,
    seed: u64,
) -> Result<LossMatrix> {
    check_shape(num_experts, horizon)?;
    if !exponent.is_finite() {
        return Err(Error::validation("envelope exponent must be finite"));
    }
    let mut rng = RngSpec::new(seed, GAME_STREAM).rng();
    let phase: Vec<usize> = (0..num_experts).map(|i| if i < 2 { i } else { rng.gen_range(0..2) }).collect();
    let mut values = Vec::with_capacity(num_experts * horizon);
    for t in 1..=horizon {
        let m = (t as f64).powf(exponent);
        for p in &phase {
            let up = (t + p) % 2 == 1;
            values.push(match (mode, up) {
                (_, true) => m,
                (LossMode::General, false) => -m,
                (LossMode::Nonnegative, false) => 0.0,
            });
        }
    }
    LossMatrix::new(num_experts, values)
}
