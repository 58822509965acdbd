//! Follow-the-perturbed-leader for prediction with expert advice when
//! one-step losses are unbounded.
//!
//! The learner (PROT) scales its exponential perturbations by the *volume*
//! of the game, `v_t = v_0 + sum_j max_i |s^i_j|`, instead of by time. The
//! crate also carries the infeasible twin used in the analysis (IFPL), the
//! two-expert adversary that defeats every learner when steps stay large
//! relative to the volume, the regret-bound evaluators, and a zero-sum
//! volatility-trading game on fractional Brownian price paths.
//!
//! ```
//! use prot_fpl::{choose_a, GammaSchedule, LossMatrix, LossMode, PreparedGame, Regime, RngSpec, ScheduleParams};
//!
//! let losses = LossMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])?;
//! let a = choose_a(1.0, LossMode::General)?;
//! let params = ScheduleParams::new(a, 2, GammaSchedule::Power { delta: 1.0 }, 0.0, LossMode::General)?;
//! let game = PreparedGame::new(&losses, &params)?;
//! let exact: f64 = game.prot_expected_losses().iter().sum();
//! let sampled = game.prot_total(&mut RngSpec::new(7, 0).rng(), Regime::PerStep);
//! assert!(exact >= game.best_expert_loss());
//! assert!((0.0..=3.0).contains(&sampled));
//! # Ok::<(), prot_fpl::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod engine;
pub mod error;
pub mod game;
pub mod games;
pub mod harness;
pub mod perturbation;
pub mod schedule;
pub mod stats;
pub mod volatility;

pub use engine::{
    ifpl_run, probability_ratio_check, prot_run, prot_select, selection_probabilities_exact,
    selection_probabilities_mc, FixedPerturbation, PerturbationSource, Perturber, PreparedGame, RunRecord,
};
pub use error::{Error, Result};
pub use game::{check_fluctuation_bound, scaled_fluctuation, update_state, FlucSeries, GameState, LossMatrix};
pub use perturbation::{Regime, RngSpec};
pub use schedule::{choose_a, GammaSchedule, LearningRate, LossMode, ScheduleParams};
