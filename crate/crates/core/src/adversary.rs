//! Two-expert adaptive adversary that defeats any probabilistic learner
//! whose game keeps a scaled fluctuation bounded away from zero.
//!
//! At every step the adversary reads the learner's probability of
//! following expert 1 and puts a loss of `M_t = 4 v_{t-1} / eps` on the
//! more likely expert. The volume then grows geometrically and
//! `fluc(t) = 1 / (1 + eps / 4)` at every step.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::selection_probabilities_exact;
use crate::error::{Error, Result};
use crate::schedule::ScheduleParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub eps: f64,
    pub v0: f64,
    pub horizon: usize,
}

impl AdversaryConfig {
    pub fn new(eps: f64, v0: f64, horizon: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::validation(format!("adversary eps must lie in (0, 1), got {eps}")));
        }
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(Error::validation(format!("adversary v0 must be positive, got {v0}")));
        }
        Ok(Self { eps, v0, horizon })
    }

    /// `1 / (1 + eps / 4)`, the scaled fluctuation at every step.
    pub fn fluctuation(&self) -> f64 {
        1.0 / (1.0 + self.eps / 4.0)
    }

    /// `(2/eps - 1) / (1 + 4/eps)`, the normalized regret guaranteed by the construction.
    pub fn regret_floor(&self) -> f64 {
        (2.0 / self.eps - 1.0) / (1.0 + 4.0 / self.eps)
    }

    /// `(1 - eps) / 2`.
    pub fn stated_bound(&self) -> f64 {
        0.5 * (1.0 - self.eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdversaryStep {
    pub s1: f64,
    pub s2: f64,
    pub m: f64,
}

/// Losses for one step given `v_{t-1}` and the learner's `P{I_t = 1}`.
/// The whole loss goes to the likelier expert; the tie `p1 = 1/2` loads expert 1.
pub fn prop1_step(eps: f64, v_prev: f64, p1: f64) -> Result<AdversaryStep> {
    if !(v_prev > 0.0) {
        return Err(Error::validation(format!("previous volume must be positive, got {v_prev}")));
    }
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::validation(format!("P{{I_t = 1}} = {p1} is not a probability")));
    }
    let m = 4.0 * v_prev / eps;
    Ok(if p1 >= 0.5 { AdversaryStep { s1: m, s2: 0.0, m } } else { AdversaryStep { s1: 0.0, s2: m, m } })
}

/// What the learner sees before step `t`.
#[derive(Debug, Clone, Copy)]
pub struct AdversaryView<'a> {
    pub t: usize,
    pub cumulative: [f64; 2],
    pub volume: f64,
    /// One-step losses of steps `1..t`.
    pub losses: &'a [[f64; 2]],
    /// Probabilities the learner reported at steps `1..t`.
    pub reported: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdversaryRow {
    pub t: usize,
    pub m: f64,
    pub s1: f64,
    pub s2: f64,
    pub p1: f64,
    /// `E(s_t) = s1 p1 + s2 (1 - p1)`.
    pub expected_loss: f64,
    pub v: f64,
    pub fluc: f64,
    /// `(E s_{1:t} - min_i s^i_{1:t}) / v_t`.
    pub normalized_regret: f64,
    pub min_expert_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryTrace {
    pub config: AdversaryConfig,
    pub rows: Vec<AdversaryRow>,
}

impl AdversaryTrace {
    /// Writes `t,M_t,s1,s2,p1,E_loss,v,fluc,norm_regret_lb`; the last column is the
    /// normalized expected regret, the quantity bounded below by `(1 - eps)/2`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "M_t", "s1", "s2", "p1", "E_loss", "v", "fluc", "norm_regret_lb"])?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.m.to_string(),
                r.s1.to_string(),
                r.s2.to_string(),
                r.p1.to_string(),
                r.expected_loss.to_string(),
                r.v.to_string(),
                r.fluc.to_string(),
                r.normalized_regret.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Plays the adversary against a learner described by its reported `P{I_t = 1}`.
pub fn prop1_run<F>(mut learner: F, config: &AdversaryConfig) -> Result<AdversaryTrace>
where
    F: FnMut(&AdversaryView<'_>) -> f64,
{
    let mut losses: Vec<[f64; 2]> = Vec::with_capacity(config.horizon);
    let mut reported = Vec::with_capacity(config.horizon);
    let mut rows = Vec::with_capacity(config.horizon);
    let mut cumulative = [0.0; 2];
    let mut volume = config.v0;
    let mut expected_total = 0.0;
    for t in 1..=config.horizon {
        let view = AdversaryView { t, cumulative, volume, losses: &losses, reported: &reported };
        let p1 = learner(&view);
        let step = prop1_step(config.eps, volume, p1)?;
        let expected_loss = step.s1 * p1 + step.s2 * (1.0 - p1);
        expected_total += expected_loss;
        cumulative[0] += step.s1;
        cumulative[1] += step.s2;
        let v = volume + step.m;
        let min_expert_loss = cumulative[0].min(cumulative[1]);
        rows.push(AdversaryRow {
            t,
            m: step.m,
            s1: step.s1,
            s2: step.s2,
            p1,
            expected_loss,
            v,
            fluc: step.m / v,
            normalized_regret: (expected_total - min_expert_loss) / v,
            min_expert_loss,
        });
        losses.push([step.s1, step.s2]);
        reported.push(p1);
        volume = v;
    }
    Ok(AdversaryTrace { config: *config, rows })
}

/// PROT's exact `P{I_t = 1}` as an adversary callback.
pub fn prot_learner(params: &ScheduleParams) -> impl FnMut(&AdversaryView<'_>) -> f64 + '_ {
    move |view| {
        let eps = params.epsilon_t(view.t, view.volume).expect("adversary volumes are positive and finite");
        selection_probabilities_exact(&view.cumulative, eps)[0]
    }
}
