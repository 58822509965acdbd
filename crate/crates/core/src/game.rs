//! Loss data, cumulative bookkeeping, volume and scaled fluctuation.
//!
//! The volume of a game is `v_t = v_0 + sum_{j<=t} max_i |s^i_j|`; its
//! increment `dv_t` dominates every one-step loss in absolute value, and
//! `fluc(t) = dv_t / v_t` measures how large the current step is relative
//! to everything played so far.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::GammaSchedule;

/// Expert one-step losses, one row per time step, one column per expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    values: Vec<f64>,
    num_experts: usize,
    num_steps: usize,
}

impl LossMatrix {
    pub fn new(num_experts: usize, values: Vec<f64>) -> Result<Self> {
        if num_experts == 0 {
            return Err(Error::validation("a game needs at least one expert"));
        }
        if !values.len().is_multiple_of(num_experts) {
            return Err(Error::validation(format!(
                "{} values do not fill rows of {} experts",
                values.len(),
                num_experts
            )));
        }
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("step {}, expert {}", k / num_experts + 1, k % num_experts + 1),
                    value: v,
                });
            }
        }
        let num_steps = values.len() / num_experts;
        Ok(Self { values, num_experts, num_steps })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let num_experts = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::validation("cannot infer the number of experts from zero rows"))?;
        let mut values = Vec::with_capacity(rows.len() * num_experts);
        for row in rows {
            let row = row.as_ref();
            if row.len() != num_experts {
                return Err(Error::LengthMismatch { expected: num_experts, got: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::new(num_experts, values)
    }

    /// Builds a matrix from one loss sequence per expert.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let num_experts = columns.len();
        if num_experts == 0 {
            return Err(Error::validation("a game needs at least one expert"));
        }
        let num_steps = columns[0].as_ref().len();
        for c in columns {
            if c.as_ref().len() != num_steps {
                return Err(Error::LengthMismatch { expected: num_steps, got: c.as_ref().len() });
            }
        }
        let mut values = Vec::with_capacity(num_steps * num_experts);
        for t in 0..num_steps {
            values.extend(columns.iter().map(|c| c.as_ref()[t]));
        }
        Self::new(num_experts, values)
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    /// Losses at step `t`, 1-based.
    pub fn step(&self, t: usize) -> &[f64] {
        assert!(t >= 1 && t <= self.num_steps, "step {t} out of range 1..={}", self.num_steps);
        let start = (t - 1) * self.num_experts;
        &self.values[start..start + self.num_experts]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.num_experts)
    }

    /// `max_i |s^i_t|` for every step.
    pub fn step_maxima(&self) -> Vec<f64> {
        self.rows().map(max_abs).collect()
    }

    /// `v_0, v_1, ..., v_T`.
    pub fn volumes(&self, v0: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_steps + 1);
        let mut v = v0;
        out.push(v);
        for row in self.rows() {
            v += max_abs(row);
            out.push(v);
        }
        out
    }

    /// Cumulative loss of every expert after the last step.
    pub fn totals(&self) -> Vec<f64> {
        let mut cum = vec![0.0; self.num_experts];
        for row in self.rows() {
            for (c, s) in cum.iter_mut().zip(row) {
                *c += s;
            }
        }
        cum
    }

    pub fn best_expert_loss(&self) -> f64 {
        self.totals().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn fluctuations(&self, v0: f64) -> FlucSeries {
        let vols = self.volumes(v0);
        let values = vols
            .windows(2)
            .map(|w| {
                let dv = w[1] - w[0];
                if w[1] == 0.0 {
                    0.0
                } else {
                    (dv / w[1]).min(1.0)
                }
            })
            .collect();
        FlucSeries { values }
    }

    /// Reads `expert_1,...,expert_N` headed CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let num_experts = rdr.headers()?.len();
        let mut values = Vec::new();
        for (k, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != num_experts {
                return Err(Error::LengthMismatch { expected: num_experts, got: record.len() });
            }
            for field in record.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::validation(format!("row {}: cannot parse {field:?} as a real", k + 1)))?;
                values.push(v);
            }
        }
        Self::new(num_experts, values)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((1..=self.num_experts).map(|i| format!("expert_{i}")))?;
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Evolving quantities of a game after `step` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    step: usize,
    cumulative: Vec<f64>,
    volume: f64,
    v0: f64,
}

impl GameState {
    pub fn new(num_experts: usize, v0: f64) -> Result<Self> {
        if num_experts == 0 {
            return Err(Error::validation("a game needs at least one expert"));
        }
        if !(v0.is_finite() && v0 >= 0.0) {
            return Err(Error::validation(format!("v0 must be a finite nonnegative real, got {v0}")));
        }
        Ok(Self { step: 0, cumulative: vec![0.0; num_experts], volume: v0, v0 })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn num_experts(&self) -> usize {
        self.cumulative.len()
    }

    /// Applies one step of losses and returns the volume increment.
    pub fn apply(&mut self, losses: &[f64]) -> Result<f64> {
        if losses.len() != self.cumulative.len() {
            return Err(Error::LengthMismatch { expected: self.cumulative.len(), got: losses.len() });
        }
        if let Some((i, &v)) = losses.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { location: format!("step {}, expert {}", self.step + 1, i + 1), value: v });
        }
        let dv = max_abs(losses);
        for (c, s) in self.cumulative.iter_mut().zip(losses) {
            *c += s;
        }
        self.volume += dv;
        self.step += 1;
        Ok(dv)
    }
}

/// Returns the state after one more step of `losses`.
pub fn update_state(state: &GameState, losses: &[f64]) -> Result<GameState> {
    let mut next = state.clone();
    next.apply(losses)?;
    Ok(next)
}

/// `delta_v / v`, with `0/0 = 0`.
pub fn scaled_fluctuation(delta_v: f64, v: f64) -> Result<f64> {
    if !(delta_v.is_finite() && v.is_finite()) || delta_v < 0.0 || v < 0.0 {
        return Err(Error::validation(format!(
            "scaled fluctuation needs finite nonnegative inputs, got ({delta_v}, {v})"
        )));
    }
    if v == 0.0 {
        return if delta_v == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::validation(format!("increment {delta_v} exceeds zero volume")))
        };
    }
    if delta_v > v {
        return Err(Error::validation(format!("increment {delta_v} exceeds volume {v}")));
    }
    Ok(delta_v / v)
}

/// Per-step scaled fluctuations, steps 1..T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlucSeries {
    values: Vec<f64>,
}

impl FlucSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((t, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::validation(format!("fluc({}) = {v} is outside [0, 1]", t + 1)));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlucCheck {
    pub holds: bool,
    pub first_violation: Option<usize>,
}

/// Checks `fluc(t) <= gamma(t)` for every step; reports the least violating `t`.
pub fn check_fluctuation_bound(fluc: &FlucSeries, gamma: &GammaSchedule) -> FlucCheck {
    let first_violation = fluc.values.iter().enumerate().find(|(k, &f)| f > gamma.eval(k + 1)).map(|(k, _)| k + 1);
    FlucCheck { holds: first_violation.is_none(), first_violation }
}
