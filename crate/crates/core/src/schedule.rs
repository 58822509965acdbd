//! Learning-rate schedule and regret-bound evaluators.
//!
//! Two constants drive everything here. The FPL/IFPL gap contributes
//! `c1 * gamma^(1 - alpha)` per unit of volume, with `c1 = 2(e^{3/a} - 1)`
//! for general losses and `c1 = e^{2/a} - 1` for nonnegative ones. The IFPL
//! regret contributes `c2 * gamma^alpha` with `c2 = a(1 + ln N)`. The
//! exponent `alpha_t` minimizing their sum gives
//! `mu_t = a * gamma^alpha_t = a * sqrt(c1 * gamma / c2)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-increasing bound `gamma(t)` on the scaled fluctuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSchedule {
    /// `gamma(t) = t^(-delta)`
    Power { delta: f64 },
    /// `gamma(t) = c`
    Constant { c: f64 },
    /// `gamma(t) = values[t - 1]`, holding the last value past the end.
    Table { values: Vec<f64> },
}

impl GammaSchedule {
    pub fn eval(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        match self {
            GammaSchedule::Power { delta } => (t as f64).powf(-delta),
            GammaSchedule::Constant { c } => *c,
            GammaSchedule::Table { values } => values[(t.max(1) - 1).min(values.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GammaSchedule::Power { delta } => {
                if !(delta.is_finite() && *delta > 0.0) {
                    return Err(Error::validation(format!("power schedule needs delta > 0, got {delta}")));
                }
            }
            GammaSchedule::Constant { c } => {
                if !(*c > 0.0 && *c < 1.0) {
                    return Err(Error::validation(format!("constant schedule needs 0 < c < 1, got {c}")));
                }
            }
            GammaSchedule::Table { values } => {
                if values.is_empty() {
                    return Err(Error::validation("gamma table is empty"));
                }
                for (k, &g) in values.iter().enumerate() {
                    if !(g > 0.0 && g <= 1.0) {
                        return Err(Error::validation(format!("gamma({}) = {g} outside (0, 1]", k + 1)));
                    }
                    if k > 0 && g > values[k - 1] {
                        return Err(Error::validation(format!(
                            "gamma table increases at t = {}: {} -> {g}",
                            k + 1,
                            values[k - 1]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Partial sum of `gamma(t)^2` up to `horizon` plus a tail estimate.
    pub fn square_summability(&self, horizon: usize) -> Summability {
        let partial_sum: f64 = (1..=horizon).map(|t| self.eval(t).powi(2)).sum();
        let (converges, tail) = match self {
            GammaSchedule::Power { delta } => {
                let p = 2.0 * delta;
                if p > 1.0 {
                    (true, (horizon as f64).powf(1.0 - p) / (p - 1.0))
                } else {
                    (false, f64::INFINITY)
                }
            }
            // A constant or a held table value never decays.
            GammaSchedule::Constant { .. } | GammaSchedule::Table { .. } => (false, f64::INFINITY),
        };
        Summability { partial_sum, tail_estimate: tail, converges }
    }
}

impl fmt::Display for GammaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaSchedule::Power { delta } => write!(f, "power:{delta}"),
            GammaSchedule::Constant { c } => write!(f, "const:{c}"),
            GammaSchedule::Table { values } => write!(f, "table[{}]", values.len()),
        }
    }
}

impl FromStr for GammaSchedule {
    type Err = Error;

    /// Parses `power:DELTA` or `const:C`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::validation(format!("expected power:DELTA or const:C, got {s:?}")))?;
        let x: f64 =
            value.trim().parse().map_err(|_| Error::validation(format!("cannot parse {value:?} as a real")))?;
        let g = match kind.trim() {
            "power" => GammaSchedule::Power { delta: x },
            "const" | "constant" => GammaSchedule::Constant { c: x },
            other => return Err(Error::validation(format!("unknown gamma kind {other:?}"))),
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summability {
    pub partial_sum: f64,
    pub tail_estimate: f64,
    pub converges: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    General,
    Nonnegative,
}

impl LossMode {
    /// Limit of the constant function minimized by [`choose_a`]: 6 or 2.
    pub fn limit_constant(self) -> f64 {
        match self {
            LossMode::General => 6.0,
            LossMode::Nonnegative => 2.0,
        }
    }

    /// `2a(e^{3/a} - 1)` or `a(e^{2/a} - 1)`; decreasing in `a`.
    pub fn bound_constant(self, a: f64) -> f64 {
        match self {
            LossMode::General => 2.0 * a * (3.0 / a).exp_m1(),
            LossMode::Nonnegative => a * (2.0 / a).exp_m1(),
        }
    }

    /// Exponent numerator in the FPL/IFPL probability ratio: 3 or 2.
    pub fn ratio_numerator(self) -> f64 {
        match self {
            LossMode::General => 3.0,
            LossMode::Nonnegative => 2.0,
        }
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(LossMode::General),
            "nonnegative" => Ok(LossMode::Nonnegative),
            other => Err(Error::validation(format!("unknown loss mode {other:?}"))),
        }
    }
}

/// Learning rate for one step. `Infinite` means pure follow-the-leader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Finite(f64),
    Infinite,
}

impl LearningRate {
    /// `1 / eps`, the multiplier applied to perturbations.
    pub fn perturbation_scale(self) -> f64 {
        match self {
            LearningRate::Finite(eps) => 1.0 / eps,
            LearningRate::Infinite => 0.0,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            LearningRate::Finite(eps) => eps,
            LearningRate::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, LearningRate::Infinite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    a: f64,
    num_experts: usize,
    gamma: GammaSchedule,
    v0: f64,
    loss_mode: LossMode,
}

impl ScheduleParams {
    pub fn new(a: f64, num_experts: usize, gamma: GammaSchedule, v0: f64, loss_mode: LossMode) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::validation(format!("a must be a positive real, got {a}")));
        }
        if num_experts == 0 {
            return Err(Error::validation("at least one expert is required"));
        }
        if !(v0.is_finite() && v0 >= 0.0) {
            return Err(Error::validation(format!("v0 must be nonnegative, got {v0}")));
        }
        gamma.validate()?;
        Ok(Self { a, num_experts, gamma, v0, loss_mode })
    }

    /// Like [`ScheduleParams::new`] but also requires `gamma(1) < min{A, 1/A}`,
    /// so that `alpha_t` lies in `(0, 1)` at every step.
    pub fn new_strict(a: f64, num_experts: usize, gamma: GammaSchedule, v0: f64, loss_mode: LossMode) -> Result<Self> {
        let p = Self::new(a, num_experts, gamma, v0, loss_mode)?;
        p.validate_gamma()?;
        Ok(p)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn gamma(&self) -> &GammaSchedule {
        &self.gamma
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn loss_mode(&self) -> LossMode {
        self.loss_mode
    }

    pub fn with_v0(mut self, v0: f64) -> Result<Self> {
        if !(v0.is_finite() && v0 >= 0.0) {
            return Err(Error::validation(format!("v0 must be nonnegative, got {v0}")));
        }
        self.v0 = v0;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: GammaSchedule) -> Result<Self> {
        gamma.validate()?;
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_loss_mode(mut self, mode: LossMode) -> Self {
        self.loss_mode = mode;
        self
    }

    pub fn ln_experts(&self) -> f64 {
        (self.num_experts as f64).ln()
    }

    /// Coefficient of `gamma^(1 - alpha)` in the FPL/IFPL gap.
    pub fn gap_constant(&self) -> f64 {
        match self.loss_mode {
            LossMode::General => 2.0 * (3.0 / self.a).exp_m1(),
            LossMode::Nonnegative => (2.0 / self.a).exp_m1(),
        }
    }

    /// Coefficient of `gamma^alpha` in the IFPL regret, `a(1 + ln N)`.
    pub fn ifpl_constant(&self) -> f64 {
        self.a * (1.0 + self.ln_experts())
    }

    /// `A`; for general losses `2(e^{3/a} - 1) / (a(1 + ln N))`.
    pub fn big_a(&self) -> f64 {
        self.gap_constant() / self.ifpl_constant()
    }

    /// `min{A, 1/A}`: gamma must stay strictly below it for `alpha_t` in (0, 1).
    pub fn alpha_limit(&self) -> f64 {
        let a = self.big_a();
        a.min(1.0 / a)
    }

    fn check_alpha_domain(&self, t: usize) -> Result<f64> {
        let g = self.gamma.eval(t);
        let limit = self.alpha_limit();
        if g >= limit {
            return Err(Error::ScheduleInvalid {
                step: t,
                reason: format!("gamma({t}) = {g} is not below min(A, 1/A) = {limit}"),
            });
        }
        Ok(g)
    }

    /// Checks `gamma(1) < min{A, 1/A}`; gamma is non-increasing so this covers every step.
    pub fn validate_gamma(&self) -> Result<()> {
        self.check_alpha_domain(1).map(|_| ())
    }

    /// First step at which `alpha_t` is inside (0, 1), scanning up to `horizon`.
    pub fn first_valid_step(&self, horizon: usize) -> Option<usize> {
        (1..=horizon).find(|&t| self.gamma.eval(t) < self.alpha_limit())
    }

    pub fn alpha_t(&self, t: usize) -> Result<f64> {
        let g = self.check_alpha_domain(t)?;
        let ln_ratio = (self.ifpl_constant() / self.gap_constant()).ln();
        Ok(0.5 * (1.0 - ln_ratio / g.ln()))
    }

    /// `a * sqrt(c1 * gamma(t) / c2)`: defined for every `gamma(t)` in (0, 1].
    pub fn mu_closed_form(&self, t: usize) -> f64 {
        (self.a * self.gap_constant() / (1.0 + self.ln_experts())).sqrt() * self.gamma.eval(t).sqrt()
    }

    /// `a * gamma(t)^alpha_t`.
    pub fn mu_power_form(&self, t: usize) -> Result<f64> {
        let alpha = self.alpha_t(t)?;
        Ok(self.a * self.gamma.eval(t).powf(alpha))
    }

    pub fn mu_t(&self, t: usize) -> Result<f64> {
        let power = self.mu_power_form(t)?;
        let closed = self.mu_closed_form(t);
        debug_assert!(((power - closed) / closed).abs() < 1e-10, "mu_t forms disagree at t = {t}: {power} vs {closed}");
        Ok(closed)
    }

    /// `eps_t = 1 / (mu_t v_{t-1})`; infinite while the volume is still zero.
    pub fn epsilon_t(&self, t: usize, v_prev: f64) -> Result<LearningRate> {
        rate_from(self.mu_closed_form(t), v_prev)
    }

    /// `eps'_t = 1 / (mu_t v_t)`, the end-of-step rate used by IFPL.
    pub fn epsilon_prime_t(&self, t: usize, v_t: f64) -> Result<LearningRate> {
        rate_from(self.mu_closed_form(t), v_t)
    }

    /// Per-step cost `c1 gamma^(1 - alpha) + c2 gamma^alpha` for an arbitrary exponent.
    pub fn step_term(&self, alpha: f64, gamma: f64) -> f64 {
        self.gap_constant() * gamma.powf(1.0 - alpha) + self.ifpl_constant() * gamma.powf(alpha)
    }

    /// `sum_t c1 gamma(t)^(1 - alpha_t) dv_t`, written through `mu_t` so it
    /// stays defined where `alpha_t` leaves (0, 1).
    pub fn fpl_ifpl_gap_bound(&self, delta_v: &[f64]) -> f64 {
        delta_v
            .iter()
            .enumerate()
            .map(|(k, dv)| {
                let t = k + 1;
                self.gap_constant() * self.a * self.gamma.eval(t) / self.mu_closed_form(t) * dv
            })
            .sum()
    }

    /// `(1 + ln N) sum_t mu_t dv_t`, i.e. `a(1 + ln N) sum_t gamma^alpha_t dv_t`.
    pub fn ifpl_regret_bound(&self, delta_v: &[f64]) -> f64 {
        let k = 1.0 + self.ln_experts();
        delta_v.iter().enumerate().map(|(i, dv)| k * self.mu_closed_form(i + 1) * dv).sum()
    }
}

fn rate_from(mu: f64, v: f64) -> Result<LearningRate> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::validation(format!("volume must be a finite nonnegative real, got {v}")));
    }
    if v == 0.0 {
        Ok(LearningRate::Infinite)
    } else {
        Ok(LearningRate::Finite(1.0 / (mu * v)))
    }
}

/// Smallest `a` (to bisection precision) with `f(a) < limit + target_eps`,
/// where `f` is [`LossMode::bound_constant`].
pub fn choose_a(target_eps: f64, mode: LossMode) -> Result<f64> {
    if !(target_eps.is_finite() && target_eps > 0.0) {
        return Err(Error::validation(format!("target epsilon must be positive, got {target_eps}")));
    }
    let target = mode.limit_constant() + target_eps;
    let f = |a: f64| mode.bound_constant(a);
    let mut lo = 3.0;
    if f(lo) < target {
        return Ok(lo);
    }
    let mut hi = 1e6;
    while f(hi) >= target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::validation(format!("target epsilon {target_eps} is below f64 resolution")));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn bound_prefactor(num_experts: usize, target_eps: f64, mode: LossMode) -> f64 {
    2.0 * ((mode.limit_constant() + target_eps) * (1.0 + (num_experts as f64).ln())).sqrt()
}

/// `2 sqrt((6 + eps)(1 + ln N)) sum_t gamma(t)^(1/2) dv_t`, with `2 + eps`
/// in nonnegative mode.
pub fn regret_bound(params: &ScheduleParams, delta_v: &[f64], target_eps: f64) -> f64 {
    let sum: f64 = delta_v.iter().enumerate().map(|(k, dv)| params.gamma.eval(k + 1).sqrt() * dv).sum();
    bound_prefactor(params.num_experts, target_eps, params.loss_mode) * sum
}

/// `sum_t (c1 gamma^(1 - alpha_t) + c2 gamma^alpha_t) dv_t` with the optimal `alpha_t`.
pub fn general_bound(params: &ScheduleParams, delta_v: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (k, dv) in delta_v.iter().enumerate() {
        let t = k + 1;
        let alpha = params.alpha_t(t)?;
        total += params.step_term(alpha, params.gamma.eval(t)) * dv;
    }
    Ok(total)
}

/// `2 sqrt(c1 c2) sum_t gamma(t)^(1/2) dv_t`, the closed form of [`general_bound`].
pub fn general_bound_closed(params: &ScheduleParams, delta_v: &[f64]) -> f64 {
    let k = 2.0 * (params.gap_constant() * params.ifpl_constant()).sqrt();
    k * delta_v.iter().enumerate().map(|(i, dv)| params.gamma.eval(i + 1).sqrt() * dv).sum::<f64>()
}

/// `2 sqrt((6 + eps)(1 + ln N)) T^(1 - delta/2 + alpha)` for polynomially growing losses.
pub fn poly_bound(num_experts: usize, horizon: usize, alpha: f64, delta: f64, target_eps: f64) -> f64 {
    bound_prefactor(num_experts, target_eps, LossMode::General) * (horizon as f64).powf(1.0 - 0.5 * delta + alpha)
}

/// Serializable schedule description; either `a` or `target_eps` fixes `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_eps: Option<f64>,
    #[serde(rename = "N", alias = "num_experts", default, skip_serializing_if = "Option::is_none")]
    pub num_experts: Option<usize>,
    pub gamma: GammaSchedule,
    #[serde(default)]
    pub v0: f64,
    #[serde(default)]
    pub loss_mode: LossMode,
}

impl ScheduleConfig {
    /// Target epsilon used for bound reporting; defaults to 1.
    pub fn effective_target_eps(&self) -> f64 {
        self.target_eps.unwrap_or(1.0)
    }

    /// Resolves `a` (directly or from `target_eps`) and validates.
    pub fn resolve(&self, num_experts: usize) -> Result<ScheduleParams> {
        if let Some(n) = self.num_experts {
            if n != num_experts {
                return Err(Error::LengthMismatch { expected: n, got: num_experts });
            }
        }
        let a = match (self.a, self.target_eps) {
            (Some(a), _) => a,
            (None, Some(eps)) => choose_a(eps, self.loss_mode)?,
            (None, None) => choose_a(1.0, self.loss_mode)?,
        };
        ScheduleParams::new(a, num_experts, self.gamma.clone(), self.v0, self.loss_mode)
    }
}
