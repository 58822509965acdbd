//! PROT and IFPL decision rules, game loops, and selection probabilities.
//!
//! PROT picks `argmin_i { s^i_{1:t-1} - xi^i / eps_t }` with
//! `eps_t = 1 / (mu_t v_{t-1})`. IFPL is its analysis twin: it sees the
//! current step's losses and uses `eps'_t = 1 / (mu_t v_t)`.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{max_abs, GameState, LossMatrix};
use crate::perturbation::{fill_exponential, PerturbRng, Regime, RngSpec};
use crate::schedule::{LearningRate, ScheduleParams};

/// Index of the expert minimizing `cumulative[i] - xi[i] / eps`; lowest index wins ties.
pub fn prot_select(cumulative: &[f64], eps: LearningRate, xi: &[f64]) -> usize {
    assert_eq!(cumulative.len(), xi.len(), "cumulative losses and perturbations differ in length");
    select_scaled(cumulative, eps.perturbation_scale(), xi)
}

#[inline]
fn select_scaled(cumulative: &[f64], scale: f64, xi: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (i, (c, x)) in cumulative.iter().zip(xi).enumerate() {
        let score = c - scale * x;
        if score < best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

/// Supplies the perturbation vector used at each step.
pub trait PerturbationSource {
    /// Fills `out` with the perturbations for step `t` (1-based).
    fn fill(&mut self, t: usize, out: &mut [f64]);
}

/// Exp(1) perturbations drawn from a seeded stream.
#[derive(Debug, Clone)]
pub struct Perturber {
    rng: PerturbRng,
    regime: Regime,
    drawn: bool,
}

impl Perturber {
    pub fn new(spec: RngSpec, regime: Regime) -> Self {
        Self::from_rng(spec.rng(), regime)
    }

    pub fn from_rng(rng: PerturbRng, regime: Regime) -> Self {
        Self { rng, regime, drawn: false }
    }
}

impl PerturbationSource for Perturber {
    fn fill(&mut self, _t: usize, out: &mut [f64]) {
        match self.regime {
            Regime::PerStep => fill_exponential(&mut self.rng, out),
            Regime::Once => {
                if !self.drawn {
                    fill_exponential(&mut self.rng, out);
                    self.drawn = true;
                }
            }
        }
    }
}

/// The same vector at every step; useful for degenerate or audited runs.
#[derive(Debug, Clone)]
pub struct FixedPerturbation(pub Vec<f64>);

impl PerturbationSource for FixedPerturbation {
    fn fill(&mut self, _t: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    /// Zero-based index of the followed expert.
    pub chosen: usize,
    pub loss: f64,
    pub cum_loss: f64,
    pub v: f64,
    pub delta_v: f64,
    pub fluc: f64,
    pub mu: f64,
    /// Learning rate in force; infinite while the volume is zero.
    pub eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub steps: Vec<StepRecord>,
    /// `s^i_{1:T}` for every expert.
    pub expert_totals: Vec<f64>,
}

impl RunRecord {
    pub fn total_loss(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_loss)
    }

    pub fn best_expert_loss(&self) -> f64 {
        self.expert_totals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn regret(&self) -> f64 {
        self.total_loss() - self.best_expert_loss()
    }

    /// Writes `t,chosen,loss,cum_loss,v,delta_v,fluc,mu,eps`; `chosen` is 1-based.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "chosen", "loss", "cum_loss", "v", "delta_v", "fluc", "mu", "eps"])?;
        for s in &self.steps {
            w.write_record([
                s.t.to_string(),
                (s.chosen + 1).to_string(),
                s.loss.to_string(),
                s.cum_loss.to_string(),
                s.v.to_string(),
                s.delta_v.to_string(),
                s.fluc.to_string(),
                s.mu.to_string(),
                s.eps.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    Prot,
    Ifpl,
}

/// Everything in a game loop that does not depend on the learner's random
/// choices, computed once for an oblivious loss matrix.
#[derive(Debug, Clone)]
pub struct PreparedGame<'a> {
    losses: &'a LossMatrix,
    /// Row `t` holds `s_{1:t}`, rows `0..=T`.
    cumulative: Vec<f64>,
    volumes: Vec<f64>,
    mu: Vec<f64>,
}

impl<'a> PreparedGame<'a> {
    pub fn new(losses: &'a LossMatrix, params: &ScheduleParams) -> Result<Self> {
        let n = losses.num_experts();
        if params.num_experts() != n {
            return Err(Error::LengthMismatch { expected: params.num_experts(), got: n });
        }
        let horizon = losses.num_steps();
        let mut state = GameState::new(n, params.v0())?;
        let mut cumulative = Vec::with_capacity((horizon + 1) * n);
        let mut volumes = Vec::with_capacity(horizon + 1);
        let mut mu = Vec::with_capacity(horizon);
        cumulative.extend_from_slice(state.cumulative());
        volumes.push(state.volume());
        for t in 1..=horizon {
            let g = params.gamma().eval(t);
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::ScheduleInvalid { step: t, reason: format!("gamma({t}) = {g} outside (0, 1]") });
            }
            mu.push(params.mu_closed_form(t));
            state.apply(losses.step(t))?;
            cumulative.extend_from_slice(state.cumulative());
            volumes.push(state.volume());
        }
        Ok(Self { losses, cumulative, volumes, mu })
    }

    pub fn losses(&self) -> &LossMatrix {
        self.losses
    }

    pub fn num_experts(&self) -> usize {
        self.losses.num_experts()
    }

    pub fn horizon(&self) -> usize {
        self.losses.num_steps()
    }

    /// `s_{1:t}` for `t` in `0..=T`.
    pub fn cumulative(&self, t: usize) -> &[f64] {
        let n = self.num_experts();
        &self.cumulative[t * n..(t + 1) * n]
    }

    /// `v_t` for `t` in `0..=T`.
    pub fn volume(&self, t: usize) -> f64 {
        self.volumes[t]
    }

    pub fn delta_v(&self) -> Vec<f64> {
        self.volumes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn mu(&self, t: usize) -> f64 {
        self.mu[t - 1]
    }

    pub fn best_expert_loss(&self) -> f64 {
        self.cumulative(self.horizon()).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// PROT learning rate at step `t`.
    pub fn prot_rate(&self, t: usize) -> LearningRate {
        rate(self.mu(t), self.volume(t - 1))
    }

    /// IFPL learning rate at step `t`.
    pub fn ifpl_rate(&self, t: usize) -> LearningRate {
        rate(self.mu(t), self.volume(t))
    }

    fn select(&self, rule: Rule, t: usize, xi: &[f64]) -> usize {
        match rule {
            Rule::Prot => select_scaled(self.cumulative(t - 1), self.mu(t) * self.volume(t - 1), xi),
            Rule::Ifpl => select_scaled(self.cumulative(t), self.mu(t) * self.volume(t), xi),
        }
    }

    fn run(&self, rule: Rule, source: &mut dyn PerturbationSource, audit: bool) -> RunRecord {
        let n = self.num_experts();
        let mut xi = vec![0.0; n];
        let mut cum_loss = 0.0;
        let mut steps = Vec::with_capacity(self.horizon());
        for t in 1..=self.horizon() {
            source.fill(t, &mut xi);
            let chosen = self.select(rule, t, &xi);
            let loss = self.losses.step(t)[chosen];
            cum_loss += loss;
            let v = self.volume(t);
            let delta_v = v - self.volume(t - 1);
            let eps = match rule {
                Rule::Prot => self.prot_rate(t),
                Rule::Ifpl => self.ifpl_rate(t),
            };
            steps.push(StepRecord {
                t,
                chosen,
                loss,
                cum_loss,
                v,
                delta_v,
                fluc: if v == 0.0 { 0.0 } else { delta_v / v },
                mu: self.mu(t),
                eps: eps.as_f64(),
                xi: audit.then(|| xi.clone()),
            });
        }
        RunRecord { steps, expert_totals: self.cumulative(self.horizon()).to_vec() }
    }

    pub fn prot_run(&self, source: &mut dyn PerturbationSource) -> RunRecord {
        self.run(Rule::Prot, source, false)
    }

    pub fn ifpl_run(&self, source: &mut dyn PerturbationSource) -> RunRecord {
        self.run(Rule::Ifpl, source, false)
    }

    /// Like [`PreparedGame::prot_run`] but records the perturbations used.
    pub fn prot_run_audited(&self, source: &mut dyn PerturbationSource) -> RunRecord {
        self.run(Rule::Prot, source, true)
    }

    fn sample_total(&self, rule: Rule, rng: &mut PerturbRng, regime: Regime, xi: &mut [f64]) -> f64 {
        let mut total = 0.0;
        if regime == Regime::Once {
            fill_exponential(rng, xi);
        }
        for t in 1..=self.horizon() {
            if regime == Regime::PerStep {
                fill_exponential(rng, xi);
            }
            total += self.losses.step(t)[self.select(rule, t, xi)];
        }
        total
    }

    fn sample_path(&self, rule: Rule, rng: &mut PerturbRng, regime: Regime, out: &mut [f64]) {
        assert_eq!(out.len(), self.horizon(), "path buffer must hold one entry per step");
        let mut xi = vec![0.0; self.num_experts()];
        let mut total = 0.0;
        if regime == Regime::Once {
            fill_exponential(rng, &mut xi);
        }
        for t in 1..=self.horizon() {
            if regime == Regime::PerStep {
                fill_exponential(rng, &mut xi);
            }
            total += self.losses.step(t)[self.select(rule, t, &xi)];
            out[t - 1] = total;
        }
    }

    /// Writes the running PROT loss `s_{1:t}` of one seeded run into `out`.
    pub fn prot_path(&self, rng: &mut PerturbRng, regime: Regime, out: &mut [f64]) {
        self.sample_path(Rule::Prot, rng, regime, out)
    }

    /// Writes the running IFPL loss `r_{1:t}` of one seeded run into `out`.
    pub fn ifpl_path(&self, rng: &mut PerturbRng, regime: Regime, out: &mut [f64]) {
        self.sample_path(Rule::Ifpl, rng, regime, out)
    }

    /// Cumulative PROT loss of one seeded run, without building a trace.
    pub fn prot_total(&self, rng: &mut PerturbRng, regime: Regime) -> f64 {
        let mut xi = vec![0.0; self.num_experts()];
        self.sample_total(Rule::Prot, rng, regime, &mut xi)
    }

    /// Cumulative IFPL loss of one seeded run.
    pub fn ifpl_total(&self, rng: &mut PerturbRng, regime: Regime) -> f64 {
        let mut xi = vec![0.0; self.num_experts()];
        self.sample_total(Rule::Ifpl, rng, regime, &mut xi)
    }

    /// Exact `l_t = E s^{I_t}_t` for every step.
    pub fn prot_expected_losses(&self) -> Vec<f64> {
        (1..=self.horizon())
            .map(|t| {
                let p = selection_probabilities_exact(self.cumulative(t - 1), self.prot_rate(t));
                dot(&p, self.losses.step(t))
            })
            .collect()
    }

    /// Exact `r_t = E s^{J_t}_t` for every step.
    pub fn ifpl_expected_losses(&self) -> Vec<f64> {
        (1..=self.horizon())
            .map(|t| {
                let p = selection_probabilities_exact(self.cumulative(t), self.ifpl_rate(t));
                dot(&p, self.losses.step(t))
            })
            .collect()
    }
}

fn rate(mu: f64, v: f64) -> LearningRate {
    if v == 0.0 {
        LearningRate::Infinite
    } else {
        LearningRate::Finite(1.0 / (mu * v))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs PROT over an oblivious loss matrix.
pub fn prot_run(
    losses: &LossMatrix,
    params: &ScheduleParams,
    source: &mut dyn PerturbationSource,
) -> Result<RunRecord> {
    Ok(PreparedGame::new(losses, params)?.prot_run(source))
}

/// Runs IFPL, the infeasible twin that sees step `t`'s losses before choosing.
pub fn ifpl_run(
    losses: &LossMatrix,
    params: &ScheduleParams,
    source: &mut dyn PerturbationSource,
) -> Result<RunRecord> {
    Ok(PreparedGame::new(losses, params)?.ifpl_run(source))
}

/// `P{argmin_i (s_i - xi_i / eps) = j}` for i.i.d. Exp(1) perturbations.
///
/// With `d_i = eps (s_i - s_j)` the probability is
/// `u0 * int_0^1 prod_{i != j} (1 - b_i w) dw` where `u0 = min(1, e^{min d})`
/// and `b_i = u0 e^{-d_i}` lie in (0, 1]. Up to 12 experts the product is
/// expanded exactly (the inclusion-exclusion sum over subsets, grouped by
/// subset size); beyond that it is integrated adaptively.
pub fn selection_probabilities_exact(cumulative: &[f64], eps: LearningRate) -> Vec<f64> {
    let n = cumulative.len();
    assert!(n >= 1, "need at least one expert");
    let eps = match eps {
        LearningRate::Infinite => {
            let mut p = vec![0.0; n];
            p[select_scaled(cumulative, 0.0, &vec![0.0; n])] = 1.0;
            return p;
        }
        LearningRate::Finite(e) => {
            assert!(e.is_finite() && e > 0.0, "learning rate must be positive, got {e}");
            e
        }
    };
    match n {
        1 => vec![1.0],
        2 => {
            let p1 = two_expert_first(eps * (cumulative[0] - cumulative[1]));
            vec![p1, 1.0 - p1]
        }
        _ => (0..n).map(|j| single_probability(cumulative, eps, j)).collect(),
    }
}

/// `P{I = 1}` for two experts with `d = eps (s_1 - s_2)`.
fn two_expert_first(d: f64) -> f64 {
    if d >= 0.0 {
        0.5 * (-d).exp()
    } else {
        1.0 - 0.5 * d.exp()
    }
}

const EXPANSION_MAX_EXPERTS: usize = 12;

fn single_probability(cumulative: &[f64], eps: f64, j: usize) -> f64 {
    let sj = cumulative[j];
    let d: Vec<f64> = cumulative.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, s)| eps * (s - sj)).collect();
    let ln_u0 = d.iter().copied().fold(0.0, f64::min);
    let u0 = ln_u0.exp();
    if u0 == 0.0 {
        return 0.0;
    }
    let b: Vec<f64> = d.iter().map(|di| (ln_u0 - di).exp()).collect();
    let integral = if cumulative.len() <= EXPANSION_MAX_EXPERTS {
        integrate_product_expanded(&b)
    } else {
        integrate_product_adaptive(&b, 1e-12)
    };
    (u0 * integral).clamp(0.0, 1.0)
}

/// `int_0^1 prod_i (1 - b_i w) dw` via the polynomial coefficients of the product.
fn integrate_product_expanded(b: &[f64]) -> f64 {
    let mut coef = vec![0.0; b.len() + 1];
    coef[0] = 1.0;
    for (k, bi) in b.iter().enumerate() {
        for m in (1..=k + 1).rev() {
            coef[m] -= bi * coef[m - 1];
        }
    }
    coef.iter().enumerate().map(|(k, c)| c / (k + 1) as f64).sum()
}

fn integrate_product_adaptive(b: &[f64], tol: f64) -> f64 {
    let f = |w: f64| b.iter().map(|bi| 1.0 - bi * w).product::<f64>();
    let (fa, fm, fb) = (f(0.0), f(0.5), f(1.0));
    let whole = (fa + 4.0 * fm + fb) / 6.0;
    simpson(&f, 0.0, 1.0, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) * (fa + 4.0 * flm + fm) / 6.0;
    let right = (b - m) * (fm + 4.0 * frm + fb) / 6.0;
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Empirical selection frequencies over fresh perturbations.
pub fn selection_probabilities_mc<R: Rng + ?Sized>(
    cumulative: &[f64],
    eps: LearningRate,
    num_samples: usize,
    rng: &mut R,
) -> Vec<f64> {
    assert!(num_samples >= 1, "need at least one sample");
    let n = cumulative.len();
    let scale = eps.perturbation_scale();
    let mut counts = vec![0usize; n];
    let mut xi = vec![0.0; n];
    for _ in 0..num_samples {
        fill_exponential(rng, &mut xi);
        counts[select_scaled(cumulative, scale, &xi)] += 1;
    }
    counts.into_iter().map(|c| c as f64 / num_samples as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioCheck {
    pub holds: bool,
    /// `exp{(3/a) gamma(t)^(1 - alpha_t)}` (2/a for nonnegative losses).
    pub factor: f64,
    /// `max_j (P{I_t = j} - factor P{J_t = j})`.
    pub max_excess: f64,
    pub p_fpl: Vec<f64>,
    pub p_ifpl: Vec<f64>,
}

pub const RATIO_SLACK: f64 = 1e-9;

/// Verifies `P{I_t = j} <= exp{(3/a) gamma(t)^(1 - alpha_t)} P{J_t = j}` for every `j`
/// using exact probabilities on both sides.
pub fn probability_ratio_check(
    cumulative_prev: &[f64],
    loss_t: &[f64],
    params: &ScheduleParams,
    t: usize,
    v_prev: f64,
    v_t: f64,
) -> Result<RatioCheck> {
    let n = cumulative_prev.len();
    if loss_t.len() != n || params.num_experts() != n {
        return Err(Error::LengthMismatch { expected: n, got: loss_t.len() });
    }
    if !(v_prev > 0.0 && v_t >= v_prev) {
        return Err(Error::Precondition(format!("need 0 < v_prev <= v_t, got {v_prev}, {v_t}")));
    }
    let delta_v = v_t - v_prev;
    let tol = 1e-12 * v_t;
    if max_abs(loss_t) > delta_v + tol {
        return Err(Error::Precondition(format!(
            "one-step loss {} exceeds the volume increment {delta_v}",
            max_abs(loss_t)
        )));
    }
    if let Some(c) = cumulative_prev.iter().find(|c| c.abs() > v_prev + tol) {
        return Err(Error::Precondition(format!("cumulative loss {c} exceeds volume {v_prev}")));
    }
    let gamma = params.gamma().eval(t);
    let fluc = delta_v / v_t;
    if fluc > gamma {
        return Err(Error::Precondition(format!("fluc({t}) = {fluc} exceeds gamma({t}) = {gamma}")));
    }
    let alpha = params.alpha_t(t)?;
    let factor = (params.loss_mode().ratio_numerator() / params.a() * gamma.powf(1.0 - alpha)).exp();

    let cumulative_t: Vec<f64> = cumulative_prev.iter().zip(loss_t).map(|(c, s)| c + s).collect();
    let p_fpl = selection_probabilities_exact(cumulative_prev, params.epsilon_t(t, v_prev)?);
    let p_ifpl = selection_probabilities_exact(&cumulative_t, params.epsilon_prime_t(t, v_t)?);
    let max_excess = p_fpl.iter().zip(&p_ifpl).map(|(pi, pj)| pi - factor * pj).fold(f64::NEG_INFINITY, f64::max);
    Ok(RatioCheck { holds: max_excess <= RATIO_SLACK, factor, max_excess, p_fpl, p_ifpl })
}

/// A game whose losses may react to the learner's past choices.
pub trait AdaptiveGame {
    fn num_experts(&self) -> usize;

    /// Losses for step `t` given the realized choices `I_1..I_{t-1}`.
    fn losses(&mut self, t: usize, history: &[usize]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveRun {
    pub record: RunRecord,
    /// `E(s_t | past)` computed from exact selection probabilities.
    pub conditional_expected_losses: Vec<f64>,
    pub delta_v: Vec<f64>,
}

impl AdaptiveRun {
    /// `sum_t E(s_t | past) - min_i s^i_{1:T}`, the random quantity the
    /// non-oblivious bound controls.
    pub fn conditional_regret(&self) -> f64 {
        self.conditional_expected_losses.iter().sum::<f64>() - self.record.best_expert_loss()
    }
}

/// PROT against a non-oblivious game.
pub fn prot_run_adaptive(
    game: &mut dyn AdaptiveGame,
    horizon: usize,
    params: &ScheduleParams,
    source: &mut dyn PerturbationSource,
) -> Result<AdaptiveRun> {
    let n = game.num_experts();
    if params.num_experts() != n {
        return Err(Error::LengthMismatch { expected: params.num_experts(), got: n });
    }
    let mut state = GameState::new(n, params.v0())?;
    let mut xi = vec![0.0; n];
    let mut history = Vec::with_capacity(horizon);
    let mut steps = Vec::with_capacity(horizon);
    let mut expected = Vec::with_capacity(horizon);
    let mut delta_v = Vec::with_capacity(horizon);
    let mut cum_loss = 0.0;
    for t in 1..=horizon {
        let eps = params.epsilon_t(t, state.volume())?;
        source.fill(t, &mut xi);
        let chosen = prot_select(state.cumulative(), eps, &xi);
        let p = selection_probabilities_exact(state.cumulative(), eps);
        let losses = game.losses(t, &history);
        if losses.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: losses.len() });
        }
        expected.push(dot(&p, &losses));
        let dv = state.apply(&losses)?;
        delta_v.push(dv);
        let loss = losses[chosen];
        cum_loss += loss;
        history.push(chosen);
        let v = state.volume();
        steps.push(StepRecord {
            t,
            chosen,
            loss,
            cum_loss,
            v,
            delta_v: dv,
            fluc: if v == 0.0 { 0.0 } else { dv / v },
            mu: params.mu_closed_form(t),
            eps: eps.as_f64(),
            xi: None,
        });
    }
    Ok(AdaptiveRun {
        record: RunRecord { steps, expert_totals: state.cumulative().to_vec() },
        conditional_expected_losses: expected,
        delta_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::RngSpec;
    use crate::schedule::{GammaSchedule, LossMode};
    use proptest::prelude::*;

    fn params(n: usize) -> ScheduleParams {
        ScheduleParams::new(10.0, n, GammaSchedule::Power { delta: 1.0 }, 0.0, LossMode::General).unwrap()
    }

    /// Subset-by-subset inclusion-exclusion, written independently of the
    /// grouped polynomial expansion.
    fn probabilities_by_subsets(s: &[f64], eps: f64) -> Vec<f64> {
        let n = s.len();
        (0..n)
            .map(|j| {
                let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
                let x0 = others.iter().map(|&i| -eps * (s[i] - s[j])).fold(0.0, f64::max);
                let mut total = 0.0;
                for mask in 0u32..(1 << others.len()) {
                    let k = mask.count_ones() as i32;
                    let mut log_c = 0.0;
                    for (bit, &i) in others.iter().enumerate() {
                        if mask & (1 << bit) != 0 {
                            log_c -= eps * (s[i] - s[j]);
                        }
                    }
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    total += sign * (log_c - (1 + k) as f64 * x0).exp() / (1 + k) as f64;
                }
                total
            })
            .collect()
    }

    #[test]
    fn select_examples() {
        let e = LearningRate::Finite(1.0);
        assert_eq!(prot_select(&[3.0, 5.0], e, &[0.0, 0.0]), 0);
        assert_eq!(prot_select(&[3.0, 5.0], e, &[0.0, 4.0]), 1);
        for c in [0.0, 0.3, 7.0] {
            assert_eq!(prot_select(&[0.0, 0.0], e, &[c, c]), 0);
            assert_eq!(prot_select(&[0.0, 0.0], LearningRate::Infinite, &[c, c]), 0);
        }
        assert_eq!(prot_select(&[3.0, 5.0], LearningRate::Infinite, &[0.0, 100.0]), 0);
    }

    #[test]
    fn selection_is_shift_invariant() {
        let e = LearningRate::Finite(0.7);
        let xi = [0.3, 1.2, 0.05, 2.0];
        let s = [1.0, 2.0, -0.5, 3.0];
        let shifted: Vec<f64> = s.iter().map(|x| x + 123.0).collect();
        assert_eq!(prot_select(&s, e, &xi), prot_select(&shifted, e, &xi));
    }

    #[test]
    fn single_expert_has_zero_regret() {
        let m = LossMatrix::from_rows(&[[1.0], [-2.0], [5.0]]).unwrap();
        let rec = prot_run(&m, &params(1), &mut Perturber::new(RngSpec::new(1, 0), Regime::PerStep)).unwrap();
        assert!(rec.steps.iter().all(|s| s.chosen == 0));
        assert_eq!(rec.total_loss(), 4.0);
        assert_eq!(rec.regret(), 0.0);
        let rec = ifpl_run(&m, &params(1), &mut Perturber::new(RngSpec::new(1, 0), Regime::PerStep)).unwrap();
        assert_eq!(rec.regret(), 0.0);
    }

    #[test]
    fn leader_loses_on_alternating_game() {
        let m = LossMatrix::from_columns(&[[0.5, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0], [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]])
            .unwrap();
        let rec = prot_run(&m, &params(2), &mut FixedPerturbation(vec![0.0, 0.0])).unwrap();
        // Step 1 is a tie (expert 1), then the leader is always the expert about to lose.
        assert_eq!(rec.steps.iter().map(|s| s.chosen).collect::<Vec<_>>(), vec![0, 1, 0, 1, 0, 1, 0]);
        assert_eq!(rec.total_loss(), 6.5);
        assert_eq!(rec.best_expert_loss(), 3.0);
        assert!(rec.steps[0].eps.is_infinite());
    }

    #[test]
    fn ifpl_with_zero_perturbation_is_clairvoyant_leader() {
        let m = LossMatrix::from_rows(&[[1.0, 0.0, 2.0], [0.0, 3.0, -1.0], [4.0, 0.0, 0.0]]).unwrap();
        let rec = ifpl_run(&m, &params(3), &mut FixedPerturbation(vec![0.0; 3])).unwrap();
        let mut cum = [0.0; 3];
        for (t, row) in m.rows().enumerate() {
            for i in 0..3 {
                cum[i] += row[i];
            }
            let leader = (0..3).fold(0, |b, i| if cum[i] < cum[b] { i } else { b });
            assert_eq!(rec.steps[t].chosen, leader);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let m = LossMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.5], [0.2, 0.9]]).unwrap();
        let p = params(2);
        for regime in [Regime::Once, Regime::PerStep] {
            let a = prot_run(&m, &p, &mut Perturber::new(RngSpec::new(9, 3), regime)).unwrap();
            let b = prot_run(&m, &p, &mut Perturber::new(RngSpec::new(9, 3), regime)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn once_regime_reuses_perturbations() {
        let m = LossMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.5]]).unwrap();
        let g = PreparedGame::new(&m, &params(2)).unwrap();
        let rec = g.prot_run_audited(&mut Perturber::new(RngSpec::new(4, 0), Regime::Once));
        let first = rec.steps[0].xi.clone().unwrap();
        assert!(rec.steps.iter().all(|s| s.xi.as_ref() == Some(&first)));
        let rec = g.prot_run_audited(&mut Perturber::new(RngSpec::new(4, 0), Regime::PerStep));
        assert_ne!(rec.steps[0].xi, rec.steps[1].xi);
    }

    #[test]
    fn record_telescopes() {
        let m = LossMatrix::from_rows(&[[1.0, -2.0], [0.5, 0.25], [-3.0, 1.0]]).unwrap();
        let rec =
            prot_run(&m, &params(2).with_v0(1.0).unwrap(), &mut Perturber::new(RngSpec::new(2, 0), Regime::PerStep))
                .unwrap();
        let mut sum = 0.0;
        let mut v_prev = 1.0;
        for s in &rec.steps {
            sum += s.loss;
            assert_eq!(s.cum_loss, sum);
            assert!(s.v >= v_prev);
            assert_eq!(s.delta_v, s.v - v_prev);
            v_prev = s.v;
        }
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,chosen,loss,cum_loss,v,delta_v,fluc,mu,eps\n1,"));
    }

    #[test]
    fn exact_probability_examples() {
        let e = LearningRate::Finite(0.5);
        for c in [0.0, 3.0, -7.5] {
            let p = selection_probabilities_exact(&[c, c], e);
            assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
            let p = selection_probabilities_exact(&[c, c, c], e);
            for x in p {
                assert!((x - 1.0 / 3.0).abs() < 1e-14);
            }
        }
        let p = selection_probabilities_exact(&[3.0, 5.0], e);
        assert!((p[0] - (1.0 - 0.5 * (-1.0f64).exp())).abs() < 1e-15);
        assert!((p[0] - 0.81606).abs() < 1e-5);
        assert_eq!(selection_probabilities_exact(&[2.0, 1.0, 1.0], LearningRate::Infinite), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn closed_form_matches_expansion_for_two_experts() {
        for (s, e) in [([3.0, 5.0], 0.5), ([5.0, 3.0], 0.5), ([0.0, 10.0], 2.0), ([1.0, 1.0], 9.0)] {
            let closed = selection_probabilities_exact(&s, LearningRate::Finite(e));
            let subsets = probabilities_by_subsets(&s, e);
            for j in 0..2 {
                assert!((closed[j] - subsets[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn adaptive_quadrature_matches_expansion() {
        let s: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.4).collect();
        for j in 0..12 {
            let sj = s[j];
            let d: Vec<f64> = s.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, x)| 1.3 * (x - sj)).collect();
            let ln_u0 = d.iter().copied().fold(0.0, f64::min);
            let b: Vec<f64> = d.iter().map(|di| (ln_u0 - di).exp()).collect();
            let exact = integrate_product_expanded(&b);
            let quad = integrate_product_adaptive(&b, 1e-13);
            assert!((exact - quad).abs() < 1e-11, "{exact} vs {quad}");
        }
    }

    #[test]
    fn large_pool_probabilities_sum_to_one() {
        let s: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = selection_probabilities_exact(&s, LearningRate::Finite(2.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let mc = selection_probabilities_mc(&s, LearningRate::Finite(2.0), 400_000, &mut RngSpec::new(5, 0).rng());
        for (a, b) in p.iter().zip(&mc) {
            let se = (a * (1.0 - a) / 400_000.0).sqrt().max(1e-6);
            assert!((a - b).abs() < 5.0 * se, "{a} vs {b}");
        }
    }

    #[test]
    fn mc_probability_examples() {
        let mut rng = RngSpec::new(8, 0).rng();
        let one = selection_probabilities_mc(&[3.0, 5.0, 4.0], LearningRate::Finite(0.5), 1, &mut rng);
        assert_eq!(one.iter().sum::<f64>(), 1.0);
        assert_eq!(one.iter().filter(|p| **p == 1.0).count(), 1);

        let n = 1_000_000;
        let exact = selection_probabilities_exact(&[3.0, 5.0], LearningRate::Finite(0.5));
        let mc = selection_probabilities_mc(&[3.0, 5.0], LearningRate::Finite(0.5), n, &mut rng);
        let se = (exact[0] * (1.0 - exact[0]) / n as f64).sqrt();
        assert!((mc[0] - exact[0]).abs() <= 4.0 * se);

        let sym = selection_probabilities_mc(&[1.0, 1.0, 1.0, 1.0], LearningRate::Finite(0.5), 200_000, &mut rng);
        let se = (0.25 * 0.75 / 200_000.0f64).sqrt();
        for p in sym {
            assert!((p - 0.25).abs() < 4.0 * se);
        }
    }

    #[test]
    fn ratio_check_examples() {
        let p = ScheduleParams::new(10.0, 2, GammaSchedule::Constant { c: 0.02 }, 1.0, LossMode::General).unwrap();
        // fluc = 0.2 / 10 = 0.02 <= gamma.
        let r = probability_ratio_check(&[1.0, -2.0], &[0.2, -0.1], &p, 5, 9.8, 10.0).unwrap();
        assert!(r.holds, "{r:?}");

        let r = probability_ratio_check(&[1.0, -2.0], &[0.0, 0.0], &p, 5, 9.8, 9.8).unwrap();
        assert_eq!(r.p_fpl, r.p_ifpl);
        assert!(r.factor > 1.0 && r.holds);

        let p1 = ScheduleParams::new(10.0, 1, GammaSchedule::Constant { c: 0.02 }, 1.0, LossMode::General).unwrap();
        let r = probability_ratio_check(&[0.5], &[0.1], &p1, 3, 9.9, 10.0).unwrap();
        assert_eq!(r.p_fpl, vec![1.0]);
        assert!(r.holds);

        // fluc = 0.5 > gamma.
        assert!(matches!(
            probability_ratio_check(&[1.0, -2.0], &[5.0, 0.0], &p, 5, 5.0, 10.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn exact_expected_losses_match_monte_carlo() {
        let m = LossMatrix::from_columns(&[
            [0.5, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            [0.4, 0.6, 0.5, 0.5, 0.3, 0.7, 0.5, 0.5],
        ])
        .unwrap();
        let p = params(3).with_v0(1.0).unwrap();
        let g = PreparedGame::new(&m, &p).unwrap();
        let exact: f64 = g.prot_expected_losses().iter().sum();
        let runs = 100_000;
        let mut rng = RngSpec::new(12, 0).rng();
        let samples: Vec<f64> = (0..runs).map(|_| g.prot_total(&mut rng, Regime::PerStep)).collect();
        let mean = samples.iter().sum::<f64>() / runs as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        assert!((mean - exact).abs() < 4.0 * (var / runs as f64).sqrt(), "{mean} vs {exact}");
    }

    struct Chaser;

    impl AdaptiveGame for Chaser {
        fn num_experts(&self) -> usize {
            2
        }

        // Punishes whichever expert the learner followed last time.
        fn losses(&mut self, _t: usize, history: &[usize]) -> Vec<f64> {
            match history.last() {
                Some(0) => vec![1.0, 0.0],
                Some(_) => vec![0.0, 1.0],
                None => vec![0.5, 0.5],
            }
        }
    }

    #[test]
    fn adaptive_run_tracks_conditional_expectation() {
        let p = params(2).with_v0(1.0).unwrap();
        let run =
            prot_run_adaptive(&mut Chaser, 50, &p, &mut Perturber::new(RngSpec::new(1, 1), Regime::PerStep)).unwrap();
        assert_eq!(run.record.steps.len(), 50);
        assert_eq!(run.delta_v.len(), 50);
        let total: f64 = run.record.expert_totals.iter().sum();
        assert!((total - 50.0).abs() < 1e-12);
        assert!(run.conditional_expected_losses.iter().all(|l| (0.0..=1.0).contains(l)));
    }

    proptest! {
        #[test]
        fn exact_probabilities_are_a_distribution(s in prop::collection::vec(-5.0f64..5.0, 1..10), eps in 0.01f64..10.0) {
            let p = selection_probabilities_exact(&s, LearningRate::Finite(eps));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        }

        #[test]
        fn expansion_matches_subsets(s in prop::collection::vec(-3.0f64..3.0, 3..8), eps in 0.05f64..3.0) {
            let a = selection_probabilities_exact(&s, LearningRate::Finite(eps));
            let b = probabilities_by_subsets(&s, eps);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn exact_probabilities_are_shift_invariant(s in prop::collection::vec(-5.0f64..5.0, 2..7), shift in -100.0f64..100.0, eps in 0.05f64..5.0) {
            let shifted: Vec<f64> = s.iter().map(|x| x + shift).collect();
            let a = selection_probabilities_exact(&s, LearningRate::Finite(eps));
            let b = selection_probabilities_exact(&shifted, LearningRate::Finite(eps));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
