//! Experiment configuration, seeded fan-out, aggregation and bound checks.
//!
//! Runs are folded in ascending seed order, so a report depends only on
//! the set of seeds and not on how they were listed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::{prop1_run, prot_learner, AdversaryConfig, AdversaryTrace};
use crate::engine::{selection_probabilities_exact, selection_probabilities_mc, Perturber, PreparedGame};
use crate::error::{Error, Result};
use crate::game::{check_fluctuation_bound, LossMatrix};
use crate::games::GeneratorSpec;
use crate::perturbation::{Regime, RngSpec};
use crate::schedule::{
    general_bound_closed, poly_bound, regret_bound, GammaSchedule, LearningRate, LossMode, ScheduleConfig,
    ScheduleParams, Summability,
};
use crate::stats::{mean_se, MeanSe};
use crate::volatility::{run_trading_experiment, PriceSource, TradingConfig, TradingReport};

/// Stream ids used by the harness; one stream per rule so PROT and IFPL
/// runs of the same seed are independent.
pub const PROT_STREAM: u64 = 0;
pub const IFPL_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range {
        count: usize,
        #[serde(default)]
        base: u64,
    },
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Range { count: 1, base: 0 }
    }
}

impl SeedSpec {
    /// Seeds in ascending order.
    pub fn seeds(&self) -> Vec<u64> {
        let mut s = match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { count, base } => (0..*count as u64).map(|k| base + k).collect(),
        };
        s.sort_unstable();
        s
    }

    pub fn validate(&self) -> Result<()> {
        let n = match self {
            SeedSpec::List(v) => v.len(),
            SeedSpec::Range { count, .. } => *count,
        };
        if n == 0 {
            return Err(Error::validation("at least one seed is required"));
        }
        Ok(())
    }
}

fn one() -> f64 {
    1.0
}

fn three() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum GameSource {
    Csv {
        path: PathBuf,
    },
    Generator {
        generator: GeneratorSpec,
    },
    Adversary {
        eps: f64,
        horizon: usize,
        #[serde(default = "one")]
        v0: f64,
    },
    Trading {
        prices: PriceSource,
        #[serde(default = "one")]
        c: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub game: GameSource,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub seeds: SeedSpec,
    #[serde(default)]
    pub regime: Regime,
    /// Also run IFPL and report the Lemma-style decomposition.
    #[serde(default)]
    pub ifpl: bool,
    /// Standard errors of slack allowed in Monte Carlo bound comparisons.
    #[serde(default = "three")]
    pub se_multiplier: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(game: GameSource, schedule: ScheduleConfig) -> Self {
        Self {
            game,
            schedule,
            seeds: SeedSpec::default(),
            regime: Regime::default(),
            ifpl: false,
            se_multiplier: 3.0,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.seeds.validate()?;
        if !(self.se_multiplier >= 0.0) {
            return Err(Error::validation("se_multiplier must be nonnegative"));
        }
        let missing = |p: &Path| Error::validation(format!("referenced file {} does not exist", p.display()));
        match &self.game {
            GameSource::Csv { path } if !path.exists() => return Err(missing(path)),
            GameSource::Trading { prices: PriceSource::Csv { path }, .. } if !path.exists() => {
                return Err(missing(path))
            }
            _ => {}
        }
        self.schedule.gamma.validate()
    }

    /// Loads or generates the oblivious loss matrix, if the source has one.
    pub fn load_game(&self) -> Result<Option<LossMatrix>> {
        match &self.game {
            GameSource::Csv { path } => LossMatrix::read_csv_path(path).map(Some),
            GameSource::Generator { generator } => {
                generator.generate(&self.schedule.gamma, self.schedule.loss_mode).map(Some)
            }
            GameSource::Adversary { .. } | GameSource::Trading { .. } => Ok(None),
        }
    }
}

/// One inequality `lhs <= rhs + slack`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Absolute slack allowed; `se_multiplier * se` for Monte Carlo quantities.
    pub tolerance: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn new(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), lhs, rhs, tolerance, holds: lhs <= rhs + tolerance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepAggregate {
    pub t: usize,
    pub mean_loss: f64,
    pub se_loss: f64,
    pub best_expert: f64,
    pub mean_regret: f64,
    pub volume: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlucSummary {
    pub holds: bool,
    pub first_violation: Option<usize>,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub config: ExperimentConfig,
    pub a: f64,
    pub num_experts: usize,
    pub horizon: usize,
    pub num_seeds: usize,
    pub volume: f64,
    pub best_expert_loss: f64,
    /// Seed mean of the learner's cumulative loss `s_{1:T}`.
    pub prot_loss: MeanSe,
    pub prot_regret: MeanSe,
    /// `sum_t E s_t` from exact selection probabilities.
    pub exact_expected_regret: Option<f64>,
    pub ifpl_loss: Option<MeanSe>,
    pub fluc: FlucSummary,
    pub bounds: Vec<BoundCheck>,
    pub all_hold: bool,
    #[serde(skip)]
    pub per_step: Vec<StepAggregate>,
    #[serde(skip)]
    pub trace: Vec<u8>,
}

impl AggregateReport {
    pub fn bound(&self, name: &str) -> Option<&BoundCheck> {
        self.bounds.iter().find(|b| b.name == name)
    }

    /// Writes `t,mean_loss,se_loss,best_expert,mean_regret,volume,bound`.
    pub fn write_aggregate_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "mean_loss", "se_loss", "best_expert", "mean_regret", "volume", "bound"])?;
        for r in &self.per_step {
            w.write_record([
                r.t.to_string(),
                r.mean_loss.to_string(),
                r.se_loss.to_string(),
                r.best_expert.to_string(),
                r.mean_regret.to_string(),
                r.volume.to_string(),
                r.bound.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryReport {
    pub config: ExperimentConfig,
    pub fluctuation: f64,
    pub regret_floor: f64,
    pub stated_bound: f64,
    pub fluc_exact: bool,
    pub min_normalized_regret: f64,
    pub holds: bool,
    #[serde(skip)]
    pub trace: AdversaryTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradingSummary {
    pub config: ExperimentConfig,
    pub steps: usize,
    pub final_volume: f64,
    pub expert_1_total: f64,
    pub learner_total: f64,
    pub identity_residual: f64,
    pub identity_tolerance: f64,
    pub fluc_violations: usize,
    pub first_fluc_violation: Option<usize>,
    pub defensive_lower_bound: f64,
    pub defensive_holds: bool,
    #[serde(skip)]
    pub report: TradingReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Game(AggregateReport),
    Adversary(AdversaryReport),
    Trading(TradingSummary),
}

impl Report {
    /// Writes `report.json`, `trace.csv` and (for loss games) `aggregate.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)?;
        fs::write(dir.join("report.json"), json + "\n")?;
        let trace = fs::File::create(dir.join("trace.csv"))?;
        match self {
            Report::Game(r) => {
                let mut trace = trace;
                trace.write_all(&r.trace)?;
                r.write_aggregate_csv(fs::File::create(dir.join("aggregate.csv"))?)?;
            }
            Report::Adversary(r) => r.trace.write_csv(trace)?,
            Report::Trading(r) => r.report.write_csv(trace)?,
        }
        Ok(())
    }

    pub fn all_hold(&self) -> bool {
        match self {
            Report::Game(r) => r.all_hold,
            Report::Adversary(r) => r.holds,
            Report::Trading(r) => r.defensive_holds,
        }
    }
}

/// Runs the configured experiment and writes outputs when `config.out` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let report = match &config.game {
        GameSource::Csv { .. } | GameSource::Generator { .. } => {
            let losses = config.load_game()?.expect("loss-matrix source");
            Report::Game(run_game(config, &losses)?)
        }
        GameSource::Adversary { eps, horizon, v0 } => Report::Adversary(run_adversary(config, *eps, *horizon, *v0)?),
        GameSource::Trading { prices, c } => Report::Trading(run_trading(config, prices, *c)?),
    };
    if let Some(dir) = &config.out {
        report.write_outputs(dir)?;
    }
    Ok(report)
}

/// The config with `a` filled in, as embedded in reports.
fn resolved(config: &ExperimentConfig, params: &ScheduleParams) -> ExperimentConfig {
    let mut c = config.clone();
    c.schedule.a = Some(params.a());
    c.schedule.num_experts = Some(params.num_experts());
    c
}

/// Seed-aggregated PROT (and optionally IFPL) runs on an oblivious game.
pub fn run_game(config: &ExperimentConfig, losses: &LossMatrix) -> Result<AggregateReport> {
    let params = config.schedule.resolve(losses.num_experts())?;
    let game = PreparedGame::new(losses, &params)?;
    let horizon = game.horizon();
    let seeds = config.seeds.seeds();
    let k = config.se_multiplier;
    let target_eps = config.schedule.effective_target_eps();

    let mut sum = vec![0.0; horizon];
    let mut sum_sq = vec![0.0; horizon];
    let mut path = vec![0.0; horizon];
    let mut prot_totals = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let mut rng = RngSpec::new(seed, PROT_STREAM).rng();
        game.prot_path(&mut rng, config.regime, &mut path);
        for ((s, q), x) in sum.iter_mut().zip(&mut sum_sq).zip(&path) {
            *s += x;
            *q += x * x;
        }
        prot_totals.push(path[horizon - 1]);
    }
    let ifpl_totals = config.ifpl.then(|| {
        seeds
            .iter()
            .map(|&seed| game.ifpl_total(&mut RngSpec::new(seed, IFPL_STREAM).rng(), config.regime))
            .collect::<Vec<_>>()
    });

    let delta_v = game.delta_v();
    let best = game.best_expert_loss();
    let prot_loss = mean_se(&prot_totals);
    let prot_regret = MeanSe { mean: prot_loss.mean - best, ..prot_loss };

    let n = seeds.len() as f64;
    let general_mode = params.loss_mode() == LossMode::General;
    let mut bound_running = 0.0;
    let prefactor = if config.schedule.a.is_none() {
        regret_bound(&params, &[1.0], target_eps) / params.gamma().eval(1).sqrt()
    } else {
        general_bound_closed(&params, &[1.0]) / params.gamma().eval(1).sqrt()
    };
    let per_step = (1..=horizon)
        .map(|t| {
            let mean = sum[t - 1] / n;
            let var = if seeds.len() > 1 { ((sum_sq[t - 1] - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            let best_t = game.cumulative(t).iter().copied().fold(f64::INFINITY, f64::min);
            bound_running += prefactor * params.gamma().eval(t).sqrt() * delta_v[t - 1];
            StepAggregate {
                t,
                mean_loss: mean,
                se_loss: (var / n).sqrt(),
                best_expert: best_t,
                mean_regret: mean - best_t,
                volume: game.volume(t),
                bound: bound_running,
            }
        })
        .collect();

    let mut bounds = Vec::new();
    if config.schedule.a.is_none() {
        bounds.push(BoundCheck::new(
            "theorem1",
            prot_regret.mean,
            regret_bound(&params, &delta_v, target_eps),
            k * prot_regret.se,
        ));
    }
    bounds.push(BoundCheck::new(
        "general",
        prot_regret.mean,
        general_bound_closed(&params, &delta_v),
        k * prot_regret.se,
    ));
    let ifpl_loss = ifpl_totals.as_deref().map(mean_se);
    if let Some(ifpl) = ifpl_loss {
        bounds.push(BoundCheck::new("lemma2", ifpl.mean, best + params.ifpl_regret_bound(&delta_v), k * ifpl.se));
        let se = (prot_loss.se.powi(2) + ifpl.se.powi(2)).sqrt();
        bounds.push(BoundCheck::new(
            "lemma1_gap",
            prot_loss.mean - ifpl.mean,
            params.fpl_ifpl_gap_bound(&delta_v),
            k * se,
        ));
    }
    if let (
        GameSource::Generator { generator: GeneratorSpec::Envelope { exponent, .. } },
        GammaSchedule::Power { delta },
    ) = (&config.game, params.gamma())
    {
        if general_mode {
            bounds.push(BoundCheck::new(
                "corollary1",
                prot_regret.mean,
                poly_bound(params.num_experts(), horizon, *exponent, *delta, target_eps),
                k * prot_regret.se,
            ));
        }
    }
    let unit_steps = losses.step_maxima().iter().all(|m| *m <= 1.0);
    if unit_steps && params.gamma() == &(GammaSchedule::Power { delta: 1.0 }) && general_mode {
        let bl = 4.0 * ((6.0 + target_eps) * (1.0 + params.ln_experts()) * horizon as f64).sqrt();
        bounds.push(BoundCheck::new("bounded_loss", prot_regret.mean, bl, k * prot_regret.se));
    }

    let exact_expected_regret =
        (params.num_experts() <= 12).then(|| game.prot_expected_losses().iter().sum::<f64>() - best);

    let flucs = losses.fluctuations(params.v0());
    let fc = check_fluctuation_bound(&flucs, params.gamma());
    let fluc = FlucSummary {
        holds: fc.holds,
        first_violation: fc.first_violation,
        max: flucs.values().iter().copied().fold(0.0, f64::max),
    };

    let mut trace = Vec::new();
    let first = seeds[0];
    game.prot_run(&mut Perturber::new(RngSpec::new(first, PROT_STREAM), config.regime)).write_csv(&mut trace)?;

    let all_hold = bounds.iter().all(|b| b.holds);
    Ok(AggregateReport {
        config: resolved(config, &params),
        a: params.a(),
        num_experts: params.num_experts(),
        horizon,
        num_seeds: seeds.len(),
        volume: game.volume(horizon),
        best_expert_loss: best,
        prot_loss,
        prot_regret,
        exact_expected_regret,
        ifpl_loss,
        fluc,
        bounds,
        all_hold,
        per_step,
        trace,
    })
}

fn run_adversary(config: &ExperimentConfig, eps: f64, horizon: usize, v0: f64) -> Result<AdversaryReport> {
    let adv = AdversaryConfig::new(eps, v0, horizon)?;
    let params = config.schedule.resolve(2)?.with_v0(v0)?;
    let trace = prop1_run(prot_learner(&params), &adv)?;
    let fluctuation = adv.fluctuation();
    let fluc_exact = trace.rows.iter().all(|r| ((r.fluc - fluctuation) / fluctuation).abs() <= 1e-12);
    let min_normalized_regret = trace.rows.iter().map(|r| r.normalized_regret).fold(f64::INFINITY, f64::min);
    Ok(AdversaryReport {
        config: resolved(config, &params),
        fluctuation,
        regret_floor: adv.regret_floor(),
        stated_bound: adv.stated_bound(),
        fluc_exact,
        min_normalized_regret,
        holds: fluc_exact && min_normalized_regret >= adv.stated_bound(),
        trace,
    })
}

fn run_trading(config: &ExperimentConfig, source: &PriceSource, c: f64) -> Result<TradingSummary> {
    let prices = source.load()?;
    let mut sched = config.schedule.clone();
    if sched.v0 == 0.0 {
        sched.v0 = 1.0;
    }
    let params = sched.resolve(2)?;
    let tc = TradingConfig::new(c, params.clone(), sched.effective_target_eps())?;
    let report = run_trading_experiment(&tc, &prices)?;
    let last = *report.rows.last().expect("at least one step");
    let mut embedded = resolved(config, &params);
    embedded.schedule.v0 = params.v0();
    Ok(TradingSummary {
        config: embedded,
        steps: prices.steps(),
        final_volume: last.volume,
        expert_1_total: last.s1_cum,
        learner_total: last.learner_cum,
        identity_residual: report.identity_residual,
        identity_tolerance: report.identity_tolerance,
        fluc_violations: report.fluc_violations.len(),
        first_fluc_violation: report.fluc_violations.first().copied(),
        defensive_lower_bound: report.defensive.lower_bound,
        defensive_holds: report.defensive.holds,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: usize,
    /// Seed mean of `(s_{1:t} - min_i s^i_{1:t}) / v_t`.
    pub normalized_regret: MeanSe,
    /// The same quantity on the first seed's trajectory alone.
    pub first_trajectory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HannanReport {
    pub config: ExperimentConfig,
    pub summability: Summability,
    pub warning: Option<String>,
    pub checkpoints: Vec<Checkpoint>,
    /// Normalized regret at `T` is below its value at `T/16` (or the earliest checkpoint).
    pub decreasing: bool,
}

/// Normalized regret along trajectories at `t = 2^k` checkpoints.
pub fn hannan_check(config: &ExperimentConfig) -> Result<HannanReport> {
    config.validate()?;
    let losses = config
        .load_game()?
        .ok_or_else(|| Error::validation("the Hannan check needs a loss-matrix game (csv or generator)"))?;
    let params = config.schedule.resolve(losses.num_experts())?;
    let game = PreparedGame::new(&losses, &params)?;
    let horizon = game.horizon();
    let summability = params.gamma().square_summability(horizon);
    let warning = (!summability.converges)
        .then(|| format!("sum of gamma(t)^2 does not converge for {}; consistency is not guaranteed", params.gamma()));
    let mut marks: Vec<usize> = (0..).map(|k| 1usize << k).take_while(|t| *t <= horizon).collect();
    if *marks.last().unwrap() != horizon {
        marks.push(horizon);
    }
    let seeds = config.seeds.seeds();
    let mut per_mark: Vec<Vec<f64>> = vec![Vec::with_capacity(seeds.len()); marks.len()];
    let mut path = vec![0.0; horizon];
    for &seed in &seeds {
        game.prot_path(&mut RngSpec::new(seed, PROT_STREAM).rng(), config.regime, &mut path);
        for (m, &t) in marks.iter().enumerate() {
            let best = game.cumulative(t).iter().copied().fold(f64::INFINITY, f64::min);
            let v = game.volume(t);
            per_mark[m].push(if v > 0.0 { (path[t - 1] - best) / v } else { 0.0 });
        }
    }
    let checkpoints: Vec<Checkpoint> = marks
        .iter()
        .zip(&per_mark)
        .map(|(&t, xs)| Checkpoint { t, normalized_regret: mean_se(xs), first_trajectory: xs[0] })
        .collect();
    let last = checkpoints.last().unwrap();
    let earlier = checkpoints.iter().rev().find(|c| c.t * 16 <= last.t).unwrap_or(&checkpoints[0]);
    let decreasing = last.normalized_regret.mean < earlier.normalized_regret.mean;
    Ok(HannanReport { config: resolved(config, &params), summability, warning, checkpoints, decreasing })
}

/// Exact expected regret and bound values, no sampling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub config: ExperimentConfig,
    pub exact_prot_loss: f64,
    pub exact_ifpl_loss: f64,
    pub best_expert_loss: f64,
    pub volume: f64,
    pub bounds: Vec<BoundCheck>,
    pub fluc: FlucSummary,
    pub all_hold: bool,
}

/// Evaluates every applicable bound against exact expected losses.
pub fn verify_bounds(config: &ExperimentConfig) -> Result<VerifyReport> {
    config.validate()?;
    let losses = config
        .load_game()?
        .ok_or_else(|| Error::validation("bound verification needs a loss-matrix game (csv or generator)"))?;
    let params = config.schedule.resolve(losses.num_experts())?;
    let game = PreparedGame::new(&losses, &params)?;
    let delta_v = game.delta_v();
    let best = game.best_expert_loss();
    let prot: f64 = game.prot_expected_losses().iter().sum();
    let ifpl: f64 = game.ifpl_expected_losses().iter().sum();
    let tol = 1e-9 * game.volume(game.horizon()).max(1.0);
    let mut bounds = Vec::new();
    if config.schedule.a.is_none() {
        bounds.push(BoundCheck::new(
            "theorem1",
            prot - best,
            regret_bound(&params, &delta_v, config.schedule.effective_target_eps()),
            tol,
        ));
    }
    bounds.push(BoundCheck::new("general", prot - best, general_bound_closed(&params, &delta_v), tol));
    bounds.push(BoundCheck::new("lemma2", ifpl, best + params.ifpl_regret_bound(&delta_v), tol));
    bounds.push(BoundCheck::new("lemma1_gap", prot - ifpl, params.fpl_ifpl_gap_bound(&delta_v), tol));
    let flucs = losses.fluctuations(params.v0());
    let fc = check_fluctuation_bound(&flucs, params.gamma());
    let all_hold = bounds.iter().all(|b| b.holds);
    Ok(VerifyReport {
        config: resolved(config, &params),
        exact_prot_loss: prot,
        exact_ifpl_loss: ifpl,
        best_expert_loss: best,
        volume: game.volume(game.horizon()),
        bounds,
        fluc: FlucSummary {
            holds: fc.holds,
            first_violation: fc.first_violation,
            max: flucs.values().iter().copied().fold(0.0, f64::max),
        },
        all_hold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub cumulative: Vec<f64>,
    pub eps: f64,
    pub samples: usize,
    pub exact: Vec<f64>,
    pub monte_carlo: Vec<f64>,
    /// `max_j |mc_j - exact_j| / sqrt(exact_j (1 - exact_j) / samples)`.
    pub max_deviation_se: f64,
}

/// Compares exact selection probabilities with a seeded Monte Carlo estimate.
pub fn probe(cumulative: &[f64], eps: f64, samples: usize, seed: u64) -> Result<ProbeReport> {
    if cumulative.is_empty() {
        return Err(Error::validation("probe needs at least one cumulative loss"));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::validation(format!("probe eps must be positive, got {eps}")));
    }
    if samples == 0 {
        return Err(Error::validation("probe needs at least one sample"));
    }
    let rate = LearningRate::Finite(eps);
    let exact = selection_probabilities_exact(cumulative, rate);
    let mc = selection_probabilities_mc(cumulative, rate, samples, &mut RngSpec::new(seed, PROT_STREAM).rng());
    let max_deviation_se = exact
        .iter()
        .zip(&mc)
        .map(|(p, q)| {
            let se = (p * (1.0 - p) / samples as f64).sqrt();
            if se > 0.0 {
                (q - p).abs() / se
            } else if (q - p).abs() > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(ProbeReport { cumulative: cumulative.to_vec(), eps, samples, exact, monte_carlo: mc, max_deviation_se })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generator_config(n: usize, horizon: usize, seeds: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            GameSource::Generator {
                generator: GeneratorSpec::FlucScaled { num_experts: n, horizon, seed: 3, min_fill: 0.25 },
            },
            ScheduleConfig {
                a: None,
                target_eps: Some(1.0),
                num_experts: None,
                gamma: GammaSchedule::Power { delta: 1.0 },
                v0: 0.0,
                loss_mode: LossMode::General,
            },
        );
        c.seeds = SeedSpec::Range { count: seeds, base: 0 };
        c
    }

    #[test]
    fn seed_specs() {
        assert_eq!(SeedSpec::List(vec![5, 1, 3]).seeds(), vec![1, 3, 5]);
        assert_eq!(SeedSpec::Range { count: 3, base: 10 }.seeds(), vec![10, 11, 12]);
        assert!(SeedSpec::List(vec![]).validate().is_err());
        let s: SeedSpec = serde_json::from_str("[4, 2]").unwrap();
        assert_eq!(s, SeedSpec::List(vec![4, 2]));
        let s: SeedSpec = serde_json::from_str(r#"{"count": 2}"#).unwrap();
        assert_eq!(s.seeds(), vec![0, 1]);
    }

    #[test]
    fn single_expert_has_zero_regret() {
        let report =
            run_game(&generator_config(1, 200, 4), &crate::games::bounded_game(1, 200, LossMode::General, 1).unwrap())
                .unwrap();
        assert_eq!(report.prot_regret.mean, 0.0);
        assert!(report.per_step.iter().all(|s| s.mean_regret == 0.0));
    }

    #[test]
    fn seed_order_does_not_matter() {
        let mut a = generator_config(3, 300, 1);
        a.seeds = SeedSpec::List(vec![1, 2, 3, 4]);
        let mut b = a.clone();
        b.seeds = SeedSpec::List(vec![4, 2, 3, 1]);
        let ra = match run_experiment(&a).unwrap() {
            Report::Game(r) => r,
            _ => unreachable!(),
        };
        let rb = match run_experiment(&b).unwrap() {
            Report::Game(r) => r,
            _ => unreachable!(),
        };
        assert_eq!(ra.prot_loss, rb.prot_loss);
        assert_eq!(ra.per_step, rb.per_step);
    }

    #[test]
    fn mc_mean_tracks_exact_expectation() {
        let mut c = generator_config(4, 500, 2000);
        c.ifpl = true;
        let r = match run_experiment(&c).unwrap() {
            Report::Game(r) => r,
            _ => unreachable!(),
        };
        let exact = r.exact_expected_regret.unwrap();
        assert!((r.prot_regret.mean - exact).abs() <= 4.0 * r.prot_regret.se, "{:?} vs {exact}", r.prot_regret);
        assert!(r.all_hold, "{:?}", r.bounds);
        assert!(r.fluc.holds);
        assert!(r.bound("lemma2").is_some());
    }

    #[test]
    fn verify_bounds_exact() {
        let r = verify_bounds(&generator_config(3, 400, 1)).unwrap();
        assert!(r.all_hold, "{:?}", r.bounds);
        assert!(r.exact_prot_loss >= r.exact_ifpl_loss - 1e-9 || r.bounds.iter().all(|b| b.holds));
    }

    #[test]
    fn hannan_summability_warning() {
        let mut c = generator_config(2, 256, 2);
        c.schedule.gamma = GammaSchedule::Power { delta: 0.4 };
        c.game = GameSource::Generator { generator: GeneratorSpec::Bounded { num_experts: 2, horizon: 256, seed: 0 } };
        let r = hannan_check(&c).unwrap();
        assert!(r.warning.is_some());
        assert_eq!(r.checkpoints.last().unwrap().t, 256);
        c.schedule.gamma = GammaSchedule::Power { delta: 1.0 };
        assert!(hannan_check(&c).unwrap().warning.is_none());
    }

    #[test]
    fn probe_agrees() {
        let r = probe(&[0.0, 1.0, 0.5], 0.8, 200_000, 9).unwrap();
        assert!(r.max_deviation_se < 5.0, "{r:?}");
        assert!((r.exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(probe(&[], 1.0, 10, 0).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let text = r#"{
            "game": {"source": "generator", "generator": {"name": "bounded", "num_experts": 2, "horizon": 50}},
            "schedule": {"target_eps": 0.5, "gamma": {"kind": "power", "delta": 1.0}},
            "seeds": [3, 1],
            "regime": "once"
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.regime, Regime::Once);
        assert_eq!(c.se_multiplier, 3.0);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let missing =
            ExperimentConfig::new(GameSource::Csv { path: "/nonexistent/game.csv".into() }, c.schedule.clone());
        assert!(missing.validate().is_err());
    }
}
