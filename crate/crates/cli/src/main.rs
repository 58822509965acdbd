use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use prot_fpl::games::GeneratorSpec;
use prot_fpl::harness::{
    hannan_check, probe, run_experiment, verify_bounds, ExperimentConfig, GameSource, Report, SeedSpec,
};
use prot_fpl::schedule::ScheduleConfig;
use prot_fpl::volatility::{FbmParams, PriceSource};
use prot_fpl::{GammaSchedule, LossMode, Regime};

#[derive(Parser)]
#[command(name = "prot", version, about = "Follow-the-perturbed-leader experiments with volume-scaled learning rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded PROT runs on a loss matrix, with bound checks.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        game: GameArgs,
        /// Also run IFPL.
        #[arg(long)]
        ifpl: bool,
    },
    /// The two-expert lower-bound adversary against PROT.
    Adversary {
        #[command(flatten)]
        common: Common,
        /// The adversary's epsilon in (0, 1).
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Zero-sum volatility trading on a price path.
    Trading {
        #[command(flatten)]
        common: Common,
        /// Price CSV with a single `price` column.
        #[arg(long, conflicts_with = "hurst")]
        prices: Option<PathBuf>,
        /// Hurst exponent of a generated fBm path.
        #[arg(long)]
        hurst: Option<f64>,
        #[arg(long, default_value_t = 4096)]
        steps: usize,
        #[arg(long, default_value_t = 10.0)]
        scale: f64,
        #[arg(long, default_value_t = 0.0)]
        drift: f64,
        #[arg(long, default_value_t = 100.0)]
        s0: f64,
        /// Position-scaling constant C.
        #[arg(long)]
        c: Option<f64>,
    },
    /// Exact expected regret against every applicable bound.
    VerifyBounds {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        game: GameArgs,
    },
    /// Normalized regret at 2^k checkpoints along long trajectories.
    Hannan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        game: GameArgs,
    },
    /// Exact selection probabilities against Monte Carlo.
    Probe {
        /// Cumulative losses, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        cumulative: Vec<f64>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed, or the base seed when combined with --seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    regime: Option<Regime>,
    /// power:DELTA or const:C
    #[arg(long)]
    gamma: Option<GammaSchedule>,
    #[arg(long)]
    target_eps: Option<f64>,
    #[arg(long)]
    loss_mode: Option<LossMode>,
    /// Output directory for report.json, trace.csv and aggregate.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GameArgs {
    /// Loss CSV with header expert_1..expert_N.
    #[arg(long, conflicts_with = "generator")]
    game: Option<PathBuf>,
    /// Generator: fluc-scaled, bounded or envelope.
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    experts: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Envelope exponent for the envelope generator.
    #[arg(long, default_value_t = 0.1)]
    exponent: f64,
    #[arg(long, default_value_t = 0)]
    game_seed: u64,
}

impl GameArgs {
    fn source(&self) -> Result<Option<GameSource>> {
        if let Some(path) = &self.game {
            return Ok(Some(GameSource::Csv { path: path.clone() }));
        }
        let Some(name) = &self.generator else {
            return Ok(None);
        };
        let num_experts = self.experts.unwrap_or(2);
        let horizon = self.horizon.unwrap_or(1000);
        let seed = self.game_seed;
        let generator = match name.as_str() {
            "fluc-scaled" | "fluc_scaled" => GeneratorSpec::FlucScaled { num_experts, horizon, seed, min_fill: 0.25 },
            "bounded" => GeneratorSpec::Bounded { num_experts, horizon, seed },
            "envelope" => GeneratorSpec::Envelope { num_experts, horizon, exponent: self.exponent, seed },
            other => bail!("unknown generator {other:?}, expected fluc-scaled|bounded|envelope"),
        };
        Ok(Some(GameSource::Generator { generator }))
    }
}

fn default_schedule() -> ScheduleConfig {
    ScheduleConfig {
        a: None,
        target_eps: Some(1.0),
        num_experts: None,
        gamma: GammaSchedule::Power { delta: 1.0 },
        v0: 0.0,
        loss_mode: LossMode::General,
    }
}

/// Loads the JSON config (or starts from `fallback`) and applies flag overrides.
fn build_config(common: &Common, fallback: Option<GameSource>, game: Option<GameSource>) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_json_path(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let source = game.clone().or(fallback).context("no game given: pass --config, --game or --generator")?;
            ExperimentConfig::new(source, default_schedule())
        }
    };
    if let Some(g) = game {
        config.game = g;
    }
    match (common.seed, common.seeds) {
        (Some(seed), None) => config.seeds = SeedSpec::List(vec![seed]),
        (base, Some(count)) => config.seeds = SeedSpec::Range { count, base: base.unwrap_or(0) },
        (None, None) => {}
    }
    if let Some(r) = common.regime {
        config.regime = r;
    }
    if let Some(g) = &common.gamma {
        config.schedule.gamma = g.clone();
    }
    if let Some(eps) = common.target_eps {
        config.schedule.target_eps = Some(eps);
        config.schedule.a = None;
    }
    if let Some(mode) = common.loss_mode {
        config.schedule.loss_mode = mode;
    }
    if let Some(out) = &common.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), format!("{json}\n"))?;
    }
    println!("{json}");
    Ok(())
}

fn print_report(report: &Report) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    if !report.all_hold() {
        eprintln!("warning: at least one checked inequality does not hold");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, game, ifpl } => {
            let mut config = build_config(&common, None, game.source()?)?;
            config.ifpl |= ifpl;
            print_report(&run_experiment(&config)?)?;
        }
        Command::Adversary { common, eps, horizon } => {
            let fallback = GameSource::Adversary { eps: 0.5, horizon: 30, v0: 1.0 };
            let mut config = build_config(&common, Some(fallback), None)?;
            if let GameSource::Adversary { eps: e, horizon: h, .. } = &mut config.game {
                *e = eps.unwrap_or(*e);
                *h = horizon.unwrap_or(*h);
            } else {
                bail!("the config's game source is not an adversary");
            }
            print_report(&run_experiment(&config)?)?;
        }
        Command::Trading { common, prices, hurst, steps, scale, drift, s0, c } => {
            let source = match (prices, hurst) {
                (Some(path), _) => Some(PriceSource::Csv { path }),
                (None, Some(h)) => Some(PriceSource::Fbm(FbmParams {
                    hurst: h,
                    steps,
                    scale,
                    drift,
                    s0,
                    seed: common.seed.unwrap_or(0),
                })),
                (None, None) => None,
            };
            let fallback = GameSource::Trading {
                prices: PriceSource::Fbm(FbmParams {
                    hurst: 0.8,
                    steps,
                    scale,
                    drift,
                    s0,
                    seed: common.seed.unwrap_or(0),
                }),
                c: 1.0,
            };
            let mut config = build_config(&common, Some(fallback), None)?;
            if common.config.is_none() {
                config.schedule.gamma = common.gamma.clone().unwrap_or(GammaSchedule::Constant { c: 0.01 });
                config.schedule.v0 = 1.0;
            }
            match &mut config.game {
                GameSource::Trading { prices: p, c: cc } => {
                    if let Some(s) = source {
                        *p = s;
                    }
                    *cc = c.unwrap_or(*cc);
                }
                _ => bail!("the config's game source is not a trading game"),
            }
            print_report(&run_experiment(&config)?)?;
        }
        Command::VerifyBounds { common, game } => {
            let config = build_config(&common, None, game.source()?)?;
            emit(&verify_bounds(&config)?, config.out.as_deref())?;
        }
        Command::Hannan { common, game } => {
            let config = build_config(&common, None, game.source()?)?;
            let report = hannan_check(&config)?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            emit(&report, config.out.as_deref())?;
        }
        Command::Probe { cumulative, eps, samples, seed, out } => {
            emit(&probe(&cumulative, eps, samples, seed)?, out.as_deref())?;
        }
    }
    Ok(())
}
