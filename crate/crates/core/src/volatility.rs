//! Zero-sum volatility trading on a discretized price path.
//!
//! Two experts hold `+/- 2C(S_t - S_0)` shares. Their one-step gains sum to
//! zero, and by the identity
//! `(S_T - S_0)^2 = sum 2(S_t - S_0) dS_t + sum dS_t^2`
//! expert 1 wins when macro volatility beats micro volatility and expert 2
//! wins otherwise. The Learner mixes them with PROT's exact selection
//! probabilities (gains are fed to PROT as negative losses).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::selection_probabilities_exact;
use crate::error::{Error, Result};
use crate::game::LossMatrix;
use crate::perturbation::RngSpec;
use crate::schedule::{GammaSchedule, ScheduleParams};

/// Stock prices `S_0..S_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if prices.len() < 2 {
            return Err(Error::validation(format!("a price series needs at least 2 points, got {}", prices.len())));
        }
        if let Some((t, &p)) = prices.iter().enumerate().find(|(_, p)| !p.is_finite()) {
            return Err(Error::NonFinite { location: format!("price {t}"), value: p });
        }
        Ok(Self { prices })
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// Number of price moves `M`.
    pub fn steps(&self) -> usize {
        self.prices.len() - 1
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.prices.windows(2).map(|w| w[1] - w[0])
    }

    /// Reads a single `price` column.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 1 || &headers[0] != "price" {
            return Err(Error::validation(format!("expected a single `price` column, got {headers:?}")));
        }
        let mut prices = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = rec.get(0).unwrap_or("");
            prices.push(field.parse().map_err(|_| Error::validation(format!("row {}: bad price {field:?}", k + 1)))?);
        }
        Self::new(prices)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["price"])?;
        for p in &self.prices {
            w.write_record([p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbmParams {
    pub hurst: f64,
    pub steps: usize,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default = "default_s0")]
    pub s0: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_scale() -> f64 {
    1.0
}

fn default_s0() -> f64 {
    100.0
}

impl FbmParams {
    pub fn new(hurst: f64, steps: usize, seed: u64) -> Self {
        Self { hurst, steps, scale: 1.0, drift: 0.0, s0: 100.0, seed }
    }
}

/// Autocovariance of unit fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Maps i.i.d. standard normals `z` to fractional Gaussian noise with unit
/// variance by the Durbin-Levinson recursion. The result equals `L z` where
/// `L` is the lower Cholesky factor of the Toeplitz increment covariance.
pub fn hosking_fgn(hurst: f64, z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut x = Vec::with_capacity(n);
    if n == 0 {
        return x;
    }
    let rho: Vec<f64> = (0..n).map(|k| fgn_autocovariance(hurst, k)).collect();
    let mut phi = vec![0.0; n];
    let mut prev = vec![0.0; n];
    let mut var = rho[0];
    x.push(var.sqrt() * z[0]);
    for i in 1..n {
        // phi[j - 1] holds phi_{i, j}
        let mut num = rho[i];
        for j in 1..i {
            num -= prev[j - 1] * rho[i - j];
        }
        let kappa = num / var;
        for j in 1..i {
            phi[j - 1] = prev[j - 1] - kappa * prev[i - j - 1];
        }
        phi[i - 1] = kappa;
        var *= 1.0 - kappa * kappa;
        let mean: f64 = (1..=i).map(|j| phi[j - 1] * x[i - j]).sum();
        x.push(mean + var.max(0.0).sqrt() * z[i]);
        std::mem::swap(&mut phi, &mut prev);
    }
    x
}

/// `S_t = s0 + scale * B_H(t/M) + drift * t/M` for `t = 0..M`.
pub fn fbm_generate(params: &FbmParams) -> Result<PriceSeries> {
    let h = params.hurst;
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::validation(format!("Hurst exponent must lie in (0, 1), got {h}")));
    }
    if params.steps == 0 {
        return Err(Error::validation("fBm path needs at least one step"));
    }
    let mut rng = RngSpec::new(params.seed, 0).rng();
    let z: Vec<f64> = (0..params.steps).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise = hosking_fgn(h, &z);
    let m = params.steps as f64;
    let unit = m.powf(-h);
    let mut prices = Vec::with_capacity(params.steps + 1);
    let mut b = 0.0;
    prices.push(params.s0);
    for (k, dx) in noise.iter().enumerate() {
        b += dx * unit;
        let t = (k + 1) as f64;
        prices.push(params.s0 + params.scale * b + params.drift * t / m);
    }
    PriceSeries::new(prices)
}

/// One-step gains `s1_t = 2C(S_t - S_0)(S_{t+1} - S_t)` for `t = 0..M-1`, and `s2 = -s1`.
pub fn expert_gains(prices: &PriceSeries, c: f64) -> (Vec<f64>, Vec<f64>) {
    let s0 = prices.prices[0];
    let s1: Vec<f64> = prices.prices.windows(2).map(|w| 2.0 * c * (w[0] - s0) * (w[1] - w[0])).collect();
    let s2 = s1.iter().map(|g| -g).collect();
    (s1, s2)
}

/// `|(S_T - S_0)^2 - sum 2(S_t - S_0) dS_t - sum dS_t^2|`.
pub fn volatility_identity_check(prices: &PriceSeries) -> f64 {
    let p = &prices.prices;
    let s0 = p[0];
    let lhs = (p[p.len() - 1] - s0).powi(2);
    let (mut cross, mut micro) = (0.0, 0.0);
    for w in p.windows(2) {
        let d = w[1] - w[0];
        cross += 2.0 * (w[0] - s0) * d;
        micro += d * d;
    }
    (lhs - cross - micro).abs()
}

pub fn identity_tolerance(prices: &PriceSeries) -> f64 {
    let p = &prices.prices;
    1e-9 * (p[p.len() - 1] - p[0]).powi(2).max(1.0)
}

/// Loss view of the trading game: column `i` holds `-s^i_t`.
pub fn trading_loss_matrix(prices: &PriceSeries, c: f64) -> Result<LossMatrix> {
    let (s1, s2) = expert_gains(prices, c);
    let l1: Vec<f64> = s1.iter().map(|g| -g).collect();
    let l2: Vec<f64> = s2.iter().map(|g| -g).collect();
    LossMatrix::from_columns(&[l1, l2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingConfig {
    /// Position-scaling constant `C`.
    pub c: f64,
    pub schedule: ScheduleParams,
    pub target_eps: f64,
}

impl TradingConfig {
    pub fn new(c: f64, schedule: ScheduleParams, target_eps: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::validation(format!("C must be positive, got {c}")));
        }
        if schedule.num_experts() != 2 {
            return Err(Error::LengthMismatch { expected: 2, got: schedule.num_experts() });
        }
        if !matches!(schedule.gamma(), GammaSchedule::Constant { .. }) {
            return Err(Error::validation("the trading game uses a constant gamma"));
        }
        if schedule.v0() <= 0.0 {
            return Err(Error::validation("the trading game needs v0 > 0 so the first learning rate is finite"));
        }
        if !(target_eps > 0.0) {
            return Err(Error::validation(format!("target eps must be positive, got {target_eps}")));
        }
        Ok(Self { c, schedule, target_eps })
    }

    /// The constant `gamma(t) = mu` of the trading analysis.
    pub fn gamma_level(&self) -> f64 {
        self.schedule.gamma().eval(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerGain {
    /// `G_t`, steps `1..M`.
    pub gains: Vec<f64>,
    pub total: f64,
    /// `P{I_t = 1}` per step.
    pub p1: Vec<f64>,
    /// `v_0..v_M`.
    pub volumes: Vec<f64>,
    pub fluc: Vec<f64>,
    /// Steps where `fluc(t)` exceeded the constant gamma.
    pub fluc_violations: Vec<usize>,
}

/// Derandomized Learner: `G_t = s1_t (P{I_t = 1} - P{I_t = 2})`.
pub fn learner_gain(prices: &PriceSeries, config: &TradingConfig) -> Result<LearnerGain> {
    let (s1, _) = expert_gains(prices, config.c);
    let params = &config.schedule;
    let gamma = config.gamma_level();
    let mut cum_loss = [0.0f64; 2];
    let mut v = params.v0();
    let mut volumes = Vec::with_capacity(s1.len() + 1);
    volumes.push(v);
    let mut gains = Vec::with_capacity(s1.len());
    let mut p1s = Vec::with_capacity(s1.len());
    let mut fluc = Vec::with_capacity(s1.len());
    let mut fluc_violations = Vec::new();
    let mut total = 0.0;
    for (k, &g1) in s1.iter().enumerate() {
        let t = k + 1;
        let eps = params.epsilon_t(t, v)?;
        let p = selection_probabilities_exact(&cum_loss, eps);
        let g = g1 * (p[0] - p[1]);
        total += g;
        gains.push(g);
        p1s.push(p[0]);
        cum_loss[0] -= g1;
        cum_loss[1] += g1;
        v += g1.abs();
        volumes.push(v);
        let f = g1.abs() / v;
        if f > gamma {
            fluc_violations.push(t);
        }
        fluc.push(f);
    }
    Ok(LearnerGain { gains, total, p1: p1s, volumes, fluc, fluc_violations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefensiveCheck {
    pub learner_total: f64,
    /// `|sum s1_t| - 2 mu^(1/2) sqrt((6 + eps)(1 + ln 2)) (sum |s1_t| + v0)`.
    pub lower_bound: f64,
    pub holds: bool,
}

pub fn defensive_check(prices: &PriceSeries, config: &TradingConfig, learner_total: f64) -> DefensiveCheck {
    let (s1, _) = expert_gains(prices, config.c);
    let net: f64 = s1.iter().sum();
    let turnover: f64 = s1.iter().map(|g| g.abs()).sum();
    let k = 2.0 * config.gamma_level().sqrt() * ((6.0 + config.target_eps) * (1.0 + 2f64.ln())).sqrt();
    let lower_bound = net.abs() - k * (turnover + config.schedule.v0());
    DefensiveCheck { learner_total, lower_bound, holds: learner_total >= lower_bound }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PriceSource {
    Csv { path: PathBuf },
    Fbm(FbmParams),
}

impl PriceSource {
    pub fn load(&self) -> Result<PriceSeries> {
        match self {
            PriceSource::Csv { path } => PriceSeries::read_csv_path(path),
            PriceSource::Fbm(p) => fbm_generate(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradingRow {
    pub t: usize,
    pub price: f64,
    pub s1_cum: f64,
    pub s2_cum: f64,
    pub learner_cum: f64,
    pub volume: f64,
    pub fluc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradingReport {
    pub rows: Vec<TradingRow>,
    pub identity_residual: f64,
    pub identity_tolerance: f64,
    pub fluc_violations: Vec<usize>,
    pub defensive: DefensiveCheck,
}

impl TradingReport {
    /// Writes `t,S,s1_cum,s2_cum,learner_cum,volume,fluc`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "S", "s1_cum", "s2_cum", "learner_cum", "volume", "fluc"])?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.price.to_string(),
                r.s1_cum.to_string(),
                r.s2_cum.to_string(),
                r.learner_cum.to_string(),
                r.volume.to_string(),
                r.fluc.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-step curves of both experts, the Learner and the volume.
/// Row `t` reports the price `S_t` and totals after `t` steps.
pub fn run_trading_experiment(config: &TradingConfig, prices: &PriceSeries) -> Result<TradingReport> {
    let (s1, s2) = expert_gains(prices, config.c);
    let learner = learner_gain(prices, config)?;
    let mut rows = Vec::with_capacity(s1.len() + 1);
    rows.push(TradingRow {
        t: 0,
        price: prices.prices[0],
        s1_cum: 0.0,
        s2_cum: 0.0,
        learner_cum: 0.0,
        volume: learner.volumes[0],
        fluc: 0.0,
    });
    let (mut c1, mut c2, mut cl) = (0.0, 0.0, 0.0);
    for k in 0..s1.len() {
        c1 += s1[k];
        c2 += s2[k];
        cl += learner.gains[k];
        rows.push(TradingRow {
            t: k + 1,
            price: prices.prices[k + 1],
            s1_cum: c1,
            s2_cum: c2,
            learner_cum: cl,
            volume: learner.volumes[k + 1],
            fluc: learner.fluc[k],
        });
    }
    Ok(TradingReport {
        rows,
        identity_residual: volatility_identity_check(prices),
        identity_tolerance: identity_tolerance(prices),
        defensive: defensive_check(prices, config, learner.total),
        fluc_violations: learner.fluc_violations,
    })
}
