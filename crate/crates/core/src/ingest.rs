//! Data entry points: scenario-shaped incentive signals, CSV import of
//! demand data, disaggregation of aggregate baselines into per-agent seed
//! plans, and the entropy window search over long price series.

use std::io::Read;
use std::path::PathBuf;
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SelectionFunction;
use crate::error::{Error, Result};
use crate::plangen::{derive_seed, GenerationScheme, Plan, PlanRole, RngSeed};
use crate::signal::{shannon_entropy, SignalKind, TransactiveSignal};

/// Regulatory scenario shaping the incentive signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scenario {
    /// Generation capacity ramps down: prices double over the mid-horizon
    /// plateau.
    RampDown,
    /// Ramp-down plus a generation-failure surcharge late in the horizon.
    GenerationFailure,
    /// The maximum-entropy window of a long noisy price series.
    MaxEntropy,
    /// The minimum-entropy (most concentrated) window of the same series.
    MinEntropy,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::RampDown,
        Scenario::GenerationFailure,
        Scenario::MaxEntropy,
        Scenario::MinEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::RampDown => "ramp-down",
            Scenario::GenerationFailure => "generation-failure",
            Scenario::MaxEntropy => "max-entropy",
            Scenario::MinEntropy => "min-entropy",
        }
    }

    /// Scenarios whose price windows sit on absolute indices of the
    /// reference 144-step grid need the horizon to reach index 80.
    fn windowed(self) -> bool {
        matches!(self, Scenario::RampDown | Scenario::GenerationFailure)
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp-down" => Ok(Scenario::RampDown),
            "generation-failure" => Ok(Scenario::GenerationFailure),
            "max-entropy" => Ok(Scenario::MaxEntropy),
            "min-entropy" => Ok(Scenario::MinEntropy),
            _ => Err(Error::InvalidConfig(format!(
                "unknown scenario '{s}' (expected ramp-down, generation-failure, max-entropy or min-entropy)"
            ))),
        }
    }
}

impl TryFrom<String> for Scenario {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> String {
        s.to_string()
    }
}

/// Where the per-agent baseline demand comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DataSource {
    /// Synthesize an aggregate baseline and disaggregate it.
    SyntheticAggregate,
    /// Read an aggregate `t,value` CSV and disaggregate it.
    CsvAggregate(PathBuf),
    /// Read per-agent loads from an `agent_id,t,value` CSV.
    CsvPerAgent(PathBuf),
    /// Read a long `t,value` series and hand each length-T day to one agent.
    CsvDailySplit(PathBuf),
}

impl DataSource {
    /// Short label without any path, safe for tags and file names.
    pub fn label(&self) -> &'static str {
        match self {
            DataSource::SyntheticAggregate => "synthetic",
            DataSource::CsvAggregate(_) => "aggregate",
            DataSource::CsvPerAgent(_) => "per-agent",
            DataSource::CsvDailySplit(_) => "daily",
        }
    }
}

impl std::fmt::Display for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataSource::SyntheticAggregate => f.write_str("synthetic"),
            DataSource::CsvAggregate(p) => write!(f, "aggregate:{}", p.display()),
            DataSource::CsvPerAgent(p) => write!(f, "per-agent:{}", p.display()),
            DataSource::CsvDailySplit(p) => write!(f, "daily:{}", p.display()),
        }
    }
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "synthetic" => Ok(DataSource::SyntheticAggregate),
            Some(("aggregate", p)) if !p.is_empty() => Ok(DataSource::CsvAggregate(p.into())),
            Some(("per-agent", p)) if !p.is_empty() => Ok(DataSource::CsvPerAgent(p.into())),
            Some(("daily", p)) if !p.is_empty() => Ok(DataSource::CsvDailySplit(p.into())),
            _ => Err(Error::InvalidConfig(format!(
                "unknown data source '{s}' (expected synthetic, aggregate:<path>, per-agent:<path> or daily:<path>)"
            ))),
        }
    }
}

impl TryFrom<String> for DataSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DataSource> for String {
    fn from(s: DataSource) -> String {
        s.to_string()
    }
}

/// How the uniform disaggregation draws an agent's share around the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisaggregationMode {
    /// Draw in [μ̂(1−ε), μ̂(1+ε)): heterogeneity centered on the uniform share.
    Symmetric,
    /// Draw in [μ̂, μ̂(1+2ε)): the transcribed one-sided variant.
    Literal,
}

/// Full configuration of one pipeline run.
///
/// Every field has a default, so a JSON config may name only the keys it
/// changes; unknown keys are rejected to catch typos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Horizon T (steps per signal).
    pub horizon: usize,
    /// Number of agents n.
    pub agents: u32,
    /// Tree arity k.
    pub arity: usize,
    /// Possible plans per agent p.
    pub plans: usize,
    pub scheme: GenerationScheme,
    pub selection: SelectionFunction,
    /// Disaggregation heterogeneity ε ∈ [0,1).
    pub epsilon: f64,
    pub seed: RngSeed,
    pub source: DataSource,
    /// Use the one-sided transcribed disaggregation draw.
    #[serde(rename = "literal-appendix-c")]
    pub literal_split: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: Scenario::RampDown,
            horizon: 144,
            agents: 10,
            arity: 3,
            plans: 4,
            scheme: GenerationScheme::Shuffle,
            selection: SelectionFunction::MinRmseUb2,
            epsilon: 0.2,
            seed: RngSeed(42),
            source: DataSource::SyntheticAggregate,
            literal_split: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidConfig("horizon must be at least 2".into()));
        }
        if self.agents == 0 {
            return Err(Error::InvalidConfig(
                "agent count must be at least 1".into(),
            ));
        }
        if self.arity == 0 {
            return Err(Error::InvalidConfig("tree arity must be at least 1".into()));
        }
        if self.plans == 0 {
            return Err(Error::InvalidConfig("plan count must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in [0,1), got {}",
                self.epsilon
            )));
        }
        self.scheme.validate(self.horizon)
    }

    pub fn disaggregation_mode(&self) -> DisaggregationMode {
        if self.literal_split {
            DisaggregationMode::Literal
        } else {
            DisaggregationMode::Symmetric
        }
    }

    /// Filesystem-safe provenance tag for reports and output directories.
    pub fn tag(&self) -> String {
        format!(
            "{}_{}_{}_{}_n{}_T{}_p{}_e{}_s{}",
            self.scenario,
            self.scheme.to_string().replace(':', "-"),
            self.selection,
            self.source.label(),
            self.agents,
            self.horizon,
            self.plans,
            self.epsilon,
            self.seed.0
        )
    }
}

/// A price series longer than one horizon, e.g. months of market data.
#[derive(Debug, Clone, PartialEq)]
pub struct LongTisSeries {
    values: Vec<f64>,
}

impl LongTisSeries {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySignal);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::NonPositiveValue { index, value });
            }
        }
        Ok(LongTisSeries { values })
    }

    /// Read a `t,value` CSV with positivity validation.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut values = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let row = i + 2;
            if record.len() != 2 {
                return Err(Error::CsvData {
                    row,
                    message: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let value: f64 = record[1].parse().map_err(|e| Error::CsvData {
                row,
                message: format!("bad value '{}': {e}", &record[1]),
            })?;
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::CsvData {
                    row,
                    message: format!("value must be positive and finite, got {value}"),
                });
            }
            values.push(value);
        }
        if values.is_empty() {
            return Err(Error::EmptySignal);
        }
        Ok(LongTisSeries { values })
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

/// Nudge the shares so their left-to-right floating-point sum equals the
/// target bit-exactly, keeping every share non-negative.
///
/// The closing share absorbs the correction: with the prefix fixed, moving
/// the last share by one of its rounding units moves the computed sum by at
/// most one rounding unit of the total, so the sweep below cannot step over
/// the target. If rounding drift pushed the prefix alone past the target,
/// the largest prefix share is shaved first so a non-negative closing share
/// exists.
fn reconcile_sum(shares: &mut [f64], target: f64) {
    let last = shares.len() - 1;
    for _ in 0..64 {
        let prefix: f64 = shares[..last].iter().sum();
        if prefix > target {
            let (idx, _) =
                shares[..last]
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    });
            let reduced = (shares[idx] - (prefix - target)).max(0.0);
            shares[idx] = if reduced == shares[idx] {
                shares[idx].next_down().max(0.0)
            } else {
                reduced
            };
            continue;
        }
        shares[last] = target - prefix;
        for _ in 0..64 {
            let sum: f64 = shares.iter().sum();
            if sum == target {
                return;
            }
            if sum < target {
                shares[last] = shares[last].next_up();
            } else if shares[last] > 0.0 {
                shares[last] = shares[last].next_down().max(0.0);
            } else {
                break; // sum still high with nothing left: shave the prefix
            }
        }
        if shares.iter().sum::<f64>() == target {
            return;
        }
    }
    debug_assert_eq!(
        shares.iter().sum::<f64>(),
        target,
        "sum reconciliation stalled"
    );
}

/// Split an aggregate baseline uniformly over n agents with heterogeneity ε.
///
/// Per time step the remaining mass x is handed out in agent order: agent i
/// targets the fair share μ̂ = x/(agents left) scattered by ε, capped at x;
/// the last agent takes the remainder. Per-step sums reproduce the aggregate
/// bit-exactly and every share is non-negative.
pub fn disaggregate_uniform(
    itfs: &TransactiveSignal,
    n: u32,
    epsilon: f64,
    seed: RngSeed,
    mode: DisaggregationMode,
) -> Result<Vec<Plan>> {
    if itfs.kind() != SignalKind::Itfs {
        return Err(Error::KindMismatch {
            expected: "iTFS",
            found: itfs.kind().name(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidConfig(
            "agent count must be at least 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must lie in [0,1), got {epsilon}"
        )));
    }
    let n = n as usize;
    let horizon = itfs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let mut per_agent = vec![vec![0.0; horizon]; n];
    let mut shares = vec![0.0; n];
    for (t, &total) in itfs.values().iter().enumerate() {
        let mut x = total;
        for (i, slot) in shares.iter_mut().enumerate().take(n - 1) {
            let fair = x / (n - i) as f64;
            let draw: f64 = rng.random();
            let d = match mode {
                DisaggregationMode::Symmetric => {
                    fair * (1.0 - epsilon) + draw * 2.0 * epsilon * fair
                }
                DisaggregationMode::Literal => fair + 2.0 * epsilon * fair * draw,
            };
            let d = d.min(x).max(0.0);
            *slot = d;
            x -= d;
        }
        shares[n - 1] = x.max(0.0);
        reconcile_sum(&mut shares, total);
        for (agent, &share) in per_agent.iter_mut().zip(&shares) {
            agent[t] = share;
        }
    }
    Ok(per_agent
        .into_iter()
        .enumerate()
        .map(|(i, values)| Plan::new_unchecked((i + 1) as u32, PlanRole::Possible, values))
        .collect())
}

/// Result of splitting a long series into per-agent days.
#[derive(Debug, Clone)]
pub struct DailySplit {
    pub plans: Vec<Plan>,
    /// Trailing values that did not fill a complete window.
    pub dropped: usize,
}

/// Hand each consecutive length-T window of a long series to one agent.
pub fn disaggregate_daily(series: &LongTisSeries, horizon: usize) -> Result<DailySplit> {
    if series.len() < horizon {
        return Err(Error::InsufficientData {
            needed: horizon,
            available: series.len(),
        });
    }
    let plans = series
        .values()
        .chunks_exact(horizon)
        .enumerate()
        .map(|(i, day)| Plan::new_unchecked((i + 1) as u32, PlanRole::Possible, day.to_vec()))
        .collect::<Vec<_>>();
    let dropped = series.len() % horizon;
    Ok(DailySplit { plans, dropped })
}

/// Base price level of the synthetic scenarios.
const BASE_PRICE: f64 = 10.0;

/// Reference grid the scenario windows are defined on.
const REFERENCE_HORIZON: usize = 144;

fn scale_index(reference: usize, horizon: usize) -> usize {
    ((reference * horizon) as f64 / REFERENCE_HORIZON as f64).round() as usize
}

/// Half-cosine edge: 0 before the window, 1 inside [lo, hi], smooth ramps of
/// width w on both sides.
fn plateau_edge(t: usize, lo: usize, hi: usize, w: usize) -> f64 {
    let t = t as f64;
    let (lo, hi, w) = (lo as f64, hi as f64, w as f64);
    if t >= lo && t <= hi {
        1.0
    } else if t > lo - w && t < lo {
        0.5 * (1.0 - (std::f64::consts::PI * (lo - t) / w).cos())
    } else if t > hi && t < hi + w {
        0.5 * (1.0 - (std::f64::consts::PI * (t - hi) / w).cos())
    } else {
        0.0
    }
}

fn check_window(scenario: Scenario, horizon: usize) -> Result<()> {
    if scenario.windowed() && horizon < 81 {
        return Err(Error::ScenarioWindow {
            horizon,
            required: 81,
        });
    }
    Ok(())
}

/// Price multiplier a scenario applies at step t: exactly 2 inside the
/// ramp-down plateau, exactly 1 far from it, smooth in between.
pub fn scenario_price_multiplier(scenario: Scenario, horizon: usize, t: usize) -> Result<f64> {
    check_window(scenario, horizon)?;
    if t >= horizon {
        return Err(Error::InvalidConfig(format!(
            "step {t} outside horizon {horizon}"
        )));
    }
    match scenario {
        Scenario::RampDown | Scenario::GenerationFailure => {
            let lo = scale_index(40, horizon);
            let hi = scale_index(80, horizon);
            let w = scale_index(4, horizon).max(2);
            Ok(1.0 + plateau_edge(t, lo, hi, w))
        }
        Scenario::MaxEntropy | Scenario::MinEntropy => Ok(1.0),
    }
}

/// Smooth positive base price: sinusoid (period T/3, amplitude 25%) plus 5%
/// seeded noise around the base level.
fn synth_base_price(horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..horizon)
        .map(|t| {
            let angle = 2.0 * std::f64::consts::PI * 3.0 * t as f64 / horizon as f64;
            let noise: f64 = rng.random_range(-1.0..1.0);
            BASE_PRICE * (1.0 + 0.25 * angle.sin()) + BASE_PRICE * 0.05 * noise
        })
        .collect()
}

/// Long noisy price series for the entropy scenarios: the base curve with
/// occasional price spikes and flat becalmed runs, so windows differ
/// meaningfully in how concentrated their values are.
fn synth_long_price_series(horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = (8 * horizon).max(2000);
    let mut values = Vec::with_capacity(len);
    let mut flat_left = 0usize;
    let mut flat_level = BASE_PRICE;
    for t in 0..len {
        if flat_left > 0 {
            flat_left -= 1;
            values.push(flat_level);
            continue;
        }
        let angle = 2.0 * std::f64::consts::PI * 3.0 * t as f64 / horizon as f64;
        let noise: f64 = rng.random_range(-1.0..1.0);
        let mut v = BASE_PRICE * (1.0 + 0.25 * angle.sin()) + BASE_PRICE * 0.05 * noise;
        let roll: f64 = rng.random();
        if roll < 0.5 / horizon as f64 {
            // Scarcity spike.
            v *= rng.random_range(5.0..20.0);
        } else if roll < 1.5 / horizon as f64 {
            // Becalmed market: hold the current level for a while.
            flat_left = rng.random_range(horizon / 4..horizon / 2);
            flat_level = v;
        }
        values.push(v);
    }
    values
}

/// Synthesize the scenario's incentive signal.
///
/// Ramp-down doubles the base price over the plateau scaled from [40,80] on
/// the 144-step reference grid; generation failure adds a 50% surcharge
/// plateau scaled from [60,80]; the entropy scenarios synthesize a long
/// noisy series and return its extremal-entropy window.
pub fn synth_tis(scenario: Scenario, horizon: usize, seed: RngSeed) -> Result<TransactiveSignal> {
    check_window(scenario, horizon)?;
    if horizon < 2 {
        return Err(Error::InvalidConfig("horizon must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    match scenario {
        Scenario::RampDown | Scenario::GenerationFailure => {
            let base = synth_base_price(horizon, &mut rng);
            let lo = scale_index(60, horizon);
            let hi = scale_index(80, horizon);
            let w = scale_index(4, horizon).max(2);
            let values: Vec<f64> = base
                .iter()
                .enumerate()
                .map(|(t, &b)| {
                    let mut v = b * scenario_price_multiplier(scenario, horizon, t)
                        .expect("window checked above");
                    if scenario == Scenario::GenerationFailure {
                        v += 0.5 * BASE_PRICE * plateau_edge(t, lo, hi, w);
                    }
                    v
                })
                .collect();
            TransactiveSignal::new(SignalKind::Tis, values)
        }
        Scenario::MaxEntropy | Scenario::MinEntropy => {
            let series = LongTisSeries::from_values(synth_long_price_series(horizon, &mut rng))?;
            let scan = entropy_window_search(&series, horizon)?;
            Ok(if scenario == Scenario::MaxEntropy {
                scan.max_window
            } else {
                scan.min_window
            })
        }
    }
}

/// Synthetic aggregate baseline demand for n agents at a level of one unit
/// per agent: a cycle on the same intraday period as the price carrier but
/// lagging it by a quarter period — load and price co-move with a delay, as
/// price formation follows demand — at 30% amplitude, plus 10% seeded noise.
pub fn synth_base_load(horizon: usize, n: u32, seed: RngSeed) -> Result<TransactiveSignal> {
    if horizon < 2 {
        return Err(Error::InvalidConfig("horizon must be at least 2".into()));
    }
    if n == 0 {
        return Err(Error::InvalidConfig(
            "agent count must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let values: Vec<f64> = (0..horizon)
        .map(|t| {
            let carrier = 2.0 * std::f64::consts::PI * 3.0 * t as f64 / horizon as f64;
            let noise: f64 = rng.random_range(-1.0..1.0);
            n as f64 * (1.0 + 0.3 * (carrier + std::f64::consts::FRAC_PI_2).sin() + 0.1 * noise)
        })
        .collect();
    TransactiveSignal::new(SignalKind::Itfs, values)
}

/// Extremal-entropy windows of a long series.
#[derive(Debug, Clone)]
pub struct EntropyScan {
    pub min_start: usize,
    pub min_entropy: f64,
    pub min_window: TransactiveSignal,
    pub max_start: usize,
    pub max_entropy: f64,
    pub max_window: TransactiveSignal,
}

/// Scan every consecutive length-T window and return the windows with the
/// minimal and maximal Shannon entropy; ties go to the earliest start.
pub fn entropy_window_search(series: &LongTisSeries, horizon: usize) -> Result<EntropyScan> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    if series.len() < horizon {
        return Err(Error::InsufficientData {
            needed: horizon,
            available: series.len(),
        });
    }
    let values = series.values();
    let mut min_start = 0;
    let mut min_entropy = f64::INFINITY;
    let mut max_start = 0;
    let mut max_entropy = f64::NEG_INFINITY;
    for start in 0..=values.len() - horizon {
        let h = shannon_entropy(&values[start..start + horizon])?;
        if h < min_entropy {
            min_entropy = h;
            min_start = start;
        }
        if h > max_entropy {
            max_entropy = h;
            max_start = start;
        }
    }
    let window = |start: usize| {
        TransactiveSignal::new(SignalKind::Tis, values[start..start + horizon].to_vec())
    };
    Ok(EntropyScan {
        min_start,
        min_entropy,
        min_window: window(min_start)?,
        max_start,
        max_entropy,
        max_window: window(max_start)?,
    })
}

/// Read per-agent loads from an `agent_id,t,value` CSV. Agent ids must form
/// 1..=n; every agent must cover the same 0..T step range exactly once.
pub fn read_per_agent_csv<R: Read>(reader: R) -> Result<Vec<Plan>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut by_agent: std::collections::BTreeMap<u32, std::collections::BTreeMap<usize, f64>> =
        std::collections::BTreeMap::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let row = i + 2;
        if record.len() != 3 {
            return Err(Error::CsvData {
                row,
                message: format!(
                    "expected 3 fields (agent_id,t,value), found {}",
                    record.len()
                ),
            });
        }
        let agent: u32 = record[0].parse().map_err(|e| Error::CsvData {
            row,
            message: format!("bad agent id '{}': {e}", &record[0]),
        })?;
        let t: usize = record[1].parse().map_err(|e| Error::CsvData {
            row,
            message: format!("bad time index '{}': {e}", &record[1]),
        })?;
        let value: f64 = record[2].parse().map_err(|e| Error::CsvData {
            row,
            message: format!("bad value '{}': {e}", &record[2]),
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::CsvData {
                row,
                message: format!("load must be non-negative and finite, got {value}"),
            });
        }
        if agent == 0 {
            return Err(Error::CsvData {
                row,
                message: "agent ids start at 1".into(),
            });
        }
        if by_agent
            .entry(agent)
            .or_default()
            .insert(t, value)
            .is_some()
        {
            return Err(Error::CsvData {
                row,
                message: format!("duplicate entry for agent {agent} at t={t}"),
            });
        }
    }
    if by_agent.is_empty() {
        return Err(Error::EmptySignal);
    }
    let n = *by_agent.keys().next_back().unwrap() as usize;
    if by_agent.len() != n {
        return Err(Error::MismatchedAgents {
            expected: n,
            found: by_agent.len(),
        });
    }
    let horizon = by_agent[&1].len();
    let mut plans = Vec::with_capacity(n);
    for (agent, steps) in by_agent {
        if steps.len() != horizon || *steps.keys().next_back().unwrap() != horizon - 1 {
            return Err(Error::LengthMismatch {
                expected: horizon,
                found: steps.len(),
            });
        }
        let values: Vec<f64> = steps.into_values().collect();
        plans.push(Plan::new_unchecked(agent, PlanRole::Possible, values));
    }
    Ok(plans)
}

/// Derivation domains for the independent RNG streams of one run.
pub(crate) mod seed_domain {
    pub const TIS: u64 = 1;
    pub const LOAD: u64 = 2;
    pub const DISAGGREGATION: u64 = 3;
    pub const PLANS: u64 = 4;
}

/// Stream seed for a domain within a run.
pub(crate) fn domain_seed(base: RngSeed, domain: u64, index: u64) -> RngSeed {
    RngSeed(derive_seed(base.0, domain, index))
}
