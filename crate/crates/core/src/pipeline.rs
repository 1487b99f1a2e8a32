//! End-to-end orchestration: one configured run from ingestion through
//! selection to evaluation, experiment grids over scenario/scheme/selection
//! axes, and the on-disk layout of results.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{build_tree, run_epos, EngineOptions, SelectionFunction};
use crate::error::{Error, Result};
use crate::ingest::{
    self, disaggregate_daily, disaggregate_uniform, read_per_agent_csv, synth_base_load, synth_tis,
    DataSource, LongTisSeries, Scenario, ScenarioConfig,
};
use crate::metrics::{
    aspect_correlation, mean_volatility_error, response, savings, Aspect, EvaluationReport,
};
use crate::plangen::{generate, GenerationScheme, Plan};
use crate::provision::{upper_bound_1, upper_bound_2, UpperBound, UpperBoundKind};
use crate::signal::{SignalKind, TransactiveSignal};

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: ScenarioConfig,
    pub tag: String,
    pub tis: TransactiveSignal,
    pub itfs: TransactiveSignal,
    pub etfs: TransactiveSignal,
    pub ub1: UpperBound,
    pub ub2: UpperBound,
    pub report_ub1: EvaluationReport,
    pub report_ub2: EvaluationReport,
    /// Selected plan per agent id, 1-based plan numbering.
    pub selections: BTreeMap<u32, usize>,
    pub warnings: Vec<String>,
    pub wall: Duration,
}

fn stage<T>(name: &'static str, value: Result<T>) -> Result<T> {
    value.map_err(|e| e.in_stage(name))
}

/// Load or synthesize the per-agent seed plans for a config.
fn seed_plans(config: &ScenarioConfig, warnings: &mut Vec<String>) -> Result<Vec<Plan>> {
    let n = config.agents;
    let horizon = config.horizon;
    match &config.source {
        DataSource::SyntheticAggregate => {
            let load = synth_base_load(
                horizon,
                n,
                ingest::domain_seed(config.seed, ingest::seed_domain::LOAD, 0),
            )?;
            disaggregate_uniform(
                &load,
                n,
                config.epsilon,
                ingest::domain_seed(config.seed, ingest::seed_domain::DISAGGREGATION, 0),
                config.disaggregation_mode(),
            )
        }
        DataSource::CsvAggregate(path) => {
            let file = fs::File::open(path)?;
            let aggregate = TransactiveSignal::read_csv(SignalKind::Itfs, file)?;
            if aggregate.len() != horizon {
                return Err(Error::LengthMismatch {
                    expected: horizon,
                    found: aggregate.len(),
                });
            }
            disaggregate_uniform(
                &aggregate,
                n,
                config.epsilon,
                ingest::domain_seed(config.seed, ingest::seed_domain::DISAGGREGATION, 0),
                config.disaggregation_mode(),
            )
        }
        DataSource::CsvPerAgent(path) => {
            let file = fs::File::open(path)?;
            let plans = read_per_agent_csv(file)?;
            if plans.len() != n as usize {
                return Err(Error::MismatchedAgents {
                    expected: n as usize,
                    found: plans.len(),
                });
            }
            if plans[0].len() != horizon {
                return Err(Error::LengthMismatch {
                    expected: horizon,
                    found: plans[0].len(),
                });
            }
            Ok(plans)
        }
        DataSource::CsvDailySplit(path) => {
            let file = fs::File::open(path)?;
            let series = LongTisSeries::read_csv(file)?;
            let split = disaggregate_daily(&series, horizon)?;
            if split.dropped > 0 {
                warnings.push(format!(
                    "daily split: {} trailing values dropped (incomplete window)",
                    split.dropped
                ));
            }
            if split.plans.len() < n as usize {
                return Err(Error::InsufficientData {
                    needed: n as usize,
                    available: split.plans.len(),
                });
            }
            if split.plans.len() > n as usize {
                warnings.push(format!(
                    "daily split: {} windows beyond the first {n} unused",
                    split.plans.len() - n as usize
                ));
            }
            Ok(split.plans.into_iter().take(n as usize).collect())
        }
    }
}

/// Execute one configured run: ingest demand, derive both upper bounds,
/// generate possible plans, run the selection engine over the tree and
/// evaluate the regulated signal against both references.
pub fn run_pipeline(config: &ScenarioConfig, options: &EngineOptions) -> Result<RunRecord> {
    let started = Instant::now();
    stage("config", config.validate())?;
    let mut warnings = Vec::new();

    let tis = stage(
        "ingest",
        synth_tis(
            config.scenario,
            config.horizon,
            ingest::domain_seed(config.seed, ingest::seed_domain::TIS, 0),
        ),
    )?;
    let plans = stage("ingest", seed_plans(config, &mut warnings))?;

    // The baseline is the exact agent-order sum of the seed plans.
    let mut totals = vec![0.0; config.horizon];
    for plan in &plans {
        for (total, &v) in totals.iter_mut().zip(plan.values()) {
            *total += v;
        }
    }
    let itfs = stage("ingest", TransactiveSignal::new(SignalKind::Itfs, totals))?;

    let ub1 = stage("provision", upper_bound_1(&tis, &itfs))?;
    let ub2 = stage("provision", upper_bound_2(&tis, &itfs))?;

    let mut per_agent = Vec::with_capacity(plans.len());
    for (i, plan) in plans.iter().enumerate() {
        let generated = stage(
            "plangen",
            generate(
                plan,
                config.scheme,
                config.plans,
                ingest::domain_seed(config.seed, ingest::seed_domain::PLANS, i as u64),
            ),
        )?;
        if !generated.duplicates.is_empty() {
            warnings.push(format!(
                "agent {}: generated plans {:?} duplicate the seed rotation",
                plan.owner(),
                generated.duplicates
            ));
        }
        per_agent.push(generated.plans);
    }

    let mut tree = stage("engine", build_tree(config.agents, config.arity))?;
    stage("engine", tree.assign_plans(per_agent))?;
    let outcome = stage(
        "engine",
        run_epos(&mut tree, config.selection, &tis, options),
    )?;

    let tag = config.tag();
    let report = |ub: &UpperBound| -> Result<EvaluationReport> {
        let (mean_error, volatility_error) = mean_volatility_error(&itfs, &outcome.etfs)?;
        Ok(EvaluationReport {
            response: response(&itfs, &outcome.etfs, &ub.signal)?,
            savings: savings(&tis, &itfs, &outcome.etfs, &ub.signal)?,
            mean_error,
            volatility_error,
            ub_kind: ub.kind,
            config_tag: tag.clone(),
        })
    };
    let report_ub1 = stage("metrics", report(&ub1))?;
    let report_ub2 = stage("metrics", report(&ub2))?;

    Ok(RunRecord {
        config: config.clone(),
        tag,
        tis,
        itfs,
        etfs: outcome.etfs,
        ub1,
        ub2,
        report_ub1,
        report_ub2,
        selections: outcome.selections,
        warnings,
        wall: started.elapsed(),
    })
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn signals_csv(record: &RunRecord) -> String {
    let mut out = String::from("t,itfs,etfs,ub1,ub2,tis\n");
    for t in 0..record.config.horizon {
        out.push_str(&format!(
            "{t},{},{},{},{},{}\n",
            record.itfs.values()[t],
            record.etfs.values()[t],
            record.ub1.values()[t],
            record.ub2.values()[t],
            record.tis.values()[t],
        ));
    }
    out
}

fn selections_csv(selections: &BTreeMap<u32, usize>) -> String {
    let mut out = String::from("agent_id,selected_plan_index\n");
    for (agent, plan) in selections {
        out.push_str(&format!("{agent},{plan}\n"));
    }
    out
}

/// The evaluation report of one run as a JSON value, one block per upper
/// bound, including the bound's constraint residuals.
pub fn report_json(record: &RunRecord) -> serde_json::Value {
    let side = |report: &EvaluationReport, ub: &UpperBound| {
        json!({
            "response": report.response,
            "savings": report.savings,
            "mean-error": report.mean_error,
            "volatility-error": report.volatility_error,
            "mean-residual": ub.mean_residual,
            "volatility-residual": ub.volatility_residual,
            "min-value": ub.min_value,
            "has-negative-values": ub.has_negative_values(),
        })
    };
    json!({
        "tag": record.tag,
        "ub1": side(&record.report_ub1, &record.ub1),
        "ub2": side(&record.report_ub2, &record.ub2),
        "warnings": record.warnings,
        "wall-seconds": record.wall.as_secs_f64(),
    })
}

/// Persist one run: `config.json`, `signals.csv`, `selections.csv` and
/// `report.json` under `dir`.
pub fn write_run(record: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(
        &dir.join("config.json"),
        serde_json::to_string_pretty(&record.config)?.as_bytes(),
    )?;
    write_atomic(&dir.join("signals.csv"), signals_csv(record).as_bytes())?;
    write_atomic(
        &dir.join("selections.csv"),
        selections_csv(&record.selections).as_bytes(),
    )?;
    write_atomic(
        &dir.join("report.json"),
        serde_json::to_string_pretty(&report_json(record))?.as_bytes(),
    )?;
    Ok(())
}

/// Read a `selections.csv` back into the agent→plan map.
pub fn read_selections_csv<R: Read>(reader: R) -> Result<BTreeMap<u32, usize>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut selections = BTreeMap::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let row = i + 2;
        if record.len() != 2 {
            return Err(Error::CsvData {
                row,
                message: format!(
                    "expected 2 fields (agent_id,selected_plan_index), found {}",
                    record.len()
                ),
            });
        }
        let agent: u32 = record[0].parse().map_err(|e| Error::CsvData {
            row,
            message: format!("bad agent id '{}': {e}", &record[0]),
        })?;
        let plan: usize = record[1].parse().map_err(|e| Error::CsvData {
            row,
            message: format!("bad plan index '{}': {e}", &record[1]),
        })?;
        if plan == 0 {
            return Err(Error::CsvData {
                row,
                message: "plan indices are 1-based".into(),
            });
        }
        if selections.insert(agent, plan).is_some() {
            return Err(Error::CsvData {
                row,
                message: format!("duplicate agent {agent}"),
            });
        }
    }
    if selections.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(selections)
}

/// How two runs' selections differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionDiff {
    pub differing: usize,
    pub total: usize,
}

impl SelectionDiff {
    pub fn fraction(&self) -> f64 {
        self.differing as f64 / self.total as f64
    }
}

/// Fraction of agents whose selected plan differs between two runs.
pub fn diff_selections(
    a: &BTreeMap<u32, usize>,
    b: &BTreeMap<u32, usize>,
) -> Result<SelectionDiff> {
    if a.len() != b.len() || a.keys().ne(b.keys()) {
        return Err(Error::MismatchedAgents {
            expected: a.len(),
            found: b.len(),
        });
    }
    let differing = a.iter().filter(|(agent, plan)| b[agent] != **plan).count();
    Ok(SelectionDiff {
        differing,
        total: a.len(),
    })
}

/// A cartesian sweep over the studied aspects. Empty axes fall back to the
/// base config's value, so a grid with all axes empty and one replication is
/// a single run. Replication r shifts the base seed by r, giving each
/// repetition fresh data streams.
///
/// Cell directories are named by the config tag; grids mixing two sources of
/// the same kind (e.g. two different aggregate files) should use separate
/// output roots, as the tag only records the source kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentGrid {
    pub base: ScenarioConfig,
    pub scenarios: Vec<Scenario>,
    pub schemes: Vec<GenerationScheme>,
    pub selections: Vec<SelectionFunction>,
    pub sources: Vec<DataSource>,
    pub replications: usize,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            base: ScenarioConfig::default(),
            scenarios: Vec::new(),
            schemes: Vec::new(),
            selections: Vec::new(),
            sources: Vec::new(),
            replications: 1,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "replications must be at least 1".into(),
            ));
        }
        self.base.validate()
    }

    /// Cell configs in deterministic row order: scenario, then scheme, then
    /// selection, then source, then replication.
    pub fn cells(&self) -> Vec<ScenarioConfig> {
        let scenarios: Vec<Scenario> = if self.scenarios.is_empty() {
            vec![self.base.scenario]
        } else {
            self.scenarios.clone()
        };
        let schemes: Vec<GenerationScheme> = if self.schemes.is_empty() {
            vec![self.base.scheme]
        } else {
            self.schemes.clone()
        };
        let selections: Vec<SelectionFunction> = if self.selections.is_empty() {
            vec![self.base.selection]
        } else {
            self.selections.clone()
        };
        let sources: Vec<DataSource> = if self.sources.is_empty() {
            vec![self.base.source.clone()]
        } else {
            self.sources.clone()
        };
        let mut cells = Vec::new();
        for &scenario in &scenarios {
            for &scheme in &schemes {
                for &selection in &selections {
                    for source in &sources {
                        for r in 0..self.replications {
                            let mut config = self.base.clone();
                            config.scenario = scenario;
                            config.scheme = scheme;
                            config.selection = selection;
                            config.source = source.clone();
                            config.seed = crate::plangen::RngSeed(self.base.seed.0 + r as u64);
                            cells.push(config);
                        }
                    }
                }
            }
        }
        cells
    }
}

/// Per-cell result kept in memory after the detailed artifacts are on disk.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report_ub1: EvaluationReport,
    pub report_ub2: EvaluationReport,
    pub ub2_min_value: f64,
    pub warnings: Vec<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub tag: String,
    pub config: ScenarioConfig,
    pub result: std::result::Result<RunSummary, String>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub cells: Vec<CellOutcome>,
}

impl GridOutcome {
    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.result.is_ok())
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }
}

fn run_cell(config: &ScenarioConfig, out: Option<&Path>, options: &EngineOptions) -> CellOutcome {
    let tag = config.tag();
    let result = run_pipeline(config, options).and_then(|record| {
        if let Some(root) = out {
            // Build the cell directory aside and move it into place whole.
            let tmp = root.join(format!(".tmp-{tag}"));
            if tmp.exists() {
                fs::remove_dir_all(&tmp)?;
            }
            write_run(&record, &tmp)?;
            let target = root.join(&tag);
            if target.exists() {
                fs::remove_dir_all(&target)?;
            }
            fs::rename(&tmp, &target)?;
        }
        Ok(RunSummary {
            report_ub1: record.report_ub1,
            report_ub2: record.report_ub2,
            ub2_min_value: record.ub2.min_value,
            warnings: record.warnings,
            wall_seconds: record.wall.as_secs_f64(),
        })
    });
    CellOutcome {
        tag,
        config: config.clone(),
        result: result.map_err(|e| e.to_string()),
    }
}

/// The flat per-cell report table: one row per attempted cell, failed cells
/// carrying their error message instead of metrics.
pub fn summary_csv(outcome: &GridOutcome) -> String {
    let mut out = String::from(
        "tag,scenario,scheme,selection,source,agents,horizon,plans,epsilon,seed,status,\
         response_ub1,savings_ub1,mean_error_ub1,volatility_error_ub1,\
         response_ub2,savings_ub2,mean_error_ub2,volatility_error_ub2,wall_seconds,error\n",
    );
    for cell in &outcome.cells {
        let c = &cell.config;
        let head = format!(
            "{},{},{},{},{},{},{},{},{},{}",
            cell.tag,
            c.scenario,
            c.scheme,
            c.selection,
            c.source.label(),
            c.agents,
            c.horizon,
            c.plans,
            c.epsilon,
            c.seed.0
        );
        match &cell.result {
            Ok(s) => out.push_str(&format!(
                "{head},ok,{},{},{},{},{},{},{},{},{},\n",
                s.report_ub1.response,
                s.report_ub1.savings,
                s.report_ub1.mean_error,
                s.report_ub1.volatility_error,
                s.report_ub2.response,
                s.report_ub2.savings,
                s.report_ub2.mean_error,
                s.report_ub2.volatility_error,
                s.wall_seconds
            )),
            Err(e) => out.push_str(&format!(
                "{head},failed,,,,,,,,,,\"{}\"\n",
                e.replace('"', "'")
            )),
        }
    }
    out
}

/// Per-aspect metric correlations over the successful cells, one row per
/// varying aspect and upper bound. Aspects whose correlation is undefined
/// (constant metrics) get a row explaining why instead of coefficients.
pub fn correlations_json(grid: &ExperimentGrid, outcome: &GridOutcome) -> serde_json::Value {
    let axes = [
        (Aspect::Scenario, grid.scenarios.len() > 1),
        (Aspect::GenerationScheme, grid.schemes.len() > 1),
        (Aspect::SelectionFunction, grid.selections.len() > 1),
        (Aspect::Dataset, grid.sources.len() > 1),
    ];
    let mut rows = Vec::new();
    for (aspect, varies) in axes {
        if !varies {
            continue;
        }
        for kind in [UpperBoundKind::Ub1, UpperBoundKind::Ub2] {
            let pool: Vec<EvaluationReport> = outcome
                .cells
                .iter()
                .filter_map(|c| c.result.as_ref().ok())
                .map(|s| match kind {
                    UpperBoundKind::Ub1 => s.report_ub1.clone(),
                    UpperBoundKind::Ub2 => s.report_ub2.clone(),
                })
                .collect();
            match aspect_correlation(aspect, &pool) {
                Ok(c) => rows.push(json!({
                    "aspect": aspect.name(),
                    "ub": kind.name(),
                    "r-response-savings": c.r_response_savings,
                    "r-error-response": c.r_error_response,
                    "r-error-savings": c.r_error_savings,
                })),
                Err(e) => rows.push(json!({
                    "aspect": aspect.name(),
                    "ub": kind.name(),
                    "undefined": e.to_string(),
                })),
            }
        }
    }
    serde_json::Value::Array(rows)
}

/// Run every grid cell, persisting artifacts under `out/<tag>/` when an
/// output root is given. Cell failures are recorded, not fatal; the summary
/// and correlation tables always cover the attempted cells.
pub fn run_grid(
    grid: &ExperimentGrid,
    out: Option<&Path>,
    options: &EngineOptions,
) -> Result<GridOutcome> {
    stage("config", grid.validate())?;
    if let Some(root) = out {
        fs::create_dir_all(root)?;
    }
    let cells = grid.cells();
    let outcomes: Vec<CellOutcome> = if options.parallel {
        cells
            .par_iter()
            .map(|c| run_cell(c, out, options))
            .collect()
    } else {
        cells.iter().map(|c| run_cell(c, out, options)).collect()
    };
    let outcome = GridOutcome { cells: outcomes };
    if let Some(root) = out {
        write_atomic(&root.join("summary.csv"), summary_csv(&outcome).as_bytes())?;
        write_atomic(
            &root.join("correlations.json"),
            serde_json::to_string_pretty(&correlations_json(grid, &outcome))?.as_bytes(),
        )?;
    }
    Ok(outcome)
}
