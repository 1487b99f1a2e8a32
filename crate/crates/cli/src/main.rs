//! Command line front end for the demand-regulation simulator.
//!
//! Five verbs cover the workflow:
//!
//! - `run`: one end-to-end simulation (disaggregate → generate plans →
//!   hierarchical selection → evaluate), optionally persisted to a directory.
//! - `grid`: a cartesian sweep over scenarios, schemes, selection functions,
//!   data sources and replications, emitting a flat per-cell report table and
//!   per-aspect metric correlations.
//! - `diff`: the fraction of agents whose selected plan differs between two
//!   persisted runs.
//! - `entropy-scan`: locate the minimum- and maximum-entropy incentive
//!   windows inside a long price series.
//! - `diversity`: sample the positional-diversity distribution of the plan
//!   generation schemes.
//!
//! Every scenario flag mirrors a key of the JSON config file; flags override
//! the file. Exit status is zero only if every requested run completed and
//! every constructed upper bound satisfied its constraint residuals (the
//! bounds are checked at construction, so any violation fails the run).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use selfreg_core::engine::{EngineOptions, SelectionFunction};
use selfreg_core::ingest::{
    entropy_window_search, DataSource, LongTisSeries, Scenario, ScenarioConfig,
};
use selfreg_core::pipeline::{
    correlations_json, diff_selections, read_selections_csv, report_json, run_grid, run_pipeline,
    summary_csv, write_run, ExperimentGrid,
};
use selfreg_core::plangen::{diversity_distribution, GenerationScheme, RngSeed};
use selfreg_core::signal::population_std;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "selfreg",
    version,
    about = "Self-regulating demand: agents pick consumption plans against a price incentive"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single end-to-end run and print its evaluation report
    Run(RunArgs),
    /// Run every cell of an experiment grid and emit the report table
    Grid(GridArgs),
    /// Compare two selections.csv files agent by agent
    Diff(DiffArgs),
    /// Find the extreme-entropy windows of a long incentive series
    EntropyScan(EntropyScanArgs),
    /// Sample the positional-diversity distribution of generation schemes
    Diversity(DiversityArgs),
}

/// Adapter from the library's `FromStr` types to clap's string-error parser.
fn parse_flag<T>(s: &str) -> std::result::Result<T, String>
where
    T: FromStr + Clone + Send + Sync + 'static,
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

/// Scenario parameters. Each flag mirrors the JSON config key of the same
/// name and takes precedence over the file.
#[derive(Args)]
struct ConfigFlags {
    /// JSON config file mirroring these flags
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// ramp-down, generation-failure, max-entropy or min-entropy
    #[arg(long, value_parser = parse_flag::<Scenario>)]
    scenario: Option<Scenario>,
    /// shuffle, shift:<step> or swap:<pairs>
    #[arg(long, value_parser = parse_flag::<GenerationScheme>)]
    scheme: Option<GenerationScheme>,
    /// min-rmse-ub1, min-rmse-ub2 or min-cost
    #[arg(long, value_parser = parse_flag::<SelectionFunction>)]
    selection: Option<SelectionFunction>,
    /// Number of agents n
    #[arg(long)]
    agents: Option<u32>,
    /// Tree arity k
    #[arg(long)]
    arity: Option<usize>,
    /// Plans per agent p, including the inelastic seed plan
    #[arg(long)]
    plans: Option<usize>,
    /// Time steps per run T
    #[arg(long)]
    horizon: Option<usize>,
    /// Disaggregation heterogeneity in [0, 1)
    #[arg(long)]
    epsilon: Option<f64>,
    /// Base RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// synthetic, aggregate:<path>, per-agent:<path> or daily:<path>
    #[arg(long, value_parser = parse_flag::<DataSource>)]
    source: Option<DataSource>,
    /// Disaggregate with the one-sided transcribed draw instead of the
    /// symmetric one
    #[arg(
        long = "literal-appendix-c",
        num_args = 0..=1,
        default_missing_value = "true",
        value_name = "BOOL"
    )]
    literal_appendix_c: Option<bool>,
}

impl ConfigFlags {
    fn apply(&self, config: &mut ScenarioConfig) {
        if let Some(v) = self.scenario {
            config.scenario = v;
        }
        if let Some(v) = self.scheme {
            config.scheme = v;
        }
        if let Some(v) = self.selection {
            config.selection = v;
        }
        if let Some(v) = self.agents {
            config.agents = v;
        }
        if let Some(v) = self.arity {
            config.arity = v;
        }
        if let Some(v) = self.plans {
            config.plans = v;
        }
        if let Some(v) = self.horizon {
            config.horizon = v;
        }
        if let Some(v) = self.epsilon {
            config.epsilon = v;
        }
        if let Some(v) = self.seed {
            config.seed = RngSeed(v);
        }
        if let Some(v) = &self.source {
            config.source = v.clone();
        }
        if let Some(v) = self.literal_appendix_c {
            config.literal_split = v;
        }
    }

    /// The effective single-run config: file (or defaults), then flags.
    fn scenario_config(&self) -> Result<ScenarioConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ScenarioConfig::default(),
        };
        self.apply(&mut config);
        Ok(config)
    }
}

/// Execution controls shared by `run` and `grid`.
#[derive(Args)]
struct EngineFlags {
    /// Evaluate grid cells and tree levels concurrently (default for grid;
    /// results are bit-identical either way)
    #[arg(long, conflicts_with = "sequential")]
    parallel: bool,
    /// Force fully sequential execution
    #[arg(long)]
    sequential: bool,
    /// Cap on plan combinations scanned per parent node
    #[arg(long, value_name = "N")]
    budget: Option<u64>,
    /// Worker threads for concurrent execution (default: all cores)
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

impl EngineFlags {
    fn options(&self, default_parallel: bool) -> EngineOptions {
        let parallel = if self.parallel {
            true
        } else if self.sequential {
            false
        } else {
            default_parallel
        };
        let mut options = EngineOptions {
            parallel,
            ..EngineOptions::default()
        };
        if let Some(budget) = self.budget {
            options.combination_budget = budget;
        }
        options
    }

    fn install_workers(&self) -> Result<()> {
        if let Some(n) = self.workers {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the worker pool")?;
        }
        Ok(())
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigFlags,
    #[command(flatten)]
    engine: EngineFlags,
    /// Directory for config.json, signals.csv, selections.csv and report.json
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Base config flags; the JSON file here is a grid file (base config
    /// plus axes), not a single-run config
    #[command(flatten)]
    base: ConfigFlags,
    #[command(flatten)]
    engine: EngineFlags,
    /// Scenario axis (comma separated); empty means the base scenario
    #[arg(long, value_delimiter = ',', value_parser = parse_flag::<Scenario>)]
    scenarios: Vec<Scenario>,
    /// Scheme axis (comma separated)
    #[arg(long, value_delimiter = ',', value_parser = parse_flag::<GenerationScheme>)]
    schemes: Vec<GenerationScheme>,
    /// Selection-function axis (comma separated)
    #[arg(long, value_delimiter = ',', value_parser = parse_flag::<SelectionFunction>)]
    selections: Vec<SelectionFunction>,
    /// Data-source axis; repeat the flag for paths containing commas
    #[arg(long, value_delimiter = ',', value_parser = parse_flag::<DataSource>)]
    sources: Vec<DataSource>,
    /// Repetitions per cell; replication r runs with the base seed plus r
    #[arg(long, value_name = "R")]
    replications: Option<usize>,
    /// Output root: one directory per cell plus summary.csv and
    /// correlations.json; omit to print the tables instead
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl GridArgs {
    /// The effective grid: grid file (or defaults), base flags applied to
    /// the base config, axis flags replacing the file's axes.
    fn grid(&self) -> Result<ExperimentGrid> {
        let mut grid = match &self.base.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading grid config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing grid config {}", path.display()))?
            }
            None => ExperimentGrid::default(),
        };
        self.base.apply(&mut grid.base);
        if !self.scenarios.is_empty() {
            grid.scenarios = self.scenarios.clone();
        }
        if !self.schemes.is_empty() {
            grid.schemes = self.schemes.clone();
        }
        if !self.selections.is_empty() {
            grid.selections = self.selections.clone();
        }
        if !self.sources.is_empty() {
            grid.sources = self.sources.clone();
        }
        if let Some(r) = self.replications {
            grid.replications = r;
        }
        Ok(grid)
    }
}

#[derive(Args)]
struct DiffArgs {
    /// First selections.csv
    a: PathBuf,
    /// Second selections.csv
    b: PathBuf,
}

#[derive(Args)]
struct EntropyScanArgs {
    /// Two-column (t,value) CSV of the long incentive series
    series: PathBuf,
    /// Window length in time steps
    #[arg(long, default_value_t = 144)]
    horizon: usize,
    /// Directory for the extracted min_window.csv and max_window.csv
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiversityArgs {
    /// Schemes to sample (comma separated); defaults to shuffle, shift:10,
    /// shift:20, swap:15, swap:30
    #[arg(long = "scheme", value_delimiter = ',', value_parser = parse_flag::<GenerationScheme>)]
    schemes: Vec<GenerationScheme>,
    /// Plan length in time steps
    #[arg(long, default_value_t = 144)]
    horizon: usize,
    /// Samples per scheme
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// RNG seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// CSV file for the raw samples (scheme,sample,diversity)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    args.engine.install_workers()?;
    let config = args.config.scenario_config()?;
    let record = run_pipeline(&config, &args.engine.options(false))?;
    for warning in &record.warnings {
        eprintln!("warning: {warning}");
    }
    if let Some(dir) = &args.out {
        write_run(&record, dir)?;
        eprintln!("artifacts written to {}", dir.display());
    }
    println!("{}", serde_json::to_string_pretty(&report_json(&record))?);
    Ok(())
}

fn cmd_grid(args: &GridArgs) -> Result<()> {
    args.engine.install_workers()?;
    let grid = args.grid()?;
    let outcome = run_grid(&grid, args.out.as_deref(), &args.engine.options(true))?;
    match &args.out {
        Some(root) => eprintln!("grid artifacts written to {}", root.display()),
        None => {
            print!("{}", summary_csv(&outcome));
            println!(
                "{}",
                serde_json::to_string_pretty(&correlations_json(&grid, &outcome))?
            );
        }
    }
    let total = outcome.cells.len();
    let failed = outcome.failed();
    eprintln!("{} of {total} cells ok", total - failed);
    for cell in outcome.cells.iter().filter(|c| c.result.is_err()) {
        eprintln!(
            "failed: {} — {}",
            cell.tag,
            cell.result.as_ref().unwrap_err()
        );
    }
    if failed > 0 {
        bail!("{failed} of {total} cells failed");
    }
    Ok(())
}

fn read_selections(path: &Path) -> Result<std::collections::BTreeMap<u32, usize>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_selections_csv(file).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_diff(args: &DiffArgs) -> Result<()> {
    let a = read_selections(&args.a)?;
    let b = read_selections(&args.b)?;
    let diff = diff_selections(&a, &b)?;
    println!(
        "{} of {} selections differ (fraction {})",
        diff.differing,
        diff.total,
        diff.fraction()
    );
    Ok(())
}

fn cmd_entropy_scan(args: &EntropyScanArgs) -> Result<()> {
    let file = fs::File::open(&args.series)
        .with_context(|| format!("opening {}", args.series.display()))?;
    let series = LongTisSeries::read_csv(file)
        .with_context(|| format!("parsing {}", args.series.display()))?;
    let scan = entropy_window_search(&series, args.horizon)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        scan.min_window
            .write_csv(fs::File::create(dir.join("min_window.csv"))?)?;
        scan.max_window
            .write_csv(fs::File::create(dir.join("max_window.csv"))?)?;
        eprintln!("windows written to {}", dir.display());
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "series-length": series.len(),
            "horizon": args.horizon,
            "min": { "start": scan.min_start, "entropy-bits": scan.min_entropy },
            "max": { "start": scan.max_start, "entropy-bits": scan.max_entropy },
        }))?
    );
    Ok(())
}

fn cmd_diversity(args: &DiversityArgs) -> Result<()> {
    let schemes = if args.schemes.is_empty() {
        vec![
            GenerationScheme::Shuffle,
            GenerationScheme::Shift { step: 10 },
            GenerationScheme::Shift { step: 20 },
            GenerationScheme::Swap { pairs: 15 },
            GenerationScheme::Swap { pairs: 30 },
        ]
    } else {
        args.schemes.clone()
    };
    let mut raw = String::from("scheme,sample,diversity\n");
    println!("scheme,mean,std,min,max");
    for &scheme in &schemes {
        let samples =
            diversity_distribution(scheme, args.horizon, args.samples, RngSeed(args.seed))?;
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let std = population_std(&samples);
        let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{scheme},{mean},{std},{min},{max}");
        for (i, d) in samples.iter().enumerate() {
            raw.push_str(&format!("{scheme},{i},{d}\n"));
        }
    }
    if let Some(path) = &args.out {
        fs::write(path, raw).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("samples written to {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Diff(args) => cmd_diff(args),
        Command::EntropyScan(args) => cmd_entropy_scan(args),
        Command::Diversity(args) => cmd_diversity(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
