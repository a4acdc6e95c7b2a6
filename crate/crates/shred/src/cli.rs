//! The `shred` command line: `select`, `simulate` and `verify`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use shred_core::clustering::Linkage;
use shred_core::{Procedure, SlopeRule};

use crate::error::ShredError;
use crate::io::{CsvData, SelectReport, SelectedSet, VerifyReport};
use crate::models::{self, ModelError, ModelFamily};
use crate::pipeline::{self, Family, MethodSpec, TreeOptions};
use crate::simulation::{self, metrics, ScenarioConfig, ScenarioOutcome};
use crate::verify::{self, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "shred", version, about = "Setwise variable selection with generalized FDR control")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select predictor sets on a CSV dataset.
    Select(SelectArgs),
    /// Run a simulation scenario from a JSON config.
    Simulate(SimulateArgs),
    /// Check the pairwise weight decomposition on random small trees.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Bh,
    By,
    #[value(alias = "shred_arbitrary")]
    Arbitrary,
    #[value(alias = "shred_prds")]
    Prds,
    #[value(alias = "shredder", alias = "shredder_pprds")]
    Pprds,
    Heuristic,
    /// Uses the slope given by --alpha.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProcedureArg {
    Glsup,
    Mglsup,
}

impl From<ProcedureArg> for Procedure {
    fn from(p: ProcedureArg) -> Self {
        match p {
            ProcedureArg::Glsup => Procedure::Glsup,
            ProcedureArg::Mglsup => Procedure::Mglsup,
        }
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column; every other column is a predictor.
    #[arg(long)]
    pub response: String,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub family: ModelFamily,
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    #[arg(long, value_enum, default_value = "prds")]
    pub rule: RuleArg,
    /// Threshold slope for `--rule explicit`.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Defaults to mglsup for pprds and glsup otherwise.
    #[arg(long, value_enum)]
    pub procedure: Option<ProcedureArg>,
    #[arg(long, default_value = "complete")]
    pub linkage: Linkage,
    /// Drop merges whose correlation falls below this value.
    #[arg(long)]
    pub corr_cut: Option<f64>,
    /// Recorded in the report; selection itself draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path. Without it the report goes to stdout and the table to stderr.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario config (JSON).
    pub config: PathBuf,
    /// TSV metrics path. Without it the TSV goes to stdout and the summary to stderr.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = verify::MAX_LEAVES)]
    pub leaves_max: usize,
    #[arg(long, default_value_t = 200)]
    pub trees: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replace root weights by 2 so that the checks must fail.
    #[arg(long)]
    pub inject_nonmonotone: bool,
    /// JSON report path; defaults to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, ShredError> {
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(ShredError::Input("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ShredError::Input(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Select(args) => cmd_select(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), ShredError> {
    std::fs::write(path, contents).map_err(|e| ShredError::io(path, e))
}

fn slope_rule(args: &SelectArgs) -> Result<SlopeRule, ShredError> {
    if args.alpha.is_some() && args.rule != RuleArg::Explicit {
        return Err(ShredError::Input("--alpha is only used with --rule explicit".into()));
    }
    Ok(match args.rule {
        RuleArg::Bh => SlopeRule::Bh,
        RuleArg::By => SlopeRule::By,
        RuleArg::Arbitrary => SlopeRule::ShredArbitrary,
        RuleArg::Prds => SlopeRule::ShredPrds,
        RuleArg::Pprds => SlopeRule::ShredderPprds,
        RuleArg::Heuristic => SlopeRule::Heuristic,
        RuleArg::Explicit => match args.alpha {
            Some(a) => SlopeRule::Explicit(a),
            None => return Err(ShredError::Input("--rule explicit needs --alpha".into())),
        },
    })
}

/// Renames predictor indices in errors to column names.
fn describe(err: ShredError, data: &CsvData) -> ShredError {
    let names = |cols: &[usize]| data.names_of(cols).iter().map(|n| format!("`{n}`")).collect::<Vec<_>>().join(", ");
    match err {
        ShredError::Core(shred_core::Error::ConstantColumn(j)) => {
            ShredError::Input(format!("column `{}` is constant", data.names[j]))
        }
        ShredError::Model(ModelError::RankDeficient { columns }) => {
            ShredError::Numerical(format!("columns {} are linear combinations of earlier columns", names(&columns)))
        }
        other => other,
    }
}

pub fn build_report(args: &SelectArgs) -> Result<SelectReport, ShredError> {
    let rule = slope_rule(args)?;
    let method = MethodSpec { rule, procedure: args.procedure.map(Procedure::from) };
    let data = CsvData::from_path(&args.data, &args.response)?;
    if data.rows_dropped > 0 {
        eprintln!("dropped {} of {} rows with missing values", data.rows_dropped, data.rows_read);
    }
    let options = TreeOptions { linkage: args.linkage, corr_cut: args.corr_cut };
    let run = || -> Result<_, ShredError> {
        let tree = pipeline::build_tree(&data.x, options)?;
        let fits = models::all_cluster_pvalues(&tree, &data.x, &data.y, args.family)?;
        let family = Family::new(tree, fits.pvalues)?;
        let flat = if method.is_flat() { Some(family.flatten()?) } else { None };
        let chosen = flat.as_ref().unwrap_or(&family);
        let result = chosen.select(method.rule, method.procedure(), args.q)?;
        Ok((chosen.clone(), result))
    };
    let (family, result) = run().map_err(|e| describe(e, &data))?;

    let phi = family.weights.phi();
    let selected: Vec<SelectedSet> = result
        .selected
        .iter()
        .zip(&result.selected_sets)
        .map(|(&node, members)| SelectedSet {
            node,
            columns: data.names_of(members),
            p_value: family.pvalues.as_slice()[node],
            weight: phi[node],
        })
        .collect();
    Ok(SelectReport {
        response: data.response.clone(),
        family: args.family.name().to_string(),
        rule: rule.name().to_string(),
        procedure: result.procedure.name().to_string(),
        q: args.q,
        alpha: result.alpha,
        c_max: result.c_max,
        guaranteed: result.guaranteed,
        linkage: args.linkage.name().to_string(),
        corr_cut: args.corr_cut,
        seed: args.seed,
        rows_used: data.y.len(),
        rows_dropped: data.rows_dropped,
        hypotheses: family.tree.len(),
        rejected: result.rejected.len(),
        discoveries: selected.iter().map(|s| s.weight).sum(),
        selected,
    })
}

pub fn cmd_select(args: &SelectArgs) -> Result<i32, ShredError> {
    let report = build_report(args)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match &args.output {
        Some(path) => {
            write_file(path, &json)?;
            print!("{}", report.table());
        }
        None => {
            eprint!("{}", report.table());
            print!("{json}");
        }
    }
    Ok(0)
}

/// Human-readable summary of a scenario run.
pub fn summary_table(config: &ScenarioConfig, outcome: &ScenarioOutcome) -> String {
    let score = metrics::score_name(config.family);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} replicates ({} failed), n = {}, p = {}, T = {}, q = {}",
        outcome.replicates, outcome.failures, config.n, config.p, config.t, config.q
    );
    let width = outcome.records.iter().map(|r| r.method.len() + r.rule.len() + 3).max().unwrap_or(6).max(6);
    let _ = writeln!(out, "{:<width$}  {:>16}  {:>16}  {:>16}", "method", "gPower", "gFDR", score);
    for r in &outcome.records {
        let label = format!("{} ({})", r.method, r.rule);
        let cell = |s: &metrics::Summary| format!("{:.4} ± {:.4}", s.mean, s.se);
        let _ = writeln!(out, "{label:<width$}  {:>16}  {:>16}  {:>16}", cell(&r.gpower), cell(&r.gfdr), cell(&r.score));
    }
    for (r, msg) in &outcome.failure_messages {
        let _ = writeln!(out, "replicate {r} failed: {msg}");
    }
    out
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32, ShredError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| ShredError::io(&args.config, e))?;
    let config = ScenarioConfig::from_json(&text)?;
    let outcome = simulation::run_scenario(&config)?;
    let tsv = metrics::to_tsv(&outcome.records, config.family);
    let summary = summary_table(&config, &outcome);
    match &args.output {
        Some(path) => {
            write_file(path, &tsv)?;
            print!("{summary}");
        }
        None => {
            eprint!("{summary}");
            print!("{tsv}");
        }
    }
    Ok(0)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32, ShredError> {
    let report: VerifyReport = verify::run_verification(VerifyOptions {
        leaves_max: args.leaves_max,
        trees: args.trees,
        seed: args.seed,
        inject_nonmonotone: args.inject_nonmonotone,
    })?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match &args.output {
        Some(path) => write_file(path, &json)?,
        None => print!("{json}"),
    }
    eprintln!(
        "checked {} trees, {} upsets, {} collections: {} violations",
        report.trees_checked,
        report.upsets_checked,
        report.collections_checked,
        report.violations.len()
    );
    let _ = std::io::stdout().flush();
    Ok(if report.violations.is_empty() { 0 } else { 1 })
}
