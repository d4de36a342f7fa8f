//! Command-line front end for the litkg pipeline.
//!
//! One declarative JSON config drives everything. `litkg run` executes
//! every stage into a run directory; the stage subcommands run the same
//! stages in isolation and compose with each other through the artifacts
//! in that directory.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 stage failure.

use std::env;
use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use litkg::graph::GraphFormat;
use litkg::pipeline::{
    load_config, run_build_graph, run_eval, run_export, run_extract, run_fit_cp, run_fit_em,
    run_fit_lda, run_ingest, run_linkpred, run_pipeline, PipelineConfig, PipelineError,
    StageRecord,
};

/// Environment variable that overrides the config's completion endpoint.
/// It is applied before validation, so offline runs reject it like any
/// other endpoint. The companion secret variable (`LITKG_API_KEY`) is
/// reserved for embedders that wire in a remote client; this binary
/// bundles no network adapter and never reads it.
const ENDPOINT_VAR: &str = "LITKG_ENDPOINT";

#[derive(Parser)]
#[command(
    name = "litkg",
    version,
    about = "Builds and scores typed knowledge graphs from a literature corpus"
)]
struct Cli {
    /// Pipeline config file (JSON). Relative paths inside the config are
    /// resolved against the config file's directory.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Force offline mode regardless of what the config says.
    #[arg(long, global = true)]
    offline: bool,

    /// Override the config's random seed.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Run directory that receives (and supplies) stage artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage end to end and write the run manifest.
    Run,
    /// Load the corpus, apply exclusions and keyword filters, and cache
    /// cleaned text.
    Ingest,
    /// Extract entity mentions and candidate triples, then write
    /// co-occurrence statistics.
    Extract,
    /// Fit the topic model on the cleaned-text cache.
    FitLda,
    /// Fit the relation model on extracted candidates.
    FitEm,
    /// Build the evidence tensor and factorize it.
    FitCp,
    /// Score candidates and assemble the knowledge graph.
    BuildGraph,
    /// Judge prompts and sampled edges against the recorded review.
    Eval,
    /// Train the link-prediction models and write the ranking report.
    Linkpred,
    /// Re-export the built graph in another format.
    Export {
        /// Output format: graphml, jsonl, or tsv.
        #[arg(long, default_value = "graphml", value_name = "FORMAT")]
        format: String,
        /// Write to this file instead of stdout.
        #[arg(long, value_name = "PATH")]
        dest: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = err.source();
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            match err {
                PipelineError::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), PipelineError> {
    match &cli.command {
        Command::Run => {
            let config = effective_config(cli)?;
            let manifest = run_pipeline(&config, &cli.out)?;
            print_stages(&manifest.stages);
            println!("config-hash\t{}", manifest.config_hash);
            println!("run directory\t{}", cli.out.display());
            Ok(())
        }
        Command::Ingest => stage_list(cli, |c, out| run_ingest(c, out)),
        Command::Extract => stage_list(cli, |c, out| run_extract(c, out, None)),
        Command::FitLda => stage_one(cli, |c, out| run_fit_lda(c, out)),
        Command::FitEm => stage_one(cli, |c, out| run_fit_em(c, out)),
        Command::FitCp => stage_one(cli, |c, out| run_fit_cp(c, out)),
        Command::BuildGraph => stage_one(cli, |c, out| run_build_graph(c, out)),
        Command::Eval => stage_one(cli, |c, out| run_eval(c, out)),
        Command::Linkpred => stage_one(cli, |c, out| run_linkpred(c, out)),
        Command::Export { format, dest } => {
            let format = GraphFormat::from_str(format)
                .map_err(|err| PipelineError::Config(err.to_string()))?;
            let rendered = run_export(&cli.out, format, dest.as_deref())?;
            match dest {
                Some(_) => println!("wrote\t{rendered}"),
                None => print!("{rendered}"),
            }
            Ok(())
        }
    }
}

/// Loads the config named by `--config` and applies the command-line and
/// environment overrides. The endpoint override lands before validation
/// so the offline guard sees it.
fn effective_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let path = cli.config.as_ref().ok_or_else(|| {
        PipelineError::Config("--config <PATH> is required for this subcommand".to_string())
    })?;
    let mut config = load_config(path).map_err(|err| match err {
        // A config file that cannot be read is a usage problem, not a
        // stage failure.
        PipelineError::Io { path, source } => {
            PipelineError::Config(format!("cannot read config {path}: {source}"))
        }
        other => other,
    })?;
    match env::var(ENDPOINT_VAR) {
        Ok(endpoint) if !endpoint.is_empty() => config.endpoint = Some(endpoint),
        _ => {}
    }
    if cli.offline {
        config.offline = true;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn stage_list(
    cli: &Cli,
    run: impl FnOnce(&PipelineConfig, &Path) -> Result<Vec<StageRecord>, PipelineError>,
) -> Result<(), PipelineError> {
    let config = effective_config(cli)?;
    let records = run(&config, &cli.out)?;
    print_stages(&records);
    Ok(())
}

fn stage_one(
    cli: &Cli,
    run: impl FnOnce(&PipelineConfig, &Path) -> Result<StageRecord, PipelineError>,
) -> Result<(), PipelineError> {
    let config = effective_config(cli)?;
    let record = run(&config, &cli.out)?;
    print_stages(std::slice::from_ref(&record));
    Ok(())
}

fn print_stages(records: &[StageRecord]) {
    for record in records {
        if record.detail.is_empty() {
            println!("{}\t{}", record.stage, record.status);
        } else {
            println!("{}\t{}\t{}", record.stage, record.status, record.detail);
        }
    }
}
