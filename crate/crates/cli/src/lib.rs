//! Command-line front end: `judge`, `benchmark`, `agreement`, `pair`,
//! `screen`, `export` and `plot`.
//!
//! Exit status: 0 on success, 1 on partial data failure, 2 on a
//! configuration or schema problem.

pub mod annotations;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{CommonArgs, Env, RunConfig};
use crate::error::{CliResult, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "radjudge", version, about = "Judge radiology reports with an LLM and check the judge against raters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Judge every pair in a JSONL file.
    Judge {
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Judge annotated pairs and correlate with the rater mean.
    Benchmark {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Column mapping for non-native annotation layouts.
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Leave-one-out and pairwise inter-rater tau-b.
    Agreement {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Build report pairs from a corpus.
    Pair {
        #[arg(long)]
        corpus: PathBuf,
        /// jsonl, csv or dir; guessed from the path when omitted.
        #[arg(long)]
        format: Option<String>,
        /// bleu_top or random.
        #[arg(long, default_value = "bleu_top")]
        mode: String,
        #[arg(long)]
        count: usize,
        /// Candidates scored per query; 0 scores every report.
        #[arg(long)]
        prune: Option<usize>,
    },
    /// Screen pairs for artifacts with a cheaper model.
    Screen {
        #[arg(long)]
        pairs: PathBuf,
        /// Screen template file; defaults to the bundled one.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Write prompt/completion JSONL from pairs and their judgments.
    Export {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        judgments: PathBuf,
    },
    /// Plot-ready CSV (and optional SVG) from a benchmark report or a
    /// three-column `id,a,b` CSV.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        svg: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Judge { .. } => "judge",
            Command::Benchmark { .. } => "benchmark",
            Command::Agreement { .. } => "agreement",
            Command::Pair { .. } => "pair",
            Command::Screen { .. } => "screen",
            Command::Export { .. } => "export",
            Command::Plot { .. } => "plot",
        }
    }
}

pub fn execute(cli: Cli, env: &Env) -> CliResult<u8> {
    let cfg = RunConfig::resolve(cli.command.name(), &cli.common, env)?;
    match &cli.command {
        Command::Judge { pairs } => commands::judge(cfg, pairs, cli.common.verbose),
        Command::Benchmark {
            pairs,
            annotations,
            mapping,
        } => commands::benchmark_cmd(cfg, pairs, annotations, mapping.as_deref()),
        Command::Agreement { annotations, mapping } => commands::agreement(cfg, annotations, mapping.as_deref()),
        Command::Pair {
            corpus,
            format,
            mode,
            count,
            prune,
        } => commands::pair(
            cfg,
            commands::PairArgs {
                corpus,
                format: format.as_deref(),
                mode,
                count: *count,
                prune: *prune,
            },
        ),
        Command::Screen { pairs, template } => commands::screen(cfg, pairs, template.as_deref()),
        Command::Export { pairs, judgments } => commands::export(cfg, pairs, judgments),
        Command::Plot { report, svg } => commands::plot(cfg, report, *svg),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit
/// status. Errors go to stderr.
pub fn run<I, T>(args: I, env: &Env) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(cli, env) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
