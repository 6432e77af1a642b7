mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Cross-service privilege-escalation scanner.
#[derive(Debug, Parser)]
#[command(name = "privflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a program directory and print a report.
    Scan(ScanArgs),
    /// Run one code-search primitive against a service.
    Query(QueryArgs),
    /// Print the global flow graph as DOT.
    Graph(GraphArgs),
    /// Export every service of a program as facts files.
    Facts(FactsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReasonerKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Md,
}

#[derive(Debug, Args)]
struct ReasonerArgs {
    #[arg(long, value_enum, default_value = "scripted")]
    reasoner: ReasonerKind,
    /// Oracle rules file (defaults to the built-in rules).
    #[arg(long, value_name = "FILE")]
    rules: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible endpoint, for `--reasoner remote`.
    #[arg(long, value_name = "URL", env = "PRIVFLOW_REMOTE_URL")]
    remote_url: Option<String>,
    /// Model name sent to the remote endpoint.
    #[arg(long, env = "PRIVFLOW_MODEL")]
    model: Option<String>,
    #[arg(long, default_value_t = 0.2)]
    temperature: f64,
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Directory containing privflow.manifest.json.
    dir: PathBuf,
    #[command(flatten)]
    reasoner: ReasonerArgs,
    /// Only the standard sink intrinsics count as privileged operations.
    #[arg(long)]
    basic_sink: bool,
    /// Classify checks without retrieving their implementations.
    #[arg(long)]
    no_odctx: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
    /// Write the report here instead of stdout.
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Write the tool-call trace as JSON lines.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Write one SMT-LIB file per flow with a path constraint.
    #[arg(long, value_name = "DIR")]
    emit_smt: Option<PathBuf>,
    /// Tool calls allowed per phase.
    #[arg(long, value_name = "N", default_value_t = 40)]
    budget_calls: u32,
    /// Wall-clock limit for the whole scan.
    #[arg(long, value_name = "N", default_value_t = 600)]
    budget_seconds: u64,
    /// Flows validated before the rest are truncated.
    #[arg(long, value_name = "N", default_value_t = 10_000)]
    budget_flows: usize,
}

#[derive(Debug, Args)]
struct QueryArgs {
    dir: PathBuf,
    /// Service to search.
    #[arg(long, short)]
    service: String,
    #[command(subcommand)]
    query: Query,
}

#[derive(Debug, Subcommand)]
enum Query {
    /// Elements by name (exact, or a full-match regex with --regex).
    Name {
        pattern: String,
        #[arg(long)]
        regex: bool,
    },
    /// Elements of one kind, e.g. `call` or `endpoint`.
    Ast { kind: String },
    /// Dataflow paths between two selectors (element id, or a name; names
    /// also select call sites of that callee).
    Flow { from: String, to: String },
    /// Callers or callees of a function.
    Cg {
        function: String,
        #[arg(long)]
        callers: bool,
        #[arg(long, default_value_t = 1)]
        depth: u32,
    },
    /// Source text of an element.
    Source { element: String },
}

#[derive(Debug, Args)]
struct GraphArgs {
    dir: PathBuf,
    #[command(flatten)]
    reasoner: ReasonerArgs,
    #[arg(long)]
    basic_sink: bool,
}

#[derive(Debug, Args)]
struct FactsArgs {
    dir: PathBuf,
    /// Output directory; receives one facts file per service and a manifest.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("privflow: error: {msg}");
            ExitCode::from(2)
        }
    }
}
