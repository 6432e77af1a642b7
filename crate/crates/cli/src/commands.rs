use std::fs;
use std::io::{ErrorKind, Write};
use std::path::Path;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};

use privflow_core::cross_service::build_global_graph;
use privflow_core::facts::{write_facts, MANIFEST_FILE};
use privflow_core::pipeline::find_privileged_ops;
use privflow_core::reasoner::{load_rules, RemoteConfig, RemoteReasoner};
use privflow_core::search::{get_source, q_ast, q_cg, q_flow, q_name, CgDirection, NameMode};
use privflow_core::{
    load_program, scan, ElementId, ElementKind, Format, NodeRef, OracleRules, Program, Reasoner, ScanBudget,
    ScanOptions, ScriptedOracle, Trace,
};

use crate::{Cli, Command, FactsArgs, GraphArgs, OutputFormat, Query, QueryArgs, ReasonerArgs, ReasonerKind, ScanArgs};

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Scan(a) => run_scan(a),
        Command::Query(a) => run_query(a),
        Command::Graph(a) => run_graph(a),
        Command::Facts(a) => run_facts(a),
    }
}

fn load(dir: &Path) -> Result<Program> {
    load_program(dir).map_err(|e| anyhow!(e))
}

fn reasoner(args: &ReasonerArgs) -> Result<(Box<dyn Reasoner>, OracleRules)> {
    let rules = match &args.rules {
        Some(path) => load_rules(path).map_err(|e| anyhow!("{}: {e}", path.display()))?,
        None => OracleRules::defaults(),
    };
    let backend: Box<dyn Reasoner> = match args.reasoner {
        ReasonerKind::Scripted => Box::new(ScriptedOracle::new(rules.clone())),
        ReasonerKind::Remote => {
            let Some(url) = &args.remote_url else {
                bail!("--reasoner remote needs --remote-url or PRIVFLOW_REMOTE_URL");
            };
            let Some(model) = &args.model else {
                bail!("--reasoner remote needs --model or PRIVFLOW_MODEL");
            };
            if !(0.0..=2.0).contains(&args.temperature) {
                bail!("--temperature must be within 0..=2");
            }
            Box::new(RemoteReasoner::new(RemoteConfig::from_env(
                url,
                model,
                args.temperature,
            )))
        }
    };
    Ok((backend, rules))
}

/// Prints to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == ErrorKind::BrokenPipe => Ok(()),
        r => r.context("cannot write to stdout"),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn run_scan(a: ScanArgs) -> Result<u8> {
    if a.budget_calls == 0 || a.budget_seconds == 0 || a.budget_flows == 0 {
        bail!("budgets must be positive");
    }
    let program = load(&a.dir)?;
    let (backend, rules) = reasoner(&a.reasoner)?;
    let opts = ScanOptions {
        basic_sink: a.basic_sink,
        no_odctx: a.no_odctx,
        budget: ScanBudget {
            max_calls_per_phase: a.budget_calls,
            wall_clock: Duration::from_secs(a.budget_seconds),
            max_flows: a.budget_flows,
        },
        rules,
    };
    let out = scan(&program, backend.as_ref(), &opts)?;
    let format = match a.format {
        OutputFormat::Json => Format::Json,
        OutputFormat::Md => Format::Md,
    };
    let text = out.report.render(format);
    match &a.output {
        Some(path) => write(path, &text)?,
        None => emit(&text)?,
    }
    if let Some(path) = &a.trace {
        write(path, &out.trace.to_jsonl())?;
    }
    if let Some(dir) = &a.emit_smt {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (id, smt) in &out.smt {
            write(&dir.join(format!("{id}.smt2")), smt)?;
        }
    }
    Ok(out.report.exit_status().code() as u8)
}

fn elements_json<'a>(it: impl IntoIterator<Item = &'a privflow_core::Element>) -> Value {
    Value::Array(
        it.into_iter()
            .map(|e| {
                json!({
                    "id": e.id,
                    "kind": e.kind,
                    "name": e.name,
                    "location": e.location.to_string(),
                    "source": e.source,
                })
            })
            .collect(),
    )
}

fn run_query(a: QueryArgs) -> Result<u8> {
    let program = load(&a.dir)?;
    let s = program
        .service(&a.service)
        .ok_or_else(|| anyhow!("no service `{}` in the manifest", a.service))?;
    let result = match &a.query {
        Query::Name { pattern, regex } => {
            let mode = if *regex { NameMode::Regex } else { NameMode::Exact };
            elements_json(q_name(s, pattern, mode)?)
        }
        Query::Ast { kind } => {
            let k = ElementKind::parse(kind).ok_or_else(|| anyhow!("unknown element kind `{kind}`"))?;
            elements_json(q_ast(s, k))
        }
        Query::Flow { from, to } => serde_json::to_value(q_flow(s, from, to)?)?,
        Query::Cg {
            function,
            callers,
            depth,
        } => {
            let dir = if *callers {
                CgDirection::Callers
            } else {
                CgDirection::Callees
            };
            elements_json(q_cg(s, function, dir, *depth)?)
        }
        Query::Source { element } => Value::String(get_source(s, &ElementId::from(element.as_str()))?),
    };
    emit(&format!("{}\n", serde_json::to_string_pretty(&result)?))?;
    Ok(0)
}

fn run_graph(a: GraphArgs) -> Result<u8> {
    let program = load(&a.dir)?;
    let (backend, rules) = reasoner(&a.reasoner)?;
    let opts = ScanOptions {
        basic_sink: a.basic_sink,
        rules,
        ..ScanOptions::default()
    };
    let ops = find_privileged_ops(&program, backend.as_ref(), &opts, &mut Trace::new())?;
    let sinks: Vec<NodeRef> = ops
        .ops
        .iter()
        .map(|o| NodeRef::new(o.service.clone(), o.element.clone()))
        .collect();
    emit(&build_global_graph(&program, &sinks).to_dot(&program))?;
    Ok(0)
}

fn run_facts(a: FactsArgs) -> Result<u8> {
    let program = load(&a.dir)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let mut manifest = program.manifest.clone();
    for (entry, service) in manifest.services.iter_mut().zip(&program.services) {
        let file = format!("{}.facts.jsonl", entry.name);
        write(&a.out.join(&file), &write_facts(service))?;
        entry.files = vec![file];
    }
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write(&a.out.join(MANIFEST_FILE), &text)?;
    Ok(0)
}
