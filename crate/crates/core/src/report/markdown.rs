use std::fmt::Write as _;

use serde_json::Value;

use super::Report;

const SNIPPET_WIDTH: usize = 100;

pub fn render_markdown(report: &Report) -> String {
    render_markdown_value(&serde_json::to_value(report).expect("reports serialize"))
}

fn s(v: &Value) -> &str {
    v.as_str().unwrap_or("")
}

fn n(v: &Value) -> u64 {
    v.as_u64().unwrap_or(0)
}

fn loc(v: &Value) -> String {
    format!("{}:{}:{}", s(&v["file"]), n(&v["line"]), n(&v["col"]))
}

fn snippet(text: &str) -> String {
    let first = text.lines().next().unwrap_or("").trim();
    let mut out: String = first.chars().take(SNIPPET_WIDTH).collect();
    if first.chars().count() > SNIPPET_WIDTH || text.trim().lines().count() > 1 {
        out.push_str(" ...");
    }
    out.replace('`', "'")
}

fn arr(v: &Value) -> &[Value] {
    v.as_array().map_or(&[], Vec::as_slice)
}

/// Markdown view of a report JSON value.
pub fn render_markdown_value(r: &Value) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "# privflow report\n");
    let _ = writeln!(o, "- schema: {}", n(&r["schema"]));
    let _ = writeln!(o, "- reasoner: `{}`", s(&r["reasoner"]));
    let opts = &r["options"];
    let mut modes = Vec::new();
    if opts["basic_sink"].as_bool() == Some(true) {
        modes.push("basic-sink");
    }
    if opts["no_odctx"].as_bool() == Some(true) {
        modes.push("no-odctx");
    }
    if !modes.is_empty() {
        let _ = writeln!(o, "- modes: {}", modes.join(", "));
    }
    let services: Vec<String> = arr(&r["program"]["services"])
        .iter()
        .map(|sv| {
            let entry = if sv["entry"].as_bool() == Some(true) {
                "entry, "
            } else {
                ""
            };
            format!("{} ({entry}{} elements)", s(&sv["name"]), n(&sv["elements"]))
        })
        .collect();
    let _ = writeln!(o, "- services: {}", services.join(", "));
    if r["budget"]["exhausted"].as_bool() == Some(true) {
        let _ = writeln!(o, "\n> Budget exhausted: results are partial.");
    }

    let f = &r["funnel"];
    let _ = writeln!(o, "\n## Funnel\n");
    let _ = writeln!(o, "| stage | flows |\n|---|---:|");
    for (label, key) in [
        ("initial", "initial"),
        ("constraint-pruned", "constraint_pruned"),
        ("protected (dropped)", "protected_dropped"),
        ("budget-truncated", "budget_truncated"),
        ("final", "final"),
    ] {
        let _ = writeln!(o, "| {label} | {} |", n(&f[key]));
    }

    let findings = arr(&r["findings"]);
    let _ = writeln!(o, "\n## Findings ({})\n", findings.len());
    if findings.is_empty() {
        let _ = writeln!(o, "No findings.");
    }
    for (i, fd) in findings.iter().enumerate() {
        let op = &fd["privop"];
        let _ = writeln!(
            o,
            "### {}. {}: `{}` ({}:{})\n",
            i + 1,
            s(&fd["verdict"]),
            snippet(s(&op["source"])),
            s(&fd["file"]),
            n(&fd["line"])
        );
        let _ = writeln!(o, "- id: `{}`", s(&fd["id"]));
        let _ = writeln!(o, "- service: {}", s(&fd["service"]));
        let _ = writeln!(o, "- category: {}", s(&fd["category"]));
        let _ = writeln!(o, "- feasibility: {}", s(&fd["feasibility"]));
        let _ = writeln!(o, "- rationale: {}", s(&fd["rationale"]));
        let _ = writeln!(o, "\nPath:\n");
        for (k, h) in arr(&fd["hops"]).iter().enumerate() {
            match s(&h["hop"]) {
                "channel" => {
                    let _ = writeln!(
                        o,
                        "{}. {} -> {} via {} `{}` to `{}` ({})",
                        k + 1,
                        s(&h["from_service"]),
                        s(&h["to_service"]),
                        s(&h["protocol"]),
                        s(&h["identifier"]),
                        s(&h["endpoint"]),
                        s(&h["match_rule"])
                    );
                }
                _ => {
                    let _ = writeln!(
                        o,
                        "{}. {} {} `{}` ({})",
                        k + 1,
                        s(&h["service"]),
                        s(&h["kind"]),
                        snippet(s(&h["source"])),
                        loc(&h["location"])
                    );
                }
            }
        }
        let checks = arr(&fd["checks"]);
        let _ = writeln!(o, "\nChecks:\n");
        if checks.is_empty() {
            let _ = writeln!(o, "- none");
        }
        for c in checks {
            let sub = s(&c["authz_subtype"]);
            let class = if sub == "none" {
                s(&c["classification"]).to_string()
            } else {
                format!("{}/{}", s(&c["classification"]), sub)
            };
            let _ = writeln!(
                o,
                "- {} {} `{}` at {}: {}",
                s(&c["attachment"]),
                class,
                snippet(s(&c["source"])),
                loc(&c["location"]),
                s(&c["rationale"])
            );
        }
        let _ = writeln!(o);
    }

    let ops = arr(&r["privileged_operations"]);
    let _ = writeln!(o, "## Privileged operations ({})\n", ops.len());
    if !ops.is_empty() {
        let _ = writeln!(
            o,
            "| service | location | category | operation | found by |\n|---|---|---|---|---|"
        );
        for op in ops {
            let by = if op["baseline"].as_bool() == Some(true) {
                "baseline"
            } else {
                "search"
            };
            let _ = writeln!(
                o,
                "| {} | {} | {} | `{}` | {by} |",
                s(&op["service"]),
                loc(&op["location"]),
                s(&op["category"]),
                snippet(s(&op["source"])).replace('|', "\\|")
            );
        }
        let _ = writeln!(o);
    }

    let diags = arr(&r["diagnostics"]);
    if !diags.is_empty() {
        let _ = writeln!(o, "## Diagnostics\n");
        for d in diags {
            match s(&d["diagnostic"]) {
                "ambiguous_channel" => {
                    let _ = writeln!(
                        o,
                        "- ambiguous channel `{}` in {} matches {} endpoints",
                        s(&d["identifier"]),
                        s(&d["service"]),
                        arr(&d["targets"]).len()
                    );
                }
                _ => {
                    let _ = writeln!(
                        o,
                        "- unresolved channel at `{}` in {}: {}",
                        s(&d["element"]),
                        s(&d["service"]),
                        s(&d["reason"])
                    );
                }
            }
        }
        let _ = writeln!(o);
    }

    let b = &r["budget"];
    let calls: Vec<String> = b["calls"]
        .as_object()
        .map(|m| m.iter().map(|(k, v)| format!("{k} {}", n(v))).collect())
        .unwrap_or_default();
    let _ = writeln!(
        o,
        "## Budget\n\n- tool calls: {} (limit {} per phase)\n- trace events: {}",
        if calls.is_empty() {
            "none".to_string()
        } else {
            calls.join(", ")
        },
        n(&b["max_calls_per_phase"]),
        n(&r["trace"]["events"])
    );
    o
}
