//! SMT-LIB v2 emission and a local well-formedness checker for the subset we
//! emit (and a little more: `set-logic`, `get-model`, `distinct`, `=>`).

use std::collections::HashMap;

use super::{Atom, CmpOp, Formula, PathConstraint, Sort, StrRhs};

fn sort_name(s: Sort) -> &'static str {
    match s {
        Sort::Int => "Int",
        Sort::String => "String",
        Sort::Bool => "Bool",
    }
}

const RESERVED: [&str; 12] = [
    "true", "false", "and", "or", "not", "let", "forall", "exists", "assert", "par", "as", "_",
];

fn is_simple_symbol(s: &str) -> bool {
    const EXTRA: &str = "~!@$%^&*_-+=<>.?/";
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || EXTRA.contains(c) => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || EXTRA.contains(c)) && !RESERVED.contains(&s)
}

pub(crate) fn symbol(s: &str) -> String {
    if is_simple_symbol(s) {
        s.to_string()
    } else {
        // `|` and `\` cannot appear inside a quoted symbol
        format!("|{}|", s.replace(['|', '\\'], "_"))
    }
}

fn string_lit(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\"\""),
            ' '..='~' => out.push(c),
            c => out.push_str(&format!("\\u{{{:x}}}", c as u32)),
        }
    }
    out.push('"');
    out
}

fn int_lit(v: i64) -> String {
    if v < 0 {
        format!("(- {})", (v as i128).abs())
    } else {
        v.to_string()
    }
}

fn term(f: &Formula) -> String {
    match f {
        Formula::And(fs) if fs.is_empty() => "true".into(),
        Formula::Or(fs) if fs.is_empty() => "false".into(),
        Formula::And(fs) | Formula::Or(fs) => {
            let head = if matches!(f, Formula::And(_)) { "and" } else { "or" };
            if fs.len() == 1 {
                return term(&fs[0]);
            }
            let parts: Vec<String> = fs.iter().map(term).collect();
            format!("({head} {})", parts.join(" "))
        }
        Formula::Not(x) => format!("(not {})", term(x)),
        Formula::Atom(a) => match a {
            Atom::IntConst { var, op, value } => {
                let (v, c) = (symbol(var), int_lit(*value));
                match op {
                    CmpOp::Eq => format!("(= {v} {c})"),
                    CmpOp::Ne => format!("(not (= {v} {c}))"),
                    CmpOp::Lt => format!("(< {v} {c})"),
                    CmpOp::Le => format!("(<= {v} {c})"),
                    CmpOp::Gt => format!("(> {v} {c})"),
                    CmpOp::Ge => format!("(>= {v} {c})"),
                }
            }
            Atom::IntVars { a, b, eq } => eq_term(&symbol(a), &symbol(b), *eq),
            Atom::Str { var, rhs, eq } => {
                let r = match rhs {
                    StrRhs::Lit { value } => string_lit(value),
                    StrRhs::Var { name } => symbol(name),
                };
                eq_term(&symbol(var), &r, *eq)
            }
            Atom::BoolVar { var } => symbol(var),
            Atom::BoolLit { value } => value.to_string(),
        },
    }
}

fn eq_term(a: &str, b: &str, eq: bool) -> String {
    if eq {
        format!("(= {a} {b})")
    } else {
        format!("(not (= {a} {b}))")
    }
}

/// Sorted declarations, one assert per top-level conjunct, then `(check-sat)`.
pub fn emit_smtlib(c: &PathConstraint) -> String {
    let mut out = String::new();
    for (name, sort) in &c.variables {
        out.push_str(&format!("(declare-const {} {})\n", symbol(name), sort_name(*sort)));
    }
    for conj in c.formula.conjuncts() {
        out.push_str(&format!("(assert {})\n", term(conj)));
    }
    out.push_str("(check-sat)\n");
    out
}

// ---- well-formedness checking ----

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    Str(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Result<Vec<Sexp>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    while i < chars.len() {
        let c = chars[i];
        match c {
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            c if c.is_whitespace() => i += 1,
            '(' => {
                stack.push(Vec::new());
                i += 1;
            }
            ')' => {
                if stack.len() < 2 {
                    return Err(format!("unbalanced `)` at offset {i}"));
                }
                let done = stack.pop().expect("non-empty");
                stack.last_mut().expect("non-empty").push(Sexp::List(done));
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err("unterminated string literal".into()),
                        Some('"') if chars.get(i + 1) == Some(&'"') => {
                            s.push('"');
                            i += 2;
                        }
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                stack.last_mut().expect("non-empty").push(Sexp::Str(s));
            }
            '|' => {
                let start = i + 1;
                i += 1;
                while i < chars.len() && chars[i] != '|' {
                    if chars[i] == '\\' {
                        return Err("`\\` inside quoted symbol".into());
                    }
                    i += 1;
                }
                if i >= chars.len() {
                    return Err("unterminated quoted symbol".into());
                }
                let sym: String = chars[start..i].iter().collect();
                stack
                    .last_mut()
                    .expect("non-empty")
                    .push(Sexp::Atom(format!("|{sym}|")));
                i += 1;
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"()\";|".contains(chars[i]) {
                    i += 1;
                }
                let tok: String = chars[start..i].iter().collect();
                stack.last_mut().expect("non-empty").push(Sexp::Atom(tok));
            }
        }
    }
    if stack.len() != 1 {
        return Err("unbalanced `(`".into());
    }
    Ok(stack.pop().expect("top level"))
}

fn canonical_symbol(s: &str) -> Option<String> {
    if let Some(inner) = s.strip_prefix('|').and_then(|r| r.strip_suffix('|')) {
        return Some(inner.to_string());
    }
    if is_simple_symbol(s) {
        Some(s.to_string())
    } else {
        None
    }
}

fn parse_sort(s: &Sexp) -> Result<Sort, String> {
    match s {
        Sexp::Atom(a) if a == "Int" => Ok(Sort::Int),
        Sexp::Atom(a) if a == "String" => Ok(Sort::String),
        Sexp::Atom(a) if a == "Bool" => Ok(Sort::Bool),
        other => Err(format!("unknown sort {other:?}")),
    }
}

fn sort_of(t: &Sexp, env: &HashMap<String, Sort>) -> Result<Sort, String> {
    match t {
        Sexp::Str(_) => Ok(Sort::String),
        Sexp::Atom(a) => {
            if a == "true" || a == "false" {
                return Ok(Sort::Bool);
            }
            if a.chars().all(|c| c.is_ascii_digit()) && !a.is_empty() {
                if a.len() > 1 && a.starts_with('0') {
                    return Err(format!("numeral with leading zero `{a}`"));
                }
                return Ok(Sort::Int);
            }
            let sym = canonical_symbol(a).ok_or_else(|| format!("bad symbol `{a}`"))?;
            env.get(&sym)
                .copied()
                .ok_or_else(|| format!("undeclared symbol `{sym}`"))
        }
        Sexp::List(items) => {
            let (head, args) = match items.split_first() {
                Some((Sexp::Atom(h), rest)) => (h.as_str(), rest),
                _ => return Err("application without a function symbol".into()),
            };
            let sorts: Vec<Sort> = args.iter().map(|a| sort_of(a, env)).collect::<Result<_, _>>()?;
            let all = |s: Sort| sorts.iter().all(|&x| x == s);
            match head {
                "and" | "or" if all(Sort::Bool) => Ok(Sort::Bool),
                "=>" if sorts.len() >= 2 && all(Sort::Bool) => Ok(Sort::Bool),
                "not" if sorts == [Sort::Bool] => Ok(Sort::Bool),
                "=" | "distinct" if sorts.len() >= 2 && sorts.iter().all(|&s| s == sorts[0]) => Ok(Sort::Bool),
                "<" | "<=" | ">" | ">=" if sorts.len() >= 2 && all(Sort::Int) => Ok(Sort::Bool),
                "-" | "+" if !sorts.is_empty() && all(Sort::Int) => Ok(Sort::Int),
                "ite" if sorts.len() == 3 && sorts[0] == Sort::Bool && sorts[1] == sorts[2] => Ok(sorts[1]),
                _ => Err(format!("ill-sorted or unknown application `{head}` over {sorts:?}")),
            }
        }
    }
}

/// Checks that `text` is a well-formed SMT-LIB v2 script over Int, String
/// and Bool constants: balanced s-expressions, known commands, declared and
/// correctly sorted symbols.
pub fn check_smtlib(text: &str) -> Result<(), String> {
    let forms = tokenize(text)?;
    let mut env: HashMap<String, Sort> = HashMap::new();
    for (n, f) in forms.iter().enumerate() {
        let items = match f {
            Sexp::List(items) => items,
            other => return Err(format!("command {n}: expected a list, got {other:?}")),
        };
        let head = match items.first() {
            Some(Sexp::Atom(h)) => h.as_str(),
            _ => return Err(format!("command {n}: missing command name")),
        };
        match (head, &items[1..]) {
            ("declare-const", [Sexp::Atom(name), sort]) => {
                let sym = canonical_symbol(name).ok_or_else(|| format!("bad symbol `{name}`"))?;
                let s = parse_sort(sort)?;
                if env.insert(sym.clone(), s).is_some() {
                    return Err(format!("`{sym}` declared twice"));
                }
            }
            ("declare-fun", [Sexp::Atom(name), Sexp::List(params), sort]) if params.is_empty() => {
                let sym = canonical_symbol(name).ok_or_else(|| format!("bad symbol `{name}`"))?;
                env.insert(sym, parse_sort(sort)?);
            }
            ("assert", [t]) => {
                if sort_of(t, &env)? != Sort::Bool {
                    return Err(format!("command {n}: assertion is not Bool"));
                }
            }
            ("check-sat", []) | ("get-model", []) | ("exit", []) => {}
            ("set-logic", [Sexp::Atom(_)]) => {}
            ("set-option", [Sexp::Atom(k), _]) if k.starts_with(':') => {}
            _ => return Err(format!("command {n}: malformed `{head}`")),
        }
    }
    Ok(())
}
