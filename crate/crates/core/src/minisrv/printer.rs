//! Canonical pretty printer. `parse(print(ast))` has the same shape as `ast`.

use super::ast::*;

pub fn pretty_print(ast: &MiniSrvAst) -> String {
    let mut out = String::new();
    for (i, item) in ast.items.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match item {
            Item::Const(c) => {
                out.push_str(&format!("const {} = {}\n", c.name.name, expr(&c.value)));
            }
            Item::Fn(f) => {
                for d in &f.decorators {
                    let args: Vec<String> = d.args.iter().map(expr).collect();
                    out.push_str(&format!("@{}({})\n", d.name.name, args.join(", ")));
                }
                let params: Vec<&str> = f.params.iter().map(|p| p.name.as_str()).collect();
                out.push_str(&format!("fn {}({}) ", f.name.name, params.join(", ")));
                block(&mut out, &f.body, 0);
                out.push('\n');
            }
        }
    }
    out
}

fn block(out: &mut String, b: &Block, depth: usize) {
    out.push_str("{\n");
    for s in &b.stmts {
        stmt(out, s, depth + 1);
    }
    out.push_str(&"    ".repeat(depth));
    out.push('}');
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    out.push_str(&"    ".repeat(depth));
    match &s.kind {
        StmtKind::Assign { target, value } => {
            out.push_str(&format!("{} = {}", target.name, expr(value)));
        }
        StmtKind::Call(e) => out.push_str(&expr(e)),
        StmtKind::Return(None) => out.push_str("return"),
        StmtKind::Return(Some(e)) => out.push_str(&format!("return {}", expr(e))),
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            out.push_str(&format!("if {} ", expr(cond)));
            block(out, then_block, depth);
            if let Some(b) = else_block {
                out.push_str(" else ");
                block(out, b, depth);
            }
        }
    }
    out.push('\n');
}

pub fn quote(s: &str) -> String {
    let mut q = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            '\t' => q.push_str("\\t"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Str(s) => quote(s),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Ident(n) => n.clone(),
        ExprKind::Field { base, field } => format!("{}.{}", postfix_operand(base), field.name),
        ExprKind::Call { callee, args, .. } => {
            let args: Vec<String> = args.iter().map(expr).collect();
            format!("{}({})", postfix_operand(callee), args.join(", "))
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            let l = operand(lhs, |cp| cp < p || (op.is_comparison() && cp == p));
            let r = operand(rhs, |cp| cp <= p);
            format!("{l} {op} {r}")
        }
    }
}

fn postfix_operand(e: &Expr) -> String {
    match e.kind {
        ExprKind::Binary { .. } => format!("({})", expr(e)),
        _ => expr(e),
    }
}

fn operand(e: &Expr, needs_parens: impl Fn(u8) -> bool) -> String {
    match &e.kind {
        ExprKind::Binary { op, .. } if needs_parens(op.precedence()) => format!("({})", expr(e)),
        _ => expr(e),
    }
}
