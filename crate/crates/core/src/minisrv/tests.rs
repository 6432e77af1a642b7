use std::collections::BTreeSet;

use proptest::prelude::*;

use super::ast::*;
use super::*;
use crate::model::{EdgeKind, ElementKind, Service, TypeTag};

fn parse(text: &str) -> MiniSrvAst {
    parse_source(text, "svc", "t.msv").unwrap_or_else(|e| panic!("{e}"))
}

fn lowered(text: &str) -> Service {
    lower(&parse(text), "svc").unwrap()
}

/// (kind, from-source, to-source) triples, for readable edge assertions.
fn edge_set(s: &Service, kind: EdgeKind) -> BTreeSet<(String, String)> {
    s.edges()
        .iter()
        .filter(|e| e.kind == kind)
        .map(|e| {
            let f = s.element(&e.from).unwrap();
            let t = s.element(&e.to).unwrap();
            (label(f), label(t))
        })
        .collect()
}

fn label(e: &crate::model::Element) -> String {
    format!("{}:{}", e.kind, e.source)
}

#[test]
fn minimal_function() {
    let ast = parse("fn f() { x = 1 }");
    assert_eq!(ast.items.len(), 1);
    let f = ast.functions().next().unwrap();
    assert_eq!(f.name.name, "f");
    assert_eq!(f.body.stmts.len(), 1);
    assert!(matches!(f.body.stmts[0].kind, StmtKind::Assign { .. }));
}

#[test]
fn unclosed_params() {
    let e = parse_source("fn f( {", "svc", "t.msv").unwrap_err();
    assert_eq!(e.location.line, 1);
    assert_eq!(e.location.col, 7);
    assert!(e.expected.contains("parameter or \")\""), "{}", e.expected);
}

#[test]
fn first_error_wins() {
    let e = parse_source("fn f() {\n  x = \n}\nfn (", "svc", "t.msv").unwrap_err();
    assert_eq!(e.location.line, 3);
}

#[test]
fn unknown_decorator_rejected() {
    let e = parse_source("@cached(1) fn f() {}", "svc", "t.msv").unwrap_err();
    assert!(e.message.contains("cached"));
}

#[test]
fn chained_comparison_rejected() {
    assert!(parse_source("fn f() { if a == b == c { } }", "svc", "t.msv").is_err());
}

#[test]
fn bare_expression_statement_rejected() {
    let e = parse_source("fn f() { x + 1 }", "svc", "t.msv").unwrap_err();
    assert!(e.message.contains("call"));
}

const FIG2B: &str = r#"
fn can_switch_roles(user) {
    return db.read("select admin from users where id = " + user)
}

fn update_role(user, role) {
    users.put(user, role)
}

@route("POST", "/setUserRole")
@auth(can_switch_roles)
fn set_user_role(request) {
    user = request.param("user")
    role = request.param("role")
    update_role(user, role)
    return "ok"
}
"#;

#[test]
fn role_update_handler_shape() {
    let ast = parse(FIG2B);
    let routed: Vec<&FnDef> = ast
        .functions()
        .filter(|f| f.decorators.iter().any(|d| d.route().is_some()))
        .collect();
    assert_eq!(routed.len(), 1);
    assert_eq!(routed[0].decorators[0].route(), Some(("POST", "/setUserRole")));
    assert_eq!(routed[0].name.name, "set_user_role");
}

#[test]
fn literal_to_x_to_y() {
    let s = lowered("fn f() { x = 1 y = x }");
    let df = edge_set(&s, EdgeKind::Dataflow);
    assert!(df.contains(&("string_literal:1".into(), "variable:x".into())));
    assert!(df.contains(&("variable:x".into(), "variable:y".into())));
    assert_eq!(df.len(), 2);
}

#[test]
fn call_resolution_edges() {
    let text = "fn g(p) {\n    return p\n}\n\nfn f() {\n    x = 1\n    g(x)\n}\n";
    let s = lowered(text);
    let calls = edge_set(&s, EdgeKind::Calls);
    assert_eq!(
        calls,
        BTreeSet::from([(
            "call:g(x)".to_string(),
            "function:fn g(p) {\n    return p\n}".to_string()
        )])
    );
    let df = edge_set(&s, EdgeKind::Dataflow);
    let expected: BTreeSet<(String, String)> = [
        ("parameter:p", "return_stmt:return p"),
        ("string_literal:1", "variable:x"),
        ("variable:x", "parameter:p"),
        ("variable:x", "call:g(x)"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    assert_eq!(df, expected);
}

#[test]
fn auth_decorator_edges() {
    let s = lowered("fn authz(r) { return true }\n@auth(authz) fn h() { }");
    let dec = s.elements().iter().find(|e| e.kind == ElementKind::Decorator).unwrap();
    let h = s.functions_named("h")[0];
    let authz = s.functions_named("authz")[0];
    assert_eq!(s.successors(&dec.id, EdgeKind::Decorates), vec![h]);
    assert_eq!(s.successors(&dec.id, EdgeKind::Calls), vec![authz]);
}

#[test]
fn undefined_check_is_an_error() {
    let err = lower(&parse("@auth(nope) fn h() { }"), "svc").unwrap_err();
    assert!(matches!(err, LoweringError::UndefinedCheck { ref name, .. } if name == "nope"));
}

#[test]
fn unresolved_calls_are_recorded() {
    let l = lower_files(&[parse("fn f(o) { o.save(1) missing(2) db.write(3) }")], "svc", false).unwrap();
    let names: Vec<&str> = l.unresolved_calls.iter().map(|u| u.callee.as_str()).collect();
    assert_eq!(names, ["o.save", "missing"]);
    assert!(l.service.edges().iter().all(|e| e.kind != EdgeKind::Calls));
}

#[test]
fn calls_resolve_across_files() {
    let a = parse_source("fn helper(x) { db.write(x) }", "svc", "a.msv").unwrap();
    let b = parse_source("fn main(y) { helper(y) }", "svc", "b.msv").unwrap();
    let l = lower_files(&[a, b], "svc", false).unwrap();
    assert!(l.unresolved_calls.is_empty());
    assert_eq!(
        l.service.edges().iter().filter(|e| e.kind == EdgeKind::Calls).count(),
        1
    );
}

#[test]
fn endpoint_feeds_request_reads() {
    let s = lowered(FIG2B);
    let ep = s.elements().iter().find(|e| e.kind == ElementKind::Endpoint).unwrap();
    assert_eq!(ep.name, "/setUserRole");
    let targets: Vec<String> = s
        .successors(&ep.id, EdgeKind::Dataflow)
        .into_iter()
        .map(label)
        .collect();
    assert_eq!(
        targets,
        [
            "parameter:request",
            "call:request.param(\"user\")",
            "call:request.param(\"role\")"
        ]
    );
}

#[test]
fn variable_types() {
    let s = lowered(
        "const B = \"http://x\"\nfn f() { a = request.param(\"r\") b = 1 c = b + 2 d = B + \"/p\" e = a == b }",
    );
    let ty = |n: &str| {
        s.elements()
            .iter()
            .find(|e| e.name == n && e.kind == ElementKind::Variable)
            .unwrap()
            .inferred_type
    };
    assert_eq!(ty("a"), TypeTag::String);
    assert_eq!(ty("b"), TypeTag::Int);
    assert_eq!(ty("c"), TypeTag::Int);
    assert_eq!(ty("d"), TypeTag::String);
    assert_eq!(ty("e"), TypeTag::Bool);
    assert_eq!(ty("B"), TypeTag::String);
}

#[test]
fn one_statement_element_per_statement() {
    let s = lowered(FIG2B);
    // statement-level elements are the direct contains-children of functions
    // and conditionals that are not parameters
    let f = s.functions_named("set_user_role")[0];
    let kids: Vec<ElementKind> = s
        .successors(&f.id, EdgeKind::Contains)
        .into_iter()
        .filter(|e| e.kind != ElementKind::Parameter)
        .map(|e| e.kind)
        .collect();
    assert_eq!(
        kids,
        [
            ElementKind::Assignment,
            ElementKind::Assignment,
            ElementKind::Call,
            ElementKind::ReturnStmt
        ]
    );
    assert_eq!(
        s.elements().iter().filter(|e| e.kind == ElementKind::Endpoint).count(),
        1
    );
}

#[test]
fn snippet_parse_keeps_positions() {
    let e = parse_expr_at("mode == \"A\"", "t.msv", 5, 8).unwrap();
    assert_eq!((e.span.start.line, e.span.start.col), (5, 8));
}

#[test]
fn print_known_program() {
    let ast = parse("fn f(a) { if a == 1 && (a < 2 || a > 3) { g(a) } else { return a + \"x\" } }");
    let printed = pretty_print(&ast);
    assert_eq!(
        printed,
        "fn f(a) {\n    if a == 1 && (a < 2 || a > 3) {\n        g(a)\n    } else {\n        return a + \"x\"\n    }\n}\n"
    );
}

// ---- round-trip and determinism properties ----

const KEYWORDS: [&str; 7] = ["fn", "const", "if", "else", "return", "true", "false"];

fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,6}".prop_filter("keyword", |s| !KEYWORDS.contains(&s.as_str()))
}

fn mk(kind: ExprKind) -> Expr {
    Expr {
        kind,
        span: Span::default(),
    }
}

fn id(name: String) -> Ident {
    Ident {
        name,
        span: Span::default(),
    }
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0i64..100_000).prop_map(|v| mk(ExprKind::Int(v))),
        "[ -~\\t\\n]{0,8}".prop_map(|s| mk(ExprKind::Str(s))),
        any::<bool>().prop_map(|b| mk(ExprKind::Bool(b))),
        ident().prop_map(|n| mk(ExprKind::Ident(n))),
    ]
}

fn callee() -> impl Strategy<Value = Expr> {
    prop_oneof![
        ident().prop_map(|n| mk(ExprKind::Ident(n))),
        (ident(), ident()).prop_map(|(a, b)| mk(ExprKind::Field {
            base: Box::new(mk(ExprKind::Ident(a))),
            field: id(b)
        })),
    ]
}

fn call_with(args: impl Strategy<Value = Vec<Expr>>) -> impl Strategy<Value = Expr> {
    (callee(), args).prop_map(|(c, args)| {
        mk(ExprKind::Call {
            callee: Box::new(c),
            args,
            anchor: Pos::default(),
        })
    })
}

const OPS: [BinOp; 9] = [
    BinOp::Or,
    BinOp::And,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::Add,
];

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), ident()).prop_map(|(b, f)| mk(ExprKind::Field {
                base: Box::new(b),
                field: id(f)
            })),
            call_with(prop::collection::vec(inner.clone(), 0..3)),
            (0..OPS.len(), inner.clone(), inner).prop_map(|(o, l, r)| mk(ExprKind::Binary {
                op: OPS[o],
                lhs: Box::new(l),
                rhs: Box::new(r)
            })),
        ]
    })
}

fn stmt() -> impl Strategy<Value = Stmt> {
    let simple = prop_oneof![
        (ident(), expr()).prop_map(|(t, v)| StmtKind::Assign {
            target: id(t),
            value: v
        }),
        call_with(prop::collection::vec(expr(), 0..3)).prop_map(StmtKind::Call),
        prop::option::of(expr()).prop_map(StmtKind::Return),
    ]
    .prop_map(|kind| Stmt {
        kind,
        span: Span::default(),
    });
    simple.prop_recursive(2, 12, 3, |inner| {
        (
            expr(),
            prop::collection::vec(inner.clone(), 0..3),
            prop::option::of(prop::collection::vec(inner, 0..3)),
        )
            .prop_map(|(cond, t, e)| Stmt {
                kind: StmtKind::If {
                    cond,
                    then_block: Block {
                        stmts: t,
                        span: Span::default(),
                    },
                    else_block: e.map(|stmts| Block {
                        stmts,
                        span: Span::default(),
                    }),
                },
                span: Span::default(),
            })
    })
}

fn item() -> impl Strategy<Value = Item> {
    let konst = (
        ident(),
        leaf().prop_filter("literal", |e| !matches!(e.kind, ExprKind::Ident(_))),
    )
        .prop_map(|(n, v)| {
            Item::Const(ConstDef {
                name: id(n),
                value: v,
                span: Span::default(),
            })
        });
    let route = ("GET|POST", "/[a-z]{1,5}").prop_map(|(m, p)| Decorator {
        name: id("route".into()),
        args: vec![mk(ExprKind::Str(m)), mk(ExprKind::Str(p))],
        span: Span::default(),
    });
    let auth = ident().prop_map(|n| Decorator {
        name: id("auth".into()),
        args: vec![mk(ExprKind::Ident(n))],
        span: Span::default(),
    });
    let func = (
        prop::collection::vec(prop_oneof![route, auth], 0..3),
        ident(),
        prop::collection::vec(ident(), 0..3),
        prop::collection::vec(stmt(), 0..5),
    )
        .prop_map(|(decorators, name, params, stmts)| {
            Item::Fn(FnDef {
                decorators,
                name: id(name),
                params: params.into_iter().map(id).collect(),
                body: Block {
                    stmts,
                    span: Span::default(),
                },
                span: Span::default(),
            })
        });
    prop_oneof![konst, func]
}

fn program() -> impl Strategy<Value = MiniSrvAst> {
    prop::collection::vec(item(), 0..5).prop_map(|items| MiniSrvAst {
        file: String::new(),
        text: String::new(),
        items,
    })
}

/// Renames `@auth` targets to defined functions so lowering succeeds.
fn with_defined_checks(mut ast: MiniSrvAst) -> MiniSrvAst {
    let names: Vec<String> = ast.functions().map(|f| f.name.name.clone()).collect();
    for item in &mut ast.items {
        if let Item::Fn(f) = item {
            for d in &mut f.decorators {
                if d.name.name == "auth" {
                    d.args = vec![mk(ExprKind::Ident(names[0].clone()))];
                }
            }
        }
    }
    ast
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn print_parse_round_trip(ast in program()) {
        let text = pretty_print(&ast);
        let back = parse_source(&text, "svc", "t.msv").map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(back.shape(), ast.shape());
        prop_assert_eq!(pretty_print(&back), text);
    }

    #[test]
    fn lowering_is_deterministic(ast in program()) {
        let text = pretty_print(&with_defined_checks(ast));
        let a = lower(&parse_source(&text, "svc", "t.msv").unwrap(), "svc").unwrap();
        let b = lower(&parse_source(&text, "svc", "t.msv").unwrap(), "svc").unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(crate::model::validate_service(&a).is_empty());
        let ids: Vec<_> = a.elements().iter().map(|e| e.id.clone()).collect();
        let unique: BTreeSet<_> = ids.iter().cloned().collect();
        prop_assert_eq!(ids.len(), unique.len());
    }

    #[test]
    fn sources_are_verbatim_slices(ast in program()) {
        let text = pretty_print(&with_defined_checks(ast));
        let s = lower(&parse_source(&text, "svc", "t.msv").unwrap(), "svc").unwrap();
        for e in s.elements() {
            prop_assert!(text.contains(&e.source), "{} not in text", e.source);
        }
    }
}
