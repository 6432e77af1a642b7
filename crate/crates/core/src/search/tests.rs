use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use super::*;
use crate::minisrv::{lower, parse_source};
use crate::model::{Edge, Element, Location};

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
    data = request.body
    user = request.param("user")
    role = request.param("role")
    update_role(user, role)
    return "ok"
}
"#;

fn fig2b() -> Service {
    lower(&parse_source(FIG2B, "usermgmt", "usermgmt.msv").unwrap(), "usermgmt").unwrap()
}

fn sources(s: &Service, p: &FlowPath) -> Vec<String> {
    p.nodes.iter().map(|n| s.element(n).unwrap().source.clone()).collect()
}

#[test]
fn q_name_exact_and_regex() {
    let s = fig2b();
    let exact = q_name(&s, "update_role", NameMode::Exact).unwrap();
    assert_eq!(exact.len(), 1);
    assert_eq!(exact[0].kind, ElementKind::Function);
    let re = q_name(&s, "update.*", NameMode::Regex).unwrap();
    assert!(exact.iter().all(|e| re.contains(e)));
    assert!(q_name(&s, "zzz_nomatch", NameMode::Exact).unwrap().is_empty());
    assert!(matches!(
        q_name(&s, "(", NameMode::Regex),
        Err(SearchError::BadPattern(_))
    ));
    assert!(q_name(&s, "", NameMode::Exact).is_err());
}

#[test]
fn anonymous_elements_never_match() {
    let s = fig2b();
    let all = q_name(&s, ".*", NameMode::Regex).unwrap();
    assert!(all.iter().all(|e| !e.name.is_empty()));
    assert!(all.len() < s.elements().len());
}

#[test]
fn q_ast_counts() {
    let s = fig2b();
    // hand count: db.read, users.put, request.param x2, update_role
    assert_eq!(q_ast(&s, ElementKind::Call).len(), 5);
    assert_eq!(q_ast(&s, ElementKind::FieldAccess).len(), 1);
    assert_eq!(q_ast(&s, ElementKind::Endpoint).len(), 1);
    let plain = lower(&parse_source("fn f() { x = 1 }", "s", "a.msv").unwrap(), "s").unwrap();
    assert!(q_ast(&plain, ElementKind::Endpoint).is_empty());
}

#[test]
fn request_to_update_role() {
    let s = fig2b();
    let paths = q_flow(&s, "request", "update_role").unwrap();
    assert_eq!(paths.len(), 2);
    assert_eq!(
        sources(&s, &paths[1]),
        ["request.param(\"role\")", "role", "update_role(user, role)"]
    );
    assert_eq!(paths[1].rules, [FlowRule::Assign, FlowRule::Arg]);
}

#[test]
fn reflexive_and_unknown() {
    let s = fig2b();
    let x = q_ast(&s, ElementKind::Variable)[0].id.clone();
    let p = q_flow(&s, x.as_str(), x.as_str()).unwrap();
    assert_eq!(p, vec![FlowPath::singleton(x)]);
    assert!(matches!(
        q_flow(&s, "nothing_here", "role"),
        Err(SearchError::UnknownElement(_))
    ));
}

#[test]
fn chained_assignment() {
    let s = lower(
        &parse_source("fn f() { x = 1 y = x z = y }", "s", "a.msv").unwrap(),
        "s",
    )
    .unwrap();
    let lit = q_ast(&s, ElementKind::StringLiteral)[0].id.clone();
    let p = q_flow(&s, lit.as_str(), "z").unwrap();
    assert_eq!(sources(&s, &p[0]), ["1", "x", "y", "z"]);
}

#[test]
fn arg_param_and_return_edges() {
    let text =
        "fn g(p) {\n    q = p + \"!\"\n    return q\n}\n\nfn f() {\n    x = \"a\"\n    r = g(x)\n    db.write(r)\n}\n";
    let s = lower(&parse_source(text, "s", "a.msv").unwrap(), "s").unwrap();
    // the argument also feeds the call result directly, which is the shorter path
    let p = q_flow(&s, "x", "db.write").unwrap();
    assert_eq!(sources(&s, &p[0]), ["x", "g(x)", "r", "db.write(r)"]);
    let p = q_flow(&s, "x", "p").unwrap();
    assert_eq!(p[0].rules, [FlowRule::Param]);
    let p = q_flow(&s, "p", "r").unwrap();
    assert_eq!(sources(&s, &p[0]), ["p", "q", "return q", "g(x)", "r"]);
    assert_eq!(
        p[0].rules,
        [FlowRule::Assign, FlowRule::Value, FlowRule::Return, FlowRule::Assign]
    );
}

#[test]
fn member_access_edge() {
    let s = lower(&parse_source("fn f(r) { v = r.b }", "s", "a.msv").unwrap(), "s").unwrap();
    let p = q_flow(&s, "r", "v").unwrap();
    assert_eq!(sources(&s, &p[0]), ["r", "r.b", "v"]);
    assert_eq!(p[0].rules[0], FlowRule::Member);
}

#[test]
fn conditionals_do_not_propagate() {
    let s = lower(
        &parse_source("fn f(a) { if a == 1 { b = 2 } }", "s", "a.msv").unwrap(),
        "s",
    )
    .unwrap();
    assert!(q_flow(&s, "a", "b").unwrap().is_empty());
}

#[test]
fn flow_graph_is_idempotent() {
    let s = fig2b();
    assert_eq!(build_flow_graph(&s), build_flow_graph(&s));
    assert_eq!(flow_graph(&s), &build_flow_graph(&s));
}

#[test]
fn callers_and_callees() {
    let s = fig2b();
    let callers = q_cg(&s, "update_role", CgDirection::Callers, 1).unwrap();
    assert_eq!(
        callers.iter().map(|e| e.name.as_str()).collect::<Vec<_>>(),
        ["set_user_role"]
    );
    let callees = q_cg(&s, "set_user_role", CgDirection::Callees, 1).unwrap();
    assert_eq!(
        callees.iter().map(|e| e.name.as_str()).collect::<Vec<_>>(),
        ["can_switch_roles", "update_role"]
    );
    assert!(q_cg(&s, "update_role", CgDirection::Callees, 1).unwrap().is_empty());
    assert!(matches!(
        q_cg(&s, "role", CgDirection::Callers, 1),
        Err(SearchError::NotAFunction(_))
    ));
    assert!(matches!(
        q_cg(&s, "nope", CgDirection::Callers, 1),
        Err(SearchError::UnknownElement(_))
    ));
    assert_eq!(
        q_cg(&s, "update_role", CgDirection::Callers, 0),
        Err(SearchError::BadDepth)
    );
}

#[test]
fn property_functions() {
    let s = fig2b();
    let f = s.functions_named("update_role")[0];
    assert_eq!(get_location(&s, &f.id).unwrap(), Location::new("usermgmt.msv", 6, 1));
    assert_eq!(
        get_source(&s, &f.id).unwrap(),
        "fn update_role(user, role) {\n    users.put(user, role)\n}"
    );
    let role = s
        .elements()
        .iter()
        .find(|e| e.name == "role" && e.kind == ElementKind::Variable)
        .unwrap();
    assert_eq!(get_type(&s, &role.id).unwrap(), TypeTag::String);
    assert!(get_type(&s, &ElementId::from("e0")).is_err());
}

// ---- random services against independent oracles ----

#[derive(Debug, Clone)]
struct RandomService {
    /// kind per element: 0 function, 1 variable, 2 call, 3 return
    kinds: Vec<u8>,
    /// owning function index for variables, calls and returns
    owner: Vec<usize>,
    dataflow: Vec<(usize, usize)>,
    calls: Vec<(usize, usize)>,
}

fn random_service() -> impl Strategy<Value = RandomService> {
    (1usize..5, 2usize..46).prop_flat_map(|(nf, rest)| {
        let n = nf + rest;
        (
            prop::collection::vec(1u8..4, rest),
            prop::collection::vec(0..nf, rest),
            prop::collection::vec((nf..n, nf..n), 0..n * 2),
            prop::collection::vec((nf..n, 0..nf), 0..rest),
        )
            .prop_map(move |(k, owner, dataflow, calls)| {
                let mut kinds = vec![0u8; nf];
                kinds.extend(k);
                let mut own = (0..nf).collect::<Vec<_>>();
                own.extend(owner);
                RandomService {
                    kinds,
                    owner: own,
                    dataflow,
                    calls,
                }
            })
    })
}

fn materialize(r: &RandomService) -> (Service, Vec<ElementId>) {
    let kind = |k: u8| match k {
        0 => ElementKind::Function,
        1 => ElementKind::Variable,
        2 => ElementKind::Call,
        _ => ElementKind::ReturnStmt,
    };
    let elements: Vec<Element> = r
        .kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let loc = Location::new("r.msv", i as u32 + 1, 1);
            Element {
                id: ElementId::derive("r", &loc, kind(k)),
                service: "r".into(),
                kind: kind(k),
                name: format!("n{i}"),
                location: loc,
                source: format!("n{i}"),
                inferred_type: TypeTag::Unknown,
            }
        })
        .collect();
    let ids: Vec<ElementId> = elements.iter().map(|e| e.id.clone()).collect();
    let mut edges = Vec::new();
    for (i, &o) in r.owner.iter().enumerate() {
        if r.kinds[i] != 0 {
            edges.push(Edge::new(EdgeKind::Contains, ids[o].clone(), ids[i].clone()));
        }
    }
    for &(a, b) in &r.dataflow {
        edges.push(Edge::new(EdgeKind::Dataflow, ids[a].clone(), ids[b].clone()));
    }
    for &(c, f) in &r.calls {
        if r.kinds[c] == 2 {
            edges.push(Edge::new(EdgeKind::Calls, ids[c].clone(), ids[f].clone()));
        }
    }
    (Service::new("r", false, elements, edges, vec![]), ids)
}

/// Independent oracle: adjacency from the generator description, closure and
/// distances by Floyd-Warshall.
fn oracle_dist(r: &RandomService) -> Vec<Vec<Option<usize>>> {
    let n = r.kinds.len();
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    let set = |a: usize, b: usize, d: &mut Vec<Vec<Option<usize>>>| {
        if a != b {
            d[a][b] = Some(1);
        }
    };
    for &(a, b) in &r.dataflow {
        set(a, b, &mut d);
    }
    for &(c, f) in &r.calls {
        if r.kinds[c] != 2 {
            continue;
        }
        for (ret, &k) in r.kinds.iter().enumerate() {
            if k == 3 && r.owner[ret] == f {
                set(ret, c, &mut d);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].map_or(true, |c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

fn oracle_callees(r: &RandomService) -> BTreeSet<(usize, usize)> {
    r.calls
        .iter()
        .filter(|&&(c, _)| r.kinds[c] == 2)
        .map(|&(c, f)| (r.owner[c], f))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn q_flow_matches_closure(r in random_service()) {
        let (s, ids) = materialize(&r);
        let d = oracle_dist(&r);
        let pos: HashMap<&ElementId, usize> = ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let flow_nodes: Vec<usize> = (0..ids.len()).filter(|&i| r.kinds[i] != 0).collect();
        for &a in &flow_nodes {
            for &b in &flow_nodes {
                let got = q_flow(&s, ids[a].as_str(), ids[b].as_str()).unwrap();
                match d[a][b] {
                    None => prop_assert!(got.is_empty()),
                    Some(len) => {
                        prop_assert_eq!(got.len(), 1);
                        let p = &got[0];
                        prop_assert_eq!(p.nodes.len(), len + 1);
                        prop_assert_eq!(p.first(), &ids[a]);
                        prop_assert_eq!(p.last(), &ids[b]);
                        for w in p.nodes.windows(2) {
                            prop_assert_eq!(d[pos[&w[0]]][pos[&w[1]]], Some(1));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn callers_are_reverse_of_callees(r in random_service(), depth in 1u32..4) {
        let (s, ids) = materialize(&r);
        let pairs = oracle_callees(&r);
        let fns: Vec<usize> = (0..ids.len()).filter(|&i| r.kinds[i] == 0).collect();
        for &f in &fns {
            let callees: BTreeSet<ElementId> = q_cg(&s, ids[f].as_str(), CgDirection::Callees, 1)
                .unwrap().into_iter().map(|e| e.id.clone()).collect();
            let want: BTreeSet<ElementId> = pairs.iter().filter(|p| p.0 == f).map(|p| ids[p.1].clone()).collect();
            prop_assert_eq!(&callees, &want);
            for &g in &fns {
                let callers = q_cg(&s, ids[g].as_str(), CgDirection::Callers, 1).unwrap();
                prop_assert_eq!(
                    callees.contains(&ids[g]),
                    callers.iter().any(|e| e.id == ids[f])
                );
            }
            let d1: BTreeSet<_> = q_cg(&s, ids[f].as_str(), CgDirection::Callees, depth).unwrap()
                .into_iter().map(|e| e.id.clone()).collect();
            let d2: BTreeSet<_> = q_cg(&s, ids[f].as_str(), CgDirection::Callees, depth + 1).unwrap()
                .into_iter().map(|e| e.id.clone()).collect();
            prop_assert!(d1.is_subset(&d2));
        }
    }

    #[test]
    fn primitives_are_pure(r in random_service()) {
        let (s, _) = materialize(&r);
        prop_assert_eq!(q_name(&s, "n1.*", NameMode::Regex).unwrap(), q_name(&s, "n1.*", NameMode::Regex).unwrap());
        prop_assert_eq!(q_ast(&s, ElementKind::Call), q_ast(&s, ElementKind::Call));
    }

    #[test]
    fn exact_within_regex(r in random_service()) {
        let (s, _) = materialize(&r);
        for e in s.elements() {
            let exact = q_name(&s, &e.name, NameMode::Exact).unwrap();
            let re = q_name(&s, &format!(".*{}.*", regex::escape(&e.name)), NameMode::Regex).unwrap();
            prop_assert!(exact.iter().all(|x| re.contains(x)));
        }
    }
}
