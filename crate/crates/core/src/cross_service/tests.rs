use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::facts::GatewayRoute;
use crate::minisrv::{lower, parse_source};
use crate::model::{Channel, Direction, ElementKind, Program, Protocol, Service};
use crate::reasoner::ScriptedOracle;
use crate::testkit::{random_program, ProgramSpec, SpecKind};
use crate::{Manifest, ServiceEntry};

const PROFILE: &str = r#"
const BASE = "http://localhost:5000"

fn require_login(request) {
    return session.get("uid") != ""
}

@route("POST", "/updateProfile")
@auth(require_login)
fn update_profile(request) {
    user = request.param("user")
    role = request.param("role")
    u = BASE + "/setUserRole"
    http_post(u, user + role)
    return "ok"
}

@route("GET", "/internal/health")
fn health(request) {
    return "up"
}
"#;

const ROLES: &str = r#"
fn can_switch_roles(user) {
    return db.read("select admin from users where id = " + user)
}

@route("POST", "/setUserRole")
@auth(can_switch_roles)
fn set_user_role(request) {
    user = request.param("user")
    role = request.param("role")
    users.update_role(user, role)
    return "ok"
}
"#;

fn service(name: &str, src: &str, entry: bool) -> Service {
    let ast = parse_source(src, name, &format!("{name}.msv")).unwrap();
    lower(&ast, name).unwrap().with_entry(entry)
}

fn program(services: &[(&str, &str)], prefixes: &[&str]) -> Program {
    let svcs: Vec<Service> = services
        .iter()
        .enumerate()
        .map(|(i, (n, src))| service(n, src, i == 0))
        .collect();
    let manifest = Manifest {
        version: 1,
        services: services
            .iter()
            .enumerate()
            .map(|(i, (n, _))| ServiceEntry {
                name: n.to_string(),
                entry: i == 0,
                base_url: None,
                files: vec![format!("{n}.msv")],
            })
            .collect(),
        gateway_routes: prefixes
            .iter()
            .map(|p| GatewayRoute {
                prefix: p.to_string(),
                target: services[0].0.to_string(),
            })
            .collect(),
    };
    Program::new(svcs, manifest)
}

fn fig2() -> Program {
    program(&[("profile", PROFILE), ("roles", ROLES)], &["/updateProfile"])
}

fn find<'s>(s: &'s Service, kind: ElementKind, text: &str) -> &'s crate::model::Element {
    s.elements()
        .iter()
        .find(|e| e.kind == kind && (e.name == text || e.source == text))
        .unwrap_or_else(|| panic!("no {kind} `{text}`"))
}

fn node(p: &Program, svc: &str, kind: ElementKind, text: &str) -> NodeRef {
    NodeRef::new(svc, find(p.service(svc).unwrap(), kind, text).id.clone())
}

#[test]
fn sources_of_role_service() {
    let p = fig2();
    let names: Vec<&str> = q_source(p.service("roles").unwrap())
        .iter()
        .map(|e| e.name.as_str())
        .collect();
    assert_eq!(names, vec!["/setUserRole"]);
    let plain = service("plain", "fn f(x) {\n    return x\n}\n", false);
    assert!(q_source(&plain).is_empty());
}

#[test]
fn sources_count_routes_and_consumers() {
    let src = r#"
@route("GET", "/a")
fn a(request) {
    return "a"
}

@route("GET", "/b")
fn b(request) {
    return "b"
}

fn worker() {
    m = consume("refunds")
    db.write(m)
}
"#;
    let s = service("s", src, false);
    let got: Vec<ElementKind> = q_source(&s).iter().map(|e| e.kind).collect();
    assert_eq!(
        got,
        vec![ElementKind::Endpoint, ElementKind::Endpoint, ElementKind::Call]
    );
}

#[test]
fn user_sources_need_a_gateway_prefix() {
    let oracle = ScriptedOracle::default();
    let p = program(&[("profile", PROFILE)], &["/updateProfile"]);
    let users = q_user(&p, &oracle).unwrap();
    assert_eq!(users.len(), 1);
    assert_eq!(users[0].0, node(&p, "profile", ElementKind::Endpoint, "/updateProfile"));

    let api = r#"
@route("POST", "/api/updateProfile")
fn a(request) {
    return "a"
}

@route("GET", "/internal/health")
fn b(request) {
    return "b"
}
"#;
    let p = program(&[("gw", api)], &["/api"]);
    let names: Vec<String> = q_user(&p, &oracle)
        .unwrap()
        .into_iter()
        .map(|(n, _)| p.locate(&n.element).unwrap().1.name.clone())
        .collect();
    assert_eq!(names, vec!["/api/updateProfile"]);

    let closed = program(&[("gw", api)], &[]);
    assert!(q_user(&closed, &oracle).unwrap().is_empty());

    let mut no_entry = fig2();
    no_entry.manifest.services.iter_mut().for_each(|s| s.entry = false);
    no_entry.services = no_entry.services.iter().map(|s| s.with_entry(false)).collect();
    assert_eq!(q_user(&no_entry, &oracle), Err(CrossServiceError::NoEntryService));
}

#[test]
fn literal_and_concatenated_identifiers() {
    let direct = service(
        "d",
        "fn f(body) {\n    http_post(\"http://localhost:5000/setUserRole\", body)\n}\n",
        false,
    );
    let out: Vec<Channel> = q_inter(&direct)
        .into_iter()
        .filter(|c| c.direction == Direction::Out)
        .collect();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].identifier, "http://localhost:5000/setUserRole");
    assert_eq!(out[0].protocol, Protocol::Http);

    let p = fig2();
    let out: Vec<Channel> = q_inter(p.service("profile").unwrap())
        .into_iter()
        .filter(|c| c.direction == Direction::Out)
        .collect();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].identifier, "http://localhost:5000/setUserRole");
}

#[test]
fn dynamic_identifier_is_unresolved() {
    let s = service(
        "d",
        "fn f(request, b) {\n    u = request.param(\"to\")\n    http_post(u, b)\n}\n",
        false,
    );
    let set = service_channels(&s);
    assert!(set.channels.iter().all(|c| c.direction != Direction::Out));
    assert_eq!(set.diagnostics.len(), 1);
    assert!(matches!(&set.diagnostics[0], ChannelDiagnostic::UnresolvedChannel { service, .. } if service == "d"));

    let param = service("d", "fn f(url, b) {\n    http_post(url, b)\n}\n", false);
    match &service_channels(&param).diagnostics[..] {
        [ChannelDiagnostic::UnresolvedChannel { reason, .. }] => assert!(reason.contains("parameter"), "{reason}"),
        d => panic!("{d:?}"),
    }
}

#[test]
fn topic_channels() {
    let s = service(
        "t",
        "fn f(x) {\n    publish(\"payments\", x)\n}\n\nfn g() {\n    m = consume(\"refunds\")\n    return m\n}\n",
        false,
    );
    let chans = q_inter(&s);
    let mut got: Vec<(Direction, &str)> = chans.iter().map(|c| (c.direction, c.identifier.as_str())).collect();
    got.sort();
    assert_eq!(got, vec![(Direction::In, "refunds"), (Direction::Out, "payments")]);
    assert!(chans.iter().all(|c| c.protocol == Protocol::Topic));
}

#[test]
fn normalization() {
    assert_eq!(normalize_http("http://localhost:5000/setUserRole"), "/setUserRole");
    assert_eq!(normalize_http("https://svc:80/a/b/?x=1#f"), "/a/b");
    assert_eq!(normalize_http("/setUserRole/"), "/setUserRole");
    assert_eq!(normalize_http("orders"), "/orders");
    assert_eq!(normalize_http("http://host"), "/");
}

fn chan(svc: &str, dir: Direction, proto: Protocol, ident: &str, i: u32) -> Channel {
    Channel {
        element: crate::model::ElementId::from(format!("{svc}:{svc}.msv:{i}:1:call").as_str()),
        direction: dir,
        protocol: proto,
        identifier: ident.into(),
    }
}

fn two_services(out: Channel, inn: Channel) -> Program {
    let a = Service::new("a", true, vec![], vec![], vec![out]);
    let b = Service::new("b", false, vec![], vec![], vec![inn]);
    Program::new(vec![a, b], bare_manifest())
}

#[test]
fn matching_rules() {
    let (edges, diags) = match_channels(&two_services(
        chan(
            "a",
            Direction::Out,
            Protocol::Http,
            "http://localhost:5000/setUserRole",
            1,
        ),
        chan("b", Direction::In, Protocol::Http, "/setUserRole", 1),
    ));
    assert_eq!(edges.len(), 1);
    assert_eq!(edges[0].match_rule, MatchRule::Exact);
    assert!(diags.is_empty());

    let (edges, _) = match_channels(&two_services(
        chan("a", Direction::Out, Protocol::Http, "http://orders:8080/orders/42", 1),
        chan("b", Direction::In, Protocol::Http, "/orders/{id}", 1),
    ));
    assert_eq!(edges.len(), 1);
    assert_eq!(edges[0].match_rule, MatchRule::Wildcard);

    let (edges, _) = match_channels(&two_services(
        chan("a", Direction::Out, Protocol::Http, "/orders/42/items", 1),
        chan("b", Direction::In, Protocol::Http, "/orders/:id", 1),
    ));
    assert!(edges.is_empty());

    let (edges, _) = match_channels(&two_services(
        chan("a", Direction::Out, Protocol::Topic, "payments", 1),
        chan("b", Direction::In, Protocol::Topic, "refunds", 1),
    ));
    assert!(edges.is_empty());

    let (edges, _) = match_channels(&two_services(
        chan("a", Direction::Out, Protocol::Topic, "refunds", 1),
        chan("b", Direction::In, Protocol::Http, "/refunds", 1),
    ));
    assert!(edges.is_empty());
}

#[test]
fn ambiguous_targets_get_all_edges_and_a_diagnostic() {
    let a = Service::new(
        "a",
        true,
        vec![],
        vec![],
        vec![chan("a", Direction::Out, Protocol::Http, "http://x/ping", 1)],
    );
    let b = Service::new(
        "b",
        false,
        vec![],
        vec![],
        vec![chan("b", Direction::In, Protocol::Http, "/ping", 1)],
    );
    let c = Service::new(
        "c",
        false,
        vec![],
        vec![],
        vec![chan("c", Direction::In, Protocol::Http, "/{p}", 1)],
    );
    let (edges, diags) = match_channels(&Program::new(vec![a, b, c], bare_manifest()));
    assert_eq!(edges.len(), 2);
    match &diags[..] {
        [ChannelDiagnostic::AmbiguousChannel { targets, .. }] => assert_eq!(targets.len(), 2),
        d => panic!("{d:?}"),
    }
}

#[test]
fn same_service_channels_do_not_link() {
    let a = Service::new(
        "a",
        true,
        vec![],
        vec![],
        vec![
            chan("a", Direction::Out, Protocol::Http, "/self", 1),
            chan("a", Direction::In, Protocol::Http, "/self", 2),
        ],
    );
    assert!(match_channels(&Program::new(vec![a], bare_manifest())).0.is_empty());
}

fn fig2_graph(p: &Program) -> (GlobalGraph, NodeRef) {
    let sink = node(p, "roles", ElementKind::Call, "users.update_role(user, role)");
    (build_global_graph(p, std::slice::from_ref(&sink)), sink)
}

#[test]
fn motivating_graph_edges() {
    let p = fig2();
    let (g, sink) = fig2_graph(&p);
    let update = node(&p, "profile", ElementKind::Endpoint, "/updateProfile");
    let post = node(&p, "profile", ElementKind::Call, "http_post(u, user + role)");
    let set_role = node(&p, "roles", ElementKind::Endpoint, "/setUserRole");
    let edges: BTreeSet<(NodeRef, NodeRef)> = g
        .edges
        .iter()
        .flat_map(|(a, m)| m.keys().map(move |b| (a.clone(), b.clone())))
        .collect();
    let expected: BTreeSet<(NodeRef, NodeRef)> = [
        (update.clone(), post.clone()),
        (post.clone(), set_role.clone()),
        (set_role, sink.clone()),
    ]
    .into_iter()
    .collect();
    assert_eq!(edges, expected);
    assert_eq!(g.channel_edges.len(), 1);

    let users: Vec<NodeRef> = q_user(&p, &ScriptedOracle::default())
        .unwrap()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    assert_eq!(users, vec![update]);
    let flows = q_globalflow(&g, &users, std::slice::from_ref(&sink));
    assert!(!flows.truncated);
    assert_eq!(flows.paths.len(), 1);
    let path = &flows.paths[0];
    let ces = path.channel_edges();
    assert_eq!(ces.len(), 1);
    assert_eq!(normalize_http(&ces[0].to.identifier), "/setUserRole");
    assert_eq!(path.source(), &users[0]);
    assert_eq!(path.sink(), &sink);
    assert_junctions(path);

    let dot = g.to_dot(&p);
    assert!(dot.starts_with("digraph privflow {"));
    assert_eq!(dot.matches(" -> ").count(), 3);
}

#[test]
fn no_inter_calls_means_intra_edges_only() {
    let p = program(&[("roles", ROLES)], &["/"]);
    let sink = node(&p, "roles", ElementKind::Call, "users.update_role(user, role)");
    let g = build_global_graph(&p, std::slice::from_ref(&sink));
    assert!(g.channel_edges.is_empty());
    assert!(g
        .edges
        .values()
        .flat_map(|m| m.values())
        .all(|w| matches!(w, Witness::Intra { .. })));
    assert_eq!(g.edge_count(), 1);
    let src = node(&p, "roles", ElementKind::Endpoint, "/setUserRole");
    let unrelated = node(&p, "roles", ElementKind::Call, "request.param(\"user\")");
    assert!(q_globalflow(&g, &[src], &[unrelated]).paths.is_empty());
}

/// Each segment starts where the previous one ended.
fn assert_junctions(path: &GlobalPath) {
    assert_eq!(path.nodes.len(), path.segments.len() + 1);
    for (i, seg) in path.segments.iter().enumerate() {
        let (first, last) = match seg {
            Segment::Intra { service, path: fp } => (
                NodeRef::new(service.clone(), fp.first().clone()),
                NodeRef::new(service.clone(), fp.last().clone()),
            ),
            Segment::Cross { edge } => (edge.from_node(), edge.to_node()),
        };
        assert_eq!(first, path.nodes[i]);
        assert_eq!(last, path.nodes[i + 1]);
    }
}

#[test]
fn diamond_has_two_paths() {
    let front = r#"
@route("POST", "/api/pay")
fn pay(request) {
    a = request.param("amount")
    http_post("http://left/settle", a)
    http_post("http://right/settle", a)
    return "ok"
}
"#;
    let side = |ledger: &str| {
        format!(
            "@route(\"POST\", \"/settle\")\nfn settle(request) {{\n    a = request.param(\"amount\")\n    http_post(\"http://{ledger}/charge\", a)\n    return \"ok\"\n}}\n"
        )
    };
    let ledger = r#"
@route("POST", "/charge")
fn charge(request) {
    a = request.param("amount")
    payments.charge_account(a)
    return "ok"
}
"#;
    // left and right both call the ledger, but "/settle" exists twice, so
    // give them distinct ledger hosts only for readability
    let left = side("ledger");
    let right = side("ledger");
    let left = left.replace("/settle", "/left/settle");
    let right = right.replace("/settle", "/right/settle");
    let front = front
        .replace("http://left/settle", "http://left/left/settle")
        .replace("http://right/settle", "http://right/right/settle");
    let p = program(
        &[
            ("front", &front),
            ("left", &left),
            ("right", &right),
            ("ledger", ledger),
        ],
        &["/api"],
    );
    let sink = node(&p, "ledger", ElementKind::Call, "payments.charge_account(a)");
    let g = build_global_graph(&p, std::slice::from_ref(&sink));
    let users: Vec<NodeRef> = q_user(&p, &ScriptedOracle::default())
        .unwrap()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let flows = q_globalflow(&g, &users, std::slice::from_ref(&sink));
    assert_eq!(flows.paths.len(), 2);
    let via: Vec<&str> = flows.paths.iter().map(|p| p.nodes[2].service.as_str()).collect();
    assert_eq!(via, vec!["left", "right"]);
    assert_eq!(simple_paths(&edge_pairs(&g), &users, &[sink]), 2);
    for path in &flows.paths {
        assert_eq!(path.channel_edges().len(), 2);
        assert_junctions(path);
    }
}

fn edge_pairs(g: &GlobalGraph) -> BTreeSet<(NodeRef, NodeRef)> {
    g.edges
        .iter()
        .flat_map(|(a, m)| m.keys().map(move |b| (a.clone(), b.clone())))
        .collect()
}

/// Brute-force count of simple paths with at least one edge.
fn simple_paths(edges: &BTreeSet<(NodeRef, NodeRef)>, sources: &[NodeRef], sinks: &[NodeRef]) -> usize {
    fn go(
        n: &NodeRef,
        edges: &BTreeSet<(NodeRef, NodeRef)>,
        sinks: &BTreeSet<&NodeRef>,
        seen: &mut Vec<NodeRef>,
    ) -> usize {
        let mut count = 0;
        for (a, b) in edges {
            if a != n || seen.contains(b) {
                continue;
            }
            if sinks.contains(b) {
                count += 1;
            }
            seen.push(b.clone());
            count += go(b, edges, sinks, seen);
            seen.pop();
        }
        count
    }
    let sinks: BTreeSet<&NodeRef> = sinks.iter().collect();
    let sources: BTreeSet<&NodeRef> = sources.iter().collect();
    sources
        .into_iter()
        .map(|s| go(s, edges, &sinks, &mut vec![s.clone()]))
        .sum()
}

// ---- random programs against an oracle built from their description ----

fn closure(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for &(a, b) in pairs {
        r[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

/// Both phases, recomputed from the plain description.
fn oracle_edges(spec: &ProgramSpec) -> BTreeSet<(NodeRef, NodeRef)> {
    let mut out = BTreeSet::new();
    for (k, s) in spec.services.iter().enumerate() {
        let reach = closure(s.kinds.len(), &s.dataflow);
        let mut dests: BTreeSet<usize> = spec.privops[k].iter().copied().collect();
        dests.extend(spec.out_calls.iter().filter(|o| o.0 == k).map(|o| o.1));
        for src in (0..s.kinds.len()).filter(|&i| s.kinds[i] == SpecKind::Endpoint) {
            for &d in &dests {
                if d != src && reach[src][d] {
                    out.insert((spec.node(k, src), spec.node(k, d)));
                }
            }
        }
    }
    for (k, call, _, target) in &spec.out_calls {
        if let Some((t, e)) = target {
            out.insert((spec.node(*k, *call), spec.node(*t, *e)));
        }
    }
    out
}

fn reachable(edges: &BTreeSet<(NodeRef, NodeRef)>, from: &NodeRef, to: &NodeRef) -> bool {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from.clone()];
    while let Some(n) = stack.pop() {
        for (a, b) in edges {
            if *a == n {
                if b == to {
                    return true;
                }
                if seen.insert(b.clone()) {
                    stack.push(b.clone());
                }
            }
        }
    }
    false
}

#[test]
fn random_programs_agree_with_closure_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x610ba1);
    let mut nonempty = 0;
    for case in 0..50 {
        let spec = random_program(&mut rng);
        let p = spec.materialize();
        let sinks = spec.privop_nodes();
        let sources = spec.entry_sources();
        let g = build_global_graph(&p, &sinks);
        let expected = oracle_edges(&spec);
        assert_eq!(edge_pairs(&g), expected, "case {case}");

        let flows = q_globalflow(&g, &sources, &sinks);
        assert!(!flows.truncated);
        for src in &sources {
            for sink in &sinks {
                let found = flows.paths.iter().any(|p| p.source() == src && p.sink() == sink);
                assert_eq!(found, reachable(&expected, src, sink), "case {case}: {src} -> {sink}");
            }
        }
        assert_eq!(
            flows.paths.len(),
            simple_paths(&expected, &sources, &sinks),
            "case {case}"
        );
        let order: Vec<&Vec<NodeRef>> = flows.paths.iter().map(|p| &p.nodes).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]), "case {case}: order");
        flows.paths.iter().for_each(assert_junctions);
        nonempty += usize::from(!flows.paths.is_empty());
    }
    assert!(nonempty >= 10, "only {nonempty} programs had a path");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn removing_a_channel_edge_never_adds_paths(seed in any::<u64>()) {
        let spec = random_program(&mut ChaCha8Rng::seed_from_u64(seed));
        let p = spec.materialize();
        let (sources, sinks) = (spec.entry_sources(), spec.privop_nodes());
        let g = build_global_graph(&p, &sinks);
        let before = q_globalflow(&g, &sources, &sinks).paths.len();
        for ce in &g.channel_edges {
            let h = g.without_channel_edge(ce);
            prop_assert_eq!(h.channel_edges.len() + 1, g.channel_edges.len());
            prop_assert!(q_globalflow(&h, &sources, &sinks).paths.len() <= before);
        }
    }

    #[test]
    fn graph_construction_is_deterministic(seed in any::<u64>()) {
        let spec = random_program(&mut ChaCha8Rng::seed_from_u64(seed));
        let p = spec.materialize();
        let sinks = spec.privop_nodes();
        let g1 = build_global_graph(&p, &sinks);
        let g2 = build_global_graph(&p, &sinks);
        prop_assert_eq!(&g1, &g2);
        let a = serde_json::to_string(&q_globalflow(&g1, &spec.entry_sources(), &sinks).paths).unwrap();
        let b = serde_json::to_string(&q_globalflow(&g2, &spec.entry_sources(), &sinks).paths).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn paths_serialize_round_trip() {
    let p = fig2();
    let (g, sink) = fig2_graph(&p);
    let src = node(&p, "profile", ElementKind::Endpoint, "/updateProfile");
    let flows = q_globalflow(&g, &[src], &[sink]);
    let text = serde_json::to_string(&flows.paths).unwrap();
    let back: Vec<GlobalPath> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, flows.paths);
    let elements = back[0].elements();
    let services: BTreeMap<&str, usize> = elements.iter().fold(BTreeMap::new(), |mut m, n| {
        *m.entry(n.service.as_str()).or_default() += 1;
        m
    });
    assert_eq!(services.keys().copied().collect::<Vec<_>>(), vec!["profile", "roles"]);
}

fn bare_manifest() -> Manifest {
    Manifest {
        version: 1,
        services: vec![],
        gateway_routes: vec![],
    }
}
