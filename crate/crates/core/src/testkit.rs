//! Seeded random inputs for property tests and benchmarks: services,
//! multi-service programs and fragment formulas. Each generator also
//! returns the plain description it was built from, so oracles can be
//! written without going through the engine.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::constraints::{Atom, CmpOp, Formula, PathConstraint, Sort, StrRhs};
use crate::cross_service::NodeRef;
use crate::facts::{GatewayRoute, Manifest, ServiceEntry};
use crate::minisrv::{lower, parse_source};
use crate::model::{
    Channel, Direction, Edge, EdgeKind, Element, ElementId, ElementKind, Location, Program, Protocol, Service, TypeTag,
};

/// Builds a program from inline MiniSrv sources, one file per service
/// (`<name>.msv`). The first service is the entry; every gateway prefix
/// routes to it. Panics on parse or lowering errors.
pub fn minisrv_program(services: &[(&str, &str)], gateway_prefixes: &[&str]) -> Program {
    let built: Vec<Service> = services
        .iter()
        .enumerate()
        .map(|(i, (name, src))| {
            let ast = parse_source(src, name, &format!("{name}.msv")).unwrap_or_else(|e| panic!("{name}: {e}"));
            lower(&ast, name)
                .unwrap_or_else(|e| panic!("{name}: {e}"))
                .with_entry(i == 0)
        })
        .collect();
    let manifest = Manifest {
        version: 1,
        services: services
            .iter()
            .enumerate()
            .map(|(i, (name, _))| ServiceEntry {
                name: name.to_string(),
                entry: i == 0,
                base_url: None,
                files: vec![format!("{name}.msv")],
            })
            .collect(),
        gateway_routes: gateway_prefixes
            .iter()
            .map(|p| GatewayRoute {
                prefix: p.to_string(),
                target: services[0].0.to_string(),
            })
            .collect(),
    };
    Program::new(built, manifest)
}

/// Element kinds used by [`ServiceSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    Function,
    Variable,
    Call,
    Return,
    Endpoint,
}

impl SpecKind {
    fn element_kind(self) -> ElementKind {
        match self {
            SpecKind::Function => ElementKind::Function,
            SpecKind::Variable => ElementKind::Variable,
            SpecKind::Call => ElementKind::Call,
            SpecKind::Return => ElementKind::ReturnStmt,
            SpecKind::Endpoint => ElementKind::Endpoint,
        }
    }
}

/// A service as plain adjacency data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceSpec {
    pub name: String,
    pub kinds: Vec<SpecKind>,
    /// Owning function per element (functions own themselves).
    pub owner: Vec<usize>,
    pub dataflow: Vec<(usize, usize)>,
    /// `(call element, function element)`.
    pub calls: Vec<(usize, usize)>,
    /// Element names; endpoints use theirs as the route path.
    pub names: Vec<String>,
}

impl ServiceSpec {
    pub fn ids(&self) -> Vec<ElementId> {
        self.kinds
            .iter()
            .enumerate()
            .map(|(i, k)| ElementId::derive(&self.name, &self.location(i), k.element_kind()))
            .collect()
    }

    fn location(&self, i: usize) -> Location {
        Location::new(format!("{}.msv", self.name), i as u32 + 1, 1)
    }

    /// Builds the service, with `channels` supplied as facts.
    pub fn materialize(&self, entry: bool, channels: Vec<Channel>) -> Service {
        let ids = self.ids();
        let elements: Vec<Element> = self
            .kinds
            .iter()
            .enumerate()
            .map(|(i, k)| Element {
                id: ids[i].clone(),
                service: self.name.clone(),
                kind: k.element_kind(),
                name: self.names[i].clone(),
                location: self.location(i),
                source: self.names[i].clone(),
                inferred_type: TypeTag::Unknown,
            })
            .collect();
        let mut edges = Vec::new();
        for (i, &o) in self.owner.iter().enumerate() {
            match self.kinds[i] {
                SpecKind::Function => {}
                SpecKind::Endpoint => edges.push(Edge::new(EdgeKind::Decorates, ids[i].clone(), ids[o].clone())),
                _ => edges.push(Edge::new(EdgeKind::Contains, ids[o].clone(), ids[i].clone())),
            }
        }
        for &(a, b) in &self.dataflow {
            edges.push(Edge::new(EdgeKind::Dataflow, ids[a].clone(), ids[b].clone()));
        }
        for &(c, f) in &self.calls {
            edges.push(Edge::new(EdgeKind::Calls, ids[c].clone(), ids[f].clone()));
        }
        Service::new(self.name.clone(), entry, elements, edges, channels)
    }
}

/// A single service with up to `max_elements` elements (functions,
/// variables, calls and returns) and random dataflow and call edges.
pub fn random_service<R: Rng>(rng: &mut R, name: &str, max_elements: usize) -> ServiceSpec {
    let max_elements = max_elements.max(3);
    let nf = rng.gen_range(1..=4.min(max_elements - 2));
    let n = rng.gen_range(nf + 2..=max_elements);
    let mut kinds = vec![SpecKind::Function; nf];
    let mut owner: Vec<usize> = (0..nf).collect();
    for _ in nf..n {
        kinds.push(
            *[SpecKind::Variable, SpecKind::Call, SpecKind::Return]
                .choose(rng)
                .expect("non-empty"),
        );
        owner.push(rng.gen_range(0..nf));
    }
    let dataflow = (0..rng.gen_range(0..n * 2))
        .map(|_| (rng.gen_range(nf..n), rng.gen_range(nf..n)))
        .collect();
    let mut calls = Vec::new();
    for i in nf..n {
        if kinds[i] == SpecKind::Call && rng.gen_bool(0.5) {
            calls.push((i, rng.gen_range(0..nf)));
        }
    }
    let names = (0..n).map(|i| format!("n{i}")).collect();
    ServiceSpec {
        name: name.to_string(),
        kinds,
        owner,
        dataflow,
        calls,
        names,
    }
}

/// A multi-service program plus its description.
#[derive(Debug, Clone)]
pub struct ProgramSpec {
    pub services: Vec<ServiceSpec>,
    /// Per service: indices of privileged call sites.
    pub privops: Vec<Vec<usize>>,
    /// `(service, out-call index, identifier, intended target (service, endpoint index))`.
    pub out_calls: Vec<(usize, usize, String, Option<(usize, usize)>)>,
}

impl ProgramSpec {
    pub fn materialize(&self) -> Program {
        let mut channels: Vec<Vec<Channel>> = vec![Vec::new(); self.services.len()];
        let ids: Vec<Vec<ElementId>> = self.services.iter().map(ServiceSpec::ids).collect();
        for (s, call, ident, _) in &self.out_calls {
            channels[*s].push(Channel {
                element: ids[*s][*call].clone(),
                direction: Direction::Out,
                protocol: Protocol::Http,
                identifier: ident.clone(),
            });
        }
        let services: Vec<Service> = self
            .services
            .iter()
            .zip(channels)
            .enumerate()
            .map(|(i, (s, ch))| s.materialize(i == 0, ch))
            .collect();
        let manifest = Manifest {
            version: 1,
            services: self
                .services
                .iter()
                .enumerate()
                .map(|(i, s)| ServiceEntry {
                    name: s.name.clone(),
                    entry: i == 0,
                    base_url: None,
                    files: vec![format!("{}.facts.jsonl", s.name)],
                })
                .collect(),
            gateway_routes: vec![GatewayRoute {
                prefix: "/".into(),
                target: self.services[0].name.clone(),
            }],
        };
        Program::new(services, manifest)
    }

    pub fn node(&self, service: usize, element: usize) -> NodeRef {
        NodeRef::new(
            self.services[service].name.clone(),
            self.services[service].ids()[element].clone(),
        )
    }

    /// Privileged operations as node references.
    pub fn privop_nodes(&self) -> Vec<NodeRef> {
        self.privops
            .iter()
            .enumerate()
            .flat_map(|(s, ops)| ops.iter().map(move |&e| (s, e)))
            .map(|(s, e)| self.node(s, e))
            .collect()
    }

    /// Endpoints of the entry service.
    pub fn entry_sources(&self) -> Vec<NodeRef> {
        let s = &self.services[0];
        (0..s.kinds.len())
            .filter(|&i| s.kinds[i] == SpecKind::Endpoint)
            .map(|i| self.node(0, i))
            .collect()
    }
}

/// 2 to 4 services with endpoints, privileged calls and outbound calls
/// whose identifiers target endpoints of other services (sometimes through
/// a `{id}` segment, sometimes nowhere). Intra-service flow uses dataflow
/// edges only.
pub fn random_program<R: Rng>(rng: &mut R) -> ProgramSpec {
    let ns = rng.gen_range(2..=4);
    let mut services = Vec::new();
    for k in 0..ns {
        let name = format!("svc{k}");
        let n_ep = rng.gen_range(1..=3);
        let n_body = rng.gen_range(3..=12);
        let mut kinds = vec![SpecKind::Function];
        let mut names = vec!["handler".to_string()];
        for j in 0..n_ep {
            kinds.push(SpecKind::Endpoint);
            names.push(if j == 0 && rng.gen_bool(0.3) {
                format!("/{name}/items/{{id}}")
            } else {
                format!("/{name}/e{j}")
            });
        }
        for i in 0..n_body {
            kinds.push(if rng.gen_bool(0.5) {
                SpecKind::Call
            } else {
                SpecKind::Variable
            });
            names.push(format!("x{i}"));
        }
        let n = kinds.len();
        let owner = vec![0; n];
        let first_body = 1 + n_ep;
        let dataflow = (0..rng.gen_range(n..n * 2))
            .map(|_| (rng.gen_range(1..n), rng.gen_range(first_body..n)))
            .filter(|(a, b)| a != b)
            .collect();
        services.push(ServiceSpec {
            name,
            kinds,
            owner,
            dataflow,
            calls: Vec::new(),
            names,
        });
    }
    let mut privops = vec![Vec::new(); ns];
    let mut out_calls = Vec::new();
    for k in 0..ns {
        let calls: Vec<usize> = (0..services[k].kinds.len())
            .filter(|&i| services[k].kinds[i] == SpecKind::Call)
            .collect();
        for c in calls {
            match rng.gen_range(0..3) {
                0 => privops[k].push(c),
                1 => {
                    let t = rng.gen_range(0..ns);
                    let eps: Vec<usize> = (0..services[t].kinds.len())
                        .filter(|&i| services[t].kinds[i] == SpecKind::Endpoint)
                        .collect();
                    let e = *eps.choose(rng).expect("every service has an endpoint");
                    let path = services[t].names[e].replace("{id}", &rng.gen_range(1..100).to_string());
                    if t == k || rng.gen_bool(0.1) {
                        out_calls.push((k, c, format!("http://localhost:9/nowhere{c}"), None));
                    } else {
                        out_calls.push((k, c, format!("http://{}:80{path}", services[t].name), Some((t, e))));
                    }
                }
                _ => {}
            }
        }
    }
    ProgramSpec {
        services,
        privops,
        out_calls,
    }
}

/// Variables and literals a random formula may use.
#[derive(Debug, Clone)]
pub struct FormulaConfig {
    pub int_vars: usize,
    pub str_vars: usize,
    pub bool_vars: usize,
    pub int_range: (i64, i64),
    pub str_literals: Vec<String>,
    pub max_depth: u32,
}

impl Default for FormulaConfig {
    fn default() -> Self {
        FormulaConfig {
            int_vars: 2,
            str_vars: 2,
            bool_vars: 2,
            int_range: (-4, 4),
            str_literals: vec!["a".into(), "b".into(), "c".into()],
            max_depth: 3,
        }
    }
}

fn random_atom<R: Rng>(rng: &mut R, cfg: &FormulaConfig, vars: &mut BTreeMap<String, Sort>) -> Formula {
    let mut var = |prefix: &str, n: usize, sort: Sort, rng: &mut R| {
        let v = format!("{prefix}{}", rng.gen_range(0..n.max(1)));
        vars.insert(v.clone(), sort);
        v
    };
    let choice = rng.gen_range(0..10);
    let atom = match choice {
        0..=3 if cfg.int_vars > 0 => {
            let ops = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];
            Atom::IntConst {
                var: var("i", cfg.int_vars, Sort::Int, rng),
                op: *ops.choose(rng).expect("non-empty"),
                value: rng.gen_range(cfg.int_range.0..=cfg.int_range.1),
            }
        }
        4 if cfg.int_vars > 0 => Atom::IntVars {
            a: var("i", cfg.int_vars, Sort::Int, rng),
            b: var("i", cfg.int_vars, Sort::Int, rng),
            eq: rng.gen_bool(0.5),
        },
        5..=6 if cfg.str_vars > 0 && !cfg.str_literals.is_empty() => Atom::Str {
            var: var("s", cfg.str_vars, Sort::String, rng),
            rhs: StrRhs::Lit {
                value: cfg.str_literals.choose(rng).expect("non-empty").clone(),
            },
            eq: rng.gen_bool(0.5),
        },
        7 if cfg.str_vars > 0 => Atom::Str {
            var: var("s", cfg.str_vars, Sort::String, rng),
            rhs: StrRhs::Var {
                name: var("s", cfg.str_vars, Sort::String, rng),
            },
            eq: rng.gen_bool(0.5),
        },
        8 if cfg.bool_vars > 0 => Atom::BoolVar {
            var: var("b", cfg.bool_vars, Sort::Bool, rng),
        },
        _ => Atom::BoolLit {
            value: rng.gen_bool(0.8),
        },
    };
    Formula::Atom(atom)
}

fn random_formula_at<R: Rng>(
    rng: &mut R,
    cfg: &FormulaConfig,
    depth: u32,
    vars: &mut BTreeMap<String, Sort>,
) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        return random_atom(rng, cfg, vars);
    }
    match rng.gen_range(0..5) {
        0 => Formula::not(random_formula_at(rng, cfg, depth - 1, vars)),
        1 | 2 => Formula::And(
            (0..rng.gen_range(1..=3))
                .map(|_| random_formula_at(rng, cfg, depth - 1, vars))
                .collect(),
        ),
        _ => Formula::Or(
            (0..rng.gen_range(1..=3))
                .map(|_| random_formula_at(rng, cfg, depth - 1, vars))
                .collect(),
        ),
    }
}

/// A random well-formed constraint; only variables that occur are declared.
pub fn random_constraint<R: Rng>(rng: &mut R, cfg: &FormulaConfig) -> PathConstraint {
    let mut vars = BTreeMap::new();
    let f = random_formula_at(rng, cfg, cfg.max_depth, &mut vars);
    PathConstraint::new(vars, f)
}
