//! NNF → DNF, then a per-cube check: boolean literals, string equality
//! classes with literal nodes, integer classes with interval bounds and
//! excluded constants, and a backtracking value search for integer
//! disequalities between classes.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{eval_witness, Assignment, Atom, CmpOp, Formula, PathConstraint, SatResult, Sort, StrRhs, Value};

pub const CUBE_LIMIT: usize = 4096;
const SEARCH_STEPS: usize = 100_000;

/// A literal after negation normal form.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Lit {
    IntConst(String, CmpOp, i64),
    IntVars(String, String, bool),
    StrLit(String, String, bool),
    StrVars(String, String, bool),
    Bool(String, bool),
    Const(bool),
}

fn nnf(f: &Formula, neg: bool, out: &mut Nnf) {
    match f {
        Formula::Not(x) => nnf(x, !neg, out),
        Formula::And(fs) | Formula::Or(fs) => {
            let is_and = matches!(f, Formula::And(_)) != neg;
            let mut kids = Vec::new();
            for x in fs {
                let mut k = Nnf::And(Vec::new());
                nnf(x, neg, &mut k);
                kids.push(k);
            }
            *out = if is_and { Nnf::And(kids) } else { Nnf::Or(kids) };
        }
        Formula::Atom(a) => {
            let lit = match a {
                Atom::IntConst { var, op, value } => {
                    Lit::IntConst(var.clone(), if neg { op.negate() } else { *op }, *value)
                }
                Atom::IntVars { a, b, eq } => Lit::IntVars(a.clone(), b.clone(), *eq != neg),
                Atom::Str { var, rhs, eq } => match rhs {
                    StrRhs::Lit { value } => Lit::StrLit(var.clone(), value.clone(), *eq != neg),
                    StrRhs::Var { name } => Lit::StrVars(var.clone(), name.clone(), *eq != neg),
                },
                Atom::BoolVar { var } => Lit::Bool(var.clone(), !neg),
                Atom::BoolLit { value } => Lit::Const(*value != neg),
            };
            *out = Nnf::Lit(lit);
        }
    }
}

#[derive(Debug)]
enum Nnf {
    Lit(Lit),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
}

struct Overflow;

fn dnf(n: &Nnf) -> Result<Vec<Vec<Lit>>, Overflow> {
    match n {
        Nnf::Lit(l) => Ok(vec![vec![l.clone()]]),
        Nnf::Or(kids) => {
            let mut out = Vec::new();
            for k in kids {
                out.extend(dnf(k)?);
                if out.len() > CUBE_LIMIT {
                    return Err(Overflow);
                }
            }
            Ok(out)
        }
        Nnf::And(kids) => {
            let mut acc: Vec<Vec<Lit>> = vec![Vec::new()];
            for k in kids {
                let rhs = dnf(k)?;
                if acc.len().saturating_mul(rhs.len()) > CUBE_LIMIT {
                    return Err(Overflow);
                }
                let mut next = Vec::with_capacity(acc.len() * rhs.len());
                for a in &acc {
                    for b in &rhs {
                        let mut c = a.clone();
                        c.extend(b.iter().cloned());
                        next.push(c);
                    }
                }
                acc = next;
            }
            Ok(acc)
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind { parent: Vec::new() }
    }

    fn add(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let n = self.parent[c];
            self.parent[c] = r;
            c = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Interns names into union-find nodes.
struct Nodes {
    uf: UnionFind,
    ids: HashMap<String, usize>,
}

impl Nodes {
    fn new() -> Self {
        Nodes {
            uf: UnionFind::new(),
            ids: HashMap::new(),
        }
    }

    fn node(&mut self, key: &str) -> usize {
        if let Some(&i) = self.ids.get(key) {
            return i;
        }
        let i = self.uf.add();
        self.ids.insert(key.to_string(), i);
        i
    }
}

enum Cube {
    Sat(Assignment),
    Unsat,
    Unknown(String),
}

/// Decides satisfiability of a well-formed constraint.
pub fn check_sat(c: &PathConstraint) -> SatResult {
    if let Err(e) = c.validate() {
        return SatResult::Unknown {
            reason: format!("ill-formed constraint: {e}"),
        };
    }
    let mut root = Nnf::And(Vec::new());
    nnf(&c.formula, false, &mut root);
    let cubes = match dnf(&root) {
        Ok(c) => c,
        Err(Overflow) => {
            return SatResult::Unknown {
                reason: format!("more than {CUBE_LIMIT} cubes"),
            }
        }
    };
    let mut unknown = None;
    for cube in &cubes {
        match solve_cube(c, cube) {
            Cube::Sat(w) => {
                return match eval_witness(c, &w) {
                    Ok(true) => SatResult::Sat { witness: w },
                    _ => SatResult::Unknown {
                        reason: "witness failed self-check".into(),
                    },
                }
            }
            Cube::Unsat => {}
            Cube::Unknown(r) => {
                unknown.get_or_insert(r);
            }
        }
    }
    match unknown {
        Some(reason) => SatResult::Unknown { reason },
        None => SatResult::Unsat,
    }
}

fn solve_cube(c: &PathConstraint, cube: &[Lit]) -> Cube {
    let mut w = Assignment::new();

    // booleans
    let mut bools: BTreeMap<&str, bool> = BTreeMap::new();
    for l in cube {
        match l {
            Lit::Const(false) => return Cube::Unsat,
            Lit::Bool(v, val) => {
                if let Some(prev) = bools.insert(v, *val) {
                    if prev != *val {
                        return Cube::Unsat;
                    }
                }
            }
            _ => {}
        }
    }

    // strings: variable nodes "v:<name>", literal nodes "l:<text>"
    let mut sn = Nodes::new();
    let mut sdiseq = Vec::new();
    for l in cube {
        match l {
            Lit::StrLit(v, lit, eq) => {
                let (a, b) = (sn.node(&format!("v:{v}")), sn.node(&format!("l:{lit}")));
                if *eq {
                    sn.uf.union(a, b);
                } else {
                    sdiseq.push((a, b));
                }
            }
            Lit::StrVars(x, y, eq) => {
                let (a, b) = (sn.node(&format!("v:{x}")), sn.node(&format!("v:{y}")));
                if *eq {
                    sn.uf.union(a, b);
                } else {
                    sdiseq.push((a, b));
                }
            }
            _ => {}
        }
    }
    let mut class_lit: HashMap<usize, String> = HashMap::new();
    let mut lits: BTreeSet<String> = BTreeSet::new();
    let keys: Vec<(String, usize)> = sn.ids.iter().map(|(k, v)| (k.clone(), *v)).collect();
    for (k, i) in &keys {
        if let Some(text) = k.strip_prefix("l:") {
            lits.insert(text.to_string());
            let r = sn.uf.find(*i);
            if let Some(prev) = class_lit.insert(r, text.to_string()) {
                if prev != text {
                    return Cube::Unsat;
                }
            }
        }
    }
    for &(a, b) in &sdiseq {
        if sn.uf.find(a) == sn.uf.find(b) {
            return Cube::Unsat;
        }
    }
    let mut fresh: HashMap<usize, String> = HashMap::new();
    let mut counter = 0usize;
    let mut sorted_keys = keys.clone();
    sorted_keys.sort();
    for (k, i) in &sorted_keys {
        if let Some(name) = k.strip_prefix("v:") {
            let r = sn.uf.find(*i);
            let val = match class_lit.get(&r) {
                Some(l) => l.clone(),
                None => fresh
                    .entry(r)
                    .or_insert_with(|| loop {
                        let cand = format!("s{counter}");
                        counter += 1;
                        if !lits.contains(&cand) {
                            break cand;
                        }
                    })
                    .clone(),
            };
            w.insert(name.to_string(), Value::Str(val));
        }
    }

    // integers
    match solve_ints(cube) {
        IntOutcome::Sat(vals) => {
            for (k, v) in vals {
                w.insert(k, Value::Int(v));
            }
        }
        IntOutcome::Unsat => return Cube::Unsat,
        IntOutcome::Unknown(r) => return Cube::Unknown(r),
    }

    for (v, b) in bools {
        w.insert(v.to_string(), Value::Bool(b));
    }
    for (name, sort) in &c.variables {
        w.entry(name.clone()).or_insert(match sort {
            Sort::Int => Value::Int(0),
            Sort::String => Value::Str(String::new()),
            Sort::Bool => Value::Bool(false),
        });
    }
    Cube::Sat(w)
}

enum IntOutcome {
    Sat(Vec<(String, i64)>),
    Unsat,
    Unknown(String),
}

#[derive(Debug, Clone)]
struct Domain {
    lo: i128,
    hi: i128,
    excluded: BTreeSet<i128>,
}

impl Domain {
    fn full() -> Self {
        Domain {
            lo: i64::MIN as i128,
            hi: i64::MAX as i128,
            excluded: BTreeSet::new(),
        }
    }

    fn apply(&mut self, op: CmpOp, c: i128) {
        match op {
            CmpOp::Eq => {
                self.lo = self.lo.max(c);
                self.hi = self.hi.min(c);
            }
            CmpOp::Ne => {
                self.excluded.insert(c);
            }
            CmpOp::Lt => self.hi = self.hi.min(c - 1),
            CmpOp::Le => self.hi = self.hi.min(c),
            CmpOp::Gt => self.lo = self.lo.max(c + 1),
            CmpOp::Ge => self.lo = self.lo.max(c),
        }
    }

    /// Up to `n` allowed values, nearest to zero first.
    fn candidates(&self, n: usize) -> Vec<i128> {
        let mut out = Vec::new();
        if self.lo > self.hi {
            return out;
        }
        let start = 0i128.clamp(self.lo, self.hi);
        let (mut up, mut down) = (start, start - 1);
        while out.len() < n && (up <= self.hi || down >= self.lo) {
            if up <= self.hi {
                if !self.excluded.contains(&up) {
                    out.push(up);
                }
                up += 1;
            }
            if out.len() < n && down >= self.lo {
                if !self.excluded.contains(&down) {
                    out.push(down);
                }
                down -= 1;
            }
        }
        out
    }
}

fn solve_ints(cube: &[Lit]) -> IntOutcome {
    let mut nodes = Nodes::new();
    let mut diseq = Vec::new();
    for l in cube {
        match l {
            Lit::IntConst(v, _, _) => {
                nodes.node(v);
            }
            Lit::IntVars(a, b, eq) => {
                let (x, y) = (nodes.node(a), nodes.node(b));
                if *eq {
                    nodes.uf.union(x, y);
                } else {
                    diseq.push((x, y));
                }
            }
            _ => {}
        }
    }
    let mut domains: BTreeMap<usize, Domain> = BTreeMap::new();
    let ids: Vec<(String, usize)> = {
        let mut v: Vec<_> = nodes.ids.iter().map(|(k, v)| (k.clone(), *v)).collect();
        v.sort();
        v
    };
    for (_, i) in &ids {
        let r = nodes.uf.find(*i);
        domains.entry(r).or_insert_with(Domain::full);
    }
    for l in cube {
        if let Lit::IntConst(v, op, c) = l {
            let r = nodes.uf.find(nodes.ids[v.as_str()]);
            domains.get_mut(&r).expect("class domain").apply(*op, *c as i128);
        }
    }
    let mut neighbours: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(a, b) in &diseq {
        let (ra, rb) = (nodes.uf.find(a), nodes.uf.find(b));
        if ra == rb {
            return IntOutcome::Unsat;
        }
        neighbours.entry(ra).or_default().insert(rb);
        neighbours.entry(rb).or_default().insert(ra);
    }
    let classes: Vec<usize> = domains.keys().copied().collect();
    let mut cands: Vec<Vec<i128>> = Vec::new();
    for r in &classes {
        let k = neighbours.get(r).map_or(0, BTreeSet::len);
        let c = domains[r].candidates(k + 1);
        if c.is_empty() {
            return IntOutcome::Unsat;
        }
        cands.push(c);
    }
    // k+1 candidates against k neighbours always leave a free value when the
    // domain is large enough; small domains need real search.
    let pos: HashMap<usize, usize> = classes.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    let mut chosen: Vec<Option<i128>> = vec![None; classes.len()];
    let mut steps = 0usize;
    match search(0, &classes, &cands, &neighbours, &pos, &mut chosen, &mut steps) {
        Some(true) => {}
        Some(false) => return IntOutcome::Unsat,
        None => return IntOutcome::Unknown("integer search step limit".into()),
    }
    let mut out = Vec::new();
    for (name, i) in &ids {
        let r = nodes.uf.find(*i);
        out.push((name.clone(), chosen[pos[&r]].expect("assigned") as i64));
    }
    IntOutcome::Sat(out)
}

fn search(
    i: usize,
    classes: &[usize],
    cands: &[Vec<i128>],
    neighbours: &BTreeMap<usize, BTreeSet<usize>>,
    pos: &HashMap<usize, usize>,
    chosen: &mut Vec<Option<i128>>,
    steps: &mut usize,
) -> Option<bool> {
    if i == classes.len() {
        return Some(true);
    }
    for &v in &cands[i] {
        *steps += 1;
        if *steps > SEARCH_STEPS {
            return None;
        }
        let clash = neighbours
            .get(&classes[i])
            .into_iter()
            .flatten()
            .any(|n| chosen[pos[n]] == Some(v));
        if clash {
            continue;
        }
        chosen[i] = Some(v);
        match search(i + 1, classes, cands, neighbours, pos, chosen, steps) {
            Some(true) => return Some(true),
            None => return None,
            Some(false) => {}
        }
        chosen[i] = None;
    }
    Some(false)
}
