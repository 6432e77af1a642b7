//! Guard collection along a flow and the syntactic translation of MiniSrv
//! conditions into the constraint fragment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Atom, CmpOp, Formula, PathConstraint, Sort, StrRhs};
use crate::cross_service::{GlobalPath, Segment};
use crate::minisrv::ast::{BinOp, Expr, ExprKind, StmtKind};
use crate::minisrv::{parse_expr_at, parse_stmt_at};
use crate::model::{ElementId, ElementKind, Program, Service, TypeTag};
use crate::reasoner::{ConstraintAnswer, ElementView, Reasoner, ReasonerError, ReasonerTask, ReasonerVerdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarInfo {
    /// Function-scoped name used in constraints (`handler.mode`).
    pub scoped: String,
    #[serde(rename = "type")]
    pub ty: TypeTag,
    /// Number of definitions (assignments and parameters) in scope.
    pub defs: usize,
}

/// A conditional guarding some element of a flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardView {
    pub element: ElementId,
    pub service: String,
    pub function: String,
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub condition: String,
    /// True when the flow runs through the `else` branch.
    pub negated: bool,
    pub vars: BTreeMap<String, VarInfo>,
}

fn idents(e: &Expr, out: &mut Vec<String>) {
    match &e.kind {
        ExprKind::Ident(n) => out.push(n.clone()),
        ExprKind::Field { base, .. } => idents(base, out),
        ExprKind::Call { callee, args, .. } => {
            idents(callee, out);
            args.iter().for_each(|a| idents(a, out));
        }
        ExprKind::Binary { lhs, rhs, .. } => {
            idents(lhs, out);
            idents(rhs, out);
        }
        _ => {}
    }
}

fn var_info(s: &Service, func: Option<&crate::model::Element>, name: &str) -> Option<VarInfo> {
    let fid = func.map(|f| f.id.clone());
    let in_scope = |id: &ElementId| s.enclosing_function(id).map(|f| f.id.clone()) == fid;
    let defs: Vec<&crate::model::Element> = s
        .elements()
        .iter()
        .filter(|e| e.name == name && matches!(e.kind, ElementKind::Variable | ElementKind::Parameter))
        .filter(|e| in_scope(&e.id))
        .collect();
    if !defs.is_empty() {
        let ty = if defs.len() == 1 {
            defs[0].inferred_type
        } else {
            TypeTag::Unknown
        };
        let scoped = match func {
            Some(f) => format!("{}.{name}", f.name),
            None => name.to_string(),
        };
        return Some(VarInfo {
            scoped,
            ty,
            defs: defs.len(),
        });
    }
    if func.is_some() {
        // module-level constant
        return var_info(s, None, name);
    }
    None
}

/// Conditionals that lexically contain a flow element, with the branch the
/// flow takes. Fails when a conditional's source cannot be re-read.
pub fn collect_guards(program: &Program, path: &GlobalPath) -> Result<Vec<GuardView>, String> {
    let mut out: Vec<GuardView> = Vec::new();
    for seg in &path.segments {
        let Segment::Intra { service, path: fp } = seg else {
            continue;
        };
        let s = program
            .service(service)
            .ok_or_else(|| format!("unknown service `{service}`"))?;
        for node in &fp.nodes {
            let Some(el) = s.element(node) else { continue };
            for anc in s.ancestors(node).into_iter().rev() {
                if anc.kind != ElementKind::Conditional {
                    continue;
                }
                let loc = &anc.location;
                let stmt = parse_stmt_at(&anc.source, &loc.file, loc.line, loc.col)
                    .map_err(|e| format!("cannot read guard at {loc}: {}", e.message))?;
                let StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                } = &stmt.kind
                else {
                    return Err(format!("guard at {loc} is not an if statement"));
                };
                let (l, c) = (el.location.line, el.location.col);
                let negated = if then_block.span.contains(l, c) {
                    false
                } else if else_block.as_ref().is_some_and(|b| b.span.contains(l, c)) {
                    true
                } else {
                    continue;
                };
                if out
                    .iter()
                    .any(|g| g.element == anc.id && g.service == *service && g.negated == negated)
                {
                    continue;
                }
                let func = s.enclosing_function(&anc.id);
                let mut names = Vec::new();
                idents(cond, &mut names);
                let mut vars = BTreeMap::new();
                for n in names {
                    if let Some(info) = var_info(s, func, &n) {
                        vars.insert(n, info);
                    }
                }
                out.push(GuardView {
                    element: anc.id.clone(),
                    service: service.clone(),
                    function: func.map(|f| f.name.clone()).unwrap_or_default(),
                    file: loc.file.clone(),
                    line: cond.span.start.line,
                    col: cond.span.start.col,
                    condition: anc.source[cond.span.start.offset..cond.span.end.offset].to_string(),
                    negated,
                    vars,
                });
            }
        }
    }
    Ok(out)
}

enum Operand {
    Var(String),
    Int(i64),
    Str(String),
    Bool(bool),
}

struct Tr<'g> {
    guard: &'g GuardView,
    vars: &'g mut BTreeMap<String, Sort>,
}

impl Tr<'_> {
    fn declare(&mut self, name: &str, sort: Sort) -> Result<String, String> {
        let info = self
            .guard
            .vars
            .get(name)
            .ok_or_else(|| format!("`{name}` is not a known variable"))?;
        if info.defs > 1 {
            return Err(format!("`{name}` is assigned more than once"));
        }
        let declared = match info.ty {
            TypeTag::Int => Some(Sort::Int),
            TypeTag::String => Some(Sort::String),
            TypeTag::Bool => Some(Sort::Bool),
            TypeTag::Unknown => None,
            _ => return Err(format!("`{name}` has a non-scalar type")),
        };
        if declared.is_some_and(|d| d != sort) {
            return Err(format!("`{name}` is used with conflicting types"));
        }
        match self.vars.get(&info.scoped) {
            Some(&s) if s != sort => Err(format!("`{name}` is used with conflicting types")),
            _ => {
                self.vars.insert(info.scoped.clone(), sort);
                Ok(info.scoped.clone())
            }
        }
    }

    fn known_sort(&self, name: &str) -> Option<Sort> {
        let info = self.guard.vars.get(name)?;
        match info.ty {
            TypeTag::Int => Some(Sort::Int),
            TypeTag::String => Some(Sort::String),
            TypeTag::Bool => Some(Sort::Bool),
            _ => self.vars.get(&info.scoped).copied(),
        }
    }

    fn operand(&self, e: &Expr) -> Result<Operand, String> {
        match &e.kind {
            ExprKind::Ident(n) => Ok(Operand::Var(n.clone())),
            ExprKind::Int(v) => Ok(Operand::Int(*v)),
            ExprKind::Str(s) => Ok(Operand::Str(s.clone())),
            ExprKind::Bool(b) => Ok(Operand::Bool(*b)),
            ExprKind::Call { .. } => Err("guard calls a function".into()),
            ExprKind::Field { .. } => Err("guard reads a member".into()),
            ExprKind::Binary { .. } => Err("nested operator inside a comparison".into()),
        }
    }

    fn formula(&mut self, e: &Expr) -> Result<Formula, String> {
        match &e.kind {
            ExprKind::Bool(b) => Ok(Formula::Atom(Atom::BoolLit { value: *b })),
            ExprKind::Ident(n) => {
                let var = self.declare(n, Sort::Bool)?;
                Ok(Formula::Atom(Atom::BoolVar { var }))
            }
            ExprKind::Binary { op, lhs, rhs } => match op {
                BinOp::And => Ok(Formula::And(vec![self.formula(lhs)?, self.formula(rhs)?])),
                BinOp::Or => Ok(Formula::Or(vec![self.formula(lhs)?, self.formula(rhs)?])),
                BinOp::Add => Err("concatenation or arithmetic outside the fragment".into()),
                _ => {
                    let cmp = match op {
                        BinOp::Eq => CmpOp::Eq,
                        BinOp::Ne => CmpOp::Ne,
                        BinOp::Lt => CmpOp::Lt,
                        BinOp::Le => CmpOp::Le,
                        BinOp::Gt => CmpOp::Gt,
                        _ => CmpOp::Ge,
                    };
                    let (l, r) = (self.operand(lhs)?, self.operand(rhs)?);
                    self.comparison(cmp, l, r)
                }
            },
            ExprKind::Call { .. } => Err("guard calls a function".into()),
            ExprKind::Field { .. } => Err("guard reads a member".into()),
            _ => Err("condition is not boolean".into()),
        }
    }

    fn comparison(&mut self, op: CmpOp, l: Operand, r: Operand) -> Result<Formula, String> {
        use Operand::*;
        let eq_only = |op: CmpOp| -> Result<bool, String> {
            match op {
                CmpOp::Eq => Ok(true),
                CmpOp::Ne => Ok(false),
                _ => Err("ordering comparison on non-integers".into()),
            }
        };
        let atom = |a: Atom| Formula::Atom(a);
        Ok(match (l, r) {
            (Var(a), Int(c)) => atom(Atom::IntConst {
                var: self.declare(&a, Sort::Int)?,
                op,
                value: c,
            }),
            (Int(c), Var(a)) => atom(Atom::IntConst {
                var: self.declare(&a, Sort::Int)?,
                op: op.flip(),
                value: c,
            }),
            (Var(a), Str(s)) | (Str(s), Var(a)) => atom(Atom::Str {
                eq: eq_only(op)?,
                var: self.declare(&a, Sort::String)?,
                rhs: StrRhs::Lit { value: s },
            }),
            (Var(a), Bool(b)) | (Bool(b), Var(a)) => {
                let positive = eq_only(op)? == b;
                let f = atom(Atom::BoolVar {
                    var: self.declare(&a, Sort::Bool)?,
                });
                if positive {
                    f
                } else {
                    Formula::not(f)
                }
            }
            (Var(a), Var(b)) => {
                let sort = self
                    .known_sort(&a)
                    .or_else(|| self.known_sort(&b))
                    .ok_or("comparison between variables of unknown type")?;
                let eq = eq_only(op).map_err(|_| "ordering between variables outside the fragment".to_string())?;
                match sort {
                    Sort::Int => atom(Atom::IntVars {
                        a: self.declare(&a, Sort::Int)?,
                        b: self.declare(&b, Sort::Int)?,
                        eq,
                    }),
                    Sort::String => atom(Atom::Str {
                        var: self.declare(&a, Sort::String)?,
                        rhs: StrRhs::Var {
                            name: self.declare(&b, Sort::String)?,
                        },
                        eq,
                    }),
                    Sort::Bool => return Err("equality between boolean variables outside the fragment".into()),
                }
            }
            (Int(x), Int(y)) => atom(Atom::BoolLit { value: op.eval(x, y) }),
            (Str(x), Str(y)) => atom(Atom::BoolLit {
                value: eq_only(op)? == (x == y),
            }),
            (Bool(x), Bool(y)) => atom(Atom::BoolLit {
                value: eq_only(op)? == (x == y),
            }),
            _ => return Err("comparison between values of different types".into()),
        })
    }
}

/// Direct syntactic translation; anything outside the fragment skips the
/// whole flow rather than guessing.
pub fn translate_guards(guards: &[GuardView]) -> ConstraintAnswer {
    let mut vars = BTreeMap::new();
    let mut conj = Vec::new();
    for g in guards {
        let expr = match parse_expr_at(&g.condition, &g.file, g.line, g.col) {
            Ok(e) => e,
            Err(e) => {
                return ConstraintAnswer::Skipped {
                    reason: format!("cannot parse guard `{}`: {}", g.condition, e.message),
                }
            }
        };
        let mut tr = Tr {
            guard: g,
            vars: &mut vars,
        };
        match tr.formula(&expr) {
            Ok(f) => conj.push(if g.negated { Formula::not(f) } else { f }),
            Err(reason) => {
                return ConstraintAnswer::Skipped {
                    reason: format!("{reason} in `{}`", g.condition),
                }
            }
        }
    }
    ConstraintAnswer::Predicates {
        constraint: PathConstraint::new(vars, Formula::And(conj)),
    }
}

/// Builds the ExtractConstraints task for a flow and asks the reasoner.
/// Ill-formed answers are treated as Skipped.
pub fn extract_path_constraints(
    program: &Program,
    path: &GlobalPath,
    reasoner: &dyn Reasoner,
) -> Result<ConstraintAnswer, ReasonerError> {
    let guards = match collect_guards(program, path) {
        Ok(g) => g,
        Err(reason) => return Ok(ConstraintAnswer::Skipped { reason }),
    };
    let nodes: Vec<ElementView> = path
        .elements()
        .iter()
        .filter_map(|n| program.service(&n.service)?.element(&n.element))
        .map(ElementView::of)
        .collect();
    let verdict = reasoner.reason(&ReasonerTask::ExtractConstraints { path: nodes, guards })?;
    Ok(match verdict {
        ReasonerVerdict::Constraints { answer, .. } => match answer {
            ConstraintAnswer::Predicates { constraint } => match constraint.validate() {
                Ok(()) => ConstraintAnswer::Predicates { constraint },
                Err(e) => ConstraintAnswer::Skipped {
                    reason: format!("ill-formed constraint from reasoner: {e}"),
                },
            },
            skipped => skipped,
        },
        _ => ConstraintAnswer::Skipped {
            reason: "reasoner answered a different task".into(),
        },
    })
}
