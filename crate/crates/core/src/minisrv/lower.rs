//! Lowering of MiniSrv ASTs into code facts.
//!
//! Dataflow edges emitted here follow the explicit-flow rules: assignment
//! rhs → lhs, call argument → callee parameter (resolved calls only),
//! argument/receiver → call site, member access base → access, both operands
//! of `+` → result, endpoint → `request.*` reads and handler parameters.
//! Return → call-site edges are derived later by the flow-graph closure.
//! Comparisons and conditionals do not propagate.

use std::collections::HashMap;

use thiserror::Error;

use super::ast::*;
use crate::intrinsics::Intrinsic;
use crate::model::{Edge, EdgeKind, Element, ElementId, ElementKind, Location, Service, TypeTag};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoweringError {
    #[error("{location}: decorator references undefined check function `{name}`")]
    UndefinedCheck { name: String, location: Location },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnresolvedCall {
    pub element: ElementId,
    pub callee: String,
    pub location: Location,
}

#[derive(Debug, Clone)]
pub struct Lowered {
    pub service: Service,
    pub unresolved_calls: Vec<UnresolvedCall>,
}

pub fn lower(ast: &MiniSrvAst, service_name: &str) -> Result<Service, LoweringError> {
    lower_files(std::slice::from_ref(ast), service_name, false).map(|l| l.service)
}

/// Lowers all files of one service together so calls resolve across files.
pub fn lower_files(asts: &[MiniSrvAst], service_name: &str, entry: bool) -> Result<Lowered, LoweringError> {
    let mut b = Builder {
        service: service_name,
        elements: Vec::new(),
        edges: Vec::new(),
        functions: HashMap::new(),
        consts: HashMap::new(),
        unresolved: Vec::new(),
    };
    for ast in asts {
        b.declare(ast);
    }
    for ast in asts {
        for item in &ast.items {
            match item {
                Item::Const(c) => b.lower_const(ast, c),
                Item::Fn(f) => b.lower_fn(ast, f)?,
            }
        }
    }
    let mut unresolved = b.unresolved;
    unresolved.sort_by(|a, b| a.location.cmp(&b.location));
    Ok(Lowered {
        service: Service::new(service_name, entry, b.elements, b.edges, Vec::new()),
        unresolved_calls: unresolved,
    })
}

struct FnSig {
    id: ElementId,
    params: Vec<ElementId>,
}

struct ConstInfo {
    id: ElementId,
    ty: TypeTag,
}

struct Builder<'a> {
    service: &'a str,
    elements: Vec<Element>,
    edges: Vec<Edge>,
    functions: HashMap<String, Vec<FnSig>>,
    consts: HashMap<String, ConstInfo>,
    unresolved: Vec<UnresolvedCall>,
}

struct FnCtx<'a> {
    ast: &'a MiniSrvAst,
    locals: HashMap<String, Vec<ElementId>>,
    params: HashMap<String, ElementId>,
    endpoints: Vec<ElementId>,
    types: HashMap<String, TypeTag>,
}

fn loc(ast: &MiniSrvAst, pos: Pos) -> Location {
    Location::new(ast.file.clone(), pos.line, pos.col)
}

fn literal_type(e: &Expr) -> TypeTag {
    match e.kind {
        ExprKind::Int(_) => TypeTag::Int,
        ExprKind::Str(_) => TypeTag::String,
        ExprKind::Bool(_) => TypeTag::Bool,
        _ => TypeTag::Unknown,
    }
}

fn collect_locals(ast: &MiniSrvAst, service: &str, stmts: &[Stmt], out: &mut HashMap<String, Vec<ElementId>>) {
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { target, .. } => {
                let id = ElementId::derive(service, &loc(ast, target.span.start), ElementKind::Variable);
                out.entry(target.name.clone()).or_default().push(id);
            }
            StmtKind::If {
                then_block, else_block, ..
            } => {
                collect_locals(ast, service, &then_block.stmts, out);
                if let Some(b) = else_block {
                    collect_locals(ast, service, &b.stmts, out);
                }
            }
            _ => {}
        }
    }
}

impl Builder<'_> {
    fn id(&self, ast: &MiniSrvAst, pos: Pos, kind: ElementKind) -> ElementId {
        ElementId::derive(self.service, &loc(ast, pos), kind)
    }

    fn push(
        &mut self,
        ast: &MiniSrvAst,
        kind: ElementKind,
        name: &str,
        pos: Pos,
        span: Span,
        ty: TypeTag,
    ) -> ElementId {
        let id = self.id(ast, pos, kind);
        self.elements.push(Element {
            id: id.clone(),
            service: self.service.to_string(),
            kind,
            name: name.to_string(),
            location: loc(ast, pos),
            source: ast.slice(span).to_string(),
            inferred_type: ty,
        });
        id
    }

    fn edge(&mut self, kind: EdgeKind, from: &ElementId, to: &ElementId) {
        self.edges.push(Edge::new(kind, from.clone(), to.clone()));
    }

    fn declare(&mut self, ast: &MiniSrvAst) {
        for item in &ast.items {
            match item {
                Item::Fn(f) => {
                    let sig = FnSig {
                        id: self.id(ast, f.span.start, ElementKind::Function),
                        params: f
                            .params
                            .iter()
                            .map(|p| self.id(ast, p.span.start, ElementKind::Parameter))
                            .collect(),
                    };
                    self.functions.entry(f.name.name.clone()).or_default().push(sig);
                }
                Item::Const(c) => {
                    let info = ConstInfo {
                        id: self.id(ast, c.name.span.start, ElementKind::Variable),
                        ty: literal_type(&c.value),
                    };
                    self.consts.entry(c.name.name.clone()).or_insert(info);
                }
            }
        }
    }

    fn lower_const(&mut self, ast: &MiniSrvAst, c: &ConstDef) {
        let var = self.push(
            ast,
            ElementKind::Variable,
            &c.name.name,
            c.name.span.start,
            c.span,
            literal_type(&c.value),
        );
        let ctx = FnCtx {
            ast,
            locals: HashMap::new(),
            params: HashMap::new(),
            endpoints: Vec::new(),
            types: HashMap::new(),
        };
        let mut children = Vec::new();
        for v in self.lower_expr(&c.value, &ctx, &mut children) {
            self.edge(EdgeKind::Dataflow, &v, &var);
        }
        for ch in children {
            self.edge(EdgeKind::Contains, &var, &ch);
        }
    }

    fn lower_fn(&mut self, ast: &MiniSrvAst, f: &FnDef) -> Result<(), LoweringError> {
        let fid = self.push(
            ast,
            ElementKind::Function,
            &f.name.name,
            f.span.start,
            f.span,
            TypeTag::Function,
        );
        let mut params = HashMap::new();
        let mut param_ids = Vec::new();
        for p in &f.params {
            let pid = self.push(
                ast,
                ElementKind::Parameter,
                &p.name,
                p.span.start,
                p.span,
                TypeTag::Unknown,
            );
            self.edge(EdgeKind::Contains, &fid, &pid);
            params.entry(p.name.clone()).or_insert_with(|| pid.clone());
            param_ids.push(pid);
        }
        let mut endpoints = Vec::new();
        for d in &f.decorators {
            let did = self.push(
                ast,
                ElementKind::Decorator,
                &d.name.name,
                d.span.start,
                d.span,
                TypeTag::Unknown,
            );
            self.edge(EdgeKind::Decorates, &did, &fid);
            if let Some((_, path)) = d.route() {
                let eid = self.push(ast, ElementKind::Endpoint, path, d.span.start, d.span, TypeTag::Object);
                self.edge(EdgeKind::Decorates, &eid, &fid);
                for pid in &param_ids {
                    self.edge(EdgeKind::Dataflow, &eid, pid);
                }
                endpoints.push(eid);
            }
            if let Some((name, span)) = d.auth_target() {
                let targets: Vec<ElementId> = match self.functions.get(name) {
                    Some(sigs) => sigs.iter().map(|s| s.id.clone()).collect(),
                    None => {
                        return Err(LoweringError::UndefinedCheck {
                            name: name.to_string(),
                            location: loc(ast, span.start),
                        })
                    }
                };
                for t in targets {
                    self.edge(EdgeKind::Calls, &did, &t);
                }
            }
        }
        let mut locals = HashMap::new();
        collect_locals(ast, self.service, &f.body.stmts, &mut locals);
        let mut ctx = FnCtx {
            ast,
            locals,
            params,
            endpoints,
            types: HashMap::new(),
        };
        for s in &f.body.stmts {
            self.lower_stmt(s, &fid, &mut ctx);
        }
        Ok(())
    }

    fn lower_stmt(&mut self, s: &Stmt, parent: &ElementId, ctx: &mut FnCtx<'_>) {
        let ast = ctx.ast;
        let mut children = Vec::new();
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let ty = self.expr_type(value, ctx);
                let aid = self.push(ast, ElementKind::Assignment, "", s.span.start, s.span, TypeTag::Unknown);
                self.edge(EdgeKind::Contains, parent, &aid);
                let vals = self.lower_expr(value, ctx, &mut children);
                let vid = self.push(
                    ast,
                    ElementKind::Variable,
                    &target.name,
                    target.span.start,
                    target.span,
                    ty,
                );
                ctx.types.insert(target.name.clone(), ty);
                for v in vals {
                    self.edge(EdgeKind::Dataflow, &v, &vid);
                }
                self.edge(EdgeKind::Contains, &aid, &vid);
                for ch in &children {
                    self.edge(EdgeKind::Contains, &aid, ch);
                }
            }
            StmtKind::Call(e) => {
                let vals = self.lower_expr(e, ctx, &mut children);
                let cid = vals[0].clone();
                self.edge(EdgeKind::Contains, parent, &cid);
                for ch in children.iter().filter(|c| **c != cid) {
                    self.edge(EdgeKind::Contains, &cid, ch);
                }
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let cid = self.push(
                    ast,
                    ElementKind::Conditional,
                    "",
                    s.span.start,
                    s.span,
                    TypeTag::Unknown,
                );
                self.edge(EdgeKind::Contains, parent, &cid);
                self.lower_expr(cond, ctx, &mut children);
                for ch in &children {
                    self.edge(EdgeKind::Contains, &cid, ch);
                }
                for st in &then_block.stmts {
                    self.lower_stmt(st, &cid, ctx);
                }
                if let Some(b) = else_block {
                    for st in &b.stmts {
                        self.lower_stmt(st, &cid, ctx);
                    }
                }
            }
            StmtKind::Return(value) => {
                let rid = self.push(ast, ElementKind::ReturnStmt, "", s.span.start, s.span, TypeTag::Unknown);
                self.edge(EdgeKind::Contains, parent, &rid);
                if let Some(v) = value {
                    for val in self.lower_expr(v, ctx, &mut children) {
                        self.edge(EdgeKind::Dataflow, &val, &rid);
                    }
                }
                for ch in &children {
                    self.edge(EdgeKind::Contains, &rid, ch);
                }
            }
        }
    }

    fn resolve_ident(&self, name: &str, ctx: &FnCtx<'_>) -> Vec<ElementId> {
        let mut out: Vec<ElementId> = ctx.locals.get(name).cloned().unwrap_or_default();
        if let Some(p) = ctx.params.get(name) {
            out.push(p.clone());
        }
        if out.is_empty() {
            if let Some(c) = self.consts.get(name) {
                out.push(c.id.clone());
            }
        }
        out
    }

    fn expr_type(&self, e: &Expr, ctx: &FnCtx<'_>) -> TypeTag {
        match &e.kind {
            ExprKind::Int(_) | ExprKind::Str(_) | ExprKind::Bool(_) => literal_type(e),
            ExprKind::Ident(n) => {
                if let Some(t) = ctx.types.get(n) {
                    *t
                } else if ctx.params.contains_key(n) || ctx.locals.contains_key(n) {
                    TypeTag::Unknown
                } else {
                    self.consts.get(n).map(|c| c.ty).unwrap_or(TypeTag::Unknown)
                }
            }
            ExprKind::Field { .. } => TypeTag::Unknown,
            ExprKind::Call { callee, .. } => callee
                .path()
                .and_then(|p| Intrinsic::from_callee(&p))
                .map(Intrinsic::result_type)
                .unwrap_or(TypeTag::Unknown),
            ExprKind::Binary { op, lhs, rhs } => match op {
                BinOp::Add => {
                    let (l, r) = (self.expr_type(lhs, ctx), self.expr_type(rhs, ctx));
                    if l == TypeTag::String || r == TypeTag::String {
                        TypeTag::String
                    } else if l == TypeTag::Int && r == TypeTag::Int {
                        TypeTag::Int
                    } else {
                        TypeTag::Unknown
                    }
                }
                _ => TypeTag::Bool,
            },
        }
    }

    /// Lowers an expression and returns the element ids carrying its value.
    fn lower_expr(&mut self, e: &Expr, ctx: &FnCtx<'_>, children: &mut Vec<ElementId>) -> Vec<ElementId> {
        let ast = ctx.ast;
        match &e.kind {
            ExprKind::Int(_) | ExprKind::Str(_) | ExprKind::Bool(_) => {
                let id = self.push(
                    ast,
                    ElementKind::StringLiteral,
                    "",
                    e.span.start,
                    e.span,
                    literal_type(e),
                );
                children.push(id.clone());
                vec![id]
            }
            ExprKind::Ident(n) => self.resolve_ident(n, ctx),
            ExprKind::Field { base, field } => {
                let vals = self.lower_expr(base, ctx, children);
                let id = self.push(
                    ast,
                    ElementKind::FieldAccess,
                    "",
                    field.span.start,
                    e.span,
                    TypeTag::Unknown,
                );
                children.push(id.clone());
                for v in vals {
                    self.edge(EdgeKind::Dataflow, &v, &id);
                }
                if matches!(&base.kind, ExprKind::Ident(n) if n == "request") {
                    for ep in &ctx.endpoints {
                        self.edge(EdgeKind::Dataflow, ep, &id);
                    }
                }
                vec![id]
            }
            ExprKind::Call { callee, args, anchor } => {
                let path = callee.path();
                let intrinsic = path.as_deref().and_then(Intrinsic::from_callee);
                let mut inflow = Vec::new();
                match &callee.kind {
                    ExprKind::Ident(_) => {}
                    ExprKind::Field { base, .. } => {
                        if intrinsic.is_none() {
                            inflow.extend(self.lower_expr(base, ctx, children));
                        }
                    }
                    _ => inflow.extend(self.lower_expr(callee, ctx, children)),
                }
                let arg_vals: Vec<Vec<ElementId>> = args.iter().map(|a| self.lower_expr(a, ctx, children)).collect();
                let ty = intrinsic.map(Intrinsic::result_type).unwrap_or(TypeTag::Unknown);
                let id = self.push(ast, ElementKind::Call, "", *anchor, e.span, ty);
                children.push(id.clone());
                for v in inflow.iter().chain(arg_vals.iter().flatten()) {
                    self.edge(EdgeKind::Dataflow, v, &id);
                }
                let mut resolved = false;
                if let (ExprKind::Ident(name), None) = (&callee.kind, intrinsic) {
                    if let Some(sigs) = self.functions.get(name) {
                        resolved = true;
                        let mut new_edges = Vec::new();
                        for sig in sigs {
                            new_edges.push(Edge::new(EdgeKind::Calls, id.clone(), sig.id.clone()));
                            for (vals, param) in arg_vals.iter().zip(&sig.params) {
                                for v in vals {
                                    new_edges.push(Edge::new(EdgeKind::Dataflow, v.clone(), param.clone()));
                                }
                            }
                        }
                        self.edges.extend(new_edges);
                    }
                }
                if intrinsic == Some(Intrinsic::RequestParam) {
                    for ep in &ctx.endpoints {
                        self.edge(EdgeKind::Dataflow, ep, &id);
                    }
                }
                if intrinsic.is_none() && !resolved {
                    self.unresolved.push(UnresolvedCall {
                        element: id.clone(),
                        callee: path.unwrap_or_else(|| ast.slice(callee.span).to_string()),
                        location: loc(ast, *anchor),
                    });
                }
                vec![id]
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.lower_expr(lhs, ctx, children);
                let r = self.lower_expr(rhs, ctx, children);
                if *op == BinOp::Add {
                    let mut out = l;
                    for v in r {
                        if !out.contains(&v) {
                            out.push(v);
                        }
                    }
                    out
                } else {
                    Vec::new()
                }
            }
        }
    }
}
