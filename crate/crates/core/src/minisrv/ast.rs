use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Pos {
    pub offset: usize,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

impl Span {
    pub fn new(start: Pos, end: Pos) -> Span {
        Span { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span::new(self.start, other.end)
    }

    pub fn contains(&self, line: u32, col: u32) -> bool {
        (self.start.line, self.start.col) <= (line, col) && (line, col) < (self.end.line, self.end.col)
    }
}

/// Parsed MiniSrv file. Keeps the original text so lowering can slice
/// verbatim element sources out of it.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniSrvAst {
    pub file: String,
    pub text: String,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Const(ConstDef),
    Fn(FnDef),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstDef {
    pub name: Ident,
    pub value: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decorator {
    pub name: Ident,
    pub args: Vec<Expr>,
    pub span: Span,
}

impl Decorator {
    /// `(method, path)` of a `@route` decorator.
    pub fn route(&self) -> Option<(&str, &str)> {
        if self.name.name != "route" {
            return None;
        }
        match (&self.args.first()?.kind, &self.args.get(1)?.kind) {
            (ExprKind::Str(m), ExprKind::Str(p)) => Some((m, p)),
            _ => None,
        }
    }

    /// Check function named by an `@auth` decorator.
    pub fn auth_target(&self) -> Option<(&str, Span)> {
        if self.name.name != "auth" {
            return None;
        }
        match self.args.first() {
            Some(Expr {
                kind: ExprKind::Ident(name),
                span,
            }) => Some((name.as_str(), *span)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnDef {
    pub decorators: Vec<Decorator>,
    pub name: Ident,
    pub params: Vec<Ident>,
    pub body: Block,
    /// From the `fn` keyword to the closing brace.
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign {
        target: Ident,
        value: Expr,
    },
    /// Bare call statement; the expression is always `ExprKind::Call`.
    Call(Expr),
    If {
        cond: Expr,
        then_block: Block,
        else_block: Option<Block>,
    },
    Return(Option<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Add,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Add => "+",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add => 4,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 3
    }
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Str(String),
    Bool(bool),
    Ident(String),
    Field {
        base: Box<Expr>,
        field: Ident,
    },
    Call {
        callee: Box<Expr>,
        args: Vec<Expr>,
        /// Position of the method/function name token (or the `(` when the
        /// callee is not a name).
        anchor: Pos,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    /// Dotted path for name-like callees: `db.write`, `update_role`.
    pub fn path(&self) -> Option<String> {
        match &self.kind {
            ExprKind::Ident(n) => Some(n.clone()),
            ExprKind::Field { base, field } => base.path().map(|b| format!("{b}.{}", field.name)),
            _ => None,
        }
    }

    /// Root identifier of a field chain (`order` in `order.status`).
    pub fn root_ident(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Ident(n) => Some(n),
            ExprKind::Field { base, .. } => base.root_ident(),
            ExprKind::Call { callee, .. } => callee.root_ident(),
            _ => None,
        }
    }
}

/// Span-insensitive structural comparison support.
pub trait ClearSpans {
    fn clear_spans(&mut self);
}

impl ClearSpans for Ident {
    fn clear_spans(&mut self) {
        self.span = Span::default();
    }
}

impl ClearSpans for Expr {
    fn clear_spans(&mut self) {
        self.span = Span::default();
        match &mut self.kind {
            ExprKind::Field { base, field } => {
                base.clear_spans();
                field.clear_spans();
            }
            ExprKind::Call { callee, args, anchor } => {
                *anchor = Pos::default();
                callee.clear_spans();
                args.iter_mut().for_each(ClearSpans::clear_spans);
            }
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.clear_spans();
                rhs.clear_spans();
            }
            _ => {}
        }
    }
}

impl ClearSpans for Block {
    fn clear_spans(&mut self) {
        self.span = Span::default();
        self.stmts.iter_mut().for_each(ClearSpans::clear_spans);
    }
}

impl ClearSpans for Stmt {
    fn clear_spans(&mut self) {
        self.span = Span::default();
        match &mut self.kind {
            StmtKind::Assign { target, value } => {
                target.clear_spans();
                value.clear_spans();
            }
            StmtKind::Call(e) => e.clear_spans(),
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                cond.clear_spans();
                then_block.clear_spans();
                if let Some(b) = else_block {
                    b.clear_spans();
                }
            }
            StmtKind::Return(e) => {
                if let Some(e) = e {
                    e.clear_spans();
                }
            }
        }
    }
}

impl ClearSpans for Item {
    fn clear_spans(&mut self) {
        match self {
            Item::Const(c) => {
                c.span = Span::default();
                c.name.clear_spans();
                c.value.clear_spans();
            }
            Item::Fn(f) => {
                f.span = Span::default();
                f.name.clear_spans();
                f.params.iter_mut().for_each(ClearSpans::clear_spans);
                for d in &mut f.decorators {
                    d.span = Span::default();
                    d.name.clear_spans();
                    d.args.iter_mut().for_each(ClearSpans::clear_spans);
                }
                f.body.clear_spans();
            }
        }
    }
}

impl MiniSrvAst {
    /// Copy with all spans, the file name and the text erased.
    pub fn shape(&self) -> MiniSrvAst {
        let mut items = self.items.clone();
        items.iter_mut().for_each(ClearSpans::clear_spans);
        MiniSrvAst {
            file: String::new(),
            text: String::new(),
            items,
        }
    }

    pub fn slice(&self, span: Span) -> &str {
        &self.text[span.start.offset..span.end.offset]
    }

    pub fn functions(&self) -> impl Iterator<Item = &FnDef> {
        self.items.iter().filter_map(|i| match i {
            Item::Fn(f) => Some(f),
            _ => None,
        })
    }
}
