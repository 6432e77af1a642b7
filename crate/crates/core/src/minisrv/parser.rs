//! Recursive-descent parser for MiniSrv. No error recovery: the first error
//! by position is returned.

use super::ast::*;
use super::lexer::{tokenize_at, Tok, Token};
use super::ParseError;

pub struct Parser<'a> {
    toks: Vec<Token>,
    idx: usize,
    file: &'a str,
}

impl<'a> Parser<'a> {
    pub fn new(text: &str, file: &'a str, line: u32, col: u32) -> Result<Parser<'a>, ParseError> {
        Ok(Parser {
            toks: tokenize_at(text, file, line, col)?,
            idx: 0,
            file,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.idx].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.idx + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn cur(&self) -> &Token {
        &self.toks[self.idx]
    }

    fn prev_span(&self) -> Span {
        self.toks[self.idx.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.idx].clone();
        if self.idx < self.toks.len() - 1 {
            self.idx += 1;
        }
        t
    }

    fn error(&self, message: &str, expected: &str) -> ParseError {
        ParseError::at(self.file, self.cur().span.start, message, expected)
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        self.error(&format!("unexpected {}", self.peek().describe()), expected)
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<Token, ParseError> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<Ident, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let t = self.bump();
                Ok(Ident { name, span: t.span })
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    pub fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    pub fn expect_eof(&self) -> Result<(), ParseError> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.unexpected("end of input"))
        }
    }

    pub fn items(&mut self) -> Result<Vec<Item>, ParseError> {
        let mut items = Vec::new();
        while !self.at_eof() {
            items.push(self.item()?);
        }
        Ok(items)
    }

    pub fn item(&mut self) -> Result<Item, ParseError> {
        match self.peek() {
            Tok::Const => self.const_def().map(Item::Const),
            Tok::At | Tok::Fn => self.fn_def().map(Item::Fn),
            _ => Err(self.unexpected("`fn`, `const` or a decorator")),
        }
    }

    fn const_def(&mut self) -> Result<ConstDef, ParseError> {
        let kw = self.bump();
        let name = self.ident("constant name")?;
        self.expect(Tok::Assign, "`=`")?;
        let value = match self.peek() {
            Tok::Int(_) | Tok::Str(_) | Tok::True | Tok::False => self.primary()?,
            _ => return Err(self.unexpected("literal")),
        };
        let span = kw.span.to(value.span);
        Ok(ConstDef { name, value, span })
    }

    fn fn_def(&mut self) -> Result<FnDef, ParseError> {
        let mut decorators = Vec::new();
        while *self.peek() == Tok::At {
            decorators.push(self.decorator()?);
        }
        let kw = self.expect(Tok::Fn, "`fn`")?;
        let name = self.ident("function name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                params.push(self.ident("parameter or \")\"")?);
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::RParen => break,
                    _ => return Err(self.unexpected("`,` or \")\"")),
                }
            }
        }
        self.expect(Tok::RParen, "parameter or \")\"")?;
        let body = self.block()?;
        let span = kw.span.to(body.span);
        Ok(FnDef {
            decorators,
            name,
            params,
            body,
            span,
        })
    }

    fn decorator(&mut self) -> Result<Decorator, ParseError> {
        let at = self.bump();
        let name = self.ident("decorator name")?;
        if name.name != "route" && name.name != "auth" {
            return Err(ParseError::at(
                self.file,
                name.span.start,
                &format!("unknown decorator `{}`", name.name),
                "`route` or `auth`",
            ));
        }
        self.expect(Tok::LParen, "`(`")?;
        let args = self.args()?;
        let close = self.prev_span();
        let d = Decorator {
            name,
            args,
            span: at.span.to(close),
        };
        let ok = match d.name.name.as_str() {
            "route" => d.args.len() == 2 && d.route().is_some(),
            _ => d.args.len() == 1 && d.auth_target().is_some(),
        };
        if !ok {
            let expected = if d.name.name == "route" {
                "route(\"METHOD\", \"/path\")"
            } else {
                "auth(check_function)"
            };
            return Err(ParseError::at(
                self.file,
                d.name.span.start,
                "malformed decorator arguments",
                expected,
            ));
        }
        Ok(d)
    }

    /// Arguments after an already-consumed `(`, including the closing `)`.
    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(args);
                }
                _ => return Err(self.unexpected("`,` or \")\"")),
            }
        }
    }

    fn block(&mut self) -> Result<Block, ParseError> {
        let open = self.expect(Tok::LBrace, "`{`")?;
        let mut stmts = Vec::new();
        while *self.peek() != Tok::RBrace {
            if self.at_eof() {
                return Err(self.unexpected("`}`"));
            }
            stmts.push(self.stmt()?);
        }
        let close = self.bump();
        Ok(Block {
            stmts,
            span: open.span.to(close.span),
        })
    }

    fn eat_semi(&mut self) {
        if *self.peek() == Tok::Semi {
            self.bump();
        }
    }

    pub fn stmt(&mut self) -> Result<Stmt, ParseError> {
        match self.peek().clone() {
            Tok::If => self.if_stmt(),
            Tok::Return => {
                let kw = self.bump();
                let same_line = self.cur().span.start.line == kw.span.end.line;
                let value = match self.peek() {
                    Tok::RBrace | Tok::Semi | Tok::Eof => None,
                    _ if !same_line => None,
                    _ => Some(self.expr()?),
                };
                let span = match &value {
                    Some(v) => kw.span.to(v.span),
                    None => kw.span,
                };
                self.eat_semi();
                Ok(Stmt {
                    kind: StmtKind::Return(value),
                    span,
                })
            }
            Tok::Ident(_) if *self.peek_at(1) == Tok::Assign => {
                let target = self.ident("identifier")?;
                self.bump();
                let value = self.expr()?;
                let span = target.span.to(value.span);
                self.eat_semi();
                Ok(Stmt {
                    kind: StmtKind::Assign { target, value },
                    span,
                })
            }
            Tok::Ident(_) | Tok::LParen => {
                let start = self.cur().span.start;
                let e = self.expr()?;
                if !matches!(e.kind, ExprKind::Call { .. }) {
                    return Err(ParseError::at(
                        self.file,
                        start,
                        "expression statement must be a call",
                        "assignment, call, `if` or `return`",
                    ));
                }
                let span = e.span;
                self.eat_semi();
                Ok(Stmt {
                    kind: StmtKind::Call(e),
                    span,
                })
            }
            _ => Err(self.unexpected("assignment, call, `if` or `return`")),
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        let kw = self.bump();
        let cond = self.expr()?;
        let then_block = self.block()?;
        let mut end = then_block.span;
        let else_block = if *self.peek() == Tok::Else {
            self.bump();
            if *self.peek() == Tok::If {
                let nested = self.if_stmt()?;
                let b = Block {
                    span: nested.span,
                    stmts: vec![nested],
                };
                end = b.span;
                Some(b)
            } else {
                let b = self.block()?;
                end = b.span;
                Some(b)
            }
        } else {
            None
        };
        Ok(Stmt {
            kind: StmtKind::If {
                cond,
                then_block,
                else_block,
            },
            span: kw.span.to(end),
        })
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::OrOr => BinOp::Or,
            Tok::AndAnd => BinOp::And,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            _ => return None,
        })
    }

    /// Precedence climbing; comparisons are non-associative.
    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.postfix()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr {
                kind: ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            };
            if op.is_comparison() {
                if let Some(next) = self.binop() {
                    if next.is_comparison() {
                        return Err(self.error(
                            "comparison operators cannot be chained",
                            "`&&`, `||` or end of expression",
                        ));
                    }
                }
            }
        }
        Ok(lhs)
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        loop {
            match self.peek() {
                Tok::Dot => {
                    self.bump();
                    let field = self.ident("field or method name")?;
                    let span = e.span.to(field.span);
                    e = Expr {
                        kind: ExprKind::Field {
                            base: Box::new(e),
                            field,
                        },
                        span,
                    };
                }
                Tok::LParen => {
                    let paren = self.bump();
                    let anchor = match &e.kind {
                        ExprKind::Ident(_) => e.span.start,
                        ExprKind::Field { field, .. } => field.span.start,
                        _ => paren.span.start,
                    };
                    let args = self.args()?;
                    let span = e.span.to(self.prev_span());
                    e = Expr {
                        kind: ExprKind::Call {
                            callee: Box::new(e),
                            args,
                            anchor,
                        },
                        span,
                    };
                }
                _ => return Ok(e),
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.cur().clone();
        let kind = match t.tok {
            Tok::Int(v) => ExprKind::Int(v),
            Tok::Str(s) => ExprKind::Str(s),
            Tok::True => ExprKind::Bool(true),
            Tok::False => ExprKind::Bool(false),
            Tok::Ident(n) => ExprKind::Ident(n),
            Tok::LParen => {
                self.bump();
                let mut inner = self.expr()?;
                let close = self.expect(Tok::RParen, "\")\"")?;
                inner.span = t.span.to(close.span);
                return Ok(inner);
            }
            _ => return Err(self.unexpected("expression")),
        };
        self.bump();
        Ok(Expr { kind, span: t.span })
    }
}
