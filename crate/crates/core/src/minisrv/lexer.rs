use super::ast::{Pos, Span};
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Fn,
    Const,
    If,
    Else,
    Return,
    True,
    False,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    At,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Plus,
    Semi,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(n) => format!("identifier `{n}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Fn => "fn",
            Tok::Const => "const",
            Tok::If => "if",
            Tok::Else => "else",
            Tok::Return => "return",
            Tok::True => "true",
            Tok::False => "false",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::At => "@",
            Tok::Assign => "=",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Plus => "+",
            Tok::Semi => ";",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn pos(&mut self) -> Pos {
        let offset = self.chars.peek().map(|&(i, _)| i).unwrap_or(self.text.len());
        Pos {
            offset,
            line: self.line,
            col: self.col,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

pub fn tokenize(text: &str, file: &str) -> Result<Vec<Token>, ParseError> {
    tokenize_at(text, file, 1, 1)
}

/// Tokenizes a snippet that starts at `(line, col)` of its original file, so
/// reported positions line up with the enclosing file.
pub fn tokenize_at(text: &str, file: &str, line: u32, col: u32) -> Result<Vec<Token>, ParseError> {
    let mut cur = Cursor {
        chars: text.char_indices().peekable(),
        text,
        line,
        col,
    };
    let mut out = Vec::new();
    loop {
        while let Some(c) = cur.peek() {
            if c.is_whitespace() {
                cur.bump();
            } else if c == '/' {
                let mut ahead = cur.chars.clone();
                ahead.next();
                if ahead.peek().map(|&(_, c)| c) == Some('/') {
                    while let Some(c) = cur.peek() {
                        if c == '\n' {
                            break;
                        }
                        cur.bump();
                    }
                } else {
                    break;
                }
            } else {
                break;
            }
        }
        let start = cur.pos();
        let Some(c) = cur.bump() else {
            out.push(Token {
                tok: Tok::Eof,
                span: Span::new(start, start),
            });
            return Ok(out);
        };
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '@' => Tok::At,
            ';' => Tok::Semi,
            '+' => Tok::Plus,
            '=' => {
                if cur.peek() == Some('=') {
                    cur.bump();
                    Tok::EqEq
                } else {
                    Tok::Assign
                }
            }
            '!' if cur.peek() == Some('=') => {
                cur.bump();
                Tok::NotEq
            }
            '<' => {
                if cur.peek() == Some('=') {
                    cur.bump();
                    Tok::Le
                } else {
                    Tok::Lt
                }
            }
            '>' => {
                if cur.peek() == Some('=') {
                    cur.bump();
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            '&' if cur.peek() == Some('&') => {
                cur.bump();
                Tok::AndAnd
            }
            '|' if cur.peek() == Some('|') => {
                cur.bump();
                Tok::OrOr
            }
            '"' => lex_string(&mut cur, start, file)?,
            c if c.is_ascii_digit() => {
                let mut s = String::from(c);
                while let Some(d) = cur.peek().filter(char::is_ascii_digit) {
                    s.push(d);
                    cur.bump();
                }
                match s.parse::<i64>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => {
                        return Err(ParseError::at(
                            file,
                            start,
                            "integer literal out of range",
                            "a 64-bit integer",
                        ))
                    }
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::from(c);
                while let Some(d) = cur.peek().filter(|d| d.is_alphanumeric() || *d == '_') {
                    s.push(d);
                    cur.bump();
                }
                match s.as_str() {
                    "fn" => Tok::Fn,
                    "const" => Tok::Const,
                    "if" => Tok::If,
                    "else" => Tok::Else,
                    "return" => Tok::Return,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(s),
                }
            }
            other => {
                return Err(ParseError::at(
                    file,
                    start,
                    &format!("unexpected character `{other}`"),
                    "a token",
                ))
            }
        };
        let end = cur.pos();
        out.push(Token {
            tok,
            span: Span::new(start, end),
        });
    }
}

fn lex_string(cur: &mut Cursor<'_>, start: Pos, file: &str) -> Result<Tok, ParseError> {
    let mut s = String::new();
    loop {
        match cur.bump() {
            None | Some('\n') => {
                return Err(ParseError::at(
                    file,
                    start,
                    "unterminated string literal",
                    "closing `\"`",
                ))
            }
            Some('"') => return Ok(Tok::Str(s)),
            Some('\\') => {
                let esc_pos = cur.pos();
                match cur.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    _ => {
                        return Err(ParseError::at(
                            file,
                            esc_pos,
                            "invalid escape sequence",
                            "one of \\n \\t \\\" \\\\",
                        ))
                    }
                }
            }
            Some(c) => s.push(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s, "t.msv").unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn operators_and_comments() {
        assert_eq!(
            toks("a == b // hi\n!= <= >= && || +"),
            vec![
                Tok::Ident("a".into()),
                Tok::EqEq,
                Tok::Ident("b".into()),
                Tok::NotEq,
                Tok::Le,
                Tok::Ge,
                Tok::AndAnd,
                Tok::OrOr,
                Tok::Plus,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn string_escapes_and_positions() {
        let t = tokenize("  \"a\\\"b\"", "t.msv").unwrap();
        assert_eq!(t[0].tok, Tok::Str("a\"b".into()));
        assert_eq!((t[0].span.start.line, t[0].span.start.col), (1, 3));
        assert_eq!(t[0].span.end.offset, 8);
    }

    #[test]
    fn bad_character() {
        let e = tokenize("x = !y", "t.msv").unwrap_err();
        assert_eq!((e.location.line, e.location.col), (1, 5));
    }
}
