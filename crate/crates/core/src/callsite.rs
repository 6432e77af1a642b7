//! Text-level helpers over call-site source snippets.
//!
//! Call elements are anonymous, so the callee and argument list are recovered
//! from the verbatim source. This works for MiniSrv and for most C-family
//! call syntax emitted by external extractors.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallShape {
    /// Everything before the final argument list, e.g. `order.getUserId().equals`.
    pub callee: String,
    /// Last segment of the callee, e.g. `equals`.
    pub method: String,
    pub args: Vec<String>,
}

impl CallShape {
    /// Receiver text for method calls (`db` in `db.write(q)`).
    pub fn receiver(&self) -> Option<&str> {
        let cut = self.callee.rfind('.')?;
        Some(&self.callee[..cut])
    }
}

pub fn parse_call_source(src: &str) -> Option<CallShape> {
    let src = src.trim();
    let bytes: Vec<char> = src.chars().collect();
    if bytes.last() != Some(&')') {
        return None;
    }
    let mut depth = 0i32;
    let mut in_str: Option<char> = None;
    let mut escaped = false;
    let mut group_start = None;
    let mut last_group = None;
    for (i, &c) in bytes.iter().enumerate() {
        if let Some(q) = in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                in_str = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => in_str = Some(c),
            '(' | '[' | '{' => {
                if depth == 0 && c == '(' {
                    group_start = Some(i);
                }
                depth += 1;
            }
            ')' | ']' | '}' => {
                depth -= 1;
                if depth == 0 && c == ')' {
                    if let Some(s) = group_start.take() {
                        last_group = Some((s, i));
                    }
                }
            }
            _ => {}
        }
    }
    let (open, close) = last_group?;
    if close != bytes.len() - 1 {
        return None;
    }
    let callee: String = bytes[..open].iter().collect::<String>().trim().to_string();
    if callee.is_empty() {
        return None;
    }
    let inner: String = bytes[open + 1..close].iter().collect();
    let method = callee.rsplit('.').next().unwrap_or(&callee).trim().to_string();
    Some(CallShape {
        callee,
        method,
        args: split_args(&inner),
    })
}

fn split_args(inner: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0i32;
    let mut in_str: Option<char> = None;
    let mut escaped = false;
    for c in inner.chars() {
        if let Some(q) = in_str {
            cur.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                in_str = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => {
                in_str = Some(c);
                cur.push(c);
            }
            '(' | '[' | '{' => {
                depth += 1;
                cur.push(c);
            }
            ')' | ']' | '}' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() || !out.is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// Splits an identifier into lower-case word tokens on `_`, `.`, digits
/// boundaries and camelCase humps: `paySuccess` → `["pay", "success"]`.
pub fn name_tokens(name: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for c in name.chars() {
        if c.is_alphanumeric() {
            if c.is_uppercase() && prev_lower && !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = c.is_lowercase() || c.is_ascii_digit();
            cur.extend(c.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// True if `text` contains `word` delimited by non-identifier characters.
pub fn contains_word(text: &str, word: &str) -> bool {
    if word.is_empty() {
        return false;
    }
    let is_ident = |c: char| c.is_alphanumeric() || c == '_';
    let mut start = 0;
    while let Some(pos) = text[start..].find(word) {
        let at = start + pos;
        let before = text[..at].chars().next_back();
        let after = text[at + word.len()..].chars().next();
        if !before.is_some_and(is_ident) && !after.is_some_and(is_ident) {
            return true;
        }
        start = at + word.len();
    }
    false
}

/// Is `arg` a bare identifier (possibly dotted)?
pub fn is_identifier(arg: &str) -> bool {
    let mut chars = arg.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_')
}
