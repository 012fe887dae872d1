use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RepairRule {
    /// Single-quoted keys and strings become double-quoted.
    R1,
    /// Trailing commas before `}` or `]` are removed.
    R2,
    /// Bare object keys are quoted.
    R3,
    /// `//` comments and `#` comment lines are removed.
    R4,
    /// Truncated output: open strings, brackets and braces are closed.
    R5,
}

impl RepairRule {
    pub const ALL: [RepairRule; 5] = [RepairRule::R1, RepairRule::R2, RepairRule::R3, RepairRule::R4, RepairRule::R5];

    fn apply(self, s: &str) -> String {
        match self {
            RepairRule::R1 => single_to_double_quotes(s),
            RepairRule::R2 => strip_trailing_commas(s),
            RepairRule::R3 => quote_bare_keys(s),
            RepairRule::R4 => strip_comments(s),
            RepairRule::R5 => close_truncated(s),
        }
    }
}

impl fmt::Display for RepairRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairTrace {
    /// Rules that changed the text, in rule order.
    pub applied_rules: Vec<RepairRule>,
    pub original: String,
    pub repaired: String,
}

impl RepairTrace {
    pub fn clean(text: &str) -> Self {
        Self {
            applied_rules: Vec::new(),
            original: text.to_owned(),
            repaired: text.to_owned(),
        }
    }
}

const MAX_ROUNDS: usize = 16;

/// Best-effort repair of near-JSON text. Input that already parses is
/// returned untouched with an empty trace; otherwise R1..R5 are applied in
/// order, repeatedly, until the text stops changing.
pub fn repair(text: &str) -> (String, RepairTrace) {
    if serde_json::from_str::<serde_json::Value>(text).is_ok() {
        return (text.to_owned(), RepairTrace::clean(text));
    }
    let mut applied = [false; 5];
    let mut cur = text.to_owned();
    for _ in 0..MAX_ROUNDS {
        let mut changed = false;
        for (i, rule) in RepairRule::ALL.into_iter().enumerate() {
            let next = rule.apply(&cur);
            if next != cur {
                applied[i] = true;
                changed = true;
                cur = next;
            }
        }
        if !changed {
            break;
        }
    }
    let applied_rules = RepairRule::ALL
        .into_iter()
        .zip(applied)
        .filter_map(|(r, a)| a.then_some(r))
        .collect();
    let trace = RepairTrace {
        applied_rules,
        original: text.to_owned(),
        repaired: cur.clone(),
    };
    (cur, trace)
}

/// Walks `s` outside double-quoted strings. `f` receives each byte offset
/// that lies outside a string; string contents are skipped.
fn for_each_outside(s: &str, mut f: impl FnMut(usize)) {
    let b = s.as_bytes();
    let mut in_str = false;
    let mut esc = false;
    for (i, &c) in b.iter().enumerate() {
        if in_str {
            if esc {
                esc = false;
            } else if c == b'\\' {
                esc = true;
            } else if c == b'"' {
                in_str = false;
            }
            continue;
        }
        if c == b'"' {
            in_str = true;
        }
        f(i);
    }
}

fn next_significant(b: &[u8], from: usize) -> Option<u8> {
    b[from..].iter().copied().find(|c| !c.is_ascii_whitespace())
}

fn single_to_double_quotes(s: &str) -> String {
    #[derive(PartialEq)]
    enum St {
        Normal,
        Double,
        Single,
        Comment,
    }
    let b = s.as_bytes();
    let mut out: Vec<u8> = Vec::with_capacity(b.len() + 8);
    let mut st = St::Normal;
    let mut esc = false;
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        match st {
            St::Normal => match c {
                b'"' => {
                    st = St::Double;
                    out.push(c);
                }
                b'\'' => {
                    st = St::Single;
                    out.push(b'"');
                }
                b'/' if b.get(i + 1) == Some(&b'/') => {
                    st = St::Comment;
                    out.push(c);
                }
                _ => out.push(c),
            },
            St::Comment => {
                if c == b'\n' {
                    st = St::Normal;
                }
                out.push(c);
            }
            St::Double => {
                if esc {
                    esc = false;
                } else if c == b'\\' {
                    esc = true;
                } else if c == b'"' {
                    st = St::Normal;
                }
                out.push(c);
            }
            St::Single => {
                if esc {
                    esc = false;
                    if c == b'\'' {
                        // \' is not a JSON escape; the backslash was already written
                        out.pop();
                    }
                    out.push(c);
                } else if c == b'\\' {
                    esc = true;
                    out.push(c);
                } else if c == b'"' {
                    out.extend_from_slice(b"\\\"");
                } else if c == b'\'' {
                    // an apostrophe closes the string only where JSON expects a delimiter
                    match next_significant(b, i + 1) {
                        None | Some(b',' | b':' | b'}' | b']') => {
                            st = St::Normal;
                            out.push(b'"');
                        }
                        _ => out.push(c),
                    }
                } else {
                    out.push(c);
                }
            }
        }
        i += 1;
    }
    String::from_utf8(out).expect("only ASCII bytes were substituted")
}

fn strip_trailing_commas(s: &str) -> String {
    let b = s.as_bytes();
    let mut drop = Vec::new();
    for_each_outside(s, |i| {
        if b[i] == b',' && matches!(next_significant(b, i + 1), Some(b'}' | b']')) {
            drop.push(i);
        }
    });
    remove_bytes(s, &drop)
}

fn remove_bytes(s: &str, positions: &[usize]) -> String {
    if positions.is_empty() {
        return s.to_owned();
    }
    let mut out = String::with_capacity(s.len());
    let mut last = 0;
    for &p in positions {
        out.push_str(&s[last..p]);
        last = p + 1;
    }
    out.push_str(&s[last..]);
    out
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c == b'$'
}

fn is_ident(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$' || c == b'-'
}

fn quote_bare_keys(s: &str) -> String {
    let b = s.as_bytes();
    // (start, end) spans of bare keys
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut skip_until = 0;
    for_each_outside(s, |i| {
        if i < skip_until || !matches!(b[i], b'{' | b',') {
            return;
        }
        let mut j = i + 1;
        while j < b.len() && b[j].is_ascii_whitespace() {
            j += 1;
        }
        if j >= b.len() || !is_ident_start(b[j]) {
            return;
        }
        let start = j;
        while j < b.len() && is_ident(b[j]) {
            j += 1;
        }
        let end = j;
        if next_significant(b, end) == Some(b':') {
            spans.push((start, end));
            skip_until = end;
        }
    });
    if spans.is_empty() {
        return s.to_owned();
    }
    let mut out = String::with_capacity(s.len() + 2 * spans.len());
    let mut last = 0;
    for (a, e) in spans {
        out.push_str(&s[last..a]);
        out.push('"');
        out.push_str(&s[a..e]);
        out.push('"');
        last = e;
    }
    out.push_str(&s[last..]);
    out
}

fn strip_comments(s: &str) -> String {
    let b = s.as_bytes();
    let mut cut: Vec<(usize, usize)> = Vec::new();
    let mut skip_until = 0;
    for_each_outside(s, |i| {
        if i < skip_until {
            return;
        }
        let line_comment = b[i] == b'/' && b.get(i + 1) == Some(&b'/');
        let hash_line = b[i] == b'#' && b[..i].iter().rev().take_while(|&&c| c != b'\n').all(u8::is_ascii_whitespace);
        if line_comment || hash_line {
            let end = b[i..].iter().position(|&c| c == b'\n').map_or(b.len(), |p| i + p);
            cut.push((i, end));
            skip_until = end;
        }
    });
    if cut.is_empty() {
        return s.to_owned();
    }
    let mut out = String::with_capacity(s.len());
    let mut last = 0;
    for (a, e) in cut {
        out.push_str(s[last..a].trim_end_matches([' ', '\t']));
        last = e;
    }
    out.push_str(&s[last..]);
    out
}

fn close_truncated(s: &str) -> String {
    let b = s.as_bytes();
    let mut stack: Vec<u8> = Vec::new();
    let mut in_str = false;
    let mut esc = false;
    for &c in b {
        if in_str {
            if esc {
                esc = false;
            } else if c == b'\\' {
                esc = true;
            } else if c == b'"' {
                in_str = false;
            }
            continue;
        }
        match c {
            b'"' => in_str = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' if stack.last() == Some(&c) => {
                stack.pop();
            }
            _ => {}
        }
    }
    if !in_str && stack.is_empty() {
        return s.to_owned();
    }
    let mut out = s.to_owned();
    if in_str {
        if esc {
            out.pop();
        }
        out.push('"');
    }
    if !stack.is_empty() {
        loop {
            let trimmed = out.trim_end();
            if let Some(t) = trimmed.strip_suffix(',') {
                out.truncate(t.len());
            } else {
                out.truncate(trimmed.len());
                break;
            }
        }
        if out.ends_with(':') {
            out.push_str(" null");
        }
        out.extend(stack.iter().rev().map(|&c| c as char));
    }
    out
}
