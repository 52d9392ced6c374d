//! Closes brackets left open at end of input.

use super::pylex::{self, Bracket, EndState};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceOutcome {
    pub text: String,
    /// Closers appended, in the order they were written.
    pub appended: String,
    /// Closers with no matching opener; reported, never repaired.
    pub unmatched_closers: Vec<Bracket>,
}

/// Appends the closers for every opener still unclosed at EOF, innermost
/// first. Brackets inside string literals and comments are not counted.
/// Closers go right after the last non-whitespace character, on a fresh
/// line when that character sits in a comment. Nothing is appended when
/// the input ends inside an unterminated string literal.
pub fn balance_brackets(text: &str) -> BalanceOutcome {
    let scan = pylex::scan(text);
    if scan.unclosed.is_empty() || scan.end == EndState::String {
        return BalanceOutcome {
            text: text.to_string(),
            appended: String::new(),
            unmatched_closers: scan.unmatched_closers,
        };
    }

    let appended: String = scan.unclosed.iter().rev().map(|b| pylex::closer_for(b.ch)).collect();
    let content_end = text.trim_end().len();
    let mut out = String::with_capacity(text.len() + appended.len() + 1);
    out.push_str(&text[..content_end]);
    // Closers written at the end of a comment or of an unterminated
    // one-line string would be swallowed by it; start a new line instead.
    if pylex::scan(&text[..content_end]).end != EndState::Code {
        out.push('\n');
    }
    out.push_str(&appended);
    out.push_str(&text[content_end..]);

    BalanceOutcome {
        text: out,
        appended,
        unmatched_closers: scan.unmatched_closers,
    }
}
