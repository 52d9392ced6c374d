//! Line-level view of a module's top-level layout, used by the passes that
//! insert or rewrite whole lines.

use super::pylex::{self, LineStart};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Blank,
    Comment,
    /// Continuation of a previous logical line (inside brackets, a string,
    /// or after a backslash).
    Continuation,
    /// Indented statement start.
    Indented,
    /// A statement starting in column 0.
    TopLevel,
}

#[derive(Debug, Clone)]
pub struct Line<'a> {
    pub text: &'a str,
    pub kind: LineKind,
    /// Starts inside a string literal.
    pub in_string: bool,
}

impl Line<'_> {
    pub fn content(&self) -> &str {
        self.text.trim_end_matches(['\n', '\r'])
    }

    pub fn is_top_level(&self) -> bool {
        self.kind == LineKind::TopLevel
    }

    /// Column-0 code outside any string literal, whatever the bracket depth.
    pub fn starts_at_margin(&self) -> bool {
        !self.in_string && !self.text.trim().is_empty() && !self.text.starts_with([' ', '\t', '#'])
    }
}

pub fn classify(text: &str) -> Vec<Line<'_>> {
    pylex::lines_with_state(text)
        .into_iter()
        .map(|(text, state)| Line {
            text,
            kind: kind_of(text, state),
            in_string: state.in_string,
        })
        .collect()
}

fn kind_of(text: &str, state: LineStart) -> LineKind {
    if !state.is_statement_start() {
        return LineKind::Continuation;
    }
    let trimmed = text.trim();
    if trimmed.is_empty() {
        LineKind::Blank
    } else if trimmed.starts_with('#') {
        LineKind::Comment
    } else if text.starts_with([' ', '\t']) {
        LineKind::Indented
    } else {
        LineKind::TopLevel
    }
}

fn is_import(content: &str) -> bool {
    content.starts_with("import ") || content.starts_with("from ")
}

fn is_future_import(content: &str) -> bool {
    content.starts_with("from __future__ ")
}

fn is_docstring(content: &str) -> bool {
    let lower = content.trim_start_matches(['r', 'R', 'u', 'U']);
    lower.starts_with('"') || lower.starts_with('\'')
}

/// Where the import header of a module sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    /// First line after a leading docstring and `__future__` imports.
    pub anchor: usize,
    /// First top-level line that is not part of the import header.
    pub end: usize,
    /// Last top-level import line in the header, if any.
    pub last_import: Option<usize>,
}

pub fn header(lines: &[Line<'_>]) -> Header {
    let mut anchor = None;
    let mut last_import = None;
    let mut seen_statement = false;
    for (i, line) in lines.iter().enumerate() {
        if !line.is_top_level() {
            if line.kind == LineKind::Indented {
                return Header {
                    anchor: anchor.unwrap_or(i),
                    end: i,
                    last_import,
                };
            }
            continue;
        }
        let content = line.content();
        if !seen_statement && is_docstring(content) {
            seen_statement = true;
            continue;
        }
        seen_statement = true;
        if is_future_import(content) {
            last_import = Some(i);
            continue;
        }
        if is_import(content) {
            anchor.get_or_insert(i);
            last_import = Some(i);
            continue;
        }
        return Header {
            anchor: anchor.unwrap_or(i),
            end: i,
            last_import,
        };
    }
    Header {
        anchor: anchor.unwrap_or_else(|| after_last_code(lines)),
        end: lines.len(),
        last_import,
    }
}

/// Index just past the last line that is neither blank nor a comment.
fn after_last_code(lines: &[Line<'_>]) -> usize {
    lines
        .iter()
        .rposition(|l| !matches!(l.kind, LineKind::Blank | LineKind::Comment))
        .map_or(0, |i| i + 1)
}

/// Joins lines back, making sure a line followed by another ends in `\n`.
pub fn join(lines: &[String]) -> String {
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        out.push_str(line);
        if i + 1 < lines.len() && !line.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}
