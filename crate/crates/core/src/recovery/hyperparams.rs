//! Forces `supported_hyperparameters()` to return exactly `{'lr', 'momentum'}`.

use std::sync::LazyLock;

use regex::Regex;

use super::layout;
use crate::python;

pub const CANONICAL_HYPERPARAMS: &str = "def supported_hyperparameters():\n    return {'lr', 'momentum'}\n";

static DEF_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:async[ \t]+)?def[ \t]+supported_hyperparameters\b").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperparamChange {
    Unchanged,
    Rewritten,
    Appended,
}

/// Makes the module hold exactly one canonical top-level definition.
///
/// A first definition with the wrong body is rewritten and later duplicates
/// are dropped. With no definition at all, the canonical one goes after the
/// import header.
pub fn enforce_hyperparameters(text: &str) -> (String, HyperparamChange) {
    let lines = layout::classify(text);
    let spans = definition_spans(&lines);

    if spans.is_empty() {
        let header = layout::header(&lines);
        let at = header.last_import.map_or(header.anchor, |i| i + 1);
        let mut out: Vec<String> = lines.iter().map(|l| l.text.to_string()).collect();
        let mut block = Vec::new();
        if at > 0 && out.get(at - 1).is_some_and(|l| !l.trim().is_empty()) {
            block.push("\n".to_string());
        }
        block.push(CANONICAL_HYPERPARAMS.to_string());
        if out.get(at).is_some_and(|l| !l.trim().is_empty()) {
            block.push("\n".to_string());
        }
        out.splice(at..at, block);
        return (layout::join(&out), HyperparamChange::Appended);
    }

    let (first_start, first_end) = spans[0];
    let first_exact = exact_prefix_end(&lines, first_start, first_end);
    if spans.len() == 1 && first_exact.is_some() {
        return (text.to_string(), HyperparamChange::Unchanged);
    }

    let mut out = Vec::with_capacity(lines.len());
    let mut i = 0;
    while i < lines.len() {
        if let Some(&(start, end)) = spans.iter().find(|(s, _)| *s == i) {
            if start == first_start {
                match first_exact {
                    Some(_) => out.extend(lines[start..end].iter().map(|l| l.text.to_string())),
                    None => out.push(CANONICAL_HYPERPARAMS.to_string()),
                }
                i = end;
            } else {
                // Indented lines after an exact duplicate are not its body.
                i = exact_prefix_end(&lines, start, end).unwrap_or(end);
            }
        } else {
            out.push(lines[i].text.to_string());
            i += 1;
        }
    }
    (layout::join(&out), HyperparamChange::Rewritten)
}

/// End of the shortest run of lines from `start` that is already the exact
/// canonical definition. Indented code that happens to follow the function
/// (and so lands inside its textual span) is left out.
fn exact_prefix_end(lines: &[layout::Line<'_>], start: usize, end: usize) -> Option<usize> {
    const MAX_BODY_LINES: usize = 24;
    let mut text = String::new();
    for (k, line) in lines.iter().enumerate().take(end.min(start + MAX_BODY_LINES)).skip(start) {
        text.push_str(line.text);
        if k > start && python::is_exact_hyperparameters_source(&text) {
            return Some(k + 1);
        }
    }
    None
}

/// Half-open line ranges of each top-level definition, excluding trailing
/// blank and comment lines. Spans follow indentation only, so an unclosed
/// bracket in a body ends with the body.
fn definition_spans(lines: &[layout::Line<'_>]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if !(lines[i].starts_at_margin() && DEF_LINE.is_match(lines[i].content())) {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        let mut j = i + 1;
        while j < lines.len() && !lines[j].starts_at_margin() {
            let t = lines[j].text.trim();
            if lines[j].in_string || !(t.is_empty() || t.starts_with('#')) {
                end = j + 1;
            }
            j += 1;
        }
        spans.push((start, end));
        i = end;
    }
    spans
}
