//! Makes sure each required import line appears exactly once in the header.

use super::layout::{self, Line};

/// Imports every candidate must carry.
pub const DEFAULT_REQUIRED_IMPORTS: &[&str] = &["import torch", "import torch.nn as nn"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImportChanges {
    pub inserted: Vec<String>,
    pub removed: usize,
}

impl ImportChanges {
    pub fn is_empty(&self) -> bool {
        self.inserted.is_empty() && self.removed == 0
    }
}

/// Keeps the first header occurrence of each required import, drops every
/// other top-level occurrence, and inserts missing ones. Inserted lines go
/// after the last kept required import, or at the top of the import header.
pub fn normalize_imports(text: &str, required: &[String]) -> (String, ImportChanges) {
    let lines = layout::classify(text);
    let header = layout::header(&lines);

    let matches = |line: &Line<'_>, req: &str| line.is_top_level() && line.content().trim_end() == req;

    let mut drop = vec![false; lines.len()];
    let mut kept: Vec<Option<usize>> = Vec::with_capacity(required.len());
    let mut changes = ImportChanges::default();
    for req in required {
        let mut keep = None;
        for (i, line) in lines.iter().enumerate() {
            if drop[i] || !matches(line, req) {
                continue;
            }
            if keep.is_none() && i < header.end {
                keep = Some(i);
            } else {
                drop[i] = true;
                changes.removed += 1;
            }
        }
        kept.push(keep);
    }

    let missing: Vec<&String> = required.iter().zip(&kept).filter(|(_, k)| k.is_none()).map(|(r, _)| r).collect();
    if missing.is_empty() && changes.removed == 0 {
        return (text.to_string(), changes);
    }

    let insert_at = kept.iter().flatten().max().map_or(header.anchor, |&i| i + 1);
    let mut out: Vec<String> = Vec::with_capacity(lines.len() + missing.len());
    for (i, line) in lines.iter().enumerate() {
        if i == insert_at {
            out.extend(missing.iter().map(|m| format!("{m}\n")));
        }
        if !drop[i] {
            out.push(line.text.to_string());
        }
    }
    if insert_at >= lines.len() {
        out.extend(missing.iter().map(|m| format!("{m}\n")));
    }
    changes.inserted = missing.into_iter().cloned().collect();
    (layout::join(&out), changes)
}
