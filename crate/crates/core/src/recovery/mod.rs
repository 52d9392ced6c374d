//! Recovery of candidate source from raw model output.
//!
//! [`sanitize`] runs the fix-up passes in a fixed order and keeps a log entry
//! per pass. The result either parses or carries the parser's complaint.

pub mod brackets;
pub mod fences;
pub mod hyperparams;
pub mod imports;
pub mod layout;
pub mod pylex;
pub mod think;

use serde::{Deserialize, Serialize};

pub use brackets::{balance_brackets, BalanceOutcome};
pub use fences::{extract_blocks, select_candidate, strip_residual_fences, Block, Origin};
pub use hyperparams::{enforce_hyperparameters, HyperparamChange, CANONICAL_HYPERPARAMS};
pub use imports::{normalize_imports, ImportChanges, DEFAULT_REQUIRED_IMPORTS};
pub use think::strip_think_segments;

use crate::python::{self, SyntaxFailure};

pub const PASS_ORDER: [&str; 8] = [
    "extract_blocks",
    "select_candidate",
    "strip_think_segments",
    "strip_residual_fences",
    "normalize_imports",
    "enforce_hyperparameters",
    "balance_brackets",
    "syntax_check",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass_name: String,
    pub changed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSource {
    pub text: String,
    pub pass_log: Vec<PassRecord>,
    pub origin: Origin,
    /// `None` when `text` parses.
    pub syntax: Option<SyntaxFailure>,
}

impl CandidateSource {
    pub fn parses(&self) -> bool {
        self.syntax.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizeConfig {
    pub required_imports: Vec<String>,
}

impl Default for SanitizeConfig {
    fn default() -> Self {
        Self {
            required_imports: DEFAULT_REQUIRED_IMPORTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

struct Log(Vec<PassRecord>);

impl Log {
    fn push(&mut self, name: &str, changed: bool, detail: impl Into<String>) {
        self.0.push(PassRecord {
            pass_name: name.to_string(),
            changed,
            detail: detail.into(),
        });
    }
}

pub fn sanitize(raw: &str) -> CandidateSource {
    sanitize_with(raw, &SanitizeConfig::default())
}

pub fn sanitize_with(raw: &str, config: &SanitizeConfig) -> CandidateSource {
    let mut log = Log(Vec::with_capacity(PASS_ORDER.len()));

    let blocks = extract_blocks(raw);
    let origin = blocks[0].origin;
    match origin {
        Origin::FencedBlock => log.push("extract_blocks", true, format!("{} fenced block(s)", blocks.len())),
        Origin::WholeTextFallback => log.push("extract_blocks", false, "no fences; whole text used"),
    }

    let chosen = select_candidate(&blocks).unwrap_or(0);
    let block = &blocks[chosen];
    let detail = if fences::declares_net(&block.text) {
        format!("block {} of {} (declares Net)", chosen + 1, blocks.len())
    } else {
        format!("block {} of {} (longest)", chosen + 1, blocks.len())
    };
    log.push("select_candidate", blocks.len() > 1, detail);
    let mut text = block.text.clone();

    let next = strip_think_segments(&text);
    let changed = next != text;
    let detail = if changed {
        format!("removed {} byte(s)", text.len() - next.len())
    } else {
        String::new()
    };
    log.push("strip_think_segments", changed, detail);
    text = next;

    let next = strip_residual_fences(&text);
    let changed = next != text;
    log.push("strip_residual_fences", changed, if changed { "removed fence lines" } else { "" });
    text = next;

    let (next, changes) = normalize_imports(&text, &config.required_imports);
    let detail = if changes.is_empty() {
        String::new()
    } else {
        format!("inserted {:?}, removed {} duplicate(s)", changes.inserted, changes.removed)
    };
    log.push("normalize_imports", !changes.is_empty(), detail);
    text = next;

    let (next, change) = enforce_hyperparameters(&text);
    let detail = match change {
        HyperparamChange::Unchanged => "",
        HyperparamChange::Rewritten => "rewritten",
        HyperparamChange::Appended => "inserted",
    };
    log.push("enforce_hyperparameters", change != HyperparamChange::Unchanged, detail);
    text = next;

    let balanced = balance_brackets(&text);
    let mut detail = String::new();
    if !balanced.appended.is_empty() {
        detail = format!("appended {:?}", balanced.appended);
    }
    if !balanced.unmatched_closers.is_empty() {
        if !detail.is_empty() {
            detail.push_str("; ");
        }
        detail.push_str(&format!("{} unmatched closer(s)", balanced.unmatched_closers.len()));
    }
    log.push("balance_brackets", !balanced.appended.is_empty(), detail);
    text = balanced.text;

    let syntax = python::syntax_check(&text).err();
    match &syntax {
        None => log.push("syntax_check", false, "ok"),
        Some(f) => log.push("syntax_check", false, f.to_string()),
    }

    CandidateSource {
        text,
        pass_log: log.0,
        origin,
        syntax,
    }
}
