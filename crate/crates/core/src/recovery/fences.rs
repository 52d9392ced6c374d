//! Fenced code block extraction and candidate selection.
//!
//! Fences follow the usual Markdown rule. A line of three or more backticks
//! or tildes, optionally followed by an info string, opens a block. The block
//! closes at a line holding only a fence of the same character at least as
//! long. An unterminated block runs to end of input. Leading whitespace on a
//! fence line is tolerated and stripped from the block's content lines.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    FencedBlock,
    WholeTextFallback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub info: String,
    pub text: String,
    pub origin: Origin,
}

struct Fence {
    ch: char,
    len: usize,
    indent: usize,
}

fn parse_fence(line: &str) -> Option<(Fence, &str)> {
    let body = line.trim_end_matches(['\n', '\r']);
    let trimmed = body.trim_start();
    let indent = body.len() - trimmed.len();
    let ch = trimmed.chars().next()?;
    if ch != '`' && ch != '~' {
        return None;
    }
    let len = trimmed.chars().take_while(|&c| c == ch).count();
    if len < 3 {
        return None;
    }
    let info = trimmed[len..].trim();
    if ch == '`' && info.contains('`') {
        return None;
    }
    Some((Fence { ch, len, indent }, info))
}

fn closes(line: &str, open: &Fence) -> bool {
    match parse_fence(line) {
        Some((f, info)) => f.ch == open.ch && f.len >= open.len && info.is_empty(),
        None => false,
    }
}

/// True when `line` would be read as a fence delimiter.
pub fn is_fence_line(line: &str) -> bool {
    parse_fence(line).is_some()
}

fn strip_indent(line: &str, indent: usize) -> &str {
    let ws = line.len() - line.trim_start_matches([' ', '\t']).len();
    &line[ws.min(indent)..]
}

/// Every fenced block in document order, or the whole text when there are none.
pub fn extract_blocks(raw: &str) -> Vec<Block> {
    let mut blocks = Vec::new();
    let mut lines = raw.split_inclusive('\n');
    while let Some(line) = lines.next() {
        let Some((fence, info)) = parse_fence(line) else {
            continue;
        };
        let mut text = String::new();
        for inner in lines.by_ref() {
            if closes(inner, &fence) {
                break;
            }
            text.push_str(strip_indent(inner, fence.indent));
        }
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        blocks.push(Block {
            info: info.to_string(),
            text,
            origin: Origin::FencedBlock,
        });
    }
    if blocks.is_empty() {
        blocks.push(Block {
            info: String::new(),
            text: raw.to_string(),
            origin: Origin::WholeTextFallback,
        });
    }
    blocks
}

static NET_CLASS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*class[ \t]+Net[ \t]*[(:]").unwrap());

pub fn declares_net(text: &str) -> bool {
    NET_CLASS.is_match(text)
}

/// Index of the block to keep: the longest block declaring `class Net`,
/// else the longest block overall; earlier blocks win ties.
pub fn select_candidate(blocks: &[Block]) -> Option<usize> {
    let longest = |pred: &dyn Fn(&Block) -> bool| {
        blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| pred(b))
            .fold(None, |best: Option<(usize, usize)>, (i, b)| {
                let len = b.text.chars().count();
                match best {
                    Some((_, best_len)) if best_len >= len => best,
                    _ => Some((i, len)),
                }
            })
            .map(|(i, _)| i)
    };
    longest(&|b| declares_net(&b.text)).or_else(|| longest(&|_| true))
}

/// Drops any fence delimiter lines left in the selected text.
pub fn strip_residual_fences(text: &str) -> String {
    text.split_inclusive('\n').filter(|l| !is_fence_line(l)).collect()
}
