//! Shared inputs for the benchmarks.

use nncaption_core::metrics::{tokenize, TokenSeq};
use nncaption_core::prompt::REFERENCE_BASELINE_LSTM;

const WORDS: [&str; 12] = [
    "a", "man", "riding", "horse", "on", "the", "beach", "dog", "with", "ball", "two", "people",
];

/// A deterministic caption corpus: `n` candidates with three references each.
pub fn caption_corpus(n: usize) -> (Vec<TokenSeq>, Vec<Vec<TokenSeq>>) {
    let caption = |seed: usize, len: usize| -> TokenSeq {
        let text: Vec<&str> = (0..len).map(|i| WORDS[(seed * 7 + i * 5 + i * i) % WORDS.len()]).collect();
        tokenize(&text.join(" "))
    };
    let cands = (0..n).map(|i| caption(i, 8 + i % 5)).collect();
    let refs = (0..n)
        .map(|i| (0..3).map(|r| caption(i + r * (r + 1) / 2, 9 + (i + r) % 4)).collect())
        .collect();
    (cands, refs)
}

/// A typical messy reply: reasoning and prose ahead of a fenced block that
/// repeats an import and is cut off before its end.
pub fn messy_reply() -> String {
    let body = REFERENCE_BASELINE_LSTM.replacen("import torch\n", "import torch\nimport torch\n", 1);
    let truncated = &body[..body.len() - 40];
    format!("<think>\nLet me plan the decoder first.\n</think>\nHere is the model:\n```python\n{truncated}\n")
}
