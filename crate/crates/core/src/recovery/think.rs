//! Removal of `<think>` reasoning segments emitted by reasoning models.

const OPEN: &str = "<think>";
const CLOSE: &str = "</think>";

/// Removes every `<think>…</think>` span. An opening tag with no close
/// removes everything to end of input; a close with no opening tag is
/// treated as closing a span that began at the start of the text.
pub fn strip_think_segments(text: &str) -> String {
    let mut current = text.to_string();
    loop {
        let next = strip_once(&current);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn strip_once(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    loop {
        let open = rest.find(OPEN);
        let close = rest.find(CLOSE);
        match (open, close) {
            (Some(o), Some(c)) if o < c => {
                out.push_str(&rest[..o]);
                let after_open = &rest[o + OPEN.len()..];
                match after_open.find(CLOSE) {
                    Some(end) => rest = &after_open[end + CLOSE.len()..],
                    None => return out,
                }
            }
            (Some(o), None) => {
                out.push_str(&rest[..o]);
                return out;
            }
            (_, Some(c)) => {
                // orphan close: everything before it was reasoning
                out.clear();
                rest = &rest[c + CLOSE.len()..];
            }
            (None, None) => {
                out.push_str(rest);
                return out;
            }
        }
    }
}
