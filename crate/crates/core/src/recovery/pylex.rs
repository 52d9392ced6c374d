//! A lightweight scanner for Python source. It tracks string and comment
//! state along with bracket depth.
//!
//! It never fails: broken input still yields a scan, which is what the
//! fix-up passes need since they run before any real parse.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndState {
    Code,
    Comment,
    String,
}

/// Lexer state at the first byte of a physical line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineStart {
    pub offset: usize,
    /// Inside a triple-quoted string (or an escaped-newline single-quoted one).
    pub in_string: bool,
    /// Open bracket depth.
    pub depth: usize,
    /// Previous line ended with a backslash continuation.
    pub continued: bool,
}

impl LineStart {
    /// True when this line begins a new logical line.
    pub fn is_statement_start(&self) -> bool {
        !self.in_string && self.depth == 0 && !self.continued
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bracket {
    pub ch: char,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct Scan {
    pub lines: Vec<LineStart>,
    /// Openers still unclosed at EOF, outermost first.
    pub unclosed: Vec<Bracket>,
    /// Closers with no matching opener on the stack.
    pub unmatched_closers: Vec<Bracket>,
    pub end: EndState,
}

pub fn closer_for(open: char) -> char {
    match open {
        '(' => ')',
        '[' => ']',
        '{' => '}',
        _ => unreachable!("not an opening bracket: {open}"),
    }
}

fn opener_for(close: char) -> char {
    match close {
        ')' => '(',
        ']' => '[',
        '}' => '{',
        _ => unreachable!("not a closing bracket: {close}"),
    }
}

#[derive(Clone, Copy)]
enum State {
    Code,
    Comment,
    Str { quote: char, triple: bool },
}

pub fn scan(text: &str) -> Scan {
    let bytes = text.as_bytes();
    let mut lines = vec![LineStart {
        offset: 0,
        in_string: false,
        depth: 0,
        continued: false,
    }];
    let mut stack: Vec<Bracket> = Vec::new();
    let mut unmatched = Vec::new();
    let mut state = State::Code;

    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match state {
            State::Code => match b {
                b'#' => state = State::Comment,
                b'\'' | b'"' => {
                    let quote = b as char;
                    let triple = bytes.get(i + 1) == Some(&b) && bytes.get(i + 2) == Some(&b);
                    state = State::Str { quote, triple };
                    if triple {
                        i += 2;
                    }
                }
                b'\\' if bytes.get(i + 1) == Some(&b'\n') => {
                    i += 1;
                    lines.push(LineStart {
                        offset: i + 1,
                        in_string: false,
                        depth: stack.len(),
                        continued: true,
                    });
                }
                b'\\' if bytes.get(i + 1) == Some(&b'\r') && bytes.get(i + 2) == Some(&b'\n') => {
                    i += 2;
                    lines.push(LineStart {
                        offset: i + 1,
                        in_string: false,
                        depth: stack.len(),
                        continued: true,
                    });
                }
                b'(' | b'[' | b'{' => stack.push(Bracket { ch: b as char, offset: i }),
                b')' | b']' | b'}' => {
                    let ch = b as char;
                    match stack.last() {
                        Some(top) if top.ch == opener_for(ch) => {
                            stack.pop();
                        }
                        _ => unmatched.push(Bracket { ch, offset: i }),
                    }
                }
                b'\n' => {
                    lines.push(LineStart {
                        offset: i + 1,
                        in_string: false,
                        depth: stack.len(),
                        continued: false,
                    });
                }
                _ => {}
            },
            State::Comment => {
                if b == b'\n' {
                    state = State::Code;
                    lines.push(LineStart {
                        offset: i + 1,
                        in_string: false,
                        depth: stack.len(),
                        continued: false,
                    });
                }
            }
            State::Str { quote, triple } => {
                if b == b'\\' {
                    // the escaped byte never terminates the literal, raw or not
                    if let Some(&next) = bytes.get(i + 1) {
                        i += 1;
                        if next == b'\n' {
                            lines.push(LineStart {
                                offset: i + 1,
                                in_string: true,
                                depth: stack.len(),
                                continued: false,
                            });
                        }
                    }
                } else if b == quote as u8 {
                    if !triple {
                        state = State::Code;
                    } else if bytes.get(i + 1) == Some(&b) && bytes.get(i + 2) == Some(&b) {
                        state = State::Code;
                        i += 2;
                    }
                } else if b == b'\n' {
                    if triple {
                        lines.push(LineStart {
                            offset: i + 1,
                            in_string: true,
                            depth: stack.len(),
                            continued: false,
                        });
                    } else {
                        // unterminated single-quoted literal ends at the newline
                        state = State::Code;
                        lines.push(LineStart {
                            offset: i + 1,
                            in_string: false,
                            depth: stack.len(),
                            continued: false,
                        });
                    }
                }
            }
        }
        i += 1;
    }

    // a trailing newline opens an empty final "line" we do not want to report
    if lines.len() > 1 && lines.last().map(|l| l.offset) == Some(text.len()) {
        lines.pop();
    }

    let end = match state {
        State::Code => EndState::Code,
        State::Comment => EndState::Comment,
        State::Str { .. } => EndState::String,
    };
    Scan {
        lines,
        unclosed: stack,
        unmatched_closers: unmatched,
        end,
    }
}

/// Splits `text` into physical lines (each keeping its terminator) paired
/// with the lexer state at the start of that line.
pub fn lines_with_state(text: &str) -> Vec<(&str, LineStart)> {
    let scan = scan(text);
    let physical: Vec<&str> = text.split_inclusive('\n').collect();
    debug_assert!(physical.is_empty() || physical.len() == scan.lines.len());
    physical.into_iter().zip(scan.lines).collect()
}
