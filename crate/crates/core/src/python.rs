//! Thin layer over the embedded Python parser. The sanitizer and the
//! contract checker share its position and literal helpers.

use std::fmt;

use rustpython_ast::{Constant, Expr, Stmt, StmtFunctionDef};
use rustpython_parser::text_size::TextSize;
use rustpython_parser::{ast, Parse};
use serde::{Deserialize, Serialize};

/// Where and why a source text fails to parse. Line and column are 1-based;
/// the column counts characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxFailure {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for SyntaxFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, col {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for SyntaxFailure {}

/// Maps byte offsets to 1-based (line, column) pairs.
#[derive(Debug, Clone)]
pub struct LineIndex {
    starts: Vec<usize>,
    source: String,
}

impl LineIndex {
    pub fn new(source: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(source.match_indices('\n').map(|(i, _)| i + 1));
        Self {
            starts,
            source: source.to_string(),
        }
    }

    pub fn locate(&self, offset: usize) -> (usize, usize) {
        let mut offset = offset.min(self.source.len());
        while !self.source.is_char_boundary(offset) {
            offset -= 1;
        }
        let line = self.starts.partition_point(|&s| s <= offset);
        let start = self.starts[line - 1];
        let column = self.source[start..offset].chars().count() + 1;
        (line, column)
    }

    pub fn locate_size(&self, offset: TextSize) -> (usize, usize) {
        self.locate(u32::from(offset) as usize)
    }

    pub fn line_count(&self) -> usize {
        self.starts.len()
    }
}

/// A parsed module together with its position index.
#[derive(Debug, Clone)]
pub struct Module {
    pub body: Vec<Stmt>,
    pub index: LineIndex,
}

impl Module {
    pub fn position(&self, offset: TextSize) -> (usize, usize) {
        self.index.locate_size(offset)
    }
}

pub fn parse_module(source: &str) -> Result<Module, SyntaxFailure> {
    let index = LineIndex::new(source);
    match ast::Suite::parse(source, "<candidate>") {
        Ok(body) => Ok(Module { body, index }),
        Err(err) => {
            let (line, column) = index.locate_size(err.offset);
            Err(SyntaxFailure {
                line,
                column,
                message: err.error.to_string(),
            })
        }
    }
}

pub fn syntax_check(source: &str) -> Result<(), SyntaxFailure> {
    parse_module(source).map(|_| ())
}

/// `a.b.c` for a chain of attribute accesses on a plain name.
pub fn dotted_name(expr: &Expr) -> Option<String> {
    match expr {
        Expr::Name(n) => Some(n.id.to_string()),
        Expr::Attribute(a) => dotted_name(&a.value).map(|base| format!("{base}.{}", a.attr)),
        _ => None,
    }
}

/// The last component of a name or attribute chain, e.g. `LSTM` for
/// `nn.LSTM` or for a bare `LSTM`.
pub fn terminal_name(expr: &Expr) -> Option<&str> {
    match expr {
        Expr::Name(n) => Some(n.id.as_str()),
        Expr::Attribute(a) => Some(a.attr.as_str()),
        _ => None,
    }
}

fn is_docstring(stmt: &Stmt) -> bool {
    matches!(stmt, Stmt::Expr(e) if matches!(&*e.value, Expr::Constant(c) if matches!(c.value, Constant::Str(_))))
}

/// True when `expr` is a set display of exactly the strings `lr` and `momentum`.
pub fn is_exact_hyperparameter_set(expr: &Expr) -> bool {
    let Expr::Set(set) = expr else { return false };
    let mut names: Vec<&str> = Vec::with_capacity(set.elts.len());
    for elt in &set.elts {
        match elt {
            Expr::Constant(c) => match &c.value {
                Constant::Str(s) => names.push(s.as_str()),
                _ => return false,
            },
            _ => return false,
        }
    }
    names.sort_unstable();
    names == ["lr", "momentum"]
}

/// The function takes no parameters and its body, after an optional
/// docstring, is a single `return {'lr', 'momentum'}`.
pub fn returns_exact_hyperparameters(def: &StmtFunctionDef) -> bool {
    let a = &def.args;
    if !(a.posonlyargs.is_empty() && a.args.is_empty() && a.kwonlyargs.is_empty() && a.vararg.is_none() && a.kwarg.is_none()) {
        return false;
    }
    let body: &[Stmt] = match def.body.split_first() {
        Some((first, rest)) if is_docstring(first) => rest,
        _ => &def.body,
    };
    match body {
        [Stmt::Return(r)] => r.value.as_deref().is_some_and(is_exact_hyperparameter_set),
        _ => false,
    }
}

/// True when `source` parses to exactly one `supported_hyperparameters`
/// definition that returns the canonical two-element set.
pub fn is_exact_hyperparameters_source(source: &str) -> bool {
    let Ok(module) = parse_module(source) else { return false };
    match module.body.as_slice() {
        [Stmt::FunctionDef(def)] => def.name.as_str() == "supported_hyperparameters" && returns_exact_hyperparameters(def),
        _ => false,
    }
}
