//! Static checks of candidate source against the `Net` API contract, plus
//! decoder-family classification.

use std::collections::HashMap;
use std::fmt;

use rustpython_ast::{
    Constant, Expr, ExprAttribute, ExprCall, ExprName, Stmt, StmtAsyncFunctionDef, StmtClassDef, StmtFunctionDef, StmtImport,
    StmtImportFrom, StmtReturn, Visitor,
};
use rustpython_parser::text_size::TextSize;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::python::{self, Module, SyntaxFailure};
use crate::recovery::CandidateSource;

pub const RULES_VERSION: &str = "nncaption-rules-1";
pub const DEFAULT_DENY_LIST: &[&str] = &["nn.SelfAttention"];
pub const MANDATORY_METHODS: [&str; 3] = ["train_setup", "learn", "forward"];
pub const CTOR_PARAMS: [&str; 5] = ["self", "in_shape", "out_shape", "prm", "device"];

const TRANSFORMER_DECODER_TYPES: [&str; 3] = ["TransformerDecoder", "TransformerDecoderLayer", "Transformer"];
const ATTENTION_TYPES: [&str; 4] = ["TransformerDecoder", "TransformerDecoderLayer", "MultiheadAttention", "Transformer"];
const LOSS_CALLS: [&str; 4] = ["CrossEntropyLoss", "cross_entropy", "NLLLoss", "nll_loss"];
const MODULE_BASES: [&str; 2] = ["torch.nn.Module", "torch.nn.modules.module.Module"];

#[derive(Debug, Error)]
pub enum ContractError {
    #[error("source does not parse: {0}")]
    Unparsed(SyntaxFailure),
    #[error("nothing to explain: the report has no violations")]
    CleanReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RuleId {
    NetClass,
    CtorSig,
    Methods,
    Hyperparams,
    ForbiddenIdent,
    VocabToDecoder,
    TupleReturn,
    IgnoreIndex,
}

impl RuleId {
    pub const ALL: [RuleId; 8] = [
        RuleId::NetClass,
        RuleId::CtorSig,
        RuleId::Methods,
        RuleId::Hyperparams,
        RuleId::ForbiddenIdent,
        RuleId::VocabToDecoder,
        RuleId::TupleReturn,
        RuleId::IgnoreIndex,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RuleId::NetClass => "NET_CLASS",
            RuleId::CtorSig => "CTOR_SIG",
            RuleId::Methods => "METHODS",
            RuleId::Hyperparams => "HYPERPARAMS",
            RuleId::ForbiddenIdent => "FORBIDDEN_IDENT",
            RuleId::VocabToDecoder => "VOCAB_TO_DECODER",
            RuleId::TupleReturn => "TUPLE_RETURN",
            RuleId::IgnoreIndex => "IGNORE_INDEX",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }

    /// The severity a violation of this rule normally carries.
    pub fn default_severity(&self) -> Severity {
        match self {
            RuleId::IgnoreIndex => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecoderType {
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "GRU")]
    Gru,
    Transformer,
    Unknown,
}

impl DecoderType {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecoderType::Lstm => "LSTM",
            DecoderType::Gru => "GRU",
            DecoderType::Transformer => "Transformer",
            DecoderType::Unknown => "Unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "LSTM" => Some(DecoderType::Lstm),
            "GRU" => Some(DecoderType::Gru),
            "Transformer" => Some(DecoderType::Transformer),
            "Unknown" => Some(DecoderType::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for DecoderType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: RuleId,
    pub severity: Severity,
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub identifier: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractReport {
    pub passed: bool,
    pub decoder_type: DecoderType,
    pub violations: Vec<Violation>,
}

impl ContractReport {
    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn has_rule(&self, rule: RuleId) -> bool {
        self.violations.iter().any(|v| v.rule_id == rule)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckConfig {
    /// Dotted names that must not appear, matched on whole trailing components.
    pub deny_list: Vec<String>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            deny_list: DEFAULT_DENY_LIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Fact collection
// ---------------------------------------------------------------------------

struct CallSite {
    offset: TextSize,
    terminal: String,
    keywords: Vec<String>,
    ignore_index_zero: bool,
}

struct NameRef {
    offset: TextSize,
    dotted: String,
}

#[derive(Default)]
struct Facts {
    calls: Vec<CallSite>,
    names: Vec<NameRef>,
    class_names: Vec<String>,
    /// Local name bound by an import, mapped to the qualified name it denotes.
    aliases: HashMap<String, String>,
    /// `from X import Y` bindings, with the position of the alias.
    imported: Vec<(TextSize, String)>,
}

fn is_int_zero(expr: &Expr) -> bool {
    matches!(expr, Expr::Constant(c) if matches!(&c.value, Constant::Int(i) if i.to_string() == "0"))
}

fn attribute_chain(node: &ExprAttribute) -> Option<String> {
    python::dotted_name(&node.value).map(|base| format!("{base}.{}", node.attr))
}

impl Visitor for Facts {
    fn visit_expr_call(&mut self, node: ExprCall) {
        if let Some(terminal) = python::terminal_name(&node.func) {
            let mut keywords = Vec::new();
            let mut ignore_index_zero = false;
            for kw in &node.keywords {
                if let Some(arg) = &kw.arg {
                    if arg.as_str() == "ignore_index" && is_int_zero(&kw.value) {
                        ignore_index_zero = true;
                    }
                    keywords.push(arg.to_string());
                }
            }
            self.calls.push(CallSite {
                offset: node.range.start(),
                terminal: terminal.to_string(),
                keywords,
                ignore_index_zero,
            });
        }
        self.generic_visit_expr_call(node);
    }

    fn visit_expr_attribute(&mut self, node: ExprAttribute) {
        match attribute_chain(&node) {
            Some(dotted) => self.names.push(NameRef {
                offset: node.range.start(),
                dotted,
            }),
            None => self.generic_visit_expr_attribute(node),
        }
    }

    fn visit_expr_name(&mut self, node: ExprName) {
        self.names.push(NameRef {
            offset: node.range.start(),
            dotted: node.id.to_string(),
        });
    }

    fn visit_stmt_class_def(&mut self, node: StmtClassDef) {
        self.class_names.push(node.name.to_string());
        self.generic_visit_stmt_class_def(node);
    }

    fn visit_stmt_import(&mut self, node: StmtImport) {
        for alias in node.names {
            let name = alias.name.to_string();
            match alias.asname {
                Some(local) => {
                    self.aliases.insert(local.to_string(), name);
                }
                None => {
                    let root = name.split('.').next().unwrap_or(&name).to_string();
                    self.aliases.insert(root.clone(), root);
                }
            }
        }
    }

    fn visit_stmt_import_from(&mut self, node: StmtImportFrom) {
        let Some(module) = node.module else { return };
        for alias in node.names {
            let qualified = format!("{module}.{}", alias.name);
            let local = alias.asname.as_ref().unwrap_or(&alias.name).to_string();
            self.imported.push((alias.range.start(), qualified.clone()));
            self.aliases.insert(local, qualified);
        }
    }
}

impl Facts {
    fn collect(body: &[Stmt]) -> Self {
        let mut facts = Facts::default();
        for stmt in body.iter().cloned() {
            facts.visit_stmt(stmt);
        }
        facts
    }

    fn resolve(&self, dotted: &str) -> String {
        let (head, rest) = dotted.split_once('.').map_or((dotted, None), |(h, r)| (h, Some(r)));
        match (self.aliases.get(head), rest) {
            (Some(q), Some(rest)) => format!("{q}.{rest}"),
            (Some(q), None) => q.clone(),
            (None, _) => dotted.to_string(),
        }
    }
}

/// Return statements of a function body, not descending into nested scopes.
#[derive(Default)]
struct Returns(Vec<StmtReturn>);

impl Visitor for Returns {
    fn visit_stmt_return(&mut self, node: StmtReturn) {
        self.0.push(node);
    }
    fn visit_stmt_function_def(&mut self, _: StmtFunctionDef) {}
    fn visit_stmt_async_function_def(&mut self, _: StmtAsyncFunctionDef) {}
    fn visit_stmt_class_def(&mut self, _: StmtClassDef) {}
}

// ---------------------------------------------------------------------------
// Checking
// ---------------------------------------------------------------------------

struct Checker<'a> {
    module: &'a Module,
    facts: Facts,
    config: &'a CheckConfig,
    out: Vec<Violation>,
}

fn ends_with_component(name: &str, suffix: &str) -> bool {
    name == suffix || name.strip_suffix(suffix).is_some_and(|head| head.ends_with('.'))
}

impl<'a> Checker<'a> {
    fn push(&mut self, rule: RuleId, severity: Severity, at: Option<TextSize>, message: String, identifier: Option<&str>) {
        let (line, column) = at.map_or((1, 1), |o| self.module.position(o));
        self.out.push(Violation {
            rule_id: rule,
            severity,
            line,
            column,
            message,
            identifier: identifier.map(str::to_string),
        });
    }

    fn error(&mut self, rule: RuleId, at: Option<TextSize>, message: String, identifier: Option<&str>) {
        self.push(rule, Severity::Error, at, message, identifier);
    }

    fn net_classes(&self) -> Vec<&'a StmtClassDef> {
        self.module
            .body
            .iter()
            .filter_map(|s| match s {
                Stmt::ClassDef(c) if c.name.as_str() == "Net" => Some(c),
                _ => None,
            })
            .collect()
    }

    fn is_module_base(&self, base: &Expr) -> bool {
        let Some(dotted) = python::dotted_name(base) else { return false };
        dotted == "nn.Module" || MODULE_BASES.contains(&self.facts.resolve(&dotted).as_str())
    }

    fn check_net(&mut self) {
        let nets = self.net_classes();
        let Some(&net) = nets.first() else {
            self.error(RuleId::NetClass, None, "no top-level class Net".into(), Some("Net"));
            self.error_methods_missing(None);
            return;
        };
        if nets.len() > 1 {
            for extra in &nets[1..] {
                self.error(
                    RuleId::NetClass,
                    Some(extra.range.start()),
                    format!("class Net is defined {} times", nets.len()),
                    Some("Net"),
                );
            }
        }
        if !net.bases.iter().any(|b| self.is_module_base(b)) {
            self.error(
                RuleId::NetClass,
                Some(net.range.start()),
                "class Net does not subclass nn.Module".into(),
                Some("Net"),
            );
        }

        let methods: HashMap<&str, &StmtFunctionDef> = net
            .body
            .iter()
            .filter_map(|s| match s {
                Stmt::FunctionDef(f) => Some((f.name.as_str(), f)),
                _ => None,
            })
            .collect();
        let async_methods: Vec<&str> = net
            .body
            .iter()
            .filter_map(|s| match s {
                Stmt::AsyncFunctionDef(f) => Some(f.name.as_str()),
                _ => None,
            })
            .collect();

        match methods.get("__init__") {
            Some(init) => self.check_ctor(init),
            None => self.error(
                RuleId::CtorSig,
                Some(net.range.start()),
                "class Net defines no __init__(self, in_shape, out_shape, prm, device)".into(),
                Some("__init__"),
            ),
        }

        for name in MANDATORY_METHODS {
            if !methods.contains_key(name) && !async_methods.contains(&name) {
                self.error(
                    RuleId::Methods,
                    Some(net.range.start()),
                    format!("class Net is missing method {name}"),
                    Some(name),
                );
            }
        }

        if let Some(forward) = methods.get("forward") {
            self.check_forward_returns(forward);
        }
    }

    fn error_methods_missing(&mut self, at: Option<TextSize>) {
        for name in MANDATORY_METHODS {
            self.error(RuleId::Methods, at, format!("class Net is missing method {name}"), Some(name));
        }
    }

    fn check_ctor(&mut self, init: &StmtFunctionDef) {
        let at = Some(init.range.start());
        let a = &init.args;
        let positional: Vec<&str> = a.posonlyargs.iter().chain(&a.args).map(|p| p.def.arg.as_str()).collect();
        if positional != CTOR_PARAMS {
            self.error(
                RuleId::CtorSig,
                at,
                format!(
                    "__init__ parameters are ({}); expected ({})",
                    positional.join(", "),
                    CTOR_PARAMS.join(", ")
                ),
                Some("__init__"),
            );
        }
        if let Some(v) = &a.vararg {
            self.error(RuleId::CtorSig, at, format!("__init__ takes *{}", v.arg), Some("__init__"));
        }
        if let Some(k) = &a.kwarg {
            self.error(RuleId::CtorSig, at, format!("__init__ takes **{}", k.arg), Some("__init__"));
        }
        for kw in &a.kwonlyargs {
            let name = kw.def.arg.as_str();
            if kw.default.is_some() {
                self.push(
                    RuleId::CtorSig,
                    Severity::Warning,
                    at,
                    format!("__init__ has extra keyword-only parameter {name}"),
                    Some(name),
                );
            } else {
                self.error(
                    RuleId::CtorSig,
                    at,
                    format!("__init__ has required keyword-only parameter {name}"),
                    Some(name),
                );
            }
        }
    }

    fn check_forward_returns(&mut self, forward: &StmtFunctionDef) {
        let mut returns = Returns::default();
        for stmt in forward.body.iter().cloned() {
            returns.visit_stmt(stmt);
        }
        if returns.0.is_empty() {
            self.error(
                RuleId::TupleReturn,
                Some(forward.range.start()),
                "forward never returns (logits, hidden_state)".into(),
                Some("forward"),
            );
        }
        for ret in &returns.0 {
            let ok = matches!(ret.value.as_deref(), Some(Expr::Tuple(t)) if t.elts.len() == 2);
            if !ok {
                self.error(
                    RuleId::TupleReturn,
                    Some(ret.range.start()),
                    "forward must return a two-element tuple (logits, hidden_state)".into(),
                    Some("forward"),
                );
            }
        }
    }

    fn check_hyperparams(&mut self) {
        let defs: Vec<&StmtFunctionDef> = self
            .module
            .body
            .iter()
            .filter_map(|s| match s {
                Stmt::FunctionDef(f) if f.name.as_str() == "supported_hyperparameters" => Some(f),
                _ => None,
            })
            .collect();
        let name = Some("supported_hyperparameters");
        match defs.as_slice() {
            [] => self.error(RuleId::Hyperparams, None, "no top-level supported_hyperparameters()".into(), name),
            [def] => {
                if !python::returns_exact_hyperparameters(def) {
                    self.error(
                        RuleId::Hyperparams,
                        Some(def.range.start()),
                        "supported_hyperparameters() must return exactly {'lr', 'momentum'}".into(),
                        name,
                    );
                }
            }
            [_, rest @ ..] => {
                for def in rest {
                    self.error(
                        RuleId::Hyperparams,
                        Some(def.range.start()),
                        format!("supported_hyperparameters() is defined {} times", defs.len()),
                        name,
                    );
                }
            }
        }
    }

    fn check_forbidden(&mut self) {
        let mut hits = Vec::new();
        for entry in &self.config.deny_list {
            for r in &self.facts.names {
                let resolved = self.facts.resolve(&r.dotted);
                if ends_with_component(&r.dotted, entry) || ends_with_component(&resolved, entry) {
                    hits.push((r.offset, r.dotted.clone()));
                }
            }
            for (offset, qualified) in &self.facts.imported {
                if ends_with_component(qualified, entry) {
                    hits.push((*offset, qualified.clone()));
                }
            }
        }
        hits.sort();
        hits.dedup();
        for (offset, name) in hits {
            self.error(
                RuleId::ForbiddenIdent,
                Some(offset),
                format!("{name} is not an available class"),
                Some(&name),
            );
        }
    }

    fn check_vocab_to_decoder(&mut self) {
        let mut hits = Vec::new();
        for call in &self.facts.calls {
            let decoder_type = TRANSFORMER_DECODER_TYPES.contains(&call.terminal.as_str());
            let locally_defined = self.facts.class_names.contains(&call.terminal);
            if decoder_type && !locally_defined && call.keywords.iter().any(|k| k == "vocab_size") {
                hits.push((call.offset, call.terminal.clone()));
            }
        }
        for (offset, name) in hits {
            self.error(
                RuleId::VocabToDecoder,
                Some(offset),
                format!("vocab_size must not be passed to {name}"),
                Some(&name),
            );
        }
    }

    fn check_ignore_index(&mut self) {
        let losses: Vec<(TextSize, String, bool)> = self
            .facts
            .calls
            .iter()
            .filter(|c| LOSS_CALLS.contains(&c.terminal.as_str()))
            .map(|c| (c.offset, c.terminal.clone(), c.ignore_index_zero))
            .collect();
        for (offset, name, ok) in losses {
            if !ok {
                self.push(
                    RuleId::IgnoreIndex,
                    Severity::Warning,
                    Some(offset),
                    format!("{name} is constructed without ignore_index=0"),
                    Some(&name),
                );
            }
        }
    }
}

fn sort_violations(v: &mut [Violation]) {
    v.sort_by(|a, b| (a.line, a.column, a.rule_id, &a.message).cmp(&(b.line, b.column, b.rule_id, &b.message)));
}

pub fn check_module(module: &Module, config: &CheckConfig) -> ContractReport {
    let facts = Facts::collect(&module.body);
    let decoder_type = classify_facts(&facts);
    let mut checker = Checker {
        module,
        facts,
        config,
        out: Vec::new(),
    };
    checker.check_net();
    checker.check_hyperparams();
    checker.check_forbidden();
    checker.check_vocab_to_decoder();
    checker.check_ignore_index();
    let mut violations = checker.out;
    sort_violations(&mut violations);
    ContractReport {
        passed: !violations.iter().any(|v| v.severity == Severity::Error),
        decoder_type,
        violations,
    }
}

pub fn check_with(source: &str, config: &CheckConfig) -> Result<ContractReport, ContractError> {
    let module = python::parse_module(source).map_err(ContractError::Unparsed)?;
    Ok(check_module(&module, config))
}

pub fn check(source: &str) -> Result<ContractReport, ContractError> {
    check_with(source, &CheckConfig::default())
}

pub fn check_candidate(candidate: &CandidateSource, config: &CheckConfig) -> Result<ContractReport, ContractError> {
    if let Some(failure) = &candidate.syntax {
        return Err(ContractError::Unparsed(failure.clone()));
    }
    check_with(&candidate.text, config)
}

fn classify_facts(facts: &Facts) -> DecoderType {
    let mut calls: Vec<&CallSite> = facts.calls.iter().filter(|c| !facts.class_names.contains(&c.terminal)).collect();
    calls.sort_by_key(|c| c.offset);
    if calls.iter().any(|c| ATTENTION_TYPES.contains(&c.terminal.as_str())) {
        return DecoderType::Transformer;
    }
    let mut lstm = 0usize;
    let mut gru = 0usize;
    let mut first = None;
    for c in &calls {
        let kind = match c.terminal.as_str() {
            "LSTM" | "LSTMCell" => DecoderType::Lstm,
            "GRU" | "GRUCell" => DecoderType::Gru,
            _ => continue,
        };
        first.get_or_insert(kind);
        match kind {
            DecoderType::Lstm => lstm += 1,
            _ => gru += 1,
        }
    }
    match lstm.cmp(&gru) {
        std::cmp::Ordering::Greater => DecoderType::Lstm,
        std::cmp::Ordering::Less => DecoderType::Gru,
        std::cmp::Ordering::Equal => first.unwrap_or(DecoderType::Unknown),
    }
}

/// Transformer when any attention-based decoder is constructed; otherwise
/// the more frequently constructed recurrent type, with ties going to the
/// one constructed first. Classes defined in the module itself are not
/// counted, whatever their names.
pub fn classify_decoder(source: &str) -> Result<DecoderType, ContractError> {
    let module = python::parse_module(source).map_err(ContractError::Unparsed)?;
    let facts = Facts::collect(&module.body);
    Ok(classify_facts(&facts))
}

fn bullet(line: usize, column: usize, tag: &str, message: &str) -> String {
    format!("- line {line}, col {column}: [{tag}] {message}")
}

/// Plain-text feedback for a repair prompt, one bullet per violation in
/// source order.
pub fn explain(report: &ContractReport) -> Result<String, ContractError> {
    if report.violations.is_empty() {
        return Err(ContractError::CleanReport);
    }
    let mut violations = report.violations.clone();
    sort_violations(&mut violations);
    let lines: Vec<String> = violations
        .iter()
        .map(|v| {
            let tag = match v.severity {
                Severity::Error => v.rule_id.as_str().to_string(),
                Severity::Warning => format!("{} warning", v.rule_id),
            };
            bullet(v.line, v.column, &tag, &v.message)
        })
        .collect();
    Ok(lines.join("\n"))
}

pub fn explain_syntax(failure: &SyntaxFailure) -> String {
    bullet(failure.line, failure.column, "SYNTAX", &failure.message)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{REFERENCE_BASELINE_LSTM, REFERENCE_BASELINE_TRANSFORMER};

    #[test]
    fn baselines_pass() {
        let lstm = check(REFERENCE_BASELINE_LSTM).unwrap();
        assert!(lstm.violations.is_empty(), "{:#?}", lstm.violations);
        assert_eq!(lstm.decoder_type, DecoderType::Lstm);
        let tr = check(REFERENCE_BASELINE_TRANSFORMER).unwrap();
        assert!(tr.violations.is_empty(), "{:#?}", tr.violations);
        assert_eq!(tr.decoder_type, DecoderType::Transformer);
    }

    #[test]
    fn recurrent_tie_goes_to_first() {
        let src = "import torch.nn as nn\na = nn.GRU(1, 2)\nb = nn.LSTM(1, 2)\n";
        assert_eq!(classify_decoder(src).unwrap(), DecoderType::Gru);
        let src = "import torch.nn as nn\na = nn.GRU(1, 2)\nb = nn.LSTMCell(1, 2)\nc = nn.LSTM(1, 2)\n";
        assert_eq!(classify_decoder(src).unwrap(), DecoderType::Lstm);
        assert_eq!(classify_decoder("x = 1\n").unwrap(), DecoderType::Unknown);
        let src = "import torch.nn as nn\na = nn.LSTM(1, 2)\nb = nn.MultiheadAttention(8, 2)\n";
        assert_eq!(classify_decoder(src).unwrap(), DecoderType::Transformer);
    }

    #[test]
    fn explain_orders_and_rejects_clean() {
        let clean = check(REFERENCE_BASELINE_LSTM).unwrap();
        assert!(matches!(explain(&clean), Err(ContractError::CleanReport)));
        let text = explain_syntax(&SyntaxFailure {
            line: 40,
            column: 3,
            message: "unexpected EOF".into(),
        });
        assert!(text.contains("line 40") && text.contains("unexpected EOF"));
    }

    #[test]
    fn suffix_matching_is_component_wise() {
        assert!(ends_with_component("torch.nn.SelfAttention", "nn.SelfAttention"));
        assert!(ends_with_component("nn.SelfAttention", "nn.SelfAttention"));
        assert!(!ends_with_component("mynn.SelfAttention", "nn.SelfAttention"));
    }
}
