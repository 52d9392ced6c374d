//! Attempt state machine and batch driver.
//!
//! One attempt: prompt, generate, sanitize, check, then up to `repair_limit`
//! repair rounds that re-enter at sanitize, then an optional smoke run.
//! Batches run attempts on a small worker pool and record them in round
//! order from the calling thread.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::mpsc;
use std::sync::LazyLock;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::contract::{self, CheckConfig, ContractReport, DecoderType};
use crate::gateway::{ChatRequest, ChatResponse, Completer, FinishReason, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::prompt::{self, PromptError, PromptSpec, PromptText, Template};
use crate::recovery::{self, CandidateSource, SanitizeConfig};
use crate::registry::{now_millis, AttemptRecord, ExchangeRecord, MetricRecord, RegistryError, RepairStep, RunRecord, Status, Store};
use crate::smoke::{SmokeReport, SmokeRequest, SmokeRunner, SmokeStatus};

pub const DEFAULT_REPAIR_LIMIT: u32 = 2;
pub const DEFAULT_REPAIR_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_WORKERS: usize = 2;
pub const GEN_FAIL: &str = "GEN_FAIL";

const REPAIR_TEMPLATE: &str = include_str!("../assets/repair_template.v1.txt");
static REPAIR: LazyLock<Template> = LazyLock::new(|| Template::parse(REPAIR_TEMPLATE).expect("repair template is valid"));

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] RegistryError),
    #[error("repair feedback must not be empty")]
    EmptyFeedback,
    #[error("worker failed: {0}")]
    Worker(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorMode {
    Replay { dir: PathBuf },
    Endpoint { url: String },
    Custom { name: String },
}

/// Training settings recorded with a run and passed to the smoke runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: u32,
    pub batch_size: u32,
    pub learning_rate: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub snippet_count: usize,
    pub rounds: u32,
    pub repair_limit: u32,
    pub smoke_enabled: bool,
    pub generator: GeneratorMode,
    pub seed: u64,
    pub base_name: String,
    pub excluded_families: Vec<String>,
    pub temperature: f64,
    pub repair_temperature: f64,
    pub max_tokens: u32,
    pub model_name: String,
    pub rules_version: String,
    pub max_prompt_chars: Option<usize>,
    pub workers: usize,
    pub training: TrainingConfig,
    pub required_imports: Vec<String>,
    pub deny_list: Vec<String>,
    /// Overrides the derived run id.
    pub run_id: Option<String>,
}

impl PipelineConfig {
    pub fn new(snippet_count: usize, rounds: u32, base_name: impl Into<String>, generator: GeneratorMode) -> Self {
        Self {
            snippet_count,
            rounds,
            repair_limit: DEFAULT_REPAIR_LIMIT,
            smoke_enabled: false,
            generator,
            seed: 0,
            base_name: base_name.into(),
            excluded_families: Vec::new(),
            temperature: DEFAULT_TEMPERATURE,
            repair_temperature: DEFAULT_REPAIR_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            model_name: String::new(),
            rules_version: prompt::BUILTIN_RULES_VERSION.to_string(),
            max_prompt_chars: None,
            workers: DEFAULT_WORKERS,
            training: TrainingConfig::default(),
            required_imports: SanitizeConfig::default().required_imports,
            deny_list: CheckConfig::default().deny_list,
            run_id: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.rounds < 1 {
            return bad("rounds must be at least 1");
        }
        if self.snippet_count < 1 {
            return bad("snippet count must be at least 1");
        }
        if !(self.temperature > 0.0 && self.repair_temperature > 0.0) {
            return bad("temperatures must be positive");
        }
        if self.workers < 1 {
            return bad("workers must be at least 1");
        }
        if self.base_name.is_empty() {
            return bad("base name must not be empty");
        }
        Ok(())
    }

    fn sanitize_config(&self) -> SanitizeConfig {
        SanitizeConfig {
            required_imports: self.required_imports.clone(),
        }
    }

    fn check_config(&self) -> CheckConfig {
        CheckConfig {
            deny_list: self.deny_list.clone(),
        }
    }

    /// The spec for one round; the round's seed is `seed + round`.
    pub fn prompt_spec(&self, baseline_source: &str, pool: &[prompt::SnippetRecord], round: u32) -> PromptSpec {
        PromptSpec {
            baseline_source: baseline_source.to_string(),
            snippet_count: self.snippet_count,
            snippet_pool: pool.to_vec(),
            excluded_families: self.excluded_families.clone(),
            seed: self.seed.wrapping_add(round as u64),
            rules_version: self.rules_version.clone(),
            temperature: self.temperature,
            base_name: self.base_name.clone(),
            max_chars: self.max_prompt_chars,
        }
    }

    /// `run-` plus 12 hex digits of a digest over the configuration and the
    /// prompt inputs, unless an explicit id was given.
    pub fn run_id(&self, baseline_source: &str, pool: &[prompt::SnippetRecord]) -> String {
        if let Some(id) = &self.run_id {
            return id.clone();
        }
        let mut h = Sha256::new();
        h.update(self.canonical_json().as_bytes());
        h.update([0u8]);
        h.update(baseline_source.as_bytes());
        for s in pool {
            h.update([0u8]);
            h.update(s.snippet_id.as_bytes());
            h.update([0u8]);
            h.update(s.source_text.as_bytes());
        }
        format!("run-{}", &hex::encode(h.finalize())[..12])
    }

    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.run_id = None;
        serde_json::to_string(&c).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub status: Status,
    pub prompt: PromptText,
    pub raw_output: String,
    pub final_source: Option<String>,
    pub contract_report: Option<ContractReport>,
    pub smoke_report: Option<SmokeReport>,
    pub repair_transcript: Vec<RepairStep>,
    pub decoder_type: DecoderType,
    pub detail: String,
    pub gateway_calls: u32,
    pub exchanges: Vec<ExchangeRecord>,
    pub started_at: i64,
    pub finished_at: i64,
}

impl AttemptOutcome {
    pub fn repair_count(&self) -> u32 {
        self.repair_transcript.len() as u32
    }
}

/// Repair prompt: strict header, the original rules, the feedback, then the
/// code under repair.
pub fn build_repair_prompt(original_rules: &str, current_code: &str, feedback: &str) -> Result<PromptText, PipelineError> {
    if feedback.trim().is_empty() {
        return Err(PipelineError::EmptyFeedback);
    }
    let mut vars = BTreeMap::new();
    vars.insert("original_rules", original_rules.trim_end_matches('\n').to_string());
    vars.insert("feedback", feedback.trim_end_matches('\n').to_string());
    vars.insert("current_code", current_code.trim_end_matches('\n').to_string());
    Ok(PromptText {
        system_message: prompt::render(&REPAIR.system, &vars)?,
        user_message: prompt::render(&REPAIR.user, &vars)?,
        rules: original_rules.to_string(),
        snippet_manifest: Vec::new(),
        family_prefix: String::new(),
        rules_version: REPAIR.version.clone(),
        warnings: Vec::new(),
    })
}

fn response_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn finish_reason_str(f: FinishReason) -> &'static str {
    match f {
        FinishReason::Stop => "stop",
        FinishReason::Length => "length",
        FinishReason::Error => "error",
    }
}

enum Verdict {
    Syntax(String),
    Contract(ContractReport, String),
    Passed(ContractReport),
}

fn judge(candidate: &CandidateSource, check: &CheckConfig) -> Verdict {
    match contract::check_candidate(candidate, check) {
        Err(contract::ContractError::Unparsed(f)) => Verdict::Syntax(contract::explain_syntax(&f)),
        Err(contract::ContractError::CleanReport) => unreachable!("check never reports CleanReport"),
        Ok(report) if report.passed => Verdict::Passed(report),
        Ok(report) => {
            let feedback = contract::explain(&report).expect("failed report has violations");
            Verdict::Contract(report, feedback)
        }
    }
}

struct Session<'a> {
    config: &'a PipelineConfig,
    gateway: &'a dyn Completer,
    run_id: &'a str,
    calls: u32,
    exchanges: Vec<ExchangeRecord>,
}

impl Session<'_> {
    fn complete(&mut self, prompt: &PromptText, temperature: f64) -> Result<ChatResponse, String> {
        let request = ChatRequest {
            system_message: prompt.system_message.clone(),
            user_message: prompt.user_message.clone(),
            temperature,
            max_tokens: self.config.max_tokens,
            model_name: self.config.model_name.clone(),
        };
        self.calls += 1;
        let response = self.gateway.complete(&request).map_err(|e| e.to_string())?;
        self.exchanges.push(ExchangeRecord {
            run_id: self.run_id.to_string(),
            prompt_hash: prompt.hash(),
            system_message: request.system_message,
            user_message: request.user_message,
            temperature,
            raw_text: response.raw_text.clone(),
            finish_reason: finish_reason_str(response.finish_reason).into(),
            latency_ms: response.latency_ms,
            created_at: now_millis(),
        });
        Ok(response)
    }
}

/// Runs one attempt without touching the store.
pub fn execute_attempt(
    config: &PipelineConfig,
    spec: &PromptSpec,
    gateway: &dyn Completer,
    smoke: Option<&SmokeRunner>,
    run_id: &str,
) -> Result<AttemptOutcome, PipelineError> {
    let started_at = now_millis();
    let prompt = prompt::assemble_prompt(spec)?;
    let mut session = Session {
        config,
        gateway,
        run_id,
        calls: 0,
        exchanges: Vec::new(),
    };
    let mut outcome = AttemptOutcome {
        status: Status::SyntaxFail,
        prompt: prompt.clone(),
        raw_output: String::new(),
        final_source: None,
        contract_report: None,
        smoke_report: None,
        repair_transcript: Vec::new(),
        decoder_type: DecoderType::Unknown,
        detail: String::new(),
        gateway_calls: 0,
        exchanges: Vec::new(),
        started_at,
        finished_at: started_at,
    };

    let first = session.complete(&prompt, config.temperature);
    let mut raw = match first {
        Ok(r) => r.raw_text,
        Err(e) => {
            outcome.detail = format!("{GEN_FAIL}: {e}");
            return Ok(finish(outcome, session));
        }
    };
    outcome.raw_output = raw.clone();

    let sanitize_cfg = config.sanitize_config();
    let check_cfg = config.check_config();
    let report = loop {
        let candidate = recovery::sanitize_with(&raw, &sanitize_cfg);
        outcome.final_source = Some(candidate.text.clone());
        let (status, feedback) = match judge(&candidate, &check_cfg) {
            Verdict::Passed(report) => break report,
            Verdict::Syntax(feedback) => {
                outcome.contract_report = None;
                outcome.decoder_type = DecoderType::Unknown;
                (Status::SyntaxFail, feedback)
            }
            Verdict::Contract(report, feedback) => {
                outcome.decoder_type = report.decoder_type;
                outcome.contract_report = Some(report);
                (Status::ContractFail, feedback)
            }
        };
        outcome.status = status;
        outcome.detail = feedback.clone();
        if outcome.repair_count() >= config.repair_limit {
            return Ok(finish(outcome, session));
        }
        let repair = build_repair_prompt(&prompt.rules, &candidate.text, &feedback)?;
        match session.complete(&repair, config.repair_temperature) {
            Ok(response) => {
                outcome.repair_transcript.push(RepairStep {
                    feedback,
                    response_hash: response_hash(&response.raw_text),
                });
                raw = response.raw_text;
            }
            Err(e) => {
                outcome.detail = format!("{GEN_FAIL} during repair: {e}");
                return Ok(finish(outcome, session));
            }
        }
    };

    outcome.decoder_type = report.decoder_type;
    outcome.contract_report = Some(report);
    outcome.detail = String::new();
    outcome.status = match smoke.filter(|_| config.smoke_enabled) {
        None => Status::Valid,
        Some(runner) => {
            let mut request = SmokeRequest::new(outcome.final_source.clone().unwrap_or_default());
            request.seed = spec.seed;
            request.prm.insert("lr".into(), config.training.learning_rate);
            let report = runner.smoke_run(&request);
            let status = match report.status {
                SmokeStatus::Pass => Status::Success,
                SmokeStatus::Diverged => Status::Diverged,
                _ => Status::RuntimeFail,
            };
            if status != Status::Success {
                outcome.detail = format!("{:?}: {}", report.status, report.message);
            }
            outcome.smoke_report = Some(report);
            status
        }
    };
    Ok(finish(outcome, session))
}

fn finish(mut outcome: AttemptOutcome, session: Session<'_>) -> AttemptOutcome {
    outcome.gateway_calls = session.calls;
    outcome.exchanges = session.exchanges;
    outcome.finished_at = now_millis();
    outcome
}

/// Writes an outcome (and its exchanges and smoke metric) to the store.
pub fn record_outcome(
    store: &mut Store,
    run_id: &str,
    round: u32,
    spec: &PromptSpec,
    outcome: &AttemptOutcome,
) -> Result<String, PipelineError> {
    for x in &outcome.exchanges {
        store.log_exchange(x)?;
    }
    let record = AttemptRecord {
        attempt_id: None,
        run_id: run_id.to_string(),
        round,
        family_prefix: outcome.prompt.family_prefix.clone(),
        snippet_count: spec.snippet_count as u32,
        snippet_ids: outcome.prompt.snippet_manifest.clone(),
        seed: spec.seed,
        prompt_hash: outcome.prompt.hash(),
        raw_output: outcome.raw_output.clone(),
        final_source: outcome.final_source.clone(),
        repair_count: outcome.repair_count(),
        repair_transcript: outcome.repair_transcript.clone(),
        status: outcome.status,
        decoder_type: outcome.decoder_type,
        detail: outcome.detail.clone(),
        contract_report: outcome
            .contract_report
            .as_ref()
            .map(|r| serde_json::to_string(r).expect("report serializes")),
        smoke_report: outcome.smoke_report.as_ref().map(SmokeReport::to_json),
        created_at: outcome.started_at,
        finished_at: outcome.finished_at,
    };
    let id = store.record_attempt(&record)?;
    if let Some(smoke) = &outcome.smoke_report {
        let loss = match smoke.status {
            SmokeStatus::Pass => smoke.losses.last().copied(),
            SmokeStatus::Diverged => None,
            _ => return Ok(id),
        };
        if store.metrics(&id)?.is_empty() && (loss.is_some() || outcome.status == Status::Diverged) {
            store.record_metric(&MetricRecord {
                attempt_id: id.clone(),
                epoch: 0,
                loss,
                bleu4: None,
            })?;
        }
    }
    Ok(id)
}

/// Executes and records one attempt.
pub fn run_attempt(
    config: &PipelineConfig,
    spec: &PromptSpec,
    gateway: &dyn Completer,
    smoke: Option<&SmokeRunner>,
    store: &mut Store,
    run_id: &str,
    round: u32,
) -> Result<(String, AttemptOutcome), PipelineError> {
    let outcome = execute_attempt(config, spec, gateway, smoke, run_id)?;
    let id = record_outcome(store, run_id, round, spec, &outcome)?;
    Ok((id, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub round: u32,
    pub attempt_id: String,
    pub family_prefix: String,
    pub status: Status,
    pub decoder_type: DecoderType,
    pub repair_count: u32,
    pub gateway_calls: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub run_id: String,
    pub family_prefix: String,
    pub rounds: u32,
    pub success_rate: f64,
    pub status_counts: BTreeMap<Status, usize>,
    pub attempts: Vec<AttemptSummary>,
}

impl BatchSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Runs `config.rounds` attempts, at most `config.workers` at a time, and
/// records them in round order.
pub fn run_batch(
    config: &PipelineConfig,
    baseline_source: &str,
    pool: &[prompt::SnippetRecord],
    gateway: &dyn Completer,
    smoke: Option<&SmokeRunner>,
    store: &mut Store,
) -> Result<BatchSummary, PipelineError> {
    config.validate()?;
    let run_id = config.run_id(baseline_source, pool);
    config.prompt_spec(baseline_source, pool, 0).validate()?;

    let smoke = match smoke.filter(|_| config.smoke_enabled) {
        Some(runner) => {
            let cap = runner.probe();
            if cap.ok {
                Some(runner)
            } else {
                log::warn!("smoke runner unavailable ({}); smoke runs disabled", cap.message);
                None
            }
        }
        None => None,
    };
    let mut effective = config.clone();
    effective.smoke_enabled = smoke.is_some();

    for s in pool {
        store.upsert_snippet(s)?;
    }
    store.record_run(&RunRecord {
        run_id: run_id.clone(),
        config_json: config.canonical_json(),
        created_at: now_millis(),
    })?;

    let next = AtomicU32::new(0);
    let workers = config.workers.min(config.rounds as usize).max(1);
    let (tx, rx) = mpsc::channel::<(u32, Result<AttemptOutcome, PipelineError>)>();
    let mut attempts = Vec::with_capacity(config.rounds as usize);

    thread::scope(|scope| -> Result<(), PipelineError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let effective = &effective;
            let run_id = run_id.as_str();
            scope.spawn(move || loop {
                let round = next.fetch_add(1, Ordering::SeqCst);
                if round >= effective.rounds {
                    break;
                }
                let spec = effective.prompt_spec(baseline_source, pool, round);
                let result = execute_attempt(effective, &spec, gateway, smoke, run_id);
                if tx.send((round, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<u32, Result<AttemptOutcome, PipelineError>> = BTreeMap::new();
        let mut expected = 0u32;
        for (round, result) in rx {
            pending.insert(round, result);
            while let Some(result) = pending.remove(&expected) {
                let outcome = match result {
                    Ok(o) => o,
                    Err(e) => {
                        next.store(effective.rounds, Ordering::SeqCst);
                        return Err(e);
                    }
                };
                let spec = effective.prompt_spec(baseline_source, pool, expected);
                let id = match record_outcome(store, &run_id, expected, &spec, &outcome) {
                    Ok(id) => id,
                    Err(e) => {
                        next.store(effective.rounds, Ordering::SeqCst);
                        return Err(e);
                    }
                };
                attempts.push(AttemptSummary {
                    round: expected,
                    attempt_id: id,
                    family_prefix: outcome.prompt.family_prefix.clone(),
                    status: outcome.status,
                    decoder_type: outcome.decoder_type,
                    repair_count: outcome.repair_count(),
                    gateway_calls: outcome.gateway_calls,
                });
                expected += 1;
            }
        }
        Ok(())
    })?;

    let mut status_counts: BTreeMap<Status, usize> = Status::ALL.iter().map(|s| (*s, 0)).collect();
    for a in &attempts {
        *status_counts.entry(a.status).or_default() += 1;
    }
    let ok = attempts
        .iter()
        .filter(|a| matches!(a.status, Status::Valid | Status::Success))
        .count();
    Ok(BatchSummary {
        run_id,
        family_prefix: prompt::family_prefix(config.snippet_count, &config.base_name),
        rounds: config.rounds,
        success_rate: ok as f64 / attempts.len().max(1) as f64,
        status_counts,
        attempts,
    })
}
