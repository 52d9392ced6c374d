//! SQLite-backed run registry and the reports built from it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::contract::DecoderType;
use crate::prompt::{SnippetRecord, SnippetRole};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_REPAIRS: u32 = 2;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unwritable path {0}")]
    Unwritable(PathBuf),
    #[error("incompatible schema version {found} (expected {SCHEMA_VERSION})")]
    IncompatibleSchema { found: String },
    #[error("invalid attempt: {0}")]
    InvalidAttempt(String),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("constraint violation: {0}")]
    Conflict(String),
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("run {0} has no attempts")]
    EmptyRun(String),
    #[error("unknown attempt {0}")]
    UnknownAttempt(String),
    #[error("corrupt row: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Sqlite(#[from] rusqlite::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, RegistryError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Valid,
    SyntaxFail,
    ContractFail,
    RuntimeFail,
    Diverged,
    Success,
}

impl Status {
    pub const ALL: [Status; 6] = [
        Status::Valid,
        Status::SyntaxFail,
        Status::ContractFail,
        Status::RuntimeFail,
        Status::Diverged,
        Status::Success,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Valid => "VALID",
            Status::SyntaxFail => "SYNTAX_FAIL",
            Status::ContractFail => "CONTRACT_FAIL",
            Status::RuntimeFail => "RUNTIME_FAIL",
            Status::Diverged => "DIVERGED",
            Status::Success => "SUCCESS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which statuses count as a usable model in rates and summaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessPredicate(pub Vec<Status>);

impl Default for SuccessPredicate {
    fn default() -> Self {
        Self(vec![Status::Valid, Status::Success])
    }
}

impl SuccessPredicate {
    pub fn accepts(&self, status: Status) -> bool {
        self.0.contains(&status)
    }
}

pub fn now_millis() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or(Duration::ZERO).as_millis() as i64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairStep {
    pub feedback: String,
    pub response_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    /// Derived from (run_id, prompt_hash, raw_output) when absent.
    pub attempt_id: Option<String>,
    pub run_id: String,
    pub round: u32,
    pub family_prefix: String,
    pub snippet_count: u32,
    pub snippet_ids: Vec<String>,
    pub seed: u64,
    pub prompt_hash: String,
    pub raw_output: String,
    pub final_source: Option<String>,
    pub repair_count: u32,
    pub repair_transcript: Vec<RepairStep>,
    pub status: Status,
    pub decoder_type: DecoderType,
    pub detail: String,
    /// Contract report JSON, when a check ran.
    pub contract_report: Option<String>,
    /// Smoke report JSON, when a smoke run happened.
    pub smoke_report: Option<String>,
    pub created_at: i64,
    pub finished_at: i64,
}

impl AttemptRecord {
    pub fn new(
        run_id: impl Into<String>,
        family_prefix: impl Into<String>,
        prompt_hash: impl Into<String>,
        raw_output: impl Into<String>,
    ) -> Self {
        let now = now_millis();
        Self {
            attempt_id: None,
            run_id: run_id.into(),
            round: 0,
            family_prefix: family_prefix.into(),
            snippet_count: 1,
            snippet_ids: Vec::new(),
            seed: 0,
            prompt_hash: prompt_hash.into(),
            raw_output: raw_output.into(),
            final_source: None,
            repair_count: 0,
            repair_transcript: Vec::new(),
            status: Status::SyntaxFail,
            decoder_type: DecoderType::Unknown,
            detail: String::new(),
            contract_report: None,
            smoke_report: None,
            created_at: now,
            finished_at: now,
        }
    }

    pub fn derived_id(&self) -> String {
        derive_attempt_id(&self.run_id, &self.prompt_hash, &self.raw_output)
    }

    fn id(&self) -> String {
        self.attempt_id.clone().unwrap_or_else(|| self.derived_id())
    }

    fn same_payload(&self, other: &AttemptRecord) -> bool {
        let strip = |a: &AttemptRecord| {
            let mut a = a.clone();
            a.attempt_id = None;
            a.created_at = 0;
            a.finished_at = 0;
            a
        };
        strip(self) == strip(other)
    }
}

pub fn derive_attempt_id(run_id: &str, prompt_hash: &str, raw_output: &str) -> String {
    let mut h = Sha256::new();
    for part in [run_id, prompt_hash, raw_output] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    format!("att-{}", &hex::encode(h.finalize())[..16])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub attempt_id: String,
    /// 0 is the smoke run.
    pub epoch: u32,
    /// `None` flags a non-finite loss.
    pub loss: Option<f64>,
    pub bleu4: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config_json: String,
    pub created_at: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub run_id: String,
    pub prompt_hash: String,
    pub system_message: String,
    pub user_message: String,
    pub temperature: f64,
    pub raw_text: String,
    pub finish_reason: String,
    pub latency_ms: u64,
    pub created_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub family_prefix: String,
    pub decoder_type: DecoderType,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub rows: Vec<FamilyRow>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub family_prefix: String,
    pub best_bleu4: Option<f64>,
}

/// Splits `C{n}C-{base}` into `(base, n)`; anything else sorts as `(prefix, 0)`.
pub fn parse_family_prefix(prefix: &str) -> (String, u32) {
    let parsed = prefix
        .strip_prefix('C')
        .and_then(|rest| rest.split_once("C-"))
        .and_then(|(n, base)| n.parse::<u32>().ok().map(|n| (base.to_string(), n)));
    parsed.unwrap_or_else(|| (prefix.to_string(), 0))
}

fn family_order(prefix: &str) -> (String, u32, String) {
    let (base, n) = parse_family_prefix(prefix);
    (base.to_lowercase(), n, prefix.to_string())
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS snippets (
    snippet_id  TEXT PRIMARY KEY,
    family      TEXT NOT NULL CHECK (family <> ''),
    source_text TEXT NOT NULL CHECK (source_text <> ''),
    role        TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS runs (
    run_id      TEXT PRIMARY KEY,
    config_json TEXT NOT NULL,
    created_at  INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS attempts (
    attempt_id      TEXT PRIMARY KEY,
    run_id          TEXT NOT NULL REFERENCES runs(run_id),
    round           INTEGER NOT NULL,
    family_prefix   TEXT NOT NULL,
    snippet_count   INTEGER NOT NULL CHECK (snippet_count >= 1),
    snippet_ids     TEXT NOT NULL,
    seed            TEXT NOT NULL,
    prompt_hash     TEXT NOT NULL,
    raw_output      TEXT NOT NULL,
    final_source    TEXT,
    repair_count    INTEGER NOT NULL,
    status          TEXT NOT NULL,
    decoder_type    TEXT NOT NULL,
    detail          TEXT NOT NULL,
    contract_report TEXT,
    smoke_report    TEXT,
    created_at      INTEGER NOT NULL,
    finished_at     INTEGER NOT NULL,
    UNIQUE (run_id, prompt_hash, raw_output)
);
CREATE INDEX IF NOT EXISTS attempts_by_prefix ON attempts(family_prefix);
CREATE TABLE IF NOT EXISTS repairs (
    attempt_id    TEXT NOT NULL REFERENCES attempts(attempt_id),
    iteration     INTEGER NOT NULL,
    feedback      TEXT NOT NULL,
    response_hash TEXT NOT NULL,
    PRIMARY KEY (attempt_id, iteration)
);
CREATE TABLE IF NOT EXISTS metrics (
    metric_id  INTEGER PRIMARY KEY AUTOINCREMENT,
    attempt_id TEXT NOT NULL REFERENCES attempts(attempt_id),
    epoch      INTEGER NOT NULL CHECK (epoch >= 0),
    loss       REAL,
    bleu4      REAL CHECK (bleu4 IS NULL OR (bleu4 >= 0.0 AND bleu4 <= 1.0))
);
CREATE TABLE IF NOT EXISTS exchanges (
    run_id         TEXT NOT NULL REFERENCES runs(run_id),
    prompt_hash    TEXT NOT NULL,
    system_message TEXT NOT NULL,
    user_message   TEXT NOT NULL,
    temperature    REAL NOT NULL,
    raw_text       TEXT NOT NULL,
    finish_reason  TEXT NOT NULL,
    latency_ms     INTEGER NOT NULL,
    created_at     INTEGER NOT NULL,
    PRIMARY KEY (run_id, prompt_hash)
);
";

pub struct Store {
    conn: Connection,
    path: PathBuf,
    max_repairs: u32,
}

fn writable(path: &Path) -> bool {
    let Ok(meta) = fs::metadata(path) else { return false };
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        // A file with no write bit counts as read-only even for root.
        meta.permissions().mode() & 0o222 != 0
    }
    #[cfg(not(unix))]
    {
        !meta.permissions().readonly()
    }
}

fn check_writable(path: &Path) -> Result<()> {
    if path.exists() {
        if writable(path) {
            return Ok(());
        }
        return Err(RegistryError::Unwritable(path.to_path_buf()));
    }
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if parent.is_dir() && writable(&parent) {
        Ok(())
    } else {
        Err(RegistryError::Unwritable(path.to_path_buf()))
    }
}

fn corrupt(what: impl Into<String>) -> RegistryError {
    RegistryError::Corrupt(what.into())
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        check_writable(path)?;
        let conn = Connection::open(path)?;
        Self::init(conn, path.to_path_buf())
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?, PathBuf::from(":memory:"))
    }

    fn init(conn: Connection, path: PathBuf) -> Result<Self> {
        conn.busy_timeout(Duration::from_secs(10))?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        if path.as_os_str() != ":memory:" {
            let _: String = conn.query_row("PRAGMA journal_mode = WAL", [], |r| r.get(0))?;
        }

        let has_meta: bool = conn.query_row(
            "SELECT COUNT(*) FROM sqlite_master WHERE type = 'table' AND name = 'meta'",
            [],
            |r| r.get::<_, i64>(0).map(|n| n > 0),
        )?;
        if has_meta {
            let found: Option<String> = conn
                .query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))
                .optional()?;
            match found {
                Some(v) if v == SCHEMA_VERSION.to_string() => {}
                other => {
                    return Err(RegistryError::IncompatibleSchema {
                        found: other.unwrap_or_else(|| "none".into()),
                    })
                }
            }
        } else {
            let tables: i64 = conn.query_row(
                "SELECT COUNT(*) FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%'",
                [],
                |r| r.get(0),
            )?;
            if tables > 0 {
                return Err(RegistryError::IncompatibleSchema { found: "none".into() });
            }
        }
        conn.execute_batch(SCHEMA)?;
        conn.execute(
            "INSERT OR IGNORE INTO meta (key, value) VALUES ('schema_version', ?1)",
            params![SCHEMA_VERSION.to_string()],
        )?;
        Ok(Self {
            conn,
            path,
            max_repairs: DEFAULT_MAX_REPAIRS,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn max_repairs(&self) -> u32 {
        self.max_repairs
    }

    pub fn set_max_repairs(&mut self, max: u32) {
        self.max_repairs = max;
    }

    // -- snippets ----------------------------------------------------------

    pub fn upsert_snippet(&self, snippet: &SnippetRecord) -> Result<()> {
        snippet.validate().map_err(|e| RegistryError::InvalidAttempt(e.to_string()))?;
        let existing = self
            .conn
            .query_row(
                "SELECT family, source_text, role FROM snippets WHERE snippet_id = ?1",
                params![snippet.snippet_id],
                |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?)),
            )
            .optional()?;
        match existing {
            None => {
                self.conn.execute(
                    "INSERT INTO snippets (snippet_id, family, source_text, role) VALUES (?1, ?2, ?3, ?4)",
                    params![snippet.snippet_id, snippet.family, snippet.source_text, snippet.role.as_str()],
                )?;
                Ok(())
            }
            Some((family, source, role)) if family == snippet.family && source == snippet.source_text && role == snippet.role.as_str() => {
                Ok(())
            }
            Some(_) => Err(RegistryError::Conflict(format!(
                "snippet {} already stored with different content",
                snippet.snippet_id
            ))),
        }
    }

    pub fn snippets(&self) -> Result<Vec<SnippetRecord>> {
        let mut stmt = self
            .conn
            .prepare("SELECT snippet_id, family, source_text, role FROM snippets ORDER BY snippet_id")?;
        let rows = stmt.query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, String>(3)?,
            ))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (snippet_id, family, source_text, role) = row?;
            let role = SnippetRole::parse(&role).ok_or_else(|| corrupt(format!("snippet role {role}")))?;
            out.push(SnippetRecord {
                snippet_id,
                family,
                source_text,
                role,
            });
        }
        Ok(out)
    }

    // -- runs --------------------------------------------------------------

    /// Stores a run; re-recording with the same configuration is a no-op.
    pub fn record_run(&self, run: &RunRecord) -> Result<()> {
        let existing: Option<String> = self
            .conn
            .query_row("SELECT config_json FROM runs WHERE run_id = ?1", params![run.run_id], |r| r.get(0))
            .optional()?;
        match existing {
            None => {
                self.conn.execute(
                    "INSERT INTO runs (run_id, config_json, created_at) VALUES (?1, ?2, ?3)",
                    params![run.run_id, run.config_json, run.created_at],
                )?;
                Ok(())
            }
            Some(cfg) if cfg == run.config_json => Ok(()),
            Some(_) => Err(RegistryError::Conflict(format!(
                "run {} already stored with a different configuration",
                run.run_id
            ))),
        }
    }

    pub fn get_run(&self, run_id: &str) -> Result<Option<RunRecord>> {
        Ok(self
            .conn
            .query_row(
                "SELECT run_id, config_json, created_at FROM runs WHERE run_id = ?1",
                params![run_id],
                |r| {
                    Ok(RunRecord {
                        run_id: r.get(0)?,
                        config_json: r.get(1)?,
                        created_at: r.get(2)?,
                    })
                },
            )
            .optional()?)
    }

    pub fn runs(&self) -> Result<Vec<RunRecord>> {
        let mut stmt = self
            .conn
            .prepare("SELECT run_id, config_json, created_at FROM runs ORDER BY created_at, run_id")?;
        let rows = stmt.query_map([], |r| {
            Ok(RunRecord {
                run_id: r.get(0)?,
                config_json: r.get(1)?,
                created_at: r.get(2)?,
            })
        })?;
        Ok(rows.collect::<std::result::Result<_, _>>()?)
    }

    // -- attempts ----------------------------------------------------------

    fn validate_attempt(&self, a: &AttemptRecord) -> Result<()> {
        let bad = |msg: String| Err(RegistryError::InvalidAttempt(msg));
        if a.repair_count > self.max_repairs {
            return bad(format!("repair_count {} exceeds maximum {}", a.repair_count, self.max_repairs));
        }
        if a.repair_transcript.len() > self.max_repairs as usize {
            return bad(format!(
                "{} repair steps exceed maximum {}",
                a.repair_transcript.len(),
                self.max_repairs
            ));
        }
        if a.status == Status::Success && a.final_source.is_none() {
            return bad("status SUCCESS requires final_source".into());
        }
        if a.snippet_count == 0 {
            return bad("snippet_count must be at least 1".into());
        }
        if a.family_prefix.is_empty() || a.run_id.is_empty() || a.prompt_hash.is_empty() {
            return bad("run_id, family_prefix and prompt_hash must be non-empty".into());
        }
        if matches!(&a.attempt_id, Some(id) if id.is_empty()) {
            return bad("attempt_id must be non-empty when given".into());
        }
        Ok(())
    }

    /// Stores an attempt and returns its id. Recording the same
    /// (run_id, prompt_hash, raw_output) again returns the existing id.
    pub fn record_attempt(&mut self, attempt: &AttemptRecord) -> Result<String> {
        self.validate_attempt(attempt)?;
        let existing: Option<String> = self
            .conn
            .query_row(
                "SELECT attempt_id FROM attempts WHERE run_id = ?1 AND prompt_hash = ?2 AND raw_output = ?3",
                params![attempt.run_id, attempt.prompt_hash, attempt.raw_output],
                |r| r.get(0),
            )
            .optional()?;
        if let Some(id) = existing {
            return Ok(id);
        }
        let id = attempt.id();
        if let Some(stored) = self.get_attempt(&id)? {
            if stored.same_payload(attempt) {
                return Ok(id);
            }
            return Err(RegistryError::Conflict(format!(
                "attempt {id} already stored with a different payload"
            )));
        }
        if self.get_run(&attempt.run_id)?.is_none() {
            return Err(RegistryError::UnknownRun(attempt.run_id.clone()));
        }

        let tx = self.conn.transaction()?;
        tx.execute(
            "INSERT INTO attempts (attempt_id, run_id, round, family_prefix, snippet_count, snippet_ids, seed,
                prompt_hash, raw_output, final_source, repair_count, status, decoder_type, detail,
                contract_report, smoke_report, created_at, finished_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16, ?17, ?18)",
            params![
                id,
                attempt.run_id,
                attempt.round,
                attempt.family_prefix,
                attempt.snippet_count,
                serde_json::to_string(&attempt.snippet_ids).expect("string list serializes"),
                attempt.seed.to_string(),
                attempt.prompt_hash,
                attempt.raw_output,
                attempt.final_source,
                attempt.repair_count,
                attempt.status.as_str(),
                attempt.decoder_type.as_str(),
                attempt.detail,
                attempt.contract_report,
                attempt.smoke_report,
                attempt.created_at,
                attempt.finished_at,
            ],
        )?;
        for (i, step) in attempt.repair_transcript.iter().enumerate() {
            tx.execute(
                "INSERT INTO repairs (attempt_id, iteration, feedback, response_hash) VALUES (?1, ?2, ?3, ?4)",
                params![id, i as i64 + 1, step.feedback, step.response_hash],
            )?;
        }
        tx.commit()?;
        Ok(id)
    }

    fn read_attempt(&self, row: &Row<'_>) -> rusqlite::Result<(AttemptRecord, String, String, String, String)> {
        let record = AttemptRecord {
            attempt_id: Some(row.get(0)?),
            run_id: row.get(1)?,
            round: row.get(2)?,
            family_prefix: row.get(3)?,
            snippet_count: row.get(4)?,
            snippet_ids: Vec::new(),
            seed: 0,
            prompt_hash: row.get(7)?,
            raw_output: row.get(8)?,
            final_source: row.get(9)?,
            repair_count: row.get(10)?,
            repair_transcript: Vec::new(),
            status: Status::SyntaxFail,
            decoder_type: DecoderType::Unknown,
            detail: row.get(13)?,
            contract_report: row.get(14)?,
            smoke_report: row.get(15)?,
            created_at: row.get(16)?,
            finished_at: row.get(17)?,
        };
        Ok((record, row.get(5)?, row.get(6)?, row.get(11)?, row.get(12)?))
    }

    fn finish_attempt(&self, raw: (AttemptRecord, String, String, String, String)) -> Result<AttemptRecord> {
        let (mut a, ids, seed, status, decoder) = raw;
        a.snippet_ids = serde_json::from_str(&ids).map_err(|e| corrupt(format!("snippet_ids: {e}")))?;
        a.seed = seed.parse().map_err(|_| corrupt(format!("seed {seed}")))?;
        a.status = Status::parse(&status).ok_or_else(|| corrupt(format!("status {status}")))?;
        a.decoder_type = DecoderType::parse(&decoder).ok_or_else(|| corrupt(format!("decoder_type {decoder}")))?;
        let id = a.attempt_id.clone().unwrap_or_default();
        let mut stmt = self
            .conn
            .prepare_cached("SELECT feedback, response_hash FROM repairs WHERE attempt_id = ?1 ORDER BY iteration")?;
        let steps = stmt.query_map(params![id], |r| {
            Ok(RepairStep {
                feedback: r.get(0)?,
                response_hash: r.get(1)?,
            })
        })?;
        a.repair_transcript = steps.collect::<std::result::Result<_, _>>()?;
        Ok(a)
    }

    const ATTEMPT_COLUMNS: &'static str = "attempt_id, run_id, round, family_prefix, snippet_count, snippet_ids, seed,
        prompt_hash, raw_output, final_source, repair_count, status, decoder_type, detail,
        contract_report, smoke_report, created_at, finished_at";

    pub fn get_attempt(&self, attempt_id: &str) -> Result<Option<AttemptRecord>> {
        let sql = format!("SELECT {} FROM attempts WHERE attempt_id = ?1", Self::ATTEMPT_COLUMNS);
        let raw = self
            .conn
            .query_row(&sql, params![attempt_id], |r| self.read_attempt(r))
            .optional()?;
        raw.map(|r| self.finish_attempt(r)).transpose()
    }

    fn query_attempts(&self, filter: &str, args: &[&dyn rusqlite::ToSql]) -> Result<Vec<AttemptRecord>> {
        let sql = format!(
            "SELECT {} FROM attempts {filter} ORDER BY run_id, round, rowid",
            Self::ATTEMPT_COLUMNS
        );
        let mut stmt = self.conn.prepare(&sql)?;
        let raws = stmt
            .query_map(args, |r| self.read_attempt(r))?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        raws.into_iter().map(|r| self.finish_attempt(r)).collect()
    }

    /// Attempts of one run in round order.
    pub fn attempts(&self, run_id: &str) -> Result<Vec<AttemptRecord>> {
        self.query_attempts("WHERE run_id = ?1", &[&run_id])
    }

    pub fn all_attempts(&self) -> Result<Vec<AttemptRecord>> {
        self.query_attempts("", &[])
    }

    pub fn attempt_count(&self) -> Result<usize> {
        let n: i64 = self.conn.query_row("SELECT COUNT(*) FROM attempts", [], |r| r.get(0))?;
        Ok(n as usize)
    }

    // -- metrics -----------------------------------------------------------

    pub fn record_metric(&self, metric: &MetricRecord) -> Result<()> {
        let attempt = self
            .get_attempt(&metric.attempt_id)?
            .ok_or_else(|| RegistryError::UnknownAttempt(metric.attempt_id.clone()))?;
        if let Some(b) = metric.bleu4 {
            if !(0.0..=1.0).contains(&b) {
                return Err(RegistryError::InvalidMetric(format!("bleu4 {b} outside [0, 1]")));
            }
        }
        if let Some(l) = metric.loss {
            if !l.is_finite() {
                return Err(RegistryError::InvalidMetric(
                    "non-finite loss must be stored as the NaN flag".into(),
                ));
            }
        } else if attempt.status != Status::Diverged {
            return Err(RegistryError::InvalidMetric(format!(
                "NaN loss on attempt {} whose status is {}",
                attempt.id(),
                attempt.status
            )));
        }
        self.conn.execute(
            "INSERT INTO metrics (attempt_id, epoch, loss, bleu4) VALUES (?1, ?2, ?3, ?4)",
            params![metric.attempt_id, metric.epoch, metric.loss, metric.bleu4],
        )?;
        Ok(())
    }

    pub fn metrics(&self, attempt_id: &str) -> Result<Vec<MetricRecord>> {
        let mut stmt = self
            .conn
            .prepare("SELECT attempt_id, epoch, loss, bleu4 FROM metrics WHERE attempt_id = ?1 ORDER BY metric_id")?;
        let rows = stmt.query_map(params![attempt_id], |r| {
            Ok(MetricRecord {
                attempt_id: r.get(0)?,
                epoch: r.get(1)?,
                loss: r.get(2)?,
                bleu4: r.get(3)?,
            })
        })?;
        Ok(rows.collect::<std::result::Result<_, _>>()?)
    }

    // -- exchanges ---------------------------------------------------------

    /// Logs a request/response pair; a repeated (run, prompt) pair is kept once.
    pub fn log_exchange(&self, x: &ExchangeRecord) -> Result<()> {
        self.conn.execute(
            "INSERT OR IGNORE INTO exchanges (run_id, prompt_hash, system_message, user_message, temperature,
                raw_text, finish_reason, latency_ms, created_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
            params![
                x.run_id,
                x.prompt_hash,
                x.system_message,
                x.user_message,
                x.temperature,
                x.raw_text,
                x.finish_reason,
                x.latency_ms as i64,
                x.created_at
            ],
        )?;
        Ok(())
    }

    pub fn exchange_count(&self, run_id: &str) -> Result<usize> {
        let n: i64 = self
            .conn
            .query_row("SELECT COUNT(*) FROM exchanges WHERE run_id = ?1", params![run_id], |r| r.get(0))?;
        Ok(n as usize)
    }

    // -- reports -----------------------------------------------------------

    fn statuses(&self, run_id: &str) -> Result<Vec<Status>> {
        if self.get_run(run_id)?.is_none() {
            return Err(RegistryError::UnknownRun(run_id.to_string()));
        }
        let mut stmt = self.conn.prepare("SELECT status FROM attempts WHERE run_id = ?1")?;
        let rows = stmt.query_map(params![run_id], |r| r.get::<_, String>(0))?;
        let mut out = Vec::new();
        for s in rows {
            let s = s?;
            out.push(Status::parse(&s).ok_or_else(|| corrupt(format!("status {s}")))?);
        }
        Ok(out)
    }

    pub fn success_rate(&self, run_id: &str) -> Result<f64> {
        self.success_rate_with(run_id, &SuccessPredicate::default())
    }

    pub fn success_rate_with(&self, run_id: &str, predicate: &SuccessPredicate) -> Result<f64> {
        let statuses = self.statuses(run_id)?;
        if statuses.is_empty() {
            return Err(RegistryError::EmptyRun(run_id.to_string()));
        }
        let ok = statuses.iter().filter(|s| predicate.accepts(**s)).count();
        Ok(ok as f64 / statuses.len() as f64)
    }

    /// Attempts per status for one run; every status is present.
    pub fn status_counts(&self, run_id: &str) -> Result<BTreeMap<Status, usize>> {
        let mut counts: BTreeMap<Status, usize> = Status::ALL.iter().map(|s| (*s, 0)).collect();
        for s in self.statuses(run_id)? {
            *counts.entry(s).or_default() += 1;
        }
        Ok(counts)
    }

    pub fn family_summary(&self) -> Result<FamilySummary> {
        self.family_summary_with(&SuccessPredicate::default())
    }

    /// One row per family prefix, counting attempts the predicate accepts.
    /// The decoder type is the most common one among counted attempts, ties
    /// going to the type recorded first.
    pub fn family_summary_with(&self, predicate: &SuccessPredicate) -> Result<FamilySummary> {
        let mut stmt = self
            .conn
            .prepare("SELECT family_prefix, status, decoder_type FROM attempts ORDER BY rowid")?;
        let rows = stmt.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?)))?;

        struct Acc {
            count: usize,
            decoders: Vec<(DecoderType, usize)>,
        }
        let mut by_prefix: HashMap<String, Acc> = HashMap::new();
        for row in rows {
            let (prefix, status, decoder) = row?;
            let status = Status::parse(&status).ok_or_else(|| corrupt(format!("status {status}")))?;
            let decoder = DecoderType::parse(&decoder).ok_or_else(|| corrupt(format!("decoder_type {decoder}")))?;
            let acc = by_prefix.entry(prefix).or_insert(Acc {
                count: 0,
                decoders: Vec::new(),
            });
            if predicate.accepts(status) {
                acc.count += 1;
                match acc.decoders.iter_mut().find(|(d, _)| *d == decoder) {
                    Some((_, n)) => *n += 1,
                    None => acc.decoders.push((decoder, 1)),
                }
            }
        }

        let mut rows: Vec<FamilyRow> = by_prefix
            .into_iter()
            .map(|(family_prefix, acc)| {
                let mut best: Option<(DecoderType, usize)> = None;
                for &(d, n) in &acc.decoders {
                    if best.is_none_or(|(_, m)| n > m) {
                        best = Some((d, n));
                    }
                }
                FamilyRow {
                    family_prefix,
                    decoder_type: best.map_or(DecoderType::Unknown, |(d, _)| d),
                    count: acc.count,
                }
            })
            .collect();
        rows.sort_by_key(|r| family_order(&r.family_prefix));
        let total = rows.iter().map(|r| r.count).sum();
        Ok(FamilySummary { rows, total })
    }

    /// Best BLEU-4 per family prefix over all recorded metrics.
    pub fn metrics_summary(&self) -> Result<Vec<MetricsRow>> {
        let mut stmt = self.conn.prepare(
            "SELECT a.family_prefix, MAX(m.bleu4)
             FROM attempts a LEFT JOIN metrics m ON m.attempt_id = a.attempt_id
             GROUP BY a.family_prefix",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok(MetricsRow {
                family_prefix: r.get(0)?,
                best_bleu4: r.get(1)?,
            })
        })?;
        let mut rows: Vec<MetricsRow> = rows.collect::<std::result::Result<_, _>>()?;
        rows.sort_by_key(|r| family_order(&r.family_prefix));
        Ok(rows)
    }

    /// Every table as JSON lines in key order, without timestamps or
    /// latencies, for comparing stores produced by identical runs.
    pub fn canonical_dump(&self) -> Result<String> {
        let queries: [(&str, &str); 7] = [
            ("meta", "SELECT key, value FROM meta ORDER BY key"),
            (
                "snippets",
                "SELECT snippet_id, family, source_text, role FROM snippets ORDER BY snippet_id",
            ),
            ("runs", "SELECT run_id, config_json FROM runs ORDER BY run_id"),
            (
                "attempts",
                "SELECT attempt_id, run_id, round, family_prefix, snippet_count, snippet_ids, seed, prompt_hash,
                    raw_output, final_source, repair_count, status, decoder_type, detail, contract_report, smoke_report
                 FROM attempts ORDER BY attempt_id",
            ),
            (
                "repairs",
                "SELECT attempt_id, iteration, feedback, response_hash FROM repairs ORDER BY attempt_id, iteration",
            ),
            (
                "exchanges",
                "SELECT run_id, prompt_hash, system_message, user_message, temperature, raw_text, finish_reason
                 FROM exchanges ORDER BY run_id, prompt_hash",
            ),
            (
                "metrics",
                "SELECT attempt_id, epoch, loss, bleu4 FROM metrics ORDER BY attempt_id, epoch, metric_id",
            ),
        ];
        let mut out = String::new();
        for (table, sql) in queries {
            self.dump_query(&mut out, table, sql)?;
        }
        Ok(out)
    }

    fn dump_query(&self, out: &mut String, table: &str, sql: &str) -> Result<()> {
        use rusqlite::types::ValueRef;
        let mut stmt = self.conn.prepare(sql)?;
        let names: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
        let mut rows = stmt.query([])?;
        while let Some(row) = rows.next()? {
            let mut obj = serde_json::Map::new();
            obj.insert("table".into(), table.into());
            for (i, name) in names.iter().enumerate() {
                let v = match row.get_ref(i)? {
                    ValueRef::Null => serde_json::Value::Null,
                    ValueRef::Integer(n) => n.into(),
                    ValueRef::Real(f) => serde_json::Value::String(format!("{f:?}")),
                    ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned().into(),
                    ValueRef::Blob(b) => hex::encode(b).into(),
                };
                obj.insert(name.clone(), v);
            }
            out.push_str(&serde_json::Value::Object(obj).to_string());
            out.push('\n');
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

impl FamilySummary {
    /// `prefix,decoder_type,count` rows followed by a `TOTAL` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["prefix", "decoder_type", "count"])?;
        for r in &self.rows {
            w.write_record([r.family_prefix.as_str(), r.decoder_type.as_str(), &r.count.to_string()])?;
        }
        w.write_record(["TOTAL", "", &self.total.to_string()])?;
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8"))
    }

    pub fn to_table(&self) -> String {
        let mut rows: Vec<[String; 3]> = self
            .rows
            .iter()
            .map(|r| [r.family_prefix.clone(), r.decoder_type.to_string(), r.count.to_string()])
            .collect();
        rows.push(["TOTAL".into(), String::new(), self.total.to_string()]);
        aligned(&["prefix", "decoder_type", "count"], &rows, &[false, false, true])
    }
}

fn format_bleu(b: Option<f64>) -> String {
    b.map_or_else(String::new, |b| format!("{b:.4}"))
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["prefix", "best_bleu4"])?;
    for r in rows {
        w.write_record([r.family_prefix.as_str(), &format_bleu(r.best_bleu4)])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8"))
}

pub fn metrics_to_table(rows: &[MetricsRow]) -> String {
    let rows: Vec<[String; 2]> = rows.iter().map(|r| [r.family_prefix.clone(), format_bleu(r.best_bleu4)]).collect();
    aligned(&["prefix", "best_bleu4"], &rows, &[false, true])
}

fn aligned<const N: usize>(header: &[&str; N], rows: &[[String; N]], right: &[bool; N]) -> String {
    let mut widths: [usize; N] = header.map(|h| h.chars().count());
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let fmt_row = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if right[i] {
                    format!("{c:>w$}", w = widths[i])
                } else {
                    format!("{c:<w$}", w = widths[i])
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = String::new();
    out.push_str(&fmt_row(header.to_vec()));
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with_run(run: &str) -> Store {
        let s = Store::open_in_memory().unwrap();
        s.record_run(&RunRecord {
            run_id: run.into(),
            config_json: "{}".into(),
            created_at: 0,
        })
        .unwrap();
        s
    }

    fn attempt(run: &str, prefix: &str, raw: &str, status: Status) -> AttemptRecord {
        let mut a = AttemptRecord::new(run, prefix, "h", raw);
        a.status = status;
        if status == Status::Success {
            a.final_source = Some(raw.into());
        }
        a
    }

    #[test]
    fn idempotent_on_triple() {
        let mut s = store_with_run("r");
        let a = attempt("r", "C5C-X", "out", Status::Valid);
        let id1 = s.record_attempt(&a).unwrap();
        let mut again = a.clone();
        again.created_at += 5;
        let id2 = s.record_attempt(&again).unwrap();
        assert_eq!(id1, id2);
        assert_eq!(s.attempt_count().unwrap(), 1);
    }

    #[test]
    fn repair_limit_and_success_source_enforced() {
        let mut s = store_with_run("r");
        let mut a = attempt("r", "C5C-X", "out", Status::Valid);
        a.repair_count = 3;
        assert!(matches!(s.record_attempt(&a), Err(RegistryError::InvalidAttempt(_))));
        let mut b = attempt("r", "C5C-X", "out2", Status::Valid);
        b.status = Status::Success;
        assert!(matches!(s.record_attempt(&b), Err(RegistryError::InvalidAttempt(_))));
    }

    #[test]
    fn conflicting_explicit_id() {
        let mut s = store_with_run("r");
        let mut a = attempt("r", "C5C-X", "one", Status::Valid);
        a.attempt_id = Some("fixed".into());
        s.record_attempt(&a).unwrap();
        let mut b = attempt("r", "C5C-X", "two", Status::Valid);
        b.attempt_id = Some("fixed".into());
        assert!(matches!(s.record_attempt(&b), Err(RegistryError::Conflict(_))));
    }

    #[test]
    fn success_rate_errors() {
        let s = store_with_run("r");
        assert!(matches!(s.success_rate("r"), Err(RegistryError::EmptyRun(_))));
        assert!(matches!(s.success_rate("nope"), Err(RegistryError::UnknownRun(_))));
    }

    #[test]
    fn nan_loss_requires_divergence() {
        let mut s = store_with_run("r");
        let id = s.record_attempt(&attempt("r", "C5C-X", "a", Status::Valid)).unwrap();
        let nan = MetricRecord {
            attempt_id: id.clone(),
            epoch: 0,
            loss: None,
            bleu4: None,
        };
        assert!(s.record_metric(&nan).is_err());
        let did = s.record_attempt(&attempt("r", "C5C-X", "b", Status::Diverged)).unwrap();
        s.record_metric(&MetricRecord { attempt_id: did, ..nan }).unwrap();
        let bad = MetricRecord {
            attempt_id: id,
            epoch: 1,
            loss: Some(1.0),
            bleu4: Some(1.5),
        };
        assert!(s.record_metric(&bad).is_err());
    }

    #[test]
    fn prefix_parsing_and_order() {
        assert_eq!(parse_family_prefix("C10C-RESNETLSTM"), ("RESNETLSTM".into(), 10));
        assert_eq!(parse_family_prefix("weird"), ("weird".into(), 0));
        let mut v = vec!["C10C-RESNETLSTM", "C5C-ResNetTransformer", "C1C-RESNETLSTM", "C5C-RESNETLSTM"];
        v.sort_by_key(|p| family_order(p));
        assert_eq!(v, ["C1C-RESNETLSTM", "C5C-RESNETLSTM", "C10C-RESNETLSTM", "C5C-ResNetTransformer"]);
    }

    #[test]
    fn table_export_is_aligned() {
        let summary = FamilySummary {
            rows: vec![FamilyRow {
                family_prefix: "C5C-RESNETLSTM".into(),
                decoder_type: DecoderType::Lstm,
                count: 100,
            }],
            total: 100,
        };
        let table = summary.to_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "prefix          decoder_type  count");
        assert_eq!(lines[2], "C5C-RESNETLSTM  LSTM            100");
        assert_eq!(
            summary.to_csv().unwrap(),
            "prefix,decoder_type,count\nC5C-RESNETLSTM,LSTM,100\nTOTAL,,100\n"
        );
    }
}
