//! Parent side of the smoke-run protocol.
//!
//! The runner is an external program. It receives one JSON request on stdin
//! and answers with one JSON report on stdout; stderr is free-form logging.
//! Each call spawns exactly one child, which is killed when it outlives the
//! request's timeout.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

pub const SMOKE_SCHEMA: &str = "nncaption-smoke/1";
const STDERR_TAIL: usize = 2000;

#[derive(Debug, Error)]
pub enum SmokeError {
    #[error("invalid smoke request: {0}")]
    InvalidRequest(String),
    #[error("no smoke runner configured")]
    NoRunner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeRequest {
    pub source_text: String,
    /// (B, C, H, W) of the synthetic image batch.
    pub in_shape: [usize; 4],
    pub vocab_size: usize,
    pub caption_len: usize,
    pub steps: usize,
    pub timeout_s: f64,
    pub prm: BTreeMap<String, f64>,
    pub device: String,
    pub seed: u64,
}

impl SmokeRequest {
    pub fn new(source_text: impl Into<String>) -> Self {
        Self {
            source_text: source_text.into(),
            in_shape: [2, 3, 64, 64],
            vocab_size: 64,
            caption_len: 8,
            steps: 2,
            timeout_s: 120.0,
            prm: BTreeMap::from([("lr".to_string(), 1e-3), ("momentum".to_string(), 0.9)]),
            device: "cpu".into(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SmokeError> {
        let bad = |m: &str| Err(SmokeError::InvalidRequest(m.into()));
        if self.in_shape[0] < 1 {
            return bad("batch size must be at least 1");
        }
        if self.caption_len < 2 {
            return bad("caption length must be at least 2");
        }
        if self.vocab_size < 4 {
            return bad("vocab size must be at least 4");
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad("timeout must be positive");
        }
        Ok(())
    }

    /// `[B, T-1, V]`, the only logits shape a passing run may report.
    pub fn expected_logits_shape(&self) -> Vec<usize> {
        vec![self.in_shape[0], self.caption_len - 1, self.vocab_size]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SmokeStatus {
    Pass,
    ImportFail,
    RuntimeFail,
    ShapeViolation,
    Diverged,
    Timeout,
}

/// Reads a loss list where non-finite values may arrive as `null` or as the
/// strings `"nan"`, `"inf"` and `"-inf"`.
fn lenient_losses<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Loss {
        Num(f64),
        Text(String),
        Null(()),
    }
    let raw: Vec<Loss> = Vec::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|l| match l {
            Loss::Num(x) => x,
            Loss::Text(s) => match s.to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => f64::INFINITY,
                "-inf" | "-infinity" => f64::NEG_INFINITY,
                _ => f64::NAN,
            },
            Loss::Null(()) => f64::NAN,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeReport {
    pub status: SmokeStatus,
    #[serde(default)]
    pub logits_shape: Vec<usize>,
    #[serde(default, deserialize_with = "lenient_losses")]
    pub losses: Vec<f64>,
    #[serde(default)]
    pub message: String,
}

impl SmokeReport {
    fn failure(status: SmokeStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            logits_shape: Vec::new(),
            losses: Vec::new(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("smoke report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capability {
    pub ok: bool,
    #[serde(default)]
    pub runtime_version: String,
    #[serde(default)]
    pub framework_version: Option<String>,
    #[serde(default)]
    pub device: String,
    #[serde(default)]
    pub message: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    kind: &'a str,
    #[serde(flatten)]
    body: T,
}

#[derive(Deserialize)]
struct Reply<T> {
    schema: Option<String>,
    #[serde(flatten)]
    body: T,
}

enum ChildOutcome {
    Exited { code: Option<i32>, stdout: String, stderr: String },
    TimedOut,
    SpawnFailed(String),
}

/// Launches the runner command, e.g. `python3 runner.py`.
#[derive(Debug)]
pub struct SmokeRunner {
    program: PathBuf,
    args: Vec<String>,
    probe_cache: Mutex<Option<Capability>>,
}

impl SmokeRunner {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            probe_cache: Mutex::new(None),
        }
    }

    /// Builds a runner from a command line; the first element is the program.
    pub fn from_command(command: &[String]) -> Result<Self, SmokeError> {
        match command.split_first() {
            Some((program, args)) if !program.is_empty() => Ok(Self::new(program, args.to_vec())),
            _ => Err(SmokeError::NoRunner),
        }
    }

    fn exchange(&self, payload: &str, timeout: Duration) -> ChildOutcome {
        let spawned = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn();
        let mut child = match spawned {
            Ok(c) => c,
            Err(e) => return ChildOutcome::SpawnFailed(format!("{}: {e}", self.program.display())),
        };

        let mut stdin = child.stdin.take().expect("stdin is piped");
        let payload = payload.to_string();
        let writer = thread::spawn(move || {
            // A child that exits without reading closes the pipe; that is
            // reported through its output, not here.
            let _ = stdin.write_all(payload.as_bytes());
            let _ = stdin.write_all(b"\n");
        });
        let mut out = child.stdout.take().expect("stdout is piped");
        let mut err = child.stderr.take().expect("stderr is piped");
        let out_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = out.read_to_end(&mut buf);
            buf
        });
        let err_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = err.read_to_end(&mut buf);
            buf
        });

        let status = match child.wait_timeout(timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return ChildOutcome::TimedOut;
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                return ChildOutcome::SpawnFailed(e.to_string());
            }
        };
        let _ = writer.join();
        let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
        let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
        ChildOutcome::Exited {
            code: status.code(),
            stdout,
            stderr,
        }
    }

    pub fn smoke_run(&self, request: &SmokeRequest) -> SmokeReport {
        if let Err(e) = request.validate() {
            return SmokeReport::failure(SmokeStatus::RuntimeFail, e.to_string());
        }
        let payload = serde_json::to_string(&Envelope {
            schema: SMOKE_SCHEMA,
            kind: "smoke",
            body: request,
        })
        .expect("request serializes");
        let timeout = Duration::from_secs_f64(request.timeout_s);
        let report = match self.exchange(&payload, timeout) {
            ChildOutcome::TimedOut => {
                return SmokeReport::failure(SmokeStatus::Timeout, format!("runner killed after {:.1}s", request.timeout_s))
            }
            ChildOutcome::SpawnFailed(msg) => return SmokeReport::failure(SmokeStatus::RuntimeFail, msg),
            ChildOutcome::Exited { code, stdout, stderr } => match parse_reply::<SmokeReport>(&stdout) {
                Ok(report) => report,
                Err(msg) => {
                    return SmokeReport::failure(SmokeStatus::RuntimeFail, protocol_message(&msg, code, &stderr));
                }
            },
        };
        enforce_pass_contract(request, report)
    }

    /// Asks the runner what it can do; the first answer is reused.
    pub fn probe(&self) -> Capability {
        let mut cache = self.probe_cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(cap) = cache.as_ref() {
            return cap.clone();
        }
        let payload = serde_json::to_string(&Envelope {
            schema: SMOKE_SCHEMA,
            kind: "probe",
            body: serde_json::json!({}),
        })
        .expect("probe serializes");
        let cap = match self.exchange(&payload, Duration::from_secs(60)) {
            ChildOutcome::Exited { code, stdout, stderr } => match parse_reply::<Capability>(&stdout) {
                Ok(cap) => cap,
                Err(msg) => missing(protocol_message(&msg, code, &stderr)),
            },
            ChildOutcome::TimedOut => missing("probe timed out".into()),
            ChildOutcome::SpawnFailed(msg) => missing(msg),
        };
        *cache = Some(cap.clone());
        cap
    }
}

fn missing(message: String) -> Capability {
    Capability {
        ok: false,
        runtime_version: String::new(),
        framework_version: None,
        device: String::new(),
        message,
    }
}

fn protocol_message(msg: &str, code: Option<i32>, stderr: &str) -> String {
    let tail: String = {
        let trimmed = stderr.trim_end();
        let start = trimmed.len().saturating_sub(STDERR_TAIL);
        let start = (start..=trimmed.len()).find(|&i| trimmed.is_char_boundary(i)).unwrap_or(0);
        trimmed[start..].to_string()
    };
    let code = code.map_or_else(|| "signal".to_string(), |c| c.to_string());
    if tail.is_empty() {
        format!("protocol error: {msg} (exit {code})")
    } else {
        format!("protocol error: {msg} (exit {code}); stderr: {tail}")
    }
}

/// The report is the last non-empty stdout line.
fn parse_reply<T: for<'de> Deserialize<'de>>(stdout: &str) -> Result<T, String> {
    let line = stdout
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| "runner wrote no report".to_string())?;
    let reply: Reply<T> = serde_json::from_str(line).map_err(|e| format!("malformed report: {e}"))?;
    match reply.schema.as_deref() {
        Some(SMOKE_SCHEMA) => Ok(reply.body),
        Some(other) => Err(format!("unsupported schema {other:?}")),
        None => Err("report carries no schema".into()),
    }
}

/// A PASS must carry the expected logits shape and only finite losses.
pub fn enforce_pass_contract(request: &SmokeRequest, mut report: SmokeReport) -> SmokeReport {
    if report.status != SmokeStatus::Pass {
        return report;
    }
    let expected = request.expected_logits_shape();
    if report.logits_shape != expected {
        report.status = SmokeStatus::ShapeViolation;
        report.message = format!("logits shape {:?}, expected {:?}", report.logits_shape, expected);
    } else if report.losses.iter().any(|l| !l.is_finite()) {
        report.status = SmokeStatus::Diverged;
        report.message = "non-finite loss".into();
    }
    report
}
