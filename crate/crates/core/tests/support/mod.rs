#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nncaption_core::gateway::{ChatRequest, ChatResponse, Completer, FinishReason, GatewayError};
use nncaption_core::pipeline::PipelineConfig;
use nncaption_core::prompt::{self, SnippetRecord};

pub const CLEAN: &str = include_str!("../fixtures/contract/pass_gru_minimal.py");
pub const NO_LEARN: &str = include_str!("../fixtures/contract/fail_methods_no_learn.py");

/// Never parses, whatever the fix-up passes do to it.
pub const HOPELESS: &str = "def f(:\n    pass\n";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fenced(code: &str) -> String {
    format!("Here is the model.\n```python\n{code}```\n")
}

/// Hash of the first prompt of each round.
pub fn round_hashes(config: &PipelineConfig, baseline: &str, pool: &[SnippetRecord]) -> Vec<String> {
    (0..config.rounds)
        .map(|r| prompt::assemble_prompt(&config.prompt_spec(baseline, pool, r)).unwrap().hash())
        .collect()
}

type RepairFn = Box<dyn Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync>;

/// Answers first prompts from a table keyed by prompt hash and repair
/// prompts with a closure.
pub struct Scripted {
    initial: HashMap<String, String>,
    repair: RepairFn,
    calls: AtomicUsize,
    pub requests: Mutex<Vec<ChatRequest>>,
}

impl Scripted {
    pub fn new(
        initial: HashMap<String, String>,
        repair: impl Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            initial,
            repair: Box::new(repair),
            calls: AtomicUsize::new(0),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Every request gets the same reply.
    pub fn constant(reply: &str) -> Self {
        let reply = reply.to_string();
        let r2 = reply.clone();
        let mut s = Self::new(HashMap::new(), move |_| Ok(r2.clone()));
        s.initial.insert(String::new(), reply);
        s
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

pub fn is_repair(request: &ChatRequest) -> bool {
    request.user_message.starts_with("## Repair mode")
}

impl Completer for Scripted {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.requests.lock().unwrap().push(request.clone());
        let text = if is_repair(request) {
            (self.repair)(request)?
        } else {
            match self.initial.get(&request.prompt_hash()).or_else(|| self.initial.get("")) {
                Some(t) => t.clone(),
                None => return Err(GatewayError::FixtureMissing(request.prompt_hash())),
            }
        };
        Ok(ChatResponse {
            raw_text: text,
            finish_reason: FinishReason::Stop,
            latency_ms: 1,
        })
    }
}
