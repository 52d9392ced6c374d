//! Prompt assembly: snippet sampling, template rendering and family naming.
//!
//! Templates are plain UTF-8 files split into `@@`-headed sections
//! (`@@version <tag>`, `@@system`, `@@rules`, `@@user`) with `{{name}}`
//! placeholders. Substitution is single-pass, so placeholder-like text inside
//! inserted source code is never expanded.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::python;

pub const BUILTIN_RULES_VERSION: &str = "nncaption-v1";
const BUILTIN_TEMPLATE: &str = include_str!("../assets/prompt_template.v1.txt");

pub const REFERENCE_BASELINE_LSTM: &str = include_str!("../assets/baseline_resnet_lstm.py");
pub const REFERENCE_BASELINE_TRANSFORMER: &str = include_str!("../assets/baseline_resnet_transformer.py");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("insufficient eligible pool: need {needed}, have {available}")]
    InsufficientPool { needed: usize, available: usize },
    #[error("snippet count must be at least 1")]
    ZeroSnippets,
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("base name must not be empty")]
    EmptyBaseName,
    #[error("baseline source does not parse: {0}")]
    BaselineSyntax(python::SyntaxFailure),
    #[error("unresolved template variable {{{{{0}}}}}")]
    UnresolvedVariable(String),
    #[error("template: {0}")]
    Template(String),
    #[error("unknown rules version {0:?}")]
    UnknownRulesVersion(String),
    #[error("snippet pool: {0}")]
    Pool(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnippetRole {
    EncoderDonor,
    BaselineCaptioner,
}

impl SnippetRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            SnippetRole::EncoderDonor => "encoder-donor",
            SnippetRole::BaselineCaptioner => "baseline-captioner",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "encoder-donor" => Some(SnippetRole::EncoderDonor),
            "baseline-captioner" => Some(SnippetRole::BaselineCaptioner),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetRecord {
    pub snippet_id: String,
    pub family: String,
    pub source_text: String,
    pub role: SnippetRole,
}

impl SnippetRecord {
    pub fn new(id: impl Into<String>, family: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            snippet_id: id.into(),
            family: family.into(),
            source_text: source.into(),
            role: SnippetRole::EncoderDonor,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.snippet_id.is_empty() {
            return Err(PromptError::Pool("snippet id is empty".into()));
        }
        if self.family.is_empty() {
            return Err(PromptError::Pool(format!("snippet {} has an empty family", self.snippet_id)));
        }
        if self.source_text.trim().is_empty() {
            return Err(PromptError::Pool(format!("snippet {} has empty source", self.snippet_id)));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Snippet pool ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct Manifest {
    #[serde(rename = "snippet", default)]
    snippets: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    file: String,
    family: String,
    role: String,
}

pub const POOL_MANIFEST: &str = "manifest.toml";

/// Loads the pool described by `<dir>/manifest.toml`, in manifest order.
pub fn load_pool(dir: &Path) -> Result<Vec<SnippetRecord>, PromptError> {
    let manifest_path = dir.join(POOL_MANIFEST);
    let text = read(&manifest_path)?;
    parse_pool(&text, |file| read(&dir.join(file)))
}

fn read(path: &Path) -> Result<String, PromptError> {
    fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_pool(manifest: &str, mut load: impl FnMut(&str) -> Result<String, PromptError>) -> Result<Vec<SnippetRecord>, PromptError> {
    let manifest: Manifest = toml::from_str(manifest).map_err(|e| PromptError::Pool(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut pool = Vec::with_capacity(manifest.snippets.len());
    for entry in manifest.snippets {
        let role = SnippetRole::parse(&entry.role)
            .ok_or_else(|| PromptError::Pool(format!("snippet {}: unknown role {:?}", entry.id, entry.role)))?;
        if !seen.insert(entry.id.clone()) {
            return Err(PromptError::Pool(format!("duplicate snippet id {}", entry.id)));
        }
        let record = SnippetRecord {
            source_text: load(&entry.file)?,
            snippet_id: entry.id,
            family: entry.family,
            role,
        };
        record.validate()?;
        pool.push(record);
    }
    Ok(pool)
}

macro_rules! bundled {
    ($($file:literal),* $(,)?) => {
        &[$(($file, include_str!(concat!("../assets/pool/", $file)))),*]
    };
}

const BUNDLED_POOL: &[(&str, &str)] = bundled!(
    "resnet.py",
    "efficientnet_b0.py",
    "convnext_t.py",
    "densenet121.py",
    "vgg16.py",
    "vit_b16.py",
    "mobilenet_v2.py",
    "inception_v3.py",
    "squeezenet.py",
    "regnet.py",
    "shufflenet_v2.py",
    "googlenet.py",
    "alexnet.py",
    "mnasnet.py",
    "se_resnext.py",
    "swin_t.py",
);

/// The classification snippet pool shipped with the crate.
pub fn bundled_pool() -> Vec<SnippetRecord> {
    let manifest = include_str!("../assets/pool/manifest.toml");
    parse_pool(manifest, |file| {
        BUNDLED_POOL
            .iter()
            .find(|(name, _)| *name == file)
            .map(|(_, src)| src.to_string())
            .ok_or_else(|| PromptError::Pool(format!("bundled file {file} missing")))
    })
    .expect("bundled pool is valid")
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

fn family_excluded(family: &str, excluded: &[String]) -> bool {
    excluded.iter().any(|e| e.eq_ignore_ascii_case(family))
}

/// Encoder donors whose family is not excluded, in pool order.
pub fn eligible<'a>(pool: &'a [SnippetRecord], excluded_families: &[String]) -> Vec<&'a SnippetRecord> {
    pool.iter()
        .filter(|s| s.role == SnippetRole::EncoderDonor && !family_excluded(&s.family, excluded_families))
        .collect()
}

/// Draws `n` distinct snippets without replacement.
///
/// The draw is a partial Fisher-Yates shuffle over the eligible pool in
/// stored order, driven by ChaCha8 seeded with `seed`: step `i` swaps slot
/// `i` with slot `i + (next_u64() mod (len - i))`.
pub fn sample_snippets(
    pool: &[SnippetRecord],
    n: usize,
    excluded_families: &[String],
    seed: u64,
) -> Result<Vec<SnippetRecord>, PromptError> {
    if n == 0 {
        return Err(PromptError::ZeroSnippets);
    }
    let mut candidates = eligible(pool, excluded_families);
    if candidates.len() < n {
        return Err(PromptError::InsufficientPool {
            needed: n,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = candidates.len();
    for i in 0..n {
        let j = i + (rng.next_u64() % (len - i) as u64) as usize;
        candidates.swap(i, j);
    }
    Ok(candidates.into_iter().take(n).cloned().collect())
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub version: String,
    pub system: String,
    pub rules: String,
    pub user: String,
}

impl Template {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TEMPLATE).expect("builtin template is valid")
    }

    /// Looks up a template shipped with the crate by its version tag.
    pub fn for_version(version: &str) -> Result<Self, PromptError> {
        let t = Self::builtin();
        if t.version == version {
            Ok(t)
        } else {
            Err(PromptError::UnknownRulesVersion(version.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        Self::parse(&read(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut version = None;
        let mut sections: BTreeMap<&str, String> = BTreeMap::new();
        let mut current: Option<&str> = None;
        for line in text.split_inclusive('\n') {
            let bare = line.trim_end_matches(['\n', '\r']);
            if let Some(tag) = bare.strip_prefix("@@version ") {
                version = Some(tag.trim().to_string());
                current = None;
                continue;
            }
            if let Some(name) = bare.strip_prefix("@@") {
                let name = match name.trim() {
                    n @ ("system" | "rules" | "user") => n,
                    other => return Err(PromptError::Template(format!("unknown section @@{other}"))),
                };
                if sections.insert(name, String::new()).is_some() {
                    return Err(PromptError::Template(format!("duplicate section @@{name}")));
                }
                current = Some(name);
                continue;
            }
            match current {
                Some(name) => sections.get_mut(name).unwrap().push_str(line),
                None if bare.trim().is_empty() => {}
                None => return Err(PromptError::Template("text outside any section".into())),
            }
        }
        let mut take = |name: &str| {
            sections
                .remove(name)
                .map(|s| s.trim_end_matches(['\n', '\r']).to_string())
                .ok_or_else(|| PromptError::Template(format!("missing section @@{name}")))
        };
        Ok(Self {
            version: version.ok_or_else(|| PromptError::Template("missing @@version".into()))?,
            system: take("system")?,
            rules: take("rules").unwrap_or_default(),
            user: take("user")?,
        })
    }
}

/// Single-pass `{{name}}` substitution; unknown names are an error.
pub fn render(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut missing = None;
    let out = PLACEHOLDER.replace_all(template, |caps: &Captures<'_>| match vars.get(&caps[1]) {
        Some(v) => v.clone(),
        None => {
            missing.get_or_insert_with(|| caps[1].to_string());
            String::new()
        }
    });
    match missing {
        Some(name) => Err(PromptError::UnresolvedVariable(name)),
        None => Ok(out.into_owned()),
    }
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// `C{n}C-{base_name}`, the family naming scheme for generated models.
pub fn family_prefix(n: usize, base_name: &str) -> String {
    format!("C{n}C-{base_name}")
}

/// Hex SHA-256 of `system_message`, a NUL byte, then `user_message`.
pub fn prompt_hash(system_message: &str, user_message: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system_message.as_bytes());
    hasher.update([0u8]);
    hasher.update(user_message.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub baseline_source: String,
    pub snippet_count: usize,
    pub snippet_pool: Vec<SnippetRecord>,
    pub excluded_families: Vec<String>,
    pub seed: u64,
    pub rules_version: String,
    pub temperature: f64,
    pub base_name: String,
    /// Soft limit on user message length; exceeding it only warns.
    pub max_chars: Option<usize>,
}

impl PromptSpec {
    pub fn new(baseline_source: impl Into<String>, pool: Vec<SnippetRecord>, snippet_count: usize, base_name: impl Into<String>) -> Self {
        Self {
            baseline_source: baseline_source.into(),
            snippet_count,
            snippet_pool: pool,
            excluded_families: Vec::new(),
            seed: 0,
            rules_version: BUILTIN_RULES_VERSION.to_string(),
            temperature: crate::gateway::DEFAULT_TEMPERATURE,
            base_name: base_name.into(),
            max_chars: None,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.snippet_count == 0 {
            return Err(PromptError::ZeroSnippets);
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(PromptError::BadTemperature(self.temperature));
        }
        if self.base_name.is_empty() {
            return Err(PromptError::EmptyBaseName);
        }
        let available = eligible(&self.snippet_pool, &self.excluded_families).len();
        if available < self.snippet_count {
            return Err(PromptError::InsufficientPool {
                needed: self.snippet_count,
                available,
            });
        }
        python::syntax_check(&self.baseline_source).map_err(PromptError::BaselineSyntax)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptText {
    pub system_message: String,
    pub user_message: String,
    /// The rendered rules section on its own, reused by repair prompts.
    pub rules: String,
    pub snippet_manifest: Vec<String>,
    pub family_prefix: String,
    pub rules_version: String,
    pub warnings: Vec<String>,
}

impl PromptText {
    pub fn hash(&self) -> String {
        prompt_hash(&self.system_message, &self.user_message)
    }
}

fn render_snippets(snippets: &[SnippetRecord]) -> String {
    let mut out = String::new();
    for (i, s) in snippets.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("### Block {}: {} [{}]\n```python\n", i + 1, s.family, s.snippet_id));
        out.push_str(&s.source_text);
        if !s.source_text.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("```\n");
    }
    out
}

/// Renders the prompt with the template matching `spec.rules_version`.
pub fn assemble_prompt(spec: &PromptSpec) -> Result<PromptText, PromptError> {
    let template = Template::for_version(&spec.rules_version)?;
    assemble_with(&template, spec)
}

pub fn assemble_with(template: &Template, spec: &PromptSpec) -> Result<PromptText, PromptError> {
    if template.version != spec.rules_version {
        return Err(PromptError::UnknownRulesVersion(spec.rules_version.clone()));
    }
    spec.validate()?;
    let snippets = sample_snippets(&spec.snippet_pool, spec.snippet_count, &spec.excluded_families, spec.seed)?;

    let mut vars = BTreeMap::new();
    vars.insert("base_name", spec.base_name.clone());
    vars.insert("snippet_count", spec.snippet_count.to_string());
    let rules = render(&template.rules, &vars)?;
    vars.insert("rules", rules.clone());
    vars.insert("baseline_source", spec.baseline_source.trim_end_matches('\n').to_string());
    vars.insert("snippets", render_snippets(&snippets).trim_end_matches('\n').to_string());

    let system_message = render(&template.system, &vars)?;
    let user_message = render(&template.user, &vars)?;

    let mut warnings = Vec::new();
    if let Some(limit) = spec.max_chars {
        let len = user_message.chars().count();
        if len > limit {
            let msg = format!("prompt is {len} characters, over the {limit}-character budget");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    Ok(PromptText {
        system_message,
        user_message,
        rules,
        snippet_manifest: snippets.into_iter().map(|s| s.snippet_id).collect(),
        family_prefix: family_prefix(spec.snippet_count, &spec.base_name),
        rules_version: template.version.clone(),
        warnings,
    })
}
