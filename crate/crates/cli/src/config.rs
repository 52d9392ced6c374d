//! Optional TOML configuration. Every key mirrors a command-line flag;
//! flags given on the command line win.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub db: Option<PathBuf>,
    pub runner: Option<String>,
    #[serde(default)]
    pub generate: GenerateFile,
    #[serde(default)]
    pub report: ReportFile,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GenerateFile {
    pub snippets: Option<usize>,
    pub rounds: Option<u32>,
    pub seed: Option<u64>,
    pub base: Option<String>,
    pub replay: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub record: Option<PathBuf>,
    pub smoke: Option<bool>,
    pub repair_limit: Option<u32>,
    pub workers: Option<usize>,
    pub baseline: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub exclude: Option<Vec<String>>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_prompt_chars: Option<usize>,
    pub run_id: Option<String>,
    pub epochs: Option<u32>,
    pub batch_size: Option<u32>,
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReportFile {
    pub format: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}
