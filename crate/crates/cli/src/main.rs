use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nncaption_core::contract::{self, CheckConfig};
use nncaption_core::gateway::{Completer, EndpointConfig, HttpGateway, RecordingGateway, ReplayGateway, ENV_ENDPOINT};
use nncaption_core::metrics::bleu4_from_lines;
use nncaption_core::pipeline::{self, GeneratorMode, PipelineConfig};
use nncaption_core::prompt::{self, SnippetRecord};
use nncaption_core::registry::{self, Store};
use nncaption_core::smoke::{SmokeRequest, SmokeRunner, SmokeStatus};
use nncaption_core::{recovery, SuccessPredicate};

mod config;

use config::FileConfig;

const DEFAULT_DB: &str = "nncaption.db";
const ENV_RUNNER: &str = "NNCAPTION_SMOKE_RUNNER";

#[derive(Debug, Parser)]
#[command(
    name = "nncaption",
    version,
    about = "Generate, repair, validate and track LLM-written captioning models"
)]
struct Cli {
    /// Registry database file.
    #[arg(long, global = true)]
    db: Option<PathBuf>,
    /// TOML file whose keys mirror the command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Smoke runner command line, e.g. "python3 runner.py".
    #[arg(long, global = true)]
    runner: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a batch of generation attempts and record them.
    Generate(Box<GenerateArgs>),
    /// Recover candidate source from a raw model reply.
    Sanitize {
        file: PathBuf,
        /// Print the pass log as JSON on stderr.
        #[arg(long)]
        log: bool,
    },
    /// Check a source file against the model contract.
    Validate { file: PathBuf },
    /// Smoke-test a source file with the configured runner.
    Smoke {
        file: PathBuf,
        #[arg(long, default_value_t = 120.0)]
        timeout: f64,
    },
    /// Corpus BLEU-4 of line-aligned caption files.
    Bleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        refs: Vec<PathBuf>,
    },
    /// Summaries from the registry.
    Report {
        #[arg(long)]
        run: Option<String>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Print the timestamp-free dump of every table.
        #[arg(long, conflicts_with_all = ["run", "format"])]
        canonical: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    snippets: Option<usize>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Base model name used in the family prefix, e.g. RESNETLSTM.
    #[arg(long)]
    base: Option<String>,
    /// Answer requests from recorded fixtures in DIR.
    #[arg(long, conflicts_with = "endpoint")]
    replay: Option<PathBuf>,
    /// Chat-completions URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Save every live reply as a fixture in DIR.
    #[arg(long, requires = "endpoint")]
    record: Option<PathBuf>,
    #[arg(long)]
    smoke: bool,
    #[arg(long)]
    repair_limit: Option<u32>,
    #[arg(long)]
    workers: Option<usize>,
    /// Baseline source file; defaults to the bundled baseline for the base name.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Snippet pool directory containing manifest.toml.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Snippet family to leave out; may be repeated.
    #[arg(long = "exclude")]
    exclude: Vec<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_prompt_chars: Option<usize>,
    #[arg(long)]
    run_id: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let db = cli.db.clone().or(file.db.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_DB));
    let runner = cli
        .runner
        .clone()
        .or(file.runner.clone())
        .or_else(|| std::env::var(ENV_RUNNER).ok());

    match cli.command {
        Command::Generate(args) => generate(*args, &file, &db, runner.as_deref()),
        Command::Sanitize { file, log } => sanitize(&file, log),
        Command::Validate { file } => validate(&file),
        Command::Smoke { file, timeout } => smoke(&file, runner.as_deref(), timeout),
        Command::Bleu { hyp, refs } => bleu(&hyp, &refs),
        Command::Report { run, format, canonical } => {
            let format = match (format, file.report.format.as_deref()) {
                (Some(f), _) => f,
                (None, Some(name)) => Format::from_str(name, true).map_err(|e| anyhow!("report format: {e}"))?,
                (None, None) => Format::Table,
            };
            report(&db, run.as_deref(), format, canonical)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn smoke_runner(command: Option<&str>) -> Result<SmokeRunner> {
    let command = command.ok_or_else(|| anyhow!("no smoke runner configured; pass --runner or set {ENV_RUNNER}"))?;
    let parts: Vec<String> = command.split_whitespace().map(String::from).collect();
    Ok(SmokeRunner::from_command(&parts)?)
}

fn bundled_baseline(base: &str) -> &'static str {
    if base.to_ascii_lowercase().contains("transformer") {
        prompt::REFERENCE_BASELINE_TRANSFORMER
    } else {
        prompt::REFERENCE_BASELINE_LSTM
    }
}

fn generate(args: GenerateArgs, file: &FileConfig, db: &Path, runner: Option<&str>) -> Result<ExitCode> {
    let g = &file.generate;
    let snippets = args.snippets.or(g.snippets).ok_or_else(|| anyhow!("--snippets is required"))?;
    let rounds = args.rounds.or(g.rounds).ok_or_else(|| anyhow!("--rounds is required"))?;
    let base = args.base.or(g.base.clone()).ok_or_else(|| anyhow!("--base is required"))?;
    let endpoint = args.endpoint.or(g.endpoint.clone()).or_else(|| {
        if args.replay.is_none() && g.replay.is_none() {
            std::env::var(ENV_ENDPOINT).ok()
        } else {
            None
        }
    });
    let replay = if endpoint.is_some() {
        None
    } else {
        args.replay.or(g.replay.clone())
    };
    let record = args.record.or(g.record.clone());

    let mode = match (&replay, &endpoint) {
        (Some(dir), _) => GeneratorMode::Replay { dir: dir.clone() },
        (None, Some(url)) => GeneratorMode::Endpoint { url: url.clone() },
        (None, None) => bail!("no generator: pass --replay DIR or --endpoint URL (or set {ENV_ENDPOINT})"),
    };
    let mut config = PipelineConfig::new(snippets, rounds, base.clone(), mode);
    config.seed = args.seed.or(g.seed).unwrap_or(0);
    config.smoke_enabled = args.smoke || g.smoke.unwrap_or(false);
    if let Some(n) = args.repair_limit.or(g.repair_limit) {
        config.repair_limit = n;
    }
    if let Some(n) = args.workers.or(g.workers) {
        config.workers = n;
    }
    let mut exclude = g.exclude.clone().unwrap_or_default();
    exclude.extend(args.exclude);
    config.excluded_families = exclude;
    if let Some(m) = args.model.or(g.model.clone()) {
        config.model_name = m;
    }
    if let Some(t) = args.temperature.or(g.temperature) {
        config.temperature = t;
    }
    config.max_prompt_chars = args.max_prompt_chars.or(g.max_prompt_chars);
    config.run_id = args.run_id.or(g.run_id.clone());
    if let Some(v) = g.epochs {
        config.training.epochs = v;
    }
    if let Some(v) = g.batch_size {
        config.training.batch_size = v;
    }
    if let Some(v) = g.learning_rate {
        config.training.learning_rate = v;
    }

    let baseline = match args.baseline.or(g.baseline.clone()) {
        Some(path) => read(&path)?,
        None => bundled_baseline(&base).to_string(),
    };
    let pool: Vec<SnippetRecord> = match args.pool.or(g.pool.clone()) {
        Some(dir) => prompt::load_pool(&dir)?,
        None => prompt::bundled_pool(),
    };

    let gateway: Box<dyn Completer> = match (&replay, &endpoint) {
        (Some(dir), _) => Box::new(ReplayGateway::new(dir)),
        (None, Some(url)) => {
            let mut ep = EndpointConfig::with_env(url.clone());
            ep.max_concurrency = config.workers;
            let http = HttpGateway::new(ep);
            match record {
                Some(dir) => Box::new(RecordingGateway::new(http, dir, false)),
                None => Box::new(http),
            }
        }
        (None, None) => unreachable!("generator mode checked above"),
    };
    let runner = if config.smoke_enabled { Some(smoke_runner(runner)?) } else { None };

    let mut store = Store::open(db)?;
    store.set_max_repairs(config.repair_limit);
    let summary = pipeline::run_batch(&config, &baseline, &pool, gateway.as_ref(), runner.as_ref(), &mut store)?;
    println!("{}", summary.to_json());
    Ok(ExitCode::SUCCESS)
}

fn sanitize(path: &Path, log: bool) -> Result<ExitCode> {
    let raw = read(path)?;
    let out = recovery::sanitize(&raw);
    print!("{}", out.text);
    if log {
        eprintln!("{}", serde_json::to_string_pretty(&out.pass_log)?);
    }
    Ok(match &out.syntax {
        None => ExitCode::SUCCESS,
        Some(f) => {
            eprintln!("syntax error: {f}");
            ExitCode::from(1)
        }
    })
}

fn validate(path: &Path) -> Result<ExitCode> {
    let source = read(path)?;
    match contract::check_with(&source, &CheckConfig::default()) {
        Ok(report) => {
            println!("{}", report.to_json());
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Err(contract::ContractError::Unparsed(f)) => {
            println!("{}", serde_json::to_string_pretty(&json!({"passed": false, "syntax": f}))?);
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(e.into()),
    }
}

fn smoke(path: &Path, runner: Option<&str>, timeout: f64) -> Result<ExitCode> {
    let source = read(path)?;
    let runner = smoke_runner(runner)?;
    let mut request = SmokeRequest::new(source);
    request.timeout_s = timeout;
    let report = runner.smoke_run(&request);
    println!("{}", report.to_json());
    Ok(if report.status == SmokeStatus::Pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn bleu(hyp: &Path, refs: &[PathBuf]) -> Result<ExitCode> {
    let hyp_text = read(hyp)?;
    let hyps: Vec<&str> = hyp_text.lines().collect();
    let ref_texts = refs.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
    let ref_lines: Vec<Vec<&str>> = ref_texts.iter().map(|t| t.lines().collect()).collect();
    for (path, lines) in refs.iter().zip(&ref_lines) {
        if lines.len() != hyps.len() {
            bail!(
                "{} has {} lines but {} has {}",
                path.display(),
                lines.len(),
                hyp.display(),
                hyps.len()
            );
        }
    }
    let sets: Vec<Vec<&str>> = (0..hyps.len()).map(|i| ref_lines.iter().map(|r| r[i]).collect()).collect();
    let breakdown = bleu4_from_lines(&hyps, &sets)?;
    println!("{}", serde_json::to_string_pretty(&breakdown)?);
    Ok(ExitCode::SUCCESS)
}

fn report(db: &Path, run: Option<&str>, format: Format, canonical: bool) -> Result<ExitCode> {
    if !db.exists() {
        bail!("registry {} does not exist", db.display());
    }
    let store = Store::open(db)?;
    if canonical {
        print!("{}", store.canonical_dump()?);
        return Ok(ExitCode::SUCCESS);
    }
    match run {
        Some(id) => report_run(&store, id, format),
        None => report_families(&store, format),
    }
}

fn report_families(store: &Store, format: Format) -> Result<ExitCode> {
    let families = store.family_summary_with(&SuccessPredicate::default())?;
    let metrics = store.metrics_summary()?;
    match format {
        Format::Table => {
            print!("{}", families.to_table());
            if metrics.iter().any(|m| m.best_bleu4.is_some()) {
                println!();
                print!("{}", registry::metrics_to_table(&metrics));
            }
        }
        Format::Csv => {
            print!("{}", families.to_csv()?);
            if metrics.iter().any(|m| m.best_bleu4.is_some()) {
                println!();
                print!("{}", registry::metrics_to_csv(&metrics)?);
            }
        }
        Format::Json => {
            let value = json!({
                "families": families.rows,
                "total": families.total,
                "metrics": metrics,
            });
            println!("{}", serde_json::to_string_pretty(&value)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report_run(store: &Store, run_id: &str, format: Format) -> Result<ExitCode> {
    if store.get_run(run_id)?.is_none() {
        bail!("unknown run {run_id}");
    }
    let attempts = store.attempts(run_id)?;
    let counts = store.status_counts(run_id)?;
    let rate = store.success_rate(run_id)?;
    match format {
        Format::Json => {
            let rows: Vec<_> = attempts
                .iter()
                .map(|a| {
                    json!({
                        "attempt_id": a.attempt_id,
                        "round": a.round,
                        "family_prefix": a.family_prefix,
                        "status": a.status,
                        "decoder_type": a.decoder_type,
                        "repair_count": a.repair_count,
                        "detail": a.detail,
                    })
                })
                .collect();
            let value = json!({"run_id": run_id, "success_rate": rate, "status_counts": counts, "attempts": rows});
            println!("{}", serde_json::to_string_pretty(&value)?);
        }
        Format::Csv => {
            println!("round,attempt_id,family_prefix,status,decoder_type,repair_count");
            for a in &attempts {
                println!(
                    "{},{},{},{},{},{}",
                    a.round,
                    a.attempt_id.as_deref().unwrap_or(""),
                    a.family_prefix,
                    a.status.as_str(),
                    a.decoder_type.as_str(),
                    a.repair_count
                );
            }
        }
        Format::Table => {
            println!("run {run_id}: success rate {rate:.2} over {} attempt(s)", attempts.len());
            for (status, n) in &counts {
                println!("  {:<14} {n}", status.as_str());
            }
            println!();
            println!(
                "{:<6} {:<22} {:<26} {:<14} {:<12} repairs",
                "round", "attempt", "prefix", "status", "decoder"
            );
            for a in &attempts {
                println!(
                    "{:<6} {:<22} {:<26} {:<14} {:<12} {}",
                    a.round,
                    a.attempt_id.as_deref().unwrap_or(""),
                    a.family_prefix,
                    a.status.as_str(),
                    a.decoder_type.as_str(),
                    a.repair_count
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
