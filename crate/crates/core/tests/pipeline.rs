mod support;

use std::collections::HashMap;

use nncaption_core::gateway::{GatewayError, RecordingGateway, ReplayGateway};
use nncaption_core::pipeline::{self, build_repair_prompt, execute_attempt, run_attempt, GeneratorMode, PipelineConfig};
use nncaption_core::prompt::{self, REFERENCE_BASELINE_LSTM};
use nncaption_core::registry::{Status, Store};
use nncaption_core::DecoderType;
use support::*;

fn config(rounds: u32) -> PipelineConfig {
    let mut c = PipelineConfig::new(2, rounds, "RESNETLSTM", GeneratorMode::Custom { name: "scripted".into() });
    c.seed = 11;
    c
}

fn spec(c: &PipelineConfig) -> prompt::PromptSpec {
    c.prompt_spec(REFERENCE_BASELINE_LSTM, &prompt::bundled_pool(), 0)
}

#[test]
fn clean_first_reply_is_valid_without_repairs() {
    let c = config(1);
    let gw = Scripted::constant(&fenced(CLEAN));
    let out = execute_attempt(&c, &spec(&c), &gw, None, "run-t").unwrap();
    assert_eq!(out.status, Status::Valid);
    assert_eq!(out.repair_count(), 0);
    assert_eq!(gw.calls(), 1);
    assert_eq!(out.decoder_type, DecoderType::Gru);
    assert_eq!(out.final_source.as_deref(), Some(CLEAN));
}

#[test]
fn broken_reply_then_clean_repair() {
    let c = config(1);
    let mut initial = HashMap::new();
    initial.insert(String::new(), fenced(NO_LEARN));
    let gw = Scripted::new(initial, |_| Ok(fenced(CLEAN)));
    let out = execute_attempt(&c, &spec(&c), &gw, None, "run-t").unwrap();
    assert_eq!(out.status, Status::Valid);
    assert_eq!(out.repair_count(), 1);
    assert!(out.repair_transcript[0].feedback.contains("[METHODS]"));
    let reqs = gw.requests.lock().unwrap();
    assert_eq!(reqs.len(), 2);
    assert_eq!(reqs[1].temperature, pipeline::DEFAULT_REPAIR_TEMPERATURE);
    assert!(reqs[1].user_message.contains("def train_setup"));
}

#[test]
fn repairs_stop_at_the_limit() {
    for (raw, expected) in [(NO_LEARN, Status::ContractFail), (HOPELESS, Status::SyntaxFail)] {
        for limit in 0..4u32 {
            let mut c = config(1);
            c.repair_limit = limit;
            let gw = Scripted::constant(raw);
            let out = execute_attempt(&c, &spec(&c), &gw, None, "run-t").unwrap();
            assert_eq!(out.status, expected);
            assert_eq!(gw.calls() as u32, 1 + limit);
            assert_eq!(out.repair_count(), limit);
            assert_eq!(out.gateway_calls, 1 + limit);
        }
    }
}

#[test]
fn syntax_repair_feedback_carries_parser_message() {
    let c = config(1);
    let gw = Scripted::constant(HOPELESS);
    let out = execute_attempt(&c, &spec(&c), &gw, None, "run-t").unwrap();
    let reqs = gw.requests.lock().unwrap();
    assert!(out.repair_transcript[0].feedback.contains("[SYNTAX]"));
    assert!(reqs[1].user_message.contains(&out.repair_transcript[0].feedback));
    assert!(out.detail.contains("[SYNTAX]"));
    assert!(out.contract_report.is_none());
}

#[test]
fn generation_failure_is_recorded_as_syntax_fail() {
    let c = config(1);
    let gw = Scripted::new(HashMap::new(), |_| unreachable!());
    let mut store = Store::open_in_memory().unwrap();
    store
        .record_run(&nncaption_core::RunRecord {
            run_id: "run-t".into(),
            config_json: "{}".into(),
            created_at: 0,
        })
        .unwrap();
    let (id, out) = run_attempt(&c, &spec(&c), &gw, None, &mut store, "run-t", 0).unwrap();
    assert_eq!(out.status, Status::SyntaxFail);
    assert!(out.detail.starts_with("GEN_FAIL"));
    let stored = store.get_attempt(&id).unwrap().unwrap();
    assert_eq!(stored.status, Status::SyntaxFail);
    assert!(stored.detail.starts_with("GEN_FAIL"));
    assert!(stored.final_source.is_none());
}

#[test]
fn failure_during_repair_keeps_last_status() {
    let c = config(1);
    let mut initial = HashMap::new();
    initial.insert(String::new(), NO_LEARN.to_string());
    let gw = Scripted::new(initial, |_| {
        Err(GatewayError::EndpointFailure {
            attempts: 3,
            last: "HTTP 503".into(),
        })
    });
    let out = execute_attempt(&c, &spec(&c), &gw, None, "run-t").unwrap();
    assert_eq!(out.status, Status::ContractFail);
    assert!(out.detail.starts_with("GEN_FAIL during repair"));
    assert_eq!(out.repair_count(), 0);
    assert_eq!(gw.calls(), 2);
}

#[test]
fn repair_prompt_lists_every_violation() {
    let report = nncaption_core::check(include_str!("fixtures/contract/fail_combined.py")).unwrap();
    let feedback = nncaption_core::explain(&report).unwrap();
    assert!(feedback.lines().count() >= 3);
    let p = build_repair_prompt("RULES", "code", &feedback).unwrap();
    for line in feedback.lines() {
        assert!(p.user_message.contains(line));
    }
}

fn batch_gateway(c: &PipelineConfig, broken_rounds: &[u32]) -> Scripted {
    let pool = prompt::bundled_pool();
    let hashes = round_hashes(c, REFERENCE_BASELINE_LSTM, &pool);
    let initial = hashes
        .iter()
        .enumerate()
        .map(|(r, h)| {
            let body = if broken_rounds.contains(&(r as u32)) { NO_LEARN } else { CLEAN };
            (h.clone(), fenced(&format!("{body}\n# round {r}\n")))
        })
        .collect();
    Scripted::new(initial, |_| Ok(NO_LEARN.to_string()))
}

#[test]
fn batch_success_rate_counts_clean_rounds() {
    for (broken, rate) in [(vec![3], 0.8), (vec![1, 4], 0.6), (vec![], 1.0)] {
        let c = config(5);
        let gw = batch_gateway(&c, &broken);
        let mut store = Store::open_in_memory().unwrap();
        let summary = pipeline::run_batch(&c, REFERENCE_BASELINE_LSTM, &prompt::bundled_pool(), &gw, None, &mut store).unwrap();
        assert!((summary.success_rate - rate).abs() < 1e-12, "{broken:?}");
        assert_eq!(summary.status_counts.values().sum::<usize>(), 5);
        assert_eq!(summary.status_counts[&Status::ContractFail], broken.len());
        assert_eq!(store.success_rate(&summary.run_id).unwrap(), summary.success_rate);
        assert_eq!(gw.calls(), 5 + 2 * broken.len());
        let rounds: Vec<u32> = summary.attempts.iter().map(|a| a.round).collect();
        assert_eq!(rounds, vec![0, 1, 2, 3, 4]);
        let distinct: std::collections::BTreeSet<String> = gw.requests.lock().unwrap().iter().map(|r| r.prompt_hash()).collect();
        assert_eq!(store.exchange_count(&summary.run_id).unwrap(), distinct.len());
    }
}

#[test]
fn recorded_batch_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(4);
    let pool = prompt::bundled_pool();
    c.generator = GeneratorMode::Replay {
        dir: dir.path().to_path_buf(),
    };

    let recorder = RecordingGateway::new(batch_gateway(&c, &[2]), dir.path(), false);
    let mut first = Store::open_in_memory().unwrap();
    let live = pipeline::run_batch(&c, REFERENCE_BASELINE_LSTM, &pool, &recorder, None, &mut first).unwrap();

    let replay = ReplayGateway::new(dir.path());
    let mut second = Store::open_in_memory().unwrap();
    let again = pipeline::run_batch(&c, REFERENCE_BASELINE_LSTM, &pool, &replay, None, &mut second).unwrap();
    assert_eq!(live.to_json(), again.to_json());
    assert_eq!(first.canonical_dump().unwrap(), second.canonical_dump().unwrap());

    let mut serial = c.clone();
    serial.workers = 1;
    let mut third = Store::open_in_memory().unwrap();
    let s = pipeline::run_batch(&serial, REFERENCE_BASELINE_LSTM, &pool, &replay, None, &mut third).unwrap();
    let strip =
        |v: &[pipeline::AttemptSummary]| -> Vec<_> { v.iter().map(|a| (a.round, a.status, a.repair_count, a.gateway_calls)).collect() };
    assert_eq!(strip(&s.attempts), strip(&live.attempts));
}

#[test]
fn per_round_seeds_are_offset_from_the_base_seed() {
    let c = config(3);
    let pool = prompt::bundled_pool();
    for r in 0..3 {
        assert_eq!(c.prompt_spec(REFERENCE_BASELINE_LSTM, &pool, r).seed, c.seed + r as u64);
    }
    let hashes = round_hashes(&c, REFERENCE_BASELINE_LSTM, &pool);
    assert_eq!(hashes.iter().collect::<std::collections::BTreeSet<_>>().len(), 3);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut store = Store::open_in_memory().unwrap();
    let gw = Scripted::constant(CLEAN);
    let pool = prompt::bundled_pool();
    let mut zero = config(1);
    zero.rounds = 0;
    assert!(pipeline::run_batch(&zero, REFERENCE_BASELINE_LSTM, &pool, &gw, None, &mut store).is_err());
    let mut greedy = config(1);
    greedy.snippet_count = pool.len() + 1;
    assert!(pipeline::run_batch(&greedy, REFERENCE_BASELINE_LSTM, &pool, &gw, None, &mut store).is_err());
    assert_eq!(gw.calls(), 0);
}
