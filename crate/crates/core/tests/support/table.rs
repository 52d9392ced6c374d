#![allow(dead_code)]

use nncaption_core::registry::{parse_family_prefix, AttemptRecord, RunRecord, Status, Store};
use nncaption_core::DecoderType;

/// Accepted model counts per family prefix for the reference store.
pub const TABLE_ROWS: [(&str, DecoderType, usize); 5] = [
    ("C1C-RESNETLSTM", DecoderType::Lstm, 1),
    ("C5C-RESNETLSTM", DecoderType::Lstm, 100),
    ("C10C-RESNETLSTM", DecoderType::Gru, 3),
    ("C5C-ResNetTransformer", DecoderType::Transformer, 250),
    ("C8C-ResNetTransformer", DecoderType::Gru, 3),
];

pub const TABLE_TOTAL: usize = 357;

/// Fills `store` with one accepted attempt per counted model, plus a few
/// rejected attempts per family that must not show up in the counts.
pub fn seed_table(store: &mut Store) {
    store
        .record_run(&RunRecord {
            run_id: "run-table".into(),
            config_json: "{}".into(),
            created_at: 0,
        })
        .unwrap();
    // Insert in scrambled family order so the report has to sort.
    for &(prefix, decoder, count) in TABLE_ROWS.iter().rev() {
        let (_, n) = parse_family_prefix(prefix);
        for i in 0..count {
            let mut a = AttemptRecord::new("run-table", prefix, format!("h-{prefix}-{i}"), format!("model {prefix} {i}"));
            a.snippet_count = n;
            a.round = i as u32;
            a.status = Status::Valid;
            a.decoder_type = decoder;
            a.final_source = Some(format!("# {prefix} {i}\n"));
            a.created_at = 0;
            a.finished_at = 0;
            store.record_attempt(&a).unwrap();
        }
        for (i, status) in [Status::SyntaxFail, Status::ContractFail, Status::RuntimeFail]
            .into_iter()
            .enumerate()
        {
            let mut a = AttemptRecord::new("run-table", prefix, format!("bad-{prefix}-{i}"), format!("broken {prefix} {i}"));
            a.snippet_count = n;
            a.status = status;
            a.decoder_type = DecoderType::Unknown;
            a.created_at = 0;
            a.finished_at = 0;
            store.record_attempt(&a).unwrap();
        }
    }
}
