use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use nncaption_bench::{caption_corpus, messy_reply};
use nncaption_core::contract;
use nncaption_core::metrics::bleu4;
use nncaption_core::prompt::{REFERENCE_BASELINE_LSTM, REFERENCE_BASELINE_TRANSFORMER};
use nncaption_core::recovery::sanitize;

fn bleu(c: &mut Criterion) {
    let (cands, refs) = caption_corpus(1000);
    c.bench_function("bleu4/1000 captions", |b| {
        b.iter(|| bleu4(black_box(&cands), black_box(&refs)).unwrap())
    });
}

fn recovery(c: &mut Criterion) {
    let reply = messy_reply();
    c.bench_function("sanitize/messy reply", |b| b.iter(|| sanitize(black_box(&reply))));
    c.bench_function("sanitize/clean baseline", |b| {
        b.iter(|| sanitize(black_box(REFERENCE_BASELINE_LSTM)))
    });
}

fn checker(c: &mut Criterion) {
    c.bench_function("contract/check lstm baseline", |b| {
        b.iter(|| contract::check(black_box(REFERENCE_BASELINE_LSTM)).unwrap())
    });
    c.bench_function("contract/check transformer baseline", |b| {
        b.iter(|| contract::check(black_box(REFERENCE_BASELINE_TRANSFORMER)).unwrap())
    });
}

criterion_group!(benches, bleu, recovery, checker);
criterion_main!(benches);
