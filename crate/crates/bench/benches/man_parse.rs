use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;
use tagman_bench::{history, man_page};
use tagman_core::man_format::parse_man_str;
use tagman_core::miner::{index_resolver, DEFAULT_WINDOW};
use tagman_core::{extract_tags, scan_history, serialize_man_page, TagIndex};

fn bench_man(c: &mut Criterion) {
    let mut group = c.benchmark_group("man_page");
    for lines in [20usize, 400] {
        let text = man_page("bench", lines, 8, 1);
        group.throughput(Throughput::Bytes(text.len() as u64));
        group.bench_with_input(
            BenchmarkId::new("parse_extract_tags", lines),
            &text,
            |b, text| b.iter(|| extract_tags(&parse_man_str(black_box(text)).unwrap())),
        );
        let doc = parse_man_str(&text).unwrap();
        group.bench_with_input(BenchmarkId::new("serialize", lines), &doc, |b, doc| {
            b.iter(|| serialize_man_page(black_box(doc)))
        });
    }
    group.finish();
}

fn bench_history(c: &mut Criterion) {
    let lines = history(10_000, 200, 2);
    let index = TagIndex::new();
    let resolve = index_resolver(&index, None);
    c.bench_function("scan_history/10000", |b| {
        b.iter(|| scan_history(black_box(&lines), DEFAULT_WINDOW, &resolve))
    });
}

criterion_group!(benches, bench_man, bench_history);
criterion_main!(benches);
