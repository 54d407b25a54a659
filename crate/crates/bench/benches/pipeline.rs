use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use corpusforge::curriculum::{build_bins, CurriculumSampler};
use corpusforge::metrics::{bleu, Smoothing};
use corpusforge::preprocess::{dedup, filter_chain, FilterConfig};
use corpusforge::subword::{bpe_apply, bpe_learn};
use corpusforge_bench::{parallel, token_lines};

fn dedup_filter(c: &mut Criterion) {
    let pairs = parallel(20_000, 1);
    let cfg = FilterConfig::default();
    let mut g = c.benchmark_group("clean");
    g.throughput(Throughput::Elements(pairs.len() as u64));
    g.bench_function("dedup", |b| {
        b.iter_batched(|| pairs.clone(), |p| dedup(p).count(), BatchSize::LargeInput)
    });
    g.bench_function("dedup+filter", |b| {
        b.iter_batched(
            || pairs.clone(),
            |p| filter_chain(dedup(p), &cfg).unwrap().0.len(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn bpe(c: &mut Criterion) {
    let lines = token_lines(2_000, 2);
    let model = bpe_learn(&lines, 500).unwrap();
    let mut g = c.benchmark_group("bpe");
    g.sample_size(10);
    g.bench_function("learn 500", |b| b.iter(|| bpe_learn(black_box(&lines), 500).unwrap()));
    g.throughput(Throughput::Elements(lines.len() as u64));
    g.bench_function("apply", |b| {
        b.iter(|| lines.iter().map(|l| bpe_apply(&model, l).len()).sum::<usize>())
    });
    g.finish();
}

fn sampler(c: &mut Criterion) {
    let q: Vec<f64> = (0..100_000).map(|i| (i as f64 * 0.618).fract()).collect();
    let lengths = vec![20usize; q.len()];
    let bins = build_bins(&q, 4).unwrap();
    c.bench_function("curriculum 10k draws", |b| {
        b.iter(|| {
            CurriculumSampler::new(&bins, 1, 100, 7, &lengths)
                .unwrap()
                .take(100)
                .map(|batch| batch.samples.len())
                .sum::<usize>()
        })
    });
}

fn corpus_bleu(c: &mut Criterion) {
    let hyp = token_lines(1_000, 3);
    let refs = token_lines(1_000, 4);
    c.bench_function("bleu 1k lines", |b| {
        b.iter(|| bleu(&hyp, &refs, 4, Smoothing::None).unwrap().bleu)
    });
}

criterion_group!(benches, dedup_filter, bpe, sampler, corpus_bleu);
criterion_main!(benches);
