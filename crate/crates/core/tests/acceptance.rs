use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use corpusforge::augment::{
    bit_reconstruct, dd_generate, hypo_build, tel_build, ScoreFieldQe, DEFAULT_NBEST, DEFAULT_QE_THRESHOLD,
};
use corpusforge::corpus::CorpusStats;
use corpusforge::curriculum::{build_bins, domain_feature, CurriculumSampler};
use corpusforge::metrics::{bleu, kl, kl_bidirectional, label_smoothed_ce, rdrop_reg, ProbVector, Smoothing};
use corpusforge::pipeline::{run_pipeline, Manifest, PipelineConfig, RunOptions};
use corpusforge::preprocess::{filter_chain, ibm1_train, FilterConfig, FilterSpec};
use corpusforge::subword::{bpe_apply, bpe_decode, bpe_learn, BpeModel};
use corpusforge::translator::{DictTranslator, Lexicon, LmScorer, NgramLm, Translator};
use corpusforge::{Provenance, Sentence, SentencePair};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn words(n: usize, w: &str) -> String {
    vec![w; n].join(" ")
}

fn pair(src: &str, tgt: &str) -> SentencePair {
    SentencePair::authentic(Sentence::new(src, "de"), Sentence::new(tgt, "en"))
}

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy")
}

fn thresholds() -> Check {
    let kept = |pairs: Vec<SentencePair>, cfg: &FilterConfig| -> Result<Vec<String>, String> {
        let (kept, _) = filter_chain(pairs, cfg).map_err(|e| e.to_string())?;
        Ok(kept.into_iter().map(|p| p.src.text().to_string()).collect())
    };
    let default = FilterConfig::default();
    let long = vec![
        pair(&words(151, "x"), &words(151, "y")),
        pair(&words(150, "z"), &words(150, "y")),
    ];
    let k = kept(long, &default)?;
    ensure!(k == vec![words(150, "z")], "length filter kept {} records", k.len());

    // ratios above 4.0 need more than 150 source tokens, so the ratio rule is
    // checked on its own as well as alongside the length rule
    let ratio_only = FilterConfig {
        filters: vec![FilterSpec::Ratio { lo: 0.25, hi: 4.0 }],
    };
    let cases = [
        (401, 100, false),
        (249, 1000, false),
        (400, 100, true),
        (250, 1000, true),
    ];
    for (s, t, keep) in cases {
        let k = kept(vec![pair(&words(s, "a"), &words(t, "b"))], &ratio_only)?;
        ensure!(k.len() == keep as usize, "ratio {s}/{t}: kept={}", k.len());
    }
    let k = kept(
        vec![
            pair(&words(8, "a"), &words(2, "b")),
            pair(&words(2, "c"), &words(8, "b")),
        ],
        &default,
    )?;
    ensure!(k.len() == 2, "ratios 4.0 and 0.25 should be kept by the default chain");
    Ok(())
}

fn multi_option_lexicon() -> Lexicon {
    let mut entries = Vec::new();
    for src in ["a", "b", "c"] {
        for (i, p) in [0.4, 0.3, 0.2, 0.1].into_iter().enumerate() {
            entries.push((src.to_string(), format!("{src}{i}"), p));
        }
    }
    Lexicon::new(entries).unwrap()
}

fn hypo_threshold() -> Check {
    let base = DictTranslator::new(multi_option_lexicon(), "en");
    let pairs = vec![
        pair("a b c", "a0 b0 c0").with_score("qe", 0.80),
        pair("c b a", "c0 b0 a0").with_score("qe", 0.801),
    ];
    let recs = hypo_build(
        &pairs,
        &base,
        &ScoreFieldQe::new("qe"),
        DEFAULT_QE_THRESHOLD,
        DEFAULT_NBEST,
    )
    .map_err(|e| e.to_string())?;
    ensure!(recs.len() == 1, "expected 1 record, got {}", recs.len());
    ensure!(
        recs[0].source.text() == "c b a",
        "wrong record kept: {}",
        recs[0].source.text()
    );
    ensure!(recs[0].qe_score == 0.801, "qe_score {}", recs[0].qe_score);
    ensure!(
        recs[0].nbest.len() == 10,
        "n-best length {} (64 candidates available)",
        recs[0].nbest.len()
    );
    Ok(())
}

fn count_laws() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vocab = ["das", "haus", "ist", "klein", "der", "hund"];
    let lex = Lexicon::identity(vocab);
    let models: Vec<DictTranslator> = (0..4).map(|_| DictTranslator::new(lex.clone(), "en")).collect();
    let mut sizes: Vec<usize> = (0..12).map(|_| rng.gen_range(1..1000)).collect();
    sizes.extend([1, 999]);
    for n in sizes {
        let pairs: Vec<SentencePair> = (0..n)
            .map(|_| {
                let len = rng.gen_range(1..6);
                let s: Vec<&str> = (0..len).map(|_| *vocab.choose(&mut rng).unwrap()).collect();
                pair(&s.join(" "), &s.join(" "))
            })
            .collect();
        let bit = bit_reconstruct(&pairs);
        ensure!(bit.len() == 2 * n, "bit: {} from {n}", bit.len());
        let dd = dd_generate(&pairs, &models[0], &models[1], false);
        ensure!(dd.pairs.len() == 3 * n, "dd: {} from {n}", dd.pairs.len());
        let sources: Vec<Sentence> = pairs.iter().map(|p| p.src.clone()).collect();
        let m = rng.gen_range(1..=models.len());
        let refs: Vec<&dyn Translator> = models[..m].iter().map(|t| t as &dyn Translator).collect();
        let tel = tel_build(&sources, &refs).map_err(|e| e.to_string())?;
        ensure!(tel.len() == m * n, "tel: {} from {n} x {m}", tel.len());
        ensure!(tel.iter().all(|p| p.provenance == Provenance::Tel), "tel provenance");
    }
    Ok(())
}

// Domain-feature oracle: independent add-k bigram counts, summed in nats.
struct BigramOracle {
    counts: HashMap<(String, String), f64>,
    totals: HashMap<String, f64>,
    vocab: Vec<String>,
    k: f64,
}

impl BigramOracle {
    fn new(corpus: &[Vec<String>], k: f64) -> Self {
        let mut vocab: Vec<String> = corpus.iter().flatten().cloned().collect();
        vocab.push("<unk>".into());
        vocab.sort();
        vocab.dedup();
        let mut counts = HashMap::new();
        let mut totals = HashMap::new();
        for s in corpus {
            let mut prev = "<s>".to_string();
            for w in s {
                *counts.entry((prev.clone(), w.clone())).or_insert(0.0) += 1.0;
                *totals.entry(prev).or_insert(0.0) += 1.0;
                prev = w.clone();
            }
        }
        BigramOracle {
            counts,
            totals,
            vocab,
            k,
        }
    }

    fn logprob(&self, tokens: &[String]) -> f64 {
        let known = |w: &String| {
            if self.vocab.binary_search(w).is_ok() {
                w.clone()
            } else {
                "<unk>".into()
            }
        };
        let v = self.vocab.len() as f64;
        let mut prev = "<s>".to_string();
        let mut total = 0.0;
        for w in tokens.iter().map(known) {
            let p = match self.totals.get(&prev) {
                None => 1.0 / v,
                Some(t) => {
                    (self.counts.get(&(prev.clone(), w.clone())).copied().unwrap_or(0.0) + self.k) / (t + self.k * v)
                }
            };
            total += p.ln();
            prev = w;
        }
        total
    }
}

fn domain_sentence(rng: &mut ChaCha8Rng, vocab: &[&str], shared: &[&str]) -> Vec<String> {
    let len = rng.gen_range(3..10);
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.3) {
                *shared.choose(rng).unwrap()
            } else {
                *vocab.choose(rng).unwrap()
            }
        })
        .map(str::to_string)
        .collect()
}

fn domain_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shared = ["the", "a", "of", "and", "is"];
    let medical = ["patient", "dose", "clinical", "tablet", "symptom", "therapy", "renal"];
    let general = ["football", "weather", "holiday", "music", "market", "train", "city"];
    let gen = |rng: &mut ChaCha8Rng, v: &[&str], n: usize| -> Vec<Vec<String>> {
        (0..n).map(|_| domain_sentence(rng, v, &shared)).collect()
    };
    let in_train = gen(&mut rng, &medical, 300);
    let out_train = gen(&mut rng, &general, 300);
    let k = 0.1;
    let in_lm = LmScorer::new(NgramLm::train(&in_train, 2, k).map_err(|e| e.to_string())?);
    let out_lm = LmScorer::new(NgramLm::train(&out_train, 2, k).map_err(|e| e.to_string())?);
    let in_oracle = BigramOracle::new(&in_train, k);
    let out_oracle = BigramOracle::new(&out_train, k);

    let mut q_by_domain = [Vec::new(), Vec::new()];
    for i in 0..200 {
        let domain = i % 2;
        let tgt = domain_sentence(&mut rng, if domain == 0 { &medical } else { &general }, &shared);
        let p = pair("x", &tgt.join(" "));
        let score = domain_feature(&p, &in_lm, &out_lm).map_err(|e| e.to_string())?;
        let brute = (in_oracle.logprob(&tgt) - out_oracle.logprob(&tgt)) / tgt.len() as f64;
        ensure!(
            (score.q - brute).abs() <= 1e-12 * brute.abs().max(f64::MIN_POSITIVE),
            "pair {i}: q={} brute={brute}",
            score.q
        );
        q_by_domain[domain].push(score.q);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mi, mo) = (mean(&q_by_domain[0]), mean(&q_by_domain[1]));
    ensure!(mi > mo, "in-domain mean q {mi} <= out-domain mean q {mo}");
    Ok(())
}

fn sampler() -> Check {
    let start = Instant::now();
    let q: Vec<f64> = (0..1000).map(|i| i as f64).collect();
    let lengths = vec![10usize; q.len()];
    let draw = |w: Vec<f64>| -> Result<[usize; 4], String> {
        let bins = build_bins(&q, 4)
            .and_then(|b| b.with_schedule(vec![w]))
            .map_err(|e| e.to_string())?;
        let mut counts = [0usize; 4];
        let sampler = CurriculumSampler::new(&bins, 0, 100, 42, &lengths).map_err(|e| e.to_string())?;
        for batch in sampler.take(100) {
            for s in batch.samples {
                counts[s.bin] += 1;
            }
        }
        Ok(counts)
    };
    let half = draw(vec![0.5, 0.5, 0.0, 0.0])?;
    ensure!(half.iter().sum::<usize>() == 10_000, "draws {half:?}");
    let f0 = half[0] as f64 / 10_000.0;
    ensure!((0.48..=0.52).contains(&f0), "bin-0 frequency {f0}");
    ensure!(half[2] == 0 && half[3] == 0, "zero-weight bins drawn: {half:?}");
    let all = draw(vec![1.0, 0.0, 0.0, 0.0])?;
    ensure!(all == [10_000, 0, 0, 0], "one-hot draws {all:?}");
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(1), "took {took:?}");
    Ok(())
}

fn bpe() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alphabet: Vec<char> = "abcdeéßxyz日本".chars().collect();
    let sentences: Vec<Vec<String>> = (0..1000)
        .map(|_| {
            (0..rng.gen_range(1..12))
                .map(|_| {
                    (0..rng.gen_range(1..9))
                        .map(|_| *alphabet.choose(&mut rng).unwrap())
                        .collect()
                })
                .collect()
        })
        .collect();
    let model = bpe_learn(&sentences, 300).map_err(|e| e.to_string())?;
    for (i, s) in sentences.iter().enumerate() {
        let back = bpe_decode(&bpe_apply(&model, s)).map_err(|e| e.to_string())?;
        ensure!(&back == s, "sentence {i} did not round-trip");
    }

    let first = bpe_learn(&[vec!["ab", "ab", "abc"]], 1).map_err(|e| e.to_string())?;
    ensure!(
        first.merges().first() == Some(&("a".to_string(), "b".to_string())),
        "first merge {:?}",
        first.merges().first()
    );

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (p1, p2) = (dir.path().join("a.bpe"), dir.path().join("b.bpe"));
    model.save(&p1).map_err(|e| e.to_string())?;
    BpeModel::load(&p1)
        .and_then(|m| m.save(&p2))
        .map_err(|e| e.to_string())?;
    let (b1, b2) = (fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    ensure!(b1 == b2, "model file changed on reload");
    ensure!(BpeModel::load(&p1).unwrap() == model, "reloaded model differs");
    Ok(())
}

fn ibm1() -> Check {
    let dict = [
        ("das", "the"),
        ("haus", "house"),
        ("ist", "is"),
        ("klein", "small"),
        ("hund", "dog"),
        ("rot", "red"),
    ];
    let pairs: Vec<SentencePair> = (0..100)
        .map(|i| {
            let len = 2 + i % 3;
            let idx: Vec<usize> = (0..len).map(|j| (i * 7 + j * 3 + i / 5) % dict.len()).collect();
            let src: Vec<&str> = idx.iter().map(|&k| dict[k].0).collect();
            let tgt: Vec<&str> = idx.iter().rev().map(|&k| dict[k].1).collect();
            pair(&src.join(" "), &tgt.join(" "))
        })
        .collect();
    let table = ibm1_train(&pairs, 10).map_err(|e| e.to_string())?;
    let ll = &table.log_likelihood;
    ensure!(ll.len() == 11, "{} log-likelihood entries", ll.len());
    for (it, w) in ll.windows(2).enumerate() {
        ensure!(
            w[1] >= w[0] - 1e-12 * w[0].abs(),
            "iteration {}: {} -> {}",
            it + 1,
            w[0],
            w[1]
        );
    }
    for src in table.sources() {
        let sum: f64 = table.row(src).unwrap().values().sum();
        ensure!((sum - 1.0).abs() < 1e-6, "row {src} sums to {sum}");
    }
    Ok(())
}

fn metrics() -> Check {
    let pv = |v: &[f64]| ProbVector::new(v.to_vec()).unwrap();
    let (p, q) = (pv(&[0.5, 0.5]), pv(&[0.25, 0.75]));
    ensure!(kl(&p, &p).unwrap() == 0.0, "kl(p,p) != 0");
    let bi = kl_bidirectional(&p, &q).unwrap();
    ensure!((bi - 0.2746).abs() < 1e-4, "bidirectional kl {bi}");
    let rd = rdrop_reg(&p, &q, 5.0).unwrap();
    ensure!((rd - 0.6866).abs() < 1e-4, "rdrop {rd}");

    let corpus = vec![vec!["the", "cat", "sat", "on", "the", "mat"], vec!["a", "b", "c", "d"]];
    let same = bleu(&corpus, &corpus, 4, Smoothing::None).unwrap();
    ensure!(same.bleu == 100.0, "identical-corpus bleu {}", same.bleu);
    let ex = bleu(
        &[vec!["the", "cat", "sat"]],
        &[vec!["the", "cat", "sat", "on", "mat"]],
        3,
        Smoothing::None,
    )
    .unwrap();
    ensure!((ex.bleu - 51.34).abs() < 0.01, "short-hypothesis bleu {}", ex.bleu);

    let ce = label_smoothed_ce(&ProbVector::uniform(4), 2, 0.1).unwrap();
    ensure!((ce - 4f64.ln()).abs() < 1e-9, "uniform ce {ce}");
    Ok(())
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let cfg = PipelineConfig::load(toy_dir().join("pipeline.toml")).map_err(|e| e.to_string())?;
    let ops: Vec<&str> = cfg.stages.iter().map(|s| s.op.name()).collect();
    for op in [
        "preprocess",
        "bpe_learn",
        "bpe_apply",
        "dd",
        "ft",
        "bt",
        "schedule",
        "curriculum_sample",
        "hypo",
    ] {
        ensure!(ops.contains(&op), "toy pipeline lacks `{op}`");
    }
    let mut runs = Vec::new();
    for jobs in [1, 1, 8] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let opts = RunOptions {
            jobs: Some(jobs),
            out_dir: Some(dir.path().to_path_buf()),
        };
        let manifest = run_pipeline(&cfg, &opts).map_err(|e| e.to_string())?;
        runs.push((jobs, manifest, tree(dir.path())));
    }
    let (_, m0, t0) = &runs[0];
    ensure!(t0.len() > 15, "only {} output files", t0.len());
    for (jobs, m, t) in &runs[1..] {
        ensure!(m == m0, "manifest differs (jobs={jobs})");
        for (a, b) in t0.iter().zip(t) {
            ensure!(a == b, "{} differs (jobs={jobs})", a.0);
        }
        ensure!(t.len() == t0.len(), "file count differs (jobs={jobs})");
    }
    Ok(())
}

fn peak_rss_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn throughput() -> Check {
    const LINES: usize = 1_000_000;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = dir.path().join("big.jsonl");
    let vocab: Vec<String> = (0..5000).map(|i| format!("w{i}")).collect();
    {
        let mut out = BufWriter::new(fs::File::create(&corpus).unwrap());
        for i in 0..LINES {
            // every 10th line repeats an earlier one; every 50th is over-long
            let seed = if i % 10 == 9 { (i / 2) as u64 } else { i as u64 };
            let mut line_rng = ChaCha8Rng::seed_from_u64(seed);
            let n = if i % 50 == 49 { 160 } else { line_rng.gen_range(3..25) };
            let m = (n as f64 * line_rng.gen_range(0.8..1.2)).round().max(1.0) as usize;
            let src: Vec<&str> = (0..n)
                .map(|_| vocab[line_rng.gen_range(0..vocab.len())].as_str())
                .collect();
            let tgt: Vec<&str> = (0..m).map(|j| vocab[(j * 31 + n) % vocab.len()].as_str()).collect();
            let rec = serde_json::json!({"src": src.join(" "), "tgt": tgt.join(" ")});
            writeln!(out, "{rec}").unwrap();
        }
        out.flush().unwrap();
    }
    let cfg_text = r#"
seed = 1
out_dir = "out"

[langs]
src = "de"
tgt = "en"

[[stages]]
op = "dedup"
input = "big.jsonl"
output = "dedup.jsonl"

[[stages]]
op = "filter"
input = "dedup.jsonl"
output = "filtered.jsonl"

[[stages]]
op = "stats"
input = "filtered.jsonl"
output = "stats.json"
"#;
    let cfg = PipelineConfig::parse(cfg_text, dir.path()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let manifest = run_pipeline(
        &cfg,
        &RunOptions {
            jobs: Some(1),
            out_dir: None,
        },
    )
    .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let peak = peak_rss_bytes();
    let out = dir.path().join("out");

    let dedup = manifest.stage("dedup").ok_or("no dedup stage")?;
    let filter = manifest.stage("filter").ok_or("no filter stage")?;
    ensure!(dedup.records_in == Some(LINES), "dedup read {:?}", dedup.records_in);
    let after_dedup = dedup.records_out.unwrap_or(0);
    let kept = filter.records_out.unwrap_or(0);
    ensure!(
        after_dedup < LINES && kept < after_dedup,
        "counts {LINES} -> {after_dedup} -> {kept}"
    );
    let stats: CorpusStats =
        serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).map_err(|e| e.to_string())?;
    ensure!(
        stats.pair_count == kept,
        "stats pair_count {} vs filter output {kept}",
        stats.pair_count
    );
    let reloaded =
        Manifest::from_json(&fs::read_to_string(out.join("manifest.json")).unwrap()).map_err(|e| e.to_string())?;
    ensure!(reloaded == manifest, "manifest on disk differs");

    println!(
        "    {LINES} lines: {after_dedup} after dedup, {kept} after filter, {took:.2?}, peak rss {} MB",
        peak.map_or("?".to_string(), |b| (b / (1 << 20)).to_string())
    );
    ensure!(took < Duration::from_secs(60), "took {took:?}");
    if let Some(b) = peak {
        ensure!(b < 512 << 20, "peak rss {} MB", b >> 20);
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("filter thresholds", thresholds),
        ("hypo qe gate and n-best cap", hypo_threshold),
        ("augmentation count laws", count_laws),
        ("domain feature oracle", domain_oracle),
        ("curriculum sampler", sampler),
        ("bpe round trip, first merge, model file", bpe),
        ("ibm model 1 likelihood and normalization", ibm1),
        ("metric constants", metrics),
        ("pipeline determinism", determinism),
        ("dedup + filter throughput", throughput),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(()) => println!("PASS {:>2} {name}", i + 1),
            Err(why) => {
                println!("FAIL {:>2} {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
