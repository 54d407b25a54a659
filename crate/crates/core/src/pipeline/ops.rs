use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Ctx, StageRun};
use crate::augment::{
    at_schedule, bit_reconstruct, bt_generate, dd_generate, ft_generate, hypo_build, sft_example, tel_build, BtOptions,
    LengthRatioQe, QualityEstimator, ScoreFieldQe, DEFAULT_APE_TEMPLATE, DEFAULT_BT_TAG, DEFAULT_NBEST,
    DEFAULT_QE_THRESHOLD,
};
use crate::corpus::{
    read_lines, read_records, record_writer, write_lines, write_records, ReadOptions, RecordFormat, Sentence,
    SentencePair, StatsBuilder,
};
use crate::curriculum::{
    build_bins, domain_feature, export_scores, load_external_scores, CurriculumBins, CurriculumSampler, DEFAULT_BINS,
};
use crate::error::{Error, Result};
use crate::preprocess::{
    ibm1_train, lid_train, split_long, Deduper, FilterChain, FilterConfig, FilterSpec, Normalizer, T2sMap,
    TranslationTable, DEFAULT_ITERATIONS, LID_DEFAULT_K, LID_DEFAULT_ORDER,
};
use crate::subword::{bpe_apply, bpe_learn_protected, BpeModel};
use crate::translator::{ChannelScorer, DecodeMode, DictTranslator, Lexicon, LmScorer, NgramLm, Scorer, Translator};

const CHUNK: usize = 1 << 14;

pub const DEFAULT_MERGES: usize = 8000;
pub const DEFAULT_LM_ORDER: usize = 3;
pub const DEFAULT_LM_K: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Src,
    #[default]
    Tgt,
}

/// One pipeline operation and its parameters. Paths are strings as written
/// in the config so manifests do not depend on where the run happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Op {
    /// Invisible-character stripping, width and punctuation normalization,
    /// optional traditional-to-simplified conversion.
    Preprocess {
        input: String,
        output: String,
        #[serde(default)]
        punct_langs: Vec<String>,
        #[serde(default)]
        t2s_map: Option<String>,
        #[serde(default)]
        t2s_langs: Vec<String>,
    },
    Dedup {
        input: String,
        output: String,
    },
    Filter {
        input: String,
        output: String,
        #[serde(default = "default_filters")]
        filters: Vec<FilterSpec>,
        #[serde(default)]
        report: Option<String>,
    },
    SplitLong {
        input: String,
        output: String,
        max_len: usize,
        #[serde(default)]
        side: Side,
    },
    LidTrain {
        samples: BTreeMap<String, String>,
        output: String,
        #[serde(default = "lid_order")]
        order: usize,
        #[serde(default = "lid_k")]
        k: f64,
    },
    AlignTrain {
        input: String,
        output: String,
        #[serde(default = "align_iterations")]
        iterations: usize,
    },
    LmTrain {
        input: String,
        output: String,
        #[serde(default)]
        side: Side,
        #[serde(default = "lm_order")]
        order: usize,
        #[serde(default = "lm_k")]
        k: f64,
    },
    /// Joint BPE over both sides of every input.
    BpeLearn {
        inputs: Vec<String>,
        output: String,
        #[serde(default = "merges")]
        merges: usize,
        #[serde(default)]
        protected: Vec<String>,
    },
    /// Writes `<output>.src` and `<output>.tgt`, one segmented sentence per line.
    BpeApply {
        input: String,
        model: String,
        output: String,
    },
    Bit {
        input: String,
        output: String,
    },
    Dd {
        input: String,
        output: String,
        forward: String,
        backward: String,
        #[serde(default = "yes")]
        dedup: bool,
    },
    Ft {
        input: String,
        output: String,
        teacher: String,
        sample_size: usize,
    },
    Bt {
        input: String,
        output: String,
        reverse: String,
        #[serde(default = "beam")]
        mode: DecodeMode,
        #[serde(default)]
        tagged: bool,
        #[serde(default = "bt_tag")]
        tag: String,
        #[serde(default = "one")]
        temperature: f64,
    },
    Tel {
        input: String,
        output: String,
        models: Vec<String>,
    },
    Concat {
        inputs: Vec<String>,
        output: String,
        #[serde(default)]
        dedup: bool,
    },
    Schedule {
        authentic: String,
        #[serde(default)]
        synthetic: Vec<String>,
        #[serde(default = "one_round")]
        rounds: u32,
        output: String,
    },
    CurriculumScore {
        input: String,
        output: String,
        in_lm: String,
        out_lm: String,
        #[serde(default)]
        in_table: Option<String>,
        #[serde(default)]
        out_table: Option<String>,
    },
    CurriculumBins {
        input: String,
        scores: String,
        output: String,
        #[serde(default = "bins")]
        bins: usize,
    },
    CurriculumSample {
        input: String,
        bins: String,
        output: String,
        batch_size: usize,
        batches: usize,
        #[serde(default)]
        phase: usize,
        #[serde(default)]
        coverage: bool,
    },
    Hypo {
        input: String,
        output: String,
        base: String,
        #[serde(default = "qe_threshold")]
        threshold: f64,
        #[serde(default = "nbest")]
        n: usize,
        /// Read QE scores from this record score field instead of the
        /// length-ratio estimator.
        #[serde(default)]
        qe_field: Option<String>,
        #[serde(default)]
        sft: Option<String>,
        #[serde(default)]
        template: Option<String>,
    },
    Stats {
        input: String,
        output: String,
    },
}

fn default_filters() -> Vec<FilterSpec> {
    FilterConfig::default().filters
}
fn lid_order() -> usize {
    LID_DEFAULT_ORDER
}
fn lid_k() -> f64 {
    LID_DEFAULT_K
}
fn align_iterations() -> usize {
    DEFAULT_ITERATIONS
}
fn lm_order() -> usize {
    DEFAULT_LM_ORDER
}
fn lm_k() -> f64 {
    DEFAULT_LM_K
}
fn merges() -> usize {
    DEFAULT_MERGES
}
fn yes() -> bool {
    true
}
fn beam() -> DecodeMode {
    DecodeMode::Beam
}
fn bt_tag() -> String {
    DEFAULT_BT_TAG.to_string()
}
fn one() -> f64 {
    1.0
}
fn one_round() -> u32 {
    1
}
fn bins() -> usize {
    DEFAULT_BINS
}
fn qe_threshold() -> f64 {
    DEFAULT_QE_THRESHOLD
}
fn nbest() -> usize {
    DEFAULT_NBEST
}

impl Op {
    pub const NAMES: &'static [&'static str] = &[
        "preprocess",
        "dedup",
        "filter",
        "split_long",
        "lid_train",
        "align_train",
        "lm_train",
        "bpe_learn",
        "bpe_apply",
        "bit",
        "dd",
        "ft",
        "bt",
        "tel",
        "concat",
        "schedule",
        "curriculum_score",
        "curriculum_bins",
        "curriculum_sample",
        "hypo",
        "stats",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Op::Preprocess { .. } => "preprocess",
            Op::Dedup { .. } => "dedup",
            Op::Filter { .. } => "filter",
            Op::SplitLong { .. } => "split_long",
            Op::LidTrain { .. } => "lid_train",
            Op::AlignTrain { .. } => "align_train",
            Op::LmTrain { .. } => "lm_train",
            Op::BpeLearn { .. } => "bpe_learn",
            Op::BpeApply { .. } => "bpe_apply",
            Op::Bit { .. } => "bit",
            Op::Dd { .. } => "dd",
            Op::Ft { .. } => "ft",
            Op::Bt { .. } => "bt",
            Op::Tel { .. } => "tel",
            Op::Concat { .. } => "concat",
            Op::Schedule { .. } => "schedule",
            Op::CurriculumScore { .. } => "curriculum_score",
            Op::CurriculumBins { .. } => "curriculum_bins",
            Op::CurriculumSample { .. } => "curriculum_sample",
            Op::Hypo { .. } => "hypo",
            Op::Stats { .. } => "stats",
        }
    }
}

fn fmt_of(p: &str) -> RecordFormat {
    RecordFormat::from_path(Path::new(p))
}

fn read_opts(ctx: &Ctx, p: &str) -> ReadOptions {
    ReadOptions::new(fmt_of(p), &ctx.langs.src, &ctx.langs.tgt)
}

fn read_pairs(ctx: &Ctx, run: &mut StageRun, p: &str) -> Result<(Vec<SentencePair>, usize)> {
    let path = run.input(ctx, p);
    let mut reader = read_records(&path, &read_opts(ctx, p))?;
    let pairs = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((pairs, reader.skipped()))
}

/// `.txt` inputs are monolingual lines; anything else is a record file from
/// which one side is taken.
fn read_side(ctx: &Ctx, run: &mut StageRun, p: &str, side: Side) -> Result<Vec<Sentence>> {
    if p.ends_with(".txt") {
        let path = run.input(ctx, p);
        return read_lines(path, ctx.lang(side));
    }
    let (pairs, _) = read_pairs(ctx, run, p)?;
    Ok(pairs
        .into_iter()
        .map(|pair| match side {
            Side::Src => pair.src,
            Side::Tgt => pair.tgt,
        })
        .collect())
}

fn write_pairs(ctx: &Ctx, run: &mut StageRun, p: &str, pairs: &[SentencePair]) -> Result<usize> {
    let path = run.output(ctx, p)?;
    let n = write_records(pairs, path, fmt_of(p))?;
    run.records_out = Some(n);
    Ok(n)
}

fn translator(ctx: &Ctx, run: &mut StageRun, p: &str, side: Side) -> Result<DictTranslator> {
    let path = run.input(ctx, p);
    Ok(DictTranslator::new(Lexicon::load(path)?, ctx.lang(side)))
}

/// Reads `input` in chunks, transforms each chunk and writes the survivors.
fn stream<F>(ctx: &Ctx, run: &mut StageRun, input: &str, output: &str, mut f: F) -> Result<()>
where
    F: FnMut(Vec<SentencePair>) -> Result<Vec<SentencePair>>,
{
    let in_path = run.input(ctx, input);
    let out_path = run.output(ctx, output)?;
    let mut reader = read_records(&in_path, &read_opts(ctx, input))?;
    let mut writer = record_writer(&out_path, fmt_of(output))?;
    let mut read = 0;
    loop {
        let chunk = reader.by_ref().take(CHUNK).collect::<Result<Vec<_>>>()?;
        if chunk.is_empty() {
            break;
        }
        read += chunk.len();
        for pair in f(chunk)? {
            writer.write(&pair)?;
        }
    }
    run.records_in = Some(read);
    run.records_out = Some(writer.finish().map_err(|e| match e {
        Error::Stream(io) => Error::io(&out_path, io),
        other => other,
    })?);
    run.details = json!({ "skipped": reader.skipped() });
    Ok(())
}

pub(super) fn execute(op: &Op, ctx: &Ctx, seed: u64) -> Result<StageRun> {
    let mut run = StageRun::default();
    let r = &mut run;
    match op {
        Op::Preprocess {
            input,
            output,
            punct_langs,
            t2s_map,
            t2s_langs,
        } => {
            let t2s = match t2s_map {
                Some(p) => Some(T2sMap::load(r.input(ctx, p))?),
                None => None,
            };
            let norm = Normalizer {
                punct_langs: punct_langs.clone(),
                t2s,
                t2s_langs: t2s_langs.clone(),
            };
            stream(ctx, r, input, output, |chunk| {
                Ok(chunk.par_iter().map(|p| norm.pair(p)).collect())
            })?;
        }
        Op::Dedup { input, output } => {
            let mut seen = Deduper::new();
            stream(ctx, r, input, output, |chunk| {
                Ok(chunk.into_iter().filter(|p| seen.first_pair(p)).collect())
            })?;
        }
        Op::Filter {
            input,
            output,
            filters,
            report,
        } => {
            let mut cfg = FilterConfig {
                filters: filters.clone(),
            };
            for f in &mut cfg.filters {
                if let FilterSpec::Lid { model: p, .. } | FilterSpec::Align { table: p, .. } = f {
                    *p = r.input(ctx, &p.to_string_lossy());
                }
            }
            let chain = FilterChain::from_config(&cfg)?;
            let mut rep = chain.new_report();
            stream(ctx, r, input, output, |chunk| Ok(chain.filter_batch(chunk, &mut rep)))?;
            if let Some(p) = report {
                let path = r.output(ctx, p)?;
                fs::write(&path, rep.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
            }
            let skipped = r.details["skipped"].clone();
            r.details = json!({
                "skipped": skipped,
                "filters": rep.filters.iter().map(|f| json!({
                    "name": f.name, "input": f.input, "kept": f.kept, "dropped": f.dropped,
                })).collect::<Vec<_>>(),
            });
        }
        Op::SplitLong {
            input,
            output,
            max_len,
            side,
        } => {
            let sents = read_side(ctx, r, input, *side)?;
            r.records_in = Some(sents.len());
            let pieces: Vec<Vec<Sentence>> = sents.par_iter().map(|s| split_long(s, *max_len)).collect();
            let path = r.output(ctx, output)?;
            let n = write_lines(pieces.iter().flatten().map(Sentence::text), path)?;
            r.records_out = Some(n);
        }
        Op::LidTrain {
            samples,
            output,
            order,
            k,
        } => {
            let mut by_lang = BTreeMap::new();
            for (lang, p) in samples {
                let lines = read_lines(r.input(ctx, p), lang)?;
                by_lang.insert(
                    lang.clone(),
                    lines.iter().map(|s| s.text().to_string()).collect::<Vec<_>>(),
                );
            }
            lid_train(&by_lang, *order, *k)?.save(r.output(ctx, output)?)?;
        }
        Op::AlignTrain {
            input,
            output,
            iterations,
        } => {
            let (pairs, _) = read_pairs(ctx, r, input)?;
            r.records_in = Some(pairs.len());
            let table = ibm1_train(&pairs, *iterations)?;
            table.save(r.output(ctx, output)?)?;
            r.details = json!({ "log_likelihood": table.log_likelihood });
        }
        Op::LmTrain {
            input,
            output,
            side,
            order,
            k,
        } => {
            let sents = read_side(ctx, r, input, *side)?;
            r.records_in = Some(sents.len());
            let corpus: Vec<&[String]> = sents.iter().map(Sentence::tokens).collect();
            NgramLm::train(&corpus, *order, *k)?.save(r.output(ctx, output)?)?;
        }
        Op::BpeLearn {
            inputs,
            output,
            merges,
            protected,
        } => {
            let mut corpus: Vec<Vec<String>> = Vec::new();
            for p in inputs {
                let (pairs, _) = read_pairs(ctx, r, p)?;
                for pair in pairs {
                    corpus.push(pair.src.tokens().to_vec());
                    corpus.push(pair.tgt.tokens().to_vec());
                }
            }
            r.records_in = Some(corpus.len() / 2);
            let model = bpe_learn_protected(&corpus, *merges, protected)?;
            r.details = json!({ "merges": model.num_merges() });
            model.save(r.output(ctx, output)?)?;
        }
        Op::BpeApply { input, model, output } => {
            let model = BpeModel::load(r.input(ctx, model))?;
            let (pairs, _) = read_pairs(ctx, r, input)?;
            r.records_in = Some(pairs.len());
            let seg = |s: &Sentence| bpe_apply(&model, s.tokens()).join(" ");
            let (src, tgt): (Vec<String>, Vec<String>) = pairs.par_iter().map(|p| (seg(&p.src), seg(&p.tgt))).unzip();
            write_lines(&src, r.output(ctx, &format!("{output}.src"))?)?;
            r.records_out = Some(write_lines(&tgt, r.output(ctx, &format!("{output}.tgt"))?)?);
        }
        Op::Bit { input, output } => {
            let (pairs, _) = read_pairs(ctx, r, input)?;
            r.records_in = Some(pairs.len());
            write_pairs(ctx, r, output, &bit_reconstruct(&pairs))?;
        }
        Op::Dd {
            input,
            output,
            forward,
            backward,
            dedup,
        } => {
            let fwd = translator(ctx, r, forward, Side::Tgt)?;
            let bwd = translator(ctx, r, backward, Side::Src)?;
            let (pairs, _) = read_pairs(ctx, r, input)?;
            r.records_in = Some(pairs.len());
            let out = dd_generate(&pairs, &fwd, &bwd, *dedup);
            r.details = json!({ "translation_failures": out.skipped });
            write_pairs(ctx, r, output, &out.pairs)?;
        }
        Op::Ft {
            input,
            output,
            teacher,
            sample_size,
        } => {
            let teacher = translator(ctx, r, teacher, Side::Tgt)?;
            let mono = read_side(ctx, r, input, Side::Src)?;
            r.records_in = Some(mono.len());
            write_pairs(ctx, r, output, &ft_generate(&mono, &teacher, *sample_size, seed)?)?;
        }
        Op::Bt {
            input,
            output,
            reverse,
            mode,
            tagged,
            tag,
            temperature,
        } => {
            let reverse = translator(ctx, r, reverse, Side::Src)?;
            let mono = read_side(ctx, r, input, Side::Tgt)?;
            r.records_in = Some(mono.len());
            let opts = BtOptions {
                mode: *mode,
                tagged: *tagged,
                tag: tag.clone(),
                temperature: *temperature,
                seed,
            };
            write_pairs(ctx, r, output, &bt_generate(&mono, &reverse, &opts)?)?;
        }
        Op::Tel { input, output, models } => {
            let models = models
                .iter()
                .map(|m| translator(ctx, r, m, Side::Tgt))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&dyn Translator> = models.iter().map(|m| m as &dyn Translator).collect();
            let sources = read_side(ctx, r, input, Side::Src)?;
            r.records_in = Some(sources.len());
            write_pairs(ctx, r, output, &tel_build(&sources, &refs)?)?;
        }
        Op::Concat { inputs, output, dedup } => {
            let mut all = Vec::new();
            for p in inputs {
                all.extend(read_pairs(ctx, r, p)?.0);
            }
            r.records_in = Some(all.len());
            if *dedup {
                let mut seen = Deduper::new();
                all.retain(|p| seen.first_pair(p));
            }
            write_pairs(ctx, r, output, &all)?;
        }
        Op::Schedule {
            authentic,
            synthetic,
            rounds,
            output,
        } => {
            let mut labels: BTreeMap<PathBuf, String> = BTreeMap::new();
            let a = r.input(ctx, authentic);
            labels.insert(a.clone(), authentic.clone());
            let mut syn = Vec::new();
            for s in synthetic {
                let p = r.input(ctx, s);
                labels.insert(p.clone(), s.clone());
                syn.push(p);
            }
            let mut schedule = at_schedule(&a, &syn, *rounds)?;
            for phase in &mut schedule.phases {
                for d in &mut phase.datasets {
                    *d = PathBuf::from(&labels[d]);
                }
            }
            r.details = json!({ "phases": schedule.phases.len() });
            schedule.save(r.output(ctx, output)?)?;
        }
        Op::CurriculumScore {
            input,
            output,
            in_lm,
            out_lm,
            in_table,
            out_table,
        } => {
            let in_s = scorer(ctx, r, in_lm, in_table.as_deref())?;
            let out_s = scorer(ctx, r, out_lm, out_table.as_deref())?;
            let (pairs, _) = read_pairs(ctx, r, input)?;
            r.records_in = Some(pairs.len());
            let scores = pairs
                .par_iter()
                .map(|p| domain_feature(p, in_s.as_ref(), out_s.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            export_scores(&scores, r.output(ctx, output)?)?;
            r.records_out = Some(scores.len());
        }
        Op::CurriculumBins {
            input,
            scores,
            output,
            bins,
        } => {
            let (pairs, _) = read_pairs(ctx, r, input)?;
            let rows = load_external_scores(r.input(ctx, scores), pairs.len())?;
            r.records_in = Some(pairs.len());
            let q = pairs
                .iter()
                .zip(&rows)
                .map(|(p, &(a, b))| crate::curriculum::DifficultyScore::new(a, b, p.tgt.len()).map(|d| d.q))
                .collect::<Result<Vec<_>>>()?;
            let built = build_bins(&q, *bins)?;
            r.details = json!({ "bin_sizes": built.bins.iter().map(Vec::len).collect::<Vec<_>>() });
            let path = r.output(ctx, output)?;
            fs::write(&path, built.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
        }
        Op::CurriculumSample {
            input,
            bins,
            output,
            batch_size,
            batches,
            phase,
            coverage,
        } => {
            let (pairs, _) = read_pairs(ctx, r, input)?;
            let bins_path = r.input(ctx, bins);
            let text = fs::read_to_string(&bins_path).map_err(|e| Error::io(&bins_path, e))?;
            let bins = CurriculumBins::from_json(&text)?;
            if bins.record_count() != pairs.len() {
                return Err(Error::config(format!(
                    "bins cover {} records but {input} has {}",
                    bins.record_count(),
                    pairs.len()
                )));
            }
            let lengths: Vec<usize> = pairs.iter().map(|p| p.tgt.len()).collect();
            let mut sampler = CurriculumSampler::new(&bins, *phase, *batch_size, seed, &lengths)?;
            if *coverage {
                sampler = sampler.with_coverage();
            }
            let path = r.output(ctx, output)?;
            let mut out = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
            for batch in sampler.take(*batches) {
                let line = serde_json::to_string(&batch).expect("batch serializes");
                writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
            }
            out.flush().map_err(|e| Error::io(&path, e))?;
            r.records_in = Some(pairs.len());
            r.records_out = Some(*batches);
        }
        Op::Hypo {
            input,
            output,
            base,
            threshold,
            n,
            qe_field,
            sft,
            template,
        } => {
            let base = translator(ctx, r, base, Side::Tgt)?;
            let template = match template {
                Some(p) => {
                    let path = r.input(ctx, p);
                    fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?
                }
                None => DEFAULT_APE_TEMPLATE.to_string(),
            };
            let (pairs, _) = read_pairs(ctx, r, input)?;
            r.records_in = Some(pairs.len());
            let qe: Box<dyn QualityEstimator> = match qe_field {
                Some(f) => Box::new(ScoreFieldQe::new(f)),
                None => Box::new(LengthRatioQe),
            };
            let records = hypo_build(&pairs, &base, qe.as_ref(), *threshold, *n)?;
            let lines: Vec<String> = records.iter().map(|rec| rec.to_json_line()).collect();
            r.records_out = Some(write_lines(&lines, r.output(ctx, output)?)?);
            if let Some(p) = sft {
                let lines = records
                    .iter()
                    .map(|rec| Ok(serde_json::to_string(&sft_example(rec, &template)?).expect("sft serializes")))
                    .collect::<Result<Vec<_>>>()?;
                write_lines(&lines, r.output(ctx, p)?)?;
            }
        }
        Op::Stats { input, output } => {
            let path = r.input(ctx, input);
            let mut reader = read_records(&path, &read_opts(ctx, input))?;
            let mut acc = StatsBuilder::default();
            for pair in reader.by_ref() {
                acc.push(&pair?);
            }
            let skipped = reader.skipped();
            let stats = acc.finish();
            r.records_in = Some(stats.pair_count);
            let path = r.output(ctx, output)?;
            let text = serde_json::to_string_pretty(&stats).expect("stats serialize");
            fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
            r.details = json!({ "skipped": skipped });
        }
    }
    Ok(run)
}

fn scorer(ctx: &Ctx, run: &mut StageRun, lm: &str, table: Option<&str>) -> Result<Box<dyn Scorer>> {
    let lm = NgramLm::load(run.input(ctx, lm))?;
    Ok(match table {
        Some(t) => Box::new(ChannelScorer::new(TranslationTable::load(run.input(ctx, t))?, lm)),
        None => Box::new(LmScorer::new(lm)),
    })
}
