mod args;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use rayon::prelude::*;

use corpusforge::augment::{
    at_schedule, bit_reconstruct, bt_generate, dd_generate, ft_generate, hypo_build, sft_example, tel_build, BtOptions,
    LengthRatioQe, QualityEstimator, ScoreFieldQe, DEFAULT_APE_TEMPLATE,
};
use corpusforge::corpus::{read_lines, read_records, ReadOptions, RecordFormat, RecordWriter, StatsBuilder, Tokenizer};
use corpusforge::curriculum::{
    build_bins, domain_feature, export_scores, load_external_scores, CurriculumBins, CurriculumSampler, DifficultyScore,
};
use corpusforge::metrics::{bleu, Smoothing};
use corpusforge::pipeline::{run_pipeline, PipelineConfig, RunOptions, MANIFEST_FILE};
use corpusforge::preprocess::{
    align_score, ibm1_train, lid_classify, lid_train, split_long, Deduper, FilterChain, FilterConfig, LidModel,
    Normalizer, T2sMap, TranslationTable,
};
use corpusforge::seed::derive_seed;
use corpusforge::subword::{bpe_apply, bpe_decode, bpe_learn_protected, BpeModel};
use corpusforge::translator::{
    ChannelScorer, DecodeMode, DictTranslator, Lexicon, LmScorer, NgramLm, Scorer, Translator,
};
use corpusforge::{Error, Sentence, SentencePair};

use args::{
    AlignCommand, AugmentCommand, BpeCommand, Cli, Command, CurriculumCommand, Format, Global, LidCommand, LmCommand,
    ScoreCommand, SideArg,
};

const CHUNK: usize = 1 << 14;

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(Error::Stream(e))
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.global.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }

    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            let mut msg = e.to_string();
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                msg.push_str(&format!(": {s}"));
                source = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let g = &cli.global;
    match cli.command {
        Command::Preprocess(a) => preprocess(g, a),
        Command::Split(a) => {
            let sents = read_lines(&a.input, &a.lang)?;
            let mut out = sink(g)?;
            for s in &sents {
                for piece in split_long(s, a.max_len) {
                    writeln!(out, "{}", piece.text())?;
                }
            }
            Ok(out.flush()?)
        }
        Command::Bpe(c) => bpe(g, c),
        Command::Augment(c) => augment(g, c),
        Command::Curriculum(c) => curriculum(g, c),
        Command::Score(ScoreCommand::Bleu {
            hyp,
            reference,
            max_n,
            smooth,
            lang,
        }) => {
            let tok = Tokenizer::for_lang(&lang);
            let read = |p: &Path| -> Result<Vec<Vec<String>>, Failure> {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Ok(text.lines().map(|l| tok.tokenize(l)).collect())
            };
            let smoothing = if smooth { Smoothing::Add1 } else { Smoothing::None };
            let score = bleu(&read(&hyp)?, &read(&reference)?, max_n, smoothing)?;
            let json = serde_json::json!({
                "bleu": score.bleu,
                "brevity_penalty": score.brevity_penalty,
                "precisions": score.precisions,
            });
            emit(g, &(serde_json::to_string_pretty(&json).expect("json") + "\n"))
        }
        Command::Stats(a) => {
            let mut reader = read_records(&a.input, &read_opts(g, &a.input))?;
            let mut acc = StatsBuilder::default();
            for pair in reader.by_ref() {
                acc.push(&pair?);
            }
            if reader.skipped() > 0 {
                log::warn!("{}: skipped {} malformed lines", a.input.display(), reader.skipped());
            }
            let stats = acc.finish();
            emit(g, &(serde_json::to_string_pretty(&stats).expect("json") + "\n"))
        }
        Command::Lid(c) => lid(g, c),
        Command::Align(c) => align(g, c),
        Command::Lm(LmCommand::Train { input, side, order, k }) => {
            let out = required_out(g)?;
            let sents = read_side(g, &input, side)?;
            let corpus: Vec<&[String]> = sents.iter().map(Sentence::tokens).collect();
            NgramLm::train(&corpus, order, k)?.save(out)?;
            Ok(())
        }
        Command::Run(a) => run(g, a),
    }
}

fn sink(g: &Global) -> Result<Box<dyn Write>, Failure> {
    Ok(match &g.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(g: &Global, text: &str) -> CmdResult {
    let mut out = sink(g)?;
    out.write_all(text.as_bytes())?;
    Ok(out.flush()?)
}

fn required_out(g: &Global) -> Result<&Path, Failure> {
    g.out
        .as_deref()
        .ok_or_else(|| Failure::Usage("this command writes a model file; pass --out".into()))
}

fn out_format(g: &Global) -> RecordFormat {
    match (g.format, &g.out) {
        (Some(Format::Jsonl), _) => RecordFormat::Jsonl,
        (Some(Format::Tsv), _) => RecordFormat::Tsv,
        (None, Some(p)) => RecordFormat::from_path(p),
        (None, None) => RecordFormat::Jsonl,
    }
}

fn read_opts(g: &Global, p: &Path) -> ReadOptions {
    ReadOptions::new(RecordFormat::from_path(p), &g.src_lang, &g.tgt_lang)
}

fn read_pairs(g: &Global, p: &Path) -> Result<Vec<SentencePair>, Failure> {
    let mut reader = read_records(p, &read_opts(g, p))?;
    let pairs = reader.by_ref().collect::<corpusforge::Result<Vec<_>>>()?;
    if reader.skipped() > 0 {
        log::warn!("{}: skipped {} malformed lines", p.display(), reader.skipped());
    }
    Ok(pairs)
}

fn is_text(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "txt")
}

/// `.txt` files are monolingual; record files contribute one side.
fn read_side(g: &Global, p: &Path, side: SideArg) -> Result<Vec<Sentence>, Failure> {
    let lang = match side {
        SideArg::Src => &g.src_lang,
        SideArg::Tgt => &g.tgt_lang,
    };
    if is_text(p) {
        return Ok(read_lines(p, lang)?);
    }
    Ok(read_pairs(g, p)?
        .into_iter()
        .map(|pair| match side {
            SideArg::Src => pair.src,
            SideArg::Tgt => pair.tgt,
        })
        .collect())
}

fn write_pairs(g: &Global, pairs: &[SentencePair]) -> CmdResult {
    let mut w = RecordWriter::new(sink(g)?, out_format(g));
    for p in pairs {
        w.write(p)?;
    }
    w.finish()?;
    Ok(())
}

fn write_lines(g: &Global, lines: impl IntoIterator<Item = String>) -> CmdResult {
    let mut out = sink(g)?;
    for l in lines {
        writeln!(out, "{l}")?;
    }
    Ok(out.flush()?)
}

fn dict(path: &Path, lang: &str) -> Result<DictTranslator, Failure> {
    Ok(DictTranslator::new(Lexicon::load(path)?, lang))
}

fn preprocess(g: &Global, a: args::PreprocessArgs) -> CmdResult {
    let t2s = a.t2s_map.as_ref().map(T2sMap::load).transpose()?;
    let norm = Normalizer {
        punct_langs: a.punct_langs,
        t2s,
        t2s_langs: a.t2s_langs,
    };
    let cfg = match &g.config {
        Some(p) => FilterConfig::load(p)?,
        None => FilterConfig::default(),
    };
    let chain = FilterChain::from_config(&cfg)?;
    let mut report = chain.new_report();
    let mut seen = Deduper::new();
    let mut reader = read_records(&a.input, &read_opts(g, &a.input))?;
    let mut w = RecordWriter::new(sink(g)?, out_format(g));
    loop {
        let chunk = reader.by_ref().take(CHUNK).collect::<corpusforge::Result<Vec<_>>>()?;
        if chunk.is_empty() {
            break;
        }
        let mut pairs: Vec<SentencePair> = chunk.par_iter().map(|p| norm.pair(p)).collect();
        if !a.no_dedup {
            pairs.retain(|p| seen.first_pair(p));
        }
        if !a.no_filter {
            pairs = chain.filter_batch(pairs, &mut report);
        }
        for p in &pairs {
            w.write(p)?;
        }
    }
    let written = w.finish()?;
    log::info!(
        "read {} records, skipped {} malformed lines, wrote {written}",
        reader.lines_read(),
        reader.skipped()
    );
    if let Some(p) = &a.report {
        fs::write(p, report.to_json() + "\n").map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn bpe(g: &Global, c: BpeCommand) -> CmdResult {
    match c {
        BpeCommand::Learn { input, merges, protect } => {
            let mut corpus: Vec<Vec<String>> = Vec::new();
            for p in &input {
                if is_text(p) {
                    corpus.extend(read_lines(p, &g.src_lang)?.iter().map(|s| s.tokens().to_vec()));
                } else {
                    for pair in read_pairs(g, p)? {
                        corpus.push(pair.src.tokens().to_vec());
                        corpus.push(pair.tgt.tokens().to_vec());
                    }
                }
            }
            let model = bpe_learn_protected(&corpus, merges, &protect)?;
            emit(g, &model.to_file_string())
        }
        BpeCommand::Apply { model, input, lang } => {
            let model = BpeModel::load(model)?;
            let sents = read_lines(&input, &lang)?;
            let lines: Vec<String> = sents
                .par_iter()
                .map(|s| bpe_apply(&model, s.tokens()).join(" "))
                .collect();
            write_lines(g, lines)
        }
        BpeCommand::Decode { input } => {
            let text = fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
            let lines = text
                .lines()
                .map(|l| Ok(bpe_decode(&l.split_whitespace().collect::<Vec<_>>())?.join(" ")))
                .collect::<Result<Vec<_>, Failure>>()?;
            write_lines(g, lines)
        }
    }
}

fn augment(g: &Global, c: AugmentCommand) -> CmdResult {
    match c {
        AugmentCommand::Bit(a) => write_pairs(g, &bit_reconstruct(&read_pairs(g, &a.input)?)),
        AugmentCommand::Dd {
            input,
            forward,
            backward,
            no_dedup,
        } => {
            let fwd = dict(&forward, &g.tgt_lang)?;
            let bwd = dict(&backward, &g.src_lang)?;
            let out = dd_generate(&read_pairs(g, &input)?, &fwd, &bwd, !no_dedup);
            if out.skipped > 0 {
                log::warn!("{} translations failed and were skipped", out.skipped);
            }
            write_pairs(g, &out.pairs)
        }
        AugmentCommand::Ft {
            input,
            teacher,
            sample_size,
        } => {
            let teacher = dict(&teacher, &g.tgt_lang)?;
            let mono = read_side(g, &input, SideArg::Src)?;
            write_pairs(
                g,
                &ft_generate(&mono, &teacher, sample_size, derive_seed(g.seed, b"ft"))?,
            )
        }
        AugmentCommand::Bt {
            input,
            reverse,
            sampling,
            tagged,
            tag,
            temperature,
        } => {
            let reverse = dict(&reverse, &g.src_lang)?;
            let mono = read_side(g, &input, SideArg::Tgt)?;
            let opts = BtOptions {
                mode: if sampling {
                    DecodeMode::Sampling
                } else {
                    DecodeMode::Beam
                },
                tagged,
                tag,
                temperature,
                seed: derive_seed(g.seed, b"bt"),
            };
            write_pairs(g, &bt_generate(&mono, &reverse, &opts)?)
        }
        AugmentCommand::Tel { input, models, dedup } => {
            let models = models
                .iter()
                .map(|m| dict(m, &g.tgt_lang))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&dyn Translator> = models.iter().map(|m| m as &dyn Translator).collect();
            let mut pairs = tel_build(&read_side(g, &input, SideArg::Src)?, &refs)?;
            if dedup {
                let mut seen = Deduper::new();
                pairs.retain(|p| seen.first_pair(p));
            }
            write_pairs(g, &pairs)
        }
        AugmentCommand::Hypo {
            input,
            base,
            threshold,
            n,
            qe_field,
            sft,
            template,
        } => {
            let base = dict(&base, &g.tgt_lang)?;
            let qe: Box<dyn QualityEstimator> = match qe_field {
                Some(f) => Box::new(ScoreFieldQe::new(f)),
                None => Box::new(LengthRatioQe),
            };
            let template = match template {
                Some(p) => fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?,
                None => DEFAULT_APE_TEMPLATE.to_string(),
            };
            let records = hypo_build(&read_pairs(g, &input)?, &base, qe.as_ref(), threshold, n)?;
            if let Some(p) = sft {
                let mut out = BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?);
                for rec in &records {
                    let line = serde_json::to_string(&sft_example(rec, &template)?).expect("json");
                    writeln!(out, "{line}")?;
                }
                out.flush()?;
            }
            write_lines(g, records.iter().map(|r| r.to_json_line()))
        }
        AugmentCommand::Schedule {
            authentic,
            synthetic,
            rounds,
        } => emit(g, &(at_schedule(&authentic, &synthetic, rounds)?.to_json() + "\n")),
    }
}

fn scorer(lm: &Path, table: Option<&PathBuf>) -> Result<Box<dyn Scorer>, Failure> {
    let lm = NgramLm::load(lm)?;
    Ok(match table {
        Some(t) => Box::new(ChannelScorer::new(TranslationTable::load(t)?, lm)),
        None => Box::new(LmScorer::new(lm)),
    })
}

fn curriculum(g: &Global, c: CurriculumCommand) -> CmdResult {
    match c {
        CurriculumCommand::Score {
            input,
            in_lm,
            out_lm,
            in_table,
            out_table,
        } => {
            let in_s = scorer(&in_lm, in_table.as_ref())?;
            let out_s = scorer(&out_lm, out_table.as_ref())?;
            let pairs = read_pairs(g, &input)?;
            let scores = pairs
                .par_iter()
                .map(|p| domain_feature(p, in_s.as_ref(), out_s.as_ref()))
                .collect::<corpusforge::Result<Vec<_>>>()?;
            match &g.out {
                Some(p) => Ok(export_scores(&scores, p)?),
                None => write_lines(
                    g,
                    scores
                        .iter()
                        .enumerate()
                        .map(|(i, d)| format!("{i}\t{}\t{}\t{}", d.logprob_in, d.logprob_out, d.q)),
                ),
            }
        }
        CurriculumCommand::Bins { input, scores, bins } => {
            let pairs = read_pairs(g, &input)?;
            let rows = load_external_scores(&scores, pairs.len())?;
            let q = pairs
                .iter()
                .zip(&rows)
                .map(|(p, &(a, b))| DifficultyScore::new(a, b, p.tgt.len()).map(|d| d.q))
                .collect::<corpusforge::Result<Vec<_>>>()?;
            emit(g, &(build_bins(&q, bins)?.to_json() + "\n"))
        }
        CurriculumCommand::Sample {
            input,
            bins,
            phase,
            batch_size,
            batches,
            coverage,
        } => {
            let pairs = read_pairs(g, &input)?;
            let text = fs::read_to_string(&bins).map_err(|e| Error::io(&bins, e))?;
            let bins = CurriculumBins::from_json(&text)?;
            let lengths: Vec<usize> = pairs.iter().map(|p| p.tgt.len()).collect();
            let mut sampler = CurriculumSampler::new(
                &bins,
                phase,
                batch_size,
                derive_seed(g.seed, b"curriculum_sample"),
                &lengths,
            )?;
            if coverage {
                sampler = sampler.with_coverage();
            }
            write_lines(
                g,
                sampler.take(batches).map(|b| serde_json::to_string(&b).expect("json")),
            )
        }
    }
}

fn lid(g: &Global, c: LidCommand) -> CmdResult {
    match c {
        LidCommand::Train { samples, order, k } => {
            let out = required_out(g)?;
            let mut by_lang = std::collections::BTreeMap::new();
            for (lang, path) in samples {
                let lines: Vec<String> = read_lines(&path, &lang)?.iter().map(|s| s.text().to_string()).collect();
                by_lang.entry(lang).or_insert_with(Vec::new).extend(lines);
            }
            lid_train(&by_lang, order, k)?.save(out)?;
            Ok(())
        }
        LidCommand::Classify { model, input } => {
            let model = LidModel::load(model)?;
            let text = fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
            let lines = text
                .lines()
                .map(|l| lid_classify(&model, l).map(|(lang, margin)| format!("{lang}\t{margin}")))
                .collect::<corpusforge::Result<Vec<_>>>()?;
            write_lines(g, lines)
        }
    }
}

fn align(g: &Global, c: AlignCommand) -> CmdResult {
    match c {
        AlignCommand::Train { input, iterations } => {
            let out = required_out(g)?;
            ibm1_train(&read_pairs(g, &input)?, iterations)?.save(out)?;
            Ok(())
        }
        AlignCommand::Score { table, input } => {
            let table = TranslationTable::load(table)?;
            let scores = read_pairs(g, &input)?
                .iter()
                .map(|p| align_score(&table, p).map(|s| s.to_string()))
                .collect::<corpusforge::Result<Vec<_>>>()?;
            write_lines(g, scores)
        }
    }
}

fn run(g: &Global, a: args::RunArgs) -> CmdResult {
    let path = match a.config_file.clone().or_else(|| g.config.clone()) {
        Some(p) if p.is_relative() && !p.exists() => match &a.config_dir {
            Some(dir) => dir.join(p),
            None => p,
        },
        Some(p) => p,
        None => match &a.config_dir {
            Some(dir) => dir.join("pipeline.toml"),
            None => {
                return Err(Failure::Usage(
                    "no pipeline config: pass a path, --config, or set CORPUSFORGE_CONFIG_DIR".into(),
                ))
            }
        },
    };
    let cfg = PipelineConfig::load(&path)?;
    let opts = RunOptions {
        jobs: g.jobs,
        out_dir: a.out_dir,
    };
    let manifest = run_pipeline(&cfg, &opts)?;
    log::info!(
        "{} stages done; manifest in {}",
        manifest.stages.len(),
        opts.out_dir
            .as_ref()
            .unwrap_or(&cfg.out_dir)
            .join(MANIFEST_FILE)
            .display()
    );
    emit(g, &(manifest.to_json() + "\n"))
}
