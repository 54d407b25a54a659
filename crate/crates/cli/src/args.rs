use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "corpusforge",
    version,
    about = "Machine-translation corpus engineering toolkit"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Root seed; each command derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Config file (pipeline config for `run`, filter config for `preprocess`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Record format for output (input format follows the file extension).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Output file; stdout when omitted.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for record-parallel work.
    #[arg(long, short, global = true)]
    pub jobs: Option<usize>,

    #[arg(long, global = true, default_value = "und")]
    pub src_lang: String,

    #[arg(long, global = true, default_value = "und")]
    pub tgt_lang: String,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Tsv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideArg {
    Src,
    Tgt,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Normalize, deduplicate and filter a parallel corpus.
    Preprocess(PreprocessArgs),
    /// Split long monolingual sentences at sentence-final punctuation.
    Split(SplitArgs),
    /// Learn, apply and decode joint BPE subwords.
    #[command(subcommand)]
    Bpe(BpeCommand),
    /// Synthetic data: BIT, DD, FT, BT, TEL, post-editing records, AT schedules.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// Domain-difficulty scoring, bins and phase sampling.
    #[command(subcommand)]
    Curriculum(CurriculumCommand),
    /// Evaluation metrics.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Corpus statistics as JSON.
    Stats(InputArgs),
    /// Character n-gram language identification.
    #[command(subcommand)]
    Lid(LidCommand),
    /// IBM Model 1 word alignment.
    #[command(subcommand)]
    Align(AlignCommand),
    /// Add-k smoothed n-gram language models.
    #[command(subcommand)]
    Lm(LmCommand),
    /// Run a pipeline config and write its manifest.
    Run(RunArgs),
}

#[derive(Args, Debug)]
pub struct InputArgs {
    #[arg(long, short)]
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Languages whose punctuation is normalized.
    #[arg(long, value_delimiter = ',')]
    pub punct_langs: Vec<String>,
    /// Traditional-to-simplified mapping file.
    #[arg(long)]
    pub t2s_map: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub t2s_langs: Vec<String>,
    #[arg(long)]
    pub no_dedup: bool,
    #[arg(long)]
    pub no_filter: bool,
    /// Write the filter report (JSON) here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub max_len: usize,
    #[arg(long, default_value = "und")]
    pub lang: String,
}

#[derive(Subcommand, Debug)]
pub enum BpeCommand {
    /// Learn joint merges from record files (both sides) or text files.
    Learn {
        #[arg(long, short, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, default_value_t = 8000)]
        merges: usize,
        /// Tokens never split or merged (e.g. the BT tag).
        #[arg(long)]
        protect: Vec<String>,
    },
    /// Segment a text file, one sentence per line.
    Apply {
        #[arg(long, short)]
        model: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, default_value = "und")]
        lang: String,
    },
    /// Join subword lines back into words.
    Decode {
        #[arg(long, short)]
        input: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum AugmentCommand {
    /// Append direction-reversed copies.
    Bit(InputArgs),
    /// Merge forward and backward 1-best translations with the originals.
    Dd {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        forward: PathBuf,
        #[arg(long)]
        backward: PathBuf,
        #[arg(long)]
        no_dedup: bool,
    },
    /// Translate a seeded sample of source monolingual text.
    Ft {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        sample_size: usize,
    },
    /// Back-translate target monolingual text.
    Bt {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        reverse: PathBuf,
        #[arg(long)]
        sampling: bool,
        #[arg(long)]
        tagged: bool,
        #[arg(long, default_value = "<BT>")]
        tag: String,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
    },
    /// Translate a test source set with every model.
    Tel {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        dedup: bool,
    },
    /// Build post-editing records from QE-gated pairs.
    Hypo {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        #[arg(long, short, default_value_t = 10)]
        n: usize,
        /// Take QE scores from this record score field.
        #[arg(long)]
        qe_field: Option<String>,
        /// Also write prompt/completion pairs here.
        #[arg(long)]
        sft: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Alternating synthetic/authentic training schedule.
    Schedule {
        #[arg(long)]
        authentic: PathBuf,
        #[arg(long)]
        synthetic: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        rounds: u32,
    },
}

#[derive(Subcommand, Debug)]
pub enum CurriculumCommand {
    /// Per-record domain feature: index, logprob_in, logprob_out, q.
    Score {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        in_lm: PathBuf,
        #[arg(long)]
        out_lm: PathBuf,
        #[arg(long)]
        in_table: Option<PathBuf>,
        #[arg(long)]
        out_table: Option<PathBuf>,
    },
    /// Quantile bins and the default phase schedule.
    Bins {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 4)]
        bins: usize,
    },
    /// Seeded mini-batches for one phase, as JSON lines.
    Sample {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        bins: PathBuf,
        #[arg(long, default_value_t = 0)]
        phase: usize,
        #[arg(long)]
        batch_size: usize,
        #[arg(long)]
        batches: usize,
        #[arg(long)]
        coverage: bool,
    },
}

#[derive(Subcommand, Debug)]
pub enum ScoreCommand {
    /// Corpus BLEU of hypothesis lines against reference lines.
    Bleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_n: usize,
        #[arg(long)]
        smooth: bool,
        #[arg(long, default_value = "und")]
        lang: String,
    },
}

#[derive(Subcommand, Debug)]
pub enum LidCommand {
    /// Train from `LANG=FILE` samples.
    Train {
        #[arg(long = "sample", required = true, value_parser = parse_sample)]
        samples: Vec<(String, PathBuf)>,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.5)]
        k: f64,
    },
    /// Label each line: `lang<TAB>margin`.
    Classify {
        #[arg(long, short)]
        model: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
    },
}

fn parse_sample(s: &str) -> Result<(String, PathBuf), String> {
    let (lang, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected LANG=FILE, got `{s}`"))?;
    if lang.is_empty() || path.is_empty() {
        return Err(format!("expected LANG=FILE, got `{s}`"));
    }
    Ok((lang.to_string(), PathBuf::from(path)))
}

#[derive(Subcommand, Debug)]
pub enum AlignCommand {
    /// IBM Model 1 translation table.
    Train {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        iterations: usize,
    },
    /// Per-record alignment score, one per line.
    Score {
        #[arg(long, short)]
        table: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum LmCommand {
    /// Train from a text file or one side of a record file.
    Train {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "tgt")]
        side: SideArg,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.1)]
        k: f64,
    },
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Pipeline config; falls back to `--config`, then
    /// `$CORPUSFORGE_CONFIG_DIR/pipeline.toml`.
    pub config_file: Option<PathBuf>,
    /// Override the config's output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, env = "CORPUSFORGE_CONFIG_DIR", hide_env_values = true)]
    pub config_dir: Option<PathBuf>,
}
