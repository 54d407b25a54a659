//! Config-driven execution of a stage list with a reproducible manifest.
//!
//! Stage inputs that name an earlier stage's output are read from the output
//! directory; anything else is resolved against the config file's directory.

mod ops;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Tokenizer;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub use ops::{Op, Side};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Langs {
    pub src: String,
    pub tgt: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub langs: Langs,
    /// Directory relative inputs are resolved against.
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub stages: Vec<Stage>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    langs: Langs,
    #[serde(default = "default_out_dir")]
    out_dir: PathBuf,
    #[serde(default)]
    stages: Vec<toml::Table>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::config(format!("pipeline config: {e}")))?;
        let mut stages = Vec::with_capacity(raw.stages.len());
        let mut names = BTreeSet::new();
        for (i, mut table) in raw.stages.into_iter().enumerate() {
            let op_name = match table.get("op") {
                Some(toml::Value::String(s)) => s.clone(),
                _ => return Err(Error::config(format!("stage {} has no `op`", i + 1))),
            };
            let name = match table.remove("name") {
                Some(toml::Value::String(s)) => s,
                Some(_) => return Err(Error::config(format!("stage {}: `name` must be a string", i + 1))),
                None => op_name.clone(),
            };
            if !Op::NAMES.contains(&op_name.as_str()) {
                return Err(Error::config(format!("stage `{name}`: unknown operation `{op_name}`")));
            }
            if !names.insert(name.clone()) {
                return Err(Error::config(format!("duplicate stage name `{name}`")));
            }
            let op: Op = toml::Value::Table(table)
                .try_into()
                .map_err(|e| Error::config(format!("stage `{name}` ({op_name}): {e}")))?;
            stages.push(Stage { name, op });
        }
        let out_dir = if raw.out_dir.is_relative() {
            base_dir.join(&raw.out_dir)
        } else {
            raw.out_dir
        };
        Ok(PipelineConfig {
            seed: raw.seed,
            langs: raw.langs,
            base_dir: base_dir.to_path_buf(),
            out_dir,
            stages,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub name: String,
    pub op: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub records_in: Option<usize>,
    pub records_out: Option<usize>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLangs {
    pub src: String,
    pub tgt: String,
    pub src_tokenizer: String,
    pub tgt_tokenizer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub langs: ManifestLangs,
    pub stages: Vec<StageManifest>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("manifest", e.to_string()))
    }

    pub fn stage(&self, name: &str) -> Option<&StageManifest> {
        self.stages.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for record-parallel stages; `None` uses all cores.
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

/// Sha-256 and newline count of a file.
pub fn file_digest(path: &Path) -> Result<(String, usize)> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut lines = 0;
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        lines += buf[..n].iter().filter(|&&b| b == b'\n').count();
        hasher.update(&buf[..n]);
    }
    Ok((hex::encode(hasher.finalize()), lines))
}

pub(crate) struct Ctx<'a> {
    base_dir: &'a Path,
    out_dir: &'a Path,
    langs: &'a Langs,
    produced: BTreeSet<String>,
}

impl Ctx<'_> {
    fn resolve_input(&self, p: &str) -> PathBuf {
        if self.produced.contains(p) {
            self.out_dir.join(p)
        } else {
            self.base_dir.join(p)
        }
    }

    fn lang(&self, side: Side) -> &str {
        match side {
            Side::Src => &self.langs.src,
            Side::Tgt => &self.langs.tgt,
        }
    }
}

/// Files touched by one stage, plus its counters.
#[derive(Default)]
pub(crate) struct StageRun {
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<String>,
    records_in: Option<usize>,
    records_out: Option<usize>,
    details: serde_json::Value,
}

impl StageRun {
    fn input(&mut self, ctx: &Ctx, p: &str) -> PathBuf {
        let path = ctx.resolve_input(p);
        self.inputs.push((p.to_string(), path.clone()));
        path
    }

    fn output(&mut self, ctx: &Ctx, p: &str) -> Result<PathBuf> {
        let path = ctx.out_dir.join(p);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.outputs.push(p.to_string());
        Ok(path)
    }
}

/// Runs every stage in order and writes `manifest.json` into the output
/// directory.
pub fn run_pipeline(config: &PipelineConfig, opts: &RunOptions) -> Result<Manifest> {
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| config.out_dir.clone());
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;

    let mut ctx = Ctx {
        base_dir: &config.base_dir,
        out_dir: &out_dir,
        langs: &config.langs,
        produced: BTreeSet::new(),
    };
    let mut stages = Vec::with_capacity(config.stages.len());
    for stage in &config.stages {
        let seed = derive_seed(config.seed, stage.name.as_bytes());
        log::info!("stage `{}` ({})", stage.name, stage.op.name());
        let run = pool
            .install(|| ops::execute(&stage.op, &ctx, seed))
            .map_err(|e| e.in_stage(&stage.name))?;
        let entry = |(label, path): (String, PathBuf)| -> Result<FileEntry> {
            let (sha256, lines) = file_digest(&path)?;
            Ok(FileEntry {
                path: label,
                sha256,
                lines,
            })
        };
        let inputs = run
            .inputs
            .into_iter()
            .map(entry)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage(&stage.name))?;
        let outputs = run
            .outputs
            .iter()
            .map(|p| entry((p.clone(), out_dir.join(p))))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage(&stage.name))?;
        ctx.produced.extend(run.outputs);
        stages.push(StageManifest {
            name: stage.name.clone(),
            op: stage.op.name().to_string(),
            seed,
            params: serde_json::to_value(&stage.op).expect("op serializes"),
            inputs,
            outputs,
            records_in: run.records_in,
            records_out: run.records_out,
            details: run.details,
        });
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        langs: ManifestLangs {
            src: config.langs.src.clone(),
            tgt: config.langs.tgt.clone(),
            src_tokenizer: Tokenizer::for_lang(&config.langs.src).name().to_string(),
            tgt_tokenizer: Tokenizer::for_lang(&config.langs.tgt).name().to_string(),
        },
        stages,
    };
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
