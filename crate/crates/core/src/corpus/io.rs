use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Provenance, Sentence, SentencePair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    #[default]
    Jsonl,
    Tsv,
}

impl RecordFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => RecordFormat::Tsv,
            _ => RecordFormat::Jsonl,
        }
    }
}

impl FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(RecordFormat::Jsonl),
            "tsv" => Ok(RecordFormat::Tsv),
            other => Err(Error::config(format!("unknown record format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReadOptions {
    pub format: RecordFormat,
    /// Language codes for TSV rows and JSONL records lacking them.
    pub src_lang: String,
    pub tgt_lang: String,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            format: RecordFormat::Jsonl,
            src_lang: "und".into(),
            tgt_lang: "und".into(),
        }
    }
}

impl ReadOptions {
    pub fn new(format: RecordFormat, src_lang: &str, tgt_lang: &str) -> Self {
        ReadOptions {
            format,
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
        }
    }
}

#[derive(Serialize)]
struct JsonOut<'a> {
    src: &'a str,
    tgt: &'a str,
    lang_src: &'a str,
    lang_tgt: &'a str,
    provenance: Provenance,
    scores: &'a BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonIn {
    src: String,
    tgt: String,
    #[serde(default)]
    lang_src: Option<String>,
    #[serde(default)]
    lang_tgt: Option<String>,
    #[serde(default)]
    provenance: Option<Provenance>,
    #[serde(default)]
    scores: BTreeMap<String, f64>,
}

/// Malformed lines above this fraction turn into a format error.
const MAX_MALFORMED_FRACTION: f64 = 0.10;
const MAX_REPORTED_LINES: usize = 20;

/// Streaming record reader. Malformed lines are skipped and counted; once
/// the input is exhausted, a format error is yielded if more than 10% of
/// lines were malformed.
pub struct RecordReader<R> {
    reader: R,
    opts: ReadOptions,
    context: String,
    buf: Vec<u8>,
    lines: usize,
    malformed: Vec<usize>,
    malformed_count: usize,
    finished: bool,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R, opts: ReadOptions, context: impl Into<String>) -> Self {
        RecordReader {
            reader,
            opts,
            context: context.into(),
            buf: Vec::new(),
            lines: 0,
            malformed: Vec::new(),
            malformed_count: 0,
            finished: false,
        }
    }

    pub fn skipped(&self) -> usize {
        self.malformed_count
    }

    pub fn lines_read(&self) -> usize {
        self.lines
    }

    fn parse(&self, line: &str) -> Option<SentencePair> {
        match self.opts.format {
            RecordFormat::Tsv => {
                let cols: Vec<&str> = line.split('\t').collect();
                let provenance = match cols.len() {
                    2 => Provenance::Authentic,
                    3 => cols[2].trim().parse().ok()?,
                    _ => return None,
                };
                Some(SentencePair::new(
                    Sentence::new(cols[0], self.opts.src_lang.clone()),
                    Sentence::new(cols[1], self.opts.tgt_lang.clone()),
                    provenance,
                ))
            }
            RecordFormat::Jsonl => {
                let rec: JsonIn = serde_json::from_str(line).ok()?;
                let src_lang = rec.lang_src.unwrap_or_else(|| self.opts.src_lang.clone());
                let tgt_lang = rec.lang_tgt.unwrap_or_else(|| self.opts.tgt_lang.clone());
                Some(SentencePair {
                    src: Sentence::new(rec.src, src_lang),
                    tgt: Sentence::new(rec.tgt, tgt_lang),
                    provenance: rec.provenance.unwrap_or(Provenance::Authentic),
                    scores: rec.scores,
                })
            }
        }
    }

    fn exhausted(&mut self) -> Option<Result<SentencePair>> {
        self.finished = true;
        if self.lines > 0 && self.malformed_count as f64 > MAX_MALFORMED_FRACTION * self.lines as f64 {
            let listed: Vec<String> = self.malformed.iter().map(|l| l.to_string()).collect();
            let more = if self.malformed_count > self.malformed.len() {
                ", ..."
            } else {
                ""
            };
            return Some(Err(Error::format(
                self.context.clone(),
                format!(
                    "{} of {} lines malformed (lines {}{})",
                    self.malformed_count,
                    self.lines,
                    listed.join(", "),
                    more
                ),
            )));
        }
        None
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return self.exhausted(),
                Ok(_) => {}
                Err(e) => {
                    self.finished = true;
                    return Some(Err(Error::Stream(e)));
                }
            }
            self.lines += 1;
            let mut end = self.buf.len();
            if self.buf[..end].ends_with(b"\n") {
                end -= 1;
            }
            if self.buf[..end].ends_with(b"\r") {
                end -= 1;
            }
            let parsed = std::str::from_utf8(&self.buf[..end])
                .ok()
                .and_then(|line| self.parse(line));
            match parsed {
                Some(pair) => return Some(Ok(pair)),
                None => {
                    self.malformed_count += 1;
                    if self.malformed.len() < MAX_REPORTED_LINES {
                        self.malformed.push(self.lines);
                    }
                }
            }
        }
    }
}

pub fn read_records(path: impl AsRef<Path>, opts: &ReadOptions) -> Result<RecordReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(RecordReader::new(
        BufReader::with_capacity(1 << 16, file),
        opts.clone(),
        path.display().to_string(),
    ))
}

pub struct RecordWriter<W: Write> {
    out: W,
    format: RecordFormat,
    count: usize,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(out: W, format: RecordFormat) -> Self {
        RecordWriter { out, format, count: 0 }
    }

    pub fn write(&mut self, pair: &SentencePair) -> Result<()> {
        match self.format {
            RecordFormat::Jsonl => {
                if let Some((k, v)) = pair.scores.iter().find(|(_, v)| !v.is_finite()) {
                    return Err(Error::format("jsonl", format!("score `{k}` is not finite: {v}")));
                }
                let rec = JsonOut {
                    src: pair.src.text(),
                    tgt: pair.tgt.text(),
                    lang_src: pair.src.lang(),
                    lang_tgt: pair.tgt.lang(),
                    provenance: pair.provenance,
                    scores: &pair.scores,
                };
                serde_json::to_writer(&mut self.out, &rec).map_err(|e| Error::format("jsonl", e.to_string()))?;
                self.out.write_all(b"\n")?;
            }
            RecordFormat::Tsv => {
                for text in [pair.src.text(), pair.tgt.text()] {
                    if text.contains(['\t', '\n', '\r']) {
                        return Err(Error::format("tsv", "text contains tab or newline"));
                    }
                }
                writeln!(
                    self.out,
                    "{}\t{}\t{}",
                    pair.src.text(),
                    pair.tgt.text(),
                    pair.provenance
                )?;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        Ok(self.count)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::with_capacity(1 << 16, file))
}

/// Opens `path` for streaming record output, creating parent directories.
pub fn record_writer(path: impl AsRef<Path>, format: RecordFormat) -> Result<RecordWriter<BufWriter<File>>> {
    Ok(RecordWriter::new(create(path.as_ref())?, format))
}

/// Writes every record and returns the number written.
pub fn write_records<'a, I>(records: I, path: impl AsRef<Path>, format: RecordFormat) -> Result<usize>
where
    I: IntoIterator<Item = &'a SentencePair>,
{
    let path = path.as_ref();
    let mut w = RecordWriter::new(create(path)?, format);
    for pair in records {
        w.write(pair)?;
    }
    w.finish().map_err(|e| match e {
        Error::Stream(io) => Error::io(path, io),
        other => other,
    })
}

/// Reads a monolingual file, one sentence per line; blank lines are skipped.
pub fn read_lines(path: impl AsRef<Path>, lang: &str) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(Sentence::new(line.trim_end_matches('\r'), lang));
        }
    }
    Ok(out)
}

pub fn write_lines<I, S>(lines: I, path: impl AsRef<Path>) -> Result<usize>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut n = 0;
    for line in lines {
        writeln!(w, "{}", line.as_ref()).map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn reader(text: &str, format: RecordFormat) -> RecordReader<Cursor<Vec<u8>>> {
        RecordReader::new(
            Cursor::new(text.as_bytes().to_vec()),
            ReadOptions::new(format, "en", "zh"),
            "test",
        )
    }

    #[test]
    fn tsv_defaults_to_authentic() {
        let pairs: Vec<_> = reader("hello\t你好\n", RecordFormat::Tsv)
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].src.text(), "hello");
        assert_eq!(pairs[0].tgt.text(), "你好");
        assert_eq!(pairs[0].provenance, Provenance::Authentic);
    }

    #[test]
    fn jsonl_provenance_field() {
        let line = r#"{"src":"a","tgt":"b","lang_src":"en","lang_tgt":"de","provenance":"BT_TAGGED","scores":{}}"#;
        let pairs: Vec<_> = reader(line, RecordFormat::Jsonl).collect::<Result<_>>().unwrap();
        assert_eq!(pairs[0].provenance, Provenance::BtTagged);
        assert_eq!(pairs[0].tgt.lang(), "de");
    }

    #[test]
    fn malformed_rows_are_counted() {
        // 1 of 3 is over the 10% limit, so the stream ends in an error
        let mut r = reader("a\tb\nbroken\nc\td\n", RecordFormat::Tsv);
        let items: Vec<_> = r.by_ref().collect();
        assert_eq!(items.len(), 3);
        assert!(items[0].is_ok() && items[1].is_ok());
        assert_eq!(r.skipped(), 1);
        let err = items[2].as_ref().unwrap_err().to_string();
        assert!(err.contains("lines 2"), "{err}");
    }

    #[test]
    fn malformed_under_limit_is_not_fatal() {
        let mut text = String::new();
        for i in 0..20 {
            text.push_str(&format!("s{i}\tt{i}\n"));
        }
        text.push_str("x\ty\tNOT_A_PROVENANCE\n");
        let mut r = reader(&text, RecordFormat::Tsv);
        let pairs: Vec<_> = r.by_ref().collect::<Result<_>>().unwrap();
        assert_eq!(pairs.len(), 20);
        assert_eq!(r.skipped(), 1);
    }

    #[test]
    fn empty_stream_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        let n = write_records(std::iter::empty(), &path, RecordFormat::Jsonl).unwrap();
        assert_eq!(n, 0);
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
        assert_eq!(read_records(&path, &ReadOptions::default()).unwrap().count(), 0);
    }

    #[test]
    fn jsonl_escapes_tabs_and_newlines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let pair =
            SentencePair::authentic(Sentence::new("a\tb\nc", "en"), Sentence::new("x", "zh")).with_score("qe", 0.25);
        write_records([&pair], &path, RecordFormat::Jsonl).unwrap();
        let back: Vec<_> = read_records(&path, &ReadOptions::default())
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(back, vec![pair.clone()]);
        assert!(write_records([&pair], dir.path().join("t.tsv"), RecordFormat::Tsv).is_err());
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let err = read_records("/nonexistent/x.jsonl", &ReadOptions::default())
            .err()
            .unwrap();
        assert!(matches!(err, Error::Io { .. }));
    }
}
