//! Joint byte-pair encoding with a word-final `</w>` marker.
//!
//! During learning the marker is its own symbol, so `ab` is `a b </w>`; on
//! output it is glued to the last subword of each word (`ab</w>`).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::seed::sha256_hex;

pub const END_OF_WORD: &str = "</w>";
const HEADER: &str = "bpe-v1";

#[derive(Debug, Clone)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    vocab: BTreeSet<String>,
    protected: BTreeSet<String>,
    ids: HashMap<String, u32>,
    // (left id, right id) -> (rank, merged id)
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl PartialEq for BpeModel {
    fn eq(&self, other: &Self) -> bool {
        self.merges == other.merges && self.vocab == other.vocab && self.protected == other.protected
    }
}

impl BpeModel {
    fn build(merges: Vec<(String, String)>, mut vocab: BTreeSet<String>) -> Result<Self> {
        let mut ids: HashMap<String, u32> = HashMap::new();
        let intern = |s: &str, ids: &mut HashMap<String, u32>| -> u32 {
            let next = ids.len() as u32;
            *ids.entry(s.to_string()).or_insert(next)
        };
        let mut ranks = HashMap::new();
        vocab.insert(END_OF_WORD.to_string());
        for (rank, (l, r)) in merges.iter().enumerate() {
            if l.is_empty() || r.is_empty() {
                return Err(Error::format("bpe model", format!("empty symbol in merge {rank}")));
            }
            let li = intern(l, &mut ids);
            let ri = intern(r, &mut ids);
            let merged = format!("{l}{r}");
            let mi = intern(&merged, &mut ids);
            if ranks.insert((li, ri), (rank, mi)).is_some() {
                return Err(Error::format("bpe model", format!("duplicate merge `{l} {r}`")));
            }
            vocab.insert(l.clone());
            vocab.insert(r.clone());
            vocab.insert(merged);
        }
        Ok(BpeModel {
            merges,
            vocab,
            protected: BTreeSet::new(),
            ids,
            ranks,
        })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    pub fn num_merges(&self) -> usize {
        self.merges.len()
    }

    /// Tokens that are never split (e.g. a back-translation tag).
    pub fn with_protected<I, S>(mut self, tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.protected.extend(tokens.into_iter().map(Into::into));
        self
    }

    /// The first `k` merges as a model of their own.
    pub fn truncated(&self, k: usize) -> BpeModel {
        let merges = self.merges[..k.min(self.merges.len())].to_vec();
        let chars = self.vocab.iter().filter(|s| s.chars().count() == 1).cloned().collect();
        let mut m = BpeModel::build(merges, chars).expect("prefix of a valid merge list");
        m.protected = self.protected.clone();
        m
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!("{HEADER} {}\n", self.merges.len());
        for (l, r) in &self.merges {
            out.push_str(l);
            out.push(' ');
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format("bpe model", "empty file"))?;
        let count: usize = header
            .strip_prefix(HEADER)
            .and_then(|rest| rest.strip_prefix(' '))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Error::format("bpe model", format!("bad header `{header}`")))?;
        let mut merges = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) => merges.push((l.to_string(), r.to_string())),
                _ => {
                    return Err(Error::format(
                        "bpe model",
                        format!("line {}: expected `left right`", i + 2),
                    ))
                }
            }
        }
        if merges.len() != count {
            return Err(Error::format(
                "bpe model",
                format!("header says {count} merges, found {}", merges.len()),
            ));
        }
        BpeModel::build(merges, BTreeSet::new())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// sha256 of the model file contents.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_file_string().as_bytes())
    }

    /// Segments one word.
    pub fn apply_word(&self, word: &str) -> Vec<String> {
        if self.protected.contains(word) {
            return vec![format!("{word}{END_OF_WORD}")];
        }
        let mut syms: Vec<(String, Option<u32>)> = word
            .chars()
            .map(|c| c.to_string())
            .chain(std::iter::once(END_OF_WORD.to_string()))
            .map(|s| {
                let id = self.ids.get(&s).copied();
                (s, id)
            })
            .collect();
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| match (w[0].1, w[1].1) {
                    (Some(a), Some(b)) => self.ranks.get(&(a, b)).map(|&(rank, _)| (rank, a, b)),
                    _ => None,
                })
                .min_by_key(|&(rank, _, _)| rank);
            let Some((_, a, b)) = best else { break };
            let merged_id = self.ranks[&(a, b)].1;
            let mut next = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i].1 == Some(a) && syms[i + 1].1 == Some(b) {
                    let s = format!("{}{}", syms[i].0, syms[i + 1].0);
                    next.push((s, Some(merged_id)));
                    i += 2;
                } else {
                    next.push(syms[i].clone());
                    i += 1;
                }
            }
            syms = next;
        }
        let mut out: Vec<String> = syms.into_iter().map(|(s, _)| s).collect();
        if out.len() > 1 && out.last().map(String::as_str) == Some(END_OF_WORD) {
            out.pop();
            out.last_mut().unwrap().push_str(END_OF_WORD);
        }
        out
    }
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: i64,
    left: String,
    right: String,
    ids: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // highest count first; ties go to the lexicographically smallest pair
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Learns `num_merges` merges from word frequencies pooled over all corpora.
pub fn bpe_learn<C, S>(corpora: &[C], num_merges: usize) -> Result<BpeModel>
where
    C: AsRef<[S]>,
    S: AsRef<str>,
{
    bpe_learn_protected(corpora, num_merges, &[] as &[&str])
}

pub fn bpe_learn_protected<C, S, P>(corpora: &[C], num_merges: usize, protected: &[P]) -> Result<BpeModel>
where
    C: AsRef<[S]>,
    S: AsRef<str>,
    P: AsRef<str>,
{
    let protected: BTreeSet<String> = protected.iter().map(|p| p.as_ref().to_string()).collect();
    let mut word_freq: BTreeMap<&str, i64> = BTreeMap::new();
    for corpus in corpora {
        for w in corpus.as_ref() {
            let w = w.as_ref();
            if !w.is_empty() && !protected.contains(w) {
                *word_freq.entry(w).or_default() += 1;
            }
        }
    }
    if word_freq.is_empty() {
        return Err(Error::config("cannot learn BPE from an empty corpus"));
    }

    let mut names: Vec<String> = Vec::new();
    let mut ids: HashMap<String, u32> = HashMap::new();
    let mut intern = |s: String, names: &mut Vec<String>| -> u32 {
        if let Some(&id) = ids.get(&s) {
            return id;
        }
        let id = names.len() as u32;
        ids.insert(s.clone(), id);
        names.push(s);
        id
    };

    let mut words: Vec<(Vec<u32>, i64)> = Vec::with_capacity(word_freq.len());
    let mut chars = BTreeSet::new();
    for (w, &freq) in &word_freq {
        let mut syms: Vec<u32> = w
            .chars()
            .map(|c| {
                chars.insert(c.to_string());
                intern(c.to_string(), &mut names)
            })
            .collect();
        syms.push(intern(END_OF_WORD.to_string(), &mut names));
        words.push((syms, freq));
    }

    let mut counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut occurs: HashMap<(u32, u32), BTreeSet<usize>> = HashMap::new();
    for (wi, (syms, freq)) in words.iter().enumerate() {
        for p in syms.windows(2) {
            *counts.entry((p[0], p[1])).or_default() += freq;
            occurs.entry((p[0], p[1])).or_default().insert(wi);
        }
    }
    let candidate = |ids: (u32, u32), count: i64, names: &[String]| Candidate {
        count,
        left: names[ids.0 as usize].clone(),
        right: names[ids.1 as usize].clone(),
        ids,
    };
    let mut heap: BinaryHeap<Candidate> = counts.iter().map(|(&ids, &c)| candidate(ids, c, &names)).collect();

    let mut merges = Vec::with_capacity(num_merges);
    while merges.len() < num_merges {
        let Some(top) = heap.pop() else { break };
        let current = counts.get(&top.ids).copied().unwrap_or(0);
        if current != top.count {
            continue;
        }
        if current <= 0 {
            break;
        }
        let (a, b) = top.ids;
        let merged = intern(format!("{}{}", top.left, top.right), &mut names);
        merges.push((top.left, top.right));

        let affected: Vec<usize> = occurs
            .remove(&(a, b))
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        let mut touched: BTreeSet<(u32, u32)> = BTreeSet::new();
        for wi in affected {
            let (syms, freq) = &mut words[wi];
            let freq = *freq;
            for p in syms.windows(2) {
                *counts.get_mut(&(p[0], p[1])).unwrap() -= freq;
                touched.insert((p[0], p[1]));
            }
            let mut next = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(syms[i]);
                    i += 1;
                }
            }
            for p in next.windows(2) {
                *counts.entry((p[0], p[1])).or_default() += freq;
                occurs.entry((p[0], p[1])).or_default().insert(wi);
                touched.insert((p[0], p[1]));
            }
            *syms = next;
        }
        counts.remove(&(a, b));
        for ids in touched {
            if let Some(&c) = counts.get(&ids) {
                if c > 0 {
                    heap.push(candidate(ids, c, &names));
                }
            }
        }
    }

    let model = BpeModel::build(merges, chars)?;
    Ok(model.with_protected(protected))
}

pub fn bpe_apply<S: AsRef<str>>(model: &BpeModel, tokens: &[S]) -> Vec<String> {
    tokens.iter().flat_map(|t| model.apply_word(t.as_ref())).collect()
}

/// Inverse of [`bpe_apply`].
pub fn bpe_decode<S: AsRef<str>>(subwords: &[S]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut buf = String::new();
    for (i, tok) in subwords.iter().enumerate() {
        let tok = tok.as_ref();
        if tok.is_empty() {
            return Err(Error::Decode(format!("empty subword at position {i}")));
        }
        match tok.strip_suffix(END_OF_WORD) {
            Some(stem) => {
                buf.push_str(stem);
                if buf.is_empty() {
                    return Err(Error::Decode(format!("bare word-final marker at position {i}")));
                }
                out.push(std::mem::take(&mut buf));
            }
            None => buf.push_str(tok),
        }
    }
    if !buf.is_empty() {
        return Err(Error::Decode(format!(
            "trailing subwords `{buf}` lack the word-final marker"
        )));
    }
    Ok(out)
}
