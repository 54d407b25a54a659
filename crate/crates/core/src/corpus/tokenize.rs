use serde::{Deserialize, Serialize};

/// How a language's text is split into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenizer {
    /// Split on Unicode whitespace.
    Whitespace,
    /// Whitespace split, then every CJK codepoint becomes its own token and
    /// maximal non-CJK runs stay together.
    Cjk,
}

const CJK_LANGS: &[&str] = &["zh", "ja", "ko", "yue", "wuu", "und"];

impl Tokenizer {
    pub fn for_lang(lang: &str) -> Self {
        let primary = lang.split(['-', '_']).next().unwrap_or(lang);
        if CJK_LANGS.iter().any(|l| l.eq_ignore_ascii_case(primary)) {
            Tokenizer::Cjk
        } else {
            Tokenizer::Whitespace
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tokenizer::Whitespace => "whitespace",
            Tokenizer::Cjk => "cjk",
        }
    }

    /// Byte spans `(start, end)` of each token in `text`.
    pub fn spans(self, text: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    out.push((s, i));
                }
                continue;
            }
            if self == Tokenizer::Cjk && is_cjk(c) {
                if let Some(s) = start.take() {
                    out.push((s, i));
                }
                out.push((i, i + c.len_utf8()));
                continue;
            }
            if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            out.push((s, text.len()));
        }
        out
    }

    pub fn tokenize(self, text: &str) -> Vec<String> {
        self.spans(text)
            .into_iter()
            .map(|(s, e)| text[s..e].to_string())
            .collect()
    }

    /// Inverse of [`Tokenizer::tokenize`] for whitespace-canonical text.
    pub fn join<S: AsRef<str>>(self, tokens: &[S]) -> String {
        let mut out = String::new();
        for (i, tok) in tokens.iter().enumerate() {
            let tok = tok.as_ref();
            if i > 0 {
                let glue = match self {
                    Tokenizer::Whitespace => true,
                    Tokenizer::Cjk => {
                        let prev_cjk = out.chars().next_back().is_some_and(is_cjk);
                        let next_cjk = tok.chars().next().is_some_and(is_cjk);
                        !(prev_cjk || next_cjk)
                    }
                };
                if glue {
                    out.push(' ');
                }
            }
            out.push_str(tok);
        }
        out
    }
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x1100..=0x11FF        // Hangul Jamo
        | 0x2E80..=0x2FDF      // radicals
        | 0x3000..=0x303F      // CJK symbols and punctuation
        | 0x3040..=0x30FF      // kana
        | 0x3100..=0x312F      // bopomofo
        | 0x3130..=0x318F      // Hangul compatibility jamo
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF      // Hangul syllables
        | 0xF900..=0xFAFF
        | 0xFF00..=0xFFEF      // half/full-width forms
        | 0x20000..=0x2FA1F)
}
