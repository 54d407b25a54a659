//! Text-level cleaning transforms.

use std::collections::HashMap;
use std::path::Path;

use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

/// Decodes XML escapes exactly once, then drops control characters (other
/// than `\n` and `\t`) and format characters such as zero-width spaces.
pub fn strip_invisible(text: &str) -> String {
    let decoded = decode_xml_once(text);
    decoded.chars().filter(|&c| !is_invisible(c)).collect()
}

fn is_invisible(c: char) -> bool {
    if c == '\n' || c == '\t' {
        return false;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::Control | GeneralCategory::Format
    )
}

// Longest entity we recognise is "&#x10FFFF;".
const MAX_ENTITY_LEN: usize = 10;

pub fn decode_xml_once(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let semi = tail
            .char_indices()
            .take(MAX_ENTITY_LEN + 1)
            .find(|&(_, c)| c == ';')
            .map(|(i, _)| i);
        let decoded = semi.and_then(|end| decode_entity(&tail[1..end]).map(|c| (c, end)));
        match decoded {
            Some((c, end)) => {
                out.push(c);
                rest = &tail[end + 1..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_entity(name: &str) -> Option<char> {
    match name {
        "amp" => Some('&'),
        "lt" => Some('<'),
        "gt" => Some('>'),
        "quot" => Some('"'),
        "apos" => Some('\''),
        _ => {
            let num = name.strip_prefix('#')?;
            let code = match num.strip_prefix(['x', 'X']) {
                Some(hex) => u32::from_str_radix(hex, 16).ok()?,
                None => num.parse::<u32>().ok()?,
            };
            char::from_u32(code)
        }
    }
}

/// Maps full-width ASCII forms (U+FF01..U+FF5E) and the ideographic space
/// to their half-width equivalents.
pub fn normalize_width(text: &str) -> String {
    text.chars()
        .map(|c| match c as u32 {
            0xFF01..=0xFF5E => char::from_u32(c as u32 - 0xFEE0).unwrap(),
            0x3000 => ' ',
            _ => c,
        })
        .collect()
}

/// Punctuation rules, applied in this order:
///
/// 1. no-break spaces (U+00A0, U+202F) become a plain space
/// 2. curly double quotes become `"`, curly single quotes become `'`
/// 3. en dash, em dash and horizontal bar become `-`
/// 4. the ellipsis character becomes `...`
/// 5. runs of spaces collapse to one
pub fn normalize_punct(text: &str) -> String {
    let mut mapped = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\u{00A0}' | '\u{202F}' => mapped.push(' '),
            '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' => mapped.push('"'),
            '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' => mapped.push('\''),
            '\u{2013}' | '\u{2014}' | '\u{2015}' => mapped.push('-'),
            '\u{2026}' => mapped.push_str("..."),
            _ => mapped.push(c),
        }
    }
    let mut out = String::with_capacity(mapped.len());
    let mut prev_space = false;
    for c in mapped.chars() {
        if c == ' ' {
            if !prev_space {
                out.push(c);
            }
            prev_space = true;
        } else {
            out.push(c);
            prev_space = false;
        }
    }
    out
}

/// Traditional-to-simplified codepoint table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct T2sMap {
    map: HashMap<char, char>,
}

impl T2sMap {
    /// Parses "trad\tsimp" lines; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::config(format!("t2s mapping line {}: expected 2 columns", i + 1)));
            };
            let single = |s: &str| {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Some(c),
                    _ => None,
                }
            };
            match (single(a), single(b)) {
                (Some(a), Some(b)) => {
                    map.insert(a, b);
                }
                _ => {
                    return Err(Error::config(format!(
                        "t2s mapping line {}: each column must be one codepoint",
                        i + 1
                    )))
                }
            }
        }
        Ok(T2sMap { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn convert(&self, text: &str) -> String {
        text.chars().map(|c| *self.map.get(&c).unwrap_or(&c)).collect()
    }
}

pub fn t2s_convert(text: &str, mapping: &T2sMap) -> String {
    mapping.convert(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_width_space_removed() {
        assert_eq!(strip_invisible("a\u{200B}b"), "ab");
        assert_eq!(strip_invisible("a\u{0007}b\tc\n"), "ab\tc\n");
        assert_eq!(strip_invisible("\u{FEFF}x"), "x");
    }

    #[test]
    fn xml_entities_decoded_once() {
        assert_eq!(strip_invisible("a &amp; b"), "a & b");
        assert_eq!(strip_invisible("&amp;amp;"), "&amp;");
        assert_eq!(strip_invisible("&lt;b&gt; &quot;q&quot; &apos;"), "<b> \"q\" '");
        assert_eq!(strip_invisible("&#65;&#x42;"), "AB");
        assert_eq!(strip_invisible("AT&T; & &bogus;"), "AT&T; & &bogus;");
        // decoded invisible characters do not survive
        assert_eq!(strip_invisible("a&#8203;b"), "ab");
    }

    #[test]
    fn width_normalization() {
        assert_eq!(normalize_width("ＡＢＣ１２３"), "ABC123");
        assert_eq!(normalize_width("中文"), "中文");
        // U+FF08, U+FF58, U+FF09 -> 0x28, 0x78, 0x29
        assert_eq!(normalize_width("（ｘ）"), "(x)");
        assert_eq!(normalize_width("a\u{3000}b"), "a b");
    }

    #[test]
    fn punct_rules() {
        assert_eq!(normalize_punct("\u{201C}a\u{201D}"), "\"a\"");
        assert_eq!(normalize_punct("a \u{2014} b"), "a - b");
        // nbsp -> space first, then the double space collapses
        assert_eq!(normalize_punct("a\u{00A0} b"), "a b");
        assert_eq!(normalize_punct("wait\u{2026}"), "wait...");
        assert_eq!(normalize_punct("it\u{2019}s"), "it's");
    }

    #[test]
    fn t2s_mapping() {
        let m = T2sMap::parse("國\t国\n\n").unwrap();
        assert_eq!(t2s_convert("中國", &m), "中国");
        assert_eq!(t2s_convert("abc", &m), "abc");
        assert_eq!(t2s_convert("中國", &T2sMap::default()), "中國");
        assert!(T2sMap::parse("國国").is_err());
        assert!(T2sMap::parse("國\t国\t!").is_err());
        assert!(T2sMap::parse("國家\t国家").is_err());
    }
}
