use crate::corpus::Sentence;

const SENTENCE_FINAL: [char; 6] = ['.', '!', '?', '。', '！', '？'];

fn ends_sentence(token: &str) -> bool {
    token.chars().next_back().is_some_and(|c| SENTENCE_FINAL.contains(&c))
}

/// Splits a sentence into segments of at most `max_len` tokens, cutting
/// after the last sentence-final token inside each window, or hard at
/// `max_len` when the window has none. Segment text is sliced from the
/// original, so only the whitespace between segments is dropped.
pub fn split_long(sentence: &Sentence, max_len: usize) -> Vec<Sentence> {
    assert!(max_len >= 1, "max_len must be >= 1");
    let n = sentence.len();
    if n <= max_len {
        return vec![sentence.clone()];
    }
    let spans = sentence.tokenizer().spans(sentence.text());
    debug_assert_eq!(spans.len(), n);
    let tokens = sentence.tokens();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = if n - start <= max_len {
            n
        } else {
            let window_end = start + max_len;
            (start..window_end)
                .rev()
                .find(|&i| ends_sentence(&tokens[i]))
                .map_or(window_end, |p| p + 1)
        };
        let text = &sentence.text()[spans[start].0..spans[end - 1].1];
        out.push(Sentence::new(text, sentence.lang()));
        start = end;
    }
    out
}

pub fn split_long_all<I>(sentences: I, max_len: usize) -> impl Iterator<Item = Sentence>
where
    I: IntoIterator<Item = Sentence>,
{
    sentences.into_iter().flat_map(move |s| split_long(&s, max_len))
}
