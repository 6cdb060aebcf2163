//! Fixed-token chunking: disjoint cores of `window` tokens, each extended by
//! up to `overlap` tokens of context on both sides.

use super::{cleanse, Chunk, ChunkSource, ChunkStrategy, CorpusError, Document, TokenSpan, Tokenizer};

pub const DEFAULT_WINDOW: usize = 200;
pub const DEFAULT_OVERLAP: usize = 50;

/// Spans for a token sequence of length `n`.
pub fn fixed_token_spans(n: usize, window: usize, overlap: usize) -> Result<Vec<TokenSpan>, CorpusError> {
    if window == 0 || overlap >= window {
        return Err(CorpusError::InvalidWindow { window, overlap });
    }
    Ok((0..n)
        .step_by(window)
        .map(|core_start| {
            let core_end = (core_start + window).min(n);
            TokenSpan {
                core_start,
                core_end,
                start: core_start.saturating_sub(overlap),
                end: (core_end + overlap).min(n),
            }
        })
        .collect())
}

/// Tokens of all content paragraphs, in order, are chunked as one stream.
pub fn chunk_fixed_token(
    document: &Document,
    window: usize,
    overlap: usize,
    tok: &dyn Tokenizer,
) -> Result<Vec<Chunk>, CorpusError> {
    let mut tokens = Vec::new();
    let mut owner = Vec::new();
    for p in cleanse(document) {
        let t = tok.tokenize(&p.text);
        owner.extend(std::iter::repeat_n(p.index, t.len()));
        tokens.extend(t);
    }
    let spans = fixed_token_spans(tokens.len(), window, overlap)?;
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(n, span)| {
            let mut paragraphs: Vec<usize> = owner[span.start..span.end].to_vec();
            paragraphs.dedup();
            Chunk {
                id: Chunk::make_id(&document.id, ChunkStrategy::FixedToken, n),
                text: tok.join(&tokens[span.start..span.end]),
                hazard_type: document.hazard_type,
                source: ChunkSource {
                    document_id: document.id.clone(),
                    paragraphs,
                    span: Some(span),
                },
                summary: None,
                propositions: Vec::new(),
                strategy: ChunkStrategy::FixedToken,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WhitespaceTokenizer;
    use crate::hazard::Hazard;

    /// Brute-force oracle: assign each token to a core by walking the
    /// sequence, then grow every core by scanning outwards one token at a
    /// time.
    fn oracle(n: usize, window: usize, overlap: usize) -> Vec<(usize, usize, usize, usize)> {
        let mut cores: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            if cores.last().is_none_or(|c| c.len() == window) {
                cores.push(Vec::new());
            }
            cores.last_mut().unwrap().push(i);
        }
        cores
            .into_iter()
            .map(|c| {
                let (cs, ce) = (c[0], c[c.len() - 1] + 1);
                let mut s = cs;
                let mut steps = 0;
                while s > 0 && steps < overlap {
                    s -= 1;
                    steps += 1;
                }
                let mut e = ce;
                steps = 0;
                while e < n && steps < overlap {
                    e += 1;
                    steps += 1;
                }
                (cs, ce, s, e)
            })
            .collect()
    }

    fn as_tuples(spans: &[TokenSpan]) -> Vec<(usize, usize, usize, usize)> {
        spans.iter().map(|s| (s.core_start, s.core_end, s.start, s.end)).collect()
    }

    #[test]
    fn five_hundred_tokens() {
        let spans = fixed_token_spans(500, 200, 50).unwrap();
        let expected = vec![(0, 200, 0, 250), (200, 400, 150, 450), (400, 500, 350, 500)];
        assert_eq!(oracle(500, 200, 50), expected);
        assert_eq!(as_tuples(&spans), expected);
    }

    #[test]
    fn single_window() {
        assert_eq!(as_tuples(&fixed_token_spans(200, 200, 50).unwrap()), vec![(0, 200, 0, 200)]);
    }

    #[test]
    fn empty_document() {
        assert!(fixed_token_spans(0, 200, 50).unwrap().is_empty());
        let d = Document::from_texts("e", "t", Hazard::Storm, 2000, "x", Vec::<String>::new());
        assert!(chunk_fixed_token(&d, 200, 50, &WhitespaceTokenizer).unwrap().is_empty());
    }

    #[test]
    fn bad_window() {
        assert!(fixed_token_spans(10, 0, 0).is_err());
        assert!(fixed_token_spans(10, 5, 5).is_err());
    }

    #[test]
    fn matches_oracle_on_grid() {
        for n in [0, 1, 7, 49, 50, 51, 199, 200, 201, 399, 400, 401, 1234] {
            for (w, o) in [(200, 50), (10, 0), (10, 9), (1, 0), (3, 2)] {
                assert_eq!(as_tuples(&fixed_token_spans(n, w, o).unwrap()), oracle(n, w, o), "n={n} w={w} o={o}");
            }
        }
    }

    #[test]
    fn chunk_text_and_paragraph_provenance() {
        let p0 = (0..150).map(|i| format!("a{i}")).collect::<Vec<_>>().join(" ");
        let p1 = (0..100).map(|i| format!("b{i}")).collect::<Vec<_>>().join("  \n");
        let d = Document::from_texts("doc", "t", Hazard::Flood, 2016, "x", [p0, p1]);
        let chunks = chunk_fixed_token(&d, 200, 50, &WhitespaceTokenizer).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].source.paragraphs, vec![0, 1]);
        assert_eq!(chunks[1].source.paragraphs, vec![1]);
        assert!(chunks[0].text.starts_with("a0 a1"));
        assert!(chunks[1].text.starts_with("b0 "));
        assert!(chunks[1].text.ends_with("b99"));
        assert_eq!(chunks[0].text.split(' ').count(), 250);
        chunks.iter().for_each(|c| c.check().unwrap());
    }
}
