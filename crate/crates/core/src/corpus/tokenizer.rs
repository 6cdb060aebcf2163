use std::fmt::Debug;

/// Splits text into tokens for fixed-token chunking.
pub trait Tokenizer: Send + Sync + Debug {
    fn id(&self) -> &str;

    fn tokenize(&self, text: &str) -> Vec<String>;

    /// Inverse of [`Tokenizer::tokenize`] up to whitespace normalization.
    fn join(&self, tokens: &[String]) -> String {
        tokens.join(" ")
    }

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Unicode whitespace splitting.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn id(&self) -> &str {
        "whitespace"
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}
