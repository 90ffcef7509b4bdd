//! Prompt tokenization. Token offsets are character (Unicode scalar)
//! indices into the prompt text so that token tables produced by other
//! tooling line up regardless of encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub kind: TokenKind,
}

impl Token {
    pub fn is_word(&self) -> bool {
        self.kind == TokenKind::Word
    }
}

/// Prompt text plus its token table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPrompt {
    text: String,
    tokens: Vec<Token>,
    // byte offset of every char boundary, plus text.len()
    boundaries: Vec<usize>,
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

/// Splits `text` into maximal word runs (letters, digits, apostrophes) and
/// single-character punctuation tokens. Whitespace is never a token and
/// case is preserved.
pub fn tokenize(text: &str) -> Result<TokenizedPrompt> {
    if text.trim().is_empty() {
        return Err(Error::EmptyPrompt("prompt is empty or whitespace".into()));
    }
    let mut tokens = Vec::new();
    let mut current: Option<(usize, String)> = None;
    for (idx, c) in text.chars().enumerate() {
        if is_word_char(c) {
            current.get_or_insert_with(|| (idx, String::new())).1.push(c);
            continue;
        }
        if let Some((start, word)) = current.take() {
            tokens.push(Token {
                end: start + word.chars().count(),
                text: word,
                start,
                kind: TokenKind::Word,
            });
        }
        if !c.is_whitespace() {
            tokens.push(Token {
                text: c.to_string(),
                start: idx,
                end: idx + 1,
                kind: TokenKind::Punct,
            });
        }
    }
    if let Some((start, word)) = current {
        tokens.push(Token {
            end: start + word.chars().count(),
            text: word,
            start,
            kind: TokenKind::Word,
        });
    }
    TokenizedPrompt::from_parts(text.to_string(), tokens)
}

impl TokenizedPrompt {
    /// Builds a prompt from an externally produced token table, checking that
    /// tokens are ordered, non-overlapping and match the text they span.
    pub fn from_parts(text: String, tokens: Vec<Token>) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::EmptyPrompt("prompt is empty or whitespace".into()));
        }
        let mut boundaries: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        boundaries.push(text.len());
        let n_chars = boundaries.len() - 1;
        let mut prev_end = 0;
        for (i, tok) in tokens.iter().enumerate() {
            if tok.start >= tok.end {
                return Err(Error::TokenTable(format!("token {i} has empty span")));
            }
            if tok.start < prev_end {
                return Err(Error::TokenTable(format!(
                    "token {i} overlaps or precedes the previous token"
                )));
            }
            if tok.end > n_chars {
                return Err(Error::TokenTable(format!(
                    "token {i} ends at {} past text length {n_chars}",
                    tok.end
                )));
            }
            let surface = &text[boundaries[tok.start]..boundaries[tok.end]];
            if surface != tok.text {
                return Err(Error::TokenTable(format!(
                    "token {i} text {:?} does not match span {:?}",
                    tok.text, surface
                )));
            }
            prev_end = tok.end;
        }
        Ok(Self {
            text,
            tokens,
            boundaries,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Text covered by tokens `start..end` (exclusive), including whatever
    /// lies between them in the original prompt.
    pub fn span_text(&self, start: usize, end: usize) -> &str {
        assert!(
            start < end && end <= self.tokens.len(),
            "bad token range {start}..{end}"
        );
        let from = self.boundaries[self.tokens[start].start];
        let to = self.boundaries[self.tokens[end - 1].end];
        &self.text[from..to]
    }

    /// Text between the end of token `i` and the start of token `i + 1`
    /// (or the trailing text after the last token).
    pub fn gap_after(&self, i: usize) -> &str {
        let from = self.boundaries[self.tokens[i].end];
        let to = match self.tokens.get(i + 1) {
            Some(next) => self.boundaries[next.start],
            None => self.text.len(),
        };
        &self.text[from..to]
    }

    pub fn leading_gap(&self) -> &str {
        match self.tokens.first() {
            Some(t) => &self.text[..self.boundaries[t.start]],
            None => &self.text,
        }
    }
}
