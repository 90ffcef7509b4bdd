//! Phrase normalization, exact/fuzzy phrase matching and class-prompt
//! construction for closed-set detection through a grounding model.

use std::collections::{BTreeSet, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{tokenize, TokenizedPrompt};

pub fn default_articles() -> BTreeSet<String> {
    ["a", "an", "the"].iter().map(|s| s.to_string()).collect()
}

pub fn default_quantity_words() -> BTreeSet<String> {
    [
        "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "several", "many", "few",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Word lists and switches controlling [`normalize_phrase`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizeOptions {
    pub strip_articles: bool,
    pub strip_quantities: bool,
    pub articles: BTreeSet<String>,
    /// Digit strings are always treated as quantities in addition to these.
    pub quantity_words: BTreeSet<String>,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        Self {
            strip_articles: true,
            strip_quantities: true,
            articles: default_articles(),
            quantity_words: default_quantity_words(),
        }
    }
}

impl NormalizeOptions {
    pub fn articles_only(&self) -> Self {
        Self {
            strip_quantities: false,
            ..self.clone()
        }
    }

    fn is_removable(&self, word: &str) -> bool {
        (self.strip_articles && self.articles.contains(word))
            || (self.strip_quantities
                && (self.quantity_words.contains(word)
                    || (!word.is_empty() && word.bytes().all(|b| b.is_ascii_digit()))))
    }
}

/// Lowercases, collapses whitespace and drops article/quantity words.
/// The last remaining word is never dropped, so the result is empty only
/// when the input is.
pub fn normalize_phrase(phrase: &str, opts: &NormalizeOptions) -> String {
    let lowered = phrase.to_lowercase();
    let words: Vec<&str> = lowered.split_whitespace().collect();
    let kept: Vec<&str> = words.iter().copied().filter(|w| !opts.is_removable(w)).collect();
    if kept.is_empty() {
        words.last().map(|w| w.to_string()).unwrap_or_default()
    } else {
        kept.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Exact,
    Fuzzy,
}

impl std::str::FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MatchMode::Exact),
            "fuzzy" => Ok(MatchMode::Fuzzy),
            other => Err(Error::Config(format!("unknown match mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for MatchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatchMode::Exact => "exact",
            MatchMode::Fuzzy => "fuzzy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchPolicy {
    pub mode: MatchMode,
    /// Minimum token-set overlap `|A ∩ B| / min(|A|, |B|)` in fuzzy mode.
    pub fuzzy_threshold: f64,
    pub normalize: NormalizeOptions,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self {
            mode: MatchMode::Exact,
            fuzzy_threshold: 0.5,
            normalize: NormalizeOptions::default(),
        }
    }
}

impl MatchPolicy {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn fuzzy(threshold: f64) -> Self {
        Self {
            mode: MatchMode::Fuzzy,
            fuzzy_threshold: threshold,
            ..Self::default()
        }
    }

    pub fn with_mode(&self, mode: MatchMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fuzzy_threshold > 0.0 && self.fuzzy_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "fuzzy_threshold {} must lie in (0, 1]",
                self.fuzzy_threshold
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, phrase: &str) -> String {
        normalize_phrase(phrase, &self.normalize)
    }

    /// Compares two phrases that have already been normalized.
    pub fn normalized_match(&self, a: &str, b: &str) -> bool {
        match self.mode {
            MatchMode::Exact => a == b,
            MatchMode::Fuzzy => a == b || token_overlap(a, b) >= self.fuzzy_threshold,
        }
    }
}

/// `|A ∩ B| / min(|A|, |B|)` over whitespace-separated token sets.
pub fn token_overlap(a: &str, b: &str) -> f64 {
    let sa: HashSet<&str> = a.split_whitespace().collect();
    let sb: HashSet<&str> = b.split_whitespace().collect();
    let denom = sa.len().min(sb.len());
    if denom == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / denom as f64
}

pub fn phrases_match(a: &str, b: &str, policy: &MatchPolicy) -> bool {
    policy.normalized_match(&policy.normalize(a), &policy.normalize(b))
}

/// A dot-separated class prompt and the token range of every class in it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrompt {
    pub prompt: TokenizedPrompt,
    pub class_spans: Vec<(String, Range<usize>)>,
}

impl ClassPrompt {
    pub fn class_text(&self, index: usize) -> &str {
        let range = &self.class_spans[index].1;
        self.prompt.span_text(range.start, range.end)
    }
}

/// Joins class names as `"a. b. c."` in input order.
pub fn build_class_prompt<S: AsRef<str>>(classes: &[S]) -> Result<ClassPrompt> {
    if classes.is_empty() {
        return Err(Error::validation("classes", "at least one class is required"));
    }
    let mut seen = HashSet::new();
    let mut text = String::new();
    for (i, class) in classes.iter().map(AsRef::as_ref).enumerate() {
        if class.trim().is_empty() || class.trim() != class {
            return Err(Error::validation(
                format!("classes[{i}]"),
                format!("{class:?} must be non-empty without surrounding whitespace"),
            ));
        }
        if !seen.insert(class) {
            return Err(Error::DuplicateClass(class.to_string()));
        }
        if i > 0 {
            text.push(' ');
        }
        text.push_str(class);
        text.push('.');
    }

    let prompt = tokenize(&text)?;
    let mut class_spans = Vec::with_capacity(classes.len());
    let mut char_pos = 0;
    let mut tok = 0;
    for class in classes.iter().map(AsRef::as_ref) {
        let (start, end) = (char_pos, char_pos + class.chars().count());
        let first = tok;
        while tok < prompt.len() && prompt.tokens()[tok].end <= end {
            tok += 1;
        }
        debug_assert!(prompt.tokens()[first].start == start);
        class_spans.push((class.to_string(), first..tok));
        // skip the separating '.'
        tok += 1;
        char_pos = end + 2;
    }
    Ok(ClassPrompt { prompt, class_spans })
}
