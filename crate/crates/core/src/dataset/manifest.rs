use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::text::is_word_char;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::Test, Split::Unassigned];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.as_str() == s)
            .ok_or_else(|| Error::validation("split", format!("unknown split {s:?}")))
    }
}

/// One image in a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub image_path: String,
    pub title: Option<String>,
    pub description: Option<String>,
    pub caption: Option<String>,
    /// Entries sharing a key (duplicate captions of one image) always land in
    /// the same split.
    pub group_key: String,
    pub split: Split,
    #[serde(flatten, default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl ManifestEntry {
    pub fn new(image_id: impl Into<String>, image_path: impl Into<String>) -> Self {
        let image_path = image_path.into();
        Self {
            image_id: image_id.into(),
            group_key: image_path.clone(),
            image_path,
            title: None,
            description: None,
            caption: None,
            split: Split::Unassigned,
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_text(mut self, title: Option<&str>, description: Option<&str>) -> Self {
        self.title = title.map(str::to_string);
        self.description = description.map(str::to_string);
        self
    }
}

/// Keyword selection over titles and descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeywordFilter {
    /// Lowercase keywords; multi-word keywords match as consecutive words.
    pub keywords: BTreeSet<String>,
    /// Placed between title and description when building the caption.
    pub joiner: String,
}

impl Default for KeywordFilter {
    fn default() -> Self {
        Self {
            keywords: ["woman", "courtesan", "child"].iter().map(|s| s.to_string()).collect(),
            joiner: ". ".into(),
        }
    }
}

fn words_of(text: &str) -> Vec<String> {
    text.split(|c: char| !is_word_char(c))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl KeywordFilter {
    pub fn new<I, S>(keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            keywords: keywords.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    /// Whole-word, case-insensitive keyword test.
    pub fn matches(&self, text: &str) -> bool {
        let words = words_of(text);
        self.keywords.iter().any(|k| {
            let needle: Vec<&str> = k.split_whitespace().collect();
            !needle.is_empty()
                && words
                    .windows(needle.len())
                    .any(|w| w.iter().zip(&needle).all(|(a, b)| a == b))
        })
    }

    /// Title and description joined by `joiner`; a title that already ends
    /// a sentence is joined with a single space.
    pub fn caption_for(&self, title: Option<&str>, description: Option<&str>) -> Option<String> {
        let title = title.map(str::trim).filter(|t| !t.is_empty());
        let description = description.map(str::trim).filter(|d| !d.is_empty());
        match (title, description) {
            (Some(t), Some(d)) => {
                if t.ends_with(['.', '!', '?']) {
                    Some(format!("{t} {d}"))
                } else {
                    Some(format!("{t}{}{d}", self.joiner))
                }
            }
            (Some(t), None) => Some(t.to_string()),
            (None, Some(d)) => Some(d.to_string()),
            (None, None) => None,
        }
    }
}

/// Keeps entries whose title or description contains a keyword and sets
/// their caption to the joined title and description.
pub fn keyword_filter(entries: Vec<ManifestEntry>, filter: &KeywordFilter) -> Vec<ManifestEntry> {
    entries
        .into_iter()
        .filter(|e| {
            e.title.as_deref().is_some_and(|t| filter.matches(t))
                || e.description.as_deref().is_some_and(|d| filter.matches(d))
        })
        .map(|mut e| {
            e.caption = filter.caption_for(e.title.as_deref(), e.description.as_deref());
            e
        })
        .collect()
}
