//! Records shared across the pipeline: upstream proposals, box-phrase
//! regions and versioned annotation records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::text::TokenizedPrompt;

/// One upstream detection: a box and a confidence per prompt token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub token_scores: Vec<f64>,
}

impl Proposal {
    pub fn max_score(&self) -> f64 {
        self.token_scores.iter().copied().fold(0.0, f64::max)
    }

    pub fn validate_against(&self, prompt: &TokenizedPrompt) -> Result<()> {
        if self.token_scores.len() != prompt.len() {
            return Err(Error::validation(
                "token_scores",
                format!(
                    "length {} does not match {} prompt tokens",
                    self.token_scores.len(),
                    prompt.len()
                ),
            ));
        }
        if let Some((i, s)) = self
            .token_scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(Error::validation(
                format!("token_scores[{i}]"),
                format!("score {s} outside [0, 1]"),
            ));
        }
        Ok(())
    }
}

/// All proposals the upstream model produced for one image and prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet {
    pub image_id: String,
    pub prompt: TokenizedPrompt,
    pub proposals: Vec<Proposal>,
    /// Unrecognized fields carried over from the source file.
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl ProposalSet {
    pub fn new(image_id: impl Into<String>, prompt: TokenizedPrompt, proposals: Vec<Proposal>) -> Self {
        Self {
            image_id: image_id.into(),
            prompt,
            proposals,
            extra: serde_json::Map::new(),
        }
    }
}

impl ProposalSet {
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.proposals.iter().enumerate() {
            p.validate_against(&self.prompt).map_err(|e| Error::Alignment {
                image_id: self.image_id.clone(),
                detail: format!("proposal {i}: {e}"),
            })?;
        }
        Ok(())
    }
}

/// A box-phrase annotation. Ground truth authored by hand has no confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub phrase: String,
    pub confidence: Option<f64>,
}

impl Region {
    pub fn new(bbox: BBox, phrase: impl Into<String>, confidence: Option<f64>) -> Self {
        Self {
            bbox,
            phrase: phrase.into(),
            confidence,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phrase.trim().is_empty() {
            return Err(Error::validation("phrase", "must not be empty"));
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::validation("confidence", format!("{c} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// An image's caption and regions, versioned for editing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub caption: String,
    pub regions: Vec<Region>,
    #[serde(default)]
    pub version: u64,
    /// Unrecognized fields, preserved when the record is written back.
    #[serde(flatten, default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl AnnotationRecord {
    pub fn new(image_id: impl Into<String>, caption: impl Into<String>, regions: Vec<Region>) -> Self {
        Self {
            image_id: image_id.into(),
            caption: caption.into(),
            regions,
            version: 0,
            extra: serde_json::Map::new(),
        }
    }
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.image_id.trim().is_empty() {
            return Err(Error::validation("image_id", "must not be empty"));
        }
        for (i, r) in self.regions.iter().enumerate() {
            r.validate().map_err(|e| match e {
                Error::Validation { field, reason } => Error::Validation {
                    field: format!("regions[{i}].{field}"),
                    reason,
                },
                other => other,
            })?;
        }
        Ok(())
    }
}
