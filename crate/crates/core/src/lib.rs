//! Tooling for turning zero-shot visual-grounding output into usable
//! pseudo-ground truth, and for evaluating and curating grounding datasets.
//!
//! - [`geometry`]: normalized boxes, IoU and containment
//! - [`text`]: prompt tokenization with character offsets
//! - [`model`]: proposals, regions and versioned annotation records
//! - [`refine`]: the proposal-to-region refinement pipeline
//! - [`matchers`]: phrase normalization, exact/fuzzy matching, class prompts
//! - [`eval`]: per-image mAP, mAP@0.5 and R@k
//! - [`dataset`]: keyword filtering, caption cleaning, grouped splits,
//!   JSONL formats and statistics
//!
//! The runnable programs under `examples/` walk through each capability.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod matchers;
pub mod model;
pub mod refine;
pub mod text;

pub use error::{Error, Result};
pub use eval::{evaluate, EvalConfig, EvalReport};
pub use geometry::{containment, iou, BBox};
pub use matchers::{build_class_prompt, normalize_phrase, phrases_match, MatchMode, MatchPolicy};
pub use model::{AnnotationRecord, Proposal, ProposalSet, Region};
pub use refine::{refine, RefineConfig};
pub use text::{tokenize, Token, TokenKind, TokenizedPrompt};
