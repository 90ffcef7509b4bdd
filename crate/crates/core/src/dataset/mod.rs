//! Dataset construction: keyword selection, caption cleaning, grouped
//! splits, JSONL files and statistics.

pub mod clean;
pub mod ingest;
pub mod io;
pub mod manifest;
pub mod split;
pub mod stats;

pub use clean::{
    clean_caption, clean_many, CaptionCleaner, CleanError, CleanOutcome, HttpCleaner, HttpCleanerConfig, MockCleaner,
    RetryPolicy,
};
pub use ingest::{file_digest, load_raw_metadata};
pub use io::{
    check_proposals, load_manifest, load_proposals, load_regions, save_manifest, save_proposals, save_regions, Loaded,
    SCHEMA_VERSION,
};
pub use manifest::{keyword_filter, KeywordFilter, ManifestEntry, Split};
pub use split::{assign_splits, SplitSpec};
pub use stats::{dataset_stats, DatasetStats, PhraseCount};
