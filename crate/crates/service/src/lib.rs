//! HTTP backend for correcting box-phrase annotations.
//!
//! [`Store`] keeps one JSON document per image with optimistic versioning
//! and an append-only edit log; [`router`] exposes it as a REST API.

pub mod api;
pub mod store;

pub use api::{router, serve};
pub use store::{DiffSummary, EditLogEntry, ImageSummary, Progress, RecordUpdate, Store, StoreError};
