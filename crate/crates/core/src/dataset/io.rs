//! Line-delimited JSON files, one record per line, each tagged with
//! `schema_version`.
//!
//! Loaders check every record invariant and report the offending line and
//! field. Unknown top-level fields produce a warning and are kept, so a
//! load/save cycle does not lose them.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::manifest::ManifestEntry;
use crate::error::{Error, Result};
use crate::model::{AnnotationRecord, Proposal, ProposalSet};
use crate::text::{Token, TokenizedPrompt};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProposalLine {
    image_id: String,
    prompt: String,
    tokens: Vec<Token>,
    proposals: Vec<Proposal>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

fn schema_err(path: &Path, line: usize, field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        line,
        field: field.into(),
        reason: reason.into(),
    }
}

/// Parses one line into `T`, after checking and removing `schema_version`.
fn parse_line<T: DeserializeOwned>(
    path: &Path,
    line_no: usize,
    line: &str,
    extra_of: impl Fn(&T) -> &Map<String, Value>,
    warnings: &mut Vec<String>,
) -> Result<T> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| schema_err(path, line_no, "<line>", format!("invalid JSON: {e}")))?;
    let Value::Object(mut obj) = value else {
        return Err(schema_err(path, line_no, "<line>", "expected a JSON object"));
    };
    match obj.remove("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(schema_err(
                path,
                line_no,
                "schema_version",
                format!("unsupported version {other}"),
            ))
        }
        None => return Err(schema_err(path, line_no, "schema_version", "missing")),
    }
    let record: T = serde_path_to_error::deserialize(Value::Object(obj)).map_err(|e| {
        let field = e.path().to_string();
        schema_err(path, line_no, field, e.into_inner().to_string())
    })?;
    let extra = extra_of(&record);
    if !extra.is_empty() {
        let names: Vec<&str> = extra.keys().map(String::as_str).collect();
        let msg = format!(
            "{}:{line_no}: unknown field(s) {} preserved",
            path.display(),
            names.join(", ")
        );
        tracing::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(record)
}

/// Reads every non-blank line through `parse`. With `stop_at_first` the
/// first error is returned; otherwise all errors are collected.
fn scan_lines<T>(
    path: &Path,
    stop_at_first: bool,
    mut parse: impl FnMut(usize, &str, &mut Vec<String>) -> Result<T>,
) -> Result<(Loaded<T>, Vec<Error>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse(i + 1, &line, &mut warnings) {
            Ok(r) => records.push(r),
            Err(e) if stop_at_first => return Err(e),
            Err(e) => errors.push(e),
        }
    }
    Ok((Loaded { records, warnings }, errors))
}

fn load_all<T>(path: &Path, parse: impl FnMut(usize, &str, &mut Vec<String>) -> Result<T>) -> Result<Loaded<T>> {
    scan_lines(path, true, parse).map(|(loaded, _)| loaded)
}

fn unique_id(path: &Path, line: usize, id: &str, seen: &mut std::collections::HashSet<String>) -> Result<()> {
    if id.trim().is_empty() {
        return Err(schema_err(path, line, "image_id", "must not be empty"));
    }
    if !seen.insert(id.to_string()) {
        return Err(schema_err(path, line, "image_id", format!("duplicate id {id:?}")));
    }
    Ok(())
}

/// Serializes `value` as one line with `schema_version` first.
pub fn to_line<T: Serialize>(value: &T) -> Result<String> {
    let Value::Object(obj) = serde_json::to_value(value).map_err(|e| Error::validation("record", e.to_string()))?
    else {
        return Err(Error::validation("record", "not a JSON object"));
    };
    let mut out = Map::with_capacity(obj.len() + 1);
    out.insert("schema_version".into(), SCHEMA_VERSION.into());
    out.extend(obj);
    serde_json::to_string(&Value::Object(out)).map_err(|e| Error::validation("record", e.to_string()))
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", to_line(r)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn remap(path: &Path, line: usize, err: Error) -> Error {
    match err {
        Error::Validation { field, reason } => schema_err(path, line, field, reason),
        Error::Alignment { image_id, detail } => {
            schema_err(path, line, "proposals", format!("image {image_id}: {detail}"))
        }
        Error::TokenTable(reason) => schema_err(path, line, "tokens", reason),
        Error::EmptyPrompt(reason) => schema_err(path, line, "prompt", reason),
        other => other,
    }
}

fn proposal_parser(path: &Path) -> impl FnMut(usize, &str, &mut Vec<String>) -> Result<ProposalSet> + '_ {
    let mut seen = std::collections::HashSet::new();
    move |line_no, line, warnings| {
        let r: ProposalLine = parse_line(path, line_no, line, |r: &ProposalLine| &r.extra, warnings)?;
        unique_id(path, line_no, &r.image_id, &mut seen)?;
        let prompt = TokenizedPrompt::from_parts(r.prompt, r.tokens).map_err(|e| remap(path, line_no, e))?;
        for (i, p) in r.proposals.iter().enumerate() {
            p.validate_against(&prompt).map_err(|e| match e {
                Error::Validation { field, reason } => {
                    schema_err(path, line_no, format!("proposals[{i}].{field}"), reason)
                }
                other => other,
            })?;
        }
        Ok(ProposalSet {
            image_id: r.image_id,
            prompt,
            proposals: r.proposals,
            extra: r.extra,
        })
    }
}

pub fn load_proposals(path: &Path) -> Result<Loaded<ProposalSet>> {
    load_all(path, proposal_parser(path))
}

/// Every schema error in a proposals file, instead of only the first.
pub fn check_proposals(path: &Path) -> Result<Vec<Error>> {
    scan_lines(path, false, proposal_parser(path)).map(|(_, errors)| errors)
}

pub fn save_proposals(path: &Path, sets: &[ProposalSet]) -> Result<()> {
    let lines: Vec<ProposalLine> = sets
        .iter()
        .map(|s| ProposalLine {
            image_id: s.image_id.clone(),
            prompt: s.prompt.text().to_string(),
            tokens: s.prompt.tokens().to_vec(),
            proposals: s.proposals.clone(),
            extra: s.extra.clone(),
        })
        .collect();
    write_lines(path, &lines)
}

pub fn load_regions(path: &Path) -> Result<Loaded<AnnotationRecord>> {
    let mut seen = std::collections::HashSet::new();
    load_all(path, |line, text, warnings| {
        let r: AnnotationRecord = parse_line(path, line, text, |r: &AnnotationRecord| &r.extra, warnings)?;
        r.validate().map_err(|e| remap(path, line, e))?;
        unique_id(path, line, &r.image_id, &mut seen)?;
        Ok(r)
    })
}

pub fn save_regions(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    write_lines(path, records)
}

pub fn load_manifest(path: &Path) -> Result<Loaded<ManifestEntry>> {
    let mut seen = std::collections::HashSet::new();
    load_all(path, |line, text, warnings| {
        let r: ManifestEntry = parse_line(path, line, text, |r: &ManifestEntry| &r.extra, warnings)?;
        unique_id(path, line, &r.image_id, &mut seen)?;
        Ok(r)
    })
}

pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    write_lines(path, entries)
}
