//! Raw title/description metadata to manifest entries.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::io::Loaded;
use super::manifest::{ManifestEntry, Split};
use crate::error::{Error, Result};

/// One line of a raw metadata file. `schema_version` is not required here
/// since these files usually come straight from a scrape or export.
#[derive(Debug, Deserialize)]
struct RawLine {
    image_id: String,
    image_path: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    group_key: Option<String>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

/// Hex sha256 of a file's content.
pub fn file_digest(path: &Path) -> std::io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Reads raw metadata lines. Without an explicit `group_key`, entries are
/// grouped by the content hash of their image (resolved against
/// `images_dir`) or by `image_path` when the image is not readable, so
/// repeated captions of one picture share a group.
pub fn load_raw_metadata(path: &Path, images_dir: Option<&Path>) -> Result<Loaded<ManifestEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |field: String, reason: String| Error::Schema {
            path: path.display().to_string(),
            line: line_no,
            field,
            reason,
        };
        let mut de = serde_json::Deserializer::from_str(&line);
        let mut raw: RawLine = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| schema(e.path().to_string(), e.into_inner().to_string()))?;
        raw.extra.remove("schema_version");
        if raw.image_id.trim().is_empty() {
            return Err(schema("image_id".into(), "must not be empty".into()));
        }
        if !seen.insert(raw.image_id.clone()) {
            return Err(schema("image_id".into(), format!("duplicate id {:?}", raw.image_id)));
        }
        let group_key = match raw.group_key {
            Some(k) => k,
            None => {
                let resolved = match images_dir {
                    Some(dir) => dir.join(&raw.image_path),
                    None => Path::new(&raw.image_path).to_path_buf(),
                };
                match file_digest(&resolved) {
                    Ok(d) => format!("sha256:{d}"),
                    Err(_) => {
                        warnings.push(format!(
                            "{}:{line_no}: image {} unreadable, grouping by path",
                            path.display(),
                            resolved.display()
                        ));
                        raw.image_path.clone()
                    }
                }
            }
        };
        records.push(ManifestEntry {
            image_id: raw.image_id,
            image_path: raw.image_path,
            title: raw.title,
            description: raw.description,
            caption: None,
            group_key,
            split: Split::Unassigned,
            extra: raw.extra,
        });
    }
    Ok(Loaded { records, warnings })
}
