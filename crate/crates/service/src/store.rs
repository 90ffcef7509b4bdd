//! On-disk annotation store: one JSON document per image plus an
//! append-only edit log.
//!
//! Layout under the data directory:
//!
//! ```text
//! records/<sha256(image_id)>.json   current record, replaced atomically
//! edits.jsonl                       one EditLogEntry per accepted edit
//! manifest.jsonl                    optional; image paths and splits
//! ```
//!
//! A write replaces the record file first and then appends the log entry;
//! it is acknowledged only after both are on disk. On open, every record's
//! version is checked against the log.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use groundkit::dataset::{self, ManifestEntry, Split};
use groundkit::{AnnotationRecord, Region};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const RECORDS_DIR: &str = "records";
const EDIT_LOG: &str = "edits.jsonl";
const MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown image {0:?}")]
    NotFound(String),
    #[error("version conflict: expected {expected}, current {current}")]
    Conflict { expected: u64, current: u64 },
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("store is inconsistent: {0}")]
    Corrupt(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] groundkit::Error),
}

pub type StoreResult<T> = Result<T, StoreError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// What an edit changed. Regions identical before and after count as
/// unchanged; of the rest, pairs count as modified and the surplus as added
/// or removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub regions_added: usize,
    pub regions_removed: usize,
    pub regions_modified: usize,
    pub caption_changed: bool,
}

impl DiffSummary {
    pub fn between(old: &AnnotationRecord, new: &AnnotationRecord) -> Self {
        let mut unmatched: Vec<&Region> = old.regions.iter().collect();
        let mut fresh = 0;
        for r in &new.regions {
            match unmatched.iter().position(|o| *o == r) {
                Some(i) => {
                    unmatched.swap_remove(i);
                }
                None => fresh += 1,
            }
        }
        let modified = fresh.min(unmatched.len());
        Self {
            regions_added: fresh - modified,
            regions_removed: unmatched.len() - modified,
            regions_modified: modified,
            caption_changed: old.caption != new.caption,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditLogEntry {
    pub image_id: String,
    pub prior_version: u64,
    pub new_version: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub diff: DiffSummary,
    /// Written at startup for a record whose log entry was lost in a crash;
    /// its diff is unknown and left at zero.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recovered: bool,
}

/// Summary row for listings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub image_id: String,
    pub region_count: usize,
    pub annotated: bool,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitProgress {
    pub total: usize,
    pub annotated: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    pub annotated: usize,
    pub per_split: BTreeMap<String, SplitProgress>,
}

/// The editable part of a record plus the version the client last saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordUpdate {
    pub expected_version: u64,
    pub caption: String,
    pub regions: Vec<Region>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty", flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

struct Slot {
    record: RwLock<AnnotationRecord>,
    // serializes writers of one image; readers never take it
    write: tokio::sync::Mutex<()>,
}

pub struct Store {
    data_dir: PathBuf,
    images_dir: Option<PathBuf>,
    slots: BTreeMap<String, Arc<Slot>>,
    manifest: HashMap<String, ManifestEntry>,
    log: Mutex<File>,
}

fn record_file_name(image_id: &str) -> String {
    format!("{}.json", hex::encode(Sha256::digest(image_id.as_bytes())))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn fsync_dir(dir: &Path) -> StoreResult<()> {
    File::open(dir).and_then(|d| d.sync_all()).map_err(io_err(dir))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> StoreResult<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    fsync_dir(path.parent().expect("record files live in a directory"))
}

fn record_bytes(record: &AnnotationRecord) -> StoreResult<Vec<u8>> {
    let mut line = dataset::io::to_line(record)?;
    line.push('\n');
    Ok(line.into_bytes())
}

fn parse_record(path: &Path, bytes: &[u8]) -> StoreResult<AnnotationRecord> {
    let text = std::str::from_utf8(bytes).map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("schema_version");
    }
    let record: AnnotationRecord =
        serde_json::from_value(value).map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
    record.validate()?;
    Ok(record)
}

/// Joins a manifest image path onto the images directory, refusing
/// anything that could leave it.
pub fn resolve_image_path(images_dir: &Path, image_path: &str) -> Option<PathBuf> {
    let rel = Path::new(image_path);
    if rel.as_os_str().is_empty()
        || !rel
            .components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
    {
        return None;
    }
    let joined = images_dir.join(rel);
    let root = images_dir.canonicalize().ok()?;
    let real = joined.canonicalize().ok()?;
    real.starts_with(&root).then_some(real)
}

impl Store {
    /// Writes `records` into `data_dir` at version 0, skipping ids that
    /// already exist, and installs `manifest` when given. Returns how many
    /// records were added.
    pub fn import(
        data_dir: &Path,
        records: &[AnnotationRecord],
        manifest: Option<&[ManifestEntry]>,
    ) -> StoreResult<usize> {
        let dir = data_dir.join(RECORDS_DIR);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut added = 0;
        for r in records {
            r.validate()?;
            let path = dir.join(record_file_name(&r.image_id));
            if path.exists() {
                continue;
            }
            let mut fresh = r.clone();
            fresh.version = 0;
            write_atomic(&path, &record_bytes(&fresh)?)?;
            added += 1;
        }
        if let Some(m) = manifest {
            dataset::save_manifest(&data_dir.join(MANIFEST), m)?;
        }
        Ok(added)
    }

    pub fn open(data_dir: &Path, images_dir: Option<&Path>) -> StoreResult<Self> {
        let dir = data_dir.join(RECORDS_DIR);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;

        let mut records: BTreeMap<String, AnnotationRecord> = BTreeMap::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            if name.ends_with(".tmp") {
                // an unacknowledged write
                fs::remove_file(&path).map_err(io_err(&path))?;
                continue;
            }
            if !name.ends_with(".json") {
                continue;
            }
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let record = parse_record(&path, &bytes)?;
            if record_file_name(&record.image_id) != name {
                return Err(StoreError::Corrupt(format!(
                    "{} holds record {:?}",
                    path.display(),
                    record.image_id
                )));
            }
            records.insert(record.image_id.clone(), record);
        }

        let log_path = data_dir.join(EDIT_LOG);
        let last_logged = check_log(&log_path)?;
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        if let Some(id) = last_logged.keys().find(|id| !records.contains_key(*id)) {
            return Err(StoreError::Corrupt(format!("edit log mentions unknown image {id:?}")));
        }
        for (id, rec) in &records {
            let logged = last_logged.get(id).copied().unwrap_or(0);
            if rec.version == logged {
                continue;
            }
            if rec.version == logged + 1 {
                tracing::warn!(image_id = %id, version = rec.version, "record write without log entry, recovering");
                let entry = EditLogEntry {
                    image_id: id.clone(),
                    prior_version: logged,
                    new_version: rec.version,
                    timestamp: now_ms(),
                    diff: DiffSummary::default(),
                    recovered: true,
                };
                append_log(&mut log, &log_path, &entry)?;
                continue;
            }
            return Err(StoreError::Corrupt(format!(
                "image {id:?} is at version {} but the log ends at {logged}",
                rec.version
            )));
        }

        let manifest_path = data_dir.join(MANIFEST);
        let manifest = if manifest_path.exists() {
            dataset::load_manifest(&manifest_path)?
                .records
                .into_iter()
                .map(|e| (e.image_id.clone(), e))
                .collect()
        } else {
            HashMap::new()
        };

        let slots = records
            .into_iter()
            .map(|(id, record)| {
                (
                    id,
                    Arc::new(Slot {
                        record: RwLock::new(record),
                        write: tokio::sync::Mutex::new(()),
                    }),
                )
            })
            .collect();
        Ok(Self {
            data_dir: data_dir.to_path_buf(),
            images_dir: images_dir.map(Path::to_path_buf),
            slots,
            manifest,
            log: Mutex::new(log),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn split_of(&self, id: &str) -> Split {
        self.manifest.get(id).map_or(Split::Unassigned, |e| e.split)
    }

    pub fn get(&self, image_id: &str) -> StoreResult<AnnotationRecord> {
        let slot = self
            .slots
            .get(image_id)
            .ok_or_else(|| StoreError::NotFound(image_id.into()))?;
        Ok(slot.record.read().expect("record lock").clone())
    }

    /// Images ordered by id, optionally restricted to one split.
    pub fn list(&self, split: Option<Split>, offset: usize, limit: usize) -> (usize, Vec<ImageSummary>) {
        let matching = self
            .slots
            .iter()
            .filter(|(id, _)| split.is_none_or(|s| self.split_of(id) == s));
        let mut total = 0;
        let mut page = Vec::new();
        for (id, slot) in matching {
            if total >= offset && page.len() < limit {
                let r = slot.record.read().expect("record lock");
                page.push(ImageSummary {
                    image_id: id.clone(),
                    region_count: r.regions.len(),
                    annotated: r.version > 0,
                    split: self.split_of(id),
                });
            }
            total += 1;
        }
        (total, page)
    }

    pub fn progress(&self) -> Progress {
        let mut p = Progress::default();
        for (id, slot) in &self.slots {
            let annotated = slot.record.read().expect("record lock").version > 0;
            p.total += 1;
            p.annotated += annotated as usize;
            let s = p.per_split.entry(self.split_of(id).to_string()).or_default();
            s.total += 1;
            s.annotated += annotated as usize;
        }
        p
    }

    /// Replaces a record if `expected_version` is current. Writers of the
    /// same image queue up; readers keep seeing the previous version until
    /// the new one is on disk.
    pub async fn put(self: &Arc<Self>, image_id: &str, update: RecordUpdate) -> StoreResult<AnnotationRecord> {
        let slot = self
            .slots
            .get(image_id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(image_id.into()))?;
        let _guard = slot.write.lock().await;
        let current = slot.record.read().expect("record lock").clone();
        if update.expected_version != current.version {
            return Err(StoreError::Conflict {
                expected: update.expected_version,
                current: current.version,
            });
        }
        let next = AnnotationRecord {
            image_id: image_id.to_string(),
            caption: update.caption,
            regions: update.regions,
            version: current.version + 1,
            extra: update.extra,
        };
        next.validate().map_err(|e| match e {
            groundkit::Error::Validation { field, reason } => StoreError::Validation { field, reason },
            other => other.into(),
        })?;
        let entry = EditLogEntry {
            image_id: image_id.to_string(),
            prior_version: current.version,
            new_version: next.version,
            timestamp: now_ms(),
            diff: DiffSummary::between(&current, &next),
            recovered: false,
        };
        let store = Arc::clone(self);
        let to_write = next.clone();
        tokio::task::spawn_blocking(move || store.persist(&to_write, &entry))
            .await
            .map_err(|e| StoreError::Corrupt(format!("writer task failed: {e}")))??;
        *slot.record.write().expect("record lock") = next.clone();
        Ok(next)
    }

    fn persist(&self, record: &AnnotationRecord, entry: &EditLogEntry) -> StoreResult<()> {
        let path = self.data_dir.join(RECORDS_DIR).join(record_file_name(&record.image_id));
        write_atomic(&path, &record_bytes(record)?)?;
        let log_path = self.data_dir.join(EDIT_LOG);
        let mut log = self.log.lock().expect("log lock");
        append_log(&mut log, &log_path, entry)
    }

    /// The on-disk file for an image, if the manifest lists one that exists
    /// inside the images directory.
    pub fn image_file(&self, image_id: &str) -> Option<PathBuf> {
        let dir = self.images_dir.as_deref()?;
        let entry = self.manifest.get(image_id)?;
        resolve_image_path(dir, &entry.image_path).filter(|p| p.is_file())
    }

    /// Every log entry, in append order.
    pub fn edit_log(&self) -> StoreResult<Vec<EditLogEntry>> {
        read_log(&self.data_dir.join(EDIT_LOG))
    }
}

fn append_log(log: &mut File, path: &Path, entry: &EditLogEntry) -> StoreResult<()> {
    let mut line = serde_json::to_string(entry).expect("log entries serialize");
    line.push('\n');
    log.write_all(line.as_bytes()).map_err(io_err(path))?;
    log.sync_data().map_err(io_err(path))
}

fn read_log(path: &Path) -> StoreResult<Vec<EditLogEntry>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: EditLogEntry = serde_json::from_str(&line)
            .map_err(|e| StoreError::Corrupt(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

/// Drops a torn final line left by a crash mid-append, then checks that
/// versions are contiguous per image. Returns the last logged version of
/// every image.
fn check_log(path: &Path) -> StoreResult<HashMap<String, u64>> {
    if path.exists() {
        let bytes = fs::read(path).map_err(io_err(path))?;
        if !bytes.is_empty() && !bytes.ends_with(b"\n") {
            let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            tracing::warn!(path = %path.display(), dropped = bytes.len() - keep, "truncating torn edit log tail");
            let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
            f.set_len(keep as u64).map_err(io_err(path))?;
            f.sync_all().map_err(io_err(path))?;
        }
    }
    let mut last: HashMap<String, u64> = HashMap::new();
    for e in read_log(path)? {
        let prev = last.get(&e.image_id).copied().unwrap_or(0);
        if e.prior_version != prev || e.new_version != prev + 1 {
            return Err(StoreError::Corrupt(format!(
                "edit log for {:?} jumps from {prev} to {}->{}",
                e.image_id, e.prior_version, e.new_version
            )));
        }
        last.insert(e.image_id, e.new_version);
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use groundkit::BBox;

    fn region(phrase: &str) -> Region {
        Region::new(BBox::new(0.1, 0.1, 0.5, 0.5).unwrap(), phrase, None)
    }

    #[test]
    fn diff_summary_counts() {
        let old = AnnotationRecord::new("a", "c", vec![region("boy"), region("women"), region("fan")]);
        let mut new = AnnotationRecord::new("a", "c2", vec![region("boy"), region("porters")]);
        let d = DiffSummary::between(&old, &new);
        assert_eq!(
            (
                d.regions_added,
                d.regions_removed,
                d.regions_modified,
                d.caption_changed
            ),
            (0, 1, 1, true)
        );
        new.regions.push(region("travelers"));
        new.regions.push(region("temple"));
        let d = DiffSummary::between(&old, &new);
        assert_eq!((d.regions_added, d.regions_removed, d.regions_modified), (1, 0, 2));
    }

    #[test]
    fn traversal_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        fs::create_dir_all(images.join("sub")).unwrap();
        fs::write(images.join("sub/a.jpg"), b"x").unwrap();
        fs::write(dir.path().join("secret"), b"x").unwrap();
        assert!(resolve_image_path(&images, "sub/a.jpg").is_some());
        assert!(resolve_image_path(&images, "./sub/a.jpg").is_some());
        assert!(resolve_image_path(&images, "../secret").is_none());
        assert!(resolve_image_path(&images, "sub/../../secret").is_none());
        assert!(resolve_image_path(&images, dir.path().join("secret").to_str().unwrap()).is_none());
        assert!(resolve_image_path(&images, "").is_none());
    }

    #[test]
    fn torn_log_tail_and_lost_entry_recover() {
        let dir = tempfile::tempdir().unwrap();
        Store::import(dir.path(), &[AnnotationRecord::new("a", "", vec![region("boy")])], None).unwrap();
        let store = Arc::new(Store::open(dir.path(), None).unwrap());
        let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
        let update = RecordUpdate {
            expected_version: 0,
            caption: "edited".into(),
            regions: vec![region("boy")],
            extra: Default::default(),
        };
        rt.block_on(store.put("a", update)).unwrap();
        drop(store);

        // simulate a crash after the record was replaced but mid-way
        // through appending its log entry
        let log = dir.path().join(EDIT_LOG);
        let text = fs::read_to_string(&log).unwrap();
        fs::write(&log, &text[..text.len() / 2]).unwrap();

        let store = Store::open(dir.path(), None).unwrap();
        assert_eq!(store.get("a").unwrap().version, 1);
        let entries = store.edit_log().unwrap();
        assert_eq!(entries.len(), 1);
        assert!(entries[0].recovered);
        drop(store);
        assert!(Store::open(dir.path(), None).is_ok());
    }

    #[test]
    fn inconsistent_versions_refuse_to_open() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = AnnotationRecord::new("a", "", vec![]);
        rec.version = 3;
        let records = dir.path().join(RECORDS_DIR);
        fs::create_dir_all(&records).unwrap();
        fs::write(records.join(record_file_name("a")), record_bytes(&rec).unwrap()).unwrap();
        assert!(matches!(Store::open(dir.path(), None), Err(StoreError::Corrupt(_))));
    }
}
