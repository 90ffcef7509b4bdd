use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::manifest::{ManifestEntry, Split};
use crate::matchers::{normalize_phrase, NormalizeOptions};
use crate::model::AnnotationRecord;

/// Unique-phrase count under one normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseCount {
    pub variant: String,
    pub unique: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub images: usize,
    pub regions: usize,
    /// Under articles-and-quantities normalization, the pipeline default.
    pub unique_phrases: usize,
    pub unique_phrases_by_variant: Vec<PhraseCount>,
    pub images_per_split: BTreeMap<String, usize>,
    pub regions_per_split: BTreeMap<String, usize>,
    /// regions-per-image -> number of images
    pub regions_per_image: BTreeMap<usize, usize>,
    /// Annotation ids absent from the manifest.
    pub dangling_ids: Vec<String>,
    /// Manifest ids without an annotation record.
    pub unannotated_ids: Vec<String>,
}

pub const VARIANT_VERBATIM: &str = "verbatim";
pub const VARIANT_LOWERCASE: &str = "lowercase+whitespace";
pub const VARIANT_ARTICLES: &str = "lowercase+articles";
pub const VARIANT_FULL: &str = "lowercase+articles+quantities";

type Normalizer = Box<dyn Fn(&str) -> String>;

fn variants() -> Vec<(&'static str, Normalizer)> {
    let full = NormalizeOptions::default();
    let articles = full.articles_only();
    let none = NormalizeOptions {
        strip_articles: false,
        strip_quantities: false,
        ..NormalizeOptions::default()
    };
    vec![
        (VARIANT_VERBATIM, Box::new(|p: &str| p.to_string())),
        (VARIANT_LOWERCASE, Box::new(move |p: &str| normalize_phrase(p, &none))),
        (
            VARIANT_ARTICLES,
            Box::new(move |p: &str| normalize_phrase(p, &articles)),
        ),
        (VARIANT_FULL, Box::new(move |p: &str| normalize_phrase(p, &full))),
    ]
}

/// Counts images, regions and phrases. When a manifest is given, images
/// are the manifest entries and splits come from it; annotation records
/// whose id is not in the manifest are listed as dangling and skipped.
pub fn dataset_stats(manifest: Option<&[ManifestEntry]>, annotations: &[AnnotationRecord]) -> DatasetStats {
    let split_of: Option<BTreeMap<&str, Split>> =
        manifest.map(|m| m.iter().map(|e| (e.image_id.as_str(), e.split)).collect());

    let mut dangling = BTreeSet::new();
    let mut counted: Vec<&AnnotationRecord> = Vec::new();
    for rec in annotations {
        match &split_of {
            Some(map) if !map.contains_key(rec.image_id.as_str()) => {
                dangling.insert(rec.image_id.clone());
            }
            _ => counted.push(rec),
        }
    }

    let mut regions_per_image: BTreeMap<usize, usize> = BTreeMap::new();
    let mut images_per_split: BTreeMap<String, usize> = BTreeMap::new();
    let mut regions_per_split: BTreeMap<String, usize> = BTreeMap::new();
    let annotated: HashSet<&str> = counted.iter().map(|r| r.image_id.as_str()).collect();

    let images = match manifest {
        Some(m) => {
            for e in m {
                *images_per_split.entry(e.split.to_string()).or_default() += 1;
            }
            m.len()
        }
        None => counted.len(),
    };
    for rec in &counted {
        *regions_per_image.entry(rec.regions.len()).or_default() += 1;
        if let Some(map) = &split_of {
            let split = map[rec.image_id.as_str()].to_string();
            *regions_per_split.entry(split).or_default() += rec.regions.len();
        }
    }
    let unannotated_ids: Vec<String> = manifest
        .unwrap_or_default()
        .iter()
        .filter(|e| !annotated.contains(e.image_id.as_str()))
        .map(|e| e.image_id.clone())
        .collect();
    if !unannotated_ids.is_empty() {
        *regions_per_image.entry(0).or_default() += unannotated_ids.len();
    }

    let by_variant: Vec<PhraseCount> = variants()
        .into_iter()
        .map(|(name, f)| PhraseCount {
            variant: name.to_string(),
            unique: counted
                .iter()
                .flat_map(|r| r.regions.iter())
                .map(|reg| f(&reg.phrase))
                .collect::<HashSet<_>>()
                .len(),
        })
        .collect();

    DatasetStats {
        images,
        regions: counted.iter().map(|r| r.regions.len()).sum(),
        unique_phrases: by_variant
            .iter()
            .find(|c| c.variant == VARIANT_FULL)
            .map_or(0, |c| c.unique),
        unique_phrases_by_variant: by_variant,
        images_per_split,
        regions_per_split,
        regions_per_image,
        dangling_ids: dangling.into_iter().collect(),
        unannotated_ids,
    }
}

impl DatasetStats {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("images   {}\n", self.images));
        out.push_str(&format!("regions  {}\n", self.regions));
        out.push_str("unique phrases\n");
        for c in &self.unique_phrases_by_variant {
            out.push_str(&format!("  {:<32} {}\n", c.variant, c.unique));
        }
        if !self.images_per_split.is_empty() {
            out.push_str("split        images  regions\n");
            for (split, n) in &self.images_per_split {
                let r = self.regions_per_split.get(split).copied().unwrap_or(0);
                out.push_str(&format!("  {split:<10} {n:>6}  {r:>7}\n"));
            }
        }
        out.push_str("regions per image\n");
        for (k, n) in &self.regions_per_image {
            out.push_str(&format!("  {k:>3}: {n}\n"));
        }
        if !self.dangling_ids.is_empty() {
            out.push_str(&format!(
                "dangling ids ({}): {}\n",
                self.dangling_ids.len(),
                self.dangling_ids.join(", ")
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::model::Region;

    fn rec(id: &str, phrases: &[&str]) -> AnnotationRecord {
        let b = BBox::new(0.1, 0.1, 0.4, 0.4).unwrap();
        AnnotationRecord::new(id, "", phrases.iter().map(|p| Region::new(b, *p, None)).collect())
    }

    #[test]
    fn empty_dataset_is_all_zero() {
        let s = dataset_stats(Some(&[]), &[]);
        assert_eq!((s.images, s.regions, s.unique_phrases), (0, 0, 0));
        assert!(s.regions_per_image.is_empty());
        assert!(s.unique_phrases_by_variant.iter().all(|c| c.unique == 0));
    }

    #[test]
    fn normalization_collapses_phrases() {
        let s = dataset_stats(None, &[rec("1", &["a boy"]), rec("2", &["boy"])]);
        assert_eq!(s.images, 2);
        assert_eq!(s.regions, 2);
        assert_eq!(s.unique_phrases, 1);
        let verbatim = &s.unique_phrases_by_variant[0];
        assert_eq!((verbatim.variant.as_str(), verbatim.unique), (VARIANT_VERBATIM, 2));
    }

    #[test]
    fn splits_histogram_and_dangling() {
        let mut m: Vec<ManifestEntry> = ["a", "b", "c"]
            .iter()
            .map(|id| ManifestEntry::new(*id, format!("{id}.jpg")))
            .collect();
        m[0].split = Split::Test;
        m[1].split = Split::Test;
        m[2].split = Split::Train;
        let s = dataset_stats(
            Some(&m),
            &[rec("a", &["boy", "two women"]), rec("b", &["boy"]), rec("zzz", &["x"])],
        );
        assert_eq!(s.images, 3);
        assert_eq!(s.regions, 3);
        assert_eq!(s.dangling_ids, vec!["zzz".to_string()]);
        assert_eq!(s.unannotated_ids, vec!["c".to_string()]);
        assert_eq!(s.images_per_split["test"], 2);
        assert_eq!(s.regions_per_split["test"], 3);
        assert_eq!(s.regions_per_image, BTreeMap::from([(0, 1), (1, 1), (2, 1)]));
        assert_eq!(s.images_per_split.values().sum::<usize>(), s.images);
        assert!(s.to_text().contains("dangling ids (1): zzz"));
    }
}
