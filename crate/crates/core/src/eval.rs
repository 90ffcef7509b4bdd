//! Grounding evaluation averaged per image: mAP over IoU 0.50:0.05:0.95,
//! mAP@0.5 and R@k.
//!
//! Within an image, the classes are the distinct normalized ground-truth
//! phrases. Each prediction is routed to at most one class: the class equal
//! to its normalized phrase if there is one, otherwise the class with the
//! highest token overlap at or above the policy's fuzzy threshold. Routing
//! does not depend on the match mode, so switching from exact to fuzzy only
//! turns routed false positives into candidates for a match and never adds
//! or reorders predictions.
//!
//! AP is 101-point interpolated. Image AP at a threshold is the mean over
//! the image's classes; aggregates are unweighted means over images with at
//! least one ground-truth region.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::matchers::{token_overlap, MatchPolicy};
use crate::model::{AnnotationRecord, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecallMode {
    /// Top-k over all of an image's predictions.
    Pooled,
    /// Top-k within each class's routed predictions.
    PerClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub match_policy: MatchPolicy,
    pub iou_thresholds_map: Vec<f64>,
    pub iou_threshold_single: f64,
    pub recall_ks: Vec<usize>,
    pub recall_mode: RecallMode,
}

pub fn default_map_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            match_policy: MatchPolicy::default(),
            iou_thresholds_map: default_map_thresholds(),
            iou_threshold_single: 0.5,
            recall_ks: vec![1, 10],
            recall_mode: RecallMode::Pooled,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.match_policy.validate()?;
        let ts = &self.iou_thresholds_map;
        if ts.is_empty() {
            return Err(Error::Config("iou_thresholds_map is empty".into()));
        }
        if ts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("iou_thresholds_map must be strictly increasing".into()));
        }
        if ts
            .iter()
            .chain(std::iter::once(&self.iou_threshold_single))
            .any(|t| !(*t > 0.0 && *t <= 1.0))
        {
            return Err(Error::Config("IoU thresholds must lie in (0, 1]".into()));
        }
        if self.recall_ks.is_empty() || self.recall_ks.contains(&0) {
            return Err(Error::Config("recall_ks must be non-empty and positive".into()));
        }
        Ok(())
    }
}

/// Outcome of greedy one-to-one matching for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Prediction indices in ranking order.
    pub order: Vec<usize>,
    /// Matched ground-truth index per prediction (input indexing).
    pub pred_match: Vec<Option<usize>>,
    /// Matched prediction index per ground-truth region.
    pub gt_match: Vec<Option<usize>>,
}

impl Assignment {
    pub fn is_true_positive(&self, pred: usize) -> bool {
        self.pred_match[pred].is_some()
    }

    /// TP/FP flags in ranking order.
    pub fn ranked_hits(&self) -> Vec<bool> {
        self.order.iter().map(|&i| self.pred_match[i].is_some()).collect()
    }

    pub fn matched_gt(&self) -> usize {
        self.gt_match.iter().filter(|m| m.is_some()).count()
    }
}

fn confidences(pred: &[Region]) -> Result<Vec<f64>> {
    pred.iter()
        .enumerate()
        .map(|(i, r)| {
            r.confidence
                .ok_or_else(|| Error::validation(format!("predictions[{i}].confidence"), "missing"))
        })
        .collect()
}

/// Ranking order: confidence descending, then box, then phrase, then index.
fn rank(pred: &[Region], conf: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| {
        conf[b]
            .total_cmp(&conf[a])
            .then(pred[a].bbox.lex_cmp(&pred[b].bbox))
            .then(pred[a].phrase.cmp(&pred[b].phrase))
            .then(a.cmp(&b))
    });
    order
}

// Each prediction in `order` takes the unmatched eligible ground truth with
// the highest IoU ≥ `iou_t` (lowest index on ties).
fn greedy(
    gt_boxes: &[BBox],
    pred_boxes: &[BBox],
    order: &[usize],
    iou_t: f64,
    eligible: impl Fn(usize, usize) -> bool,
) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let mut pred_match = vec![None; pred_boxes.len()];
    let mut gt_match = vec![None; gt_boxes.len()];
    for &p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gb) in gt_boxes.iter().enumerate() {
            if gt_match[g].is_some() || !eligible(p, g) {
                continue;
            }
            let v = iou(&pred_boxes[p], gb);
            if v >= iou_t && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            pred_match[p] = Some(g);
            gt_match[g] = Some(p);
        }
    }
    (pred_match, gt_match)
}

/// Greedy one-to-one matching of predictions against ground truth. A pair is
/// eligible when its IoU is at least `iou_t` and the phrases match under
/// `policy`.
pub fn match_predictions(gt: &[Region], pred: &[Region], iou_t: f64, policy: &MatchPolicy) -> Result<Assignment> {
    let conf = confidences(pred)?;
    let order = rank(pred, &conf);
    let gt_norm: Vec<String> = gt.iter().map(|r| policy.normalize(&r.phrase)).collect();
    let pred_norm: Vec<String> = pred.iter().map(|r| policy.normalize(&r.phrase)).collect();
    let gt_boxes: Vec<BBox> = gt.iter().map(|r| r.bbox).collect();
    let pred_boxes: Vec<BBox> = pred.iter().map(|r| r.bbox).collect();
    let (pred_match, gt_match) = greedy(&gt_boxes, &pred_boxes, &order, iou_t, |p, g| {
        policy.normalized_match(&pred_norm[p], &gt_norm[g])
    });
    Ok(Assignment {
        order,
        pred_match,
        gt_match,
    })
}

/// 101-point interpolated AP of a ranked TP/FP series against `n_gt`
/// ground-truth regions. `None` when there is no ground truth.
pub fn average_precision(ranked_hits: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut tp = Vec::with_capacity(ranked_hits.len());
    let mut precision = Vec::with_capacity(ranked_hits.len());
    let mut hits = 0usize;
    for (k, &h) in ranked_hits.iter().enumerate() {
        hits += h as usize;
        tp.push(hits);
        precision.push(hits as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut sum = 0.0;
    let mut k = 0;
    for i in 0..=100usize {
        // recall(k) >= i / 100, compared in integers
        while k < tp.len() && tp[k] * 100 < i * n_gt {
            k += 1;
        }
        if k == tp.len() {
            break;
        }
        sum += precision[k];
    }
    Some(sum / 101.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub iou: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub gt_regions: usize,
    pub predictions: usize,
    pub classes: usize,
    pub ap_by_threshold: Vec<ThresholdAp>,
    pub map: f64,
    pub map_50: f64,
    pub recall_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub ap_integration: String,
    pub iou_thresholds_map: Vec<f64>,
    pub iou_threshold_single: f64,
    pub match_mode: String,
    pub fuzzy_threshold: f64,
    pub recall_variant: RecallMode,
    pub averaging: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub map: f64,
    pub map_50: f64,
    pub recall_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub images: usize,
    pub images_scored: usize,
    pub gt_regions: usize,
    pub predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub aggregate: Aggregate,
    pub counts: Counts,
    pub per_image: BTreeMap<String, ImageResult>,
    /// Images excluded from the averages because they have no ground truth.
    pub images_without_gt: Vec<String>,
}

impl EvalReport {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.aggregate.recall_at.get(&k).copied()
    }

    /// Aligned plain-text summary table.
    pub fn to_table(&self) -> String {
        let p = &self.protocol;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# match={} fuzzy_threshold={} ap={} iou_map={:.2}:{:.2} iou_single={:.2} recall={:?} averaging={}",
            p.match_mode,
            p.fuzzy_threshold,
            p.ap_integration,
            p.iou_thresholds_map.first().copied().unwrap_or(0.0),
            p.iou_thresholds_map.last().copied().unwrap_or(0.0),
            p.iou_threshold_single,
            p.recall_variant,
            p.averaging,
        );
        let mut header = vec![
            "image".to_string(),
            "gt".into(),
            "pred".into(),
            "mAP".into(),
            "mAP@0.5".into(),
        ];
        header.extend(self.aggregate.recall_at.keys().map(|k| format!("R@{k}")));
        let mut rows: Vec<Vec<String>> = Vec::new();
        for (id, r) in &self.per_image {
            let mut row = vec![
                id.clone(),
                r.gt_regions.to_string(),
                r.predictions.to_string(),
                pct(r.map),
                pct(r.map_50),
            ];
            row.extend(r.recall_at.values().map(|v| pct(*v)));
            rows.push(row);
        }
        let mut total = vec![
            "ALL".to_string(),
            self.counts.gt_regions.to_string(),
            self.counts.predictions.to_string(),
            pct(self.aggregate.map),
            pct(self.aggregate.map_50),
        ];
        total.extend(self.aggregate.recall_at.values().map(|v| pct(*v)));

        let mut widths: Vec<usize> = header.iter().map(String::len).collect();
        for row in rows.iter().chain(std::iter::once(&total)) {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |row: &[String]| {
            row.iter()
                .zip(&widths)
                .enumerate()
                .map(
                    |(i, (c, w))| {
                        if i == 0 {
                            format!("{c:<w$}")
                        } else {
                            format!("{c:>w$}")
                        }
                    },
                )
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", line(&header));
        for row in &rows {
            let _ = writeln!(out, "{}", line(row));
        }
        let _ = writeln!(out, "{}", line(&total));
        if !self.images_without_gt.is_empty() {
            let _ = writeln!(
                out,
                "# {} image(s) without ground truth excluded: {}",
                self.images_without_gt.len(),
                self.images_without_gt.join(", ")
            );
        }
        out
    }
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

/// Routes each normalized prediction phrase to one of `classes` (sorted,
/// unique), or `None`. Exact equality wins, then the highest token overlap
/// at or above the threshold, then the alphabetically first class.
pub fn route_to_class(pred_norm: &str, classes: &[String], fuzzy_threshold: f64) -> Option<usize> {
    if let Ok(i) = classes.binary_search_by(|c| c.as_str().cmp(pred_norm)) {
        return Some(i);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in classes.iter().enumerate() {
        let o = token_overlap(pred_norm, c);
        if o >= fuzzy_threshold && best.is_none_or(|(_, bo)| o > bo) {
            best = Some((i, o));
        }
    }
    best.map(|(i, _)| i)
}

/// Metrics for a single image. `gt` must be non-empty.
pub fn evaluate_image(gt: &[Region], pred: &[Region], cfg: &EvalConfig) -> Result<ImageResult> {
    let policy = &cfg.match_policy;
    let conf = confidences(pred)?;
    let order = rank(pred, &conf);
    let gt_norm: Vec<String> = gt.iter().map(|r| policy.normalize(&r.phrase)).collect();
    let pred_norm: Vec<String> = pred.iter().map(|r| policy.normalize(&r.phrase)).collect();
    let gt_boxes: Vec<BBox> = gt.iter().map(|r| r.bbox).collect();
    let pred_boxes: Vec<BBox> = pred.iter().map(|r| r.bbox).collect();

    let mut classes: Vec<String> = gt_norm.clone();
    classes.sort();
    classes.dedup();
    let gt_class: Vec<usize> = gt_norm
        .iter()
        .map(|p| classes.binary_search(p).expect("class of own phrase"))
        .collect();
    let pred_class: Vec<Option<usize>> = pred_norm
        .iter()
        .map(|p| route_to_class(p, &classes, policy.fuzzy_threshold))
        .collect();

    let class_eval = |c: usize, iou_t: f64, top_k: Option<usize>| -> (Vec<bool>, usize, usize) {
        let mut ranked: Vec<usize> = order.iter().copied().filter(|&p| pred_class[p] == Some(c)).collect();
        if let Some(k) = top_k {
            ranked.truncate(k);
        }
        let n_gt = gt_class.iter().filter(|&&g| g == c).count();
        let (pred_match, gt_match) = greedy(&gt_boxes, &pred_boxes, &ranked, iou_t, |p, g| {
            gt_class[g] == c && policy.normalized_match(&pred_norm[p], &classes[c])
        });
        let hits = ranked.iter().map(|&p| pred_match[p].is_some()).collect();
        (hits, n_gt, gt_match.iter().filter(|m| m.is_some()).count())
    };

    let mut ap_by_threshold = Vec::with_capacity(cfg.iou_thresholds_map.len());
    let image_ap = |iou_t: f64| -> f64 {
        let total: f64 = (0..classes.len())
            .map(|c| {
                let (hits, n_gt, _) = class_eval(c, iou_t, None);
                average_precision(&hits, n_gt).expect("class has ground truth")
            })
            .sum();
        total / classes.len() as f64
    };
    for &t in &cfg.iou_thresholds_map {
        ap_by_threshold.push(ThresholdAp {
            iou: t,
            ap: image_ap(t),
        });
    }
    let map = ap_by_threshold.iter().map(|a| a.ap).sum::<f64>() / ap_by_threshold.len() as f64;
    let map_50 = image_ap(cfg.iou_threshold_single);

    let mut recall_at = BTreeMap::new();
    for &k in &cfg.recall_ks {
        let matched = match cfg.recall_mode {
            RecallMode::Pooled => {
                let top: Vec<usize> = order.iter().copied().take(k).collect();
                let (_, gt_match) = greedy(&gt_boxes, &pred_boxes, &top, cfg.iou_threshold_single, |p, g| {
                    policy.normalized_match(&pred_norm[p], &gt_norm[g])
                });
                gt_match.iter().filter(|m| m.is_some()).count()
            }
            RecallMode::PerClass => (0..classes.len())
                .map(|c| class_eval(c, cfg.iou_threshold_single, Some(k)).2)
                .sum(),
        };
        recall_at.insert(k, matched as f64 / gt.len() as f64);
    }

    Ok(ImageResult {
        gt_regions: gt.len(),
        predictions: pred.len(),
        classes: classes.len(),
        ap_by_threshold,
        map,
        map_50,
        recall_at,
    })
}

/// Evaluates prediction records against ground-truth records.
pub fn evaluate(
    gt_records: &[AnnotationRecord],
    pred_records: &[AnnotationRecord],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut gt: BTreeMap<&str, &[Region]> = BTreeMap::new();
    for r in gt_records {
        if gt.insert(r.image_id.as_str(), &r.regions).is_some() {
            return Err(Error::validation(
                "image_id",
                format!("duplicate ground-truth record {:?}", r.image_id),
            ));
        }
    }
    let mut orphans: Vec<String> = pred_records
        .iter()
        .filter(|r| !gt.contains_key(r.image_id.as_str()))
        .map(|r| r.image_id.clone())
        .collect();
    if !orphans.is_empty() {
        orphans.sort();
        orphans.dedup();
        return Err(Error::OrphanPredictions(orphans));
    }
    let mut preds: HashMap<&str, Vec<Region>> = HashMap::new();
    for r in pred_records {
        preds
            .entry(r.image_id.as_str())
            .or_default()
            .extend(r.regions.iter().cloned());
    }

    let mut per_image = BTreeMap::new();
    let mut images_without_gt = Vec::new();
    let mut n_pred = 0;
    let mut n_gt = 0;
    for (&id, &regions) in &gt {
        let pred = preds.get(id).map(Vec::as_slice).unwrap_or(&[]);
        n_pred += pred.len();
        n_gt += regions.len();
        if regions.is_empty() {
            images_without_gt.push(id.to_string());
            continue;
        }
        let result = evaluate_image(regions, pred, cfg).map_err(|e| match e {
            Error::Validation { field, .. } if field.ends_with(".confidence") => {
                let index = field
                    .trim_start_matches("predictions[")
                    .split(']')
                    .next()
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(0);
                Error::MissingConfidence {
                    image_id: id.to_string(),
                    index,
                }
            }
            other => other,
        })?;
        per_image.insert(id.to_string(), result);
    }

    let scored = per_image.len();
    let mean = |f: &dyn Fn(&ImageResult) -> f64| {
        if scored == 0 {
            0.0
        } else {
            per_image.values().map(f).sum::<f64>() / scored as f64
        }
    };
    let recall_at = cfg
        .recall_ks
        .iter()
        .map(|&k| (k, mean(&|r: &ImageResult| r.recall_at[&k])))
        .collect();
    let aggregate = Aggregate {
        map: mean(&|r| r.map),
        map_50: mean(&|r| r.map_50),
        recall_at,
    };

    Ok(EvalReport {
        protocol: Protocol {
            ap_integration: "101-point interpolated".into(),
            iou_thresholds_map: cfg.iou_thresholds_map.clone(),
            iou_threshold_single: cfg.iou_threshold_single,
            match_mode: cfg.match_policy.mode.to_string(),
            fuzzy_threshold: cfg.match_policy.fuzzy_threshold,
            recall_variant: cfg.recall_mode,
            averaging: "per-image, unweighted".into(),
        },
        aggregate,
        counts: Counts {
            images: gt.len(),
            images_scored: scored,
            gt_regions: n_gt,
            predictions: n_pred,
        },
        per_image,
        images_without_gt,
    })
}
