//! Generators and brute-force reference implementations shared by the
//! property tests and the acceptance suite.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use groundkit::matchers::token_overlap;
use groundkit::{iou, tokenize, AnnotationRecord, BBox, MatchPolicy, Proposal, ProposalSet, Region, TokenizedPrompt};
use rand::seq::SliceRandom;
use rand::Rng;

pub const WORDS: &[&str] = &[
    "two",
    "women",
    "a",
    "boy",
    "the",
    "courtesan",
    "of",
    "as",
    "print",
    "temple",
    "child",
    "fan",
    "and",
    "mount",
    "fuji",
    "an",
    "old",
    "man",
    "Katsuragi",
    "élan",
];
const SEPARATORS: &[&str] = &[" ", " ", " ", " ", ", ", ". ", " - ", "; ", "  "];

pub fn random_prompt<R: Rng>(rng: &mut R) -> TokenizedPrompt {
    let n = rng.gen_range(1..=12);
    let mut text = String::new();
    if rng.gen_bool(0.1) {
        text.push(' ');
    }
    for i in 0..n {
        if i > 0 {
            text.push_str(SEPARATORS.choose(rng).unwrap());
        }
        text.push_str(WORDS.choose(rng).unwrap());
    }
    if rng.gen_bool(0.5) {
        text.push('.');
    }
    tokenize(&text).unwrap()
}

/// Scores clustered around the 0.20 default so that boundary cases are common.
pub fn random_score<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..6) {
        0 => 0.0,
        1 => 0.2,
        2 => 0.199_999,
        3 => 0.200_001,
        4 => 1.0,
        _ => rng.gen_range(0.0..=1.0),
    }
}

pub fn random_scores<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| random_score(rng)).collect()
}

pub fn grid_box<R: Rng>(rng: &mut R, cells: u32) -> BBox {
    let a = rng.gen_range(0..cells);
    let b = rng.gen_range(a + 1..=cells);
    let c = rng.gen_range(0..cells);
    let d = rng.gen_range(c + 1..=cells);
    let f = cells as f64;
    BBox::new(a as f64 / f, c as f64 / f, b as f64 / f, d as f64 / f).unwrap()
}

/// A box equal to `b` or nudged by one grid cell on one side.
pub fn jitter<R: Rng>(rng: &mut R, b: &BBox, cells: u32) -> BBox {
    let f = cells as f64;
    let mut c: Vec<i64> = b.to_array().iter().map(|v| (v * f).round() as i64).collect();
    if rng.gen_bool(0.6) {
        let side = rng.gen_range(0..4);
        c[side] += if rng.gen_bool(0.5) { 1 } else { -1 };
    }
    let c: Vec<i64> = c.iter().map(|v| (*v).clamp(0, cells as i64)).collect();
    if c[0] >= c[2] || c[1] >= c[3] {
        return *b;
    }
    BBox::new(c[0] as f64 / f, c[1] as f64 / f, c[2] as f64 / f, c[3] as f64 / f).unwrap()
}

/// Random proposals over a random prompt; boxes are often near-duplicates
/// or nested so that every refinement stage has work to do.
pub fn random_proposal_set<R: Rng>(rng: &mut R, id: &str) -> ProposalSet {
    let prompt = random_prompt(rng);
    let n = rng.gen_range(0..=8);
    let mut boxes: Vec<BBox> = Vec::new();
    for _ in 0..n {
        let b = match boxes.choose(rng) {
            Some(prev) if rng.gen_bool(0.5) => jitter(rng, prev, 40),
            _ => grid_box(rng, 10),
        };
        boxes.push(b);
    }
    let proposals = boxes
        .into_iter()
        .map(|bbox| Proposal {
            bbox,
            token_scores: random_scores(rng, prompt.len()),
        })
        .collect();
    ProposalSet::new(id, prompt, proposals)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleGroup {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub mean: f64,
}

/// Every contiguous token range [i, j) that consists of word tokens scoring
/// at least `t` and cannot be extended on either side.
pub fn oracle_groups(prompt: &TokenizedPrompt, scores: &[f64], t: f64) -> Vec<OracleGroup> {
    let toks = prompt.tokens();
    let n = toks.len();
    let ok = |k: usize| toks[k].is_word() && scores[k] >= t;
    let chars: Vec<char> = prompt.text().chars().collect();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..=n {
            let all = (i..j).all(ok);
            let left_closed = i == 0 || !ok(i - 1);
            let right_closed = j == n || !ok(j);
            if all && left_closed && right_closed {
                let surface: String = chars[toks[i].start..toks[j - 1].end].iter().collect();
                let mut sum = 0.0;
                for s in &scores[i..j] {
                    sum += s;
                }
                out.push(OracleGroup {
                    start: i,
                    end: j,
                    surface,
                    mean: sum / (j - i) as f64,
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------- evaluation

pub const EVAL_PHRASES: &[&str] = &[
    "boy",
    "a boy",
    "two women",
    "women",
    "woman",
    "old man",
    "man",
    "temple",
    "the temple",
    "a small child",
    "child",
];

pub fn random_eval_image<R: Rng>(
    rng: &mut R,
    id: &str,
    max_gt: usize,
    max_pred: usize,
) -> (AnnotationRecord, AnnotationRecord) {
    let n_gt = rng.gen_range(0..=max_gt);
    let gt: Vec<Region> = (0..n_gt)
        .map(|_| Region::new(grid_box(rng, 10), *EVAL_PHRASES.choose(rng).unwrap(), None))
        .collect();
    let n_pred = rng.gen_range(0..=max_pred);
    let pred: Vec<Region> = (0..n_pred)
        .map(|_| {
            let bbox = match gt.choose(rng) {
                Some(g) if rng.gen_bool(0.7) => jitter(rng, &g.bbox, 10),
                _ => grid_box(rng, 10),
            };
            let phrase = match gt.choose(rng) {
                Some(g) if rng.gen_bool(0.5) => g.phrase.clone(),
                _ => EVAL_PHRASES.choose(rng).unwrap().to_string(),
            };
            let conf = match rng.gen_range(0..3) {
                0 => 0.5,
                1 => [0.3, 0.7, 0.9].choose(rng).copied().unwrap(),
                _ => rng.gen_range(0.0..=1.0),
            };
            Region::new(bbox, phrase, Some(conf))
        })
        .collect();
    (AnnotationRecord::new(id, "", gt), AnnotationRecord::new(id, "", pred))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceImage {
    pub map: f64,
    pub map_50: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub ap_by_threshold: Vec<f64>,
}

// Candidate key per prediction: matched, IoU of the match, then lower GT
// index preferred.
type Key = (bool, f64, i64);

fn cmp_keys(a: &[Key], b: &[Key]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Enumerates every partial one-to-one assignment of the ranked
/// predictions to ground truth and returns, per prediction, whether it is
/// matched in the assignment whose key sequence is lexicographically
/// greatest. This is the standard "each detection in rank order takes the
/// best remaining ground truth" rule stated as an optimisation.
fn exhaustive_hits(ranked: &[usize], n_gt: usize, eligible_iou: &dyn Fn(usize, usize) -> Option<f64>) -> Vec<bool> {
    fn walk(
        pos: usize,
        ranked: &[usize],
        n_gt: usize,
        used: &mut Vec<bool>,
        keys: &mut Vec<Key>,
        eligible_iou: &dyn Fn(usize, usize) -> Option<f64>,
        best: &mut Option<Vec<Key>>,
    ) {
        if pos == ranked.len() {
            if best.as_ref().is_none_or(|b| cmp_keys(keys, b) == Ordering::Greater) {
                *best = Some(keys.clone());
            }
            return;
        }
        keys.push((false, 0.0, 0));
        walk(pos + 1, ranked, n_gt, used, keys, eligible_iou, best);
        keys.pop();
        for g in 0..n_gt {
            if used[g] {
                continue;
            }
            if let Some(v) = eligible_iou(ranked[pos], g) {
                used[g] = true;
                keys.push((true, v, -(g as i64)));
                walk(pos + 1, ranked, n_gt, used, keys, eligible_iou, best);
                keys.pop();
                used[g] = false;
            }
        }
    }
    let mut best = None;
    walk(
        0,
        ranked,
        n_gt,
        &mut vec![false; n_gt],
        &mut Vec::new(),
        eligible_iou,
        &mut best,
    );
    best.unwrap().into_iter().map(|k| k.0).collect()
}

/// 101-point interpolated AP by direct scan: at each recall level, the
/// best precision over all ranks reaching that recall.
pub fn reference_ap(hits: &[bool], n_gt: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..=100usize {
        let mut best: f64 = 0.0;
        let mut tp = 0usize;
        for (k, h) in hits.iter().enumerate() {
            tp += *h as usize;
            if tp * 100 >= i * n_gt {
                best = best.max(tp as f64 / (k + 1) as f64);
            }
        }
        sum += best;
    }
    sum / 101.0
}

pub fn reference_image(gt: &[Region], pred: &[Region], policy: &MatchPolicy, ks: &[usize]) -> ReferenceImage {
    let gt_norm: Vec<String> = gt.iter().map(|r| policy.normalize(&r.phrase)).collect();
    let pred_norm: Vec<String> = pred.iter().map(|r| policy.normalize(&r.phrase)).collect();
    let mut classes = gt_norm.clone();
    classes.sort();
    classes.dedup();

    let route = |p: &str| -> Option<usize> {
        if let Some(i) = classes.iter().position(|c| c == p) {
            return Some(i);
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in classes.iter().enumerate() {
            let o = token_overlap(p, c);
            if o >= policy.fuzzy_threshold && best.is_none_or(|(_, b)| o > b) {
                best = Some((i, o));
            }
        }
        best.map(|b| b.0)
    };
    let routed: Vec<Option<usize>> = pred_norm.iter().map(|p| route(p)).collect();

    let mut ranked: Vec<usize> = (0..pred.len()).collect();
    ranked.sort_by(|&a, &b| {
        let (ca, cb) = (pred[a].confidence.unwrap(), pred[b].confidence.unwrap());
        cb.total_cmp(&ca)
            .then(pred[a].bbox.lex_cmp(&pred[b].bbox))
            .then(pred[a].phrase.cmp(&pred[b].phrase))
            .then(a.cmp(&b))
    });

    let class_ap = |c: usize, t: f64| -> f64 {
        let members: Vec<usize> = ranked.iter().copied().filter(|&p| routed[p] == Some(c)).collect();
        let gts: Vec<usize> = (0..gt.len()).filter(|&g| gt_norm[g] == classes[c]).collect();
        let hits = exhaustive_hits(&members, gts.len(), &|p, gi| {
            let g = gts[gi];
            let v = iou(&pred[p].bbox, &gt[g].bbox);
            (policy.normalized_match(&pred_norm[p], &classes[c]) && v >= t).then_some(v)
        });
        reference_ap(&hits, gts.len())
    };
    let image_ap = |t: f64| (0..classes.len()).map(|c| class_ap(c, t)).sum::<f64>() / classes.len() as f64;

    let ap_by_threshold: Vec<f64> = (0..10).map(|i| image_ap((50 + 5 * i) as f64 / 100.0)).collect();
    let map = ap_by_threshold.iter().sum::<f64>() / 10.0;
    let map_50 = image_ap(0.5);

    let mut recall_at = BTreeMap::new();
    for &k in ks {
        let top: Vec<usize> = ranked.iter().copied().take(k).collect();
        let hits = exhaustive_hits(&top, gt.len(), &|p, g| {
            let v = iou(&pred[p].bbox, &gt[g].bbox);
            (policy.normalized_match(&pred_norm[p], &gt_norm[g]) && v >= 0.5).then_some(v)
        });
        recall_at.insert(k, hits.iter().filter(|h| **h).count() as f64 / gt.len() as f64);
    }
    ReferenceImage {
        map,
        map_50,
        recall_at,
        ap_by_threshold,
    }
}
