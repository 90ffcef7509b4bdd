//! Pseudo-ground-truth refinement.
//!
//! Raw proposals from a zero-shot grounding model carry a confidence for
//! every prompt token. Refinement turns them into box-phrase regions in
//! three passes:
//!
//! 1. generic non-object phrases (`print`, `scene`, `image`, ...) are dropped;
//! 2. every box is reduced to its single most confident phrase group, and
//!    clusters of identical boxes keep their most confident member, except
//!    that two identical boxes whose phrases are joined by a connector
//!    (`of`, `as`) in the prompt are merged into one `[subject] as [role]`
//!    phrase;
//! 3. phrases are normalized (articles and quantity words removed) and a box
//!    lying inside another box with the same phrase is resolved in favour of
//!    the more confident one.
//!
//! All stages are pure and deterministic: every tie is broken by a total
//! order, so the output does not depend on the order of the input proposals.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{containment, iou, BBox};
use crate::matchers::{default_articles, default_quantity_words, normalize_phrase, NormalizeOptions};
use crate::model::{Proposal, ProposalSet, Region};
use crate::text::TokenizedPrompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeScore {
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub text_threshold: f64,
    pub box_threshold: f64,
    pub stoplist: BTreeSet<String>,
    /// IoU at or above which two boxes count as the same box.
    pub identical_iou: f64,
    pub containment_threshold: f64,
    pub connectors: BTreeSet<String>,
    pub quantity_words: BTreeSet<String>,
    pub articles: BTreeSet<String>,
    /// How the confidence of a connector merge is derived from its two groups.
    pub merge_score: MergeScore,
}

fn words(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            text_threshold: 0.20,
            box_threshold: 0.20,
            stoplist: words(&["print", "scene", "image"]),
            identical_iou: 0.95,
            containment_threshold: 0.90,
            connectors: words(&["of", "as"]),
            quantity_words: default_quantity_words(),
            articles: default_articles(),
            merge_score: MergeScore::Mean,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("text_threshold", self.text_threshold),
            ("box_threshold", self.box_threshold),
            ("identical_iou", self.identical_iou),
            ("containment_threshold", self.containment_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        for (name, set) in [
            ("stoplist", &self.stoplist),
            ("connectors", &self.connectors),
            ("quantity_words", &self.quantity_words),
            ("articles", &self.articles),
        ] {
            if let Some(w) = set.iter().find(|w| w.to_lowercase() != **w) {
                return Err(Error::Config(format!("{name} entry {w:?} must be lowercase")));
            }
        }
        Ok(())
    }

    pub fn normalize_options(&self) -> NormalizeOptions {
        NormalizeOptions {
            strip_articles: true,
            strip_quantities: true,
            articles: self.articles.clone(),
            quantity_words: self.quantity_words.clone(),
        }
    }
}

/// A maximal run of confident word tokens within one proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseGroup {
    pub token_start: usize,
    pub token_end: usize,
    pub surface: String,
    pub mean_score: f64,
}

/// Every maximal run of word tokens scoring at least `text_threshold`.
/// Punctuation always ends a run.
pub fn extract_phrase_groups(prompt: &TokenizedPrompt, proposal: &Proposal, cfg: &RefineConfig) -> Vec<PhraseGroup> {
    let mut groups = Vec::new();
    let mut run_start: Option<usize> = None;
    let n = prompt.len();
    for i in 0..=n {
        let inside = i < n && prompt.tokens()[i].is_word() && proposal.token_scores[i] >= cfg.text_threshold;
        match (inside, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(start)) => {
                groups.push(make_group(prompt, &proposal.token_scores, start, i));
                run_start = None;
            }
            _ => {}
        }
    }
    groups
}

fn make_group(prompt: &TokenizedPrompt, scores: &[f64], start: usize, end: usize) -> PhraseGroup {
    let members = &scores[start..end];
    PhraseGroup {
        token_start: start,
        token_end: end,
        surface: prompt.span_text(start, end).to_string(),
        mean_score: members.iter().sum::<f64>() / members.len() as f64,
    }
}

/// Keeps the group with the highest mean score, earliest group on ties.
/// `None` means the proposal has no phrase and is filtered out.
pub fn ungroup(groups: Vec<PhraseGroup>) -> Option<PhraseGroup> {
    groups.into_iter().reduce(|best, g| {
        if g.mean_score > best.mean_score || (g.mean_score == best.mean_score && g.token_start < best.token_start) {
            g
        } else {
            best
        }
    })
}

/// A box with its single phrase, between un-grouping and normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub bbox: BBox,
    /// Token range of the phrase in the prompt.
    pub span: Range<usize>,
    pub phrase: String,
    pub confidence: f64,
}

impl Candidate {
    pub fn from_group(bbox: BBox, group: PhraseGroup) -> Self {
        Self {
            bbox,
            span: group.token_start..group.token_end,
            phrase: group.surface,
            confidence: group.mean_score,
        }
    }

    // Higher confidence first, then earlier phrase, then box order.
    fn priority_cmp(&self, other: &Self) -> Ordering {
        other
            .confidence
            .total_cmp(&self.confidence)
            .then(self.span.start.cmp(&other.span.start))
            .then(self.span.end.cmp(&other.span.end))
            .then(self.bbox.lex_cmp(&other.bbox))
            .then(self.phrase.cmp(&other.phrase))
    }
}

/// Drops candidates whose phrase, lowercased and stripped of articles, is on
/// the stoplist.
pub fn stoplist_filter(candidates: Vec<Candidate>, cfg: &RefineConfig) -> Vec<Candidate> {
    let opts = cfg.normalize_options().articles_only();
    candidates
        .into_iter()
        .filter(|c| !cfg.stoplist.contains(&normalize_phrase(&c.phrase, &opts)))
        .collect()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Collapses clusters of identical boxes (IoU ≥ `identical_iou`, linked
/// transitively) to one candidate each.
///
/// A cluster of exactly two whose phrases are separated in the prompt only by
/// a connector (optionally with articles around it) becomes one candidate
/// spanning both phrases. Any other cluster keeps its most confident member.
pub fn dedup_identical(candidates: Vec<Candidate>, prompt: &TokenizedPrompt, cfg: &RefineConfig) -> Vec<Candidate> {
    let n = candidates.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if iou(&candidates[i].bbox, &candidates[j].bbox) >= cfg.identical_iou {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<Candidate>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for (i, c) in candidates.into_iter().enumerate() {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[slot[root]].push(c);
    }

    let mut out: Vec<Candidate> = clusters
        .into_iter()
        .map(|mut members| {
            members.sort_by(Candidate::priority_cmp);
            if members.len() == 2 {
                if let Some(merged) = connector_merge(&members[0], &members[1], prompt, cfg) {
                    return merged;
                }
            }
            members.swap_remove(0)
        })
        .collect();
    out.sort_by(Candidate::priority_cmp);
    out
}

fn connector_merge(
    best: &Candidate,
    other: &Candidate,
    prompt: &TokenizedPrompt,
    cfg: &RefineConfig,
) -> Option<Candidate> {
    let (first, second) = if best.span.start <= other.span.start {
        (best, other)
    } else {
        (other, best)
    };
    if first.span.end > second.span.start {
        return None;
    }
    let gap = &prompt.tokens()[first.span.end..second.span.start];
    if !is_connector_gap(gap.iter().map(|t| (t.is_word(), t.text.to_lowercase())), cfg) {
        return None;
    }
    let confidence = match cfg.merge_score {
        MergeScore::Mean => (first.confidence + second.confidence) / 2.0,
        MergeScore::Max => first.confidence.max(second.confidence),
    };
    Some(Candidate {
        bbox: best.bbox,
        span: first.span.start..second.span.end,
        phrase: prompt.span_text(first.span.start, second.span.end).to_string(),
        confidence,
    })
}

// articles* connector+ articles*
fn is_connector_gap(gap: impl Iterator<Item = (bool, String)>, cfg: &RefineConfig) -> bool {
    #[derive(PartialEq)]
    enum State {
        Lead,
        Connector,
        Trail,
    }
    let mut state = State::Lead;
    for (is_word, word) in gap {
        if !is_word {
            return false;
        }
        let article = cfg.articles.contains(&word);
        let connector = cfg.connectors.contains(&word);
        state = match state {
            State::Lead if connector => State::Connector,
            State::Lead if article => State::Lead,
            State::Connector if connector => State::Connector,
            State::Connector | State::Trail if article => State::Trail,
            _ => return false,
        };
    }
    state != State::Lead
}

// Higher confidence, then larger area, then box order.
fn region_priority(a: &Region, b: &Region) -> Ordering {
    let ca = a.confidence.unwrap_or(0.0);
    let cb = b.confidence.unwrap_or(0.0);
    cb.total_cmp(&ca)
        .then(b.bbox.area().total_cmp(&a.bbox.area()))
        .then(a.bbox.lex_cmp(&b.bbox))
        .then(a.phrase.cmp(&b.phrase))
}

/// Among regions with the same (already normalized) phrase, whenever one box
/// lies inside another (containment ≥ `containment_threshold`), the less
/// confident one is removed; equal confidences keep the larger box.
/// Regions are visited in priority order and only surviving regions remove
/// others, which yields a fixed point of the pairwise rule.
pub fn containment_filter(regions: Vec<Region>, cfg: &RefineConfig) -> Vec<Region> {
    let mut ordered = regions;
    ordered.sort_by(region_priority);
    let mut kept: Vec<Region> = Vec::with_capacity(ordered.len());
    for r in ordered {
        let suppressed = kept.iter().any(|k| {
            k.phrase == r.phrase
                && (containment(&r.bbox, &k.bbox) >= cfg.containment_threshold
                    || containment(&k.bbox, &r.bbox) >= cfg.containment_threshold)
        });
        if !suppressed {
            kept.push(r);
        }
    }
    kept
}

/// How many proposals each stage removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub input: usize,
    pub below_box_threshold: usize,
    pub no_phrase_group: usize,
    pub stoplist: usize,
    pub identical_boxes: usize,
    pub containment: usize,
    pub output: usize,
}

impl StageCounts {
    pub fn dropped(&self) -> usize {
        self.below_box_threshold + self.no_phrase_group + self.stoplist + self.identical_boxes + self.containment
    }

    pub fn accumulate(&mut self, other: &StageCounts) {
        self.input += other.input;
        self.below_box_threshold += other.below_box_threshold;
        self.no_phrase_group += other.no_phrase_group;
        self.stoplist += other.stoplist;
        self.identical_boxes += other.identical_boxes;
        self.containment += other.containment;
        self.output += other.output;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub regions: Vec<Region>,
    pub counts: StageCounts,
}

fn output_order(a: &Region, b: &Region) -> Ordering {
    b.confidence
        .unwrap_or(0.0)
        .total_cmp(&a.confidence.unwrap_or(0.0))
        .then(a.bbox.lex_cmp(&b.bbox))
        .then(a.phrase.cmp(&b.phrase))
}

/// Runs the full refinement for one image.
pub fn refine(set: &ProposalSet, cfg: &RefineConfig) -> Result<Refined> {
    set.validate()?;
    let mut counts = StageCounts {
        input: set.proposals.len(),
        ..StageCounts::default()
    };

    let confident: Vec<&Proposal> = set
        .proposals
        .iter()
        .filter(|p| p.max_score() >= cfg.box_threshold)
        .collect();
    counts.below_box_threshold = counts.input - confident.len();

    let candidates: Vec<Candidate> = confident
        .into_iter()
        .filter_map(|p| ungroup(extract_phrase_groups(&set.prompt, p, cfg)).map(|g| Candidate::from_group(p.bbox, g)))
        .collect();
    counts.no_phrase_group = counts.input - counts.below_box_threshold - candidates.len();

    let before = candidates.len();
    let candidates = stoplist_filter(candidates, cfg);
    counts.stoplist = before - candidates.len();

    let before = candidates.len();
    let candidates = dedup_identical(candidates, &set.prompt, cfg);
    counts.identical_boxes = before - candidates.len();

    let opts = cfg.normalize_options();
    let regions: Vec<Region> = candidates
        .into_iter()
        .map(|c| Region::new(c.bbox, normalize_phrase(&c.phrase, &opts), Some(c.confidence)))
        .collect();

    let before = regions.len();
    let mut regions = containment_filter(regions, cfg);
    counts.containment = before - regions.len();

    regions.sort_by(output_order);
    counts.output = regions.len();
    Ok(Refined { regions, counts })
}

/// The unrefined reading of the proposals: every confident proposal becomes a
/// region whose phrase joins all tokens above the text threshold and whose
/// confidence is its highest token score. This is how zero-shot grounding
/// output is usually turned into labels and serves as the baseline the
/// refinement is compared against.
pub fn raw_regions(set: &ProposalSet, cfg: &RefineConfig) -> Result<Vec<Region>> {
    set.validate()?;
    let mut regions: Vec<Region> = set
        .proposals
        .iter()
        .filter(|p| p.max_score() >= cfg.box_threshold)
        .filter_map(|p| {
            let phrase: Vec<&str> = set
                .prompt
                .tokens()
                .iter()
                .zip(&p.token_scores)
                .filter(|(t, s)| t.is_word() && **s >= cfg.text_threshold)
                .map(|(t, _)| t.text.as_str())
                .collect();
            (!phrase.is_empty()).then(|| Region::new(p.bbox, phrase.join(" "), Some(p.max_score())))
        })
        .collect();
    regions.sort_by(output_order);
    Ok(regions)
}
