use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{ManifestEntry, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::SplitSpec(format!("ratios {r:?} must be non-negative")));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::SplitSpec(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Group counts per split for `n` groups: largest-remainder rounding of
    /// the ratio targets, then every split with a non-zero ratio gets at
    /// least one group when there are enough groups to go round.
    pub fn group_counts(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        let ratios = [self.train, self.val, self.test];
        let nonzero = ratios.iter().filter(|r| **r > 0.0).count();
        let targets: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
        let mut counts: [usize; 3] = [0; 3];
        for (c, t) in counts.iter_mut().zip(&targets) {
            *c = t.floor() as usize;
        }
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let fa = targets[a] - targets[a].floor();
            let fb = targets[b] - targets[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let mut left = n - counts.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            if ratios[i] > 0.0 {
                counts[i] += 1;
                left -= 1;
            }
        }
        for i in 0..3 {
            if n >= nonzero && ratios[i] > 0.0 && counts[i] == 0 {
                let donor = (0..3)
                    .max_by_key(|&j| (counts[j], std::cmp::Reverse(j)))
                    .expect("three splits");
                counts[donor] -= 1;
                counts[i] += 1;
            }
        }
        Ok(counts)
    }
}

/// Shuffles groups (entries sharing `group_key`) with the spec's seed and
/// assigns whole groups to train, val and test.
pub fn assign_splits(mut entries: Vec<ManifestEntry>, spec: &SplitSpec) -> Result<Vec<ManifestEntry>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        groups.entry(e.group_key.as_str()).or_default().push(i);
    }
    let mut keyed: Vec<Vec<usize>> = groups.into_values().collect();
    let counts = spec.group_counts(keyed.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    keyed.shuffle(&mut rng);

    let labels = [Split::Train, Split::Val, Split::Test];
    let mut assignment = vec![Split::Unassigned; entries.len()];
    let mut it = keyed.into_iter();
    for (label, count) in labels.iter().zip(counts) {
        for members in it.by_ref().take(count) {
            for i in members {
                assignment[i] = *label;
            }
        }
    }
    for (e, s) in entries.iter_mut().zip(assignment) {
        e.split = s;
    }
    Ok(entries)
}
