//! Speaker-independent fold construction with score balancing.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FoldError {
    #[error("{speakers} speakers cannot fill {folds} folds")]
    TooFewSpeakers { speakers: usize, folds: usize },
    #[error("fold count must be positive")]
    NoFolds,
}

/// Speaker → fold index. A speaker belongs to exactly one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldAssignment {
    pub seed: u64,
    pub folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, speaker: &str) -> Option<usize> {
        self.folds.get(speaker).copied()
    }

    /// Number of folds, taken as one past the largest index in use.
    pub fn n_folds(&self) -> usize {
        self.folds.values().max().map_or(0, |m| m + 1)
    }

    pub fn speakers_in(&self, fold: usize) -> impl Iterator<Item = &str> {
        self.folds
            .iter()
            .filter(move |(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
    }
}

#[derive(Debug, Clone)]
struct SpeakerStats<'a> {
    id: &'a str,
    count: usize,
    sum: f64,
    tie: u64,
}

/// Assigns speakers to `n_folds` folds.
///
/// Speakers are sorted by (mean score, recording count) descending and each
/// is placed in the fold minimising (recording count, |fold mean − global
/// mean| after adding the speaker), compared lexicographically. Exact ties,
/// both in the sort and in the fold choice, are broken by `seed`.
///
/// `records` holds one `(speaker_id, combined_z)` pair per recording.
pub fn make_folds(
    records: &[(&str, f64)],
    n_folds: usize,
    seed: u64,
) -> Result<FoldAssignment, FoldError> {
    if n_folds == 0 {
        return Err(FoldError::NoFolds);
    }
    // Canonical order so float sums do not depend on how records were listed.
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
    let records = &sorted[..];
    let mut by_speaker: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for &(spk, z) in records {
        let e = by_speaker.entry(spk).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += z;
    }
    if by_speaker.len() < n_folds {
        return Err(FoldError::TooFewSpeakers {
            speakers: by_speaker.len(),
            folds: n_folds,
        });
    }

    let mut rng = rng::stream(seed, &[0xF01D]);
    let mut speakers: Vec<SpeakerStats> = by_speaker
        .iter()
        .map(|(&id, &(count, sum))| SpeakerStats {
            id,
            count,
            sum,
            tie: rng.gen(),
        })
        .collect();
    speakers.sort_by(|a, b| {
        let ma = a.sum / a.count as f64;
        let mb = b.sum / b.count as f64;
        mb.total_cmp(&ma)
            .then(b.count.cmp(&a.count))
            .then(a.tie.cmp(&b.tie))
    });

    let total: f64 = records.iter().map(|r| r.1).sum();
    let global_mean = total / records.len() as f64;

    let mut counts = alloc::vec![0usize; n_folds];
    let mut sums = alloc::vec![0.0f64; n_folds];
    let mut order: Vec<usize> = (0..n_folds).collect();
    let mut folds = BTreeMap::new();
    for spk in &speakers {
        order.shuffle(&mut rng);
        let mut best: Option<(usize, usize, f64)> = None;
        for &f in &order {
            let count = counts[f];
            let dev = libm::fabs((sums[f] + spk.sum) / (count + spk.count) as f64 - global_mean);
            let better = match best {
                None => true,
                Some((_, bc, bd)) => count < bc || (count == bc && dev < bd),
            };
            if better {
                best = Some((f, count, dev));
            }
        }
        let (f, _, _) = best.expect("at least one fold");
        counts[f] += spk.count;
        sums[f] += spk.sum;
        folds.insert(String::from(spk.id), f);
    }
    Ok(FoldAssignment { seed, folds })
}
