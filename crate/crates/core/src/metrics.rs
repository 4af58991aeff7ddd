//! Top-N ranking metrics.
//!
//! Items are 1-based: position `j` of a score vector belongs to item
//! `j + 1`. Equal scores rank the smaller item first.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// The `k` best items, best first.
pub fn topk<T: Real>(scores: &[T], k: usize) -> Result<Vec<u32>> {
    if k > scores.len() {
        return Err(Error::contract("top-k larger than the candidate set"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let cmp = |a: &usize, b: &usize| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, cmp);
    }
    idx.truncate(k);
    idx.sort_by(cmp);
    Ok(idx.into_iter().map(|i| i as u32 + 1).collect())
}

/// 1-based rank of `label` under the same ordering as [`topk`].
pub fn rank_of<T: Real>(scores: &[T], label: u32) -> Result<usize> {
    let l = label as usize;
    if l == 0 || l > scores.len() {
        return Err(Error::Index {
            what: "rank label",
            index: l,
            bound: scores.len() + 1,
        });
    }
    let s = scores[l - 1];
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < l - 1))
        .count();
    Ok(ahead + 1)
}

fn position(list: &[u32], label: u32, n: usize) -> Option<usize> {
    list.iter().take(n).position(|&x| x == label).map(|p| p + 1)
}

/// Percentage of examples whose label is among the first `n` of its list.
pub fn hit_rate_at_n(ranked: &[Vec<u32>], labels: &[u32], n: usize) -> f64 {
    let mut tally = RankTally::new(n);
    for (list, &l) in ranked.iter().zip(labels) {
        tally.push(position(list, l, n).unwrap_or(usize::MAX));
    }
    tally.hit_rate()
}

/// Percentage mean of `1/rank`, counting ranks beyond `n` as zero.
pub fn mrr_at_n(ranked: &[Vec<u32>], labels: &[u32], n: usize) -> f64 {
    let mut tally = RankTally::new(n);
    for (list, &l) in ranked.iter().zip(labels) {
        tally.push(position(list, l, n).unwrap_or(usize::MAX));
    }
    tally.mrr()
}

/// Integer histogram of ranks up to the cutoff. Aggregates are computed
/// from the histogram, so they do not depend on the order of examples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankTally {
    pub n: usize,
    pub count: u64,
    /// `hits[r - 1]` examples ranked exactly `r`.
    pub hits: Vec<u64>,
}

impl RankTally {
    pub fn new(n: usize) -> Self {
        RankTally {
            n,
            count: 0,
            hits: vec![0; n],
        }
    }

    pub fn push(&mut self, rank: usize) {
        self.count += 1;
        if rank >= 1 && rank <= self.n {
            self.hits[rank - 1] += 1;
        }
    }

    pub fn merge(&mut self, other: &RankTally) {
        debug_assert_eq!(self.n, other.n);
        self.count += other.count;
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
    }

    pub fn hit_count(&self) -> u64 {
        self.hits.iter().sum()
    }

    pub fn hit_rate(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        100.0 * self.hit_count() as f64 / self.count as f64
    }

    pub fn mrr(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let rr: f64 = self
            .hits
            .iter()
            .enumerate()
            .map(|(r, &c)| 100.0 * c as f64 / (r + 1) as f64)
            .sum();
        rr / self.count as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LengthBucket {
    Short,
    Medium,
    Long,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 3] = [LengthBucket::Short, LengthBucket::Medium, LengthBucket::Long];

    /// At most 5 clicks is short, 6 to 10 medium, more is long.
    pub fn of(prefix_len: usize) -> Self {
        match prefix_len {
            0..=5 => LengthBucket::Short,
            6..=10 => LengthBucket::Medium,
            _ => LengthBucket::Long,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LengthBucket::Short => "short",
            LengthBucket::Medium => "medium",
            LengthBucket::Long => "long",
        }
    }
}

/// Running evaluation counters, overall and per length bucket.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evaluation {
    pub overall: RankTally,
    pub buckets: [RankTally; 3],
}

impl Evaluation {
    pub fn new(n: usize) -> Self {
        Evaluation {
            overall: RankTally::new(n),
            buckets: [RankTally::new(n), RankTally::new(n), RankTally::new(n)],
        }
    }

    pub fn push(&mut self, prefix_len: usize, rank: usize) {
        self.overall.push(rank);
        self.buckets[LengthBucket::of(prefix_len) as usize].push(rank);
    }

    pub fn merge(&mut self, other: &Evaluation) {
        self.overall.merge(&other.overall);
        for (a, b) in self.buckets.iter_mut().zip(&other.buckets) {
            a.merge(b);
        }
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            n: self.overall.n,
            hr: self.overall.hit_rate(),
            mrr: self.overall.mrr(),
            example_count: self.overall.count,
            buckets: LengthBucket::ALL
                .iter()
                .zip(&self.buckets)
                .map(|(b, t)| BucketReport {
                    bucket: b.name().into(),
                    example_count: t.count,
                    hr: t.hit_rate(),
                    mrr: t.mrr(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BucketReport {
    pub bucket: String,
    pub example_count: u64,
    pub hr: f64,
    pub mrr: f64,
}

/// HR@n and MRR@n in percent.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub n: usize,
    pub hr: f64,
    pub mrr: f64,
    pub example_count: u64,
    pub buckets: Vec<BucketReport>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_examples() {
        assert_eq!(topk(&[0.1, 0.9, 0.5], 2).unwrap(), [2, 3]);
        assert_eq!(topk(&[1.0f64; 6], 3).unwrap(), [1, 2, 3]);
        assert!(topk(&[1.0f64; 2], 3).is_err());
        assert!(topk(&[1.0f64; 2], 0).unwrap().is_empty());
    }

    #[test]
    fn rank_matches_topk_tie_rule() {
        let s = [0.5, 0.7, 0.5, 0.5];
        assert_eq!(rank_of(&s, 2).unwrap(), 1);
        assert_eq!(rank_of(&s, 1).unwrap(), 2);
        assert_eq!(rank_of(&s, 4).unwrap(), 4);
        assert!(rank_of(&s, 0).is_err());
    }

    #[test]
    fn analytic_cases() {
        let mut t = RankTally::new(20);
        for r in [1, 20, 21] {
            t.push(r);
        }
        assert_eq!(t.hit_rate(), 200.0 / 3.0);
        let mut t = RankTally::new(20);
        t.push(3);
        assert_eq!(t.mrr(), 100.0 / 3.0);
        let mut t = RankTally::new(20);
        for r in [1, 4, 25] {
            t.push(r);
        }
        assert!((t.mrr() - 100.0 * 1.25 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn buckets() {
        assert_eq!(LengthBucket::of(5), LengthBucket::Short);
        assert_eq!(LengthBucket::of(6), LengthBucket::Medium);
        assert_eq!(LengthBucket::of(10), LengthBucket::Medium);
        assert_eq!(LengthBucket::of(11), LengthBucket::Long);
    }
}
