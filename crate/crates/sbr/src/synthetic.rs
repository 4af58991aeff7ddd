//! Synthetic click data with a known next-item structure.
//!
//! Items are split into disjoint cycles ("patterns"); every session walks
//! one cycle from a random start, so each item has exactly one successor
//! and a model can fit the training examples perfectly.

use sbr_core::data::{Dataset, Session, Vocabulary, MS_PER_DAY};
use sbr_core::Rng;

use crate::error::{Error, Result};
use crate::preprocess::Preprocessed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MarkovSpec {
    pub train_sessions: usize,
    pub test_sessions: usize,
    pub items: usize,
    pub patterns: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for MarkovSpec {
    fn default() -> Self {
        MarkovSpec {
            train_sessions: 200,
            test_sessions: 50,
            items: 30,
            patterns: 5,
            min_len: 3,
            max_len: 8,
            seed: 1,
        }
    }
}

impl MarkovSpec {
    /// Item sequence of each pattern (vocabulary indices).
    pub fn cycles(&self) -> Vec<Vec<u32>> {
        let per = self.items / self.patterns;
        (0..self.patterns)
            .map(|p| (0..per).map(|k| (p * per + k + 1) as u32).collect())
            .collect()
    }

    /// The item that follows `item` in its pattern.
    pub fn successor(&self, item: u32) -> u32 {
        let per = (self.items / self.patterns) as u32;
        let base = (item - 1) / per * per;
        base + (item - 1 - base + 1) % per + 1
    }
}

/// Training sessions end on day 0 and test sessions on day 1.
pub fn markov_corpus(spec: &MarkovSpec) -> Result<Preprocessed> {
    if spec.patterns == 0 || spec.items < 2 * spec.patterns || !spec.items.is_multiple_of(spec.patterns) {
        return Err(Error::config("items must be a multiple of patterns with at least two items each"));
    }
    if spec.min_len < 2 || spec.max_len < spec.min_len {
        return Err(Error::config("session lengths must satisfy 2 <= min_len <= max_len"));
    }
    let cycles = spec.cycles();
    let mut rng = Rng::new(spec.seed);
    let mut make = |id: u32, day: i64| {
        let cycle = &cycles[rng.below(cycles.len())];
        let start = rng.below(cycle.len());
        let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
        Session {
            id,
            items: (0..len).map(|t| cycle[(start + t) % cycle.len()]).collect(),
            end_time: day * MS_PER_DAY + id as i64,
        }
    };
    let train: Vec<Session> = (0..spec.train_sessions).map(|i| make(i as u32, 0)).collect();
    let test: Vec<Session> = (0..spec.test_sessions)
        .map(|i| make((spec.train_sessions + i) as u32, 1))
        .collect();
    let names = (1..=spec.items).map(|i| format!("item{i}")).collect();
    Ok(Preprocessed {
        dataset: Dataset::Yoochoose,
        vocab: Vocabulary::from_names(names)?,
        train,
        test,
    })
}
