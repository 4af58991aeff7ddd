//! Click log to train/test sessions and corpus statistics.

use std::fmt;
use std::path::Path;

use sbr_core::data::{
    filter_sessions, filter_test_items, split_by_time, Corpus, CountScope, Dataset, FilterRules,
    Fraction, Session, Sessionizer, SplitPolicy, Vocabulary, MS_PER_DAY,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parse::{read_events_file, ParseStats};

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessOptions {
    pub dataset: Dataset,
    pub split: SplitPolicy,
    pub rules: FilterRules,
    pub count_scope: CountScope,
}

impl PreprocessOptions {
    pub fn new(dataset: Dataset) -> Self {
        PreprocessOptions {
            dataset,
            split: SplitPolicy::for_dataset(dataset),
            rules: FilterRules::default(),
            count_scope: CountScope::FullLog,
        }
    }

    /// The training fraction is a Yoochoose-only setting.
    pub fn with_fraction(mut self, fraction: Option<Fraction>) -> Result<Self> {
        if fraction.is_some() && self.dataset != Dataset::Yoochoose {
            return Err(Error::config(format!(
                "--fraction applies to yoochoose only, not {}",
                self.dataset
            )));
        }
        self.split.train_fraction = fraction;
        Ok(self)
    }

    /// File stem of the outputs, e.g. `yoochoose1_64`.
    pub fn default_name(&self) -> String {
        match self.split.train_fraction {
            Some(f) => format!("{}{}_{}", self.dataset, f.num, f.den),
            None => self.dataset.to_string(),
        }
    }
}

/// Counts over the retained data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dataset: String,
    pub rows_read: usize,
    pub rows_skipped: usize,
    pub clicks: usize,
    pub sessions: usize,
    pub train_sessions: usize,
    pub test_sessions: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    pub items: usize,
    /// `clicks / sessions`.
    pub avg_length: f64,
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24}{}", "Dataset", self.dataset)?;
        writeln!(f, "{:<24}{}", "# of clicks", self.clicks)?;
        writeln!(f, "{:<24}{}", "# of train sessions", self.train_sessions)?;
        writeln!(f, "{:<24}{}", "# of test sessions", self.test_sessions)?;
        writeln!(f, "{:<24}{}", "# of train examples", self.train_examples)?;
        writeln!(f, "{:<24}{}", "# of test examples", self.test_examples)?;
        writeln!(f, "{:<24}{}", "# of items", self.items)?;
        write!(f, "{:<24}{:.2}", "Avg. length", self.avg_length)
    }
}

/// Train and test sessions over vocabulary indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub dataset: Dataset,
    pub vocab: Vocabulary,
    pub train: Vec<Session>,
    pub test: Vec<Session>,
}

impl Preprocessed {
    pub fn stats(&self, parse: ParseStats) -> CorpusStats {
        let clicks: usize = self.train.iter().chain(&self.test).map(Session::len).sum();
        let sessions = self.train.len() + self.test.len();
        let examples = |s: &[Session]| s.iter().map(|s| s.len() - 1).sum();
        CorpusStats {
            dataset: self.dataset.to_string(),
            rows_read: parse.events + parse.skipped,
            rows_skipped: parse.skipped,
            clicks,
            sessions,
            train_sessions: self.train.len(),
            test_sessions: self.test.len(),
            train_examples: examples(&self.train),
            test_examples: examples(&self.test),
            items: self.vocab.len(),
            avg_length: if sessions == 0 {
                0.0
            } else {
                clicks as f64 / sessions as f64
            },
        }
    }
}

/// Filter to a fixpoint, split by time, index the training items and
/// drop unseen items from the test sessions.
pub fn preprocess(corpus: Corpus, opts: &PreprocessOptions) -> Result<Preprocessed> {
    let num_codes = corpus.item_names.len();
    let sessions = match opts.count_scope {
        CountScope::FullLog => filter_sessions(corpus.sessions, num_codes, opts.rules, |_| true),
        CountScope::TrainOnly => {
            let last = corpus.sessions.iter().map(|s| s.end_time).max().unwrap_or(0);
            let start = opts.split.test_start_day(last);
            filter_sessions(corpus.sessions, num_codes, opts.rules, |s| {
                s.end_time.div_euclid(MS_PER_DAY) < start
            })
        }
    };
    let (train, test) = split_by_time(sessions, &opts.split)?;
    let vocab = Vocabulary::build(&train, &corpus.item_names);
    let train: Vec<Session> = train.iter().map(|s| vocab.encode_session(s)).collect();
    let test = filter_test_items(&test, &vocab);
    if test.is_empty() {
        return Err(Error::config("no test session survives the vocabulary filter"));
    }
    Ok(Preprocessed {
        dataset: opts.dataset,
        vocab,
        train,
        test,
    })
}

pub fn preprocess_file(path: &Path, opts: &PreprocessOptions) -> Result<(Preprocessed, CorpusStats)> {
    let mut sink = Sessionizer::new();
    let parse = read_events_file(path, opts.dataset, &mut sink)?;
    let data = preprocess(sink.finish(), opts)?;
    let stats = data.stats(parse);
    Ok((data, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(rows: &[(&str, i64, &str)]) -> Corpus {
        let mut s = Sessionizer::new();
        for &(sid, t, item) in rows {
            s.push_parts(sid, t, item);
        }
        s.finish()
    }

    #[test]
    fn fraction_is_yoochoose_only() {
        let f = Some(Fraction::new(1, 64).unwrap());
        assert!(PreprocessOptions::new(Dataset::Yoochoose).with_fraction(f).is_ok());
        let err = PreprocessOptions::new(Dataset::Diginetica)
            .with_fraction(f)
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert_eq!(
            PreprocessOptions::new(Dataset::Yoochoose)
                .with_fraction(f)
                .unwrap()
                .default_name(),
            "yoochoose1_64"
        );
    }

    #[test]
    fn unseen_test_items_are_dropped() {
        let day = MS_PER_DAY;
        let mut rows = Vec::new();
        for k in 0..5 {
            let sid = format!("s{k}");
            rows.push((sid.clone(), k, "a"));
            rows.push((sid, k + 1, "b"));
        }
        // test day: [a, b, z] keeps [a, b]; z also needs 5 clicks overall
        for k in 0..5 {
            let sid = format!("t{k}");
            rows.push((sid.clone(), 3 * day + k, "a"));
            rows.push((sid.clone(), 3 * day + k + 1, "b"));
            rows.push((sid, 3 * day + k + 2, "z"));
        }
        let rows: Vec<(&str, i64, &str)> = rows.iter().map(|(s, t, i)| (s.as_str(), *t, *i)).collect();
        let data = preprocess(corpus(&rows), &PreprocessOptions::new(Dataset::Yoochoose)).unwrap();
        assert_eq!(data.vocab.len(), 2);
        assert_eq!(data.train.len(), 5);
        assert!(data.test.iter().all(|s| s.items == [1, 2]));
        let stats = data.stats(ParseStats::default());
        assert_eq!(stats.clicks, 20);
        assert_eq!(stats.train_examples, 5);
        assert_eq!(stats.test_examples, 5);
    }

    #[test]
    fn single_day_log_cannot_be_split() {
        let mut rows = Vec::new();
        for k in 0..6 {
            rows.push((if k % 2 == 0 { "x" } else { "y" }, k, "a"));
            rows.push((if k % 2 == 0 { "x" } else { "y" }, k, "b"));
        }
        let err = preprocess(corpus(&rows), &PreprocessOptions::new(Dataset::Yoochoose)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
