use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::MS_PER_DAY;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawEvent {
    pub session_id: String,
    /// Epoch milliseconds.
    pub timestamp: i64,
    pub item_id: String,
}

/// A time-ordered click sequence. Before vocabulary encoding `items` are
/// corpus item codes; afterwards they are vocabulary indices (`>= 1`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub id: u32,
    pub items: Vec<u32>,
    /// Epoch milliseconds of the last event.
    pub end_time: i64,
}

impl Session {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Dataset {
    Yoochoose,
    Diginetica,
}

impl Dataset {
    pub fn name(self) -> &'static str {
        match self {
            Dataset::Yoochoose => "yoochoose",
            Dataset::Diginetica => "diginetica",
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Dataset::Yoochoose => 1,
            Dataset::Diginetica => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(Dataset::Yoochoose),
            2 => Some(Dataset::Diginetica),
            _ => None,
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yoochoose" => Ok(Dataset::Yoochoose),
            "diginetica" => Ok(Dataset::Diginetica),
            other => Err(Error::config(alloc::format!("unknown dataset {other:?}"))),
        }
    }
}

/// Groups raw events into sessions, interning string ids as it goes.
#[derive(Debug, Default)]
pub struct Sessionizer {
    session_codes: BTreeMap<String, u32>,
    session_names: Vec<String>,
    item_codes: BTreeMap<String, u32>,
    item_names: Vec<String>,
    events: Vec<(u32, i64, u32)>,
}

impl Sessionizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: &RawEvent) {
        self.push_parts(&event.session_id, event.timestamp, &event.item_id);
    }

    pub fn push_parts(&mut self, session_id: &str, timestamp: i64, item_id: &str) {
        let s = intern(&mut self.session_codes, &mut self.session_names, session_id);
        let i = intern(&mut self.item_codes, &mut self.item_names, item_id);
        self.events.push((s, timestamp, i));
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// Sessions ordered by `(end_time, first appearance)`; items within a
    /// session ordered by timestamp, stable on ties.
    pub fn finish(mut self) -> Corpus {
        self.events.sort_by_key(|&(s, t, _)| (s, t));
        let mut sessions: Vec<Session> = Vec::with_capacity(self.session_names.len());
        for &(s, t, i) in &self.events {
            match sessions.last_mut() {
                Some(last) if last.id == s => {
                    last.items.push(i);
                    last.end_time = t;
                }
                _ => sessions.push(Session {
                    id: s,
                    items: vec![i],
                    end_time: t,
                }),
            }
        }
        sessions.sort_by_key(|s| (s.end_time, s.id));
        Corpus {
            clicks: self.events.len(),
            item_names: self.item_names,
            session_names: self.session_names,
            sessions,
        }
    }
}

fn intern(codes: &mut BTreeMap<String, u32>, names: &mut Vec<String>, key: &str) -> u32 {
    if let Some(&c) = codes.get(key) {
        return c;
    }
    let c = names.len() as u32;
    codes.insert(key.to_string(), c);
    names.push(key.to_string());
    c
}

/// Sessionized click log with items as corpus codes.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub clicks: usize,
    pub item_names: Vec<String>,
    pub session_names: Vec<String>,
    pub sessions: Vec<Session>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterRules {
    pub min_item_count: usize,
    pub min_session_len: usize,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            min_item_count: 5,
            min_session_len: 2,
        }
    }
}

/// Which sessions contribute to the item-frequency counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CountScope {
    /// Every session in the log.
    #[default]
    FullLog,
    /// Only sessions that end before the test window.
    TrainOnly,
}

/// Removes rare items and short sessions until neither rule changes
/// anything. `counts_from` selects the sessions whose clicks are counted;
/// removal applies to all sessions.
pub fn filter_sessions(
    mut sessions: Vec<Session>,
    num_codes: usize,
    rules: FilterRules,
    counts_from: impl Fn(&Session) -> bool,
) -> Vec<Session> {
    loop {
        let mut counts = vec![0usize; num_codes];
        for s in sessions.iter().filter(|s| counts_from(s)) {
            for &i in &s.items {
                counts[i as usize] += 1;
            }
        }
        let mut changed = false;
        for s in &mut sessions {
            let before = s.items.len();
            s.items.retain(|&i| counts[i as usize] >= rules.min_item_count);
            changed |= s.items.len() != before;
        }
        let before = sessions.len();
        sessions.retain(|s| s.items.len() >= rules.min_session_len);
        changed |= sessions.len() != before;
        if !changed {
            return sessions;
        }
    }
}

/// A ratio `num/den` such as `1/64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::config(alloc::format!(
                "fraction {num}/{den} must lie in (0, 1]"
            )));
        }
        Ok(Fraction { num, den })
    }

    pub fn of(self, n: usize) -> usize {
        ((n as u128 * self.num as u128) / self.den as u128) as usize
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(alloc::format!("cannot parse fraction {s:?}"));
        let (a, b) = s.split_once('/').unwrap_or((s, "1"));
        let num = a.trim().parse().map_err(|_| bad())?;
        let den = b.trim().parse().map_err(|_| bad())?;
        Fraction::new(num, den)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitPolicy {
    /// Sessions ending within the last `test_days` UTC calendar days of the
    /// log form the test set.
    pub test_days: i64,
    /// Keep only this most recent fraction of the training sessions.
    pub train_fraction: Option<Fraction>,
}

impl SplitPolicy {
    pub fn for_dataset(dataset: Dataset) -> Self {
        match dataset {
            Dataset::Yoochoose => SplitPolicy {
                test_days: 1,
                train_fraction: None,
            },
            Dataset::Diginetica => SplitPolicy {
                test_days: 7,
                train_fraction: None,
            },
        }
    }

    /// First UTC day index that belongs to the test window.
    pub fn test_start_day(&self, last_end_time: i64) -> i64 {
        last_end_time.div_euclid(MS_PER_DAY) - self.test_days + 1
    }
}

/// Splits sessions into `(train, test)` by end time. Sessions must be
/// ordered by end time (as produced by [`Sessionizer::finish`]); the
/// fraction keeps the most recent training sessions.
pub fn split_by_time(
    sessions: Vec<Session>,
    policy: &SplitPolicy,
) -> Result<(Vec<Session>, Vec<Session>)> {
    if policy.test_days < 1 {
        return Err(Error::config("test window must span at least one day"));
    }
    let last = sessions
        .iter()
        .map(|s| s.end_time)
        .max()
        .ok_or_else(|| Error::config("no sessions to split"))?;
    let start = policy.test_start_day(last);
    let (test, mut train): (Vec<Session>, Vec<Session>) = sessions
        .into_iter()
        .partition(|s| s.end_time.div_euclid(MS_PER_DAY) >= start);
    if let Some(frac) = policy.train_fraction {
        train.sort_by_key(|s| (s.end_time, s.id));
        let keep = frac.of(train.len());
        train.drain(..train.len() - keep);
    }
    if train.is_empty() {
        return Err(Error::config("time split left the training set empty"));
    }
    if test.is_empty() {
        return Err(Error::config("time split left the test set empty"));
    }
    Ok((train, test))
}

/// Bijection between raw item ids and indices `1..=M`, built from the
/// training split in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: BTreeMap<String, u32>,
    /// Corpus code -> index (0 = not in vocabulary). Empty for vocabularies
    /// loaded from disk.
    by_code: Vec<u32>,
}

impl Vocabulary {
    pub fn build(train: &[Session], item_names: &[String]) -> Self {
        let mut by_code = vec![0u32; item_names.len()];
        let mut names = Vec::new();
        for s in train {
            for &c in &s.items {
                if by_code[c as usize] == 0 {
                    names.push(item_names[c as usize].clone());
                    by_code[c as usize] = names.len() as u32;
                }
            }
        }
        let index = index_of(&names);
        Vocabulary {
            names,
            index,
            by_code,
        }
    }

    /// Rebuilds a vocabulary from names in index order (index 1 first).
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let index = index_of(&names);
        if index.len() != names.len() {
            return Err(Error::contract("duplicate item id in vocabulary"));
        }
        Ok(Vocabulary {
            names,
            index,
            by_code: Vec::new(),
        })
    }

    /// Number of items `M` (excluding padding).
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn encode(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn decode(&self, index: u32) -> Option<&str> {
        let i = (index as usize).checked_sub(1)?;
        self.names.get(i).map(String::as_str)
    }

    pub fn encode_code(&self, code: u32) -> Option<u32> {
        match self.by_code.get(code as usize) {
            Some(&0) | None => None,
            Some(&i) => Some(i),
        }
    }

    /// Raw ids in index order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Maps a training session (corpus codes) to vocabulary indices.
    pub fn encode_session(&self, session: &Session) -> Session {
        Session {
            id: session.id,
            items: session
                .items
                .iter()
                .filter_map(|&c| self.encode_code(c))
                .collect(),
            end_time: session.end_time,
        }
    }
}

fn index_of(names: &[String]) -> BTreeMap<String, u32> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i as u32 + 1))
        .collect()
}

/// Encodes test sessions, dropping items unseen in training and sessions
/// left shorter than two clicks.
pub fn filter_test_items(test: &[Session], vocab: &Vocabulary) -> Vec<Session> {
    test.iter()
        .map(|s| vocab.encode_session(s))
        .filter(|s| s.items.len() >= 2)
        .collect()
}
