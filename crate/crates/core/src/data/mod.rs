//! From click events to padded training batches.
//!
//! The flow is: [`Sessionizer`] groups events into time-ordered
//! [`Session`]s, [`filter_sessions`] applies the item-frequency and length
//! rules to a fixpoint, [`split_by_time`] separates the most recent days as
//! the test set, [`Vocabulary::build`] indexes training items from 1
//! (0 is padding), [`filter_test_items`] drops unseen test items, and
//! [`expand_prefixes`] / [`make_batches`] produce padded model inputs.

mod batch;
mod sessions;

pub use batch::{
    expand_all, expand_prefixes, make_batches, Batch, BatchOrder, BatchRow, Batches,
    LabeledExample,
};
pub use sessions::{
    filter_sessions, filter_test_items, split_by_time, Corpus, CountScope, Dataset, FilterRules,
    Fraction, RawEvent, Session, Sessionizer, SplitPolicy, Vocabulary,
};

/// Index reserved for padding; real items are numbered from 1.
pub const PAD: u32 = 0;

pub const MS_PER_DAY: i64 = 86_400_000;
