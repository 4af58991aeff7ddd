use alloc::vec::Vec;

use crate::data::{Session, PAD};
use crate::error::{Error, Result};
use crate::graph::{EdgeWeighting, SessionGraph};
use crate::rng::Rng;

/// One next-item prediction: the clicks so far and the click that follows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    pub prefix: Vec<u32>,
    pub label: u32,
}

/// `[x0..x_{t-1}] -> x_t` for every `t` in `1..n`.
pub fn expand_prefixes(items: &[u32]) -> Vec<LabeledExample> {
    (1..items.len())
        .map(|t| LabeledExample {
            prefix: items[..t].to_vec(),
            label: items[t],
        })
        .collect()
}

pub fn expand_all(sessions: &[Session]) -> Vec<LabeledExample> {
    sessions.iter().flat_map(|s| expand_prefixes(&s.items)).collect()
}

/// Right-padded prefixes plus one session graph per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    width: usize,
    items: Vec<u32>,
    lengths: Vec<usize>,
    mask: Vec<bool>,
    graphs: Vec<SessionGraph>,
    labels: Vec<u32>,
}

/// Borrowed view of one batch row.
#[derive(Clone, Copy, Debug)]
pub struct BatchRow<'a> {
    /// Padded to the batch width.
    pub items: &'a [u32],
    /// `true` at padding positions.
    pub mask: &'a [bool],
    pub len: usize,
    pub graph: &'a SessionGraph,
    pub label: u32,
}

impl Batch {
    pub fn from_examples(examples: &[&LabeledExample], weighting: EdgeWeighting) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let width = examples.iter().map(|e| e.prefix.len()).max().unwrap_or(0);
        let mut batch = Batch {
            width,
            items: Vec::with_capacity(width * examples.len()),
            lengths: Vec::with_capacity(examples.len()),
            mask: Vec::with_capacity(width * examples.len()),
            graphs: Vec::with_capacity(examples.len()),
            labels: Vec::with_capacity(examples.len()),
        };
        for e in examples {
            validate(e)?;
            let n = e.prefix.len();
            batch.items.extend_from_slice(&e.prefix);
            batch.items.extend(core::iter::repeat_n(PAD, width - n));
            batch.mask.extend((0..width).map(|t| t >= n));
            batch.lengths.push(n);
            batch.graphs.push(SessionGraph::build_with(&e.prefix, weighting)?);
            batch.labels.push(e.label);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Longest true prefix length in the batch.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn graphs(&self) -> &[SessionGraph] {
        &self.graphs
    }

    pub fn row(&self, i: usize) -> BatchRow<'_> {
        let w = self.width;
        BatchRow {
            items: &self.items[i * w..(i + 1) * w],
            mask: &self.mask[i * w..(i + 1) * w],
            len: self.lengths[i],
            graph: &self.graphs[i],
            label: self.labels[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = BatchRow<'_>> + '_ {
        (0..self.len()).map(|i| self.row(i))
    }
}

fn validate(e: &LabeledExample) -> Result<()> {
    if e.prefix.is_empty() {
        return Err(Error::contract("example with empty prefix"));
    }
    if e.prefix.contains(&PAD) || e.label == PAD {
        return Err(Error::contract("padding index inside an example"));
    }
    Ok(())
}

pub enum BatchOrder<'r> {
    /// Original example order (evaluation).
    Sequential,
    /// Shuffle once with the given stream, then chunk (training).
    Shuffled(&'r mut Rng),
}

/// Iterator over batches; the final partial batch is kept.
pub struct Batches<'a> {
    examples: &'a [LabeledExample],
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    weighting: EdgeWeighting,
}

pub fn make_batches<'a>(
    examples: &'a [LabeledExample],
    batch_size: usize,
    order: BatchOrder<'_>,
    weighting: EdgeWeighting,
) -> Result<Batches<'a>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    examples.iter().try_for_each(validate)?;
    let mut idx: Vec<usize> = (0..examples.len()).collect();
    if let BatchOrder::Shuffled(rng) = order {
        rng.shuffle(&mut idx);
    }
    Ok(Batches {
        examples,
        order: idx,
        batch_size,
        pos: 0,
        weighting,
    })
}

impl Batches<'_> {
    /// Example indices in iteration order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn batch_count(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let rows: Vec<&LabeledExample> = self.order[self.pos..end]
            .iter()
            .map(|&i| &self.examples[i])
            .collect();
        self.pos = end;
        // examples were validated up front
        Some(Batch::from_examples(&rows, self.weighting).expect("validated examples"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ex(prefix: &[u32], label: u32) -> LabeledExample {
        LabeledExample {
            prefix: prefix.to_vec(),
            label,
        }
    }

    #[test]
    fn minimal_session_gives_one_example() {
        assert_eq!(expand_prefixes(&[7, 8]), vec![ex(&[7], 8)]);
    }

    #[test]
    fn three_clicks_give_two_examples() {
        assert_eq!(
            expand_prefixes(&[1, 2, 3]),
            vec![ex(&[1], 2), ex(&[1, 2], 3)]
        );
    }

    #[test]
    fn final_partial_batch_is_kept() {
        let examples: Vec<_> = (0..101).map(|i| ex(&[1 + i % 3], 2)).collect();
        let sizes: Vec<usize> = make_batches(&examples, 50, BatchOrder::Sequential, EdgeWeighting::Binary)
            .unwrap()
            .map(|b| b.len())
            .collect();
        assert_eq!(sizes, [50, 50, 1]);
    }

    #[test]
    fn padding_and_mask() {
        let a = ex(&[1, 2], 3);
        let b = ex(&[4, 5, 6, 7, 8], 9);
        let batch = Batch::from_examples(&[&a, &b], EdgeWeighting::Binary).unwrap();
        assert_eq!(batch.width(), 5);
        let r0 = batch.row(0);
        assert_eq!(r0.items, &[1, 2, 0, 0, 0]);
        assert_eq!(r0.mask.iter().filter(|&&m| m).count(), 3);
        assert_eq!(batch.row(1).mask.iter().filter(|&&m| m).count(), 0);
        for (x, m) in batch.items().iter().zip(batch.mask()) {
            assert_eq!(*x == PAD, *m);
        }
    }

    #[test]
    fn shuffle_is_seed_deterministic() {
        let examples: Vec<_> = (1..=40).map(|i| ex(&[i], i + 1)).collect();
        let order = |seed| {
            let mut rng = Rng::new(seed);
            make_batches(&examples, 7, BatchOrder::Shuffled(&mut rng), EdgeWeighting::Binary)
                .unwrap()
                .order()
                .to_vec()
        };
        assert_eq!(order(5), order(5));
        assert_ne!(order(5), order(6));
    }

    #[test]
    fn rejects_padding_in_prefix() {
        let bad = [ex(&[1, 0], 2)];
        assert!(make_batches(&bad, 1, BatchOrder::Sequential, EdgeWeighting::Binary).is_err());
        assert!(make_batches(&[], 0, BatchOrder::Sequential, EdgeWeighting::Binary).is_err());
    }
}
