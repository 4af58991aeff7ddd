//! The TAGNN++ network.
//!
//! Per batch row: item embeddings of the session graph's nodes are refined
//! by gated graph propagation, mapped back to click order through the
//! alias map (plus sinusoidal positions), passed through Transformer
//! encoder blocks, pooled into local and global session vectors, and every
//! candidate item is scored with a target-attentive fusion of the three.
//!
//! All linear weights are stored `[out × in]` and applied as `x · Wᵀ`.

mod attention;
mod ggnn;
mod readout;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use attention::{multi_head_attention, positional_encoding, transformer_block, SeqMask};
pub use ggnn::ggnn_propagate;
pub use readout::{assemble_sequence, readout, target_attention, target_attentive_scores};

use crate::data::{Batch, BatchRow, Dataset};
use crate::error::{Error, Result};
use crate::params::{ParamGrads, ParamId, ParamStore};
use crate::rng::Rng;
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    /// Number of real items `M`; the embedding table has `M + 1` rows.
    pub num_items: usize,
    pub d: usize,
    pub heads: usize,
    pub dropout: f64,
    pub ggnn_steps: usize,
    pub ffn_hidden: usize,
    pub blocks: usize,
    pub use_gnn: bool,
    pub use_transformer: bool,
    pub use_pe: bool,
    /// Softmax-normalize the global attention weights instead of using the
    /// raw sigmoid-gated scores.
    pub normalize_global_attention: bool,
}

impl ModelConfig {
    pub fn new(num_items: usize, d: usize, heads: usize) -> Self {
        ModelConfig {
            num_items,
            d,
            heads,
            dropout: 0.1,
            ggnn_steps: 1,
            ffn_hidden: 4 * d,
            blocks: 1,
            use_gnn: true,
            use_transformer: true,
            use_pe: true,
            normalize_global_attention: false,
        }
    }

    /// Embedding width 100 with 2 heads for Yoochoose, 120 with 8 heads for
    /// Diginetica.
    pub fn for_dataset(dataset: Dataset, num_items: usize) -> Self {
        match dataset {
            Dataset::Yoochoose => Self::new(num_items, 100, 2),
            Dataset::Diginetica => Self::new(num_items, 120, 8),
        }
    }

    /// Every violated constraint, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("num_items", self.num_items),
            ("d", self.d),
            ("heads", self.heads),
            ("ggnn_steps", self.ggnn_steps),
            ("ffn_hidden", self.ffn_hidden),
            ("blocks", self.blocks),
        ] {
            if v == 0 {
                out.push(format!("{name} must be positive"));
            }
        }
        if self.heads > 0 && !self.d.is_multiple_of(self.heads) {
            out.push(format!("d = {} is not divisible by heads = {}", self.d, self.heads));
        }
        if self.use_pe && !self.d.is_multiple_of(2) {
            out.push(format!("positional encoding needs an even d, got {}", self.d));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            out.push(format!("dropout = {} outside [0, 1)", self.dropout));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().first() {
            None => Ok(()),
            Some(p) => Err(Error::config(p.clone())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GgnnParams {
    pub h_in: ParamId,
    pub b_in: ParamId,
    pub h_out: ParamId,
    pub b_out: ParamId,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_o: ParamId,
    pub u_o: ParamId,
    pub b_o: ParamId,
}

#[derive(Clone, Debug)]
pub struct BlockParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_out: ParamId,
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
}

#[derive(Clone, Debug)]
pub struct ReadoutParams {
    pub w1: ParamId,
    pub w2: ParamId,
    pub c: ParamId,
    pub q: ParamId,
    /// Bilinear target-attention weight.
    pub w_t: ParamId,
    /// Fusion of `[s_local, s_global, s_target]`, `[d × 3d]`.
    pub w3: ParamId,
}

#[derive(Clone, Debug)]
pub struct ParamIds {
    pub embedding: ParamId,
    pub ggnn: GgnnParams,
    pub blocks: Vec<BlockParams>,
    pub readout: ReadoutParams,
}

pub const EMBEDDING: &str = "embedding";
pub const FUSION: &str = "readout.w3";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Uniform,
    Zeros,
    Ones,
    Embedding,
}

/// Registers the full parameter layout in its fixed order. Parameters of
/// disabled stages are still registered so every configuration shares one
/// checkpoint layout.
fn register<T: Real>(
    cfg: &ModelConfig,
    mut make: impl FnMut(&[usize], Init) -> Tensor<T>,
) -> Result<(ParamStore<T>, ParamIds)> {
    let d = cfg.d;
    let mut store = ParamStore::new();
    let mut reg = |name: String, shape: &[usize], init: Init| -> Result<ParamId> {
        let t = make(shape, init);
        store.register(name, t)
    };
    let embedding = reg(EMBEDDING.into(), &[cfg.num_items + 1, d], Init::Embedding)?;
    let w = |n: &str| format!("ggnn.{n}");
    let ggnn = GgnnParams {
        h_in: reg(w("h_in"), &[d, d], Init::Uniform)?,
        b_in: reg(w("b_in"), &[d], Init::Zeros)?,
        h_out: reg(w("h_out"), &[d, d], Init::Uniform)?,
        b_out: reg(w("b_out"), &[d], Init::Zeros)?,
        w_z: reg(w("w_z"), &[d, 2 * d], Init::Uniform)?,
        u_z: reg(w("u_z"), &[d, d], Init::Uniform)?,
        b_z: reg(w("b_z"), &[d], Init::Zeros)?,
        w_r: reg(w("w_r"), &[d, 2 * d], Init::Uniform)?,
        u_r: reg(w("u_r"), &[d, d], Init::Uniform)?,
        b_r: reg(w("b_r"), &[d], Init::Zeros)?,
        w_o: reg(w("w_o"), &[d, 2 * d], Init::Uniform)?,
        u_o: reg(w("u_o"), &[d, d], Init::Uniform)?,
        b_o: reg(w("b_o"), &[d], Init::Zeros)?,
    };
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for b in 0..cfg.blocks {
        let w = |n: &str| format!("block{b}.{n}");
        let f = cfg.ffn_hidden;
        blocks.push(BlockParams {
            w_q: reg(w("attn.w_q"), &[d, d], Init::Uniform)?,
            w_k: reg(w("attn.w_k"), &[d, d], Init::Uniform)?,
            w_v: reg(w("attn.w_v"), &[d, d], Init::Uniform)?,
            w_out: reg(w("attn.w_out"), &[d, d], Init::Uniform)?,
            ln1_gamma: reg(w("ln1.gamma"), &[d], Init::Ones)?,
            ln1_beta: reg(w("ln1.beta"), &[d], Init::Zeros)?,
            ffn_w1: reg(w("ffn.w1"), &[f, d], Init::Uniform)?,
            ffn_b1: reg(w("ffn.b1"), &[f], Init::Zeros)?,
            ffn_w2: reg(w("ffn.w2"), &[d, f], Init::Uniform)?,
            ffn_b2: reg(w("ffn.b2"), &[d], Init::Zeros)?,
            ln2_gamma: reg(w("ln2.gamma"), &[d], Init::Ones)?,
            ln2_beta: reg(w("ln2.beta"), &[d], Init::Zeros)?,
        });
    }
    let readout = ReadoutParams {
        w1: reg("readout.w1".into(), &[d, d], Init::Uniform)?,
        w2: reg("readout.w2".into(), &[d, d], Init::Uniform)?,
        c: reg("readout.c".into(), &[d], Init::Zeros)?,
        q: reg("readout.q".into(), &[d], Init::Uniform)?,
        w_t: reg("readout.w_t".into(), &[d, d], Init::Uniform)?,
        w3: reg(FUSION.into(), &[d, 3 * d], Init::Uniform)?,
    };
    Ok((
        store,
        ParamIds {
            embedding,
            ggnn,
            blocks,
            readout,
        },
    ))
}

#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    config: ModelConfig,
    params: ParamStore<T>,
    ids: ParamIds,
}

impl<T: Real> Model<T> {
    /// Weights uniform in `±1/√d`, biases and LayerNorm shifts zero,
    /// LayerNorm gains one, padding embedding row zero.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let bound = 1.0 / num_traits::Float::sqrt(config.d as f64);
        let d = config.d;
        let (params, ids) = register(&config, |shape, init| match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::Uniform => Tensor::from_fn(shape, |_| T::of(rng.uniform_range(-bound, bound))),
            Init::Embedding => Tensor::from_fn(shape, |k| {
                let v = rng.uniform_range(-bound, bound);
                if k < d {
                    T::zero()
                } else {
                    T::of(v)
                }
            }),
        })?;
        Ok(Model {
            config,
            params,
            ids,
        })
    }

    /// Wraps existing parameters, checking names and shapes against the
    /// layout implied by `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let (expected, ids) = register::<T>(&config, |shape, _| Tensor::zeros(shape))?;
        if expected.len() != params.len() {
            return Err(Error::config(format!(
                "expected {} parameters, found {}",
                expected.len(),
                params.len()
            )));
        }
        for ((en, et), (n, t)) in expected.iter().zip(params.iter()) {
            if en != n || et.shape() != t.shape() {
                return Err(Error::config(format!(
                    "parameter mismatch: expected {en} {:?}, found {n} {:?}",
                    et.shape(),
                    t.shape()
                )));
            }
        }
        Ok(Model {
            config,
            params,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn ids(&self) -> &ParamIds {
        &self.ids
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            ids: self.ids.clone(),
        }
    }

    /// Logits `[1 × M]` for one batch row. Dropout is active only when a
    /// random stream is supplied.
    pub fn forward_row(
        &self,
        tape: &mut Tape<'_, T>,
        row: BatchRow<'_>,
        mut rng: Option<&mut Rng>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let width = row.items.len();
        if row.len == 0 || row.len > width {
            return Err(Error::contract("batch row without unmasked positions"));
        }
        let table = tape.param(self.ids.embedding);
        let nodes: Vec<usize> = row.graph.nodes().iter().map(|&i| i as usize).collect();
        let mut x = tape.gather_rows(table, &nodes)?;
        if cfg.use_gnn {
            let a_in = tape.constant(row.graph.a_in_tensor());
            let a_out = tape.constant(row.graph.a_out_tensor());
            x = ggnn_propagate(tape, x, a_in, a_out, &self.ids.ggnn, cfg.ggnn_steps)?;
        }
        let pe = if cfg.use_pe {
            Some(positional_encoding::<T>(row.len, cfg.d)?)
        } else {
            None
        };
        let mut h = assemble_sequence(tape, x, row.graph.alias(), width, pe.as_ref())?;
        let mask = SeqMask::new(tape, row.len, width);
        if cfg.use_transformer {
            for block in &self.ids.blocks {
                h = transformer_block(tape, h, &mask, block, cfg, rng.as_deref_mut())?;
            }
        }
        let (s_local, s_global) = readout(
            tape,
            h,
            &mask,
            &self.ids.readout,
            cfg.normalize_global_attention,
        )?;
        target_attentive_scores(tape, h, &mask, s_local, s_global, &self.ids.readout, table)
    }

    /// Logits `[B × M]`; rows share one tape and consume `rng` in order.
    pub fn forward(
        &self,
        tape: &mut Tape<'_, T>,
        batch: &Batch,
        mut rng: Option<&mut Rng>,
    ) -> Result<Var> {
        let rows = batch
            .rows()
            .map(|row| self.forward_row(tape, row, rng.as_deref_mut()))
            .collect::<Result<Vec<_>>>()?;
        tape.concat_rows(&rows)
    }

    /// Mean cross-entropy of a batch.
    pub fn loss(&self, tape: &mut Tape<'_, T>, batch: &Batch, rng: Option<&mut Rng>) -> Result<Var> {
        let logits = self.forward(tape, batch, rng)?;
        tape.cross_entropy(logits, batch.labels())
    }

    /// Cross-entropy of one row scaled by `weight`, with its parameter
    /// gradients on a private tape. The padding embedding row receives no
    /// gradient.
    pub fn row_loss_and_grads(
        &self,
        row: BatchRow<'_>,
        rng: Option<&mut Rng>,
        weight: T,
    ) -> Result<(f64, ParamGrads<T>)> {
        let mut tape = Tape::with_params(&self.params);
        let logits = self.forward_row(&mut tape, row, rng)?;
        let ce = tape.cross_entropy(logits, &[row.label])?;
        let loss = tape.scale(ce, weight)?;
        let value = tape.value(ce).data()[0].as_f64();
        let mut grads = tape.backward(loss)?.into_param_grads(&self.params);
        self.mask_frozen(&mut grads);
        Ok((value, grads))
    }

    /// Inference logits for one row, as plain scores `[M]`.
    pub fn scores(&self, row: BatchRow<'_>) -> Result<Vec<T>> {
        let mut tape = Tape::with_params(&self.params);
        let logits = self.forward_row(&mut tape, row, None)?;
        Ok(tape.value(logits).data().to_vec())
    }

    /// Zeroes gradients of frozen entries (the padding embedding row).
    pub fn mask_frozen(&self, grads: &mut ParamGrads<T>) {
        let g = grads.get_mut(self.ids.embedding);
        for v in g.row_mut(0) {
            *v = T::zero();
        }
    }

    /// Number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.numel()
    }
}

/// Column vector `[len × 1]` of ones for true positions, zeros for padding.
pub(crate) fn valid_column<T: Real>(len: usize, width: usize) -> Tensor<T> {
    Tensor::from_fn(&[width, 1], |t| if t < len { T::one() } else { T::zero() })
}

pub(crate) fn zeros_rows<T: Real>(rows: usize, d: usize) -> Tensor<T> {
    Tensor::new(&[rows, d], vec![T::zero(); rows * d]).expect("positive extents")
}
