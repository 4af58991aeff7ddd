use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{zeros_rows, ReadoutParams, SeqMask};
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Maps node states `[n × d]` back to click order through `alias`,
/// zero-pads to `width` rows and adds `pe` to the real positions.
pub fn assemble_sequence<T: Real>(
    tape: &mut Tape<'_, T>,
    nodes: Var,
    alias: &[usize],
    width: usize,
    pe: Option<&Tensor<T>>,
) -> Result<Var> {
    let len = alias.len();
    if len == 0 || len > width {
        return Err(Error::contract("alias longer than the padded width"));
    }
    let d = tape.shape(nodes)[1];
    let mut h = tape.gather_rows(nodes, alias)?;
    if let Some(pe) = pe {
        let pe = tape.constant(pe.clone());
        h = tape.add(h, pe)?;
    }
    if width > len {
        let pad = tape.constant(zeros_rows(width - len, d));
        h = tape.concat_rows(&[h, pad])?;
    }
    Ok(h)
}

/// Local and global session vectors, each `[1 × d]`.
///
/// `s_local` is the state at the last real position. `s_global` is the
/// sum of all real states weighted by `α_t = qᵀ σ(W1 s_local + W2 h_t + c)`;
/// with `normalize` the weights pass through a masked softmax first.
pub fn readout<T: Real>(
    tape: &mut Tape<'_, T>,
    h: Var,
    mask: &SeqMask,
    p: &ReadoutParams,
    normalize: bool,
) -> Result<(Var, Var)> {
    if mask.len == 0 {
        return Err(Error::contract("readout of an empty sequence"));
    }
    let d = tape.shape(h)[1];
    let s_local = tape.gather_rows(h, &[mask.len - 1])?;
    let (w1, w2, c, q) = (
        tape.param(p.w1),
        tape.param(p.w2),
        tape.param(p.c),
        tape.param(p.q),
    );
    let a = tape.matmul_t(h, w2)?;
    let b = tape.matmul_t(s_local, w1)?;
    let s = tape.add(a, b)?;
    let s = tape.add(s, c)?;
    let gate = tape.sigmoid(s)?;
    let q_row = tape.reshape(q, &[1, d])?;
    let alpha = if normalize {
        let raw = tape.matmul_t(q_row, gate)?;
        let raw = mask.bias_keys(tape, raw)?;
        tape.softmax(raw, 1)?
    } else {
        let gate = mask.zero_padding(tape, gate)?;
        tape.matmul_t(q_row, gate)?
    };
    let s_global = tape.matmul(alpha, h)?;
    Ok((s_local, s_global))
}

/// Attention weights `[rows × L]` of every embedding-table row over the
/// real positions: `softmax_t(e_vᵀ W_t h_t)`.
pub fn target_attention<T: Real>(
    tape: &mut Tape<'_, T>,
    h: Var,
    mask: &SeqMask,
    p: &ReadoutParams,
    table: Var,
) -> Result<Var> {
    let w_t = tape.param(p.w_t);
    let g = tape.matmul_t(h, w_t)?;
    let scores = tape.matmul_t(table, g)?;
    let scores = mask.bias_keys(tape, scores)?;
    tape.softmax(scores, 1)
}

/// Scores `[1 × M]` for every real item.
///
/// For candidate `v`, a target-specific session vector attends over the
/// real positions with weights `softmax_t(vᵀ W_t h_t)`; the fused
/// representation `W3 [s_local; s_global; s_target(v)]` is scored by inner
/// product with `v`. Row 0 of the embedding table is the padding item and
/// is dropped from the output.
pub fn target_attentive_scores<T: Real>(
    tape: &mut Tape<'_, T>,
    h: Var,
    mask: &SeqMask,
    s_local: Var,
    s_global: Var,
    p: &ReadoutParams,
    table: Var,
) -> Result<Var> {
    let rows = tape.shape(table)[0];
    let d = tape.shape(table)[1];
    if rows < 2 {
        return Err(Error::contract("embedding table without real items"));
    }
    let beta = target_attention(tape, h, mask, p, table)?;
    let s_target = tape.matmul(beta, h)?;

    let w3 = tape.param(p.w3);
    let parts: Vec<Var> = (0..3)
        .map(|k| tape.slice_last(w3, k * d, (k + 1) * d))
        .collect::<Result<_>>()?;
    let a = tape.matmul_t(s_local, parts[0])?;
    let b = tape.matmul_t(s_global, parts[1])?;
    let u = tape.add(a, b)?;
    let y = tape.matmul_t(s_target, parts[2])?;
    let y = tape.add(y, u)?;
    let prod = tape.mul(table, y)?;
    let logits = tape.sum_last(prod)?;
    let logits = tape.reshape(logits, &[1, rows])?;
    tape.slice_last(logits, 1, rows)
}
