use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::{valid_column, BlockParams, ModelConfig, LAYER_NORM_EPS};
use crate::rng::Rng;
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Additive key bias for masked attention.
pub const MASK_BIAS: f64 = -1e9;

/// Padding description of one sequence of width `width` whose first `len`
/// positions are real. Both tensors are absent when nothing is padded.
#[derive(Clone, Copy, Debug)]
pub struct SeqMask {
    pub len: usize,
    pub width: usize,
    /// `[width × 1]`, one for real positions.
    pub valid: Option<Var>,
    /// `[1 × width]`, zero for real positions and a large negative value
    /// for padding.
    pub key_bias: Option<Var>,
}

impl SeqMask {
    pub fn new<T: Real>(tape: &mut Tape<'_, T>, len: usize, width: usize) -> Self {
        if len >= width {
            return SeqMask {
                len,
                width,
                valid: None,
                key_bias: None,
            };
        }
        let valid = tape.constant(valid_column(len, width));
        let bias = Tensor::from_fn(&[1, width], |t| {
            if t < len {
                T::zero()
            } else {
                T::of(MASK_BIAS)
            }
        });
        let key_bias = tape.constant(bias);
        SeqMask {
            len,
            width,
            valid: Some(valid),
            key_bias: Some(key_bias),
        }
    }

    pub(crate) fn bias_keys<T: Real>(&self, tape: &mut Tape<'_, T>, scores: Var) -> Result<Var> {
        match self.key_bias {
            Some(b) => tape.add(scores, b),
            None => Ok(scores),
        }
    }

    pub(crate) fn zero_padding<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        match self.valid {
            Some(v) => tape.mul(x, v),
            None => Ok(x),
        }
    }
}

/// Sinusoidal position table `[len × d]`:
/// `PE[t, 2i] = sin(t / 10000^(2i/d))`, `PE[t, 2i+1] = cos(…)`.
pub fn positional_encoding<T: Real>(len: usize, d: usize) -> Result<Tensor<T>> {
    if !d.is_multiple_of(2) {
        return Err(Error::config("positional encoding needs an even width"));
    }
    if len == 0 || d == 0 {
        return Err(Error::contract("empty positional encoding"));
    }
    Ok(Tensor::from_fn(&[len, d], |k| {
        let (t, c) = (k / d, k % d);
        let i = (c / 2) as f64;
        let angle = t as f64 / Float::powf(10000.0f64, 2.0 * i / d as f64);
        T::of(if c % 2 == 0 {
            Float::sin(angle)
        } else {
            Float::cos(angle)
        })
    }))
}

/// Scaled dot-product attention with `heads` heads over `h` `[L × d]`.
/// Keys at padded positions get a large negative bias and the outputs at
/// padded query positions are zeroed.
pub fn multi_head_attention<T: Real>(
    tape: &mut Tape<'_, T>,
    h: Var,
    mask: &SeqMask,
    p: &BlockParams,
    heads: usize,
) -> Result<Var> {
    let d = tape.shape(h)[1];
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::config("model width not divisible by head count"));
    }
    if mask.len == 0 {
        return Err(Error::contract("attention over a fully masked sequence"));
    }
    let dk = d / heads;
    let scale = T::of(1.0 / (dk as f64).sqrt());
    let (w_q, w_k, w_v, w_out) = (
        tape.param(p.w_q),
        tape.param(p.w_k),
        tape.param(p.w_v),
        tape.param(p.w_out),
    );
    let q = tape.matmul_t(h, w_q)?;
    let k = tape.matmul_t(h, w_k)?;
    let v = tape.matmul_t(h, w_v)?;
    let mut outs = Vec::with_capacity(heads);
    for head in 0..heads {
        let (a, b) = (head * dk, (head + 1) * dk);
        let qh = tape.slice_last(q, a, b)?;
        let kh = tape.slice_last(k, a, b)?;
        let vh = tape.slice_last(v, a, b)?;
        let s = tape.matmul_t(qh, kh)?;
        let s = tape.scale(s, scale)?;
        let s = mask.bias_keys(tape, s)?;
        let w = tape.softmax(s, 1)?;
        outs.push(tape.matmul(w, vh)?);
    }
    let cat = if heads == 1 {
        outs[0]
    } else {
        tape.concat_last(&outs)?
    };
    let out = tape.matmul_t(cat, w_out)?;
    mask.zero_padding(tape, out)
}

/// Post-norm encoder block:
/// `u = LN(h + Dropout(MHA(h)))`, `out = LN(u + Dropout(FFN(u)))` with a
/// ReLU feed-forward layer.
pub fn transformer_block<T: Real>(
    tape: &mut Tape<'_, T>,
    h: Var,
    mask: &SeqMask,
    p: &BlockParams,
    cfg: &ModelConfig,
    mut rng: Option<&mut Rng>,
) -> Result<Var> {
    let a = multi_head_attention(tape, h, mask, p, cfg.heads)?;
    let a = drop(tape, a, cfg.dropout, rng.as_deref_mut())?;
    let s = tape.add(h, a)?;
    let (g1, b1) = (tape.param(p.ln1_gamma), tape.param(p.ln1_beta));
    let u = tape.layer_norm(s, g1, b1, LAYER_NORM_EPS)?;

    let (w1, c1, w2, c2) = (
        tape.param(p.ffn_w1),
        tape.param(p.ffn_b1),
        tape.param(p.ffn_w2),
        tape.param(p.ffn_b2),
    );
    let f = tape.matmul_t(u, w1)?;
    let f = tape.add(f, c1)?;
    let f = tape.relu(f)?;
    let f = tape.matmul_t(f, w2)?;
    let f = tape.add(f, c2)?;
    let f = drop(tape, f, cfg.dropout, rng)?;
    let s = tape.add(u, f)?;
    let (g2, b2) = (tape.param(p.ln2_gamma), tape.param(p.ln2_beta));
    tape.layer_norm(s, g2, b2, LAYER_NORM_EPS)
}

fn drop<T: Real>(tape: &mut Tape<'_, T>, x: Var, p: f64, rng: Option<&mut Rng>) -> Result<Var> {
    match rng {
        Some(rng) => tape.dropout(x, p, true, rng),
        None => Ok(x),
    }
}
