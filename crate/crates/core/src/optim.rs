//! Adam with an additive L2 term, step learning-rate decay and adaptive
//! gradient clipping.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::params::{ParamGrads, ParamStore};
use crate::scalar::Real;
use crate::tensor::{l2_norm, Tensor};

/// `lr(epoch) = lr0 · factor^⌊epoch / every⌋` with 0-based epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepDecay {
    pub lr0: f64,
    pub factor: f64,
    pub every: usize,
}

impl StepDecay {
    pub fn new(lr0: f64, factor: f64, every: usize) -> Result<Self> {
        if !(lr0 > 0.0 && lr0.is_finite()) {
            return Err(Error::config("initial learning rate must be positive"));
        }
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::config("decay factor must lie in (0, 1]"));
        }
        if every == 0 {
            return Err(Error::config("decay interval must be at least one epoch"));
        }
        Ok(StepDecay { lr0, factor, every })
    }

    pub fn constant(lr: f64) -> Self {
        StepDecay {
            lr0: lr,
            factor: 1.0,
            every: 1,
        }
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        let k = (epoch / self.every) as i32;
        if k == 0 {
            return self.lr0;
        }
        // Dividing by an exact integer power keeps decimal rates such as
        // 1e-4 · 0.1⁴ at the correctly rounded 1e-8.
        let inv = 1.0 / self.factor;
        if inv.fract() == 0.0 && inv.powi(k).is_finite() {
            self.lr0 / inv.powi(k)
        } else {
            self.lr0 * self.factor.powi(k)
        }
    }
}

/// Unit-wise adaptive gradient clipping.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Agc {
    pub lambda: f64,
    pub eps: f64,
    /// Parameter names left unclipped.
    pub exempt: Vec<String>,
}

impl Agc {
    pub fn new(lambda: f64, eps: f64, exempt: Vec<String>) -> Result<Self> {
        if !(lambda > 0.0) || !(eps > 0.0) {
            return Err(Error::config("clipping threshold and epsilon must be positive"));
        }
        Ok(Agc {
            lambda,
            eps,
            exempt,
        })
    }

    /// Clips `grads` in place and returns the number of rescaled units.
    /// Units are the rows of matrices and whole vectors otherwise.
    pub fn clip<T: Real>(&self, params: &ParamStore<T>, grads: &mut ParamGrads<T>) -> usize {
        let mut clipped = 0;
        for ((name, w), g) in params.iter().zip(grads.tensors_mut()) {
            if self.exempt.iter().any(|e| e == name) {
                continue;
            }
            clipped += clip_tensor(w, g, self.lambda, self.eps);
        }
        clipped
    }
}

/// Clips one tensor unit by unit.
pub fn clip_tensor<T: Real>(w: &Tensor<T>, g: &mut Tensor<T>, lambda: f64, eps: f64) -> usize {
    let unit = if w.rank() == 2 { w.cols() } else { w.len() };
    let mut clipped = 0;
    for (wu, gu) in w
        .data()
        .chunks(unit)
        .zip(g.data_mut().chunks_mut(unit))
    {
        if clip_unit(wu, gu, lambda, eps) {
            clipped += 1;
        }
    }
    clipped
}

fn clip_unit<T: Real>(w: &[T], g: &mut [T], lambda: f64, eps: f64) -> bool {
    let wn = l2_norm(w).max(eps);
    let gn = l2_norm(g);
    let limit = lambda * wn;
    if gn <= limit {
        return false;
    }
    let c = T::of(limit / gn);
    for v in g.iter_mut() {
        *v *= c;
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coefficient of the L2 term added to every gradient.
    pub l2: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 0.0,
        }
    }
}

/// First and second moments per parameter plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

impl Adam {
    /// One update in registry order: `g ← g + l2·w`, bias-corrected
    /// moments, `w ← w − lr·m̂ / (√v̂ + eps)`.
    pub fn step<T: Real>(
        &self,
        params: &mut ParamStore<T>,
        grads: &ParamGrads<T>,
        state: &mut AdamState<T>,
        lr: f64,
    ) -> Result<()> {
        if grads.len() != params.len() || state.m.len() != params.len() {
            return Err(Error::contract("optimizer state does not match parameters"));
        }
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one, l2, eps) = (T::one(), T::of(self.l2), T::of(self.eps));
        let step = T::of(lr / bc1);
        let bc2_sqrt = T::of(bc2.sqrt());
        for (k, w) in params.tensors_mut().iter_mut().enumerate() {
            let g = &grads.tensors()[k];
            let (m, v) = (&mut state.m[k], &mut state.v[k]);
            if g.shape() != w.shape() || m.shape() != w.shape() {
                return Err(Error::shape("adam", w.shape(), g.shape()));
            }
            for (((wi, &gi), mi), vi) in w
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gi = gi + l2 * *wi;
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let denom = Float::sqrt(*vi) / bc2_sqrt + eps;
                *wi -= step * *mi / denom;
            }
        }
        Ok(())
    }
}
