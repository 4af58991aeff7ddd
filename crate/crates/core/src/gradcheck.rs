//! Central finite-difference checks of tape gradients.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Batch, LabeledExample};
use crate::error::{Error, Result};
use crate::graph::EdgeWeighting;
use crate::model::{Model, ModelConfig};
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor of the relative error.
pub const ERROR_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    /// Input index or parameter name, with the flat element index.
    pub location: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub mismatches: Vec<Mismatch>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    fn record(&mut self, location: impl FnOnce() -> String, a: f64, n: f64, tol: f64) {
        let e = relative_error(a, n);
        self.checked += 1;
        if e > self.max_rel_error || e.is_nan() {
            self.max_rel_error = e;
        }
        if !(e < tol) {
            self.mismatches.push(Mismatch {
                location: location(),
                analytic: a,
                numeric: n,
                rel_error: e,
            });
        }
    }
}

fn scalar_value(tape: &Tape<'_, f64>, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.len() != 1 {
        return Err(Error::contract("gradient check of a non-scalar function"));
    }
    Ok(t.data()[0])
}

/// Checks every element of every input of a scalar function `f`.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], f: F, h: f64, tol: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape<'static, f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), false)).collect();
        let out = f(&mut tape, &vars)?;
        scalar_value(&tape, out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    scalar_value(&tape, out)?;
    let grads = tape.backward(out)?;

    let mut report = GradcheckReport::default();
    let mut xs = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for j in 0..inputs[k].len() {
            let x0 = inputs[k].data()[j];
            xs[k].data_mut()[j] = x0 + h;
            let fp = eval(&xs)?;
            xs[k].data_mut()[j] = x0 - h;
            let fm = eval(&xs)?;
            xs[k].data_mut()[j] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            report.record(|| format!("input{k}[{j}]"), analytic.data()[j], numeric, tol);
        }
    }
    Ok(report)
}

/// Checks parameter gradients of the scalar `f` evaluated on a tape bound
/// to `store`. `skip` names parameters left out (for example frozen ones).
pub fn check_params<F>(
    store: &ParamStore<f64>,
    f: F,
    h: f64,
    tol: f64,
    skip: &dyn Fn(&str, usize) -> bool,
) -> Result<GradcheckReport>
where
    F: for<'a> Fn(&mut Tape<'a, f64>) -> Result<Var>,
{
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::with_params(s);
        let out = f(&mut tape)?;
        scalar_value(&tape, out)
    };

    let analytic = {
        let mut tape = Tape::with_params(store);
        let out = f(&mut tape)?;
        scalar_value(&tape, out)?;
        tape.backward(out)?.into_param_grads(store)
    };

    let mut report = GradcheckReport::default();
    let mut work = store.clone();
    for id in store.ids() {
        let name = store.name(id);
        for j in 0..store.get(id).len() {
            if skip(name, j) {
                continue;
            }
            let x0 = store.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = x0 + h;
            let fp = eval(&work)?;
            work.get_mut(id).data_mut()[j] = x0 - h;
            let fm = eval(&work)?;
            work.get_mut(id).data_mut()[j] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            report.record(|| format!("{name}[{j}]"), analytic.get(id).data()[j], numeric, tol);
        }
    }
    Ok(report)
}

/// Relative-error bound for single operations.
pub const OP_TOLERANCE: f64 = 1e-4;

/// Relative-error bound for the full model.
pub const MODEL_TOLERANCE: f64 = 1e-3;

type Case = (
    &'static str,
    Vec<Tensor<f64>>,
    Box<dyn Fn(&mut Tape<'static, f64>, &[Var]) -> Result<Var>>,
);

fn random(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform_range(-1.0, 1.0))
}

/// Values bounded away from zero, for kinked operations.
fn off_zero(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v = rng.uniform_range(-1.0, 1.0);
        v + 0.2f64.copysign(v)
    })
}

/// `Σ y ⊙ R` for a fixed pseudo-random `R`, so every output element
/// carries a distinct weight.
fn probe(tape: &mut Tape<'static, f64>, y: Var) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let mut rng = Rng::new(0x5eed ^ shape.len() as u64);
    let r = tape.constant(random(&mut rng, &shape));
    let p = tape.mul(y, r)?;
    tape.sum(p)
}

fn op_cases(seed: u64) -> Vec<Case> {
    let mut g = Rng::new(seed);
    let rng = &mut g;
    macro_rules! case {
        ($name:expr, [$($x:expr),*], |$t:ident, $v:ident| $body:expr) => {
            (
                $name,
                alloc::vec![$($x),*],
                Box::new(move |$t: &mut Tape<'static, f64>, $v: &[Var]| -> Result<Var> {
                    let y = $body?;
                    probe($t, y)
                }),
            )
        };
    }
    alloc::vec![
        case!("matmul", [random(rng, &[3, 4]), random(rng, &[4, 2])], |t, v| t.matmul(v[0], v[1])),
        case!("matmul_t", [random(rng, &[3, 4]), random(rng, &[5, 4])], |t, v| t.matmul_t(v[0], v[1])),
        case!("transpose", [random(rng, &[3, 4])], |t, v| t.transpose(v[0])),
        case!("add", [random(rng, &[3, 4]), random(rng, &[3, 4])], |t, v| t.add(v[0], v[1])),
        case!("add_broadcast_vector", [random(rng, &[3, 4]), random(rng, &[4])], |t, v| t.add(v[0], v[1])),
        case!("add_broadcast_row", [random(rng, &[3, 4]), random(rng, &[1, 4])], |t, v| t.add(v[0], v[1])),
        case!("add_broadcast_column", [random(rng, &[3, 4]), random(rng, &[3, 1])], |t, v| t.add(v[0], v[1])),
        case!("sub", [random(rng, &[2, 3]), random(rng, &[1, 3])], |t, v| t.sub(v[0], v[1])),
        case!("mul", [random(rng, &[2, 3]), random(rng, &[2, 3])], |t, v| t.mul(v[0], v[1])),
        case!("mul_broadcast", [random(rng, &[4, 3]), random(rng, &[4, 1])], |t, v| t.mul(v[0], v[1])),
        case!("scale", [random(rng, &[2, 3])], |t, v| t.scale(v[0], -1.7)),
        case!("sigmoid", [random(rng, &[3, 3])], |t, v| t.sigmoid(v[0])),
        case!("tanh", [random(rng, &[3, 3])], |t, v| t.tanh(v[0])),
        case!("relu", [off_zero(rng, &[3, 3])], |t, v| t.relu(v[0])),
        case!("concat_last", [random(rng, &[2, 3]), random(rng, &[2, 2])], |t, v| t.concat_last(v)),
        case!("concat_rows", [random(rng, &[2, 3]), random(rng, &[1, 3])], |t, v| t.concat_rows(v)),
        case!("softmax_rows", [random(rng, &[3, 4])], |t, v| t.softmax(v[0], 1)),
        case!("softmax_columns", [random(rng, &[3, 4])], |t, v| t.softmax(v[0], 0)),
        case!(
            "layer_norm",
            [random(rng, &[3, 5]), random(rng, &[5]), random(rng, &[5])],
            |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)
        ),
        case!("dropout", [random(rng, &[4, 4])], |t, v| {
            let mut r = Rng::new(7);
            t.dropout(v[0], 0.3, true, &mut r)
        }),
        case!("gather_rows", [random(rng, &[4, 3])], |t, v| t.gather_rows(v[0], &[2, 0, 2, 3])),
        case!("sum", [random(rng, &[2, 3])], |t, v| t.sum(v[0])),
        case!("mean", [random(rng, &[2, 3])], |t, v| t.mean(v[0])),
        case!("sum_last", [random(rng, &[3, 4])], |t, v| t.sum_last(v[0])),
        case!("reshape", [random(rng, &[2, 6])], |t, v| t.reshape(v[0], &[3, 4])),
        case!("slice_last", [random(rng, &[3, 5])], |t, v| t.slice_last(v[0], 1, 4)),
        case!("cross_entropy", [random(rng, &[3, 5])], |t, v| t.cross_entropy(v[0], &[2, 5, 1])),
    ]
}

/// Finite-difference check of every tape operation on random inputs.
pub fn check_all_ops(seed: u64) -> Result<Vec<(&'static str, GradcheckReport)>> {
    op_cases(seed)
        .into_iter()
        .map(|(name, inputs, f)| Ok((name, check_inputs(&inputs, f, DEFAULT_STEP, OP_TOLERANCE)?)))
        .collect()
}

/// Model with 7 items, width 4 and 2 heads, and a batch of two rows of
/// different lengths.
pub fn tiny_model(seed: u64) -> Result<(Model<f64>, Batch)> {
    let model = Model::new(ModelConfig::new(7, 4, 2), &mut Rng::new(seed))?;
    let examples = [
        LabeledExample {
            prefix: alloc::vec![1, 2, 3, 2],
            label: 4,
        },
        LabeledExample {
            prefix: alloc::vec![5, 6],
            label: 7,
        },
    ];
    let refs: Vec<&LabeledExample> = examples.iter().collect();
    let batch = Batch::from_examples(&refs, EdgeWeighting::Binary)?;
    Ok((model, batch))
}

/// Finite-difference check of the batch loss of `model` with respect to
/// every parameter, dropout off.
pub fn check_model(model: &Model<f64>, batch: &Batch, tol: f64) -> Result<GradcheckReport> {
    check_params(
        model.params(),
        |tape| model.loss(tape, batch, None),
        DEFAULT_STEP,
        tol,
        &|_, _| false,
    )
}
