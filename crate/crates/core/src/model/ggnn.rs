use crate::error::Result;
use crate::model::GgnnParams;
use crate::scalar::Real;
use crate::tape::{Tape, Var};

/// `steps` rounds of gated propagation over node states `x` `[n × d]`.
///
/// Each round aggregates transformed neighbour states along incoming and
/// outgoing edges, then updates every node with GRU-style gates:
/// `x' = x + z ⊙ (x̃ − x)`.
pub fn ggnn_propagate<T: Real>(
    tape: &mut Tape<'_, T>,
    mut x: Var,
    a_in: Var,
    a_out: Var,
    p: &GgnnParams,
    steps: usize,
) -> Result<Var> {
    for _ in 0..steps {
        x = step(tape, x, a_in, a_out, p)?;
    }
    Ok(x)
}

fn step<T: Real>(
    tape: &mut Tape<'_, T>,
    x: Var,
    a_in: Var,
    a_out: Var,
    p: &GgnnParams,
) -> Result<Var> {
    let h_in = tape.param(p.h_in);
    let h_out = tape.param(p.h_out);
    let b_in = tape.param(p.b_in);
    let b_out = tape.param(p.b_out);

    let t = tape.matmul_t(x, h_in)?;
    let t = tape.matmul(a_in, t)?;
    let m_in = tape.add(t, b_in)?;
    let t = tape.matmul_t(x, h_out)?;
    let t = tape.matmul(a_out, t)?;
    let m_out = tape.add(t, b_out)?;
    let m = tape.concat_last(&[m_in, m_out])?;

    let z = gate(tape, m, x, p.w_z, p.u_z, p.b_z)?;
    let r = gate(tape, m, x, p.w_r, p.u_r, p.b_r)?;

    let w_o = tape.param(p.w_o);
    let u_o = tape.param(p.u_o);
    let b_o = tape.param(p.b_o);
    let rx = tape.mul(r, x)?;
    let a = tape.matmul_t(m, w_o)?;
    let b = tape.matmul_t(rx, u_o)?;
    let s = tape.add(a, b)?;
    let s = tape.add(s, b_o)?;
    let cand = tape.tanh(s)?;

    let diff = tape.sub(cand, x)?;
    let upd = tape.mul(z, diff)?;
    tape.add(x, upd)
}

fn gate<T: Real>(
    tape: &mut Tape<'_, T>,
    m: Var,
    x: Var,
    w: crate::params::ParamId,
    u: crate::params::ParamId,
    b: crate::params::ParamId,
) -> Result<Var> {
    let w = tape.param(w);
    let u = tape.param(u);
    let b = tape.param(b);
    let a = tape.matmul_t(m, w)?;
    let c = tape.matmul_t(x, u)?;
    let s = tape.add(a, c)?;
    let s = tape.add(s, b)?;
    tape.sigmoid(s)
}
