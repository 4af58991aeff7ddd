//! Model pieces against straight-line scalar re-implementations.

use sbr_core::data::{Batch, LabeledExample};
use sbr_core::gradcheck::{check_inputs, DEFAULT_STEP, OP_TOLERANCE};
use sbr_core::graph::EdgeWeighting;
use sbr_core::model::{
    assemble_sequence, ggnn_propagate, multi_head_attention, positional_encoding, readout,
    target_attention, target_attentive_scores, transformer_block, SeqMask,
};
use sbr_core::{Model, ModelConfig, ParamId, Rng, SessionGraph, Tape, Tensor};

type Mat = Vec<Vec<f64>>;

fn rows(t: &Tensor<f64>) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// `W x` for `W` stored `[out × in]`.
fn lin(w: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|o| w.row(o).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn vadd(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn layer_norm(x: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    x.iter().map(|v| (v - mu) / (var + eps).sqrt()).collect()
}

fn max_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

/// Random model whose biases and gains are also randomized, so oracles
/// exercise every parameter.
fn random_model(cfg: ModelConfig, seed: u64) -> Model<f64> {
    let mut rng = Rng::new(seed);
    let mut model = Model::new(cfg, &mut rng).unwrap();
    let ids: Vec<ParamId> = model.params().ids().collect();
    for id in ids {
        if model.params().name(id) == "embedding" {
            continue;
        }
        let t = model.params_mut().get_mut(id);
        if t.rank() == 1 {
            for v in t.data_mut() {
                *v += rng.uniform_range(-0.5, 0.5);
            }
        }
    }
    model
}

fn param(model: &Model<f64>, id: ParamId) -> &Tensor<f64> {
    model.params().get(id)
}

fn random_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform_range(-1.0, 1.0))
}

fn ggnn_oracle(model: &Model<f64>, g: &SessionGraph, x0: Mat, steps: usize) -> Mat {
    let p = &model.ids().ggnn;
    let n = g.node_count();
    let mut x = x0;
    for _ in 0..steps {
        let hin: Mat = x.iter().map(|xi| lin(param(model, p.h_in), xi)).collect();
        let hout: Mat = x.iter().map(|xi| lin(param(model, p.h_out), xi)).collect();
        let mut next = Vec::new();
        for i in 0..n {
            let d = x[i].len();
            let mut a = param(model, p.b_in).data().to_vec();
            let mut b = param(model, p.b_out).data().to_vec();
            for j in 0..n {
                for c in 0..d {
                    a[c] += g.a_in_row(i)[j] * hin[j][c];
                    b[c] += g.a_out_row(i)[j] * hout[j][c];
                }
            }
            let m: Vec<f64> = a.into_iter().chain(b).collect();
            let gate = |w: ParamId, u: ParamId, bias: ParamId, xin: &[f64]| -> Vec<f64> {
                let s = vadd(
                    &vadd(&lin(param(model, w), &m), &lin(param(model, u), xin)),
                    param(model, bias).data(),
                );
                s
            };
            let z: Vec<f64> = gate(p.w_z, p.u_z, p.b_z, &x[i]).into_iter().map(sig).collect();
            let r: Vec<f64> = gate(p.w_r, p.u_r, p.b_r, &x[i]).into_iter().map(sig).collect();
            let rx: Vec<f64> = r.iter().zip(&x[i]).map(|(a, b)| a * b).collect();
            let cand: Vec<f64> = gate(p.w_o, p.u_o, p.b_o, &rx).into_iter().map(f64::tanh).collect();
            next.push(
                (0..d)
                    .map(|c| (1.0 - z[c]) * x[i][c] + z[c] * cand[c])
                    .collect(),
            );
        }
        x = next;
    }
    x
}

fn run_ggnn(model: &Model<f64>, g: &SessionGraph, steps: usize) -> (Mat, Mat) {
    let mut tape = Tape::with_params(model.params());
    let table = tape.param(model.ids().embedding);
    let ids: Vec<usize> = g.nodes().iter().map(|&i| i as usize).collect();
    let x = tape.gather_rows(table, &ids).unwrap();
    let x0 = rows(tape.value(x));
    let a_in = tape.constant(g.a_in_tensor());
    let a_out = tape.constant(g.a_out_tensor());
    let y = ggnn_propagate(&mut tape, x, a_in, a_out, &model.ids().ggnn, steps).unwrap();
    (x0, rows(tape.value(y)))
}

#[test]
fn ggnn_matches_scalar_oracle() {
    let model = random_model(ModelConfig::new(6, 4, 2), 3);
    for prefix in [&[1u32, 2, 3, 2][..], &[4, 5, 4, 6, 6], &[3]] {
        let g = SessionGraph::build(prefix).unwrap();
        for steps in [1, 2] {
            let (x0, got) = run_ggnn(&model, &g, steps);
            let want = ggnn_oracle(&model, &g, x0, steps);
            assert!(max_diff(&got, &want) < 1e-10, "{prefix:?} steps {steps}");
        }
    }
}

#[test]
fn closed_update_gate_is_identity() {
    let mut model = random_model(ModelConfig::new(6, 4, 2), 4);
    let p = model.ids().ggnn.clone();
    for id in [p.w_z, p.u_z] {
        model.params_mut().get_mut(id).data_mut().fill(0.0);
    }
    model.params_mut().get_mut(p.b_z).data_mut().fill(-1e3);
    let g = SessionGraph::build(&[1, 2, 3, 1]).unwrap();
    let (x0, got) = run_ggnn(&model, &g, 3);
    assert_eq!(x0, got);
}

#[test]
fn positional_encoding_values() {
    let pe = positional_encoding::<f64>(5, 6).unwrap();
    assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    assert!((pe.at(1, 0) - 0.8414709848).abs() < 1e-10);
    assert!((pe.at(3, 3) - (3.0 / 10000f64.powf(2.0 / 6.0)).cos()).abs() < 1e-15);
    assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert!(positional_encoding::<f64>(3, 5).is_err());
}

fn attention_oracle(model: &Model<f64>, h: &Mat, len: usize, heads: usize) -> Mat {
    let b = &model.ids().blocks[0];
    let d = h[0].len();
    let dk = d / heads;
    let q: Mat = h.iter().map(|x| lin(param(model, b.w_q), x)).collect();
    let k: Mat = h.iter().map(|x| lin(param(model, b.w_k), x)).collect();
    let v: Mat = h.iter().map(|x| lin(param(model, b.w_v), x)).collect();
    let mut out = Vec::new();
    for t in 0..h.len() {
        if t >= len {
            out.push(vec![0.0; d]);
            continue;
        }
        let mut cat = Vec::new();
        for head in 0..heads {
            let r = head * dk..(head + 1) * dk;
            let scores: Vec<f64> = (0..len)
                .map(|j| dot(&q[t][r.clone()], &k[j][r.clone()]) / (dk as f64).sqrt())
                .collect();
            let a = softmax(&scores);
            for c in r.clone() {
                cat.push((0..len).map(|j| a[j] * v[j][c]).sum());
            }
        }
        out.push(lin(param(model, b.w_out), &cat));
    }
    out
}

fn run_attention(model: &Model<f64>, h: &Tensor<f64>, len: usize) -> Mat {
    let mut tape = Tape::with_params(model.params());
    let x = tape.constant(h.clone());
    let mask = SeqMask::new(&mut tape, len, h.rows());
    let y = multi_head_attention(
        &mut tape,
        x,
        &mask,
        &model.ids().blocks[0],
        model.config().heads,
    )
    .unwrap();
    rows(tape.value(y))
}

#[test]
fn attention_matches_naive_loops() {
    let model = random_model(ModelConfig::new(5, 8, 2), 8);
    let mut rng = Rng::new(80);
    let h = random_tensor(&mut rng, &[4, 8]);
    for len in [4, 3, 1] {
        let got = run_attention(&model, &h, len);
        let want = attention_oracle(&model, &rows(&h), len, 2);
        assert!(max_diff(&got, &want) < 1e-10, "len {len}");
    }
}

#[test]
fn attention_special_cases() {
    let model = random_model(ModelConfig::new(5, 4, 1), 9);
    let b = &model.ids().blocks[0];
    let mut rng = Rng::new(90);
    let h = random_tensor(&mut rng, &[1, 4]);
    let got = run_attention(&model, &h, 1);
    let want = lin(param(&model, b.w_out), &lin(param(&model, b.w_v), h.row(0)));
    assert!(max_diff(&got, &vec![want]) < 1e-14);

    let row = random_tensor(&mut rng, &[1, 4]);
    let twin = Tensor::from_fn(&[2, 4], |k| row.data()[k % 4]);
    let got = run_attention(&model, &twin, 2);
    assert_eq!(got[0], got[1]);
}

fn zero_sublayers(model: &mut Model<f64>) {
    let b = model.ids().blocks[0].clone();
    for id in [
        b.w_q, b.w_k, b.w_v, b.w_out, b.ffn_w1, b.ffn_b1, b.ffn_w2, b.ffn_b2,
    ] {
        model.params_mut().get_mut(id).data_mut().fill(0.0);
    }
    for id in [b.ln1_gamma, b.ln2_gamma] {
        model.params_mut().get_mut(id).data_mut().fill(1.0);
    }
    for id in [b.ln1_beta, b.ln2_beta] {
        model.params_mut().get_mut(id).data_mut().fill(0.0);
    }
}

fn run_block(model: &Model<f64>, h: &Tensor<f64>, len: usize) -> Mat {
    let mut tape = Tape::with_params(model.params());
    let x = tape.constant(h.clone());
    let mask = SeqMask::new(&mut tape, len, h.rows());
    let y = transformer_block(
        &mut tape,
        x,
        &mask,
        &model.ids().blocks[0],
        model.config(),
        None,
    )
    .unwrap();
    assert_eq!(tape.shape(y), h.shape());
    rows(tape.value(y))
}

#[test]
fn zeroed_block_is_double_layer_norm() {
    let mut model = random_model(ModelConfig::new(5, 6, 2), 10);
    zero_sublayers(&mut model);
    let mut rng = Rng::new(100);
    let h = random_tensor(&mut rng, &[3, 6]);
    let got = run_block(&model, &h, 3);
    let want: Mat = rows(&h)
        .iter()
        .map(|r| layer_norm(&layer_norm(r, 1e-5), 1e-5))
        .collect();
    assert!(max_diff(&got, &want) < 1e-12);
}

#[test]
fn block_is_permutation_equivariant_without_mask() {
    let model = random_model(ModelConfig::new(5, 8, 2), 11);
    let mut rng = Rng::new(110);
    let h = random_tensor(&mut rng, &[5, 8]);
    let perm = [3, 0, 4, 1, 2];
    let hp = Tensor::from_fn(&[5, 8], |k| h.at(perm[k / 8], k % 8));
    let out = run_block(&model, &h, 5);
    let out_p = run_block(&model, &hp, 5);
    let want: Mat = perm.iter().map(|&i| out[i].clone()).collect();
    assert!(max_diff(&out_p, &want) < 1e-9);
}

#[test]
fn assembly_follows_alias_and_accumulates_gradients() {
    let mut tape = Tape::new();
    let mut rng = Rng::new(12);
    let nodes = tape.constant(random_tensor(&mut rng, &[2, 3]));
    let h = assemble_sequence(&mut tape, nodes, &[0, 1, 0], 3, None).unwrap();
    let hv = tape.value(h);
    assert_eq!(hv.row(0), hv.row(2));

    let nodes = random_tensor(&mut rng, &[3, 2]);
    let mut tape = Tape::new();
    let v = tape.constant(nodes.clone());
    let h = assemble_sequence(&mut tape, v, &[2, 0, 1], 3, None).unwrap();
    assert_eq!(tape.value(h).row(0), nodes.row(2));

    let report = check_inputs(
        &[random_tensor(&mut rng, &[2, 4])],
        |tape, v| {
            let pe = positional_encoding(3, 4)?;
            let h = assemble_sequence(tape, v[0], &[0, 1, 0], 5, Some(&pe))?;
            let w = tape.constant(Tensor::from_fn(&[5, 4], |k| (k as f64 * 0.37).sin()));
            let p = tape.mul(h, w)?;
            tape.sum(p)
        },
        DEFAULT_STEP,
        OP_TOLERANCE,
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report.mismatches);
}

fn readout_oracle(model: &Model<f64>, h: &Mat, len: usize) -> (Vec<f64>, Vec<f64>) {
    let p = &model.ids().readout;
    let s_local = h[len - 1].clone();
    let w1s = lin(param(model, p.w1), &s_local);
    let mut s_global = vec![0.0; s_local.len()];
    for t in 0..len {
        let pre = vadd(&vadd(&w1s, &lin(param(model, p.w2), &h[t])), param(model, p.c).data());
        let gate: Vec<f64> = pre.into_iter().map(sig).collect();
        let alpha = dot(param(model, p.q).data(), &gate);
        for (c, s) in s_global.iter_mut().enumerate() {
            *s += alpha * h[t][c];
        }
    }
    (s_local, s_global)
}

fn run_readout(model: &Model<f64>, h: &Tensor<f64>, len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut tape = Tape::with_params(model.params());
    let x = tape.constant(h.clone());
    let mask = SeqMask::new(&mut tape, len, h.rows());
    let (l, g) = readout(&mut tape, x, &mask, &model.ids().readout, false).unwrap();
    (tape.value(l).data().to_vec(), tape.value(g).data().to_vec())
}

#[test]
fn readout_matches_oracle_and_ignores_padding() {
    let model = random_model(ModelConfig::new(5, 4, 2), 13);
    let mut rng = Rng::new(130);
    let h = random_tensor(&mut rng, &[3, 4]);
    let (l, g) = run_readout(&model, &h, 3);
    let (wl, wg) = readout_oracle(&model, &rows(&h), 3);
    assert!(max_diff(&vec![l.clone(), g.clone()], &vec![wl, wg]) < 1e-12);

    let padded = Tensor::from_fn(&[5, 4], |k| if k < 12 { h.data()[k] } else { 0.7 });
    let (pl, pg) = run_readout(&model, &padded, 3);
    assert!(max_diff(&vec![l, g], &vec![pl, pg]) < 1e-12);

    let single = Tensor::from_fn(&[1, 4], |k| h.data()[k]);
    let (l1, g1) = run_readout(&model, &single, 1);
    assert_eq!(l1, h.row(0));
    let (_, wg1) = readout_oracle(&model, &rows(&single), 1);
    assert!(max_diff(&vec![g1], &vec![wg1]) < 1e-12);
}

#[test]
fn zero_query_gives_zero_global_vector() {
    let mut model = random_model(ModelConfig::new(5, 4, 2), 14);
    let q = model.ids().readout.q;
    model.params_mut().get_mut(q).data_mut().fill(0.0);
    let h = random_tensor(&mut Rng::new(140), &[3, 4]);
    let (_, g) = run_readout(&model, &h, 3);
    assert!(g.iter().all(|&v| v == 0.0));
}

fn target_oracle(model: &Model<f64>, h: &Mat, len: usize, s_local: &[f64], s_global: &[f64]) -> Vec<f64> {
    let p = &model.ids().readout;
    let table = param(model, model.ids().embedding);
    let w3 = param(model, p.w3);
    let d = s_local.len();
    (1..table.rows())
        .map(|v| {
            let e = table.row(v);
            let scores: Vec<f64> = (0..len)
                .map(|t| dot(e, &lin(param(model, p.w_t), &h[t])))
                .collect();
            let beta = softmax(&scores);
            let s_target: Vec<f64> = (0..d)
                .map(|c| (0..len).map(|t| beta[t] * h[t][c]).sum())
                .collect();
            let cat: Vec<f64> = s_local
                .iter()
                .chain(s_global)
                .chain(&s_target)
                .copied()
                .collect();
            dot(e, &lin(w3, &cat))
        })
        .collect()
}

fn run_target(model: &Model<f64>, h: &Tensor<f64>, len: usize, sl: &[f64], sg: &[f64]) -> (Vec<f64>, Mat) {
    let d = sl.len();
    let mut tape = Tape::with_params(model.params());
    let x = tape.constant(h.clone());
    let mask = SeqMask::new(&mut tape, len, h.rows());
    let l = tape.constant(Tensor::new(&[1, d], sl.to_vec()).unwrap());
    let g = tape.constant(Tensor::new(&[1, d], sg.to_vec()).unwrap());
    let table = tape.param(model.ids().embedding);
    let logits =
        target_attentive_scores(&mut tape, x, &mask, l, g, &model.ids().readout, table).unwrap();
    let beta = target_attention(&mut tape, x, &mask, &model.ids().readout, table).unwrap();
    (tape.value(logits).data().to_vec(), rows(tape.value(beta)))
}

#[test]
fn target_scores_match_per_candidate_loop() {
    let model = random_model(ModelConfig::new(5, 4, 2), 15);
    let mut rng = Rng::new(150);
    let h = random_tensor(&mut rng, &[3, 4]);
    let sl: Vec<f64> = (0..4).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let sg: Vec<f64> = (0..4).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let (got, beta) = run_target(&model, &h, 3, &sl, &sg);
    assert_eq!(got.len(), 5);
    let want = target_oracle(&model, &rows(&h), 3, &sl, &sg);
    assert!(max_diff(&vec![got.clone()], &vec![want]) < 1e-8);
    for row in &beta {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    let padded = Tensor::from_fn(&[5, 4], |k| if k < 12 { h.data()[k] } else { -0.3 });
    let (pg, pbeta) = run_target(&model, &padded, 3, &sl, &sg);
    assert!(max_diff(&vec![got], &vec![pg]) < 1e-12);
    for row in &pbeta {
        assert!((row[..3].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(row[3..].iter().all(|&b| b == 0.0));
    }
}

#[test]
fn target_attention_special_cases() {
    let mut model = random_model(ModelConfig::new(5, 4, 2), 16);
    let mut rng = Rng::new(160);
    let sl = [0.1, -0.2, 0.3, 0.4];
    let sg = [0.5, 0.0, -0.1, 0.2];

    let single = random_tensor(&mut rng, &[1, 4]);
    let (got, beta) = run_target(&model, &single, 1, &sl, &sg);
    assert!(beta.iter().all(|r| r == &[1.0]));
    let want = target_oracle(&model, &rows(&single), 1, &sl, &sg);
    assert!(max_diff(&vec![got], &vec![want]) < 1e-12);

    let w_t = model.ids().readout.w_t;
    model.params_mut().get_mut(w_t).data_mut().fill(0.0);
    let h = random_tensor(&mut rng, &[4, 4]);
    let (_, beta) = run_target(&model, &h, 3, &sl, &sg);
    for row in beta {
        for &b in &row[..3] {
            assert!((b - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(row[3], 0.0);
    }
}

fn example(prefix: &[u32], label: u32) -> LabeledExample {
    LabeledExample {
        prefix: prefix.to_vec(),
        label,
    }
}

fn logits<T: sbr_core::Real>(model: &Model<T>, examples: &[LabeledExample]) -> Vec<Vec<f64>> {
    let refs: Vec<&LabeledExample> = examples.iter().collect();
    let batch = Batch::from_examples(&refs, EdgeWeighting::Binary).unwrap();
    let mut tape = Tape::with_params(model.params());
    let out = model.forward(&mut tape, &batch, None).unwrap();
    let t = tape.value(out);
    assert_eq!(t.shape(), &[examples.len(), model.config().num_items]);
    (0..t.rows())
        .map(|r| t.row(r).iter().map(|v| v.as_f64()).collect())
        .collect()
}

#[test]
fn padding_extension_leaves_logits_unchanged() {
    let short = example(&[3, 1, 3], 2);
    let long = example(&[4, 5, 6, 7, 1, 2, 8, 9], 3);
    let model64 = random_model(ModelConfig::new(12, 8, 2), 17);
    let model32 = model64.cast::<f32>();
    for pad_diff in [
        max_diff(
            &logits(&model64, std::slice::from_ref(&short)),
            &logits(&model64, &[short.clone(), long.clone()])[..1].to_vec(),
        ),
        max_diff(
            &logits(&model32, std::slice::from_ref(&short)),
            &logits(&model32, &[short.clone(), long.clone()])[..1].to_vec(),
        ),
    ] {
        assert!(pad_diff <= 1e-6, "{pad_diff}");
    }
}

#[test]
fn identical_rows_get_identical_logits() {
    let model = random_model(ModelConfig::new(9, 8, 4), 18);
    let e = example(&[1, 2, 3, 2], 4);
    let out = logits(&model, &[e.clone(), example(&[5, 6], 7), e]);
    assert_eq!(out[0], out[2]);
}

#[test]
fn disabled_stages_are_skipped_exactly() {
    let mut cfg = ModelConfig::new(9, 8, 2);
    cfg.use_gnn = false;
    cfg.use_pe = false;
    cfg.use_transformer = false;
    let model = random_model(cfg, 19);
    let e = example(&[1, 2, 3, 2], 4);
    let got = logits(&model, std::slice::from_ref(&e));

    let mut tape = Tape::with_params(model.params());
    let g = SessionGraph::build(&e.prefix).unwrap();
    let table = tape.param(model.ids().embedding);
    let ids: Vec<usize> = g.nodes().iter().map(|&i| i as usize).collect();
    let x = tape.gather_rows(table, &ids).unwrap();
    let h = assemble_sequence(&mut tape, x, g.alias(), 4, None).unwrap();
    let mask = SeqMask::new(&mut tape, 4, 4);
    let (l, s) = readout(&mut tape, h, &mask, &model.ids().readout, false).unwrap();
    let out =
        target_attentive_scores(&mut tape, h, &mask, l, s, &model.ids().readout, table).unwrap();
    assert_eq!(got[0], tape.value(out).data().to_vec());
}

#[test]
fn init_follows_layout_rules() {
    let model = Model::<f64>::new(ModelConfig::new(10, 6, 3), &mut Rng::new(20)).unwrap();
    let bound = 1.0 / 6f64.sqrt();
    for (name, t) in model.params().iter() {
        if name == "embedding" {
            assert!(t.row(0).iter().all(|&v| v == 0.0));
            assert!(t.data()[6..].iter().all(|v| v.abs() <= bound));
        } else if name.ends_with("gamma") {
            assert!(t.data().iter().all(|&v| v == 1.0));
        } else if name.ends_with("beta") || name.contains(".b") || name == "readout.c" {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        } else {
            assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
            assert!(t.data().iter().any(|&v| v != 0.0), "{name}");
        }
    }
    let again = Model::<f64>::new(ModelConfig::new(10, 6, 3), &mut Rng::new(20)).unwrap();
    assert_eq!(model.params().tensors(), again.params().tensors());
}

#[test]
fn config_validation() {
    assert!(ModelConfig::new(10, 6, 4).validate().is_err());
    assert!(ModelConfig::new(10, 5, 5).validate().is_err());
    let mut c = ModelConfig::new(10, 5, 5);
    c.use_pe = false;
    assert!(c.validate().is_ok());
    assert!(ModelConfig::new(0, 4, 2).validate().is_err());
    assert_eq!(ModelConfig::new(0, 6, 4).problems().len(), 2);
}

#[test]
fn from_params_checks_layout() {
    let model = Model::<f64>::new(ModelConfig::new(10, 4, 2), &mut Rng::new(21)).unwrap();
    let again = Model::from_params(model.config().clone(), model.params().clone()).unwrap();
    assert_eq!(again.params().tensors(), model.params().tensors());
    assert!(Model::from_params(ModelConfig::new(11, 4, 2), model.params().clone()).is_err());
}
