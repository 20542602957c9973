//! Encoder behaviour checked against plain-arithmetic reimplementations.

use std::collections::BTreeSet;

use factprobe::factmodels::{
    lbilstm_encode, predict_factuality, tbilstm_encode, DepTree, Direction, Encoder,
    EncoderParams, GateParams, ModelConfig, ModelKind, RegressionHead, SentenceInput, Vocabulary,
};
use factprobe::gradcore::{grad_check, Activation, Graph, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- straight-line oracle -------------------------------------------------

struct Gates {
    w: [Vec<Vec<f64>>; 4], // f, i, o, c
    b: [Vec<f64>; 4],
}

fn read_gates(store: &ParamStore, g: &GateParams) -> Gates {
    let mat = |id| {
        let t = store.get(id);
        let (r, c) = (t.shape()[0], t.shape()[1]);
        (0..r).map(|i| t.values()[i * c..(i + 1) * c].to_vec()).collect::<Vec<_>>()
    };
    let vec = |id| store.get(id).values().to_vec();
    Gates {
        w: [mat(g.w_f), mat(g.w_i), mat(g.w_o), mat(g.w_c)],
        b: [vec(g.b_f), vec(g.b_i), vec(g.b_o), vec(g.b_c)],
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn act(g: Activation, x: f64) -> f64 {
    match g {
        Activation::Tanh => x.tanh(),
        Activation::Relu => x.max(0.0),
        Activation::Sigmoid => sig(x),
    }
}

fn gate_pre(gates: &Gates, k: usize, h: &[f64], x: &[f64]) -> Vec<f64> {
    gates.w[k]
        .iter()
        .zip(&gates.b[k])
        .map(|(row, b)| {
            let mut s = *b;
            for (j, hv) in h.iter().enumerate() {
                s += row[j] * hv;
            }
            for (j, xv) in x.iter().enumerate() {
                s += row[h.len() + j] * xv;
            }
            s
        })
        .collect()
}

/// One linear-chain step written out coordinate by coordinate.
fn oracle_step(gates: &Gates, g: Activation, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let f = gate_pre(gates, 0, h_prev, x);
    let i = gate_pre(gates, 1, h_prev, x);
    let o = gate_pre(gates, 2, h_prev, x);
    let cc = gate_pre(gates, 3, h_prev, x);
    let n = h_prev.len();
    let mut c = vec![0.0; n];
    let mut h = vec![0.0; n];
    for k in 0..n {
        c[k] = sig(i[k]) * act(g, cc[k]) + sig(f[k]) * c_prev[k];
        h[k] = sig(o[k]) * act(g, c[k]);
    }
    (h, c)
}

/// Full stacked bidirectional oracle: returns `[layer][dir][t]` hidden vectors.
fn oracle_lbilstm(store: &ParamStore, p: &EncoderParams, xs: &[Vec<f64>]) -> Vec<[Vec<Vec<f64>>; 2]> {
    let n = xs.len();
    let hd = p.hidden_dim;
    let mut out: Vec<[Vec<Vec<f64>>; 2]> = Vec::new();
    let mut inputs: Vec<Vec<f64>> = xs.to_vec();
    for l in 0..p.num_layers() {
        let mut layer: [Vec<Vec<f64>>; 2] = [vec![vec![]; n], vec![vec![]; n]];
        for (d, dir) in [Direction::Forward, Direction::Backward].into_iter().enumerate() {
            let gates = read_gates(store, p.gates(l, dir));
            let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
            let order: Vec<usize> = if d == 0 { (0..n).collect() } else { (0..n).rev().collect() };
            for t in order {
                let (h2, c2) = oracle_step(&gates, p.nonlinearity, &inputs[t], &h, &c);
                layer[d][t] = h2.clone();
                h = h2;
                c = c2;
            }
        }
        inputs = (0..n)
            .map(|t| [layer[0][t].clone(), layer[1][t].clone()].concat())
            .collect();
        out.push(layer);
    }
    out
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize, e: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..e).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn randomize_biases(store: &mut ParamStore, p: &EncoderParams, rng: &mut ChaCha8Rng) {
    for l in &p.layers {
        for g in l {
            for id in [g.b_f, g.b_i, g.b_o, g.b_c] {
                for v in store.get_mut(id).values_mut() {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
        }
    }
}

fn encoder(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    e: usize,
    h: usize,
    layers: usize,
    g: Activation,
) -> EncoderParams {
    let p = EncoderParams::init(store, prefix, e, h, layers, g, rng).unwrap();
    randomize_biases(store, &p, rng);
    p
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---- linear chain --------------------------------------------------------

#[test]
fn lbilstm_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let p = encoder(&mut store, &mut rng, "lin", 5, 4, 2, Activation::Tanh);
    let xs = random_inputs(&mut rng, 3, 5);
    let mut g = Graph::new();
    let vars: Vec<_> = xs.iter().map(|x| g.constant(x.clone())).collect();
    let states = lbilstm_encode(&mut g, &store, &p, &vars).unwrap();
    let oracle = oracle_lbilstm(&store, &p, &xs);
    for l in 0..2 {
        for (d, dir) in [Direction::Forward, Direction::Backward].into_iter().enumerate() {
            for t in 0..3 {
                let got = g.value(states.layer(l, dir)[t]);
                assert!(max_abs_diff(got, &oracle[l][d][t]) < 1e-12);
            }
        }
    }
}

#[test]
fn zero_weights_give_zero_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let p = EncoderParams::init(&mut store, "lin", 3, 4, 2, Activation::Tanh, &mut rng).unwrap();
    for id in p.ids() {
        store.get_mut(id).values_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut g = Graph::new();
    let xs: Vec<_> = random_inputs(&mut rng, 4, 3).into_iter().map(|x| g.constant(x)).collect();
    let states = lbilstm_encode(&mut g, &store, &p, &xs).unwrap();
    for l in 0..2 {
        for dir in [Direction::Forward, Direction::Backward] {
            for &h in states.layer(l, dir) {
                assert!(g.value(h).iter().all(|v| *v == 0.0));
            }
        }
    }
}

#[test]
fn single_token_with_tied_directions_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let p = encoder(&mut store, &mut rng, "lin", 3, 4, 2, Activation::Tanh);
    for l in &p.layers {
        let (f, b) = (l[0], l[1]);
        for (src, dst) in f.ids().into_iter().zip(b.ids()) {
            let vals = store.get(src).values().to_vec();
            store.get_mut(dst).values_mut().copy_from_slice(&vals);
        }
    }
    let mut g = Graph::new();
    let x = g.constant(vec![0.3, -0.7, 0.2]);
    let states = lbilstm_encode(&mut g, &store, &p, &[x]).unwrap();
    for l in 0..2 {
        let f = g.value(states.layer(l, Direction::Forward)[0]);
        let b = g.value(states.layer(l, Direction::Backward)[0]);
        assert_eq!(f, b);
    }
}

#[test]
fn empty_sequence_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let p = encoder(&mut store, &mut rng, "lin", 3, 4, 1, Activation::Tanh);
    let mut g = Graph::new();
    assert!(lbilstm_encode(&mut g, &store, &p, &[]).is_err());
}

// ---- tree -----------------------------------------------------------------

/// Copies every tensor of `from` into the same-shaped tensor of `to`.
fn tie(store: &mut ParamStore, from: &EncoderParams, to: &EncoderParams) {
    for (a, b) in from.ids().into_iter().zip(to.ids()) {
        let vals = store.get(a).values().to_vec();
        store.get_mut(b).values_mut().copy_from_slice(&vals);
    }
}

#[test]
fn chain_tree_equals_linear_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in [1, 2, 5] {
        let mut store = ParamStore::new();
        let lin = encoder(&mut store, &mut rng, "lin", 4, 3, 2, Activation::Tanh);
        let tree = encoder(&mut store, &mut rng, "tree", 4, 3, 2, Activation::Tanh);
        tie(&mut store, &lin, &tree);
        let mut g = Graph::new();
        let xs: Vec<_> = random_inputs(&mut rng, n, 4).into_iter().map(|x| g.constant(x)).collect();
        let a = lbilstm_encode(&mut g, &store, &lin, &xs).unwrap();
        let b = tbilstm_encode(&mut g, &store, &tree, &xs, &DepTree::chain(n)).unwrap();
        for l in 0..2 {
            for dir in [Direction::Forward, Direction::Backward] {
                for t in 0..n {
                    let d = max_abs_diff(g.value(a.layer(l, dir)[t]), g.value(b.layer(l, dir)[t]));
                    assert!(d < 1e-12, "n={n} l={l} {dir:?} t={t}: {d}");
                }
            }
        }
    }
}

#[test]
fn leaf_state_depends_on_input_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let p = encoder(&mut store, &mut rng, "tree", 3, 4, 1, Activation::Relu);
    let xs = random_inputs(&mut rng, 3, 3);
    let mut g = Graph::new();
    let vars: Vec<_> = xs.iter().map(|x| g.constant(x.clone())).collect();
    // 0 and 2 are leaves under 1
    let tree = DepTree::new(vec![Some(1), None, Some(1)]).unwrap();
    let states = tbilstm_encode(&mut g, &store, &p, &vars, &tree).unwrap();
    let gates = read_gates(&store, p.gates(0, Direction::Forward));
    let zero = vec![0.0; 4];
    let (h0, _) = oracle_step(&gates, Activation::Relu, &xs[0], &zero, &zero);
    assert!(max_abs_diff(g.value(states.layer(0, Direction::Forward)[0]), &h0) < 1e-14);
}

/// Child-sum step with explicit per-child forget gates.
fn oracle_child_sum(
    gates: &Gates,
    g: Activation,
    x: &[f64],
    prev: &[(Vec<f64>, Vec<f64>)],
    hd: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut h_sum = vec![0.0; hd];
    for (h, _) in prev {
        for k in 0..hd {
            h_sum[k] += h[k];
        }
    }
    let i = gate_pre(gates, 1, &h_sum, x);
    let o = gate_pre(gates, 2, &h_sum, x);
    let cc = gate_pre(gates, 3, &h_sum, x);
    let mut c: Vec<f64> = (0..hd).map(|k| sig(i[k]) * act(g, cc[k])).collect();
    for (h_k, c_k) in prev {
        let f = gate_pre(gates, 0, h_k, x);
        for k in 0..hd {
            c[k] += sig(f[k]) * c_k[k];
        }
    }
    let h = (0..hd).map(|k| sig(o[k]) * act(g, c[k])).collect();
    (h, c)
}

#[test]
fn two_children_match_hand_rolled_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut store = ParamStore::new();
    let p = encoder(&mut store, &mut rng, "tree", 3, 4, 1, Activation::Relu);
    let xs = random_inputs(&mut rng, 3, 3);
    let mut g = Graph::new();
    let vars: Vec<_> = xs.iter().map(|x| g.constant(x.clone())).collect();
    let tree = DepTree::new(vec![Some(1), None, Some(1)]).unwrap();
    let states = tbilstm_encode(&mut g, &store, &p, &vars, &tree).unwrap();

    let up = read_gates(&store, p.gates(0, Direction::Forward));
    let leaf0 = oracle_child_sum(&up, Activation::Relu, &xs[0], &[], 4);
    let leaf2 = oracle_child_sum(&up, Activation::Relu, &xs[2], &[], 4);
    let root = oracle_child_sum(&up, Activation::Relu, &xs[1], &[leaf0.clone(), leaf2.clone()], 4);
    let fwd = states.layer(0, Direction::Forward);
    assert!(max_abs_diff(g.value(fwd[0]), &leaf0.0) < 1e-12);
    assert!(max_abs_diff(g.value(fwd[2]), &leaf2.0) < 1e-12);
    assert!(max_abs_diff(g.value(fwd[1]), &root.0) < 1e-12);

    let down = read_gates(&store, p.gates(0, Direction::Backward));
    let top = oracle_child_sum(&down, Activation::Relu, &xs[1], &[], 4);
    let d0 = oracle_child_sum(&down, Activation::Relu, &xs[0], &[top.clone()], 4);
    let bwd = states.layer(0, Direction::Backward);
    assert!(max_abs_diff(g.value(bwd[1]), &top.0) < 1e-12);
    assert!(max_abs_diff(g.value(bwd[0]), &d0.0) < 1e-12);
}

#[test]
fn sibling_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let mut store = ParamStore::new();
        let p = encoder(&mut store, &mut rng, "tree", 3, 4, 2, Activation::Relu);
        let xs = random_inputs(&mut rng, 4, 3);
        // root 0 with children 1, 2, 3
        let tree = DepTree::new(vec![None, Some(0), Some(0), Some(0)]).unwrap();
        let mut g = Graph::new();
        let a_vars: Vec<_> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let a = tbilstm_encode(&mut g, &store, &p, &a_vars, &tree).unwrap();
        // swap the tokens at siblings 1 and 3
        let perm = [0, 3, 2, 1];
        let b_vars: Vec<_> = perm.iter().map(|&i| g.constant(xs[i].clone())).collect();
        let b = tbilstm_encode(&mut g, &store, &p, &b_vars, &tree).unwrap();
        for l in 0..2 {
            for dir in [Direction::Forward, Direction::Backward] {
                for t in 0..4 {
                    let d = max_abs_diff(
                        g.value(a.layer(l, dir)[t]),
                        g.value(b.layer(l, dir)[perm[t]]),
                    );
                    assert!(d < 1e-12);
                }
            }
        }
    }
}

#[test]
fn tree_size_mismatch_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let p = encoder(&mut store, &mut rng, "tree", 3, 2, 1, Activation::Relu);
    let mut g = Graph::new();
    let x = g.constant(vec![0.0; 3]);
    assert!(tbilstm_encode(&mut g, &store, &p, &[x, x], &DepTree::chain(3)).is_err());
}

// ---- full models ------------------------------------------------------------

fn sentence() -> SentenceInput {
    let tokens: Vec<String> = ["Someone", "faked", "something", "."].iter().map(|s| s.to_string()).collect();
    // faked is the root; Someone, something and . attach to it
    let tree = DepTree::new(vec![Some(1), None, Some(1), Some(1)]).unwrap();
    SentenceInput::new(tokens, tree, 1).unwrap()
}

fn full_model(kind: ModelKind, seed: u64) -> (ParamStore, Encoder, RegressionHead) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let cfg = ModelConfig::new(kind).with_dims(8, 8);
    let vocab = Vocabulary::from_words(["Someone", "faked", "something", "."]);
    let enc = Encoder::init(&mut store, cfg, vocab, &mut rng).unwrap();
    let head = RegressionHead::init(&mut store, "head", enc.output_dim(), 8, &mut rng).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).contains(".b") {
            for v in store.get_mut(id).values_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
        }
    }
    (store, enc, head)
}

#[test]
fn grad_check_full_models() {
    let input = sentence();
    for kind in [ModelKind::Linear, ModelKind::Tree, ModelKind::Hybrid] {
        let (mut store, enc, head) = full_model(kind, 41);
        let report = grad_check(&mut store, 1e-5, |g, s| {
            let h = enc.encode_at_target(g, s, &input, &BTreeSet::new())?;
            let y = predict_factuality(g, s, &head, h)?;
            Ok::<_, factprobe::factmodels::ModelError>(g.smooth_l1(y, 1.3)?)
        })
        .unwrap();
        assert!(report.max_discrepancy < 1e-4, "{kind}: {report:?}");
    }
}

#[test]
fn every_weight_receives_gradient() {
    // top-layer forget gates only act at a target with both a parent and a child
    let tokens: Vec<String> = ["Someone", "faked", "something", "."].iter().map(|s| s.to_string()).collect();
    let tree = DepTree::new(vec![Some(1), None, Some(1), Some(2)]).unwrap();
    let input = SentenceInput::new(tokens, tree, 2).unwrap();
    for kind in [ModelKind::Linear, ModelKind::Tree, ModelKind::Hybrid] {
        let (mut store, enc, head) = full_model(kind, 43);
        let mut g = Graph::new();
        let h = enc.encode_at_target(&mut g, &store, &input, &BTreeSet::new()).unwrap();
        let y = predict_factuality(&mut g, &store, &head, h).unwrap();
        let out = g.reduce_sum(y);
        g.backward(out).unwrap();
        g.export_grads(&mut store);
        for (_, name, t) in store.iter() {
            assert!(t.grad().iter().all(|v| v.is_finite()));
            assert!(t.grad().iter().any(|v| *v != 0.0), "{kind}: no gradient reaches {name}");
        }
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let input = sentence();
    let (mut store, enc, head) = full_model(ModelKind::Hybrid, 5);
    let grads = |store: &mut ParamStore, alpha: f64| {
        store.zero_grad();
        let mut g = Graph::new();
        let h = enc.encode_at_target(&mut g, store, &input, &BTreeSet::new()).unwrap();
        let y = predict_factuality(&mut g, store, &head, h).unwrap();
        let l = g.smooth_l1(y, -0.4).unwrap();
        let l = g.scale(l, alpha);
        g.backward(l).unwrap();
        g.export_grads(store);
        store.iter().flat_map(|(_, _, t)| t.grad().to_vec()).collect::<Vec<_>>()
    };
    let base = grads(&mut store, 1.0);
    let scaled = grads(&mut store, 2.5);
    for (a, b) in base.iter().zip(&scaled) {
        assert!((2.5 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn target_at_sentence_end_uses_that_position() {
    let (store, enc, _) = full_model(ModelKind::Linear, 9);
    let mut input = sentence();
    input.target_index = 3;
    let mut g = Graph::new();
    let h = enc.encode_at_target(&mut g, &store, &input, &BTreeSet::new()).unwrap();
    let got = g.value(h).to_vec();

    let mut g2 = Graph::new();
    let xs = factprobe::factmodels::embed(&mut g2, &store, &enc.embedding, &input.tokens, &BTreeSet::new());
    let states = lbilstm_encode(&mut g2, &store, enc.linear.as_ref().unwrap(), &xs).unwrap();
    let whole = states.final_concat(&mut g2, 3).unwrap();
    assert_eq!(g2.value(whole), got.as_slice());
}
