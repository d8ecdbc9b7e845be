mod common;

use common::{check_model, check_op, random_tensor, randomize, small_config};
use pjx_core::model::{PjxModel, SpatialFeatures, FeatureSource, EOS};
use pjx_core::tensor::{lstm_step, LstmParams};
use pjx_core::train::{answer_loss, explanation_loss};
use pjx_core::{Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ATOMIC_TOL: f64 = 1e-4;
const COMPOSITE_TOL: f64 = 1e-3;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(42)
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let v = (0..n)
        .map(|_| {
            let m = r.gen_range(0.1..1.0);
            if r.gen_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), v).unwrap()
}

#[test]
fn matmul_add_mul_scale() {
    let mut r = rng();
    let a = random_tensor(&[3, 4], &mut r);
    let b = random_tensor(&[4, 2], &mut r);
    assert!(check_op(&[a.clone(), b], |g, v| g.matmul(v[0], v[1])) < ATOMIC_TOL);
    let c = random_tensor(&[3, 4], &mut r);
    let row = random_tensor(&[4], &mut r);
    assert!(check_op(&[a.clone(), c.clone()], |g, v| g.add(v[0], v[1])) < ATOMIC_TOL);
    assert!(check_op(&[a.clone(), row.clone()], |g, v| g.add(v[0], v[1])) < ATOMIC_TOL);
    assert!(check_op(&[a.clone(), c], |g, v| g.mul(v[0], v[1])) < ATOMIC_TOL);
    assert!(check_op(&[a.clone(), row], |g, v| g.mul(v[0], v[1])) < ATOMIC_TOL);
    assert!(check_op(&[a], |g, v| Ok(g.scale(v[0], -2.5))) < ATOMIC_TOL);
}

#[test]
fn pointwise_nonlinearities() {
    let mut r = rng();
    let x = away_from_zero(&[2, 5], &mut r);
    assert!(check_op(&[x.clone()], |g, v| Ok(g.signed_sqrt(v[0]))) < ATOMIC_TOL);
    assert!(check_op(&[x.clone()], |g, v| Ok(g.relu(v[0]))) < ATOMIC_TOL);
    assert!(check_op(&[x.clone()], |g, v| Ok(g.tanh(v[0]))) < ATOMIC_TOL);
    assert!(check_op(&[x.clone()], |g, v| Ok(g.sigmoid(v[0]))) < ATOMIC_TOL);
    let pos = Tensor::new(vec![6], (0..6).map(|i| 0.2 + 0.3 * i as f64).collect()).unwrap();
    assert!(check_op(&[pos], |g, v| Ok(g.ln_floor(v[0], 1e-12))) < ATOMIC_TOL);
}

#[test]
fn normalizations() {
    let mut r = rng();
    let x = random_tensor(&[3, 4], &mut r);
    assert!(check_op(&[x.clone()], |g, v| Ok(g.l2_normalize(v[0]))) < ATOMIC_TOL);
    assert!(check_op(&[x.clone()], |g, v| g.softmax(v[0], 0)) < ATOMIC_TOL);
    assert!(check_op(&[x.clone()], |g, v| g.softmax(v[0], 1)) < ATOMIC_TOL);
    assert!(
        check_op(&[x], |g, v| {
            let mut r = ChaCha8Rng::seed_from_u64(3);
            g.dropout(v[0], 0.4, true, &mut r)
        }) < ATOMIC_TOL
    );
}

#[test]
fn structural_ops() {
    let mut r = rng();
    let x = random_tensor(&[3, 4], &mut r);
    let y = random_tensor(&[3, 2], &mut r);
    assert!(check_op(&[x.clone()], |g, v| g.reshape(v[0], vec![2, 6])) < ATOMIC_TOL);
    assert!(check_op(&[x.clone()], |g, v| Ok(g.sum(v[0]))) < ATOMIC_TOL);
    assert!(check_op(&[x.clone()], |g, v| g.pick(v[0], 7)) < ATOMIC_TOL);
    assert!(check_op(&[x.clone()], |g, v| g.gather_rows(v[0], &[2, 0, 2])) < ATOMIC_TOL);
    assert!(check_op(&[x.clone()], |g, v| g.narrow_last(v[0], 1, 2)) < ATOMIC_TOL);
    assert!(check_op(&[x, y], |g, v| g.concat_last(v[0], v[1])) < ATOMIC_TOL);
}

#[test]
fn lstm_over_three_steps() {
    let mut r = rng();
    let mut store = ParamStore::new();
    let p = LstmParams::new(&mut store, "lstm", 3, 4, &mut r).unwrap();
    // inputs: three step inputs, then the flat weights and bias as leaves
    let xs: Vec<Tensor> = (0..3).map(|_| random_tensor(&[1, 3], &mut r)).collect();
    let wi = random_tensor(&[3, 16], &mut r);
    let wh = random_tensor(&[4, 16], &mut r);
    let b = random_tensor(&[16], &mut r);
    let mut inputs = xs;
    inputs.extend([wi, wh, b]);
    let err = check_op(&inputs, |g, v| {
        let h0 = g.constant(Tensor::zeros(&[1, 4]));
        let c0 = g.constant(Tensor::zeros(&[1, 4]));
        let (mut h, mut c) = (h0, c0);
        for t in 0..3 {
            (h, c) = manual_lstm(g, v[t], h, c, v[3], v[4], v[5])?;
        }
        g.concat_last(h, c)
    });
    assert!(err < COMPOSITE_TOL, "lstm error {err}");
    // the library cell must agree with the manual one on the same weights
    let mut g = Graph::with_params(&store);
    let x = g.constant(Tensor::new(vec![1, 3], vec![0.3, -0.2, 0.9]).unwrap());
    let (h0, c0) = p.zero_state(&mut g);
    let (h, c) = lstm_step(&mut g, x, h0, c0, &p).unwrap();
    let wi = g.param(store.id("lstm.w_input").unwrap());
    let wh = g.param(store.id("lstm.w_hidden").unwrap());
    let b = g.param(store.id("lstm.bias").unwrap());
    let (h2, c2) = manual_lstm(&mut g, x, h0, c0, wi, wh, b).unwrap();
    assert_eq!(g.data(h), g.data(h2));
    assert_eq!(g.data(c), g.data(c2));
}

/// Reference cell: gates input, forget, candidate, output.
fn manual_lstm(
    g: &mut Graph,
    x: pjx_core::Var,
    h: pjx_core::Var,
    c: pjx_core::Var,
    wi: pjx_core::Var,
    wh: pjx_core::Var,
    b: pjx_core::Var,
) -> pjx_core::Result<(pjx_core::Var, pjx_core::Var)> {
    let hidden = g.shape(h)[1];
    let xi = g.matmul(x, wi)?;
    let hh = g.matmul(h, wh)?;
    let z = g.add(xi, hh)?;
    let z = g.add(z, b)?;
    let i = g.narrow_last(z, 0, hidden)?;
    let f = g.narrow_last(z, hidden, hidden)?;
    let u = g.narrow_last(z, 2 * hidden, hidden)?;
    let o = g.narrow_last(z, 3 * hidden, hidden)?;
    let (i, f, u, o) = (g.sigmoid(i), g.sigmoid(f), g.tanh(u), g.sigmoid(o));
    let fc = g.mul(f, c)?;
    let iu = g.mul(i, u)?;
    let c = g.add(fc, iu)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

fn features(seed: u64) -> SpatialFeatures {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..8 * 16).map(|_| r.gen_range(-1.0..1.0)).collect();
    SpatialFeatures::new(8, 4, 4, v, FeatureSource::Synthetic).unwrap()
}

#[test]
fn answer_loss_matches_differences() {
    let mut r = rng();
    let logits = random_tensor(&[5], &mut r);
    let err = check_op(&[logits], |g, v| {
        let p = g.softmax(v[0], 0)?;
        answer_loss(g, p, 3)
    });
    assert!(err < COMPOSITE_TOL);
}

#[test]
fn explanation_loss_through_five_decoder_steps() {
    let mut model = PjxModel::new(small_config(), 5).unwrap();
    randomize(&mut model, 0.5, 6);
    let fused = Tensor::vector((0..8).map(|i| 0.1 * i as f64 - 0.3).collect());
    let gold = [4, 7, 5, 9, EOS];
    let err = check_model(&mut model, |m, g| {
        let f = g.constant(fused.clone());
        let steps = m.teacher_forced(g, f, &gold)?;
        explanation_loss(g, &steps, &gold)
    });
    assert!(err < COMPOSITE_TOL, "decoder error {err}");
}

#[test]
fn full_model_with_dropout() {
    let mut cfg = small_config();
    cfg.dropout = 0.25;
    let mut model = PjxModel::new(cfg, 11).unwrap();
    randomize(&mut model, 0.5, 12);
    let feats = features(1);
    let question = [4, 5, 6];
    let target = [4, 6, EOS];
    let err = check_model(&mut model, |m, g| {
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let state = m.forward_answer(g, &feats, &question, Some(&mut r))?;
        let la = answer_loss(g, state.answer_probs, 2)?;
        let (_, fused) = m.forward_explain(g, &state, 2, Some(&mut r))?;
        let steps = m.teacher_forced(g, fused, &target)?;
        let le = explanation_loss(g, &steps, &target)?;
        g.add(la, le)
    });
    assert!(err < COMPOSITE_TOL, "full model error {err}");
}

