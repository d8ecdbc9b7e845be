#![allow(dead_code)]

pub mod emd_brute;

use pjx_core::model::{ModelConfig, PjxModel, QuestionMode};
use pjx_core::{Graph, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

/// Five-point central difference of `f` at offset 0.
pub fn central_diff(mut f: impl FnMut(f64) -> f64) -> f64 {
    (-f(2.0 * STEP) + 8.0 * f(STEP) - 8.0 * f(-STEP) + f(-2.0 * STEP)) / (12.0 * STEP)
}

/// Replaces every parameter with uniform values in `[-scale, scale]`, so
/// activations and gradients are far from the tiny values of a fresh
/// initialization.
pub fn randomize(model: &mut PjxModel, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        for v in model.params_mut().get_mut(id).data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

/// Relative error with a 1e-6 floor on the scale, so gradients that are
/// numerically zero are compared in absolute terms.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces any output to a scalar with fixed pseudo-random weights, so
/// that every output element contributes a distinct sensitivity.
fn project(g: &mut Graph, out: Var) -> Var {
    let shape = g.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let w = Tensor::new(shape, (0..n).map(|_| rng.gen_range(0.5..1.5)).collect()).unwrap();
    let w = g.constant(w);
    let prod = g.mul(out, w).unwrap();
    g.sum(prod)
}

fn eval_op<F>(inputs: &[Tensor], build: &F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), false)).collect();
    let out = build(&mut g, &vars).unwrap();
    let loss = project(&mut g, out);
    g.scalar(loss)
}

/// Largest relative error between backprop and central differences over
/// every element of every input.
pub fn check_op<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = build(&mut g, &vars).unwrap();
    let loss = project(&mut g, out);
    g.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        for i in 0..inputs[k].numel() {
            let numeric = central_diff(|d| {
                let mut moved = inputs.to_vec();
                moved[k].data_mut()[i] += d;
                eval_op(&moved, &build)
            });
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    worst
}

/// Largest relative error over every model parameter element for a scalar
/// loss built by `loss`.
pub fn check_model<F>(model: &mut PjxModel, loss: F) -> f64
where
    F: Fn(&PjxModel, &mut Graph) -> Result<Var>,
{
    let analytic: Vec<Vec<f64>> = {
        let mut g = Graph::with_params(model.params());
        let l = loss(model, &mut g).unwrap();
        g.backward(l).unwrap();
        let mut grads: Vec<Vec<f64>> = model.params().ids().map(|id| vec![0.0; model.params().get(id).numel()]).collect();
        for (id, gr) in g.param_grads() {
            grads[id.index()] = gr.to_vec();
        }
        grads
    };
    let eval = |m: &PjxModel| {
        let mut g = Graph::with_params(m.params());
        let l = loss(m, &mut g).unwrap();
        g.scalar(l)
    };
    let ids: Vec<_> = model.params().ids().collect();
    let mut worst: f64 = 0.0;
    for id in ids {
        for i in 0..model.params().get(id).numel() {
            let orig = model.params().get(id).data()[i];
            let numeric = central_diff(|d| {
                model.params_mut().get_mut(id).data_mut()[i] = orig + d;
                eval(model)
            });
            model.params_mut().get_mut(id).data_mut()[i] = orig;
            worst = worst.max(rel_err(analytic[id.index()][i], numeric));
        }
    }
    worst
}

/// 4x4 grid, 8 channels, 4 answers, width 8 everywhere.
pub fn small_config() -> ModelConfig {
    ModelConfig {
        feature_channels: 8,
        grid_height: 4,
        grid_width: 4,
        question_vocab: 8,
        word_dim: 8,
        question_hidden: 8,
        attention_hidden: 8,
        num_answers: 4,
        answer_embed_dim: 8,
        explanation_vocab: 10,
        decoder_hidden: 8,
        dropout: 0.0,
        question_mode: QuestionMode::Question,
        answer_conditioned: true,
    }
}
