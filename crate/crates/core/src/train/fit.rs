use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Regime, TrainConfig};
use super::loss::{answer_loss, explanation_loss};
use super::optim::Adam;
use crate::data::PreparedExample;
use crate::error::{PjxError, Result};
use crate::model::{argmax, PjxModel};
use crate::tensor::{Graph, ParamStore};

/// What a step optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Answer loss only; the justification path is not evaluated.
    AnswerOnly,
    Main(Regime),
}

impl Phase {
    fn uses_answer_loss(self) -> bool {
        !matches!(self, Phase::Main(Regime::FreezeAnswer))
    }

    fn uses_explanation_loss(self) -> bool {
        !matches!(self, Phase::AnswerOnly)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    /// Summed over the batch.
    pub answer: f64,
    pub explanation: f64,
    pub examples: usize,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per training example.
    pub answer_loss: f64,
    pub explanation_loss: f64,
    pub val_answer_loss: f64,
    pub val_explanation_loss: f64,
    pub val_accuracy: f64,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub pretrain: Vec<EpochStats>,
    pub epochs: Vec<EpochStats>,
    /// Index into `epochs` of the checkpoint that was kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: u64,
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// The report with every timing field zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> TrainReport {
        let mut r = self.clone();
        r.wall_time_secs = 0.0;
        for e in r.pretrain.iter_mut().chain(r.epochs.iter_mut()) {
            e.wall_time_secs = 0.0;
        }
        r
    }
}

/// Weighted loss of one example; returns the graph loss node and the two
/// unweighted parts.
fn example_loss(
    model: &PjxModel,
    g: &mut Graph,
    ex: &PreparedExample,
    cfg: &TrainConfig,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<(crate::tensor::Var, f64, f64)> {
    let gold = ex
        .answer
        .ok_or_else(|| PjxError::Input(format!("{}: answer `{}` is not in the answer set", ex.id, ex.answer_label)))?;
    let state = model.forward_answer(g, &ex.features, &ex.question, Some(&mut *rng as &mut dyn RngCore))?;
    let la = answer_loss(g, state.answer_probs, gold)?;
    let a_val = g.scalar(la);
    let mut e_val = 0.0;
    let mut total = if phase.uses_answer_loss() {
        Some(g.scale(la, cfg.answer_weight))
    } else {
        None
    };
    if phase.uses_explanation_loss() {
        let (_, fused) = model.forward_explain(g, &state, gold, Some(&mut *rng as &mut dyn RngCore))?;
        let steps = model.teacher_forced(g, fused, &ex.target)?;
        let le = explanation_loss(g, &steps, &ex.target)?;
        e_val = g.scalar(le);
        let le = g.scale(le, cfg.explanation_weight);
        total = Some(match total {
            Some(t) => g.add(t, le)?,
            None => le,
        });
    }
    Ok((total.expect("a phase always has a loss"), a_val, e_val))
}

/// One optimizer update on the mean loss over `batch`. Frozen parameters
/// receive no gradient and are never written.
pub fn train_step(
    model: &mut PjxModel,
    batch: &[&PreparedExample],
    cfg: &TrainConfig,
    phase: Phase,
    opt: &mut Adam,
    rng: &mut ChaCha8Rng,
) -> Result<StepLosses> {
    if batch.is_empty() {
        return Err(PjxError::Input("empty batch".into()));
    }
    let mut grads: Vec<Vec<f64>> = model.params().ids().map(|id| vec![0.0; model.params().get(id).numel()]).collect();
    let mut out = StepLosses {
        examples: batch.len(),
        ..StepLosses::default()
    };
    for ex in batch {
        let mut g = Graph::with_params(model.params());
        let (loss, a, e) = example_loss(model, &mut g, ex, cfg, phase, rng)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(PjxError::Numerical(format!(
                "loss {value} on example {} (answer {a}, justification {e})",
                ex.id
            )));
        }
        g.backward(loss)?;
        for (id, gr) in g.param_grads() {
            grads[id.index()].iter_mut().zip(gr).for_each(|(d, s)| *d += s);
        }
        out.answer += a;
        out.explanation += e;
    }
    let scale = 1.0 / batch.len() as f64;
    let params = model.params_mut();
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let src = &grads[id.index()];
        params.grad_mut(id).iter_mut().zip(src).for_each(|(d, s)| *d = s * scale);
    }
    out.grad_norm = params.clip_grad_norm(cfg.grad_clip);
    if !out.grad_norm.is_finite() {
        return Err(PjxError::Numerical(format!("gradient norm {}", out.grad_norm)));
    }
    opt.lr = cfg.learning_rate;
    opt.step(params);
    Ok(out)
}

/// Mean losses and accuracy on a split without dropout. The justification
/// loss is teacher-forced and conditioned on the gold answer; examples whose
/// answer is outside the answer set count as wrong and add no loss.
pub fn validate(model: &PjxModel, data: &[PreparedExample]) -> Result<(f64, f64, f64)> {
    let (mut la, mut le, mut hits, mut scored) = (0.0, 0.0, 0usize, 0usize);
    for ex in data {
        let mut g = Graph::with_params(model.params());
        let state = model.forward_answer(&mut g, &ex.features, &ex.question, None)?;
        let pred = argmax(g.data(state.answer_probs));
        if let Some(gold) = ex.answer {
            hits += (pred == gold) as usize;
            let l = answer_loss(&mut g, state.answer_probs, gold)?;
            la += g.scalar(l);
            let (_, fused) = model.forward_explain(&mut g, &state, gold, None)?;
            let steps = model.teacher_forced(&mut g, fused, &ex.target)?;
            let l = explanation_loss(&mut g, &steps, &ex.target)?;
            le += g.scalar(l);
            scored += 1;
        }
    }
    let n = scored.max(1) as f64;
    Ok((la / n, le / n, 100.0 * hits as f64 / data.len().max(1) as f64))
}

fn run_epoch(
    model: &mut PjxModel,
    train: &[PreparedExample],
    val: &[PreparedExample],
    cfg: &TrainConfig,
    phase: Phase,
    opt: &mut Adam,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<EpochStats> {
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let (mut a, mut e) = (0.0, 0.0);
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<&PreparedExample> = chunk.iter().map(|&i| &train[i]).collect();
        let s = train_step(model, &batch, cfg, phase, opt, rng)?;
        a += s.answer;
        e += s.explanation;
    }
    let (va, ve, acc) = validate(model, val)?;
    let n = train.len() as f64;
    Ok(EpochStats {
        epoch,
        answer_loss: a / n,
        explanation_loss: e / n,
        val_answer_loss: va,
        val_explanation_loss: ve,
        val_accuracy: acc,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Trains `model` in place and leaves it at the epoch with the lowest
/// weighted validation loss, which is also written to `checkpoint` when
/// given. Identical inputs and seed give identical weights.
pub fn fit(
    model: &mut PjxModel,
    train: &[PreparedExample],
    val: &[PreparedExample],
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(PjxError::Input("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(PjxError::Input("validation split is empty".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.learning_rate);

    let mut pretrain = Vec::new();
    if cfg.regime != Regime::Joint {
        model.set_answer_trainable(true);
        for epoch in 0..cfg.pretrain_epochs {
            pretrain.push(run_epoch(model, train, val, cfg, Phase::AnswerOnly, &mut opt, &mut rng, epoch)?);
        }
        // explanation training starts with fresh moment estimates
        opt = Adam::new(cfg.learning_rate);
    }
    model.set_answer_trainable(cfg.regime != Regime::FreezeAnswer);

    let score = |s: &EpochStats| {
        let a = if cfg.regime == Regime::FreezeAnswer { 0.0 } else { cfg.answer_weight * s.val_answer_loss };
        a + cfg.explanation_weight * s.val_explanation_loss
    };
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut epochs = Vec::new();
    for epoch in 0..cfg.epochs {
        let stats = run_epoch(model, train, val, cfg, Phase::Main(cfg.regime), &mut opt, &mut rng, epoch)?;
        let s = score(&stats);
        if best.as_ref().map_or(true, |(_, b, _)| s < *b) {
            best = Some((epoch, s, model.params().clone()));
        }
        epochs.push(stats);
    }
    let (best_epoch, best_val_loss) = match best {
        Some((e, s, params)) => {
            *model.params_mut() = params;
            (e, s)
        }
        None => (0, f64::NAN),
    };
    model.set_answer_trainable(true);
    model.params_mut().zero_grad();
    if let Some(path) = checkpoint {
        let mut buf = Vec::new();
        model.save(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| PjxError::io(path, e))?;
    }
    Ok(TrainReport {
        config: cfg.clone(),
        pretrain,
        epochs,
        best_epoch,
        best_val_loss,
        steps: opt.steps(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
