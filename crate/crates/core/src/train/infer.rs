use serde::{Deserialize, Serialize};

use crate::data::{PreparedExample, Vocabularies};
use crate::error::{PjxError, Result};
use crate::eval::{accuracy, evaluate_pointing, evaluate_text, EvalReport, ModelMaps};
use crate::model::{AttentionMap, DecodeMode, PjxModel};

/// Model output for one example, with strings resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answer: String,
    pub answer_index: usize,
    pub answer_prob: f64,
    pub explanation: Vec<String>,
    pub answer_attention: AttentionMap,
    pub explanation_attention: AttentionMap,
}

/// Answers and justifies every example. With `gold_answer` the justification
/// is conditioned on the reference answer instead of the prediction
/// (examples whose answer is unknown fall back to the prediction).
pub fn predict_all(
    model: &PjxModel,
    vocab: &Vocabularies,
    data: &[PreparedExample],
    mode: DecodeMode,
    max_len: usize,
    gold_answer: bool,
) -> Result<Vec<Prediction>> {
    data.iter()
        .map(|ex| {
            let out = match ex.answer.filter(|_| gold_answer) {
                Some(a) => model.explain_answer(&ex.features, &ex.question, a, mode, max_len)?,
                None => model.explain(&ex.features, &ex.question, mode, max_len)?,
            };
            let idx = out.answer.best();
            Ok(Prediction {
                id: ex.id.clone(),
                answer: vocab.answers.label(idx).to_string(),
                answer_index: idx,
                answer_prob: out.answer.best_prob(),
                explanation: vocab.explanation.decode(&out.explanation.tokens),
                answer_attention: out.answer_attention,
                explanation_attention: out.explanation.attention,
            })
        })
        .collect()
}

/// Scores predictions against their examples. Pointing is measured only
/// when every example carries a ground-truth map; `seed` drives the
/// random-point baseline.
pub fn evaluate_predictions(
    split: &str,
    data: &[PreparedExample],
    predictions: &[Prediction],
    training: &[Vec<String>],
    seed: u64,
) -> Result<EvalReport> {
    if data.len() != predictions.len() {
        return Err(PjxError::Contract(format!("{} examples but {} predictions", data.len(), predictions.len())));
    }
    let answers: Vec<&str> = predictions.iter().map(|p| p.answer.as_str()).collect();
    let golds: Vec<&str> = data.iter().map(|e| e.answer_label.as_str()).collect();
    let candidates: Vec<Vec<String>> = predictions.iter().map(|p| p.explanation.clone()).collect();
    let references: Vec<Vec<Vec<String>>> = data.iter().map(|e| e.references.clone()).collect();
    let pointing = if !data.is_empty() && data.iter().all(|e| e.attention_gt.is_some()) {
        let maps: Vec<ModelMaps> = predictions
            .iter()
            .map(|p| ModelMaps {
                id: p.id.clone(),
                answer: p.answer_attention.clone(),
                explanation: p.explanation_attention.clone(),
            })
            .collect();
        let gt: Vec<(String, AttentionMap)> = data
            .iter()
            .map(|e| (e.id.clone(), e.attention_gt.clone().expect("checked above")))
            .collect();
        Some(evaluate_pointing(&maps, &gt, seed)?)
    } else {
        None
    };
    Ok(EvalReport {
        split: split.to_string(),
        examples: data.len(),
        accuracy: accuracy(&answers, &golds)?,
        text: evaluate_text(&candidates, &references, training)?,
        pointing,
    })
}
