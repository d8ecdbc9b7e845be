use super::{DropoutRng, PjxModel, QuestionMode, UNK};
use crate::error::{PjxError, Result};
use crate::tensor::{lstm_step, Graph, Tensor, Var};

/// Output of multimodal pooling over the grid.
#[derive(Clone, Copy, Debug)]
pub struct Pooled {
    /// `[locations, hidden]` embedded visual features `W x + b`.
    pub visual: Var,
    /// `[locations, hidden]` normalized product with the question encoding.
    pub pooled: Var,
}

impl PjxModel {
    /// Final hidden state of the two-layer question encoder, `[hidden]`.
    /// Ids outside the vocabulary read as UNK. In ones mode the tokens are
    /// ignored and the encoding is all ones.
    pub fn encode_question(&self, g: &mut Graph, tokens: &[usize]) -> Result<Var> {
        let h = self.config.question_hidden;
        if self.config.question_mode == QuestionMode::Ones {
            return Ok(g.constant(Tensor::full(&[h], 1.0)));
        }
        if tokens.is_empty() {
            return Err(PjxError::Input("empty question in question mode".into()));
        }
        let p = &self.answer;
        let table = g.param(p.word_embed);
        let (mut h0, mut c0) = p.encoder[0].zero_state(g);
        let (mut h1, mut c1) = p.encoder[1].zero_state(g);
        for &tok in tokens {
            let id = if tok < self.config.question_vocab { tok } else { UNK };
            let x = g.gather_rows(table, &[id])?;
            (h0, c0) = lstm_step(g, x, h0, c0, &p.encoder[0])?;
            (h1, c1) = lstm_step(g, h0, h1, c1, &p.encoder[1])?;
        }
        g.reshape(h1, vec![h])
    }

    /// Embeds each location, multiplies by the question encoding, then
    /// applies signed square root, per-location L2 normalization and dropout.
    /// `feats` is `[locations, channels]`, `question` is `[hidden]`.
    pub fn pool_multimodal(
        &self,
        g: &mut Graph,
        feats: Var,
        question: Var,
        rng: DropoutRng<'_>,
    ) -> Result<Pooled> {
        let c = &self.config;
        if g.shape(feats) != [c.locations(), c.feature_channels] {
            return Err(PjxError::Config {
                field: "feature_channels".into(),
                msg: format!(
                    "features {:?} do not match grid {}x{} with {} channels",
                    g.shape(feats),
                    c.grid_height,
                    c.grid_width,
                    c.feature_channels
                ),
            });
        }
        if g.shape(question) != [c.question_hidden] {
            return Err(PjxError::Config {
                field: "question_hidden".into(),
                msg: format!("question encoding {:?}", g.shape(question)),
            });
        }
        let visual = self.answer.visual.forward(g, feats)?;
        let joint = g.mul(visual, question)?;
        let pooled = normalize_and_drop(g, joint, c.dropout, rng)?;
        Ok(Pooled { visual, pooled })
    }

    /// Per-location scores `W3 relu(W2 x + b2) + b3` as a `[locations]` vector.
    pub fn answer_attention_logits(&self, g: &mut Graph, pooled: Var) -> Result<Var> {
        let p = &self.answer;
        let hid = p.att_hidden.forward(g, pooled)?;
        let hid = g.relu(hid);
        let logits = p.att_logit.forward(g, hid)?;
        g.reshape(logits, vec![self.config.locations()])
    }

    /// Softmax over all locations of [`PjxModel::answer_attention_logits`].
    pub fn compute_answer_attention(&self, g: &mut Graph, pooled: Var) -> Result<Var> {
        let logits = self.answer_attention_logits(g, pooled)?;
        g.softmax(logits, 0)
    }

    /// Class probabilities from the attention-weighted visual embedding
    /// multiplied by the question encoding.
    pub fn predict_answer(&self, g: &mut Graph, visual: Var, question: Var, attention: Var) -> Result<Var> {
        let logits = self.answer_logits(g, visual, question, attention)?;
        g.softmax(logits, 0)
    }

    pub fn answer_logits(&self, g: &mut Graph, visual: Var, question: Var, attention: Var) -> Result<Var> {
        let attended = weighted_sum(g, attention, visual)?;
        let joint = g.mul(attended, question)?;
        self.answer.classifier.forward(g, joint)
    }
}

/// `sum_l attention[l] * rows[l]` for `[L]` weights and `[L, D]` rows.
pub(crate) fn weighted_sum(g: &mut Graph, attention: Var, rows: Var) -> Result<Var> {
    let l = g.shape(attention)[0];
    let width = *g.shape(rows).last().unwrap();
    let att = g.reshape(attention, vec![1, l])?;
    let out = g.matmul(att, rows)?;
    g.reshape(out, vec![width])
}

pub(crate) fn normalize_and_drop(g: &mut Graph, x: Var, rate: f64, rng: DropoutRng<'_>) -> Result<Var> {
    let s = g.signed_sqrt(x);
    let n = g.l2_normalize(s);
    match rng {
        Some(r) => g.dropout(n, rate, true, r),
        None => Ok(n),
    }
}
