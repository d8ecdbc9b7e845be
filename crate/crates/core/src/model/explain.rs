use super::answer::{normalize_and_drop, weighted_sum};
use super::{
    AnswerDistribution, AttentionMap, DecodeMode, DropoutRng, ExplanationOutput, PjxModel,
    SpatialFeatures, BOS, UNK,
};
use crate::error::{PjxError, Result};
use crate::tensor::{lstm_step, Graph, Tensor, Var};

/// Everything a single inference produces.
#[derive(Clone, Debug)]
pub struct Explanation {
    pub answer: AnswerDistribution,
    pub answer_attention: AttentionMap,
    pub explanation: ExplanationOutput,
}

/// Shared intermediate values of one forward pass over an example.
#[derive(Clone, Copy, Debug)]
pub struct ForwardState {
    pub feats: Var,
    pub question: Var,
    pub visual: Var,
    pub pooled: Var,
    pub answer_attention: Var,
    pub answer_probs: Var,
}

impl PjxModel {
    /// `W6 tanh(W5 y + b5) + b6` for a one-hot (or soft) answer vector `y`.
    /// Without answer conditioning the embedding is all ones.
    pub fn embed_answer(&self, g: &mut Graph, answer: Var) -> Result<Var> {
        let d = self.config.answer_embed_dim;
        if g.shape(answer) != [self.config.num_answers] {
            return Err(PjxError::dim("embed_answer", g.shape(answer), &[self.config.num_answers]));
        }
        if g.data(answer).iter().all(|&v| v == 0.0) {
            return Err(PjxError::Contract("answer vector is all zero".into()));
        }
        if !self.config.answer_conditioned {
            return Ok(g.constant(Tensor::full(&[d], 1.0)));
        }
        let p = &self.explain;
        let hid = p.answer_hidden.forward(g, answer)?;
        let hid = g.tanh(hid);
        p.answer_out.forward(g, hid)
    }

    pub fn one_hot_answer(&self, g: &mut Graph, index: usize) -> Result<Var> {
        let n = self.config.num_answers;
        if index >= n {
            return Err(PjxError::Input(format!("answer index {index} outside {n} answers")));
        }
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Ok(g.constant(Tensor::vector(v)))
    }

    pub fn explanation_attention_logits(
        &self,
        g: &mut Graph,
        pooled: Var,
        answer_embedding: Var,
        rng: DropoutRng<'_>,
    ) -> Result<Var> {
        let p = &self.explain;
        let proj = p.pooled_proj.forward(g, pooled)?;
        let joint = g.mul(proj, answer_embedding)?;
        let joint = normalize_and_drop(g, joint, self.config.dropout, rng)?;
        let hid = p.att_hidden.forward(g, joint)?;
        let hid = g.relu(hid);
        let logits = p.att_logit.forward(g, hid)?;
        g.reshape(logits, vec![self.config.locations()])
    }

    /// Answer-conditioned attention over the pooled grid, `[locations]`.
    pub fn compute_explanation_attention(
        &self,
        g: &mut Graph,
        pooled: Var,
        answer_embedding: Var,
        rng: DropoutRng<'_>,
    ) -> Result<Var> {
        let logits = self.explanation_attention_logits(g, pooled, answer_embedding, rng)?;
        g.softmax(logits, 0)
    }

    /// `(W10 sum(att * f) + b10) * (W11 q + b11) * answer_embedding`.
    pub fn fuse_features(
        &self,
        g: &mut Graph,
        feats: Var,
        attention: Var,
        question: Var,
        answer_embedding: Var,
    ) -> Result<Var> {
        let p = &self.explain;
        let attended = weighted_sum(g, attention, feats)?;
        let visual = p.visual_proj.forward(g, attended)?;
        let q = p.question_proj.forward(g, question)?;
        let vq = g.mul(visual, q)?;
        g.mul(vq, answer_embedding)
    }

    /// One decoder step: consumes the fused feature and the previous word,
    /// returns the new state and the next-word distribution `[vocab]`.
    pub fn decoder_step(
        &self,
        g: &mut Graph,
        fused: Var,
        prev_word: usize,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var, Var)> {
        let p = &self.explain;
        let d = self.config.answer_embed_dim;
        let word = if prev_word < self.config.explanation_vocab { prev_word } else { UNK };
        let table = g.param(p.word_embed);
        let emb = g.gather_rows(table, &[word])?;
        let fused_row = g.reshape(fused, vec![1, d])?;
        let x = g.concat_last(fused_row, emb)?;
        let (h, c) = lstm_step(g, x, h, c, &p.decoder)?;
        let logits = p.predict.forward(g, h)?;
        let logits = g.reshape(logits, vec![self.config.explanation_vocab])?;
        let probs = g.softmax(logits, 0)?;
        Ok((h, c, probs))
    }

    pub fn decoder_zero_state(&self, g: &mut Graph) -> (Var, Var) {
        self.explain.decoder.zero_state(g)
    }

    /// Teacher-forced next-word distributions for `gold` (which ends in EOS):
    /// step `t` sees BOS followed by `gold[..t]`.
    pub fn teacher_forced(&self, g: &mut Graph, fused: Var, gold: &[usize]) -> Result<Vec<Var>> {
        let (mut h, mut c) = self.decoder_zero_state(g);
        let mut prev = BOS;
        let mut out = Vec::with_capacity(gold.len());
        for &tok in gold {
            let (nh, nc, probs) = self.decoder_step(g, fused, prev, h, c)?;
            (h, c) = (nh, nc);
            out.push(probs);
            prev = tok;
        }
        Ok(out)
    }

    /// Answer path up to the class distribution.
    pub fn forward_answer(
        &self,
        g: &mut Graph,
        feats: &SpatialFeatures,
        question: &[usize],
        mut rng: DropoutRng<'_>,
    ) -> Result<ForwardState> {
        let c = &self.config;
        if (feats.channels(), feats.height(), feats.width())
            != (c.feature_channels, c.grid_height, c.grid_width)
        {
            return Err(PjxError::Config {
                field: "feature_channels".into(),
                msg: format!(
                    "features are {}x{}x{}, model expects {}x{}x{}",
                    feats.channels(),
                    feats.height(),
                    feats.width(),
                    c.feature_channels,
                    c.grid_height,
                    c.grid_width
                ),
            });
        }
        let fv = g.constant(feats.location_matrix());
        let q = self.encode_question(g, question)?;
        let pooled = self.pool_multimodal(g, fv, q, rng.as_deref_mut())?;
        let att = self.compute_answer_attention(g, pooled.pooled)?;
        let probs = self.predict_answer(g, pooled.visual, q, att)?;
        Ok(ForwardState {
            feats: fv,
            question: q,
            visual: pooled.visual,
            pooled: pooled.pooled,
            answer_attention: att,
            answer_probs: probs,
        })
    }

    /// Justification attention and fused feature for a chosen answer.
    pub fn forward_explain(
        &self,
        g: &mut Graph,
        state: &ForwardState,
        answer: usize,
        rng: DropoutRng<'_>,
    ) -> Result<(Var, Var)> {
        let y = self.one_hot_answer(g, answer)?;
        let ae = self.embed_answer(g, y)?;
        let att = self.compute_explanation_attention(g, state.pooled, ae, rng)?;
        let fused = self.fuse_features(g, state.feats, att, state.question, ae)?;
        Ok((att, fused))
    }

    /// Full inference: predict the answer, then justify it.
    pub fn explain(
        &self,
        feats: &SpatialFeatures,
        question: &[usize],
        mode: DecodeMode,
        max_len: usize,
    ) -> Result<Explanation> {
        self.explain_inner(feats, question, None, mode, max_len)
    }

    /// Justifies a given answer instead of the predicted one.
    pub fn explain_answer(
        &self,
        feats: &SpatialFeatures,
        question: &[usize],
        answer: usize,
        mode: DecodeMode,
        max_len: usize,
    ) -> Result<Explanation> {
        self.explain_inner(feats, question, Some(answer), mode, max_len)
    }

    fn explain_inner(
        &self,
        feats: &SpatialFeatures,
        question: &[usize],
        forced: Option<usize>,
        mode: DecodeMode,
        max_len: usize,
    ) -> Result<Explanation> {
        let (h, w) = (self.config.grid_height, self.config.grid_width);
        let mut g = Graph::with_params(&self.params);
        let state = self.forward_answer(&mut g, feats, question, None)?;
        let answer = AnswerDistribution::new(g.data(state.answer_probs).to_vec())?;
        let chosen = forced.unwrap_or(answer.best());
        let (att, fused) = self.forward_explain(&mut g, &state, chosen, None)?;
        let (tokens, step_logprobs) = self.decode_explanation(&g.value(fused), mode, max_len)?;
        Ok(Explanation {
            answer_attention: AttentionMap::new(h, w, g.data(state.answer_attention).to_vec())?,
            explanation: ExplanationOutput {
                tokens,
                attention: AttentionMap::new(h, w, g.data(att).to_vec())?,
                step_logprobs,
            },
            answer,
        })
    }
}
