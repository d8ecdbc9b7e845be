//! The dual-attention model.
//!
//! The answer path embeds every feature-grid location, pools it with the
//! question encoding by elementwise product, and scores locations with a
//! small per-location network to obtain the answer attention map. The
//! justification path embeds the chosen answer, scores the pooled grid a
//! second time under that embedding, and feeds the attended feature fused
//! with question and answer into a recurrent word decoder.

mod answer;
mod decode;
mod explain;
mod types;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use answer::Pooled;
pub use decode::DecodeMode;
pub use explain::{Explanation, ForwardState};
pub use types::{
    argmax, AnswerDistribution, AnswerEmbedding, AttentionMap, ExplanationOutput, FeatureSource,
    QuestionEncoding, QuestionMode, SpatialFeatures, ATTENTION_SUM_TOL, FEATURE_MAGIC,
};

use crate::error::{PjxError, Result};
use crate::tensor::{uniform, Linear, LstmParams, ParamId, ParamStore, RECURRENT_INIT};

/// Reserved token ids shared by every vocabulary.
pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

/// Dropout randomness for a training forward pass; `None` evaluates.
pub type DropoutRng<'a> = Option<&'a mut (dyn RngCore + 'static)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_channels: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    pub question_vocab: usize,
    pub word_dim: usize,
    /// Width of the question encoding; every pooled location has this width.
    pub question_hidden: usize,
    pub attention_hidden: usize,
    pub num_answers: usize,
    /// Width of the answer embedding and of the fused justification feature.
    pub answer_embed_dim: usize,
    pub explanation_vocab: usize,
    pub decoder_hidden: usize,
    pub dropout: f64,
    pub question_mode: QuestionMode,
    /// When false the answer embedding is replaced by ones, which removes the
    /// predicted answer from the justification path.
    pub answer_conditioned: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_channels: 32,
            grid_height: 4,
            grid_width: 4,
            question_vocab: 32,
            word_dim: 64,
            question_hidden: 64,
            attention_hidden: 64,
            num_answers: 16,
            answer_embed_dim: 32,
            explanation_vocab: 32,
            decoder_hidden: 64,
            dropout: 0.0,
            question_mode: QuestionMode::Question,
            answer_conditioned: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("feature_channels", self.feature_channels),
            ("grid_height", self.grid_height),
            ("grid_width", self.grid_width),
            ("word_dim", self.word_dim),
            ("question_hidden", self.question_hidden),
            ("attention_hidden", self.attention_hidden),
            ("num_answers", self.num_answers),
            ("answer_embed_dim", self.answer_embed_dim),
            ("decoder_hidden", self.decoder_hidden),
        ];
        for (field, v) in dims {
            if v == 0 {
                return Err(PjxError::Config {
                    field: field.into(),
                    msg: "must be positive".into(),
                });
            }
        }
        for (field, v) in [
            ("question_vocab", self.question_vocab),
            ("explanation_vocab", self.explanation_vocab),
        ] {
            if v <= UNK {
                return Err(PjxError::Config {
                    field: field.into(),
                    msg: format!("must exceed the {} reserved ids", UNK + 1),
                });
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(PjxError::Config {
                field: "dropout".into(),
                msg: format!("{} not in [0, 1)", self.dropout),
            });
        }
        Ok(())
    }

    pub fn locations(&self) -> usize {
        self.grid_height * self.grid_width
    }
}

#[derive(Clone, Debug)]
pub(crate) struct AnswerParams {
    pub word_embed: ParamId,
    pub encoder: [LstmParams; 2],
    pub visual: Linear,
    pub att_hidden: Linear,
    pub att_logit: Linear,
    pub classifier: Linear,
}

#[derive(Clone, Debug)]
pub(crate) struct ExplainParams {
    pub answer_hidden: Linear,
    pub answer_out: Linear,
    pub pooled_proj: Linear,
    pub att_hidden: Linear,
    pub att_logit: Linear,
    pub visual_proj: Linear,
    pub question_proj: Linear,
    pub word_embed: ParamId,
    pub decoder: LstmParams,
    pub predict: Linear,
}

/// Parameter-name prefix of everything on the answer path.
pub const ANSWER_PREFIX: &str = "answer.";
pub const EXPLAIN_PREFIX: &str = "explain.";

/// Model weights plus the handles that locate each layer in the store.
#[derive(Clone, Debug)]
pub struct PjxModel {
    config: ModelConfig,
    params: ParamStore,
    answer: AnswerParams,
    explain: ExplainParams,
}

impl PjxModel {
    /// Fresh weights: uniform in `[-0.08, 0.08]` for recurrent and embedding
    /// tables, fan-in scaled normal for affine maps, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let mut s = ParamStore::new();
        let c = &config;
        let (h, a, d) = (c.question_hidden, c.attention_hidden, c.answer_embed_dim);

        let answer = AnswerParams {
            word_embed: s.insert(
                "answer.word_embed",
                uniform(&[c.question_vocab, c.word_dim], RECURRENT_INIT, rng),
            )?,
            encoder: [
                LstmParams::new(&mut s, "answer.encoder0", c.word_dim, h, rng)?,
                LstmParams::new(&mut s, "answer.encoder1", h, h, rng)?,
            ],
            visual: Linear::new(&mut s, "answer.visual", c.feature_channels, h, rng)?,
            att_hidden: Linear::new(&mut s, "answer.att_hidden", h, a, rng)?,
            att_logit: Linear::new(&mut s, "answer.att_logit", a, 1, rng)?,
            classifier: Linear::new(&mut s, "answer.classifier", h, c.num_answers, rng)?,
        };
        let explain = ExplainParams {
            answer_hidden: Linear::new(&mut s, "explain.answer_hidden", c.num_answers, d, rng)?,
            answer_out: Linear::new(&mut s, "explain.answer_out", d, d, rng)?,
            pooled_proj: Linear::new(&mut s, "explain.pooled_proj", h, d, rng)?,
            att_hidden: Linear::new(&mut s, "explain.att_hidden", d, a, rng)?,
            att_logit: Linear::new(&mut s, "explain.att_logit", a, 1, rng)?,
            visual_proj: Linear::new(&mut s, "explain.visual_proj", c.feature_channels, d, rng)?,
            question_proj: Linear::new(&mut s, "explain.question_proj", h, d, rng)?,
            word_embed: s.insert(
                "explain.word_embed",
                uniform(&[c.explanation_vocab, c.word_dim], RECURRENT_INIT, rng),
            )?,
            decoder: LstmParams::new(&mut s, "explain.decoder", d + c.word_dim, c.decoder_hidden, rng)?,
            predict: Linear::new(&mut s, "explain.predict", c.decoder_hidden, c.explanation_vocab, rng)?,
        };
        Ok(PjxModel {
            config,
            params: s,
            answer,
            explain,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn is_answer_param(&self, id: ParamId) -> bool {
        self.params.name(id).starts_with(ANSWER_PREFIX)
    }

    /// Marks answer-path weights trainable or frozen.
    pub fn set_answer_trainable(&mut self, trainable: bool) {
        let ids: Vec<_> = self.params.ids().filter(|&id| self.is_answer_param(id)).collect();
        for id in ids {
            self.params.set_trainable(id, trainable);
        }
    }

    pub fn save<W: std::io::Write>(&self, out: W) -> Result<()> {
        crate::tensor::write_checkpoint(&self.params, out)
    }

    /// Loads weights written by [`PjxModel::save`] for the same config.
    pub fn load_weights<R: std::io::Read>(&mut self, input: R) -> Result<()> {
        let entries = crate::tensor::read_checkpoint(input)?;
        self.params.load_named(entries)
    }

    /// Serialized bytes of the answer-path tensors only.
    pub fn answer_path_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for id in self.params.ids().filter(|&id| self.is_answer_param(id)) {
            out.extend_from_slice(self.params.name(id).as_bytes());
            for v in self.params.get(id).data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::default();
        assert!(c.validate().is_ok());
        c.dropout = 1.0;
        assert!(matches!(c.validate(), Err(PjxError::Config { .. })));
        let c = ModelConfig {
            explanation_vocab: 3,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = PjxModel::new(ModelConfig::default(), 3).unwrap();
        let b = PjxModel::new(ModelConfig::default(), 3).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.save(&mut ba).unwrap();
        b.save(&mut bb).unwrap();
        assert_eq!(ba, bb);
        let c = PjxModel::new(ModelConfig::default(), 4).unwrap();
        let mut bc = Vec::new();
        c.save(&mut bc).unwrap();
        assert_ne!(ba, bc);
    }

    #[test]
    fn answer_params_are_prefixed() {
        let mut m = PjxModel::new(ModelConfig::default(), 0).unwrap();
        let n_answer = m.params().ids().filter(|&id| m.is_answer_param(id)).count();
        assert_eq!(n_answer, 1 + 2 * 3 + 4 * 2);
        m.set_answer_trainable(false);
        for id in m.params().ids() {
            assert_eq!(m.params().is_trainable(id), !m.is_answer_param(id));
        }
    }
}
