use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Vocabularies;
use crate::error::{PjxError, Result};
use crate::model::{ModelConfig, QuestionMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Answer path fixed; only the justification path learns.
    FreezeAnswer,
    /// Everything learns from both losses, after answer pretraining.
    Finetune,
    /// Both losses from the first step.
    Joint,
}

impl FromStr for Regime {
    type Err = PjxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "freeze-answer" => Ok(Regime::FreezeAnswer),
            "finetune" => Ok(Regime::Finetune),
            "joint" => Ok(Regime::Joint),
            other => Err(PjxError::Config {
                field: "regime".into(),
                msg: format!("`{other}` is not freeze-answer, finetune or joint"),
            }),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::FreezeAnswer => "freeze-answer",
            Regime::Finetune => "finetune",
            Regime::Joint => "joint",
        })
    }
}

/// Optimization and model-size settings. Read from `key = value` text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Answer-only epochs run before the main phase (ignored by `joint`).
    pub pretrain_epochs: usize,
    pub seed: u64,
    pub regime: Regime,
    pub dropout: f64,
    pub grad_clip: f64,
    pub answer_weight: f64,
    pub explanation_weight: f64,
    pub min_word_freq: u64,
    pub max_answers: usize,
    pub word_dim: usize,
    pub question_hidden: usize,
    pub attention_hidden: usize,
    pub answer_embed_dim: usize,
    pub decoder_hidden: usize,
    pub answer_conditioned: bool,
    pub max_explanation_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            pretrain_epochs: 0,
            seed: 0,
            regime: Regime::Joint,
            dropout: 0.0,
            grad_clip: 5.0,
            answer_weight: 1.0,
            explanation_weight: 1.0,
            min_word_freq: 1,
            max_answers: 1000,
            word_dim: 32,
            question_hidden: 64,
            attention_hidden: 64,
            answer_embed_dim: 32,
            decoder_hidden: 64,
            answer_conditioned: true,
            max_explanation_len: 20,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| PjxError::Config {
        field: key.into(),
        msg: format!("cannot parse `{value}`"),
    })
}

impl TrainConfig {
    pub const KEYS: [&'static str; 19] = [
        "learning_rate",
        "batch_size",
        "epochs",
        "pretrain_epochs",
        "seed",
        "regime",
        "dropout",
        "grad_clip",
        "answer_weight",
        "explanation_weight",
        "min_word_freq",
        "max_answers",
        "word_dim",
        "question_hidden",
        "attention_hidden",
        "answer_embed_dim",
        "decoder_hidden",
        "answer_conditioned",
        "max_explanation_len",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (key, v) = (key.trim(), value.trim());
        match key {
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "regime" => self.regime = v.parse()?,
            "dropout" => self.dropout = parse(key, v)?,
            "grad_clip" => self.grad_clip = parse(key, v)?,
            "answer_weight" => self.answer_weight = parse(key, v)?,
            "explanation_weight" => self.explanation_weight = parse(key, v)?,
            "min_word_freq" => self.min_word_freq = parse(key, v)?,
            "max_answers" => self.max_answers = parse(key, v)?,
            "word_dim" => self.word_dim = parse(key, v)?,
            "question_hidden" => self.question_hidden = parse(key, v)?,
            "attention_hidden" => self.attention_hidden = parse(key, v)?,
            "answer_embed_dim" => self.answer_embed_dim = parse(key, v)?,
            "decoder_hidden" => self.decoder_hidden = parse(key, v)?,
            "answer_conditioned" => self.answer_conditioned = parse(key, v)?,
            "max_explanation_len" => self.max_explanation_len = parse(key, v)?,
            other => {
                return Err(PjxError::Config {
                    field: other.into(),
                    msg: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| PjxError::Parse {
                line: i + 1,
                field: line.into(),
                msg: "expected key = value".into(),
            })?;
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// The effective configuration in the same `key = value` format.
    pub fn to_text(&self) -> String {
        let json = serde_json::to_value(self).expect("config serializes");
        Self::KEYS
            .iter()
            .map(|k| {
                let v = &json[*k];
                let v = v.as_str().map_or_else(|| v.to_string(), str::to_string);
                format!("{k} = {v}\n")
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: &str| {
            Err(PjxError::Config {
                field: field.into(),
                msg: msg.into(),
            })
        };
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate", "must be a finite non-negative number");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err("dropout", "must lie in [0, 1)");
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return err("grad_clip", "must be positive");
        }
        if self.answer_weight < 0.0 || self.explanation_weight < 0.0 {
            return err("answer_weight", "loss weights must be non-negative");
        }
        if self.max_explanation_len == 0 {
            return err("max_explanation_len", "must be at least 1");
        }
        Ok(())
    }

    /// Model shape for data with the given grid and vocabularies.
    pub fn model_config(
        &self,
        channels: usize,
        height: usize,
        width: usize,
        vocab: &Vocabularies,
        question_mode: QuestionMode,
    ) -> ModelConfig {
        ModelConfig {
            feature_channels: channels,
            grid_height: height,
            grid_width: width,
            question_vocab: vocab.question.len(),
            word_dim: self.word_dim,
            question_hidden: self.question_hidden,
            attention_hidden: self.attention_hidden,
            num_answers: vocab.answers.len(),
            answer_embed_dim: self.answer_embed_dim,
            explanation_vocab: vocab.explanation.len(),
            decoder_hidden: self.decoder_hidden,
            dropout: self.dropout,
            question_mode,
            answer_conditioned: self.answer_conditioned,
        }
    }
}
