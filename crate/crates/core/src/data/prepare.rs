use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mask::load_attention_gt;
use super::records::ExampleRecord;
use super::synth::SynthExample;
use super::vocab::{tokenize, AnswerSet, Vocabulary};
use crate::error::{PjxError, Result};
use crate::model::{AttentionMap, SpatialFeatures};

/// The three lookup tables a model is trained against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub question: Vocabulary,
    pub explanation: Vocabulary,
    pub answers: AnswerSet,
}

impl Vocabularies {
    /// Built from training records only. Every explanation of a record
    /// contributes to the word counts.
    pub fn build(records: &[ExampleRecord], min_freq: u64, max_answers: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(PjxError::Input("cannot build vocabularies from an empty split".into()));
        }
        let questions: Vec<Vec<String>> = records.iter().map(|r| normalize(&r.question)).collect();
        let explanations: Vec<Vec<String>> = records
            .iter()
            .flat_map(|r| r.explanations.iter().map(|e| tokenize(e)))
            .collect();
        Ok(Vocabularies {
            question: Vocabulary::build(questions.iter().map(Vec::as_slice), min_freq),
            explanation: Vocabulary::build(explanations.iter().map(Vec::as_slice), min_freq),
            answers: AnswerSet::build(records.iter().map(|r| r.answer.as_str()), max_answers),
        })
    }

    /// Restores lookup indexes after deserialization.
    pub fn reindex(self) -> Self {
        Vocabularies {
            question: self.question.reindex(),
            explanation: self.explanation.reindex(),
            answers: self.answers.reindex(),
        }
    }
}

/// Question tokens from a record go through the same tokenizer as free text.
fn normalize(tokens: &[String]) -> Vec<String> {
    tokenize(&tokens.join(" "))
}

/// A record with its features loaded and every string mapped to ids.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedExample {
    pub id: String,
    pub features: SpatialFeatures,
    pub question: Vec<usize>,
    pub answer_label: String,
    /// `None` when the label is outside the answer set.
    pub answer: Option<usize>,
    /// Decoder target for the first explanation, EOS-terminated.
    pub target: Vec<usize>,
    pub references: Vec<Vec<String>>,
    pub attention_gt: Option<AttentionMap>,
}

fn prepared(
    record: &ExampleRecord,
    features: SpatialFeatures,
    attention_gt: Option<AttentionMap>,
    vocab: &Vocabularies,
) -> PreparedExample {
    let references: Vec<Vec<String>> = record.explanations.iter().map(|e| tokenize(e)).collect();
    let target = vocab
        .explanation
        .encode_target(references.first().map_or(&[][..], Vec::as_slice));
    PreparedExample {
        id: record.id.clone(),
        question: vocab.question.encode(&normalize(&record.question)),
        answer_label: record.answer.clone(),
        answer: vocab.answers.index(&record.answer),
        target,
        references,
        features,
        attention_gt,
    }
}

/// Loads features (and masks, when present) relative to `dir`.
pub fn prepare_records(records: &[ExampleRecord], dir: &Path, vocab: &Vocabularies) -> Result<Vec<PreparedExample>> {
    records
        .iter()
        .map(|r| {
            let fpath = dir.join(&r.features_path);
            let file = std::fs::File::open(&fpath).map_err(|e| PjxError::io(&fpath, e))?;
            let features = SpatialFeatures::read(std::io::BufReader::new(file))?;
            let gt = match &r.att_gt_path {
                Some(p) => Some(load_attention_gt(&dir.join(p), features.height(), features.width())?),
                None => None,
            };
            Ok(prepared(r, features, gt, vocab))
        })
        .collect()
}

/// In-memory equivalent of writing a synthetic split and loading it back.
pub fn prepare_synthetic(examples: &[SynthExample], vocab: &Vocabularies) -> Vec<PreparedExample> {
    examples
        .iter()
        .map(|ex| {
            let (h, w) = (ex.features.height(), ex.features.width());
            let gt = AttentionMap::one_hot(h, w, ex.evidence.0, ex.evidence.1);
            prepared(&ex.record, ex.features.clone(), Some(gt), vocab)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, write_synthetic, load_dataset, SynthConfig};
    use crate::model::EOS;

    #[test]
    fn files_and_memory_agree() {
        let cfg = SynthConfig {
            train: 6,
            val: 2,
            test: 2,
            ..SynthConfig::default()
        };
        let data = generate_synthetic(&cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_synthetic(&data, dir.path()).unwrap();
        let train_records: Vec<_> = data.train.iter().map(|e| e.record.clone()).collect();
        let vocab = Vocabularies::build(&train_records, 1, 100).unwrap();
        let loaded = load_dataset(dir.path(), "test").unwrap();
        let from_files = prepare_records(&loaded, dir.path(), &vocab).unwrap();
        let in_memory = prepare_synthetic(&data.test, &vocab);
        assert_eq!(from_files.len(), in_memory.len());
        for (a, b) in from_files.iter().zip(&in_memory) {
            assert_eq!(a.features.values(), b.features.values());
            assert_eq!(a.attention_gt, b.attention_gt);
            assert_eq!(a.target, b.target);
            assert_eq!(*a.target.last().unwrap(), EOS);
        }
    }
}
