use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{BOS, EOS, PAD, UNK};

pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Lowercases, splits on whitespace and strips trailing `.,!?` from each
/// token; tokens that end up empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.to_lowercase().trim_end_matches(['.', ',', '!', '?']).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Token/id bijection with the four reserved ids in front.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Tokens seen at least `min_freq` times, ordered by descending count then
    /// lexicographically. `min_freq` below 1 is treated as 1.
    pub fn build<'a, I, S>(sentences: I, min_freq: u64) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for sentence in sentences {
            for tok in sentence {
                *counts.entry(tok.as_ref()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_freq.max(1) && !RESERVED.contains(&t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut freqs = vec![0; RESERVED.len()];
        for (t, c) in kept {
            tokens.push(t.to_string());
            freqs.push(c);
        }
        Vocabulary::from_parts(tokens, freqs)
    }

    fn from_parts(tokens: Vec<String>, freqs: Vec<u64>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, freqs, index }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(self) -> Self {
        Vocabulary::from_parts(self.tokens, self.freqs)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= RESERVED.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(RESERVED[UNK], String::as_str)
    }

    pub fn frequency(&self, id: usize) -> u64 {
        self.freqs.get(id).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Encodes and appends EOS, the decoder's target layout.
    pub fn encode_target<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let mut ids = self.encode(tokens);
        ids.push(EOS);
        ids
    }

    /// Maps ids back to tokens, skipping PAD, BOS and EOS.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i != PAD && i != BOS && i != EOS)
            .map(|&i| self.token(i).to_string())
            .collect()
    }
}

/// Answer labels as whole strings, most frequent first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSet {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl AnswerSet {
    /// Keeps at most `max_answers` labels by descending count then
    /// lexicographic order.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(answers: I, max_answers: usize) -> Self {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for a in answers {
            *counts.entry(a).or_default() += 1;
        }
        let mut labels: Vec<(&str, u64)> = counts.into_iter().collect();
        labels.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        labels.truncate(max_answers);
        AnswerSet::from_labels(labels.into_iter().map(|(l, _)| l.to_string()).collect())
    }

    pub fn from_labels(labels: Vec<String>) -> Self {
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        AnswerSet { labels, index }
    }

    pub fn reindex(self) -> Self {
        AnswerSet::from_labels(self.labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}
