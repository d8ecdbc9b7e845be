//! n-gram justification metrics over pre-tokenized sentences.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{PjxError, Result};

pub const BLEU_ORDER: usize = 4;
/// Stand-in for a zero clipped count so the geometric mean stays defined.
pub const BLEU_EPS: f64 = 1e-9;
pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_SCALE: f64 = 10.0;

type Gram = Vec<String>;

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Gram, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let g: Gram = w.iter().map(|t| t.as_ref().to_string()).collect();
            *out.entry(g).or_insert(0) += 1;
        }
    }
    out
}

/// Sufficient statistics of one candidate for BLEU.
#[derive(Clone, Debug, Default, PartialEq)]
struct BleuStats {
    clipped: [usize; BLEU_ORDER],
    total: [usize; BLEU_ORDER],
    cand_len: usize,
    ref_len: usize,
}

fn bleu_stats<S: AsRef<str>, R: AsRef<[S]>>(candidate: &[S], references: &[R]) -> BleuStats {
    let mut st = BleuStats {
        cand_len: candidate.len(),
        ..BleuStats::default()
    };
    // closest reference length, shorter one on ties
    st.ref_len = references
        .iter()
        .map(|r| r.as_ref().len())
        .min_by_key(|&l| (l.abs_diff(candidate.len()), l))
        .unwrap_or(0);
    for n in 1..=BLEU_ORDER {
        let cand = ngrams(candidate, n);
        let mut max_ref: HashMap<&Gram, usize> = HashMap::new();
        let ref_counts: Vec<_> = references.iter().map(|r| ngrams(r.as_ref(), n)).collect();
        for counts in &ref_counts {
            for (g, &c) in counts {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        st.total[n - 1] = cand.values().sum();
        st.clipped[n - 1] = cand
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    st
}

fn bleu_from(st: &BleuStats) -> f64 {
    if st.cand_len == 0 {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 0..BLEU_ORDER {
        let p = if st.total[n] == 0 {
            BLEU_EPS
        } else {
            (st.clipped[n] as f64).max(BLEU_EPS) / st.total[n] as f64
        };
        log_p += p.ln() / BLEU_ORDER as f64;
    }
    let (c, r) = (st.cand_len as f64, st.ref_len as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_p.exp()
}

/// Sentence BLEU-4 with uniform weights.
pub fn bleu4<S: AsRef<str>, R: AsRef<[S]>>(candidate: &[S], references: &[R]) -> Result<f64> {
    if references.is_empty() {
        return Err(PjxError::Contract("bleu needs at least one reference".into()));
    }
    Ok(bleu_from(&bleu_stats(candidate, references)))
}

/// Corpus BLEU-4: counts and lengths are pooled before the precisions are
/// formed.
pub fn corpus_bleu4<S: AsRef<str>, R: AsRef<[S]>>(candidates: &[Vec<S>], references: &[Vec<R>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(PjxError::Contract(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    let mut pooled = BleuStats::default();
    for (c, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(PjxError::Contract("bleu needs at least one reference".into()));
        }
        let st = bleu_stats(c, refs);
        for n in 0..BLEU_ORDER {
            pooled.clipped[n] += st.clipped[n];
            pooled.total[n] += st.total[n];
        }
        pooled.cand_len += st.cand_len;
        pooled.ref_len += st.ref_len;
    }
    Ok(bleu_from(&pooled))
}

pub fn lcs_len<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x.as_ref() == y.as_ref() { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// LCS F-measure, best over references.
pub fn rouge_l<S: AsRef<str>, R: AsRef<[S]>>(candidate: &[S], references: &[R]) -> Result<f64> {
    if references.is_empty() {
        return Err(PjxError::Contract("rouge needs at least one reference".into()));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    let best = references
        .iter()
        .map(|r| {
            let r = r.as_ref();
            let l = lcs_len(candidate, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / candidate.len() as f64;
            let rec = l / r.len() as f64;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max);
    Ok(best)
}

/// Document frequencies of n-grams, one document per evaluated item (the
/// union of its references).
#[derive(Clone, Debug, Default)]
pub struct CorpusStats {
    doc_freq: HashMap<Gram, usize>,
    documents: usize,
}

impl CorpusStats {
    pub fn build<S: AsRef<str>, R: AsRef<[S]>>(reference_sets: &[Vec<R>]) -> Self {
        let mut doc_freq = HashMap::new();
        for refs in reference_sets {
            let mut seen: HashSet<Gram> = HashSet::new();
            for r in refs {
                for n in 1..=BLEU_ORDER {
                    seen.extend(ngrams(r.as_ref(), n).into_keys());
                }
            }
            for g in seen {
                *doc_freq.entry(g).or_insert(0) += 1;
            }
        }
        CorpusStats {
            doc_freq,
            documents: reference_sets.len(),
        }
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    /// Smoothed inverse document frequency, positive even for n-grams that
    /// occur in every document.
    pub fn idf(&self, gram: &[String]) -> f64 {
        let df = self.doc_freq.get(gram).copied().unwrap_or(0) as f64;
        ((1.0 + self.documents as f64) / (1.0 + df)).ln() + 1.0
    }
}

fn tfidf<S: AsRef<str>>(tokens: &[S], n: usize, stats: &CorpusStats) -> HashMap<Gram, f64> {
    let counts = ngrams(tokens, n);
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(g, c)| {
            let w = c as f64 / total as f64 * stats.idf(&g);
            (g, w)
        })
        .collect()
}

fn cosine(a: &HashMap<Gram, f64>, b: &HashMap<Gram, f64>) -> f64 {
    let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    dot / (na * nb)
}

/// Mean over n = 1..4 of ten times the TF-IDF cosine, averaged over
/// references.
pub fn cider<S: AsRef<str>, R: AsRef<[S]>>(candidate: &[S], references: &[R], stats: &CorpusStats) -> Result<f64> {
    if stats.documents == 0 {
        return Err(PjxError::Contract("cider needs corpus statistics".into()));
    }
    if references.is_empty() {
        return Err(PjxError::Contract("cider needs at least one reference".into()));
    }
    let mut score = 0.0;
    for n in 1..=BLEU_ORDER {
        let c = tfidf(candidate, n, stats);
        let sims: f64 = references.iter().map(|r| cosine(&c, &tfidf(r.as_ref(), n, stats))).sum();
        score += CIDER_SCALE * sims / references.len() as f64;
    }
    Ok(score / BLEU_ORDER as f64)
}

/// Percentage of generated sentences that appear verbatim among the
/// training sentences.
pub fn duplicate_rate<S: AsRef<str>, T: AsRef<str>>(generated: &[Vec<S>], training: &[Vec<T>]) -> f64 {
    if generated.is_empty() {
        return 0.0;
    }
    let known: HashSet<Vec<&str>> = training
        .iter()
        .map(|s| s.iter().map(AsRef::as_ref).collect())
        .collect();
    let hits = generated
        .iter()
        .filter(|s| known.contains(&s.iter().map(AsRef::as_ref).collect::<Vec<_>>()))
        .count();
    100.0 * hits as f64 / generated.len() as f64
}

/// Corpus-level justification scores, averaged per item except BLEU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextScores {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub duplicate_rate: f64,
    pub exact_match: f64,
    pub count: usize,
}

pub fn evaluate_text(
    candidates: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    training: &[Vec<String>],
) -> Result<TextScores> {
    let bleu4 = corpus_bleu4(candidates, references)?;
    let stats = CorpusStats::build(references);
    let n = candidates.len().max(1) as f64;
    let mut rouge = 0.0;
    let mut cid = 0.0;
    let mut exact = 0usize;
    for (c, refs) in candidates.iter().zip(references) {
        rouge += rouge_l(c, refs)?;
        cid += cider(c, refs, &stats)?;
        exact += refs.iter().any(|r| r == c) as usize;
    }
    Ok(TextScores {
        bleu4,
        rouge_l: rouge / n,
        cider: cid / n,
        duplicate_rate: duplicate_rate(candidates, training),
        exact_match: 100.0 * exact as f64 / n,
        count: candidates.len(),
    })
}
