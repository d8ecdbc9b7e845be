use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{PjxError, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"PJXF";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Ingested,
    Synthetic,
}

/// A `channels x height x width` feature grid, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialFeatures {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
    pub source: FeatureSource,
}

impl SpatialFeatures {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<f64>,
        source: FeatureSource,
    ) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(PjxError::Input(format!(
                "feature grid dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        if values.len() != channels * height * width {
            return Err(PjxError::dim(
                "spatial_features",
                &[channels, height, width],
                &[values.len()],
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PjxError::Input("feature grid holds non-finite values".into()));
        }
        Ok(SpatialFeatures {
            channels,
            height,
            width,
            values,
            source,
        })
    }

    /// Builds from location-major rows (`[height * width][channels]`).
    pub fn from_locations(
        height: usize,
        width: usize,
        rows: &[Vec<f64>],
        source: FeatureSource,
    ) -> Result<Self> {
        let channels = rows.first().map_or(0, Vec::len);
        if rows.len() != height * width || rows.iter().any(|r| r.len() != channels) {
            return Err(PjxError::Input("location rows do not match grid".into()));
        }
        let mut values = vec![0.0; channels * height * width];
        for (loc, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                values[c * height * width + loc] = v;
            }
        }
        SpatialFeatures::new(channels, height, width, values, source)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, c: usize, n: usize, m: usize) -> f64 {
        self.values[(c * self.height + n) * self.width + m]
    }

    /// `[locations, channels]` matrix, one row per cell in row-major order.
    pub fn location_matrix(&self) -> Tensor {
        let l = self.locations();
        let mut data = vec![0.0; l * self.channels];
        for c in 0..self.channels {
            for loc in 0..l {
                data[loc * self.channels + c] = self.values[c * l + loc];
            }
        }
        Tensor::new(vec![l, self.channels], data).expect("positive dims")
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(28 + 8 * self.values.len());
        buf.extend_from_slice(FEATURE_MAGIC);
        for d in [self.channels, self.height, self.width] {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| PjxError::io("<feature stream>", e))?;
        if bytes.len() < 28 || &bytes[..4] != FEATURE_MAGIC {
            return Err(PjxError::Input("not a PJXF feature file".into()));
        }
        let dim = |i: usize| u64::from_le_bytes(bytes[4 + 8 * i..12 + 8 * i].try_into().unwrap());
        let (c, n, m) = (dim(0), dim(1), dim(2));
        let count = c
            .checked_mul(n)
            .and_then(|x| x.checked_mul(m))
            .and_then(|x| usize::try_from(x).ok())
            .ok_or_else(|| PjxError::Input("feature dims overflow".into()))?;
        if bytes.len() - 28 != count.saturating_mul(8) {
            return Err(PjxError::Input(format!(
                "feature file holds {} value bytes, dims {c}x{n}x{m} need {}",
                bytes.len() - 28,
                count.saturating_mul(8)
            )));
        }
        let values = bytes[28..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        SpatialFeatures::new(c as usize, n as usize, m as usize, values, FeatureSource::Ingested)
    }
}

/// Non-negative `height x width` map summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

/// Tolerance on the unit-sum invariant.
pub const ATTENTION_SUM_TOL: f64 = 1e-6;

impl AttentionMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(PjxError::dim("attention_map", &[height, width], &[values.len()]));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(PjxError::Contract(
                "attention map entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > ATTENTION_SUM_TOL {
            return Err(PjxError::Contract(format!(
                "attention map sums to {total}, expected 1"
            )));
        }
        Ok(AttentionMap {
            height,
            width,
            values,
        })
    }

    /// Normalizes arbitrary non-negative mass; an all-zero grid becomes uniform.
    pub fn from_mass(height: usize, width: usize, mass: Vec<f64>) -> Result<Self> {
        if mass.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(PjxError::Contract("mass must be finite and non-negative".into()));
        }
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return Ok(Self::uniform(height, width));
        }
        AttentionMap::new(height, width, mass.into_iter().map(|v| v / total).collect())
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        let n = height * width;
        AttentionMap {
            height,
            width,
            values: vec![1.0 / n as f64; n],
        }
    }

    pub fn one_hot(height: usize, width: usize, row: usize, col: usize) -> Self {
        let mut values = vec![0.0; height * width];
        values[row * width + col] = 1.0;
        AttentionMap {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Row-major index of the largest cell, lowest index on ties.
    pub fn hottest(&self) -> usize {
        argmax(&self.values)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.width).map(<[f64]>::to_vec).collect()
    }

    /// Plain graymap (P2), cells scaled so the hottest is 255, each cell
    /// repeated `upscale x upscale` times.
    pub fn to_pgm(&self, upscale: usize) -> String {
        let upscale = upscale.max(1);
        let max = self.values.iter().copied().fold(0.0, f64::max);
        let (h, w) = (self.height * upscale, self.width * upscale);
        let mut out = format!("P2\n{w} {h}\n255\n");
        for r in 0..h {
            let line: Vec<String> = (0..w)
                .map(|c| {
                    let v = self.at(r / upscale, c / upscale);
                    let px = if max > 0.0 { (v / max * 255.0).round() } else { 0.0 };
                    (px as u32).to_string()
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Probabilities over the answer vocabulary and their argmax.
#[derive(Clone, Debug, PartialEq)]
pub struct AnswerDistribution {
    probs: Vec<f64>,
    best: usize,
}

impl AnswerDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(PjxError::Contract("answer probabilities must be finite and non-negative".into()));
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(PjxError::Contract(format!("answer probabilities sum to {total}")));
        }
        let best = argmax(&probs);
        Ok(AnswerDistribution { probs, best })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn best(&self) -> usize {
        self.best
    }

    pub fn best_prob(&self) -> f64 {
        self.probs[self.best]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionMode {
    Question,
    /// Activity recognition: the question encoding is fixed to all ones.
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuestionEncoding {
    pub values: Vec<f64>,
    pub mode: QuestionMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnswerEmbedding(pub Vec<f64>);

#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationOutput {
    /// Generated ids without BOS or EOS.
    pub tokens: Vec<usize>,
    pub attention: AttentionMap,
    /// Log-probability of each emitted token, including a final EOS when one
    /// was produced.
    pub step_logprobs: Vec<f64>,
}

impl ExplanationOutput {
    pub fn logprob(&self) -> f64 {
        self.step_logprobs.iter().sum()
    }
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
