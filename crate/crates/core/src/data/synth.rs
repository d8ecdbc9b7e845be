//! Grid-world generator with a known evidence cell per example.
//!
//! Every cell carries a one-hot code of its quadrant in the first four
//! channels. Object cells add a category prototype and an object prototype in
//! the remaining channels; empty cells hold noise only. Because the object
//! name or its quadrant is absent from the question and the answer, the
//! justification can only be produced by reading the evidence cell.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mask::mask_to_pgm;
use super::records::{save_dataset, ExampleRecord};
use crate::error::{PjxError, Result};
use crate::model::{FeatureSource, SpatialFeatures};

pub const CATEGORIES: [(&str, [&str; 3]); 4] = [
    ("animal", ["cat", "dog", "horse"]),
    ("vehicle", ["car", "bus", "bike"]),
    ("food", ["bread", "cake", "pizza"]),
    ("furniture", ["chair", "table", "bed"]),
];

pub const QUADRANTS: [&str; 4] = ["top left", "top right", "bottom left", "bottom right"];

/// Channels reserved for the quadrant code.
pub const POSITION_CHANNELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthVariant {
    /// Questions ask where a category is or which object of a category is
    /// present; distractors come from other categories.
    Questions,
    /// No question; one object, answered by its category.
    Activity,
    /// No question; two objects of different categories, either of which is a
    /// correct answer. The justification must name the one that was chosen.
    TwoAnswers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub grid_height: usize,
    pub grid_width: usize,
    pub channels: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub distractors: usize,
    pub noise: f64,
    pub variant: SynthVariant,
    /// Pixel repeat factor of the written masks.
    pub mask_upscale: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            grid_height: 4,
            grid_width: 4,
            channels: 32,
            train: 2000,
            val: 200,
            test: 200,
            distractors: 2,
            noise: 0.1,
            variant: SynthVariant::Questions,
            mask_upscale: 8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |field: &str, msg: &str| PjxError::Config {
            field: field.into(),
            msg: msg.into(),
        };
        if self.grid_height < 2 || self.grid_width < 2 {
            return Err(cfg("grid_height", "grid must be at least 2x2 to have quadrants"));
        }
        if self.channels < POSITION_CHANNELS + 4 {
            return Err(cfg("channels", "need at least 8 channels"));
        }
        if self.distractors > 3 {
            return Err(cfg("distractors", "at most 3 (one per remaining quadrant)"));
        }
        if self.train == 0 {
            return Err(cfg("train", "must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(cfg("noise", "must be a finite non-negative number"));
        }
        Ok(())
    }
}

/// Prototype codes drawn once per seed.
#[derive(Clone, Debug)]
pub struct SynthWorld {
    pub category_codes: Vec<Vec<f64>>,
    pub object_codes: Vec<Vec<f64>>,
}

impl SynthWorld {
    pub fn new(object_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let unit = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..object_channels).map(|_| normal.sample(rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let category_codes = (0..CATEGORIES.len()).map(|_| unit(rng)).collect();
        let object_codes = (0..CATEGORIES.len() * 3).map(|_| unit(rng)).collect();
        SynthWorld {
            category_codes,
            object_codes,
        }
    }

    /// Object-channel code of object `obj` (category-major index).
    pub fn object_feature(&self, obj: usize) -> Vec<f64> {
        self.category_codes[obj / 3]
            .iter()
            .zip(&self.object_codes[obj])
            .map(|(c, o)| c + o)
            .collect()
    }

    /// Index of the object whose code is closest to `code`.
    pub fn nearest_object(&self, code: &[f64]) -> usize {
        let dist = |obj: usize| -> f64 {
            self.object_feature(obj)
                .iter()
                .zip(code)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        (0..self.object_codes.len())
            .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
            .expect("objects exist")
    }
}

pub fn object_name(obj: usize) -> &'static str {
    CATEGORIES[obj / 3].1[obj % 3]
}

pub fn category_name(cat: usize) -> &'static str {
    CATEGORIES[cat].0
}

pub fn quadrant_of(row: usize, col: usize, height: usize, width: usize) -> usize {
    let bottom = row >= height / 2;
    let right = col >= width / 2;
    (bottom as usize) * 2 + right as usize
}

pub fn justification(obj: usize, quadrant: usize) -> String {
    format!("because there is a {} in the {}", object_name(obj), QUADRANTS[quadrant])
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthExample {
    pub record: ExampleRecord,
    pub features: SpatialFeatures,
    /// `(row, col)` of the evidence cell.
    pub evidence: (usize, usize),
    pub evidence_object: usize,
    /// Row-major `height x width` evidence mask.
    pub mask: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub config: SynthConfig,
    pub seed: u64,
    pub world: SynthWorld,
    pub train: Vec<SynthExample>,
    pub val: Vec<SynthExample>,
    pub test: Vec<SynthExample>,
}

impl SyntheticDataset {
    pub fn split(&self, name: &str) -> Option<&[SynthExample]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn splits(&self) -> [(&'static str, &[SynthExample]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

struct Placement {
    obj: usize,
    row: usize,
    col: usize,
}

fn random_cell_in(quadrant: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let (top, left) = (h / 2, w / 2);
    let rows = if quadrant / 2 == 0 { 0..top } else { top..h };
    let cols = if quadrant % 2 == 0 { 0..left } else { left..w };
    (rng.gen_range(rows), rng.gen_range(cols))
}

fn render(
    cfg: &SynthConfig,
    world: &SynthWorld,
    objects: &[Placement],
    rng: &mut ChaCha8Rng,
) -> SpatialFeatures {
    let (h, w, c) = (cfg.grid_height, cfg.grid_width, cfg.channels);
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("finite std");
    let mut rows = Vec::with_capacity(h * w);
    for r in 0..h {
        for col in 0..w {
            let mut v: Vec<f64> = (0..c)
                .map(|_| if cfg.noise > 0.0 { noise.sample(rng) } else { 0.0 })
                .collect();
            v[quadrant_of(r, col, h, w)] += 1.0;
            if let Some(p) = objects.iter().find(|p| (p.row, p.col) == (r, col)) {
                for (slot, x) in v[POSITION_CHANNELS..].iter_mut().zip(world.object_feature(p.obj)) {
                    *slot += x;
                }
            }
            rows.push(v);
        }
    }
    SpatialFeatures::from_locations(h, w, &rows, FeatureSource::Synthetic).expect("consistent grid")
}

fn example(
    cfg: &SynthConfig,
    world: &SynthWorld,
    id: String,
    rng: &mut ChaCha8Rng,
) -> SynthExample {
    let (h, w) = (cfg.grid_height, cfg.grid_width);
    let mut quadrants = [0usize, 1, 2, 3];
    quadrants.shuffle(rng);
    let mut categories = [0usize, 1, 2, 3];
    categories.shuffle(rng);

    let extra = match cfg.variant {
        SynthVariant::Questions => cfg.distractors,
        SynthVariant::Activity => 0,
        SynthVariant::TwoAnswers => 1,
    };
    let placements: Vec<Placement> = (0..=extra)
        .map(|i| {
            let (row, col) = random_cell_in(quadrants[i], h, w, rng);
            let obj = categories[i] * 3 + rng.gen_range(0..3);
            Placement { obj, row, col }
        })
        .collect();
    let features = render(cfg, world, &placements, rng);
    let evidence = &placements[0];
    let quadrant = quadrants[0];
    let category = categories[0];

    let (question, answer) = match cfg.variant {
        SynthVariant::Questions => {
            if rng.gen_bool(0.5) {
                (
                    vec!["where", "is", "the", category_name(category)],
                    QUADRANTS[quadrant].to_string(),
                )
            } else {
                (
                    vec!["what", "is", "the", category_name(category)],
                    object_name(evidence.obj).to_string(),
                )
            }
        }
        SynthVariant::Activity | SynthVariant::TwoAnswers => {
            (Vec::new(), category_name(category).to_string())
        }
    };
    let mut mask = vec![false; h * w];
    mask[evidence.row * w + evidence.col] = true;
    SynthExample {
        record: ExampleRecord {
            features_path: format!("features/{id}.pjxf"),
            att_gt_path: Some(format!("masks/{id}.pgm")),
            id,
            question: question.into_iter().map(str::to_string).collect(),
            answer,
            explanations: vec![justification(evidence.obj, quadrant)],
        },
        features,
        evidence: (evidence.row, evidence.col),
        evidence_object: evidence.obj,
        mask,
    }
}

/// Builds train/val/test splits; identical seeds give identical datasets.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = SynthWorld::new(config.channels - POSITION_CHANNELS, &mut rng);
    let mut make = |split: &str, n: usize| -> Vec<SynthExample> {
        (0..n)
            .map(|i| example(config, &world, format!("{split}-{i:05}"), &mut rng))
            .collect()
    };
    let train = make("train", config.train);
    let val = make("val", config.val);
    let test = make("test", config.test);
    Ok(SyntheticDataset {
        config: config.clone(),
        seed,
        world,
        train,
        val,
        test,
    })
}

/// Checks that the evidence cell agrees with the answer and justification.
pub fn validate_example(ex: &SynthExample, world: &SynthWorld) -> Result<()> {
    let f = &ex.features;
    let (h, w) = (f.height(), f.width());
    let (row, col) = ex.evidence;
    let fail = |msg: String| Err(PjxError::Contract(format!("{}: {msg}", ex.record.id)));
    let code: Vec<f64> = (POSITION_CHANNELS..f.channels()).map(|c| f.at(c, row, col)).collect();
    let obj = world.nearest_object(&code);
    if obj != ex.evidence_object {
        return fail(format!("evidence cell encodes {}, not {}", object_name(obj), object_name(ex.evidence_object)));
    }
    let quadrant = (0..POSITION_CHANNELS)
        .max_by(|&a, &b| f.at(a, row, col).total_cmp(&f.at(b, row, col)))
        .unwrap();
    if quadrant != quadrant_of(row, col, h, w) {
        return fail("quadrant code disagrees with cell position".into());
    }
    let q = &ex.record.question;
    let answer_ok = match q.first().map(String::as_str) {
        Some("where") => ex.record.answer == QUADRANTS[quadrant],
        Some("what") => ex.record.answer == object_name(obj),
        None => ex.record.answer == category_name(obj / 3),
        Some(other) => return fail(format!("unknown question word {other}")),
    };
    if !answer_ok {
        return fail(format!("answer `{}` inconsistent with evidence", ex.record.answer));
    }
    if q.len() == 4 && q[3] != category_name(obj / 3) {
        return fail("question category differs from evidence".into());
    }
    if ex.record.explanations != [justification(obj, quadrant)] {
        return fail("justification does not describe the evidence".into());
    }
    if ex.mask.iter().filter(|&&m| m).count() != 1 || !ex.mask[row * w + col] {
        return fail("mask is not one-hot at the evidence cell".into());
    }
    Ok(())
}

/// Writes `<split>.jsonl`, `features/*.pjxf` and `masks/*.pgm` under `dir`.
pub fn write_synthetic(data: &SyntheticDataset, dir: &Path) -> Result<()> {
    let io = |p: &Path, e| PjxError::io(p, e);
    for sub in ["features", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| io(&p, e))?;
    }
    let cfg = &data.config;
    for (name, examples) in data.splits() {
        for ex in examples {
            let fp = dir.join(&ex.record.features_path);
            let mut buf = Vec::new();
            ex.features.write(&mut buf).map_err(|e| io(&fp, e))?;
            fs::write(&fp, buf).map_err(|e| io(&fp, e))?;
            if let Some(mp) = &ex.record.att_gt_path {
                let mp = dir.join(mp);
                let pgm = mask_to_pgm(&ex.mask, cfg.grid_height, cfg.grid_width, cfg.mask_upscale);
                fs::write(&mp, pgm).map_err(|e| io(&mp, e))?;
            }
        }
        let records: Vec<ExampleRecord> = examples.iter().map(|e| e.record.clone()).collect();
        save_dataset(dir, name, &records)?;
    }
    Ok(())
}
