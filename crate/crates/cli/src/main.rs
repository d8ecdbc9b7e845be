//! `pjx`: train, evaluate and inspect pointing-and-justification models.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! abort during training, 4 checkpoint mismatch.

mod manifest;
mod meta;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pjx_core::data::{
    generate_synthetic, load_dataset, prepare_records, tokenize, validate_example, write_synthetic, ExampleRecord,
    PreparedExample, SynthConfig, SynthVariant, Vocabularies,
};
use pjx_core::model::{DecodeMode, QuestionMode, SpatialFeatures};
use pjx_core::train::{evaluate_predictions, fit, predict_all, TrainConfig};
use pjx_core::PjxError;
use serde_json::json;

use manifest::{write_atomic, RunManifest};
use meta::{meta_path, sidecar, CheckpointMeta, META_FORMAT};

#[derive(Parser)]
#[command(name = "pjx", version, about = "Pointing and justification models for visual question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Answer, justify and write attention heatmaps for one example.
    Explain(ExplainArgs),
    /// Write a synthetic grid-world dataset.
    GenSynth(GenSynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory holding train.jsonl and val.jsonl.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write; sidecars are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set epochs=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, env = "PJX_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Beam width; 0 decodes greedily.
    #[arg(long, default_value_t = 0)]
    beam: usize,
    /// Longest justification, defaults to the training setting.
    #[arg(long)]
    max_len: Option<usize>,
}

impl DecodeArgs {
    fn mode(&self) -> DecodeMode {
        match self.beam {
            0 => DecodeMode::Greedy,
            k => DecodeMode::Beam(k),
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Directory for report.json, report.txt and predictions.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Seed of the random-point baseline.
    #[arg(long, env = "PJX_SEED", default_value_t = 0)]
    seed: u64,
    /// Use the model's own justifications and justification maps as the
    /// references, a consistency check of the metric pipeline.
    #[arg(long)]
    self_reference: bool,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory to look `--id` up in.
    #[arg(long, requires = "id")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, requires = "data")]
    id: Option<String>,
    /// Feature file to explain instead of a dataset example.
    #[arg(long, conflicts_with = "id")]
    features: Option<PathBuf>,
    /// Question text for `--features`.
    #[arg(long, requires = "features", default_value = "")]
    question: String,
    /// Justify this answer label instead of the predicted one.
    #[arg(long)]
    answer: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Pixel repeat factor of the enlarged heatmaps.
    #[arg(long, default_value_t = 8)]
    upscale: usize,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Questions,
    Activity,
    TwoAnswers,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "PJX_SEED", default_value_t = 0)]
    seed: u64,
    /// JSON generator configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PjxError>() {
            return match e {
                PjxError::Numerical(_) => 3,
                PjxError::Checkpoint(_) => 4,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Explain(a) => explain(a),
        Command::GenSynth(a) => gen_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(p) = &a.config {
        let text = fs::read_to_string(p).with_context(|| format!("reading --config {}", p.display()))?;
        cfg.apply_text(&text)?;
    }
    for o in &a.overrides {
        let Some((k, v)) = o.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{o}`");
        };
        cfg.set(k, v)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_split(dir: &Path, split: &str) -> Result<Vec<ExampleRecord>> {
    if !dir.is_dir() {
        bail!("dataset directory {} does not exist", dir.display());
    }
    Ok(load_dataset(dir, split)?)
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a)?;
    let train_records = load_split(&a.data, "train").context("--data")?;
    let val_records = load_split(&a.data, "val").context("--data")?;
    let vocab = Vocabularies::build(&train_records, cfg.min_word_freq, cfg.max_answers)?;
    let train_set = prepare_records(&train_records, &a.data, &vocab)?;
    let val_set = prepare_records(&val_records, &a.data, &vocab)?;
    let first = &train_set.first().context("training split is empty")?.features;
    let mode = if train_records.iter().all(ExampleRecord::is_activity) {
        QuestionMode::Ones
    } else {
        QuestionMode::Question
    };
    let model_cfg = cfg.model_config(first.channels(), first.height(), first.width(), &vocab, mode);

    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let manifest = RunManifest::begin(
        &sidecar(&a.out, "manifest.json"),
        "train",
        json!({ "data": a.data, "train": cfg, "model": model_cfg }),
        Some(cfg.seed),
    )?;
    let mut model = pjx_core::model::PjxModel::new(model_cfg.clone(), cfg.seed)?;
    let report = fit(&mut model, &train_set, &val_set, &cfg, Some(&a.out))?;
    for e in report.pretrain.iter().chain(&report.epochs) {
        eprintln!(
            "epoch {:>3}  loss {:.4}/{:.4}  val {:.4}/{:.4}  acc {:.1}%  {:.1}s",
            e.epoch, e.answer_loss, e.explanation_loss, e.val_answer_loss, e.val_explanation_loss, e.val_accuracy, e.wall_time_secs
        );
    }
    let meta = CheckpointMeta {
        format: META_FORMAT,
        version: manifest::version(),
        model: model_cfg,
        train: cfg,
        vocab,
    };
    let mp = meta_path(&a.out);
    write_atomic(&mp, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    let rp = sidecar(&a.out, "report.json");
    write_atomic(&rp, serde_json::to_string_pretty(&report)?.as_bytes())?;
    println!(
        "trained {} epochs, best epoch {} (val loss {:.4}), checkpoint {}",
        report.epochs.len(),
        report.best_epoch,
        report.best_val_loss,
        a.out.display()
    );
    manifest.finish(vec![a.out, mp, rp])
}

/// Errors when the data grid does not fit the checkpoint.
fn check_features(meta: &CheckpointMeta, f: &SpatialFeatures) -> Result<()> {
    let m = &meta.model;
    if (f.channels(), f.height(), f.width()) != (m.feature_channels, m.grid_height, m.grid_width) {
        return Err(PjxError::Checkpoint(format!(
            "features are {}x{}x{}, checkpoint expects {}x{}x{}",
            f.channels(),
            f.height(),
            f.width(),
            m.feature_channels,
            m.grid_height,
            m.grid_width
        ))
        .into());
    }
    Ok(())
}

fn training_sentences(dir: &Path) -> Result<Vec<Vec<String>>> {
    if !dir.join("train.jsonl").exists() {
        return Ok(Vec::new());
    }
    let records = load_dataset(dir, "train")?;
    Ok(records.iter().flat_map(|r| r.explanations.iter().map(|e| tokenize(e))).collect())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (model, meta) = meta::load(&a.checkpoint)?;
    let records = load_split(&a.data, &a.split).context("--data")?;
    let mut data = prepare_records(&records, &a.data, &meta.vocab)?;
    if let Some(ex) = data.first() {
        check_features(&meta, &ex.features)?;
    }
    create_dir(&a.out)?;
    let manifest = RunManifest::begin(
        &a.out.join("manifest.json"),
        "eval",
        json!({
            "checkpoint": a.checkpoint,
            "data": a.data,
            "split": a.split,
            "beam": a.decode.beam,
            "self_reference": a.self_reference,
        }),
        Some(a.seed),
    )?;
    let max_len = a.decode.max_len.unwrap_or(meta.train.max_explanation_len);
    let predictions = predict_all(&model, &meta.vocab, &data, a.decode.mode(), max_len, false)?;
    if a.self_reference {
        for (ex, p) in data.iter_mut().zip(&predictions) {
            ex.references = vec![p.explanation.clone()];
            ex.attention_gt = Some(p.explanation_attention.clone());
        }
    }
    let training = training_sentences(&a.data)?;
    let report = evaluate_predictions(&a.split, &data, &predictions, &training, a.seed)?;

    let json_path = a.out.join("report.json");
    let text_path = a.out.join("report.txt");
    let pred_path = a.out.join("predictions.jsonl");
    write_atomic(&json_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_atomic(&text_path, report.to_table().as_bytes())?;
    let mut lines = String::new();
    for p in &predictions {
        lines.push_str(&serde_json::to_string(p)?);
        lines.push('\n');
    }
    write_atomic(&pred_path, lines.as_bytes())?;
    print!("{}", report.to_table());
    manifest.finish(vec![json_path, text_path, pred_path])
}

/// The justification as a sentence that starts with "because".
fn because(tokens: &[String]) -> String {
    let body = tokens.join(" ");
    if tokens.first().map(String::as_str) == Some("because") {
        body
    } else if body.is_empty() {
        "because".to_string()
    } else {
        format!("because {body}")
    }
}

fn explain(a: ExplainArgs) -> Result<()> {
    let (model, meta) = meta::load(&a.checkpoint)?;
    let (name, example): (String, PreparedExample) = match (&a.id, &a.features) {
        (Some(id), _) => {
            let dir = a.data.as_ref().expect("clap requires --data with --id");
            let records = load_split(dir, &a.split).context("--data")?;
            let record = records
                .iter()
                .find(|r| &r.id == id)
                .with_context(|| format!("--id {id}: no such example in {} split", a.split))?;
            let mut prepared = prepare_records(std::slice::from_ref(record), dir, &meta.vocab)?;
            (id.clone(), prepared.remove(0))
        }
        (None, Some(path)) => {
            let record = ExampleRecord {
                id: path.file_stem().map_or("example".into(), |s| s.to_string_lossy().into_owned()),
                features_path: path.file_name().context("--features names no file")?.to_string_lossy().into_owned(),
                question: tokenize(&a.question),
                answer: "?".into(),
                explanations: Vec::new(),
                att_gt_path: None,
            };
            let dir = path.parent().unwrap_or(Path::new("."));
            let mut prepared = prepare_records(std::slice::from_ref(&record), dir, &meta.vocab)?;
            (record.id, prepared.remove(0))
        }
        (None, None) => bail!("give either --data with --id, or --features"),
    };
    check_features(&meta, &example.features)?;
    let max_len = a.decode.max_len.unwrap_or(meta.train.max_explanation_len);
    let out = match &a.answer {
        Some(label) => {
            let idx = meta
                .vocab
                .answers
                .index(label)
                .with_context(|| format!("--answer `{label}` is not among the model's answers"))?;
            model.explain_answer(&example.features, &example.question, idx, a.decode.mode(), max_len)?
        }
        None => model.explain(&example.features, &example.question, a.decode.mode(), max_len)?,
    };
    let chosen = match &a.answer {
        Some(label) => label.clone(),
        None => meta.vocab.answers.label(out.answer.best()).to_string(),
    };
    let words = meta.vocab.explanation.decode(&out.explanation.tokens);
    let sentence = because(&words);

    let big = a.out.join(format!("x{}", a.upscale));
    create_dir(&big)?;
    let manifest = RunManifest::begin(
        &a.out.join("manifest.json"),
        "explain",
        json!({ "checkpoint": a.checkpoint, "example": name, "answer": a.answer, "beam": a.decode.beam }),
        None,
    )?;
    let mut outputs = Vec::new();
    for (tag, map) in [("vqa-att", &out.answer_attention), ("exp-att", &out.explanation.attention)] {
        let native = a.out.join(format!("{name}.{tag}.pgm"));
        let enlarged = big.join(format!("{name}.{tag}.pgm"));
        write_atomic(&native, map.to_pgm(1).as_bytes())?;
        write_atomic(&enlarged, map.to_pgm(a.upscale).as_bytes())?;
        outputs.extend([native, enlarged]);
    }
    let record = json!({
        "id": name,
        "answer": chosen,
        "answer_prob": out.answer.probs()[meta.vocab.answers.index(&chosen).unwrap_or(out.answer.best())],
        "explanation": sentence,
        "answer_attention": out.answer_attention.rows(),
        "explanation_attention": out.explanation.attention.rows(),
    });
    let rec_path = a.out.join(format!("{name}.json"));
    write_atomic(&rec_path, serde_json::to_string_pretty(&record)?.as_bytes())?;
    outputs.push(rec_path);
    println!("{name}: {chosen}");
    println!("{sentence}");
    manifest.finish(outputs)
}

fn gen_synth(a: GenSynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading --config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing --config {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = a.variant {
        cfg.variant = match v {
            Variant::Questions => SynthVariant::Questions,
            Variant::Activity => SynthVariant::Activity,
            Variant::TwoAnswers => SynthVariant::TwoAnswers,
        };
    }
    cfg.train = a.train.unwrap_or(cfg.train);
    cfg.val = a.val.unwrap_or(cfg.val);
    cfg.test = a.test.unwrap_or(cfg.test);
    cfg.validate()?;
    create_dir(&a.out).context("--out")?;
    let manifest = RunManifest::begin(&a.out.join("manifest.json"), "gen-synth", json!(cfg), Some(a.seed))?;
    let data = generate_synthetic(&cfg, a.seed)?;
    for (_, split) in data.splits() {
        for ex in split {
            validate_example(ex, &data.world)?;
        }
    }
    write_synthetic(&data, &a.out)?;
    let cfg_path = a.out.join("synth.json");
    write_atomic(&cfg_path, serde_json::to_string_pretty(&json!({ "seed": a.seed, "config": cfg }))?.as_bytes())?;
    println!(
        "wrote {} train, {} val, {} test examples to {}",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        a.out.display()
    );
    manifest.finish(vec![a.out.join("train.jsonl"), a.out.join("val.jsonl"), a.out.join("test.jsonl"), cfg_path])
}
