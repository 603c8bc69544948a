//! File-to-file pipeline stages. Each stage is a pure function of its inputs,
//! the run configuration and the seed, so reruns reproduce every artifact
//! byte for byte.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::data::{load_dataset, save_dataset, save_scores, split_bags, synth_generate, Dataset, Split, SynthConfig};
use crate::encoder::{predict_scores, train_encoder, EncoderModel};
use crate::error::{Error, Result};
use crate::eval::{evaluate, video_frames, MetricsReport};
use crate::gradsuite::{run_suites, SuiteOutcome};
use crate::mil::{generate_labels, train_generator, GeneratorModel, LabelsFile};

pub const LABELS_FILE: &str = "labels.json";
pub const GENERATOR_FILE: &str = "generator.json";
pub const GENERATOR_LOG: &str = "generator_log.jsonl";
pub const ENCODER_FILE: &str = "encoder.json";
pub const ENCODER_LOG: &str = "train_log.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const SCORES_DIR: &str = "scores";

/// Seeds per gradient suite.
pub const GRADCHECK_SEEDS: u64 = 20;

// Independent streams of one seed for each stage.
const STREAM_GENERATOR: u64 = 1;
const STREAM_ENCODER: u64 = 2;

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    for (epoch, loss) in trace.iter().enumerate() {
        let line = serde_json::json!({ "epoch": epoch, "mean_loss": loss });
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a synthetic dataset under `out`; returns the manifest path.
pub fn synth(cfg: &SynthConfig, out: &Path) -> Result<PathBuf> {
    let ds = synth_generate::<f64>(cfg)?;
    log::info!("synthesized {} videos into {}", ds.len(), out.display());
    save_dataset(&ds, out)
}

/// The synthetic configuration a run config implies.
pub fn synth_config(run: &RunConfig) -> SynthConfig {
    SynthConfig {
        seed: run.seed,
        clip_len_frames: run.clip_len_frames,
        ..SynthConfig::default()
    }
}

fn train_split(ds: &Dataset<f64>) -> Result<Dataset<f64>> {
    let train = ds.subset(Split::Train);
    train.check_trainable()?;
    Ok(train)
}

#[derive(Clone, Debug)]
pub struct GenLabelsOutput {
    pub labels: LabelsFile,
    pub trace: Vec<f64>,
}

/// Stage I on the training split: writes the labels, the generator
/// checkpoint and its loss log under `out`.
pub fn gen_labels(run: &RunConfig, manifest: &Path, out: &Path) -> Result<GenLabelsOutput> {
    let ds = load_dataset::<f64>(manifest)?;
    let train = train_split(&ds)?;
    let (pos, neg) = split_bags(&train)?;
    let mut rng = stage_rng(run.seed, STREAM_GENERATOR);
    let mut model = GeneratorModel::new(train.feature_dim, run.dropout, &mut rng)?;
    log::info!(
        "stage I: {} positive / {} negative bags, {} epochs",
        pos.len(),
        neg.len(),
        run.gen_epochs
    );
    let trace = train_generator(&mut model, &pos, &neg, &run.generator(), &mut rng)?;
    let labels = LabelsFile {
        videos: generate_labels(&model, &train)?,
    };
    labels.save(&out.join(LABELS_FILE))?;
    model.save(&out.join(GENERATOR_FILE))?;
    write_trace(&out.join(GENERATOR_LOG), &trace)?;
    Ok(GenLabelsOutput { labels, trace })
}

/// Stage II on the training split: writes the encoder checkpoint and the
/// per-epoch log under `out`. Returns the loss trace.
pub fn train(run: &RunConfig, manifest: &Path, labels: &Path, out: &Path) -> Result<Vec<f64>> {
    let ds = load_dataset::<f64>(manifest)?;
    let train = train_split(&ds)?;
    let labels = LabelsFile::load(labels)?;
    let mut rng = stage_rng(run.seed, STREAM_ENCODER);
    let raw = train.videos.iter().filter(|v| v.raw_clips.is_some()).count();
    let mut model = match raw {
        0 => EncoderModel::new(train.feature_dim, run.dropout, &mut rng)?,
        n if n == train.len() => EncoderModel::with_attention(train.feature_dim, run.detectors, run.dropout, &mut rng)?,
        _ => {
            return Err(Error::Dataset(
                "raw clips must be supplied for every training video or none".into(),
            ))
        }
    };
    let videos: Vec<_> = train.videos.iter().collect();
    log::info!(
        "stage II: {} videos, {} epochs, raw-clip branch {}",
        videos.len(),
        run.enc_epochs,
        if raw > 0 { "on" } else { "off" }
    );
    let log_path = out.join(ENCODER_LOG);
    let mut log = create(&log_path)?;
    let trace = train_encoder(&mut model, &videos, &labels, &run.encoder(), &mut rng, Some(&mut log))?;
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    model.save(&out.join(ENCODER_FILE))?;
    Ok(trace)
}

/// Scores the test split, writes the report JSON and one score curve per
/// video into `scores_dir`.
pub fn eval(manifest: &Path, model: &Path, report: &Path, scores_dir: &Path) -> Result<MetricsReport> {
    let ds = load_dataset::<f64>(manifest)?;
    let test = ds.subset(Split::Test);
    if test.is_empty() {
        return Err(Error::Dataset("no test videos".into()));
    }
    let model = EncoderModel::<f64>::load(model)?;
    let videos: Vec<_> = test.videos.iter().collect();
    let scores = predict_scores(&model, &videos)?;
    let metrics = evaluate(&videos, &scores)?;
    for (v, s) in videos.iter().zip(&scores) {
        let f = video_frames(v, s)?;
        save_scores(&v.id, &f.scores, &f.gt, &scores_dir.join(format!("{}.csv", v.id)))?;
    }
    metrics.save(report)?;
    log::info!("pooled frame AUC {:.4} over {} frames", metrics.auc, metrics.n_frames);
    Ok(metrics)
}

/// Every gradient suite over seeds `0..GRADCHECK_SEEDS`.
pub fn gradcheck() -> Result<Vec<SuiteOutcome>> {
    run_suites(0..GRADCHECK_SEEDS)
}
