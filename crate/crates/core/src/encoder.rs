//! Stage II: FC layers over fused clip features, the dual spatio-temporal
//! graph, class-reweighted cross-entropy against stage I pseudo-labels, and
//! the SGD training loop.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionBranch, ClipCache};
use crate::data::{VideoBag, BODY_DIM, FUSED_DIM};
use crate::error::{Error, Result};
use crate::graph::{
    build_temporal_adjacency, fuse_predict, fuse_predict_backward, normalize_backward, normalize_forward,
    similarity_backward, similarity_forward, GcnCache, GcnStack, NormCache, SimilarityCache,
};
use crate::mil::{write_text, LabelsFile};
use crate::nn::activation::relu_backward;
use crate::nn::{dropout, dropout_backward, relu, Affine, Optimizer, ParamSet, Tensor, TensorRecord};
use crate::scalar::Scalar;

pub const ENCODER_HIDDEN: [usize; 2] = [512, 128];

/// Probabilities are clamped to `[P_CLAMP, 1 − P_CLAMP]` inside the loss.
pub const P_CLAMP: f64 = 1e-7;

/// `−w0·y·ln p − w1·(1 − y)·ln(1 − p)` with `p` clamped.
pub fn weighted_ce_loss<T: Scalar>(y: T, p: T, w0: f64, w1: f64) -> T {
    let eps = T::lit(P_CLAMP);
    let p = p.max(eps).min(T::one() - eps);
    -(T::lit(w0) * y * p.ln()) - T::lit(w1) * (T::one() - y) * (T::one() - p).ln()
}

/// `∂L/∂p`; zero where the clamp is active.
pub fn weighted_ce_grad<T: Scalar>(y: T, p: T, w0: f64, w1: f64) -> T {
    let eps = T::lit(P_CLAMP);
    if p < eps || p > T::one() - eps {
        return T::zero();
    }
    -(T::lit(w0) * y / p) + T::lit(w1) * (T::one() - y) / (T::one() - p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub w0: f64,
    pub w1: f64,
    pub seed: u64,
    /// Update the stub backbone along with the rest of the raw-clip branch.
    pub train_backbone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            weight_decay: 5e-4,
            epochs: 300,
            w0: 1.2,
            w1: 0.8,
            seed: 7,
            train_backbone: true,
        }
    }
}

impl TrainConfig {
    /// Library-level check: `lr > 0`, the other rates non-negative. The run
    /// configuration is stricter.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, v) in [("weight_decay", self.weight_decay), ("w0", self.w0), ("w1", self.w1)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EncoderModel<T> {
    pub params: ParamSet<T>,
    pub fc1: Affine,
    pub fc2: Affine,
    pub gcn_temporal: GcnStack,
    pub gcn_similarity: GcnStack,
    pub attention: Option<AttentionBranch>,
    pub dropout: f64,
    input_dim: usize,
}

/// Everything the backward pass needs from one video's forward pass.
#[derive(Clone, Debug)]
pub struct EncoderCache<T> {
    x_in: Tensor<T>,
    a1: Tensor<T>,
    mask1: Option<Tensor<T>>,
    x0: Tensor<T>,
    a2: Tensor<T>,
    mask2: Option<Tensor<T>>,
    x: Tensor<T>,
    hat_t: Tensor<T>,
    sim: Tensor<T>,
    sim_cache: SimilarityCache,
    norm_cache: NormCache<T>,
    hat_f: Tensor<T>,
    gcn_t: GcnCache<T>,
    gcn_f: GcnCache<T>,
    fused: Tensor<T>,
    clips: Vec<ClipCache<T>>,
    pub probs: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct EncoderCheckpoint {
    kind: String,
    input_dim: usize,
    hidden: [usize; 2],
    gcn: [usize; 2],
    dropout: f64,
    detectors: Option<usize>,
    tensors: Vec<TensorRecord>,
}

impl<T: Scalar> EncoderModel<T> {
    /// Encoder over precomputed `input_dim` features.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, dropout: f64, rng: &mut R) -> Result<Self> {
        Self::build(
            input_dim,
            ENCODER_HIDDEN,
            [crate::graph::GCN_HIDDEN, crate::graph::GCN_OUT],
            dropout,
            None,
            rng,
        )
    }

    /// Encoder whose inputs are `input_dim` behavioral features per clip plus
    /// the 128-d body feature of the raw-clip attention branch.
    pub fn with_attention<R: Rng + ?Sized>(input_dim: usize, k: usize, dropout: f64, rng: &mut R) -> Result<Self> {
        Self::build(
            input_dim,
            ENCODER_HIDDEN,
            [crate::graph::GCN_HIDDEN, crate::graph::GCN_OUT],
            dropout,
            Some(k),
            rng,
        )
    }

    /// Reduced widths, for gradient checks.
    pub fn with_widths<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: [usize; 2],
        gcn: [usize; 2],
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(input_dim, hidden, gcn, dropout, None, rng)
    }

    fn build<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: [usize; 2],
        gcn: [usize; 2],
        dropout: f64,
        detectors: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("encoder input dimension must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {dropout}")));
        }
        let mut params = ParamSet::new();
        let fc_in = input_dim + if detectors.is_some() { BODY_DIM } else { 0 };
        let fc1 = Affine::new(&mut params, "encoder.fc1", fc_in, hidden[0], rng)?;
        let fc2 = Affine::new(&mut params, "encoder.fc2", hidden[0], hidden[1], rng)?;
        let gcn_temporal = GcnStack::with_widths(&mut params, "gcn.temporal", hidden[1], gcn[0], gcn[1], rng)?;
        let gcn_similarity = GcnStack::with_widths(&mut params, "gcn.similarity", hidden[1], gcn[0], gcn[1], rng)?;
        let attention = match detectors {
            Some(k) => Some(AttentionBranch::new(&mut params, k, rng)?),
            None => None,
        };
        Ok(EncoderModel {
            params,
            fc1,
            fc2,
            gcn_temporal,
            gcn_similarity,
            attention,
            dropout,
            input_dim,
        })
    }

    /// Width of the per-clip feature rows the model consumes.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Forward pass over one video. `raw` holds the clip tensors
    /// `[N, 3, frames, H, W]` when the attention branch is present.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        features: &Tensor<T>,
        raw: Option<&Tensor<T>>,
        training: bool,
        rng: &mut R,
    ) -> Result<EncoderCache<T>> {
        if features.rank() != 2 || features.cols() != self.input_dim {
            return Err(Error::Dimension {
                context: "encoder input".into(),
                expected: self.input_dim,
                found: if features.rank() == 2 {
                    features.cols()
                } else {
                    features.len()
                },
            });
        }
        let n = features.rows();
        if n == 0 {
            return Err(Error::Shape("video has no clips".into()));
        }
        let (x_in, clips) = match &self.attention {
            None => (features.clone(), Vec::new()),
            Some(branch) => {
                let raw = raw.ok_or_else(|| Error::RawClip("model expects raw clip tensors".into()))?;
                if raw.rank() != 5 || raw.shape()[0] != n {
                    return Err(Error::RawClip(format!(
                        "raw clips {:?} do not match {n} clips",
                        raw.shape()
                    )));
                }
                let per = raw.len() / n;
                let clip_shape = &raw.shape()[1..];
                let clips = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let clip = Tensor::from_vec(clip_shape, raw.data()[i * per..(i + 1) * per].to_vec())?;
                        branch.forward(&self.params, &clip)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let d = self.input_dim;
                let mut x = Vec::with_capacity(n * (d + BODY_DIM));
                for (i, c) in clips.iter().enumerate() {
                    x.extend_from_slice(features.row(i));
                    x.extend_from_slice(c.body.data());
                }
                (Tensor::from_vec(&[n, d + BODY_DIM], x)?, clips)
            }
        };

        let a1 = relu(&self.fc1.forward(&self.params, &x_in)?);
        let (x0, mask1) = dropout(&a1, self.dropout, training, rng);
        let a2 = relu(&self.fc2.forward(&self.params, &x0)?);
        let (x, mask2) = dropout(&a2, self.dropout, training, rng);

        let (hat_t, _) = normalize_forward(&build_temporal_adjacency::<T>(n)?.values)?;
        let (sim, sim_cache) = similarity_forward(&x)?;
        let (hat_f, norm_cache) = normalize_forward(&sim.values)?;
        let (h_t, gcn_t) = self.gcn_temporal.forward(&self.params, &hat_t, &x)?;
        let (h_f, gcn_f) = self.gcn_similarity.forward(&self.params, &hat_f, &x)?;
        let fused = fuse_predict(&h_t, &h_f)?;
        let probs = (0..n).map(|i| fused.row(i)[1]).collect();
        Ok(EncoderCache {
            x_in,
            a1,
            mask1,
            x0,
            a2,
            mask2,
            x,
            hat_t,
            sim: sim.values,
            sim_cache,
            norm_cache,
            hat_f,
            gcn_t,
            gcn_f,
            fused,
            clips,
            probs,
        })
    }

    /// Anomaly probability per clip.
    pub fn encoder_forward<R: Rng + ?Sized>(
        &self,
        features: &Tensor<T>,
        raw: Option<&Tensor<T>>,
        training: bool,
        rng: &mut R,
    ) -> Result<Vec<T>> {
        Ok(self.forward(features, raw, training, rng)?.probs)
    }

    /// Accumulates gradients for `∂L/∂p` over the clips. When the attention
    /// branch is present its losses against `labels` are included with weight
    /// `1/N` each.
    pub fn backward(&mut self, cache: &EncoderCache<T>, d_probs: &[T], labels: &[T], cfg: &TrainConfig) -> Result<()> {
        let n = d_probs.len();
        let mut dp = Tensor::zeros(&[n, 2]);
        for (i, &g) in d_probs.iter().enumerate() {
            dp.data_mut()[2 * i + 1] = g;
        }
        let dh = fuse_predict_backward(&cache.fused, &dp)?;
        let ps = &mut self.params;
        let (mut dx, _) = self
            .gcn_temporal
            .backward(ps, &cache.hat_t, &cache.x, &cache.gcn_t, &dh);
        let (dx_f, dhat_f) = self
            .gcn_similarity
            .backward(ps, &cache.hat_f, &cache.x, &cache.gcn_f, &dh);
        dx.add_assign(&dx_f)?;
        let dsim = normalize_backward(&cache.norm_cache, &dhat_f);
        dx.add_assign(&similarity_backward(&cache.x, &cache.sim, &cache.sim_cache, &dsim))?;

        let da2 = dropout_backward(&dx, cache.mask2.as_ref());
        let dz2 = relu_backward(&cache.a2, &da2)?;
        let dx0 = self.fc2.backward(ps, &cache.x0, &dz2, true).expect("dx");
        let da1 = dropout_backward(&dx0, cache.mask1.as_ref());
        let dz1 = relu_backward(&cache.a1, &da1)?;
        let need = self.attention.is_some();
        let dx_in = self.fc1.backward(ps, &cache.x_in, &dz1, need);

        if let (Some(branch), Some(dx_in)) = (&self.attention, dx_in) {
            let d = self.input_dim;
            let scale = T::one() / T::lit(n as f64);
            for (i, clip) in cache.clips.iter().enumerate() {
                let d_body = &dx_in.row(i)[d..];
                branch.backward(
                    ps,
                    clip,
                    Some(d_body),
                    labels[i],
                    cfg.w0,
                    cfg.w1,
                    scale,
                    cfg.train_backbone,
                )?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = EncoderCheckpoint {
            kind: "encoder".into(),
            input_dim: self.input_dim,
            hidden: [self.fc1.d_out, self.fc2.d_out],
            gcn: [self.gcn_temporal.hidden, self.gcn_temporal.d_out],
            dropout: self.dropout,
            detectors: self.attention.map(|a| a.head.k),
            tensors: self.params.to_records(),
        };
        let json = serde_json::to_string(&ck).map_err(|e| Error::json("encoder checkpoint", e))?;
        write_text(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: EncoderCheckpoint =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if ck.kind != "encoder" {
            return Err(Error::Config(format!(
                "{} is a `{}` checkpoint",
                path.display(),
                ck.kind
            )));
        }
        let mut rng = crate::inert_rng();
        let mut model = Self::build(ck.input_dim, ck.hidden, ck.gcn, ck.dropout, ck.detectors, &mut rng)?;
        model.params.load_records(&ck.tensors)?;
        Ok(model)
    }
}

/// Mean weighted CE of one video plus, with raw clips, the mean attention
/// losses. Returns the loss and `∂L/∂p`.
pub fn video_loss<T: Scalar>(cache: &EncoderCache<T>, labels: &[T], cfg: &TrainConfig) -> (T, Vec<T>) {
    let n = T::lit(labels.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(labels.len());
    for (&y, &p) in labels.iter().zip(&cache.probs) {
        loss += weighted_ce_loss(y, p, cfg.w0, cfg.w1);
        grad.push(weighted_ce_grad(y, p, cfg.w0, cfg.w1) / n);
    }
    for (c, &y) in cache.clips.iter().zip(labels) {
        let (l1, l2) = crate::attention::attention_losses(y, c.attended, c.guided, cfg.w0, cfg.w1);
        loss += l1 + l2;
    }
    (loss / n, grad)
}

/// Forward, loss and backward for one video; gradients are accumulated.
pub fn video_step<T: Scalar, R: Rng + ?Sized>(
    model: &mut EncoderModel<T>,
    video: &VideoBag<T>,
    labels: &[T],
    cfg: &TrainConfig,
    training: bool,
    rng: &mut R,
) -> Result<T> {
    if labels.len() != video.num_clips() {
        return Err(Error::Length(format!(
            "labels for `{}`: expected {} clips, found {}",
            video.id,
            video.num_clips(),
            labels.len()
        )));
    }
    let cache = model.forward(&video.features, video.raw_clips.as_ref(), training, rng)?;
    let (loss, grad) = video_loss(&cache, labels, cfg);
    model.backward(&cache, &grad, labels, cfg)?;
    Ok(loss)
}

/// Looks up each video's pseudo-labels and checks clip counts.
pub fn resolve_labels<T: Scalar>(videos: &[&VideoBag<T>], labels: &LabelsFile) -> Result<Vec<Vec<T>>> {
    videos
        .iter()
        .map(|v| {
            let l = labels
                .get(&v.id)
                .ok_or_else(|| Error::Dataset(format!("no pseudo-labels for `{}`", v.id)))?;
            if l.labels.len() != v.num_clips() {
                return Err(Error::Length(format!(
                    "labels for `{}`: expected {} clips, found {}",
                    v.id,
                    v.num_clips(),
                    l.labels.len()
                )));
            }
            if l.labels.iter().any(|y| !(0.0..=1.0).contains(y)) {
                return Err(Error::Dataset(format!("labels for `{}` leave [0, 1]", v.id)));
            }
            Ok(l.labels.iter().map(|&y| T::lit(y)).collect())
        })
        .collect()
}

/// One SGD step per video in a freshly shuffled order each epoch. Returns
/// the mean loss of every epoch and writes `{"epoch", "mean_loss"}` lines to
/// `log` when given.
pub fn train_encoder<T: Scalar, R: Rng + ?Sized>(
    model: &mut EncoderModel<T>,
    videos: &[&VideoBag<T>],
    labels: &LabelsFile,
    cfg: &TrainConfig,
    rng: &mut R,
    mut log: Option<&mut dyn Write>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if videos.is_empty() {
        return Err(Error::Dataset("no training videos".into()));
    }
    let targets = resolve_labels(videos, labels)?;
    let opt = Optimizer::Sgd {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
    };
    let mut order: Vec<usize> = (0..videos.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for &i in &order {
            let loss = video_step(model, videos[i], &targets[i], cfg, true, rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("encoder loss on `{}`", videos[i].id),
                });
            }
            model.params.step(opt);
            total += loss.as_f64();
        }
        let mean = total / videos.len() as f64;
        log::debug!("encoder epoch {epoch}: mean loss {mean:.6}");
        if let Some(w) = log.as_deref_mut() {
            let line = serde_json::json!({ "epoch": epoch, "mean_loss": mean });
            writeln!(w, "{line}").map_err(|e| Error::io(Path::new("<training log>"), e))?;
        }
        trace.push(mean);
    }
    Ok(trace)
}

/// Inference-mode clip scores for every video, in input order.
pub fn predict_scores<T: Scalar>(model: &EncoderModel<T>, videos: &[&VideoBag<T>]) -> Result<Vec<Vec<T>>> {
    videos
        .par_iter()
        .map(|v| {
            let mut rng = crate::inert_rng();
            model.encoder_forward(&v.features, v.raw_clips.as_ref(), false, &mut rng)
        })
        .collect()
}

/// Default input width of the precomputed-feature path.
pub const DEFAULT_INPUT_DIM: usize = FUSED_DIM;
