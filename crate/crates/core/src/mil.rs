//! Stage I: continuous sub-bag sampling, the MLP anomaly scorer, the deep
//! MIL ranking loss and min-max clip pseudo-labels.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VideoBag};
use crate::error::{Error, Result};
use crate::nn::activation::relu_backward;
use crate::nn::{dropout, dropout_backward, relu, sigmoid, Affine, Optimizer, ParamSet, Tensor, TensorRecord};
use crate::scalar::Scalar;

pub const GENERATOR_HIDDEN: [usize; 2] = [512, 32];

/// Scores whose spread is below this are treated as constant.
pub const DEGENERATE_SPREAD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Sub-bags per bag (`L`).
    pub num_subbags: usize,
    /// Consecutive clips per sub-bag (`T`).
    pub subbag_len: usize,
    /// Smoothness weight.
    pub lambda1: f64,
    /// Sparsity weight.
    pub lambda2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub dropout: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_subbags: 32,
            subbag_len: 8,
            lambda1: 8e-5,
            lambda2: 8e-5,
            lr: 0.01,
            epochs: 100,
            dropout: 0.6,
        }
    }
}

/// A window of `T` consecutive clips and its averaged score.
#[derive(Clone, Debug, PartialEq)]
pub struct SubBag<T> {
    pub start: usize,
    pub scores: Vec<T>,
    pub score: T,
}

/// Start indices of `l` evenly spaced windows of length `t` over `n` clips.
///
/// Videos shorter than `t` are treated as padded to `t` by repeating the last
/// clip, so every window is `[0, t)` in that case.
pub fn sample_subbags(n: usize, l: usize, t: usize) -> Vec<usize> {
    assert!(l >= 1 && t >= 1, "need at least one sub-bag of at least one clip");
    let span = n.max(t) - t;
    if l == 1 {
        return vec![0];
    }
    (0..l).map(|i| i * span / (l - 1)).collect()
}

#[inline]
fn padded(i: usize, n: usize) -> usize {
    i.min(n - 1)
}

/// Groups per-clip scores into sub-bags, each scored by its mean.
pub fn subbag_scores<T: Scalar>(clip_scores: &[T], starts: &[usize], t: usize) -> Vec<SubBag<T>> {
    let n = clip_scores.len();
    starts
        .iter()
        .map(|&start| {
            let scores: Vec<T> = (start..start + t).map(|i| clip_scores[padded(i, n)]).collect();
            let score = scores.iter().copied().sum::<T>() / T::lit(t as f64);
            SubBag { start, scores, score }
        })
        .collect()
}

fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Hinge on the top positive and negative sub-bags plus smoothness and
/// sparsity on the positive sub-bags.
pub fn ranking_loss<T: Scalar>(pos: &[T], neg: &[T], lambda1: f64, lambda2: f64) -> T {
    ranking_loss_grad(pos, neg, lambda1, lambda2).0
}

/// [`ranking_loss`] with its (sub)gradients w.r.t. both score lists.
pub fn ranking_loss_grad<T: Scalar>(pos: &[T], neg: &[T], lambda1: f64, lambda2: f64) -> (T, Vec<T>, Vec<T>) {
    assert!(!pos.is_empty() && !neg.is_empty(), "ranking loss needs both bags");
    let (l1, l2) = (T::lit(lambda1), T::lit(lambda2));
    let (ia, ib) = (argmax(pos), argmax(neg));
    let margin = T::one() - pos[ia] + neg[ib];
    let mut dpos = vec![T::zero(); pos.len()];
    let mut dneg = vec![T::zero(); neg.len()];
    let mut loss = T::zero();
    if margin > T::zero() {
        loss += margin;
        dpos[ia] -= T::one();
        dneg[ib] += T::one();
    }
    let two = T::lit(2.0);
    let mut smooth = T::zero();
    for l in 0..pos.len().saturating_sub(1) {
        let d = pos[l] - pos[l + 1];
        smooth += d * d;
        dpos[l] += l1 * two * d;
        dpos[l + 1] -= l1 * two * d;
    }
    let sparse: T = pos.iter().copied().sum();
    for g in &mut dpos {
        *g += l2;
    }
    loss += l1 * smooth + l2 * sparse;
    (loss, dpos, dneg)
}

/// Three-layer MLP scorer: `d → 512 → 32 → 1`, ReLU, dropout, sigmoid.
#[derive(Clone, Debug)]
pub struct GeneratorModel<T> {
    pub params: ParamSet<T>,
    fc1: Affine,
    fc2: Affine,
    fc3: Affine,
    pub dropout: f64,
}

pub struct MlpCache<T> {
    x: Tensor<T>,
    a1: Tensor<T>,
    m1: Option<Tensor<T>>,
    d1: Tensor<T>,
    a2: Tensor<T>,
    m2: Option<Tensor<T>>,
    d2: Tensor<T>,
    scores: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct GeneratorCheckpoint {
    kind: String,
    input_dim: usize,
    hidden: [usize; 2],
    dropout: f64,
    tensors: Vec<TensorRecord>,
}

impl<T: Scalar> GeneratorModel<T> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, dropout: f64, rng: &mut R) -> Result<Self> {
        Self::with_widths(input_dim, GENERATOR_HIDDEN, dropout, rng)
    }

    /// Non-default hidden widths; only reduced-size checks use this.
    pub fn with_widths<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: [usize; 2],
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        let mut params = ParamSet::new();
        let fc1 = Affine::new(&mut params, "gen.fc1", input_dim, hidden[0], rng)?;
        let fc2 = Affine::new(&mut params, "gen.fc2", hidden[0], hidden[1], rng)?;
        let fc3 = Affine::new(&mut params, "gen.fc3", hidden[1], 1, rng)?;
        Ok(GeneratorModel {
            params,
            fc1,
            fc2,
            fc3,
            dropout,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.fc1.d_in
    }

    pub fn hidden(&self) -> [usize; 2] {
        [self.fc1.d_out, self.fc2.d_out]
    }

    /// Per-clip anomaly scores in `(0, 1)`.
    pub fn score_clips<R: Rng + ?Sized>(&self, features: &Tensor<T>, training: bool, rng: &mut R) -> Result<Vec<T>> {
        Ok(self.forward(features, training, rng)?.scores)
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &Tensor<T>, training: bool, rng: &mut R) -> Result<MlpCache<T>> {
        let ps = &self.params;
        let a1 = relu(&self.fc1.forward(ps, x)?);
        let (d1, m1) = dropout(&a1, self.dropout, training, rng);
        let a2 = relu(&self.fc2.forward(ps, &d1)?);
        let (d2, m2) = dropout(&a2, self.dropout, training, rng);
        let z3 = self.fc3.forward(ps, &d2)?;
        let scores = z3.data().iter().map(|&z| sigmoid(z)).collect();
        Ok(MlpCache {
            x: x.clone(),
            a1,
            m1,
            d1,
            a2,
            m2,
            d2,
            scores,
        })
    }

    /// Accumulates parameter gradients for upstream `d_scores`.
    pub fn backward(&mut self, cache: &MlpCache<T>, d_scores: &[T]) {
        let n = cache.scores.len();
        let dz3: Vec<T> = cache
            .scores
            .iter()
            .zip(d_scores)
            .map(|(&s, &g)| g * s * (T::one() - s))
            .collect();
        let dz3 = Tensor::from_vec(&[n, 1], dz3).expect("score count");
        let ps = &mut self.params;
        let dd2 = self.fc3.backward(ps, &cache.d2, &dz3, true).expect("dx requested");
        let da2 = dropout_backward(&dd2, cache.m2.as_ref());
        let dz2 = relu_backward(&cache.a2, &da2).expect("shapes");
        let dd1 = self.fc2.backward(ps, &cache.d1, &dz2, true).expect("dx requested");
        let da1 = dropout_backward(&dd1, cache.m1.as_ref());
        let dz1 = relu_backward(&cache.a1, &da1).expect("shapes");
        self.fc1.backward(ps, &cache.x, &dz1, false);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = GeneratorCheckpoint {
            kind: "generator".into(),
            input_dim: self.input_dim(),
            hidden: self.hidden(),
            dropout: self.dropout,
            tensors: self.params.to_records(),
        };
        let json = serde_json::to_string(&ck).map_err(|e| Error::json("generator checkpoint", e))?;
        write_text(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: GeneratorCheckpoint =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if ck.kind != "generator" {
            return Err(Error::Config(format!(
                "{} is a `{}` checkpoint",
                path.display(),
                ck.kind
            )));
        }
        let mut rng = crate::inert_rng();
        let mut model = Self::with_widths(ck.input_dim, ck.hidden, ck.dropout, &mut rng)?;
        model.params.load_records(&ck.tensors)?;
        Ok(model)
    }
}

pub(crate) fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Scores one positive and one negative bag, evaluates the ranking loss and
/// accumulates its gradient into the model. Returns the loss.
pub fn bag_pair_step<T: Scalar, R: Rng + ?Sized>(
    model: &mut GeneratorModel<T>,
    pos: &Tensor<T>,
    neg: &Tensor<T>,
    cfg: &GeneratorConfig,
    training: bool,
    rng: &mut R,
) -> Result<T> {
    let (na, nn) = (pos.rows(), neg.rows());
    if na == 0 || nn == 0 {
        return Err(Error::Dataset("bags must contain clips".into()));
    }
    // one forward over both bags' clips
    let mut stacked = pos.data().to_vec();
    stacked.extend_from_slice(neg.data());
    let x = Tensor::from_vec(&[na + nn, pos.cols()], stacked)?;
    let cache = model.forward(&x, training, rng)?;
    let (sa, sn) = cache.scores.split_at(na);

    let t = cfg.subbag_len;
    let starts_a = sample_subbags(na, cfg.num_subbags, t);
    let starts_n = sample_subbags(nn, cfg.num_subbags, t);
    let bag_a: Vec<T> = subbag_scores(sa, &starts_a, t).iter().map(|b| b.score).collect();
    let bag_n: Vec<T> = subbag_scores(sn, &starts_n, t).iter().map(|b| b.score).collect();
    let (loss, g_a, g_n) = ranking_loss_grad(&bag_a, &bag_n, cfg.lambda1, cfg.lambda2);

    let mut d_scores = vec![T::zero(); na + nn];
    let inv_t = T::one() / T::lit(t as f64);
    for (starts, grads, offset, n) in [(&starts_a, &g_a, 0, na), (&starts_n, &g_n, na, nn)] {
        for (&s, &g) in starts.iter().zip(grads) {
            for i in s..s + t {
                d_scores[offset + padded(i, n)] += g * inv_t;
            }
        }
    }
    model.backward(&cache, &d_scores);
    Ok(loss)
}

/// Trains the scorer with Adagrad, pairing one positive with one negative bag
/// per step. Each epoch reshuffles both lists and runs
/// `max(|pos|, |neg|)` steps, cycling the shorter list. Returns the mean loss
/// of every epoch.
pub fn train_generator<T: Scalar, R: Rng + ?Sized>(
    model: &mut GeneratorModel<T>,
    positive: &[&VideoBag<T>],
    negative: &[&VideoBag<T>],
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::Dataset(
            "stage I needs at least one positive and one negative bag".into(),
        ));
    }
    if cfg.num_subbags == 0 || cfg.subbag_len == 0 {
        return Err(Error::Config("L and T must be positive".into()));
    }
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order_p: Vec<usize> = (0..positive.len()).collect();
    let mut order_n: Vec<usize> = (0..negative.len()).collect();
    let steps = positive.len().max(negative.len());
    for epoch in 0..cfg.epochs {
        order_p.shuffle(rng);
        order_n.shuffle(rng);
        let mut total = 0.0;
        for i in 0..steps {
            let a = positive[order_p[i % positive.len()]];
            let b = negative[order_n[i % negative.len()]];
            let loss = bag_pair_step(model, &a.features, &b.features, cfg, true, rng)?;
            model.params.step(Optimizer::Adagrad { lr: cfg.lr });
            total += loss.as_f64();
        }
        let mean = total / steps as f64;
        log::debug!("generator epoch {epoch}: mean loss {mean:.6}");
        trace.push(mean);
    }
    Ok(trace)
}

/// Clip-level soft labels for one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipLabels {
    #[serde(rename = "id")]
    pub video_id: String,
    pub labels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub videos: Vec<ClipLabels>,
}

impl LabelsFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::json("labels", e))?;
        write_text(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn get(&self, id: &str) -> Option<&ClipLabels> {
        self.videos.iter().find(|v| v.video_id == id)
    }
}

/// `(s − min) / (max − min)`, or all `0.5` when the scores are constant.
pub fn minmax_labels<T: Scalar>(scores: &[T]) -> Vec<T> {
    let lo = scores.iter().copied().fold(T::infinity(), T::min);
    let hi = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let spread = hi - lo;
    if spread < T::lit(DEGENERATE_SPREAD) {
        return vec![T::lit(0.5); scores.len()];
    }
    scores.iter().map(|&s| (s - lo) / spread).collect()
}

/// Pseudo-labels for every video: min-max normalized inference scores on
/// anomalous videos, zeros on normal ones.
pub fn generate_labels<T: Scalar>(model: &GeneratorModel<T>, dataset: &Dataset<T>) -> Result<Vec<ClipLabels>> {
    dataset
        .videos
        .par_iter()
        .map(|v| {
            let labels = if v.label.is_anomalous() {
                let mut rng = crate::inert_rng();
                let scores = model.score_clips(&v.features, false, &mut rng)?;
                minmax_labels(&scores).iter().map(|x| x.as_f64()).collect()
            } else {
                vec![0.0; v.num_clips()]
            };
            Ok(ClipLabels {
                video_id: v.id.clone(),
                labels,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn subbag_starts() {
        assert_eq!(sample_subbags(16, 4, 8), vec![0, 2, 5, 8]);
        assert_eq!(sample_subbags(8, 2, 8), vec![0, 0]);
        assert_eq!(sample_subbags(4, 3, 8), vec![0, 0, 0]);
        assert_eq!(sample_subbags(20, 1, 8), vec![0]);
        let s = sample_subbags(64, 32, 8);
        assert_eq!((s[0], s[31] + 8 - 1), (0, 63));
    }

    #[test]
    fn padding_repeats_last_clip() {
        let scores = [0.1f64, 0.2, 0.3, 0.4];
        let bags = subbag_scores(&scores, &sample_subbags(4, 2, 8), 8);
        for b in &bags {
            assert_eq!(b.scores, vec![0.1, 0.2, 0.3, 0.4, 0.4, 0.4, 0.4, 0.4]);
            assert!((b.score - 2.6 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ranking_loss_hand_cases() {
        assert_eq!(ranking_loss(&[1.0], &[0.0], 8e-5, 8e-5), 8e-5);
        assert!((ranking_loss(&[0.9f64], &[0.2], 8e-5, 8e-5) - 0.300072).abs() < 1e-9);
        assert!((ranking_loss(&[0.8f64, 0.6], &[0.1], 8e-5, 8e-5) - 0.3001152).abs() < 1e-9);
    }

    #[test]
    fn zero_model_scores_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = GeneratorModel::<f64>::with_widths(4, [8, 4], 0.6, &mut rng).unwrap();
        for p in m.params.iter_mut() {
            p.value.fill(0.0);
        }
        let s = m.score_clips(&Tensor::full(&[3, 4], 1.3), false, &mut rng).unwrap();
        assert_eq!(s, vec![0.5; 3]);
    }

    #[test]
    fn inference_is_deterministic_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = GeneratorModel::<f64>::new(6, 0.6, &mut rng).unwrap();
        let x = crate::nn::glorot_uniform(&[5, 6], 1, 1, &mut rng).scale(10.0);
        let a = m.score_clips(&x, false, &mut rng).unwrap();
        let b = m.score_clips(&x, false, &mut rng).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&s| s > 0.0 && s < 1.0));
        assert!(m.score_clips(&Tensor::zeros(&[2, 5]), false, &mut rng).is_err());
    }

    #[test]
    fn minmax_cases() {
        let l = minmax_labels(&[0.2f64, 0.5, 0.8]);
        for (a, b) in l.iter().zip([0.0, 0.5, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(minmax_labels(&[0.3, 0.3]), vec![0.5, 0.5]);
    }

    #[test]
    fn empty_bag_lists_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = GeneratorModel::<f64>::with_widths(2, [4, 2], 0.0, &mut rng).unwrap();
        assert!(train_generator(&mut m, &[], &[], &GeneratorConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = GeneratorModel::<f64>::with_widths(3, [5, 2], 0.6, &mut rng).unwrap();
        let p = dir.path().join("gen.json");
        m.save(&p).unwrap();
        let back = GeneratorModel::<f64>::load(&p).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.dropout, 0.6);
    }
}
