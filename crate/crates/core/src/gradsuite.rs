//! Finite-difference suites over the three trainable compositions, in `f64`
//! at reduced widths:
//!
//! * `generator`: MLP scorer, sub-bag averaging and the ranking loss
//! * `encoder`: FC layers, both graph branches, fusion and weighted CE
//! * `attention`: stub backbone, M1/M2 and the two attention losses
//!
//! Dropout is active with a mask that is re-drawn from the same seed on every
//! evaluation, so its backward pass is covered too.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::AttentionBranch;
use crate::data::{Label, Split, VideoBag, BODY_DIM};
use crate::encoder::{video_step, EncoderModel, TrainConfig};
use crate::error::Result;
use crate::mil::{bag_pair_step, GeneratorConfig, GeneratorModel};
use crate::nn::{glorot_uniform, grad_check_params, GradCheckConfig, GradCheckReport, ParamSet, Tensor};

/// Upper bound on the share of coordinates the kink guard may exclude.
pub const MAX_SKIPPED_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Generator,
    Encoder,
    Attention,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Generator, Suite::Encoder, Suite::Attention];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Generator => "generator",
            Suite::Encoder => "encoder",
            Suite::Attention => "attention",
        }
    }

    pub fn run(self, seed: u64) -> Result<GradCheckReport> {
        match self {
            Suite::Generator => check_generator(seed),
            Suite::Encoder => check_encoder(seed),
            Suite::Attention => check_attention(seed),
        }
    }
}

/// Passed at tolerance with few enough kink exclusions.
pub fn accepted(report: &GradCheckReport) -> bool {
    let total = report.checked + report.skipped;
    report.passed && total > 0 && (report.skipped as f64) <= MAX_SKIPPED_FRACTION * total as f64
}

fn gaussian(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    Tensor::from_vec(shape, data).expect("shape")
}

/// Zero-initialized biases put units fed by an all-zero row exactly on the
/// ReLU kink; checks are taken at a generic point instead.
fn jitter_biases(ps: &mut ParamSet<f64>, rng: &mut ChaCha8Rng) {
    for p in ps.iter_mut() {
        if p.name.ends_with(".b") || p.name.ends_with(".bias") {
            let shape = p.value.shape().to_vec();
            p.value = gaussian(&shape, rng).scale(0.1);
        }
    }
}

/// Runs `f` against a parameter set that is temporarily moved out of its
/// owner, so the owner's methods can be called from inside the check.
fn check_owned<M>(
    owner: &mut M,
    params: fn(&mut M) -> &mut ParamSet<f64>,
    mut f: impl FnMut(&mut M) -> f64,
    cfg: &GradCheckConfig,
) -> GradCheckReport {
    let mut ps = std::mem::replace(params(owner), ParamSet::new());
    let report = grad_check_params(
        &mut ps,
        |ps| {
            std::mem::swap(params(owner), ps);
            let loss = f(owner);
            std::mem::swap(params(owner), ps);
            loss
        },
        cfg,
    );
    *params(owner) = ps;
    report
}

pub fn check_generator(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = GeneratorModel::<f64>::with_widths(16, [16, 8], 0.5, &mut rng)?;
    jitter_biases(&mut model.params, &mut rng);
    let pos = gaussian(&[11, 16], &mut rng);
    // shorter than T, exercises padding
    let neg = gaussian(&[3, 16], &mut rng);
    let cfg = GeneratorConfig {
        num_subbags: 5,
        subbag_len: 4,
        lambda1: 0.05,
        lambda2: 0.02,
        ..GeneratorConfig::default()
    };
    let mask_seed = rng.random::<u64>();
    let check = GradCheckConfig {
        seed,
        ..GradCheckConfig::default()
    };
    Ok(check_owned(
        &mut model,
        |m| &mut m.params,
        |m| {
            let mut mask = ChaCha8Rng::seed_from_u64(mask_seed);
            bag_pair_step(m, &pos, &neg, &cfg, true, &mut mask).expect("valid bags")
        },
        &check,
    ))
}

pub fn check_encoder(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = EncoderModel::<f64>::with_widths(16, [12, 8], [6, 2], 0.5, &mut rng)?;
    jitter_biases(&mut model.params, &mut rng);
    let video = VideoBag {
        id: "check".into(),
        label: Label::Anomalous,
        split: Split::Train,
        features: gaussian(&[6, 16], &mut rng),
        clip_len_frames: 16,
        frame_gt: None,
        raw_clips: None,
    };
    let labels: Vec<f64> = (0..6).map(|_| rng.random()).collect();
    let train = TrainConfig::default();
    let mask_seed = rng.random::<u64>();
    let check = GradCheckConfig {
        seed,
        ..GradCheckConfig::default()
    };
    Ok(check_owned(
        &mut model,
        |m| &mut m.params,
        |m| {
            let mut mask = ChaCha8Rng::seed_from_u64(mask_seed);
            video_step(m, &video, &labels, &train, true, &mut mask).expect("valid video")
        },
        &check,
    ))
}

struct AttentionRig {
    params: ParamSet<f64>,
    branch: AttentionBranch,
}

pub fn check_attention(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let branch = AttentionBranch::new(&mut params, 3, &mut rng)?;
    jitter_biases(&mut params, &mut rng);
    let mut rig = AttentionRig { params, branch };
    let clip = gaussian(&[3, 4, 16, 16], &mut rng);
    let y: f64 = rng.random();
    // random readout of the body feature stands in for the encoder upstream
    let readout: Tensor<f64> = glorot_uniform(&[BODY_DIM], 1, 1, &mut rng);
    let (w0, w1) = (1.2, 0.8);
    let check = GradCheckConfig {
        seed,
        max_coords: Some(6),
        ..GradCheckConfig::default()
    };
    Ok(check_owned(
        &mut rig,
        |r| &mut r.params,
        |r| {
            let cache = r.branch.forward(&r.params, &clip).expect("valid clip");
            let (l1, l2) = crate::attention::attention_losses(y, cache.attended, cache.guided, w0, w1);
            let proj: f64 = cache.body.data().iter().zip(readout.data()).map(|(a, b)| a * b).sum();
            r.branch
                .backward(&mut r.params, &cache, Some(readout.data()), y, w0, w1, 1.0, true)
                .expect("shapes");
            l1 + l2 + proj
        },
        &check,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub seed: u64,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub accepted: bool,
}

/// Every suite over `seeds`.
pub fn run_suites(seeds: impl IntoIterator<Item = u64> + Clone) -> Result<Vec<SuiteOutcome>> {
    let mut out = Vec::new();
    for suite in Suite::ALL {
        for seed in seeds.clone() {
            let r = suite.run(seed)?;
            out.push(SuiteOutcome {
                suite,
                seed,
                max_rel_error: r.max_rel_error,
                checked: r.checked,
                skipped: r.skipped,
                accepted: accepted(&r),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_suite_passes_one_seed() {
        for suite in Suite::ALL {
            let r = suite.run(11).unwrap();
            assert!(accepted(&r), "{}: {r:?}", suite.name());
        }
    }
}
