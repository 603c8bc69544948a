//! Raw-clip branch of the encoder: a randomly initialized two-block 3-D conv
//! backbone standing in for C3D/I3D, the self-guided attention head, and the
//! 128-d body/background feature it feeds into fusion.
//!
//! Per clip `[3, frames, H, W]`:
//!
//! ```text
//! F4 = relu(conv3(x, s=2))            [C, D/2, H/2, W/2]
//! F5 = relu(conv3(F4, s=2))           [C, D/4, H/4, W/4]
//! M1(F4) = σ(conv1(relu(conv1(relu(conv3(F4, s=2))))))   1 channel
//! A* = F5 + M1(F4) ∘ F5
//! F* = conv1(relu(conv1(relu(conv3(F4, s=2)))))          2K channels
//! guided logits = channel-block mean of GAP(F*)          [normal, abnormal]
//! body = fc2(relu(fc1(GAP(A*))))       128
//! attended logits = cls(body)
//! ```
//!
//! Raw clips are stored in CHE1 files: the magic bytes `CHE1`, a little
//! endian `u32` rank, `rank` little endian `u32` dims, then the row-major
//! little endian `f32` payload.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::data::BODY_DIM;
use crate::error::{Error, Result};
use crate::nn::activation::relu_backward;
use crate::nn::{relu, sigmoid, softmax, Affine, Conv3d, ParamSet, Tensor};
use crate::scalar::Scalar;

pub const BACKBONE_CHANNELS: usize = 32;
pub const DEFAULT_DETECTORS: usize = 15;
pub const BODY_HIDDEN: usize = 512;

pub const MIN_FRAMES: usize = 4;
pub const MIN_SIDE: usize = 16;

const MAGIC: &[u8; 4] = b"CHE1";

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMaps<T> {
    pub f4: Tensor<T>,
    pub f5: Tensor<T>,
}

/// Two stride-2 conv + ReLU blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StubBackbone {
    pub block4: Conv3d,
    pub block5: Conv3d,
}

impl StubBackbone {
    pub fn new<T: Scalar, R: Rng + ?Sized>(ps: &mut ParamSet<T>, rng: &mut R) -> Result<Self> {
        let c = BACKBONE_CHANNELS;
        Ok(StubBackbone {
            block4: Conv3d::new(ps, "backbone.block4", 3, c, 3, 2, rng)?,
            block5: Conv3d::new(ps, "backbone.block5", c, c, 3, 2, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, clip: &Tensor<T>) -> Result<FeatureMaps<T>> {
        let s = clip.shape();
        if s.len() != 4 || s[0] != 3 {
            return Err(Error::Shape(format!(
                "clip tensor must be [3, frames, H, W], got {s:?}"
            )));
        }
        if s[1] < MIN_FRAMES || s[2] < MIN_SIDE || s[3] < MIN_SIDE || s[2] != s[3] {
            return Err(Error::Shape(format!(
                "clip {s:?} below the minimum of {MIN_FRAMES} frames at {MIN_SIDE}x{MIN_SIDE} (square)"
            )));
        }
        let f4 = relu(&self.block4.forward(ps, clip)?);
        let f5 = relu(&self.block5.forward(ps, &f4)?);
        Ok(FeatureMaps { f4, f5 })
    }

    /// Accumulates backbone gradients for upstream `(dF4, dF5)`.
    pub fn backward<T: Scalar>(
        &self,
        ps: &mut ParamSet<T>,
        clip: &Tensor<T>,
        maps: &FeatureMaps<T>,
        df4: &Tensor<T>,
        df5: &Tensor<T>,
    ) -> Result<()> {
        let dz5 = relu_backward(&maps.f5, df5)?;
        let mut df4 = df4.clone();
        let back = self.block5.backward(ps, &maps.f4, &dz5, true)?.expect("dx requested");
        df4.add_assign(&back)?;
        let dz4 = relu_backward(&maps.f4, &df4)?;
        self.block4.backward(ps, clip, &dz4, false)?;
        Ok(())
    }
}

/// `M1` and `M2` encoding units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionHead {
    pub m1: [Conv3d; 3],
    pub m2: [Conv3d; 3],
    /// Detectors per class; `F*` has `2K` channels.
    pub k: usize,
}

/// Forward intermediates of a three-conv unit.
#[derive(Clone, Debug)]
struct UnitCache<T> {
    u1: Tensor<T>,
    u2: Tensor<T>,
    out: Tensor<T>,
}

impl AttentionHead {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        channels: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("K must be positive".into()));
        }
        let m1 = [
            Conv3d::new(ps, "attention.m1.0", channels, channels, 3, 2, rng)?,
            Conv3d::new(ps, "attention.m1.1", channels, 2 * k, 1, 1, rng)?,
            Conv3d::new(ps, "attention.m1.2", 2 * k, 1, 1, 1, rng)?,
        ];
        let m2 = [
            Conv3d::new(ps, "attention.m2.0", channels, channels, 3, 2, rng)?,
            Conv3d::new(ps, "attention.m2.1", channels, 2 * k, 1, 1, rng)?,
            Conv3d::new(ps, "attention.m2.2", 2 * k, 2 * k, 1, 1, rng)?,
        ];
        Ok(AttentionHead { m1, m2, k })
    }

    fn unit_forward<T: Scalar>(
        convs: &[Conv3d; 3],
        ps: &ParamSet<T>,
        f4: &Tensor<T>,
        last_sigmoid: bool,
    ) -> Result<UnitCache<T>> {
        let u1 = relu(&convs[0].forward(ps, f4)?);
        let u2 = relu(&convs[1].forward(ps, &u1)?);
        let z = convs[2].forward(ps, &u2)?;
        let out = if last_sigmoid { z.map(sigmoid) } else { z };
        Ok(UnitCache { u1, u2, out })
    }

    /// Returns `dF4` contributed by this unit.
    fn unit_backward<T: Scalar>(
        convs: &[Conv3d; 3],
        ps: &mut ParamSet<T>,
        f4: &Tensor<T>,
        cache: &UnitCache<T>,
        dout: &Tensor<T>,
        last_sigmoid: bool,
    ) -> Result<Tensor<T>> {
        let dz = if last_sigmoid {
            cache.out.zip_map(dout, |s, g| g * s * (T::one() - s))?
        } else {
            dout.clone()
        };
        let du2 = convs[2].backward(ps, &cache.u2, &dz, true)?.expect("dx");
        let dz2 = relu_backward(&cache.u2, &du2)?;
        let du1 = convs[1].backward(ps, &cache.u1, &dz2, true)?.expect("dx");
        let dz1 = relu_backward(&cache.u1, &du1)?;
        Ok(convs[0].backward(ps, f4, &dz1, true)?.expect("dx"))
    }

    /// Single-channel attention map `M1(F4)` in `(0, 1)`.
    pub fn attention_map<T: Scalar>(&self, ps: &ParamSet<T>, f4: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Self::unit_forward(&self.m1, ps, f4, true)?.out)
    }

    /// `F* = M2(F4)` with `2K` channels.
    pub fn guided_maps<T: Scalar>(&self, ps: &ParamSet<T>, f4: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Self::unit_forward(&self.m2, ps, f4, false)?.out)
    }
}

/// `A* = F5 + att ∘ F5`, with the single-channel `att` broadcast over channels.
pub fn compose_attention<T: Scalar>(f5: &Tensor<T>, att: &Tensor<T>) -> Result<Tensor<T>> {
    if f5.rank() != 4 || att.rank() != 4 || att.shape()[0] != 1 || att.shape()[1..] != f5.shape()[1..] {
        return Err(Error::Shape(format!(
            "attention map {:?} does not cover F5 {:?}",
            att.shape(),
            f5.shape()
        )));
    }
    let p = att.len();
    let mut out = f5.clone();
    for chan in out.data_mut().chunks_exact_mut(p) {
        for (v, &a) in chan.iter_mut().zip(att.data()) {
            *v += a * *v;
        }
    }
    Ok(out)
}

/// Attention-enhanced features `A*` for a pair of maps.
pub fn attention_forward<T: Scalar>(
    head: &AttentionHead,
    ps: &ParamSet<T>,
    maps: &FeatureMaps<T>,
) -> Result<Tensor<T>> {
    let att = head.attention_map(ps, &maps.f4)?;
    compose_attention(&maps.f5, &att)
}

/// Global average pool over the spatio-temporal axes of `[C, D, H, W]`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Vec<T> {
    let c = x.shape()[0];
    let p = x.len() / c;
    let inv = T::one() / T::lit(p as f64);
    x.data()
        .chunks_exact(p)
        .map(|ch| ch.iter().copied().sum::<T>() * inv)
        .collect()
}

/// Pools `F*` to a `2K` vector, then averages each block of `K` channels.
pub fn guided_logits_from_maps<T: Scalar>(f_star: &Tensor<T>, k: usize) -> Result<[T; 2]> {
    if f_star.rank() != 4 || f_star.shape()[0] != 2 * k {
        return Err(Error::Shape(format!(
            "F* {:?} must carry 2K = {} channels",
            f_star.shape(),
            2 * k
        )));
    }
    let g = global_avg_pool(f_star);
    let inv = T::one() / T::lit(k as f64);
    Ok([
        g[..k].iter().copied().sum::<T>() * inv,
        g[k..].iter().copied().sum::<T>() * inv,
    ])
}

/// Guided anomaly logits `[normal, abnormal]`.
pub fn guided_score<T: Scalar>(head: &AttentionHead, ps: &ParamSet<T>, maps: &FeatureMaps<T>) -> Result<[T; 2]> {
    guided_logits_from_maps(&head.guided_maps(ps, &maps.f4)?, head.k)
}

/// FC head after `GAP(A*)`: the 128-d body feature and the L1 classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BodyHead {
    pub fc1: Affine,
    pub fc2: Affine,
    pub cls: Affine,
}

impl BodyHead {
    pub fn new<T: Scalar, R: Rng + ?Sized>(ps: &mut ParamSet<T>, channels: usize, rng: &mut R) -> Result<Self> {
        Ok(BodyHead {
            fc1: Affine::new(ps, "body.fc1", channels, BODY_HIDDEN, rng)?,
            fc2: Affine::new(ps, "body.fc2", BODY_HIDDEN, BODY_DIM, rng)?,
            cls: Affine::new(ps, "body.cls", BODY_DIM, 2, rng)?,
        })
    }
}

/// `fc2(relu(fc1(GAP(A*))))`.
pub fn extract_body_feature<T: Scalar>(head: &BodyHead, ps: &ParamSet<T>, a_star: &Tensor<T>) -> Result<Vec<T>> {
    if a_star.rank() != 4 || a_star.shape()[0] != head.fc1.d_in {
        return Err(Error::Shape(format!(
            "A* {:?} does not match body head input {}",
            a_star.shape(),
            head.fc1.d_in
        )));
    }
    let g = Tensor::from_vec(&[1, head.fc1.d_in], global_avg_pool(a_star))?;
    let h = relu(&head.fc1.forward(ps, &g)?);
    Ok(head.fc2.forward(ps, &h)?.into_data())
}

/// `(L1, L2)`: class-reweighted soft-label cross-entropy of the attended and
/// guided logits against clip label `y`.
pub fn attention_losses<T: Scalar>(y: T, attended: [T; 2], guided: [T; 2], w0: f64, w1: f64) -> (T, T) {
    let l = |logits: [T; 2]| {
        let p = softmax(&logits)[1];
        crate::encoder::weighted_ce_loss(y, p, w0, w1)
    };
    (l(attended), l(guided))
}

/// `∂L/∂logits` for a class-reweighted CE on `softmax(logits)[1]`.
fn ce_logit_grad<T: Scalar>(y: T, logits: [T; 2], w0: f64, w1: f64, scale: T) -> [T; 2] {
    let p = softmax(&logits)[1];
    let dp = crate::encoder::weighted_ce_grad(y, p, w0, w1) * scale;
    // p = σ(z1 − z0)
    let dz = dp * p * (T::one() - p);
    [-dz, dz]
}

/// Everything the raw-clip path adds to the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionBranch {
    pub backbone: StubBackbone,
    pub head: AttentionHead,
    pub body: BodyHead,
}

/// Per-clip forward intermediates.
#[derive(Clone, Debug)]
pub struct ClipCache<T> {
    clip: Tensor<T>,
    maps: FeatureMaps<T>,
    m1: UnitCache<T>,
    m2: UnitCache<T>,
    a_star: Tensor<T>,
    gap: Tensor<T>,
    h: Tensor<T>,
    pub body: Tensor<T>,
    pub attended: [T; 2],
    pub guided: [T; 2],
}

impl AttentionBranch {
    pub fn new<T: Scalar, R: Rng + ?Sized>(ps: &mut ParamSet<T>, k: usize, rng: &mut R) -> Result<Self> {
        let backbone = StubBackbone::new(ps, rng)?;
        let head = AttentionHead::new(ps, BACKBONE_CHANNELS, k, rng)?;
        let body = BodyHead::new(ps, BACKBONE_CHANNELS, rng)?;
        Ok(AttentionBranch { backbone, head, body })
    }

    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, clip: &Tensor<T>) -> Result<ClipCache<T>> {
        let maps = self.backbone.forward(ps, clip)?;
        let m1 = AttentionHead::unit_forward(&self.head.m1, ps, &maps.f4, true)?;
        let m2 = AttentionHead::unit_forward(&self.head.m2, ps, &maps.f4, false)?;
        let a_star = compose_attention(&maps.f5, &m1.out)?;
        let guided = guided_logits_from_maps(&m2.out, self.head.k)?;
        let gap = Tensor::from_vec(&[1, a_star.shape()[0]], global_avg_pool(&a_star))?;
        let h = relu(&self.body.fc1.forward(ps, &gap)?);
        let body = self.body.fc2.forward(ps, &h)?;
        let logits = self.body.cls.forward(ps, &body)?;
        let attended = [logits.data()[0], logits.data()[1]];
        Ok(ClipCache {
            clip: clip.clone(),
            maps,
            m1,
            m2,
            a_star,
            gap,
            h,
            body,
            attended,
            guided,
        })
    }

    /// Backward for one clip. `d_body` is the gradient arriving from the
    /// encoder (if any); the attention losses for label `y` are added with
    /// weight `loss_scale`. With `train_backbone == false` the backbone is
    /// treated as frozen.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Scalar>(
        &self,
        ps: &mut ParamSet<T>,
        cache: &ClipCache<T>,
        d_body: Option<&[T]>,
        y: T,
        w0: f64,
        w1: f64,
        loss_scale: T,
        train_backbone: bool,
    ) -> Result<()> {
        let d_att_logits = ce_logit_grad(y, cache.attended, w0, w1, loss_scale);
        let d_guided = ce_logit_grad(y, cache.guided, w0, w1, loss_scale);

        let dlog = Tensor::from_vec(&[1, 2], d_att_logits.to_vec())?;
        let mut dbody = self.body.cls.backward(ps, &cache.body, &dlog, true).expect("dx");
        if let Some(g) = d_body {
            dbody.add_assign(&Tensor::from_vec(&[1, BODY_DIM], g.to_vec())?)?;
        }
        let dh = self.body.fc2.backward(ps, &cache.h, &dbody, true).expect("dx");
        let dz = relu_backward(&cache.h, &dh)?;
        let dgap = self.body.fc1.backward(ps, &cache.gap, &dz, true).expect("dx");

        // A* = F5 ⊙ (1 + att), GAP spreads evenly over positions
        let f5 = &cache.maps.f5;
        let att = &cache.m1.out;
        let p = att.len();
        let inv_p = T::one() / T::lit(p as f64);
        let mut df5 = Tensor::zeros(f5.shape());
        let mut datt = Tensor::zeros(att.shape());
        for (c, &g) in dgap.data().iter().enumerate() {
            let g = g * inv_p;
            for i in 0..p {
                df5.data_mut()[c * p + i] = g * (T::one() + att.data()[i]);
                datt.data_mut()[i] += g * f5.data()[c * p + i];
            }
        }
        let mut df4 = AttentionHead::unit_backward(&self.head.m1, ps, &cache.maps.f4, &cache.m1, &datt, true)?;

        let k = self.head.k;
        let fs = &cache.m2.out;
        let q = fs.len() / (2 * k);
        let mut dfs = Tensor::zeros(fs.shape());
        for ch in 0..2 * k {
            let g = d_guided[ch / k] / T::lit((k * q) as f64);
            dfs.data_mut()[ch * q..(ch + 1) * q].fill(g);
        }
        df4.add_assign(&AttentionHead::unit_backward(
            &self.head.m2,
            ps,
            &cache.maps.f4,
            &cache.m2,
            &dfs,
            false,
        )?)?;

        if train_backbone {
            self.backbone.backward(ps, &cache.clip, &cache.maps, &df4, &df5)?;
        }
        let _ = &cache.a_star;
        Ok(())
    }
}

/// Reads a CHE1 tensor file.
pub fn read_raw_clips<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes).map_err(|e| match e {
        Error::RawClip(m) => Error::RawClip(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn decode_raw<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let bad = |m: &str| Error::RawClip(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing CHE1 magic"));
    }
    let u32_at = |off: usize| -> Result<usize> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
            .ok_or_else(|| bad("truncated header"))
    };
    let rank = u32_at(4)?;
    let dims = (0..rank).map(|i| u32_at(8 + 4 * i)).collect::<Result<Vec<_>>>()?;
    let header = 8 + 4 * rank;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("dimension overflow"))?;
    if bytes.len() != header + 4 * count {
        return Err(bad("payload length does not match dims"));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|b| {
            let v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            if v.is_finite() {
                Ok(T::lit(v as f64))
            } else {
                Err(bad("non-finite value"))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_vec(&dims, data)
}

/// Writes a tensor as CHE1 (values narrowed to `f32`).
pub fn write_raw_clips<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::glorot_uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backbone_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamSet::<f64>::new();
        let bb = StubBackbone::new(&mut ps, &mut rng).unwrap();
        let clip = glorot_uniform(&[3, 16, 32, 32], 1, 1, &mut rng);
        let maps = bb.forward(&ps, &clip).unwrap();
        assert_eq!(maps.f4.shape(), &[32, 8, 16, 16]);
        assert_eq!(maps.f5.shape(), &[32, 4, 8, 8]);
        assert!(bb.forward(&ps, &Tensor::zeros(&[3, 3, 32, 32])).is_err());
        assert!(bb.forward(&ps, &Tensor::zeros(&[3, 8, 8, 8])).is_err());
    }

    #[test]
    fn backbone_zero_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::<f64>::new();
        let bb = StubBackbone::new(&mut ps, &mut rng).unwrap();
        let maps = bb.forward(&ps, &Tensor::zeros(&[3, 4, 16, 16])).unwrap();
        assert!(maps.f4.data().iter().chain(maps.f5.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn compose_constant_maps() {
        let f5 = Tensor::full(&[3, 2, 2, 2], 2.0);
        let zero = compose_attention(&f5, &Tensor::zeros(&[1, 2, 2, 2])).unwrap();
        assert_eq!(zero, f5);
        let one = compose_attention(&f5, &Tensor::full(&[1, 2, 2, 2], 1.0)).unwrap();
        assert!(one.data().iter().all(|&v| v == 4.0));
        assert!(compose_attention(&f5, &Tensor::zeros(&[1, 2, 2, 3])).is_err());
    }

    #[test]
    fn guided_block_averaging() {
        let k = 3;
        let mut fs = Tensor::<f64>::zeros(&[2 * k, 1, 2, 2]);
        fs.data_mut()[..k * 4].fill(1.0);
        assert_eq!(guided_logits_from_maps(&fs, k).unwrap(), [1.0, 0.0]);
        let c = Tensor::<f64>::full(&[2 * k, 1, 2, 2], 0.7);
        let l = guided_logits_from_maps(&c, k).unwrap();
        assert!((l[0] - 0.7).abs() < 1e-15 && (l[1] - 0.7).abs() < 1e-15);
        assert_eq!(softmax(&l), vec![0.5, 0.5]);
        assert!(guided_logits_from_maps(&c, 2).is_err());
    }

    #[test]
    fn detector_count_sets_channels() {
        for k in [1, 5, 15] {
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let mut ps = ParamSet::<f64>::new();
            let head = AttentionHead::new(&mut ps, 8, k, &mut rng).unwrap();
            let f4 = glorot_uniform(&[8, 2, 8, 8], 1, 1, &mut rng);
            assert_eq!(head.guided_maps(&ps, &f4).unwrap().shape(), &[2 * k, 1, 4, 4]);
            assert_eq!(head.attention_map(&ps, &f4).unwrap().shape(), &[1, 1, 4, 4]);
        }
    }

    #[test]
    fn body_feature_shape_and_zero_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamSet::<f64>::new();
        let head = BodyHead::new(&mut ps, 32, &mut rng).unwrap();
        let a = glorot_uniform(&[32, 2, 4, 4], 1, 1, &mut rng);
        assert_eq!(extract_body_feature(&head, &ps, &a).unwrap().len(), 128);
        let z = extract_body_feature(&head, &ps, &Tensor::zeros(&[32, 2, 4, 4])).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let gap = global_avg_pool(&Tensor::full(&[2, 3, 3, 3], 1.5));
        assert_eq!(gap, vec![1.5, 1.5]);
    }

    #[test]
    fn attention_loss_cases() {
        let (l1, _) = attention_losses(1.0, [-1e3, 1e3], [0.0, 0.0], 1.2, 0.8);
        assert!(l1 < 1e-5);
        let (l1, l2) = attention_losses(1.0, [0.0, 0.0], [0.0, 0.0], 1.2, 0.8);
        assert!((l1 - 1.2 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(l1, l2);
        let (a, b) = attention_losses(0.5, [0.3, 0.3], [1.1, 1.1], 1.2, 0.8);
        assert_eq!(a, b);
    }

    #[test]
    fn che1_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.che1");
        let t = Tensor::<f64>::from_vec(&[2, 3], vec![0.5, -1.0, 2.25, 0.0, 3.0, -0.125]).unwrap();
        write_raw_clips(&p, &t).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"CHE1");
        assert_eq!(bytes.len(), 8 + 8 + 24);
        assert_eq!(read_raw_clips::<f64>(&p).unwrap(), t);
        fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(read_raw_clips::<f64>(&p).is_err());
        fs::write(&p, b"NOPE0000").unwrap();
        assert!(read_raw_clips::<f64>(&p).is_err());
    }
}
