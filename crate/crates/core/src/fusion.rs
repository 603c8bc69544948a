//! Per-clip behavioral statistics from OpenFace 2.0 frame exports, fused with
//! a 128-d body/background feature into one 245-d clip vector.
//!
//! Layout of the fused vector:
//!
//! | block | dims | contents |
//! |-------|------|----------|
//! | gaze  | 26   | 6 gaze-vector dims × (std, range); 2 gaze angles × (std, range); per-eye mean landmark position averaged over the clip: eye0 2D, eye1 2D, eye0 3D, eye1 3D |
//! | head  | 22   | location (Tx,Ty,Tz) × (std, range); pose (Rx,Ry,Rz) × (std, range); face-landmark mean 2D (x,y) and 3D (X,Y,Z) × (std, range) |
//! | au    | 69   | 18 presence frequencies; 17 intensity AUs × (max, max − min, std) |
//! | body  | 128  | body/background feature |
//!
//! Standard deviations are population (divide by n); "range" is max − min.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::data::{read_feature_csv, write_feature_csv, ClipFeature, BODY_DIM};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const GAZE_DIM: usize = 26;
pub const HEAD_DIM: usize = 22;
pub const AU_DIM: usize = 69;
pub const BEHAVIOR_DIM: usize = GAZE_DIM + HEAD_DIM + AU_DIM;

/// Intensity (`_r`) action units exported by OpenFace 2.0.
pub const AU_INTENSITY: [&str; 17] = [
    "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU12", "AU14", "AU15", "AU17", "AU20", "AU23",
    "AU25", "AU26", "AU45",
];

/// Presence (`_c`) action units exported by OpenFace 2.0.
pub const AU_PRESENCE: [&str; 18] = [
    "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU12", "AU14", "AU15", "AU17", "AU20", "AU23",
    "AU25", "AU26", "AU28", "AU45",
];

const FACE_LANDMARKS: usize = 68;

/// Measurements of one video frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBehavior<T> {
    /// Gaze direction per eye, `(x, y, z)`.
    pub gaze_vectors: [[T; 3]; 2],
    pub gaze_radians: [T; 2],
    /// Mean 2D position of each eye's landmarks.
    pub eye_landmarks_2d: [[T; 2]; 2],
    pub eye_landmarks_3d: [[T; 3]; 2],
    pub head_location: [T; 3],
    pub head_pose_radians: [T; 3],
    pub face_landmark_mean_2d: [T; 2],
    pub face_landmark_mean_3d: [T; 3],
    pub au_intensity: [T; 17],
    /// 0/1 per AU.
    pub au_presence: [T; 18],
}

/// The 117 behavioral dimensions of one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct BehavioralClipFeature<T> {
    pub gaze: Vec<T>,
    pub head: Vec<T>,
    pub au: Vec<T>,
}

impl<T: Scalar> BehavioralClipFeature<T> {
    pub fn from_frames(frames: &[FrameBehavior<T>]) -> Result<Self> {
        Ok(BehavioralClipFeature {
            gaze: gaze_features(frames)?,
            head: head_features(frames)?,
            au: au_features(frames)?,
        })
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(BEHAVIOR_DIM);
        v.extend_from_slice(&self.gaze);
        v.extend_from_slice(&self.head);
        v.extend_from_slice(&self.au);
        v
    }

    pub fn len(&self) -> usize {
        self.gaze.len() + self.head.len() + self.au.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn mean<T: Scalar>(xs: impl Iterator<Item = T>) -> T {
    let (mut s, mut n) = (T::zero(), 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    s / T::lit(n as f64)
}

/// Population standard deviation and max − min of `xs` (non-empty).
fn std_range<T: Scalar>(xs: &[T]) -> (T, T) {
    let m = mean(xs.iter().copied());
    let var = mean(xs.iter().map(|&x| (x - m) * (x - m)));
    let lo = xs.iter().copied().fold(T::infinity(), T::min);
    let hi = xs.iter().copied().fold(T::neg_infinity(), T::max);
    (var.sqrt(), hi - lo)
}

fn push_std_range<T: Scalar>(out: &mut Vec<T>, xs: &[T]) {
    let (s, r) = std_range(xs);
    out.push(s);
    out.push(r);
}

fn non_empty<T>(frames: &[T]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::Dataset("clip has no frames".into()));
    }
    Ok(())
}

fn column<T: Scalar>(frames: &[FrameBehavior<T>], f: impl Fn(&FrameBehavior<T>) -> T) -> Vec<T> {
    frames.iter().map(f).collect()
}

pub fn gaze_features<T: Scalar>(frames: &[FrameBehavior<T>]) -> Result<Vec<T>> {
    non_empty(frames)?;
    let mut out = Vec::with_capacity(GAZE_DIM);
    for eye in 0..2 {
        for d in 0..3 {
            push_std_range(&mut out, &column(frames, |f| f.gaze_vectors[eye][d]));
        }
    }
    for a in 0..2 {
        push_std_range(&mut out, &column(frames, |f| f.gaze_radians[a]));
    }
    for eye in 0..2 {
        for d in 0..2 {
            out.push(mean(frames.iter().map(|f| f.eye_landmarks_2d[eye][d])));
        }
    }
    for eye in 0..2 {
        for d in 0..3 {
            out.push(mean(frames.iter().map(|f| f.eye_landmarks_3d[eye][d])));
        }
    }
    debug_assert_eq!(out.len(), GAZE_DIM);
    Ok(out)
}

pub fn head_features<T: Scalar>(frames: &[FrameBehavior<T>]) -> Result<Vec<T>> {
    non_empty(frames)?;
    let mut out = Vec::with_capacity(HEAD_DIM);
    for d in 0..3 {
        push_std_range(&mut out, &column(frames, |f| f.head_location[d]));
    }
    for d in 0..3 {
        push_std_range(&mut out, &column(frames, |f| f.head_pose_radians[d]));
    }
    for d in 0..2 {
        push_std_range(&mut out, &column(frames, |f| f.face_landmark_mean_2d[d]));
    }
    for d in 0..3 {
        push_std_range(&mut out, &column(frames, |f| f.face_landmark_mean_3d[d]));
    }
    debug_assert_eq!(out.len(), HEAD_DIM);
    Ok(out)
}

pub fn au_features<T: Scalar>(frames: &[FrameBehavior<T>]) -> Result<Vec<T>> {
    non_empty(frames)?;
    let mut out = Vec::with_capacity(AU_DIM);
    for a in 0..AU_PRESENCE.len() {
        out.push(mean(frames.iter().map(|f| f.au_presence[a])));
    }
    for a in 0..AU_INTENSITY.len() {
        let xs = column(frames, |f| f.au_intensity[a]);
        let (s, r) = std_range(&xs);
        let hi = xs.iter().copied().fold(T::neg_infinity(), T::max);
        out.extend([hi, r, s]);
    }
    debug_assert_eq!(out.len(), AU_DIM);
    Ok(out)
}

/// `gaze ‖ head ‖ au ‖ body`.
pub fn fuse_concat<T: Scalar>(behavior: &BehavioralClipFeature<T>, body: &[T]) -> Result<ClipFeature<T>> {
    let check = |name: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(Error::Dimension {
                context: format!("{name} block"),
                expected: want,
                found: got,
            })
        }
    };
    check("gaze", behavior.gaze.len(), GAZE_DIM)?;
    check("head", behavior.head.len(), HEAD_DIM)?;
    check("action unit", behavior.au.len(), AU_DIM)?;
    check("body", body.len(), BODY_DIM)?;
    let mut v = behavior.to_vec();
    v.extend_from_slice(body);
    ClipFeature::new(v)
}

/// `(gaze, head, au, body)` views of a fused vector.
pub type FusedBlocks<'a, T> = (&'a [T], &'a [T], &'a [T], &'a [T]);

/// Splits a fused vector back into its blocks.
pub fn split_fused<T>(v: &[T]) -> Option<FusedBlocks<'_, T>> {
    if v.len() != BEHAVIOR_DIM + BODY_DIM {
        return None;
    }
    let (gaze, rest) = v.split_at(GAZE_DIM);
    let (head, rest) = rest.split_at(HEAD_DIM);
    let (au, body) = rest.split_at(AU_DIM);
    Some((gaze, head, au, body))
}

struct Columns {
    gaze: [[usize; 3]; 2],
    gaze_angle: [usize; 2],
    /// `[eye][axis] -> column indices` for 2D (x, y) and 3D (X, Y, Z).
    eye_2d: [[Vec<usize>; 2]; 2],
    eye_3d: [[Vec<usize>; 3]; 2],
    pose_t: [usize; 3],
    pose_r: [usize; 3],
    face_2d: [Vec<usize>; 2],
    face_3d: [Vec<usize>; 3],
    au_r: Vec<usize>,
    au_c: Vec<usize>,
}

impl Columns {
    fn resolve(header: &[&str]) -> Result<Self> {
        let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (*h, i)).collect();
        let get = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let series =
            |prefix: &str, n: usize| -> Result<Vec<usize>> { (0..n).map(|i| get(&format!("{prefix}{i}"))).collect() };

        let gaze = [
            [get("gaze_0_x")?, get("gaze_0_y")?, get("gaze_0_z")?],
            [get("gaze_1_x")?, get("gaze_1_y")?, get("gaze_1_z")?],
        ];
        let gaze_angle = [get("gaze_angle_x")?, get("gaze_angle_y")?];

        // OpenFace numbers eye landmarks consecutively: the first half
        // belongs to eye 0, the second half to eye 1.
        let n_eye = (0..)
            .take_while(|i| index.contains_key(format!("eye_lmk_x_{i}").as_str()))
            .count();
        if n_eye < 2 || n_eye % 2 != 0 {
            return Err(Error::MissingColumn(if n_eye == 0 {
                "eye_lmk_x_0".into()
            } else {
                format!("eye_lmk_x_{n_eye}")
            }));
        }
        let half = n_eye / 2;
        let eye_axis = |axis: &str| -> Result<[Vec<usize>; 2]> {
            let all = series(&format!("eye_lmk_{axis}_"), n_eye)?;
            Ok([all[..half].to_vec(), all[half..].to_vec()])
        };
        let [ex0, ex1] = eye_axis("x")?;
        let [ey0, ey1] = eye_axis("y")?;
        let [wx0, wx1] = eye_axis("X")?;
        let [wy0, wy1] = eye_axis("Y")?;
        let [wz0, wz1] = eye_axis("Z")?;

        let au = |suffix: &str, names: &[&str]| -> Result<Vec<usize>> {
            names.iter().map(|n| get(&format!("{n}_{suffix}"))).collect()
        };

        Ok(Columns {
            gaze,
            gaze_angle,
            eye_2d: [[ex0, ey0], [ex1, ey1]],
            eye_3d: [[wx0, wy0, wz0], [wx1, wy1, wz1]],
            pose_t: [get("pose_Tx")?, get("pose_Ty")?, get("pose_Tz")?],
            pose_r: [get("pose_Rx")?, get("pose_Ry")?, get("pose_Rz")?],
            face_2d: [series("x_", FACE_LANDMARKS)?, series("y_", FACE_LANDMARKS)?],
            face_3d: [
                series("X_", FACE_LANDMARKS)?,
                series("Y_", FACE_LANDMARKS)?,
                series("Z_", FACE_LANDMARKS)?,
            ],
            au_r: au("r", &AU_INTENSITY)?,
            au_c: au("c", &AU_PRESENCE)?,
        })
    }

    fn frame<T: Scalar>(&self, row: &[T]) -> FrameBehavior<T> {
        let avg = |cols: &[usize]| mean(cols.iter().map(|&c| row[c]));
        let pick = |c: usize| row[c];
        FrameBehavior {
            gaze_vectors: self.gaze.map(|e| e.map(pick)),
            gaze_radians: self.gaze_angle.map(pick),
            eye_landmarks_2d: [0, 1].map(|e| [avg(&self.eye_2d[e][0]), avg(&self.eye_2d[e][1])]),
            eye_landmarks_3d: [0, 1].map(|e| {
                [
                    avg(&self.eye_3d[e][0]),
                    avg(&self.eye_3d[e][1]),
                    avg(&self.eye_3d[e][2]),
                ]
            }),
            head_location: self.pose_t.map(pick),
            head_pose_radians: self.pose_r.map(pick),
            face_landmark_mean_2d: [avg(&self.face_2d[0]), avg(&self.face_2d[1])],
            face_landmark_mean_3d: [avg(&self.face_3d[0]), avg(&self.face_3d[1]), avg(&self.face_3d[2])],
            au_intensity: std::array::from_fn(|i| row[self.au_r[i]]),
            au_presence: std::array::from_fn(|i| row[self.au_c[i]]),
        }
    }
}

/// Reads an OpenFace 2.0 CSV and groups its frames into clips of
/// `clip_len_frames`; a trailing partial clip is kept.
pub fn parse_openface_csv<T: Scalar>(path: &Path, clip_len_frames: usize) -> Result<Vec<Vec<FrameBehavior<T>>>> {
    if clip_len_frames == 0 {
        return Err(Error::Config("clip_len_frames must be positive".into()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::MalformedRow {
        path: name.clone(),
        line: 1,
        message: "empty file".into(),
    })?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    let cols = Columns::resolve(&header)?;

    let mut frames = Vec::new();
    for (lineno, line) in lines {
        let malformed = |message: String| Error::MalformedRow {
            path: name.clone(),
            line: lineno + 1,
            message,
        };
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(malformed(format!("{} cells for {} columns", cells.len(), header.len())));
        }
        let row = cells
            .iter()
            .map(|c| match c.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(T::lit(v)),
                _ => Err(malformed(format!("non-numeric cell `{c}`"))),
            })
            .collect::<Result<Vec<T>>>()?;
        let frame = cols.frame(&row);
        if frame.au_presence.iter().any(|&p| p != T::zero() && p != T::one()) {
            return Err(malformed("AU presence must be 0 or 1".into()));
        }
        if frame.au_intensity.iter().any(|&v| v < T::zero()) {
            return Err(malformed("negative AU intensity".into()));
        }
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(Error::MalformedRow {
            path: name,
            line: 2,
            message: "no frames".into(),
        });
    }
    let mut clips = Vec::with_capacity(frames.len().div_ceil(clip_len_frames));
    let mut it = frames.into_iter().peekable();
    while it.peek().is_some() {
        clips.push(it.by_ref().take(clip_len_frames).collect());
    }
    Ok(clips)
}

/// `[num_clips, 117]` behavioral matrix for an OpenFace export.
pub fn behavior_matrix<T: Scalar>(path: &Path, clip_len_frames: usize) -> Result<Tensor<T>> {
    let clips = parse_openface_csv::<T>(path, clip_len_frames)?;
    let rows = clips
        .iter()
        .map(|c| BehavioralClipFeature::from_frames(c).map(|b| b.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

/// Fuses an OpenFace export with a `[num_clips, 128]` body CSV and writes the
/// `[num_clips, 245]` result. Returns the clip count.
pub fn fuse_files(openface_csv: &Path, body_csv: &Path, clip_len_frames: usize, out_csv: &Path) -> Result<usize> {
    let clips = parse_openface_csv::<f64>(openface_csv, clip_len_frames)?;
    let body = read_feature_csv::<f64>(body_csv, BODY_DIM)?;
    if body.rows() != clips.len() {
        return Err(Error::Length(format!(
            "{} behavioral clips vs {} body rows",
            clips.len(),
            body.rows()
        )));
    }
    let rows = clips
        .iter()
        .enumerate()
        .map(|(i, frames)| {
            let b = BehavioralClipFeature::from_frames(frames)?;
            fuse_concat(&b, body.row(i)).map(ClipFeature::into_values)
        })
        .collect::<Result<Vec<_>>>()?;
    write_feature_csv(out_csv, &Tensor::from_rows(&rows)?)?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still_frame() -> FrameBehavior<f64> {
        FrameBehavior {
            gaze_vectors: [[0.1, -0.2, -0.9], [0.05, -0.1, -0.95]],
            gaze_radians: [0.1, -0.2],
            eye_landmarks_2d: [[300.0, 200.0], [350.0, 201.0]],
            eye_landmarks_3d: [[-30.0, -5.0, 400.0], [30.0, -5.0, 401.0]],
            head_location: [10.0, 20.0, 500.0],
            head_pose_radians: [0.1, 0.0, -0.1],
            face_landmark_mean_2d: [320.0, 240.0],
            face_landmark_mean_3d: [0.0, 10.0, 480.0],
            au_intensity: [0.0; 17],
            au_presence: [0.0; 18],
        }
    }

    #[test]
    fn constant_gaze_has_zero_spread() {
        let frames = vec![still_frame(); 5];
        let g = gaze_features(&frames).unwrap();
        assert!(g[..16].iter().all(|&v| v == 0.0));
        assert_eq!(&g[16..18], &[300.0, 200.0]);
    }

    #[test]
    fn two_sample_gaze_statistics() {
        let mut a = still_frame();
        let mut b = still_frame();
        a.gaze_vectors = [[0.0; 3]; 2];
        b.gaze_vectors = [[0.0; 3]; 2];
        b.gaze_vectors[0][0] = 1.0;
        let g = gaze_features(&[a, b]).unwrap();
        assert_eq!(g[0], 0.5);
        assert_eq!(g[1], 1.0);
    }

    #[test]
    fn singleton_clip() {
        let f = still_frame();
        let g = gaze_features(std::slice::from_ref(&f)).unwrap();
        assert!(g[..16].iter().all(|&v| v == 0.0));
        assert_eq!(
            &g[16..],
            &[300.0, 200.0, 350.0, 201.0, -30.0, -5.0, 400.0, 30.0, -5.0, 401.0]
        );
        assert!(head_features(&[f]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_location_two_samples() {
        let mut a = still_frame();
        let mut b = still_frame();
        a.head_location[0] = 0.0;
        b.head_location[0] = 2.0;
        let h = head_features(&[a, b]).unwrap();
        assert_eq!(h.len(), 22);
        assert_eq!(&h[..2], &[1.0, 2.0]);
        assert!(h[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn au_frequency_and_intensity() {
        let mut frames = vec![still_frame(); 16];
        for f in frames.iter_mut().take(8) {
            f.au_presence[3] = 1.0;
        }
        let a = au_features(&frames).unwrap();
        assert_eq!(a[3], 0.5);
        assert!(a[18..].iter().all(|&v| v == 0.0));

        let mut x = still_frame();
        let mut y = still_frame();
        x.au_intensity[0] = 1.0;
        y.au_intensity[0] = 3.0;
        let a = au_features(&[x, y]).unwrap();
        assert_eq!(&a[18..21], &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn fuse_dimensions() {
        let b = BehavioralClipFeature::from_frames(&[still_frame()]).unwrap();
        assert_eq!(b.len(), BEHAVIOR_DIM);
        let f = fuse_concat(&b, &[0.0; 128]).unwrap();
        assert_eq!(f.dim(), 245);
        assert!(fuse_concat(&b, &[0.0; 127]).is_err());
        let zeros = BehavioralClipFeature {
            gaze: vec![0.0; 26],
            head: vec![0.0; 22],
            au: vec![0.0; 69],
        };
        let z = fuse_concat(&zeros, &[0.0; 128]).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_clip_rejected() {
        assert!(gaze_features::<f64>(&[]).is_err());
    }
}
