//! Temporal-consistency and feature-similarity graphs over the clips of one
//! video, renormalized adjacency, two-layer GCN stacks and the fused
//! softmax readout.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::activation::{relu_backward, softmax_rows, softmax_rows_backward};
use crate::nn::{glorot_uniform, relu, ParamId, ParamSet, Tensor};
use crate::scalar::Scalar;

pub const GCN_HIDDEN: usize = 32;
pub const GCN_OUT: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdjacencyKind {
    Temporal,
    Similarity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix<T> {
    pub values: Tensor<T>,
    pub kind: AdjacencyKind,
    pub normalized: bool,
}

impl<T: Scalar> AdjacencyMatrix<T> {
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values.data()[i * self.n() + j]
    }

    /// Debug dump as an `N x N` CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = self
                .values
                .row(i)
                .iter()
                .map(|v| crate::data::format_sig9(v.as_f64()))
                .collect();
            writeln!(out, "{}", row.join(",")).expect("string write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `A_ij = exp(−|i − j|)`.
pub fn build_temporal_adjacency<T: Scalar>(n: usize) -> Result<AdjacencyMatrix<T>> {
    if n == 0 {
        return Err(Error::Shape("temporal graph needs at least one clip".into()));
    }
    let mut a = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            a.data_mut()[i * n + j] = T::lit(-(i.abs_diff(j) as f64)).exp();
        }
    }
    Ok(AdjacencyMatrix {
        values: a,
        kind: AdjacencyKind::Temporal,
        normalized: false,
    })
}

/// Row-max index of the dot-product matrix, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct SimilarityCache {
    argmax: Vec<usize>,
}

/// `A_ij = exp(X_i·X_j − max_k X_i·X_k)`.
pub fn build_similarity_adjacency<T: Scalar>(x: &Tensor<T>) -> Result<AdjacencyMatrix<T>> {
    similarity_forward(x).map(|(a, _)| a)
}

pub(crate) fn similarity_forward<T: Scalar>(x: &Tensor<T>) -> Result<(AdjacencyMatrix<T>, SimilarityCache)> {
    if x.rank() != 2 || x.rows() == 0 {
        return Err(Error::Shape(format!(
            "similarity graph needs a non-empty [N, d] matrix, got {:?}",
            x.shape()
        )));
    }
    let n = x.rows();
    let mut s = x.matmul_t(x)?;
    if !s.is_finite() {
        return Err(Error::NonFinite {
            context: "feature dot products".into(),
        });
    }
    let mut argmax = Vec::with_capacity(n);
    for i in 0..n {
        let row = s.row_mut(i);
        let (k, m) =
            row.iter().copied().enumerate().fold(
                (0, T::neg_infinity()),
                |best, (k, v)| if v > best.1 { (k, v) } else { best },
            );
        argmax.push(k);
        for v in row.iter_mut() {
            *v = (*v - m).exp();
        }
    }
    Ok((
        AdjacencyMatrix {
            values: s,
            kind: AdjacencyKind::Similarity,
            normalized: false,
        },
        SimilarityCache { argmax },
    ))
}

/// Gradient of the similarity adjacency with respect to `X`.
pub(crate) fn similarity_backward<T: Scalar>(
    x: &Tensor<T>,
    a: &Tensor<T>,
    cache: &SimilarityCache,
    da: &Tensor<T>,
) -> Tensor<T> {
    let n = a.rows();
    let mut ds = Tensor::zeros(&[n, n]);
    for i in 0..n {
        let mut total = T::zero();
        for j in 0..n {
            let g = da.data()[i * n + j] * a.data()[i * n + j];
            ds.data_mut()[i * n + j] = g;
            total += g;
        }
        ds.data_mut()[i * n + cache.argmax[i]] -= total;
    }
    let sym = ds.add(&ds.transpose()).expect("square");
    sym.matmul(x).expect("shapes")
}

/// Intermediate values of the renormalization trick.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    tilde: Tensor<T>,
    inv_sqrt_deg: Vec<T>,
}

/// `Â = D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the row sums of `A + I`.
pub fn normalize_adjacency<T: Scalar>(a: &AdjacencyMatrix<T>) -> Result<AdjacencyMatrix<T>> {
    let (hat, _) = normalize_forward(&a.values)?;
    Ok(AdjacencyMatrix {
        values: hat,
        kind: a.kind,
        normalized: true,
    })
}

pub(crate) fn normalize_forward<T: Scalar>(a: &Tensor<T>) -> Result<(Tensor<T>, NormCache<T>)> {
    if a.rank() != 2 || a.rows() != a.cols() {
        return Err(Error::Shape(format!("adjacency must be square, got {:?}", a.shape())));
    }
    if a.data().iter().any(|&v| v < T::zero() || !v.is_finite()) {
        return Err(Error::Shape("adjacency entries must be finite and non-negative".into()));
    }
    let n = a.rows();
    let tilde = a.add(&Tensor::eye(n))?;
    let inv_sqrt_deg: Vec<T> = (0..n)
        .map(|i| {
            let d: T = tilde.row(i).iter().copied().sum();
            assert!(d > T::zero(), "degree is at least one after adding I");
            T::one() / d.sqrt()
        })
        .collect();
    let mut hat = tilde.clone();
    for i in 0..n {
        for j in 0..n {
            hat.data_mut()[i * n + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    Ok((hat, NormCache { tilde, inv_sqrt_deg }))
}

pub(crate) fn normalize_backward<T: Scalar>(cache: &NormCache<T>, dhat: &Tensor<T>) -> Tensor<T> {
    let n = cache.tilde.rows();
    let r = &cache.inv_sqrt_deg;
    let t = cache.tilde.data();
    let g = dhat.data();
    let mut da = Tensor::zeros(&[n, n]);
    let mut dr = vec![T::zero(); n];
    for i in 0..n {
        for j in 0..n {
            let gij = g[i * n + j];
            da.data_mut()[i * n + j] = gij * r[i] * r[j];
            dr[i] += gij * t[i * n + j] * r[j];
            dr[j] += gij * t[i * n + j] * r[i];
        }
    }
    let half = T::lit(0.5);
    for i in 0..n {
        // r = deg^{-1/2}  =>  dr/ddeg = -r³/2
        let ddeg = -half * dr[i] * r[i] * r[i] * r[i];
        for v in da.row_mut(i) {
            *v += ddeg;
        }
    }
    da
}

/// Two graph convolutions: `H = Â · relu(Â X W₁) · W₂`, no biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GcnStack {
    pub w1: ParamId,
    pub w2: ParamId,
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
}

#[derive(Clone, Debug)]
pub struct GcnCache<T> {
    ax: Tensor<T>,
    h1: Tensor<T>,
    ah1: Tensor<T>,
}

impl GcnStack {
    pub fn new<T: Scalar, R: Rng + ?Sized>(ps: &mut ParamSet<T>, name: &str, d_in: usize, rng: &mut R) -> Result<Self> {
        Self::with_widths(ps, name, d_in, GCN_HIDDEN, GCN_OUT, rng)
    }

    pub fn with_widths<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        d_in: usize,
        hidden: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w1 = ps.add(format!("{name}.w1"), glorot_uniform(&[d_in, hidden], d_in, hidden, rng))?;
        let w2 = ps.add(
            format!("{name}.w2"),
            glorot_uniform(&[hidden, d_out], hidden, d_out, rng),
        )?;
        Ok(GcnStack {
            w1,
            w2,
            d_in,
            hidden,
            d_out,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        a_hat: &Tensor<T>,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, GcnCache<T>)> {
        if a_hat.rank() != 2 || a_hat.rows() != x.rows() || a_hat.cols() != x.rows() {
            return Err(Error::Shape(format!(
                "adjacency {:?} for features {:?}",
                a_hat.shape(),
                x.shape()
            )));
        }
        if x.cols() != self.d_in {
            return Err(Error::Dimension {
                context: "gcn input".into(),
                expected: self.d_in,
                found: x.cols(),
            });
        }
        let ax = a_hat.matmul(x)?;
        let h1 = relu(&ax.matmul(ps.value(self.w1))?);
        let ah1 = a_hat.matmul(&h1)?;
        let h = ah1.matmul(ps.value(self.w2))?;
        Ok((h, GcnCache { ax, h1, ah1 }))
    }

    /// Accumulates weight gradients; returns `(dX, dÂ)`.
    pub fn backward<T: Scalar>(
        &self,
        ps: &mut ParamSet<T>,
        a_hat: &Tensor<T>,
        x: &Tensor<T>,
        cache: &GcnCache<T>,
        dh: &Tensor<T>,
    ) -> (Tensor<T>, Tensor<T>) {
        let w1 = ps.value(self.w1).clone();
        let w2 = ps.value(self.w2).clone();
        ps.accumulate(self.w2, &cache.ah1.t_matmul(dh).expect("shapes"));
        let dah1 = dh.matmul_t(&w2).expect("shapes");
        let mut da = dah1.matmul_t(&cache.h1).expect("shapes");
        let dh1 = a_hat.t_matmul(&dah1).expect("shapes");
        let dz1 = relu_backward(&cache.h1, &dh1).expect("shapes");
        ps.accumulate(self.w1, &cache.ax.t_matmul(&dz1).expect("shapes"));
        let dax = dz1.matmul_t(&w1).expect("shapes");
        da.add_assign(&dax.matmul_t(x).expect("shapes")).expect("shapes");
        let dx = a_hat.t_matmul(&dax).expect("shapes");
        (dx, da)
    }
}

/// `softmax_rows((H_T + H_F) / 2)`; column 1 is the anomaly probability.
pub fn fuse_predict<T: Scalar>(h_t: &Tensor<T>, h_f: &Tensor<T>) -> Result<Tensor<T>> {
    let avg = h_t.zip_map(h_f, |a, b| (a + b) * T::lit(0.5))?;
    softmax_rows(&avg)
}

/// Gradient of [`fuse_predict`]; both branches receive the same tensor.
pub fn fuse_predict_backward<T: Scalar>(p: &Tensor<T>, dp: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(softmax_rows_backward(p, dp)?.scale(T::lit(0.5)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn temporal_values() {
        let a = build_temporal_adjacency::<f64>(3).unwrap();
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        assert_eq!(a.values.data(), &[1.0, e1, e2, e1, 1.0, e1, e2, e1, 1.0]);
        assert!((e1 - 0.367879).abs() < 1e-6);
        assert!((e2 - 0.135335).abs() < 1e-6);
    }

    #[test]
    fn similarity_examples() {
        let x = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = build_similarity_adjacency(&x).unwrap();
        let e1 = (-1.0f64).exp();
        assert_eq!(a.values.data(), &[1.0, e1, e1, 1.0]);

        let same = Tensor::full(&[4, 3], 0.7);
        let a = build_similarity_adjacency(&same).unwrap();
        assert!(a.values.data().iter().all(|&v| v == 1.0));

        let single = Tensor::from_vec(&[1, 2], vec![3.0, -1.0]).unwrap();
        assert_eq!(build_similarity_adjacency(&single).unwrap().values.data(), &[1.0]);
    }

    #[test]
    fn similarity_is_not_symmetric_in_general() {
        // row 0 max is X0·X1 = 2, row 1 max is X1·X1 = 4
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 2.0]).unwrap();
        let a = build_similarity_adjacency(&x).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert!((a.get(1, 0) - (-2.0f64).exp()).abs() < 1e-15);
        assert_ne!(a.get(0, 1), a.get(1, 0));
    }

    #[test]
    fn normalize_examples() {
        let ones: AdjacencyMatrix<f64> = AdjacencyMatrix {
            values: Tensor::full(&[2, 2], 1.0),
            kind: AdjacencyKind::Similarity,
            normalized: false,
        };
        let hat = normalize_adjacency(&ones).unwrap();
        let want = [2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for (a, b) in hat.values.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero: AdjacencyMatrix<f64> = AdjacencyMatrix {
            values: Tensor::zeros(&[1, 1]),
            kind: AdjacencyKind::Temporal,
            normalized: false,
        };
        assert_eq!(normalize_adjacency(&zero).unwrap().values.data(), &[1.0]);
    }

    #[test]
    fn normalize_rejects_negative_entries() {
        let bad = AdjacencyMatrix {
            values: Tensor::from_vec(&[2, 2], vec![1.0, -0.1, 0.0, 1.0]).unwrap(),
            kind: AdjacencyKind::Temporal,
            normalized: false,
        };
        assert!(normalize_adjacency(&bad).is_err());
    }

    #[test]
    fn gcn_zero_input_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        let g = GcnStack::new(&mut ps, "g", 8, &mut rng).unwrap();
        let a = normalize_adjacency(&build_temporal_adjacency::<f64>(5).unwrap()).unwrap();
        let (h, _) = g.forward(&ps, &a.values, &Tensor::zeros(&[5, 8])).unwrap();
        assert_eq!(h.shape(), &[5, 2]);
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gcn_identity_graph_passes_through() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = GcnStack::with_widths(&mut ps, "g", 3, 3, 2, &mut rng).unwrap();
        *ps.value_mut(g.w1) = Tensor::eye(3);
        *ps.value_mut(g.w2) = Tensor::from_vec(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let x = Tensor::from_vec(&[1, 3], vec![0.5, 2.0, 1.0]).unwrap();
        let (h, _) = g.forward(&ps, &Tensor::eye(1), &x).unwrap();
        assert_eq!(h.data(), &[0.5, 2.0]);
    }

    #[test]
    fn fuse_examples() {
        let ht = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        let hf = Tensor::from_vec(&[1, 2], vec![0.0, 1.0]).unwrap();
        assert_eq!(fuse_predict(&ht, &hf).unwrap().data(), &[0.5, 0.5]);
        let big = Tensor::<f64>::from_vec(&[1, 2], vec![0.0, 10.0]).unwrap();
        let p = fuse_predict(&big, &big).unwrap();
        assert!((p.data()[1] - 0.9999546).abs() < 1e-7);
        assert!(fuse_predict(&ht, &Tensor::zeros(&[2, 2])).is_err());
    }

    fn fd_check(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, analytic: &Tensor<f64>) -> f64 {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..x.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data_mut()[i] += h;
            m.data_mut()[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            let a = analytic.data()[i];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
        worst
    }

    #[test]
    fn similarity_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x: Tensor<f64> = glorot_uniform(&[5, 4], 1, 1, &mut rng);
        let r: Tensor<f64> = glorot_uniform(&[5, 5], 1, 1, &mut rng);
        let f = |x: &Tensor<f64>| {
            let a = build_similarity_adjacency(x).unwrap();
            a.values.data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (a, cache) = similarity_forward(&x).unwrap();
        let dx = similarity_backward(&x, &a.values, &cache, &r);
        assert!(fd_check(f, &x, &dx) < 1e-4);
    }

    #[test]
    fn normalize_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Tensor<f64> = glorot_uniform(&[4, 4], 1, 1, &mut rng).map(f64::abs);
        let r: Tensor<f64> = glorot_uniform(&[4, 4], 1, 1, &mut rng);
        let f = |a: &Tensor<f64>| {
            let (h, _) = normalize_forward(a).unwrap();
            h.data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = normalize_forward(&a).unwrap();
        let da = normalize_backward(&cache, &r);
        assert!(fd_check(f, &a, &da) < 1e-4);
    }

    #[test]
    fn gcn_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ps = ParamSet::new();
        let g = GcnStack::new(&mut ps, "g", 8, &mut rng).unwrap();
        let x: Tensor<f64> = glorot_uniform(&[5, 8], 1, 1, &mut rng);
        let a_raw: Tensor<f64> = glorot_uniform(&[5, 5], 1, 1, &mut rng).map(f64::abs);
        let r: Tensor<f64> = glorot_uniform(&[5, 2], 1, 1, &mut rng);
        let readout = |h: &Tensor<f64>| h.data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>();
        let (h, cache) = g.forward(&ps, &a_raw, &x).unwrap();
        let _ = h;
        let (dx, da) = g.backward(&mut ps, &a_raw, &x, &cache, &r);
        let fx = |x: &Tensor<f64>| readout(&g.forward(&ps, &a_raw, x).unwrap().0);
        assert!(fd_check(fx, &x, &dx) < 1e-4);
        let fa = |a: &Tensor<f64>| readout(&g.forward(&ps, a, &x).unwrap().0);
        assert!(fd_check(fa, &a_raw, &da) < 1e-4);
    }
}
