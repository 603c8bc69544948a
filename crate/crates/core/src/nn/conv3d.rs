//! Single-sample 3-D convolution (cross-correlation) via im2col.
//!
//! Input `[C_in, D, H, W]`, kernel `[C_out, C_in, k, k, k]`, zero padding
//! `(k − 1) / 2` on every spatial side, so a 3×3×3 kernel keeps `⌈D/stride⌉`
//! and a 1×1×1 kernel is unpadded.

use rand::Rng;

use super::params::{glorot_uniform, ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    c_in: usize,
    dims: [usize; 3],
    k: usize,
    stride: usize,
    pad: usize,
    out: [usize; 3],
}

impl Geometry {
    fn new(x_shape: &[usize], k_shape: &[usize], stride: usize) -> Result<Self> {
        if x_shape.len() != 4 || k_shape.len() != 5 {
            return Err(Error::Shape(format!("conv3d input {x_shape:?} / kernel {k_shape:?}")));
        }
        let (c_in, k) = (x_shape[0], k_shape[2]);
        if k_shape[1] != c_in || k_shape[3] != k || k_shape[4] != k || k == 0 || stride == 0 {
            return Err(Error::Shape(format!(
                "conv3d kernel {k_shape:?} incompatible with input {x_shape:?} (stride {stride})"
            )));
        }
        let pad = (k - 1) / 2;
        let mut out = [0; 3];
        let dims = [x_shape[1], x_shape[2], x_shape[3]];
        for (o, &d) in out.iter_mut().zip(&dims) {
            if d + 2 * pad < k {
                return Err(Error::Shape(format!(
                    "conv3d spatial extent {d} too small for kernel {k}"
                )));
            }
            *o = (d + 2 * pad - k) / stride + 1;
        }
        Ok(Geometry {
            c_in,
            dims,
            k,
            stride,
            pad,
            out,
        })
    }

    fn patch(&self) -> usize {
        self.c_in * self.k * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.out.iter().product()
    }

    /// Calls `f(col_row, col_pos, input_offset)` for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [d, h, w] = self.dims;
        let [od, oh, ow] = self.out;
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let mut row = 0;
        for c in 0..self.c_in {
            for kd in 0..k {
                for kh in 0..k {
                    for kw in 0..k {
                        let mut pos = 0;
                        for z in 0..od {
                            let iz = (z * s + kd) as isize - p;
                            for y in 0..oh {
                                let iy = (y * s + kh) as isize - p;
                                for x in 0..ow {
                                    let ix = (x * s + kw) as isize - p;
                                    if iz >= 0
                                        && iy >= 0
                                        && ix >= 0
                                        && (iz as usize) < d
                                        && (iy as usize) < h
                                        && (ix as usize) < w
                                    {
                                        let off = ((c * d + iz as usize) * h + iy as usize) * w + ix as usize;
                                        f(row, pos, off);
                                    }
                                    pos += 1;
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    fn im2col<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let n = self.positions();
        let mut cols = vec![T::zero(); self.patch() * n];
        self.for_each_tap(|r, p, off| cols[r * n + p] = x[off]);
        cols
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let n = self.positions();
        self.for_each_tap(|r, p, off| dx[off] += cols[r * n + p]);
    }
}

/// Output shape of [`conv3d`] without running it.
pub fn conv3d_output_shape(x_shape: &[usize], k_shape: &[usize], stride: usize) -> Result<[usize; 4]> {
    let g = Geometry::new(x_shape, k_shape, stride)?;
    Ok([k_shape[0], g.out[0], g.out[1], g.out[2]])
}

pub fn conv3d<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new(x.shape(), kernel.shape(), stride)?;
    let c_out = kernel.shape()[0];
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::Shape(format!(
                "conv3d bias {:?} for {c_out} output channels",
                b.shape()
            )));
        }
    }
    let n = g.positions();
    let patch = g.patch();
    let mut out = vec![T::zero(); c_out * n];
    if let Some(b) = bias {
        for (row, &bv) in out.chunks_exact_mut(n).zip(b.data()) {
            row.fill(bv);
        }
    }
    if patch == 1 {
        // 1×1×1 kernels read the input directly
        T::gemm(
            c_out,
            g.c_in,
            n,
            T::one(),
            kernel.data(),
            (g.c_in as isize, 1),
            x.data(),
            (n as isize, 1),
            T::one(),
            &mut out,
            (n as isize, 1),
        );
    } else {
        let cols = g.im2col(x.data());
        T::gemm(
            c_out,
            patch,
            n,
            T::one(),
            kernel.data(),
            (patch as isize, 1),
            &cols,
            (n as isize, 1),
            T::one(),
            &mut out,
            (n as isize, 1),
        );
    }
    Tensor::from_vec(&[c_out, g.out[0], g.out[1], g.out[2]], out)
}

/// `(dx, dkernel, dbias)`; `dx` only when requested.
pub type ConvGrads<T> = (Option<Tensor<T>>, Tensor<T>, Tensor<T>);

/// Gradients of [`conv3d`].
pub fn conv3d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    dy: &Tensor<T>,
    need_dx: bool,
) -> Result<ConvGrads<T>> {
    let g = Geometry::new(x.shape(), kernel.shape(), stride)?;
    let c_out = kernel.shape()[0];
    let n = g.positions();
    let patch = g.patch();
    if dy.shape() != [c_out, g.out[0], g.out[1], g.out[2]] {
        return Err(Error::Shape(format!("conv3d upstream gradient {:?}", dy.shape())));
    }
    let cols_owned;
    let cols: &[T] = if patch == 1 {
        x.data()
    } else {
        cols_owned = g.im2col(x.data());
        &cols_owned
    };

    let mut dk = vec![T::zero(); c_out * patch];
    T::gemm(
        c_out,
        n,
        patch,
        T::one(),
        dy.data(),
        (n as isize, 1),
        cols,
        (1, n as isize),
        T::zero(),
        &mut dk,
        (patch as isize, 1),
    );
    let db: Vec<T> = dy.data().chunks_exact(n).map(|row| row.iter().copied().sum()).collect();

    let dx = if need_dx {
        let mut dcols = vec![T::zero(); patch * n];
        T::gemm(
            patch,
            c_out,
            n,
            T::one(),
            kernel.data(),
            (1, patch as isize),
            dy.data(),
            (n as isize, 1),
            T::zero(),
            &mut dcols,
            (n as isize, 1),
        );
        let mut dx = vec![T::zero(); x.len()];
        if patch == 1 {
            dx = dcols;
        } else {
            g.col2im(&dcols, &mut dx);
        }
        Some(Tensor::from_vec(x.shape(), dx)?)
    } else {
        None
    };
    Ok((
        dx,
        Tensor::from_vec(kernel.shape(), dk)?,
        Tensor::from_vec(&[c_out], db)?,
    ))
}

/// Convolution layer with parameters registered in a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
}

impl Conv3d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let vol = k * k * k;
        let kernel = ps.add(
            format!("{name}.kernel"),
            glorot_uniform(&[c_out, c_in, k, k, k], c_in * vol, c_out * vol, rng),
        )?;
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[c_out]))?;
        Ok(Conv3d {
            kernel,
            bias,
            c_in,
            c_out,
            k,
            stride,
        })
    }

    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv3d(x, ps.value(self.kernel), Some(ps.value(self.bias)), self.stride)
    }

    pub fn backward<T: Scalar>(
        &self,
        ps: &mut ParamSet<T>,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        need_dx: bool,
    ) -> Result<Option<Tensor<T>>> {
        let (dx, dk, db) = conv3d_backward(x, ps.value(self.kernel), self.stride, dy, need_dx)?;
        ps.accumulate(self.kernel, &dk);
        ps.accumulate(self.bias, &db);
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct seven-loop cross-correlation used as an oracle.
    fn direct(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize) -> Tensor<f64> {
        let [c_in, d, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let (c_out, ks) = (k.shape()[0], k.shape()[2]);
        let p = (ks - 1) / 2;
        let o = |n: usize| (n + 2 * p - ks) / stride + 1;
        let (od, oh, ow) = (o(d), o(h), o(w));
        let mut out = Tensor::zeros(&[c_out, od, oh, ow]);
        for co in 0..c_out {
            for z in 0..od {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..c_in {
                            for a in 0..ks {
                                for b in 0..ks {
                                    for c in 0..ks {
                                        let iz = (z * stride + a) as isize - p as isize;
                                        let iy = (y * stride + b) as isize - p as isize;
                                        let ix = (xx * stride + c) as isize - p as isize;
                                        if iz < 0 || iy < 0 || ix < 0 {
                                            continue;
                                        }
                                        let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                        if iz >= d || iy >= h || ix >= w {
                                            continue;
                                        }
                                        acc += x.data()[((ci * d + iz) * h + iy) * w + ix]
                                            * k.data()[(((co * c_in + ci) * ks + a) * ks + b) * ks + c];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((co * od + z) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        glorot_uniform(shape, 3, 3, rng)
    }

    #[test]
    fn unit_kernel_scales() {
        let x = Tensor::full(&[1, 2, 2, 2], 1.0);
        let k = Tensor::full(&[1, 1, 1, 1, 1], 2.0);
        let y = conv3d(&x, &k, None, 1).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn zero_kernel_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[2, 3, 4, 4], &mut rng);
        let y = conv3d(&x, &Tensor::zeros(&[3, 2, 3, 3, 3]), None, 2).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(stride, ks) in &[(1, 3), (2, 3), (1, 1), (2, 1)] {
            let x = random(&[2, 5, 4, 6], &mut rng);
            let k = random(&[3, 2, ks, ks, ks], &mut rng);
            let got = conv3d(&x, &k, None, stride).unwrap();
            let want = direct(&x, &k, stride);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_padding_stride_two_halves_rounding_up() {
        let s = conv3d_output_shape(&[32, 8, 16, 16], &[32, 32, 3, 3, 3], 2).unwrap();
        assert_eq!(s, [32, 4, 8, 8]);
        let s = conv3d_output_shape(&[4, 5, 5, 5], &[4, 4, 3, 3, 3], 2).unwrap();
        assert_eq!(s, [4, 3, 3, 3]);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::<f64>::zeros(&[2, 4, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 3, 3, 3]);
        assert!(conv3d(&x, &k, None, 1).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let x = random(&[3, 4, 4, 4], &mut rng);
        let k = random(&[2, 3, 3, 3, 3], &mut rng);
        let stride = 2;
        let y = conv3d(&x, &k, None, stride).unwrap();
        // loss = Σ r ⊙ y with a random readout r
        let r = random(y.shape(), &mut rng);
        let loss = |x: &Tensor<f64>, k: &Tensor<f64>| -> f64 {
            let y = conv3d(x, k, None, stride).unwrap();
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let (dx, dk, _) = conv3d_backward(&x, &k, stride, &r, true).unwrap();
        let dx = dx.unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let fd = (loss(&xp, &k) - loss(&xm, &k)) / (2.0 * h);
            let a = dx.data()[i];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
        for i in 0..k.len() {
            let (mut kp, mut km) = (k.clone(), k.clone());
            kp.data_mut()[i] += h;
            km.data_mut()[i] -= h;
            let fd = (loss(&x, &kp) - loss(&x, &km)) / (2.0 * h);
            let a = dk.data()[i];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }
}
