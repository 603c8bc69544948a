use rand::Rng;

use super::params::{glorot_uniform, ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `y = x·W + b` for `x: [n, d_in]`, `W: [d_in, d_out]`, `b: [d_out]`.
pub fn affine<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || b.len() != w.shape()[1] {
        return Err(Error::Shape(format!(
            "affine x {:?}, W {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut y = x.matmul(w)?;
    let d_out = b.len();
    for row in y.data_mut().chunks_exact_mut(d_out) {
        for (v, &bias) in row.iter_mut().zip(b.data()) {
            *v += bias;
        }
    }
    Ok(y)
}

/// Gradients of [`affine`]: `(dx, dW, db)`. `dx` is skipped when not needed.
pub fn affine_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    need_dx: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let dw = x.t_matmul(dy).expect("affine backward shapes");
    let d_out = dy.cols();
    let mut db = vec![T::zero(); d_out];
    for row in dy.data().chunks_exact(d_out) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    let dx = need_dx.then(|| dy.matmul_t(w).expect("affine backward shapes"));
    (dx, dw, Tensor::from_vec(&[d_out], db).expect("bias length"))
}

/// Fully connected layer whose weights live in a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Affine {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Affine {
    /// Registers `{name}.w` (Glorot uniform) and `{name}.b` (zeros).
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = ps.add(format!("{name}.w"), glorot_uniform(&[d_in, d_out], d_in, d_out, rng))?;
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[d_out]))?;
        Ok(Affine { w, b, d_in, d_out })
    }

    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 2 || x.cols() != self.d_in {
            return Err(Error::Dimension {
                context: "affine input".into(),
                expected: self.d_in,
                found: x.shape().last().copied().unwrap_or(0),
            });
        }
        affine(x, ps.value(self.w), ps.value(self.b))
    }

    /// Accumulates parameter gradients and returns `dx` when requested.
    pub fn backward<T: Scalar>(
        &self,
        ps: &mut ParamSet<T>,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let (dx, dw, db) = affine_backward(x, ps.value(self.w), dy, need_dx);
        ps.accumulate(self.w, &dw);
        ps.accumulate(self.b, &db);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let y = affine(&x, &Tensor::eye(2), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_input_broadcasts_bias() {
        let x = Tensor::<f64>::zeros(&[3, 2]);
        let w = Tensor::full(&[2, 4], 0.3);
        let b = Tensor::from_vec(&[4], vec![1.0, -1.0, 0.5, 2.0]).unwrap();
        let y = affine(&x, &w, &b).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), b.data());
        }
    }

    #[test]
    fn bias_gradient_of_sum_is_ones_per_row() {
        let x = Tensor::from_vec(&[1, 3], vec![0.2, -0.4, 1.0]).unwrap();
        let w = Tensor::full(&[3, 2], 0.1);
        let dy = Tensor::full(&[1, 2], 1.0);
        let (_, _, db) = affine_backward(&x, &w, &dy, false);
        assert_eq!(db.data(), &[1.0, 1.0]);
    }

    #[test]
    fn shape_mismatch_errors() {
        let x = Tensor::<f64>::zeros(&[2, 3]);
        assert!(affine(&x, &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2])).is_err());
        assert!(affine(&x, &Tensor::zeros(&[3, 2]), &Tensor::zeros(&[3])).is_err());
    }
}
