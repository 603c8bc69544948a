use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Softmax over each row of a rank-2 tensor.
    SoftmaxRows,
}

impl Activation {
    pub fn forward<T: Scalar>(self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Activation::Relu => Ok(relu(x)),
            Activation::Sigmoid => Ok(x.map(sigmoid)),
            Activation::SoftmaxRows => softmax_rows(x),
        }
    }

    /// Backward pass expressed in terms of the forward *output* `y`.
    pub fn backward<T: Scalar>(self, y: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Activation::Relu => relu_backward(y, dy),
            Activation::Sigmoid => y.zip_map(dy, |s, g| g * s * (T::one() - s)),
            Activation::SoftmaxRows => softmax_rows_backward(y, dy),
        }
    }
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

pub fn relu_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_map(dy, |v, g| if v > T::zero() { g } else { T::zero() })
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax of one row.
pub fn softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
    let z: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 2 {
        return Err(Error::Shape(format!("softmax_rows needs rank 2, got {:?}", x.shape())));
    }
    let mut out = Vec::with_capacity(x.len());
    for r in 0..x.rows() {
        out.extend(softmax(x.row(r)));
    }
    Tensor::from_vec(x.shape(), out)
}

/// `dx_i = p_i (dy_i − Σ_j p_j dy_j)` per row.
pub fn softmax_rows_backward<T: Scalar>(p: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    p.expect_same_shape(dy)?;
    let mut dx = Tensor::zeros(p.shape());
    for r in 0..p.rows() {
        let (pr, gr) = (p.row(r), dy.row(r));
        let dot: T = pr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for (o, (&pi, &gi)) in dx.row_mut(r).iter_mut().zip(pr.iter().zip(gr)) {
            *o = pi * (gi - dot);
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn definitions() {
        let x = Tensor::from_vec(&[2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        assert_eq!(sigmoid(0.0f64), 0.5);
        let s = softmax_rows(&Tensor::<f64>::zeros(&[1, 2])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_requires_rank_two() {
        assert!(softmax_rows(&Tensor::<f64>::zeros(&[3])).is_err());
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(v in proptest::collection::vec(-15.0f64..15.0, 2..16)) {
            let n = v.len();
            let t = Tensor::from_vec(&[1, n], v).unwrap();
            let p = softmax_rows(&t).unwrap();
            prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
            for &x in p.data() {
                prop_assert!(x > 0.0 && x < 1.0);
            }
        }
    }
}
