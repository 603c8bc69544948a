use rand::Rng;

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Inverted dropout. Returns the output and, in training mode with `p > 0`,
/// the per-element multiplier (`0` or `1/(1−p)`) needed for the backward pass.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor<T>,
    p: f64,
    training: bool,
    rng: &mut R,
) -> (Tensor<T>, Option<Tensor<T>>) {
    assert!((0.0..1.0).contains(&p), "dropout rate must lie in [0, 1)");
    if !training || p == 0.0 {
        return (x.clone(), None);
    }
    let keep = T::lit(1.0 / (1.0 - p));
    let mask_data = (0..x.len())
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect();
    let mask = Tensor::from_vec(x.shape(), mask_data).expect("mask shape");
    let y = x.zip_map(&mask, |a, m| a * m).expect("mask shape");
    (y, Some(mask))
}

pub fn dropout_backward<T: Scalar>(dy: &Tensor<T>, mask: Option<&Tensor<T>>) -> Tensor<T> {
    match mask {
        Some(m) => dy.zip_map(m, |g, k| g * k).expect("mask shape"),
        None => dy.clone(),
    }
}
