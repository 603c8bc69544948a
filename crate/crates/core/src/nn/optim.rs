use super::params::ParamSet;
use crate::scalar::Scalar;

/// Denominator guard for Adagrad.
pub const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    /// `state += g²; w -= lr·g / (√state + ε)`
    Adagrad { lr: f64 },
    /// `w -= lr·(g + weight_decay·w)`
    Sgd { lr: f64, weight_decay: f64 },
}

impl<T: Scalar> ParamSet<T> {
    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, opt: Optimizer) {
        match opt {
            Optimizer::Adagrad { lr } => {
                let (lr, eps) = (T::lit(lr), T::lit(ADAGRAD_EPS));
                for p in self.iter_mut() {
                    let it = p.value.data_mut().iter_mut().zip(p.grad.data()).zip(p.state.data_mut());
                    for ((w, &g), s) in it {
                        *s += g * g;
                        *w -= lr * g / (s.sqrt() + eps);
                    }
                }
            }
            Optimizer::Sgd { lr, weight_decay } => {
                let (lr, wd) = (T::lit(lr), T::lit(weight_decay));
                for p in self.iter_mut() {
                    for (w, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *w -= lr * (g + wd * *w);
                    }
                }
            }
        }
        self.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn single(w: f64, g: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::full(&[1], w)).unwrap();
        ps.accumulate(id, &Tensor::full(&[1], g));
        ps
    }

    #[test]
    fn adagrad_first_step() {
        let mut ps = single(0.0, 1.0);
        ps.step(Optimizer::Adagrad { lr: 0.01 });
        let w = ps.iter().next().unwrap().value.data()[0];
        assert!((w - (-0.01 / (1.0 + 1e-8))).abs() < 1e-18);
        assert!((w + 0.01).abs() < 1e-9);
        assert_eq!(ps.iter().next().unwrap().state.data()[0], 1.0);
        assert_eq!(ps.iter().next().unwrap().grad.data()[0], 0.0);
    }

    #[test]
    fn adagrad_accumulates_state() {
        let mut ps = single(0.0, 2.0);
        ps.step(Optimizer::Adagrad { lr: 0.1 });
        let id = ps.find("w").unwrap();
        ps.accumulate(id, &Tensor::full(&[1], 2.0));
        ps.step(Optimizer::Adagrad { lr: 0.1 });
        assert_eq!(ps.get(id).state.data()[0], 8.0);
    }

    #[test]
    fn sgd_zero_gradient_no_decay_is_noop() {
        let mut ps = single(0.7, 0.0);
        ps.step(Optimizer::Sgd {
            lr: 0.1,
            weight_decay: 0.0,
        });
        assert_eq!(ps.iter().next().unwrap().value.data()[0], 0.7);
    }

    #[test]
    fn sgd_weight_decay_contracts() {
        let mut ps = single(1.0, 0.0);
        ps.step(Optimizer::Sgd {
            lr: 0.0001,
            weight_decay: 0.0005,
        });
        let w = ps.iter().next().unwrap().value.data()[0];
        assert!((w - (1.0 - 5e-8)).abs() < 1e-15);
        assert_eq!(w, 1.0 * (1.0 - 0.0001 * 0.0005));
    }
}
