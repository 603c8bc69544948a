//! Central-difference gradient checking.
//!
//! Relative error per coordinate is `|a − n| / max(|a|, |n|, floor)` where `a`
//! is the analytic and `n` the numeric derivative. The floor keeps
//! coordinates whose true derivative is (near) zero from dividing round-off
//! noise by nothing.
//!
//! Piecewise-linear activations make the loss non-differentiable on a set of
//! measure zero, but a `±h` stencil can still straddle a kink. With the kink
//! guard on, each coordinate is also differenced at `h/2`; when the two
//! estimates disagree beyond the tolerance the stencil crossed a kink and the
//! coordinate is counted in `skipped` instead of being compared.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub h: f64,
    pub tol: f64,
    pub floor: f64,
    /// Coordinates sampled per tensor; `None` checks every coordinate.
    pub max_coords: Option<usize>,
    pub seed: u64,
    pub kink_guard: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            tol: 1e-4,
            floor: 1e-6,
            max_coords: None,
            seed: 0,
            kink_guard: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor name, flat index)` of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates excluded because the stencil straddled a kink.
    pub skipped: usize,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    fn new(tol: f64) -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            checked: 0,
            skipped: 0,
            tol,
            passed: true,
        }
    }

    fn record(&mut self, name: &str, idx: usize, analytic: f64, numeric: f64, floor: f64) {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        self.checked += 1;
        if err > self.max_rel_error || !err.is_finite() {
            self.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
            self.worst = Some((name.to_string(), idx));
        }
        self.passed = self.max_rel_error <= self.tol;
    }

    /// Folds another report into this one.
    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.tol = self.tol.min(other.tol);
        self.passed = self.passed && other.passed && self.max_rel_error <= self.tol;
    }
}

fn coords(len: usize, max: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match max {
        Some(m) if m < len => {
            let mut v = sample(rng, len, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Central difference of `eval` (which sets the coordinate to `orig + delta`
/// and returns the loss), or `None` when the guard detects a kink.
fn numeric<T: Scalar>(mut eval: impl FnMut(T) -> T, cfg: &GradCheckConfig) -> Option<f64> {
    let diff = |eval: &mut dyn FnMut(T) -> T, h: f64| {
        let plus = eval(T::lit(h));
        let minus = eval(T::lit(-h));
        (plus - minus).as_f64() / (2.0 * h)
    };
    let n = diff(&mut eval, cfg.h);
    if cfg.kink_guard {
        let half = diff(&mut eval, cfg.h / 2.0);
        if (n - half).abs() > cfg.tol * n.abs().max(half.abs()).max(cfg.floor) {
            return None;
        }
    }
    Some(n)
}

/// Checks `f(x) -> (loss, ∂loss/∂x)` at `input`.
pub fn grad_check<T, F>(mut f: F, input: &Tensor<T>, cfg: &GradCheckConfig) -> GradCheckReport
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> (T, Tensor<T>),
{
    let (_, analytic) = f(input);
    assert_eq!(analytic.shape(), input.shape(), "gradient shape");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::new(cfg.tol);
    for i in coords(input.len(), cfg.max_coords, &mut rng) {
        let mut x = input.clone();
        let n = numeric(
            |d| {
                x.data_mut()[i] = input.data()[i] + d;
                f(&x).0
            },
            cfg,
        );
        match n {
            Some(n) => report.record("input", i, analytic.data()[i].as_f64(), n, cfg.floor),
            None => report.skipped += 1,
        }
    }
    report
}

/// Checks every tensor of a [`ParamSet`]. `f` must evaluate the loss and
/// accumulate its gradient into the set; gradients are reset before each call.
pub fn grad_check_params<T, F>(ps: &mut ParamSet<T>, mut f: F, cfg: &GradCheckConfig) -> GradCheckReport
where
    T: Scalar,
    F: FnMut(&mut ParamSet<T>) -> T,
{
    ps.zero_grad();
    f(ps);
    let analytic: Vec<Tensor<T>> = ps.iter().map(|p| p.grad.clone()).collect();
    let names: Vec<String> = ps.iter().map(|p| p.name.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::new(cfg.tol);
    let ids: Vec<_> = (0..ps.len())
        .map(|i| ps.find(&names[i]).expect("name registered"))
        .collect();
    for (t, id) in ids.into_iter().enumerate() {
        let len = ps.value(id).len();
        for i in coords(len, cfg.max_coords, &mut rng) {
            let orig = ps.value(id).data()[i];
            let n = numeric(
                |d| {
                    ps.value_mut(id).data_mut()[i] = orig + d;
                    ps.zero_grad();
                    f(ps)
                },
                cfg,
            );
            ps.value_mut(id).data_mut()[i] = orig;
            match n {
                Some(n) => report.record(&names[t], i, analytic[t].data()[i].as_f64(), n, cfg.floor),
                None => report.skipped += 1,
            }
        }
    }
    ps.zero_grad();
    report
}
