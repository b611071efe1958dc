//! Central finite-difference verification of analytic gradients.

use super::{Network, Tensor};
use crate::Result;

/// Default perturbation for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so parameters whose true
/// gradient is zero do not divide by zero.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter index where the maximum was reached.
    pub worst_index: usize,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic[i]` with `(L(θ + h e_i) - L(θ - h e_i)) / 2h` for each
/// `i` in `indices`. `loss_at(i, delta)` must return the loss with parameter
/// `i` shifted by `delta` and restore the parameter afterwards.
pub fn central_difference<I, F>(
    analytic: &[f64],
    indices: I,
    step: f64,
    tolerance: f64,
    mut loss_at: F,
) -> GradCheckReport
where
    I: IntoIterator<Item = usize>,
    F: FnMut(usize, f64) -> f64,
{
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        checked: 0,
        tolerance,
        passed: true,
    };
    for i in indices {
        let plus = loss_at(i, step);
        let minus = loss_at(i, -step);
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        let err = if err.is_nan() { f64::INFINITY } else { err };
        report.checked += 1;
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    report.passed = report.max_relative_error < tolerance;
    report
}

/// Checks every parameter of `net` under `loss_fn`, which maps the network
/// output to `(loss, dloss/doutput)`.
pub fn grad_check<F>(
    net: &mut Network,
    loss_fn: F,
    input: &Tensor,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    let n = net.param_count();
    grad_check_indices(net, loss_fn, input, tolerance, 0..n)
}

/// Same as [`grad_check`] restricted to a subset of parameter indices.
pub fn grad_check_indices<F, I>(
    net: &mut Network,
    loss_fn: F,
    input: &Tensor,
    tolerance: f64,
    indices: I,
) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> (f64, Tensor),
    I: IntoIterator<Item = usize>,
{
    let out = net.forward(input)?;
    let (_, dout) = loss_fn(&out);
    net.backward(&dout)?;
    let analytic = net.grads().to_vec();
    let mut failure = None;
    let report = central_difference(&analytic, indices, FD_STEP, tolerance, |i, delta| {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + delta;
        let loss = match net.infer(input) {
            Ok(y) => loss_fn(&y).0,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        net.params_mut()[i] = orig;
        loss
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// `0.5 * ||y||^2` and its gradient `y`.
pub fn half_squared_norm(y: &Tensor) -> (f64, Tensor) {
    let loss = 0.5 * y.data().iter().map(|v| v * v).sum::<f64>();
    (loss, y.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Activation, LayerSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(rng: &mut ChaCha8Rng, b: usize, w: usize) -> Tensor {
        Tensor::matrix(b, w, (0..b * w).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn quadratic_loss_on_linear_net_is_near_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let specs = [
            LayerSpec::new(4, 6, Activation::Linear),
            LayerSpec::new(6, 3, Activation::Linear),
        ];
        let mut net = Network::random(&specs, &mut rng).unwrap();
        let x = input(&mut rng, 3, 4);
        let r = grad_check(&mut net, half_squared_norm, &x, 1e-8).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checked, net.param_count());
    }

    #[test]
    fn leaky_net_away_from_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let specs = [
            LayerSpec::new(5, 8, Activation::LeakyRelu),
            LayerSpec::new(8, 4, Activation::LeakyRelu),
            LayerSpec::new(4, 2, Activation::Sigmoid),
        ];
        loop {
            let mut net = Network::random(&specs, &mut rng).unwrap();
            let x = input(&mut rng, 2, 5);
            net.forward(&x).unwrap();
            if net.min_kink_distance().unwrap() < 1e-4 {
                continue;
            }
            let r = grad_check(&mut net, half_squared_norm, &x, 1e-4).unwrap();
            assert!(r.passed, "{r:?}");
            break;
        }
    }

    #[test]
    fn corrupted_gradient_reports_error_near_two() {
        let analytic = [-3.0];
        // L(θ) = 3θ, so the true gradient is +3 and the analytic one is sign-flipped.
        let r = central_difference(&analytic, [0], FD_STEP, 1e-4, |_, d| 3.0 * (1.0 + d));
        assert!(!r.passed);
        assert!((r.max_relative_error - 2.0).abs() < 1e-6, "{r:?}");
    }
}
