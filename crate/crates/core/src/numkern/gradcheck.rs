//! Central finite differences for verifying hand-written gradients.

use super::{DenseNet, Matrix};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for [`relative_error`]; below it the comparison is
/// effectively absolute.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `(f(x + h e_k) - f(x - h e_k)) / 2h` for every coordinate `k`.
pub fn central_difference(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + step;
            let plus = f(&probe);
            probe[k] = orig - step;
            let minus = f(&probe);
            probe[k] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Numerical gradient of `loss` with respect to a matrix argument.
pub fn matrix_gradient(x: &Matrix, step: f64, mut loss: impl FnMut(&Matrix) -> f64) -> Matrix {
    let g = central_difference(x.as_slice(), step, |v| {
        let probe = Matrix::from_vec(x.rows(), x.cols(), v.to_vec()).expect("same shape");
        loss(&probe)
    });
    Matrix::from_vec(x.rows(), x.cols(), g).expect("same shape")
}

/// Numerical gradient of `loss` with respect to every parameter of `net`,
/// flattened in [`DenseNet::param_blocks`] order.
pub fn net_parameter_gradient(net: &DenseNet, step: f64, mut loss: impl FnMut(&DenseNet) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    let sizes: Vec<usize> = net.param_blocks().iter().map(|b| b.len()).collect();
    let mut out = Vec::with_capacity(sizes.iter().sum());
    for (b, &len) in sizes.iter().enumerate() {
        for k in 0..len {
            let orig = probe.param_blocks()[b].as_slice()[k];
            probe.param_blocks_mut()[b].as_mut_slice()[k] = orig + step;
            let plus = loss(&probe);
            probe.param_blocks_mut()[b].as_mut_slice()[k] = orig - step;
            let minus = loss(&probe);
            probe.param_blocks_mut()[b].as_mut_slice()[k] = orig;
            out.push((plus - minus) / (2.0 * step));
        }
    }
    out
}
