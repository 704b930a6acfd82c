//! Central finite differences, used as an independent check on the tape.

use super::Tensor;

/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` for every coordinate `i`.
pub fn finite_diff_grad(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, eps: f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    grad
}

/// Below this magnitude both gradients are treated as zero and the error is
/// effectively absolute. Finite-difference noise at `eps = 1e-5` sits
/// around 1e-11 for O(1) losses.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_diff_grad(|_| 4.2, &Tensor::column(vec![1.0, -3.0]), 1e-5);
        assert_eq!(g.data(), &[0.0, 0.0]);
    }

    #[test]
    fn linear_function_gradient() {
        let a = [2.0, -1.0, 0.5];
        let g = finite_diff_grad(
            |x| x.data().iter().zip(&a).map(|(x, a)| x * a).sum(),
            &Tensor::column(vec![0.3, 0.1, -7.0]),
            1e-5,
        );
        for (gi, ai) in g.data().iter().zip(&a) {
            assert!((gi - ai).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_quadratic_form() {
        // f(x) = x^T A x with symmetric A has gradient 2Ax.
        let a = Tensor::new(2, 2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let x = Tensor::column(vec![1.0, -2.0]);
        let f = |x: &Tensor| {
            let ax = a.matmul(x).unwrap();
            x.data().iter().zip(ax.data()).map(|(p, q)| p * q).sum()
        };
        let g = finite_diff_grad(f, &x, 1e-5);
        let expect = a.matmul(&x).unwrap().map(|v| 2.0 * v);
        assert!(max_relative_error(&g, &expect) < 1e-8);
    }
}
