use crate::tensor::Tensor;

/// Central-difference gradient of a scalar function.
///
/// Panics unless `eps > 0`. Intended as an independent oracle for
/// [`Graph::backward`](crate::Graph::backward) in tests.
pub fn finite_diff_gradient<F>(mut f: F, x: &Tensor<f64>, eps: f64) -> Tensor<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    assert!(eps > 0.0 && eps.is_finite(), "finite-difference step must be positive");
    let base = x.to_vec();
    let mut grad = vec![0.0; base.len()];
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + eps;
        let up = f(&Tensor::new(x.shape().to_vec(), probe.clone()).expect("same shape"));
        probe[i] = base[i] - eps;
        let down = f(&Tensor::new(x.shape().to_vec(), probe.clone()).expect("same shape"));
        probe[i] = base[i];
        grad[i] = (up - down) / (2.0 * eps);
    }
    Tensor::new(x.shape().to_vec(), grad).expect("same shape")
}

/// `max|a − b| / max(max|a|, max|b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = a
        .iter()
        .chain(b)
        .map(|v| v.abs())
        .fold(floor, f64::max);
    diff / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let g = finite_diff_gradient(|t| t.item() * t.item(), &Tensor::scalar(3.0), 1e-4);
        assert!((g.item() - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = finite_diff_gradient(|_| 4.2, &x, 1e-3);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    #[should_panic]
    fn rejects_non_positive_step() {
        finite_diff_gradient(|t| t.item(), &Tensor::scalar(1.0), 0.0);
    }
}
