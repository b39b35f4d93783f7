//! Central finite-difference gradient checking.

/// Central-difference gradient of `f` at `at`, one probe pair per entry.
/// `f` must be deterministic; stochastic losses are checked by fixing the
/// noise (clone the RNG per evaluation).
pub fn central_diff_grad(f: &mut impl FnMut(&[f64]) -> f64, at: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = at.to_vec();
    let mut grad = vec![0.0; at.len()];
    for i in 0..at.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let hi = f(&probe);
        probe[i] = orig - eps;
        let lo = f(&probe);
        probe[i] = orig;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    grad
}

/// Worst-case relative error between two gradient vectors:
/// max_i |a_i - b_i| / max(1e-6, |a_i|, |b_i|). The floor keeps
/// finite-difference noise on true-zero entries from dominating while still
/// flagging spurious non-zero analytic gradients.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut f = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>();
        let at = [1.0, -2.0, 0.0, 3.5];
        let g = central_diff_grad(&mut f, &at, 1e-5);
        let want = [2.0, -4.0, 0.0, 7.0];
        assert!(max_rel_error(&g, &want) < 1e-9);
    }

    #[test]
    fn rel_error_flags_disagreement() {
        assert!(max_rel_error(&[1.0], &[1.0001]) > 1e-5);
        assert!(max_rel_error(&[0.0], &[0.0]) == 0.0);
        // Tiny noise against exact zero stays under threshold.
        assert!(max_rel_error(&[1e-11], &[0.0]) < 1e-4);
        // A genuinely wrong "zero" is caught.
        assert!(max_rel_error(&[1e-3], &[0.0]) > 1e-4);
    }
}
