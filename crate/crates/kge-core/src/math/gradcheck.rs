//! Finite-difference gradient oracle.
//!
//! Every hand-derived gradient in this crate is validated against central
//! differences through [`check_gradient`]. The oracle is deliberately
//! independent of the analytic code paths it checks.

/// Central-difference gradient of `f` at `params` with step `eps`.
pub fn numerical_gradient<F>(f: F, params: &[f64], eps: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(eps > 0.0, "eps must be positive");
    let mut grad = vec![0.0; params.len()];
    let mut work = params.to_vec();
    for i in 0..params.len() {
        work[i] = params[i] + eps;
        let f_plus = f(&work);
        work[i] = params[i] - eps;
        let f_minus = f(&work);
        work[i] = params[i];
        assert!(
            f_plus.is_finite() && f_minus.is_finite(),
            "oracle error: non-finite f at coordinate {i}"
        );
        grad[i] = (f_plus - f_minus) / (2.0 * eps);
    }
    grad
}

/// Compare `analytic` against central differences of `f` and return the
/// worst relative error across coordinates:
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn check_gradient<F>(f: F, params: &[f64], analytic: &[f64], eps: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(
        analytic.len(),
        params.len(),
        "analytic gradient length mismatch"
    );
    let numeric = numerical_gradient(f, params, eps);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}
