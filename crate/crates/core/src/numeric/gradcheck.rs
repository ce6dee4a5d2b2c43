//! Central finite-difference verification of analytic gradients.
//!
//! The checker re-evaluates the loss with each parameter element nudged by
//! ±h and compares `(f(x+h) - f(x-h)) / 2h` against the analytic gradient.
//! It is double precision only; at f32 the difference quotient itself
//! drowns in rounding error.

use thiserror::Error;

use super::tensor::Tensor;
use super::NumericError;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Per-parameter summary from a finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    /// `(parameter name, max relative error over its elements)`.
    pub per_param: Vec<(String, f64)>,
}

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error(
        "gradient check failed: parameter '{param}' element {index} has relative error {rel_error:.3e} > {tolerance:.1e}"
    )]
    Exceeded {
        param: String,
        index: usize,
        rel_error: f64,
        tolerance: f64,
        report: GradCheckReport,
    },
    #[error("loss evaluation failed during gradient check: {0}")]
    Eval(#[from] NumericError),
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale <= 1e-10 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compares analytic gradients against central finite differences of
/// `eval`. `params` and `analytic` are parallel slices; `eval` must be a
/// pure function of the parameter values.
pub fn grad_check(
    params: &[(String, Tensor<f64>)],
    analytic: &[Tensor<f64>],
    eval: impl Fn(&[(String, Tensor<f64>)]) -> Result<f64, NumericError>,
    tolerance: f64,
) -> Result<GradCheckReport, GradCheckError> {
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    let mut work: Vec<(String, Tensor<f64>)> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        per_param: Vec::with_capacity(params.len()),
    };

    for (p_idx, (name, tensor)) in params.iter().enumerate() {
        assert_eq!(
            tensor.shape(),
            analytic[p_idx].shape(),
            "gradient shape must match parameter '{name}'"
        );
        let mut param_worst = 0.0f64;
        for i in 0..tensor.len() {
            let original = tensor.data()[i];
            work[p_idx].1.data_mut()[i] = original + FD_STEP;
            let plus = eval(&work)?;
            work[p_idx].1.data_mut()[i] = original - FD_STEP;
            let minus = eval(&work)?;
            work[p_idx].1.data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let rel = relative_error(analytic[p_idx].data()[i], numeric);
            if rel > param_worst {
                param_worst = rel;
            }
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
        report.per_param.push((name.clone(), param_worst));
    }

    if report.max_rel_error > tolerance {
        return Err(GradCheckError::Exceeded {
            param: report.worst_param.clone(),
            index: report.worst_index,
            rel_error: report.max_rel_error,
            tolerance,
            report,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_matches_exactly() {
        // f(w) = sum(w * c) has gradient c
        let coeffs = [2.0, -3.0, 0.5];
        let params = vec![(
            "w".to_string(),
            Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0]),
        )];
        let analytic = vec![Tensor::from_vec(1, 3, coeffs.to_vec())];
        let report = grad_check(
            &params,
            &analytic,
            |ps| {
                Ok(ps[0]
                    .1
                    .data()
                    .iter()
                    .zip(coeffs)
                    .map(|(&w, c)| w * c)
                    .sum())
            },
            1e-9,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let params = vec![("w".to_string(), Tensor::from_vec(1, 1, vec![2.0]))];
        // true gradient of w^2 at 2 is 4; claim 4.5
        let analytic = vec![Tensor::from_vec(1, 1, vec![4.5])];
        let err = grad_check(
            &params,
            &analytic,
            |ps| Ok(ps[0].1.item() * ps[0].1.item()),
            1e-4,
        )
        .unwrap_err();
        match err {
            GradCheckError::Exceeded { param, rel_error, .. } => {
                assert_eq!(param, "w");
                assert!(rel_error > 0.1);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn nonlinear_function_within_tolerance() {
        let params = vec![("x".to_string(), Tensor::from_vec(1, 2, vec![0.3, -0.7]))];
        // f = sin(x0) * exp(x1)
        let (x0, x1) = (0.3f64, -0.7f64);
        let analytic = vec![Tensor::from_vec(
            1,
            2,
            vec![x0.cos() * x1.exp(), x0.sin() * x1.exp()],
        )];
        grad_check(
            &params,
            &analytic,
            |ps| {
                let d = ps[0].1.data();
                Ok(d[0].sin() * d[1].exp())
            },
            1e-9,
        )
        .unwrap();
    }
}
