//! Poisson statistics primitives shared by the fitting, scoring, and
//! anomaly modules.

use crate::error::{Error, Result};
use statrs::function::gamma::{gamma_ur, ln_gamma};

/// Poisson deviance `2 sum[lambda - x + x ln(x/lambda)]` with the
/// convention `x ln(x/lambda) = 0` at `x = 0`. A bin with
/// `lambda = 0, x > 0` makes the deviance infinite.
pub fn poisson_deviance(observed: &[f64], model: &[f64]) -> f64 {
    debug_assert_eq!(observed.len(), model.len());
    let mut d = 0.0;
    for (&x, &lam) in observed.iter().zip(model) {
        if x > 0.0 {
            if lam <= 0.0 {
                return f64::INFINITY;
            }
            d += lam - x + x * (x / lam).ln();
        } else {
            d += lam;
        }
    }
    2.0 * d
}

/// Negative Poisson log-likelihood `sum[lambda - x ln lambda + ln x!]`.
/// Works for non-integer `x` via the gamma function.
pub fn poisson_neg_log_like(observed: &[f64], model: &[f64]) -> f64 {
    debug_assert_eq!(observed.len(), model.len());
    let mut nll = 0.0;
    for (&x, &lam) in observed.iter().zip(model) {
        if x > 0.0 {
            if lam <= 0.0 {
                return f64::INFINITY;
            }
            nll += lam - x * lam.ln() + ln_gamma(x + 1.0);
        } else {
            nll += lam;
        }
    }
    nll
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom, evaluated at `x`.
pub fn chi2_sf(x: f64, dof: f64) -> Result<f64> {
    if dof <= 0.0 {
        return Err(Error::numerical(format!(
            "chi-square survival needs dof > 0 (got {dof})"
        )));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_ur(dof / 2.0, x / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviance_zero_at_exact_model() {
        let x = [3.0, 0.0, 7.5];
        assert_eq!(poisson_deviance(&x, &x), 0.0);
    }

    #[test]
    fn deviance_direct_value() {
        let d = poisson_deviance(&[4.0], &[2.0]);
        let expected = 2.0 * (2.0 - 4.0 + 4.0 * 2.0_f64.ln());
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 1.545).abs() < 1e-3);
    }

    #[test]
    fn deviance_infinite_when_model_zero_with_counts() {
        assert!(poisson_deviance(&[1.0], &[0.0]).is_infinite());
        assert_eq!(poisson_deviance(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn deviance_nonnegative() {
        let xs = [0.0, 1.0, 2.0, 5.0, 11.0];
        let lams = [0.3, 0.9, 2.2, 4.9, 13.0];
        for &x in &xs {
            for &lam in &lams {
                assert!(poisson_deviance(&[x], &[lam]) >= 0.0);
            }
        }
    }

    #[test]
    fn neg_log_like_values() {
        assert!((poisson_neg_log_like(&[1.0], &[1.0]) - 1.0).abs() < 1e-12);
        let v = poisson_neg_log_like(&[2.0], &[1.0]);
        assert!((v - (1.0 + 2.0_f64.ln())).abs() < 1e-12);
        assert!((v - 1.693).abs() < 1e-3);
    }

    #[test]
    fn neg_log_like_minimized_at_lambda_equals_x() {
        let x = [3.0, 8.0, 1.0];
        let at_x = poisson_neg_log_like(&x, &x);
        for scale in [0.5, 0.8, 1.2, 2.0] {
            let lam: Vec<f64> = x.iter().map(|v| v * scale).collect();
            assert!(poisson_neg_log_like(&x, &lam) > at_x);
        }
    }

    #[test]
    fn chi2_sf_basics() {
        assert_eq!(chi2_sf(0.0, 10.0).unwrap(), 1.0);
        assert!(chi2_sf(1.0, 0.0).is_err());
        // Median of chi-square 2 is 2 ln 2.
        let p = chi2_sf(2.0 * 2.0_f64.ln(), 2.0).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }
}
