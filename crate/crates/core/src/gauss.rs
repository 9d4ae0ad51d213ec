//! Gaussian density/CDF helpers shared by every procedure.
//!
//! CDF and survival values are routed through `erfc`, which keeps relative
//! accuracy in the far tails; p-values near `alpha / m` must be exact for
//! step-up thresholds to be meaningful.

use statrs::function::erf::{erfc, erfc_inv};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;
pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal density.
#[inline]
pub fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Log density of N(0, var) at x.
#[inline]
pub fn log_norm_pdf(x: f64, var: f64) -> f64 {
    -0.5 * x * x / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Density of N(mean, var) at x.
#[inline]
pub fn norm_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal survival function 1 - Phi(z), tail-accurate.
#[inline]
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Standard normal quantile.
#[inline]
pub fn norm_quantile(q: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * q)
}

/// log(e^a + e^b) without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let d = lo - hi;
    if d < -745.0 {
        hi
    } else {
        hi + d.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cdf_reference_points() {
        assert_abs_diff_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-12);
        assert_abs_diff_eq!(norm_sf(3.0), 1.349_898_031_630_095e-3, epsilon = 1e-15);
        // deep tail stays accurate in relative terms
        let sf8 = norm_sf(8.0);
        assert!((sf8 / 6.220_960_574_271_786e-16 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &q in &[1e-8, 1e-4, 0.025, 0.3, 0.5, 0.7, 0.975, 1.0 - 1e-6] {
            assert_abs_diff_eq!(norm_cdf(norm_quantile(q)), q, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_add_exp_matches_naive() {
        for &(a, b) in &[(0.0f64, 0.0f64), (-1.0, -3.0), (5.0, -700.0), (-900.0, -901.0)] {
            let naive = (a.exp() + b.exp()).ln();
            let got = log_add_exp(a, b);
            if naive.is_finite() {
                assert_abs_diff_eq!(got, naive, epsilon = 1e-12);
            }
            assert!(got >= a.max(b));
        }
    }
}
