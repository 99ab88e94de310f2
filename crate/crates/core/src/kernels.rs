//! Scalar kernels: the Bernoulli function `B(x) = x / (e^x - 1)`, the
//! entropy density `H(x) = x ln x - x + 1`, and a floored logarithm.
//!
//! The `*_unchecked` variants skip argument validation and are what the
//! assembly loops call.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default crossover between the Taylor expansion of `B` and the direct formula.
pub const BERNOULLI_SWITCH_RADIUS: f64 = 1e-2;
/// Default density floor used before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// Beyond this magnitude `e^x` is close to overflow and `B` is evaluated
/// through its asymptotic forms.
const ASYMPTOTIC_THRESHOLD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bernoulli_switch_radius: f64,
    pub log_floor: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bernoulli_switch_radius: BERNOULLI_SWITCH_RADIUS,
            log_floor: LOG_FLOOR,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        let r = self.bernoulli_switch_radius;
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::invalid(format!("bernoulli switch radius {r} not in (0, 1)")));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::invalid(format!("log floor {} must be positive", self.log_floor)));
        }
        Ok(())
    }
}

/// Truncated expansion `1 - x/2 + x^2/12 - x^4/720`, accurate near zero.
#[inline]
pub fn bernoulli_series(x: f64) -> f64 {
    let x2 = x * x;
    1.0 - 0.5 * x + x2 * (1.0 / 12.0 - x2 * (1.0 / 720.0))
}

/// `x / (e^x - 1)` through `expm1`, with asymptotic tails for `|x| > 700`.
#[inline]
pub fn bernoulli_direct(x: f64) -> f64 {
    if x > ASYMPTOTIC_THRESHOLD {
        // e^-x < 1e-304, so 1 - e^-x rounds to 1.
        x * (-x).exp()
    } else if x < -ASYMPTOTIC_THRESHOLD {
        // B(x) = -x + B(-x) and B(-x) underflows.
        -x
    } else {
        x / x.exp_m1()
    }
}

/// Bernoulli function with the default switch radius and no input check.
#[inline]
pub fn bernoulli_unchecked(x: f64) -> f64 {
    bernoulli_with_radius(x, BERNOULLI_SWITCH_RADIUS)
}

#[inline]
pub fn bernoulli_with_radius(x: f64, radius: f64) -> f64 {
    if x.abs() < radius {
        bernoulli_series(x)
    } else {
        bernoulli_direct(x)
    }
}

/// `B(x) = x / (e^x - 1)`, `B(0) = 1`.
///
/// Positive, decreasing, and `B(-x) = B(x) + x`. For `x` above roughly 745
/// the correctly rounded value is zero.
pub fn bernoulli(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("bernoulli of non-finite value {x}")));
    }
    Ok(bernoulli_unchecked(x))
}

#[inline]
pub fn entropy_h_unchecked(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x * x.ln() - x + 1.0
    }
}

/// Entropy density `H(x) = x ln x - x + 1` with `H(0) = 1`.
pub fn entropy_h(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::invalid(format!("entropy density of negative value {x}")));
    }
    Ok(entropy_h_unchecked(x))
}

/// `r ln r - r + 1` evaluated without cancellation near `r = 1`.
fn h_near_one(r: f64) -> f64 {
    let e = r - 1.0;
    if e.abs() < 1e-2 {
        // sum_{k>=2} (-1)^k e^k / (k (k - 1))
        let mut term = e * e;
        let mut sum = 0.0;
        for k in 2..14u32 {
            let kf = f64::from(k);
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += s * term / (kf * (kf - 1.0));
            term *= e;
        }
        sum
    } else if r == 0.0 {
        1.0
    } else {
        r * e.ln_1p() - e
    }
}

/// Bregman divergence of `H`: `H(x) - H(y) - ln(y) (x - y) = y H(x / y)`.
///
/// Requires `x >= 0`, `y > 0`. Nonnegative, zero iff `x = y`.
pub fn entropy_bregman(x: f64, y: f64) -> f64 {
    debug_assert!(x >= 0.0 && y > 0.0);
    (y * h_near_one(x / y)).max(0.0)
}

/// `ln(max(x, floor))`.
#[inline]
pub fn guarded_log(x: f64, floor: f64) -> f64 {
    x.max(floor).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bernoulli_values() {
        assert_eq!(bernoulli(0.0).unwrap(), 1.0);
        let b1 = bernoulli(1.0).unwrap();
        assert!((b1 - 0.581_976_706_869_326_4).abs() <= 1e-15);
        assert!((b1 - 1.0 / (std::f64::consts::E - 1.0)).abs() < 1e-15);
        for x in [1e-8, 0.5, 10.0, 40.0] {
            let d = bernoulli(-x).unwrap() - bernoulli(x).unwrap();
            assert!((d - x).abs() <= 1e-13 * x.max(1.0), "x = {x}");
        }
        assert!(bernoulli(f64::NAN).is_err());
        assert!(bernoulli(f64::INFINITY).is_err());
    }

    #[test]
    fn bernoulli_tails() {
        assert_eq!(bernoulli(-800.0).unwrap(), 800.0);
        let b = bernoulli(710.0).unwrap();
        assert!(b > 0.0 && b < 1e-300);
        assert!(bernoulli(1e4).unwrap() >= 0.0);
    }

    #[test]
    fn bernoulli_continuous_at_switch() {
        for r in [BERNOULLI_SWITCH_RADIUS, -BERNOULLI_SWITCH_RADIUS] {
            assert!((bernoulli_series(r) - bernoulli_direct(r)).abs() <= 1e-14);
        }
    }

    #[test]
    fn bernoulli_reflection_on_log_grid() {
        let n = 400;
        for i in 0..=n {
            let ax = 10f64.powf(-12.0 + (12.0 + 50f64.log10()) * i as f64 / n as f64);
            for x in [ax, -ax] {
                let lhs = bernoulli_unchecked(x) * x.exp();
                let rhs = bernoulli_unchecked(-x);
                assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs(), "x = {x}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_h(1.0).unwrap(), 0.0);
        assert_eq!(entropy_h(0.0).unwrap(), 1.0);
        assert!((entropy_h(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert!(entropy_h(-1e-3).is_err());
    }

    #[test]
    fn guarded_log_values() {
        assert_eq!(guarded_log(1.0, LOG_FLOOR), 0.0);
        assert!((guarded_log(0.0, LOG_FLOOR) + 690.775_527_898_213_7).abs() < 1e-10);
        let e2 = std::f64::consts::E.powi(2);
        assert!((guarded_log(e2, LOG_FLOOR) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn bregman_matches_definition() {
        for &(x, y) in &[(0.0, 1.0), (2.0, 1.0), (0.3, 1.7), (1.0 + 1e-5, 1.0), (5.0, 0.2)] {
            let direct = entropy_h_unchecked(x) - entropy_h_unchecked(y) - y.ln() * (x - y);
            let b = entropy_bregman(x, y);
            assert!(
                (b - direct).abs() <= 1e-12 * (1.0 + direct.abs()),
                "{x} {y}: {b} {direct}"
            );
        }
        assert_eq!(entropy_bregman(1.7, 1.7), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(KernelConfig::default().validate().is_ok());
        let bad = KernelConfig {
            bernoulli_switch_radius: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn bernoulli_in_unit_interval_for_nonnegative(x in 0.0f64..800.0) {
            let b = bernoulli_unchecked(x);
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!(bernoulli_unchecked(-x) > 0.0);
        }

        #[test]
        fn bernoulli_decreasing(x in -600.0f64..600.0, dx in 1e-3f64..5.0) {
            prop_assert!(bernoulli_unchecked(x + dx) < bernoulli_unchecked(x));
        }

        #[test]
        fn bregman_dominates_sqrt_gap(x in 1e-6f64..50.0, y in 1e-6f64..50.0) {
            let lhs = entropy_h_unchecked(x) - entropy_h_unchecked(y) - y.ln() * (x - y);
            let mid = (x.sqrt() - y.sqrt()).powi(2);
            prop_assert!(lhs >= mid - 1e-12 * (1.0 + lhs.abs()));
            prop_assert!(mid >= x / 2.0 - y - 1e-12 * (1.0 + x + y));
            prop_assert!(entropy_bregman(x, y) >= mid - 1e-12 * (1.0 + mid));
        }
    }
}
