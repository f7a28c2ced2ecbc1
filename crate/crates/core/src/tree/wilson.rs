//! Wilson score bounds on proportions and their closed-form inverse.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::BoundError;

/// Upper-tail standard-normal quantile: the `z` with `Q(z) = delta`.
pub fn q_inverse(delta: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - delta)
}

fn check_delta(delta: f64) -> Result<(), BoundError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(BoundError::Domain {
            name: "delta",
            value: delta,
            range: "(0, 1)",
        })
    }
}

fn check_proportion(p: f64) -> Result<(), BoundError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(BoundError::InvalidProportion(p))
    }
}

fn wilson_with_z(p: f64, n: f64, z: f64, sign: f64) -> f64 {
    let z2 = z * z;
    let radicand = (p / n - p * p / n + z2 / (4.0 * n * n)).max(0.0);
    let bound = (p + z2 / (2.0 * n) + sign * z * radicand.sqrt()) / (1.0 + z2 / n);
    bound.clamp(0.0, 1.0)
}

/// One-sided Wilson upper confidence limit at level `1 - delta` for an
/// empirical proportion `p` over `n` trials.
pub fn wilson_upper(p: f64, n: u64, delta: f64) -> Result<f64, BoundError> {
    check_proportion(p)?;
    if n == 0 {
        return Err(BoundError::NonPositiveN);
    }
    check_delta(delta)?;
    Ok(wilson_with_z(p, n as f64, q_inverse(delta), 1.0).max(p))
}

/// Two-sided Wilson interval at level `1 - delta`.
pub fn wilson_interval(p: f64, n: u64, delta: f64) -> Result<(f64, f64), BoundError> {
    check_proportion(p)?;
    if n == 0 {
        return Err(BoundError::NonPositiveN);
    }
    check_delta(delta)?;
    let z = q_inverse(delta / 2.0);
    let n = n as f64;
    Ok((wilson_with_z(p, n, z, -1.0).min(p), wilson_with_z(p, n, z, 1.0).max(p)))
}

/// Largest training FNR whose Wilson upper limit stays at or below the cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FnrCap {
    Feasible { max_fnr: f64 },
    /// Even a zero training FNR cannot certify the cap with this many
    /// positives; `required` is the smallest positive count that can.
    InfeasibleAtZero { required: u64 },
}

impl FnrCap {
    pub fn max_fnr(&self) -> Option<f64> {
        match self {
            FnrCap::Feasible { max_fnr } => Some(*max_fnr),
            FnrCap::InfeasibleAtZero { .. } => None,
        }
    }
}

/// Smallest positive count for which a zero empirical FNR certifies `eta`.
pub fn min_positives(eta: f64, delta: f64) -> u64 {
    let z = q_inverse(delta);
    (z * z * (1.0 - eta) / eta).ceil().max(1.0) as u64
}

/// Inverts the Wilson upper limit: returns `eta - z * sqrt(eta (1 - eta) / n)`,
/// the root of `(F - eta)^2 = z^2 eta (1 - eta) / n` lying below `eta`.
pub fn max_empirical_fnr(eta: f64, delta: f64, n: u64) -> Result<FnrCap, BoundError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(BoundError::Domain {
            name: "eta",
            value: eta,
            range: "(0, 1]",
        });
    }
    check_delta(delta)?;
    if n == 0 {
        return Err(BoundError::NonPositiveN);
    }
    let z = q_inverse(delta);
    let threshold = z * z * (1.0 - eta) / eta;
    if (n as f64) < threshold {
        return Ok(FnrCap::InfeasibleAtZero {
            required: min_positives(eta, delta),
        });
    }
    let max_fnr = (eta - z * (eta * (1.0 - eta) / n as f64).sqrt()).max(0.0);
    Ok(FnrCap::Feasible { max_fnr })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection on the printed upper-limit equation; independent of the
    /// closed form.
    fn root_find_inverse(eta: f64, delta: f64, n: u64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, eta);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if wilson_upper(mid, n, delta).unwrap() > eta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    #[test]
    fn z_for_five_percent() {
        assert!((q_inverse(0.05) - 1.644_853_626_951_472_2).abs() < 1e-9);
    }

    #[test]
    fn upper_at_zero_simplifies() {
        let z = q_inverse(0.05);
        let got = wilson_upper(0.0, 10, 0.05).unwrap();
        assert!((got - z * z / (10.0 + z * z)).abs() < 1e-12);
        assert!((got - 0.2130).abs() < 1e-4);
    }

    #[test]
    fn upper_round_trip_example() {
        let got = wilson_upper(0.0507, 100, 0.05).unwrap();
        assert!((got - 0.1).abs() < 1e-4, "{got}");
    }

    #[test]
    fn upper_tends_to_empirical() {
        let got = wilson_upper(0.3, 100_000_000, 0.05).unwrap();
        assert!((got - 0.3).abs() < 1e-4);
    }

    #[test]
    fn max_fnr_examples() {
        let cap = max_empirical_fnr(0.1, 0.05, 100).unwrap().max_fnr().unwrap();
        assert!((cap - 0.0507).abs() < 1e-4, "{cap}");
        assert!((cap - root_find_inverse(0.1, 0.05, 100)).abs() < 1e-9);
        assert_eq!(
            max_empirical_fnr(0.1, 0.05, 10).unwrap(),
            FnrCap::InfeasibleAtZero { required: 25 }
        );
        assert!(matches!(max_empirical_fnr(0.1, 0.05, 25).unwrap(), FnrCap::Feasible { .. }));
        let far = max_empirical_fnr(0.1, 0.05, 1_000_000_000).unwrap().max_fnr().unwrap();
        assert!((far - 0.1).abs() < 1e-4);
    }

    #[test]
    fn domain_errors() {
        assert_eq!(wilson_upper(1.5, 10, 0.05), Err(BoundError::InvalidProportion(1.5)));
        assert_eq!(wilson_upper(0.5, 0, 0.05), Err(BoundError::NonPositiveN));
        assert!(max_empirical_fnr(0.0, 0.05, 10).is_err());
        assert!(max_empirical_fnr(0.1, 1.0, 10).is_err());
    }

    #[test]
    fn interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(0.2, 50, 0.05).unwrap();
        assert!(lo < 0.2 && 0.2 < hi);
        let (lo0, _) = wilson_interval(0.0, 50, 0.05).unwrap();
        assert!(lo0.abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn interval_always_contains_estimate(k in 0u64..2000, extra in 0u64..2000, delta in 0.001f64..0.5) {
            let n = k + extra + 1;
            let p = k.min(n) as f64 / n as f64;
            let (lo, hi) = wilson_interval(p, n, delta).unwrap();
            proptest::prop_assert!(lo <= p && p <= hi);
            proptest::prop_assert!(wilson_upper(p, n, delta).unwrap() >= p);
        }
    }
}
