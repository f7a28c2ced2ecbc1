//! Hypothesis counting and the sample-size quantities derived from it.

use crate::error::BoundError;

/// Number of distinct screening trees over `tests` test kinds: binary
/// leaves, three-way branching, no test repeated on a path.
///
/// `T(0) = 2`, `T(k) = 2 + k * T(k-1)^3`.
pub fn count_hypotheses(tests: u32) -> Result<u128, BoundError> {
    let mut count: u128 = 2;
    for k in 1..=tests {
        count = count
            .checked_pow(3)
            .and_then(|c| c.checked_mul(k as u128))
            .and_then(|c| c.checked_add(2))
            .ok_or(BoundError::Overflow)?;
    }
    Ok(count)
}

fn check_open_unit(name: &'static str, value: f64) -> Result<(), BoundError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(BoundError::Domain {
            name,
            value,
            range: "(0, 1)",
        })
    }
}

/// `ceil(ln(4|H| / delta) / (2 min(eps^2, eps_c^2)))`.
pub fn sample_complexity(eps: f64, eps_cost: f64, delta: f64, hypotheses: u128) -> Result<u64, BoundError> {
    check_open_unit("epsilon", eps)?;
    check_open_unit("epsilon_c", eps_cost)?;
    check_open_unit("delta", delta)?;
    if hypotheses == 0 {
        return Err(BoundError::Domain {
            name: "hypotheses",
            value: 0.0,
            range: ">= 1",
        });
    }
    let m = eps.min(eps_cost);
    let raw = ((4.0_f64).ln() + (hypotheses as f64).ln() - delta.ln()) / (2.0 * m * m);
    Ok(raw.ceil() as u64)
}

/// Uniform-convergence slack `sqrt((ln|H| + ln(4/delta)) / (2 m))` that
/// tightens the training FNR target in strict mode.
pub fn eq7_slack(hypotheses: u128, delta: f64, samples: u64) -> f64 {
    if samples == 0 {
        return f64::INFINITY;
    }
    (((hypotheses as f64).ln() + (4.0 / delta).ln()) / (2.0 * samples as f64)).sqrt()
}

/// Smallest sample count whose slack drops strictly below `eta`.
pub fn min_samples_for_slack(hypotheses: u128, delta: f64, eta: f64) -> u64 {
    let numer = (hypotheses as f64).ln() + (4.0 / delta).ln();
    let mut m = (numer / (2.0 * eta * eta)).floor() as u64;
    while eq7_slack(hypotheses, delta, m) >= eta {
        m += 1;
    }
    m
}

/// Upper bound on the number of partitions: `floor(m / N*)`.
pub fn personalization_bound(samples: u64, sample_complexity: u64) -> u64 {
    if sample_complexity == 0 {
        return samples;
    }
    samples / sample_complexity
}
