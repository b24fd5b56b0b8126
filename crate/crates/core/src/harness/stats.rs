//! Binomial interval estimation for success rates.

use super::HarnessError;

/// Wilson score interval for `successes` out of `trials` at critical value
/// `z`. The endpoints are exact at the boundaries: zero successes pins the
/// lower end to 0 and a clean sweep pins the upper end to 1, which is what
/// the score quadratic gives analytically.
pub fn wilson_ci(successes: usize, trials: usize, z: f64) -> Result<(f64, f64), HarnessError> {
    if trials == 0 {
        return Err(HarnessError::NoTrials);
    }
    if successes > trials {
        return Err(HarnessError::BadCounts { successes, trials });
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: the interval endpoints are the roots of
    /// (1 + z²/n)p² − (2p̂ + z²/n)p + p̂² = 0, solved with the standard
    /// quadratic formula.
    fn roots_oracle(s: usize, n: usize, z: f64) -> (f64, f64) {
        let nf = n as f64;
        let ph = s as f64 / nf;
        let a = 1.0 + z * z / nf;
        let b = -(2.0 * ph + z * z / nf);
        let c = ph * ph;
        let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
        ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a))
    }

    #[test]
    fn boundaries_are_exact() {
        let (lo, _) = wilson_ci(0, 20, 1.96).unwrap();
        assert_eq!(lo, 0.0);
        let (_, hi) = wilson_ci(20, 20, 1.96).unwrap();
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn matches_the_quadratic_roots_on_a_grid() {
        for n in [1usize, 2, 5, 10, 20, 50, 100] {
            for s in 0..=n {
                let (lo, hi) = wilson_ci(s, n, 1.96).unwrap();
                let (olo, ohi) = roots_oracle(s, n, 1.96);
                assert!((lo - olo).abs() < 1e-9, "lo {s}/{n}: {lo} vs {olo}");
                assert!((hi - ohi).abs() < 1e-9, "hi {s}/{n}: {hi} vs {ohi}");
            }
        }
    }

    #[test]
    fn interval_contains_the_point_estimate_and_stays_in_unit_range() {
        for n in 1..=40usize {
            for s in 0..=n {
                let (lo, hi) = wilson_ci(s, n, 1.96).unwrap();
                let p = s as f64 / n as f64;
                assert!(lo >= 0.0 && hi <= 1.0 && lo <= hi);
                assert!(lo <= p + 1e-15 && p <= hi + 1e-15, "p̂ escaped: {s}/{n}");
            }
        }
    }

    #[test]
    fn eighteen_of_twenty_matches_direct_evaluation() {
        let (lo, hi) = wilson_ci(18, 20, 1.96).unwrap();
        let n = 20.0f64;
        let p = 0.9f64;
        let z = 1.96f64;
        let denom = 1.0 + z * z / n;
        let center = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        assert!((lo - (center - half)).abs() < 1e-9);
        assert!((hi - (center + half)).abs() < 1e-9);
    }

    #[test]
    fn zero_trials_is_refused() {
        assert!(matches!(wilson_ci(0, 0, 1.96), Err(HarnessError::NoTrials)));
        assert!(matches!(
            wilson_ci(3, 2, 1.96),
            Err(HarnessError::BadCounts { .. })
        ));
    }
}
