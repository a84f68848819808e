use super::StatsError;

/// Odds of `p_other` over odds of `p_base`.
pub fn odds_ratio(p_other: f64, p_base: f64) -> Result<f64, StatsError> {
    for p in [p_other, p_base] {
        if !(p > 0.0 && p < 1.0) {
            return Err(StatsError::Domain(format!("probability {p} outside (0, 1)")));
        }
    }
    Ok((p_other / (1.0 - p_other)) / (p_base / (1.0 - p_base)))
}

/// Converts an odds ratio into a ratio of probabilities given the
/// reference group's probability: `OR / ((1 - p) + p * OR)`.
pub fn discrimination_ratio(odds_ratio: f64, p_base: f64) -> Result<f64, StatsError> {
    if !(odds_ratio > 0.0) || !odds_ratio.is_finite() {
        return Err(StatsError::Domain(format!("odds ratio {odds_ratio} must be positive")));
    }
    if !(0.0..=1.0).contains(&p_base) {
        return Err(StatsError::Domain(format!("probability {p_base} outside [0, 1]")));
    }
    Ok(odds_ratio / ((1.0 - p_base) + p_base * odds_ratio))
}

/// Maps odds-ratio interval endpoints through the monotone ratio transform.
pub fn discrimination_ratio_ci(or_lo: f64, or_hi: f64, p_base: f64) -> Result<(f64, f64), StatsError> {
    let lo = discrimination_ratio(or_lo, p_base)?;
    let hi = discrimination_ratio(or_hi, p_base)?;
    Ok((lo.min(hi), lo.max(hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_published_style_figures() {
        let or = odds_ratio(0.6920, 0.7492).unwrap();
        assert!((or - 0.7521).abs() < 5e-4);
        let dr = discrimination_ratio(or, 0.7492).unwrap();
        assert!((dr - 0.9237).abs() < 5e-4);
        assert!((dr - 0.6920 / 0.7492).abs() < 1e-12);

        let or = odds_ratio(0.16, 0.1879).unwrap();
        assert!((or - 0.8232).abs() < 5e-4);
        assert!((discrimination_ratio(or, 0.1879).unwrap() - 0.8515).abs() < 5e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(odds_ratio(0.0, 0.5).is_err());
        assert!(discrimination_ratio(-1.0, 0.5).is_err());
        assert!(discrimination_ratio(1.0, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn ratio_recovers_probability_ratio(po in 0.001f64..0.999, pb in 0.001f64..0.999) {
            let dr = discrimination_ratio(odds_ratio(po, pb).unwrap(), pb).unwrap();
            prop_assert!((dr - po / pb).abs() < 1e-9 * (po / pb).max(1.0));
        }

        #[test]
        fn unit_odds_give_unit_ratio(pb in 0.0f64..=1.0) {
            prop_assert!((discrimination_ratio(1.0, pb).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn interval_is_ordered(a in 0.01f64..10.0, b in 0.01f64..10.0, pb in 0.0f64..=1.0) {
            let (lo, hi) = discrimination_ratio_ci(a.min(b), a.max(b), pb).unwrap();
            prop_assert!(lo <= hi);
        }
    }
}
