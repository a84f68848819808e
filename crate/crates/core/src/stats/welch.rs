use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sample t-test without assuming equal variances.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::DegenerateSample(
            "each sample needs at least two values".into(),
        ));
    }
    let (ma, va) = moments(a);
    let (mb, vb) = moments(b);
    let (qa, qb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = qa + qb;
    if se2 <= 0.0 {
        return Err(StatsError::DegenerateSample("both samples are constant".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / (qa * qa / (a.len() as f64 - 1.0) + qb * qb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| StatsError::Domain(e.to_string()))?;
    let p_value = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchResult {
        mean_a: ma,
        mean_b: mb,
        t,
        df,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_case() {
        let r = welch_t(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        // var 1 and 4, se² = 5/3, t = -2/sqrt(5/3), df = (5/3)² / (1/18 + 16/18).
        assert!((r.t + 2.0 / (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.df - (25.0 / 9.0) / (17.0 / 18.0)).abs() < 1e-12);
        assert!(r.p_value > 0.1 && r.p_value < 0.3);
    }

    #[test]
    fn symmetric_in_sign() {
        let (a, b) = ([3.0, 5.0, 4.0, 8.0], [1.0, 1.5, 0.5]);
        let x = welch_t(&a, &b).unwrap();
        let y = welch_t(&b, &a).unwrap();
        assert!((x.t + y.t).abs() < 1e-12);
        assert!((x.p_value - y.p_value).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(welch_t(&[1.0], &[1.0, 2.0]).is_err());
        assert!(welch_t(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    }
}
