use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DesignError;

/// Temperatures above this value stop following the scoring instruction.
pub const MAX_TEMPERATURE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeEntry {
    pub temperature: f64,
    pub weight: f64,
}

/// Discrete distribution of sampling temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct TemperatureScheme {
    entries: Vec<SchemeEntry>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    entries: Vec<SchemeEntry>,
}

impl TryFrom<RawScheme> for TemperatureScheme {
    type Error = DesignError;
    fn try_from(raw: RawScheme) -> Result<Self, DesignError> {
        TemperatureScheme::new(raw.entries)
    }
}

impl From<TemperatureScheme> for RawScheme {
    fn from(s: TemperatureScheme) -> Self {
        RawScheme { entries: s.entries }
    }
}

impl Default for TemperatureScheme {
    fn default() -> Self {
        let entries = [
            (0.00, 0.60),
            (0.25, 0.0875),
            (0.50, 0.0875),
            (0.75, 0.0875),
            (1.00, 0.0875),
            (1.25, 0.025),
            (1.50, 0.025),
        ]
        .into_iter()
        .map(|(temperature, weight)| SchemeEntry { temperature, weight })
        .collect();
        TemperatureScheme::new(entries).expect("default scheme is valid")
    }
}

impl TemperatureScheme {
    pub fn new(entries: Vec<SchemeEntry>) -> Result<Self, DesignError> {
        let bad = |m: String| Err(DesignError::InvalidScheme(m));
        if entries.is_empty() {
            return bad("no entries".into());
        }
        for e in &entries {
            if !(0.0..=MAX_TEMPERATURE).contains(&e.temperature) {
                return bad(format!(
                    "temperature {} outside [0, {MAX_TEMPERATURE}]",
                    e.temperature
                ));
            }
            if !(0.0..=1.0).contains(&e.weight) {
                return bad(format!("weight {} outside [0, 1]", e.weight));
            }
        }
        if entries.windows(2).any(|w| w[1].temperature <= w[0].temperature) {
            return bad("temperatures must be strictly increasing".into());
        }
        let sum: f64 = entries.iter().map(|e| e.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {sum}, expected 1"));
        }
        let cumulative = entries
            .iter()
            .scan(0.0, |acc, e| {
                *acc += e.weight;
                Some(*acc)
            })
            .collect();
        Ok(TemperatureScheme {
            entries,
            cumulative,
        })
    }

    /// Shorthand for `(temperature, weight)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, DesignError> {
        Self::new(
            pairs
                .iter()
                .map(|&(temperature, weight)| SchemeEntry { temperature, weight })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[SchemeEntry] {
        &self.entries
    }

    pub fn support(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.temperature).collect()
    }

    pub fn contains(&self, temperature: f64) -> bool {
        self.entries.iter().any(|e| e.temperature == temperature)
    }
}

/// Draw one temperature by inverting the cumulative weights.
pub fn sample_temperature(rng: &mut impl Rng, scheme: &TemperatureScheme) -> f64 {
    let u: f64 = rng.random();
    let idx = scheme
        .cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or_else(|| {
            // Rounding can leave the last cumulative weight a hair below 1.
            scheme
                .entries
                .iter()
                .rposition(|e| e.weight > 0.0)
                .unwrap_or(scheme.entries.len() - 1)
        });
    scheme.entries[idx].temperature
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::seeded_rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn default_support_in_quarter_steps() {
        assert_eq!(
            TemperatureScheme::default().support(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5]
        );
    }

    #[test]
    fn degenerate_scheme_is_constant() {
        let s = TemperatureScheme::from_pairs(&[(0.0, 1.0)]).unwrap();
        let mut rng = seeded_rng(1, "t");
        assert!((0..1000).all(|_| sample_temperature(&mut rng, &s) == 0.0));
    }

    #[test]
    fn zero_weight_entries_never_drawn() {
        let s = TemperatureScheme::from_pairs(&[(0.0, 0.5), (0.5, 0.0), (1.0, 0.5)]).unwrap();
        let mut rng = seeded_rng(2, "t");
        assert!((0..5000).all(|_| sample_temperature(&mut rng, &s) != 0.5));
    }

    #[test]
    fn rejects_invalid_schemes() {
        assert!(TemperatureScheme::from_pairs(&[]).is_err());
        assert!(TemperatureScheme::from_pairs(&[(0.0, 0.5), (0.5, 0.4)]).is_err());
        assert!(TemperatureScheme::from_pairs(&[(0.5, 0.5), (0.5, 0.5)]).is_err());
        assert!(TemperatureScheme::from_pairs(&[(0.5, 0.5), (0.25, 0.5)]).is_err());
        assert!(TemperatureScheme::from_pairs(&[(0.0, 0.5), (1.75, 0.5)]).is_err());
        assert!(TemperatureScheme::from_pairs(&[(0.0, 1.2), (1.0, -0.2)]).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let s = TemperatureScheme::default();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<TemperatureScheme>(&json).unwrap(), s);
        let bad = r#"{"entries":[{"temperature":0.0,"weight":0.3}]}"#;
        assert!(serde_json::from_str::<TemperatureScheme>(bad).is_err());
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        let s = TemperatureScheme::default();
        let mut rng = seeded_rng(20_240_101, "chi-square");
        let n = 100_000;
        let mut counts = vec![0usize; s.entries().len()];
        for _ in 0..n {
            let t = sample_temperature(&mut rng, &s);
            counts[s.support().iter().position(|&x| x == t).unwrap()] += 1;
        }
        let stat: f64 = counts
            .iter()
            .zip(s.entries())
            .map(|(&o, e)| {
                let exp = e.weight * n as f64;
                (o as f64 - exp).powi(2) / exp
            })
            .sum();
        let df = (counts.len() - 1) as f64;
        let p = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
        assert!(p > 0.001, "chi-square {stat}, p = {p}");
    }
}
