//! Calibrated synthetic scorer.
//!
//! Scores are drawn from a discrete base mixture shaped like the observed
//! screening output (heavy spikes at 50 and 70). A group shift `δ` is
//! realised by moving a draw to a neighbouring rung with probability
//! proportional to `|δ|`; rates are normalised so that the expected score
//! moves by exactly `δ`. The mixture itself, not an additive offset, carries
//! the shift, so the support never leaves the base rungs.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ProviderError;
use crate::corpus::Vacancy;
use crate::design::Trial;
use crate::identity::{Ethnicity, Gender};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub score: u8,
    pub weight: f64,
}

/// A draw at `from` moves to `to` with probability `|δ| · rate` (after
/// normalisation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub from: u8,
    pub to: u8,
    pub rate: f64,
}

/// Additive shift for trials matching the optional identity tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShift {
    #[serde(default)]
    pub ethnicity: Option<Ethnicity>,
    #[serde(default)]
    pub gender: Option<Gender>,
    pub shift: f64,
}

/// Additive shift for matching trials on vacancies with `covariate = level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionShift {
    pub covariate: String,
    pub level: String,
    #[serde(default)]
    pub ethnicity: Option<Ethnicity>,
    #[serde(default)]
    pub gender: Option<Gender>,
    pub shift: f64,
}

impl GroupShift {
    fn matches(&self, e: Ethnicity, g: Gender) -> bool {
        self.ethnicity.is_none_or(|x| x == e) && self.gender.is_none_or(|x| x == g)
    }
}

impl InteractionShift {
    fn matches(&self, e: Ethnicity, g: Gender, v: &Vacancy) -> bool {
        self.ethnicity.is_none_or(|x| x == e)
            && self.gender.is_none_or(|x| x == g)
            && v.covariate(&self.covariate).as_deref() == Some(self.level.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasModel {
    pub base: Vec<Rung>,
    pub down: Vec<Move>,
    pub up: Vec<Move>,
    #[serde(default)]
    pub penalties: Vec<GroupShift>,
    #[serde(default)]
    pub interactions: Vec<InteractionShift>,
    /// Standard deviation of Gaussian noise added before rounding.
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default = "yes")]
    pub clamp: bool,
}

fn yes() -> bool {
    true
}

/// Ethnicity coefficients of the reference OLS model (Dutch = 0).
pub const REFERENCE_PENALTIES: [(Ethnicity, f64); 8] = [
    (Ethnicity::WhiteAmerican, -0.9563),
    (Ethnicity::Arab, -1.4117),
    (Ethnicity::CentralAfrican, -1.5468),
    (Ethnicity::Hispanic, -1.6257),
    (Ethnicity::Turkish, -1.7478),
    (Ethnicity::BlackAmerican, -1.8436),
    (Ethnicity::Asian, -2.1583),
    (Ethnicity::EasternEuropean, -2.4170),
];

impl Default for BiasModel {
    /// Calibrated base mixture with no penalties.
    fn default() -> Self {
        let rung = |score, weight| Rung { score, weight };
        let mv = |from, to, rate| Move { from, to, rate };
        BiasModel {
            base: vec![
                rung(20, 0.006),
                rung(50, 0.2448),
                rung(60, 0.02),
                rung(70, 0.4226),
                rung(75, 0.1268),
                rung(80, 0.1678),
                rung(95, 0.012),
            ],
            down: vec![mv(75, 70, 0.2116), mv(70, 50, 0.0790), mv(70, 60, 0.0469)],
            up: vec![mv(50, 60, 1.0), mv(60, 70, 1.0), mv(70, 75, 1.0)],
            penalties: Vec::new(),
            interactions: Vec::new(),
            noise_sd: 0.0,
            clamp: true,
        }
    }
}

impl BiasModel {
    /// Default base with the reference ethnicity penalties injected.
    pub fn reference() -> Self {
        BiasModel::default().with_ethnicity_penalties(&REFERENCE_PENALTIES)
    }

    pub fn with_ethnicity_penalties(mut self, penalties: &[(Ethnicity, f64)]) -> Self {
        self.penalties.extend(penalties.iter().map(|&(e, shift)| GroupShift {
            ethnicity: Some(e),
            gender: None,
            shift,
        }));
        self
    }

    pub fn base_mean(&self) -> f64 {
        self.base.iter().map(|r| r.score as f64 * r.weight).sum()
    }

    pub fn base_sd(&self) -> f64 {
        let m = self.base_mean();
        self.base
            .iter()
            .map(|r| r.weight * (r.score as f64 - m).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Total shift applied to a trial on a vacancy.
    pub fn shift_for(&self, ethnicity: Ethnicity, gender: Gender, vacancy: &Vacancy) -> f64 {
        let group: f64 = self
            .penalties
            .iter()
            .filter(|p| p.matches(ethnicity, gender))
            .map(|p| p.shift)
            .sum();
        let inter: f64 = self
            .interactions
            .iter()
            .filter(|i| i.matches(ethnicity, gender, vacancy))
            .map(|i| i.shift)
            .sum();
        group + inter
    }

    /// Expected score before noise and clamping.
    pub fn expected_score(&self, ethnicity: Ethnicity, gender: Gender, vacancy: &Vacancy) -> f64 {
        self.base_mean() + self.shift_for(ethnicity, gender, vacancy)
    }

    fn weight_of(&self, score: u8) -> Option<f64> {
        self.base.iter().find(|r| r.score == score).map(|r| r.weight)
    }

    /// Score points moved per unit of rate; normalising constant of a move set.
    fn move_mass(&self, moves: &[Move]) -> f64 {
        moves
            .iter()
            .map(|m| {
                self.weight_of(m.from).unwrap_or(0.0) * m.rate * (m.to as f64 - m.from as f64).abs()
            })
            .sum()
    }

    /// Largest |δ| the move set can realise without a probability above 1.
    fn capacity(&self, moves: &[Move]) -> f64 {
        let mass = self.move_mass(moves);
        let worst = self
            .base
            .iter()
            .map(|r| moves.iter().filter(|m| m.from == r.score).map(|m| m.rate).sum::<f64>())
            .fold(0.0, f64::max);
        if worst == 0.0 {
            0.0
        } else {
            mass / worst
        }
    }

    /// Bound on |δ| over all groups and vacancies.
    fn max_abs_shift(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for e in Ethnicity::ALL {
            for g in Gender::ALL {
                let group: f64 = self
                    .penalties
                    .iter()
                    .filter(|p| p.matches(e, g))
                    .map(|p| p.shift)
                    .sum();
                let mut covariates: Vec<&str> =
                    self.interactions.iter().map(|i| i.covariate.as_str()).collect();
                covariates.sort_unstable();
                covariates.dedup();
                let mut inter = 0.0;
                for c in covariates {
                    let mut levels: Vec<&str> = self
                        .interactions
                        .iter()
                        .filter(|i| i.covariate == c)
                        .map(|i| i.level.as_str())
                        .collect();
                    levels.sort_unstable();
                    levels.dedup();
                    inter += levels
                        .iter()
                        .map(|l| {
                            self.interactions
                                .iter()
                                .filter(|i| {
                                    i.covariate == c
                                        && i.level == *l
                                        && i.ethnicity.is_none_or(|x| x == e)
                                        && i.gender.is_none_or(|x| x == g)
                                })
                                .map(|i| i.shift)
                                .sum::<f64>()
                                .abs()
                        })
                        .fold(0.0, f64::max);
                }
                worst = worst.max(group.abs() + inter);
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |m: String| Err(ProviderError::Config(format!("bias model: {m}")));
        if self.base.is_empty() {
            return bad("empty base mixture".into());
        }
        if self.base.windows(2).any(|w| w[1].score <= w[0].score) {
            return bad("base scores must be strictly increasing".into());
        }
        if self
            .base
            .iter()
            .any(|r| !(1..=100).contains(&r.score) || !(0.0..=1.0).contains(&r.weight))
        {
            return bad("base rungs need scores in [1, 100] and weights in [0, 1]".into());
        }
        let sum: f64 = self.base.iter().map(|r| r.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("base weights sum to {sum}"));
        }
        for (moves, down) in [(&self.down, true), (&self.up, false)] {
            for m in moves.iter() {
                if self.weight_of(m.from).is_none() || self.weight_of(m.to).is_none() {
                    return bad(format!("move {}→{} leaves the base support", m.from, m.to));
                }
                if (m.to < m.from) != down || m.to == m.from || !(m.rate > 0.0) {
                    return bad(format!("move {}→{} has the wrong direction or rate", m.from, m.to));
                }
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be finite and non-negative".into());
        }
        let need = self.max_abs_shift();
        let has_negative = self.penalties.iter().any(|p| p.shift < 0.0)
            || self.interactions.iter().any(|i| i.shift < 0.0);
        let has_positive = self.penalties.iter().any(|p| p.shift > 0.0)
            || self.interactions.iter().any(|i| i.shift > 0.0);
        if has_negative && need > self.capacity(&self.down) + 1e-12 {
            return bad(format!(
                "shifts up to {need:.3} exceed the downward capacity {:.3}",
                self.capacity(&self.down)
            ));
        }
        if has_positive && need > self.capacity(&self.up) + 1e-12 {
            return bad(format!(
                "shifts up to {need:.3} exceed the upward capacity {:.3}",
                self.capacity(&self.up)
            ));
        }
        Ok(())
    }

    /// One synthetic score. Temperature has no effect.
    pub fn synthetic_score(&self, trial: &Trial, vacancy: &Vacancy, rng: &mut impl Rng) -> i32 {
        let mut u: f64 = rng.random();
        let mut score = self.base.last().expect("validated").score;
        for r in &self.base {
            if u < r.weight {
                score = r.score;
                break;
            }
            u -= r.weight;
        }

        let delta = self.shift_for(trial.ethnicity, trial.gender, vacancy);
        let moves = if delta < 0.0 { &self.down } else { &self.up };
        let u: f64 = rng.random();
        if delta != 0.0 {
            let scale = delta.abs() / self.move_mass(moves);
            let mut acc = 0.0;
            for m in moves.iter().filter(|m| m.from == score) {
                acc += scale * m.rate;
                if u < acc {
                    score = m.to;
                    break;
                }
            }
        }

        let mut value = score as f64;
        if self.noise_sd > 0.0 {
            value += Normal::new(0.0, self.noise_sd).expect("validated").sample(rng);
        }
        let floor = value.floor();
        let u: f64 = rng.random();
        let mut out = floor as i32 + i32::from(u < value - floor);
        if self.clamp {
            out = out.clamp(1, 100);
        }
        out
    }
}
