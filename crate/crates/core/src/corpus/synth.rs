//! Synthetic corpus generator reproducing the audit's covariate marginals.
//!
//! Categorical covariates are allocated by largest-remainder quotas and then
//! shuffled, so empirical shares match the configured marginals to within
//! one vacancy regardless of corpus size.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    CorpusError, CvTemplate, Experience, Hours, JobType, Language, NameEntry, Proficiency, Shift,
    Vacancy, NAME_PLACEHOLDER,
};
use crate::digest::seeded_rng;
use crate::identity::identity_grid;
use crate::Corpus;

/// Discrete distribution over covariate levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Marginal<T>(pub Vec<(T, f64)>);

impl<T: Clone> Marginal<T> {
    pub fn levels(&self) -> impl Iterator<Item = &T> {
        self.0.iter().map(|(l, _)| l)
    }

    fn check(&self, covariate: &str) -> Result<(), CorpusError> {
        if self.0.is_empty() {
            return Err(CorpusError::Config(format!("marginal `{covariate}` is empty")));
        }
        if self.0.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(CorpusError::Config(format!(
                "marginal `{covariate}` has a negative or non-finite share"
            )));
        }
        let sum: f64 = self.0.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::MarginalSum {
                covariate: covariate.to_string(),
                sum,
            });
        }
        Ok(())
    }

    /// Exactly `n` levels with quota counts, in random order.
    fn allocate(&self, n: usize, rng: &mut impl Rng) -> Vec<T> {
        let weights: Vec<f64> = self.0.iter().map(|(_, w)| *w).collect();
        let mut out = Vec::with_capacity(n);
        for ((level, _), count) in self.0.iter().zip(quota_counts(&weights, n)) {
            out.extend(std::iter::repeat_n(level.clone(), count));
        }
        out.shuffle(rng);
        out
    }
}

/// Largest-remainder apportionment of `n` units to `weights` (which sum to 1).
pub(crate) fn quota_counts(weights: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// How vacancies are spread over occupations and experience levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Allocation {
    /// A fixed number of vacancies per occupation × experience cell, minus
    /// explicitly excluded cells.
    Balanced {
        per_cell: usize,
        excluded: Vec<(String, Experience)>,
    },
    /// A given number of vacancies with quota-allocated occupation (uniform)
    /// and experience levels.
    Sampled {
        n_vacancies: usize,
        experience: Marginal<Experience>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub occupations: Vec<String>,
    pub allocation: Allocation,
    pub job_type: Marginal<JobType>,
    pub shift: Marginal<Shift>,
    pub hours: Marginal<Hours>,
    /// Share of vacancies that mention each language at all.
    pub language_mention: BTreeMap<Language, f64>,
    /// Required proficiency among vacancies that mention a language.
    pub proficiency: Marginal<Proficiency>,
    pub location: Marginal<String>,
    pub names_per_cell: usize,
}

pub fn default_occupations() -> Vec<String> {
    [
        "administrative assistant",
        "HR officer",
        "IT analyst",
        "IT project leader",
        "industrial logistics planner",
        "trucker-trailer driver",
        "seller of clothing accessories",
        "sales representative",
        "site manager",
        "technical production manager",
        "legal assistant",
        "accountant",
        "customer service agent",
        "warehouse operator",
        "electrician",
        "marketing officer",
        "receptionist",
        "purchasing officer",
        "maintenance technician",
        "payroll administrator",
        "call centre agent",
        "web developer",
        "quality controller",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

fn share(count: f64) -> f64 {
    count / 1920.0
}

impl Default for CorpusConfig {
    /// The 1,920-vacancy design: 30 vacancies per occupation × experience
    /// cell over 23 occupations, with five sparse senior cells removed.
    fn default() -> Self {
        let excluded = [
            "seller of clothing accessories",
            "receptionist",
            "call centre agent",
            "warehouse operator",
            "customer service agent",
        ]
        .into_iter()
        .map(|o| (o.to_string(), Experience::Min5y))
        .collect();
        CorpusConfig {
            occupations: default_occupations(),
            allocation: Allocation::Balanced {
                per_cell: 30,
                excluded,
            },
            job_type: Marginal(vec![
                (JobType::Permanent, share(1501.0)),
                (JobType::Temporary, share(382.0)),
                (JobType::Other, share(37.0)),
            ]),
            shift: Marginal(vec![
                (Shift::Day, share(1823.0)),
                (Shift::TwoShift, share(36.0)),
                (Shift::ThreeShift, share(24.0)),
                (Shift::Night, share(12.0)),
                (Shift::Interrupted, share(15.0)),
                (Shift::Continuous, share(10.0)),
            ]),
            hours: Marginal(vec![
                (Hours::FullTime, share(1860.0)),
                (Hours::PartTime, share(60.0)),
            ]),
            language_mention: BTreeMap::from([
                (Language::Dutch, share(1808.0)),
                (Language::French, share(783.0)),
                (Language::English, share(760.0)),
            ]),
            proficiency: Marginal(vec![
                (Proficiency::NotAtAll, 0.04),
                (Proficiency::Basic, 0.16),
                (Proficiency::Moderate, 0.25),
                (Proficiency::Good, 0.30),
                (Proficiency::VeryGood, 0.25),
            ]),
            location: Marginal(
                [
                    ("Antwerp", 0.22),
                    ("East Flanders", 0.20),
                    ("Flemish Brabant", 0.16),
                    ("Limburg", 0.12),
                    ("West Flanders", 0.18),
                    ("Brussels", 0.12),
                ]
                .into_iter()
                .map(|(l, w)| (l.to_string(), w))
                .collect(),
            ),
            names_per_cell: 10,
        }
    }
}

impl CorpusConfig {
    /// Default marginals with `n` vacancies sampled instead of the balanced grid.
    pub fn sampled(n_vacancies: usize) -> Self {
        CorpusConfig {
            allocation: Allocation::Sampled {
                n_vacancies,
                experience: Marginal(vec![
                    (Experience::None, share(690.0)),
                    (Experience::Min2y, share(690.0)),
                    (Experience::Min5y, share(540.0)),
                ]),
            },
            ..CorpusConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.occupations.is_empty() {
            return Err(CorpusError::Config("no occupations configured".into()));
        }
        if self.names_per_cell == 0 {
            return Err(CorpusError::Config("names_per_cell must be positive".into()));
        }
        self.job_type.check("job_type")?;
        self.shift.check("shift")?;
        self.hours.check("hours")?;
        self.proficiency.check("proficiency")?;
        self.location.check("location")?;
        for (lang, rate) in &self.language_mention {
            if !(0.0..=1.0).contains(rate) {
                return Err(CorpusError::Config(format!(
                    "language_mention for {lang} must lie in [0, 1], got {rate}"
                )));
            }
        }
        match &self.allocation {
            Allocation::Balanced { excluded, .. } => {
                for (occ, _) in excluded {
                    if !self.occupations.contains(occ) {
                        return Err(CorpusError::Config(format!(
                            "excluded cell names unknown occupation `{occ}`"
                        )));
                    }
                }
            }
            Allocation::Sampled { experience, .. } => experience.check("experience_req")?,
        }
        Ok(())
    }

    fn cells(&self, rng: &mut impl Rng) -> Vec<(String, Experience)> {
        match &self.allocation {
            Allocation::Balanced { per_cell, excluded } => {
                let mut cells = Vec::new();
                for occ in &self.occupations {
                    for exp in Experience::ALL {
                        if excluded.iter().any(|(o, e)| o == occ && *e == exp) {
                            continue;
                        }
                        cells.extend(std::iter::repeat_n((occ.clone(), exp), *per_cell));
                    }
                }
                cells
            }
            Allocation::Sampled {
                n_vacancies,
                experience,
            } => {
                let uniform = 1.0 / self.occupations.len() as f64;
                let occ = Marginal(self.occupations.iter().map(|o| (o.clone(), uniform)).collect())
                    .allocate(*n_vacancies, rng);
                let exp = experience.allocate(*n_vacancies, rng);
                occ.into_iter().zip(exp).collect()
            }
        }
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ra", "ne", "to", "sa", "vi", "de", "lu", "ja", "mo", "ri", "el", "an",
    "ze", "bo", "fa", "ni", "su", "ha", "ye", "ga", "or",
];

fn pseudo_word(rng: &mut impl Rng, syllables: usize) -> String {
    let mut w: String = (0..syllables)
        .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
        .collect();
    if let Some(first) = w.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    w
}

fn experience_text(exp: Experience) -> &'static str {
    match exp {
        Experience::None => "no experience required",
        Experience::Min2y => "at least two years of experience",
        Experience::Min5y => "at least five years of experience",
    }
}

/// Generate a corpus from `config`. Pure function of `(config, seed)`.
pub fn generate_synthetic_corpus(config: &CorpusConfig, seed: u64) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let mut rng = seeded_rng(seed, "corpus/cells");
    let cells = config.cells(&mut rng);
    let n = cells.len();
    if n == 0 {
        return Err(CorpusError::Config("allocation yields no vacancies".into()));
    }

    let job_types = config.job_type.allocate(n, &mut seeded_rng(seed, "corpus/job_type"));
    let shifts = config.shift.allocate(n, &mut seeded_rng(seed, "corpus/shift"));
    let hours = config.hours.allocate(n, &mut seeded_rng(seed, "corpus/hours"));
    let locations = config.location.allocate(n, &mut seeded_rng(seed, "corpus/location"));

    let mut lang_req = vec![BTreeMap::new(); n];
    for (lang, rate) in &config.language_mention {
        let mut rng = seeded_rng(seed, &format!("corpus/lang/{lang}"));
        let mention = Marginal(vec![(true, *rate), (false, 1.0 - rate)]).allocate(n, &mut rng);
        let mentioned: Vec<usize> = (0..n).filter(|&i| mention[i]).collect();
        let levels = config.proficiency.allocate(mentioned.len(), &mut rng);
        for (i, level) in mentioned.into_iter().zip(levels) {
            lang_req[i].insert(*lang, level);
        }
    }

    let mut year_rng = seeded_rng(seed, "corpus/grad_year");
    let mut vacancies = Vec::with_capacity(n);
    let mut cvs = Vec::with_capacity(n);
    for (i, (occupation, exp)) in cells.into_iter().enumerate() {
        let id = format!("vac-{:05}", i + 1);
        let langs: Vec<String> = lang_req[i]
            .iter()
            .map(|(l, p)| format!("{l}: {p}"))
            .collect();
        let body = format!(
            "We are looking for a {occupation} in {location}. Contract: {job}, {hours}, {shift} \
             shift system. Profile: {exp_text}. Languages: {langs}.",
            location = locations[i],
            job = job_types[i],
            hours = hours[i],
            shift = shifts[i],
            exp_text = experience_text(exp),
            langs = if langs.is_empty() {
                "no specific requirements".to_string()
            } else {
                langs.join(", ")
            },
        );
        let (years, grad_span) = match exp {
            Experience::None => (0, 2021..=2022),
            Experience::Min2y => (3, 2018..=2020),
            Experience::Min5y => (6, 2013..=2016),
        };
        let grad_year = year_rng.random_range(grad_span);
        let experience_summary = if years == 0 {
            "No prior professional experience".to_string()
        } else {
            format!("{years} years of experience as {occupation}")
        };
        let degree_spec = format!("Bachelor's degree relevant to {occupation}");
        let cv_body = format!(
            "Curriculum vitae\nName: {NAME_PLACEHOLDER}\nNationality: Belgian\nDriving licence: B, \
             own car\nEducation: {degree_spec} ({grad_year})\nExperience: {experience_summary}\n\
             Languages: Dutch (native), French (good), English (good)\nComputer skills: office \
             software"
        );
        vacancies.push(Vacancy {
            id: id.clone(),
            occupation,
            experience_req: exp,
            job_type: job_types[i],
            shift: shifts[i],
            hours: hours[i],
            lang_req: std::mem::take(&mut lang_req[i]),
            location: locations[i].clone(),
            body,
        });
        cvs.push(CvTemplate {
            vacancy_id: id,
            body: cv_body,
            degree_spec,
            grad_year,
            experience_summary,
        });
    }

    let mut name_rng = seeded_rng(seed, "corpus/names");
    let mut seen = HashSet::new();
    let mut names = Vec::new();
    for (ethnicity, gender) in identity_grid() {
        let mut made = 0;
        while made < config.names_per_cell {
            let first = pseudo_word(&mut name_rng, 2);
            let last = pseudo_word(&mut name_rng, 3);
            if seen.insert((first.clone(), last.clone())) {
                names.push(NameEntry {
                    first,
                    last,
                    ethnicity,
                    gender,
                    source: format!("synthetic:{}{}", ethnicity.code(), gender.code()),
                });
                made += 1;
            }
        }
    }

    Corpus::new(vacancies, cvs, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::save_corpus;

    fn frequency<T: PartialEq>(values: impl Iterator<Item = T>, level: &T) -> f64 {
        let mut n = 0usize;
        let mut hit = 0usize;
        for v in values {
            n += 1;
            if &v == level {
                hit += 1;
            }
        }
        hit as f64 / n as f64
    }

    #[test]
    fn quota_counts_sum_to_n() {
        assert_eq!(quota_counts(&[0.5, 0.5], 3).iter().sum::<usize>(), 3);
        assert_eq!(quota_counts(&[0.2, 0.3, 0.5], 10), vec![2, 3, 5]);
        assert_eq!(quota_counts(&[1.0 / 3.0; 3], 100).iter().sum::<usize>(), 100);
    }

    #[test]
    fn default_design_counts() {
        let c = generate_synthetic_corpus(&CorpusConfig::default(), 7).unwrap();
        assert_eq!(c.vacancies.len(), 1920);
        let exp = c.experience_counts();
        assert_eq!(exp[&Experience::None], 690);
        assert_eq!(exp[&Experience::Min2y], 690);
        assert_eq!(exp[&Experience::Min5y], 540);
        let occupations: HashSet<_> = c.vacancies.iter().map(|v| &v.occupation).collect();
        assert_eq!(occupations.len(), 23);
    }

    #[test]
    fn day_shift_share_matches_marginal() {
        let c = generate_synthetic_corpus(&CorpusConfig::default(), 11).unwrap();
        let day = frequency(c.vacancies.iter().map(|v| v.shift), &Shift::Day);
        assert!((day - 0.9495).abs() < 0.02, "day share {day}");
        let perm = frequency(c.vacancies.iter().map(|v| v.job_type), &JobType::Permanent);
        assert!((perm - 0.7818).abs() < 0.02, "permanent share {perm}");
    }

    #[test]
    fn sampled_marginals_within_two_points() {
        let config = CorpusConfig::sampled(1000);
        let c = generate_synthetic_corpus(&config, 3).unwrap();
        assert_eq!(c.vacancies.len(), 1000);
        for (level, w) in &config.job_type.0 {
            let f = frequency(c.vacancies.iter().map(|v| v.job_type), level);
            assert!((f - w).abs() <= 0.02);
        }
        for (level, w) in &config.shift.0 {
            let f = frequency(c.vacancies.iter().map(|v| v.shift), level);
            assert!((f - w).abs() <= 0.02);
        }
        for (level, w) in &config.hours.0 {
            let f = frequency(c.vacancies.iter().map(|v| v.hours), level);
            assert!((f - w).abs() <= 0.02);
        }
        for (lang, rate) in &config.language_mention {
            let f = frequency(c.vacancies.iter().map(|v| v.lang_req.contains_key(lang)), &true);
            assert!((f - rate).abs() <= 0.02);
        }
        if let Allocation::Sampled { experience, .. } = &config.allocation {
            for (level, w) in &experience.0 {
                let f = frequency(c.vacancies.iter().map(|v| v.experience_req), level);
                assert!((f - w).abs() <= 0.02);
            }
        }
    }

    #[test]
    fn degenerate_marginals() {
        let mut config = CorpusConfig::sampled(50);
        config.job_type = Marginal(vec![(JobType::Permanent, 1.0)]);
        config.hours = Marginal(vec![(Hours::FullTime, 1.0)]);
        let c = generate_synthetic_corpus(&config, 1).unwrap();
        assert!(c
            .vacancies
            .iter()
            .all(|v| v.job_type == JobType::Permanent && v.hours == Hours::FullTime));
    }

    #[test]
    fn marginal_must_sum_to_one() {
        let mut config = CorpusConfig::sampled(10);
        config.hours = Marginal(vec![(Hours::FullTime, 0.9), (Hours::PartTime, 0.05)]);
        assert!(matches!(
            generate_synthetic_corpus(&config, 1),
            Err(CorpusError::MarginalSum { .. })
        ));
    }

    #[test]
    fn one_placeholder_per_cv_and_one_cv_per_vacancy() {
        let c = generate_synthetic_corpus(&CorpusConfig::sampled(40), 5).unwrap();
        assert_eq!(c.cvs.len(), c.vacancies.len());
        assert!(c.cvs.iter().all(|cv| cv.placeholder_count() == 1));
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let config = CorpusConfig::sampled(30);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save_corpus(&generate_synthetic_corpus(&config, 9).unwrap(), a.path()).unwrap();
        save_corpus(&generate_synthetic_corpus(&config, 9).unwrap(), b.path()).unwrap();
        for f in [super::super::VACANCY_FILE, super::super::CV_FILE, super::super::NAME_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
        let other = generate_synthetic_corpus(&config, 10).unwrap();
        assert_ne!(other, generate_synthetic_corpus(&config, 9).unwrap());
    }
}
