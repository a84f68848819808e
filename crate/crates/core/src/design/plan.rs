use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_temperature, DesignError, TemperatureScheme};
use crate::corpus::{Corpus, NameEntry};
use crate::digest::{seeded_rng, PartHasher};
use crate::identity::{identity_grid, Ethnicity, Gender};

/// One vacancy × identity pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: String,
    pub vacancy_id: String,
    pub ethnicity: Ethnicity,
    pub gender: Gender,
    pub name: NameEntry,
    pub temperature: f64,
    /// Label from which this trial's random streams are derived.
    pub seed_path: String,
}

impl Trial {
    pub fn make_id(vacancy_id: &str, ethnicity: Ethnicity, gender: Gender) -> String {
        format!("{vacancy_id}-{}-{}", ethnicity.code(), gender.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanHeader {
    pub corpus_digest: String,
    pub master_seed: u64,
    pub scheme: TemperatureScheme,
    pub n_trials: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum PlanRecord {
    Header(PlanHeader),
    Trial(Trial),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub trials: Vec<Trial>,
    pub scheme: TemperatureScheme,
    pub master_seed: u64,
    pub corpus_digest: String,
}

/// Cross every vacancy with the identity grid. Deterministic in
/// `(corpus, scheme, master_seed)`; draws for a trial depend only on the
/// master seed, the vacancy id and the identity cell.
pub fn build_plan(
    corpus: &Corpus,
    scheme: &TemperatureScheme,
    master_seed: u64,
) -> Result<ExperimentPlan, DesignError> {
    let mut cells: HashMap<(Ethnicity, Gender), Vec<&NameEntry>> = corpus
        .name_cells()
        .into_iter()
        .collect();
    for (ethnicity, gender) in identity_grid() {
        let pool = cells.entry((ethnicity, gender)).or_default();
        if pool.is_empty() {
            return Err(DesignError::EmptyCell { ethnicity, gender });
        }
        // Pool order in the input file must not affect the draw.
        pool.sort_by(|a, b| (&a.first, &a.last, &a.source).cmp(&(&b.first, &b.last, &b.source)));
    }

    let mut trials = Vec::with_capacity(corpus.vacancies.len() * 18);
    for vacancy in &corpus.vacancies {
        for (ethnicity, gender) in identity_grid() {
            let seed_path = format!(
                "{master_seed}/{}/{}/{}",
                vacancy.id,
                ethnicity.code(),
                gender.code()
            );
            let stream = format!("{}/{}/{}", vacancy.id, ethnicity.code(), gender.code());
            let pool = &cells[&(ethnicity, gender)];
            let mut name_rng = seeded_rng(master_seed, &format!("{stream}/name"));
            let name = pool[name_rng.random_range(0..pool.len())].clone();
            let mut temp_rng = seeded_rng(master_seed, &format!("{stream}/temperature"));
            let temperature = sample_temperature(&mut temp_rng, scheme);
            trials.push(Trial {
                trial_id: Trial::make_id(&vacancy.id, ethnicity, gender),
                vacancy_id: vacancy.id.clone(),
                ethnicity,
                gender,
                name,
                temperature,
                seed_path,
            });
        }
    }
    Ok(ExperimentPlan {
        trials,
        scheme: scheme.clone(),
        master_seed,
        corpus_digest: corpus.digest(),
    })
}

impl ExperimentPlan {
    pub fn header(&self) -> PlanHeader {
        PlanHeader {
            corpus_digest: self.corpus_digest.clone(),
            master_seed: self.master_seed,
            scheme: self.scheme.clone(),
            n_trials: self.trials.len(),
        }
    }

    /// Content hash over the header and every trial, in order.
    pub fn digest(&self) -> String {
        let mut h = PartHasher::new();
        h.part(serde_json::to_vec(&self.header()).expect("header serializes"));
        for t in &self.trials {
            h.part(serde_json::to_vec(t).expect("trial serializes"));
        }
        h.finish_hex()
    }

    /// Fails when `corpus` is not the corpus this plan was built from.
    pub fn verify_corpus(&self, corpus: &Corpus) -> Result<(), DesignError> {
        let found = corpus.digest();
        if found != self.corpus_digest {
            return Err(DesignError::DigestMismatch {
                expected: self.corpus_digest.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), DesignError> {
        let path = path.as_ref();
        let io = |source| DesignError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let mut line = |record: &PlanRecord| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, record)?;
            w.write_all(b"\n")
        };
        line(&PlanRecord::Header(self.header())).map_err(io)?;
        for t in &self.trials {
            line(&PlanRecord::Trial(t.clone())).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self, DesignError> {
        let path = path.as_ref();
        let io = |source| DesignError::Io {
            path: path.to_path_buf(),
            source,
        };
        let schema = |line: usize, message: String| DesignError::Schema {
            path: path.to_path_buf(),
            line,
            message,
        };
        let reader = BufReader::new(File::open(path).map_err(io)?);
        let mut header: Option<PlanHeader> = None;
        let mut trials = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<PlanRecord>(&line).map_err(|e| schema(i + 1, e.to_string()))? {
                PlanRecord::Header(h) => {
                    if header.is_some() || !trials.is_empty() {
                        return Err(schema(i + 1, "header must be the first record".into()));
                    }
                    header = Some(h);
                }
                PlanRecord::Trial(t) => {
                    if header.is_none() {
                        return Err(schema(i + 1, "trial before header".into()));
                    }
                    trials.push(t);
                }
            }
        }
        let header = header.ok_or_else(|| schema(0, "missing header record".into()))?;
        if header.n_trials != trials.len() {
            return Err(schema(
                0,
                format!("header declares {} trials, found {}", header.n_trials, trials.len()),
            ));
        }
        Ok(ExperimentPlan {
            trials,
            scheme: header.scheme,
            master_seed: header.master_seed,
            corpus_digest: header.corpus_digest,
        })
    }

    pub fn trials_for<'a>(&'a self, vacancy_id: &'a str) -> impl Iterator<Item = &'a Trial> + 'a {
        self.trials.iter().filter(move |t| t.vacancy_id == vacancy_id)
    }
}
