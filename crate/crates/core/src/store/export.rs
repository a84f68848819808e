use std::collections::HashMap;
use std::path::Path;

use super::{Observation, RunLog, StoreError};
use crate::corpus::{Corpus, Language};
use crate::design::ExperimentPlan;
use crate::table::{AnalysisRow, AnalysisTable};

/// Join each logged observation with its vacancy covariates. Rows follow
/// plan order; with `complete_cases` unscored trials are dropped.
pub fn export_table(
    log: impl AsRef<Path>,
    plan: &ExperimentPlan,
    corpus: &Corpus,
    complete_cases: bool,
) -> Result<AnalysisTable, StoreError> {
    let (_, observations) = RunLog::read(log)?;
    join_observations(observations, plan, corpus, complete_cases)
}

/// The join behind [`export_table`], for observations already in memory.
pub fn join_observations(
    observations: Vec<Observation>,
    plan: &ExperimentPlan,
    corpus: &Corpus,
    complete_cases: bool,
) -> Result<AnalysisTable, StoreError> {
    let order: HashMap<&str, usize> = plan
        .trials
        .iter()
        .enumerate()
        .map(|(i, t)| (t.trial_id.as_str(), i))
        .collect();
    let vacancies = corpus.vacancy_index();

    let mut keyed = Vec::with_capacity(observations.len());
    for obs in observations {
        let &index = order
            .get(obs.trial_id.as_str())
            .ok_or_else(|| StoreError::UnknownTrial(obs.trial_id.clone()))?;
        if complete_cases && obs.score.is_none() {
            continue;
        }
        let v = vacancies
            .get(obs.vacancy_id.as_str())
            .ok_or_else(|| StoreError::UnknownVacancy(obs.vacancy_id.clone()))?;
        keyed.push((
            index,
            AnalysisRow {
                trial_id: obs.trial_id,
                vacancy_id: obs.vacancy_id,
                ethnicity: obs.ethnicity,
                gender: obs.gender,
                first: obs.first,
                last: obs.last,
                temperature: obs.temperature,
                score: obs.score,
                occupation: v.occupation.clone(),
                experience_req: v.experience_req,
                job_type: v.job_type,
                shift: v.shift,
                hours: v.hours,
                lang_dutch: v.language_level(Language::Dutch),
                lang_french: v.language_level(Language::French),
                lang_english: v.language_level(Language::English),
                location: v.location.clone(),
            },
        ));
    }
    keyed.sort_by_key(|(i, _)| *i);
    Ok(AnalysisTable::new(keyed.into_iter().map(|(_, r)| r).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::tiny_corpus;
    use crate::design::{build_plan, TemperatureScheme};
    use crate::store::{MissingReason, Observation, ObservationSink, RunManifest};

    fn observation(t: &crate::design::Trial, score: Option<u8>) -> Observation {
        Observation {
            trial_id: t.trial_id.clone(),
            vacancy_id: t.vacancy_id.clone(),
            ethnicity: t.ethnicity,
            gender: t.gender,
            first: t.name.first.clone(),
            last: t.name.last.clone(),
            temperature: t.temperature,
            score,
            missing_reason: score.is_none().then_some(MissingReason::Refusal),
            raw_response: None,
            prompt_digest: String::new(),
            model_id: "m".into(),
            timestamp: String::new(),
            attempt_count: 1,
        }
    }

    #[test]
    fn joins_covariates_and_filters() {
        let corpus = tiny_corpus();
        let plan = build_plan(&corpus, &TemperatureScheme::default(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.jsonl");
        let manifest = RunManifest {
            plan_digest: plan.digest(),
            scheme: plan.scheme.clone(),
            config_digest: String::new(),
            model_id: "m".into(),
        };
        let mut log = RunLog::open_or_create(&path, manifest).unwrap();
        // Write out of plan order with one refusal.
        for (i, t) in plan.trials.iter().enumerate().rev() {
            log.append(observation(t, if i == 3 { None } else { Some(60) })).unwrap();
        }
        drop(log);

        let all = export_table(&path, &plan, &corpus, false).unwrap();
        assert_eq!(all.len(), plan.trials.len());
        assert_eq!(all.rows[0].trial_id, plan.trials[0].trial_id);
        let v = &corpus.vacancies[0];
        assert_eq!(all.rows[0].occupation, v.occupation);
        assert_eq!(all.rows[0].lang_french, v.language_level(Language::French));
        let complete = export_table(&path, &plan, &corpus, true).unwrap();
        assert_eq!(complete.len(), plan.trials.len() - 1);
        assert_eq!(export_table(&path, &plan, &corpus, true).unwrap(), complete);
    }

    #[test]
    fn unknown_trial_is_reported() {
        let corpus = tiny_corpus();
        let plan = build_plan(&corpus, &TemperatureScheme::default(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.jsonl");
        let manifest = RunManifest {
            plan_digest: plan.digest(),
            scheme: plan.scheme.clone(),
            config_digest: String::new(),
            model_id: "m".into(),
        };
        let mut log = RunLog::open_or_create(&path, manifest).unwrap();
        let mut o = observation(&plan.trials[0], Some(50));
        o.trial_id = "ghost".into();
        log.append(o).unwrap();
        drop(log);
        assert!(matches!(
            export_table(&path, &plan, &corpus, false),
            Err(StoreError::UnknownTrial(id)) if id == "ghost"
        ));
    }
}
