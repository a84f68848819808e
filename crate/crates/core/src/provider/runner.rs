use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ProviderConfig, ProviderError, ScoreRequest};
use crate::corpus::{Corpus, CvTemplate, Vacancy};
use crate::design::{ExperimentPlan, Trial};
use crate::prompting::{parse_score_with, render_prompt, RefusalLexicon, ScoreParseOutcome};
use crate::store::{MissingReason, Observation, ObservationSink, StoreError};

/// Everything the run loop needs besides the backend and the sink.
pub struct RunContext<'a> {
    pub plan: &'a ExperimentPlan,
    pub corpus: &'a Corpus,
    pub instruction: &'a str,
    pub lexicon: &'a RefusalLexicon,
}

/// One request, as written to the attempts log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub trial_id: String,
    pub attempt: u32,
    /// `response`, `transient` or `fatal`.
    pub outcome: String,
    pub latency_ms: u64,
    #[serde(default)]
    pub raw: Option<String>,
    #[serde(default)]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub skipped: usize,
    pub attempted: usize,
    pub scored: usize,
    pub missing: BTreeMap<MissingReason, usize>,
    pub requests: usize,
}

struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(rate: Option<f64>) -> Self {
        RateLimiter {
            interval: rate.map_or(Duration::ZERO, |r| Duration::from_secs_f64(1.0 / r)),
            next: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

type TrialResult = Result<(Observation, Vec<AttemptRecord>), ProviderError>;

/// Execute every plan trial not yet in `sink`. Workers run concurrently
/// (`max_in_flight`), but observations are appended in plan order by this
/// thread alone. A fatal backend error stops new requests; everything
/// completed before it in plan order is kept, so the run can resume.
pub fn run_plan(
    ctx: &RunContext<'_>,
    backend: &dyn Backend,
    config: &ProviderConfig,
    sink: &mut dyn ObservationSink,
    mut attempts_log: Option<&mut dyn Write>,
) -> Result<RunSummary, ProviderError> {
    config.validate()?;
    let done = sink.completed();
    let pending: Vec<&Trial> = ctx
        .plan
        .trials
        .iter()
        .filter(|t| !done.contains(&t.trial_id))
        .collect();
    let mut summary = RunSummary {
        skipped: ctx.plan.trials.len() - pending.len(),
        ..RunSummary::default()
    };
    if pending.is_empty() {
        return Ok(summary);
    }

    let index = CorpusIndex {
        vacancies: ctx.corpus.vacancy_index(),
        cvs: ctx.corpus.cv_index(),
    };
    let limiter = RateLimiter::new(config.rate_limit);
    let abort = AtomicBool::new(false);
    let (job_tx, job_rx) = crossbeam_channel::unbounded::<usize>();
    for i in 0..pending.len() {
        job_tx.send(i).expect("receiver alive");
    }
    drop(job_tx);
    let (res_tx, res_rx) = crossbeam_channel::unbounded::<(usize, TrialResult)>();
    let workers = config.max_in_flight.min(pending.len());

    let mut first_error: Option<ProviderError> = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let job_rx = job_rx.clone();
            let res_tx = res_tx.clone();
            let (pending, limiter, abort, index) = (&pending, &limiter, &abort, &index);
            scope.spawn(move || {
                for i in job_rx.iter() {
                    if abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let result = run_trial(ctx, index, backend, config, limiter, abort, pending[i]);
                    if result.is_err() {
                        abort.store(true, Ordering::SeqCst);
                    }
                    if res_tx.send((i, result)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(res_tx);

        let mut buffer: HashMap<usize, TrialResult> = HashMap::new();
        let mut next = 0usize;
        for (i, result) in res_rx.iter() {
            buffer.insert(i, result);
            while first_error.is_none() {
                let Some(result) = buffer.remove(&next) else { break };
                next += 1;
                match result.and_then(|(obs, attempts)| {
                    write_attempts(&mut attempts_log, &attempts)?;
                    summary.requests += attempts.len();
                    summary.attempted += 1;
                    match obs.missing_reason {
                        Some(reason) => *summary.missing.entry(reason).or_default() += 1,
                        None => summary.scored += 1,
                    }
                    sink.append(obs).map_err(ProviderError::from)
                }) {
                    Ok(()) => {}
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        first_error = Some(e);
                    }
                }
            }
        }
    });
    match first_error {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

fn write_attempts(
    log: &mut Option<&mut dyn Write>,
    attempts: &[AttemptRecord],
) -> Result<(), ProviderError> {
    if let Some(w) = log.as_mut() {
        for a in attempts {
            let mut line = serde_json::to_vec(a).expect("attempt serializes");
            line.push(b'\n');
            w.write_all(&line).map_err(|source| StoreError::Io {
                path: "attempts log".into(),
                source,
            })?;
        }
    }
    Ok(())
}

struct CorpusIndex<'a> {
    vacancies: HashMap<&'a str, &'a Vacancy>,
    cvs: HashMap<&'a str, &'a CvTemplate>,
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    ctx: &RunContext<'_>,
    index: &CorpusIndex<'_>,
    backend: &dyn Backend,
    config: &ProviderConfig,
    limiter: &RateLimiter,
    abort: &AtomicBool,
    trial: &Trial,
) -> TrialResult {
    let fatal = |message: String| ProviderError::Fatal {
        trial_id: trial.trial_id.clone(),
        message,
    };
    let vacancy = *index
        .vacancies
        .get(trial.vacancy_id.as_str())
        .ok_or_else(|| fatal(format!("vacancy {} missing from corpus", trial.vacancy_id)))?;
    let cv = *index
        .cvs
        .get(trial.vacancy_id.as_str())
        .ok_or_else(|| fatal(format!("no CV for vacancy {}", trial.vacancy_id)))?;
    let prompt = render_prompt(trial, vacancy, cv, ctx.instruction)?;

    let mut attempts = Vec::new();
    let mut raw_response = None;
    let mut outcome: Result<u8, MissingReason> = Err(MissingReason::TransportFailure);
    for attempt in 1..=config.retry.max_attempts {
        if abort.load(Ordering::SeqCst) {
            return Err(fatal("run aborted".into()));
        }
        limiter.acquire();
        let started = Instant::now();
        let response = backend.score(&ScoreRequest {
            trial,
            vacancy,
            prompt: &prompt,
            attempt,
        });
        let mut record = AttemptRecord {
            trial_id: trial.trial_id.clone(),
            attempt,
            outcome: String::new(),
            latency_ms: started.elapsed().as_millis() as u64,
            raw: None,
            detail: None,
        };
        match response {
            Ok(raw) => {
                let parsed = parse_score_with(&raw, ctx.lexicon);
                record.outcome = "response".into();
                record.raw = Some(raw.clone());
                raw_response = Some(raw);
                attempts.push(record);
                match parsed {
                    ScoreParseOutcome::Score(s) => {
                        outcome = Ok(s);
                        break;
                    }
                    ScoreParseOutcome::Failure { kind, .. } => {
                        outcome = Err(kind.into());
                        if !kind.is_retryable() {
                            break;
                        }
                    }
                }
            }
            Err(BackendError::Transient(detail)) => {
                log::debug!("{} attempt {attempt}: {detail}", trial.trial_id);
                record.outcome = "transient".into();
                record.detail = Some(detail);
                attempts.push(record);
                raw_response = None;
                outcome = Err(MissingReason::TransportFailure);
                if attempt < config.retry.max_attempts {
                    std::thread::sleep(config.retry.backoff(attempt));
                }
            }
            Err(BackendError::Fatal(detail)) => {
                return Err(fatal(detail));
            }
        }
    }

    let (model_id, timestamp, attempt_count) = match backend.provenance(trial) {
        Some(p) => (p.model_id, p.timestamp, p.attempt_count),
        None => (
            backend.model_id(),
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            attempts.len() as u32,
        ),
    };
    let obs = Observation {
        trial_id: trial.trial_id.clone(),
        vacancy_id: trial.vacancy_id.clone(),
        ethnicity: trial.ethnicity,
        gender: trial.gender,
        first: trial.name.first.clone(),
        last: trial.name.last.clone(),
        temperature: trial.temperature,
        score: outcome.ok(),
        missing_reason: outcome.err(),
        raw_response,
        prompt_digest: prompt.digest,
        model_id,
        timestamp,
        attempt_count,
    };
    Ok((obs, attempts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::tiny_corpus;
    use crate::corpus::{generate_synthetic_corpus, CorpusConfig};
    use crate::design::{build_plan, TemperatureScheme};
    use crate::identity::{Ethnicity, Gender};
    use crate::prompting::DEFAULT_INSTRUCTION;
    use crate::provider::{BiasModel, ReplayBackend, RetryPolicy, SyntheticBackend};
    use crate::store::{MemorySink, RunLog, RunManifest};
    use std::collections::HashSet;
    use std::sync::atomic::AtomicUsize;

    fn fast(config: ProviderConfig) -> ProviderConfig {
        ProviderConfig {
            retry: RetryPolicy {
                max_attempts: 3,
                backoff_ms: vec![0],
            },
            ..config
        }
    }

    /// Replies from a script keyed by attempt number; counts calls per trial.
    struct Scripted {
        script: Vec<Result<String, BackendError>>,
        calls: Mutex<Vec<String>>,
        in_flight: AtomicUsize,
        peak: AtomicUsize,
        fail_after: Option<usize>,
    }

    impl Scripted {
        fn new(script: Vec<Result<String, BackendError>>) -> Self {
            Scripted {
                script,
                calls: Mutex::new(Vec::new()),
                in_flight: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
                fail_after: None,
            }
        }
    }

    impl Backend for Scripted {
        fn model_id(&self) -> String {
            "scripted".into()
        }
        fn score(&self, r: &ScoreRequest<'_>) -> Result<String, BackendError> {
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(2));
            let n = {
                let mut calls = self.calls.lock().unwrap();
                calls.push(r.trial.trial_id.clone());
                calls.len()
            };
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            if self.fail_after.is_some_and(|k| n > k) {
                return Err(BackendError::Fatal("401".into()));
            }
            let i = (r.attempt as usize - 1).min(self.script.len() - 1);
            self.script[i].clone()
        }
    }

    fn ctx<'a>(plan: &'a ExperimentPlan, corpus: &'a Corpus, lex: &'a RefusalLexicon) -> RunContext<'a> {
        RunContext {
            plan,
            corpus,
            instruction: DEFAULT_INSTRUCTION,
            lexicon: lex,
        }
    }

    fn setup() -> (Corpus, ExperimentPlan, RefusalLexicon) {
        let corpus = tiny_corpus();
        let plan = build_plan(&corpus, &TemperatureScheme::default(), 11).unwrap();
        (corpus, plan, RefusalLexicon::default())
    }

    #[test]
    fn retries_unparseable_then_scores() {
        let (corpus, plan, lex) = setup();
        let backend = Scripted::new(vec![
            Err(BackendError::Transient("timeout".into())),
            Ok("somewhere between 60 and 70".into()),
            Ok("65".into()),
        ]);
        let config = fast(ProviderConfig::synthetic(BiasModel::default(), 0));
        let mut sink = MemorySink::default();
        let mut log = Vec::new();
        let summary =
            run_plan(&ctx(&plan, &corpus, &lex), &backend, &config, &mut sink, Some(&mut log)).unwrap();
        assert_eq!(summary.scored, plan.trials.len());
        assert_eq!(summary.requests, 3 * plan.trials.len());
        assert!(sink.observations.iter().all(|o| o.score == Some(65) && o.attempt_count == 3));
        let lines: Vec<AttemptRecord> = String::from_utf8(log)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3 * plan.trials.len());
        assert_eq!(lines[0].outcome, "transient");
    }

    #[test]
    fn budget_exhaustion_records_missing() {
        let (corpus, plan, lex) = setup();
        let config = fast(ProviderConfig::synthetic(BiasModel::default(), 0));
        let transport = Scripted::new(vec![Err(BackendError::Transient("503".into()))]);
        let mut sink = MemorySink::default();
        run_plan(&ctx(&plan, &corpus, &lex), &transport, &config, &mut sink, None).unwrap();
        assert!(sink.observations.iter().all(|o| {
            o.missing_reason == Some(MissingReason::TransportFailure) && o.raw_response.is_none()
        }));

        let refusing = Scripted::new(vec![Ok("I cannot discriminate against candidates".into())]);
        let mut sink = MemorySink::default();
        let summary =
            run_plan(&ctx(&plan, &corpus, &lex), &refusing, &config, &mut sink, None).unwrap();
        assert_eq!(summary.requests, plan.trials.len(), "refusals are not retried");
        assert!(sink.observations.iter().all(|o| o.missing_reason == Some(MissingReason::Refusal)));
    }

    #[test]
    fn concurrency_bound_and_plan_order() {
        let (corpus, plan, lex) = setup();
        let backend = Scripted::new(vec![Ok("50".into())]);
        let mut config = fast(ProviderConfig::synthetic(BiasModel::default(), 0));
        config.max_in_flight = 4;
        let mut sink = MemorySink::default();
        run_plan(&ctx(&plan, &corpus, &lex), &backend, &config, &mut sink, None).unwrap();
        assert!(backend.peak.load(Ordering::SeqCst) <= 4);
        let ids: Vec<_> = sink.observations.iter().map(|o| o.trial_id.clone()).collect();
        let expected: Vec<_> = plan.trials.iter().map(|t| t.trial_id.clone()).collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn rate_limit_spaces_requests() {
        let (corpus, mut plan, lex) = setup();
        plan.trials.truncate(6);
        let backend = Scripted::new(vec![Ok("50".into())]);
        let mut config = fast(ProviderConfig::synthetic(BiasModel::default(), 0));
        config.max_in_flight = 3;
        config.rate_limit = Some(50.0);
        let started = Instant::now();
        run_plan(&ctx(&plan, &corpus, &lex), &backend, &config, &mut MemorySink::default(), None)
            .unwrap();
        // Six requests at 50/s need at least five 20 ms gaps.
        assert!(started.elapsed() >= Duration::from_millis(100));
    }

    #[test]
    fn fatal_error_aborts_and_resume_runs_only_the_rest() {
        let (corpus, plan, lex) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.jsonl");
        let manifest = RunManifest {
            plan_digest: plan.digest(),
            scheme: plan.scheme.clone(),
            config_digest: "c".into(),
            model_id: "scripted".into(),
        };
        let mut config = fast(ProviderConfig::synthetic(BiasModel::default(), 0));
        config.max_in_flight = 3;

        let mut failing = Scripted::new(vec![Ok("55".into())]);
        failing.fail_after = Some(10);
        let mut log = RunLog::open_or_create(&path, manifest.clone()).unwrap();
        let err = run_plan(&ctx(&plan, &corpus, &lex), &failing, &config, &mut log, None).unwrap_err();
        assert!(matches!(err, ProviderError::Fatal { .. }));
        drop(log);
        let logged: HashSet<String> =
            RunLog::read(&path).unwrap().1.into_iter().map(|o| o.trial_id).collect();
        assert!(!logged.is_empty() && logged.len() < plan.trials.len());

        let healthy = Scripted::new(vec![Ok("55".into())]);
        let mut log = RunLog::open_or_create(&path, manifest).unwrap();
        let summary = run_plan(&ctx(&plan, &corpus, &lex), &healthy, &config, &mut log, None).unwrap();
        assert_eq!(summary.skipped, logged.len());
        let called: HashSet<String> = healthy.calls.lock().unwrap().iter().cloned().collect();
        let all: HashSet<String> = plan.trials.iter().map(|t| t.trial_id.clone()).collect();
        assert_eq!(called, all.difference(&logged).cloned().collect());
        assert_eq!(healthy.calls.lock().unwrap().len(), called.len());
        assert_eq!(log.len(), plan.trials.len());
    }

    fn strip_time(mut obs: Vec<Observation>) -> Vec<Observation> {
        for o in &mut obs {
            o.timestamp.clear();
        }
        obs
    }

    #[test]
    fn synthetic_results_independent_of_scheduling() {
        let corpus = generate_synthetic_corpus(&CorpusConfig::sampled(6), 2).unwrap();
        let plan = build_plan(&corpus, &TemperatureScheme::default(), 3).unwrap();
        let lex = RefusalLexicon::default();
        let backend = SyntheticBackend::new(BiasModel::reference(), 99).unwrap();
        let mut serial = MemorySink::default();
        let mut parallel = MemorySink::default();
        let mut config = ProviderConfig::synthetic(BiasModel::reference(), 99);
        run_plan(&ctx(&plan, &corpus, &lex), &backend, &config, &mut serial, None).unwrap();
        config.max_in_flight = 8;
        run_plan(&ctx(&plan, &corpus, &lex), &backend, &config, &mut parallel, None).unwrap();
        assert_eq!(strip_time(serial.observations), strip_time(parallel.observations));
    }

    #[test]
    fn replay_reproduces_log_bytes() {
        let corpus = generate_synthetic_corpus(&CorpusConfig::sampled(4), 2).unwrap();
        let plan = build_plan(&corpus, &TemperatureScheme::default(), 3).unwrap();
        let lex = RefusalLexicon::default();
        let dir = tempfile::tempdir().unwrap();
        let manifest = RunManifest {
            plan_digest: plan.digest(),
            scheme: plan.scheme.clone(),
            config_digest: "c".into(),
            model_id: "synthetic".into(),
        };
        let first = dir.path().join("a.jsonl");
        let mut config = fast(ProviderConfig::synthetic(BiasModel::reference(), 5));
        config.max_in_flight = 2;
        // Mix in refusals and transport failures so every outcome is replayed.
        let flaky = Scripted::new(vec![
            Err(BackendError::Transient("reset".into())),
            Ok("I cannot assess this".into()),
        ]);
        let synthetic = SyntheticBackend::new(BiasModel::reference(), 5).unwrap();
        let mut log = RunLog::open_or_create(&first, manifest.clone()).unwrap();
        let half = ExperimentPlan {
            trials: plan.trials[..36].to_vec(),
            ..plan.clone()
        };
        run_plan(&ctx(&half, &corpus, &lex), &synthetic, &config, &mut log, None).unwrap();
        config.retry.max_attempts = 1;
        let quarter = ExperimentPlan {
            trials: plan.trials[..54].to_vec(),
            ..plan.clone()
        };
        run_plan(&ctx(&quarter, &corpus, &lex), &flaky, &config, &mut log, None).unwrap();
        config.retry.max_attempts = 2;
        run_plan(&ctx(&plan, &corpus, &lex), &flaky, &config, &mut log, None).unwrap();
        drop(log);

        let second = dir.path().join("b.jsonl");
        let replay = ReplayBackend::open(&first).unwrap();
        let mut log = RunLog::open_or_create(&second, manifest).unwrap();
        config.retry.max_attempts = 3;
        run_plan(&ctx(&plan, &corpus, &lex), &replay, &config, &mut log, None).unwrap();
        drop(log);
        let body = |p: &std::path::Path| -> Vec<String> {
            std::fs::read_to_string(p).unwrap().lines().skip(1).map(String::from).collect()
        };
        let (a, b) = (body(&first), body(&second));
        assert_eq!(a.len(), plan.trials.len());
        assert_eq!(a, b);
    }

    #[test]
    fn null_model_group_means_match_base() {
        let mut config = CorpusConfig::sampled(10_000);
        config.names_per_cell = 2;
        let corpus = generate_synthetic_corpus(&config, 8).unwrap();
        let plan = build_plan(&corpus, &TemperatureScheme::default(), 8).unwrap();
        let lex = RefusalLexicon::default();
        let model = BiasModel::default();
        let backend = SyntheticBackend::new(model.clone(), 8).unwrap();
        let mut sink = MemorySink::default();
        let mut pc = ProviderConfig::synthetic(model.clone(), 8);
        pc.max_in_flight = 1;
        run_plan(&ctx(&plan, &corpus, &lex), &backend, &pc, &mut sink, None).unwrap();
        let mut cells: BTreeMap<(Ethnicity, Gender), (f64, usize)> = BTreeMap::new();
        for o in &sink.observations {
            let e = cells.entry((o.ethnicity, o.gender)).or_default();
            e.0 += o.score.unwrap() as f64;
            e.1 += 1;
        }
        assert_eq!(cells.len(), 18);
        for ((e, g), (sum, n)) in cells {
            assert_eq!(n, 10_000);
            let mean = sum / n as f64;
            assert!((mean - model.base_mean()).abs() < 0.3, "{e}×{g}: {mean}");
        }
    }
}
