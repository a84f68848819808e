use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cv_audit_core::corpus::{generate_synthetic_corpus, load_corpus_dir, save_corpus, CorpusConfig};
use cv_audit_core::design::{build_plan, ExperimentPlan};
use cv_audit_core::prompting::{RefusalLexicon, DEFAULT_INSTRUCTION};
use cv_audit_core::provider::{run_plan, BackendConfig, RetryPolicy, RunContext};
use cv_audit_core::report::{build_report, ReportOptions};
use cv_audit_core::stats::{
    build_design, fit_ols, threshold_sweep, wild_cluster_bootstrap, AdjustMethod, BootstrapOptions,
    Family, ModelKind, ModelSpec, SweepOptions, TemperatureEncoding,
};
use cv_audit_core::store::{export_table, RunLog, RunManifest};
use cv_audit_core::{AnalysisTable, BiasModel, Corpus, ProviderConfig};

use crate::config::{parse_cutoffs, RunConfig};
use crate::{
    BiasPreset, Cli, Command, DesignArgs, EstimateArgs, ExportArgs, Inputs, ProviderKind, ReportArgs,
    RunArgs, SweepArgs, SynthArgs, TableInputs,
};

const DEFAULT_BOOT: usize = 2000;
const DEFAULT_REPORT_CUTOFF: u8 = 60;

pub fn dispatch(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::SynthCorpus(a) => synth_corpus(a, &cfg),
        Command::Design(a) => design(a, &cfg),
        Command::Run(a) => run(a, &cfg),
        Command::Export(a) => export(a, &cfg),
        Command::Estimate(a) => estimate(a, &cfg),
        Command::Sweep(a) => sweep(a, &cfg),
        Command::Report(a) => report(a, &cfg),
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("{flag} is required (pass the flag or set it in --config)"))
}

fn out_path(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    required(flag.or_else(|| cfg.paths.out.clone()), "--out")
}

fn seed(flag: Option<u64>, cfg: &RunConfig) -> Result<u64> {
    required(flag.or(cfg.seed), "--seed")
}

fn load_corpus(inputs: &Inputs, cfg: &RunConfig) -> Result<Corpus> {
    let dir = required(inputs.corpus.clone().or_else(|| cfg.paths.corpus.clone()), "--corpus")?;
    let names = inputs.names.clone().or_else(|| cfg.paths.names.clone());
    load_corpus_dir(&dir, names.as_deref())
        .with_context(|| format!("loading corpus from {}", dir.display()))
}

fn load_plan(inputs: &Inputs, cfg: &RunConfig) -> Result<(PathBuf, ExperimentPlan)> {
    let path = required(inputs.plan.clone().or_else(|| cfg.paths.plan.clone()), "--plan")?;
    let plan = ExperimentPlan::read_jsonl(&path)
        .with_context(|| format!("reading plan {}", path.display()))?;
    Ok((path, plan))
}

fn obs_path(inputs: &Inputs, cfg: &RunConfig) -> Result<PathBuf> {
    required(inputs.obs.clone().or_else(|| cfg.paths.obs.clone()), "--obs")
}

fn load_table(inputs: &TableInputs, cfg: &RunConfig) -> Result<AnalysisTable> {
    if let Some(path) = inputs.table.clone().or_else(|| cfg.paths.table.clone()) {
        return AnalysisTable::read_csv(&path)
            .with_context(|| format!("reading analysis table {}", path.display()));
    }
    let corpus = load_corpus(&inputs.inputs, cfg)?;
    let (plan_path, plan) = load_plan(&inputs.inputs, cfg)?;
    plan.verify_corpus(&corpus)
        .with_context(|| format!("plan {} does not match the corpus", plan_path.display()))?;
    let obs = obs_path(&inputs.inputs, cfg)?;
    export_table(&obs, &plan, &corpus, false)
        .with_context(|| format!("joining observations {}", obs.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth_corpus(a: SynthArgs, cfg: &RunConfig) -> Result<()> {
    let out = out_path(a.out, cfg)?;
    let seed = seed(a.seed, cfg)?;
    let mut config = match a.vacancies {
        Some(n) => CorpusConfig::sampled(n),
        None => CorpusConfig::default(),
    };
    if let Some(n) = a.names_per_cell {
        config.names_per_cell = n;
    }
    let corpus = generate_synthetic_corpus(&config, seed).context("generating synthetic corpus")?;
    save_corpus(&corpus, &out).with_context(|| format!("writing corpus to {}", out.display()))?;
    log::info!(
        "wrote {} vacancies, {} names to {} (digest {})",
        corpus.vacancies.len(),
        corpus.names.len(),
        out.display(),
        corpus.digest()
    );
    Ok(())
}

fn design(a: DesignArgs, cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(&a.inputs, cfg)?;
    let seed = seed(a.seed, cfg)?;
    let out = required(a.out.or_else(|| cfg.paths.plan.clone()), "--out")?;
    let scheme = cfg.scheme.clone().unwrap_or_default();
    let plan = build_plan(&corpus, &scheme, seed).context("building plan")?;
    plan.write_jsonl(&out).with_context(|| format!("writing plan {}", out.display()))?;
    log::info!("wrote {} trials to {} (digest {})", plan.trials.len(), out.display(), plan.digest());
    Ok(())
}

fn read_bias(path: &Path) -> Result<BiasModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let bias: BiasModel = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    bias.validate().with_context(|| format!("bias model {}", path.display()))?;
    Ok(bias)
}

/// Provider configuration from the config file, with flags applied on top.
fn provider_config(a: &RunArgs, cfg: &RunConfig) -> Result<ProviderConfig> {
    let base = cfg.provider.clone();
    let backend = match (a.provider, base.as_ref().map(|p| &p.backend)) {
        (None, None) => bail!("--provider is required (http, synthetic or replay)"),
        (Some(ProviderKind::Http), b) | (None, b @ Some(BackendConfig::Http { .. })) => {
            let (endpoint, model, key, timeout) = match b {
                Some(BackendConfig::Http {
                    endpoint,
                    model,
                    api_key_env,
                    timeout_secs,
                }) => (Some(endpoint.clone()), Some(model.clone()), api_key_env.clone(), *timeout_secs),
                _ => (None, None, None, 60),
            };
            BackendConfig::Http {
                endpoint: required(a.endpoint.clone().or(endpoint), "--endpoint")?,
                model: required(a.model.clone().or(model), "--model")?,
                api_key_env: a.api_key_env.clone().or(key),
                timeout_secs: timeout,
            }
        }
        (Some(ProviderKind::Synthetic), b) | (None, b @ Some(BackendConfig::Synthetic { .. })) => {
            let (bias, base_seed) = match b {
                Some(BackendConfig::Synthetic { bias, seed }) => (Some(bias.clone()), Some(*seed)),
                _ => (None, None),
            };
            let bias = match (&a.bias_file, a.bias) {
                (Some(path), _) => read_bias(path)?,
                (None, Some(BiasPreset::Reference)) => BiasModel::reference(),
                (None, Some(BiasPreset::Null)) => BiasModel::default(),
                (None, None) => bias.unwrap_or_default(),
            };
            BackendConfig::Synthetic {
                bias,
                seed: required(a.seed.or(base_seed).or(cfg.seed), "--seed")?,
            }
        }
        (Some(ProviderKind::Replay), b) | (None, b @ Some(BackendConfig::Replay { .. })) => {
            let log = match b {
                Some(BackendConfig::Replay { log }) => Some(log.clone()),
                _ => None,
            };
            BackendConfig::Replay {
                log: required(a.replay.clone().or(log), "--replay")?,
            }
        }
    };
    let mut config = ProviderConfig {
        backend,
        max_in_flight: base.as_ref().map_or(1, |b| b.max_in_flight),
        retry: base.as_ref().map_or_else(RetryPolicy::default, |b| b.retry.clone()),
        rate_limit: base.as_ref().and_then(|b| b.rate_limit),
    };
    if let Some(n) = a.max_in_flight {
        config.max_in_flight = n;
    }
    if a.rate_limit.is_some() {
        config.rate_limit = a.rate_limit;
    }
    config.validate().context("provider configuration")?;
    Ok(config)
}

fn run(a: RunArgs, cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(&a.inputs, cfg)?;
    let (plan_path, plan) = load_plan(&a.inputs, cfg)?;
    plan.verify_corpus(&corpus)
        .with_context(|| format!("plan {} does not match the corpus", plan_path.display()))?;
    let obs = obs_path(&a.inputs, cfg)?;
    let provider = provider_config(&a, cfg)?;
    let backend = provider.build_backend().context("starting provider")?;
    let manifest = RunManifest {
        plan_digest: plan.digest(),
        scheme: plan.header().scheme,
        config_digest: provider.digest(),
        model_id: backend.model_id(),
    };
    let mut log = RunLog::open_or_create(&obs, manifest)
        .with_context(|| format!("opening observation log {}", obs.display()))?;
    let mut attempts = match &a.attempts {
        Some(p) => Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .with_context(|| format!("opening attempts log {}", p.display()))?,
        ),
        None => None,
    };
    let lexicon = cfg.refusals.clone().unwrap_or_else(RefusalLexicon::default);
    let ctx = RunContext {
        plan: &plan,
        corpus: &corpus,
        instruction: cfg.instruction.as_deref().unwrap_or(DEFAULT_INSTRUCTION),
        lexicon: &lexicon,
    };
    let summary = run_plan(
        &ctx,
        backend.as_ref(),
        &provider,
        &mut log,
        attempts.as_mut().map(|f| f as &mut dyn Write),
    )
    .with_context(|| format!("run stopped; completed trials are kept in {}", obs.display()))?;
    log::info!(
        "{} skipped, {} attempted, {} scored, {} missing, {} requests",
        summary.skipped,
        summary.attempted,
        summary.scored,
        summary.missing.values().sum::<usize>(),
        summary.requests
    );
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn export(a: ExportArgs, cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(&a.inputs, cfg)?;
    let (_, plan) = load_plan(&a.inputs, cfg)?;
    let obs = obs_path(&a.inputs, cfg)?;
    let out = required(a.out.or_else(|| cfg.paths.table.clone()), "--out")?;
    let table = export_table(&obs, &plan, &corpus, a.complete_cases)
        .with_context(|| format!("joining observations {}", obs.display()))?;
    table.write_csv(&out).with_context(|| format!("writing {}", out.display()))?;
    log::info!("wrote {} rows to {}", table.len(), out.display());
    Ok(())
}

fn model_spec(a: &EstimateArgs, cfg: &RunConfig) -> Result<ModelSpec> {
    let kind = match &a.model {
        Some(m) => m.parse::<ModelKind>().map_err(|_| anyhow!("--model {m:?}: expected eq1 … eq5"))?,
        None => cfg.estimate.model.unwrap_or(ModelKind::Eq1),
    };
    let mut spec = ModelSpec::new(kind);
    spec.temperature = if a.continuous_temperature {
        TemperatureEncoding::Continuous
    } else {
        cfg.estimate.temperature.unwrap_or_default()
    };
    if let Some(by) = a.by.clone().or_else(|| cfg.estimate.by.clone()) {
        spec.by = by;
    }
    spec.references = cfg.estimate.references.clone();
    Ok(spec)
}

fn estimate(a: EstimateArgs, cfg: &RunConfig) -> Result<()> {
    let table = load_table(&a.inputs, cfg)?;
    let spec = model_spec(&a, cfg)?;
    let boot = a.boot.or(cfg.estimate.boot).unwrap_or(DEFAULT_BOOT);
    let adjust = match &a.adjust {
        Some(s) => s.parse::<AdjustMethod>().map_err(|e| anyhow!("--adjust: {e}"))?,
        None => cfg.estimate.adjust.unwrap_or(AdjustMethod::Holm),
    };
    let family = if a.all_slopes {
        Family::AllSlopes
    } else {
        cfg.estimate.family.unwrap_or_default()
    };
    let out = out_path(a.out.clone(), cfg)?;

    let design = build_design(&table, &spec).context("building design matrix")?;
    let mut fit = fit_ols(&design).context("fitting OLS")?;
    if boot > 0 {
        let seed = seed(a.seed, cfg)?;
        let b = wild_cluster_bootstrap(&fit, &design, &BootstrapOptions::new(boot, seed))
            .context("wild cluster bootstrap")?;
        fit.apply_bootstrap(&b);
    }
    fit.adjust(adjust, family)?;
    write_json(&out, &fit)?;

    println!("{:<44} {:>10} {:>9} {:>9} {:>9}", "term", "estimate", "se", "p", "p_adj");
    for label in fit.labels() {
        let adj = fit
            .p_adjusted
            .get(label)
            .map_or_else(|| "-".to_string(), |p| format!("{p:.4}"));
        println!(
            "{:<44} {:>10.4} {:>9.4} {:>9.4} {:>9}",
            label, fit.coefficients[label], fit.se[label], fit.p_raw[label], adj
        );
    }
    println!("n = {}, R² = {:.4}, adj. R² = {:.4}, AIC = {:.1}", fit.n, fit.r2, fit.r2_adj, fit.aic);
    log::info!("wrote {}", out.display());
    Ok(())
}

fn sweep_options(flag: Option<&String>, cfg: &RunConfig) -> Result<SweepOptions> {
    let (min_cutoff, max_cutoff) = match flag.or(cfg.sweep.cutoffs.as_ref()) {
        Some(s) => parse_cutoffs(s)?,
        None => (1, 100),
    };
    Ok(SweepOptions {
        min_cutoff,
        max_cutoff,
        temperature: cfg.estimate.temperature.unwrap_or_default(),
    })
}

fn sweep(a: SweepArgs, cfg: &RunConfig) -> Result<()> {
    let table = load_table(&a.inputs, cfg)?;
    let options = sweep_options(a.cutoffs.as_ref(), cfg)?;
    let out = out_path(a.out, cfg)?;
    let result = threshold_sweep(&table, &options).context("threshold sweep")?;
    result.write_csv(&out).with_context(|| format!("writing {}", out.display()))?;
    log::info!("wrote {} rows to {}", result.rows.len(), out.display());
    Ok(())
}

fn report(a: ReportArgs, cfg: &RunConfig) -> Result<()> {
    let table = load_table(&a.inputs, cfg)?;
    let replications = a.boot.or(cfg.estimate.boot).unwrap_or(DEFAULT_BOOT);
    let options = ReportOptions {
        cutoff: a.cutoff.or(cfg.report.cutoff).unwrap_or(DEFAULT_REPORT_CUTOFF),
        replications,
        seed: if replications > 0 { seed(a.seed, cfg)? } else { 0 },
        sweep: sweep_options(a.cutoffs.as_ref(), cfg)?,
    };
    let out = out_path(a.out, cfg)?;
    let report = build_report(&table, &options).context("building report")?;
    for path in report.write(&out)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

