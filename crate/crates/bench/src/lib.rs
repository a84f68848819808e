//! Shared fixtures for the benchmarks.

use cv_audit_core::corpus::{generate_synthetic_corpus, CorpusConfig};
use cv_audit_core::prompting::{RefusalLexicon, DEFAULT_INSTRUCTION};
use cv_audit_core::provider::{run_plan, RunContext, SyntheticBackend};
use cv_audit_core::store::{join_observations, MemorySink};
use cv_audit_core::{build_plan, AnalysisTable, BiasModel, ProviderConfig, TemperatureScheme};

/// Scored table from the synthetic provider with the reference penalties.
pub fn reference_table(n_vacancies: usize, seed: u64) -> AnalysisTable {
    let corpus = generate_synthetic_corpus(&CorpusConfig::sampled(n_vacancies), seed).expect("corpus");
    let plan = build_plan(&corpus, &TemperatureScheme::default(), seed).expect("plan");
    let bias = BiasModel::reference();
    let backend = SyntheticBackend::new(bias.clone(), seed).expect("backend");
    let config = ProviderConfig::synthetic(bias, seed);
    let lexicon = RefusalLexicon::default();
    let ctx = RunContext {
        plan: &plan,
        corpus: &corpus,
        instruction: DEFAULT_INSTRUCTION,
        lexicon: &lexicon,
    };
    let mut sink = MemorySink::default();
    run_plan(&ctx, &backend, &config, &mut sink, None).expect("run");
    join_observations(sink.observations, &plan, &corpus, false).expect("join")
}
