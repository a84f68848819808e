//! Optional TOML or JSON run configuration. Command-line flags always win.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cv_audit_core::design::TemperatureScheme;
use cv_audit_core::prompting::RefusalLexicon;
use cv_audit_core::stats::{AdjustMethod, Family, ModelKind, TemperatureEncoding};
use cv_audit_core::ProviderConfig;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: Paths,
    pub seed: Option<u64>,
    pub provider: Option<ProviderConfig>,
    pub scheme: Option<TemperatureScheme>,
    /// Prompt instruction; the default screening instruction otherwise.
    pub instruction: Option<String>,
    pub refusals: Option<RefusalLexicon>,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub names: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub obs: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub model: Option<ModelKind>,
    pub boot: Option<usize>,
    pub adjust: Option<AdjustMethod>,
    pub family: Option<Family>,
    pub temperature: Option<TemperatureEncoding>,
    pub by: Option<Vec<String>>,
    #[serde(default)]
    pub references: BTreeMap<String, String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Inclusive range written as `A..B`.
    pub cutoffs: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub cutoff: Option<u8>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .with_context(|| format!("parsing JSON config {}", path.display())),
            Some("toml") | None => {
                toml::from_str(&text).with_context(|| format!("parsing TOML config {}", path.display()))
            }
            Some(other) => bail!("config {}: unsupported extension .{other} (use .toml or .json)", path.display()),
        }
    }
}

/// Parse `A..B` or `A..=B`, both inclusive, within 1..=100.
pub fn parse_cutoffs(s: &str) -> Result<(u8, u8)> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .with_context(|| format!("cutoffs {s:?}: expected A..B"))?;
    let a: u8 = a.trim().parse().with_context(|| format!("cutoffs {s:?}: bad lower bound"))?;
    let b: u8 = b.trim().parse().with_context(|| format!("cutoffs {s:?}: bad upper bound"))?;
    if a == 0 || b > 100 || a > b {
        bail!("cutoffs {s:?}: need 1 <= A <= B <= 100");
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_ranges() {
        assert_eq!(parse_cutoffs("1..100").unwrap(), (1, 100));
        assert_eq!(parse_cutoffs("40..=60").unwrap(), (40, 60));
        assert!(parse_cutoffs("0..10").is_err());
        assert!(parse_cutoffs("60..40").is_err());
        assert!(parse_cutoffs("5").is_err());
    }

    #[test]
    fn toml_and_json_configs() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("run.toml");
        std::fs::write(
            &t,
            r#"
seed = 7
[paths]
corpus = "corpus"
[estimate]
model = "eq2"
boot = 500
adjust = "bh"
[sweep]
cutoffs = "40..80"
[provider]
max_in_flight = 4
[provider.backend]
kind = "synthetic"
seed = 3
"#,
        )
        .unwrap();
        let c = RunConfig::load(&t).unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.estimate.model, Some(ModelKind::Eq2));
        assert_eq!(c.provider.unwrap().max_in_flight, 4);

        let j = dir.path().join("run.json");
        std::fs::write(&j, r#"{"seed": 1, "estimate": {"adjust": "holm"}}"#).unwrap();
        assert_eq!(RunConfig::load(&j).unwrap().estimate.adjust, Some(AdjustMethod::Holm));

        std::fs::write(&j, r#"{"sed": 1}"#).unwrap();
        assert!(RunConfig::load(&j).is_err());
    }
}
