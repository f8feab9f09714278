//! Run configuration files.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use nof1_core::baselines::BaselineConfig;
use nof1_core::generator::{EffectVariation, GeneratorConfig};
use nof1_core::harness::HarnessOptions;
use nof1_core::inference::PriorConfig;
use nof1_core::scoring::{ValenceEntry, ValenceMap};
use nof1_core::tier::EngineConfig;
use serde::{Deserialize, Serialize};

pub const RUN_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub grid: BTreeMap<String, Vec<f64>>,
    pub n_datasets: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            grid: BTreeMap::from([("kl_threshold".to_string(), vec![0.05, 0.1, 0.2])]),
            n_datasets: 20,
        }
    }
}

/// Settings for `replay` and `experiment`. Every section is optional and
/// falls back to its defaults; `schema_version` is mandatory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub harness: HarnessOptions,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub variation: EffectVariation,
    #[serde(default = "default_n_datasets")]
    pub n_datasets: usize,
    #[serde(default)]
    pub sweep: SweepSection,
    /// Expected effect directions; the bundled map when absent.
    #[serde(default)]
    pub valence: Option<Vec<ValenceEntry>>,
}

fn default_n_datasets() -> usize {
    100
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: RUN_CONFIG_VERSION,
            prior: PriorConfig::default(),
            engine: EngineConfig::default(),
            harness: HarnessOptions::default(),
            generator: GeneratorConfig::default(),
            variation: EffectVariation::default(),
            n_datasets: default_n_datasets(),
            sweep: SweepSection::default(),
            valence: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema_version != RUN_CONFIG_VERSION {
            bail!(
                "unsupported run config schema_version {}",
                self.schema_version
            );
        }
        self.prior.validate()?;
        self.engine.validate()?;
        self.generator.validate()?;
        let BaselineConfig {
            fixed_alpha,
            naive_alpha,
            ..
        } = self.harness.baselines;
        if !(0.0..=1.0).contains(&fixed_alpha) || !(0.0..=1.0).contains(&naive_alpha) {
            bail!("baseline alphas must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn valence_map(&self) -> anyhow::Result<ValenceMap> {
        Ok(match &self.valence {
            Some(entries) => ValenceMap::new(entries.clone())?,
            None => ValenceMap::default_bundle(),
        })
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_run_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let config = match path {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

pub fn load_generator_config(path: Option<&Path>) -> anyhow::Result<GeneratorConfig> {
    let config = match path {
        Some(p) => read_json(p)?,
        None => GeneratorConfig::default(),
    };
    config.validate()?;
    Ok(config)
}
