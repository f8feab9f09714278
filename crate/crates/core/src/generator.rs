//! Seeded synthetic daily logs with known effects.
//!
//! Each day the factors are drawn from their occurrence processes, each vital
//! is `baseline + Σ β·indicator + N(0, noise_sd²)` clamped to the 1–10 scale,
//! and finally every cell is independently blanked with `missing_rate`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    Dataset, DatasetMeta, FactorId, Observation, PairKey, Schema, VitalId, VITAL_MAX, VITAL_MIN,
};
use crate::rng::stream;
use crate::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Occurrence process of a binary factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorProcess {
    /// Independent draws with one rate on weekdays and another on weekends.
    /// Day 1 is a Monday.
    WeekdayBernoulli {
        weekday_rate: f64,
        weekend_rate: f64,
    },
    /// Two-state Markov chain: `P(1 | yesterday 1) = stay_rate`,
    /// `P(1 | yesterday 0) = start_rate`. Day 1 uses the stationary rate.
    Markov { stay_rate: f64, start_rate: f64 },
    /// Independent daily draws.
    Bernoulli { rate: f64 },
    /// Calendar blocks of `block_days` are independently marked active with
    /// `block_rate`; days use `in_block_rate` inside active blocks and
    /// `out_block_rate` elsewhere.
    ClusteredBlocks {
        block_days: u32,
        block_rate: f64,
        in_block_rate: f64,
        out_block_rate: f64,
    },
}

impl FactorProcess {
    /// Long-run fraction of days with the factor present.
    pub fn marginal_rate(&self) -> f64 {
        match *self {
            FactorProcess::WeekdayBernoulli {
                weekday_rate,
                weekend_rate,
            } => (5.0 * weekday_rate + 2.0 * weekend_rate) / 7.0,
            FactorProcess::Markov {
                stay_rate,
                start_rate,
            } => start_rate / (1.0 - stay_rate + start_rate),
            FactorProcess::Bernoulli { rate } => rate,
            FactorProcess::ClusteredBlocks {
                block_rate,
                in_block_rate,
                out_block_rate,
                ..
            } => block_rate * in_block_rate + (1.0 - block_rate) * out_block_rate,
        }
    }

    fn validate(&self, name: &FactorId) -> Result<()> {
        let rates: Vec<f64> = match *self {
            FactorProcess::WeekdayBernoulli {
                weekday_rate,
                weekend_rate,
            } => vec![weekday_rate, weekend_rate],
            FactorProcess::Markov {
                stay_rate,
                start_rate,
            } => {
                if stay_rate == 1.0 && start_rate == 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "factor {name}: Markov chain has no stationary rate"
                    )));
                }
                vec![stay_rate, start_rate]
            }
            FactorProcess::Bernoulli { rate } => vec![rate],
            FactorProcess::ClusteredBlocks {
                block_days,
                block_rate,
                in_block_rate,
                out_block_rate,
            } => {
                if block_days == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "factor {name}: block_days must be >= 1"
                    )));
                }
                vec![block_rate, in_block_rate, out_block_rate]
            }
        };
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidConfig(format!(
                "factor {name}: rates must lie in [0, 1]"
            )));
        }
        Ok(())
    }
}

pub fn is_weekday(day: u32) -> bool {
    (day - 1) % 7 < 5
}

/// Draws the factor's value on `day` given the previous day's true value.
pub fn factor_process_step(
    process: &FactorProcess,
    seed: u64,
    factor: &FactorId,
    day: u32,
    prev: Option<bool>,
) -> bool {
    let rate = match *process {
        FactorProcess::WeekdayBernoulli {
            weekday_rate,
            weekend_rate,
        } => {
            if is_weekday(day) {
                weekday_rate
            } else {
                weekend_rate
            }
        }
        FactorProcess::Markov {
            stay_rate,
            start_rate,
        } => match prev {
            Some(true) => stay_rate,
            Some(false) => start_rate,
            None => process.marginal_rate(),
        },
        FactorProcess::Bernoulli { rate } => rate,
        FactorProcess::ClusteredBlocks {
            block_days,
            block_rate,
            in_block_rate,
            out_block_rate,
        } => {
            let block = (day - 1) / block_days;
            let active = stream(seed, "block", factor.as_str(), block).random::<f64>() < block_rate;
            if active {
                in_block_rate
            } else {
                out_block_rate
            }
        }
    };
    stream(seed, "factor", factor.as_str(), day).random::<f64>() < rate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VitalSpec {
    pub name: VitalId,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub name: FactorId,
    pub process: FactorProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectSpec {
    pub factor: FactorId,
    pub outcome: VitalId,
    pub beta: f64,
}

impl EffectSpec {
    pub fn pair(&self) -> PairKey {
        PairKey {
            factor: self.factor.clone(),
            outcome: self.outcome.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub schema_version: u32,
    pub span_days: u32,
    pub vitals: Vec<VitalSpec>,
    pub factors: Vec<FactorSpec>,
    pub effects: Vec<EffectSpec>,
    /// Pairs evaluated as known nulls (true effect zero).
    pub null_pairs: Vec<PairKey>,
    pub noise_sd: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

fn pair(factor: &str, outcome: &str) -> PairKey {
    PairKey::new(factor, outcome).expect("static names are non-empty")
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let vital = |name: &str, baseline: f64| VitalSpec {
            name: VitalId::new(name).unwrap(),
            baseline,
        };
        let factor = |name: &str, process: FactorProcess| FactorSpec {
            name: FactorId::new(name).unwrap(),
            process,
        };
        let effect = |f: &str, o: &str, beta: f64| EffectSpec {
            factor: FactorId::new(f).unwrap(),
            outcome: VitalId::new(o).unwrap(),
            beta,
        };
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            span_days: 90,
            vitals: vec![
                vital("mood", 6.0),
                vital("anxiety", 4.0),
                vital("energy", 6.0),
            ],
            factors: vec![
                factor(
                    "coffee",
                    FactorProcess::WeekdayBernoulli {
                        weekday_rate: 0.70,
                        weekend_rate: 0.35,
                    },
                ),
                factor(
                    "exercise",
                    FactorProcess::Markov {
                        stay_rate: 0.58,
                        start_rate: 0.28,
                    },
                ),
                factor("poor_sleep", FactorProcess::Bernoulli { rate: 0.30 }),
                factor(
                    "stress",
                    FactorProcess::ClusteredBlocks {
                        block_days: 7,
                        block_rate: 0.25,
                        in_block_rate: 0.75,
                        out_block_rate: 1.0 / 12.0,
                    },
                ),
            ],
            effects: vec![
                effect("coffee", "anxiety", 2.1),
                effect("poor_sleep", "energy", -2.5),
                effect("exercise", "mood", 1.8),
            ],
            null_pairs: vec![
                pair("stress", "mood"),
                pair("coffee", "energy"),
                pair("exercise", "anxiety"),
            ],
            noise_sd: 1.2,
            missing_rate: 0.10,
            seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn schema(&self) -> Result<Schema> {
        Schema::new(
            self.vitals.iter().map(|v| v.name.clone()).collect(),
            self.factors.iter().map(|f| f.name.clone()).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported generator schema_version {}",
                self.schema_version
            )));
        }
        if self.span_days == 0 {
            return Err(Error::InvalidConfig("span_days must be >= 1".into()));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return Err(Error::InvalidConfig("noise_sd must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidConfig(
                "missing_rate must lie in [0, 1)".into(),
            ));
        }
        let schema = self.schema()?;
        for v in &self.vitals {
            if !v.baseline.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "vital {}: baseline must be finite",
                    v.name
                )));
            }
        }
        for f in &self.factors {
            f.process.validate(&f.name)?;
        }
        let mut seen = Vec::new();
        for e in &self.effects {
            let p = e.pair();
            if !schema.contains_pair(&p) {
                return Err(Error::InvalidConfig(format!(
                    "effect {p} refers to unknown columns"
                )));
            }
            if !e.beta.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "effect {p}: beta must be finite"
                )));
            }
            if seen.contains(&p) {
                return Err(Error::InvalidConfig(format!("effect {p} listed twice")));
            }
            seen.push(p);
        }
        for p in &self.null_pairs {
            if !schema.contains_pair(p) {
                return Err(Error::InvalidConfig(format!(
                    "null pair {p} refers to unknown columns"
                )));
            }
            if seen.contains(p) {
                return Err(Error::InvalidConfig(format!(
                    "null pair {p} also has an effect"
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }

    pub fn ground_truth(&self) -> GroundTruthSpec {
        GroundTruthSpec {
            true_effects: self
                .effects
                .iter()
                .map(|e| TrueEffect {
                    factor: e.factor.clone(),
                    outcome: e.outcome.clone(),
                    beta: e.beta,
                })
                .collect(),
            null_pairs: self.null_pairs.clone(),
        }
    }
}

/// Hex SHA-256 over `serde_json::to_vec(value)`.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialise");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueEffect {
    pub factor: FactorId,
    pub outcome: VitalId,
    pub beta: f64,
}

impl TrueEffect {
    pub fn pair(&self) -> PairKey {
        PairKey {
            factor: self.factor.clone(),
            outcome: self.outcome.clone(),
        }
    }
}

/// Injected effects, the evaluation oracle for every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSpec {
    pub true_effects: Vec<TrueEffect>,
    pub null_pairs: Vec<PairKey>,
}

impl GroundTruthSpec {
    pub fn true_pairs(&self) -> Vec<PairKey> {
        self.true_effects.iter().map(TrueEffect::pair).collect()
    }

    /// True pairs followed by null pairs.
    pub fn all_pairs(&self) -> Vec<PairKey> {
        let mut pairs = self.true_pairs();
        pairs.extend(self.null_pairs.iter().cloned());
        pairs
    }

    pub fn beta(&self, pair: &PairKey) -> Option<f64> {
        if self.null_pairs.contains(pair) {
            return Some(0.0);
        }
        self.true_effects
            .iter()
            .find(|e| e.pair() == *pair)
            .map(|e| e.beta)
    }

    pub fn is_null(&self, pair: &PairKey) -> bool {
        self.null_pairs.contains(pair)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.null_pairs {
            if self.true_effects.iter().any(|e| e.pair() == *p) {
                return Err(Error::Validation(format!(
                    "pair {p} is both a true effect and a null"
                )));
            }
        }
        Ok(())
    }
}

pub fn save_ground_truth(spec: &GroundTruthSpec, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, spec)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthSpec> {
    let spec: GroundTruthSpec = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    spec.validate()?;
    Ok(spec)
}

/// Generates one dataset and its ground-truth manifest.
pub fn generate(config: &GeneratorConfig) -> Result<(Dataset, GroundTruthSpec)> {
    config.validate()?;
    let schema = config.schema()?;
    let seed = config.seed;
    // effect contributions indexed [vital][factor]
    let mut betas = vec![vec![0.0; config.factors.len()]; config.vitals.len()];
    for e in &config.effects {
        let v = schema.vital_index(&e.outcome).expect("validated");
        let f = schema.factor_index(&e.factor).expect("validated");
        betas[v][f] += e.beta;
    }

    let mut prev: Vec<Option<bool>> = vec![None; config.factors.len()];
    let mut observations = Vec::with_capacity(config.span_days as usize);
    for day in 1..=config.span_days {
        let truth: Vec<bool> = config
            .factors
            .iter()
            .zip(&prev)
            .map(|(f, &p)| factor_process_step(&f.process, seed, &f.name, day, p))
            .collect();
        let vitals: Vec<Option<f64>> = config
            .vitals
            .iter()
            .zip(&betas)
            .map(|(v, row)| {
                let effect: f64 = row
                    .iter()
                    .zip(&truth)
                    .filter(|(_, &x)| x)
                    .map(|(b, _)| b)
                    .sum();
                let z: f64 =
                    StandardNormal.sample(&mut stream(seed, "noise", v.name.as_str(), day));
                let value = (v.baseline + effect + config.noise_sd * z).clamp(VITAL_MIN, VITAL_MAX);
                (!is_missing(seed, v.name.as_str(), day, config.missing_rate)).then_some(value)
            })
            .collect();
        let factors: Vec<Option<bool>> = config
            .factors
            .iter()
            .zip(&truth)
            .map(|(f, &x)| {
                (!is_missing(seed, f.name.as_str(), day, config.missing_rate)).then_some(x)
            })
            .collect();
        prev = truth.into_iter().map(Some).collect();
        observations.push(Observation {
            day,
            vitals,
            factors,
        });
    }
    let dataset = Dataset::new(
        schema,
        observations,
        DatasetMeta {
            seed: Some(seed),
            config_fingerprint: Some(config.fingerprint()),
        },
    )?;
    Ok((dataset, config.ground_truth()))
}

fn is_missing(seed: u64, column: &str, day: u32, rate: f64) -> bool {
    rate > 0.0 && stream(seed, "missing", column, day).random::<f64>() < rate
}

/// Per-dataset randomisation of effect sizes and noise used for Monte Carlo
/// replication. Effect signs are kept; magnitudes are redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectVariation {
    pub beta_min: f64,
    pub beta_max: f64,
    pub noise_min: f64,
    pub noise_max: f64,
}

impl Default for EffectVariation {
    fn default() -> Self {
        Self {
            beta_min: 1.5,
            beta_max: 3.0,
            noise_min: 1.0,
            noise_max: 1.8,
        }
    }
}

impl EffectVariation {
    /// Copy of `base` with effect magnitudes and noise drawn from this
    /// variation's uniform ranges and the generator seed set to `seed`.
    pub fn apply(&self, base: &GeneratorConfig, seed: u64) -> GeneratorConfig {
        let mut config = base.clone();
        config.seed = seed;
        for e in &mut config.effects {
            let u: f64 = stream(seed, "variation-beta", &e.pair().to_string(), 0).random();
            let magnitude = self.beta_min + (self.beta_max - self.beta_min) * u;
            e.beta = magnitude.copysign(e.beta);
        }
        let u: f64 = stream(seed, "variation-noise", "", 0).random();
        config.noise_sd = self.noise_min + (self.noise_max - self.noise_min) * u;
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weekday_arithmetic() {
        let days: Vec<bool> = (1..=7).map(is_weekday).collect();
        assert_eq!(days, vec![true, true, true, true, true, false, false]);
        assert!(is_weekday(8));
    }

    #[test]
    fn default_marginals() {
        let c = GeneratorConfig::default();
        let rates: Vec<f64> = c
            .factors
            .iter()
            .map(|f| f.process.marginal_rate())
            .collect();
        for (got, want) in rates.iter().zip([0.60, 0.40, 0.30, 0.25]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let c = GeneratorConfig::default();
        let (a, _) = generate(&c).unwrap();
        let (b, _) = generate(&c).unwrap();
        assert_eq!(a, b);
        let mut other = c.clone();
        other.seed = 43;
        assert_ne!(generate(&other).unwrap().0, a);
    }

    #[test]
    fn noise_free_limit_is_deterministic_effect_sum() {
        let c = GeneratorConfig {
            noise_sd: 1e-9,
            missing_rate: 0.0,
            ..GeneratorConfig::default()
        };
        let (ds, _) = generate(&c).unwrap();
        let s = ds.schema();
        let anx = s.vital_index(&VitalId::new("anxiety").unwrap()).unwrap();
        let coffee = s.factor_index(&FactorId::new("coffee").unwrap()).unwrap();
        for o in ds.observations() {
            let expected = 4.0 + if o.factors[coffee].unwrap() { 2.1 } else { 0.0 };
            assert!((o.vitals[anx].unwrap() - expected).abs() < 1e-7);
        }
    }

    #[test]
    fn adding_a_factor_does_not_perturb_existing_streams() {
        let base = GeneratorConfig::default();
        let mut extended = base.clone();
        extended.factors.push(FactorSpec {
            name: FactorId::new("alcohol").unwrap(),
            process: FactorProcess::Bernoulli { rate: 0.2 },
        });
        let (a, _) = generate(&base).unwrap();
        let (b, _) = generate(&extended).unwrap();
        for (x, y) in a.observations().iter().zip(b.observations()) {
            assert_eq!(x.vitals, y.vitals);
            assert_eq!(&x.factors[..], &y.factors[..4]);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = GeneratorConfig {
            missing_rate: 1.0,
            ..GeneratorConfig::default()
        };
        assert!(generate(&c).is_err());
        let c = GeneratorConfig {
            noise_sd: 0.0,
            ..GeneratorConfig::default()
        };
        assert!(generate(&c).is_err());
        let c = GeneratorConfig {
            span_days: 0,
            ..GeneratorConfig::default()
        };
        assert!(generate(&c).is_err());
        let mut c = GeneratorConfig::default();
        c.null_pairs
            .push(PairKey::new("coffee", "anxiety").unwrap());
        assert!(generate(&c).is_err());
    }

    #[test]
    fn default_manifest_lists_true_and_null_pairs() {
        let truth = GeneratorConfig::default().ground_truth();
        assert_eq!(truth.true_effects.len(), 3);
        let nulls: Vec<String> = truth.null_pairs.iter().map(|p| p.to_string()).collect();
        assert_eq!(
            nulls,
            vec!["stress->mood", "coffee->energy", "exercise->anxiety"]
        );
        assert_eq!(
            truth.beta(&PairKey::new("poor_sleep", "energy").unwrap()),
            Some(-2.5)
        );
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let mut v = serde_json::to_value(GeneratorConfig::default()).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("noise".into(), serde_json::json!(1.0));
        assert!(serde_json::from_value::<GeneratorConfig>(v).is_err());
    }

    #[test]
    fn variation_keeps_signs_and_ranges() {
        let base = GeneratorConfig::default();
        let var = EffectVariation::default();
        for seed in 0..50 {
            let c = var.apply(&base, seed);
            for (e, b) in c.effects.iter().zip(&base.effects) {
                assert_eq!(e.beta.signum(), b.beta.signum());
                assert!((1.5..=3.0).contains(&e.beta.abs()));
            }
            assert!((1.0..=1.8).contains(&c.noise_sd));
        }
    }
}
