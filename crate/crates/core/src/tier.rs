//! Daily confidence-tier classification of factor → outcome pairs.
//!
//! Each day the pair's posterior is rebuilt from all pair-complete rows up to
//! that day and classified top-down: correlation, pattern, clue, null.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::welch_t_test;
use crate::data::{Dataset, PairKey};
use crate::inference::{
    coefficient_marginal, credible_interval, kl_stability, posterior_predictive_coverage,
    posterior_update, prob_positive, CoefficientMarginal, PosteriorState, PriorConfig,
};
use crate::{Error, Result};

/// Confidence tier, ordered `Null < Clue < Pattern < Correlation`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Null,
    Clue,
    Pattern,
    Correlation,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Null, Tier::Clue, Tier::Pattern, Tier::Correlation];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Null => "null",
            Tier::Clue => "clue",
            Tier::Pattern => "pattern",
            Tier::Correlation => "correlation",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Tier::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown tier '{s}'")))
    }
}

/// One band of the adaptive p-value schedule, active from `from_day` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBand {
    pub from_day: u32,
    pub p_threshold: f64,
}

/// Design used for the per-day posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `[1, x_F]` on the pair-complete rows.
    #[default]
    Pairwise,
    /// `[1, x_1, …, x_K]` on days where the outcome and every factor are recorded.
    Multivariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub clue_mass: f64,
    pub pattern_mass: f64,
    pub ci_level: f64,
    /// Lag `w` of the stability comparison, in calendar days.
    pub kl_window_days: u32,
    /// Stability threshold in nats.
    pub kl_threshold: f64,
    pub adaptive_schedule: Vec<ScheduleBand>,
    pub ppc_gate_enabled: bool,
    pub ppc_min_coverage: f64,
    pub model: ModelKind,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let band = |from_day, p_threshold| ScheduleBand {
            from_day,
            p_threshold,
        };
        Self {
            clue_mass: 0.70,
            pattern_mass: 0.85,
            ci_level: 0.95,
            kl_window_days: 7,
            kl_threshold: 0.1,
            adaptive_schedule: vec![band(1, 0.30), band(8, 0.20), band(14, 0.15), band(30, 0.10)],
            ppc_gate_enabled: false,
            ppc_min_coverage: 0.90,
            model: ModelKind::Pairwise,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(0.5 < self.clue_mass && self.clue_mass < self.pattern_mass && self.pattern_mass < 1.0)
        {
            return bad("masses must satisfy 0.5 < clue_mass < pattern_mass < 1");
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad("ci_level must lie in (0, 1)");
        }
        if self.kl_window_days == 0 {
            return bad("kl_window_days must be >= 1");
        }
        if self.kl_threshold.is_nan() || self.kl_threshold <= 0.0 {
            return bad("kl_threshold must be positive");
        }
        if !(0.0..=1.0).contains(&self.ppc_min_coverage) {
            return bad("ppc_min_coverage must lie in [0, 1]");
        }
        let s = &self.adaptive_schedule;
        if s.is_empty() {
            return bad("adaptive_schedule is empty");
        }
        if s[0].from_day > 1 {
            return bad("adaptive_schedule must start at day 1");
        }
        for w in s.windows(2) {
            if w[1].from_day <= w[0].from_day {
                return bad("adaptive_schedule days must be strictly increasing");
            }
            if w[1].p_threshold > w[0].p_threshold {
                return bad("adaptive_schedule thresholds must be non-increasing");
            }
        }
        if s.iter().any(|b| !(0.0..=1.0).contains(&b.p_threshold)) {
            return bad("adaptive_schedule thresholds must lie in [0, 1]");
        }
        Ok(())
    }
}

/// p-value cutoff in force on `day`: the last band whose `from_day <= day`.
pub fn adaptive_threshold(day: u32, schedule: &[ScheduleBand]) -> Result<f64> {
    if schedule.is_empty() {
        return Err(Error::InvalidConfig("adaptive_schedule is empty".into()));
    }
    Ok(schedule
        .iter()
        .take_while(|b| b.from_day <= day)
        .last()
        .unwrap_or(&schedule[0])
        .p_threshold)
}

/// `max(P(β > 0), P(β < 0))` and whether the positive side wins ties.
pub fn directional_mass(marginal: &CoefficientMarginal) -> Result<(f64, bool)> {
    let pos = prob_positive(marginal)?;
    Ok(if pos >= 0.5 {
        (pos, true)
    } else {
        (1.0 - pos, false)
    })
}

/// Classifies one day. `coverage` is the in-sample predictive coverage used
/// only when the gate is enabled; a missing value then blocks correlation.
pub fn classify_tier_with_coverage(
    marginal: &CoefficientMarginal,
    lagged: Option<&CoefficientMarginal>,
    day: u32,
    p_value: f64,
    config: &EngineConfig,
    coverage: Option<f64>,
) -> Result<Tier> {
    let (lo, hi) = credible_interval(marginal, config.ci_level)?;
    let excludes_zero = lo > 0.0 || hi < 0.0;
    let gate_ok =
        !config.ppc_gate_enabled || coverage.is_some_and(|c| c >= config.ppc_min_coverage);
    if excludes_zero && p_value < adaptive_threshold(day, &config.adaptive_schedule)? && gate_ok {
        return Ok(Tier::Correlation);
    }
    let (mass, _) = directional_mass(marginal)?;
    if mass > config.pattern_mass {
        if let Some(lagged) = lagged {
            // undefined stability counts as unstable
            let stable = kl_stability(marginal, lagged).is_ok_and(|kl| kl < config.kl_threshold);
            if stable {
                return Ok(Tier::Pattern);
            }
        }
    }
    if mass > config.clue_mass {
        return Ok(Tier::Clue);
    }
    Ok(Tier::Null)
}

pub fn classify_tier(
    marginal: &CoefficientMarginal,
    lagged: Option<&CoefficientMarginal>,
    day: u32,
    p_value: f64,
    config: &EngineConfig,
) -> Result<Tier> {
    classify_tier_with_coverage(marginal, lagged, day, p_value, config, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierEntry {
    pub day: u32,
    pub tier: Tier,
    pub location: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `max(P(β > 0), P(β < 0))`.
    pub prob_dir: f64,
    /// True when the maximum is `P(β > 0)`.
    pub positive: bool,
    pub p_value: f64,
    /// KL against the marginal stored for day `t − w`; absent before day
    /// `w + 1` or when undefined.
    pub kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierTimeline {
    pub pair: PairKey,
    pub entries: Vec<TierEntry>,
}

impl TierTimeline {
    pub fn entry(&self, day: u32) -> Option<&TierEntry> {
        self.entries
            .binary_search_by_key(&day, |e| e.day)
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Highest tier on any day `<= day`.
    pub fn max_tier_through(&self, day: u32) -> Tier {
        self.entries
            .iter()
            .take_while(|e| e.day <= day)
            .map(|e| e.tier)
            .max()
            .unwrap_or(Tier::Null)
    }

    /// CSV `day,tier,location,ci_lo,ci_hi,prob_dir,p_value,kl`. `prob_dir` is
    /// signed: negative values mean the mass favours `β < 0`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "day", "tier", "location", "ci_lo", "ci_hi", "prob_dir", "p_value", "kl",
        ])?;
        for e in &self.entries {
            let signed = if e.positive { e.prob_dir } else { -e.prob_dir };
            w.write_record([
                e.day.to_string(),
                e.tier.to_string(),
                format!("{:?}", e.location),
                format!("{:?}", e.ci_lo),
                format!("{:?}", e.ci_hi),
                format!("{signed:?}"),
                format!("{:?}", e.p_value),
                e.kl.map(|k| format!("{k:?}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest day whose tier is at least `tier`.
pub fn first_attainment(timeline: &TierTimeline, tier: Tier) -> Option<u32> {
    timeline
        .entries
        .iter()
        .find(|e| e.tier >= tier)
        .map(|e| e.day)
}

/// Posterior of the effect coefficient for `pair` on data up to `day`, with
/// the rows it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFit {
    pub state: PosteriorState,
    pub effect_index: usize,
    pub design_rows: Vec<Vec<f64>>,
    /// Outcomes after centring.
    pub outcomes: Vec<f64>,
}

impl PairFit {
    pub fn marginal(&self) -> Result<CoefficientMarginal> {
        coefficient_marginal(&self.state, self.effect_index)
    }
}

/// Fits the day-`day` posterior. Outcomes are centred on the mean of the
/// fitted rows so the zero-mean intercept prior does not leak into the
/// effect coefficient.
pub fn fit_pair(
    dataset: &Dataset,
    pair: &PairKey,
    day: u32,
    prior: &PriorConfig,
    model: ModelKind,
) -> Result<PairFit> {
    let (design_rows, mut outcomes, effect_index): (Vec<Vec<f64>>, Vec<f64>, usize) = match model {
        ModelKind::Pairwise => {
            let rows = dataset.pair_rows(pair, day)?;
            (
                rows.iter()
                    .map(|&(x, _)| vec![1.0, f64::from(u8::from(x))])
                    .collect(),
                rows.iter().map(|&(_, y)| y).collect(),
                1,
            )
        }
        ModelKind::Multivariate => {
            let schema = dataset.schema();
            let f = schema
                .factor_index(&pair.factor)
                .ok_or_else(|| Error::UnknownPair {
                    factor: pair.factor.to_string(),
                    outcome: pair.outcome.to_string(),
                })?;
            let rows = dataset.complete_rows(&pair.outcome, day)?;
            (
                rows.iter()
                    .map(|(xs, _)| {
                        std::iter::once(1.0)
                            .chain(xs.iter().map(|&x| f64::from(u8::from(x))))
                            .collect()
                    })
                    .collect(),
                rows.iter().map(|(_, y)| *y).collect(),
                1 + f,
            )
        }
    };
    if !outcomes.is_empty() {
        let mean = outcomes.iter().sum::<f64>() / outcomes.len() as f64;
        outcomes.iter_mut().for_each(|y| *y -= mean);
    }
    let dim = match model {
        ModelKind::Pairwise => 2,
        ModelKind::Multivariate => 1 + dataset.schema().factors.len(),
    };
    let state = posterior_update(prior, dim, &design_rows, &outcomes)?;
    Ok(PairFit {
        state,
        effect_index,
        design_rows,
        outcomes,
    })
}

/// Classifies one pair on every day `1..=span`.
pub fn run_pair(
    dataset: &Dataset,
    pair: &PairKey,
    prior: &PriorConfig,
    config: &EngineConfig,
) -> Result<TierTimeline> {
    let span = dataset.span();
    let w = config.kl_window_days as usize;
    let mut marginals: Vec<CoefficientMarginal> = Vec::with_capacity(span as usize);
    let mut entries = Vec::with_capacity(span as usize);
    for day in 1..=span {
        let fit = fit_pair(dataset, pair, day, prior, config.model)?;
        let marginal = fit.marginal()?;
        let groups = dataset.pair_samples(pair, day)?;
        let p_value = welch_t_test(&groups.present, &groups.absent).p_value;
        // marginals[i] belongs to day i + 1
        let lagged = (day as usize > w).then(|| marginals[day as usize - 1 - w]);
        let coverage = if config.ppc_gate_enabled && fit.state.n_obs > 0 {
            Some(posterior_predictive_coverage(
                &fit.state,
                &fit.design_rows,
                &fit.outcomes,
                config.ci_level,
            )?)
        } else {
            None
        };
        let tier = classify_tier_with_coverage(
            &marginal,
            lagged.as_ref(),
            day,
            p_value,
            config,
            coverage,
        )?;
        let (ci_lo, ci_hi) = credible_interval(&marginal, config.ci_level)?;
        let (prob_dir, positive) = directional_mass(&marginal)?;
        entries.push(TierEntry {
            day,
            tier,
            location: marginal.location,
            ci_lo,
            ci_hi,
            prob_dir,
            positive,
            p_value,
            kl: lagged.and_then(|l| kl_stability(&marginal, &l).ok()),
        });
        marginals.push(marginal);
    }
    Ok(TierTimeline {
        pair: pair.clone(),
        entries,
    })
}

/// Runs the engine for each pair over the dataset's full span.
pub fn run_engine(
    dataset: &Dataset,
    pairs: &[PairKey],
    prior: &PriorConfig,
    config: &EngineConfig,
) -> Result<BTreeMap<PairKey, TierTimeline>> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("no pairs to analyse".into()));
    }
    prior.validate()?;
    config.validate()?;
    pairs
        .iter()
        .map(|p| Ok((p.clone(), run_pair(dataset, p, prior, config)?)))
        .collect()
}
