//! Plausibility scores, confounder flags and insight assembly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FactorId, PairKey, VitalId};
use crate::inference::PriorConfig;
use crate::tier::{fit_pair, ModelKind, Tier, TierTimeline};
use crate::{Error, Result};

pub const PSI_FLOOR: f64 = 0.1;
pub const PSI_CEILING: f64 = 0.95;
pub const REVIEW_THRESHOLD: f64 = 0.60;
pub const CONFOUNDER_PENALTY: f64 = 0.75;
pub const COOCCURRENCE_THRESHOLD: f64 = 0.60;
pub const DOMINANCE_RATIO: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpectedSign {
    Positive,
    Negative,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValenceEntry {
    pub factor: FactorId,
    pub outcome: VitalId,
    pub expected_sign: ExpectedSign,
}

/// Expected effect direction per pair. Pairs not listed are `Unknown`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValenceMap {
    signs: BTreeMap<PairKey, ExpectedSign>,
}

impl ValenceMap {
    pub fn new(entries: Vec<ValenceEntry>) -> Result<Self> {
        let mut signs = BTreeMap::new();
        for e in entries {
            let pair = PairKey {
                factor: e.factor,
                outcome: e.outcome,
            };
            if signs.insert(pair.clone(), e.expected_sign).is_some() {
                return Err(Error::Validation(format!(
                    "valence for {pair} listed twice"
                )));
            }
        }
        Ok(Self { signs })
    }

    /// Bundled expectations for the default synthetic roster.
    pub fn default_bundle() -> Self {
        let entry = |f: &str, o: &str, s| ValenceEntry {
            factor: FactorId::new(f).unwrap(),
            outcome: VitalId::new(o).unwrap(),
            expected_sign: s,
        };
        Self::new(vec![
            entry("exercise", "mood", ExpectedSign::Positive),
            entry("coffee", "anxiety", ExpectedSign::Positive),
            entry("poor_sleep", "energy", ExpectedSign::Negative),
            entry("stress", "mood", ExpectedSign::Negative),
        ])
        .expect("bundle has unique pairs")
    }

    pub fn expected(&self, pair: &PairKey) -> ExpectedSign {
        self.signs
            .get(pair)
            .copied()
            .unwrap_or(ExpectedSign::Unknown)
    }

    pub fn entries(&self) -> Vec<ValenceEntry> {
        self.signs
            .iter()
            .map(|(p, &s)| ValenceEntry {
                factor: p.factor.clone(),
                outcome: p.outcome.clone(),
                expected_sign: s,
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let entries: Vec<ValenceEntry> =
            serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Self::new(entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, &self.entries())?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityBreakdown {
    pub psi_stat: f64,
    pub psi_val: f64,
    pub psi_eff: f64,
    pub confounder_penalty: f64,
    pub psi_final: f64,
    pub review_flag: bool,
}

/// `ψ = clamp(ψ_stat · ψ_val · ψ_eff · penalty, 0.1, 0.95)`.
pub fn plausibility(
    p_value: f64,
    effect_location: f64,
    expected: ExpectedSign,
    observed_positive: bool,
    confounded: bool,
) -> PlausibilityBreakdown {
    let psi_stat = 1.0 - p_value.clamp(0.0, 1.0);
    let psi_val = match (expected, observed_positive) {
        (ExpectedSign::Unknown, _) => 1.0,
        (ExpectedSign::Positive, true) | (ExpectedSign::Negative, false) => 1.1,
        _ => 0.5,
    };
    let magnitude = effect_location.abs();
    let psi_eff = if magnitude > 1.5 {
        1.2
    } else if magnitude > 1.0 {
        1.1
    } else {
        1.0
    };
    let confounder_penalty = if confounded { CONFOUNDER_PENALTY } else { 1.0 };
    let psi_final =
        (psi_stat * psi_val * psi_eff * confounder_penalty).clamp(PSI_FLOOR, PSI_CEILING);
    PlausibilityBreakdown {
        psi_stat,
        psi_val,
        psi_eff,
        confounder_penalty,
        psi_final,
        review_flag: psi_final < REVIEW_THRESHOLD,
    }
}

/// Other factors that co-occur with `pair.factor` more than 60% of the time
/// and have an effect on the same outcome more than 1.2 times as large.
/// Factors without an entry in `effects` are not candidates.
pub fn detect_confounders(
    pair: &PairKey,
    dataset: &Dataset,
    effects: &BTreeMap<PairKey, f64>,
    up_to_day: u32,
) -> Result<Vec<FactorId>> {
    let beta = *effects.get(pair).ok_or_else(|| Error::UnknownPair {
        factor: pair.factor.to_string(),
        outcome: pair.outcome.to_string(),
    })?;
    let mut flagged = Vec::new();
    for other in &dataset.schema().factors {
        if *other == pair.factor {
            continue;
        }
        let alt = PairKey {
            factor: other.clone(),
            outcome: pair.outcome.clone(),
        };
        let Some(&alt_beta) = effects.get(&alt) else {
            continue;
        };
        let Some(rate) = dataset.cooccurrence(&pair.factor, other, up_to_day)? else {
            continue;
        };
        if rate > COOCCURRENCE_THRESHOLD && alt_beta.abs() > DOMINANCE_RATIO * beta.abs() {
            flagged.push(other.clone());
        }
    }
    Ok(flagged)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight {
    pub pair: PairKey,
    pub day: u32,
    pub tier: Tier,
    pub effect_location: f64,
    pub ci: (f64, f64),
    pub p_value: f64,
    pub plausibility: PlausibilityBreakdown,
    pub confounders: Vec<FactorId>,
}

/// Effect locations on `day` for every factor paired with each outcome that
/// appears in `timelines`, reusing timeline values where present.
fn effect_locations(
    timelines: &BTreeMap<PairKey, TierTimeline>,
    dataset: &Dataset,
    prior: &PriorConfig,
    model: ModelKind,
    day: u32,
) -> Result<BTreeMap<PairKey, f64>> {
    let mut effects = BTreeMap::new();
    let outcomes: Vec<&VitalId> = {
        let mut o: Vec<&VitalId> = timelines.keys().map(|p| &p.outcome).collect();
        o.sort();
        o.dedup();
        o
    };
    for outcome in outcomes {
        for factor in &dataset.schema().factors {
            let pair = PairKey {
                factor: factor.clone(),
                outcome: outcome.clone(),
            };
            let location = match timelines.get(&pair).and_then(|t| t.entry(day)) {
                Some(e) => e.location,
                None => {
                    fit_pair(dataset, &pair, day, prior, model)?
                        .marginal()?
                        .location
                }
            };
            effects.insert(pair, location);
        }
    }
    Ok(effects)
}

/// One insight per pair whose tier on `day` is above null, ordered by
/// `(outcome, factor)`.
pub fn build_insights(
    timelines: &BTreeMap<PairKey, TierTimeline>,
    dataset: &Dataset,
    valences: &ValenceMap,
    prior: &PriorConfig,
    model: ModelKind,
    day: u32,
) -> Result<Vec<Insight>> {
    let effects = effect_locations(timelines, dataset, prior, model, day)?;
    let mut insights = Vec::new();
    for (pair, timeline) in timelines {
        let entry = timeline.entry(day).ok_or(Error::DayOutOfRange {
            day,
            span: timeline.entries.last().map_or(0, |e| e.day),
        })?;
        if entry.tier == Tier::Null {
            continue;
        }
        let confounders = detect_confounders(pair, dataset, &effects, day)?;
        let plausibility = plausibility(
            entry.p_value,
            entry.location,
            valences.expected(pair),
            entry.positive,
            !confounders.is_empty(),
        );
        insights.push(Insight {
            pair: pair.clone(),
            day,
            tier: entry.tier,
            effect_location: entry.location,
            ci: (entry.ci_lo, entry.ci_hi),
            p_value: entry.p_value,
            plausibility,
            confounders,
        });
    }
    insights
        .sort_by(|a, b| (&a.pair.outcome, &a.pair.factor).cmp(&(&b.pair.outcome, &b.pair.factor)));
    Ok(insights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetMeta, Observation, Schema};
    use proptest::prelude::*;

    #[test]
    fn upper_clamp() {
        let b = plausibility(0.05, 2.0, ExpectedSign::Positive, true, false);
        assert_eq!(b.psi_stat, 0.95);
        assert_eq!(b.psi_val, 1.1);
        assert_eq!(b.psi_eff, 1.2);
        assert_eq!(b.psi_final, 0.95);
        assert!(!b.review_flag);
    }

    #[test]
    fn mismatch_flags_review() {
        let b = plausibility(0.5, 0.5, ExpectedSign::Positive, false, false);
        assert_eq!(b.psi_final, 0.25);
        assert!(b.review_flag);
    }

    #[test]
    fn lower_clamp() {
        let b = plausibility(1.0, 3.0, ExpectedSign::Unknown, true, true);
        assert_eq!(b.psi_stat, 0.0);
        assert_eq!(b.psi_final, 0.1);
        assert!(b.review_flag);
    }

    #[test]
    fn penalty_composes_before_clamp() {
        let plain = plausibility(0.4, 1.2, ExpectedSign::Unknown, true, false);
        let penalised = plausibility(0.4, 1.2, ExpectedSign::Unknown, true, true);
        assert_eq!(plain.psi_final, 0.6 * 1.1);
        assert_eq!(penalised.psi_final, 0.6 * 1.1 * 0.75);
        assert_eq!(penalised.confounder_penalty, 0.75);
    }

    #[test]
    fn review_threshold_is_strict() {
        // 0.6 · 1.0 · 1.0 lands exactly on the threshold
        let b = plausibility(0.4, 0.2, ExpectedSign::Unknown, true, false);
        assert_eq!(b.psi_final, 0.6);
        assert!(!b.review_flag);
    }

    fn cooccur_dataset() -> Dataset {
        // g present on 7 of the 10 days where f is present
        let schema = Schema::new(
            vec![VitalId::new("o").unwrap()],
            vec![FactorId::new("f").unwrap(), FactorId::new("g").unwrap()],
        )
        .unwrap();
        let obs = (1..=10)
            .map(|day| Observation {
                day,
                vitals: vec![Some(5.0)],
                factors: vec![Some(true), Some(day <= 7)],
            })
            .collect();
        Dataset::new(schema, obs, DatasetMeta::default()).unwrap()
    }

    fn effects(f: f64, g: f64) -> BTreeMap<PairKey, f64> {
        BTreeMap::from([
            (PairKey::new("f", "o").unwrap(), f),
            (PairKey::new("g", "o").unwrap(), g),
        ])
    }

    #[test]
    fn confounder_rules() {
        let ds = cooccur_dataset();
        let pair = PairKey::new("f", "o").unwrap();
        assert_eq!(
            detect_confounders(&pair, &ds, &effects(1.0, 1.5), 10).unwrap(),
            vec![FactorId::new("g").unwrap()]
        );
        assert!(detect_confounders(&pair, &ds, &effects(1.0, 1.1), 10)
            .unwrap()
            .is_empty());
        assert!(
            detect_confounders(&pair, &ds, &effects(1.0, -1.5), 10)
                .unwrap()
                .len()
                == 1
        );
        assert!(
            detect_confounders(&PairKey::new("g", "o").unwrap(), &ds, &BTreeMap::new(), 10)
                .is_err()
        );
    }

    #[test]
    fn valence_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("valence.json");
        let map = ValenceMap::default_bundle();
        map.save(&path).unwrap();
        assert_eq!(ValenceMap::load(&path).unwrap(), map);
        assert_eq!(
            map.expected(&PairKey::new("exercise", "mood").unwrap()),
            ExpectedSign::Positive
        );
        assert_eq!(
            map.expected(&PairKey::new("coffee", "energy").unwrap()),
            ExpectedSign::Unknown
        );
    }

    proptest! {
        #[test]
        fn psi_final_is_clamped(p in 0.0f64..=1.0, e in -5.0f64..5.0, pos: bool, c: bool, s in 0usize..3) {
            let sign = [ExpectedSign::Positive, ExpectedSign::Negative, ExpectedSign::Unknown][s];
            let b = plausibility(p, e, sign, pos, c);
            prop_assert!((PSI_FLOOR..=PSI_CEILING).contains(&b.psi_final));
            prop_assert_eq!(b.review_flag, b.psi_final < REVIEW_THRESHOLD);
        }

        #[test]
        fn lower_p_never_lowers_psi(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, e in -5.0f64..5.0, pos: bool, c: bool) {
            let (lo, hi) = (p1.min(p2), p1.max(p2));
            let a = plausibility(lo, e, ExpectedSign::Positive, pos, c);
            let b = plausibility(hi, e, ExpectedSign::Positive, pos, c);
            prop_assert!(a.psi_final >= b.psi_final);
        }

        #[test]
        fn mismatch_below_match_when_unclamped(p in 0.0f64..=1.0, e in -5.0f64..5.0, c: bool) {
            let good = plausibility(p, e, ExpectedSign::Positive, true, c);
            let bad = plausibility(p, e, ExpectedSign::Positive, false, c);
            let raw = good.psi_stat * good.psi_val * good.psi_eff * good.confounder_penalty;
            let raw_bad = bad.psi_stat * bad.psi_val * bad.psi_eff * bad.confounder_penalty;
            if raw > PSI_FLOOR && raw < PSI_CEILING && raw_bad > PSI_FLOOR {
                prop_assert!(bad.psi_final < good.psi_final);
            }
        }
    }
}
