//! Detection-time, false-discovery, coverage and calibration experiments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{Baseline, BaselineConfig};
use crate::data::{Dataset, PairKey};
use crate::generator::{generate, EffectVariation, GeneratorConfig, GroundTruthSpec};
use crate::inference::{ks_calibration, PriorConfig};
use crate::rng::{split_seed, stream_id};
use crate::tier::{first_attainment, fit_pair, run_engine, EngineConfig, Tier, TierTimeline};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ProgressiveClue,
    ProgressivePattern,
    ProgressiveCorrelation,
    Fixed,
    Naive,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ProgressiveClue,
        Method::ProgressivePattern,
        Method::ProgressiveCorrelation,
        Method::Fixed,
        Method::Naive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ProgressiveClue => "progressive_clue",
            Method::ProgressivePattern => "progressive_pattern",
            Method::ProgressiveCorrelation => "progressive_correlation",
            Method::Fixed => "fixed",
            Method::Naive => "naive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub pair: PairKey,
    pub method: Method,
    pub day: Option<u32>,
}

/// How insights are counted for the false-discovery rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdrCounting {
    /// Each pair counts once, at the highest tier it reached.
    #[default]
    PerPairMaxTier,
    /// Each tier a pair reached counts as a separate insight.
    PerTierEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessOptions {
    pub fdr_day: u32,
    pub coverage_day: u32,
    /// Directional accuracy uses tier attainments strictly before this day.
    pub directional_before_day: u32,
    pub ks_samples: usize,
    pub fdr_counting: FdrCounting,
    pub baselines: BaselineConfig,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            fdr_day: 30,
            coverage_day: 90,
            directional_before_day: 14,
            ks_samples: 1000,
            fdr_counting: FdrCounting::PerPairMaxTier,
            baselines: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsRecord {
    pub pair: PairKey,
    pub statistic: f64,
    pub p_value: f64,
}

/// Per-dataset metrics. Detection times are means over true pairs that
/// reached the tier; `None` when none did.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub time_to_clue: Option<f64>,
    pub time_to_pattern: Option<f64>,
    pub time_to_correlation: Option<f64>,
    pub time_to_fixed: Option<f64>,
    pub time_to_naive: Option<f64>,
    /// Fraction of true pairs that reached correlation within the span.
    pub correlation_attainment: f64,
    pub fdr_at_day30: f64,
    /// No insights at all by the FDR day; the rate is then reported as 0.
    pub fdr_empty_denominator: bool,
    /// FDR counting only correlation-tier insights.
    pub fdr_correlation_day30: f64,
    /// FDR over the tiers held on the FDR day itself, ignoring earlier ones.
    pub fdr_snapshot_day30: f64,
    pub fdr_fixed_day30: f64,
    pub fdr_naive_day30: f64,
    pub insights_day30: usize,
    pub ci_coverage_day90: f64,
    pub directional_accuracy_pre14: Option<f64>,
    /// Mean of `fixed day − clue day` over true pairs with both.
    pub clue_lead_over_fixed: Option<f64>,
    /// Every true pair satisfies clue ≤ pattern ≤ correlation (when all are
    /// reached) and clue < fixed.
    pub ordering_holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub sd: f64,
    pub median: f64,
    /// 2.5th percentile of per-dataset values.
    pub ci_lo: f64,
    /// 97.5th percentile of per-dataset values.
    pub ci_hi: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            n,
            mean,
            sd,
            median: percentile(&sorted, 0.5),
            ci_lo: percentile(&sorted, 0.025),
            ci_hi: percentile(&sorted, 0.975),
        })
    }
}

/// Linear-interpolation percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSummary {
    pub metric: String,
    pub summary: MetricSummary,
}

/// One replicate of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub noise_sd: f64,
    pub metrics: DatasetMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_datasets: usize,
    pub master_seed: u64,
    pub metrics: Vec<NamedSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

impl McSummary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics
            .iter()
            .find(|m| m.metric == name)
            .map(|m| &m.summary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub detections: Vec<DetectionRecord>,
    /// Single mode: this dataset's metrics. Monte Carlo mode: means over replicates.
    #[serde(flatten)]
    pub metrics: DatasetMetrics,
    pub ks_results: Vec<KsRecord>,
    pub mc_summary: Option<McSummary>,
}

fn mean_of(days: impl IntoIterator<Item = Option<u32>>) -> Option<f64> {
    let got: Vec<f64> = days.into_iter().flatten().map(f64::from).collect();
    (!got.is_empty()).then(|| got.iter().sum::<f64>() / got.len() as f64)
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

const TIERS: [Tier; 3] = [Tier::Clue, Tier::Pattern, Tier::Correlation];

fn tier_method(tier: Tier) -> Method {
    match tier {
        Tier::Clue => Method::ProgressiveClue,
        Tier::Pattern => Method::ProgressivePattern,
        _ => Method::ProgressiveCorrelation,
    }
}

/// Runs the engine and both baselines on every true and null pair.
pub fn evaluate_single(
    dataset: &Dataset,
    truth: &GroundTruthSpec,
    engine: &EngineConfig,
    prior: &PriorConfig,
    options: &HarnessOptions,
) -> Result<ExperimentReport> {
    truth.validate()?;
    let pairs = truth.all_pairs();
    if let Some(p) = pairs.iter().find(|p| !dataset.schema().contains_pair(p)) {
        return Err(Error::TruthMismatch(format!(
            "pair {p} is not in the dataset schema"
        )));
    }
    if pairs.is_empty() {
        return Ok(ExperimentReport {
            detections: Vec::new(),
            metrics: DatasetMetrics {
                fdr_empty_denominator: true,
                ordering_holds: true,
                ..DatasetMetrics::default()
            },
            ks_results: Vec::new(),
            mc_summary: None,
        });
    }
    let timelines = run_engine(dataset, &pairs, prior, engine)?;
    let span = dataset.span();
    let fdr_day = options.fdr_day.min(span);
    let coverage_day = options.coverage_day.min(span);

    let mut detections = Vec::new();
    let mut first: BTreeMap<(PairKey, Method), Option<u32>> = BTreeMap::new();
    for pair in &pairs {
        let tl = &timelines[pair];
        for tier in TIERS {
            first.insert(
                (pair.clone(), tier_method(tier)),
                first_attainment(tl, tier),
            );
        }
        for (method, baseline) in [
            (Method::Fixed, Baseline::Fixed),
            (Method::Naive, Baseline::Naive),
        ] {
            first.insert(
                (pair.clone(), method),
                options.baselines.first_detection(baseline, dataset, pair)?,
            );
        }
        for method in Method::ALL {
            detections.push(DetectionRecord {
                pair: pair.clone(),
                method,
                day: first[&(pair.clone(), method)],
            });
        }
    }
    let day_of = |pair: &PairKey, m: Method| first[&(pair.clone(), m)];
    let true_pairs = truth.true_pairs();

    // false discoveries by the FDR day
    let (mut insights, mut false_insights) = (0usize, 0usize);
    let (mut corr, mut false_corr) = (0usize, 0usize);
    let (mut held, mut false_held) = (0usize, 0usize);
    let mut baseline_counts = [(0usize, 0usize); 2];
    for pair in &pairs {
        let is_null = truth.is_null(pair);
        let max_tier = timelines[pair].max_tier_through(fdr_day);
        let count = match options.fdr_counting {
            FdrCounting::PerPairMaxTier => usize::from(max_tier > Tier::Null),
            FdrCounting::PerTierEvent => TIERS.iter().filter(|&&t| max_tier >= t).count(),
        };
        insights += count;
        if is_null {
            false_insights += count;
        }
        if timelines[pair]
            .entry(fdr_day)
            .is_some_and(|e| e.tier > Tier::Null)
        {
            held += 1;
            false_held += usize::from(is_null);
        }
        if max_tier == Tier::Correlation {
            corr += 1;
            false_corr += usize::from(is_null);
        }
        for (slot, method) in [(0, Method::Fixed), (1, Method::Naive)] {
            if day_of(pair, method).is_some_and(|d| d <= fdr_day) {
                baseline_counts[slot].0 += 1;
                baseline_counts[slot].1 += usize::from(is_null);
            }
        }
    }

    // interval coverage and calibration on the true pairs
    let mut covered = 0usize;
    let mut ks_results = Vec::new();
    for pair in &true_pairs {
        let beta = truth.beta(pair).expect("true pair has a beta");
        let entry = timelines[pair]
            .entry(coverage_day)
            .expect("engine covers every day");
        if entry.ci_lo <= beta && beta <= entry.ci_hi {
            covered += 1;
        }
        let fit = fit_pair(dataset, pair, coverage_day, prior, engine.model)?;
        if fit.state.n_obs > 0 {
            let seed =
                stream_id("ks", &pair.to_string(), coverage_day) ^ dataset.meta().seed.unwrap_or(0);
            let ks = ks_calibration(
                &fit.state,
                &fit.design_rows,
                &fit.outcomes,
                options.ks_samples,
                seed,
            )?;
            ks_results.push(KsRecord {
                pair: pair.clone(),
                statistic: ks.statistic,
                p_value: ks.p_value,
            });
        }
    }

    // sign agreement of early tier attainments
    let (mut early, mut early_correct) = (0usize, 0usize);
    for pair in &true_pairs {
        let positive_truth = truth.beta(pair).expect("true pair has a beta") > 0.0;
        for tier in TIERS {
            if let Some(day) =
                day_of(pair, tier_method(tier)).filter(|&d| d < options.directional_before_day)
            {
                early += 1;
                let entry = timelines[pair]
                    .entry(day)
                    .expect("attainment day is in the timeline");
                early_correct += usize::from(entry.positive == positive_truth);
            }
        }
    }

    let mut ordering_holds = true;
    let mut leads = Vec::new();
    for pair in &true_pairs {
        let [c, p, r] = TIERS.map(|t| day_of(pair, tier_method(t)));
        if let (Some(c), Some(p), Some(r)) = (c, p, r) {
            ordering_holds &= c <= p && p <= r;
        }
        let fixed = day_of(pair, Method::Fixed);
        ordering_holds &= match (c, fixed) {
            (Some(c), Some(f)) => c < f,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if let (Some(c), Some(f)) = (c, fixed) {
            leads.push(f64::from(f) - f64::from(c));
        }
    }

    let metrics = DatasetMetrics {
        time_to_clue: mean_of(
            true_pairs
                .iter()
                .map(|p| day_of(p, Method::ProgressiveClue)),
        ),
        time_to_pattern: mean_of(
            true_pairs
                .iter()
                .map(|p| day_of(p, Method::ProgressivePattern)),
        ),
        time_to_correlation: mean_of(
            true_pairs
                .iter()
                .map(|p| day_of(p, Method::ProgressiveCorrelation)),
        ),
        time_to_fixed: mean_of(true_pairs.iter().map(|p| day_of(p, Method::Fixed))),
        time_to_naive: mean_of(true_pairs.iter().map(|p| day_of(p, Method::Naive))),
        correlation_attainment: rate(
            true_pairs
                .iter()
                .filter(|p| day_of(p, Method::ProgressiveCorrelation).is_some())
                .count(),
            true_pairs.len(),
        ),
        fdr_at_day30: rate(false_insights, insights),
        fdr_empty_denominator: insights == 0,
        fdr_correlation_day30: rate(false_corr, corr),
        fdr_snapshot_day30: rate(false_held, held),
        fdr_fixed_day30: rate(baseline_counts[0].1, baseline_counts[0].0),
        fdr_naive_day30: rate(baseline_counts[1].1, baseline_counts[1].0),
        insights_day30: insights,
        ci_coverage_day90: rate(covered, true_pairs.len()),
        directional_accuracy_pre14: (early > 0).then(|| rate(early_correct, early)),
        clue_lead_over_fixed: (!leads.is_empty())
            .then(|| leads.iter().sum::<f64>() / leads.len() as f64),
        ordering_holds,
    };
    Ok(ExperimentReport {
        detections,
        metrics,
        ks_results,
        mc_summary: None,
    })
}

/// Names and extractors of the summarised metrics, headline metrics first.
#[allow(clippy::type_complexity)]
const SUMMARY_METRICS: [(&str, fn(&DatasetMetrics) -> Option<f64>); 14] = [
    ("time_to_clue", |m| m.time_to_clue),
    ("time_to_pattern", |m| m.time_to_pattern),
    ("time_to_correlation", |m| m.time_to_correlation),
    ("fdr", |m| Some(m.fdr_at_day30)),
    ("ci_coverage", |m| Some(m.ci_coverage_day90)),
    ("directional_accuracy", |m| m.directional_accuracy_pre14),
    ("time_to_fixed", |m| m.time_to_fixed),
    ("time_to_naive", |m| m.time_to_naive),
    ("correlation_attainment", |m| Some(m.correlation_attainment)),
    ("fdr_correlation", |m| Some(m.fdr_correlation_day30)),
    ("fdr_snapshot", |m| Some(m.fdr_snapshot_day30)),
    ("fdr_fixed", |m| Some(m.fdr_fixed_day30)),
    ("fdr_naive", |m| Some(m.fdr_naive_day30)),
    ("ordering_holds", |m| {
        Some(f64::from(u8::from(m.ordering_holds)))
    }),
];

fn evaluate_configs(
    configs: Vec<GeneratorConfig>,
    engine: &EngineConfig,
    prior: &PriorConfig,
    options: &HarnessOptions,
) -> Result<Vec<ReplicateRecord>> {
    configs
        .into_par_iter()
        .enumerate()
        .map(|(index, config)| {
            let (dataset, truth) = generate(&config)?;
            let report = evaluate_single(&dataset, &truth, engine, prior, options)?;
            Ok(ReplicateRecord {
                index,
                seed: config.seed,
                noise_sd: config.noise_sd,
                metrics: report.metrics,
            })
        })
        .collect()
}

fn summarise(replicates: Vec<ReplicateRecord>, master_seed: u64) -> ExperimentReport {
    let metrics: Vec<NamedSummary> = SUMMARY_METRICS
        .iter()
        .filter_map(|(name, get)| {
            let values: Vec<f64> = replicates.iter().filter_map(|r| get(&r.metrics)).collect();
            MetricSummary::from_values(&values).map(|summary| NamedSummary {
                metric: (*name).to_string(),
                summary,
            })
        })
        .collect();
    let mean = |name: &str| {
        metrics
            .iter()
            .find(|m| m.metric == name)
            .map(|m| m.summary.mean)
    };
    let aggregate = DatasetMetrics {
        time_to_clue: mean("time_to_clue"),
        time_to_pattern: mean("time_to_pattern"),
        time_to_correlation: mean("time_to_correlation"),
        time_to_fixed: mean("time_to_fixed"),
        time_to_naive: mean("time_to_naive"),
        correlation_attainment: mean("correlation_attainment").unwrap_or(0.0),
        fdr_at_day30: mean("fdr").unwrap_or(0.0),
        fdr_empty_denominator: replicates.iter().all(|r| r.metrics.fdr_empty_denominator),
        fdr_correlation_day30: mean("fdr_correlation").unwrap_or(0.0),
        fdr_snapshot_day30: mean("fdr_snapshot").unwrap_or(0.0),
        fdr_fixed_day30: mean("fdr_fixed").unwrap_or(0.0),
        fdr_naive_day30: mean("fdr_naive").unwrap_or(0.0),
        insights_day30: replicates.iter().map(|r| r.metrics.insights_day30).sum(),
        ci_coverage_day90: mean("ci_coverage").unwrap_or(0.0),
        directional_accuracy_pre14: mean("directional_accuracy"),
        clue_lead_over_fixed: {
            let leads: Vec<f64> = replicates
                .iter()
                .filter_map(|r| r.metrics.clue_lead_over_fixed)
                .collect();
            (!leads.is_empty()).then(|| leads.iter().sum::<f64>() / leads.len() as f64)
        },
        ordering_holds: replicates.iter().all(|r| r.metrics.ordering_holds),
    };
    ExperimentReport {
        detections: Vec::new(),
        metrics: aggregate,
        ks_results: Vec::new(),
        mc_summary: Some(McSummary {
            n_datasets: replicates.len(),
            master_seed,
            metrics,
            replicates,
        }),
    }
}

/// Replicate `i` uses generator seed `split_seed(master_seed, i)` with effect
/// sizes and noise redrawn by `variation`.
pub fn monte_carlo(
    n_datasets: usize,
    base: &GeneratorConfig,
    variation: &EffectVariation,
    engine: &EngineConfig,
    prior: &PriorConfig,
    options: &HarnessOptions,
    master_seed: u64,
) -> Result<ExperimentReport> {
    if n_datasets < 2 {
        return Err(Error::InvalidConfig(
            "Monte Carlo needs at least 2 datasets".into(),
        ));
    }
    base.validate()?;
    engine.validate()?;
    prior.validate()?;
    let configs = (0..n_datasets)
        .map(|i| variation.apply(base, split_seed(master_seed, i as u64)))
        .collect();
    Ok(summarise(
        evaluate_configs(configs, engine, prior, options)?,
        master_seed,
    ))
}

/// Tunable quantities of a sensitivity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    CoefficientVariance,
    ClueMass,
    PatternMass,
    KlThreshold,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::CoefficientVariance => "coefficient_variance",
            SweepParameter::ClueMass => "clue_mass",
            SweepParameter::PatternMass => "pattern_mass",
            SweepParameter::KlThreshold => "kl_threshold",
        }
    }

    fn apply(self, value: f64, engine: &mut EngineConfig, prior: &mut PriorConfig) {
        match self {
            SweepParameter::CoefficientVariance => prior.coefficient_variance = value,
            SweepParameter::ClueMass => engine.clue_mass = value,
            SweepParameter::PatternMass => engine.pattern_mass = value,
            SweepParameter::KlThreshold => engine.kl_threshold = value,
        }
    }
}

impl FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            SweepParameter::CoefficientVariance,
            SweepParameter::ClueMass,
            SweepParameter::PatternMass,
            SweepParameter::KlThreshold,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
        .ok_or_else(|| Error::UnknownParameter(s.to_string()))
    }
}

/// Inputs shared by every grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepBase {
    pub generator: GeneratorConfig,
    pub variation: EffectVariation,
    pub engine: EngineConfig,
    pub prior: PriorConfig,
    pub options: HarnessOptions,
    /// 1 evaluates the base dataset only; more runs a small Monte Carlo on
    /// the same replicate seeds at every grid point.
    pub n_datasets: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: SweepParameter,
    pub value: f64,
    pub metrics: Vec<NamedSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

impl SweepPoint {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics
            .iter()
            .find(|m| m.metric == name)
            .map(|m| &m.summary)
    }
}

/// One evaluation per `(parameter, value)` in grid order.
pub fn sensitivity_sweep(
    grid: &BTreeMap<String, Vec<f64>>,
    base: &SweepBase,
) -> Result<Vec<SweepPoint>> {
    let parsed: Vec<(SweepParameter, &Vec<f64>)> = grid
        .iter()
        .map(|(k, v)| Ok((k.parse::<SweepParameter>()?, v)))
        .collect::<Result<_>>()?;
    base.generator.validate()?;
    let configs: Vec<GeneratorConfig> = if base.n_datasets <= 1 {
        vec![base.generator.clone()]
    } else {
        (0..base.n_datasets)
            .map(|i| {
                base.variation
                    .apply(&base.generator, split_seed(base.master_seed, i as u64))
            })
            .collect()
    };
    let mut points = Vec::new();
    for (parameter, values) in parsed {
        for &value in values {
            let (mut engine, mut prior) = (base.engine.clone(), base.prior);
            parameter.apply(value, &mut engine, &mut prior);
            engine.validate()?;
            prior.validate()?;
            let replicates = evaluate_configs(configs.clone(), &engine, &prior, &base.options)?;
            let summary = summarise(replicates, base.master_seed)
                .mc_summary
                .expect("summarise sets mc_summary");
            points.push(SweepPoint {
                parameter,
                value,
                metrics: summary.metrics,
                replicates: summary.replicates,
            });
        }
    }
    Ok(points)
}

/// Long-format sweep table: `parameter,value,metric,n,mean,sd,median,ci_lo,ci_hi`.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "parameter",
        "value",
        "metric",
        "n",
        "mean",
        "sd",
        "median",
        "ci_lo",
        "ci_hi",
    ])?;
    for p in points {
        for m in &p.metrics {
            let s = &m.summary;
            w.write_record([
                p.parameter.as_str().to_string(),
                format!("{:?}", p.value),
                m.metric.clone(),
                s.n.to_string(),
                format!("{:?}", s.mean),
                format!("{:?}", s.sd),
                format!("{:?}", s.median),
                format!("{:?}", s.ci_lo),
                format!("{:?}", s.ci_hi),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Markdown table with one row per grid point.
pub fn sweep_markdown(points: &[SweepPoint]) -> String {
    let cols = [
        "time_to_clue",
        "time_to_pattern",
        "time_to_correlation",
        "fdr",
        "ci_coverage",
        "directional_accuracy",
    ];
    let mut md = String::from("| parameter | value |");
    for c in cols {
        let _ = write!(md, " {c} |");
    }
    md.push_str("\n|---|---|");
    md.push_str(&"---|".repeat(cols.len()));
    md.push('\n');
    for p in points {
        let _ = write!(md, "| {} | {} |", p.parameter.as_str(), p.value);
        for c in cols {
            let _ = write!(md, " {} |", fmt_opt(p.metric(c).map(|s| s.mean)));
        }
        md.push('\n');
    }
    md
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

/// Per-replicate metrics as CSV, one row per dataset.
pub fn write_replicates_csv<W: Write>(replicates: &[ReplicateRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(
        ["index", "seed", "noise_sd"]
            .into_iter()
            .chain(SUMMARY_METRICS.iter().map(|(name, _)| *name)),
    )?;
    for r in replicates {
        let mut row = vec![
            r.index.to_string(),
            r.seed.to_string(),
            format!("{:?}", r.noise_sd),
        ];
        row.extend(SUMMARY_METRICS.iter().map(|(_, get)| {
            get(&r.metrics)
                .map(|v| format!("{v:?}"))
                .unwrap_or_default()
        }));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

impl ExperimentReport {
    pub fn to_markdown(&self) -> String {
        let m = &self.metrics;
        let mut md = String::new();
        match &self.mc_summary {
            Some(mc) => {
                let _ = writeln!(
                    md,
                    "# Monte Carlo report\n\n{} datasets, master seed {}.\n",
                    mc.n_datasets, mc.master_seed
                );
                md.push_str("| metric | n | mean | sd | median | 2.5% | 97.5% |\n|---|---|---|---|---|---|---|\n");
                for s in &mc.metrics {
                    let x = &s.summary;
                    let _ = writeln!(
                        md,
                        "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                        s.metric, x.n, x.mean, x.sd, x.median, x.ci_lo, x.ci_hi
                    );
                }
            }
            None => {
                md.push_str("# Single-dataset report\n\n## Days to detection\n\n| pair |");
                for method in Method::ALL {
                    let _ = write!(md, " {} |", method.as_str());
                }
                md.push_str("\n|---|");
                md.push_str(&"---|".repeat(Method::ALL.len()));
                md.push('\n');
                let mut pairs: Vec<&PairKey> = self.detections.iter().map(|d| &d.pair).collect();
                pairs.dedup();
                for pair in pairs {
                    let _ = write!(md, "| {pair} |");
                    for method in Method::ALL {
                        let day = self
                            .detections
                            .iter()
                            .find(|d| &d.pair == pair && d.method == method)
                            .and_then(|d| d.day);
                        let _ = write!(
                            md,
                            " {} |",
                            day.map_or_else(|| "-".to_string(), |d| d.to_string())
                        );
                    }
                    md.push('\n');
                }
                md.push_str("\n## Metrics\n\n| metric | value |\n|---|---|\n");
                let rows = [
                    ("mean time to clue (true pairs)", fmt_opt(m.time_to_clue)),
                    (
                        "mean time to pattern (true pairs)",
                        fmt_opt(m.time_to_pattern),
                    ),
                    (
                        "mean time to correlation (true pairs)",
                        fmt_opt(m.time_to_correlation),
                    ),
                    (
                        "mean time to fixed-baseline detection",
                        fmt_opt(m.time_to_fixed),
                    ),
                    (
                        "mean time to naive-baseline detection",
                        fmt_opt(m.time_to_naive),
                    ),
                    ("FDR at day 30", format!("{:.4}", m.fdr_at_day30)),
                    (
                        "FDR at day 30, correlation tier only",
                        format!("{:.4}", m.fdr_correlation_day30),
                    ),
                    (
                        "FDR over tiers held on day 30",
                        format!("{:.4}", m.fdr_snapshot_day30),
                    ),
                    (
                        "FDR at day 30, fixed baseline",
                        format!("{:.4}", m.fdr_fixed_day30),
                    ),
                    (
                        "FDR at day 30, naive baseline",
                        format!("{:.4}", m.fdr_naive_day30),
                    ),
                    ("insights by day 30", m.insights_day30.to_string()),
                    (
                        "CI coverage at day 90",
                        format!("{:.4}", m.ci_coverage_day90),
                    ),
                    (
                        "directional accuracy before day 14",
                        fmt_opt(m.directional_accuracy_pre14),
                    ),
                    (
                        "mean clue lead over fixed baseline (days)",
                        fmt_opt(m.clue_lead_over_fixed),
                    ),
                ];
                for (k, v) in rows {
                    let _ = writeln!(md, "| {k} | {v} |");
                }
                if !self.ks_results.is_empty() {
                    md.push_str("\n## Predictive calibration (KS on PIT values)\n\n| pair | statistic | p-value |\n|---|---|---|\n");
                    for k in &self.ks_results {
                        let _ =
                            writeln!(md, "| {} | {:.4} | {:.4} |", k.pair, k.statistic, k.p_value);
                    }
                }
            }
        }
        md
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub day: u32,
    pub location: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub tier: Tier,
}

impl TraceRow {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }
}

/// Posterior location and interval per day, for redrawing contraction plots.
pub fn contraction_trace(timeline: &TierTimeline) -> Vec<TraceRow> {
    timeline
        .entries
        .iter()
        .map(|e| TraceRow {
            day: e.day,
            location: e.location,
            ci_lo: e.ci_lo,
            ci_hi: e.ci_hi,
            tier: e.tier,
        })
        .collect()
}

/// CSV `day,location,ci_lo,ci_hi,half_width,tier`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "location", "ci_lo", "ci_hi", "half_width", "tier"])?;
    for r in rows {
        w.write_record([
            r.day.to_string(),
            format!("{:?}", r.location),
            format!("{:?}", r.ci_lo),
            format!("{:?}", r.ci_hi),
            format!("{:?}", r.half_width()),
            r.tier.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
