//! Welch two-sample t-test and the frequentist comparison detectors.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PairKey};
use crate::special::student_t_cdf;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_stat: f64,
    pub dof: f64,
    /// Two-sided.
    pub p_value: f64,
    pub mean_diff: f64,
    /// Set when either group has fewer than two values or zero variance; the
    /// p-value is then 1.0.
    pub degenerate: bool,
}

impl TTestResult {
    fn degenerate(mean_diff: f64) -> Self {
        Self {
            t_stat: 0.0,
            dof: 0.0,
            p_value: 1.0,
            mean_diff,
            degenerate: true,
        }
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t-test of `group1` against `group0`.
pub fn welch_t_test(group1: &[f64], group0: &[f64]) -> TTestResult {
    if group1.len() < 2 || group0.len() < 2 {
        let diff = match (group1.is_empty(), group0.is_empty()) {
            (false, false) => mean_var(group1).0 - mean_var(group0).0,
            _ => 0.0,
        };
        return TTestResult::degenerate(diff);
    }
    let (m1, v1) = mean_var(group1);
    let (m0, v0) = mean_var(group0);
    let diff = m1 - m0;
    if v1 <= 0.0 || v0 <= 0.0 {
        return TTestResult::degenerate(diff);
    }
    let (n1, n0) = (group1.len() as f64, group0.len() as f64);
    let (s1, s0) = (v1 / n1, v0 / n0);
    let se = (s1 + s0).sqrt();
    let t = diff / se;
    let dof = (s1 + s0).powi(2) / (s1 * s1 / (n1 - 1.0) + s0 * s0 / (n0 - 1.0));
    let p = 2.0 * student_t_cdf(-t.abs(), dof).expect("Welch dof is positive");
    TTestResult {
        t_stat: t,
        dof,
        p_value: p.min(1.0),
        mean_diff: diff,
        degenerate: false,
    }
}

/// Thresholds for the two comparison detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Pair-complete days required before the fixed detector may fire.
    pub fixed_min_samples: usize,
    pub fixed_alpha: f64,
    pub naive_alpha: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            fixed_min_samples: 30,
            fixed_alpha: 0.05,
            naive_alpha: 0.20,
        }
    }
}

/// Which comparison detector to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Fixed,
    Naive,
}

impl BaselineConfig {
    pub fn detects(
        &self,
        baseline: Baseline,
        dataset: &Dataset,
        pair: &PairKey,
        day: u32,
    ) -> Result<bool> {
        let groups = dataset.pair_samples(pair, day)?;
        let test = welch_t_test(&groups.present, &groups.absent);
        Ok(match baseline {
            Baseline::Fixed => {
                groups.len() >= self.fixed_min_samples && test.p_value < self.fixed_alpha
            }
            Baseline::Naive => !test.degenerate && test.p_value < self.naive_alpha,
        })
    }

    /// First day in `1..=span` on which `baseline` reports the pair.
    pub fn first_detection(
        &self,
        baseline: Baseline,
        dataset: &Dataset,
        pair: &PairKey,
    ) -> Result<Option<u32>> {
        for day in 1..=dataset.span() {
            if self.detects(baseline, dataset, pair, day)? {
                return Ok(Some(day));
            }
        }
        Ok(None)
    }
}

fn detect(
    baseline: Baseline,
    config: &BaselineConfig,
    dataset: &Dataset,
    pairs: &[PairKey],
    day: u32,
) -> Result<Vec<PairKey>> {
    let mut hits = Vec::new();
    for pair in pairs {
        if config.detects(baseline, dataset, pair, day)? {
            hits.push(pair.clone());
        }
    }
    Ok(hits)
}

/// Pairs with at least 30 pair-complete days and Welch `p < 0.05`.
pub fn fixed_threshold_detector(
    dataset: &Dataset,
    pairs: &[PairKey],
    day: u32,
) -> Result<Vec<PairKey>> {
    detect(
        Baseline::Fixed,
        &BaselineConfig::default(),
        dataset,
        pairs,
        day,
    )
}

/// Pairs with Welch `p < 0.20` at any sample size (two or more per group).
pub fn naive_detector(dataset: &Dataset, pairs: &[PairKey], day: u32) -> Result<Vec<PairKey>> {
    detect(
        Baseline::Naive,
        &BaselineConfig::default(),
        dataset,
        pairs,
        day,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nof1_oracles::student_t_cdf_quadrature;
    use proptest::prelude::*;

    #[test]
    fn identical_groups() {
        let r = welch_t_test(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]);
        assert_eq!(r.t_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn hand_computed_example() {
        // means 6 and 2, both variances 1, n = 3: t = 4/√(2/3), dof = 4
        let r = welch_t_test(&[5.0, 6.0, 7.0], &[1.0, 2.0, 3.0]);
        let t = 4.0 / (2.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(r.t_stat, t, epsilon = 1e-12);
        assert_abs_diff_eq!(r.t_stat, 4.899, epsilon = 1e-3);
        assert_abs_diff_eq!(r.dof, 4.0, epsilon = 1e-12);
        let p = 2.0 * (1.0 - student_t_cdf_quadrature(t, 4.0));
        assert_abs_diff_eq!(r.p_value, p, epsilon = 1e-9);
        assert_abs_diff_eq!(r.p_value, 0.0081, epsilon = 1e-3);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).degenerate);
        assert!(welch_t_test(&[], &[]).degenerate);
        let flat = welch_t_test(&[3.0, 3.0], &[1.0, 2.0]);
        assert!(flat.degenerate);
        assert_eq!(flat.p_value, 1.0);
        assert_eq!(flat.mean_diff, 1.5);
    }

    proptest! {
        #[test]
        fn swap_flips_sign_only(
            a in prop::collection::vec(-10.0f64..10.0, 2..12),
            b in prop::collection::vec(-10.0f64..10.0, 2..12),
        ) {
            let ab = welch_t_test(&a, &b);
            let ba = welch_t_test(&b, &a);
            prop_assume!(!ab.degenerate);
            prop_assert!((ab.t_stat + ba.t_stat).abs() < 1e-9);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        }

        #[test]
        fn common_scaling_is_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 2..12),
            b in prop::collection::vec(-10.0f64..10.0, 2..12),
            k in 0.1f64..50.0,
        ) {
            let base = welch_t_test(&a, &b);
            prop_assume!(!base.degenerate);
            let sa: Vec<f64> = a.iter().map(|x| x * k).collect();
            let sb: Vec<f64> = b.iter().map(|x| x * k).collect();
            let scaled = welch_t_test(&sa, &sb);
            prop_assert!((base.t_stat - scaled.t_stat).abs() < 1e-8 * base.t_stat.abs().max(1.0));
            prop_assert!((base.p_value - scaled.p_value).abs() < 1e-9);
        }
    }
}
