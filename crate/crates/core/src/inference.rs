//! Conjugate normal-inverse-gamma linear regression.
//!
//! Model: `y = Xβ + ε`, `ε ~ N(0, σ²)`, with `β | σ² ~ N(0, σ² v I)` and
//! `σ² ~ InvGamma(a₀, b₀)`. After `n` rows the posterior is again NIG:
//!
//! ```text
//! Λₙ = I/v + XᵀX
//! mₙ = Λₙ⁻¹ Xᵀy
//! aₙ = a₀ + n/2
//! bₙ = b₀ + ½ (yᵀy − mₙᵀ Λₙ mₙ)
//! ```
//!
//! and every coefficient has a Student-t marginal with `2aₙ` degrees of
//! freedom, location `mₙ[k]` and squared scale `(bₙ/aₙ) (Λₙ⁻¹)[k,k]`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::special::{kolmogorov_survival, normal_cdf, student_t_cdf, student_t_quantile};
use crate::{Error, Result};

/// Hyperparameters of the normal-inverse-gamma prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    /// `v` in `Σ₀ = v·I`.
    pub coefficient_variance: f64,
    /// `a₀`.
    pub ig_shape: f64,
    /// `b₀`.
    pub ig_rate: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            coefficient_variance: 10.0,
            ig_shape: 2.0,
            ig_rate: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("coefficient_variance", self.coefficient_variance),
            ("ig_shape", self.ig_shape),
            ("ig_rate", self.ig_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "prior {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// NIG posterior parameters. Field names are part of the JSON snapshot format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorState {
    pub coef_mean: Vec<f64>,
    pub coef_precision: Vec<Vec<f64>>,
    pub ig_shape: f64,
    pub ig_rate: f64,
    pub n_obs: usize,
}

impl PosteriorState {
    /// The prior embedded as a zero-observation posterior.
    pub fn from_prior(prior: &PriorConfig, dim: usize) -> Self {
        let mut precision = vec![vec![0.0; dim]; dim];
        for (i, row) in precision.iter_mut().enumerate() {
            row[i] = 1.0 / prior.coefficient_variance;
        }
        Self {
            coef_mean: vec![0.0; dim],
            coef_precision: precision,
            ig_shape: prior.ig_shape,
            ig_rate: prior.ig_rate,
            n_obs: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.coef_mean.len()
    }

    fn precision(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.coef_precision[i][j])
    }

    fn mean(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coef_mean)
    }

    /// `Λ⁻¹`, the covariance of β up to the factor σ².
    pub fn unscaled_covariance(&self) -> Result<DMatrix<f64>> {
        self.precision()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::Validation("posterior precision is not positive definite".into()))
    }

    /// Absorbs one more observation. Equivalent to a batch update over all
    /// rows seen so far.
    pub fn update(&self, row: &[f64], y: f64) -> Result<Self> {
        check_row(row, self.dim())?;
        if !y.is_finite() {
            return Err(Error::NonFinite("outcome"));
        }
        let x = DVector::from_column_slice(row);
        let precision = self.precision();
        let mean = self.mean();
        let shift = &precision * &mean;
        let old_quad = mean.dot(&shift);
        let new_precision = &precision + &x * x.transpose();
        let rhs = shift + &x * y;
        let chol = new_precision.clone().cholesky().ok_or_else(|| {
            Error::Validation("posterior precision is not positive definite".into())
        })?;
        let new_mean = chol.solve(&rhs);
        let new_quad = new_mean.dot(&rhs);
        Ok(Self {
            coef_mean: new_mean.iter().copied().collect(),
            coef_precision: rows_of(&new_precision),
            ig_shape: self.ig_shape + 0.5,
            ig_rate: self.ig_rate + 0.5 * (y * y + old_quad - new_quad),
            n_obs: self.n_obs + 1,
        })
    }

    /// Student-t posterior predictive distribution of the outcome for `row`.
    pub fn predictive(&self, row: &[f64]) -> Result<StudentT> {
        check_row(row, self.dim())?;
        let cov = self.unscaled_covariance()?;
        let x = DVector::from_column_slice(row);
        let spread = 1.0 + x.dot(&(&cov * &x));
        Ok(StudentT {
            location: x.dot(&self.mean()),
            scale: (self.ig_rate / self.ig_shape * spread).sqrt(),
            dof: 2.0 * self.ig_shape,
        })
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn check_row(row: &[f64], dim: usize) -> Result<()> {
    if row.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: row.len(),
        });
    }
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design row"));
    }
    Ok(())
}

/// Exact batch conjugate update of the prior with `dim`-column design rows.
pub fn posterior_update(
    prior: &PriorConfig,
    dim: usize,
    design_rows: &[Vec<f64>],
    outcomes: &[f64],
) -> Result<PosteriorState> {
    prior.validate()?;
    if design_rows.len() != outcomes.len() {
        return Err(Error::DimensionMismatch {
            expected: design_rows.len(),
            actual: outcomes.len(),
        });
    }
    let mut precision = DMatrix::<f64>::identity(dim, dim) / prior.coefficient_variance;
    let mut xty = DVector::<f64>::zeros(dim);
    let mut yty = 0.0;
    for (row, &y) in design_rows.iter().zip(outcomes) {
        check_row(row, dim)?;
        if !y.is_finite() {
            return Err(Error::NonFinite("outcome"));
        }
        for i in 0..dim {
            xty[i] += row[i] * y;
            for j in 0..dim {
                precision[(i, j)] += row[i] * row[j];
            }
        }
        yty += y * y;
    }
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Validation("posterior precision is not positive definite".into()))?;
    let mean = chol.solve(&xty);
    let n = outcomes.len();
    Ok(PosteriorState {
        coef_mean: mean.iter().copied().collect(),
        coef_precision: rows_of(&precision),
        ig_shape: prior.ig_shape + 0.5 * n as f64,
        ig_rate: prior.ig_rate + 0.5 * (yty - mean.dot(&xty)),
        n_obs: n,
    })
}

/// Location-scale Student-t distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentT {
    pub location: f64,
    pub scale: f64,
    pub dof: f64,
}

/// Marginal posterior of a single regression coefficient.
pub type CoefficientMarginal = StudentT;

impl StudentT {
    pub fn cdf(&self, x: f64) -> Result<f64> {
        student_t_cdf((x - self.location) / self.scale, self.dof)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok(self.location + self.scale * student_t_quantile(p, self.dof)?)
    }

    /// Variance, finite only for `dof > 2`.
    pub fn variance(&self) -> Option<f64> {
        (self.dof > 2.0).then(|| self.scale * self.scale * self.dof / (self.dof - 2.0))
    }
}

pub fn coefficient_marginal(state: &PosteriorState, index: usize) -> Result<CoefficientMarginal> {
    if index >= state.dim() {
        return Err(Error::IndexOutOfRange {
            index,
            dim: state.dim(),
        });
    }
    let cov = state.unscaled_covariance()?;
    Ok(StudentT {
        location: state.coef_mean[index],
        scale: (state.ig_rate / state.ig_shape * cov[(index, index)]).sqrt(),
        dof: 2.0 * state.ig_shape,
    })
}

/// `P(β > 0 | D)`.
pub fn prob_positive(marginal: &CoefficientMarginal) -> Result<f64> {
    Ok(1.0 - marginal.cdf(0.0)?)
}

/// `P(β < 0 | D)`, defined as the complement of [`prob_positive`].
pub fn prob_negative(marginal: &CoefficientMarginal) -> Result<f64> {
    Ok(1.0 - prob_positive(marginal)?)
}

/// Equal-tailed credible interval at `level`.
pub fn credible_interval(marginal: &CoefficientMarginal, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let q = student_t_quantile(0.5 + 0.5 * level, marginal.dof)?;
    Ok((
        marginal.location - q * marginal.scale,
        marginal.location + q * marginal.scale,
    ))
}

/// KL divergence (nats) from the lagged marginal to the current one, computed
/// between moment-matched Gaussians: `KL(N(current) || N(lagged))`.
pub fn kl_stability(current: &CoefficientMarginal, lagged: &CoefficientMarginal) -> Result<f64> {
    let var_now = current
        .variance()
        .ok_or(Error::StabilityUndefined { dof: current.dof })?;
    let var_lag = lagged
        .variance()
        .ok_or(Error::StabilityUndefined { dof: lagged.dof })?;
    let diff = current.location - lagged.location;
    let kl = 0.5 * ((var_lag / var_now).ln() + (var_now + diff * diff) / var_lag - 1.0);
    Ok(kl.max(0.0))
}

fn check_eval(state: &PosteriorState, rows: &[Vec<f64>], outcomes: &[f64]) -> Result<()> {
    if state.n_obs == 0 {
        return Err(Error::Validation(
            "posterior has absorbed no observations".into(),
        ));
    }
    if rows.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if rows.len() != outcomes.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: outcomes.len(),
        });
    }
    Ok(())
}

/// Fraction of observations inside their central posterior predictive
/// interval at `level`.
pub fn posterior_predictive_coverage(
    state: &PosteriorState,
    design_rows: &[Vec<f64>],
    outcomes: &[f64],
    level: f64,
) -> Result<f64> {
    check_eval(state, design_rows, outcomes)?;
    let mut inside = 0usize;
    for (row, &y) in design_rows.iter().zip(outcomes) {
        let (lo, hi) = credible_interval(&state.predictive(row)?, level)?;
        if lo <= y && y <= hi {
            inside += 1;
        }
    }
    Ok(inside as f64 / outcomes.len() as f64)
}

/// One-sample Kolmogorov-Smirnov result against Uniform(0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// KS statistic of `values` against Uniform(0, 1) with the asymptotic
/// Kolmogorov p-value `Q(√n·D)`.
pub fn ks_uniform(values: &[f64]) -> Result<KsResult> {
    if values.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut u = values.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let statistic = u
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_survival(n.sqrt() * statistic),
    })
}

/// Posterior predictive calibration check.
///
/// Draws `n_samples` parameter vectors `(β, σ²)` from the posterior and
/// estimates each observation's probability integral transform as the average
/// of `Φ((y − xᵀβ)/σ)` over the draws, then tests the PIT values for
/// uniformity.
pub fn ks_calibration(
    state: &PosteriorState,
    design_rows: &[Vec<f64>],
    outcomes: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<KsResult> {
    check_eval(state, design_rows, outcomes)?;
    if n_samples < 100 {
        return Err(Error::InvalidConfig(format!(
            "need at least 100 predictive samples, got {n_samples}"
        )));
    }
    for row in design_rows {
        check_row(row, state.dim())?;
    }
    let cov = state.unscaled_covariance()?;
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Validation("posterior covariance is not positive definite".into()))?;
    let lower = chol.l();
    let mean = state.mean();
    let precision_gamma = Gamma::new(state.ig_shape, 1.0 / state.ig_rate)
        .map_err(|e| Error::InvalidConfig(format!("posterior shape/rate: {e}")))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut pit = vec![0.0; outcomes.len()];
    let d = state.dim();
    for _ in 0..n_samples {
        let sigma2 = 1.0 / precision_gamma.sample(&mut rng);
        let sigma = sigma2.sqrt();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let beta = &mean + (&lower * z) * sigma;
        for ((row, &y), acc) in design_rows.iter().zip(outcomes).zip(pit.iter_mut()) {
            let fit: f64 = row.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
            *acc += normal_cdf((y - fit) / sigma);
        }
    }
    for p in &mut pit {
        *p /= n_samples as f64;
    }
    ks_uniform(&pit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nof1_oracles::{adaptive_simpson, gaussian_kl, student_t_pdf_quadrature};

    fn two_col(rows: &[(f64, f64)]) -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            rows.iter().map(|&(x, _)| vec![1.0, x]).collect(),
            rows.iter().map(|&(_, y)| y).collect(),
        )
    }

    #[test]
    fn empty_update_is_prior() {
        let prior = PriorConfig::default();
        let state = posterior_update(&prior, 2, &[], &[]).unwrap();
        assert_eq!(state, PosteriorState::from_prior(&prior, 2));
    }

    #[test]
    fn prior_marginal_formula() {
        let prior = PriorConfig {
            coefficient_variance: 10.0,
            ig_shape: 2.0,
            ig_rate: 1.0,
        };
        let m = coefficient_marginal(&PosteriorState::from_prior(&prior, 2), 1).unwrap();
        assert_eq!(m.location, 0.0);
        assert_eq!(m.dof, 4.0);
        assert_abs_diff_eq!(m.scale * m.scale, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn index_out_of_range() {
        let s = PosteriorState::from_prior(&PriorConfig::default(), 2);
        assert!(matches!(
            coefficient_marginal(&s, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let prior = PriorConfig::default();
        assert!(matches!(
            posterior_update(&prior, 2, &[vec![1.0]], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            posterior_update(&prior, 2, &[vec![1.0, 0.0]], &[]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            posterior_update(&prior, 2, &[vec![1.0, 0.0]], &[f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn incremental_matches_batch() {
        let prior = PriorConfig::default();
        let (rows, ys) = two_col(&[(1.0, 7.0), (0.0, 4.0), (1.0, 6.5), (1.0, 5.0), (0.0, 3.2)]);
        let batch = posterior_update(&prior, 2, &rows, &ys).unwrap();
        let mut inc = PosteriorState::from_prior(&prior, 2);
        for (r, &y) in rows.iter().zip(&ys) {
            inc = inc.update(r, y).unwrap();
        }
        assert_eq!(inc.n_obs, batch.n_obs);
        assert_abs_diff_eq!(inc.ig_shape, batch.ig_shape, epsilon = 1e-12);
        assert_abs_diff_eq!(inc.ig_rate, batch.ig_rate, epsilon = 1e-10);
        for i in 0..2 {
            assert_abs_diff_eq!(inc.coef_mean[i], batch.coef_mean[i], epsilon = 1e-10);
            for j in 0..2 {
                assert_abs_diff_eq!(
                    inc.coef_precision[i][j],
                    batch.coef_precision[i][j],
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn prob_positive_symmetry_and_limit() {
        let m = StudentT {
            location: 0.0,
            scale: 3.0,
            dof: 7.0,
        };
        assert_eq!(prob_positive(&m).unwrap(), 0.5);
        let far = StudentT {
            location: 5.0,
            scale: 0.01,
            dof: 4.0,
        };
        assert_abs_diff_eq!(prob_positive(&far).unwrap(), 1.0, epsilon = 1e-9);
        let m = StudentT {
            location: 0.3,
            scale: 1.1,
            dof: 5.0,
        };
        assert_eq!(prob_positive(&m).unwrap() + prob_negative(&m).unwrap(), 1.0);
    }

    #[test]
    fn prob_positive_matches_density_quadrature() {
        let m = StudentT {
            location: 1.0,
            scale: 1.0,
            dof: 10.0,
        };
        let f = |x: f64| student_t_pdf_quadrature(x, 1.0, 1.0, 10.0);
        // P(β > 0) = ½ + ∫₀^1 f, the density being symmetric about 1
        let oracle = 0.5 + adaptive_simpson(&f, 0.0, 1.0, 1e-14);
        assert_abs_diff_eq!(prob_positive(&m).unwrap(), oracle, epsilon = 1e-8);
    }

    #[test]
    fn credible_interval_limits() {
        let normalish = StudentT {
            location: 0.0,
            scale: 1.0,
            dof: 1e6,
        };
        let (lo, hi) = credible_interval(&normalish, 0.95).unwrap();
        assert_abs_diff_eq!(lo, -1.959_964, epsilon = 1e-3);
        assert_abs_diff_eq!(hi, 1.959_964, epsilon = 1e-3);
        let t4 = StudentT {
            location: 0.0,
            scale: 1.0,
            dof: 4.0,
        };
        let (lo, hi) = credible_interval(&t4, 0.95).unwrap();
        assert_abs_diff_eq!(hi, 2.776, epsilon = 1e-3);
        assert_abs_diff_eq!(lo, -hi, epsilon = 1e-12);
        assert!(matches!(
            credible_interval(&t4, 1.0),
            Err(Error::InvalidLevel(_))
        ));
        assert!(matches!(
            credible_interval(&t4, 0.0),
            Err(Error::InvalidLevel(_))
        ));
    }

    #[test]
    fn kl_self_and_unit_shift() {
        let a = StudentT {
            location: 0.3,
            scale: 0.7,
            dof: 9.0,
        };
        assert_eq!(kl_stability(&a, &a).unwrap(), 0.0);
        // dof → ∞ makes the moment-matched variance equal scale²
        let p = StudentT {
            location: 0.0,
            scale: 1.0,
            dof: 1e12,
        };
        let q = StudentT {
            location: 1.0,
            scale: 1.0,
            dof: 1e12,
        };
        assert_abs_diff_eq!(kl_stability(&p, &q).unwrap(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn kl_matches_longhand_gaussian_formula() {
        let now = StudentT {
            location: 2.1,
            scale: 0.6,
            dof: 30.0,
        };
        let lag = StudentT {
            location: 1.7,
            scale: 0.9,
            dof: 24.0,
        };
        let oracle = gaussian_kl(2.1, 0.36 * 30.0 / 28.0, 1.7, 0.81 * 24.0 / 22.0);
        assert_abs_diff_eq!(kl_stability(&now, &lag).unwrap(), oracle, epsilon = 1e-14);
    }

    #[test]
    fn kl_undefined_for_heavy_tails() {
        let a = StudentT {
            location: 0.0,
            scale: 1.0,
            dof: 2.0,
        };
        let b = StudentT {
            location: 0.0,
            scale: 1.0,
            dof: 5.0,
        };
        assert!(matches!(
            kl_stability(&a, &b),
            Err(Error::StabilityUndefined { .. })
        ));
        assert!(matches!(
            kl_stability(&b, &a),
            Err(Error::StabilityUndefined { .. })
        ));
    }

    #[test]
    fn coverage_of_median_point() {
        let prior = PriorConfig::default();
        let (rows, ys) = two_col(&[(1.0, 7.0), (0.0, 4.0), (1.0, 6.0)]);
        let state = posterior_update(&prior, 2, &rows, &ys).unwrap();
        let row = vec![1.0, 1.0];
        let median = state.predictive(&row).unwrap().location;
        let c = posterior_predictive_coverage(&state, std::slice::from_ref(&row), &[median], 0.95)
            .unwrap();
        assert_eq!(c, 1.0);
        let c = posterior_predictive_coverage(&state, &rows, &ys, 1e-9).unwrap();
        assert_eq!(c, 0.0);
        assert!(matches!(
            posterior_predictive_coverage(&state, &[], &[], 0.95),
            Err(Error::EmptyEvaluation)
        ));
    }

    #[test]
    fn ks_point_mass_at_half() {
        let r = ks_uniform(&[0.5; 50]).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.5, epsilon = 1e-15);
        assert!(r.p_value < 1e-9);
        assert!(ks_uniform(&[]).is_err());
    }

    #[test]
    fn ks_calibration_rejects_small_sample_count() {
        let prior = PriorConfig::default();
        let (rows, ys) = two_col(&[(1.0, 7.0), (0.0, 4.0)]);
        let state = posterior_update(&prior, 2, &rows, &ys).unwrap();
        assert!(ks_calibration(&state, &rows, &ys, 99, 1).is_err());
        assert!(ks_calibration(&state, &rows, &ys, 100, 1).is_ok());
    }

    #[test]
    fn snapshot_field_names_are_fixed() {
        let s = PosteriorState::from_prior(&PriorConfig::default(), 2);
        let json = serde_json::to_value(&s).unwrap();
        let keys: Vec<&str> = json
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        for k in [
            "coef_mean",
            "coef_precision",
            "ig_shape",
            "ig_rate",
            "n_obs",
        ] {
            assert!(keys.contains(&k), "{k}");
        }
        let back: PosteriorState = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
    }
}
