//! Bandwidth-selection criteria.
//!
//! Oracle criteria (`mse_y_oracle`, `mse_beta_oracle`, `mse_tau_oracle`)
//! evaluate exact conditional mean squared errors given the true regression
//! functions and noise variance. Data-driven criteria (`cv_score`,
//! `mse_beta_inr`, `mse_beta_ds`, `mse_tau_ds`) replace the unknowns with
//! estimates.
//!
//! Variance terms of the averaged-curve criteria use
//! `Σᵢ Σₖ rowᵢ · rowₖ = ‖Σᵢ rowᵢ‖²`, so only the column sums of the
//! smoothing matrix at all covariates are ever formed.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::smoother::{dot, Bandwidth, GroupSample, LocalLinear};

pub type CurveFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The data-generating truth, known only in simulation.
#[derive(Clone)]
pub struct OracleTruth {
    pub beta1: CurveFn,
    pub beta0: CurveFn,
    pub sigma2: f64,
    /// `P(z = 1 | x)`.
    pub propensity: CurveFn,
}

impl OracleTruth {
    pub fn beta(&self, j: u8) -> &CurveFn {
        if j == 1 {
            &self.beta1
        } else {
            &self.beta0
        }
    }

    /// `P(z = j | x)`.
    pub fn group_probability(&self, j: u8, x: f64) -> f64 {
        let p = (self.propensity)(x);
        if j == 1 {
            p
        } else {
            1.0 - p
        }
    }
}

impl fmt::Debug for OracleTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleTruth").field("sigma2", &self.sigma2).finish_non_exhaustive()
    }
}

/// A criterion value with its variance and squared-bias summands when the
/// criterion has that decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionValue {
    pub variance: Option<f64>,
    pub bias_sq: Option<f64>,
    pub total: f64,
}

impl CriterionValue {
    pub fn from_parts(variance: f64, bias_sq: f64) -> Self {
        CriterionValue { variance: Some(variance), bias_sq: Some(bias_sq), total: variance + bias_sq }
    }

    pub fn total_only(total: f64) -> Self {
        CriterionValue { variance: None, bias_sq: None, total }
    }
}

/// Variance term and average bias of the averaged fit `(1/n) Σᵢ β̂ⱼ(xᵢ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedParts {
    pub variance: f64,
    pub mean_bias: f64,
}

impl AveragedParts {
    pub fn value(&self) -> CriterionValue {
        CriterionValue::from_parts(self.variance, self.mean_bias * self.mean_bias)
    }

    /// `variance = (σ²/n²)‖c‖²`, `mean_bias = (c · g(xʲ) − Σᵢ g(xᵢ)) / n`
    /// where `c` is the column-sum vector.
    pub fn from_column_sums(col_sums: &[f64], sigma2: f64, target_at_donors: &[f64], target_at_all: &[f64]) -> Self {
        let n = target_at_all.len() as f64;
        let variance = sigma2 * dot(col_sums, col_sums) / (n * n);
        let smoothed = dot(col_sums, target_at_donors);
        let truth: f64 = target_at_all.iter().sum();
        AveragedParts { variance, mean_bias: (smoothed - truth) / n }
    }
}

/// Mean squared error of the effect estimate from the two groups' averaged
/// parts: variances add and the biases enter as `(b̄₁ − b̄₀)²`.
pub fn combine_tau(treated: &AveragedParts, control: &AveragedParts) -> CriterionValue {
    let bias = treated.mean_bias - control.mean_bias;
    CriterionValue::from_parts(treated.variance + control.variance, bias * bias)
}

/// Leave-one-out cross-validation score.
pub fn cv_score(group: &GroupSample, kernel: Kernel, h: Bandwidth) -> Result<f64> {
    let loo = LocalLinear::new(kernel, h).loo_fit(group)?;
    let sse: f64 = group.y().iter().zip(&loo).map(|(y, f)| (y - f) * (y - f)).sum();
    Ok(sse / group.len() as f64)
}

/// Average conditional MSE of the within-group fitted curve.
pub fn mse_y_oracle(
    group: &GroupSample,
    kernel: Kernel,
    h: Bandwidth,
    beta: &dyn Fn(f64) -> f64,
    sigma2: f64,
) -> Result<CriterionValue> {
    let s = LocalLinear::new(kernel, h).smoothing_matrix(group.x(), group.x())?;
    let truth: Vec<f64> = group.x().iter().map(|&x| beta(x)).collect();
    let smoothed = s.apply(&truth);
    let nj = group.len() as f64;
    let variance = sigma2 * s.trace_sst() / nj;
    let bias_sq = smoothed.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / nj;
    Ok(CriterionValue::from_parts(variance, bias_sq))
}

pub fn beta_oracle_parts(
    all_x: &[f64],
    group: &GroupSample,
    kernel: Kernel,
    h: Bandwidth,
    beta: &dyn Fn(f64) -> f64,
    sigma2: f64,
) -> Result<AveragedParts> {
    let c = LocalLinear::new(kernel, h).column_sums(group.x(), all_x)?;
    let at_donors: Vec<f64> = group.x().iter().map(|&x| beta(x)).collect();
    let at_all: Vec<f64> = all_x.iter().map(|&x| beta(x)).collect();
    Ok(AveragedParts::from_column_sums(&c, sigma2, &at_donors, &at_all))
}

/// Conditional MSE of the averaged fitted curve `(1/n) Σᵢ β̂ⱼ(xᵢ)`.
pub fn mse_beta_oracle(
    all_x: &[f64],
    group: &GroupSample,
    kernel: Kernel,
    h: Bandwidth,
    beta: &dyn Fn(f64) -> f64,
    sigma2: f64,
) -> Result<CriterionValue> {
    Ok(beta_oracle_parts(all_x, group, kernel, h, beta, sigma2)?.value())
}

/// Conditional MSE of the imputation estimator.
pub fn mse_tau_oracle(
    all_x: &[f64],
    treated: &GroupSample,
    control: &GroupSample,
    kernel: Kernel,
    h1: Bandwidth,
    h0: Bandwidth,
    truth: &OracleTruth,
) -> Result<CriterionValue> {
    let p1 = beta_oracle_parts(all_x, treated, kernel, h1, truth.beta1.as_ref(), truth.sigma2)?;
    let p0 = beta_oracle_parts(all_x, control, kernel, h0, truth.beta0.as_ref(), truth.sigma2)?;
    Ok(combine_tau(&p1, &p0))
}

/// Plug-in estimate of the averaged-curve MSE using inverse-propensity
/// weighted residuals. `propensity_at_group[i]` is `P(z = j | xᵢʲ)`.
///
/// The variance slot holds the first term; the bias slot holds the weighted
/// residual term minus the variance correction, and may be negative.
pub fn mse_beta_inr(
    all_x: &[f64],
    group: &GroupSample,
    kernel: Kernel,
    h: Bandwidth,
    propensity_at_group: &[f64],
    sigma2_hat: f64,
) -> Result<CriterionValue> {
    if propensity_at_group.len() != group.len() {
        return Err(Error::InvalidInput(format!(
            "{} propensity values for {} group members",
            propensity_at_group.len(),
            group.len()
        )));
    }
    if let Some(&bad) = propensity_at_group.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::OverlapViolation { value: bad });
    }
    let smoother = LocalLinear::new(kernel, h);
    let c = smoother.column_sums(group.x(), all_x)?;
    let s = smoother.smoothing_matrix(group.x(), group.x())?;
    let n = all_x.len() as f64;
    let n2 = n * n;

    let variance = sigma2_hat * dot(&c, &c) / n2;
    let fitted = s.apply(group.y());
    let inv_p: Vec<f64> = propensity_at_group.iter().map(|p| 1.0 / p).collect();
    let weighted: f64 = group
        .y()
        .iter()
        .zip(&fitted)
        .zip(&inv_p)
        .map(|((y, f), w)| w * (y - f))
        .sum();
    let stp = s.apply_transpose(&inv_p);
    let correction: f64 = inv_p.iter().zip(&stp).map(|(q, sq)| (q - sq) * (q - sq)).sum();
    let bias_sq = weighted * weighted / n2 - sigma2_hat * correction / n2;
    Ok(CriterionValue::from_parts(variance, bias_sq))
}

/// A pilot fit evaluated at the group's own covariates and at all covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotFit {
    pub bandwidth: Bandwidth,
    pub at_donors: Vec<f64>,
    pub at_all: Vec<f64>,
}

impl PilotFit {
    pub fn new(all_x: &[f64], group: &GroupSample, kernel: Kernel, g: Bandwidth) -> Result<Self> {
        let smoother = LocalLinear::new(kernel, g);
        Ok(PilotFit {
            bandwidth: g,
            at_donors: smoother.fit(group, group.x())?,
            at_all: smoother.fit(group, all_x)?,
        })
    }
}

/// Double-smoothing parts: the true curve in the bias term is replaced by
/// the pilot fit.
pub fn beta_ds_parts(
    all_x: &[f64],
    group: &GroupSample,
    kernel: Kernel,
    h: Bandwidth,
    pilot: &PilotFit,
    sigma2_hat: f64,
) -> Result<AveragedParts> {
    let c = LocalLinear::new(kernel, h).column_sums(group.x(), all_x)?;
    Ok(AveragedParts::from_column_sums(&c, sigma2_hat, &pilot.at_donors, &pilot.at_all))
}

pub fn mse_beta_ds(
    all_x: &[f64],
    group: &GroupSample,
    kernel: Kernel,
    h: Bandwidth,
    pilot_g: Bandwidth,
    sigma2_hat: f64,
) -> Result<CriterionValue> {
    let pilot = PilotFit::new(all_x, group, kernel, pilot_g)?;
    Ok(beta_ds_parts(all_x, group, kernel, h, &pilot, sigma2_hat)?.value())
}

#[allow(clippy::too_many_arguments)]
pub fn mse_tau_ds(
    all_x: &[f64],
    treated: &GroupSample,
    control: &GroupSample,
    kernel: Kernel,
    h1: Bandwidth,
    h0: Bandwidth,
    pilot_g1: Bandwidth,
    pilot_g0: Bandwidth,
    sigma2_hat1: f64,
    sigma2_hat0: f64,
) -> Result<CriterionValue> {
    let pilot1 = PilotFit::new(all_x, treated, kernel, pilot_g1)?;
    let pilot0 = PilotFit::new(all_x, control, kernel, pilot_g0)?;
    let p1 = beta_ds_parts(all_x, treated, kernel, h1, &pilot1, sigma2_hat1)?;
    let p0 = beta_ds_parts(all_x, control, kernel, h0, &pilot0, sigma2_hat0)?;
    Ok(combine_tau(&p1, &p0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Vec<f64>, GroupSample, GroupSample) {
        let all: Vec<f64> = (0..30).map(|i| (i as f64 * 0.71).rem_euclid(6.0)).collect();
        let (mut x1, mut x0) = (vec![], vec![]);
        for (i, &x) in all.iter().enumerate() {
            if i % 2 == 0 {
                x1.push(x)
            } else {
                x0.push(x)
            }
        }
        let y1 = x1.iter().map(|v: &f64| v.sin()).collect();
        let y0 = x0.iter().map(|v: &f64| v.cos()).collect();
        (all, GroupSample::new(x1, y1).unwrap(), GroupSample::new(x0, y0).unwrap())
    }

    fn nn(f: f64) -> Bandwidth {
        Bandwidth::nearest_neighbor(f).unwrap()
    }

    #[test]
    fn cv_of_constant_and_line() {
        let x: Vec<f64> = (0..15).map(|i| i as f64 * 0.4).collect();
        let g = GroupSample::new(x.clone(), vec![2.5; 15]).unwrap();
        assert!(cv_score(&g, Kernel::Tricube, nn(0.3)).unwrap() < 1e-24);
        let g = g.with_y(x.iter().map(|v| 1.0 - 2.0 * v).collect()).unwrap();
        assert!(cv_score(&g, Kernel::Tricube, nn(0.3)).unwrap() < 1e-20);
    }

    #[test]
    fn oracle_zero_for_linear_truth() {
        let (all, g1, g0) = sample();
        let truth = OracleTruth {
            beta1: Arc::new(|x| 1.0 + x),
            beta0: Arc::new(|x| -3.0 * x),
            sigma2: 0.0,
            propensity: Arc::new(|_| 0.5),
        };
        let h = nn(0.4);
        assert!(mse_y_oracle(&g1, Kernel::Tricube, h, truth.beta1.as_ref(), 0.0).unwrap().total.abs() < 1e-24);
        assert!(mse_beta_oracle(&all, &g0, Kernel::Tricube, h, truth.beta0.as_ref(), 0.0).unwrap().total < 1e-24);
        let t = mse_tau_oracle(&all, &g1, &g0, Kernel::Tricube, h, nn(0.7), &truth).unwrap();
        assert!(t.total < 1e-24);
    }

    #[test]
    fn unit_variance_term() {
        let (_, g1, _) = sample();
        let h = nn(0.5);
        let v = mse_y_oracle(&g1, Kernel::Tricube, h, &|x: f64| x * x, 1.0).unwrap();
        let s = LocalLinear::new(Kernel::Tricube, h).smoothing_matrix(g1.x(), g1.x()).unwrap();
        let expected: f64 = (0..s.rows()).map(|i| dot(s.row(i), s.row(i))).sum::<f64>() / g1.len() as f64;
        assert!((v.variance.unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn collapsed_identity_when_control_unbiased() {
        let (all, g1, g0) = sample();
        let truth = OracleTruth {
            beta1: Arc::new(|x| x * x),
            beta0: Arc::new(|x| 2.0 - x),
            sigma2: 0.3,
            propensity: Arc::new(|_| 0.5),
        };
        let (h1, h0) = (nn(0.3), nn(0.6));
        let tau = mse_tau_oracle(&all, &g1, &g0, Kernel::Tricube, h1, h0, &truth).unwrap();
        let b1 = mse_beta_oracle(&all, &g1, Kernel::Tricube, h1, truth.beta1.as_ref(), 0.3).unwrap();
        let b0 = mse_beta_oracle(&all, &g0, Kernel::Tricube, h0, truth.beta0.as_ref(), 0.3).unwrap();
        assert!((tau.total - (b1.total + b0.total)).abs() < 1e-12);
    }

    #[test]
    fn inr_zero_residuals_and_unit_weights() {
        let (all, g1, _) = sample();
        let line = g1.with_y(g1.x().iter().map(|x| 4.0 * x - 1.0).collect()).unwrap();
        let h = nn(0.5);
        let p = vec![0.5; line.len()];
        let v = mse_beta_inr(&all, &line, Kernel::Tricube, h, &p, 0.7).unwrap();
        let s = LocalLinear::new(Kernel::Tricube, h).smoothing_matrix(line.x(), line.x()).unwrap();
        let q = vec![2.0; line.len()];
        let stq = s.apply_transpose(&q);
        let corr: f64 = q.iter().zip(&stq).map(|(a, b)| (a - b) * (a - b)).sum();
        let n2 = (all.len() * all.len()) as f64;
        assert!((v.bias_sq.unwrap() + 0.7 * corr / n2).abs() < 1e-14);

        let ones = vec![1.0; g1.len()];
        let v = mse_beta_inr(&all, &g1, Kernel::Tricube, h, &ones, 0.0).unwrap();
        let fitted = s.apply(g1.y());
        let resid: f64 = g1.y().iter().zip(&fitted).map(|(y, f)| y - f).sum();
        let expected = (resid / all.len() as f64).powi(2);
        assert!((v.total - expected).abs() < 1e-14);
    }

    #[test]
    fn inr_overlap_violation() {
        let (all, g1, _) = sample();
        let mut p = vec![0.5; g1.len()];
        p[3] = 0.0;
        let e = mse_beta_inr(&all, &g1, Kernel::Tricube, nn(0.5), &p, 1.0).unwrap_err();
        assert_eq!(e, Error::OverlapViolation { value: 0.0 });
    }

    #[test]
    fn ds_bias_vanishes_for_linear_pilot() {
        let (all, g1, g0) = sample();
        let line = g1.with_y(g1.x().iter().map(|x| 0.5 * x + 2.0).collect()).unwrap();
        let v = mse_beta_ds(&all, &line, Kernel::Tricube, nn(0.2), nn(0.6), 1.0).unwrap();
        assert!(v.bias_sq.unwrap() < 1e-24);

        // OLS limit: smoothing the pilot's own OLS fit is idempotent
        let huge = Bandwidth::constant(1e7).unwrap();
        let v = mse_beta_ds(&all, &g0, Kernel::Tricube, huge, huge, 1.0).unwrap();
        assert!(v.bias_sq.unwrap() < 1e-16, "{v:?}");
    }

    #[test]
    fn ds_tau_symmetric_groups_cancel() {
        let (all, g1, _) = sample();
        let (h, g) = (nn(0.35), nn(0.8));
        let v = mse_tau_ds(&all, &g1, &g1, Kernel::Tricube, h, h, g, g, 0.4, 0.4).unwrap();
        assert_eq!(v.bias_sq.unwrap(), 0.0);
        assert!(v.total > 0.0);
    }
}
