//! Bandwidth-selection methods as interchangeable strategies.
//!
//! Every method implements [`SelectionMethod`] and is looked up by name in a
//! [`MethodRegistry`]. A [`SelectionContext`] carries the data, grids and any
//! side information (truth, propensity, noise variance); cross-validation
//! selections and pilot fits are computed once per context and shared.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::criteria::{
    beta_ds_parts, beta_oracle_parts, combine_tau, mse_beta_inr, mse_y_oracle, AveragedParts,
    CriterionValue, CurveFn, OracleTruth, PilotFit,
};
use crate::error::{Error, Result};
use crate::estimators::{pooled_residual_variance, residual_variance, Dataset};
use crate::kernel::Kernel;
use crate::selector::{select_cv, select_joint_indexed, select_single, BandwidthGrid, JointSelection, Selection};
use crate::smoother::Bandwidth;

/// Where data-driven criteria take the noise variance from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSource {
    Known(f64),
    /// Residual variance per group at that group's cross-validated bandwidth.
    Estimated,
    /// As `Estimated`, pooling both groups' residuals.
    Pooled,
}

pub struct SelectionContext<'a> {
    pub data: &'a Dataset,
    pub kernel: Kernel,
    pub grid1: BandwidthGrid,
    pub grid0: BandwidthGrid,
    pub truth: Option<&'a OracleTruth>,
    /// `P(z = 1 | x)` for inverse-propensity weighting.
    pub propensity: Option<CurveFn>,
    pub noise: NoiseSource,
    cv: [OnceLock<Result<Selection>>; 2],
    pilots: [OnceLock<Result<PilotFit>>; 2],
    sigma2: OnceLock<Result<[f64; 2]>>,
}

impl<'a> SelectionContext<'a> {
    pub fn new(data: &'a Dataset, kernel: Kernel, grid1: BandwidthGrid, grid0: BandwidthGrid) -> Self {
        SelectionContext {
            data,
            kernel,
            grid1,
            grid0,
            truth: None,
            propensity: None,
            noise: NoiseSource::Estimated,
            cv: Default::default(),
            pilots: Default::default(),
            sigma2: OnceLock::new(),
        }
    }

    /// Oracle setting: truth for oracle criteria, true noise variance and
    /// propensity for the data-driven ones.
    pub fn with_truth(mut self, truth: &'a OracleTruth) -> Self {
        self.truth = Some(truth);
        self.propensity = Some(truth.propensity.clone());
        self.noise = NoiseSource::Known(truth.sigma2);
        self
    }

    pub fn with_propensity(mut self, propensity: CurveFn) -> Self {
        self.propensity = Some(propensity);
        self
    }

    pub fn with_noise(mut self, noise: NoiseSource) -> Self {
        self.noise = noise;
        self
    }

    pub fn grid(&self, j: u8) -> &BandwidthGrid {
        if j == 1 {
            &self.grid1
        } else {
            &self.grid0
        }
    }

    fn slot(j: u8) -> usize {
        usize::from(j == 1)
    }

    pub fn truth(&self, method: &str) -> Result<&'a OracleTruth> {
        self.truth.ok_or_else(|| Error::MissingInput { method: method.to_string(), what: "the true design" })
    }

    /// Cross-validation selection for group `j`.
    pub fn cv_selection(&self, j: u8) -> Result<&Selection> {
        self.cv[Self::slot(j)]
            .get_or_init(|| select_cv(self.data.group(j), self.kernel, self.grid(j)))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Pilot fit at the cross-validated bandwidth of group `j`.
    pub fn pilot(&self, j: u8) -> Result<&PilotFit> {
        self.pilots[Self::slot(j)]
            .get_or_init(|| {
                let g = self.cv_selection(j)?.h_star();
                PilotFit::new(self.data.x(), self.data.group(j), self.kernel, g)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Noise variance used by data-driven criteria for group `j`.
    pub fn sigma2(&self, j: u8) -> Result<f64> {
        let both = self
            .sigma2
            .get_or_init(|| match self.noise {
                NoiseSource::Known(s) => Ok([s, s]),
                NoiseSource::Estimated => {
                    let s0 = residual_variance(self.data.control(), self.kernel, self.cv_selection(0)?.h_star())?;
                    let s1 = residual_variance(self.data.treated(), self.kernel, self.cv_selection(1)?.h_star())?;
                    Ok([s0, s1])
                }
                NoiseSource::Pooled => {
                    let s = pooled_residual_variance(
                        (self.data.treated(), self.cv_selection(1)?.h_star()),
                        (self.data.control(), self.cv_selection(0)?.h_star()),
                        self.kernel,
                    )?;
                    Ok([s, s])
                }
            })
            .as_ref()
            .map_err(Clone::clone)?;
        Ok(both[Self::slot(j)])
    }

    /// `P(z = j | xᵢʲ)` at the members of group `j`.
    pub fn group_propensity(&self, j: u8, method: &str) -> Result<Vec<f64>> {
        let p = self
            .propensity
            .as_ref()
            .ok_or_else(|| Error::MissingInput { method: method.to_string(), what: "a propensity score" })?;
        Ok(self
            .data
            .group(j)
            .x()
            .iter()
            .map(|&x| if j == 1 { p(x) } else { 1.0 - p(x) })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub enum Surface {
    PerGroup { treated: Selection, control: Selection },
    Joint(JointSelection),
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub h1: Bandwidth,
    pub h0: Bandwidth,
    pub surface: Surface,
}

impl MethodOutcome {
    fn per_group(treated: Selection, control: Selection) -> Self {
        MethodOutcome { h1: treated.h_star(), h0: control.h_star(), surface: Surface::PerGroup { treated, control } }
    }

    fn joint(sel: JointSelection) -> Self {
        let (h1, h0) = sel.h_star();
        MethodOutcome { h1, h0, surface: Surface::Joint(sel) }
    }
}

pub trait SelectionMethod: Send + Sync {
    /// Registry key, lowercase.
    fn name(&self) -> &'static str;

    /// Display label used in reports.
    fn label(&self) -> &'static str;

    /// Oracle methods need the true design.
    fn is_oracle(&self) -> bool {
        false
    }

    fn select(&self, ctx: &SelectionContext<'_>) -> Result<MethodOutcome>;
}

fn per_group<F>(ctx: &SelectionContext<'_>, criterion: F) -> Result<MethodOutcome>
where
    F: Fn(u8, Bandwidth) -> Result<CriterionValue> + Sync,
{
    let treated = select_single(|h| criterion(1, h), ctx.grid(1))?;
    let control = select_single(|h| criterion(0, h), ctx.grid(0))?;
    Ok(MethodOutcome::per_group(treated, control))
}

fn joint_from_parts<F>(ctx: &SelectionContext<'_>, parts: F) -> Result<MethodOutcome>
where
    F: Fn(u8, Bandwidth) -> Result<AveragedParts> + Sync,
{
    let table = |j: u8| -> Vec<Result<AveragedParts>> {
        let grid = ctx.grid(j);
        (0..grid.len()).into_par_iter().map(|i| parts(j, grid.bandwidth(i))).collect()
    };
    let (p1, p0) = (table(1), table(0));
    let sel = select_joint_indexed(ctx.grid(1), ctx.grid(0), |i1, i0| {
        let a = p1[i1].as_ref().map_err(Clone::clone)?;
        let b = p0[i0].as_ref().map_err(Clone::clone)?;
        Ok(combine_tau(a, b))
    })?;
    Ok(MethodOutcome::joint(sel))
}

/// Minimises the average conditional MSE of each fitted curve.
pub struct OracleCurve;

impl SelectionMethod for OracleCurve {
    fn name(&self) -> &'static str {
        "m_y"
    }
    fn label(&self) -> &'static str {
        "M_y"
    }
    fn is_oracle(&self) -> bool {
        true
    }
    fn select(&self, ctx: &SelectionContext<'_>) -> Result<MethodOutcome> {
        let truth = ctx.truth(self.name())?;
        per_group(ctx, |j, h| mse_y_oracle(ctx.data.group(j), ctx.kernel, h, truth.beta(j).as_ref(), truth.sigma2))
    }
}

/// Minimises the MSE of each averaged fitted curve separately.
pub struct OracleAverage;

impl SelectionMethod for OracleAverage {
    fn name(&self) -> &'static str {
        "m_beta"
    }
    fn label(&self) -> &'static str {
        "M_beta"
    }
    fn is_oracle(&self) -> bool {
        true
    }
    fn select(&self, ctx: &SelectionContext<'_>) -> Result<MethodOutcome> {
        let truth = ctx.truth(self.name())?;
        per_group(ctx, |j, h| {
            beta_oracle_parts(ctx.data.x(), ctx.data.group(j), ctx.kernel, h, truth.beta(j).as_ref(), truth.sigma2)
                .map(|p| p.value())
        })
    }
}

/// Minimises the MSE of the effect estimate jointly in both bandwidths.
pub struct OracleEffect;

impl SelectionMethod for OracleEffect {
    fn name(&self) -> &'static str {
        "m_tau"
    }
    fn label(&self) -> &'static str {
        "M_tau"
    }
    fn is_oracle(&self) -> bool {
        true
    }
    fn select(&self, ctx: &SelectionContext<'_>) -> Result<MethodOutcome> {
        let truth = ctx.truth(self.name())?;
        joint_from_parts(ctx, |j, h| {
            beta_oracle_parts(ctx.data.x(), ctx.data.group(j), ctx.kernel, h, truth.beta(j).as_ref(), truth.sigma2)
        })
    }
}

/// Leave-one-out cross-validation per group.
pub struct CrossValidation;

impl SelectionMethod for CrossValidation {
    fn name(&self) -> &'static str {
        "cv"
    }
    fn label(&self) -> &'static str {
        "CV"
    }
    fn select(&self, ctx: &SelectionContext<'_>) -> Result<MethodOutcome> {
        let treated = ctx.cv_selection(1)?.clone();
        let control = ctx.cv_selection(0)?.clone();
        Ok(MethodOutcome::per_group(treated, control))
    }
}

/// Inverse-propensity plug-in estimate of the averaged-curve MSE.
pub struct InversePropensity;

impl SelectionMethod for InversePropensity {
    fn name(&self) -> &'static str {
        "inr"
    }
    fn label(&self) -> &'static str {
        "INR"
    }
    fn select(&self, ctx: &SelectionContext<'_>) -> Result<MethodOutcome> {
        let props = [ctx.group_propensity(0, self.name())?, ctx.group_propensity(1, self.name())?];
        let sigma2 = [ctx.sigma2(0)?, ctx.sigma2(1)?];
        per_group(ctx, |j, h| {
            let s = usize::from(j);
            mse_beta_inr(ctx.data.x(), ctx.data.group(j), ctx.kernel, h, &props[s], sigma2[s])
        })
    }
}

/// Double-smoothing estimate of each averaged-curve MSE.
pub struct DoubleSmoothingAverage;

impl SelectionMethod for DoubleSmoothingAverage {
    fn name(&self) -> &'static str {
        "ds_beta"
    }
    fn label(&self) -> &'static str {
        "DS_beta"
    }
    fn select(&self, ctx: &SelectionContext<'_>) -> Result<MethodOutcome> {
        let pilots = [ctx.pilot(0)?, ctx.pilot(1)?];
        let sigma2 = [ctx.sigma2(0)?, ctx.sigma2(1)?];
        per_group(ctx, |j, h| {
            let s = usize::from(j);
            beta_ds_parts(ctx.data.x(), ctx.data.group(j), ctx.kernel, h, pilots[s], sigma2[s]).map(|p| p.value())
        })
    }
}

/// Double-smoothing estimate of the effect MSE, minimised jointly.
pub struct DoubleSmoothingEffect;

impl SelectionMethod for DoubleSmoothingEffect {
    fn name(&self) -> &'static str {
        "ds_tau"
    }
    fn label(&self) -> &'static str {
        "DS_tau"
    }
    fn select(&self, ctx: &SelectionContext<'_>) -> Result<MethodOutcome> {
        let pilots = [ctx.pilot(0)?, ctx.pilot(1)?];
        let sigma2 = [ctx.sigma2(0)?, ctx.sigma2(1)?];
        joint_from_parts(ctx, |j, h| {
            let s = usize::from(j);
            beta_ds_parts(ctx.data.x(), ctx.data.group(j), ctx.kernel, h, pilots[s], sigma2[s])
        })
    }
}

/// Methods keyed by name, in registration order.
#[derive(Default)]
pub struct MethodRegistry {
    methods: Vec<Box<dyn SelectionMethod>>,
}

impl MethodRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// All seven built-in methods.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        r.register(Box::new(OracleAverage));
        r.register(Box::new(OracleEffect));
        r.register(Box::new(OracleCurve));
        r.register(Box::new(CrossValidation));
        r.register(Box::new(InversePropensity));
        r.register(Box::new(DoubleSmoothingAverage));
        r.register(Box::new(DoubleSmoothingEffect));
        r
    }

    /// Replaces any method already registered under the same name.
    pub fn register(&mut self, method: Box<dyn SelectionMethod>) {
        self.methods.retain(|m| m.name() != method.name());
        self.methods.push(method);
    }

    /// Case-insensitive lookup by name or label.
    pub fn get(&self, name: &str) -> Option<&dyn SelectionMethod> {
        let key = name.trim().to_ascii_lowercase();
        self.methods
            .iter()
            .find(|m| m.name() == key || m.label().eq_ignore_ascii_case(&key))
            .map(|m| m.as_ref())
    }

    pub fn resolve(&self, names: &[String]) -> Result<Vec<&dyn SelectionMethod>> {
        let mut out: Vec<&dyn SelectionMethod> = Vec::with_capacity(names.len());
        for name in names {
            let m = self.get(name).ok_or_else(|| Error::Unknown { kind: "method", name: name.clone() })?;
            if !out.iter().any(|o| o.name() == m.name()) {
                out.push(m);
            }
        }
        Ok(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn SelectionMethod> {
        self.methods.iter().map(|m| m.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed;

    impl SelectionMethod for Fixed {
        fn name(&self) -> &'static str {
            "fixed"
        }
        fn label(&self) -> &'static str {
            "Fixed"
        }
        fn select(&self, ctx: &SelectionContext<'_>) -> Result<MethodOutcome> {
            per_group(ctx, |_, h| Ok(CriterionValue::total_only(-h.value())))
        }
    }

    #[test]
    fn registry_lookup() {
        let r = MethodRegistry::builtin();
        assert_eq!(r.names().len(), 7);
        assert_eq!(r.get("DS_tau").unwrap().name(), "ds_tau");
        assert_eq!(r.get("M_beta").unwrap().name(), "m_beta");
        assert!(r.get("gcv").is_none());
        let list = r.resolve(&["cv".into(), "CV".into(), "inr".into()]).unwrap();
        assert_eq!(list.len(), 2);
        assert!(r.resolve(&["nope".into()]).is_err());
    }

    #[test]
    fn custom_strategy() {
        let mut r = MethodRegistry::builtin();
        r.register(Box::new(Fixed));
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let z: Vec<bool> = (0..30).map(|i| i % 3 != 0).collect();
        let y = x.iter().map(|v| v.sin()).collect();
        let data = Dataset::new(x, y, z).unwrap();
        let grid = crate::selector::default_grid(30);
        let ctx = SelectionContext::new(&data, Kernel::Tricube, grid.clone(), grid);
        let out = r.get("fixed").unwrap().select(&ctx).unwrap();
        assert_eq!(out.h1.value(), 1.0);
    }

    #[test]
    fn oracle_needs_truth() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let z: Vec<bool> = (0..30).map(|i| i % 2 == 0).collect();
        let data = Dataset::new(x.clone(), x, z).unwrap();
        let grid = crate::selector::default_grid(30);
        let ctx = SelectionContext::new(&data, Kernel::Tricube, grid.clone(), grid);
        let e = OracleEffect.select(&ctx).unwrap_err();
        assert!(matches!(e, Error::MissingInput { .. }));
        let e = InversePropensity.select(&ctx).unwrap_err();
        assert!(matches!(e, Error::MissingInput { .. }));
    }
}
