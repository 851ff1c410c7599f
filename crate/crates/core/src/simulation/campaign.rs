use rayon::prelude::*;

use crate::criteria::OracleTruth;
use crate::error::{Error, Result};
use crate::estimators::{imputation_tau, ols_control_variate, Dataset};
use crate::kernel::Kernel;
use crate::methods::{MethodRegistry, SelectionContext, SelectionMethod};
use crate::selector::{default_grid, BandwidthGrid};

use super::designs::DesignSpec;
use super::generate::{generate_stream, MAX_ATTEMPTS};
use super::significance::{significance_stars, Comparison, Stars};

pub const DEFAULT_MAX_REDRAWS: u64 = 20;

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub design: DesignSpec,
    pub n: usize,
    pub replicates: usize,
    pub base_seed: u64,
    pub methods: Vec<String>,
    pub kernel: Kernel,
    /// Defaults to the nearest-neighbour grid for `n`.
    pub grid: Option<BandwidthGrid>,
    /// Defaults to the design's outcome variance.
    pub sigma2: Option<f64>,
    /// Fresh samples tried for a replicate whose selection or fit fails.
    pub max_redraws: u64,
}

impl CampaignConfig {
    pub fn new(design: DesignSpec, n: usize, replicates: usize, base_seed: u64, methods: Vec<String>) -> Self {
        CampaignConfig {
            design,
            n,
            replicates,
            base_seed,
            methods,
            kernel: Kernel::default(),
            grid: None,
            sigma2: None,
            max_redraws: DEFAULT_MAX_REDRAWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replicate: usize,
    pub seed: u64,
    /// Samples discarded before this one, for tiny groups or failed fits.
    pub redraws: u64,
    pub method: &'static str,
    pub h1: f64,
    pub h0: f64,
    pub tau_hat: f64,
    pub tau_ols: f64,
    pub tau_true: f64,
    /// `tau_hat − (tau_ols − tau_true)`.
    pub tau_cv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: &'static str,
    pub replicates: usize,
    /// Moments of the control-variate estimate around the true effect;
    /// the variance divides by the replicate count so `mse = bias² + variance`.
    pub mse: f64,
    pub bias: f64,
    pub variance: f64,
    /// The same for the unadjusted estimate.
    pub mse_raw: f64,
    pub variance_raw: f64,
    /// Sample correlation of the unadjusted and least-squares estimates.
    pub correlation: Option<f64>,
    pub mean_h1: f64,
    pub mean_h0: f64,
    pub stars: Stars,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<MethodSummary>,
    pub comparison: Comparison,
}

impl ComparisonTable {
    pub fn row(&self, method: &str) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method.eq_ignore_ascii_case(method))
    }

    pub fn best(&self) -> &MethodSummary {
        &self.rows[self.comparison.best]
    }
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub sigma2: f64,
    pub tau_true: f64,
    /// Ordered by replicate, then by method.
    pub records: Vec<ReplicationResult>,
    pub table: ComparisonTable,
    pub total_redraws: u64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn population_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let r = cov / (va * vb).sqrt();
    r.is_finite().then_some(r)
}

struct Replicate<'a> {
    design: &'a DesignSpec,
    truth: &'a OracleTruth,
    methods: &'a [&'a dyn SelectionMethod],
    kernel: Kernel,
    grid: &'a BandwidthGrid,
    tau_true: f64,
}

impl Replicate<'_> {
    fn estimate(&self, data: &Dataset, replicate: usize, seed: u64, redraws: u64) -> Result<Vec<ReplicationResult>> {
        let ctx = SelectionContext::new(data, self.kernel, self.grid.clone(), self.grid.clone()).with_truth(self.truth);
        let tau_ols = ols_control_variate(data, &self.design.basis)?;
        self.methods
            .iter()
            .map(|m| {
                let out = m.select(&ctx)?;
                let tau_hat = imputation_tau(data, self.kernel, out.h1, out.h0)?.tau_hat;
                Ok(ReplicationResult {
                    replicate,
                    seed,
                    redraws,
                    method: m.label(),
                    h1: out.h1.value(),
                    h0: out.h0.value(),
                    tau_hat,
                    tau_ols,
                    tau_true: self.tau_true,
                    tau_cv: tau_hat - (tau_ols - self.tau_true),
                })
            })
            .collect()
    }

    fn run(&self, n: usize, sigma2: f64, seed: u64, replicate: usize, max_redraws: u64) -> Result<Vec<ReplicationResult>> {
        let mut discarded = 0;
        let mut last = None;
        for attempt in 0..=max_redraws {
            let draw = generate_stream(self.design, n, sigma2, seed, attempt * MAX_ATTEMPTS)?;
            discarded += draw.redraws;
            match self.estimate(&draw.data, replicate, seed, discarded) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    log::warn!("replicate {replicate} (seed {seed}) attempt {attempt} failed: {e}; redrawing");
                    discarded += 1;
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

pub fn run_campaign(config: &CampaignConfig, registry: &MethodRegistry) -> Result<Campaign> {
    if config.replicates == 0 {
        return Err(Error::InvalidInput("at least one replicate is required".into()));
    }
    let methods = registry.resolve(&config.methods)?;
    if methods.is_empty() {
        return Err(Error::InvalidInput("no methods requested".into()));
    }
    let sigma2 = config.sigma2.unwrap_or_else(|| config.design.design_sigma2());
    let truth = config.design.truth(sigma2);
    let grid = config.grid.clone().unwrap_or_else(|| default_grid(config.n));
    let tau_true = config.design.true_tau();
    let rep = Replicate { design: &config.design, truth: &truth, methods: &methods, kernel: config.kernel, grid: &grid, tau_true };

    let per_replicate: Vec<Result<Vec<ReplicationResult>>> = (0..config.replicates)
        .into_par_iter()
        .map(|i| rep.run(config.n, sigma2, config.base_seed.wrapping_add(i as u64), i, config.max_redraws))
        .collect();
    let mut records = Vec::with_capacity(config.replicates * methods.len());
    for r in per_replicate {
        records.extend(r?);
    }
    let total_redraws = records.iter().step_by(methods.len()).map(|r| r.redraws).sum();
    if total_redraws > 0 {
        log::info!("{total_redraws} samples redrawn over {} replicates", config.replicates);
    }
    let labels: Vec<&'static str> = methods.iter().map(|m| m.label()).collect();
    let table = summarize(&records, &labels);
    Ok(Campaign { sigma2, tau_true, records, table, total_redraws })
}

/// Per-method summaries of campaign records, in the order of `labels`.
pub fn summarize(records: &[ReplicationResult], labels: &[&'static str]) -> ComparisonTable {
    let mut rows = Vec::with_capacity(labels.len());
    let mut squared = Vec::with_capacity(labels.len());
    for &label in labels {
        let mine: Vec<&ReplicationResult> = records.iter().filter(|r| r.method == label).collect();
        let tau_true = mine.first().map_or(0.0, |r| r.tau_true);
        let cv: Vec<f64> = mine.iter().map(|r| r.tau_cv).collect();
        let raw: Vec<f64> = mine.iter().map(|r| r.tau_hat).collect();
        let ols: Vec<f64> = mine.iter().map(|r| r.tau_ols).collect();
        let se: Vec<f64> = cv.iter().map(|t| (t - tau_true).powi(2)).collect();
        rows.push(MethodSummary {
            method: label,
            replicates: mine.len(),
            mse: mean(&se),
            bias: mean(&cv) - tau_true,
            variance: population_variance(&cv),
            mse_raw: raw.iter().map(|t| (t - tau_true).powi(2)).sum::<f64>() / raw.len() as f64,
            variance_raw: population_variance(&raw),
            correlation: correlation(&raw, &ols),
            mean_h1: mine.iter().map(|r| r.h1).sum::<f64>() / mine.len() as f64,
            mean_h0: mine.iter().map(|r| r.h0).sum::<f64>() / mine.len() as f64,
            stars: Stars::None,
        });
        squared.push(se);
    }
    let refs: Vec<&[f64]> = squared.iter().map(Vec::as_slice).collect();
    let comparison = significance_stars(&refs);
    match comparison.stars {
        Stars::NotApplicable => rows.iter_mut().for_each(|r| r.stars = Stars::NotApplicable),
        s => rows[comparison.best].stars = s,
    }
    ComparisonTable { rows, comparison }
}
