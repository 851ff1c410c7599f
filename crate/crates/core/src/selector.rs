//! Bandwidth grids and exhaustive argmin search over them.
//!
//! Grid points where the criterion cannot be evaluated are skipped. Ties go
//! to the smaller bandwidth (lexicographically smaller pair for joint
//! searches), independent of evaluation order.

use rayon::prelude::*;

use crate::criteria::{cv_score, CriterionValue};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::smoother::{Bandwidth, BandwidthKind, GroupSample};

pub const DEFAULT_GRID_POINTS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthGrid {
    kind: BandwidthKind,
    values: Vec<f64>,
}

impl BandwidthGrid {
    pub fn new(kind: BandwidthKind, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidBandwidth("empty grid".into()));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidBandwidth("grid values must be strictly ascending".into()));
        }
        for &v in &values {
            Bandwidth::new(kind, v)?;
        }
        Ok(BandwidthGrid { kind, values })
    }

    /// `count` equally spaced values from `lo` to `hi` inclusive.
    pub fn linspace(kind: BandwidthKind, lo: f64, hi: f64, count: usize) -> Result<Self> {
        let values = match count {
            0 => vec![],
            1 => vec![lo],
            _ => {
                let step = (hi - lo) / (count - 1) as f64;
                (0..count)
                    .map(|i| if i + 1 == count { hi } else { lo + step * i as f64 })
                    .collect()
            }
        };
        Self::new(kind, values)
    }

    pub fn kind(&self) -> BandwidthKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bandwidth(&self, i: usize) -> Bandwidth {
        Bandwidth::new(self.kind, self.values[i]).expect("grid values validated on construction")
    }

    pub fn bandwidths(&self) -> impl Iterator<Item = Bandwidth> + '_ {
        (0..self.len()).map(|i| self.bandwidth(i))
    }
}

/// 40 nearest-neighbour fractions on `[0.1, 1]` when `n < 500`, else on
/// `[0.02, 1]`.
pub fn default_grid(n: usize) -> BandwidthGrid {
    let lo = if n < 500 { 0.1 } else { 0.02 };
    BandwidthGrid::linspace(BandwidthKind::NearestNeighbor, lo, 1.0, DEFAULT_GRID_POINTS)
        .expect("static grid is valid")
}

/// Result of a one-dimensional search.
#[derive(Debug, Clone)]
pub struct Selection {
    pub grid: BandwidthGrid,
    /// `None` marks an infeasible grid point.
    pub surface: Vec<Option<CriterionValue>>,
    pub argmin: usize,
}

impl Selection {
    pub fn h_star(&self) -> Bandwidth {
        self.grid.bandwidth(self.argmin)
    }

    pub fn min_value(&self) -> f64 {
        self.surface[self.argmin].expect("argmin is feasible").total
    }

    pub fn infeasible_count(&self) -> usize {
        self.surface.iter().filter(|v| v.is_none()).count()
    }
}

/// Result of a search over `grid1 × grid0`; the surface is row-major with
/// the treated bandwidth as the slow index.
#[derive(Debug, Clone)]
pub struct JointSelection {
    pub grid1: BandwidthGrid,
    pub grid0: BandwidthGrid,
    pub surface: Vec<Option<CriterionValue>>,
    pub argmin: (usize, usize),
}

impl JointSelection {
    pub fn h_star(&self) -> (Bandwidth, Bandwidth) {
        (self.grid1.bandwidth(self.argmin.0), self.grid0.bandwidth(self.argmin.1))
    }

    pub fn value(&self, i1: usize, i0: usize) -> Option<CriterionValue> {
        self.surface[i1 * self.grid0.len() + i0]
    }

    pub fn min_value(&self) -> f64 {
        self.value(self.argmin.0, self.argmin.1).expect("argmin is feasible").total
    }
}

fn feasible(result: Result<CriterionValue>, label: impl FnOnce() -> String) -> Option<CriterionValue> {
    match result {
        Ok(v) if v.total.is_finite() => Some(v),
        Ok(v) => {
            log::debug!("{}: non-finite criterion {}", label(), v.total);
            None
        }
        Err(e) => {
            log::debug!("{}: infeasible ({e})", label());
            None
        }
    }
}

/// First index of the smallest feasible value.
fn argmin(surface: &[Option<CriterionValue>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in surface.iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v.total < b) {
                best = Some((i, v.total));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Evaluates `evaluate(i)` at every grid index.
pub fn select_single_indexed<F>(grid: &BandwidthGrid, evaluate: F) -> Result<Selection>
where
    F: Fn(usize) -> Result<CriterionValue> + Sync,
{
    let surface: Vec<Option<CriterionValue>> = (0..grid.len())
        .into_par_iter()
        .map(|i| feasible(evaluate(i), || format!("h = {}", grid.values()[i])))
        .collect();
    let best = argmin(&surface).ok_or(Error::AllGridPointsInfeasible { count: grid.len() })?;
    Ok(Selection { grid: grid.clone(), surface, argmin: best })
}

pub fn select_single<F>(evaluate: F, grid: &BandwidthGrid) -> Result<Selection>
where
    F: Fn(Bandwidth) -> Result<CriterionValue> + Sync,
{
    select_single_indexed(grid, |i| evaluate(grid.bandwidth(i)))
}

/// Evaluates `evaluate(i1, i0)` over the full product grid.
pub fn select_joint_indexed<F>(grid1: &BandwidthGrid, grid0: &BandwidthGrid, evaluate: F) -> Result<JointSelection>
where
    F: Fn(usize, usize) -> Result<CriterionValue> + Sync,
{
    let cols = grid0.len();
    let surface: Vec<Option<CriterionValue>> = (0..grid1.len() * cols)
        .into_par_iter()
        .map(|idx| {
            let (i1, i0) = (idx / cols, idx % cols);
            feasible(evaluate(i1, i0), || {
                format!("(h1, h0) = ({}, {})", grid1.values()[i1], grid0.values()[i0])
            })
        })
        .collect();
    let best = argmin(&surface).ok_or(Error::AllGridPointsInfeasible { count: surface.len() })?;
    Ok(JointSelection {
        grid1: grid1.clone(),
        grid0: grid0.clone(),
        surface,
        argmin: (best / cols, best % cols),
    })
}

pub fn select_joint<F>(evaluate: F, grid1: &BandwidthGrid, grid0: &BandwidthGrid) -> Result<JointSelection>
where
    F: Fn(Bandwidth, Bandwidth) -> Result<CriterionValue> + Sync,
{
    select_joint_indexed(grid1, grid0, |i1, i0| evaluate(grid1.bandwidth(i1), grid0.bandwidth(i0)))
}

/// Cross-validation search, used for pilot bandwidths.
pub fn select_cv(group: &GroupSample, kernel: Kernel, grid: &BandwidthGrid) -> Result<Selection> {
    select_single(|h| cv_score(group, kernel, h).map(CriterionValue::total_only), grid)
}

pub fn select_pilot(group: &GroupSample, kernel: Kernel, grid: &BandwidthGrid) -> Result<Bandwidth> {
    Ok(select_cv(group, kernel, grid)?.h_star())
}
