//! Local linear regression with constant or nearest-neighbour bandwidths.
//!
//! A fit at a target `t` is a weighted least-squares line through the donor
//! points, evaluated at `t`. Because the fit is linear in the donor outcomes
//! it is represented by a weight row `w` with `fit = w · y`.

use std::fmt;

use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Minimum neighbour count for nearest-neighbour bandwidths. The k-th
/// neighbour receives zero weight, so three leaves two positive weights.
pub const MIN_NEIGHBORS: usize = 3;

const SINGULAR_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandwidthKind {
    Constant,
    NearestNeighbor,
}

impl BandwidthKind {
    pub fn name(self) -> &'static str {
        match self {
            BandwidthKind::Constant => "constant",
            BandwidthKind::NearestNeighbor => "nn",
        }
    }
}

impl std::str::FromStr for BandwidthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" | "const" | "fixed" => Ok(BandwidthKind::Constant),
            "nn" | "nearest-neighbor" | "nearest_neighbor" | "knn" => Ok(BandwidthKind::NearestNeighbor),
            _ => Err(Error::Unknown { kind: "bandwidth kind", name: s.to_string() }),
        }
    }
}

/// A smoothing parameter: either a fixed radius or the fraction of group
/// observations that defines each local radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    kind: BandwidthKind,
    value: f64,
}

impl Bandwidth {
    pub fn new(kind: BandwidthKind, value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidBandwidth(format!("{value} is not a positive finite value")));
        }
        if kind == BandwidthKind::NearestNeighbor && value > 1.0 {
            return Err(Error::InvalidBandwidth(format!("nearest-neighbour fraction {value} exceeds 1")));
        }
        Ok(Bandwidth { kind, value })
    }

    pub fn constant(radius: f64) -> Result<Self> {
        Self::new(BandwidthKind::Constant, radius)
    }

    pub fn nearest_neighbor(fraction: f64) -> Result<Self> {
        Self::new(BandwidthKind::NearestNeighbor, fraction)
    }

    pub fn kind(&self) -> BandwidthKind {
        self.kind
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.value)
    }
}

/// Covariates and outcomes of one treatment group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl GroupSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput(format!("x has {} values, y has {}", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(Error::DegenerateGroups(format!("group has {} observations", x.len())));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in group sample".into()));
        }
        Ok(GroupSample { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Same covariates, different outcomes.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        GroupSample::new(self.x.clone(), y)
    }
}

/// The linear-smoother row for one target point.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub target: f64,
    pub weights: Vec<f64>,
}

impl WeightRow {
    pub fn apply(&self, values: &[f64]) -> f64 {
        dot(&self.weights, values)
    }
}

/// Dense row-major matrix whose rows are weight rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SmoothingMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), values)).collect()
    }

    /// `Sᵀ v`.
    pub fn apply_transpose(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &v) in values.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(i)) {
                *o += v * w;
            }
        }
        out
    }

    /// `Σᵢ rowᵢ`.
    pub fn column_sums(&self) -> Vec<f64> {
        self.apply_transpose(&vec![1.0; self.rows])
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// `trace(S Sᵀ) = Σᵢ ‖rowᵢ‖²`.
    pub fn trace_sst(&self) -> f64 {
        self.data.iter().map(|w| w * w).sum()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Number of neighbours used for fraction `fraction` of `n` donors.
pub fn neighbor_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).max(MIN_NEIGHBORS)
}

/// Distance from `target` to its k-th nearest donor, ignoring donors equal
/// to `target`, with `k = max(round(fraction · n), 3)` capped at the number
/// of eligible donors.
pub fn nn_radius(donors_x: &[f64], target: f64, fraction: f64) -> Result<f64> {
    if donors_x.is_empty() {
        return Err(Error::InsufficientDonors { eligible: 0 });
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidBandwidth(format!("fraction {fraction} outside (0, 1]")));
    }
    let mut dist = eligible_distances(donors_x, target, None);
    if dist.len() < MIN_NEIGHBORS {
        return Err(Error::InsufficientDonors { eligible: dist.len() });
    }
    let k = neighbor_count(fraction, donors_x.len()).min(dist.len());
    Ok(kth_smallest(&mut dist, k))
}

fn eligible_distances(donors_x: &[f64], target: f64, skip: Option<usize>) -> Vec<f64> {
    donors_x
        .iter()
        .enumerate()
        .filter(|&(k, &x)| Some(k) != skip && x != target)
        .map(|(_, &x)| (x - target).abs())
        .collect()
}

fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    *kth
}

/// Local linear smoother with a fixed kernel and bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalLinear {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
}

impl LocalLinear {
    pub fn new(kernel: Kernel, bandwidth: Bandwidth) -> Self {
        LocalLinear { kernel, bandwidth }
    }

    pub fn weight_row(&self, donors_x: &[f64], target: f64) -> Result<WeightRow> {
        let mut weights = vec![0.0; donors_x.len()];
        self.row_into(donors_x, target, None, &mut weights)?;
        Ok(WeightRow { target, weights })
    }

    /// Rows at every evaluation point; `rows × donors`.
    pub fn smoothing_matrix(&self, donors_x: &[f64], eval_points: &[f64]) -> Result<SmoothingMatrix> {
        let cols = donors_x.len();
        let mut data = vec![0.0; eval_points.len() * cols];
        for (i, (&t, out)) in eval_points.iter().zip(data.chunks_mut(cols.max(1))).enumerate() {
            self.row_into(donors_x, t, None, out).map_err(|e| at_point(e, i, t))?;
        }
        Ok(SmoothingMatrix { rows: eval_points.len(), cols, data })
    }

    /// `Σᵢ rowᵢ` over the evaluation points without storing the matrix.
    pub fn column_sums(&self, donors_x: &[f64], eval_points: &[f64]) -> Result<Vec<f64>> {
        let mut sums = vec![0.0; donors_x.len()];
        let mut row = vec![0.0; donors_x.len()];
        for (i, &t) in eval_points.iter().enumerate() {
            self.row_into(donors_x, t, None, &mut row).map_err(|e| at_point(e, i, t))?;
            for (s, w) in sums.iter_mut().zip(&row) {
                *s += w;
            }
        }
        Ok(sums)
    }

    pub fn fit(&self, donors: &GroupSample, eval_points: &[f64]) -> Result<Vec<f64>> {
        let mut row = vec![0.0; donors.len()];
        eval_points
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                self.row_into(donors.x(), t, None, &mut row).map_err(|e| at_point(e, i, t))?;
                Ok(dot(&row, donors.y()))
            })
            .collect()
    }

    /// Entry `i` is the fit at `xᵢ` from all donors except `i`; for
    /// nearest-neighbour bandwidths the radius is taken in the reduced set.
    pub fn loo_fit(&self, donors: &GroupSample) -> Result<Vec<f64>> {
        if donors.len() < 4 {
            return Err(Error::DegenerateGroups(format!(
                "leave-one-out needs at least 4 donors, got {}",
                donors.len()
            )));
        }
        let mut row = vec![0.0; donors.len()];
        donors
            .x()
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                self.row_into(donors.x(), t, Some(i), &mut row).map_err(|e| at_point(e, i, t))?;
                Ok(dot(&row, donors.y()))
            })
            .collect()
    }

    /// Writes the weight row for `target` into `out`; donor `skip`, if any,
    /// is treated as absent and gets weight zero.
    pub(crate) fn row_into(
        &self,
        donors_x: &[f64],
        target: f64,
        skip: Option<usize>,
        out: &mut [f64],
    ) -> Result<()> {
        debug_assert_eq!(out.len(), donors_x.len());
        match self.bandwidth.kind() {
            BandwidthKind::Constant => {
                let radius = self.bandwidth.value();
                if local_row(self.kernel, donors_x, target, radius, skip, out) {
                    Ok(())
                } else {
                    Err(Error::BandwidthTooSmall { target })
                }
            }
            BandwidthKind::NearestNeighbor => {
                let n_present = donors_x.len() - usize::from(skip.is_some());
                let mut dist = eligible_distances(donors_x, target, skip);
                if dist.len() < MIN_NEIGHBORS {
                    return Err(Error::InsufficientDonors { eligible: dist.len() });
                }
                let mut k = neighbor_count(self.bandwidth.value(), n_present).min(dist.len());
                let radius = kth_smallest(&mut dist, k);
                if local_row(self.kernel, donors_x, target, radius, skip, out) {
                    return Ok(());
                }
                dist.sort_unstable_by(|a, b| a.total_cmp(b));
                while k < dist.len() {
                    k += 1;
                    log::debug!("singular local design at {target}; expanding to {k} neighbours");
                    if local_row(self.kernel, donors_x, target, dist[k - 1], skip, out) {
                        return Ok(());
                    }
                }
                Err(Error::BandwidthTooSmall { target })
            }
        }
    }
}

fn at_point(e: Error, index: usize, x: f64) -> Error {
    match e {
        wrapped @ Error::AtEvalPoint { .. } => wrapped,
        other => Error::AtEvalPoint { index, x, source: Box::new(other) },
    }
}

/// Local linear row at `target` with radius `radius`. Returns `false` when
/// the weighted 2×2 design is singular.
fn local_row(
    kernel: Kernel,
    donors_x: &[f64],
    target: f64,
    radius: f64,
    skip: Option<usize>,
    out: &mut [f64],
) -> bool {
    if !(radius > 0.0) {
        return false;
    }
    let inv = 1.0 / radius;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (k, (o, &x)) in out.iter_mut().zip(donors_x).enumerate() {
        let w = if Some(k) == skip { 0.0 } else { kernel.eval((x - target) * inv) };
        *o = w;
        if w > 0.0 {
            s0 += w;
            s1 += w * x;
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if !(s0 > 0.0) || !(hi > lo) {
        return false;
    }
    // centre at the weighted mean rather than the target for stability
    let center = s1 / s0;
    let spread: f64 = out
        .iter()
        .zip(donors_x)
        .map(|(&w, &x)| w * (x - center) * (x - center))
        .sum();
    if !(spread > SINGULAR_TOL * s0 * (hi - lo) * (hi - lo)) {
        return false;
    }
    let offset = target - center;
    for (o, &x) in out.iter_mut().zip(donors_x) {
        let w = *o;
        *o = w / s0 + offset * w * (x - center) / spread;
    }
    true
}
