//! Brute-force reference implementations: explicit weighted least squares
//! per evaluation point and criteria as literal double sums.
#![allow(dead_code)]

use ate_bandwidth::estimators::Dataset;
use ate_bandwidth::smoother::{Bandwidth, BandwidthKind, GroupSample};
use ate_bandwidth::Kernel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `e₁ᵀ (XᵀWX)⁻¹ XᵀW` with `X = [1, x − t]`, `W = diag(K(u)/b)`, or `None`
/// when fewer than two distinct covariates carry weight.
fn wls_row(kernel: Kernel, donors: &[f64], target: f64, b: f64) -> Option<Vec<f64>> {
    let n = donors.len();
    let x = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { donors[i] - target });
    let w: Vec<f64> = donors.iter().map(|&d| kernel.eval((d - target) / b) / b).collect();
    let mut support: Vec<f64> = donors.iter().zip(&w).filter(|(_, &w)| w > 0.0).map(|(&d, _)| d).collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    if support.len() < 2 {
        return None;
    }
    let wm = DMatrix::from_diagonal(&DVector::from_vec(w));
    let xtw = x.transpose() * &wm;
    let inv = (&xtw * &x).try_inverse()?;
    let hat = inv * xtw;
    Some(hat.row(0).iter().copied().collect())
}

/// Sorted distances from `target` to donors other than those equal to it.
pub fn sorted_distances(donors: &[f64], target: f64) -> Vec<f64> {
    let mut d: Vec<f64> = donors.iter().filter(|&&x| x != target).map(|&x| (x - target).abs()).collect();
    d.sort_by(f64::total_cmp);
    d
}

pub fn oracle_row(kernel: Kernel, bw: Bandwidth, donors: &[f64], target: f64) -> Option<Vec<f64>> {
    match bw.kind() {
        BandwidthKind::Constant => wls_row(kernel, donors, target, bw.value()),
        BandwidthKind::NearestNeighbor => {
            let d = sorted_distances(donors, target);
            if d.len() < 3 {
                return None;
            }
            let k0 = ((bw.value() * donors.len() as f64).round() as usize).max(3).min(d.len());
            (k0..=d.len()).find_map(|k| wls_row(kernel, donors, target, d[k - 1]))
        }
    }
}

/// Rows at `eval`, one per evaluation point.
pub fn oracle_matrix(kernel: Kernel, bw: Bandwidth, donors: &[f64], eval: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(eval.len(), donors.len());
    for (i, &t) in eval.iter().enumerate() {
        let row = oracle_row(kernel, bw, donors, t).expect("nonsingular reference row");
        for (k, v) in row.into_iter().enumerate() {
            m[(i, k)] = v;
        }
    }
    m
}

/// Fit at each donor after deleting that donor and refitting.
pub fn naive_loo(kernel: Kernel, bw: Bandwidth, group: &GroupSample) -> Vec<f64> {
    let (x, y) = (group.x(), group.y());
    (0..x.len())
        .map(|i| {
            let xs: Vec<f64> = x.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &v)| v).collect();
            let ys: Vec<f64> = y.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &v)| v).collect();
            let row = oracle_row(kernel, bw, &xs, x[i]).expect("nonsingular reference row");
            row.iter().zip(&ys).map(|(a, b)| a * b).sum()
        })
        .collect()
}

fn double_sum(s: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..s.nrows() {
        for k in 0..s.nrows() {
            total += s.row(i).dot(&s.row(k));
        }
    }
    total
}

fn bias_sum(s: &DMatrix<f64>, at_donors: &[f64], at_all: &[f64]) -> f64 {
    let g = DVector::from_column_slice(at_donors);
    (0..s.nrows()).map(|i| (s.row(i) * &g)[0] - at_all[i]).sum()
}

pub fn oracle_mse_y(kernel: Kernel, bw: Bandwidth, group: &GroupSample, beta: &dyn Fn(f64) -> f64, sigma2: f64) -> f64 {
    let x = group.x();
    let s = oracle_matrix(kernel, bw, x, x);
    let b: Vec<f64> = x.iter().map(|&v| beta(v)).collect();
    let g = DVector::from_column_slice(&b);
    let nj = x.len() as f64;
    let var: f64 = (0..x.len()).map(|i| s.row(i).dot(&s.row(i))).sum();
    let bias: f64 = (0..x.len()).map(|i| ((s.row(i) * &g)[0] - b[i]).powi(2)).sum();
    sigma2 * var / nj + bias / nj
}

/// `(variance, mean bias)` of the averaged curve with `g` in place of the truth.
pub fn oracle_beta_parts(
    kernel: Kernel,
    bw: Bandwidth,
    all_x: &[f64],
    group: &GroupSample,
    g_donors: &[f64],
    g_all: &[f64],
    sigma2: f64,
) -> (f64, f64) {
    let s = oracle_matrix(kernel, bw, group.x(), all_x);
    let n = all_x.len() as f64;
    (sigma2 * double_sum(&s) / (n * n), bias_sum(&s, g_donors, g_all) / n)
}

pub fn oracle_mse_beta(
    kernel: Kernel,
    bw: Bandwidth,
    all_x: &[f64],
    group: &GroupSample,
    beta: &dyn Fn(f64) -> f64,
    sigma2: f64,
) -> f64 {
    let gd: Vec<f64> = group.x().iter().map(|&v| beta(v)).collect();
    let ga: Vec<f64> = all_x.iter().map(|&v| beta(v)).collect();
    let (v, b) = oracle_beta_parts(kernel, bw, all_x, group, &gd, &ga, sigma2);
    v + b * b
}

pub fn oracle_mse_inr(
    kernel: Kernel,
    bw: Bandwidth,
    all_x: &[f64],
    group: &GroupSample,
    p_group: &[f64],
    sigma2: f64,
) -> f64 {
    let n = all_x.len() as f64;
    let s_all = oracle_matrix(kernel, bw, group.x(), all_x);
    let s = oracle_matrix(kernel, bw, group.x(), group.x());
    let y = DVector::from_column_slice(group.y());
    let q = DVector::from_iterator(p_group.len(), p_group.iter().map(|p| 1.0 / p));
    let resid = &y - &s * &y;
    let weighted = q.dot(&resid);
    let i_minus_s = DMatrix::identity(s.nrows(), s.ncols()) - &s;
    let quad = (q.transpose() * &i_minus_s * i_minus_s.transpose() * &q)[0];
    sigma2 * double_sum(&s_all) / (n * n) + weighted * weighted / (n * n) - sigma2 * quad / (n * n)
}

/// Pilot fits of `group` at its own covariates and at `all_x`.
pub fn oracle_pilot(kernel: Kernel, g: Bandwidth, all_x: &[f64], group: &GroupSample) -> (Vec<f64>, Vec<f64>) {
    let y = DVector::from_column_slice(group.y());
    let at_d = oracle_matrix(kernel, g, group.x(), group.x()) * &y;
    let at_a = oracle_matrix(kernel, g, group.x(), all_x) * &y;
    (at_d.iter().copied().collect(), at_a.iter().copied().collect())
}

pub fn oracle_residual_variance(kernel: Kernel, h: Bandwidth, group: &GroupSample) -> f64 {
    let s = oracle_matrix(kernel, h, group.x(), group.x());
    let y = DVector::from_column_slice(group.y());
    let r = &y - &s * &y;
    let dof = group.len() as f64 - (2.0 * s.trace() - (&s * &s.transpose()).trace());
    r.dot(&r) / dof
}

/// Random data on `(0, 2π)` with both groups of size at least five.
pub fn random_dataset(seed: u64, n: usize) -> Dataset {
    let mut r = rng(seed);
    loop {
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..std::f64::consts::TAU)).collect();
        let z: Vec<bool> = x.iter().map(|_| r.random_bool(0.5)).collect();
        let y: Vec<f64> = x
            .iter()
            .zip(&z)
            .map(|(&v, &t)| v.sin() + if t { 0.5 * v } else { 0.0 } + 0.3 * (r.random::<f64>() - 0.5))
            .collect();
        let treated = z.iter().filter(|&&t| t).count();
        if treated >= 5 && n - treated >= 5 {
            return Dataset::new(x, y, z).unwrap();
        }
    }
}

pub fn random_bandwidth(r: &mut ChaCha8Rng, kind: BandwidthKind) -> Bandwidth {
    match kind {
        BandwidthKind::NearestNeighbor => Bandwidth::nearest_neighbor(r.random_range(0.15..=1.0)).unwrap(),
        BandwidthKind::Constant => Bandwidth::constant(r.random_range(2.0..6.0)).unwrap(),
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
