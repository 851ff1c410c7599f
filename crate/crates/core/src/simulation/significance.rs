//! Paired comparison of the best method against the runner-up.

use std::fmt;

use statrs::distribution::{ContinuousCDF, StudentsT};

pub const MIN_REPLICATES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stars {
    None,
    One,
    Two,
    /// Too few replicates, or nothing to compare against.
    NotApplicable,
}

impl Stars {
    pub fn from_p(p: f64) -> Self {
        if p < 0.01 {
            Stars::Two
        } else if p < 0.05 {
            Stars::One
        } else {
            Stars::None
        }
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stars::None => "",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::NotApplicable => "n/a",
        })
    }
}

/// One-sided paired t-test of `H0: E[a − b] ≤ 0` against `E[a − b] > 0`.
/// Returns `None` when there are fewer than two pairs.
pub fn paired_t_p_value(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let r = a.len();
    if r < 2 {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / r as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    if var == 0.0 {
        return Some(if mean > 0.0 { 0.0 } else { 1.0 });
    }
    let t = mean / (var / r as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (r - 1) as f64).ok()?;
    Some(1.0 - dist.cdf(t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub best: usize,
    pub runner_up: Option<usize>,
    pub p_value: Option<f64>,
    pub stars: Stars,
}

/// Ranks methods by mean squared error and tests the best against the next
/// best. Ties in mean go to the earlier method.
pub fn significance_stars(squared_errors: &[&[f64]]) -> Comparison {
    assert!(!squared_errors.is_empty());
    let means: Vec<f64> = squared_errors.iter().map(|e| e.iter().sum::<f64>() / e.len().max(1) as f64).collect();
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&i, &j| means[i].total_cmp(&means[j]).then(i.cmp(&j)));
    let best = order[0];
    let Some(&runner_up) = order.get(1) else {
        return Comparison { best, runner_up: None, p_value: None, stars: Stars::NotApplicable };
    };
    let reps = squared_errors[best].len();
    let p_value = paired_t_p_value(squared_errors[runner_up], squared_errors[best]);
    let stars = match p_value {
        Some(p) if reps >= MIN_REPLICATES => Stars::from_p(p),
        _ => Stars::NotApplicable,
    };
    Comparison { best, runner_up: Some(runner_up), p_value, stars }
}
