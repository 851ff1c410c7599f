//! Leading-order asymptotics of the averaged local linear fit under a
//! constant bandwidth `h → 0`, `nh → ∞`:
//!
//! ```text
//! bias     = B1 h²
//! variance = V1 / n + V2 / (n² h) + V3 h² / n
//! ```
//!
//! with `B1 = ½ μ₂ ∫β''f`, `V1 = σ² ∫ f/P`, `V2 = σ² R(K) ∫ 1/P` and
//! `V3 = −2σ²μ₂ ∫ (f'²/(fP) + f'P'/P²)`, where `P(x) = P(z = j | x)`.

use crate::criteria::CurveFn;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::quadrature::integrate;

pub const QUADRATURE_TOL: f64 = 1e-9;
const OVERLAP_SCAN: usize = 2001;

/// Everything the constants depend on for one group. Missing derivatives
/// are taken by central differences with step `1e-5 · (b − a)`.
#[derive(Clone)]
pub struct AsymptoticInputs {
    pub support: (f64, f64),
    pub sigma2: f64,
    pub density: CurveFn,
    pub density_deriv: Option<CurveFn>,
    pub beta: CurveFn,
    pub beta_second: Option<CurveFn>,
    /// `P(z = j | x)`.
    pub group_prob: CurveFn,
    pub group_prob_deriv: Option<CurveFn>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticConstants {
    pub group: u8,
    pub b1: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

fn first_derivative(f: &CurveFn, step: f64) -> impl Fn(f64) -> f64 + '_ {
    move |x| (f(x + step) - f(x - step)) / (2.0 * step)
}

fn second_derivative(f: &CurveFn, step: f64) -> impl Fn(f64) -> f64 + '_ {
    move |x| (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step)
}

pub fn asym_constants(inputs: &AsymptoticInputs, kernel: Kernel, group: u8) -> Result<AsymptoticConstants> {
    let (a, b) = inputs.support;
    if !(b > a) {
        return Err(Error::InvalidInput(format!("empty support ({a}, {b})")));
    }
    let step = 1e-5 * (b - a);
    let p = &inputs.group_prob;
    for i in 0..OVERLAP_SCAN {
        let x = a + (b - a) * (i as f64 + 0.5) / OVERLAP_SCAN as f64;
        let v = p(x);
        if !(v > 0.0) {
            return Err(Error::AsymptoticOverlap(format!("P(z = {group} | x = {x}) = {v}")));
        }
    }

    let f = &inputs.density;
    let df: Box<dyn Fn(f64) -> f64 + '_> = match &inputs.density_deriv {
        Some(d) => Box::new(d.as_ref()),
        None => Box::new(first_derivative(f, step)),
    };
    let dp: Box<dyn Fn(f64) -> f64 + '_> = match &inputs.group_prob_deriv {
        Some(d) => Box::new(d.as_ref()),
        None => Box::new(first_derivative(p, step)),
    };
    let d2beta: Box<dyn Fn(f64) -> f64 + '_> = match &inputs.beta_second {
        Some(d) => Box::new(d.as_ref()),
        None => Box::new(second_derivative(&inputs.beta, step)),
    };

    let mu2 = kernel.moment2();
    let sigma2 = inputs.sigma2;
    let int = |g: &dyn Fn(f64) -> f64| integrate(g, a, b, QUADRATURE_TOL).value;

    let b1 = 0.5 * mu2 * int(&|x| d2beta(x) * f(x));
    let v1 = sigma2 * int(&|x| f(x) / p(x));
    let v2 = sigma2 * kernel.roughness() * int(&|x| 1.0 / p(x));
    let v3 = -2.0 * sigma2 * mu2 * int(&|x| {
        let fx = f(x);
        let d = df(x);
        let px = p(x);
        let density_term = if d == 0.0 { 0.0 } else { d * d / (fx * px) };
        density_term + d * dp(x) / (px * px)
    });
    for (name, v) in [("B1", b1), ("V1", v1), ("V2", v2), ("V3", v3)] {
        if !v.is_finite() {
            return Err(Error::AsymptoticOverlap(format!("{name} is not finite")));
        }
    }
    Ok(AsymptoticConstants { group, b1, v1, v2, v3 })
}

/// `(V2 / (4 B1²))^{1/5} n^{−2/5}`, the minimiser of `V2/(n²h) + B1² h⁴`.
pub fn h_opt(b1: f64, v2: f64, n: f64) -> Result<f64> {
    if b1 == 0.0 {
        return Err(Error::BiasConstantVanishes);
    }
    Ok((v2 / (4.0 * b1 * b1)).powf(0.2) * n.powf(-0.4))
}

/// The two `h`-dependent terms that dominate under undersmoothing.
pub fn dominant_terms(b1: f64, v2: f64, h: f64, n: f64) -> f64 {
    v2 / (n * n * h) + b1 * b1 * h.powi(4)
}

pub fn asym_mse_beta(c: &AsymptoticConstants, h: f64, n: f64) -> f64 {
    c.v1 / n + c.v2 / (n * n * h) + c.v3 * h * h / n + c.b1 * c.b1 * h.powi(4)
}

pub fn asym_mse_tau(c1: &AsymptoticConstants, c0: &AsymptoticConstants, h1: f64, h0: f64, n: f64) -> f64 {
    (c1.v1 + c0.v1) / n
        + c1.v2 / (n * n * h1)
        + c0.v2 / (n * n * h0)
        + c1.v3 * h1 * h1 / n
        + c0.v3 * h0 * h0 / n
        + c1.b1 * c1.b1 * h1.powi(4)
        + c0.b1 * c0.b1 * h0.powi(4)
        - 2.0 * c1.b1 * c0.b1 * h1 * h1 * h0 * h0
}

/// Growth exponents in `n` of the remainder terms when `h ∝ n^r`:
/// `√n · bias ∝ n^{1/2 + 2r}`, and `n · variance − V1` has terms in
/// `n^{−1−r}` and `n^{2r}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateExponents {
    pub scaled_bias: f64,
    pub variance_small_h: f64,
    pub variance_large_h: f64,
}

impl RateExponents {
    pub fn for_rate(r: f64) -> Self {
        RateExponents { scaled_bias: 0.5 + 2.0 * r, variance_small_h: -1.0 - r, variance_large_h: 2.0 * r }
    }

    /// All remainders vanish, i.e. the averaged fit is root-n consistent
    /// with limiting scaled variance `V1`.
    pub fn root_n_consistent(&self) -> bool {
        self.scaled_bias < 0.0 && self.variance_small_h < 0.0 && self.variance_large_h < 0.0
    }
}
