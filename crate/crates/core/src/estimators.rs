//! The imputation estimator of the average treatment effect, the residual
//! variance estimator, and the least-squares control variate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::smoother::{Bandwidth, GroupSample, LocalLinear};

/// Observed covariates, outcomes and binary treatment indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<bool>,
    treated: GroupSample,
    control: GroupSample,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: Vec<bool>) -> Result<Self> {
        if x.len() != y.len() || x.len() != z.len() {
            return Err(Error::InvalidInput(format!(
                "column lengths differ: x {}, y {}, z {}",
                x.len(),
                y.len(),
                z.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite covariate or outcome".into()));
        }
        let split = |flag: bool| -> (Vec<f64>, Vec<f64>) {
            x.iter()
                .zip(&y)
                .zip(&z)
                .filter(|(_, &zi)| zi == flag)
                .map(|((&xi, &yi), _)| (xi, yi))
                .unzip()
        };
        let (x1, y1) = split(true);
        let (x0, y0) = split(false);
        if x1.len() < 2 || x0.len() < 2 {
            return Err(Error::DegenerateGroups(format!(
                "{} treated and {} control units; each group needs at least 2",
                x1.len(),
                x0.len()
            )));
        }
        let treated = GroupSample::new(x1, y1)?;
        let control = GroupSample::new(x0, y0)?;
        Ok(Dataset { x, y, z, treated, control })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &[bool] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn treated(&self) -> &GroupSample {
        &self.treated
    }

    pub fn control(&self) -> &GroupSample {
        &self.control
    }

    /// Group `1` is treated, group `0` control.
    pub fn group(&self, j: u8) -> &GroupSample {
        if j == 1 {
            &self.treated
        } else {
            &self.control
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauEstimate {
    pub tau_hat: f64,
    /// Treated fit minus control fit at every covariate.
    pub pointwise: Vec<f64>,
    pub h1: Bandwidth,
    pub h0: Bandwidth,
}

/// Averages the difference of the two group-wise local linear fits over all
/// observed covariates.
pub fn imputation_tau(data: &Dataset, kernel: Kernel, h1: Bandwidth, h0: Bandwidth) -> Result<TauEstimate> {
    let fit1 = LocalLinear::new(kernel, h1).fit(data.treated(), data.x())?;
    let fit0 = LocalLinear::new(kernel, h0).fit(data.control(), data.x())?;
    let pointwise: Vec<f64> = fit1.iter().zip(&fit0).map(|(a, b)| a - b).collect();
    let tau_hat = pointwise.iter().sum::<f64>() / pointwise.len() as f64;
    Ok(TauEstimate { tau_hat, pointwise, h1, h0 })
}

/// Pieces of the residual variance estimator, kept separate so groups can
/// be pooled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualFit {
    pub rss: f64,
    /// `n_j − trace(2S − SSᵀ)`.
    pub dof: f64,
}

impl ResidualFit {
    pub fn sigma2(&self) -> Result<f64> {
        if !(self.dof > 0.0) {
            return Err(Error::DegreesOfFreedomExhausted { denominator: self.dof });
        }
        Ok(self.rss / self.dof)
    }
}

pub fn residual_fit(group: &GroupSample, kernel: Kernel, h_eps: Bandwidth) -> Result<ResidualFit> {
    let s = LocalLinear::new(kernel, h_eps).smoothing_matrix(group.x(), group.x())?;
    let fitted = s.apply(group.y());
    let rss = group.y().iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
    let dof = group.len() as f64 - (2.0 * s.trace() - s.trace_sst());
    Ok(ResidualFit { rss, dof })
}

/// `RSS / (n_j − trace(2S − SSᵀ))` with `S` the within-group smoother.
pub fn residual_variance(group: &GroupSample, kernel: Kernel, h_eps: Bandwidth) -> Result<f64> {
    residual_fit(group, kernel, h_eps)?.sigma2()
}

/// Both groups' residual sums over both groups' degrees of freedom.
pub fn pooled_residual_variance(
    treated: (&GroupSample, Bandwidth),
    control: (&GroupSample, Bandwidth),
    kernel: Kernel,
) -> Result<f64> {
    let a = residual_fit(treated.0, kernel, treated.1)?;
    let b = residual_fit(control.0, kernel, control.1)?;
    ResidualFit { rss: a.rss + b.rss, dof: a.dof + b.dof }.sigma2()
}

pub type BasisFn = fn(f64) -> f64;

/// Regressors of a correctly specified parametric outcome model:
/// `y = Σ a_k control_k(x) + z Σ b_k effect_k(x) + ε`.
#[derive(Debug, Clone, Copy)]
pub struct DesignBasis {
    pub control: &'static [BasisFn],
    pub effect: &'static [BasisFn],
}

impl DesignBasis {
    pub fn width(&self) -> usize {
        self.control.len() + self.effect.len()
    }

    pub fn design_matrix(&self, data: &Dataset) -> DMatrix<f64> {
        let n = data.len();
        let p = self.width();
        DMatrix::from_fn(n, p, |i, c| {
            let x = data.x()[i];
            if c < self.control.len() {
                (self.control[c])(x)
            } else if data.z()[i] {
                (self.effect[c - self.control.len()])(x)
            } else {
                0.0
            }
        })
    }

    /// Fitted effect curve `Σ b_k effect_k(x)` for coefficient vector `coef`.
    pub fn effect_at(&self, coef: &[f64], x: f64) -> f64 {
        self.effect
            .iter()
            .zip(&coef[self.control.len()..])
            .map(|(f, b)| f(x) * b)
            .sum()
    }
}

/// Least-squares coefficients via Householder QR.
pub fn least_squares(design: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let (n, p) = design.shape();
    if n < p {
        return Err(Error::RankDeficient);
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient);
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let coef = r.solve_upper_triangular(&qty).ok_or(Error::RankDeficient)?;
    Ok(coef.iter().copied().collect())
}

/// Mean over all units of the least-squares fitted treatment effect.
pub fn ols_control_variate(data: &Dataset, basis: &DesignBasis) -> Result<f64> {
    let coef = least_squares(&basis.design_matrix(data), data.y())?;
    let total: f64 = data.x().iter().map(|&x| basis.effect_at(&coef, x)).sum();
    Ok(total / data.len() as f64)
}

/// Logistic regression of `z` on `(1, x)` by Newton–Raphson.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticPropensity {
    pub intercept: f64,
    pub slope: f64,
}

impl LogisticPropensity {
    pub fn fit(x: &[f64], z: &[bool]) -> Result<Self> {
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&xi, &zi) in x.iter().zip(z) {
                let p = sigmoid(a + b * xi);
                let r = f64::from(u8::from(zi)) - p;
                let w = p * (1.0 - p);
                g0 += r;
                g1 += r * xi;
                h00 += w;
                h01 += w * xi;
                h11 += w * xi * xi;
            }
            let det = h00 * h11 - h01 * h01;
            if !(det.abs() > 1e-300) {
                return Err(Error::RankDeficient);
            }
            let da = (h11 * g0 - h01 * g1) / det;
            let db = (h00 * g1 - h01 * g0) / det;
            a += da;
            b += db;
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidInput("logistic regression diverged (separated data)".into()));
            }
            if da.abs().max(db.abs()) < 1e-12 {
                break;
            }
        }
        Ok(LogisticPropensity { intercept: a, slope: b })
    }

    pub fn predict(&self, x: f64) -> f64 {
        sigmoid(self.intercept + self.slope * x)
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(y_fn: impl Fn(f64, bool) -> f64) -> Dataset {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.15).collect();
        let z: Vec<bool> = (0..40).map(|i| (i * 7) % 3 != 0).collect();
        let y = x.iter().zip(&z).map(|(&xi, &zi)| y_fn(xi, zi)).collect();
        Dataset::new(x, y, z).unwrap()
    }

    #[test]
    fn constant_effect() {
        let d = toy(|_, z| f64::from(u8::from(z)));
        let h = Bandwidth::nearest_neighbor(0.3).unwrap();
        let est = imputation_tau(&d, Kernel::Tricube, h, h).unwrap();
        assert!((est.tau_hat - 1.0).abs() < 1e-12);
        let mean = est.pointwise.iter().sum::<f64>() / est.pointwise.len() as f64;
        assert!((mean - est.tau_hat).abs() < 1e-12);
    }

    #[test]
    fn linear_effect() {
        let d = toy(|x, z| if z { 2.0 + x } else { x });
        let est = imputation_tau(
            &d,
            Kernel::Tricube,
            Bandwidth::nearest_neighbor(0.2).unwrap(),
            Bandwidth::constant(2.0).unwrap(),
        )
        .unwrap();
        assert!((est.tau_hat - 2.0).abs() < 1e-10);
    }

    #[test]
    fn residual_variance_of_line_is_zero() {
        let g = GroupSample::new((0..20).map(f64::from).collect(), (0..20).map(|i| 3.0 - 0.5 * i as f64).collect()).unwrap();
        let s2 = residual_variance(&g, Kernel::Tricube, Bandwidth::nearest_neighbor(0.5).unwrap()).unwrap();
        assert!(s2.abs() < 1e-20);
    }

    #[test]
    fn residual_variance_ols_limit() {
        let x: Vec<f64> = (0..25).map(|i| (i as f64 * 1.3).sin() * 4.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v + (v * 3.0).cos()).collect();
        let g = GroupSample::new(x.clone(), y.clone()).unwrap();
        let s2 = residual_variance(&g, Kernel::Tricube, Bandwidth::constant(1e7).unwrap()).unwrap();
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let slope = sxy / sxx;
        let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
        assert!((s2 - rss / (n - 2.0)).abs() < 1e-8, "{s2} vs {}", rss / (n - 2.0));
    }

    #[test]
    fn exhausted_dof() {
        let g = GroupSample::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        // three-neighbour local lines through four points interpolate heavily
        let r = residual_fit(&g, Kernel::Tricube, Bandwidth::nearest_neighbor(0.25).unwrap()).unwrap();
        if r.dof <= 0.0 {
            assert!(matches!(r.sigma2(), Err(Error::DegreesOfFreedomExhausted { .. })));
        }
        let bad = ResidualFit { rss: 1.0, dof: 0.0 };
        assert!(matches!(bad.sigma2(), Err(Error::DegreesOfFreedomExhausted { .. })));
    }

    #[test]
    fn control_variate_zero_outcome() {
        const ONE: [BasisFn; 2] = [|_| 1.0, |x| x];
        let basis = DesignBasis { control: &ONE, effect: &ONE };
        let d = toy(|_, _| 0.0);
        assert!(ols_control_variate(&d, &basis).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_basis() {
        const DUP: [BasisFn; 2] = [|_| 1.0, |_| 2.0];
        const ONE: [BasisFn; 1] = [|_| 1.0];
        let basis = DesignBasis { control: &DUP, effect: &ONE };
        let d = toy(|x, _| x);
        assert_eq!(ols_control_variate(&d, &basis), Err(Error::RankDeficient));
    }

    #[test]
    fn logistic_recovers_coefficients() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>() * 6.0).collect();
        let z: Vec<bool> = x.iter().map(|&v| rng.random::<f64>() < sigmoid(-3.0 + v)).collect();
        let m = LogisticPropensity::fit(&x, &z).unwrap();
        assert!((m.intercept + 3.0).abs() < 0.15, "{m:?}");
        assert!((m.slope - 1.0).abs() < 0.05, "{m:?}");
    }

    #[test]
    fn degenerate_dataset() {
        let e = Dataset::new(vec![1.0, 2.0, 3.0], vec![1.0; 3], vec![true, true, false]).unwrap_err();
        assert!(matches!(e, Error::DegenerateGroups(_)));
    }
}
