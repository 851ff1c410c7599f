//! The six simulation designs. Covariates are `Uniform(0, 2π)`; outcomes
//! follow `y = β0(x) + τ(x) z + ε` with `τ = β1 − β0`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::asymptotics::AsymptoticInputs;
use crate::criteria::OracleTruth;
use crate::error::{Error, Result};
use crate::estimators::{BasisFn, DesignBasis};
use crate::quadrature::integrate_pieces;

pub const SUPPORT: (f64, f64) = (0.0, 2.0 * PI);
pub const PROPENSITY_FLOOR: f64 = 1e-6;
const QUAD_TOL: f64 = 1e-11;
const QUAD_PIECES: usize = 256;

type Curve = fn(f64) -> f64;

#[derive(Clone, Copy)]
pub struct DesignSpec {
    pub id: u8,
    beta1: Curve,
    beta0: Curve,
    beta1_second: Option<Curve>,
    beta0_second: Option<Curve>,
    raw_propensity: Curve,
    raw_propensity_deriv: Curve,
    pub basis: DesignBasis,
    /// Maps the propensity into `[0.2, 0.8]` via `p ↦ 0.2 + 0.6p`.
    pub damped: bool,
}

impl std::fmt::Debug for DesignSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DesignSpec").field("id", &self.id).field("damped", &self.damped).finish()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (3.5 - x).exp())
}

fn logistic_deriv(x: f64) -> f64 {
    let p = logistic(x);
    p * (1.0 - p)
}

fn wave(x: f64) -> f64 {
    (5.0 * (2.0 * x).sin() - 4.0 * x.cos() + 4.0 * PI - 2.0 * PI * x + x * x) / 11.3
}

fn wave_deriv(x: f64) -> f64 {
    (10.0 * (2.0 * x).cos() + 4.0 * x.sin() - 2.0 * PI + 2.0 * x) / 11.3
}

fn one(_: f64) -> f64 {
    1.0
}
fn ident(x: f64) -> f64 {
    x
}
fn square(x: f64) -> f64 {
    x * x
}
fn sin1(x: f64) -> f64 {
    x.sin()
}
fn sin2(x: f64) -> f64 {
    (2.0 * x).sin()
}
fn cos1(x: f64) -> f64 {
    x.cos()
}
fn chirp(x: f64) -> f64 {
    x * (2.0 * PI - x) * (2.0 * PI * (2.0 * PI + 0.05) / (x + 0.05)).sin()
}
fn shifted_sin(x: f64) -> f64 {
    (2.0 * x - 4.0).sin()
}
fn bump(x: f64) -> f64 {
    (-16.0 * (2.0 * x - 2.5).powi(2)).exp()
}

fn d1_beta1(x: f64) -> f64 {
    4.0 * PI + 5.0 - 2.0 * PI * x + x * x + 5.0 * sin2(x) - 4.0 * x.cos()
}
fn d1_beta0(x: f64) -> f64 {
    sin2(x) - 4.0 * x.cos() + 5.0
}
fn d1_beta1_2(x: f64) -> f64 {
    2.0 - 20.0 * sin2(x) + 4.0 * x.cos()
}
fn d1_beta0_2(x: f64) -> f64 {
    -4.0 * sin2(x) + 4.0 * x.cos()
}

fn d2_beta1(x: f64) -> f64 {
    4.0 * (x + x.sin() + sin2(x)) + 3.0
}
fn d2_beta0(x: f64) -> f64 {
    2.0 * (x + x.sin() + sin2(x)) + 3.0
}
fn d2_beta1_2(x: f64) -> f64 {
    4.0 * (-x.sin() - 4.0 * sin2(x))
}
fn d2_beta0_2(x: f64) -> f64 {
    2.0 * (-x.sin() - 4.0 * sin2(x))
}

fn d3_beta1(x: f64) -> f64 {
    4.0 * PI - PI * x + x * x / 2.0
}
fn d3_beta0(x: f64) -> f64 {
    PI * x - x * x / 2.0
}
fn plus_one(_: f64) -> f64 {
    1.0
}
fn minus_one(_: f64) -> f64 {
    -1.0
}

fn d6_beta1(x: f64) -> f64 {
    10.0 + chirp(x)
}
fn d6_beta0(x: f64) -> f64 {
    8.0 + 1.5 * shifted_sin(x) + 6.0 * bump(x)
}
fn d6_beta1_2(x: f64) -> f64 {
    let c = 2.0 * PI * (2.0 * PI + 0.05);
    let s = x + 0.05;
    let (u, du) = (x * (2.0 * PI - x), 2.0 * PI - 2.0 * x);
    let (phi, dphi, d2phi) = (c / s, -c / (s * s), 2.0 * c / (s * s * s));
    let (sin, cos) = phi.sin_cos();
    let ds = cos * dphi;
    let d2s = -sin * dphi * dphi + cos * d2phi;
    -2.0 * sin + 2.0 * du * ds + u * d2s
}
fn d6_beta0_2(x: f64) -> f64 {
    let w = 2.0 * x - 2.5;
    -6.0 * shifted_sin(x) + 6.0 * bump(x) * (4096.0 * w * w - 128.0)
}

const TRIG_CONTROL: &[BasisFn] = &[one, sin2, cos1];
const TRIG_EFFECT: &[BasisFn] = &[one, ident, square, sin2];
const SINE_BASIS: &[BasisFn] = &[one, ident, sin1, sin2];
const QUADRATIC: &[BasisFn] = &[one, ident, square];
const BUMP_CONTROL: &[BasisFn] = &[one, shifted_sin, bump];
const BUMP_EFFECT: &[BasisFn] = &[one, chirp, shifted_sin, bump];

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

impl DesignSpec {
    pub const IDS: [u8; 6] = [1, 2, 3, 4, 5, 6];

    pub fn new(id: u8) -> Result<Self> {
        let (beta1, beta0, second1, second0): (Curve, Curve, Option<Curve>, Option<Curve>) = match id {
            1 | 5 => (d1_beta1, d1_beta0, Some(d1_beta1_2), Some(d1_beta0_2)),
            2 => (d2_beta1, d2_beta0, Some(d2_beta1_2), Some(d2_beta0_2)),
            3 | 4 => (d3_beta1, d3_beta0, Some(plus_one), Some(minus_one)),
            6 => (d6_beta1, d6_beta0, Some(d6_beta1_2), Some(d6_beta0_2)),
            _ => return Err(Error::Unknown { kind: "design", name: id.to_string() }),
        };
        let (raw_propensity, raw_propensity_deriv): (Curve, Curve) =
            if id <= 3 { (logistic, logistic_deriv) } else { (wave, wave_deriv) };
        let basis = match id {
            1 | 5 => DesignBasis { control: TRIG_CONTROL, effect: TRIG_EFFECT },
            2 => DesignBasis { control: SINE_BASIS, effect: SINE_BASIS },
            3 | 4 => DesignBasis { control: QUADRATIC, effect: QUADRATIC },
            _ => DesignBasis { control: BUMP_CONTROL, effect: BUMP_EFFECT },
        };
        Ok(DesignSpec {
            id,
            beta1,
            beta0,
            beta1_second: second1,
            beta0_second: second0,
            raw_propensity,
            raw_propensity_deriv,
            basis,
            damped: false,
        })
    }

    pub fn damped(mut self, damped: bool) -> Self {
        self.damped = damped;
        self
    }

    pub fn beta1(&self, x: f64) -> f64 {
        (self.beta1)(x)
    }

    pub fn beta0(&self, x: f64) -> f64 {
        (self.beta0)(x)
    }

    pub fn beta(&self, j: u8, x: f64) -> f64 {
        if j == 1 {
            self.beta1(x)
        } else {
            self.beta0(x)
        }
    }

    pub fn tau(&self, x: f64) -> f64 {
        self.beta1(x) - self.beta0(x)
    }

    /// The propensity before clamping.
    pub fn raw_propensity(&self, x: f64) -> f64 {
        let p = (self.raw_propensity)(x);
        if self.damped {
            0.2 + 0.6 * p
        } else {
            p
        }
    }

    /// `P(z = 1 | x)`, clamped to `[1e-6, 1 − 1e-6]`.
    pub fn propensity(&self, x: f64) -> f64 {
        let p = self.raw_propensity(x);
        let clamped = p.clamp(PROPENSITY_FLOOR, 1.0 - PROPENSITY_FLOOR);
        if clamped != p && !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!("design {} propensity {p} at x = {x} clamped to {clamped}", self.id);
        }
        clamped
    }

    pub fn propensity_deriv(&self, x: f64) -> f64 {
        let d = (self.raw_propensity_deriv)(x);
        if self.damped {
            0.6 * d
        } else {
            d
        }
    }

    pub fn density(&self, _x: f64) -> f64 {
        1.0 / (SUPPORT.1 - SUPPORT.0)
    }

    /// Expectation of `g(x)` under the covariate distribution.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        let (a, b) = SUPPORT;
        let breaks: Vec<f64> = (0..=QUAD_PIECES).map(|i| a + (b - a) * i as f64 / QUAD_PIECES as f64).collect();
        integrate_pieces(|x| g(x) * self.density(x), &breaks, QUAD_TOL)
    }

    pub fn true_tau(&self) -> f64 {
        self.expect(|x| self.tau(x))
    }

    /// `P(z = 1)`.
    pub fn treated_share(&self) -> f64 {
        self.expect(|x| self.propensity(x))
    }

    /// `Var(β0(x) + τ(x) z)`.
    pub fn design_sigma2(&self) -> f64 {
        let second = self.expect(|x| {
            let p = self.propensity(x);
            p * self.beta1(x).powi(2) + (1.0 - p) * self.beta0(x).powi(2)
        });
        let first = self.expect(|x| self.beta0(x) + self.propensity(x) * self.tau(x));
        (second - first * first).max(0.0)
    }

    pub fn truth(&self, sigma2: f64) -> OracleTruth {
        let d1 = *self;
        let d0 = *self;
        let dp = *self;
        OracleTruth {
            beta1: Arc::new(move |x| d1.beta1(x)),
            beta0: Arc::new(move |x| d0.beta0(x)),
            sigma2,
            propensity: Arc::new(move |x| dp.propensity(x)),
        }
    }

    pub fn asymptotic_inputs(&self, j: u8, sigma2: f64) -> AsymptoticInputs {
        let d = *self;
        let beta_second = if j == 1 { self.beta1_second } else { self.beta0_second };
        let sign = if j == 1 { 1.0 } else { -1.0 };
        AsymptoticInputs {
            support: SUPPORT,
            sigma2,
            density: Arc::new(move |x| d.density(x)),
            density_deriv: Some(Arc::new(|_| 0.0)),
            beta: Arc::new(move |x| d.beta(j, x)),
            beta_second: beta_second.map(|f| Arc::new(f) as crate::criteria::CurveFn),
            group_prob: Arc::new(move |x| if j == 1 { d.propensity(x) } else { 1.0 - d.propensity(x) }),
            group_prob_deriv: Some(Arc::new(move |x| sign * d.propensity_deriv(x))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| SUPPORT.1 * (i as f64 + 0.5) / n as f64)
    }

    #[test]
    fn effect_matches_listed_form() {
        let listed: [fn(f64) -> f64; 6] = [
            |x| 4.0 * PI - 2.0 * PI * x + x * x + 4.0 * (2.0 * x).sin(),
            |x| 2.0 * x + 2.0 * x.sin() + 2.0 * (2.0 * x).sin(),
            |x| 4.0 * PI - 2.0 * PI * x + x * x,
            |x| 4.0 * PI - 2.0 * PI * x + x * x,
            |x| 4.0 * PI - 2.0 * PI * x + x * x + 4.0 * (2.0 * x).sin(),
            |x| 2.0 + chirp(x) - 1.5 * (2.0 * x - 4.0).sin() - 6.0 * bump(x),
        ];
        for id in DesignSpec::IDS {
            let d = DesignSpec::new(id).unwrap();
            for x in grid(1000) {
                assert!((d.tau(x) - listed[usize::from(id) - 1](x)).abs() < 1e-8, "design {id} at {x}");
            }
        }
    }

    #[test]
    fn propensity_in_unit_interval() {
        for id in DesignSpec::IDS {
            for damped in [false, true] {
                let d = DesignSpec::new(id).unwrap().damped(damped);
                for x in grid(1000) {
                    let p = d.raw_propensity(x);
                    assert!(p > 0.0 && p < 1.0, "design {id} p({x}) = {p}");
                    if damped {
                        assert!((0.2..=0.8).contains(&p));
                    }
                }
            }
        }
    }

    #[test]
    fn analytic_derivatives() {
        let h = 1e-4;
        for id in DesignSpec::IDS {
            let d = DesignSpec::new(id).unwrap();
            for x in grid(50) {
                let fd = (d.raw_propensity(x + h) - d.raw_propensity(x - h)) / (2.0 * h);
                assert!((fd - d.propensity_deriv(x)).abs() < 1e-6);
                for (j, second) in [(1, d.beta1_second), (0, d.beta0_second)] {
                    if let Some(f) = second {
                        let h2 = if id == 6 { 1e-5 } else { 1e-4 };
                        let fd = (d.beta(j, x + h2) - 2.0 * d.beta(j, x) + d.beta(j, x - h2)) / (h2 * h2);
                        let scale = 1.0 + f(x).abs();
                        assert!((fd - f(x)).abs() < 1e-3 * scale, "design {id} group {j} at {x}: {fd} vs {}", f(x));
                    }
                }
            }
        }
    }

    #[test]
    fn design3_true_tau() {
        let d = DesignSpec::new(3).unwrap();
        let exact = 4.0 * PI - 2.0 * PI * PI + 4.0 * PI * PI / 3.0;
        assert!((d.true_tau() - exact).abs() < 1e-10);
        assert!((exact - 5.9868).abs() < 5e-4);
    }

    #[test]
    fn sigma2_limits() {
        let mut d = DesignSpec::new(3).unwrap();
        d.beta1 = |_| 2.5;
        d.beta0 = |_| 2.5;
        assert!(d.design_sigma2().abs() < 1e-10);

        let mut d = DesignSpec::new(1).unwrap();
        d.raw_propensity = |_| 0.0;
        let m = d.expect(|x| d.beta0(x));
        let v = d.expect(|x| (d.beta0(x) - m).powi(2));
        // the clamp floor leaves p = 1e-6
        assert!((d.design_sigma2() - v).abs() < 1e-2);
    }

    #[test]
    fn unknown_design() {
        assert!(DesignSpec::new(0).is_err());
        assert!(DesignSpec::new(7).is_err());
    }
}
