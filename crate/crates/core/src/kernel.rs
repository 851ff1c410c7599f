//! Compactly supported second-order kernels on `[-1, 1]`.
//!
//! The tricube kernel is the default smoother weight. Epanechnikov and
//! uniform kernels are mainly used to make moment and roughness checks
//! non-trivial.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

const TRICUBE_NORM: f64 = 70.0 / 81.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Kernel {
    #[default]
    Tricube,
    Epanechnikov,
    Uniform,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Tricube, Kernel::Epanechnikov, Kernel::Uniform];

    /// `K(u)`; zero whenever `|u| >= 1`.
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        if !(a < 1.0) {
            return 0.0;
        }
        match self {
            Kernel::Tricube => {
                let t = 1.0 - a * a * a;
                TRICUBE_NORM * t * t * t
            }
            Kernel::Epanechnikov => 0.75 * (1.0 - a * a),
            Kernel::Uniform => 0.5,
        }
    }

    /// Second moment `∫ u² K(u) du`.
    pub fn moment2(self) -> f64 {
        match self {
            // 2 (70/81) ∫₀¹ u²(1-u³)³ du = 2 (70/81) / 12
            Kernel::Tricube => 35.0 / 243.0,
            Kernel::Epanechnikov => 0.2,
            Kernel::Uniform => 1.0 / 3.0,
        }
    }

    /// Roughness `∫ K(u)² du`.
    pub fn roughness(self) -> f64 {
        match self {
            Kernel::Tricube => {
                // expand (1 - u³)⁶ binomially and integrate term by term on [0, 1]
                let mut binom = 1.0;
                let mut sum = 0.0;
                for k in 0..=6u32 {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    sum += sign * binom / (3.0 * k as f64 + 1.0);
                    binom = binom * (6 - k) as f64 / (k + 1) as f64;
                }
                TRICUBE_NORM * TRICUBE_NORM * 2.0 * sum
            }
            Kernel::Epanechnikov => 0.6,
            Kernel::Uniform => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Tricube => "tricube",
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Uniform => "uniform",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tricube" => Ok(Kernel::Tricube),
            "epanechnikov" | "epan" => Ok(Kernel::Epanechnikov),
            "uniform" | "box" => Ok(Kernel::Uniform),
            _ => Err(Error::Unknown { kind: "kernel", name: s.to_string() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_pieces;

    const BREAKS: [f64; 3] = [-1.0, 0.0, 1.0];

    #[test]
    fn tricube_values() {
        assert!((Kernel::Tricube.eval(0.0) - 70.0 / 81.0).abs() < 1e-15);
        assert_eq!(Kernel::Tricube.eval(1.0), 0.0);
        assert_eq!(Kernel::Tricube.eval(-1.0), 0.0);
        let expected = (70.0 / 81.0) * 0.875f64.powi(3);
        assert!((Kernel::Tricube.eval(-0.5) - expected).abs() < 1e-15);
        assert!((Kernel::Tricube.eval(-0.5) - 0.578_945).abs() < 1e-6);
    }

    #[test]
    fn outside_support_is_zero() {
        for k in Kernel::ALL {
            for u in [1.0, -1.0, 1.5, -7.0, f64::INFINITY] {
                assert_eq!(k.eval(u), 0.0, "{k} at {u}");
            }
        }
    }

    #[test]
    fn moments_match_quadrature() {
        for k in Kernel::ALL {
            let mass = integrate_pieces(|u| k.eval(u), &BREAKS, 1e-12);
            let first = integrate_pieces(|u| u * k.eval(u), &BREAKS, 1e-12);
            let second = integrate_pieces(|u| u * u * k.eval(u), &BREAKS, 1e-12);
            let rough = integrate_pieces(|u| k.eval(u).powi(2), &BREAKS, 1e-12);
            assert!((mass - 1.0).abs() < 1e-10, "{k} mass {mass}");
            assert!(first.abs() < 1e-10, "{k} first {first}");
            assert!((second - k.moment2()).abs() < 1e-10, "{k} mu2 {second}");
            assert!((rough - k.roughness()).abs() < 1e-10, "{k} R {rough}");
        }
    }

    #[test]
    fn closed_forms() {
        assert!((Kernel::Tricube.moment2() - 0.144_033).abs() < 1e-6);
        assert!((Kernel::Tricube.roughness() - 175.0 / 247.0).abs() < 1e-12);
        assert_eq!(Kernel::Uniform.roughness(), 0.5);
    }

    #[test]
    fn symmetric() {
        for k in Kernel::ALL {
            for i in 0..200 {
                let u = -1.2 + i as f64 * 0.012;
                assert_eq!(k.eval(u), k.eval(-u));
            }
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("tricube".parse::<Kernel>().unwrap(), Kernel::Tricube);
        assert!("gaussian".parse::<Kernel>().is_err());
    }
}
