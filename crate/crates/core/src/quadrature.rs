//! Adaptive Gauss–Kronrod (G7/K15) integration on finite intervals.

use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_PANELS: usize = 4000;

/// Result of one adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        // odd Kronrod abscissae are the Gauss nodes
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]`, repeatedly bisecting the panel with the
/// largest Kronrod–Gauss difference until the summed difference is below
/// `abs_tol` or the panel budget is spent.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Integral {
    if a == b {
        return Integral { value: 0.0, error_estimate: 0.0, evaluations: 0 };
    }
    let (value, err) = kronrod15(&f, a, b);
    let mut panels = vec![Panel { lo: a, hi: b, value, err }];
    let mut heap = BinaryHeap::from([(OrdF64(err), 0usize)]);
    let (mut total, mut total_err) = (value, err);
    let mut evaluations = 15;
    while total_err > abs_tol.max(f64::EPSILON * total.abs()) && panels.len() < MAX_PANELS {
        let Some((_, i)) = heap.pop() else { break };
        let Panel { lo, hi, value, err } = panels[i];
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            continue;
        }
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        evaluations += 30;
        total += v1 + v2 - value;
        total_err += e1 + e2 - err;
        panels[i] = Panel { lo, hi: mid, value: v1, err: e1 };
        panels.push(Panel { lo: mid, hi, value: v2, err: e2 });
        heap.push((OrdF64(e1), i));
        heap.push((OrdF64(e2), panels.len() - 1));
    }
    // re-sum to shed the drift of the running updates
    let value = panels.iter().map(|p| p.value).sum();
    let error_estimate = panels.iter().map(|p| p.err).sum();
    Integral { value, error_estimate, evaluations }
}

#[derive(Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Integrates over consecutive pieces `[breaks[0], breaks[1]], ...`; use for
/// integrands with known kinks.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, breaks: &[f64], abs_tol: f64) -> f64 {
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    breaks
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], abs_tol / pieces).value)
        .sum()
}

/// Composite trapezoid rule with `panels` equal panels.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let inner: f64 = (1..panels).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-14);
        assert!((r.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_integrand() {
        let r = integrate(|x| (50.0 * x).sin(), 0.0, std::f64::consts::PI, 1e-12);
        let exact = (1.0 - (50.0 * std::f64::consts::PI).cos()) / 50.0;
        assert!((r.value - exact).abs() < 1e-11, "{}", r.value);
    }

    #[test]
    fn trapezoid_converges() {
        let t = trapezoid(|x: f64| x.exp(), 0.0, 1.0, 100_000);
        assert!((t - (1f64.exp() - 1.0)).abs() < 1e-9);
    }
}
