use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::estimators::Dataset;

use super::designs::{DesignSpec, SUPPORT};

pub const MIN_SAMPLE: usize = 10;
pub const MIN_GROUP: usize = 5;
pub const MAX_ATTEMPTS: u64 = 100;

/// A generated sample and the number of tiny-group redraws it took.
#[derive(Debug, Clone)]
pub struct Draw {
    pub data: Dataset,
    pub redraws: u64,
}

/// One sample of `n` units, deterministic in `(seed, stream)`. Samples with a
/// group smaller than five are redrawn on the next stream.
pub fn generate_stream(design: &DesignSpec, n: usize, sigma2: f64, seed: u64, stream: u64) -> Result<Draw> {
    if n < MIN_SAMPLE {
        return Err(Error::InvalidInput(format!("sample size {n} below {MIN_SAMPLE}")));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidInput(format!("noise variance {sigma2}")));
    }
    let noise = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.wrapping_add(attempt));
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            let xi = rng.random_range(SUPPORT.0..SUPPORT.1);
            let zi = rng.random::<f64>() < design.propensity(xi);
            let eps = noise.sample(&mut rng);
            x.push(xi);
            y.push(design.beta0(xi) + if zi { design.tau(xi) } else { 0.0 } + eps);
            z.push(zi);
        }
        let treated = z.iter().filter(|&&t| t).count();
        if treated.min(n - treated) < MIN_GROUP {
            log::debug!("seed {seed}: group sizes {treated}/{} on attempt {attempt}, redrawing", n - treated);
            continue;
        }
        return Ok(Draw { data: Dataset::new(x, y, z)?, redraws: attempt });
    }
    Err(Error::DegenerateGroups(format!("no sample with both groups of size {MIN_GROUP} after {MAX_ATTEMPTS} attempts")))
}

pub fn generate(design: &DesignSpec, n: usize, sigma2: f64, seed: u64) -> Result<Dataset> {
    generate_stream(design, n, sigma2, seed, 0).map(|d| d.data)
}
