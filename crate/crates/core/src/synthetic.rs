//! Planted-outlier instances: Gaussian design, all-ones coefficients and a
//! fixed shift of +1000 on a random subset of responses.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, GroundTruth};
use crate::error::{Error, Result};

pub const FEATURE_VARIANCE: f64 = 100.0;
pub const NOISE_VARIANCE: f64 = 10.0;
pub const OUTLIER_SHIFT: f64 = 1000.0;

/// Number of corrupted rows, `floor(tau * m)`.
pub fn outlier_count(m: usize, tau: f64) -> usize {
    (tau * m as f64 + 1e-9).floor() as usize
}

pub fn generate_synthetic(n: usize, m: usize, tau: f64, seed: u64) -> Result<(Dataset, GroundTruth)> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("n and m must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("tau must lie in [0, 1), got {tau}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feat = Normal::new(0.0, FEATURE_VARIANCE.sqrt()).expect("valid normal");
    let noise = Normal::new(0.0, NOISE_VARIANCE.sqrt()).expect("valid normal");

    // Row-major draw order so that a prefix of rows does not depend on m.
    let mut a = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = feat.sample(&mut rng);
        }
    }
    let x_star = DVector::from_element(n, 1.0);
    let mut y = &a * &x_star;
    for v in y.iter_mut() {
        *v += noise.sample(&mut rng);
    }
    let k = outlier_count(m, tau);
    let mut outliers = index::sample(&mut rng, m, k).into_vec();
    outliers.sort_unstable();
    for &i in &outliers {
        y[i] += OUTLIER_SHIFT;
    }

    let names = (1..=n).map(|j| format!("x{j}")).collect();
    let data = Dataset::new(a, y, vec![false; m], names)?;
    let truth = GroundTruth {
        x_star: x_star.iter().copied().collect(),
        outlier_set: outliers,
    };
    Ok((data, truth))
}
