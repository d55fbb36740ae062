//! Two-colour image segmentation: an Ising prior on the latent image and
//! Gaussian pixel noise of unknown variance.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ising::{neighbor_sum, IsingLattice};
use crate::error::{Error, Result};
use crate::numeric::logistic;

/// Latent image, noise variance, coupling and observed image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageSegState {
    pub x: IsingLattice,
    pub sigma2: f64,
    pub theta: f64,
    pub y: Vec<f64>,
}

impl ImageSegState {
    pub fn new(x: IsingLattice, sigma2: f64, theta: f64, y: Vec<f64>) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma^2 must be positive, got {sigma2}")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0,1), got {theta}")));
        }
        if y.len() != x.rows() * x.cols() {
            return Err(Error::DimensionMismatch {
                expected: x.rows() * x.cols(),
                actual: y.len(),
            });
        }
        Ok(Self { x, sigma2, theta, y })
    }

    /// Starting point: `x = sign(y)`, `σ² = var(y)`, `θ = 0.5`.
    pub fn initial(rows: usize, cols: usize, y: Vec<f64>) -> Result<Self> {
        let spins = y.iter().map(|v| if *v >= 0.0 { 1 } else { -1 }).collect();
        let x = IsingLattice::from_spins(rows, cols, spins)?;
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self::new(x, var, 0.5, y)
    }
}

/// `y_s = x_s + σ z_s` with iid standard normal `z`.
pub fn simulate_noisy_image<R: Rng + ?Sized>(x: &IsingLattice, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {sigma}")));
    }
    Ok(x.spins()
        .iter()
        .map(|s| *s as f64 + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

pub fn sum_squared_residuals(x: &IsingLattice, y: &[f64]) -> f64 {
    x.spins().iter().zip(y).map(|(s, v)| (v - *s as f64).powi(2)).sum()
}

/// Draw from `InvGamma(|S|/2, SSR/2)`.
pub fn sigma2_draw<R: Rng + ?Sized>(x: &IsingLattice, y: &[f64], rng: &mut R) -> Result<f64> {
    let ssr = sum_squared_residuals(x, y);
    inverse_gamma_draw(y.len() as f64 / 2.0, ssr / 2.0, rng)
}

pub(crate) fn inverse_gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::DegenerateResiduals);
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidArgument(format!("gamma: {e}")))?;
    Ok(1.0 / g.sample(rng))
}

/// `P(x_s = +1 | rest)`: logit is `2θ·(neighbour sum) + 2y_s/σ²`.
pub fn pixel_prob_plus(theta: f64, neighbor_sum: i32, y: f64, sigma2: f64) -> f64 {
    logistic(2.0 * theta * neighbor_sum as f64 + 2.0 * y / sigma2)
}

/// One raster sweep redrawing every pixel from its two-point conditional.
pub fn pixel_sweep<R: Rng + ?Sized>(state: &mut ImageSegState, rng: &mut R) {
    let (m, n) = (state.x.rows(), state.x.cols());
    let (theta, sigma2) = (state.theta, state.sigma2);
    for r in 0..m {
        for c in 0..n {
            let k = r * n + c;
            let s = neighbor_sum(state.x.spins(), m, n, r, c);
            let p = pixel_prob_plus(theta, s, state.y[k], sigma2);
            let u: f64 = rng.random();
            state.x.spins_mut()[k] = if u < p { 1 } else { -1 };
        }
    }
}
