//! Linear exponential-family models over a finite sample space.
//!
//! Every model handled here has energy `E(x, θ) = ⟨S(x), θ⟩` for a vector of
//! sufficient statistics `S`. Because the energy is linear, a sample `x` can
//! be reduced to `S(x)` and never looked at again, which is what makes the
//! streaming normalizing-constant estimator affordable.

use std::ops::Index;

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint(Vec<f64>);

impl ParameterPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameter coordinates must be finite: {coords:?}"
            )));
        }
        Ok(Self(coords))
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![value])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn squared_distance(&self, other: &ParameterPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl Index<usize> for ParameterPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Sufficient statistics `S(x)` of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats(Vec<f64>);

impl SufficientStats {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for SufficientStats {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `⟨S(x), θ⟩`, the energy of a sample evaluated from its statistics.
pub fn energy_dot(stats: &SufficientStats, theta: &ParameterPoint) -> Result<f64> {
    if stats.dim() != theta.dim() {
        return Err(Error::DimensionMismatch {
            expected: stats.dim(),
            actual: theta.dim(),
        });
    }
    Ok(dot(stats.values(), theta.coords()))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Open axis-aligned box `(lower, upper)` used as the parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidArgument("box must have at least one coordinate".into()));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!("invalid box side ({lo}, {hi})")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `(lo, hi)` on every one of `dim` coordinates.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn center(&self) -> ParameterPoint {
        ParameterPoint(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
        )
    }

    /// Strict interior membership; the box is open.
    pub fn contains(&self, theta: &ParameterPoint) -> bool {
        theta.dim() == self.dim()
            && theta
                .coords()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *l < *t && *t < *u)
    }
}

/// Prior family on θ. Only the uniform prior on the parameter box is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorKind {
    UniformOnBox,
}

/// A linear-energy model together with its prior box and observed statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyModel {
    bounds: ParamBox,
    observed: SufficientStats,
    prior: PriorKind,
}

impl EnergyModel {
    pub fn new(bounds: ParamBox, observed: SufficientStats) -> Result<Self> {
        if observed.dim() != bounds.dim() {
            return Err(Error::DimensionMismatch {
                expected: bounds.dim(),
                actual: observed.dim(),
            });
        }
        Ok(Self {
            bounds,
            observed,
            prior: PriorKind::UniformOnBox,
        })
    }

    /// Statistic dimension `K` (equal to the parameter dimension).
    pub fn stat_dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &ParamBox {
        &self.bounds
    }

    pub fn observed(&self) -> &SufficientStats {
        &self.observed
    }

    pub fn prior(&self) -> PriorKind {
        self.prior
    }

    /// Same model with the observed statistics replaced, e.g. by those of a
    /// latent image that changes from one sweep to the next.
    pub fn with_observed(&self, observed: SufficientStats) -> Result<Self> {
        Self::new(self.bounds.clone(), observed)
    }

    pub fn log_prior(&self, theta: &ParameterPoint) -> f64 {
        log_prior(self, theta)
    }
}

/// Unnormalized log prior: 0 inside the box and `-inf` outside.
pub fn log_prior(model: &EnergyModel, theta: &ParameterPoint) -> f64 {
    match model.prior {
        PriorKind::UniformOnBox => {
            if model.bounds.contains(theta) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// A finite sample space with a parameter-indexed MCMC kernel.
///
/// `sweep` must leave `exp(⟨S(x), θ⟩) / Z(θ)` invariant for every θ it is
/// given.
pub trait SampleSpace {
    type State: Clone + std::fmt::Debug + Serialize + DeserializeOwned;

    fn stat_dim(&self) -> usize;

    fn stats(&self, state: &Self::State) -> SufficientStats;

    fn sweep<R: Rng + ?Sized>(&self, state: &mut Self::State, theta: &ParameterPoint, rng: &mut R);
}
