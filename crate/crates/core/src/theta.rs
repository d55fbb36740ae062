//! Adaptive random-walk Metropolis chain on θ.
//!
//! The target is `exp(⟨S(x₀), θ⟩) μ(θ) / Z_n(θ)` with `Z_n` the current
//! surface snapshot. Two symmetric proposals are supported: a uniform window
//! folded back into the box by reflection, and a block Gaussian that is
//! rejected in place when it leaves the box. The proposal scale is tuned by
//! Robbins–Monro toward a target acceptance rate, and the block proposal's
//! covariance follows the running empirical covariance of the chain.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, log_prior, EnergyModel, ParamBox, ParameterPoint};
use crate::surface::ZEstimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProposalKind {
    ReflectedUniform,
    GaussianBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaConfig {
    pub kind: ProposalKind,
    pub target_rate: f64,
    pub scale_exponent: f64,
    pub moment_exponent: f64,
    /// Steps before the empirical covariance replaces the identity.
    pub blend_after: u64,
    /// Initial uniform half-width as a fraction of the box width.
    pub half_width_fraction: f64,
    /// Initial Gaussian scale is `sigma_factor / sqrt(q)`.
    pub sigma_factor: f64,
    pub adapt: bool,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        Self {
            kind: ProposalKind::ReflectedUniform,
            target_rate: 0.30,
            scale_exponent: 0.6,
            moment_exponent: 1.0,
            blend_after: 1000,
            half_width_fraction: 0.1,
            sigma_factor: 2.38,
            adapt: true,
        }
    }
}

/// Current proposal, with the Cholesky factor cached for the Gaussian case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RwProposal {
    ReflectedUniform {
        half_width: Vec<f64>,
        bounds: ParamBox,
    },
    GaussianBlock {
        sigma: f64,
        cov: DMatrix<f64>,
        chol: DMatrix<f64>,
        bounds: ParamBox,
    },
}

impl RwProposal {
    pub fn reflected_uniform(half_width: Vec<f64>, bounds: ParamBox) -> Result<Self> {
        if half_width.len() != bounds.dim() || half_width.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid half-widths {half_width:?}")));
        }
        Ok(Self::ReflectedUniform { half_width, bounds })
    }

    pub fn gaussian_block(sigma: f64, cov: DMatrix<f64>, bounds: ParamBox) -> Result<Self> {
        let q = bounds.dim();
        if !(sigma.is_finite() && sigma > 0.0) || cov.nrows() != q || cov.ncols() != q {
            return Err(Error::InvalidArgument("invalid Gaussian proposal".into()));
        }
        let (cov, chol) = regularized_cholesky(&cov);
        Ok(Self::GaussianBlock {
            sigma,
            cov,
            chol,
            bounds,
        })
    }

    pub fn bounds(&self) -> &ParamBox {
        match self {
            Self::ReflectedUniform { bounds, .. } | Self::GaussianBlock { bounds, .. } => bounds,
        }
    }
}

/// Symmetrizes and adds the smallest jitter (from 1e-10 upward) that makes
/// the matrix factorizable.
fn regularized_cholesky(cov: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let q = cov.nrows();
    let sym = (cov + cov.transpose()) * 0.5;
    let scale = (0..q).map(|i| sym[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut jitter = 1e-10;
    loop {
        let m = &sym + DMatrix::identity(q, q) * (jitter * scale);
        if let Some(ch) = m.clone().cholesky() {
            let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
            if min_eig >= 1e-10 {
                return (m, ch.l());
            }
        }
        jitter *= 10.0;
    }
}

/// Folds `value` into `[lo, hi]` by repeated reflection at the edges.
pub fn reflect(value: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let t = (value - lo).rem_euclid(2.0 * w);
    if t > w {
        lo + (2.0 * w - t)
    } else {
        lo + t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Proposal {
    Moved(ParameterPoint),
    RejectedInPlace,
}

pub fn propose<R: Rng + ?Sized>(theta: &ParameterPoint, prop: &RwProposal, rng: &mut R) -> Proposal {
    match prop {
        RwProposal::ReflectedUniform { half_width, bounds } => {
            let coords = theta
                .coords()
                .iter()
                .zip(half_width)
                .zip(bounds.lower().iter().zip(bounds.upper()))
                .map(|((t, b), (lo, hi))| {
                    let raw = t + b * (2.0 * rng.random::<f64>() - 1.0);
                    reflect(raw, *lo, *hi)
                })
                .collect();
            Proposal::Moved(ParameterPoint::new(coords).expect("reflection stays finite"))
        }
        RwProposal::GaussianBlock {
            sigma, chol, bounds, ..
        } => {
            let q = theta.dim();
            let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
            let step = chol * z * *sigma;
            let coords: Vec<f64> = theta.coords().iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            match ParameterPoint::new(coords) {
                Ok(p) if bounds.contains(&p) => Proposal::Moved(p),
                _ => Proposal::RejectedInPlace,
            }
        }
    }
}

/// Log Metropolis ratio for a symmetric proposal with the surface standing
/// in for `log Z`.
pub fn mh_log_acceptance(
    model: &EnergyModel,
    theta: &ParameterPoint,
    theta_new: &ParameterPoint,
    logz_cur: f64,
    logz_new: f64,
) -> f64 {
    let lp_new = log_prior(model, theta_new);
    let lp_cur = log_prior(model, theta);
    if lp_new == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let diff: Vec<f64> = theta_new.coords().iter().zip(theta.coords()).map(|(a, b)| a - b).collect();
    dot(model.observed().values(), &diff) + (lp_new - lp_cur) + (logz_cur - logz_new)
}

/// Robbins–Monro scale and running moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptState {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub log_scale: f64,
    /// The log-scale is projected onto `[-max, max]` after every update.
    pub max_log_scale: f64,
    pub steps: u64,
    pub target_rate: f64,
    pub scale_exponent: f64,
    pub moment_exponent: f64,
}

impl AdaptState {
    pub fn new(start: &ParameterPoint, config: &ThetaConfig) -> Self {
        let q = start.dim();
        Self {
            mean: start.coords().to_vec(),
            cov: DMatrix::zeros(q, q),
            log_scale: 0.0,
            max_log_scale: f64::INFINITY,
            steps: 0,
            target_rate: config.target_rate,
            scale_exponent: config.scale_exponent,
            moment_exponent: config.moment_exponent,
        }
    }

    pub fn scale_step(&self) -> f64 {
        (self.steps.max(1) as f64).powf(-self.scale_exponent)
    }

    pub fn update(&mut self, accepted: bool, theta_new: &ParameterPoint) {
        self.steps += 1;
        let t = self.steps as f64;
        let eta = t.powf(-self.scale_exponent);
        let hit = if accepted { 1.0 } else { 0.0 };
        self.log_scale = (self.log_scale + eta * (hit - self.target_rate)).clamp(-self.max_log_scale, self.max_log_scale);

        let w = t.powf(-self.moment_exponent);
        let q = self.mean.len();
        let centered: Vec<f64> = theta_new.coords().iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, c) in self.mean.iter_mut().zip(&centered) {
            *m += w * c;
        }
        for i in 0..q {
            for j in 0..q {
                let v = (1.0 - w) * self.cov[(i, j)] + w * (1.0 - w) * centered[i] * centered[j];
                self.cov[(i, j)] = v;
            }
        }
        // keep exact symmetry against rounding
        for i in 0..q {
            for j in 0..i {
                let v = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                self.cov[(i, j)] = v;
                self.cov[(j, i)] = v;
            }
        }
    }
}

pub fn adapt_proposal(adapt: &AdaptState, accepted: bool, theta_new: &ParameterPoint) -> AdaptState {
    let mut next = adapt.clone();
    next.update(accepted, theta_new);
    next
}

/// Accepted states and per-step bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaChain {
    pub current: ParameterPoint,
    /// Flattened `q`-vectors, one per step.
    pub trace: Vec<f64>,
    pub accepted: Vec<bool>,
    pub log_acceptance: Vec<f64>,
    pub gamma: Vec<f64>,
    pub logz_current: Option<f64>,
    pub burn_in: usize,
}

impl ThetaChain {
    pub fn new(start: ParameterPoint, burn_in: usize) -> Self {
        Self {
            current: start,
            trace: Vec::new(),
            accepted: Vec::new(),
            log_acceptance: Vec::new(),
            gamma: Vec::new(),
            logz_current: None,
            burn_in,
        }
    }

    pub fn dim(&self) -> usize {
        self.current.dim()
    }

    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        let q = self.dim();
        &self.trace[k * q..(k + 1) * q]
    }

    /// Coordinate `j` of every recorded state.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.trace.iter().skip(j).step_by(self.dim()).copied().collect()
    }

    /// Acceptance rate over steps `from..`.
    pub fn acceptance_rate_from(&self, from: usize) -> f64 {
        let tail = &self.accepted[from.min(self.len())..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().filter(|a| **a).count() as f64 / tail.len() as f64
    }
}

/// Chain, proposal and adaptation bundled together.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaSampler {
    pub chain: ThetaChain,
    pub proposal: RwProposal,
    pub adapt: AdaptState,
    pub config: ThetaConfig,
    base_half_width: Vec<f64>,
    base_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaStepOutcome {
    pub accepted: bool,
    pub log_acceptance: f64,
}

impl ThetaSampler {
    /// Starts at the box center.
    pub fn new(bounds: &ParamBox, config: ThetaConfig, burn_in: usize) -> Result<Self> {
        Self::starting_at(bounds.center(), bounds, config, burn_in)
    }

    pub fn starting_at(start: ParameterPoint, bounds: &ParamBox, config: ThetaConfig, burn_in: usize) -> Result<Self> {
        if !bounds.contains(&start) {
            return Err(Error::InvalidArgument("theta chain must start inside the box".into()));
        }
        let q = bounds.dim();
        let base_half_width: Vec<f64> = bounds.widths().iter().map(|w| w * config.half_width_fraction).collect();
        let base_sigma = config.sigma_factor / (q as f64).sqrt();
        let proposal = match config.kind {
            ProposalKind::ReflectedUniform => RwProposal::reflected_uniform(base_half_width.clone(), bounds.clone())?,
            ProposalKind::GaussianBlock => {
                RwProposal::gaussian_block(base_sigma, DMatrix::identity(q, q), bounds.clone())?
            }
        };
        // Scales beyond the box width add nothing: a reflected uniform move
        // with half-width equal to the width is already uniform on the box.
        let widest = bounds.widths().iter().copied().fold(0.0, f64::max);
        let mut adapt = AdaptState::new(&start, &config);
        adapt.max_log_scale = match config.kind {
            ProposalKind::ReflectedUniform => (1.0 / config.half_width_fraction).ln().max(0.0),
            ProposalKind::GaussianBlock => (widest / base_sigma).ln().max(1.0),
        };
        Ok(Self {
            adapt,
            chain: ThetaChain::new(start, burn_in),
            proposal,
            config,
            base_half_width,
            base_sigma,
        })
    }

    fn refresh_proposal(&mut self) {
        let factor = self.adapt.log_scale.exp();
        match &mut self.proposal {
            RwProposal::ReflectedUniform { half_width, .. } => {
                for (b, b0) in half_width.iter_mut().zip(&self.base_half_width) {
                    *b = b0 * factor;
                }
            }
            RwProposal::GaussianBlock { sigma, cov, chol, .. } => {
                *sigma = self.base_sigma * factor;
                if self.adapt.steps >= self.config.blend_after {
                    let (c, l) = regularized_cholesky(&self.adapt.cov);
                    *cov = c;
                    *chol = l;
                }
            }
        }
    }

    /// One Metropolis transition against the given surface snapshot.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        model: &EnergyModel,
        surface: &ZEstimate<'_>,
        gamma: f64,
        rng: &mut R,
    ) -> Result<ThetaStepOutcome> {
        theta_step(self, model, surface, gamma, rng)
    }
}

/// Proposes, accepts or rejects, records, and adapts.
pub fn theta_step<R: Rng + ?Sized>(
    sampler: &mut ThetaSampler,
    model: &EnergyModel,
    surface: &ZEstimate<'_>,
    gamma: f64,
    rng: &mut R,
) -> Result<ThetaStepOutcome> {
    let current = sampler.chain.current.clone();
    let (accepted, log_alpha, logz_after) = match propose(&current, &sampler.proposal, rng) {
        Proposal::RejectedInPlace => (false, f64::NEG_INFINITY, None),
        Proposal::Moved(candidate) => {
            let u: f64 = rng.random();
            if log_prior(model, &candidate) == f64::NEG_INFINITY {
                (false, f64::NEG_INFINITY, None)
            } else {
                let logz_new = surface.log_z(&candidate)?;
                let logz_cur = surface.log_z(&current)?;
                let alpha = mh_log_acceptance(model, &current, &candidate, logz_cur, logz_new);
                if u.ln() < alpha {
                    sampler.chain.current = candidate;
                    (true, alpha, Some(logz_new))
                } else {
                    (false, alpha, Some(logz_cur))
                }
            }
        }
    };
    let chain = &mut sampler.chain;
    chain.trace.extend_from_slice(chain.current.coords());
    chain.accepted.push(accepted);
    chain.log_acceptance.push(log_alpha);
    chain.gamma.push(gamma);
    if logz_after.is_some() {
        chain.logz_current = logz_after;
    }
    if sampler.config.adapt {
        let now = sampler.chain.current.clone();
        sampler.adapt.update(accepted, &now);
        sampler.refresh_proposal();
    }
    Ok(ThetaStepOutcome {
        accepted,
        log_acceptance: log_alpha,
    })
}
