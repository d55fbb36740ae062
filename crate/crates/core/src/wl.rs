//! Wang–Landau chain on (sample, label, log-weights).
//!
//! Each step applies the model kernel at the current particle, redraws the
//! label from `p_i ∝ exp(⟨S(x), θ_i⟩ − c_i)`, and moves every weight by
//! `γ·p_i` (the Rao-Blackwellized update). The step size is halved whenever
//! the label occupancy is flat; once it drops to `eps1` it follows the
//! deterministic tail `eps1 / n^0.7`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, ParamBox, ParameterPoint, SampleSpace, SufficientStats};
use crate::numeric::{compensated_sum, sample_categorical, softmax_in_place};

/// Fixed parameter particles θ^(1..d), stored flat for the hot loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleSet {
    dim: usize,
    flat: Vec<f64>,
}

impl ParticleSet {
    pub fn new(particles: &[ParameterPoint], bounds: &ParamBox) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("particle set must be non-empty".into()));
        }
        let dim = bounds.dim();
        let mut flat = Vec::with_capacity(particles.len() * dim);
        for p in particles {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.dim(),
                });
            }
            if !bounds.contains(p) {
                return Err(Error::InvalidArgument(format!(
                    "particle {:?} lies outside the parameter box",
                    p.coords()
                )));
            }
            flat.extend_from_slice(p.coords());
        }
        Ok(Self { dim, flat })
    }

    /// `d` independent uniform draws in the box.
    pub fn uniform<R: Rng + ?Sized>(d: usize, bounds: &ParamBox, rng: &mut R) -> Result<Self> {
        let mut pts = Vec::with_capacity(d);
        while pts.len() < d {
            let coords: Vec<f64> = bounds
                .lower()
                .iter()
                .zip(bounds.upper())
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect();
            let p = ParameterPoint::new(coords)?;
            // the lower edge has positive probability under random::<f64>()
            if bounds.contains(&p) {
                pts.push(p);
            }
        }
        Self::new(&pts, bounds)
    }

    /// `d` draws from an isotropic normal, redrawn until inside the box.
    pub fn gaussian<R: Rng + ?Sized>(
        d: usize,
        mean: f64,
        variance: f64,
        bounds: &ParamBox,
        rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(mean, variance.sqrt())
            .map_err(|e| Error::InvalidArgument(format!("particle normal: {e}")))?;
        let mut pts = Vec::with_capacity(d);
        while pts.len() < d {
            let coords: Vec<f64> = (0..bounds.dim()).map(|_| normal.sample(rng)).collect();
            let p = ParameterPoint::new(coords)?;
            if bounds.contains(&p) {
                pts.push(p);
            }
        }
        Self::new(&pts, bounds)
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.flat[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point(&self, i: usize) -> ParameterPoint {
        ParameterPoint::new(self.coords(i).to_vec()).expect("particles are finite")
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.flat.chunks_exact(self.dim)
    }
}

/// Log-scale partition estimates `c`, one per particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogWeights(Vec<f64>);

impl LogWeights {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("log-weights must be finite".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(&self.0)
    }

    /// Adds `a` to every entry.
    pub fn shifted(&self, a: f64) -> Self {
        Self(self.0.iter().map(|c| c + a).collect())
    }

    /// Subtracts the mean so that `mean(c) = 0`.
    pub fn recenter(&mut self) {
        let mean = self.sum() / self.0.len() as f64;
        for c in &mut self.0 {
            *c -= mean;
        }
    }

    /// Normalized weights `e^{c_i} / Σ_j e^{c_j}`.
    pub fn normalized(&self) -> Vec<f64> {
        let mut w = self.0.clone();
        softmax_in_place(&mut w);
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    FlatHistogram,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub gamma: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub tail_exponent: f64,
    pub phase: Phase,
    /// Index of the current term of the deterministic tail (0 before the switch).
    pub n_det: u64,
}

impl StepSchedule {
    pub fn new(gamma0: f64, eps1: f64, eps2: f64, tail_exponent: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && eps1 > 0.0 && eps1 < gamma0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < eps1 < gamma0, got eps1 = {eps1}, gamma0 = {gamma0}"
            )));
        }
        if !(eps2 > 0.0 && eps2 < 1.0) {
            return Err(Error::InvalidArgument(format!("eps2 must lie in (0,1), got {eps2}")));
        }
        if !(tail_exponent > 0.5 && tail_exponent <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tail exponent must lie in (0.5, 1], got {tail_exponent}"
            )));
        }
        Ok(Self {
            gamma: gamma0,
            eps1,
            eps2,
            tail_exponent,
            phase: Phase::FlatHistogram,
            n_det: 0,
        })
    }

    pub fn deterministic_gamma(&self, n: u64) -> f64 {
        self.eps1 / (n as f64).powf(self.tail_exponent)
    }
}

/// `p_i ∝ exp(⟨S(x), θ_i⟩ − c_i)`, normalized with a max shift.
pub fn label_distribution(
    x_stats: &SufficientStats,
    particles: &ParticleSet,
    weights: &LogWeights,
) -> Result<Vec<f64>> {
    if x_stats.dim() != particles.dim() {
        return Err(Error::DimensionMismatch {
            expected: particles.dim(),
            actual: x_stats.dim(),
        });
    }
    if weights.len() != particles.len() {
        return Err(Error::DimensionMismatch {
            expected: particles.len(),
            actual: weights.len(),
        });
    }
    let s = x_stats.values();
    let mut p: Vec<f64> = particles
        .iter()
        .zip(weights.values())
        .map(|(theta, c)| dot(s, theta) - c)
        .collect();
    softmax_in_place(&mut p);
    Ok(p)
}

/// `c'_i = c_i + γ·p_i`.
pub fn rao_blackwell_update(weights: &LogWeights, probs: &[f64], gamma: f64) -> LogWeights {
    LogWeights(
        weights
            .0
            .iter()
            .zip(probs)
            .map(|(c, p)| c + gamma * p)
            .collect(),
    )
}

/// True iff every label's share of the visits is within `eps2/d` of `1/d`.
pub fn flat_histogram_test(occupancy: &[u64], eps2: f64) -> bool {
    let total: u64 = occupancy.iter().sum();
    if total == 0 {
        return false;
    }
    let d = occupancy.len() as f64;
    let n = total as f64;
    // |v_i/n − 1/d| ≤ eps2/d  ⇔  |d·v_i − n| ≤ eps2·n
    occupancy
        .iter()
        .all(|&v| (d * v as f64 - n).abs() <= eps2 * n)
}

/// Advances the step size. The returned flag asks the caller to reset the
/// occupancy counts (a halving happened).
pub fn next_gamma(schedule: &StepSchedule, flat: bool) -> (StepSchedule, bool) {
    let mut next = schedule.clone();
    match schedule.phase {
        Phase::FlatHistogram => {
            if !flat {
                return (next, false);
            }
            next.gamma = schedule.gamma / 2.0;
            if next.gamma <= schedule.eps1 {
                next.phase = Phase::Deterministic;
                next.n_det = 1;
                next.gamma = next.deterministic_gamma(1);
            }
            (next, true)
        }
        Phase::Deterministic => {
            next.n_det = schedule.n_det + 1;
            next.gamma = next.deterministic_gamma(next.n_det);
            (next, false)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlConfig {
    pub gamma0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub tail_exponent: f64,
    pub recenter_every: u64,
    pub sweeps_per_step: usize,
}

impl Default for WlConfig {
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            eps1: 0.001,
            eps2: 0.2,
            tail_exponent: 0.7,
            recenter_every: 10_000,
            sweeps_per_step: 1,
        }
    }
}

/// One γ-halving, with the occupancy that triggered it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalvingEvent {
    pub iteration: u64,
    pub gamma_before: f64,
    pub gamma_after: f64,
    pub occupancy: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WlState<X> {
    pub x: X,
    pub x_stats: SufficientStats,
    pub label: usize,
    pub weights: LogWeights,
    pub occupancy: Vec<u64>,
    pub schedule: StepSchedule,
    pub iteration: u64,
    pub halvings: Vec<HalvingEvent>,
}

/// What one step did; the sample store consumes `(label, stats)`.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub label: usize,
    pub stats: SufficientStats,
    pub gamma_used: f64,
    pub phase_used: Phase,
    /// `Σc' − Σc` across the weight update, before any recentering.
    pub mass_increment: f64,
    pub halved: bool,
    pub recentered: bool,
}

/// Persistable snapshot of the schedule and weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WlCheckpoint {
    pub iteration: u64,
    pub gamma: f64,
    pub phase: Phase,
    pub weights: Vec<f64>,
    pub occupancy: Vec<u64>,
}

impl<X> WlState<X> {
    pub fn new<S: SampleSpace<State = X>>(
        space: &S,
        x0: X,
        label0: usize,
        d: usize,
        config: &WlConfig,
    ) -> Result<Self> {
        if label0 >= d {
            return Err(Error::InvalidArgument(format!("label {label0} out of range for d = {d}")));
        }
        let x_stats = space.stats(&x0);
        Ok(Self {
            x: x0,
            x_stats,
            label: label0,
            weights: LogWeights::zeros(d),
            occupancy: vec![0; d],
            schedule: StepSchedule::new(config.gamma0, config.eps1, config.eps2, config.tail_exponent)?,
            iteration: 0,
            halvings: Vec::new(),
        })
    }

    pub fn checkpoint_record(&self) -> WlCheckpoint {
        WlCheckpoint {
            iteration: self.iteration,
            gamma: self.schedule.gamma,
            phase: self.schedule.phase,
            weights: self.weights.values().to_vec(),
            occupancy: self.occupancy.clone(),
        }
    }
}

/// One Wang–Landau iteration.
pub fn wl_step<S, R1, R2>(
    state: &mut WlState<S::State>,
    space: &S,
    particles: &ParticleSet,
    config: &WlConfig,
    kernel_rng: &mut R1,
    label_rng: &mut R2,
) -> Result<StepReport>
where
    S: SampleSpace,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    let theta = particles.point(state.label);
    for _ in 0..config.sweeps_per_step {
        space.sweep(&mut state.x, &theta, kernel_rng);
    }
    state.x_stats = space.stats(&state.x);

    let probs = label_distribution(&state.x_stats, particles, &state.weights)?;
    let label = sample_categorical(&probs, label_rng);

    let gamma = state.schedule.gamma;
    let phase = state.schedule.phase;
    let updated = rao_blackwell_update(&state.weights, &probs, gamma);
    // Σc' − Σc, summed term by term so the size of c does not swamp it.
    let deltas: Vec<f64> = updated.0.iter().zip(&state.weights.0).map(|(a, b)| a - b).collect();
    let mass_increment = compensated_sum(&deltas);
    state.weights = updated;

    state.label = label;
    state.occupancy[label] += 1;
    state.iteration += 1;

    let flat = phase == Phase::FlatHistogram && flat_histogram_test(&state.occupancy, state.schedule.eps2);
    let (next, reset) = next_gamma(&state.schedule, flat);
    if reset {
        state.halvings.push(HalvingEvent {
            iteration: state.iteration,
            gamma_before: state.schedule.gamma,
            gamma_after: next.gamma,
            occupancy: state.occupancy.clone(),
        });
        state.occupancy.iter_mut().for_each(|v| *v = 0);
    }
    state.schedule = next;

    let recentered = config.recenter_every > 0 && state.iteration % config.recenter_every == 0;
    if recentered {
        state.weights.recenter();
    }

    Ok(StepReport {
        label,
        stats: state.x_stats.clone(),
        gamma_used: gamma,
        phase_used: phase,
        mass_increment,
        halved: reset,
        recentered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn particles_1d(v: &[f64]) -> ParticleSet {
        let pts: Vec<_> = v.iter().map(|&t| ParameterPoint::scalar(t).unwrap()).collect();
        ParticleSet::new(&pts, &ParamBox::cube(1, -10.0, 10.0).unwrap()).unwrap()
    }

    #[test]
    fn label_distribution_examples() {
        let ps = particles_1d(&[0.3, 0.3]);
        let s = SufficientStats::new(vec![2.0]);
        let p = label_distribution(&s, &ps, &LogWeights::zeros(2)).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);

        let c = LogWeights::from_vec(vec![0.0, 3f64.ln()]).unwrap();
        let p = label_distribution(&s, &ps, &c).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12);
        assert!((p[1] - 0.25).abs() < 1e-12);

        let p = label_distribution(&s, &particles_1d(&[0.1]), &LogWeights::zeros(1)).unwrap();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn label_distribution_survives_huge_logits() {
        let ps = particles_1d(&[7.0, 6.9]);
        let s = SufficientStats::new(vec![100.0]);
        let p = label_distribution(&s, &ps, &LogWeights::zeros(2)).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rao_blackwell_examples() {
        let c = rao_blackwell_update(&LogWeights::zeros(1), &[1.0], 1.0);
        assert_eq!(c.values(), &[1.0]);
        let c = rao_blackwell_update(&LogWeights::zeros(2), &[0.75, 0.25], 0.5);
        assert_eq!(c.values(), &[0.375, 0.125]);
    }

    #[test]
    fn flat_histogram_examples() {
        assert!(flat_histogram_test(&[50, 50], 0.2));
        assert!(flat_histogram_test(&[60, 40], 0.2));
        assert!(!flat_histogram_test(&[70, 30], 0.2));
        assert!(!flat_histogram_test(&[0, 0], 0.2));
    }

    #[test]
    fn next_gamma_examples() {
        let s = StepSchedule::new(1.0, 0.001, 0.2, 0.7).unwrap();
        let (s2, reset) = next_gamma(&s, true);
        assert_eq!(s2.gamma, 0.5);
        assert!(reset);
        let (s3, reset) = next_gamma(&s2, false);
        assert_eq!(s3.gamma, 0.5);
        assert!(!reset);

        let mut det = s.clone();
        det.phase = Phase::Deterministic;
        det.n_det = 1;
        det.gamma = det.deterministic_gamma(1);
        assert_eq!(det.gamma, 0.001);
        for _ in 1..100 {
            det = next_gamma(&det, true).0;
        }
        assert_eq!(det.n_det, 100);
        assert!((det.gamma - 0.001 / 100f64.powf(0.7)).abs() < 1e-18);
        assert!((det.gamma - 3.981e-5).abs() < 1e-8);
    }

    #[test]
    fn switches_to_deterministic_tail_below_eps1() {
        let mut s = StepSchedule::new(1.0, 0.001, 0.2, 0.7).unwrap();
        let mut halvings = 0;
        while s.phase == Phase::FlatHistogram {
            s = next_gamma(&s, true).0;
            halvings += 1;
        }
        // 2^-10 < 0.001 < 2^-9
        assert_eq!(halvings, 10);
        assert_eq!(s.n_det, 1);
        assert_eq!(s.gamma, 0.001);
        let mut prev = s.gamma;
        for _ in 0..1000 {
            s = next_gamma(&s, false).0;
            assert!(s.gamma < prev);
            prev = s.gamma;
        }
    }

    #[test]
    fn tail_exponent_sums() {
        // Σ n^-0.7 diverges (partial sums grow like n^0.3), Σ n^-1.4 converges.
        let s = StepSchedule::new(1.0, 1.0 / 1024.0, 0.2, 0.7).unwrap();
        let partial = |n: u64| (1..=n).map(|k| s.deterministic_gamma(k)).sum::<f64>();
        let sq = |n: u64| (1..=n).map(|k| s.deterministic_gamma(k).powi(2)).sum::<f64>();
        assert!(partial(1_000_000) > 4.0 * partial(10_000));
        let bound = s.eps1 * s.eps1 * (1.0 + 1.0 / 0.4);
        assert!(sq(1_000_000) < bound);
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::new(1.0, 2.0, 0.2, 0.7).is_err());
        assert!(StepSchedule::new(1.0, 0.001, 1.5, 0.7).is_err());
        assert!(StepSchedule::new(1.0, 0.001, 0.2, 0.4).is_err());
    }

    proptest! {
        #[test]
        fn label_distribution_is_simplex(
            s in -50.0f64..50.0,
            thetas in prop::collection::vec(-5.0f64..5.0, 1..12),
            cs in prop::collection::vec(-100.0f64..100.0, 12),
        ) {
            let ps = particles_1d(&thetas);
            let c = LogWeights::from_vec(cs[..thetas.len()].to_vec()).unwrap();
            let p = label_distribution(&SufficientStats::new(vec![s]), &ps, &c).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn rao_blackwell_adds_exactly_gamma(
            raw in prop::collection::vec(0.0f64..1.0, 1..20),
            cs in prop::collection::vec(-10.0f64..10.0, 20),
            gamma in 1e-6f64..1.0,
        ) {
            let total: f64 = raw.iter().sum::<f64>() + 1e-9;
            let probs: Vec<f64> = raw.iter().map(|v| (v + 1e-9 / raw.len() as f64) / total).collect();
            let c = LogWeights::from_vec(cs[..raw.len()].to_vec()).unwrap();
            let next = rao_blackwell_update(&c, &probs, gamma);
            prop_assert!((next.sum() - c.sum() - gamma).abs() <= 1e-12);
            let mut centered = next.clone();
            centered.recenter();
            prop_assert!((centered.sum() / centered.len() as f64).abs() <= 1e-12);
        }
    }
}
