//! Streaming estimate of `log Z(θ)` from the Wang–Landau samples.
//!
//! For every label `i` the store keeps the statistics of the samples that
//! carried that label. The surface at θ is
//!
//! ```text
//! Z_n(θ) = Σ_i κ(θ, θ_i) · e^{c_i} · mean_k exp(⟨S(X_k), θ − θ_i⟩)
//! ```
//!
//! where the mean runs over label `i`'s samples, with unvisited labels
//! contributing zero. Everything is evaluated in log space.
//!
//! Samples with identical statistics are merged into one weighted entry
//! (the bundled models have integer statistics, so the number of distinct
//! entries stays small), which keeps evaluation cost independent of run
//! length without changing the estimator.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, ParameterPoint, SufficientStats};
use crate::numeric::{log_sum_exp, softmax_in_place};
use crate::wl::{LogWeights, ParticleSet};

/// Gaussian similarity kernel over the particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingKernel {
    bandwidth: f64,
}

impl SmoothingKernel {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self { bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Median nearest-neighbour distance among the particles (1.0 for a
    /// single particle, where the kernel weight is 1 whatever `h` is).
    pub fn median_nearest_neighbor(particles: &ParticleSet) -> Self {
        let d = particles.len();
        if d < 2 {
            return Self { bandwidth: 1.0 };
        }
        let mut nn: Vec<f64> = (0..d)
            .map(|i| {
                let a = particles.coords(i);
                (0..d)
                    .filter(|&j| j != i)
                    .map(|j| {
                        a.iter()
                            .zip(particles.coords(j))
                            .map(|(x, y)| (x - y) * (x - y))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect();
        nn.sort_by(f64::total_cmp);
        let median = if d % 2 == 1 {
            nn[d / 2]
        } else {
            0.5 * (nn[d / 2 - 1] + nn[d / 2])
        };
        let fallback = nn.iter().copied().find(|v| *v > 0.0).unwrap_or(1.0);
        Self {
            bandwidth: if median > 0.0 { median } else { fallback },
        }
    }

    fn log_weights(&self, theta: &[f64], particles: &ParticleSet) -> Vec<f64> {
        let scale = -0.5 / (self.bandwidth * self.bandwidth);
        let mut logits: Vec<f64> = particles
            .iter()
            .map(|p| scale * theta.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect();
        let norm = log_sum_exp(&logits);
        logits.iter_mut().for_each(|v| *v -= norm);
        logits
    }
}

/// Normalized kernel weights `κ(θ, θ_i)`.
pub fn kappa_weights(theta: &ParameterPoint, particles: &ParticleSet, kernel: &SmoothingKernel) -> Vec<f64> {
    let mut w = kernel.log_weights(theta.coords(), particles);
    softmax_in_place(&mut w);
    w
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct LabelHistory {
    /// Every stored sample, flattened.
    samples: Vec<f64>,
    /// Distinct statistic vectors (by bit pattern) to their slot in `distinct`.
    index: IndexMap<Vec<u64>, usize>,
    distinct: Vec<f64>,
    counts: Vec<f64>,
    stored: u64,
    visits: u64,
}

/// Per-label history of sufficient statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleStore {
    dim: usize,
    stride: u64,
    labels: Vec<LabelHistory>,
    total: u64,
}

impl SampleStore {
    pub fn new(d: usize, dim: usize, stride: u64) -> Result<Self> {
        if d == 0 || dim == 0 || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "store needs d, dim, stride > 0 (got {d}, {dim}, {stride})"
            )));
        }
        Ok(Self {
            dim,
            stride,
            labels: vec![LabelHistory::default(); d],
            total: 0,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn stride(&self) -> u64 {
        self.stride
    }

    /// `N_i`, visits recorded for label `i` (including thinned ones).
    pub fn visits(&self, label: usize) -> u64 {
        self.labels[label].visits
    }

    /// Number of samples actually kept for label `i`.
    pub fn stored(&self, label: usize) -> u64 {
        self.labels[label].stored
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self, label: usize) -> usize {
        self.labels[label].counts.len()
    }

    pub fn history(&self, label: usize) -> impl Iterator<Item = &[f64]> {
        self.labels[label].samples.chunks_exact(self.dim)
    }

    pub fn record_sample(&mut self, label: usize, stats: &SufficientStats) -> Result<()> {
        if label >= self.labels.len() {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for d = {}",
                self.labels.len()
            )));
        }
        if stats.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: stats.dim(),
            });
        }
        self.total += 1;
        let h = &mut self.labels[label];
        h.visits += 1;
        if h.visits % self.stride != 0 {
            return Ok(());
        }
        h.stored += 1;
        h.samples.extend_from_slice(stats.values());
        let key: Vec<u64> = stats.values().iter().map(|v| (v + 0.0).to_bits()).collect();
        match h.index.get(&key) {
            Some(&slot) => h.counts[slot] += 1.0,
            None => {
                h.index.insert(key, h.counts.len());
                h.distinct.extend_from_slice(stats.values());
                h.counts.push(1.0);
            }
        }
        Ok(())
    }

    /// `log v_i(θ)` with `delta = θ − θ_i`; `-inf` when nothing is stored.
    fn log_ratio(&self, label: usize, delta: &[f64]) -> f64 {
        let h = &self.labels[label];
        if h.stored == 0 {
            return f64::NEG_INFINITY;
        }
        let mut max = f64::NEG_INFINITY;
        for s in h.distinct.chunks_exact(self.dim) {
            max = max.max(dot(s, delta));
        }
        let sum: f64 = h
            .distinct
            .chunks_exact(self.dim)
            .zip(&h.counts)
            .map(|(s, n)| n * (dot(s, delta) - max).exp())
            .sum();
        max + (sum / h.stored as f64).ln()
    }
}

/// Mean of `exp(⟨S(X_k), θ − θ_i⟩)` over label `i`'s samples. Returns 0 for
/// a label with no samples (the 0/0 = 0 convention).
pub fn importance_ratio(
    store: &SampleStore,
    label: usize,
    theta: &ParameterPoint,
    particle: &ParameterPoint,
) -> f64 {
    let delta: Vec<f64> = theta.coords().iter().zip(particle.coords()).map(|(a, b)| a - b).collect();
    store.log_ratio(label, &delta).exp()
}

/// A read-only view of the surface at one moment of the run.
#[derive(Debug, Clone, Copy)]
pub struct ZEstimate<'a> {
    pub store: &'a SampleStore,
    pub particles: &'a ParticleSet,
    pub weights: &'a LogWeights,
    pub kernel: SmoothingKernel,
}

impl<'a> ZEstimate<'a> {
    pub fn new(
        store: &'a SampleStore,
        particles: &'a ParticleSet,
        weights: &'a LogWeights,
        kernel: SmoothingKernel,
    ) -> Self {
        Self {
            store,
            particles,
            weights,
            kernel,
        }
    }

    pub fn log_z(&self, theta: &ParameterPoint) -> Result<f64> {
        log_z_surface(self, theta)
    }
}

/// `log Z_n(θ)`, defined up to a θ-independent constant.
pub fn log_z_surface(est: &ZEstimate<'_>, theta: &ParameterPoint) -> Result<f64> {
    let particles = est.particles;
    if theta.dim() != particles.dim() {
        return Err(Error::DimensionMismatch {
            expected: particles.dim(),
            actual: theta.dim(),
        });
    }
    let log_kappa = est.kernel.log_weights(theta.coords(), particles);
    let mut delta = vec![0.0; particles.dim()];
    let mut terms = Vec::with_capacity(particles.len());
    for (i, p) in particles.iter().enumerate() {
        if est.store.stored(i) == 0 {
            continue;
        }
        for ((d, t), q) in delta.iter_mut().zip(theta.coords()).zip(p) {
            *d = t - q;
        }
        terms.push(log_kappa[i] + est.weights.values()[i] + est.store.log_ratio(i, &delta));
    }
    if terms.is_empty() {
        return Err(Error::SurfaceUndefined);
    }
    Ok(log_sum_exp(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamBox;
    use proptest::prelude::*;

    fn pt(v: f64) -> ParameterPoint {
        ParameterPoint::scalar(v).unwrap()
    }

    fn particles(v: &[f64]) -> ParticleSet {
        let pts: Vec<_> = v.iter().map(|&t| pt(t)).collect();
        ParticleSet::new(&pts, &ParamBox::cube(1, -10.0, 10.0).unwrap()).unwrap()
    }

    #[test]
    fn kappa_examples() {
        let k = SmoothingKernel::new(0.1).unwrap();
        assert_eq!(kappa_weights(&pt(0.3), &particles(&[0.7]), &k), vec![1.0]);
        let w = kappa_weights(&pt(0.5), &particles(&[0.4, 0.6]), &k);
        assert!((w[0] - 0.5).abs() < 1e-12);
        let w = kappa_weights(&pt(0.5), &particles(&[0.5, 0.6]), &k);
        let expect = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((w[0] - expect).abs() < 1e-12);
        assert!((w[0] - 0.6225).abs() < 1e-4 && (w[1] - 0.3775).abs() < 1e-4);
    }

    #[test]
    fn record_sample_examples() {
        let mut s = SampleStore::new(3, 1, 1).unwrap();
        s.record_sample(1, &SufficientStats::new(vec![2.0])).unwrap();
        assert_eq!((s.visits(0), s.visits(1), s.visits(2)), (0, 1, 0));
        assert_eq!(s.total(), 1);

        let mut s = SampleStore::new(2, 1, 10).unwrap();
        for k in 0..100 {
            s.record_sample(0, &SufficientStats::new(vec![k as f64])).unwrap();
        }
        assert_eq!(s.history(0).count(), 10);
        assert_eq!(s.visits(0), 100);
        assert_eq!(s.visits(0), s.stored(0) * s.stride());
        assert_eq!(s.total(), 100);

        assert!(s.record_sample(5, &SufficientStats::new(vec![0.0])).is_err());
        assert!(s.record_sample(0, &SufficientStats::new(vec![0.0, 1.0])).is_err());
    }

    #[test]
    fn importance_ratio_examples() {
        let mut s = SampleStore::new(2, 1, 1).unwrap();
        s.record_sample(0, &SufficientStats::new(vec![2.0])).unwrap();
        assert_eq!(importance_ratio(&s, 0, &pt(0.4), &pt(0.4)), 1.0);
        let r = importance_ratio(&s, 0, &pt(0.5), &pt(0.4));
        assert!((r - 0.2f64.exp()).abs() < 1e-12);
        assert!((r - 1.2214).abs() < 1e-4);
        assert_eq!(importance_ratio(&s, 1, &pt(0.5), &pt(0.4)), 0.0);
    }

    #[test]
    fn merged_entries_match_plain_mean() {
        let mut s = SampleStore::new(1, 1, 1).unwrap();
        let xs = [1.0, -3.0, 1.0, 5.0, 1.0, -3.0];
        for x in xs {
            s.record_sample(0, &SufficientStats::new(vec![x])).unwrap();
        }
        assert_eq!(s.distinct(0), 3);
        let plain: f64 = xs.iter().map(|x| (x * 0.3f64).exp()).sum::<f64>() / xs.len() as f64;
        let r = importance_ratio(&s, 0, &pt(0.5), &pt(0.2));
        assert!((r - plain).abs() < 1e-12 * plain);
    }

    #[test]
    fn surface_examples() {
        let ps = particles(&[0.4]);
        let mut s = SampleStore::new(1, 1, 1).unwrap();
        s.record_sample(0, &SufficientStats::new(vec![3.0])).unwrap();
        let c = LogWeights::from_vec(vec![1.7]).unwrap();
        let est = ZEstimate::new(&s, &ps, &c, SmoothingKernel::new(0.2).unwrap());
        assert_eq!(log_z_surface(&est, &pt(0.4)).unwrap(), 1.7);

        // one of two labels unvisited: its term is dropped, κ is not renormalized
        let ps = particles(&[0.4, 0.6]);
        let mut s = SampleStore::new(2, 1, 1).unwrap();
        s.record_sample(0, &SufficientStats::new(vec![3.0])).unwrap();
        let c = LogWeights::from_vec(vec![0.2, -0.2]).unwrap();
        let k = SmoothingKernel::new(0.2).unwrap();
        let est = ZEstimate::new(&s, &ps, &c, k);
        let theta = pt(0.45);
        let kappa = kappa_weights(&theta, &ps, &k);
        let expect = kappa[0].ln() + 0.2 + 3.0 * 0.05;
        assert!((log_z_surface(&est, &theta).unwrap() - expect).abs() < 1e-12);

        let empty = SampleStore::new(2, 1, 1).unwrap();
        let est = ZEstimate::new(&empty, &ps, &c, k);
        assert!(matches!(log_z_surface(&est, &theta), Err(Error::SurfaceUndefined)));
    }

    #[test]
    fn median_nn_bandwidth() {
        let k = SmoothingKernel::median_nearest_neighbor(&particles(&[0.0, 0.1, 0.3, 0.7]));
        // nn distances 0.1, 0.1, 0.2, 0.4
        assert!((k.bandwidth() - 0.15).abs() < 1e-12);
        assert_eq!(SmoothingKernel::median_nearest_neighbor(&particles(&[0.5])).bandwidth(), 1.0);
    }

    proptest! {
        #[test]
        fn kappa_sums_to_one_and_respects_symmetry(
            theta in -2.0f64..2.0,
            offs in prop::collection::vec(0.01f64..1.5, 1..6),
            h in 0.05f64..2.0,
        ) {
            let k = SmoothingKernel::new(h).unwrap();
            let mut pos = Vec::new();
            for o in &offs {
                pos.push(theta + o);
                pos.push(theta - o);
            }
            let w = kappa_weights(&pt(theta), &particles(&pos), &k);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for pair in w.chunks(2) {
                prop_assert!((pair[0] - pair[1]).abs() <= 1e-12);
            }
        }

        #[test]
        fn ratio_at_particle_is_one(samples in prop::collection::vec(-40i32..40, 1..30), t in -3.0f64..3.0) {
            let mut s = SampleStore::new(1, 1, 1).unwrap();
            for v in samples {
                s.record_sample(0, &SufficientStats::new(vec![v as f64])).unwrap();
            }
            prop_assert_eq!(importance_ratio(&s, 0, &pt(t), &pt(t)), 1.0);
        }

        #[test]
        fn surface_differences_ignore_constant_shift_of_c(
            samples in prop::collection::vec((0usize..3, -12i32..12), 1..60),
            cs in prop::collection::vec(-5.0f64..5.0, 3),
            a in -50.0f64..50.0,
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let ps = particles(&[0.2, 0.5, 0.8]);
            let mut s = SampleStore::new(3, 1, 1).unwrap();
            for (l, v) in samples {
                s.record_sample(l, &SufficientStats::new(vec![v as f64])).unwrap();
            }
            let k = SmoothingKernel::new(0.15).unwrap();
            let c = LogWeights::from_vec(cs).unwrap();
            let shifted = c.shifted(a);
            let e1 = ZEstimate::new(&s, &ps, &c, k);
            let e2 = ZEstimate::new(&s, &ps, &shifted, k);
            let d1 = log_z_surface(&e1, &pt(t1)).unwrap() - log_z_surface(&e1, &pt(t2)).unwrap();
            let d2 = log_z_surface(&e2, &pt(t1)).unwrap() - log_z_surface(&e2, &pt(t2)).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-10);
        }
    }
}
