//! Brute-force ground truth on small instances.
//!
//! Every state of a tiny lattice or graph is enumerated once and the
//! resulting statistic vectors are cached with their multiplicities, so the
//! exact partition function at any θ costs one log-sum-exp over the distinct
//! values. Posterior moments for one- and two-parameter problems come from
//! trapezoid quadrature over the prior box.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, ParamBox, ParameterPoint, SufficientStats};
use crate::models::ergm::{ergm_stats, ErgmGraph, StarDefinition};
use crate::models::ising::{ising_energy, IsingLattice};
use crate::numeric::log_sum_exp;

/// Largest enumerable state space, in bits.
pub const MAX_STATE_BITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceKind {
    Ising { rows: usize, cols: usize },
    Ergm { n_actors: usize, definition: StarDefinition },
}

/// A model small enough to list every state.
#[derive(Debug, Clone)]
pub struct EnumerableInstance {
    kind: InstanceKind,
    bits: usize,
    /// Distinct statistic vectors with their multiplicities.
    multiset: Vec<(Vec<f64>, u64)>,
    log_counts: Vec<f64>,
}

impl EnumerableInstance {
    pub fn ising(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("lattice dimensions must be positive".into()));
        }
        Self::build(InstanceKind::Ising { rows, cols }, rows * cols)
    }

    pub fn ergm(n_actors: usize, definition: StarDefinition) -> Result<Self> {
        if n_actors < 2 {
            return Err(Error::InvalidArgument("graph needs at least two actors".into()));
        }
        Self::build(InstanceKind::Ergm { n_actors, definition }, n_actors * (n_actors - 1) / 2)
    }

    fn build(kind: InstanceKind, bits: usize) -> Result<Self> {
        if bits > MAX_STATE_BITS {
            return Err(Error::StateSpaceTooLarge {
                bits,
                limit: MAX_STATE_BITS,
            });
        }
        let mut counts: IndexMap<Vec<u64>, (Vec<f64>, u64)> = IndexMap::new();
        let mut inst = Self {
            kind,
            bits,
            multiset: Vec::new(),
            log_counts: Vec::new(),
        };
        for mask in 0..1u64 << bits {
            let s = inst.stats_of_mask(mask);
            let key = s.values().iter().map(|v| v.to_bits()).collect();
            counts.entry(key).or_insert_with(|| (s.values().to_vec(), 0)).1 += 1;
        }
        inst.multiset = counts.into_values().collect();
        inst.log_counts = inst.multiset.iter().map(|(_, c)| (*c as f64).ln()).collect();
        Ok(inst)
    }

    pub fn kind(&self) -> InstanceKind {
        self.kind
    }

    pub fn num_states(&self) -> u64 {
        1 << self.bits
    }

    pub fn stat_dim(&self) -> usize {
        match self.kind {
            InstanceKind::Ising { .. } => 1,
            InstanceKind::Ergm { .. } => 4,
        }
    }

    pub fn multiset(&self) -> &[(Vec<f64>, u64)] {
        &self.multiset
    }

    /// Statistics of the state encoded by `mask` (site or dyad `k` is "on"
    /// iff bit `k` is set).
    pub fn stats_of_mask(&self, mask: u64) -> SufficientStats {
        match self.kind {
            InstanceKind::Ising { rows, cols } => {
                SufficientStats::new(vec![ising_energy(&IsingLattice::from_mask(rows, cols, mask)) as f64])
            }
            InstanceKind::Ergm { n_actors, definition } => {
                ergm_stats(&ErgmGraph::from_mask(n_actors, mask), definition)
            }
        }
    }

    fn check_dim(&self, theta: &ParameterPoint) -> Result<()> {
        if theta.dim() != self.stat_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.stat_dim(),
                actual: theta.dim(),
            });
        }
        Ok(())
    }

    /// Exact probability of every state at `theta`, indexed by mask.
    pub fn state_probabilities(&self, theta: &ParameterPoint) -> Result<Vec<f64>> {
        let log_z = exact_log_z(self, theta)?;
        Ok((0..self.num_states())
            .map(|m| (dot(self.stats_of_mask(m).values(), theta.coords()) - log_z).exp())
            .collect())
    }
}

/// `log Σ_x exp⟨S(x), θ⟩`.
pub fn exact_log_z(inst: &EnumerableInstance, theta: &ParameterPoint) -> Result<f64> {
    inst.check_dim(theta)?;
    Ok(inst.log_z_unchecked(theta.coords()))
}

impl EnumerableInstance {
    fn log_z_unchecked(&self, theta: &[f64]) -> f64 {
        let mut top = f64::NEG_INFINITY;
        for ((s, _), lc) in self.multiset.iter().zip(&self.log_counts) {
            top = top.max(lc + dot(s, theta));
        }
        let sum: f64 = self
            .multiset
            .iter()
            .zip(&self.log_counts)
            .map(|((s, _), lc)| (lc + dot(s, theta) - top).exp())
            .sum();
        top + sum.ln()
    }
}

/// `E_θ[S(x)]`.
pub fn mean_stats(inst: &EnumerableInstance, theta: &ParameterPoint) -> Result<Vec<f64>> {
    let log_z = exact_log_z(inst, theta)?;
    let mut mean = vec![0.0; inst.stat_dim()];
    for (s, c) in &inst.multiset {
        let w = ((*c as f64).ln() + dot(s, theta.coords()) - log_z).exp();
        for (m, v) in mean.iter_mut().zip(s) {
            *m += w * v;
        }
    }
    Ok(mean)
}

/// Exact law of the latent image given `y`, θ and σ² in the segmentation
/// model, indexed by mask.
pub fn imageseg_conditional_law(rows: usize, cols: usize, theta: f64, sigma2: f64, y: &[f64]) -> Result<Vec<f64>> {
    let bits = rows * cols;
    if bits > MAX_STATE_BITS {
        return Err(Error::StateSpaceTooLarge {
            bits,
            limit: MAX_STATE_BITS,
        });
    }
    if y.len() != bits {
        return Err(Error::DimensionMismatch {
            expected: bits,
            actual: y.len(),
        });
    }
    let logw: Vec<f64> = (0..1u64 << bits)
        .map(|m| {
            let lat = IsingLattice::from_mask(rows, cols, m);
            let ssr: f64 = lat.spins().iter().zip(y).map(|(s, v)| (v - *s as f64).powi(2)).sum();
            theta * ising_energy(&lat) as f64 - ssr / (2.0 * sigma2)
        })
        .collect();
    let lz = log_sum_exp(&logw);
    Ok(logw.iter().map(|w| (w - lz).exp()).collect())
}

/// Grid description for [`exact_posterior`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    /// Coordinates integrated over (at most two).
    pub free_axes: Vec<usize>,
    /// Values of the remaining coordinates.
    pub base: ParameterPoint,
    /// Intervals per free axis on the first pass.
    pub initial_intervals: usize,
    /// Refinement stops once successive means move less than this.
    pub tolerance: f64,
    pub max_intervals: usize,
    /// Ignore the likelihood and integrate the prior alone.
    pub prior_only: bool,
}

impl QuadratureSpec {
    pub fn along(free_axes: Vec<usize>, base: ParameterPoint) -> Self {
        Self {
            free_axes,
            base,
            initial_intervals: 64,
            tolerance: 1e-6,
            max_intervals: 1 << 16,
            prior_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPosterior {
    /// Full parameter vector: posterior means on free axes, base elsewhere.
    pub mean: Vec<f64>,
    /// `(2.5%, 97.5%)` marginal quantiles, one pair per free axis.
    pub quantiles: Vec<(f64, f64)>,
    pub intervals: usize,
}

/// Posterior `∝ exp(⟨S(x₀), θ⟩ − log Z(θ))` under a uniform prior on `bounds`,
/// restricted to the free axes of `spec`.
pub fn exact_posterior(
    inst: &EnumerableInstance,
    observed: &SufficientStats,
    bounds: &ParamBox,
    spec: &QuadratureSpec,
) -> Result<ExactPosterior> {
    let q = inst.stat_dim();
    let free = spec.free_axes.len();
    if free == 0 || free > 2 {
        return Err(Error::QuadratureDimension(free));
    }
    if observed.dim() != q || bounds.dim() != q || spec.base.dim() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            actual: observed.dim(),
        });
    }
    if spec.free_axes.iter().any(|a| *a >= q) || (free == 2 && spec.free_axes[0] == spec.free_axes[1]) {
        return Err(Error::InvalidArgument("invalid free axes".into()));
    }
    let mut n = spec.initial_intervals.max(2);
    let mut prev = evaluate_grid(inst, observed, bounds, spec, n)?;
    loop {
        n *= 2;
        let next = evaluate_grid(inst, observed, bounds, spec, n)?;
        let change = prev
            .mean
            .iter()
            .zip(&next.mean)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < spec.tolerance || n >= spec.max_intervals {
            return Ok(next);
        }
        prev = next;
    }
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n + 1];
    w[0] = h / 2.0;
    w[n] = h / 2.0;
    w
}

fn evaluate_grid(
    inst: &EnumerableInstance,
    observed: &SufficientStats,
    bounds: &ParamBox,
    spec: &QuadratureSpec,
    n: usize,
) -> Result<ExactPosterior> {
    let axes = &spec.free_axes;
    let nodes: Vec<Vec<f64>> = axes
        .iter()
        .map(|&a| {
            let (lo, hi) = (bounds.lower()[a], bounds.upper()[a]);
            (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
        })
        .collect();
    let weights: Vec<Vec<f64>> = axes
        .iter()
        .map(|&a| trapezoid_weights(n, (bounds.upper()[a] - bounds.lower()[a]) / n as f64))
        .collect();

    let log_density = |point: &[f64]| -> Result<f64> {
        if spec.prior_only {
            return Ok(0.0);
        }
        Ok(dot(observed.values(), point) - inst.log_z_unchecked(point))
    };

    // log density on the tensor grid, row-major in the free axes
    let len2 = if axes.len() == 2 { n + 1 } else { 1 };
    let mut logd = Vec::with_capacity((n + 1) * len2);
    let mut point = spec.base.coords().to_vec();
    for i in 0..=n {
        point[axes[0]] = nodes[0][i];
        for j in 0..len2 {
            if axes.len() == 2 {
                point[axes[1]] = nodes[1][j];
            }
            logd.push(log_density(&point)?);
        }
    }
    let top = logd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = logd.iter().map(|v| (v - top).exp()).collect();

    // marginal (unnormalized) densities on each free axis
    let mut marg0 = vec![0.0; n + 1];
    let mut marg1 = vec![0.0; len2];
    for i in 0..=n {
        for j in 0..len2 {
            let w1 = if axes.len() == 2 { weights[1][j] } else { 1.0 };
            let f = dens[i * len2 + j];
            marg0[i] += w1 * f;
            marg1[j] += weights[0][i] * f;
        }
    }
    let mut margs = vec![marg0];
    if axes.len() == 2 {
        margs.push(marg1);
    }

    let mut mean = spec.base.coords().to_vec();
    let mut quantiles = Vec::with_capacity(axes.len());
    for (k, &a) in axes.iter().enumerate() {
        let f = &margs[k];
        let mass: f64 = f.iter().zip(&weights[k]).map(|(v, w)| v * w).sum();
        let m: f64 = f.iter().zip(&weights[k]).zip(&nodes[k]).map(|((v, w), x)| v * w * x).sum::<f64>() / mass;
        mean[a] = m;
        quantiles.push((
            cdf_quantile(&nodes[k], f, 0.025),
            cdf_quantile(&nodes[k], f, 0.975),
        ));
    }
    Ok(ExactPosterior {
        mean,
        quantiles,
        intervals: n,
    })
}

/// Quantile of a density given on equally spaced nodes, from the cumulative
/// trapezoid CDF with linear interpolation between nodes.
fn cdf_quantile(nodes: &[f64], density: &[f64], p: f64) -> f64 {
    let mut cdf = vec![0.0; nodes.len()];
    for k in 1..nodes.len() {
        cdf[k] = cdf[k - 1] + 0.5 * (density[k] + density[k - 1]) * (nodes[k] - nodes[k - 1]);
    }
    let total = cdf[nodes.len() - 1];
    let target = p * total;
    let k = cdf.partition_point(|c| *c < target).clamp(1, nodes.len() - 1);
    let (c0, c1) = (cdf[k - 1], cdf[k]);
    let t = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
    nodes[k - 1] + t * (nodes[k] - nodes[k - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[f64]) -> ParameterPoint {
        ParameterPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn log_z_examples() {
        let one_by_two = EnumerableInstance::ising(1, 2).unwrap();
        assert!((exact_log_z(&one_by_two, &pt(&[0.0])).unwrap() - 4f64.ln()).abs() < 1e-14);
        let two_by_two = EnumerableInstance::ising(2, 2).unwrap();
        assert!((exact_log_z(&two_by_two, &pt(&[0.0])).unwrap() - 16f64.ln()).abs() < 1e-14);
        let want = (2.0 * 0.4f64.exp() + 2.0 * (-0.4f64).exp()).ln();
        assert!((exact_log_z(&one_by_two, &pt(&[0.4])).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn log_z_at_zero_counts_states() {
        for inst in [
            EnumerableInstance::ising(3, 3).unwrap(),
            EnumerableInstance::ergm(4, StarDefinition::Literal).unwrap(),
            EnumerableInstance::ergm(5, StarDefinition::Standard).unwrap(),
        ] {
            let zero = pt(&vec![0.0; inst.stat_dim()]);
            let lz = exact_log_z(&inst, &zero).unwrap();
            assert!((lz - (inst.num_states() as f64).ln()).abs() < 1e-12);
            let total: u64 = inst.multiset().iter().map(|(_, c)| c).sum();
            assert_eq!(total, inst.num_states());
        }
    }

    #[test]
    fn gradient_of_log_z_is_mean_statistic() {
        let inst = EnumerableInstance::ergm(4, StarDefinition::Literal).unwrap();
        let theta = [-0.7, 0.3, -0.2, 0.4];
        let mean = mean_stats(&inst, &pt(&theta)).unwrap();
        let h = 1e-5;
        for k in 0..4 {
            let mut up = theta;
            let mut down = theta;
            up[k] += h;
            down[k] -= h;
            let fd = (exact_log_z(&inst, &pt(&up)).unwrap() - exact_log_z(&inst, &pt(&down)).unwrap()) / (2.0 * h);
            assert!((fd - mean[k]).abs() < 1e-6, "coordinate {k}: {fd} vs {}", mean[k]);
        }
        let ising = EnumerableInstance::ising(3, 3).unwrap();
        let m = mean_stats(&ising, &pt(&[0.3])).unwrap()[0];
        let fd = (exact_log_z(&ising, &pt(&[0.3 + h])).unwrap() - exact_log_z(&ising, &pt(&[0.3 - h])).unwrap())
            / (2.0 * h);
        assert!((fd - m).abs() < 1e-6);
    }

    #[test]
    fn too_large_is_an_error() {
        assert!(matches!(
            EnumerableInstance::ising(5, 5),
            Err(Error::StateSpaceTooLarge { bits: 25, .. })
        ));
    }

    #[test]
    fn prior_only_mean_is_box_center() {
        let inst = EnumerableInstance::ising(1, 2).unwrap();
        let bounds = ParamBox::cube(1, 0.0, 1.0).unwrap();
        let mut spec = QuadratureSpec::along(vec![0], pt(&[0.5]));
        spec.prior_only = true;
        let post = exact_posterior(&inst, &SufficientStats::new(vec![1.0]), &bounds, &spec).unwrap();
        assert!((post.mean[0] - 0.5).abs() < 1e-12);
        assert!((post.quantiles[0].0 - 0.025).abs() < 1e-9);
        assert!((post.quantiles[0].1 - 0.975).abs() < 1e-9);
    }

    #[test]
    fn one_by_two_posterior_mean() {
        // π(θ) ∝ e^θ / (2e^θ + 2e^{−θ}) = 1 / (2(1 + e^{−2θ})) on (0, 1)
        let inst = EnumerableInstance::ising(1, 2).unwrap();
        let bounds = ParamBox::cube(1, 0.0, 1.0).unwrap();
        let spec = QuadratureSpec::along(vec![0], pt(&[0.5]));
        let post = exact_posterior(&inst, &SufficientStats::new(vec![1.0]), &bounds, &spec).unwrap();
        // closed form: ∫ θ/(1+e^{−2θ}) / ∫ 1/(1+e^{−2θ}) by fine midpoint sums
        let n = 200_000;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            let f = 1.0 / (1.0 + (-2.0 * t).exp());
            num += t * f;
            den += f;
        }
        assert!((post.mean[0] - num / den).abs() < 1e-6);
        assert!(post.mean[0] > 0.5);
    }

    #[test]
    fn edge_only_ergm_posterior() {
        // n = 3, only θ1 free: π(θ1) ∝ e^{s1 θ1} / (1 + e^{θ1})^3
        let inst = EnumerableInstance::ergm(3, StarDefinition::Literal).unwrap();
        let bounds = ParamBox::cube(4, -50.0, 50.0).unwrap();
        let obs = SufficientStats::new(vec![1.0, 0.0, 0.0, 0.0]);
        let spec = QuadratureSpec::along(vec![0], pt(&[0.0; 4]));
        let post = exact_posterior(&inst, &obs, &bounds, &spec).unwrap();
        let n = 400_000;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..n {
            let t = -50.0 + 100.0 * (k as f64 + 0.5) / n as f64;
            let f = (t - 3.0 * (1.0 + t.exp()).ln()).exp();
            num += t * f;
            den += f;
        }
        assert!((post.mean[0] - num / den).abs() < 1e-5, "{} vs {}", post.mean[0], num / den);
        assert_eq!(&post.mean[1..], &[0.0; 3]);
    }

    #[test]
    fn two_axis_quadrature_and_refinement() {
        let inst = EnumerableInstance::ergm(4, StarDefinition::Literal).unwrap();
        let bounds = ParamBox::cube(4, -3.0, 3.0).unwrap();
        let obs = SufficientStats::new(vec![2.0, 1.0, 0.0, 0.0]);
        let spec = QuadratureSpec::along(vec![0, 1], pt(&[0.0; 4]));
        let a = exact_posterior(&inst, &obs, &bounds, &spec).unwrap();
        let mut fine = spec.clone();
        fine.initial_intervals = a.intervals;
        fine.max_intervals = a.intervals * 2;
        let b = exact_posterior(&inst, &obs, &bounds, &fine).unwrap();
        for k in 0..2 {
            assert!((a.mean[k] - b.mean[k]).abs() < 2e-6);
            assert!(a.quantiles[k].0 < a.mean[k] && a.mean[k] < a.quantiles[k].1);
        }
        let mut three = spec;
        three.free_axes = vec![0, 1, 2];
        assert!(matches!(
            exact_posterior(&inst, &obs, &bounds, &three),
            Err(Error::QuadratureDimension(3))
        ));
    }

    #[test]
    fn conditional_image_law_is_normalized() {
        let p = imageseg_conditional_law(2, 2, 0.4, 0.5, &[0.3, -0.2, 1.1, -0.9]).unwrap();
        assert_eq!(p.len(), 16);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
