//! Chain summaries: means, quantiles, covariance, autocorrelation,
//! histograms and label-occupancy reports.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theta::ThetaChain;

/// Sample autocorrelation for lags `0..=max_lag`, using the biased `1/N`
/// autocovariance so the sequence is positive semi-definite.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::InvalidArgument(format!(
            "series of length {n} is too short for lag {max_lag}"
        )));
    }
    if series.iter().all(|v| *v == series[0]) {
        return Err(Error::ZeroVariance);
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                return 1.0;
            }
            centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / c0
        })
        .collect())
}

/// Quantile of sorted data by linear interpolation between order statistics
/// (position `p·(n−1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub q025: Vec<f64>,
    pub q975: Vec<f64>,
    /// Sample covariance with the `n − 1` denominator, row-major.
    pub covariance: Vec<Vec<f64>>,
    /// Per-coordinate ACF; `None` where the coordinate never moved.
    pub acf: Vec<Option<Vec<f64>>>,
    pub acceptance_rate: f64,
}

/// Summary of the states after `burn_in` discarded steps.
pub fn summarize(chain: &ThetaChain, burn_in: usize, acf_max_lag: usize) -> Result<ChainSummary> {
    let q = chain.dim();
    if chain.len() <= burn_in {
        return Err(Error::EmptyWindow(format!(
            "chain has {} steps, burn-in is {burn_in}",
            chain.len()
        )));
    }
    let mut summary = summarize_samples(&chain.trace[burn_in * q..], q, acf_max_lag)?;
    summary.acceptance_rate = chain.acceptance_rate_from(burn_in);
    Ok(summary)
}

/// Summary of flattened `q`-vectors. The acceptance rate is left as NaN.
pub fn summarize_samples(flat: &[f64], q: usize, acf_max_lag: usize) -> Result<ChainSummary> {
    if q == 0 || flat.is_empty() || flat.len() % q != 0 {
        return Err(Error::EmptyWindow("no samples to summarize".into()));
    }
    let n = flat.len() / q;
    let column = |j: usize| -> Vec<f64> { flat.iter().skip(j).step_by(q).copied().collect() };
    let mut mean = vec![0.0; q];
    let mut q025 = vec![0.0; q];
    let mut q975 = vec![0.0; q];
    let mut acfs = Vec::with_capacity(q);
    let columns: Vec<Vec<f64>> = (0..q).map(column).collect();
    for (j, col) in columns.iter().enumerate() {
        mean[j] = col.iter().sum::<f64>() / n as f64;
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        q025[j] = quantile_sorted(&sorted, 0.025);
        q975[j] = quantile_sorted(&sorted, 0.975);
        let lag = acf_max_lag.min(n.saturating_sub(1));
        acfs.push(match acf(col, lag) {
            Ok(r) => Some(r),
            Err(Error::ZeroVariance) => None,
            Err(e) => return Err(e),
        });
    }
    let mut covariance = vec![vec![0.0; q]; q];
    if n > 1 {
        for a in 0..q {
            for b in a..q {
                let s: f64 = columns[a]
                    .iter()
                    .zip(&columns[b])
                    .map(|(x, y)| (x - mean[a]) * (y - mean[b]))
                    .sum::<f64>()
                    / (n - 1) as f64;
                covariance[a][b] = s;
                covariance[b][a] = s;
            }
        }
    }
    Ok(ChainSummary {
        samples: n,
        mean,
        q025,
        q975,
        covariance,
        acf: acfs,
        acceptance_rate: f64::NAN,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub count: u64,
    pub left: f64,
    pub right: f64,
}

/// Equal-width histogram spanning `[min, max]` of the data.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if values.is_empty() || bins == 0 {
        return Err(Error::EmptyWindow("histogram needs data and at least one bin".into()));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            count: 0,
            left: lo + k as f64 * width,
            right: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
        })
        .collect();
    for v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        out[k].count += 1;
    }
    Ok(out)
}

/// Writes `coordinate,count,left,right` rows for every coordinate.
pub fn write_histogram_csv(path: &Path, per_coordinate: &[Vec<HistogramBin>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "coordinate,count,left,right")?;
    for (j, bins) in per_coordinate.iter().enumerate() {
        for b in bins {
            writeln!(f, "{j},{},{:.16e},{:.16e}", b.count, b.left, b.right)?;
        }
    }
    f.flush()?;
    Ok(())
}

/// How far label occupancy is from uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyReport {
    pub total: u64,
    /// `max_i |d·v_i − N| / N`.
    pub max_relative_deviation: f64,
    pub min_count: u64,
    pub max_count: u64,
    pub flat: bool,
}

pub fn occupancy_report(occupancy: &[u64], eps2: f64) -> OccupancyReport {
    let total: u64 = occupancy.iter().sum();
    let d = occupancy.len() as f64;
    let n = total as f64;
    let dev = if total == 0 {
        f64::INFINITY
    } else {
        occupancy
            .iter()
            .map(|v| (d * *v as f64 - n).abs() / n)
            .fold(0.0, f64::max)
    };
    OccupancyReport {
        total,
        max_relative_deviation: dev,
        min_count: occupancy.iter().copied().min().unwrap_or(0),
        max_count: occupancy.iter().copied().max().unwrap_or(0),
        flat: dev <= eps2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParameterPoint;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain_from(flat: Vec<f64>, q: usize) -> ThetaChain {
        let n = flat.len() / q;
        let mut c = ThetaChain::new(ParameterPoint::new(flat[flat.len() - q..].to_vec()).unwrap(), 0);
        c.trace = flat;
        c.accepted = vec![true; n];
        c.log_acceptance = vec![0.0; n];
        c.gamma = vec![0.0; n];
        c
    }

    #[test]
    fn acf_examples() {
        let r = acf(&[1.0, 3.0, 2.0, 5.0], 2).unwrap();
        assert_eq!(r[0], 1.0);
        let alt: Vec<f64> = (0..10_000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((acf(&alt, 1).unwrap()[1] + 1.0).abs() < 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let iid: Vec<f64> = (0..100_000).map(|_| rng.random()).collect();
        let r = acf(&iid, 20).unwrap();
        assert!(r[1..].iter().all(|v| v.abs() < 0.02));
    }

    #[test]
    fn acf_errors() {
        assert!(matches!(acf(&[2.0; 10], 3), Err(Error::ZeroVariance)));
        assert!(acf(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn constant_trace_summary() {
        let c = chain_from(vec![0.3; 50], 1);
        let s = summarize(&c, 10, 5).unwrap();
        assert_eq!(s.samples, 40);
        assert!((s.mean[0] - 0.3).abs() < 1e-15);
        assert_eq!((s.q025[0], s.q975[0]), (0.3, 0.3));
        assert!(s.covariance[0][0].abs() < 1e-30);
        assert!(s.acf[0].is_none());
    }

    #[test]
    fn uniform_trace_summary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = chain_from((0..100_000).map(|_| rng.random()).collect(), 1);
        let s = summarize(&c, 0, 10).unwrap();
        assert!((s.mean[0] - 0.5).abs() < 0.005);
        assert!((s.q025[0] - 0.025).abs() < 0.005);
        assert!((s.q975[0] - 0.975).abs() < 0.005);
        assert_eq!(s.acceptance_rate, 1.0);
    }

    #[test]
    fn empty_window_is_an_error() {
        let c = chain_from(vec![0.1, 0.2], 1);
        assert!(matches!(summarize(&c, 2, 1), Err(Error::EmptyWindow(_))));
    }

    #[test]
    fn quantile_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert!((quantile_sorted(&v, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts_everything() {
        let v = [0.0, 0.1, 0.5, 0.9, 1.0];
        let h = histogram(&v, 2).unwrap();
        assert_eq!(h.iter().map(|b| b.count).sum::<u64>(), 5);
        assert_eq!(h[0].left, 0.0);
        assert_eq!(h[1].right, 1.0);
    }

    #[test]
    fn occupancy_flatness() {
        assert!(occupancy_report(&[100, 100, 100, 100], 0.2).flat);
        assert!(occupancy_report(&[110, 95, 100, 95], 0.2).flat);
        assert!(!occupancy_report(&[130, 90, 90, 90], 0.2).flat);
    }

    proptest! {
        #[test]
        fn covariance_symmetric_psd(data in prop::collection::vec(-5.0f64..5.0, 30..90)) {
            let n = data.len() / 3 * 3;
            let s = summarize_samples(&data[..n], 3, 2).unwrap();
            let m = nalgebra::DMatrix::from_fn(3, 3, |i, j| s.covariance[i][j]);
            prop_assert!((&m - m.transpose()).abs().max() <= 1e-12);
            let eig = m.symmetric_eigen().eigenvalues;
            prop_assert!(eig.min() >= -1e-10);
        }

        #[test]
        fn summary_invariant_under_permutation(data in prop::collection::vec(-5.0f64..5.0, 20..60), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let n = data.len() / 2;
            let rows: Vec<[f64; 2]> = (0..n).map(|k| [data[2 * k], data[2 * k + 1]]).collect();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = summarize_samples(&rows.concat(), 2, 1).unwrap();
            let b = summarize_samples(&shuffled.concat(), 2, 1).unwrap();
            for j in 0..2 {
                prop_assert!((a.mean[j] - b.mean[j]).abs() < 1e-12);
                prop_assert_eq!(a.q025[j], b.q025[j]);
                prop_assert_eq!(a.q975[j], b.q975[j]);
                for k in 0..2 {
                    prop_assert!((a.covariance[j][k] - b.covariance[j][k]).abs() < 1e-12);
                }
            }
        }
    }
}
