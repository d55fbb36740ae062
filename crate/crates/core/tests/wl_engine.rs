//! Wang–Landau chain behaviour on enumerable lattices.

use adaptive_wl::model::{ParamBox, ParameterPoint, SampleSpace};
use adaptive_wl::models::ising::{IsingLattice, IsingSpace};
use adaptive_wl::oracle::{exact_log_z, EnumerableInstance};
use adaptive_wl::rng::{substream, Stream, Streams};
use adaptive_wl::wl::{wl_step, ParticleSet, Phase, WlConfig, WlState};

fn particles(values: &[f64]) -> ParticleSet {
    let pts: Vec<ParameterPoint> = values.iter().map(|&v| ParameterPoint::scalar(v).unwrap()).collect();
    ParticleSet::new(&pts, &ParamBox::cube(1, 0.0, 1.0).unwrap()).unwrap()
}

fn start(space: &IsingSpace, d: usize, config: &WlConfig) -> WlState<IsingLattice> {
    let x0 = IsingLattice::filled(space.rows, space.cols, 1).unwrap();
    WlState::new(space, x0, 0, d, config).unwrap()
}

#[test]
fn single_label_accumulates_gamma() {
    let space = IsingSpace { rows: 2, cols: 2 };
    let ps = particles(&[0.3]);
    let config = WlConfig {
        recenter_every: 0,
        ..WlConfig::default()
    };
    let mut state = start(&space, 1, &config);
    let mut streams = Streams::new(5);
    for _ in 0..50 {
        let before = state.weights.values()[0];
        let report = wl_step(&mut state, &space, &ps, &config, &mut streams.kernel, &mut streams.labels).unwrap();
        assert_eq!(report.label, 0);
        assert!((state.weights.values()[0] - before - report.gamma_used).abs() <= 1e-12);
    }
}

#[test]
fn each_step_increments_exactly_one_occupancy_entry() {
    let space = IsingSpace { rows: 3, cols: 3 };
    let ps = particles(&[0.1, 0.4, 0.7, 0.9]);
    let config = WlConfig::default();
    let mut state = start(&space, 4, &config);
    let mut streams = Streams::new(6);
    for _ in 0..2_000 {
        let before = state.occupancy.clone();
        let report = wl_step(&mut state, &space, &ps, &config, &mut streams.kernel, &mut streams.labels).unwrap();
        if report.halved {
            assert!(state.occupancy.iter().all(|&v| v == 0));
            continue;
        }
        let changed: Vec<usize> = (0..4).filter(|&i| state.occupancy[i] != before[i]).collect();
        assert_eq!(changed, vec![report.label]);
        assert_eq!(state.occupancy[report.label], before[report.label] + 1);
        assert_eq!(report.stats, space.stats(&state.x));
    }
}

/// With c frozen at zero the labels follow `Λ*(i) ∝ Z(θ_i)`. Labels are
/// read every fifth step so that successive draws are close to independent.
#[test]
fn label_frequencies_match_enumeration() {
    let space = IsingSpace { rows: 1, cols: 2 };
    let thetas = [0.2, 0.9];
    let ps = particles(&thetas);
    let config = WlConfig {
        gamma0: 2e-15,
        eps1: 1e-15,
        ..WlConfig::default()
    };
    let mut state = start(&space, 2, &config);
    let mut streams = Streams::new(8);
    let inst = EnumerableInstance::ising(1, 2).unwrap();
    let z: Vec<f64> = thetas
        .iter()
        .map(|&t| exact_log_z(&inst, &ParameterPoint::scalar(t).unwrap()).unwrap().exp())
        .collect();
    let n = 200_000u64;
    let mut counts = [0u64; 2];
    for k in 0..5 * n {
        let report = wl_step(&mut state, &space, &ps, &config, &mut streams.kernel, &mut streams.labels).unwrap();
        if k % 5 == 4 {
            counts[report.label] += 1;
        }
    }
    assert!(state.weights.values().iter().all(|c| c.abs() < 1e-6));
    for i in 0..2 {
        let p = z[i] / (z[0] + z[1]);
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (counts[i] as f64 - n as f64 * p).abs();
        assert!(dev <= 3.0 * sd, "label {i}: {} draws, expected {:.0} ± {:.0}", counts[i], n as f64 * p, sd);
    }
}

/// After the flat-histogram phase the weights track log Z up to a constant.
#[test]
fn weights_converge_on_a_small_lattice() {
    let space = IsingSpace { rows: 2, cols: 2 };
    let bounds = ParamBox::cube(1, 0.0, 1.0).unwrap();
    let ps = ParticleSet::uniform(5, &bounds, &mut substream(3, Stream::Particles)).unwrap();
    let config = WlConfig::default();
    let mut state = start(&space, 5, &config);
    let mut streams = Streams::new(3);
    while state.schedule.phase == Phase::FlatHistogram {
        wl_step(&mut state, &space, &ps, &config, &mut streams.kernel, &mut streams.labels).unwrap();
    }
    let inst = EnumerableInstance::ising(2, 2).unwrap();
    let r: Vec<f64> = (0..5)
        .map(|i| state.weights.values()[i] - exact_log_z(&inst, &ps.point(i)).unwrap())
        .collect();
    let spread = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - r.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread <= 0.1, "max pairwise weight error {spread}");
}

#[test]
fn recentering_keeps_mean_zero_and_gamma_is_monotone() {
    let space = IsingSpace { rows: 3, cols: 3 };
    let ps = particles(&[0.05, 0.3, 0.5, 0.8]);
    let config = WlConfig {
        recenter_every: 100,
        ..WlConfig::default()
    };
    let mut state = start(&space, 4, &config);
    let mut streams = Streams::new(9);
    let mut last_gamma = f64::INFINITY;
    let mut last_phase = Phase::FlatHistogram;
    for _ in 0..100_000 {
        let report = wl_step(&mut state, &space, &ps, &config, &mut streams.kernel, &mut streams.labels).unwrap();
        if report.recentered {
            let mean = state.weights.sum() / 4.0;
            assert!(mean.abs() <= 1e-12, "mean after recentering {mean}");
        }
        match (last_phase, report.phase_used) {
            (Phase::Deterministic, _) => assert!(report.gamma_used < last_gamma),
            _ => assert!(report.gamma_used <= last_gamma),
        }
        last_gamma = report.gamma_used;
        last_phase = report.phase_used;
    }
    assert_eq!(last_phase, Phase::Deterministic);
}
