//! Exact Ising draws by monotone coupling from the past.
//!
//! Two heat-bath chains started from all −1 and all +1 share their uniforms.
//! For a ferromagnetic coupling the update is monotone in the neighbour sum,
//! so the top chain dominates the bottom one site by site, and once they
//! meet at time 0 every start would have met. Each sweep's uniforms come
//! from a per-sweep seed that is kept, so restarting further in the past
//! reuses the randomness of the later sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ising::{heat_bath_table, neighbor_sum, IsingLattice};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_SWEEPS: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct CftpDraw {
    pub lattice: IsingLattice,
    /// How far back (in sweeps) the coalescing run started.
    pub sweeps_back: u64,
    /// Number of sweeps whose monotonicity was verified.
    pub checked_sweeps: u64,
}

pub fn cftp_sample<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    theta: f64,
    max_sweeps: u64,
    rng: &mut R,
) -> Result<IsingLattice> {
    cftp_draw(rows, cols, theta, max_sweeps, rng).map(|d| d.lattice)
}

pub fn cftp_draw<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    theta: f64,
    max_sweeps: u64,
    rng: &mut R,
) -> Result<CftpDraw> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "monotone CFTP needs a non-negative coupling, got {theta}"
        )));
    }
    let table = heat_bath_table(theta);
    let mut top = IsingLattice::filled(rows, cols, 1)?;
    let mut bottom = IsingLattice::filled(rows, cols, -1)?;
    // seeds[k] drives the sweep that ends at time −k
    let mut seeds: Vec<u64> = Vec::new();
    let mut back: u64 = 1;
    let mut checked = 0u64;
    loop {
        while (seeds.len() as u64) < back {
            seeds.push(rng.random());
        }
        top.spins_mut().fill(1);
        bottom.spins_mut().fill(-1);
        for k in (0..back as usize).rev() {
            let mut sweep_rng = ChaCha8Rng::seed_from_u64(seeds[k]);
            coupled_sweep(&mut top, &mut bottom, &table, &mut sweep_rng);
            checked += 1;
            if let Some(site) = first_violation(&top, &bottom) {
                return Err(Error::MonotonicityViolated {
                    site,
                    sweep: back - k as u64,
                });
            }
        }
        if top == bottom {
            return Ok(CftpDraw {
                lattice: top,
                sweeps_back: back,
                checked_sweeps: checked,
            });
        }
        if back >= max_sweeps {
            return Err(Error::NoCoalescence {
                theta,
                rows,
                cols,
                max_sweeps,
            });
        }
        back = (back * 2).min(max_sweeps);
    }
}

fn coupled_sweep<R: Rng + ?Sized>(top: &mut IsingLattice, bottom: &mut IsingLattice, table: &[f64; 9], rng: &mut R) {
    let (m, n) = (top.rows(), top.cols());
    for r in 0..m {
        for c in 0..n {
            let u: f64 = rng.random();
            let st = neighbor_sum(top.spins(), m, n, r, c);
            let sb = neighbor_sum(bottom.spins(), m, n, r, c);
            let k = r * n + c;
            top.spins_mut()[k] = if u < table[(st + 4) as usize] { 1 } else { -1 };
            bottom.spins_mut()[k] = if u < table[(sb + 4) as usize] { 1 } else { -1 };
        }
    }
}

fn first_violation(top: &IsingLattice, bottom: &IsingLattice) -> Option<usize> {
    top.spins().iter().zip(bottom.spins()).position(|(t, b)| t < b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coupling_coalesces_in_one_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = cftp_draw(5, 7, 0.0, DEFAULT_MAX_SWEEPS, &mut rng).unwrap();
        assert_eq!(d.sweeps_back, 1);
    }

    #[test]
    fn reproducible_under_fixed_seed() {
        let a = cftp_sample(16, 16, 0.4, DEFAULT_MAX_SWEEPS, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = cftp_sample(16, 16, 0.4, DEFAULT_MAX_SWEEPS, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_negative_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(cftp_sample(2, 2, -0.1, 16, &mut rng).is_err());
    }

    #[test]
    fn reports_non_coalescence() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = cftp_sample(32, 32, 0.9, 4, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NoCoalescence { max_sweeps: 4, rows: 32, .. }));
    }
}
