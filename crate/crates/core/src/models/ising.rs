//! Ising model on an `m × n` lattice with free boundaries.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParameterPoint, SampleSpace, SufficientStats};
use crate::numeric::logistic;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsingLattice {
    rows: usize,
    cols: usize,
    spins: Vec<i8>,
}

impl IsingLattice {
    pub fn filled(rows: usize, cols: usize, spin: i8) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("lattice dimensions must be positive".into()));
        }
        if spin != 1 && spin != -1 {
            return Err(Error::InvalidArgument(format!("spin must be +-1, got {spin}")));
        }
        Ok(Self {
            rows,
            cols,
            spins: vec![spin; rows * cols],
        })
    }

    pub fn from_spins(rows: usize, cols: usize, spins: Vec<i8>) -> Result<Self> {
        if rows == 0 || cols == 0 || spins.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "expected {rows}x{cols} spins, got {}",
                spins.len()
            )));
        }
        if spins.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidArgument("spins must be +-1".into()));
        }
        Ok(Self { rows, cols, spins })
    }

    /// Lattice whose site `k` (row-major) is +1 iff bit `k` of `mask` is set.
    pub fn from_mask(rows: usize, cols: usize, mask: u64) -> Self {
        let spins = (0..rows * cols)
            .map(|k| if mask >> k & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { rows, cols, spins }
    }

    pub fn mask(&self) -> u64 {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == 1)
            .fold(0u64, |m, (k, _)| m | 1 << k)
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Self> {
        let mut lat = Self::filled(rows, cols, 1)?;
        for s in &mut lat.spins {
            *s = if rng.random::<bool>() { 1 } else { -1 };
        }
        Ok(lat)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub(crate) fn spins_mut(&mut self) -> &mut [i8] {
        &mut self.spins
    }

    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.spins[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, spin: i8) {
        debug_assert!(spin == 1 || spin == -1);
        self.spins[r * self.cols + c] = spin;
    }

    pub fn neighbor_sum(&self, r: usize, c: usize) -> i32 {
        neighbor_sum(&self.spins, self.rows, self.cols, r, c)
    }

    /// Number of nearest-neighbour bonds, `m(n−1) + (m−1)n`.
    pub fn bond_count(&self) -> usize {
        self.rows * (self.cols - 1) + (self.rows - 1) * self.cols
    }

    /// Binary PGM (white = +1).
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "P5\n{} {}\n255\n", self.cols, self.rows)?;
        let bytes: Vec<u8> = self.spins.iter().map(|s| if *s == 1 { 255 } else { 0 }).collect();
        f.write_all(&bytes)?;
        Ok(())
    }
}

#[inline]
pub(crate) fn neighbor_sum(spins: &[i8], rows: usize, cols: usize, r: usize, c: usize) -> i32 {
    let k = r * cols + c;
    let mut s = 0i32;
    if r > 0 {
        s += spins[k - cols] as i32;
    }
    if r + 1 < rows {
        s += spins[k + cols] as i32;
    }
    if c > 0 {
        s += spins[k - 1] as i32;
    }
    if c + 1 < cols {
        s += spins[k + 1] as i32;
    }
    s
}

/// Sum of `x_i x_j` over horizontal and vertical nearest-neighbour pairs.
pub fn ising_stat(lat: &IsingLattice) -> SufficientStats {
    SufficientStats::new(vec![ising_energy(lat) as f64])
}

pub fn ising_energy(lat: &IsingLattice) -> i64 {
    let (m, n) = (lat.rows, lat.cols);
    let s = &lat.spins;
    let mut e = 0i64;
    for r in 0..m {
        let row = &s[r * n..(r + 1) * n];
        for c in 0..n.saturating_sub(1) {
            e += (row[c] * row[c + 1]) as i64;
        }
        if r + 1 < m {
            let next = &s[(r + 1) * n..(r + 2) * n];
            for c in 0..n {
                e += (row[c] * next[c]) as i64;
            }
        }
    }
    e
}

/// `P(x_s = +1 | neighbours)` for neighbour sums −4..=4, indexed by `sum + 4`.
pub(crate) fn heat_bath_table(theta: f64) -> [f64; 9] {
    let mut t = [0.0; 9];
    for (i, p) in t.iter_mut().enumerate() {
        let s = i as f64 - 4.0;
        *p = logistic(2.0 * theta * s);
    }
    t
}

/// One raster sweep of single-site heat-bath updates at coupling `theta`.
pub fn ising_heatbath_sweep<R: Rng + ?Sized>(lat: &mut IsingLattice, theta: f64, rng: &mut R) {
    let table = heat_bath_table(theta);
    let (m, n) = (lat.rows, lat.cols);
    let spins = &mut lat.spins;
    for r in 0..m {
        for c in 0..n {
            let s = neighbor_sum(spins, m, n, r, c);
            let u: f64 = rng.random();
            spins[r * n + c] = if u < table[(s + 4) as usize] { 1 } else { -1 };
        }
    }
}

/// The Ising sample space for the Wang–Landau chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsingSpace {
    pub rows: usize,
    pub cols: usize,
}

impl SampleSpace for IsingSpace {
    type State = IsingLattice;

    fn stat_dim(&self) -> usize {
        1
    }

    fn stats(&self, state: &IsingLattice) -> SufficientStats {
        ising_stat(state)
    }

    fn sweep<R: Rng + ?Sized>(&self, state: &mut IsingLattice, theta: &ParameterPoint, rng: &mut R) {
        ising_heatbath_sweep(state, theta[0], rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force(lat: &IsingLattice) -> i64 {
        let mut e = 0;
        for i in 0..lat.rows() {
            for j in 0..lat.cols() {
                if j + 1 < lat.cols() {
                    e += (lat.get(i, j) * lat.get(i, j + 1)) as i64;
                }
                if i + 1 < lat.rows() {
                    e += (lat.get(i, j) * lat.get(i + 1, j)) as i64;
                }
            }
        }
        e
    }

    #[test]
    fn stat_examples() {
        let up = IsingLattice::filled(2, 2, 1).unwrap();
        assert_eq!(ising_stat(&up).values(), &[4.0]);
        let checker = IsingLattice::from_spins(2, 2, vec![1, -1, -1, 1]).unwrap();
        assert_eq!(ising_stat(&checker).values(), &[-4.0]);
        let mut one = up.clone();
        one.set(0, 0, -1);
        assert_eq!(ising_stat(&one).values(), &[0.0]);
    }

    #[test]
    fn stat_range_and_brute_force_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = rng.random_range(1..=8);
            let n = rng.random_range(1..=8);
            let lat = IsingLattice::random(m, n, &mut rng).unwrap();
            let e = ising_energy(&lat);
            assert_eq!(e, brute_force(&lat));
            assert!(e.unsigned_abs() as usize <= lat.bond_count());
        }
    }

    #[test]
    fn heat_bath_probabilities() {
        let t = heat_bath_table(0.4);
        assert_eq!(t[4], 0.5);
        let t0 = heat_bath_table(0.0);
        assert!(t0.iter().all(|p| *p == 0.5));
        assert!((t[6] - 1.0 / (1.0 + (-1.6f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn zero_coupling_sweep_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut lat = IsingLattice::filled(8, 8, 1).unwrap();
        let mut plus = 0usize;
        let sweeps = 2000;
        for _ in 0..sweeps {
            ising_heatbath_sweep(&mut lat, 0.0, &mut rng);
            plus += lat.spins().iter().filter(|s| **s == 1).count();
        }
        let frac = plus as f64 / (sweeps * 64) as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn mask_round_trip() {
        for mask in 0..16u64 {
            assert_eq!(IsingLattice::from_mask(2, 2, mask).mask(), mask);
        }
    }

    #[test]
    fn pgm_export() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        IsingLattice::from_spins(1, 2, vec![1, -1]).unwrap().write_pgm(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes, b"P5\n2 1\n255\n\xff\x00");
    }
}
