//! Undirected four-statistic exponential random graph model.
//!
//! The statistics are edges, two-stars, three-stars and triangles. Two
//! star conventions are supported. Under [`StarDefinition::Literal`] a star
//! is counted only at its largest-index vertex, with all leaves below it:
//! `S2 = Σ_{i<j<k} y_ik y_jk` and `S3 = Σ_{i<j<k<l} y_il y_jl y_kl`.
//! [`StarDefinition::Standard`] counts every centre, `Σ_k C(deg_k, 2)` and
//! `Σ_k C(deg_k, 3)`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, ParameterPoint, SampleSpace, SufficientStats};
use crate::numeric::logistic;

/// The bundled business-tie network of the sixteen Florentine families.
pub const FLORENTINE_BUSINESS: &str = include_str!("../../data/florentine_business.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StarDefinition {
    Literal,
    Standard,
}

impl std::str::FromStr for StarDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "standard" => Ok(Self::Standard),
            other => Err(Error::Config(format!(
                "unknown ERGM statistic definition `{other}` (expected literal or standard)"
            ))),
        }
    }
}

/// Simple undirected graph on `n` actors, stored as a dense 0/1 matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErgmGraph {
    n: usize,
    adj: Vec<u8>,
}

impl ErgmGraph {
    pub fn empty(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("graph needs at least one actor".into()));
        }
        Ok(Self { n, adj: vec![0; n * n] })
    }

    /// Build from 0-based edge pairs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n)?;
        for &(i, j) in edges {
            if i == j || i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("bad edge ({i}, {j}) for n = {n}")));
            }
            g.set(i, j, true);
        }
        Ok(g)
    }

    /// Graph whose `k`-th dyad (in [`dyads`] order) is present iff
    /// bit `k` of `mask` is set.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        let mut g = Self { n, adj: vec![0; n * n] };
        for (k, (i, j)) in dyads(n).enumerate() {
            g.set(i, j, mask >> k & 1 == 1);
        }
        g
    }

    pub fn mask(&self) -> u64 {
        dyads(self.n)
            .enumerate()
            .filter(|(_, (i, j))| self.has_edge(*i, *j))
            .fold(0u64, |m, (k, _)| m | 1 << k)
    }

    pub fn n_actors(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        debug_assert!(i != j);
        let v = on as u8;
        self.adj[i * self.n + j] = v;
        self.adj[j * self.n + i] = v;
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|v| **v == 1).count() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().filter(|v| **v == 1).count()
    }

    /// Number of neighbours of `i` with a smaller index.
    pub fn lower_degree(&self, i: usize) -> usize {
        self.row(i)[..i].iter().filter(|v| **v == 1).count()
    }

    pub fn common_neighbors(&self, i: usize, j: usize) -> usize {
        self.row(i).iter().zip(self.row(j)).filter(|(a, b)| **a & **b == 1).count()
    }

    /// Number of unordered pairs `i < j`.
    pub fn dyad_count(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    fn row(&self, i: usize) -> &[u8] {
        &self.adj[i * self.n..(i + 1) * self.n]
    }
}

/// Dyads `(i, j)` with `i < j` in lexicographic order.
pub fn dyads(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

fn choose2(m: usize) -> f64 {
    (m * m.saturating_sub(1) / 2) as f64
}

fn choose3(m: usize) -> f64 {
    (m * m.saturating_sub(1) * m.saturating_sub(2) / 6) as f64
}

pub fn ergm_stats(g: &ErgmGraph, def: StarDefinition) -> SufficientStats {
    let n = g.n;
    let mut s = [0.0; 4];
    s[0] = g.edge_count() as f64;
    for k in 0..n {
        let m = match def {
            StarDefinition::Literal => g.lower_degree(k),
            StarDefinition::Standard => g.degree(k),
        };
        s[1] += choose2(m);
        s[2] += choose3(m);
    }
    let mut tri = 0usize;
    for (i, j) in dyads(n) {
        if g.has_edge(i, j) {
            tri += (j + 1..n).filter(|&k| g.has_edge(i, k) && g.has_edge(j, k)).count();
        }
    }
    s[3] = tri as f64;
    SufficientStats::new(s.to_vec())
}

/// `S(g with a–b) − S(g without a–b)` for `a ≠ b`, whatever the current
/// state of the dyad.
pub fn change_stats(g: &ErgmGraph, a: usize, b: usize, def: StarDefinition) -> [f64; 4] {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    let present = g.has_edge(a, b) as usize;
    let common = g.common_neighbors(a, b) as f64;
    match def {
        StarDefinition::Literal => {
            // only the larger endpoint gains a lower neighbour
            let m = g.lower_degree(b) - present;
            [1.0, m as f64, choose2(m), common]
        }
        StarDefinition::Standard => {
            let da = g.degree(a) - present;
            let db = g.degree(b) - present;
            [1.0, (da + db) as f64, choose2(da) + choose2(db), common]
        }
    }
}

/// One systematic sweep over all dyads, each redrawn from its full conditional.
pub fn ergm_flip_sweep<R: Rng + ?Sized>(g: &mut ErgmGraph, theta: &[f64], def: StarDefinition, rng: &mut R) {
    for i in 0..g.n {
        for j in i + 1..g.n {
            let delta = change_stats(g, i, j, def);
            let p = logistic(dot(theta, &delta));
            let u: f64 = rng.random();
            g.set(i, j, u < p);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErgmSpace {
    pub n_actors: usize,
    pub definition: StarDefinition,
}

impl SampleSpace for ErgmSpace {
    type State = ErgmGraph;

    fn stat_dim(&self) -> usize {
        4
    }

    fn stats(&self, state: &ErgmGraph) -> SufficientStats {
        ergm_stats(state, self.definition)
    }

    fn sweep<R: Rng + ?Sized>(&self, state: &mut ErgmGraph, theta: &ParameterPoint, rng: &mut R) {
        ergm_flip_sweep(state, theta.coords(), self.definition, rng);
    }
}

/// Parse an edge list: the first non-comment line holds the node count, each
/// following line one edge `i j` with 1-based ids and `i < j`. Blank lines
/// and `#` comments are ignored.
pub fn parse_edge_list(text: &str) -> Result<ErgmGraph> {
    let mut graph: Option<ErgmGraph> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |message: String| Error::EdgeList { line, message };
        let fields: Vec<&str> = body.split_whitespace().collect();
        let Some(g) = graph.as_mut() else {
            if fields.len() != 1 {
                return Err(err(format!("expected a node count, found `{body}`")));
            }
            let n: usize = fields[0]
                .parse()
                .map_err(|_| err(format!("invalid node count `{}`", fields[0])))?;
            if n == 0 {
                return Err(err("node count must be positive".into()));
            }
            graph = Some(ErgmGraph::empty(n)?);
            continue;
        };
        if fields.len() != 2 {
            return Err(err(format!("expected `i j`, found `{body}`")));
        }
        let parse = |f: &str| -> Result<usize> {
            f.parse::<usize>().map_err(|_| err(format!("invalid node id `{f}`")))
        };
        let (i, j) = (parse(fields[0])?, parse(fields[1])?);
        let n = g.n_actors();
        for id in [i, j] {
            if id == 0 || id > n {
                return Err(err(format!("node id {id} outside 1..={n}")));
            }
        }
        if i == j {
            return Err(err(format!("self-loop on node {i}")));
        }
        if i > j {
            return Err(err(format!("edge `{i} {j}` must be written with i < j")));
        }
        if g.has_edge(i - 1, j - 1) {
            return Err(err(format!("duplicate edge `{i} {j}`")));
        }
        g.set(i - 1, j - 1, true);
    }
    graph.ok_or(Error::EdgeList {
        line: text.lines().count(),
        message: "missing node-count header".into(),
    })
}

/// Load an edge list from disk. The value `builtin:florentine` selects the
/// bundled Florentine business network.
pub fn load_edge_list(path: &Path) -> Result<ErgmGraph> {
    if path.as_os_str() == "builtin:florentine" {
        return parse_edge_list(FLORENTINE_BUSINESS);
    }
    parse_edge_list(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_literal(g: &ErgmGraph) -> [f64; 4] {
        let n = g.n_actors();
        let y = |i: usize, j: usize| g.has_edge(i, j) as usize;
        let (mut s1, mut s2, mut s3, mut s4) = (0, 0, 0, 0);
        for i in 0..n {
            for j in i + 1..n {
                s1 += y(i, j);
                for k in j + 1..n {
                    s2 += y(i, k) * y(j, k);
                    s4 += y(i, k) * y(j, k) * y(i, j);
                    for l in k + 1..n {
                        s3 += y(i, l) * y(j, l) * y(k, l);
                    }
                }
            }
        }
        [s1 as f64, s2 as f64, s3 as f64, s4 as f64]
    }

    #[test]
    fn stat_examples() {
        let e = ErgmGraph::empty(5).unwrap();
        assert_eq!(ergm_stats(&e, StarDefinition::Literal).values(), &[0.0; 4]);
        let k4 = ErgmGraph::from_mask(4, 0b111111);
        assert_eq!(ergm_stats(&k4, StarDefinition::Literal).values(), &[6.0, 4.0, 1.0, 4.0]);
        assert_eq!(ergm_stats(&k4, StarDefinition::Standard).values(), &[6.0, 12.0, 4.0, 4.0]);
        let tri = ErgmGraph::from_edges(4, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        assert_eq!(ergm_stats(&tri, StarDefinition::Literal).values(), &[3.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn literal_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(2..=9);
            let mut g = ErgmGraph::empty(n).unwrap();
            for (i, j) in dyads(n) {
                g.set(i, j, rng.random_bool(0.4));
            }
            assert_eq!(ergm_stats(&g, StarDefinition::Literal).values(), &brute_literal(&g));
        }
    }

    #[test]
    fn change_stats_match_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut g = ErgmGraph::empty(8).unwrap();
            for (i, j) in dyads(8) {
                g.set(i, j, rng.random_bool(0.5));
            }
            for def in [StarDefinition::Literal, StarDefinition::Standard] {
                for (i, j) in dyads(8) {
                    let mut with = g.clone();
                    with.set(i, j, true);
                    let mut without = g.clone();
                    without.set(i, j, false);
                    let a = ergm_stats(&with, def);
                    let b = ergm_stats(&without, def);
                    let delta = change_stats(&g, i, j, def);
                    for k in 0..4 {
                        assert_eq!(a.values()[k] - b.values()[k], delta[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn edge_only_sweep_is_bernoulli() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = ErgmGraph::empty(6).unwrap();
        let theta = [-1.0, 0.0, 0.0, 0.0];
        let mut on = 0usize;
        let sweeps = 20_000;
        for _ in 0..sweeps {
            ergm_flip_sweep(&mut g, &theta, StarDefinition::Literal, &mut rng);
            on += g.edge_count();
        }
        let frac = on as f64 / (sweeps * 15) as f64;
        assert!((frac - logistic(-1.0)).abs() < 0.005, "{frac}");
    }

    #[test]
    fn parse_examples() {
        let g = parse_edge_list("16\n").unwrap();
        assert_eq!((g.n_actors(), g.edge_count()), (16, 0));
        let err = parse_edge_list("4\n1 1\n").unwrap_err();
        assert!(matches!(err, Error::EdgeList { line: 2, .. }), "{err}");
        assert!(matches!(parse_edge_list("4\n1 5\n"), Err(Error::EdgeList { line: 2, .. })));
        assert!(matches!(parse_edge_list("4\n1 2\nx y\n"), Err(Error::EdgeList { line: 3, .. })));
        assert!(matches!(parse_edge_list("4\n1 2\n1 2\n"), Err(Error::EdgeList { line: 3, .. })));
        assert!(matches!(parse_edge_list("# nothing\n"), Err(Error::EdgeList { .. })));
    }

    #[test]
    fn bundled_florentine_network() {
        let g = load_edge_list(Path::new("builtin:florentine")).unwrap();
        let edge_lines = FLORENTINE_BUSINESS
            .lines()
            .map(|l| l.split('#').next().unwrap().trim())
            .filter(|l| !l.is_empty())
            .count()
            - 1;
        assert_eq!(g.n_actors(), 16);
        assert_eq!(g.edge_count(), edge_lines);
        assert_eq!(g.edge_count(), 15);
        let s = ergm_stats(&g, StarDefinition::Standard);
        assert_eq!(s.values(), &[15.0, 36.0, 24.0, 5.0]);
    }

    proptest! {
        #[test]
        fn mask_round_trip(mask in 0u64..(1 << 10)) {
            prop_assert_eq!(ErgmGraph::from_mask(5, mask).mask(), mask);
        }
    }
}
