//! Run configuration: a flat `key = value` file plus command-line overrides.
//!
//! Every tunable constant has a named key. Defaults depend on the model, so
//! a file containing only `model` and `seed` describes a complete run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ergm::StarDefinition;
use crate::theta::{ProposalKind, ThetaConfig};
use crate::wl::WlConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Ising,
    ImageSeg,
    Ergm,
}

impl ModelKind {
    pub fn code(self) -> u32 {
        match self {
            Self::Ising => 1,
            Self::ImageSeg => 2,
            Self::Ergm => 3,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(Self::Ising),
            2 => Ok(Self::ImageSeg),
            3 => Ok(Self::Ergm),
            other => Err(Error::Checkpoint(format!("unknown model code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ising => "ising",
            Self::ImageSeg => "imageseg",
            Self::Ergm => "ergm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ising" => Ok(Self::Ising),
            "imageseg" => Ok(Self::ImageSeg),
            "ergm" => Ok(Self::Ergm),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParticleSource {
    UniformBox,
    Gaussian { mean: f64, variance: f64 },
}

/// When the sample store starts recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordFrom {
    Start,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub rows: usize,
    pub cols: usize,
    pub theta_true: f64,
    pub sigma_true: f64,
    pub edge_list: PathBuf,
    pub ergm_stats: StarDefinition,
    pub theta_lower: f64,
    pub theta_upper: f64,
    pub d: usize,
    pub particles: ParticleSource,
    pub bandwidth: Option<f64>,
    pub wl: WlConfig,
    pub theta: ThetaConfig,
    pub theta_steps: u64,
    pub burn_in: usize,
    pub seed: u64,
    pub data_seed: u64,
    /// Where outputs go. Not part of the saved state, so a run resumed
    /// elsewhere still produces identical checkpoints.
    #[serde(skip, default = "default_out")]
    pub out: PathBuf,
    pub checkpoint_every: u64,
    pub stride: u64,
    pub record_from: RecordFrom,
    pub cftp_max_sweeps: u64,
    pub max_wl_iterations: u64,
    pub acf_max_lag: usize,
    pub hist_bins: usize,
    pub logz_grid: usize,
    /// Recorded deterministic-phase iterations before the θ-chain starts.
    pub surface_samples: u64,
    pub write_pgm: bool,
}

impl RunConfig {
    /// Defaults for `model` with the given seed.
    pub fn defaults(model: ModelKind, seed: u64) -> Self {
        let ergm = model == ModelKind::Ergm;
        Self {
            model,
            rows: 64,
            cols: 64,
            theta_true: 0.4,
            sigma_true: 0.5,
            edge_list: PathBuf::from("builtin:florentine"),
            ergm_stats: StarDefinition::Literal,
            theta_lower: if ergm { -50.0 } else { 0.0 },
            theta_upper: if ergm { 50.0 } else { 1.0 },
            d: if ergm { 400 } else { 100 },
            particles: if ergm {
                ParticleSource::Gaussian {
                    mean: 0.0,
                    variance: 5.0,
                }
            } else {
                ParticleSource::UniformBox
            },
            bandwidth: None,
            wl: WlConfig::default(),
            theta: ThetaConfig {
                kind: if ergm {
                    ProposalKind::GaussianBlock
                } else {
                    ProposalKind::ReflectedUniform
                },
                ..ThetaConfig::default()
            },
            theta_steps: if ergm { 25_000 } else { 10_000 },
            burn_in: if ergm { 5_000 } else { 1_999 },
            seed,
            data_seed: seed,
            out: default_out(),
            checkpoint_every: 0,
            stride: 1,
            record_from: RecordFrom::Deterministic,
            cftp_max_sweeps: crate::models::cftp::DEFAULT_MAX_SWEEPS,
            max_wl_iterations: if ergm { 300_000_000 } else { 50_000_000 },
            acf_max_lag: 100,
            hist_bins: 50,
            logz_grid: 101,
            surface_samples: 100_000,
            write_pgm: false,
        }
    }

    /// Number of parameters.
    pub fn dim(&self) -> usize {
        match self.model {
            ModelKind::Ising | ModelKind::ImageSeg => 1,
            ModelKind::Ergm => 4,
        }
    }

    /// Parse `key = value` lines (`#` starts a comment), then apply
    /// `overrides` in order. `model` and `seed` are required.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        pairs.extend(overrides.iter().cloned());
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in pairs {
            map.insert(k, v);
        }
        Self::from_map(map)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<Self> {
        let model: ModelKind = map
            .remove("model")
            .ok_or_else(|| Error::Config("missing required key `model`".into()))?
            .parse()?;
        let seed: u64 = parse_value(
            "seed",
            &map.remove("seed")
                .ok_or_else(|| Error::Config("missing required key `seed` (there is no clock-based default)".into()))?,
        )?;
        let mut c = Self::defaults(model, seed);
        let mut data_seed = None;
        let mut particle_mean = None;
        let mut particle_variance = None;
        for (key, value) in map {
            let v = value.as_str();
            match key.as_str() {
                "rows" => c.rows = parse_value(&key, v)?,
                "cols" => c.cols = parse_value(&key, v)?,
                "theta_true" => c.theta_true = parse_value(&key, v)?,
                "sigma_true" => c.sigma_true = parse_value(&key, v)?,
                "edge_list" => c.edge_list = PathBuf::from(v),
                "ergm_stats" => c.ergm_stats = v.parse()?,
                "theta_lower" => c.theta_lower = parse_value(&key, v)?,
                "theta_upper" => c.theta_upper = parse_value(&key, v)?,
                "d" => c.d = parse_value(&key, v)?,
                "particles" => {
                    c.particles = match v {
                        "uniform" => ParticleSource::UniformBox,
                        "gaussian" => ParticleSource::Gaussian {
                            mean: 0.0,
                            variance: 5.0,
                        },
                        other => return Err(Error::Config(format!("unknown particle source `{other}`"))),
                    }
                }
                "particle_mean" => particle_mean = Some(parse_value(&key, v)?),
                "particle_variance" => particle_variance = Some(parse_value(&key, v)?),
                "bandwidth" => c.bandwidth = if v == "auto" { None } else { Some(parse_value(&key, v)?) },
                "gamma0" => c.wl.gamma0 = parse_value(&key, v)?,
                "eps1" => c.wl.eps1 = parse_value(&key, v)?,
                "eps2" => c.wl.eps2 = parse_value(&key, v)?,
                "tail_exponent" => c.wl.tail_exponent = parse_value(&key, v)?,
                "recenter_every" => c.wl.recenter_every = parse_value(&key, v)?,
                "sweeps_per_step" => c.wl.sweeps_per_step = parse_value(&key, v)?,
                "theta_steps" => c.theta_steps = parse_value(&key, v)?,
                "burn_in" => c.burn_in = parse_value(&key, v)?,
                "proposal" => {
                    c.theta.kind = match v {
                        "reflected_uniform" => ProposalKind::ReflectedUniform,
                        "gaussian_block" => ProposalKind::GaussianBlock,
                        other => return Err(Error::Config(format!("unknown proposal `{other}`"))),
                    }
                }
                "target_rate" => c.theta.target_rate = parse_value(&key, v)?,
                "scale_exponent" => c.theta.scale_exponent = parse_value(&key, v)?,
                "moment_exponent" => c.theta.moment_exponent = parse_value(&key, v)?,
                "blend_after" => c.theta.blend_after = parse_value(&key, v)?,
                "half_width_fraction" => c.theta.half_width_fraction = parse_value(&key, v)?,
                "sigma_factor" => c.theta.sigma_factor = parse_value(&key, v)?,
                "adapt" => c.theta.adapt = parse_value(&key, v)?,
                "data_seed" => data_seed = Some(parse_value(&key, v)?),
                "out" => c.out = PathBuf::from(v),
                "checkpoint_every" => c.checkpoint_every = parse_value(&key, v)?,
                "stride" => c.stride = parse_value(&key, v)?,
                "record_from" => {
                    c.record_from = match v {
                        "start" => RecordFrom::Start,
                        "deterministic" => RecordFrom::Deterministic,
                        other => return Err(Error::Config(format!("unknown record_from `{other}`"))),
                    }
                }
                "cftp_max_sweeps" => c.cftp_max_sweeps = parse_value(&key, v)?,
                "max_wl_iterations" => c.max_wl_iterations = parse_value(&key, v)?,
                "acf_max_lag" => c.acf_max_lag = parse_value(&key, v)?,
                "hist_bins" => c.hist_bins = parse_value(&key, v)?,
                "logz_grid" => c.logz_grid = parse_value(&key, v)?,
                "surface_samples" => c.surface_samples = parse_value(&key, v)?,
                "write_pgm" => c.write_pgm = parse_value(&key, v)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        if let Some(s) = data_seed {
            c.data_seed = s;
        }
        if particle_mean.is_some() || particle_variance.is_some() {
            let (m0, v0) = match c.particles {
                ParticleSource::Gaussian { mean, variance } => (mean, variance),
                ParticleSource::UniformBox => (0.0, 5.0),
            };
            c.particles = ParticleSource::Gaussian {
                mean: particle_mean.unwrap_or(m0),
                variance: particle_variance.unwrap_or(v0),
            };
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rows == 0 || self.cols == 0 {
            return bad("rows and cols must be positive".into());
        }
        if !(self.theta_lower < self.theta_upper) {
            return bad("theta_lower must be below theta_upper".into());
        }
        if self.model != ModelKind::Ergm && !(self.theta_true >= 0.0 && self.theta_true.is_finite()) {
            return bad("theta_true must be a finite non-negative coupling".into());
        }
        if self.model == ModelKind::ImageSeg && !(self.sigma_true > 0.0) {
            return bad("sigma_true must be positive".into());
        }
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if let ParticleSource::Gaussian { variance, .. } = self.particles {
            if !(variance > 0.0) {
                return bad("particle_variance must be positive".into());
            }
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return bad("bandwidth must be positive".into());
            }
        }
        let wl = &self.wl;
        if !(wl.gamma0 > wl.eps1 && wl.eps1 > 0.0 && wl.eps2 > 0.0) {
            return bad("need gamma0 > eps1 > 0 and eps2 > 0".into());
        }
        if !(wl.tail_exponent > 0.5 && wl.tail_exponent <= 1.0) {
            return bad("tail_exponent must lie in (0.5, 1]".into());
        }
        if wl.sweeps_per_step == 0 {
            return bad("sweeps_per_step must be positive".into());
        }
        let t = &self.theta;
        if !(t.target_rate > 0.0 && t.target_rate < 1.0) {
            return bad("target_rate must lie in (0, 1)".into());
        }
        if !(t.half_width_fraction > 0.0 && t.sigma_factor > 0.0) {
            return bad("proposal scales must be positive".into());
        }
        if self.theta_steps == 0 || self.burn_in as u64 >= self.theta_steps {
            return bad("theta_steps must exceed burn_in".into());
        }
        if self.stride == 0 {
            return bad("stride must be positive".into());
        }
        if self.hist_bins == 0 || self.logz_grid < 2 {
            return bad("hist_bins must be positive and logz_grid at least 2".into());
        }
        Ok(())
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

/// Split `key=value` into its parts.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_model_defaults() {
        let c = RunConfig::parse("model = ising\nseed = 3\n", &[]).unwrap();
        assert_eq!((c.rows, c.cols, c.d, c.theta_steps, c.burn_in), (64, 64, 100, 10_000, 1_999));
        assert_eq!(c.wl.gamma0, 1.0);
        assert_eq!(c.wl.eps2, 0.2);
        let e = RunConfig::parse("model = ergm\nseed = 3\n", &[]).unwrap();
        assert_eq!(e.d, 400);
        assert_eq!(e.particles, ParticleSource::Gaussian { mean: 0.0, variance: 5.0 });
        assert_eq!(e.theta.kind, ProposalKind::GaussianBlock);
        assert_eq!((e.theta_lower, e.theta_upper), (-50.0, 50.0));
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(RunConfig::parse("model = ising\n", &[]), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_win() {
        let c = RunConfig::parse(
            "model = ising # comment\nseed = 1\nrows = 3\n",
            &[("rows".into(), "5".into()), ("seed".into(), "9".into())],
        )
        .unwrap();
        assert_eq!(c.rows, 5);
        assert_eq!(c.seed, 9);
        assert_eq!(c.data_seed, 9);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::parse("model = ising\nseed = 1\nfoo = 2\n", &[]).is_err());
        assert!(RunConfig::parse("model = ising\nseed = 1\nd = 0\n", &[]).is_err());
        assert!(RunConfig::parse("model = ising\nseed = 1\nburn_in = 20000\n", &[]).is_err());
        assert!(RunConfig::parse("model = potts\nseed = 1\n", &[]).is_err());
    }
}
