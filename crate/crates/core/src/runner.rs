//! Experiment orchestration.
//!
//! A run has three stages. Data are generated (or loaded) when the
//! experiment is built. The Wang–Landau chain then runs alone until its step
//! size enters the deterministic tail. After that every iteration advances
//! the Wang–Landau chain once and the θ-chain once, plus the latent image and
//! noise variance for the segmentation model. The whole state, random
//! streams included, is serializable, so a resumed run produces the same
//! bytes as an uninterrupted one.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::{ModelKind, ParticleSource, RecordFrom, RunConfig};
use crate::diagnostics::{histogram, summarize, summarize_samples, write_histogram_csv, ChainSummary};
use crate::error::{Error, Result};
use crate::model::{EnergyModel, ParamBox, ParameterPoint, SampleSpace, SufficientStats};
use crate::models::cftp::cftp_sample;
use crate::models::ergm::{ergm_stats, load_edge_list, ErgmGraph, ErgmSpace};
use crate::models::imageseg::{pixel_sweep, sigma2_draw, simulate_noisy_image, ImageSegState};
use crate::models::ising::{ising_stat, IsingLattice, IsingSpace};
use crate::rng::{substream, Stream, Streams};
use crate::surface::{SampleStore, SmoothingKernel, ZEstimate};
use crate::theta::ThetaSampler;
use crate::wl::{wl_step, HalvingEvent, ParticleSet, Phase, WlState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Learning,
    Joint,
    Done,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Learning => "learning",
            Stage::Joint => "joint",
            Stage::Done => "done",
        }
    }
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: DeserializeOwned"))]
pub struct Experiment<S: SampleSpace> {
    pub config: RunConfig,
    pub space: S,
    pub model: EnergyModel,
    pub particles: ParticleSet,
    pub kernel: SmoothingKernel,
    pub wl: WlState<S::State>,
    pub store: SampleStore,
    pub sampler: ThetaSampler,
    /// Segmentation model only.
    pub latent: Option<ImageSegState>,
    pub sigma_trace: Vec<f64>,
    /// The simulated truth for lattice models.
    pub truth: Option<IsingLattice>,
    pub streams: Streams,
    pub stage: Stage,
    pub joint_steps: u64,
    /// Wang–Landau iterations spent before the θ-chain started.
    pub learning_iterations: Option<u64>,
    /// Deterministic-phase iterations run before the θ-chain starts.
    pub warmup_iterations: u64,
}

/// A prepared run for any of the three models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum AnyExperiment {
    Lattice(Experiment<IsingSpace>),
    Graph(Experiment<ErgmSpace>),
}

impl AnyExperiment {
    pub fn prepare(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let q = config.dim();
        let bounds = ParamBox::cube(q, config.theta_lower, config.theta_upper)?;
        let mut data_rng = substream(config.data_seed, Stream::DataGen);
        let mut particle_rng = substream(config.seed, Stream::Particles);
        let particles = match config.particles {
            ParticleSource::UniformBox => ParticleSet::uniform(config.d, &bounds, &mut particle_rng)?,
            ParticleSource::Gaussian { mean, variance } => {
                ParticleSet::gaussian(config.d, mean, variance, &bounds, &mut particle_rng)?
            }
        };
        let kernel = match config.bandwidth {
            Some(h) => SmoothingKernel::new(h)?,
            None => SmoothingKernel::median_nearest_neighbor(&particles),
        };
        let data_err = |e: Error| Error::Run {
            phase: "data".into(),
            iteration: 0,
            source: Box::new(e),
        };
        match config.model {
            ModelKind::Ising | ModelKind::ImageSeg => {
                let space = IsingSpace {
                    rows: config.rows,
                    cols: config.cols,
                };
                let truth = cftp_sample(
                    config.rows,
                    config.cols,
                    config.theta_true,
                    config.cftp_max_sweeps,
                    &mut data_rng,
                )
                .map_err(data_err)?;
                let (observed, latent) = if config.model == ModelKind::ImageSeg {
                    let y = simulate_noisy_image(&truth, config.sigma_true, &mut data_rng)?;
                    let latent = ImageSegState::initial(config.rows, config.cols, y)?;
                    (ising_stat(&latent.x), Some(latent))
                } else {
                    (ising_stat(&truth), None)
                };
                let x0 = IsingLattice::random(config.rows, config.cols, &mut particle_rng)?;
                Ok(Self::Lattice(Experiment::assemble(
                    config,
                    space,
                    bounds,
                    observed,
                    particles,
                    kernel,
                    x0,
                    latent,
                    Some(truth),
                )?))
            }
            ModelKind::Ergm => {
                let graph = load_edge_list(&config.edge_list).map_err(data_err)?;
                let space = ErgmSpace {
                    n_actors: graph.n_actors(),
                    definition: config.ergm_stats,
                };
                let observed = ergm_stats(&graph, config.ergm_stats);
                let x0 = ErgmGraph::empty(graph.n_actors())?;
                Ok(Self::Graph(Experiment::assemble(
                    config, space, bounds, observed, particles, kernel, x0, None, None,
                )?))
            }
        }
    }

    pub fn config(&self) -> &RunConfig {
        match self {
            Self::Lattice(e) => &e.config,
            Self::Graph(e) => &e.config,
        }
    }

    pub fn set_output_dir(&mut self, out: PathBuf) {
        match self {
            Self::Lattice(e) => e.config.out = out,
            Self::Graph(e) => e.config.out = out,
        }
    }

    pub fn stage(&self) -> Stage {
        match self {
            Self::Lattice(e) => e.stage,
            Self::Graph(e) => e.stage,
        }
    }

    /// Run to completion (or for at most `max_iterations` more iterations),
    /// checkpointing as configured. Returns the stage reached.
    pub fn run(&mut self, max_iterations: Option<u64>) -> Result<Stage> {
        match self {
            Self::Lattice(e) => e.run(max_iterations),
            Self::Graph(e) => e.run(max_iterations),
        }
    }

    pub fn summary(&self) -> Result<RunSummary> {
        match self {
            Self::Lattice(e) => e.summary(),
            Self::Graph(e) => e.summary(),
        }
    }

    pub fn write_outputs(&self) -> Result<RunSummary> {
        match self {
            Self::Lattice(e) => e.write_outputs(),
            Self::Graph(e) => e.write_outputs(),
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let code = self.config().model.code();
        let bytes = match self {
            Self::Lattice(e) => checkpoint::encode(code, e)?,
            Self::Graph(e) => checkpoint::encode(code, e)?,
        };
        checkpoint::write_atomic(path, &bytes)
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let (code, payload) = checkpoint::split_header(&bytes)?;
        let exp = match ModelKind::from_code(code)? {
            ModelKind::Ising | ModelKind::ImageSeg => Self::Lattice(checkpoint::decode_payload(payload)?),
            ModelKind::Ergm => Self::Graph(checkpoint::decode_payload(payload)?),
        };
        if exp.config().model.code() != code {
            return Err(Error::Checkpoint("model code does not match the stored configuration".into()));
        }
        Ok(exp)
    }

    /// Learn the surface without a θ-chain and evaluate it on a grid along
    /// one axis (other coordinates at the box center).
    pub fn surface_grid(&mut self, axis: usize, lo: f64, hi: f64, steps: usize) -> Result<Vec<(f64, f64)>> {
        match self {
            Self::Lattice(e) => e.surface_grid(axis, lo, hi, steps),
            Self::Graph(e) => e.surface_grid(axis, lo, hi, steps),
        }
    }
}

impl<S: SampleSpace + Clone + Serialize + DeserializeOwned> Experiment<S> {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: RunConfig,
        space: S,
        bounds: ParamBox,
        observed: SufficientStats,
        particles: ParticleSet,
        kernel: SmoothingKernel,
        x0: S::State,
        latent: Option<ImageSegState>,
        truth: Option<IsingLattice>,
    ) -> Result<Self> {
        let model = EnergyModel::new(bounds.clone(), observed)?;
        let wl = WlState::new(&space, x0, 0, config.d, &config.wl)?;
        let store = SampleStore::new(config.d, space.stat_dim(), config.stride)?;
        let sampler = ThetaSampler::new(&bounds, config.theta.clone(), config.burn_in)?;
        let streams = Streams::new(config.seed);
        Ok(Self {
            config,
            space,
            model,
            particles,
            kernel,
            wl,
            store,
            sampler,
            latent,
            sigma_trace: Vec::new(),
            truth,
            streams,
            stage: Stage::Learning,
            joint_steps: 0,
            learning_iterations: None,
            warmup_iterations: 0,
        })
    }

    /// Add `a` to every Wang–Landau weight. Only weight differences matter,
    /// so the θ-trace must not change.
    pub fn shift_weights(&mut self, a: f64) {
        self.wl.weights = self.wl.weights.shifted(a);
    }

    pub fn surface(&self) -> ZEstimate<'_> {
        ZEstimate::new(&self.store, &self.particles, &self.wl.weights, self.kernel)
    }

    fn fail(&self, e: Error) -> Error {
        Error::Run {
            phase: self.stage.name().into(),
            iteration: self.wl.iteration,
            source: Box::new(e),
        }
    }

    /// One Wang–Landau iteration, recording its sample when due.
    fn wl_iteration(&mut self) -> Result<()> {
        let report = wl_step(
            &mut self.wl,
            &self.space,
            &self.particles,
            &self.config.wl,
            &mut self.streams.kernel,
            &mut self.streams.labels,
        )?;
        if self.config.record_from == RecordFrom::Start || report.phase_used == Phase::Deterministic {
            self.store.record_sample(report.label, &report.stats)?;
        }
        Ok(())
    }

    /// Advance by one iteration of the current stage.
    pub fn step(&mut self) -> Result<()> {
        let result = match self.stage {
            Stage::Learning => self.learning_step(),
            Stage::Joint => self.joint_step(),
            Stage::Done => Ok(()),
        };
        result.map_err(|e| self.fail(e))
    }

    fn learning_step(&mut self) -> Result<()> {
        self.wl_iteration()?;
        if self.wl.schedule.phase == Phase::Deterministic {
            // The surface is only as good as the samples behind it, so the
            // θ-chain waits until every label has had a chance to record some.
            self.warmup_iterations += 1;
            if self.warmup_iterations >= self.config.surface_samples.max(1) {
                self.stage = Stage::Joint;
                self.learning_iterations = Some(self.wl.iteration);
            }
        } else if self.wl.iteration >= self.config.max_wl_iterations {
            return Err(Error::InvalidArgument(format!(
                "step size still {} after {} Wang-Landau iterations",
                self.wl.schedule.gamma, self.wl.iteration
            )));
        }
        Ok(())
    }

    fn joint_step(&mut self) -> Result<()> {
        let gamma = self.wl.schedule.gamma;
        self.wl_iteration()?;
        if let Some(latent) = &self.latent {
            self.model = self.model.with_observed(ising_stat(&latent.x))?;
        }
        let surface = ZEstimate::new(&self.store, &self.particles, &self.wl.weights, self.kernel);
        self.sampler
            .step(&self.model, &surface, gamma, &mut self.streams.theta)?;
        if let Some(latent) = &mut self.latent {
            latent.theta = self.sampler.chain.current[0];
            latent.sigma2 = sigma2_draw(&latent.x, &latent.y, &mut self.streams.latent)?;
            pixel_sweep(latent, &mut self.streams.latent);
            self.sigma_trace.push(latent.sigma2.sqrt());
        }
        self.joint_steps += 1;
        if self.joint_steps >= self.config.theta_steps {
            self.stage = Stage::Done;
        }
        Ok(())
    }

    pub fn run(&mut self, max_iterations: Option<u64>) -> Result<Stage> {
        let every = self.config.checkpoint_every;
        let mut done = 0u64;
        while self.stage != Stage::Done {
            if max_iterations.is_some_and(|m| done >= m) {
                break;
            }
            self.step()?;
            done += 1;
            if every > 0 && self.wl.iteration % every == 0 {
                self.save_checkpoint(&self.config.out.join("checkpoint.bin"))?;
            }
        }
        Ok(self.stage)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let bytes = checkpoint::encode(self.config.model.code(), self)?;
        checkpoint::write_atomic(path, &bytes)
    }

    /// Run the Wang–Landau chain alone through its learning stage, including
    /// the `surface_samples` recorded warm-up iterations, and evaluate the
    /// surface on a grid.
    pub fn surface_grid(&mut self, axis: usize, lo: f64, hi: f64, steps: usize) -> Result<Vec<(f64, f64)>> {
        let q = self.particles.dim();
        if axis >= q || steps < 2 || !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "invalid grid: axis {axis} of {q}, {lo}:{hi}:{steps}"
            )));
        }
        self.learn_surface()?;
        let base = self.model.bounds().center();
        let surface = self.surface();
        (0..steps)
            .map(|k| {
                let mut coords = base.coords().to_vec();
                coords[axis] = lo + (hi - lo) * k as f64 / (steps - 1) as f64;
                let t = coords[axis];
                Ok((t, surface.log_z(&ParameterPoint::new(coords)?)?))
            })
            .collect()
    }

    /// Finish the learning stage without starting the θ-chain.
    pub fn learn_surface(&mut self) -> Result<()> {
        while self.stage == Stage::Learning {
            self.step()?;
        }
        Ok(())
    }

    pub fn summary(&self) -> Result<RunSummary> {
        let chain = &self.sampler.chain;
        let burn_in = self.config.burn_in.min(chain.len().saturating_sub(1));
        let theta = summarize(chain, burn_in, self.config.acf_max_lag)?;
        let sigma = if self.sigma_trace.is_empty() {
            None
        } else {
            Some(summarize_samples(&self.sigma_trace[burn_in..], 1, self.config.acf_max_lag)?)
        };
        let half = chain.len() / 2;
        Ok(RunSummary {
            model: self.config.model.name().into(),
            seed: self.config.seed,
            data_seed: self.config.data_seed,
            d: self.particles.len(),
            bandwidth: self.kernel.bandwidth(),
            observed_stats: self.observed_stats(),
            learning_iterations: self.learning_iterations,
            total_wl_iterations: self.wl.iteration,
            halvings: self.wl.halvings.clone(),
            stored_samples: (0..self.store.num_labels()).map(|i| self.store.stored(i)).sum(),
            theta_steps: chain.len() as u64,
            burn_in,
            acceptance_final_half: chain.acceptance_rate_from(half),
            theta,
            sigma,
            final_weights: self.wl.weights.values().to_vec(),
        })
    }

    fn observed_stats(&self) -> Vec<f64> {
        match (&self.latent, &self.truth) {
            (Some(_), Some(truth)) => ising_stat(truth).values().to_vec(),
            _ => self.model.observed().values().to_vec(),
        }
    }

    /// Write trace, surface, summary, histogram and checkpoint files.
    pub fn write_outputs(&self) -> Result<RunSummary> {
        let out = &self.config.out;
        std::fs::create_dir_all(out)?;
        let summary = self.summary()?;
        self.write_trace(&out.join("trace.csv"))?;
        self.write_logz(&out.join("logz.csv"), &summary)?;
        let chain = &self.sampler.chain;
        let mut hists = Vec::new();
        for j in 0..chain.dim() {
            hists.push(histogram(&chain.coordinate(j)[summary.burn_in..], self.config.hist_bins)?);
        }
        if !self.sigma_trace.is_empty() {
            hists.push(histogram(&self.sigma_trace[summary.burn_in..], self.config.hist_bins)?);
        }
        write_histogram_csv(&out.join("hist.csv"), &hists)?;
        let mut json = serde_json::to_string_pretty(&summary)?;
        json.push('\n');
        std::fs::write(out.join("summary.json"), json)?;
        if self.config.write_pgm {
            if let Some(truth) = &self.truth {
                truth.write_pgm(&out.join("data.pgm"))?;
            }
        }
        self.save_checkpoint(&out.join("checkpoint.bin"))?;
        Ok(summary)
    }

    fn write_trace(&self, path: &Path) -> Result<()> {
        let chain = &self.sampler.chain;
        let q = chain.dim();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = String::from("iteration");
        for j in 0..q {
            header.push_str(&format!(",theta_{j}"));
        }
        header.push_str(",accepted,log_acceptance,gamma");
        if !self.sigma_trace.is_empty() {
            header.push_str(",sigma");
        }
        writeln!(f, "{header}")?;
        for k in 0..chain.len() {
            write!(f, "{}", k + 1)?;
            for v in chain.state(k) {
                write!(f, ",{v:.16e}")?;
            }
            write!(
                f,
                ",{},{:.16e},{:.16e}",
                chain.accepted[k] as u8, chain.log_acceptance[k], chain.gamma[k]
            )?;
            if let Some(s) = self.sigma_trace.get(k) {
                write!(f, ",{s:.16e}")?;
            }
            writeln!(f)?;
        }
        f.flush()?;
        Ok(())
    }

    fn write_logz(&self, path: &Path, summary: &RunSummary) -> Result<()> {
        let q = self.particles.dim();
        let steps = self.config.logz_grid;
        let surface = self.surface();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = String::from("axis");
        for j in 0..q {
            header.push_str(&format!(",theta_{j}"));
        }
        writeln!(f, "{header},logz")?;
        for axis in 0..q {
            // one-parameter models span the box; otherwise the particle range
            // along the axis, through the posterior mean
            let (lo, hi) = if q == 1 {
                (self.model.bounds().lower()[0], self.model.bounds().upper()[0])
            } else {
                let vals: Vec<f64> = (0..self.particles.len()).map(|i| self.particles.coords(i)[axis]).collect();
                (
                    vals.iter().cloned().fold(f64::INFINITY, f64::min),
                    vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            for k in 0..steps {
                let mut coords = summary.theta.mean.clone();
                coords[axis] = lo + (hi - lo) * k as f64 / (steps - 1) as f64;
                let theta = ParameterPoint::new(coords)?;
                if !self.model.bounds().contains(&theta) {
                    continue;
                }
                let lz = surface.log_z(&theta)?;
                write!(f, "{axis}")?;
                for v in theta.coords() {
                    write!(f, ",{v:.16e}")?;
                }
                writeln!(f, ",{lz:.16e}")?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub seed: u64,
    pub data_seed: u64,
    pub d: usize,
    pub bandwidth: f64,
    /// Sufficient statistics of the data (the simulated truth for the
    /// segmentation model).
    pub observed_stats: Vec<f64>,
    pub learning_iterations: Option<u64>,
    pub total_wl_iterations: u64,
    pub halvings: Vec<HalvingEvent>,
    pub stored_samples: u64,
    pub theta_steps: u64,
    pub burn_in: usize,
    pub acceptance_final_half: f64,
    pub theta: ChainSummary,
    pub sigma: Option<ChainSummary>,
    pub final_weights: Vec<f64>,
}

/// Prepare, run and write a configured experiment.
pub fn run_experiment(config: RunConfig) -> Result<RunSummary> {
    let mut exp = AnyExperiment::prepare(config)?;
    exp.run(None)?;
    exp.write_outputs()
}

/// Prepare and run an experiment without touching the file system.
pub fn run_experiment_in_memory(config: RunConfig) -> Result<RunSummary> {
    let mut exp = AnyExperiment::prepare(config)?;
    exp.run(None)?;
    exp.summary()
}
