//! Experiment configuration (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use topoid::io::MatrixDoc;
use topoid::noise::NoiseDistribution;
use topoid::{graph, Network};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSource,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub threshold: Option<ThresholdConfig>,
    /// Noise levels for the error-vs-noise table written by `evaluate`.
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Exactly one of a builtin generator or a network JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    Builtin(Builtin),
    Path(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Builtin {
    /// Rotation oscillators on a ring; `full_input` gives every node its own input.
    OscillatorRing {
        nodes: usize,
        #[serde(default)]
        full_input: bool,
    },
    /// Integrator coupled with a double-integrator chain; `q` is row-major 2x2.
    IntegratorChain { q: [f64; 4] },
    /// Scalar integrators with explicit couplings.
    IntegratorNetwork { q: MatrixDoc, r: MatrixDoc, s: MatrixDoc },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkovSource {
    /// Computed from the network model.
    #[default]
    Exact,
    /// Estimated from a simulated or supplied trajectory.
    Estimated,
    /// Read from a Markov-sequence JSON file (external outputs).
    File(PathBuf),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub seed: Option<u64>,
    /// Markov order; defaults to `2n - 1`.
    pub r: Option<usize>,
    /// Measured trajectory CSV; replaces simulation when present.
    pub trajectory: Option<PathBuf>,
    /// Explicit input length; defaults to the minimal exciting length.
    pub length: Option<usize>,
    #[serde(default)]
    pub markov_source: MarkovSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Bound on every `‖Δ_l‖_∞` and `‖Δ_l^T‖_∞`.
    pub bound: f64,
    pub seed: Option<u64>,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    #[default]
    Vectorized,
    Blockwise,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub mode: SolverMode,
    /// Overrides `input.r` for reconstruction.
    pub r: Option<usize>,
    pub max_unknowns: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub gamma: f64,
    /// A priori bound on `‖vec(Q)‖_∞` used in the error bound.
    pub q_bound: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        // relative paths are taken relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let NetworkSource::Path(p) = &mut cfg.network {
            resolve(p);
        }
        resolve(&mut cfg.output_dir);
        if let Some(p) = &mut cfg.input.trajectory {
            resolve(p);
        }
        if let MarkovSource::File(p) = &mut cfg.input.markov_source {
            resolve(p);
        }
        Ok(cfg)
    }

    /// Replaces every configured seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.input.seed = Some(seed);
        if let Some(noise) = &mut self.noise {
            noise.seed = Some(seed);
        }
    }

    pub fn build_network(&self) -> Result<Network, CliError> {
        Ok(match &self.network {
            NetworkSource::Path(p) => topoid::io::load_network(p)?,
            NetworkSource::Builtin(Builtin::OscillatorRing { nodes, full_input: false }) => {
                graph::make_oscillator_ring(*nodes)?
            }
            NetworkSource::Builtin(Builtin::OscillatorRing { nodes, full_input: true }) => {
                graph::make_oscillator_ring_full_input(*nodes)?
            }
            NetworkSource::Builtin(Builtin::IntegratorChain { q }) => {
                graph::make_integrator_chain(nalgebra::DMatrix::from_row_slice(2, 2, q))?
            }
            NetworkSource::Builtin(Builtin::IntegratorNetwork { q, r, s }) => {
                graph::make_integrator_network(q.to_matrix()?, r.to_matrix()?, s.to_matrix()?)?
            }
        })
    }

    pub fn input_seed(&self) -> Result<u64, CliError> {
        self.input
            .seed
            .ok_or_else(|| CliError::Usage("input.seed is required when the input is generated".into()))
    }
}

impl NoiseConfig {
    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Usage("noise.seed is required when noise is configured".into()))
    }
}
