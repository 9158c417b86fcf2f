//! Seeded perturbation of Markov parameters.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lti::MarkovSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Normal,
    /// Uniform on `[-1, 1]` before scaling.
    Uniform,
}

/// Perturbed sequence `M̂_l = M_l + Δ_l` together with the perturbations.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub perturbed: MarkovSequence,
    pub deltas: Vec<DMatrix<f64>>,
}

impl Perturbation {
    /// `‖Δ_l‖_∞` for every `l`.
    pub fn inf_norms(&self) -> Vec<f64> {
        self.deltas.iter().map(linalg::inf_norm).collect()
    }

    /// `‖Δ_l^T‖_∞` for every `l`.
    pub fn transposed_inf_norms(&self) -> Vec<f64> {
        self.deltas.iter().map(|d| linalg::inf_norm(&d.transpose())).collect()
    }

    /// `‖vec(col(Δ_from, ..., Δ_to))‖_∞`, the largest entry in that range.
    pub fn stacked_max_abs(&self, from: usize, to: usize) -> f64 {
        self.deltas[from..=to].iter().map(linalg::max_abs).fold(0.0, f64::max)
    }
}

/// Adds independent noise to every `M_l`, each `Δ_l` scaled so that
/// `max(‖Δ_l‖_∞, ‖Δ_l^T‖_∞)` equals `bound` exactly.
pub fn perturb_markov(
    seq: &MarkovSequence,
    bound: f64,
    distribution: NoiseDistribution,
    seed: u64,
) -> Result<Perturbation> {
    if !bound.is_finite() || bound < 0.0 {
        return Err(Error::InvalidParameter(format!("noise bound must be finite and nonnegative, got {bound}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols) = (seq.rows(), seq.cols());
    let mut deltas = Vec::with_capacity(seq.len());
    for _ in 0..seq.len() {
        let mut delta = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                delta[(i, j)] = match distribution {
                    NoiseDistribution::Normal => rng.sample::<f64, _>(StandardNormal),
                    NoiseDistribution::Uniform => rng.random_range(-1.0..=1.0),
                };
            }
        }
        let norm = linalg::inf_norm(&delta).max(linalg::inf_norm(&delta.transpose()));
        if norm > 0.0 {
            delta *= bound / norm;
        }
        deltas.push(delta);
    }
    let perturbed = MarkovSequence::new(seq.params().iter().zip(&deltas).map(|(m, d)| m + d).collect())?;
    Ok(Perturbation { perturbed, deltas })
}
