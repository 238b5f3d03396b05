//! Forward pass of the quantum optical neuron and shallow network.
//!
//! For an input profile `x`, neuron `i` contributes the visibility
//! `zᵢ = ⟨x, λᵢ/‖λᵢ‖⟩²`; the network visibility is the mixture
//! `z = Σ wᵢ zᵢ` with simplex weights `w`, and the class probability is
//! `σ_βγ(z + b)`. A single neuron is the `M = 1`, `w = (1)` case.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::profiles::{self, AmplitudeProfile};

/// Slope and offset of `σ_βγ(t) = 1 / (1 + exp(-β t + γ))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationShape {
    pub beta: f64,
    pub gamma: f64,
}

impl ActivationShape {
    pub const PLAIN: ActivationShape = ActivationShape { beta: 1.0, gamma: 0.0 };

    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "activation needs finite beta > 0, got beta={beta} gamma={gamma}"
            )));
        }
        Ok(ActivationShape { beta, gamma })
    }
}

pub fn sigmoid_bg(t: f64, shape: ActivationShape) -> f64 {
    1.0 / (1.0 + (-shape.beta * t + shape.gamma).exp())
}

/// Trainable parameters: un-normalised weight grids, mixture weights, bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub lambdas: Vec<Grid>,
    pub w: Vec<f64>,
    pub b: f64,
}

impl NetworkParams {
    pub fn single(lambda: Grid, b: f64) -> Self {
        NetworkParams {
            lambdas: vec![lambda],
            w: vec![1.0],
            b,
        }
    }

    pub fn neurons(&self) -> usize {
        self.lambdas.len()
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.lambdas.first().map(Grid::shape).unwrap_or((0, 0))
    }

    /// Checks the structural invariants (M ≥ 1, simplex `w`, equal shapes).
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.lambdas.len() != self.w.len() {
            return Err(Error::InvalidConfig(format!(
                "{} weight grids but {} mixture weights",
                self.lambdas.len(),
                self.w.len()
            )));
        }
        let shape = self.lambdas[0].shape();
        for l in &self.lambdas[1..] {
            if l.shape() != shape {
                return Err(Error::ShapeMismatch {
                    left: shape,
                    right: l.shape(),
                });
            }
        }
        let total: f64 = self.w.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.w.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mixture weights must lie on the simplex, got {:?}",
                self.w
            )));
        }
        Ok(())
    }

    /// Unit-norm probe profiles `λᵢ/‖λᵢ‖`.
    pub fn probes(&self) -> Result<Vec<AmplitudeProfile>> {
        self.lambdas.iter().map(profiles::normalize).collect()
    }
}

/// Signed inner products `⟨x, λᵢ/‖λᵢ‖⟩`, one per neuron.
pub fn neuron_amplitudes(x: &AmplitudeProfile, p: &NetworkParams) -> Result<Vec<f64>> {
    p.lambdas
        .iter()
        .map(|l| {
            let n = l.norm();
            if n == 0.0 {
                return Err(Error::ZeroProfile);
            }
            Ok(x.amp().dot(l)? / n)
        })
        .collect()
}

/// `z = Σᵢ wᵢ ⟨x, λᵢ/‖λᵢ‖⟩²`.
pub fn network_overlap(x: &AmplitudeProfile, p: &NetworkParams) -> Result<f64> {
    Ok(mix(
        &p.w,
        &neuron_amplitudes(x, p)?.iter().map(|s| s * s).collect::<Vec<_>>(),
    ))
}

/// Mixture-weighted sum of per-neuron visibilities.
pub fn mix(w: &[f64], z: &[f64]) -> f64 {
    w.iter().zip(z).map(|(a, b)| a * b).sum()
}

pub fn forward(x: &AmplitudeProfile, p: &NetworkParams, shape: ActivationShape) -> Result<f64> {
    Ok(sigmoid_bg(network_overlap(x, p)? + p.b, shape))
}

/// Ties go to class 1.
pub fn predict(prob: f64) -> u8 {
    u8::from(prob >= 0.5)
}

/// On-disk checkpoint: parameters plus the activation they were trained with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub resolution: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// Row-major weight grids.
    pub lambdas: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub b: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Checkpoint {
    pub fn new(p: &NetworkParams, shape: ActivationShape) -> Self {
        Checkpoint {
            resolution: p.resolution().0,
            m: p.neurons(),
            lambdas: p.lambdas.iter().map(|g| g.as_slice().to_vec()).collect(),
            w: p.w.clone(),
            b: p.b,
            beta: shape.beta,
            gamma: shape.gamma,
        }
    }

    pub fn into_parts(self) -> Result<(NetworkParams, ActivationShape)> {
        let bad = |msg: String| Error::CheckpointParse(msg);
        if self.m != self.lambdas.len() {
            return Err(bad(format!("M = {} but {} grids", self.m, self.lambdas.len())));
        }
        let r = self.resolution;
        let lambdas = self
            .lambdas
            .into_iter()
            .map(|v| Grid::from_vec(r, r, v).map_err(|_| bad(format!("grid is not {r}x{r}"))))
            .collect::<Result<Vec<_>>>()?;
        let params = NetworkParams {
            lambdas,
            w: self.w,
            b: self.b,
        };
        params.validate().map_err(|e| bad(e.to_string()))?;
        let shape = ActivationShape::new(self.beta, self.gamma).map_err(|e| bad(e.to_string()))?;
        Ok((params, shape))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::CheckpointParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}
