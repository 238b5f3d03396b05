//! Training against physically propagated fields.
//!
//! Visibilities are always the overlaps of the propagated input and probe
//! fields. The weight gradient comes either from the full fields, treating
//! the probe as its upsampled weight array, or from the discrete arrays alone.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encode::{Encoded, Encoder, OpticsConfig};
use super::field::ComplexField;
use super::noise::apply_phase_noise;
use crate::error::Result;
use crate::grid::Grid;
use crate::ingest::BinaryDataset;
use crate::model::{self, NetworkParams};
use crate::profiles::{self, AmplitudeProfile};
use crate::rng::{self, Purpose};
use crate::training::{self, Detector, EpochRecord, Observation, Pass, Split, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientSource {
    /// Gradients from the propagated fields themselves.
    FullProfile,
    /// Gradients from the discrete image and weight arrays.
    DiscreteArrays,
}

/// How arrays become fields.
pub enum FieldModel {
    /// The normalised array itself, pixel for pixel.
    Ideal,
    Hologram(Box<Encoder>),
}

const IDEAL_PITCH: f64 = 1.0;
const IDEAL_WAVELENGTH: f64 = 1.0;

impl FieldModel {
    pub fn encode<R: rand::Rng + ?Sized>(&self, values: &Grid, noise: f64, rng: &mut R) -> Result<Encoded> {
        match self {
            FieldModel::Hologram(enc) => enc.encode(values, noise, rng),
            FieldModel::Ideal => {
                let profile = profiles::normalize(values)?;
                let clean = ComplexField::from_real(profile.amp(), IDEAL_PITCH, IDEAL_WAVELENGTH)?;
                Ok(Encoded {
                    field: apply_phase_noise(&clean, noise, rng),
                    profile,
                })
            }
        }
    }

    pub fn cell_sums(&self, field: &ComplexField) -> Vec<Complex64> {
        match self {
            FieldModel::Hologram(enc) => enc.cell_sums(field),
            FieldModel::Ideal => field.values().to_vec(),
        }
    }
}

struct EncodedSplit {
    fields: Vec<ComplexField>,
    arrays: Vec<AmplitudeProfile>,
    cells: Vec<Vec<Complex64>>,
}

/// Encoded datasets shared between detectors.
pub struct EncodedData {
    model: FieldModel,
    train: EncodedSplit,
    test: EncodedSplit,
}

fn split_code(split: Split) -> u64 {
    match split {
        Split::Train => 0,
        Split::Test => 1,
    }
}

impl EncodedData {
    /// Encodes every image once, each with its own noise stream.
    pub fn new(model: FieldModel, train: &BinaryDataset, test: &BinaryDataset, noise: f64, seed: u64) -> Result<Self> {
        let encode = |ds: &BinaryDataset, split: Split| -> Result<EncodedSplit> {
            let enc: Vec<Encoded> = ds
                .samples
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut r = rng::stream(seed, Purpose::PhaseNoise, [0, split_code(split), i as u64, 0]);
                    model.encode(&s.image, noise, &mut r)
                })
                .collect::<Result<_>>()?;
            Ok(EncodedSplit {
                cells: enc.iter().map(|e| model.cell_sums(&e.field)).collect(),
                arrays: training::encode_all(ds)?,
                fields: enc.into_iter().map(|e| e.field).collect(),
            })
        };
        let train = encode(train, Split::Train)?;
        let test = encode(test, Split::Test)?;
        Ok(EncodedData { model, train, test })
    }

    fn split(&self, split: Split) -> &EncodedSplit {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

struct Probe {
    field: ComplexField,
    /// Unit phasor removing the probe's carrier phase.
    carrier: Complex64,
}

/// Detector whose probes are re-encoded from the current weights each pass.
pub struct PhysicalDetector {
    data: Arc<EncodedData>,
    source: GradientSource,
    noise: f64,
    seed: u64,
    probes: Vec<Probe>,
}

impl PhysicalDetector {
    pub fn new(data: Arc<EncodedData>, source: GradientSource, noise: f64, seed: u64) -> Self {
        PhysicalDetector {
            data,
            source,
            noise,
            seed,
            probes: Vec::new(),
        }
    }
}

impl Detector for PhysicalDetector {
    fn prepare(&mut self, params: &NetworkParams, epoch: usize, pass: Pass) -> Result<()> {
        let model = &self.data.model;
        self.probes = params
            .lambdas
            .par_iter()
            .enumerate()
            .map(|(i, lambda)| {
                let mut r = rng::stream(
                    self.seed,
                    Purpose::PhaseNoise,
                    [1, epoch as u64, pass.code(Split::Train), i as u64],
                );
                let field = model.encode(lambda, self.noise, &mut r)?.field;
                let unit = profiles::normalize(lambda)?;
                let proj: Complex64 = model
                    .cell_sums(&field)
                    .iter()
                    .zip(unit.amp().as_slice())
                    .map(|(p, l)| p * l)
                    .sum();
                let carrier = if proj.norm() > 0.0 {
                    (proj / proj.norm()).conj()
                } else {
                    Complex64::new(1.0, 0.0)
                };
                Ok(Probe { field, carrier })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn observe(
        &self,
        split: Split,
        index: usize,
        params: &NetworkParams,
        _epoch: usize,
        _pass: Pass,
        with_gradient: bool,
    ) -> Result<Observation> {
        let data = self.data.split(split);
        let x = &data.fields[index];
        let inner: Vec<Complex64> = self.probes.iter().map(|p| x.inner(&p.field)).collect::<Result<_>>()?;
        let z: Vec<f64> = inner.iter().map(|c| c.norm_sqr()).collect();
        if !with_gradient {
            return Ok(Observation { z, cross: Vec::new() });
        }
        let arr = &data.arrays[index];
        let res = arr.resolution();
        let cross = match self.source {
            GradientSource::FullProfile => inner
                .iter()
                .zip(&self.probes)
                .map(|(c, p)| {
                    let k = c.conj() * p.carrier;
                    Grid::from_vec(res.0, res.1, data.cells[index].iter().map(|v| (k * v).re).collect())
                })
                .collect::<Result<_>>()?,
            GradientSource::DiscreteArrays => model::neuron_amplitudes(arr, params)?
                .iter()
                .zip(&z)
                .map(|(s, zi)| arr.amp().scale(zi.sqrt().copysign(*s)))
                .collect(),
        };
        Ok(Observation { z, cross })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub full_profile: Vec<EpochRecord>,
    pub discrete_arrays: Vec<EpochRecord>,
}

/// Trains the same initial network twice on physically encoded data, once
/// per gradient source. `optics = None` skips the hologram and uses the
/// normalised arrays as fields.
pub fn compare_training_modes(
    train: &BinaryDataset,
    test: &BinaryDataset,
    neurons: usize,
    cfg: &TrainConfig,
    optics: Option<OpticsConfig>,
    noise: f64,
    seed: u64,
) -> Result<ModeComparison> {
    let model = match optics {
        Some(o) => FieldModel::Hologram(Box::new(Encoder::new(o, train.resolution)?)),
        None => FieldModel::Ideal,
    };
    let data = Arc::new(EncodedData::new(model, train, test, noise, seed)?);
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let init = training::init_params(train.resolution, neurons, &cfg)?;
    let tl: Vec<u8> = train.labels().collect();
    let el: Vec<u8> = test.labels().collect();
    let run = |source| {
        let mut det = PhysicalDetector::new(Arc::clone(&data), source, noise, seed);
        training::train_with(&mut det, &tl, &el, init.clone(), &cfg).map(|(_, h)| h)
    };
    Ok(ModeComparison {
        full_profile: run(GradientSource::FullProfile)?,
        discrete_arrays: run(GradientSource::DiscreteArrays)?,
    })
}
