//! Hologram encoding of amplitude arrays onto a Gaussian beam.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::{ComplexField, Propagator};
use super::gs::{gerchberg_saxton, GsResult, GsTarget, PhaseCombine};
use super::noise::apply_phase_noise;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::profiles::{self, AmplitudeProfile};

/// Geometry of the mask-to-beam-splitter path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    /// Computational grid side in pixels.
    pub grid: usize,
    /// Computational pixels per logical pixel side.
    pub upsample: usize,
    pub pitch: f64,
    pub wavelength: f64,
    /// Mask-to-beam-splitter distance in metres.
    pub distance: f64,
    /// Gaussian `1/e` amplitude radius of the illumination, metres.
    pub waist: f64,
    pub gs_iterations: usize,
    pub combine: PhaseCombine,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        OpticsConfig {
            grid: 128,
            upsample: 2,
            pitch: 8e-6,
            wavelength: 808e-9,
            distance: 0.02,
            waist: 3e-4,
            gs_iterations: 25,
            combine: PhaseCombine::SignalPlane,
        }
    }
}

/// A beam-splitter-plane field together with its logical-resolution profile.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// Unit-energy field on the computational grid.
    pub field: ComplexField,
    /// Square root of the energy in each logical cell, unit norm.
    pub profile: AmplitudeProfile,
}

/// Encodes `R × R` arrays into the centre of the computational grid.
pub struct Encoder {
    cfg: OpticsConfig,
    resolution: usize,
    offset: usize,
    beam: ComplexField,
    constraint: Grid,
    to_splitter: Propagator,
}

impl Encoder {
    pub fn new(cfg: OpticsConfig, resolution: usize) -> Result<Self> {
        let window = resolution * cfg.upsample;
        if resolution == 0 || cfg.upsample == 0 || window > cfg.grid {
            return Err(Error::InvalidConfig(format!(
                "{resolution}×{resolution} array at {}× upsampling does not fit a {} grid",
                cfg.upsample, cfg.grid
            )));
        }
        if cfg.waist.is_nan() || cfg.waist <= 0.0 {
            return Err(Error::InvalidConfig("beam waist must be positive".into()));
        }
        let offset = (cfg.grid - window) / 2;
        let beam = ComplexField::gaussian(cfg.grid, cfg.pitch, cfg.wavelength, cfg.waist)?;
        let constraint = Grid::from_fn(cfg.grid, cfg.grid, |r, c| {
            ((offset..offset + window).contains(&r) && (offset..offset + window).contains(&c)) as u8 as f64
        });
        let to_splitter = Propagator::for_field(&beam, cfg.distance);
        Ok(Encoder {
            cfg,
            resolution,
            offset,
            beam,
            constraint,
            to_splitter,
        })
    }

    pub fn config(&self) -> &OpticsConfig {
        &self.cfg
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn beam(&self) -> &ComplexField {
        &self.beam
    }

    pub fn constraint(&self) -> &Grid {
        &self.constraint
    }

    fn cell(&self, r: usize, c: usize) -> Option<(usize, usize)> {
        let window = self.resolution * self.cfg.upsample;
        let (r, c) = (r.checked_sub(self.offset)?, c.checked_sub(self.offset)?);
        (r < window && c < window).then(|| (r / self.cfg.upsample, c / self.cfg.upsample))
    }

    /// Target for a signed array: magnitude as amplitude, sign as a π phase,
    /// scaled to the beam energy.
    pub fn target(&self, values: &Grid) -> Result<GsTarget> {
        if values.shape() != (self.resolution, self.resolution) {
            return Err(Error::ShapeMismatch {
                left: values.shape(),
                right: (self.resolution, self.resolution),
            });
        }
        let n = self.cfg.grid;
        let pick = |r, c, f: fn(f64) -> f64| self.cell(r, c).map_or(0.0, |(i, j)| f(values.get(i, j)));
        let amp = Grid::from_fn(n, n, |r, c| pick(r, c, f64::abs));
        let phase = Grid::from_fn(n, n, |r, c| pick(r, c, |v| if v < 0.0 { PI } else { 0.0 }));
        let energy = amp.sum_sq();
        if energy == 0.0 {
            return Err(Error::ZeroProfile);
        }
        Ok(GsTarget {
            amplitude: amp.scale((self.beam.energy() / energy).sqrt()),
            phase,
            constraint: self.constraint.clone(),
            iterations: self.cfg.gs_iterations,
        })
    }

    pub fn hologram(&self, values: &Grid) -> Result<GsResult> {
        gerchberg_saxton(&self.beam, &self.target(values)?, self.cfg.distance, self.cfg.combine)
    }

    /// Illuminates the mask for `values`, perturbs its phase by up to
    /// `noise` radians per pixel and propagates to the beam splitter.
    pub fn encode<R: Rng + ?Sized>(&self, values: &Grid, noise: f64, rng: &mut R) -> Result<Encoded> {
        let mask = self.hologram(values)?;
        self.encode_with_mask(&mask.phase, noise, rng)
    }

    pub fn encode_with_mask<R: Rng + ?Sized>(&self, phase: &Grid, noise: f64, rng: &mut R) -> Result<Encoded> {
        let at_mask = ComplexField::from_polar(&self.beam.amplitude(), phase, self.cfg.pitch, self.cfg.wavelength)?;
        let noisy = apply_phase_noise(&at_mask, noise, rng);
        let field = self.to_splitter.apply(&noisy)?.normalized()?;
        let profile = self.profile(&field)?;
        Ok(Encoded { field, profile })
    }

    /// Per-cell energy of `field` inside the window, as a unit-norm profile.
    pub fn profile(&self, field: &ComplexField) -> Result<AmplitudeProfile> {
        let r = self.resolution;
        let mut energy = Grid::zeros(r, r);
        for (k, v) in field.values().iter().enumerate() {
            if let Some((i, j)) = self.cell(k / field.cols(), k % field.cols()) {
                energy.set(i, j, energy.get(i, j) + v.norm_sqr());
            }
        }
        profiles::normalize(&energy.map(f64::sqrt))
    }

    /// Field summed over each logical cell and divided by the cell's pixel
    /// count root, so a field equal to an upsampled unit array maps back to
    /// that array.
    pub fn cell_sums(&self, field: &ComplexField) -> Vec<Complex64> {
        let r = self.resolution;
        let mut out = vec![Complex64::new(0.0, 0.0); r * r];
        for (k, v) in field.values().iter().enumerate() {
            if let Some((i, j)) = self.cell(k / field.cols(), k % field.cols()) {
                out[i * r + j] += v;
            }
        }
        let k = 1.0 / self.cfg.upsample as f64;
        out.iter_mut().for_each(|v| *v *= k);
        out
    }
}

/// One-shot encoding of an image with the given optics.
pub fn encode_physical<R: Rng + ?Sized>(img: &Grid, cfg: OpticsConfig, noise: f64, rng: &mut R) -> Result<Encoded> {
    Encoder::new(cfg, img.rows())?.encode(img, noise, rng)
}
