//! Two-plane Gerchberg–Saxton hologram synthesis.
//!
//! Each iteration propagates the beam through the current phase mask, then
//! builds two complementary virtual planes from the result: the signal plane
//! takes the target inside the constraint region and keeps the propagated
//! field outside it, the complementary plane does the opposite. Both are
//! propagated back to the mask plane and their phases give the next mask.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::{wrap_phase, ComplexField, Propagator};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// How the back-propagated virtual planes become the next mask phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseCombine {
    /// Phase of the back-propagated signal plane alone.
    #[default]
    SignalPlane,
    /// Phase of the coherent sum of both back-propagated planes.
    Coherent,
    /// Sum of the two back-propagated phases.
    PhaseSum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GsTarget {
    pub amplitude: Grid,
    pub phase: Grid,
    /// 1 where the target is enforced, 0 elsewhere.
    pub constraint: Grid,
    pub iterations: usize,
}

impl GsTarget {
    pub fn validate(&self) -> Result<()> {
        self.amplitude.check_shape(&self.phase)?;
        self.amplitude.check_shape(&self.constraint)?;
        if self.constraint.as_slice().iter().any(|&s| s != 0.0 && s != 1.0) {
            return Err(Error::Domain("constraint entries must be 0 or 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GsResult {
    /// Mask phase in `(−π, π]`.
    pub phase: Grid,
    /// Fidelity of the mask before each iteration, plus the final mask.
    pub fidelity: Vec<f64>,
    /// The beam propagated through the final mask.
    pub output: ComplexField,
}

impl GsResult {
    pub fn final_fidelity(&self) -> f64 {
        *self.fidelity.last().expect("at least one entry")
    }
}

/// Normalised cross-correlation of `amp` with `target` restricted to the
/// constrained pixels.
pub fn fidelity(amp: &Grid, target: &Grid, constraint: &Grid) -> f64 {
    let (mut at, mut aa, mut tt) = (0.0, 0.0, 0.0);
    for ((&a, &t), &s) in amp.as_slice().iter().zip(target.as_slice()).zip(constraint.as_slice()) {
        if s != 0.0 {
            at += a * t;
            aa += a * a;
            tt += t * t;
        }
    }
    if aa == 0.0 || tt == 0.0 {
        0.0
    } else {
        at / (aa * tt).sqrt()
    }
}

/// Synthesises a phase mask that shapes `beam` (whose modulus is the
/// illumination amplitude) into `target` after `distance` metres.
pub fn gerchberg_saxton(
    beam: &ComplexField,
    target: &GsTarget,
    distance: f64,
    combine: PhaseCombine,
) -> Result<GsResult> {
    target.validate()?;
    if beam.shape() != target.amplitude.shape() {
        return Err(Error::ShapeMismatch {
            left: beam.shape(),
            right: target.amplitude.shape(),
        });
    }
    let fwd = Propagator::for_field(beam, distance);
    let back = Propagator::for_field(beam, -distance);
    let input = beam.amplitude();
    let (rows, cols) = beam.shape();
    let mut phase = Grid::zeros(rows, cols);
    let mut trace = Vec::with_capacity(target.iterations + 1);

    let s = target.constraint.as_slice();
    let at = target.amplitude.as_slice();
    let pt = target.phase.as_slice();

    for _ in 0..target.iterations {
        let out = fwd.apply(&ComplexField::from_polar(&input, &phase, beam.pitch, beam.wavelength)?)?;
        trace.push(fidelity(&out.amplitude(), &target.amplitude, &target.constraint));

        let plane = |inside: bool| -> Vec<Complex64> {
            out.values()
                .iter()
                .enumerate()
                .map(|(k, u)| {
                    if (s[k] != 0.0) == inside {
                        Complex64::from_polar(at[k], pt[k])
                    } else {
                        *u
                    }
                })
                .collect()
        };
        let alpha = back.apply(&out.with_values(plane(true)))?;
        let next: Vec<f64> = match combine {
            PhaseCombine::SignalPlane => alpha.values().iter().map(|v| v.arg()).collect(),
            PhaseCombine::Coherent | PhaseCombine::PhaseSum => {
                let beta = back.apply(&out.with_values(plane(false)))?;
                alpha
                    .values()
                    .iter()
                    .zip(beta.values())
                    .map(|(a, b)| match combine {
                        PhaseCombine::Coherent => (a + b).arg(),
                        _ => a.arg() + b.arg(),
                    })
                    .collect()
            }
        };
        phase = Grid::from_vec(rows, cols, next.into_iter().map(wrap_phase).collect())?;
    }
    let output = fwd.apply(&ComplexField::from_polar(&input, &phase, beam.pitch, beam.wavelength)?)?;
    trace.push(fidelity(&output.amplitude(), &target.amplitude, &target.constraint));
    Ok(GsResult {
        phase,
        fidelity: trace,
        output,
    })
}
