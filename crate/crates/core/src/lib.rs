//! Simulation and training of Hong-Ou-Mandel quantum optical neurons (QON)
//! and two-neuron quantum optical shallow networks (QOSN).
//!
//! An image is amplitude-encoded on one photon, the trainable weights on a
//! second photon, and the HOM visibility between the two photons is the
//! squared overlap of their transverse profiles. A bias and a shaped sigmoid
//! turn the visibility into a class probability.
//!
//! The crate is organised bottom-up:
//!
//! * [`ingest`]: IDX parsing, binary subsets, padding and resampling.
//! * [`profiles`]: unit-norm amplitude profiles and the overlap primitive.
//! * [`model`]: forward pass of the QON/QOSN.
//! * [`training`]: full-batch gradient descent with analytic gradients.
//! * [`measurement`]: Poisson coincidence counts and the visibility estimator.
//! * [`camera`]: the pixel-resolved classical baseline.
//! * [`optics`]: angular-spectrum propagation and hologram synthesis.
//! * [`experiments`]: the sweep drivers used by the command line.
//! * [`cli`]: the `homon` command line front end.

pub mod camera;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod ingest;
pub mod measurement;
pub mod model;
pub mod optics;
pub mod plot;
pub mod profiles;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use grid::Grid;
pub use model::{ActivationShape, NetworkParams};
pub use profiles::AmplitudeProfile;
