//! Scalar wave optics: propagation, hologram synthesis, phase noise and
//! training on propagated fields.

pub mod encode;
pub mod field;
pub mod gs;
pub mod modes;
pub mod noise;

pub use encode::{encode_physical, Encoded, Encoder, OpticsConfig};
pub use field::{overlap_physical, propagate, ComplexField, Propagator};
pub use gs::{gerchberg_saxton, GsResult, GsTarget, PhaseCombine};
pub use modes::{compare_training_modes, GradientSource, ModeComparison, PhysicalDetector};
pub use noise::apply_phase_noise;
