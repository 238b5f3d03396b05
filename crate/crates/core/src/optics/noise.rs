//! Pixelwise phase noise.

use num_complex::Complex64;
use rand::Rng;

use super::field::ComplexField;

/// Multiplies every pixel by `e^{iφ}` with `φ ~ U(0, delta_max)`.
pub fn apply_phase_noise<R: Rng + ?Sized>(f: &ComplexField, delta_max: f64, rng: &mut R) -> ComplexField {
    if delta_max <= 0.0 {
        return f.clone();
    }
    f.with_values(
        f.values()
            .iter()
            .map(|v| v * Complex64::from_polar(1.0, rng.random_range(0.0..delta_max)))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::rng::{stream, Purpose};
    use std::f64::consts::PI;

    fn flat(n: usize) -> ComplexField {
        ComplexField::from_real(&Grid::filled(n, n, 1.0), 1e-5, 808e-9).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let f = flat(8);
        let mut r = stream(1, Purpose::PhaseNoise, [0; 4]);
        assert_eq!(apply_phase_noise(&f, 0.0, &mut r), f);
    }

    #[test]
    fn moduli_are_preserved() {
        let f = ComplexField::gaussian(16, 1e-5, 808e-9, 4e-5).unwrap();
        let mut r = stream(2, Purpose::PhaseNoise, [0; 4]);
        let g = apply_phase_noise(&f, PI, &mut r);
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn coherent_sum_shrinks_by_two_over_pi() {
        let f = flat(16);
        let trials = 2000;
        let mut mean = Complex64::new(0.0, 0.0);
        for t in 0..trials {
            let mut r = stream(3, Purpose::PhaseNoise, [t, 0, 0, 0]);
            let g = apply_phase_noise(&f, PI, &mut r);
            mean += g.values().iter().sum::<Complex64>();
        }
        let ratio = mean.norm() / trials as f64 / f.values().len() as f64;
        assert!((ratio - 2.0 / PI).abs() / (2.0 / PI) < 0.02, "ratio {ratio}");
    }
}
