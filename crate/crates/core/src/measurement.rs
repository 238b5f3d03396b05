//! Photon-counting readout of the HOM visibility.
//!
//! A visibility estimate uses two acquisitions: `c_max` without interference
//! (photons made distinguishable) and `c_min` with interference. Both are
//! Poisson counts on top of a uniform background, and the estimator is
//! `z_exp = 1 - c_min / c_max`, clamped to `[0, 1]`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, NetworkParams};
use crate::profiles::AmplitudeProfile;

/// Redraws allowed when the reference acquisition comes back empty.
pub const MAX_REFERENCE_REDRAWS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    /// Expected coincidences per acquisition without interference.
    pub mean_signal_cc: f64,
    /// Multiplicative visibility degradation in `[0, 1]`.
    pub eta_vis: f64,
    /// Expected background counts per acquisition.
    pub background_rate: f64,
    pub seed: u64,
}

impl MeasurementConfig {
    pub fn new(mean_signal_cc: f64, seed: u64) -> Self {
        MeasurementConfig {
            mean_signal_cc,
            eta_vis: 1.0,
            background_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_signal_cc > 0.0 && self.mean_signal_cc.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mean_signal_cc must be positive, got {}",
                self.mean_signal_cc
            )));
        }
        if !(0.0..=1.0).contains(&self.eta_vis) {
            return Err(Error::InvalidConfig(format!(
                "eta_vis must be in [0, 1], got {}",
                self.eta_vis
            )));
        }
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "background_rate must be nonnegative, got {}",
                self.background_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountPair {
    /// Reference acquisition, no interference.
    pub c_max: u64,
    /// Acquisition with interference.
    pub c_min: u64,
}

/// Coincidence probability `(C - z) / 2`.
pub fn coincidence_prob(z: f64, c: f64) -> Result<f64> {
    if c < z {
        return Err(Error::Domain(format!("normalisation C = {c} below z = {z}")));
    }
    Ok((c - z) / 2.0)
}

pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// Expected `(c_max, c_min)` for a true visibility `z`.
pub fn expected_counts(z: f64, cfg: &MeasurementConfig) -> (f64, f64) {
    let cc = cfg.mean_signal_cc;
    (
        cc + cfg.background_rate,
        cc * (1.0 - cfg.eta_vis * z) + cfg.background_rate,
    )
}

pub fn sample_counts<R: Rng + ?Sized>(z: f64, cfg: &MeasurementConfig, rng: &mut R) -> CountPair {
    let (max_mean, min_mean) = expected_counts(z, cfg);
    let c_max = poisson(max_mean, rng);
    let c_min = poisson(min_mean.max(0.0), rng);
    CountPair { c_max, c_min }
}

pub fn estimate_visibility(c: CountPair) -> Result<f64> {
    if c.c_max == 0 {
        return Err(Error::ZeroReference);
    }
    Ok((1.0 - c.c_min as f64 / c.c_max as f64).clamp(0.0, 1.0))
}

/// Draws count pairs until the reference is nonzero, then estimates `z`.
pub fn measure_visibility<R: Rng + ?Sized>(z: f64, cfg: &MeasurementConfig, rng: &mut R) -> Result<f64> {
    for _ in 0..MAX_REFERENCE_REDRAWS {
        match estimate_visibility(sample_counts(z, cfg, rng)) {
            Err(Error::ZeroReference) => continue,
            other => return other,
        }
    }
    Err(Error::ZeroReference)
}

/// How visibilities are obtained from exact overlaps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Readout {
    /// Noiseless: the estimate is the exact overlap.
    Exact,
    /// Photon counting with the given configuration.
    Counting(MeasurementConfig),
}

impl Readout {
    pub fn from_option(cfg: Option<MeasurementConfig>) -> Self {
        cfg.map_or(Readout::Exact, Readout::Counting)
    }

    /// Turns exact per-neuron visibilities into estimates. Neuron `i` uses
    /// `rng_for(i)`, so the result does not depend on evaluation order.
    pub fn estimate<R: Rng>(&self, exact: &[f64], mut rng_for: impl FnMut(usize) -> R) -> Result<Vec<f64>> {
        match self {
            Readout::Exact => Ok(exact.to_vec()),
            Readout::Counting(cfg) => exact
                .iter()
                .enumerate()
                .map(|(i, &z)| measure_visibility(z, cfg, &mut rng_for(i)))
                .collect(),
        }
    }
}

/// Measured network visibility `Σ wᵢ zᵢ_exp`; neuron `i` draws from
/// `rng_for(i)`.
pub fn measure_network_visibility<R: Rng>(
    x: &AmplitudeProfile,
    p: &NetworkParams,
    readout: Readout,
    rng_for: impl FnMut(usize) -> R,
) -> Result<f64> {
    let exact: Vec<f64> = model::neuron_amplitudes(x, p)?.into_iter().map(|s| s * s).collect();
    let z = readout.estimate(&exact, rng_for)?;
    Ok(model::mix(&p.w, &z))
}

/// Photons needed to estimate a coincidence rate to within `eps` with
/// confidence `1 - delta` (two-sided Hoeffding bound).
pub fn hoeffding_shots(eps: f64, delta: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "need 0 < eps < 1 and 0 < delta < 1, got eps={eps} delta={delta}"
        )));
    }
    Ok(((2.0 / delta).ln() / (2.0 * eps * eps)).ceil() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::profiles::normalize;
    use crate::rng::{self, Purpose};

    fn cfg(cc: f64, eta: f64, bg: f64) -> MeasurementConfig {
        MeasurementConfig {
            mean_signal_cc: cc,
            eta_vis: eta,
            background_rate: bg,
            seed: 11,
        }
    }

    #[test]
    fn coincidence_reference_points() {
        assert_eq!(coincidence_prob(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(coincidence_prob(0.0, 1.0).unwrap(), 0.5);
        assert_eq!(coincidence_prob(0.5, 1.0).unwrap(), 0.25);
        assert!(matches!(coincidence_prob(0.8, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn expected_count_structure() {
        assert_eq!(expected_counts(1.0, &cfg(3000.0, 1.0, 0.0)), (3000.0, 0.0));
        for z in [0.0, 0.3, 1.0] {
            let (a, b) = expected_counts(z, &cfg(3000.0, 0.0, 5.0));
            assert_eq!(a, b);
        }
        let (_, cmin) = expected_counts(0.8, &cfg(3000.0, 0.5, 0.0));
        assert!((cmin - 1800.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_dip_draws_no_interference_counts() {
        let mut r = rng::stream(1, Purpose::Counts, [0; 4]);
        for _ in 0..100 {
            let c = sample_counts(1.0, &cfg(3000.0, 1.0, 0.0), &mut r);
            assert_eq!(c.c_min, 0);
            assert!(c.c_max > 2500);
        }
    }

    #[test]
    fn estimator_reference_points() {
        let e = |a, b| estimate_visibility(CountPair { c_max: a, c_min: b }).unwrap();
        assert_eq!(e(3000, 0), 1.0);
        assert_eq!(e(3000, 3000), 0.0);
        assert_eq!(e(3000, 1500), 0.5);
        assert_eq!(e(100, 150), 0.0);
        assert!(matches!(
            estimate_visibility(CountPair { c_max: 0, c_min: 3 }),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn exact_readout_is_the_model_overlap() {
        let x = normalize(&Grid::from_fn(3, 3, |r, c| (r + c) as f64)).unwrap();
        let p = NetworkParams {
            lambdas: vec![Grid::filled(3, 3, 1.0), Grid::from_fn(3, 3, |r, _| r as f64 + 1.0)],
            w: vec![0.3, 0.7],
            b: 0.0,
        };
        let z =
            measure_network_visibility(&x, &p, Readout::Exact, |_| rng::stream(0, Purpose::Counts, [0; 4])).unwrap();
        assert_eq!(z, model::network_overlap(&x, &p).unwrap());
    }

    #[test]
    fn mixture_of_perfect_overlaps_measures_one() {
        let g = Grid::from_fn(3, 3, |r, c| (r * c) as f64 + 1.0);
        let x = normalize(&g).unwrap();
        let p = NetworkParams {
            lambdas: vec![g.clone(), g.scale(2.0)],
            w: vec![0.5, 0.5],
            b: 0.0,
        };
        let z = measure_network_visibility(&x, &p, Readout::Counting(cfg(3000.0, 1.0, 0.0)), |i| {
            rng::stream(3, Purpose::Counts, [i as u64, 0, 0, 0])
        })
        .unwrap();
        assert!((z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_counts() {
        let draw = || {
            let mut r = rng::stream(5, Purpose::Counts, [1, 2, 3, 4]);
            (0..20)
                .map(|_| sample_counts(0.4, &cfg(300.0, 0.9, 2.0), &mut r))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn hoeffding_spot_values() {
        assert_eq!(hoeffding_shots(0.1, 0.05).unwrap(), 185);
        assert_eq!(hoeffding_shots(0.01, 0.05).unwrap(), 18445);
        assert!(hoeffding_shots(0.0, 0.05).is_err());
        assert!(hoeffding_shots(0.1, 1.0).is_err());
    }
}
