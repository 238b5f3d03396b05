//! Unit-norm real amplitude profiles and their overlap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Real transverse amplitude with `Σ amp² = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeProfile {
    amp: Grid,
}

impl AmplitudeProfile {
    pub fn amp(&self) -> &Grid {
        &self.amp
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.amp.shape()
    }

    pub fn into_grid(self) -> Grid {
        self.amp
    }

    /// Signed inner product `Σ x·w`.
    pub fn inner(&self, other: &AmplitudeProfile) -> Result<f64> {
        self.amp.dot(&other.amp)
    }
}

/// Scales `g` to unit Euclidean norm.
pub fn normalize(g: &Grid) -> Result<AmplitudeProfile> {
    let n = g.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroProfile);
    }
    Ok(AmplitudeProfile { amp: g.scale(1.0 / n) })
}

/// Squared overlap `(Σ x·w)²`, the ideal HOM visibility of two pure profiles.
pub fn overlap(x: &AmplitudeProfile, w: &AmplitudeProfile) -> Result<f64> {
    let s = x.inner(w)?;
    Ok(s * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ones_normalize_to_half() {
        let p = normalize(&Grid::filled(2, 2, 1.0)).unwrap();
        assert!(p.amp().as_slice().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn normalize_is_idempotent() {
        let g = Grid::from_fn(3, 4, |r, c| (r * 4 + c) as f64 + 0.5);
        let p = normalize(&g).unwrap();
        let q = normalize(p.amp()).unwrap();
        for (a, b) in p.amp().as_slice().iter().zip(q.amp().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_grid_is_rejected() {
        assert!(matches!(normalize(&Grid::zeros(3, 3)), Err(Error::ZeroProfile)));
    }

    #[test]
    fn self_overlap_is_one() {
        let x = normalize(&Grid::from_fn(4, 4, |r, c| (r + 2 * c) as f64)).unwrap();
        assert!((overlap(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_supports_do_not_overlap() {
        let x = normalize(&Grid::from_fn(2, 2, |r, _| if r == 0 { 1.0 } else { 0.0 })).unwrap();
        let w = normalize(&Grid::from_fn(2, 2, |r, _| if r == 1 { 1.0 } else { 0.0 })).unwrap();
        assert_eq!(overlap(&x, &w).unwrap(), 0.0);
    }

    #[test]
    fn delta_against_uniform_gives_inverse_pixel_count() {
        let n = 5 * 5;
        let x = normalize(&Grid::from_fn(5, 5, |r, c| if r == 2 && c == 3 { 1.0 } else { 0.0 })).unwrap();
        let w = normalize(&Grid::filled(5, 5, 1.0)).unwrap();
        assert!((overlap(&x, &w).unwrap() - 1.0 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn mismatched_shapes_fail() {
        let x = normalize(&Grid::filled(2, 2, 1.0)).unwrap();
        let w = normalize(&Grid::filled(3, 3, 1.0)).unwrap();
        assert!(matches!(overlap(&x, &w), Err(Error::ShapeMismatch { .. })));
    }

    fn grid_strategy() -> impl Strategy<Value = Grid> {
        prop::collection::vec(-1.0f64..1.0, 16)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
            .prop_map(|v| Grid::from_vec(4, 4, v).unwrap())
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric_and_bounded(a in grid_strategy(), b in grid_strategy()) {
            let (x, w) = (normalize(&a).unwrap(), normalize(&b).unwrap());
            let (xw, wx) = (overlap(&x, &w).unwrap(), overlap(&w, &x).unwrap());
            prop_assert!((xw - wx).abs() < 1e-15);
            prop_assert!((-1e-15..=1.0 + 1e-12).contains(&xw));
        }

        #[test]
        fn encoding_is_scale_invariant(a in grid_strategy(), b in grid_strategy(), k in 0.01f64..100.0) {
            let w = normalize(&b).unwrap();
            let z1 = overlap(&normalize(&a).unwrap(), &w).unwrap();
            let z2 = overlap(&normalize(&a.scale(k)).unwrap(), &w).unwrap();
            prop_assert!((z1 - z2).abs() < 1e-12);
        }

        #[test]
        fn normalized_has_unit_norm(a in grid_strategy()) {
            prop_assert!((normalize(&a).unwrap().amp().sum_sq() - 1.0).abs() < 1e-12);
        }
    }
}
