use std::collections::HashSet;

use homon::grid::Grid;
use homon::ingest::{self, RawDataset};
use homon::measurement::{self, MeasurementConfig};
use homon::model::{self, ActivationShape, NetworkParams};
use homon::optics::{self, field::wrap_phase, ComplexField};
use homon::profiles;
use homon::rng::{self, Purpose};
use homon::training::{self, Observation, TrainConfig};
use num_complex::Complex64;
use proptest::prelude::*;

fn grid(max: usize) -> impl Strategy<Value = Grid> {
    (1..=max).prop_flat_map(|n| {
        prop::collection::vec(0.0f64..1.0, n * n).prop_map(move |v| Grid::from_vec(n, n, v).unwrap())
    })
}

fn nonzero_grid(n: usize) -> impl Strategy<Value = Grid> {
    prop::collection::vec(0.01f64..1.0, n * n).prop_map(move |v| Grid::from_vec(n, n, v).unwrap())
}

fn params(n: usize, m: usize) -> impl Strategy<Value = NetworkParams> {
    (
        prop::collection::vec(nonzero_grid(n), m),
        prop::collection::vec(0.0f64..1.0, m),
        -2.0f64..2.0,
    )
        .prop_map(|(lambdas, w, b)| NetworkParams {
            lambdas,
            w: training::project_simplex(&w),
            b,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pad_then_crop_is_identity(g in grid(12), border in 0usize..5) {
        prop_assert_eq!(ingest::crop(&ingest::pad(&g, border), border), g);
    }

    #[test]
    fn resampling_keeps_total_intensity(g in grid(12), target in 1usize..40) {
        let r = ingest::resample(&g, target);
        prop_assert_eq!(r.shape(), (target, target));
        prop_assert!(r.as_slice().iter().all(|&v| v >= 0.0));
        let (a, b) = (g.sum(), r.sum());
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300));
    }

    #[test]
    fn idx_round_trip_is_bit_exact(
        pixels in prop::collection::vec(prop::collection::vec(0u8..=255, 28 * 28), 1..6),
        seed in any::<u8>(),
    ) {
        let images: Vec<Grid> = pixels
            .iter()
            .map(|p| Grid::from_vec(28, 28, p.iter().map(|&v| v as f64).collect()).unwrap())
            .collect();
        let labels: Vec<u8> = (0..images.len()).map(|i| ((i as u8).wrapping_add(seed)) % 10).collect();
        let ds = RawDataset { images, labels };
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        ingest::write_idx(&ds, &ip, &lp).unwrap();
        prop_assert_eq!(ingest::load_idx(&ip, &lp).unwrap(), ds);
    }

    #[test]
    fn subsets_are_disjoint_and_seeded(seed in any::<u64>(), n_train in 1usize..8, n_test in 1usize..8) {
        let images: Vec<Grid> = (0..40).map(|i| Grid::filled(3, 3, 1.0 + i as f64)).collect();
        let labels: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let ds = RawDataset { images, labels };
        let names = || ["a".to_string(), "b".to_string()];
        let (tr, te) = ingest::make_binary_subset(&ds, 0, 1, n_train, n_test, seed, names()).unwrap();
        let (tr2, te2) = ingest::make_binary_subset(&ds, 0, 1, n_train, n_test, seed, names()).unwrap();
        prop_assert_eq!(&tr, &tr2);
        prop_assert_eq!(&te, &te2);
        let a: HashSet<usize> = tr.samples.iter().map(|s| s.source_index).collect();
        prop_assert!(te.samples.iter().all(|s| !a.contains(&s.source_index)));
        prop_assert!(tr.samples.iter().chain(&te.samples).all(|s| s.label <= 1));
    }

    #[test]
    fn normalized_profiles_have_unit_norm(g in nonzero_grid(6)) {
        let p = profiles::normalize(&g).unwrap();
        prop_assert!((p.amp().sum_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_is_monotone_in_bias(
        x in nonzero_grid(4),
        p in params(4, 2),
        db in 0.0f64..3.0,
        beta in 0.1f64..20.0,
        gamma in -5.0f64..5.0,
    ) {
        let x = profiles::normalize(&x).unwrap();
        let shape = ActivationShape::new(beta, gamma).unwrap();
        let mut q = p.clone();
        q.b += db;
        prop_assert!(model::forward(&x, &q, shape).unwrap() >= model::forward(&x, &p, shape).unwrap());
    }

    #[test]
    fn single_neuron_network_is_the_plain_neuron(x in nonzero_grid(5), l in nonzero_grid(5), b in -1.0f64..1.0) {
        let x = profiles::normalize(&x).unwrap();
        let shape = ActivationShape::new(11.0, 5.5).unwrap();
        let p = NetworkParams::single(l.clone(), b);
        let z = profiles::overlap(&x, &profiles::normalize(&l).unwrap()).unwrap();
        let q = NetworkParams { lambdas: vec![l], w: vec![1.0], b };
        prop_assert_eq!(model::forward(&x, &p, shape).unwrap(), model::forward(&x, &q, shape).unwrap());
        let expected = model::sigmoid_bg(z + b, shape);
        prop_assert!((model::forward(&x, &p, shape).unwrap() - expected).abs() <= 1e-14);
    }

    #[test]
    fn mixture_stays_on_the_simplex(
        p in params(3, 3),
        zs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..6),
        lr_w in 0.0f64..20.0,
    ) {
        let mut cfg = TrainConfig::reference(homon::ingest::DatasetKind::Fashion, 3, 4);
        cfg.lr_w = lr_w;
        let obs: Vec<Observation> = zs
            .iter()
            .map(|z| Observation {
                z: z.clone(),
                cross: p.lambdas.iter().map(|l| Grid::filled(l.rows(), l.cols(), z[0])).collect(),
            })
            .collect();
        let labels: Vec<u8> = (0..obs.len()).map(|i| (i % 2) as u8).collect();
        let next = training::grad_step(&labels, &obs, &p, &cfg, 0).unwrap();
        prop_assert!((next.w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(next.w.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn counts_depend_only_on_the_seed(seed in any::<u64>(), z in 0.0f64..1.0, cc in 1.0f64..1e4) {
        let cfg = MeasurementConfig::new(cc, seed);
        let draw = || {
            let mut r = rng::stream(seed, Purpose::Counts, [1, 2, 3, 4]);
            (0..5).map(|_| measurement::sample_counts(z, &cfg, &mut r)).collect::<Vec<_>>()
        };
        prop_assert_eq!(draw(), draw());
    }

    #[test]
    fn propagation_conserves_energy_and_ignores_global_phase(
        re in prop::collection::vec(-1.0f64..1.0, 16 * 16),
        im in prop::collection::vec(-1.0f64..1.0, 16 * 16),
        d in -0.05f64..0.05,
        phase in -10.0f64..10.0,
    ) {
        let values: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        prop_assume!(values.iter().any(|v| v.norm() > 1e-6));
        let f = ComplexField::new(16, 16, values, 8e-6, 808e-9).unwrap().normalized().unwrap();
        let g = optics::propagate(&f, d).unwrap();
        prop_assert!((g.energy() / f.energy() - 1.0).abs() <= 1e-9);
        let rot = Complex64::from_polar(1.0, phase);
        let h = f.with_values(f.values().iter().map(|v| v * rot).collect());
        let a = optics::overlap_physical(&f, &g).unwrap();
        let b = optics::overlap_physical(&h, &g).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn wrapped_phase_lies_in_half_open_interval(p in -1e3f64..1e3) {
        let w = wrap_phase(p);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        let turns = (p - w) / (2.0 * std::f64::consts::PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }
}
