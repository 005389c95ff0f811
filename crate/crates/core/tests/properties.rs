use std::collections::BTreeMap;

use decaylab::cli::{parse_config, Experiment, ExperimentConfig};
use decaylab::conv_engine::{convolve, symmetry_defect, ConvOp};
use decaylab::dyadic_sets::{additive_energy, covering_number, difference_count};
use decaylab::measure_grid::{cell_width, regularize};
use decaylab::spectral::{fourier_at, order_check};
use decaylab::{DyadicGridSet, GridMeasure};
use proptest::prelude::*;

fn measure(level: u32) -> impl Strategy<Value = GridMeasure> {
    (-64i64..64, prop::collection::vec(0.0f64..1.0, 1..40)).prop_map(move |(offset, mut masses)| {
        masses[0] += 1e-3;
        GridMeasure::from_cell_masses(level, offset, masses).unwrap().normalized().unwrap()
    })
}

fn positive_measure(level: u32) -> impl Strategy<Value = GridMeasure> {
    (16i64..64, prop::collection::vec(0.0f64..1.0, 1..24)).prop_map(move |(offset, mut masses)| {
        masses[0] += 1e-3;
        GridMeasure::from_cell_masses(level, offset, masses).unwrap().normalized().unwrap()
    })
}

fn set_1d(level: u32) -> impl Strategy<Value = DyadicGridSet> {
    prop::collection::btree_set(0i64..(1 << level), 1..24)
        .prop_map(move |c| DyadicGridSet::from_cells_1d(level, c.into_iter().collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn difference_measure_is_symmetric(mu in measure(6)) {
        let d = convolve(&mu, &mu, ConvOp::Sub).unwrap();
        prop_assert!(symmetry_defect(&d) < 1e-12);
    }

    #[test]
    fn convolutions_conserve_mass(mu in measure(5), nu in positive_measure(5)) {
        for op in [ConvOp::Add, ConvOp::Sub, ConvOp::Mul] {
            let c = convolve(&mu, &nu, op).unwrap();
            prop_assert!((c.total_mass() - 1.0).abs() < 1e-12, "{op:?}: {}", c.total_mass());
        }
    }

    #[test]
    fn regularize_conserves_mass(mu in measure(8), q in 2u32..7) {
        let r = regularize(&mu, cell_width(q)).unwrap();
        prop_assert!((r.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transform_bounded_by_mass(mu in measure(8), xi in -1e4f64..1e4) {
        prop_assert!(fourier_at(&mu, xi).norm() <= mu.total_mass() * (1.0 + 1e-12));
    }

    #[test]
    fn order_exchange_holds(mu in measure(7), nu in positive_measure(7), xi in 1.0f64..2e3) {
        let (lhs, rhs) = order_check(&mu, &nu, xi);
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn covering_number_monotone(x in set_1d(8)) {
        let mut last = usize::MAX;
        for q in (0..=8).rev() {
            let n = covering_number(&x, cell_width(q)).unwrap();
            prop_assert!(n <= last);
            last = n;
        }
        prop_assert_eq!(covering_number(&x, 1.0).unwrap(), 1);
    }

    #[test]
    fn additive_energy_cauchy_schwarz(a in set_1d(7), b in set_1d(7)) {
        // E(A, B) >= |A|^2 |B|^2 / |A - B|, with equality-free slack.
        let e = additive_energy(&a, &b).unwrap() as f64;
        let d = difference_count(&a, &b).unwrap() as f64;
        let ab = (a.len() * b.len()) as f64;
        prop_assert!(e * d >= ab * ab - 1e-6);
        prop_assert!(e <= ab * a.len().min(b.len()) as f64);
    }

    #[test]
    fn config_round_trips(
        scale in 1u32..=30,
        seed in any::<u64>(),
        band_lo in 1u32..100,
        width in 1u32..1000,
        n in 2usize..200,
        inputs in prop::collection::vec(
            prop_oneof![
                (1u32..5, 0u32..5).prop_map(|(a, b)| format!("uniform:{b}:{}", a + b)),
                Just("cantor:2:2:3".to_string()),
                (0u32..8).prop_map(|x| format!("point:{x}/8")),
            ],
            1..=2,
        ),
        threads in prop::option::of(1usize..9),
    ) {
        let mut params = BTreeMap::new();
        params.insert("band".to_string(), format!("{band_lo}:{}", band_lo + width));
        params.insert("n_samples".to_string(), n.to_string());
        let cfg = ExperimentConfig {
            experiment: Experiment::Decay,
            scale,
            seed,
            inputs,
            params,
            output_dir: Some("out/run".into()),
            threads,
        };
        let text = cfg.serialize();
        prop_assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
