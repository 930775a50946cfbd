mod common;

use std::time::Instant;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_networks_are_certified() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = Instant::now();
    for _ in 0..100 {
        let n = rng.random_range(2..=30);
        let model = common::random_graph(&mut rng, n).assemble_model().unwrap();
        let cert = model.hurwitz_certificate().unwrap();
        assert!(cert.spectral_abscissa < 0.0);
        assert!(cert.decay_rate <= cert.spectral_abscissa.abs() * (1.0 + 1e-12));
        // strictly positive losses make every row strictly diagonally dominant
        assert!(cert.gershgorin_margin > 0.0);
        let ratio = common::certificate_ratio(&model, cert.k, cert.decay_rate);
        assert!(ratio <= 1.0 + 1e-9, "n = {n}: ratio {ratio}");
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn state_bound_holds_for_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let n = rng.random_range(2..=12);
        let model = common::random_graph(&mut rng, n).assemble_model().unwrap();
        let upper = DVector::from_fn(model.m(), |_, _| rng.random_range(0.5..5.0));
        for _ in 0..50 {
            let ratio = common::state_bound_ratio(&mut rng, &model, &upper);
            assert!(ratio <= 1.0, "bound exceeded by {ratio}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_rows_balance(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = common::random_graph(&mut rng, n);
        let lap = graph.flow_laplacian().unwrap();
        for j in 0..n {
            // column sums vanish: every unit of outflow arrives somewhere
            let col: f64 = lap.column(j).iter().sum();
            prop_assert!(col.abs() <= 1e-12 * lap.amax());
        }
        for i in 0..n {
            let row: f64 = lap.row(i).iter().sum();
            prop_assert!(row.abs() <= 1e-12 * lap.amax());
        }
    }
}
