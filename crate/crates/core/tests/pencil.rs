mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turnpike_core::pencil::build_pencil;
use turnpike_core::{CostData, Signal};

fn random_case(seed: u64, n: usize, coupled: bool) -> (turnpike_core::StateSpaceModel, CostData, Signal) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = common::random_graph(&mut rng, n).assemble_model().unwrap();
    let (m, w) = (model.m(), model.w());
    let q = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.5..3.0)));
    let s = if coupled { model.b.transpose() } else { DMatrix::zeros(m, n) };
    let omega = std::f64::consts::TAU / rng.random_range(2.0..20.0);
    let r = Signal::constant(DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)));
    let p = Signal::constant(DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
        .add(&Signal::sinusoid(DVector::from_fn(m, |_, _| rng.random_range(0.0..0.5)), omega, 0.3))
        .unwrap();
    let d = Signal::sinusoid(DVector::from_fn(w, |_, _| rng.random_range(0.0..1.0)), omega, 1.1);
    (model, CostData { q, s, r, p }, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_reconstructs_and_turnpike_solves(seed in any::<u64>(), n in 1usize..8, coupled in any::<bool>()) {
        let (model, cost, d) = random_case(seed, n, coupled);
        let pencil = build_pencil(&model, &cost, &d).unwrap();
        prop_assume!(pencil.check_regularity(seed).regular);
        for k in 0..2u64 {
            let wd = pencil.weierstrass(seed.wrapping_add(k)).unwrap();
            for s in [0.0, 0.37, -1.13, 2.9] {
                let res = wd.reconstruction_residual(&pencil, s);
                prop_assert!(res <= 1e-10, "residual {res:e} at s = {s}");
            }
            let tp = wd.bounded_particular_solution(&pencil).unwrap();
            let grid: Vec<f64> = (0..200).map(|i| 0.1 * i as f64).collect();
            prop_assert!(pencil.relative_residual(&tp.xi, &grid) <= 1e-8);
            prop_assert!(tp.switching_residual(&pencil, &grid) <= 1e-8);
        }
    }
}

#[test]
fn uncoupled_single_vertex_is_purely_algebraic() {
    // no input penalty and no coupling: three infinite eigenvalues
    let (model, cost, d) = random_case(3, 1, false);
    let pencil = build_pencil(&model, &cost, &d).unwrap();
    let wd = pencil.weierstrass(0).unwrap();
    assert_eq!((wd.finite_dim, wd.infinite_dim(), wd.index), (0, 3, 3));
    assert!(wd.reconstruction_residual(&pencil, 0.0) <= 1e-12);
}
