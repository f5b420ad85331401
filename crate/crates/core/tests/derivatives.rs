mod common;

use common::{fd_gradient, fd_hessian, random_instance, relative_frobenius};
use odeid::curvature::{star_coloring, SparsityPattern};
use odeid::library::CandidateLibrary;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..10_000, samples in 3usize..=10, d in 1usize..=3, exp in any::<bool>()) {
        let inst = random_instance(seed, samples, d, 2, exp);
        let g = inst.obj.gradient(&inst.x).unwrap();
        let fd = fd_gradient(|y| inst.obj.value(y).unwrap(), &inst.x, 1e-6);
        prop_assert!(relative_frobenius(&g, &fd) < 1e-6);
    }

    #[test]
    fn colored_hessian_matches_finite_differences(seed in 0u64..10_000, samples in 3usize..=10, d in 1usize..=3, exp in any::<bool>()) {
        let inst = random_instance(seed, samples, d, 2, exp);
        let h = inst.obj.hessian(&inst.x).unwrap().to_dense();
        let fd = fd_hessian(|y| inst.obj.gradient(y).unwrap(), &inst.x, 1e-5);
        prop_assert!(relative_frobenius(&h, &fd) < 1e-5);
    }
}

#[test]
fn pattern_covers_every_finite_difference_nonzero() {
    for seed in 0..6 {
        let inst = random_instance(seed, 12, 3, 1, seed % 2 == 0);
        assert!(inst.x.len() <= 200);
        let fd = fd_hessian(|y| inst.obj.gradient(y).unwrap(), &inst.x, 1e-5);
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let m = inst.x.len();
        let pattern = inst.obj.pattern();
        let mut missed = Vec::new();
        for i in 0..m {
            for j in 0..m {
                if fd[i * m + j].abs() > 1e-7 * scale && !pattern.contains(i, j) {
                    missed.push((i, j));
                }
            }
        }
        assert!(missed.is_empty(), "seed {seed}: entries outside the pattern {missed:?}");
        let h = inst.obj.hessian(&inst.x).unwrap();
        assert!(relative_frobenius(&h.to_dense(), &fd) < 1e-5);
    }
}

#[test]
fn color_count_is_independent_of_grid_size() {
    let lib = CandidateLibrary::polynomial(3, 3, false).unwrap();
    let mask = vec![true; 3 * lib.len()];
    let counts: Vec<usize> = [50, 500, 5000]
        .iter()
        .map(|&n| {
            let pattern = SparsityPattern::derive(n, &lib, &mask).unwrap();
            let coloring = star_coloring(&pattern);
            assert!(coloring.find_violation(pattern.state_graph()).is_none());
            coloring.num_colors()
        })
        .collect();
    assert_eq!(counts, vec![9, 9, 9]);
}

#[test]
fn hessian_assembly_spends_one_product_per_color() {
    let mut inst = random_instance(3, 8, 2, 2, true);
    let colors = inst.obj.coloring().num_colors();
    use odeid::lm::Objective;
    let x = inst.x.clone();
    inst.obj.derivatives(&x).unwrap();
    inst.obj.derivatives(&x).unwrap();
    assert_eq!(inst.obj.hvp_count(), 2 * colors);
}
