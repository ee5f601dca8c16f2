use std::sync::Arc;

use bandsplit::pzt::{decode, encode};
use bandsplit::split::split_adjoint;
use bandsplit::{cutoff_masks, iterative_split, recompose, ring_masks, SeededRng, Tensor};
use proptest::prelude::*;

fn grid(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    let data = (0..n * c * h * w).map(|_| rng.standard_normal()).collect();
    Tensor::from_f64(vec![n, c, h, w], data).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_then_recompose_is_exact(
        h in 2usize..20, w in 2usize..20, k in 1usize..9, normalized: bool, seed: u64,
    ) {
        let z = grid(2, 3, h, w, seed);
        let set = Arc::new(ring_masks(h, w, k, 0.04, normalized).unwrap());
        let stack = iterative_split(&z, set).unwrap();
        prop_assert_eq!(stack.band_count(), k);
        let err = recompose(&stack).max_abs_diff(&z).unwrap();
        prop_assert!(err <= 1e-10 * (1.0 + z.norm()), "err {err}");
    }

    #[test]
    fn split_adjoint_matches_inner_products(
        h in 2usize..12, w in 2usize..12, k in 1usize..6, seed: u64,
    ) {
        let z = grid(1, 2, h, w, seed);
        let set = Arc::new(ring_masks(h, w, k, 0.04, false).unwrap());
        let stack = iterative_split(&z, set.clone()).unwrap();
        let grads: Vec<Tensor> = (0..k).map(|i| grid(1, 2, h, w, seed ^ (i as u64 + 1))).collect();
        let g_res = grid(1, 2, h, w, seed.wrapping_add(99));
        let lhs: f64 = stack.bands.iter().zip(&grads).map(|(b, g)| dot(b, g)).sum::<f64>()
            + dot(&stack.final_residual, &g_res);
        let rhs = dot(&z, &split_adjoint(&grads, &g_res, &set).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn masks_stay_in_unit_interval(h in 1usize..24, w in 1usize..24, k in 1usize..12) {
        let set = ring_masks(h, w, k, 0.02, false).unwrap();
        for m in set.masks() {
            prop_assert!(m.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn cutoff_pair_sums_to_one(h in 1usize..24, w in 1usize..24, rho in 0.0f64..1.0) {
        let pair = cutoff_masks(h, w, rho, 0.04).unwrap();
        for (lp, hp) in pair.lp.iter().zip(&pair.hp) {
            prop_assert!((lp + hp - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pzt_round_trips(dims in prop::collection::vec(1usize..5, 1..5), seed: u64) {
        let n: usize = dims.iter().product();
        let mut rng = SeededRng::new(seed);
        let t = Tensor::from_f64(dims, (0..n).map(|_| rng.standard_normal()).collect()).unwrap();
        prop_assert_eq!(decode(&encode(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn derived_streams_are_deterministic(base: u64, idx in 0u64..64) {
        let a: Vec<u64> = { let mut r = SeededRng::derived(base, idx); (0..4).map(|_| r.next_u64()).collect() };
        let b: Vec<u64> = { let mut r = SeededRng::derived(base, idx); (0..4).map(|_| r.next_u64()).collect() };
        let c: Vec<u64> = { let mut r = SeededRng::derived(base, idx + 1); (0..4).map(|_| r.next_u64()).collect() };
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(a, c);
    }
}
