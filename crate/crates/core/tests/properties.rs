use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qms_core::algebra::{dist_to_scalars, op_norm, random_element, random_self_adjoint, spectral_midpoint, trace_norm};
use qms_core::bratteli::{family_commutative, family_compacts, family_effros_shen, family_uhf, BetaSpec};
use qms_core::expectations::ExpectationChain;
use qms_core::ideals::{fell_metric, intersect_down, random_ideal, IdealSpec};
use qms_core::lipnorms::quasi_leibniz_residual;
use qms_core::propinquity::{propinquity_upper, PropTarget};
use qms_core::{BlockAlgebra, InductiveSequence, LipNormChain};

fn family(which: u8) -> InductiveSequence {
    let beta = BetaSpec::default();
    match which % 4 {
        0 => family_uhf(2, 3, &beta),
        1 => family_effros_shen(&[1, 2, 1, 3], 4, &beta),
        2 => family_commutative(4, &beta),
        _ => family_compacts(4, &beta),
    }
    .unwrap()
}

fn block_algebra() -> impl Strategy<Value = std::sync::Arc<BlockAlgebra>> {
    prop::collection::vec(1usize..4, 1..4).prop_map(|sizes| BlockAlgebra::new(sizes, "A").unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_axioms(alg in block_algebra(), seed in any::<u64>(), t in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_element(&alg, &mut rng);
        let b = random_element(&alg, &mut rng);
        let (na, nb) = (op_norm(&a), op_norm(&b));
        prop_assert!(op_norm(&a.add(&b).unwrap()) <= na + nb + 1e-10);
        prop_assert!(op_norm(&a.mul(&b).unwrap()) <= na * nb + 1e-10);
        prop_assert!((op_norm(&a.scale(t)) - t.abs() * na).abs() <= 1e-10 * (1.0 + na));
        // C*-identity and adjoint invariance.
        let aa = a.adjoint().mul(&a).unwrap();
        prop_assert!((op_norm(&aa) - na * na).abs() <= 1e-9 * (1.0 + na * na));
        prop_assert!((op_norm(&a.adjoint()) - na).abs() <= 1e-10 * (1.0 + na));
        let h = random_self_adjoint(&alg, &mut rng);
        prop_assert!(op_norm(&h) <= trace_norm(&h) + 1e-10);
    }

    #[test]
    fn scalar_distance_is_half_the_spread(alg in block_algebra(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_self_adjoint(&alg, &mut rng);
        let lambda = spectral_midpoint(&a).unwrap();
        let d = dist_to_scalars(&a).unwrap();
        prop_assert!((op_norm(&a.shift(lambda)) - d).abs() <= 1e-10);
        for dl in [-0.1, 0.05, 0.2] {
            prop_assert!(op_norm(&a.shift(lambda + dl)) >= d - 1e-12);
        }
    }

    #[test]
    fn expectations_are_unital_idempotent_projections(which in 0u8..4, seed in any::<u64>()) {
        let seq = family(which);
        let chain = ExpectationChain::new(&seq).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for n in 0..seq.depth() {
            let e = chain.stage(n);
            let x = random_element(seq.algebra(n + 1), &mut rng);
            let p = e.project(&x).unwrap();
            prop_assert!(e.project(&p).unwrap().max_abs_diff(&p).unwrap() <= 1e-12);
            prop_assert!(op_norm(&p) <= op_norm(&x) + 1e-12);
        }
        for m in 0..seq.depth() {
            let c = chain.composed(seq.depth(), m).unwrap();
            let one = qms_core::AlgebraElement::unit(seq.algebra(seq.depth()));
            prop_assert!(c.project(&one).unwrap().max_abs_diff(&one).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn chain_lipnorm_is_a_quasi_leibniz_seminorm(which in 0u8..4, seed in any::<u64>(), t in -3.0f64..3.0) {
        let seq = family(which);
        let chain = LipNormChain::new(seq.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = seq.depth();
        let a = random_self_adjoint(seq.algebra(n), &mut rng);
        let b = random_self_adjoint(seq.algebra(n), &mut rng);
        let (la, lb) = (chain.eval(n, &a).unwrap(), chain.eval(n, &b).unwrap());
        prop_assert!(chain.eval(n, &a.add(&b).unwrap()).unwrap() <= la + lb + 1e-10);
        prop_assert!((chain.eval(n, &a.scale(t)).unwrap() - t.abs() * la).abs() <= 1e-10);
        let r = quasi_leibniz_residual(chain.level(n).unwrap(), &a, &b, 2.0, 0.0).unwrap();
        prop_assert!(r <= 1e-9);
        // Stage equality for an element of a lower level.
        let c = random_self_adjoint(seq.algebra(1), &mut rng);
        let up = seq.embed(&c, 1, n).unwrap();
        prop_assert!((chain.eval(n, &up).unwrap() - chain.eval(1, &c).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn ideal_levels_are_closed_under_intersection(which in 0u8..4, seed in any::<u64>(), density in 0.0f64..1.0) {
        let seq = family(which);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ideal = random_ideal(&seq, density, &mut rng);
        for n in 0..seq.depth() {
            prop_assert_eq!(intersect_down(&seq, n, ideal.level(n + 1)), ideal.level(n).to_vec());
        }
        let rebuilt = IdealSpec::new(&seq, ideal.levels().to_vec()).unwrap();
        prop_assert_eq!(rebuilt, ideal);
    }

    #[test]
    fn fell_metric_is_an_ultrametric(seed in any::<u64>()) {
        let seq = family_commutative(6, &BetaSpec::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<IdealSpec> = (0..3).map(|_| random_ideal(&seq, 0.7, &mut rng)).collect();
        let m = |i: usize, j: usize| fell_metric(&xs[i], &xs[j]).unwrap().value;
        prop_assert_eq!(m(0, 0), 0.0);
        prop_assert_eq!(m(0, 1), m(1, 0));
        prop_assert!(m(0, 2) <= m(0, 1).max(m(1, 2)));
    }

    #[test]
    fn propinquity_bounds_split_at_intermediate_levels(which in 0u8..4, n in 0usize..4, k in 0usize..4) {
        let seq = family(which);
        let m = (n + k).min(seq.depth());
        let direct = propinquity_upper(&seq, n, PropTarget::Limit).unwrap();
        let split = propinquity_upper(&seq, n, PropTarget::Level(m)).unwrap()
            + propinquity_upper(&seq, m, PropTarget::Limit).unwrap();
        prop_assert!(direct <= split + 1e-12);
        prop_assert!(propinquity_upper(&seq, m, PropTarget::Limit).unwrap() <= direct + 1e-15);
    }
}
