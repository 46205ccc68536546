//! Fixtures shared by the criterion benches.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qms_core::algebra::random_self_adjoint;
use qms_core::bratteli::{family_commutative, family_effros_shen, family_uhf};
use qms_core::{AlgebraElement, BetaSpec, BlockAlgebra, InductiveSequence, LipNormChain};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(name, sequence)` for each benchmarked family at the given depth.
pub fn families(depth: usize) -> Vec<(&'static str, InductiveSequence)> {
    let beta = BetaSpec::default();
    vec![
        ("uhf2", family_uhf(2, depth, &beta).expect("uhf")),
        (
            "golden",
            family_effros_shen(&[1; 12], depth, &beta).expect("effros-shen"),
        ),
        ("commutative", family_commutative(depth, &beta).expect("commutative")),
    ]
}

pub fn chain(seq: &InductiveSequence) -> LipNormChain {
    LipNormChain::new(seq.clone()).expect("chain")
}

pub fn self_adjoint(alg: &Arc<BlockAlgebra>, seed: u64) -> AlgebraElement {
    random_self_adjoint(alg, &mut rng(seed))
}
