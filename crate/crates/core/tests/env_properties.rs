mod common;

use proptest::prelude::*;

use common::{hanabi_rollouts, hintmatch_rollouts};

#[test]
fn hanabi_random_play_keeps_every_invariant() {
    let steps = hanabi_rollouts(20_000, 11).unwrap();
    assert!(steps >= 20_000);
}

#[test]
fn hintmatch_random_play_keeps_every_invariant() {
    hintmatch_rollouts(20_000, 11).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hanabi_invariants_hold_from_any_seed(seed in any::<u64>()) {
        let result = hanabi_rollouts(200, seed).map(|_| ());
        prop_assert_eq!(result, Ok(()));
    }

    #[test]
    fn hintmatch_invariants_hold_from_any_seed(seed in any::<u64>()) {
        prop_assert_eq!(hintmatch_rollouts(50, seed), Ok(()));
    }
}
