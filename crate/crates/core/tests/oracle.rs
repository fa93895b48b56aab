mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slkit::checkers::check_linearizable;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn checker_agrees_with_brute_force(seed in any::<u64>(), which in 0usize..7) {
        let specs = common::builtin_specs();
        let spec = &specs[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = common::random_history(&**spec, 6, &mut rng);
        let fast = check_linearizable(&h, &**spec);
        prop_assert_eq!(fast.is_ok(), common::brute_force_linearizable(&h, &**spec));
    }

    #[test]
    fn witnesses_respect_real_time(seed in any::<u64>(), which in 0usize..7) {
        let specs = common::builtin_specs();
        let spec = &specs[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = common::random_history(&**spec, 6, &mut rng);
        if let Ok(w) = check_linearizable(&h, &**spec) {
            prop_assert!(slkit::seqspec::is_valid(&**spec, &w.order));
            let pos: std::collections::HashMap<_, _> = w.order.ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
            for a in h.ops() {
                for b in h.ops() {
                    if let (Some(pa), Some(pb)) = (pos.get(&a.id), pos.get(&b.id)) {
                        if h.happens_before(a.id, b.id).unwrap() {
                            prop_assert!(pa < pb);
                        }
                    }
                }
                if !a.is_pending() {
                    prop_assert!(pos.contains_key(&a.id));
                }
            }
        }
    }
}
