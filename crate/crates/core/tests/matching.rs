use std::collections::HashMap;

use latentprint::matching::{compare_systems, ScoreMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

proptest! {
    /// Raising every probe's true-identity score can only move that identity
    /// up, so the boosted system is at least as accurate at every rank.
    #[test]
    fn boosting_true_scores_dominates(seed in 0u64..100_000, n_id in 1usize..12, n_probe in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids = names("I", n_id);
        let probes = names("p", n_probe);
        let truth: HashMap<String, String> = probes
            .iter()
            .map(|p| (p.clone(), ids[rng.random_range(0..n_id)].clone()))
            .collect();
        let base: Vec<f64> = (0..n_id * n_probe).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut boosted = base.clone();
        for (pi, p) in probes.iter().enumerate() {
            let ti = ids.iter().position(|i| *i == truth[p]).unwrap();
            boosted[pi * n_id + ti] += rng.random_range(0.0..0.5);
        }
        let systems = vec![
            ("a".to_string(), ScoreMatrix::new(ids.clone(), probes.clone(), boosted).unwrap()),
            ("b".to_string(), ScoreMatrix::new(ids.clone(), probes.clone(), base).unwrap()),
        ];
        let table = compare_systems(&systems, &truth, n_id).unwrap();
        for r in 1..=n_id {
            prop_assert!(table.curves[0].at(r) >= table.curves[1].at(r));
        }
        let last = table.curves[0].at(n_id);
        prop_assert_eq!(last, 1.0);
    }
}
