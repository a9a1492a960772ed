//! Randomized invariants over the sampler and the analytic maps.

use proptest::prelude::*;

use matchsim::analytic::{match_law, mutation_push};
use matchsim::model::{
    MutationMatrixOf, NoMatchVectorOf, Population, TypeDistributionOf, TypeSpace,
};
use matchsim::rng::rng_from_seed;
use matchsim::sampler::{plan_partial_matching, sample_full_matching, sample_partial_matching};

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|mut w| {
        let sum: f64 = w.iter().sum();
        for x in w.iter_mut() {
            *x /= sum;
        }
        let head: f64 = w[..w.len() - 1].iter().sum();
        let last = w.len() - 1;
        w[last] = 1.0 - head;
        w
    })
}

proptest! {
    #[test]
    fn full_matchings_are_perfect_involutions(half in 1usize..40, seed in any::<u64>()) {
        let n = 2 * half;
        let mut rng = rng_from_seed(seed);
        let m = sample_full_matching(n, &mut rng).unwrap();
        m.check(true).unwrap();
    }

    #[test]
    fn partial_matchings_respect_the_plan(
        labels in prop::collection::vec(1usize..=3, 2..60),
        q in simplex(3),
        seed in any::<u64>(),
    ) {
        let space = TypeSpace::new(3).unwrap();
        let pop = Population::new(labels, space).unwrap();
        let q = NoMatchVectorOf::new(q).unwrap();
        let plan = plan_partial_matching(&pop, &q, space).unwrap();
        if plan.matched_total() > 0 {
            let mut rng = rng_from_seed(seed);
            let m = sample_partial_matching(&pop, &plan, space, &mut rng).unwrap();
            m.check(false).unwrap();
            // per-type unmatched counts equal the plan exactly
            for label in 1..=3 {
                let unmatched = pop
                    .labels()
                    .iter()
                    .enumerate()
                    .filter(|&(i, &t)| t == label && m.partner(i).is_none())
                    .count();
                prop_assert_eq!(unmatched, plan.unmatched(label));
            }
        }
    }

    #[test]
    fn mutation_push_stays_on_simplex(p in simplex(3), rows in prop::collection::vec(simplex(3), 3)) {
        let p = TypeDistributionOf::new(p).unwrap();
        let b = MutationMatrixOf::new(rows).unwrap();
        let pushed = mutation_push(&p, &b);
        let sum: f64 = pushed.weights().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(pushed.weights().iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn match_law_rows_are_stochastic(p in simplex(3), q in simplex(3)) {
        let p = TypeDistributionOf::new(p).unwrap();
        let q = NoMatchVectorOf::new(q).unwrap();
        let law = match_law(&p, &q);
        for own in 1..=3 {
            let total: f64 = (1..=3).map(|l| law.to_type(own, l)).sum::<f64>() + law.to_none(own);
            prop_assert!((total - 1.0).abs() < 1e-12, "row {} sums to {}", own, total);
        }
    }
}
