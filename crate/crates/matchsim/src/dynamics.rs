//! The period loop: random mutation, random partial matching, and
//! match-induced type changing over a finite population.
//!
//! Draw order within a period is fixed: mutation draws in agent-index
//! order, then the unmatched-subset draws in type-label order, then the
//! pairing draws, then the type-change draws in agent-index order. A run
//! is fully determined by `(params, N, T, seed)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    empirical_distribution, Matching, MatchedTypeOutcome, ModelParamsOf, MutationMatrixOf,
    PeriodTrace, Population, TypeDistributionOf, TypeSpace,
};
use crate::rng::{draw_categorical, replication_seed, rng_from_seed};
use crate::sampler::{matched_types, plan_partial_matching, sample_partial_matching, SamplerError};

pub type ModelParams = ModelParamsOf<f64>;
pub type TypeDistribution = TypeDistributionOf<f64>;

/// A complete recorded run of the dynamical system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub params: ModelParams,
    pub n: usize,
    pub periods: usize,
    pub seed: u64,
    pub traces: Vec<PeriodTrace>,
}

/// Deterministic initial population: type counts are the largest-remainder
/// apportionment of `N * p0` (ties broken by smallest label), laid out in
/// contiguous blocks by type. The empirical distribution is within `1/N`
/// per type of `p0`.
pub fn init_population(p0: &TypeDistribution, n: usize, space: TypeSpace) -> Population {
    let k = space.count();
    let mut counts = vec![0usize; k];
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(k);
    let mut assigned = 0usize;
    for idx in 0..k {
        let target = p0.weights()[idx] * n as f64;
        let floor = target.floor() as usize;
        counts[idx] = floor;
        assigned += floor;
        remainders.push((target - floor as f64, idx));
    }
    // largest fractional remainder first; smallest label wins ties
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for (_, idx) in remainders.iter().take(n - assigned) {
        counts[*idx] += 1;
    }
    let mut labels = Vec::with_capacity(n);
    for (idx, &c) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat(idx + 1).take(c));
    }
    Population::from_labels_unchecked(labels)
}

/// Random initial population: each agent's type drawn independently from
/// `p0`, in agent-index order.
pub fn init_population_random(
    p0: &TypeDistribution,
    n: usize,
    rng: &mut impl rand::Rng,
) -> Population {
    let labels = (0..n).map(|_| draw_categorical(p0.weights(), rng)).collect();
    Population::from_labels_unchecked(labels)
}

/// Mutate every agent independently according to its row of `b`, one
/// categorical draw per agent in index order.
pub fn step_mutation(
    pop: &Population,
    b: &MutationMatrixOf<f64>,
    rng: &mut impl rand::Rng,
) -> Population {
    let labels = pop
        .labels()
        .iter()
        .map(|&t| draw_categorical(b.row(t), rng))
        .collect();
    Population::from_labels_unchecked(labels)
}

/// Partial matching stratified on the realized post-mutation type counts,
/// plus the induced partner types. When the plan leaves nobody matched the
/// pairing stage is skipped outright and everyone is unmatched.
pub fn step_matching(
    pop_after_mutation: &Population,
    params: &ModelParams,
    rng: &mut impl rand::Rng,
) -> Result<(Matching, MatchedTypeOutcome), SamplerError> {
    let plan = plan_partial_matching(pop_after_mutation, &params.q, params.types)?;
    let matching = if plan.matched_total() == 0 {
        Matching::from_partners_unchecked(vec![None; pop_after_mutation.len()])
    } else {
        sample_partial_matching(pop_after_mutation, &plan, params.types, rng)?
    };
    let g = matched_types(pop_after_mutation, &matching);
    Ok((matching, g))
}

/// Type changing: unmatched agents keep their post-mutation type; each
/// matched agent draws its new type from `nu[own][partner]`, independently
/// across agents, in agent-index order.
pub fn step_type_change(
    h: &Population,
    g: &MatchedTypeOutcome,
    params: &ModelParams,
    rng: &mut impl rand::Rng,
) -> Population {
    let labels = h
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &own)| match g.partner_type(i) {
            None => own,
            Some(partner) => draw_categorical(params.nu.law(own, partner).weights(), rng),
        })
        .collect();
    Population::from_labels_unchecked(labels)
}

/// One full period applied to the end-of-period types of the previous one.
pub fn step_period(
    alpha_prev: &Population,
    params: &ModelParams,
    rng: &mut impl rand::Rng,
) -> Result<PeriodTrace, SamplerError> {
    let h = step_mutation(alpha_prev, &params.b, rng);
    let (matching, g) = step_matching(&h, params, rng)?;
    let alpha = step_type_change(&h, &g, params, rng);
    let empirical = empirical_distribution(&alpha, params.types).expect("non-empty population");
    Ok(PeriodTrace {
        h,
        matching,
        g,
        alpha,
        empirical,
    })
}

/// Run the dynamical system for `periods` periods, recording every trace.
pub fn run_dynamics(
    params: &ModelParams,
    n: usize,
    periods: usize,
    seed: u64,
) -> Result<SimulationRun, SamplerError> {
    let mut rng = rng_from_seed(seed);
    let mut alpha = init_population(&params.p0, n, params.types);
    let mut traces = Vec::with_capacity(periods);
    for _ in 0..periods {
        let trace = step_period(&alpha, params, &mut rng)?;
        alpha = trace.alpha.clone();
        traces.push(trace);
    }
    Ok(SimulationRun {
        params: params.clone(),
        n,
        periods,
        seed,
        traces,
    })
}

/// As [`run_dynamics`] but keeping only the per-period empirical
/// distributions. Suitable for large N and many replications.
pub fn run_empirical(
    params: &ModelParams,
    n: usize,
    periods: usize,
    seed: u64,
) -> Result<Vec<TypeDistribution>, SamplerError> {
    let mut rng = rng_from_seed(seed);
    let mut alpha = init_population(&params.p0, n, params.types);
    let mut out = Vec::with_capacity(periods);
    for _ in 0..periods {
        let trace = step_period(&alpha, params, &mut rng)?;
        alpha = trace.alpha;
        out.push(trace.empirical);
    }
    Ok(out)
}

/// Run `replications` independent copies in parallel, one derived seed per
/// replication. The result order is by replication index regardless of the
/// worker count.
pub fn run_replications_empirical(
    params: &ModelParams,
    n: usize,
    periods: usize,
    seed: u64,
    replications: usize,
) -> Result<Vec<Vec<TypeDistribution>>, SamplerError> {
    (0..replications)
        .into_par_iter()
        .map(|r| run_empirical(params, n, periods, replication_seed(seed, r as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatchChangeKernelOf, NoMatchVectorOf};
    use crate::presets::hardy_weinberg_params;

    #[test]
    fn init_population_apportionment() {
        let space = TypeSpace::new(2).unwrap();
        let p0 = TypeDistribution::new(vec![0.6, 0.4]).unwrap();
        let pop = init_population(&p0, 10, space);
        assert_eq!(pop.type_counts(space), vec![6, 4]);

        let p0 = TypeDistribution::new(vec![1.0, 0.0]).unwrap();
        let pop = init_population(&p0, 7, space);
        assert_eq!(pop.type_counts(space), vec![7, 0]);

        let space3 = TypeSpace::new(3).unwrap();
        let third = 1.0 / 3.0;
        let p0 = TypeDistribution::new(vec![third, third, third]).unwrap();
        let pop = init_population(&p0, 10, space3);
        assert_eq!(pop.type_counts(space3), vec![4, 3, 3]);
    }

    #[test]
    fn init_population_within_one_over_n() {
        let space = TypeSpace::new(4).unwrap();
        let p0 = TypeDistribution::new(vec![0.37, 0.23, 0.21, 0.19]).unwrap();
        let n = 97;
        let pop = init_population(&p0, n, space);
        for (idx, &c) in pop.type_counts(space).iter().enumerate() {
            let target = p0.weights()[idx] * n as f64;
            assert!((c as f64 - target).abs() < 1.0);
        }
    }

    #[test]
    fn mutation_identity_keeps_population() {
        let space = TypeSpace::new(2).unwrap();
        let pop = Population::new(vec![1, 2, 2, 1], space).unwrap();
        let b = MutationMatrixOf::identity(2);
        let mut rng = rng_from_seed(0);
        assert_eq!(step_mutation(&pop, &b, &mut rng).labels(), pop.labels());
    }

    #[test]
    fn mutation_dirac_row_forces_type() {
        let space = TypeSpace::new(2).unwrap();
        let pop = Population::new(vec![1; 50], space).unwrap();
        let b = MutationMatrixOf::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let mut rng = rng_from_seed(0);
        let out = step_mutation(&pop, &b, &mut rng);
        assert!(out.labels().iter().all(|&t| t == 2));
    }

    #[test]
    fn mutation_frequencies_match_row() {
        let space = TypeSpace::new(2).unwrap();
        let n = 100_000;
        let pop = Population::new(vec![1; n], space).unwrap();
        let b = MutationMatrixOf::new(vec![vec![0.9, 0.1], vec![0.0, 1.0]]).unwrap();
        let mut rng = rng_from_seed(17);
        let out = step_mutation(&pop, &b, &mut rng);
        let frac2 = out.labels().iter().filter(|&&t| t == 2).count() as f64 / n as f64;
        let bound = 4.0 * (0.09f64 / n as f64).sqrt();
        assert!((frac2 - 0.1).abs() < bound, "frac {frac2}");
    }

    #[test]
    fn matching_degenerate_all_unmatched() {
        let mut params = hardy_weinberg_params::<f64>();
        params.q = NoMatchVectorOf::new(vec![1.0, 1.0]).unwrap();
        let pop = init_population(&params.p0, 10, params.types);
        let mut rng = rng_from_seed(0);
        let before = rng.clone();
        let (matching, g) = step_matching(&pop, &params, &mut rng).unwrap();
        assert!(matching.partners().iter().all(|p| p.is_none()));
        assert!(g.values().iter().all(|v| v.is_none()));
        // pairing entirely skipped: no draws consumed
        assert_eq!(rng, before);
    }

    #[test]
    fn matching_full_when_q_zero() {
        let params = hardy_weinberg_params::<f64>();
        let pop = init_population(&params.p0, 10, params.types);
        let mut rng = rng_from_seed(0);
        let (matching, _) = step_matching(&pop, &params, &mut rng).unwrap();
        assert!(matching.is_full());
        matching.check(true).unwrap();
    }

    #[test]
    fn type_change_keep_kernel_is_identity() {
        let params = hardy_weinberg_params::<f64>();
        let mut frozen = params.clone();
        frozen.nu = MatchChangeKernelOf::keep_type(2);
        let pop = init_population(&params.p0, 20, params.types);
        let mut rng = rng_from_seed(5);
        let (_, g) = step_matching(&pop, &frozen, &mut rng).unwrap();
        let out = step_type_change(&pop, &g, &frozen, &mut rng);
        assert_eq!(out.labels(), pop.labels());
    }

    #[test]
    fn unmatched_agent_keeps_type_regardless_of_kernel() {
        let space = TypeSpace::new(3).unwrap();
        let h = Population::new(vec![3, 1, 2, 1], space).unwrap();
        let g = MatchedTypeOutcome::from_types_unchecked(vec![None, Some(2), Some(1), None]);
        let mut params = crate::presets::generic_k3_params();
        params.nu = MatchChangeKernelOf::new(vec![
            vec![TypeDistribution::dirac(3, 2); 3],
            vec![TypeDistribution::dirac(3, 3); 3],
            vec![TypeDistribution::dirac(3, 1); 3],
        ])
        .unwrap();
        let mut rng = rng_from_seed(0);
        let out = step_type_change(&h, &g, &params, &mut rng);
        assert_eq!(out.type_of(0), 3);
        assert_eq!(out.type_of(3), 1);
        // matched agents follow the Dirac kernels
        assert_eq!(out.type_of(1), 2);
        assert_eq!(out.type_of(2), 3);
    }

    #[test]
    fn nothing_changes_when_frozen() {
        let mut params = hardy_weinberg_params::<f64>();
        params.q = NoMatchVectorOf::new(vec![1.0, 1.0]).unwrap();
        let run = run_dynamics(&params, 10, 1, 123).unwrap();
        let init = init_population(&params.p0, 10, params.types);
        assert_eq!(run.traces[0].alpha.labels(), init.labels());
    }

    #[test]
    fn traces_internally_consistent() {
        let params = crate::presets::generic_k3_params();
        let run = run_dynamics(&params, 60, 4, 99).unwrap();
        let mut prev = init_population(&params.p0, 60, params.types);
        for trace in &run.traces {
            trace.matching.check(false).unwrap();
            for i in 0..60 {
                match trace.matching.partner(i) {
                    None => assert_eq!(trace.g.partner_type(i), None),
                    Some(j) => {
                        assert_eq!(trace.g.partner_type(i), Some(trace.h.type_of(j)));
                        assert_eq!(trace.g.partner_type(j), Some(trace.h.type_of(i)));
                    }
                }
            }
            let sum: f64 = trace.empirical.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            prev = trace.alpha.clone();
        }
        let _ = prev;
    }

    #[test]
    fn runs_are_bit_deterministic() {
        let params = crate::presets::generic_k3_params();
        let a = run_dynamics(&params, 200, 3, 7).unwrap();
        let b = run_dynamics(&params, 200, 3, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replications_order_independent_of_parallelism() {
        let params = crate::presets::generic_k3_params();
        let a = run_replications_empirical(&params, 100, 2, 5, 8).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_replications_empirical(&params, 100, 2, 5, 8).unwrap());
        assert_eq!(a, b);
    }
}
