//! Statistical verification of the independence and distributional claims
//! at finite N: marginal laws, pairwise independence of partner types,
//! Markov conditional independence across the period stages, and the
//! per-realization cross-sectional product property.
//!
//! The continuum model predicts these exactly; at finite N the dependence
//! defect is O(1/N). Test sizes are chosen so sampling noise dominates the
//! defect, and the defect itself is measured exactly by the enumeration
//! oracle at small N.

pub mod chi2;

pub use chi2::{chi_square_pvalue, chi_square_statistic, Chi2Outcome, ContingencyTable};

use std::collections::HashMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{init_population, run_dynamics, ModelParams};
use crate::model::Matching;
use crate::rng::{replication_seed, rng_from_seed};
use crate::sampler::{
    matched_types, pair_uniformly, plan_partial_matching, sample_full_matching,
    sample_partial_matching, PartialMatchingPlan, SamplerError,
};

// Stream tags for auxiliary randomness (pair selection, subset selection),
// kept far away from replication indices.
const PAIRS_STREAM: u64 = u64::MAX;
const SUBSETS_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("population too small: {what}")]
    TooSmall { what: String },
}

/// One component chi-square test inside a report.
#[derive(Debug, Clone, Serialize)]
pub struct TestRecord {
    pub label: String,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub rejected: bool,
}

/// Aggregate rejection-rate report shared by the independence tests.
#[derive(Debug, Clone, Serialize)]
pub struct IndependenceReport {
    pub name: String,
    pub params_digest: String,
    pub alpha: f64,
    pub tests_run: usize,
    pub degenerate: usize,
    pub rejected: usize,
    pub rejection_fraction: f64,
    /// Null contract: `alpha + 4 sqrt(alpha (1 - alpha) / tests_run)`.
    pub threshold: f64,
    pub pass: bool,
    pub records: Vec<TestRecord>,
}

impl IndependenceReport {
    /// One tab-separated record per component test, plus a summary line.
    pub fn tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\t{}\t{:.6e}\t{}\n",
                self.name,
                self.params_digest,
                r.label,
                r.statistic,
                r.dof,
                r.p_value,
                if r.rejected { "reject" } else { "ok" }
            ));
        }
        out.push_str(&format!(
            "{}\t{}\tsummary\t{:.6}\t{}\t{:.6}\t{}\n",
            self.name,
            self.params_digest,
            self.rejection_fraction,
            self.tests_run,
            self.threshold,
            if self.pass { "pass" } else { "fail" }
        ));
        out
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn params_digest(params: &ModelParams, extra: &str) -> String {
    let json = serde_json::to_string(params).expect("params serialize");
    format!("{:016x}", fnv1a64(format!("{json}|{extra}").as_bytes()))
}

fn summarize(
    name: &str,
    digest: String,
    alpha: f64,
    records: Vec<TestRecord>,
    degenerate: usize,
    power_mode: bool,
) -> IndependenceReport {
    let tests_run = records.len();
    let rejected = records.iter().filter(|r| r.rejected).count();
    let rejection_fraction = if tests_run == 0 {
        0.0
    } else {
        rejected as f64 / tests_run as f64
    };
    let threshold = if tests_run == 0 {
        alpha
    } else {
        alpha + 4.0 * (alpha * (1.0 - alpha) / tests_run as f64).sqrt()
    };
    let pass = if power_mode {
        rejection_fraction >= 0.9
    } else {
        tests_run == 0 || rejection_fraction <= threshold
    };
    IndependenceReport {
        name: name.to_string(),
        params_digest: digest,
        alpha,
        tests_run,
        degenerate,
        rejected,
        rejection_fraction,
        threshold,
        pass,
        records,
    }
}

fn outcome_of(g: Option<usize>) -> usize {
    g.unwrap_or(0)
}

/// Test pairwise independence of partner types `(g_i, g_j)` across fresh
/// matching draws on a fixed population.
///
/// `planted` switches to the power check: with the given probability each
/// tested pair is matched together directly (the rest uniformly), a
/// violation the test must reject on at least 90% of pairs. Planted mode
/// requires `q = 0` and disjoint tested pairs.
pub fn pairwise_independence_test(
    params: &ModelParams,
    n: usize,
    replications: usize,
    pair_sample: usize,
    alpha: f64,
    seed: u64,
    planted: Option<f64>,
) -> Result<IndependenceReport, HarnessError> {
    let space = params.types;
    let k = space.count();
    let pop = init_population(&params.p0, n, space);
    let plan = plan_partial_matching(&pop, &params.q, space)?;

    let mut pair_rng = rng_from_seed(replication_seed(seed, PAIRS_STREAM));
    let pairs: Vec<(usize, usize)> = if planted.is_some() {
        // disjoint pairs so every one can be forced simultaneously
        if 2 * pair_sample > n {
            return Err(HarnessError::TooSmall {
                what: format!("{pair_sample} disjoint pairs need {} agents", 2 * pair_sample),
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        for t in 0..2 * pair_sample {
            let r = pair_rng.gen_range(t..n);
            order.swap(t, r);
        }
        order[..2 * pair_sample]
            .chunks_exact(2)
            .map(|c| (c[0], c[1]))
            .collect()
    } else {
        (0..pair_sample)
            .map(|_| {
                let i = pair_rng.gen_range(0..n);
                let mut j = pair_rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            })
            .collect()
    };

    let tables = (0..replications)
        .into_par_iter()
        .fold(
            || vec![ContingencyTable::zeros(k + 1, k + 1); pairs.len()],
            |mut acc, r| {
                let mut rng = rng_from_seed(replication_seed(seed, r as u64));
                let matching = match planted {
                    None => sample_partial_matching(&pop, &plan, space, &mut rng)
                        .expect("plan is consistent"),
                    Some(prob) => {
                        if rng.gen::<f64>() < prob {
                            let mut partner = vec![None; n];
                            for &(i, j) in &pairs {
                                partner[i] = Some(j);
                                partner[j] = Some(i);
                            }
                            let rest: Vec<usize> =
                                (0..n).filter(|a| partner[*a].is_none()).collect();
                            pair_uniformly(&rest, &mut partner, &mut rng);
                            Matching::from_partners_unchecked(partner)
                        } else {
                            sample_full_matching(n, &mut rng).expect("even N")
                        }
                    }
                };
                let g = matched_types(&pop, &matching);
                for (table, &(i, j)) in acc.iter_mut().zip(&pairs) {
                    table.add(outcome_of(g.partner_type(i)), outcome_of(g.partner_type(j)));
                }
                acc
            },
        )
        .reduce(
            || vec![ContingencyTable::zeros(k + 1, k + 1); pairs.len()],
            |mut a, b| {
                for (ta, tb) in a.iter_mut().zip(&b) {
                    ta.merge(tb);
                }
                a
            },
        );

    let mut records = Vec::new();
    let mut degenerate = 0usize;
    for (table, &(i, j)) in tables.iter().zip(&pairs) {
        match chi_square_statistic(table).expect("non-empty table") {
            Chi2Outcome::Degenerate | Chi2Outcome::InsufficientCells => degenerate += 1,
            Chi2Outcome::Tested { statistic, dof, p_value } => records.push(TestRecord {
                label: format!("pair_{i}_{j}"),
                statistic,
                dof,
                p_value,
                rejected: p_value < alpha,
            }),
        }
    }
    let digest = params_digest(params, &format!("pairwise:N={n},R={replications}"));
    Ok(summarize(
        "pairwise_independence",
        digest,
        alpha,
        records,
        degenerate,
        planted.is_some(),
    ))
}

/// Per-outcome check of one type's marginal report.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalOutcomeRecord {
    /// "J" or the partner type label.
    pub outcome: String,
    pub expected: f64,
    pub observed: f64,
    pub standard_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginalTypeRecord {
    pub type_label: usize,
    pub outcomes: Vec<MarginalOutcomeRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginalReport {
    pub name: String,
    pub params_digest: String,
    pub replications: usize,
    pub per_type: Vec<MarginalTypeRecord>,
    pub max_abs_deviation: f64,
    pub pass: bool,
}

/// Exact per-draw law of a tagged type-k agent's partner type under the
/// stratified sampler: J with probability `m_k / M_k`, type l with
/// probability `(M_k - m_k)/M_k * (M_l - m_l - [l = k])/(N_matched - 1)`.
pub fn exact_marginal(plan: &PartialMatchingPlan, own_type: usize, k: usize) -> Vec<f64> {
    let cap = plan.count(own_type) as f64;
    let matched_total = plan.matched_total() as f64;
    let mut probs = vec![0.0; k + 1];
    if plan.count(own_type) == 0 {
        return probs;
    }
    let p_unmatched = plan.unmatched(own_type) as f64 / cap;
    probs[0] = p_unmatched;
    if matched_total < 2.0 {
        return probs;
    }
    for l in 1..=k {
        let mut avail = (plan.count(l) - plan.unmatched(l)) as f64;
        if l == own_type {
            avail -= 1.0;
        }
        probs[l] = (1.0 - p_unmatched) * avail / (matched_total - 1.0);
    }
    probs
}

/// Compare a tagged agent's empirical partner-type frequencies per type
/// against the exact per-draw law, at 4 binomial standard errors.
pub fn marginal_law_test(
    params: &ModelParams,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<MarginalReport, HarnessError> {
    let space = params.types;
    let k = space.count();
    let pop = init_population(&params.p0, n, space);
    let plan = plan_partial_matching(&pop, &params.q, space)?;

    // first agent of each nonempty type (block layout of init_population)
    let mut tagged: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    for label in 1..=k {
        let cap = plan.count(label);
        if cap > 0 {
            tagged.push((label, start));
        }
        start += cap;
    }

    let counts = (0..replications)
        .into_par_iter()
        .fold(
            || vec![vec![0u64; k + 1]; tagged.len()],
            |mut acc, r| {
                let mut rng = rng_from_seed(replication_seed(seed, r as u64));
                let matching = if plan.matched_total() == 0 {
                    Matching::from_partners_unchecked(vec![None; n])
                } else {
                    sample_partial_matching(&pop, &plan, space, &mut rng)
                        .expect("plan is consistent")
                };
                let g = matched_types(&pop, &matching);
                for (row, &(_, agent)) in acc.iter_mut().zip(&tagged) {
                    row[outcome_of(g.partner_type(agent))] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![vec![0u64; k + 1]; tagged.len()],
            |mut a, b| {
                for (ra, rb) in a.iter_mut().zip(&b) {
                    for (x, y) in ra.iter_mut().zip(rb) {
                        *x += y;
                    }
                }
                a
            },
        );

    let mut per_type = Vec::new();
    let mut max_dev: f64 = 0.0;
    let mut pass = true;
    for (row, &(label, _)) in counts.iter().zip(&tagged) {
        let expected = exact_marginal(&plan, label, k);
        let mut outcomes = Vec::new();
        for o in 0..=k {
            let p = expected[o];
            let observed = row[o] as f64 / replications as f64;
            let se = (p * (1.0 - p) / replications as f64).sqrt();
            let dev = (observed - p).abs();
            max_dev = max_dev.max(dev);
            let ok = if p == 0.0 || p == 1.0 {
                observed == p
            } else {
                dev <= 4.0 * se
            };
            pass &= ok;
            outcomes.push(MarginalOutcomeRecord {
                outcome: if o == 0 { "J".to_string() } else { o.to_string() },
                expected: p,
                observed,
                standard_error: se,
                pass: ok,
            });
        }
        per_type.push(MarginalTypeRecord {
            type_label: label,
            outcomes,
        });
    }
    let digest = params_digest(params, &format!("marginal:N={n},R={replications}"));
    Ok(MarginalReport {
        name: "marginal_law".to_string(),
        params_digest: digest,
        replications,
        per_type,
        max_abs_deviation: max_dev,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossSectionReport {
    pub name: String,
    pub n: usize,
    pub draws: usize,
    pub subset_pairs: usize,
    pub max_deviation: f64,
    /// `5 / sqrt(N)`.
    pub bound: f64,
    pub pass: bool,
}

/// Per-realization cross-sectional product property of a uniform full
/// matching: for index sets A1, A2,
/// `frac(A1 ∩ π^{-1}(A2)) ≈ frac(A1) frac(A2)` in every single draw.
pub fn cross_section_product_test(
    n: usize,
    draws: usize,
    subset_pairs: usize,
    seed: u64,
) -> Result<CrossSectionReport, HarnessError> {
    if n < 2 || n % 2 != 0 {
        return Err(HarnessError::Sampler(SamplerError::OddPopulation { n }));
    }
    // subsets of measure ~0.3-0.7, drawn once
    let mut subset_rng = rng_from_seed(replication_seed(seed, SUBSETS_STREAM));
    let subsets: Vec<(Vec<bool>, Vec<bool>)> = (0..subset_pairs)
        .map(|_| {
            let draw_set = |rng: &mut crate::rng::Rng| {
                let theta = 0.3 + 0.4 * rng.gen::<f64>();
                (0..n).map(|_| rng.gen::<f64>() < theta).collect::<Vec<bool>>()
            };
            (draw_set(&mut subset_rng), draw_set(&mut subset_rng))
        })
        .collect();

    let max_deviation = (0..draws)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(replication_seed(seed, r as u64));
            let matching = sample_full_matching(n, &mut rng).expect("even N");
            let mut worst: f64 = 0.0;
            for (a1, a2) in &subsets {
                let frac1 = a1.iter().filter(|&&x| x).count() as f64 / n as f64;
                let frac2 = a2.iter().filter(|&&x| x).count() as f64 / n as f64;
                let inter = (0..n)
                    .filter(|&i| a1[i] && a2[matching.partner(i).expect("full matching")])
                    .count() as f64
                    / n as f64;
                worst = worst.max((inter - frac1 * frac2).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);

    let bound = 5.0 / (n as f64).sqrt();
    Ok(CrossSectionReport {
        name: "cross_section_product".to_string(),
        n,
        draws,
        subset_pairs,
        max_deviation,
        bound,
        pass: max_deviation <= bound,
    })
}

// Conditional-independence stages of the period, each conditioning on the
// immediately preceding stage only.
const STAGE_NAMES: [&str; 3] = ["mutation", "matching", "type_change"];

type CiKey = (u8, u16, u8, u32); // (stage, pair, period, conditioning cell)

/// Test Markov conditional independence across the three period stages for
/// sampled agent pairs: mutation outcomes given previous types, partner
/// types given post-mutation types, and end-of-period types given both.
/// Conditioning is on the most recent stage only, not the full history.
pub fn markov_ci_test(
    params: &ModelParams,
    n: usize,
    periods: usize,
    replications: usize,
    pair_sample: usize,
    alpha: f64,
    seed: u64,
) -> Result<IndependenceReport, HarnessError> {
    let space = params.types;
    let k = space.count();
    let w = k + 1;

    let mut pair_rng = rng_from_seed(replication_seed(seed, PAIRS_STREAM));
    let pairs: Vec<(usize, usize)> = (0..pair_sample)
        .map(|_| {
            let i = pair_rng.gen_range(0..n);
            let mut j = pair_rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect();

    let merged: HashMap<CiKey, ContingencyTable> = (0..replications)
        .into_par_iter()
        .fold(
            HashMap::new,
            |mut acc: HashMap<CiKey, ContingencyTable>, r| {
                let run = run_dynamics(params, n, periods, replication_seed(seed, r as u64))
                    .expect("consistent run");
                let mut alpha_prev = init_population(&params.p0, n, space);
                for (period, trace) in run.traces.iter().enumerate() {
                    for (p_idx, &(i, j)) in pairs.iter().enumerate() {
                        let (ai, aj) = (alpha_prev.type_of(i), alpha_prev.type_of(j));
                        let (hi, hj) = (trace.h.type_of(i), trace.h.type_of(j));
                        let (gi, gj) = (
                            outcome_of(trace.g.partner_type(i)),
                            outcome_of(trace.g.partner_type(j)),
                        );
                        let (ni, nj) = (trace.alpha.type_of(i), trace.alpha.type_of(j));
                        let entries: [(u8, u32, usize, usize, usize); 3] = [
                            (0, ((ai - 1) * k + (aj - 1)) as u32, hi - 1, hj - 1, k),
                            (1, ((hi - 1) * k + (hj - 1)) as u32, gi, gj, w),
                            (
                                2,
                                (((hi - 1) * w + gi) * k * w + (hj - 1) * w + gj) as u32,
                                ni - 1,
                                nj - 1,
                                k,
                            ),
                        ];
                        for (stage, key, row, col, dim) in entries {
                            acc.entry((stage, p_idx as u16, period as u8, key))
                                .or_insert_with(|| ContingencyTable::zeros(dim, dim))
                                .add(row, col);
                        }
                    }
                    alpha_prev = trace.alpha.clone();
                }
                acc
            },
        )
        .reduce(HashMap::new, |mut a, b| {
            for (key, table) in b {
                match a.get_mut(&key) {
                    Some(existing) => existing.merge(&table),
                    None => {
                        a.insert(key, table);
                    }
                }
            }
            a
        });

    let mut keys: Vec<&CiKey> = merged.keys().collect();
    keys.sort();
    let mut records = Vec::new();
    let mut degenerate = 0usize;
    for key in keys {
        let table = &merged[key];
        match chi_square_statistic(table).expect("non-empty table") {
            Chi2Outcome::Degenerate | Chi2Outcome::InsufficientCells => degenerate += 1,
            Chi2Outcome::Tested { statistic, dof, p_value } => {
                let (stage, pair, period, cell) = key;
                records.push(TestRecord {
                    label: format!(
                        "{}_pair{}_t{}_cell{}",
                        STAGE_NAMES[*stage as usize],
                        pair,
                        period + 1,
                        cell
                    ),
                    statistic,
                    dof,
                    p_value,
                    rejected: p_value < alpha,
                });
            }
        }
    }
    let digest = params_digest(
        params,
        &format!("markov_ci:N={n},T={periods},R={replications}"),
    );
    Ok(summarize("markov_ci", digest, alpha, records, degenerate, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatchChangeKernelOf, MutationMatrixOf, NoMatchVectorOf, TypeDistributionOf, TypeSpace};
    use crate::presets::hardy_weinberg_params;

    fn balanced_two_type() -> ModelParams {
        let mut params = hardy_weinberg_params::<f64>();
        params.p0 = TypeDistributionOf::new(vec![0.5, 0.5]).unwrap();
        params
    }

    #[test]
    fn pairwise_null_small() {
        let params = balanced_two_type();
        let report =
            pairwise_independence_test(&params, 200, 2000, 10, 0.01, 42, None).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.tests_run > 0);
    }

    #[test]
    fn pairwise_degenerate_single_type() {
        let types = TypeSpace::new(1).unwrap();
        let params = ModelParams {
            types,
            p0: TypeDistributionOf::new(vec![1.0]).unwrap(),
            b: MutationMatrixOf::identity(1),
            q: NoMatchVectorOf::zeros(1),
            nu: MatchChangeKernelOf::keep_type(1),
        };
        let report = pairwise_independence_test(&params, 100, 200, 5, 0.01, 1, None).unwrap();
        assert_eq!(report.tests_run, 0);
        assert_eq!(report.degenerate, 5);
        assert!(report.pass);
    }

    #[test]
    fn pairwise_power_small() {
        let params = balanced_two_type();
        let report =
            pairwise_independence_test(&params, 200, 2000, 10, 0.01, 7, Some(0.5)).unwrap();
        assert!(
            report.rejection_fraction >= 0.9,
            "power too low: {}",
            report.rejection_fraction
        );
        assert!(report.pass);
    }

    #[test]
    fn marginal_law_all_unmatched() {
        let mut params = balanced_two_type();
        params.q = NoMatchVectorOf::new(vec![1.0, 1.0]).unwrap();
        let report = marginal_law_test(&params, 50, 500, 3).unwrap();
        assert!(report.pass, "{report:?}");
        assert_eq!(report.max_abs_deviation, 0.0);
    }

    #[test]
    fn marginal_law_mixed_q() {
        let mut params = balanced_two_type();
        params.q = NoMatchVectorOf::new(vec![0.5, 0.0]).unwrap();
        let report = marginal_law_test(&params, 1000, 20_000, 11).unwrap();
        assert!(report.pass, "{report:?}");
        // type-1 tagged agent: J frequency near 0.5, partner type 2 near 1/3
        let t1 = &report.per_type[0];
        assert!((t1.outcomes[0].expected - 0.5).abs() < 0.01);
        assert!((t1.outcomes[2].expected - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn marginal_law_hardy_weinberg() {
        let params = hardy_weinberg_params::<f64>();
        let report = marginal_law_test(&params, 1000, 20_000, 5).unwrap();
        assert!(report.pass, "{report:?}");
        for t in &report.per_type {
            assert!((t.outcomes[1].expected - 0.6).abs() < 0.01, "{t:?}");
        }
    }

    #[test]
    fn cross_section_small_null() {
        let report = cross_section_product_test(10_000, 20, 5, 9).unwrap();
        assert!(report.pass, "max {} bound {}", report.max_deviation, report.bound);
    }

    #[test]
    fn markov_ci_small_null() {
        let params = crate::presets::generic_k3_params();
        let report = markov_ci_test(&params, 500, 2, 2000, 5, 0.01, 23).unwrap();
        assert!(report.pass, "{}", report.tsv());
    }

    #[test]
    fn markov_ci_mutation_stage_degenerate_without_mutation() {
        let params = balanced_two_type(); // b = identity
        let report = markov_ci_test(&params, 200, 1, 500, 4, 0.01, 2).unwrap();
        // stage (a) tables are diagonal-degenerate and must be skipped
        assert!(report.records.iter().all(|r| !r.label.starts_with("mutation_")));
        assert!(report.degenerate > 0);
    }

    #[test]
    fn reports_deterministic() {
        let params = balanced_two_type();
        let a = pairwise_independence_test(&params, 100, 500, 5, 0.05, 3, None).unwrap();
        let b = pairwise_independence_test(&params, 100, 500, 5, 0.05, 3, None).unwrap();
        assert_eq!(a.tsv(), b.tsv());
    }
}
