//! Exhaustive enumeration oracle for small populations, in exact rational
//! arithmetic. Everything here is independent of the samplers: matchings
//! are enumerated, never drawn, and no floating point enters the module.

use num_bigint::BigInt;
use num_integer::binomial;
use num_rational::Ratio;
use num_traits::{One, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::Matching;

/// Reduced rational probability in `[0, 1]`.
pub type Exact = Ratio<BigInt>;

pub fn exact(num: i64, den: i64) -> Exact {
    Ratio::new(BigInt::from(num), BigInt::from(den))
}

/// Largest even N accepted by full enumeration; 11!! = 10395 matchings.
pub const MAX_FULL_N: usize = 12;

/// Cap on the partial-matching sample-space size.
pub const MAX_PARTIAL_SPACE: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("N = {n} is odd; no perfect matching exists")]
    OddPopulation { n: usize },
    #[error("enumeration bound exceeded: {what}")]
    TooLarge { what: String },
    #[error("agent {agent} paired with itself")]
    SelfPair { agent: usize },
    #[error("matched total {matched} is odd")]
    OddMatchedTotal { matched: usize },
    #[error("bad input: {what}")]
    BadInput { what: String },
}

/// `(n-1)!! = 1 * 3 * ... * (n-1)` for even n; the number of perfect
/// matchings on n agents. `n = 0` gives 1 (the empty matching).
pub fn matching_count(n: usize) -> BigInt {
    let mut acc = BigInt::one();
    let mut f = 1usize;
    while f < n {
        acc *= BigInt::from(f);
        f += 2;
    }
    acc
}

/// Visit every pairing of `agents` (must have even length, ascending
/// order) exactly once, in canonical order: the lowest remaining agent is
/// paired with each remaining candidate in ascending order.
fn for_each_pairing(agents: &[usize], visit: &mut impl FnMut(&[(usize, usize)])) {
    fn rec(
        remaining: &mut Vec<usize>,
        pairs: &mut Vec<(usize, usize)>,
        visit: &mut impl FnMut(&[(usize, usize)]),
    ) {
        if remaining.is_empty() {
            visit(pairs);
            return;
        }
        let first = remaining.remove(0);
        for idx in 0..remaining.len() {
            let j = remaining.remove(idx);
            pairs.push((first, j));
            rec(remaining, pairs, visit);
            pairs.pop();
            remaining.insert(idx, j);
        }
        remaining.insert(0, first);
    }
    let mut remaining = agents.to_vec();
    let mut pairs = Vec::with_capacity(agents.len() / 2);
    rec(&mut remaining, &mut pairs, visit);
}

/// All `(N-1)!!` perfect matchings on `n` agents, in canonical order.
pub fn enumerate_full_matchings(n: usize) -> Result<Vec<Matching>, OracleError> {
    if n % 2 != 0 || n == 0 {
        return Err(OracleError::OddPopulation { n });
    }
    if n > MAX_FULL_N {
        return Err(OracleError::TooLarge {
            what: format!("N = {n} exceeds full-enumeration bound {MAX_FULL_N}"),
        });
    }
    let agents: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for_each_pairing(&agents, &mut |pairs| {
        let mut partner = vec![None; n];
        for &(a, b) in pairs {
            partner[a] = Some(b);
            partner[b] = Some(a);
        }
        out.push(Matching::from_partners_unchecked(partner));
    });
    Ok(out)
}

/// Exact probability that a uniform perfect matching pairs `i` with `j`
/// (0-based agent indices). Equals `1/(N-1)` for every pair.
pub fn exact_pair_probability(n: usize, i: usize, j: usize) -> Result<Exact, OracleError> {
    if i == j {
        return Err(OracleError::SelfPair { agent: i });
    }
    check_agents(n, &[i, j])?;
    let matchings = enumerate_full_matchings(n)?;
    let hits = matchings.iter().filter(|m| m.partner(i) == Some(j)).count();
    Ok(Ratio::new(BigInt::from(hits), matching_count(n)))
}

/// Exact probability that a uniform perfect matching pairs `i` with `i2`
/// and `j` with `j2` simultaneously (`i != j` required).
pub fn exact_joint_probability(
    n: usize,
    i: usize,
    j: usize,
    i2: usize,
    j2: usize,
) -> Result<Exact, OracleError> {
    if i == j {
        return Err(OracleError::SelfPair { agent: i });
    }
    check_agents(n, &[i, j, i2, j2])?;
    let matchings = enumerate_full_matchings(n)?;
    let hits = matchings
        .iter()
        .filter(|m| m.partner(i) == Some(i2) && m.partner(j) == Some(j2))
        .count();
    Ok(Ratio::new(BigInt::from(hits), matching_count(n)))
}

/// Exact probability that agent `i`'s partner lands in the set `c`.
/// Equals `|C|/(N-1)` when `i` is outside `c`, `(|C|-1)/(N-1)` inside.
pub fn exact_set_probability(n: usize, i: usize, c: &[usize]) -> Result<Exact, OracleError> {
    check_agents(n, &[i])?;
    check_agents(n, c)?;
    let mut members = vec![false; n];
    for &a in c {
        members[a] = true;
    }
    let matchings = enumerate_full_matchings(n)?;
    let hits = matchings
        .iter()
        .filter(|m| m.partner(i).map(|j| members[j]).unwrap_or(false))
        .count();
    Ok(Ratio::new(BigInt::from(hits), matching_count(n)))
}

fn check_agents(n: usize, agents: &[usize]) -> Result<(), OracleError> {
    for &a in agents {
        if a >= n {
            return Err(OracleError::BadInput {
                what: format!("agent index {a} out of range for N = {n}"),
            });
        }
    }
    Ok(())
}

/// Outcome index for partial-space laws: 0 encodes J (unmatched),
/// `l >= 1` encodes partner type l.
pub fn outcome_index(g: Option<usize>) -> usize {
    g.unwrap_or(0)
}

/// Exact joint law of all partner-type pairs `(g_i, g_j)` over the full
/// partial-matching sample space: every choice of unmatched subsets
/// `(B_1, ..., B_K)` times every perfect matching of the remainder, all
/// equally likely.
///
/// The population layout is canonical: agents `0..M_1` have type 1, the
/// next `M_2` have type 2, and so on.
#[derive(Debug, Clone)]
pub struct PartialSpaceLaw {
    num_agents: usize,
    num_types: usize,
    total_points: BigInt,
    type_of: Vec<usize>,
    /// marginal[i][o]: sample points with outcome o for agent i
    marginal: Vec<Vec<u64>>,
    /// joint[pair_index(i, j)][o_i * (K+1) + o_j]
    joint: Vec<Vec<u64>>,
}

impl PartialSpaceLaw {
    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn total_points(&self) -> &BigInt {
        &self.total_points
    }

    pub fn type_of(&self, agent: usize) -> usize {
        self.type_of[agent]
    }

    fn pair_index(&self, i: usize, j: usize) -> (usize, bool) {
        debug_assert!(i != j);
        let (a, b, swapped) = if i < j { (i, j, false) } else { (j, i, true) };
        // index into the upper-triangle enumeration
        (a * self.num_agents - a * (a + 1) / 2 + (b - a - 1), swapped)
    }

    /// P(g_i = outcome) where outcome 0 is J and l >= 1 a type label.
    pub fn marginal_prob(&self, agent: usize, outcome: usize) -> Exact {
        Ratio::new(
            BigInt::from(self.marginal[agent][outcome]),
            self.total_points.clone(),
        )
    }

    /// P(g_i = oi, g_j = oj).
    pub fn joint_prob(&self, i: usize, j: usize, oi: usize, oj: usize) -> Exact {
        let (idx, swapped) = self.pair_index(i, j);
        let (a, b) = if swapped { (oj, oi) } else { (oi, oj) };
        Ratio::new(
            BigInt::from(self.joint[idx][a * (self.num_types + 1) + b]),
            self.total_points.clone(),
        )
    }

    /// Largest absolute deviation from the product of marginals over all
    /// agent pairs and outcome pairs.
    pub fn independence_defect(&self) -> Exact {
        let mut worst = Exact::zero();
        let w = self.num_types + 1;
        for i in 0..self.num_agents {
            for j in (i + 1)..self.num_agents {
                for oi in 0..w {
                    for oj in 0..w {
                        let joint = self.joint_prob(i, j, oi, oj);
                        let product = self.marginal_prob(i, oi) * self.marginal_prob(j, oj);
                        let defect = if joint >= product {
                            joint - product
                        } else {
                            product - joint
                        };
                        if defect > worst {
                            worst = defect;
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Size of the sample space `((N_matched - 1)!!) * prod_k C(M_k, m_k)`.
pub fn partial_space_size(type_counts: &[usize], unmatched_counts: &[usize]) -> BigInt {
    let matched: usize = type_counts
        .iter()
        .zip(unmatched_counts)
        .map(|(&cap, &m)| cap - m)
        .sum();
    let mut size = matching_count(matched);
    for (&cap, &m) in type_counts.iter().zip(unmatched_counts) {
        size *= binomial(BigInt::from(cap), BigInt::from(m));
    }
    size
}

pub fn enumerate_partial_space(
    type_counts: &[usize],
    unmatched_counts: &[usize],
) -> Result<PartialSpaceLaw, OracleError> {
    if type_counts.len() != unmatched_counts.len() {
        return Err(OracleError::BadInput {
            what: "M and m length mismatch".to_string(),
        });
    }
    for (k, (&cap, &m)) in type_counts.iter().zip(unmatched_counts).enumerate() {
        if m > cap {
            return Err(OracleError::BadInput {
                what: format!("m_{} = {m} exceeds M_{} = {cap}", k + 1, k + 1),
            });
        }
    }
    let matched: usize = type_counts
        .iter()
        .zip(unmatched_counts)
        .map(|(&cap, &m)| cap - m)
        .sum();
    if matched % 2 != 0 {
        return Err(OracleError::OddMatchedTotal { matched });
    }
    let size = partial_space_size(type_counts, unmatched_counts);
    if size > BigInt::from(MAX_PARTIAL_SPACE) {
        return Err(OracleError::TooLarge {
            what: format!("sample space has {size} points, cap {MAX_PARTIAL_SPACE}"),
        });
    }

    let n: usize = type_counts.iter().sum();
    let num_types = type_counts.len();
    let mut type_of = Vec::with_capacity(n);
    let mut blocks: Vec<Vec<usize>> = Vec::with_capacity(num_types);
    let mut next = 0usize;
    for (k, &cap) in type_counts.iter().enumerate() {
        let block: Vec<usize> = (next..next + cap).collect();
        for _ in 0..cap {
            type_of.push(k + 1);
        }
        next += cap;
        blocks.push(block);
    }

    // All (B_1, ..., B_K) tuples, as flat lists of unmatched agents.
    let mut subset_tuples: Vec<Vec<usize>> = vec![Vec::new()];
    for (k, block) in blocks.iter().enumerate() {
        let choices = k_subsets(block, unmatched_counts[k]);
        let mut grown = Vec::with_capacity(subset_tuples.len() * choices.len());
        for prefix in &subset_tuples {
            for choice in &choices {
                let mut tuple = prefix.clone();
                tuple.extend_from_slice(choice);
                grown.push(tuple);
            }
        }
        subset_tuples = grown;
    }

    let w = num_types + 1;
    let num_pairs = n * (n - 1) / 2;

    struct Counts {
        points: u64,
        marginal: Vec<Vec<u64>>,
        joint: Vec<Vec<u64>>,
    }

    let zero_counts = || Counts {
        points: 0,
        marginal: vec![vec![0u64; w]; n],
        joint: vec![vec![0u64; w * w]; num_pairs],
    };

    let merged = subset_tuples
        .par_iter()
        .map(|unmatched| {
            let mut acc = zero_counts();
            let mut is_unmatched = vec![false; n];
            for &a in unmatched {
                is_unmatched[a] = true;
            }
            let matched_agents: Vec<usize> =
                (0..n).filter(|&a| !is_unmatched[a]).collect();
            let mut g = vec![0usize; n];
            for_each_pairing(&matched_agents, &mut |pairs| {
                for &a in unmatched {
                    g[a] = 0;
                }
                for &(a, b) in pairs {
                    g[a] = type_of[b];
                    g[b] = type_of[a];
                }
                acc.points += 1;
                let mut pair_idx = 0usize;
                for i in 0..n {
                    acc.marginal[i][g[i]] += 1;
                    for j in (i + 1)..n {
                        acc.joint[pair_idx][g[i] * w + g[j]] += 1;
                        pair_idx += 1;
                    }
                }
            });
            acc
        })
        .reduce(zero_counts, |mut a, b| {
            a.points += b.points;
            for (ra, rb) in a.marginal.iter_mut().zip(&b.marginal) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
            for (ra, rb) in a.joint.iter_mut().zip(&b.joint) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
            a
        });

    debug_assert_eq!(BigInt::from(merged.points), size);
    Ok(PartialSpaceLaw {
        num_agents: n,
        num_types,
        total_points: size,
        type_of,
        marginal: merged.marginal,
        joint: merged.joint,
    })
}

/// Max over agent pairs and outcomes of
/// `|P(g_i = c, g_j = d) - P(g_i = c) P(g_j = d)|`, exactly.
pub fn finite_independence_defect(
    type_counts: &[usize],
    unmatched_counts: &[usize],
) -> Result<Exact, OracleError> {
    Ok(enumerate_partial_space(type_counts, unmatched_counts)?.independence_defect())
}

fn k_subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        let need = k - cur.len();
        for idx in start..=items.len().saturating_sub(need) {
            cur.push(items[idx]);
            rec(items, k, idx + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k == 0 {
        out.push(Vec::new());
        return out;
    }
    if k > items.len() {
        return out;
    }
    let mut cur = Vec::with_capacity(k);
    rec(items, k, 0, &mut cur, &mut out);
    out
}

/// Deterministic tab-separated golden report covering the closed-form
/// probabilities the oracle certifies. One record per (input, outcome,
/// numerator, denominator).
pub fn golden_report(max_n: usize) -> Result<String, OracleError> {
    use std::fmt::Write;

    let mut out = String::new();
    let mut n = 2;
    while n <= max_n.min(MAX_FULL_N) {
        let count = enumerate_full_matchings(n)?.len();
        writeln!(out, "matching_count\tN={n}\t-\t{count}\t1").unwrap();
        n += 2;
    }
    for n in [4usize, 6].into_iter().filter(|&n| n <= max_n) {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let p = exact_pair_probability(n, i, j)?;
                writeln!(out, "pair\tN={n}\ti={i},j={j}\t{}\t{}", p.numer(), p.denom()).unwrap();
            }
        }
    }
    if max_n >= 6 {
        for (i, j, i2, j2) in [(0, 1, 1, 0), (0, 1, 2, 2), (0, 1, 2, 3), (0, 1, 0, 2)] {
            let p = exact_joint_probability(6, i, j, i2, j2)?;
            writeln!(
                out,
                "joint\tN=6\ti={i},j={j},i2={i2},j2={j2}\t{}\t{}",
                p.numer(),
                p.denom()
            )
            .unwrap();
        }
        for (i, c) in [(0usize, vec![1usize, 2]), (0, vec![0, 1, 2]), (0, vec![])] {
            let p = exact_set_probability(6, i, &c)?;
            writeln!(out, "set\tN=6\ti={i},C={c:?}\t{}\t{}", p.numer(), p.denom()).unwrap();
        }
    }
    if max_n >= 8 {
        let law = enumerate_partial_space(&[4, 4], &[1, 1])?;
        writeln!(out, "partial_space\tM=[4,4],m=[1,1]\t-\t{}\t1", law.total_points()).unwrap();
        for outcome in 0..3 {
            let p = law.marginal_prob(0, outcome);
            writeln!(
                out,
                "partial_marginal\tM=[4,4],m=[1,1]\ti=0,g={outcome}\t{}\t{}",
                p.numer(),
                p.denom()
            )
            .unwrap();
        }
        let defect = law.independence_defect();
        writeln!(
            out,
            "partial_defect\tM=[4,4],m=[1,1]\t-\t{}\t{}",
            defect.numer(),
            defect.denom()
        )
        .unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_factorial_counts() {
        for (n, expect) in [(2usize, 1u64), (4, 3), (6, 15), (8, 105), (10, 945), (12, 10395)] {
            assert_eq!(matching_count(n), BigInt::from(expect));
            if n <= 8 {
                assert_eq!(enumerate_full_matchings(n).unwrap().len() as u64, expect);
            }
        }
        assert_eq!(matching_count(0), BigInt::one());
    }

    #[test]
    fn enumerated_matchings_distinct_and_valid() {
        let ms = enumerate_full_matchings(6).unwrap();
        for m in &ms {
            m.check(true).unwrap();
        }
        let mut seen: Vec<Vec<usize>> = ms.iter().map(|m| m.to_involution()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 15);
    }

    #[test]
    fn bounds_enforced() {
        assert!(matches!(
            enumerate_full_matchings(14),
            Err(OracleError::TooLarge { .. })
        ));
        assert!(matches!(
            enumerate_full_matchings(5),
            Err(OracleError::OddPopulation { n: 5 })
        ));
        assert!(matches!(
            enumerate_partial_space(&[3, 2], &[0, 0]),
            Err(OracleError::OddMatchedTotal { matched: 5 })
        ));
    }

    #[test]
    fn pair_probability_closed_form() {
        assert_eq!(exact_pair_probability(6, 0, 3).unwrap(), exact(1, 5));
        assert_eq!(exact_pair_probability(2, 0, 1).unwrap(), exact(1, 1));
        assert_eq!(exact_pair_probability(4, 1, 2).unwrap(), exact(1, 3));
        assert!(matches!(
            exact_pair_probability(4, 1, 1),
            Err(OracleError::SelfPair { agent: 1 })
        ));
    }

    #[test]
    fn joint_probability_three_cases() {
        // swap case
        assert_eq!(exact_joint_probability(6, 0, 1, 1, 0).unwrap(), exact(1, 5));
        // same target
        assert_eq!(exact_joint_probability(6, 0, 1, 2, 2).unwrap(), exact(0, 1));
        // completely distinct
        assert_eq!(exact_joint_probability(6, 0, 1, 2, 3).unwrap(), exact(1, 15));
    }

    #[test]
    fn set_probability_closed_form() {
        assert_eq!(exact_set_probability(6, 0, &[1, 2]).unwrap(), exact(2, 5));
        assert_eq!(exact_set_probability(6, 0, &[0, 1, 2]).unwrap(), exact(2, 5));
        assert_eq!(exact_set_probability(6, 0, &[]).unwrap(), exact(0, 1));
    }

    #[test]
    fn partial_space_all_unmatched() {
        let law = enumerate_partial_space(&[2, 2], &[2, 2]).unwrap();
        assert_eq!(law.total_points(), &BigInt::one());
        for i in 0..4 {
            assert_eq!(law.marginal_prob(i, 0), exact(1, 1));
        }
        assert_eq!(law.independence_defect(), Exact::zero());
    }

    #[test]
    fn partial_space_4_4_1_1() {
        let law = enumerate_partial_space(&[4, 4], &[1, 1]).unwrap();
        // C(4,1) * C(4,1) * 5!! = 240
        assert_eq!(law.total_points(), &BigInt::from(240u32));
        // agent 0 has type 1
        assert_eq!(law.marginal_prob(0, 0), exact(1, 4));
        assert_eq!(law.marginal_prob(0, 2), exact(9, 20));
        // remaining mass on own type
        assert_eq!(law.marginal_prob(0, 1), exact(3, 10));
    }

    #[test]
    fn partial_marginals_sum_to_one_exactly() {
        let law = enumerate_partial_space(&[3, 3, 2], &[1, 1, 0]).unwrap();
        for i in 0..law.num_agents() {
            let sum: Exact = (0..4).map(|o| law.marginal_prob(i, o)).sum();
            assert!(sum.is_one());
        }
        // joint laws too
        let sum: Exact = (0..4)
            .flat_map(|a| (0..4).map(move |b| (a, b)))
            .map(|(a, b)| law.joint_prob(0, 5, a, b))
            .sum();
        assert!(sum.is_one());
    }

    #[test]
    fn defect_zero_when_degenerate() {
        assert_eq!(
            finite_independence_defect(&[3, 1], &[3, 1]).unwrap(),
            Exact::zero()
        );
        // N = 2: single matching, but marginals are degenerate only per
        // pair; with two agents of one type the law is deterministic
        assert_eq!(
            finite_independence_defect(&[2], &[0]).unwrap(),
            Exact::zero()
        );
    }

    #[test]
    fn defect_shrinks_with_population() {
        let small = finite_independence_defect(&[4, 4], &[0, 0]).unwrap();
        let large = finite_independence_defect(&[8, 8], &[0, 0]).unwrap();
        assert!(small > Exact::zero());
        assert!(large < small);
    }

    #[test]
    fn full_matching_marginal_matches_eq8_analog() {
        // one-type partial space with nobody unmatched reduces to the
        // uniform full matching; P(g_i = 1) = 1
        let law = enumerate_partial_space(&[6], &[0]).unwrap();
        assert_eq!(law.marginal_prob(0, 1), exact(1, 1));
        assert_eq!(law.marginal_prob(0, 0), exact(0, 1));
    }

    #[test]
    fn golden_report_is_deterministic() {
        let a = golden_report(8).unwrap();
        let b = golden_report(8).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("matching_count\tN=6\t-\t15\t1"));
    }
}
