//! Uniform full-matching and type-stratified partial-matching samplers.
//!
//! Draw protocol (fixed so that a seed reproduces traces bit-exactly):
//! the full-matching sampler repeatedly takes the lowest-indexed unmatched
//! agent and consumes one uniform integer in `0..remaining-1` to pick its
//! partner among the other unmatched agents. The partial sampler first
//! consumes, per type in label order, `m_k` uniform integers to pick the
//! unmatched subset (partial Fisher-Yates), then runs the full-matching
//! protocol on the matched remainder.

use thiserror::Error;

use crate::model::{Matching, MatchedTypeOutcome, NoMatchVectorOf, Population, TypeSpace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("population size {n} is odd; no perfect matching exists")]
    OddPopulation { n: usize },
    #[error("plan does not match population: {what}")]
    PlanMismatch { what: String },
    #[error("invalid plan: {what}")]
    BadPlan { what: String },
}

/// Removable set of agent indices with O(1) uniform selection.
struct FreeSet {
    members: Vec<usize>,
    // position of each agent in `members`, or usize::MAX when absent
    pos: Vec<usize>,
}

impl FreeSet {
    fn new(agents: &[usize], universe: usize) -> Self {
        let mut pos = vec![usize::MAX; universe];
        for (p, &a) in agents.iter().enumerate() {
            pos[a] = p;
        }
        Self {
            members: agents.to_vec(),
            pos,
        }
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn remove(&mut self, agent: usize) {
        let p = self.pos[agent];
        debug_assert!(p != usize::MAX);
        let last = *self.members.last().expect("non-empty");
        self.members.swap_remove(p);
        self.pos[agent] = usize::MAX;
        if last != agent {
            self.pos[last] = p;
        }
    }

    fn nth(&self, p: usize) -> usize {
        self.members[p]
    }
}

/// Pair up the given agents (ascending indices) uniformly at random,
/// writing into `partner`. One uniform integer draw per pair formed.
pub(crate) fn pair_uniformly(
    agents: &[usize],
    partner: &mut [Option<usize>],
    rng: &mut impl rand::Rng,
) {
    debug_assert!(agents.len() % 2 == 0);
    if agents.is_empty() {
        return;
    }
    let universe = partner.len();
    let mut free = FreeSet::new(agents, universe);
    for &i in agents {
        if partner[i].is_some() {
            continue;
        }
        free.remove(i);
        let r = rng.gen_range(0..free.len());
        let j = free.nth(r);
        free.remove(j);
        partner[i] = Some(j);
        partner[j] = Some(i);
    }
}

/// Sample a matching distributed uniformly over all `(N-1)!!` perfect
/// matchings on `n` agents via the sequential pairing procedure.
pub fn sample_full_matching(n: usize, rng: &mut impl rand::Rng) -> Result<Matching, SamplerError> {
    if n < 2 || n % 2 != 0 {
        return Err(SamplerError::OddPopulation { n });
    }
    let mut partner = vec![None; n];
    let agents: Vec<usize> = (0..n).collect();
    pair_uniformly(&agents, &mut partner, rng);
    Ok(Matching::from_partners_unchecked(partner))
}

/// Cross-check sampler: shuffle all agents uniformly, then pair consecutive
/// entries. Induces the same uniform distribution over perfect matchings as
/// [`sample_full_matching`], through a different draw sequence.
pub fn sample_full_matching_shuffle(
    n: usize,
    rng: &mut impl rand::Rng,
) -> Result<Matching, SamplerError> {
    if n < 2 || n % 2 != 0 {
        return Err(SamplerError::OddPopulation { n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Fisher-Yates
    for t in 0..n - 1 {
        let r = rng.gen_range(t..n);
        order.swap(t, r);
    }
    let mut partner = vec![None; n];
    for pair in order.chunks_exact(2) {
        partner[pair[0]] = Some(pair[1]);
        partner[pair[1]] = Some(pair[0]);
    }
    Ok(Matching::from_partners_unchecked(partner))
}

/// Per-type unmatched counts `m` and per-type totals `M` for a partial
/// matching round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialMatchingPlan {
    per_type_count: Vec<usize>,
    per_type_unmatched: Vec<usize>,
}

impl PartialMatchingPlan {
    pub fn new(per_type_count: Vec<usize>, per_type_unmatched: Vec<usize>) -> Result<Self, SamplerError> {
        if per_type_count.len() != per_type_unmatched.len() {
            return Err(SamplerError::BadPlan {
                what: format!(
                    "M has {} types, m has {}",
                    per_type_count.len(),
                    per_type_unmatched.len()
                ),
            });
        }
        for (k, (&cap, &m)) in per_type_count.iter().zip(&per_type_unmatched).enumerate() {
            if m > cap {
                return Err(SamplerError::BadPlan {
                    what: format!("m_{} = {m} exceeds M_{} = {cap}", k + 1, k + 1),
                });
            }
        }
        let matched: usize = per_type_count
            .iter()
            .zip(&per_type_unmatched)
            .map(|(&cap, &m)| cap - m)
            .sum();
        if matched % 2 != 0 {
            return Err(SamplerError::BadPlan {
                what: format!("matched total {matched} is odd"),
            });
        }
        Ok(Self {
            per_type_count,
            per_type_unmatched,
        })
    }

    /// `M_k` for the 1-based type label.
    pub fn count(&self, label: usize) -> usize {
        self.per_type_count[label - 1]
    }

    /// `m_k` for the 1-based type label.
    pub fn unmatched(&self, label: usize) -> usize {
        self.per_type_unmatched[label - 1]
    }

    pub fn counts(&self) -> &[usize] {
        &self.per_type_count
    }

    pub fn unmatched_counts(&self) -> &[usize] {
        &self.per_type_unmatched
    }

    pub fn matched_total(&self) -> usize {
        self.per_type_count
            .iter()
            .zip(&self.per_type_unmatched)
            .map(|(&cap, &m)| cap - m)
            .sum()
    }
}

/// Derive unmatched counts from no-match probabilities: `m_k` is the
/// half-up rounding of `q_k * M_k`, with a deterministic parity repair.
/// If the matched total comes out odd, the type with the largest matched
/// count (ties broken by smallest label) gives up one more agent. This
/// keeps `|m_k / M_k - q_k| <= 3 / (2 M_k)`.
pub fn plan_partial_matching(
    pop: &Population,
    q: &NoMatchVectorOf<f64>,
    space: TypeSpace,
) -> Result<PartialMatchingPlan, SamplerError> {
    let counts = pop.type_counts(space);
    if q.len() != counts.len() {
        return Err(SamplerError::BadPlan {
            what: format!("q has {} entries for {} types", q.len(), counts.len()),
        });
    }
    let mut m: Vec<usize> = counts
        .iter()
        .enumerate()
        .map(|(idx, &cap)| {
            let raw = (q.values()[idx] * cap as f64 + 0.5).floor() as usize;
            raw.min(cap)
        })
        .collect();
    let matched: usize = counts.iter().zip(&m).map(|(&cap, &mk)| cap - mk).sum();
    if matched % 2 != 0 {
        let mut repair = 0;
        let mut best = 0;
        for (k, (&cap, &mk)) in counts.iter().zip(&m).enumerate() {
            let matched_k = cap - mk;
            if matched_k > best {
                best = matched_k;
                repair = k;
            }
        }
        m[repair] += 1;
    }
    PartialMatchingPlan::new(counts, m)
}

/// Sample a partial matching: a uniformly chosen subset of `m_k` type-k
/// agents stays unmatched for each k, and the remainder gets a uniform
/// perfect matching. The subset choices and the pairing are independent.
pub fn sample_partial_matching(
    pop: &Population,
    plan: &PartialMatchingPlan,
    space: TypeSpace,
    rng: &mut impl rand::Rng,
) -> Result<Matching, SamplerError> {
    let counts = pop.type_counts(space);
    if counts != plan.counts() {
        return Err(SamplerError::PlanMismatch {
            what: format!(
                "population type counts {counts:?} differ from plan counts {:?}",
                plan.counts()
            ),
        });
    }
    let n = pop.len();
    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut matched_agents: Vec<usize> = Vec::with_capacity(plan.matched_total());
    // agents of each type in ascending index order
    let mut by_type: Vec<Vec<usize>> = vec![Vec::new(); space.count()];
    for (i, &t) in pop.labels().iter().enumerate() {
        by_type[t - 1].push(i);
    }
    let mut is_unmatched = vec![false; n];
    for (idx, agents) in by_type.iter_mut().enumerate() {
        let m_k = plan.unmatched_counts()[idx];
        let len = agents.len();
        // partial Fisher-Yates: the first m_k slots become the unmatched subset
        for t in 0..m_k {
            let r = rng.gen_range(t..len);
            agents.swap(t, r);
        }
        for &a in &agents[..m_k] {
            is_unmatched[a] = true;
        }
    }
    for i in 0..n {
        if !is_unmatched[i] {
            matched_agents.push(i);
        }
    }
    pair_uniformly(&matched_agents, &mut partner, rng);
    Ok(Matching::from_partners_unchecked(partner))
}

/// Partner types `g = h ∘ π`: the post-mutation type of each agent's
/// partner, `None` for unmatched agents.
pub fn matched_types(pop_after_mutation: &Population, matching: &Matching) -> MatchedTypeOutcome {
    let g = matching
        .partners()
        .iter()
        .map(|p| p.map(|j| pop_after_mutation.type_of(j)))
        .collect();
    MatchedTypeOutcome::from_types_unchecked(g)
}
