//! Core domain types: type space, distributions, kernels, populations and
//! matchings, plus parameter validation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{within_simplex_tol, Scalar};

/// The finite set of types `{1, ..., K}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeSpace {
    k: usize,
}

impl TypeSpace {
    pub fn new(k: usize) -> Result<Self, ValidationError> {
        if k == 0 {
            return Err(ValidationError::single(Violation::DimensionMismatch {
                what: "TypeSpace K must be at least 1".to_string(),
            }));
        }
        Ok(Self { k })
    }

    pub fn count(&self) -> usize {
        self.k
    }

    /// Iterator over the 1-based type labels.
    pub fn labels(&self) -> impl Iterator<Item = usize> {
        1..=self.k
    }
}

/// Probability vector over the K types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDistributionOf<T> {
    weights: Vec<T>,
}

impl<T: Scalar> TypeDistributionOf<T> {
    pub fn new(weights: Vec<T>) -> Result<Self, ValidationError> {
        let d = Self { weights };
        let mut v = Vec::new();
        d.check("distribution", &mut v);
        if v.is_empty() {
            Ok(d)
        } else {
            Err(ValidationError { violations: v })
        }
    }

    /// Construct without the simplex check. For intermediate arithmetic
    /// whose invariants are established by the caller.
    pub fn from_weights_unchecked(weights: Vec<T>) -> Self {
        Self { weights }
    }

    pub fn uniform(k: usize) -> Self {
        let w = T::one() / T::from_usize(k).expect("k fits scalar");
        Self {
            weights: vec![w; k],
        }
    }

    pub fn dirac(k: usize, at_label: usize) -> Self {
        let mut weights = vec![T::zero(); k];
        weights[at_label - 1] = T::one();
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weight of the 1-based type label.
    pub fn weight(&self, label: usize) -> &T {
        &self.weights[label - 1]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    fn check(&self, what: &str, out: &mut Vec<Violation>) {
        if self.weights.is_empty() {
            out.push(Violation::DimensionMismatch {
                what: format!("{what}: empty weight vector"),
            });
            return;
        }
        for (idx, w) in self.weights.iter().enumerate() {
            if *w < T::zero() || *w > T::one() {
                out.push(Violation::OutOfRange {
                    what: format!("{what}: weight for type {} is {:?}", idx + 1, w),
                });
            }
        }
        let sum = self
            .weights
            .iter()
            .fold(T::zero(), |acc, w| acc + w.clone());
        if !within_simplex_tol(&sum, &T::one()) {
            out.push(Violation::NonStochasticRow {
                what: format!("{what}: weights sum to {sum:?}, not 1"),
            });
        }
    }
}

/// Row-stochastic K x K mutation matrix; entry `(k, l)` is the probability
/// a type-k agent mutates to type l.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationMatrixOf<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> MutationMatrixOf<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self, ValidationError> {
        let m = Self { rows };
        let mut v = Vec::new();
        m.check(&mut v);
        if v.is_empty() {
            Ok(m)
        } else {
            Err(ValidationError { violations: v })
        }
    }

    pub fn identity(k: usize) -> Self {
        let rows = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if i == j { T::one() } else { T::zero() })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<T>>) -> Self {
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Mutation probability from 1-based label `from` to `to`.
    pub fn prob(&self, from: usize, to: usize) -> &T {
        &self.rows[from - 1][to - 1]
    }

    /// Row of the 1-based source label.
    pub fn row(&self, from: usize) -> &[T] {
        &self.rows[from - 1]
    }

    fn check(&self, out: &mut Vec<Violation>) {
        let k = self.rows.len();
        for (idx, row) in self.rows.iter().enumerate() {
            if row.len() != k {
                out.push(Violation::DimensionMismatch {
                    what: format!("mutation row {} has length {}, expected {k}", idx + 1, row.len()),
                });
                continue;
            }
            for (jdx, p) in row.iter().enumerate() {
                if *p < T::zero() || *p > T::one() {
                    out.push(Violation::OutOfRange {
                        what: format!("mutation entry ({}, {}) is {:?}", idx + 1, jdx + 1, p),
                    });
                }
            }
            let sum = row.iter().fold(T::zero(), |acc, p| acc + p.clone());
            if !within_simplex_tol(&sum, &T::one()) {
                out.push(Violation::NonStochasticRow {
                    what: format!("mutation row {} sums to {sum:?}", idx + 1),
                });
            }
        }
    }
}

/// Per-type no-match probabilities `q_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoMatchVectorOf<T> {
    q: Vec<T>,
}

impl<T: Scalar> NoMatchVectorOf<T> {
    pub fn new(q: Vec<T>) -> Result<Self, ValidationError> {
        let v = Self { q };
        let mut out = Vec::new();
        v.check(&mut out);
        if out.is_empty() {
            Ok(v)
        } else {
            Err(ValidationError { violations: out })
        }
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            q: vec![T::zero(); k],
        }
    }

    pub(crate) fn from_values_unchecked(q: Vec<T>) -> Self {
        Self { q }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// No-match probability of the 1-based type label.
    pub fn prob(&self, label: usize) -> &T {
        &self.q[label - 1]
    }

    pub fn values(&self) -> &[T] {
        &self.q
    }

    fn check(&self, out: &mut Vec<Violation>) {
        for (idx, p) in self.q.iter().enumerate() {
            if *p < T::zero() || *p > T::one() {
                out.push(Violation::OutOfRange {
                    what: format!("no-match probability q_{} is {:?}", idx + 1, p),
                });
            }
        }
    }
}

/// New-type distributions for matched agents: `nu[k][l]` is the law of the
/// new type of a type-k agent matched to a type-l agent. Unmatched agents
/// keep their type; that rule is implicit, not stored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchChangeKernelOf<T> {
    nu: Vec<Vec<TypeDistributionOf<T>>>,
}

impl<T: Scalar> MatchChangeKernelOf<T> {
    pub fn new(nu: Vec<Vec<TypeDistributionOf<T>>>) -> Result<Self, ValidationError> {
        let kernel = Self { nu };
        let mut out = Vec::new();
        kernel.check(&mut out);
        if out.is_empty() {
            Ok(kernel)
        } else {
            Err(ValidationError { violations: out })
        }
    }

    pub(crate) fn from_laws_unchecked(nu: Vec<Vec<TypeDistributionOf<T>>>) -> Self {
        Self { nu }
    }

    /// Kernel that keeps every agent's type unchanged.
    pub fn keep_type(k: usize) -> Self {
        let nu = (1..=k)
            .map(|own| (1..=k).map(|_| TypeDistributionOf::dirac(k, own)).collect())
            .collect();
        Self { nu }
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    /// New-type law for a 1-based `own` type meeting a 1-based `partner` type.
    pub fn law(&self, own: usize, partner: usize) -> &TypeDistributionOf<T> {
        &self.nu[own - 1][partner - 1]
    }

    fn check(&self, out: &mut Vec<Violation>) {
        let k = self.nu.len();
        for (kdx, row) in self.nu.iter().enumerate() {
            if row.len() != k {
                out.push(Violation::DimensionMismatch {
                    what: format!("nu row {} has {} entries, expected {k}", kdx + 1, row.len()),
                });
                continue;
            }
            for (ldx, dist) in row.iter().enumerate() {
                if dist.len() != k {
                    out.push(Violation::DimensionMismatch {
                        what: format!(
                            "nu[{}][{}] has {} weights, expected {k}",
                            kdx + 1,
                            ldx + 1,
                            dist.len()
                        ),
                    });
                }
                dist.check(&format!("nu[{}][{}]", kdx + 1, ldx + 1), out);
            }
        }
    }
}

/// The full parameter tuple `(p0, b, q, nu)` of the dynamical system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParamsOf<T> {
    pub types: TypeSpace,
    pub p0: TypeDistributionOf<T>,
    pub b: MutationMatrixOf<T>,
    pub q: NoMatchVectorOf<T>,
    pub nu: MatchChangeKernelOf<T>,
}

/// Validate every invariant of a parameter tuple, collecting all violations.
///
/// Idempotent: a validated tuple re-validates with identical contents.
pub fn validate_params<T: Scalar>(params: ModelParamsOf<T>) -> Result<ModelParamsOf<T>, ValidationError> {
    let mut out = Vec::new();
    let k = params.types.count();
    params.p0.check("p0", &mut out);
    if params.p0.len() != k {
        out.push(Violation::DimensionMismatch {
            what: format!("p0 has {} weights, expected K={k}", params.p0.len()),
        });
    }
    params.b.check(&mut out);
    if params.b.dim() != k {
        out.push(Violation::DimensionMismatch {
            what: format!("b has {} rows, expected K={k}", params.b.dim()),
        });
    }
    params.q.check(&mut out);
    if params.q.len() != k {
        out.push(Violation::DimensionMismatch {
            what: format!("q has {} entries, expected K={k}", params.q.len()),
        });
    }
    params.nu.check(&mut out);
    if params.nu.dim() != k {
        out.push(Violation::DimensionMismatch {
            what: format!("nu has {} rows, expected K={k}", params.nu.dim()),
        });
    }
    if out.is_empty() {
        Ok(params)
    } else {
        Err(ValidationError { violations: out })
    }
}

/// One invariant violation found during validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NonStochasticRow { what: String },
    OutOfRange { what: String },
    DimensionMismatch { what: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonStochasticRow { what } => write!(f, "non-stochastic row: {what}"),
            Violation::OutOfRange { what } => write!(f, "out of range: {what}"),
            Violation::DimensionMismatch { what } => write!(f, "dimension mismatch: {what}"),
        }
    }
}

/// Error report listing every violated invariant.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    fn single(v: Violation) -> Self {
        Self { violations: vec![v] }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} invariant violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Array of N agent type labels in `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    types: Vec<usize>,
}

impl Population {
    pub fn new(types: Vec<usize>, space: TypeSpace) -> Result<Self, PopulationError> {
        if types.is_empty() {
            return Err(PopulationError::Empty);
        }
        for (i, &t) in types.iter().enumerate() {
            if t == 0 || t > space.count() {
                return Err(PopulationError::BadLabel { agent: i, label: t });
            }
        }
        Ok(Self { types })
    }

    /// For internal construction where labels are known to be in range.
    pub(crate) fn from_labels_unchecked(types: Vec<usize>) -> Self {
        Self { types }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Type label of the 0-based agent index.
    pub fn type_of(&self, agent: usize) -> usize {
        self.types[agent]
    }

    pub fn labels(&self) -> &[usize] {
        &self.types
    }

    /// Count of agents per type, indexed by `label - 1`.
    pub fn type_counts(&self, space: TypeSpace) -> Vec<usize> {
        let mut counts = vec![0usize; space.count()];
        for &t in &self.types {
            counts[t - 1] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PopulationError {
    #[error("empty population")]
    Empty,
    #[error("agent {agent} has label {label}, outside 1..=K")]
    BadLabel { agent: usize, label: usize },
}

/// Normalized type counts of a population.
///
/// In floating point every weight is a multiple of `1/N` up to rounding;
/// with a rational scalar the weights are exact.
pub fn empirical_distribution<T: Scalar>(
    pop: &Population,
    space: TypeSpace,
) -> Result<TypeDistributionOf<T>, PopulationError> {
    if pop.is_empty() {
        return Err(PopulationError::Empty);
    }
    let n = T::from_usize(pop.len()).expect("N fits scalar");
    let weights = pop
        .type_counts(space)
        .into_iter()
        .map(|c| T::from_usize(c).expect("count fits scalar") / n.clone())
        .collect();
    Ok(TypeDistributionOf::from_weights_unchecked(weights))
}

/// A (possibly partial) matching: an involution on agent indices with the
/// unmatched state carried as an explicit `None` rather than the fixed-point
/// encoding. `partner[i] = Some(j)` means agents i and j are matched.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matching {
    partner: Vec<Option<usize>>,
}

impl Matching {
    pub fn new(partner: Vec<Option<usize>>) -> Result<Self, MatchingError> {
        let m = Self { partner };
        m.check(false)?;
        Ok(m)
    }

    /// As `new`, additionally requiring that no agent is unmatched.
    pub fn new_full(partner: Vec<Option<usize>>) -> Result<Self, MatchingError> {
        let m = Self { partner };
        m.check(true)?;
        Ok(m)
    }

    pub(crate) fn from_partners_unchecked(partner: Vec<Option<usize>>) -> Self {
        Self { partner }
    }

    pub fn len(&self) -> usize {
        self.partner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partner.is_empty()
    }

    /// Partner of the 0-based agent index, `None` when unmatched.
    pub fn partner(&self, agent: usize) -> Option<usize> {
        self.partner[agent]
    }

    pub fn partners(&self) -> &[Option<usize>] {
        &self.partner
    }

    pub fn is_full(&self) -> bool {
        self.partner.iter().all(|p| p.is_some())
    }

    /// O(N) invariant check: involution, no self-match, in-range indices.
    pub fn check(&self, require_full: bool) -> Result<(), MatchingError> {
        let n = self.partner.len();
        for (i, &p) in self.partner.iter().enumerate() {
            match p {
                None => {
                    if require_full {
                        return Err(MatchingError::NotFull { agent: i });
                    }
                }
                Some(j) => {
                    if j >= n {
                        return Err(MatchingError::OutOfRange { agent: i, partner: j });
                    }
                    if j == i {
                        return Err(MatchingError::SelfMatch { agent: i });
                    }
                    if self.partner[j] != Some(i) {
                        return Err(MatchingError::NotInvolution { agent: i, partner: j });
                    }
                }
            }
        }
        Ok(())
    }

    /// Fixed-point encoding: unmatched agents map to themselves. Handy
    /// as an involution for oracle cross-checks.
    pub fn to_involution(&self) -> Vec<usize> {
        self.partner
            .iter()
            .enumerate()
            .map(|(i, p)| p.unwrap_or(i))
            .collect()
    }

    /// Inverse of [`Matching::to_involution`].
    pub fn from_involution(sigma: &[usize]) -> Result<Self, MatchingError> {
        let partner = sigma
            .iter()
            .enumerate()
            .map(|(i, &j)| if i == j { None } else { Some(j) })
            .collect();
        Self::new(partner)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchingError {
    #[error("agent {agent} is matched to itself")]
    SelfMatch { agent: usize },
    #[error("agent {agent} points to {partner}, which does not point back")]
    NotInvolution { agent: usize, partner: usize },
    #[error("agent {agent} points to out-of-range index {partner}")]
    OutOfRange { agent: usize, partner: usize },
    #[error("agent {agent} is unmatched in full-matching mode")]
    NotFull { agent: usize },
}

/// Partner types: `g[i]` is the type of agent i's partner, or `None` when
/// agent i is unmatched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedTypeOutcome {
    g: Vec<Option<usize>>,
}

impl MatchedTypeOutcome {
    pub(crate) fn from_types_unchecked(g: Vec<Option<usize>>) -> Self {
        Self { g }
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn partner_type(&self, agent: usize) -> Option<usize> {
        self.g[agent]
    }

    pub fn values(&self) -> &[Option<usize>] {
        &self.g
    }
}

/// Per-period record of the dynamical system: post-mutation types `h`,
/// matching, partner types `g`, end-of-period types `alpha`, and the
/// cross-sectional distribution of `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodTrace {
    pub h: Population,
    pub matching: Matching,
    pub g: MatchedTypeOutcome,
    pub alpha: Population,
    pub empirical: TypeDistributionOf<f64>,
}
