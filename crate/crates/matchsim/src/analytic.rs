//! Deterministic evolution of the cross-sectional type distribution in the
//! large-population limit: mutation push-forward, the matching law, the
//! per-period agent transition matrix, iteration and steady states.

use std::fmt;

use crate::model::{ModelParamsOf, MutationMatrixOf, NoMatchVectorOf, TypeDistributionOf};
use crate::scalar::Scalar;

/// Conditional law of the partner type given own post-mutation type:
/// `to_type[k][l]` is the probability a type-k agent meets a type-l agent,
/// `to_none[k]` the probability it stays unmatched.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchLawOf<T> {
    to_type: Vec<Vec<T>>,
    to_none: Vec<T>,
}

impl<T: Scalar> MatchLawOf<T> {
    /// Meeting probability for 1-based labels.
    pub fn to_type(&self, own: usize, partner: usize) -> &T {
        &self.to_type[own - 1][partner - 1]
    }

    pub fn to_none(&self, own: usize) -> &T {
        &self.to_none[own - 1]
    }

    pub fn dim(&self) -> usize {
        self.to_none.len()
    }
}

/// Row-stochastic one-period transition matrix: `gamma[k][r]` is the
/// probability an agent of type k at period start ends the period as type
/// r, given the current population distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodTransitionOf<T> {
    gamma: Vec<Vec<T>>,
}

impl<T: Scalar> PeriodTransitionOf<T> {
    pub fn prob(&self, from: usize, to: usize) -> &T {
        &self.gamma[from - 1][to - 1]
    }

    pub fn row(&self, from: usize) -> &[T] {
        &self.gamma[from - 1]
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticError<T> {
    /// Accumulated numerical drift off the simplex; an implementation bug,
    /// not a model state.
    SimplexDrift { period: usize, deviation: T },
    NonConvergence { last: Vec<T>, residual: T },
}

impl<T: fmt::Debug> fmt::Display for AnalyticError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalyticError::SimplexDrift { period, deviation } => write!(
                f,
                "simplex drift {deviation:?} at period {period} exceeds the guard"
            ),
            AnalyticError::NonConvergence { last, residual } => write!(
                f,
                "fixed-point iteration did not converge; last iterate {last:?}, residual {residual:?}"
            ),
        }
    }
}

impl<T: fmt::Debug> std::error::Error for AnalyticError<T> {}

/// Expected cross-sectional distribution after mutation:
/// `p_bar_l = sum_k p_k b_kl` (row vector times matrix).
pub fn mutation_push<T: Scalar>(
    p: &TypeDistributionOf<T>,
    b: &MutationMatrixOf<T>,
) -> TypeDistributionOf<T> {
    let k = p.len();
    let weights = (1..=k)
        .map(|l| {
            (1..=k).fold(T::zero(), |acc, from| {
                acc + p.weight(from).clone() * b.prob(from, l).clone()
            })
        })
        .collect();
    TypeDistributionOf::from_weights_unchecked(weights)
}

/// Matching law given the post-mutation distribution: unmatched with
/// probability `q_k`, matched to type l with probability
/// `(1 - q_k)(1 - q_l) p_bar_l / D`, `D = sum_r (1 - q_r) p_bar_r`.
///
/// When `D = 0` no agent can be matched; the whole population is treated
/// as unmatched (`to_none = 1`), which keeps every row stochastic.
pub fn match_law<T: Scalar>(
    p_bar: &TypeDistributionOf<T>,
    q: &NoMatchVectorOf<T>,
) -> MatchLawOf<T> {
    let k = p_bar.len();
    let denom = (1..=k).fold(T::zero(), |acc, r| {
        acc + (T::one() - q.prob(r).clone()) * p_bar.weight(r).clone()
    });
    if denom.is_zero() {
        return MatchLawOf {
            to_type: vec![vec![T::zero(); k]; k],
            to_none: vec![T::one(); k],
        };
    }
    let to_none: Vec<T> = (1..=k).map(|r| q.prob(r).clone()).collect();
    let to_type = (1..=k)
        .map(|own| {
            let open = T::one() - q.prob(own).clone();
            (1..=k)
                .map(|l| {
                    open.clone() * (T::one() - q.prob(l).clone()) * p_bar.weight(l).clone()
                        / denom.clone()
                })
                .collect()
        })
        .collect();
    MatchLawOf { to_type, to_none }
}

/// One-period transition matrix by total probability over the mutation
/// outcome, the matching outcome, and the type-change draw:
/// unmatched agents keep their post-mutation type, matched agents draw
/// from the change kernel.
pub fn period_transition<T: Scalar>(
    p: &TypeDistributionOf<T>,
    params: &ModelParamsOf<T>,
) -> PeriodTransitionOf<T> {
    let k = params.types.count();
    let p_bar = mutation_push(p, &params.b);
    let law = match_law(&p_bar, &params.q);
    let gamma = (1..=k)
        .map(|from| {
            (1..=k)
                .map(|to| {
                    (1..=k).fold(T::zero(), |acc, mid| {
                        let stay = if to == mid { T::one() } else { T::zero() };
                        let mut inner = law.to_none(mid).clone() * stay;
                        for l in 1..=k {
                            inner = inner
                                + law.to_type(mid, l).clone()
                                    * params.nu.law(mid, l).weight(to).clone();
                        }
                        acc + params.b.prob(from, mid).clone() * inner
                    })
                })
                .collect()
        })
        .collect();
    PeriodTransitionOf { gamma }
}

/// Push a distribution through one period: `p * gamma(p)`.
fn step<T: Scalar>(p: &TypeDistributionOf<T>, params: &ModelParamsOf<T>) -> TypeDistributionOf<T> {
    let gamma = period_transition(p, params);
    let k = p.len();
    let weights = (1..=k)
        .map(|to| {
            (1..=k).fold(T::zero(), |acc, from| {
                acc + p.weight(from).clone() * gamma.prob(from, to).clone()
            })
        })
        .collect();
    TypeDistributionOf::from_weights_unchecked(weights)
}

/// Deterministic trajectory `p^0, p^1, ..., p^T` of the cross-sectional
/// distribution. Each iterate is renormalized within the scalar's drift
/// guard; drift beyond the guard is reported as an error.
pub fn evolve<T: Scalar>(
    params: &ModelParamsOf<T>,
    periods: usize,
) -> Result<Vec<TypeDistributionOf<T>>, AnalyticError<T>> {
    let mut out = Vec::with_capacity(periods + 1);
    out.push(params.p0.clone());
    let mut current = params.p0.clone();
    for n in 1..=periods {
        let next = step(&current, params);
        let sum = next
            .weights()
            .iter()
            .fold(T::zero(), |acc, w| acc + w.clone());
        let deviation = (sum.clone() - T::one()).abs();
        if deviation > T::drift_guard() {
            return Err(AnalyticError::SimplexDrift { period: n, deviation });
        }
        let weights = next
            .weights()
            .iter()
            .map(|w| w.clone() / sum.clone())
            .collect();
        current = TypeDistributionOf::from_weights_unchecked(weights);
        out.push(current.clone());
    }
    Ok(out)
}

/// Iterate `p <- p * gamma(p)` until the L1 change drops below `tol`.
///
/// The map may have many fixed points (the Hardy-Weinberg kernel fixes
/// every distribution), so the result depends on the starting point.
pub fn steady_state<T: Scalar>(
    params: &ModelParamsOf<T>,
    p_start: &TypeDistributionOf<T>,
    tol: T,
    max_iter: usize,
) -> Result<TypeDistributionOf<T>, AnalyticError<T>> {
    let mut current = p_start.clone();
    let mut residual = T::zero();
    for _ in 0..max_iter {
        let next = step(&current, params);
        residual = current
            .weights()
            .iter()
            .zip(next.weights())
            .fold(T::zero(), |acc, (a, b)| acc + (a.clone() - b.clone()).abs());
        current = next;
        if residual < tol {
            return Ok(current);
        }
    }
    Err(AnalyticError::NonConvergence {
        last: current.weights().to_vec(),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatchChangeKernelOf, TypeSpace};
    use crate::presets::hardy_weinberg_params;

    type Dist = TypeDistributionOf<f64>;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mutation_push_identity() {
        let p = Dist::new(vec![0.3, 0.7]).unwrap();
        let b = MutationMatrixOf::identity(2);
        assert_eq!(mutation_push(&p, &b).weights(), p.weights());
    }

    #[test]
    fn mutation_push_row_selection() {
        let p = Dist::new(vec![1.0, 0.0]).unwrap();
        let b = MutationMatrixOf::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert_eq!(mutation_push(&p, &b).weights(), &[0.9, 0.1]);
    }

    #[test]
    fn mutation_push_hand_product() {
        let p = Dist::new(vec![0.5, 0.5]).unwrap();
        let b = MutationMatrixOf::new(vec![vec![0.8, 0.2], vec![0.4, 0.6]]).unwrap();
        let pushed = mutation_push(&p, &b);
        assert!(close(pushed.weights()[0], 0.6, 1e-15));
        assert!(close(pushed.weights()[1], 0.4, 1e-15));
    }

    #[test]
    fn match_law_no_one_unmatched() {
        let p = Dist::new(vec![0.6, 0.4]).unwrap();
        let q = NoMatchVectorOf::zeros(2);
        let law = match_law(&p, &q);
        for own in 1..=2 {
            assert_eq!(law.to_none(own), &0.0);
            assert!(close(*law.to_type(own, 1), 0.6, 1e-15));
            assert!(close(*law.to_type(own, 2), 0.4, 1e-15));
        }
    }

    #[test]
    fn match_law_degenerate_all_unmatched() {
        let p = Dist::new(vec![0.5, 0.5]).unwrap();
        let q = NoMatchVectorOf::new(vec![1.0, 1.0]).unwrap();
        let law = match_law(&p, &q);
        for own in 1..=2 {
            assert_eq!(law.to_none(own), &1.0);
            assert_eq!(law.to_type(own, 1), &0.0);
            assert_eq!(law.to_type(own, 2), &0.0);
        }
    }

    #[test]
    fn match_law_mixed_q() {
        let p = Dist::new(vec![0.5, 0.5]).unwrap();
        let q = NoMatchVectorOf::new(vec![0.5, 0.0]).unwrap();
        let law = match_law(&p, &q);
        // D = 0.5*0.5 + 1.0*0.5 = 0.75
        assert!(close(*law.to_none(1), 0.5, 1e-15));
        assert!(close(*law.to_type(1, 2), 1.0 / 3.0, 1e-15));
        assert!(close(*law.to_type(1, 1), 1.0 / 6.0, 1e-15));
        for own in 1..=2 {
            let total = law.to_none(own) + law.to_type(own, 1) + law.to_type(own, 2);
            assert!(close(total, 1.0, 1e-12));
        }
    }

    #[test]
    fn transition_identity_when_nothing_happens() {
        let types = TypeSpace::new(2).unwrap();
        let params = ModelParamsOf {
            types,
            p0: Dist::new(vec![0.3, 0.7]).unwrap(),
            b: MutationMatrixOf::identity(2),
            q: NoMatchVectorOf::new(vec![1.0, 1.0]).unwrap(),
            nu: MatchChangeKernelOf::keep_type(2),
        };
        let gamma = period_transition(&params.p0, &params);
        assert_eq!(gamma.row(1), &[1.0, 0.0]);
        assert_eq!(gamma.row(2), &[0.0, 1.0]);
    }

    #[test]
    fn hardy_weinberg_transition_entries() {
        let params = hardy_weinberg_params::<f64>();
        let p = Dist::new(vec![0.6, 0.4]).unwrap();
        let gamma = period_transition(&p, &params);
        assert!(close(*gamma.prob(1, 1), 0.8, 1e-15));
        assert!(close(*gamma.prob(2, 2), 0.7, 1e-15));
        // p * gamma = p
        let next = 0.6 * gamma.prob(1, 1) + 0.4 * gamma.prob(2, 1);
        assert!(close(next, 0.6, 1e-15));
    }

    #[test]
    fn transition_rows_stochastic() {
        let types = TypeSpace::new(3).unwrap();
        let params = ModelParamsOf {
            types,
            p0: Dist::new(vec![0.2, 0.5, 0.3]).unwrap(),
            b: MutationMatrixOf::new(vec![
                vec![0.7, 0.2, 0.1],
                vec![0.1, 0.8, 0.1],
                vec![0.3, 0.3, 0.4],
            ])
            .unwrap(),
            q: NoMatchVectorOf::new(vec![0.2, 0.0, 0.9]).unwrap(),
            nu: MatchChangeKernelOf::keep_type(3),
        };
        let gamma = period_transition(&params.p0, &params);
        for from in 1..=3 {
            let sum: f64 = gamma.row(from).iter().sum();
            assert!(close(sum, 1.0, 1e-12), "row {from} sums to {sum}");
        }
    }

    #[test]
    fn evolve_hardy_weinberg_constant() {
        let params = hardy_weinberg_params::<f64>();
        let traj = evolve(&params, 10).unwrap();
        for p in &traj {
            assert!(close(p.weights()[0], 0.6, 1e-12));
            assert!(close(p.weights()[1], 0.4, 1e-12));
        }
    }

    #[test]
    fn evolve_hardy_weinberg_exact_in_rationals() {
        use num_bigint::BigInt;
        use num_rational::Ratio;

        let params = hardy_weinberg_params::<Ratio<BigInt>>();
        let traj = evolve(&params, 5).unwrap();
        let p6 = Ratio::new(BigInt::from(3), BigInt::from(5));
        for p in &traj {
            assert_eq!(p.weights()[0], p6);
        }
    }

    #[test]
    fn evolve_constant_when_frozen() {
        let types = TypeSpace::new(2).unwrap();
        let params = ModelParamsOf {
            types,
            p0: Dist::new(vec![0.25, 0.75]).unwrap(),
            b: MutationMatrixOf::identity(2),
            q: NoMatchVectorOf::new(vec![1.0, 1.0]).unwrap(),
            nu: MatchChangeKernelOf::keep_type(2),
        };
        let traj = evolve(&params, 4).unwrap();
        for p in &traj {
            assert_eq!(p.weights(), &[0.25, 0.75]);
        }
    }

    #[test]
    fn evolve_t_zero_emits_only_start() {
        let params = hardy_weinberg_params::<f64>();
        let traj = evolve(&params, 0).unwrap();
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn steady_state_start_dependent() {
        let params = hardy_weinberg_params::<f64>();
        for start in [[0.6, 0.4], [0.3, 0.7]] {
            let p = Dist::new(start.to_vec()).unwrap();
            let fixed = steady_state(&params, &p, 1e-12, 1_000_000).unwrap();
            assert!(close(fixed.weights()[0], start[0], 1e-10));
        }
    }

    #[test]
    fn steady_state_frozen_params_one_step() {
        let types = TypeSpace::new(2).unwrap();
        let params = ModelParamsOf {
            types,
            p0: Dist::new(vec![0.5, 0.5]).unwrap(),
            b: MutationMatrixOf::identity(2),
            q: NoMatchVectorOf::new(vec![1.0, 1.0]).unwrap(),
            nu: MatchChangeKernelOf::keep_type(2),
        };
        let p = Dist::new(vec![0.9, 0.1]).unwrap();
        let fixed = steady_state(&params, &p, 1e-12, 5).unwrap();
        assert_eq!(fixed.weights(), &[0.9, 0.1]);
    }

    #[test]
    fn steady_state_reports_non_convergence() {
        // A two-state swap kernel oscillates and never settles.
        let types = TypeSpace::new(2).unwrap();
        let params = ModelParamsOf {
            types,
            p0: Dist::new(vec![0.9, 0.1]).unwrap(),
            b: MutationMatrixOf::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            q: NoMatchVectorOf::new(vec![1.0, 1.0]).unwrap(),
            nu: MatchChangeKernelOf::keep_type(2),
        };
        let p = Dist::new(vec![0.9, 0.1]).unwrap();
        match steady_state(&params, &p, 1e-12, 100) {
            Err(AnalyticError::NonConvergence { residual, .. }) => assert!(residual > 0.1),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
