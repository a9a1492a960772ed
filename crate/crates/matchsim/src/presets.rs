//! Canned parameter sets used by the CLI demos and the test suites.

use crate::model::{
    MatchChangeKernelOf, ModelParamsOf, MutationMatrixOf, NoMatchVectorOf, TypeDistributionOf,
    TypeSpace,
};
use crate::scalar::Scalar;

fn frac<T: Scalar>(num: i64, den: i64) -> T {
    T::from_i64(num).expect("fits scalar") / T::from_i64(den).expect("fits scalar")
}

/// Two-allele random-mating model: no mutation, everyone matched,
/// same-type pairs breed true, mixed pairs produce either type with equal
/// probability. Every starting distribution is a fixed point of its
/// analytic map; the canonical run starts at (0.6, 0.4).
pub fn hardy_weinberg_params<T: Scalar>() -> ModelParamsOf<T> {
    let types = TypeSpace::new(2).expect("K = 2");
    let half = frac::<T>(1, 2);
    let nu = MatchChangeKernelOf::new(vec![
        vec![
            TypeDistributionOf::dirac(2, 1),
            TypeDistributionOf::from_weights_unchecked(vec![half.clone(), half.clone()]),
        ],
        vec![
            TypeDistributionOf::from_weights_unchecked(vec![half.clone(), half]),
            TypeDistributionOf::dirac(2, 2),
        ],
    ])
    .expect("valid kernel");
    ModelParamsOf {
        types,
        p0: TypeDistributionOf::from_weights_unchecked(vec![frac(3, 5), frac(2, 5)]),
        b: MutationMatrixOf::identity(2),
        q: NoMatchVectorOf::zeros(2),
        nu,
    }
}

/// A generic three-type parameter set with mutation, partial matching and
/// non-trivial type changes; exercises every stage of the period.
pub fn generic_k3_params() -> ModelParamsOf<f64> {
    let types = TypeSpace::new(3).expect("K = 3");
    let dist = |w: [f64; 3]| TypeDistributionOf::new(w.to_vec()).expect("valid distribution");
    ModelParamsOf {
        types,
        p0: dist([0.5, 0.3, 0.2]),
        b: MutationMatrixOf::new(vec![
            vec![0.8, 0.15, 0.05],
            vec![0.1, 0.8, 0.1],
            vec![0.05, 0.15, 0.8],
        ])
        .expect("valid mutation matrix"),
        q: NoMatchVectorOf::new(vec![0.2, 0.1, 0.3]).expect("valid q"),
        nu: MatchChangeKernelOf::new(vec![
            vec![dist([0.9, 0.1, 0.0]), dist([0.6, 0.3, 0.1]), dist([0.5, 0.2, 0.3])],
            vec![dist([0.3, 0.6, 0.1]), dist([0.1, 0.8, 0.1]), dist([0.1, 0.6, 0.3])],
            vec![dist([0.3, 0.2, 0.5]), dist([0.1, 0.3, 0.6]), dist([0.0, 0.1, 0.9])],
        ])
        .expect("valid kernel"),
    }
}
