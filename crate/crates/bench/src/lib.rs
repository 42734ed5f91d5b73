//! Shared fixtures for the benchmarks.

use ar_core::data::synthetic_dataset;
use ar_core::network::mlp_specs;
use ar_core::{init_params, FeedbackInit, NetworkParams, Vector};

/// The reference 784-300-300-100-10 network and one synthetic item of the
/// matching shape.
pub fn reference_net(seed: u64) -> (NetworkParams, Vector, Vector) {
    let params = init_params(
        &mlp_specs(&[784, 300, 300, 100, 10]).expect("valid widths"),
        seed,
        FeedbackInit::Random,
    )
    .expect("valid network");
    let ds = synthetic_dataset(seed, 64, 784, 10).expect("valid dataset");
    (params, ds.inputs()[0].clone(), ds.targets()[0].clone())
}

/// A synthetic minibatch for the reference network.
pub fn minibatch(seed: u64, n: usize) -> (Vec<Vector>, Vec<Vector>) {
    let ds = synthetic_dataset(seed, n.max(10), 784, 10).expect("valid dataset");
    (ds.inputs()[..n].to_vec(), ds.targets()[..n].to_vec())
}
