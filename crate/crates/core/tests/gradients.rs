//! Reverse-mode gradients against central differences, per primitive.

mod common;

use common::suite::{self, PrimitiveResult};
use common::FD_TOLERANCE;

fn assert_passes(r: &PrimitiveResult) {
    assert!(r.configs >= 5, "{}: only {} configurations", r.name, r.configs);
    assert!(
        r.max_rel_error < FD_TOLERANCE,
        "{}: max relative error {:.3e} over {} entries",
        r.name,
        r.max_rel_error,
        r.checked
    );
}

#[test]
fn conv2d_including_strided_and_dilated() {
    assert_passes(&suite::conv2d());
}

#[test]
fn max_pool() {
    assert_passes(&suite::max_pool());
}

#[test]
fn softmax() {
    assert_passes(&suite::softmax());
}

#[test]
fn dense() {
    assert_passes(&suite::dense());
}

#[test]
fn dropout_with_fixed_mask() {
    assert_passes(&suite::dropout());
}

#[test]
fn elementwise_and_reductions() {
    suite::elementwise().iter().for_each(assert_passes);
}

#[test]
fn concat_and_add() {
    suite::concat_and_add().iter().for_each(assert_passes);
}

#[test]
fn batch_norm_both_modes() {
    suite::batch_norm().iter().for_each(assert_passes);
}

#[test]
fn losses() {
    suite::losses().iter().for_each(assert_passes);
}
