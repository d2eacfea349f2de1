mod common;

use common::properties::SUITES;

fn suite(name: &str) {
    let (_, f) = SUITES.iter().find(|(n, _)| *n == name).expect("suite exists");
    if let Err(e) = f() {
        panic!("{name}: {e}");
    }
}

#[test]
fn dataset_round_trip() {
    suite("dataset round-trip");
}

#[test]
fn arc_length_rigid_motion() {
    suite("arc length under rigid motion");
}

#[test]
fn feature_invariances() {
    suite("feature length is 5K");
    suite("feature shift of a small cell");
    suite("feature shift of the macro cell");
    suite("feature reversal");
}

#[test]
fn segmentation_properties() {
    suite("segmentation respects l_min");
    suite("aligned boundaries cost zero");
}

#[test]
fn salient_properties() {
    suite("information gain bounds");
    suite("selection size and determinism");
    suite("mask idempotence and unselected scaling");
}

#[test]
fn posterior_properties() {
    suite("posterior normalization and monotonicity");
    suite("uniform-prior argmax");
}

#[test]
fn curve_local_optimality() {
    suite("curve inversion local optimality");
}

#[test]
fn cdf_construction() {
    suite("cdf construction");
}

#[test]
fn every_suite_is_covered() {
    assert_eq!(SUITES.len(), 15);
}
