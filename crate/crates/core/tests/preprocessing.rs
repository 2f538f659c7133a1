mod support;

use support::preprocess::*;

fn run(c: Check) {
    assert!(c.pass, "{}: {}", c.name, c.detail);
}

#[test]
fn breast_extraction_removes_label_blocks() {
    run(distractor_removal(100, 42));
}

#[test]
fn bilateral_keeps_step_edges_sharper_than_gaussian() {
    run(bilateral_preserves_edges(5));
}

#[test]
fn median_removes_salt_and_pepper() {
    run(median_removes_impulses(20, 6));
}
