mod common;

use common::CaseResult;

const SHAPES: usize = 20;

fn assert_all(results: &[CaseResult]) {
    for r in results {
        println!(
            "{}: worst relative error {:.3e} over {} shapes",
            r.name, r.worst, r.shapes
        );
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} ({:.3e}; {})", r.name, r.worst, r.detail))
        .collect();
    assert!(failed.is_empty(), "gradient mismatch: {failed:?}");
}

#[test]
fn primitive_ops() {
    assert_all(&common::op_results(SHAPES));
}

#[test]
fn layers() {
    assert_all(&common::layer_results(SHAPES));
}

#[test]
fn losses() {
    assert_all(&common::loss_results(SHAPES));
}

#[test]
fn full_model() {
    assert_all(&[common::model_results(SHAPES)]);
}
