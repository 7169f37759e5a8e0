mod common;

use common::{op_errors, training_loss_error, FD_TOL};

#[test]
fn every_op_matches_finite_differences() {
    for (op, err) in op_errors(0..20) {
        assert!(err < FD_TOL, "{op}: relative error {err:.3e}");
    }
}

#[test]
fn training_loss_matches_finite_differences() {
    for seed in 0..20 {
        let err = training_loss_error(seed);
        assert!(err < FD_TOL, "seed {seed}: relative error {err:.3e}");
    }
}
