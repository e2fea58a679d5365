mod common;

use common::grad_suite::{gradient_suite, run_op, OPS};

#[test]
fn every_op_matches_finite_differences() {
    for r in gradient_suite(0..3).unwrap() {
        assert!(r.max_rel_err < 1e-4, "{}: {:.3e}", r.op, r.max_rel_err);
        assert!(r.evaluations > 0);
    }
}

#[test]
fn suite_is_deterministic() {
    for op in OPS {
        let (a, b) = (run_op(op, 7).unwrap(), run_op(op, 7).unwrap());
        assert_eq!(a.max_rel_err, b.max_rel_err, "{op}");
    }
}
