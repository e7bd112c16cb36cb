mod support;

use support::{encoder_grad_worst, floss_grad_worst, inc_beta_dx_worst, triplet_grad_worst, EndToEnd};

const TOL: f64 = 1e-4;

#[test]
fn inc_beta_dx_against_finite_differences() {
    let worst = inc_beta_dx_worst(200, 11);
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn f_loss_grad_against_finite_differences() {
    let worst = floss_grad_worst(40, 12);
    assert!(worst < TOL, "{worst:e}");
}

#[test]
fn triplet_grad_against_finite_differences() {
    let worst = triplet_grad_worst(40, 13);
    assert!(worst < TOL, "{worst:e}");
}

#[test]
fn encoder_fstat_grad_against_finite_differences() {
    let worst = encoder_grad_worst(EndToEnd::Fstat, 25, 14);
    assert!(worst < TOL, "{worst:e}");
}

#[test]
fn encoder_triplet_grad_against_finite_differences() {
    let worst = encoder_grad_worst(EndToEnd::Triplet, 25, 15);
    assert!(worst < TOL, "{worst:e}");
}
