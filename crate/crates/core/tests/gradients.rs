mod common;

use common::suites;

#[test]
fn lattice_jacobian_on_random_banks() {
    let worst = suites::jacobian_vs_differences(100, 11);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn pr_loss_gradient_on_random_taps() {
    let worst = suites::pr_grad_vs_differences(100, 12);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn unit_backward_on_random_configs() {
    let worst = suites::unit_backward_vs_differences(50, 13);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}
