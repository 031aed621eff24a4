mod common;

use common::gradient_check;
use descentlab::neuralnet::Activation;

#[test]
fn tanh_gradients_match_finite_differences() {
    let worst = gradient_check(8, 20, Activation::Tanh, 11);
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn identity_gradients_match_finite_differences() {
    let worst = gradient_check(5, 20, Activation::Identity, 12);
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn relu_gradients_match_finite_differences() {
    let worst = gradient_check(5, 20, Activation::Relu, 13);
    assert!(worst < 1e-4, "max relative error {worst:e}");
}
