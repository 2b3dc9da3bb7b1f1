mod support;

use support::gradients as suite;

#[test]
fn elementwise_and_broadcasting() {
    suite::elementwise_and_broadcasting();
}

#[test]
fn unary_activations() {
    suite::unary_activations();
}

#[test]
fn softmax_and_dropout() {
    suite::softmax_and_dropout();
}

#[test]
fn shape_operations() {
    suite::shape_operations();
}

#[test]
fn matrix_products() {
    suite::matrix_products();
}

#[test]
fn convolutions_and_pooling() {
    suite::convolutions_and_pooling();
}

#[test]
fn layer_norm() {
    suite::layer_norm();
}

#[test]
fn selective_scan_all_arguments() {
    suite::selective_scan_all_arguments();
}

#[test]
fn scan_near_zero_step_uses_series_consistently() {
    suite::scan_near_zero_step_uses_series_consistently();
}

#[test]
fn network_stages() {
    suite::network_stages();
}

#[test]
fn full_desk_model_loss() {
    suite::full_desk_model_loss();
}
