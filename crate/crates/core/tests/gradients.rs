use rotctl::nn::gradcheck::{check_dense, check_gru, check_rpnn, gradient_suite, max_relative_error, Loss};
use rotctl::nn::{Activation, LayerSpec};

#[test]
fn every_case_within_tolerance() {
    for c in gradient_suite(3).unwrap() {
        assert!(c.max_rel_err <= 1e-4, "{} rel err {:e}", c.case, c.max_rel_err);
        assert!(c.params > 0);
    }
}

#[test]
fn other_seeds() {
    for seed in 10..20 {
        let c = check_rpnn(4, Loss::Nll, seed).unwrap();
        assert!(c.max_rel_err <= 1e-4, "{c:?}");
        let c = check_gru(3, 4, 5, Loss::Mse, seed).unwrap();
        assert!(c.max_rel_err <= 1e-4, "{c:?}");
        let c = check_dense(LayerSpec::residual(8, Activation::Tanh), Loss::Nll, seed).unwrap();
        assert!(c.max_rel_err <= 1e-4, "{c:?}");
    }
}

#[test]
fn relative_error_floor() {
    assert_eq!(max_relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    assert!((max_relative_error(&[1.0], &[1.001]) - 0.001 / 1.001).abs() < 1e-12);
    // tiny gradients are compared against the floor, not each other
    assert!(max_relative_error(&[1e-12], &[-1e-12]) < 1e-5);
}

#[test]
fn planted_error_is_caught() {
    let a = [0.5, -0.25, 1e-3];
    let mut n = a;
    n[2] *= 1.01;
    assert!(max_relative_error(&a, &n) > 1e-4);
}
