use rand::Rng as _;
use tactile_core::learn::{gradient_check, Loss, MlpModel, OutputHead};
use tactile_core::seed;

fn check(sizes: &[usize], head: OutputHead, loss: Loss, rows: usize, seed_value: u64) -> f64 {
    let model = MlpModel::new(sizes, head, seed_value).unwrap();
    let mut rng = seed::rng(seed_value ^ 0x5eed);
    let d = sizes[0];
    let k = *sizes.last().unwrap();
    let inputs: Vec<Vec<f64>> = (0..rows).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let targets: Vec<Vec<f64>> = (0..rows)
        .map(|r| match loss {
            Loss::CrossEntropy => (0..k).map(|c| if c == r % k { 1.0 } else { 0.0 }).collect(),
            Loss::MeanSquaredError => (0..k).map(|_| rng.random_range(-3.0..3.0)).collect(),
        })
        .collect();
    let xs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let ys: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
    let res = gradient_check(&model, &xs, &ys, loss, 1e-5).unwrap();
    assert_eq!(res.params_checked, model.param_count());
    res.max_relative_error
}

#[test]
fn force_regressor_gradients() {
    let err = check(&[4, 32, 32, 2], OutputHead::Linear, Loss::MeanSquaredError, 8, 1);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn material_classifier_gradients() {
    let err = check(&[516, 128, 7], OutputHead::Softmax, Loss::CrossEntropy, 3, 2);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn shake_classifier_gradients() {
    let err = check(&[48, 128, 64, 3], OutputHead::Softmax, Loss::CrossEntropy, 6, 3);
    assert!(err < 1e-4, "{err}");
}
