use alp_core::alp::{alp_predict, alp_train, AlpConfig};
use alp_core::eval::regression_metrics;
use alp_core::synthetic::{gen_composite_sine, odd_even_split, SyntheticSpec};

const SMALL_NOISE_RMSE: f64 = 0.03248250872348544;
const SMALL_NOISE_STOP: usize = 8;

#[test]
fn small_noise_sine_matches_archived_values() {
    let (x, f) = gen_composite_sine(&SyntheticSpec::new(4000, 0.05, 0)).unwrap();
    let split = odd_even_split(x.view(), f.view());
    let (model, report) = alp_train(split.train_x.view(), split.train_y.view(), &AlpConfig::default()).unwrap();
    assert_eq!(model.optimal_iter(), &[SMALL_NOISE_STOP]);
    assert!(!report.underflow);
    let pred = alp_predict(&model, split.test_x.view()).unwrap();
    let m = regression_metrics(&split.test_y.column(0).to_vec(), &pred.column(0).to_vec()).unwrap();
    assert!((m.rmse - SMALL_NOISE_RMSE).abs() <= 1e-12, "rmse {}", m.rmse);
    assert!(m.rmse <= 2.0 * 0.05 / 3f64.sqrt() * 1.5);
}
