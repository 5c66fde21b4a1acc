mod common;

use common::{manufactured_error, observed_order};

#[test]
fn spatial_order_with_dt_proportional_to_h_squared() {
    let sizes = [32, 64, 128];
    let errors: Vec<f64> = sizes
        .iter()
        .map(|&n| manufactured_error(n, n * n, 1.0))
        .collect();
    let p = observed_order(&sizes, &errors);
    println!("spatial errors {errors:?} order {p:.3}");
    assert!(p >= 1.9, "{p}");
}

#[test]
fn temporal_order_on_fine_mesh() {
    let steps = [64, 128, 256];
    let errors: Vec<f64> = steps
        .iter()
        .map(|&k| manufactured_error(2048, k, 1.0))
        .collect();
    let p = observed_order(&steps, &errors);
    println!("temporal errors {errors:?} order {p:.3}");
    assert!(p >= 0.9, "{p}");
}
