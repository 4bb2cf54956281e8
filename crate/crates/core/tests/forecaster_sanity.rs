use coldstart::forecaster::{fit_values, forecast_next_values, ArimaOrder};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const N: usize = 64;

fn white_noise_forecasts(mu: f64, sigma: f64, seeds: u64) -> Vec<f64> {
    (0..seeds)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(mu, sigma).unwrap();
            let xs: Vec<f64> = (0..N).map(|_| noise.sample(&mut rng)).collect();
            let m = fit_values(&xs).unwrap();
            forecast_next_values(&m, &xs).unwrap()
        })
        .collect()
}

#[test]
fn white_noise_forecasts_center_on_the_mean() {
    let (mu, sigma) = (360.0, 20.0);
    let f = white_noise_forecasts(mu, sigma, 400);
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    assert!((mean - mu).abs() <= 3.0 * sigma / (N as f64).sqrt(), "mean forecast {mean}");
    for x in &f {
        assert!((x - mu).abs() <= 3.0 * sigma, "forecast {x}");
    }
    let within = f.iter().filter(|x| (*x - mu).abs() <= 3.0 * sigma / (N as f64).sqrt()).count();
    println!("per-seed forecasts within 3σ/√n: {within}/{}", f.len());
    assert!(within * 2 > f.len());
}

#[test]
fn selected_order_is_in_the_grid() {
    let grid: Vec<ArimaOrder> = ArimaOrder::grid().collect();
    assert_eq!(grid.len(), 26);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(300.0, 50.0).unwrap();
    let xs: Vec<f64> = (0..40).map(|_| noise.sample(&mut rng)).collect();
    let m = fit_values(&xs).unwrap();
    assert!(grid.contains(&m.order));
    assert!(m.aic.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn forecast_is_finite_and_non_negative(xs in prop::collection::vec(0.0..2000.0f64, 4..40)) {
        let m = fit_values(&xs).unwrap();
        let f = forecast_next_values(&m, &xs).unwrap();
        prop_assert!(f.is_finite() && f >= 0.0);
        prop_assert!(m.ar.iter().chain(&m.ma).all(|c| c.is_finite()));
    }

    #[test]
    fn scaling_the_series_scales_a_constant_forecast(level in 1.0..1000.0f64, len in 4usize..30) {
        let xs = vec![level; len];
        let f = forecast_next_values(&fit_values(&xs).unwrap(), &xs).unwrap();
        prop_assert!((f - level).abs() < 1e-6 * level.max(1.0));
    }
}
