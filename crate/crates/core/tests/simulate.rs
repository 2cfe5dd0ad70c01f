use latentid::estimators::sample_acvf;
use latentid::exec::with_threads;
use latentid::simulate::{simulate_spatial_field, simulate_time_series, SeedSpec, SpatialSampler};
use latentid::{build_model, moments, BlockSpec, Error, Execution, LatentModel};

fn model(blocks: &[BlockSpec]) -> LatentModel {
    build_model(blocks).unwrap()
}

/// Bartlett's large-sample standard error of the lag-`h` sample
/// autocovariance from the theoretical autocovariance `g`.
fn bartlett_se(g: &[f64], h: usize, n: usize) -> f64 {
    let at = |k: i64| g.get(k.unsigned_abs() as usize).copied().unwrap_or(0.0);
    let m = g.len() as i64;
    let h = h as i64;
    let var: f64 = (-m..=m).map(|k| at(k) * at(k) + at(k + h) * at(k - h)).sum();
    (var / n as f64).sqrt()
}

#[test]
fn white_noise_variance() {
    let m = model(&[BlockSpec::white_noise(1.0)]);
    let n = 1 << 16;
    let x = simulate_time_series(&m, &m.theta(), n, SeedSpec::new(2024, 0)).unwrap();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{var}");
}

#[test]
fn quantization_lag_one() {
    let m = model(&[BlockSpec::quantization(1.0)]);
    let n = 1 << 16;
    let x = simulate_time_series(&m, &m.theta(), n, SeedSpec::new(2024, 1)).unwrap();
    let g = sample_acvf(&x, 1).unwrap().values;
    let se = bartlett_se(&[2.0, -1.0], 1, n);
    assert!((g[1] + 1.0).abs() < 3.0 * se, "{} (se {se})", g[1]);
}

#[test]
fn random_walk_variance_grows_linearly() {
    let m = model(&[BlockSpec::random_walk(1.0)]);
    let reps = 1000;
    let ends: Vec<f64> = (0..reps)
        .map(|r| simulate_time_series(&m, &m.theta(), 100, SeedSpec::new(77, r)).unwrap()[99])
        .collect();
    let mean = ends.iter().sum::<f64>() / reps as f64;
    let var = ends.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    assert!((var / 100.0 - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn latent_sum_matches_summed_autocovariance() {
    let m = model(&[
        BlockSpec::white_noise(1.0),
        BlockSpec::quantization(0.5),
        BlockSpec::ma1(0.4, 0.7),
        BlockSpec::ar1(0.6, 1.0),
    ]);
    let n = 1 << 16;
    let theory = moments::acvf(&m, &m.theta(), 200).unwrap().values;
    for stream in 0..3 {
        let x = simulate_time_series(&m, &m.theta(), n, SeedSpec::new(5, stream)).unwrap();
        let g = sample_acvf(&x, 3).unwrap().values;
        for h in 0..=3 {
            let se = bartlett_se(&theory, h, n);
            assert!(
                (g[h] - theory[h]).abs() < 4.0 * se,
                "lag {h}: {} vs {}",
                g[h],
                theory[h]
            );
        }
    }
}

#[test]
fn ma1_autocovariance_from_simulation() {
    let m = model(&[BlockSpec::ma1(0.5, 1.0)]);
    let n = 1 << 16;
    let x = simulate_time_series(&m, &m.theta(), n, SeedSpec::new(8, 0)).unwrap();
    let g = sample_acvf(&x, 2).unwrap().values;
    let theory = [1.25, 0.5, 0.0];
    for h in 0..3 {
        assert!((g[h] - theory[h]).abs() < 4.0 * bartlett_se(&theory, h, n));
    }
}

#[test]
fn output_independent_of_thread_count() {
    let m = model(&[BlockSpec::white_noise(1.0), BlockSpec::ar1(0.9, 1.0)]);
    let run = || {
        Execution::Parallel.map_indexed(16, |r| {
            simulate_time_series(&m, &m.theta(), 256, SeedSpec::new(1, r as u64)).unwrap()
        })
    };
    let one = with_threads(1, run);
    let three = with_threads(3, run);
    assert_eq!(one, three);
}

fn moments_of(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let skew = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n / var.powf(1.5);
    let kurt = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n / (var * var) - 3.0;
    (var, skew, kurt)
}

#[test]
fn single_point_field_is_gaussian_with_total_sill() {
    let m = model(&[BlockSpec::spatial_exp(1.0, 1.5), BlockSpec::spatial_exp(2.0, 0.5)]);
    let sampler = SpatialSampler::new(&m, &m.theta(), &[[0.3, 0.7]]).unwrap();
    let draws: Vec<f64> = (0..10_000).map(|r| sampler.sample(SeedSpec::new(4, r))[0]).collect();
    let (var, skew, kurt) = moments_of(&draws);
    let n = draws.len() as f64;
    assert!((var / 2.0 - 1.0).abs() < 0.05, "{var}");
    assert!(skew.abs() < 4.0 * (6.0 / n).sqrt(), "{skew}");
    assert!(kurt.abs() < 4.0 * (24.0 / n).sqrt(), "{kurt}");
}

#[test]
fn two_point_covariance() {
    let m = model(&[BlockSpec::spatial_exp(1.0, 1.0)]);
    let sampler = SpatialSampler::new(&m, &m.theta(), &[[0.0, 0.0], [1.0, 0.0]]).unwrap();
    let reps = 10_000;
    let cov = (0..reps)
        .map(|r| {
            let v = sampler.sample(SeedSpec::new(6, r));
            v[0] * v[1]
        })
        .sum::<f64>()
        / reps as f64;
    let rho = (-1.0f64).exp();
    // Var(XY) for a standard bivariate normal with correlation ρ is 1 + ρ².
    let se = ((1.0 + rho * rho) / reps as f64).sqrt();
    assert!((cov - rho).abs() < 3.0 * se, "{cov}");
}

#[test]
fn duplicated_coordinates_take_the_jitter_path() {
    let m = model(&[BlockSpec::spatial_gauss(1.0, 1.0)]);
    let coords = [[0.0, 0.0], [0.5, 0.5], [0.0, 0.0]];
    let sampler = SpatialSampler::new(&m, &m.theta(), &coords).unwrap();
    assert!(sampler.jitter > 0.0);
    let v = sampler.sample(SeedSpec::new(1, 0));
    assert!(v.iter().all(|x| x.is_finite()));
    assert!((v[0] - v[2]).abs() < 1e-3);
}

#[test]
fn spatial_input_errors() {
    let m = model(&[BlockSpec::spatial_exp(1.0, 1.0)]);
    assert!(simulate_spatial_field(&m, &m.theta(), &[], SeedSpec::new(0, 0)).is_err());
    assert!(simulate_spatial_field(&m, &m.theta(), &[[f64::NAN, 0.0]], SeedSpec::new(0, 0)).is_err());
    let ts = model(&[BlockSpec::white_noise(1.0)]);
    assert_eq!(
        simulate_time_series(&ts, &ts.theta(), 0, SeedSpec::new(0, 0)).unwrap_err(),
        Error::InvalidConfig("series length must be at least 1".into())
    );
}
