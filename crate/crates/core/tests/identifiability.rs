use latentid::identifiability::{
    self, ar_sum_det_formula, arma21_det_check, arma21_map, c10_deviation, conjecture32_check, identifiability_report,
    moment_jacobian, sampling, Abscissae, DerivativeMethod, JacobianOptions, Tolerance, Verdict,
};
use latentid::models::{from_unconstrained, to_unconstrained};
use latentid::{build_model, moments, BlockSpec, LatentModel, WvConvention};
use proptest::prelude::*;

fn report(model: &LatentModel, theta: &[f64], abscissae: Abscissae) -> identifiability::JacobianReport {
    identifiability_report(
        model,
        theta,
        &abscissae,
        Tolerance::Default,
        &JacobianOptions::default(),
    )
    .unwrap()
}

#[test]
fn model1_single_ar_full_rank() {
    let m = build_model(&[
        BlockSpec::white_noise(1.0),
        BlockSpec::quantization(1.0),
        BlockSpec::ar1(0.5, 1.0),
    ])
    .unwrap();
    let r = report(&m, &m.theta(), Abscissae::Lags((0..=4).collect()));
    assert_eq!(r.numeric_rank, 4);
    assert_eq!(r.verdict, Verdict::FullColumnRank);
    assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn tied_ar_coefficients_rank_deficient() {
    let m = build_model(&[BlockSpec::ar1(0.4, 1.0), BlockSpec::ar1(0.7, 2.0)]).unwrap();
    let theta = [0.4, 1.0, 0.4, 2.0];
    let r = report(&m, &theta, Abscissae::Lags((0..=4).collect()));
    assert_eq!(r.verdict, Verdict::RankDeficient);
    assert!(r.numeric_rank < 4);
}

#[test]
fn two_exponential_fields_full_rank() {
    let m = build_model(&[BlockSpec::spatial_exp(1.0, 1.0), BlockSpec::spatial_exp(3.0, 1.0)]).unwrap();
    let r = report(&m, &m.theta(), Abscissae::Distances(vec![0.0, 1.0, 2.0, 3.0]));
    assert_eq!(r.numeric_rank, 4);
    assert!(r.determinant.is_some());
}

#[test]
fn analytic_columns_match_finite_differences() {
    let models = [
        build_model(&[
            BlockSpec::white_noise(0.8),
            BlockSpec::quantization(0.3),
            BlockSpec::ar1(-0.4, 1.5),
            BlockSpec::ar1(0.85, 0.6),
        ])
        .unwrap(),
        build_model(&[BlockSpec::spatial_exp(1.3, 0.7), BlockSpec::spatial_exp(2.4, 1.9)]).unwrap(),
        build_model(&[BlockSpec::spatial_gauss(0.8, 1.1), BlockSpec::spatial_gauss(2.4, 1.9)]).unwrap(),
    ];
    for m in &models {
        let abscissae = identifiability::default_abscissae(
            m,
            if m.blocks()[0].kind().is_spatial() {
                moments::MomentKind::SpatialCov
            } else {
                moments::MomentKind::Acvf
            },
        );
        let mixed = moment_jacobian(m, &m.theta(), &abscissae, &JacobianOptions::default()).unwrap();
        let fd = moment_jacobian(
            m,
            &m.theta(),
            &abscissae,
            &JacobianOptions {
                method: DerivativeMethod::FiniteDifference,
                ..JacobianOptions::default()
            },
        )
        .unwrap();
        for (a, b) in mixed.iter().zip(fd.iter()) {
            let scale = a.abs().max(1e-3);
            assert!((a - b).abs() / scale < 1e-6, "{a} vs {b}");
        }
    }
}

/// Autocovariance of `(1 − a1 B − a2 B²) X = (1 + θ B) e` from its
/// ψ-weights.
fn arma21_acvf(a1: f64, a2: f64, theta: f64, var: f64, max_lag: usize) -> Vec<f64> {
    let terms = 4000;
    let mut psi = vec![0.0; terms];
    psi[0] = 1.0;
    psi[1] = a1 + theta;
    for k in 2..terms {
        psi[k] = a1 * psi[k - 1] + a2 * psi[k - 2];
    }
    (0..=max_lag)
        .map(|h| var * (0..terms - h).map(|j| psi[j] * psi[j + h]).sum::<f64>())
        .collect()
}

#[test]
fn arma21_map_preserves_autocovariance() {
    let mut rng = sampling::instance_rng(3, 0);
    for _ in 0..25 {
        let rhos = sampling::separated_rhos(&mut rng, 2);
        let (v1, v2) = (sampling::variance(&mut rng), sampling::variance(&mut rng));
        let [a1, a2, ma, var] = arma21_map(rhos[0], v1, rhos[1], v2).unwrap();
        assert!(ma.abs() <= 1.0);
        let oracle = arma21_acvf(a1, a2, ma, var, 10);
        let m = build_model(&[BlockSpec::ar1(rhos[0], v1), BlockSpec::ar1(rhos[1], v2)]).unwrap();
        let direct = moments::acvf(&m, &m.theta(), 10).unwrap().values;
        for (x, y) in oracle.iter().zip(&direct) {
            assert!(((x - y) / y.abs().max(1e-12)).abs() < 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn arma21_determinant_formula_holds() {
    let mut rng = sampling::instance_rng(11, 0);
    for _ in 0..100 {
        let rhos = sampling::separated_rhos(&mut rng, 2);
        let (v1, v2) = (sampling::variance(&mut rng), sampling::variance(&mut rng));
        let check = arma21_det_check(rhos[0], v1, rhos[1], v2).unwrap();
        let expected = (rhos[0] - rhos[1]).powi(2) / (v1 + v2);
        assert_eq!(check.formula_det, expected);
        assert!(check.rel_err < 1e-6, "{check:?}");
    }
}

#[test]
fn ar_sum_formula_matches_autocovariance_jacobian() {
    // With lags 0..2K−1 in place of wavelet levels the printed formula is
    // the determinant up to the sign (−1)^K.
    for k in 1..=4 {
        let mut rng = sampling::instance_rng(5, k);
        for _ in 0..20 {
            let rhos = sampling::separated_rhos(&mut rng, k);
            let nu2s: Vec<f64> = (0..k).map(|_| sampling::variance(&mut rng)).collect();
            let r = conjecture32_check(&rhos, &nu2s, false).unwrap();
            assert!(r.acvf.rel_err < 1e-5, "K={k}: {:?}", r.acvf);
        }
    }
}

#[test]
fn ar_sum_formula_examples() {
    assert!((ar_sum_det_formula(&[0.5], &[1.0]) - 1.0 / 0.5625).abs() < 1e-12);
    let expected = 0.3f64.powi(4) / ((0.09f64 - 1.0).powi(2) * (0.36f64 - 1.0).powi(2));
    assert!((ar_sum_det_formula(&[0.3, 0.6], &[1.0, 1.0]) - expected).abs() < 1e-15);
    assert_eq!(ar_sum_det_formula(&[0.3, 0.3], &[1.0, 2.0]), 0.0);
    assert!(conjecture32_check(&[0.1, 0.2, 0.3, 0.4, 0.5], &[1.0; 5], false).is_err());
    assert!(
        conjecture32_check(&[0.1, 0.2, 0.3, 0.4, 0.5], &[1.0; 5], true)
            .unwrap()
            .unverified
    );
}

proptest! {
    #[test]
    fn determinants_scale_with_variances(seed in 0u64..1000, k in 1usize..=3, s in 0.2f64..5.0) {
        let mut rng = sampling::instance_rng(seed, k);
        let rhos = sampling::separated_rhos(&mut rng, k);
        let nu2s: Vec<f64> = (0..k).map(|_| sampling::variance(&mut rng)).collect();
        let scaled: Vec<f64> = nu2s.iter().map(|v| v * s).collect();
        let a = conjecture32_check(&rhos, &nu2s, false).unwrap();
        let b = conjecture32_check(&rhos, &scaled, false).unwrap();
        let factor = s.powi(k as i32);
        prop_assert!((b.wv.formula_det / a.wv.formula_det / factor - 1.0).abs() < 1e-8);
        prop_assert!((b.wv.numeric_det / a.wv.numeric_det / factor - 1.0).abs() < 1e-8);
        prop_assert!((b.acvf.numeric_det / a.acvf.numeric_det / factor - 1.0).abs() < 1e-8);
    }
}

fn model5(rng: &mut rand_chacha::ChaCha8Rng) -> LatentModel {
    build_model(&[
        BlockSpec::white_noise(sampling::variance(rng)),
        BlockSpec::quantization(sampling::variance(rng)),
        BlockSpec::drift(sampling::uniform(rng, 0.05, 2.0)),
        BlockSpec::random_walk(sampling::variance(rng)),
    ])
    .unwrap()
}

fn model6(rng: &mut rand_chacha::ChaCha8Rng) -> LatentModel {
    build_model(&[
        BlockSpec::drift(sampling::uniform(rng, 0.05, 2.0)),
        BlockSpec::random_walk(sampling::variance(rng)),
        BlockSpec::ma1(sampling::uniform(rng, -0.9, 0.9), sampling::variance(rng)),
    ])
    .unwrap()
}

#[test]
fn wavelet_jacobians_of_nonstationary_models_full_rank() {
    for i in 0..50 {
        let mut rng = sampling::instance_rng(21, i);
        for m in [model5(&mut rng), model6(&mut rng)] {
            let r = report(&m, &m.theta(), Abscissae::Levels((1..=4).collect()));
            assert_eq!(r.verdict, Verdict::FullColumnRank, "{:?}", m.blocks());
        }
    }
}

#[test]
fn drift_rw_ma1_determinant_closed_form() {
    for i in 0..50 {
        let mut rng = sampling::instance_rng(22, i);
        let m = model6(&mut rng);
        let t = m.theta();
        let numeric = identifiability::wv_determinant(&m, &t, &WvConvention::QUADRATIC_FORM).unwrap();
        // Layout: drift ω, random walk γ², MA1 (ϱ, ς²).
        let closed = 2205.0 * t[0] * t[3] * (1.0 - t[2] * t[2]) / 2048.0;
        assert!(((numeric - closed) / closed).abs() < 1e-6, "{numeric} vs {closed}");
        let lib = identifiability::drift_rw_ma1_exact_det(t[0], t[2], t[3]);
        assert!(((lib - closed) / closed).abs() < 1e-12);
    }
}

#[test]
fn c10_examples() {
    let wn = build_model(&[BlockSpec::white_noise(2.0)]).unwrap();
    let grid: Vec<f64> = (1..=50).map(|k| k as f64 / 200.0).collect();
    assert!((c10_deviation(&wn, &[2.0], &[1.0], &grid).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(c10_deviation(&wn, &[2.0], &[2.0], &grid).unwrap(), 0.0);
    assert!(c10_deviation(&wn, &[2.0], &[1.0], &[0.3]).is_err());
}

#[test]
fn c10_perturbations_in_unconstrained_space() {
    let grid: Vec<f64> = (1..=100).map(|k| k as f64 / 400.0).collect();
    for i in 0..20 {
        let mut rng = sampling::instance_rng(31, i);
        let m = build_model(&sampling::model1(&mut rng, 1 + i % 3)).unwrap();
        let u0 = to_unconstrained(&m, &m.theta()).unwrap();
        let u1: Vec<f64> = u0
            .iter()
            .map(|u| u + sampling::uniform(&mut rng, 0.05, 0.5) * if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let theta1 = from_unconstrained(&m, &u1);
        assert!(c10_deviation(&m, &m.theta(), &theta1, &grid).unwrap() > 0.0);
    }
}
