use latentid::exec::with_threads;
use latentid::harness::{
    emit_report, parse_config, parse_mse_csv, render_svg, run_monte_carlo, run_monte_carlo_with, summarize_mse,
    Estimator, McConfig, RawCell, ReportFormat, MSE_CSV_HEADER,
};
use latentid::{build_model, BlockSpec, Execution};
use proptest::prelude::*;

fn small_config() -> McConfig {
    let model = build_model(&[BlockSpec::white_noise(1.0), BlockSpec::ar1(0.6, 1.0)]).unwrap();
    let mut config = McConfig::new(model);
    config.sample_sizes = vec![64, 256];
    config.replications = 6;
    config.bootstrap_resamples = 50;
    config.fit.starts = 3;
    config
}

fn cell(estimator: Estimator, n: usize, estimates: Vec<Vec<f64>>) -> RawCell {
    RawCell {
        estimator,
        n,
        estimates,
        failures: 0,
    }
}

#[test]
fn stubbed_truth_gives_zero_mse() {
    let mut config = small_config();
    config.replications = 2;
    let theta0 = config.theta0.clone();
    let result = run_monte_carlo_with(&config, |_, _| Ok(theta0.clone())).unwrap();
    assert!(result
        .rows
        .iter()
        .all(|r| r.mse == 0.0 && r.bias == 0.0 && r.variance == 0.0));
    assert!(result
        .flags
        .iter()
        .all(|f| !f.decreasing && f.note.as_deref() == Some("degenerate")));
}

#[test]
fn two_point_toy_arithmetic() {
    let labels = vec!["WN.sigma2".to_string()];
    let cells = [cell(Estimator::Gmm, 10, vec![vec![2.0], vec![0.0]])];
    let r = summarize_mse(&cells, &[1.0], &labels, 100, 1).unwrap();
    let row = &r.rows[0];
    assert_eq!((row.mse, row.bias, row.variance), (1.0, 0.0, 1.0));
}

#[test]
fn monotone_flag_definition() {
    let labels = vec!["x".to_string()];
    // Errors ±e give MSE e² with zero bias.
    let triple = |errs: [f64; 3]| {
        errs.iter()
            .zip([8, 16, 32])
            .map(|(&e, n)| cell(Estimator::Gmwm, n, vec![vec![e], vec![-e]]))
            .collect::<Vec<_>>()
    };
    let flag = |mses: [f64; 3]| {
        let cells = triple(mses.map(f64::sqrt));
        summarize_mse(&cells, &[0.0], &labels, 10, 0).unwrap().flags[0].decreasing
    };
    assert!(flag([1.0, 0.5, 0.2]));
    assert!(!flag([1.0, 0.5, 0.6]));
    assert!(!flag([1.0, 0.5, 0.5]));
}

#[test]
fn minimal_report_has_two_rows_and_round_trips() {
    let labels = vec!["WN.sigma2".to_string()];
    let cells = [
        cell(Estimator::Gmwm, 100, vec![vec![1.1], vec![0.7], vec![1.0 / 3.0]]),
        cell(
            Estimator::Gmwm,
            1000,
            vec![vec![0.95], vec![1.05], vec![std::f64::consts::PI / 3.0]],
        ),
    ];
    let result = summarize_mse(&cells, &[1.0], &labels, 200, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&result, dir.path(), ReportFormat::ALL).unwrap();
    assert_eq!(written.len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("mse.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], MSE_CSV_HEADER);
    assert!(!csv.contains('\r'));
    assert_eq!(parse_mse_csv(&csv).unwrap(), result.rows);
}

#[test]
fn svg_has_one_polyline_per_estimator_per_panel() {
    let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let mut cells = Vec::new();
    for e in [Estimator::Gmwm, Estimator::Gmm] {
        for (i, n) in [16, 32, 64].into_iter().enumerate() {
            let s = 1.0 / (i + 1) as f64;
            cells.push(cell(
                e,
                n,
                vec![vec![s, 2.0 * s, -s], vec![-s, 0.5 * s, s], vec![0.1, -0.2, 0.3]],
            ));
        }
    }
    let result = summarize_mse(&cells, &[0.0; 3], &labels, 20, 3).unwrap();
    let svg = render_svg(&result);
    assert_eq!(svg.matches("<polyline").count(), 6);
    assert_eq!(svg.matches("class=\"gmwm\"").count(), 3);
}

proptest! {
    #[test]
    fn mse_decomposes_into_bias_and_variance(
        values in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 2..30),
        truth in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let labels = vec!["p0".to_string(), "p1".to_string()];
        let cells = [cell(Estimator::Gmm, 50, values)];
        let r = summarize_mse(&cells, &truth, &labels, 20, 4).unwrap();
        for row in &r.rows {
            let rebuilt = row.bias * row.bias + row.variance;
            prop_assert!((row.mse - rebuilt).abs() <= 1e-12 * row.mse.max(1e-300));
            prop_assert!(row.ci_lo <= row.mse && row.mse <= row.ci_hi);
        }
    }
}

#[test]
fn reruns_and_thread_counts_give_identical_csv() {
    let config = small_config();
    let base = with_threads(1, || run_monte_carlo(&config).unwrap()).to_csv();
    assert_eq!(base, run_monte_carlo(&config).unwrap().to_csv());
    assert_eq!(base, with_threads(3, || run_monte_carlo(&config).unwrap()).to_csv());
    let mut sequential = config.clone();
    sequential.execution = Execution::Sequential;
    assert_eq!(base, run_monte_carlo(&sequential).unwrap().to_csv());
}

#[test]
fn config_file_round_trip() {
    let text = "\
# small run
master_seed = 7
replications = 4
sample_sizes = 128, 512
estimators = gmm
bootstrap = 10

[model]
WN sigma2=1.0
AR1 rho=0.5 nu2=1.0
";
    let config = parse_config(text).unwrap();
    assert_eq!(config.master_seed, 7);
    assert_eq!(config.replications, 4);
    assert_eq!(config.sample_sizes, vec![128, 512]);
    assert_eq!(config.estimators, vec![Estimator::Gmm]);
    assert_eq!(config.model.n_params(), 3);
    assert!(parse_config("bogus = 1\n").is_err());
    assert!(parse_config("preset = latent2\nreplications = 1\n")
        .and_then(|c| c.validate())
        .is_err());
}
