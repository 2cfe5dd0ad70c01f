use std::path::Path;
use std::process::{Command, Output};

fn latentid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latentid"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn ident_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let full = write(dir.path(), "full.txt", "WN sigma2=1.0\nAR1 rho=0.5 nu2=1.0\n");
    let out = latentid(&["ident", "--model-file", &full]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("FullColumnRank"));
    // WN + MA1 autocovariances vanish beyond lag 1.
    let deficient = write(dir.path(), "ma.txt", "WN sigma2=1.0\nMA1 rho_ma=0.3 zeta2=1.0\n");
    let out = latentid(&["ident", "--model-file", &deficient]);
    assert_eq!(out.status.code(), Some(2));
    let out = latentid(&["ident", "--model-file", &full, "--at", "0,1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn moments_csv() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", "WN sigma2=1.0\nAR1 rho=0.5 nu2=1.0\n");
    let text = stdout(&latentid(&[
        "moments",
        "--model-file",
        &model,
        "--kind",
        "acvf",
        "--max-lag",
        "2",
    ]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "kind,abscissa,value");
    let values: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let stationary = 1.0 / (1.0 - 0.25);
    let expected = [1.0 + stationary, 0.5 * stationary, 0.25 * stationary];
    for (v, e) in values.iter().zip(expected) {
        assert!((v - e).abs() < 1e-12, "{v} vs {e}");
    }
    let wv = stdout(&latentid(&[
        "moments",
        "--model-file",
        &model,
        "--kind",
        "wv",
        "--scales",
        "3",
    ]));
    assert_eq!(wv.lines().count(), 4);
    assert!(wv.lines().skip(1).all(|l| l.starts_with("wv,")));
}

#[test]
fn simulate_formats() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", "WN sigma2=1.0\n");
    let args = ["simulate", "--model-file", &model, "--n", "5", "--seed", "9"];
    let text = stdout(&latentid(&args));
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().all(|l| l.parse::<f64>().is_ok()));
    assert_eq!(text, stdout(&latentid(&args)));
    let field = write(dir.path(), "f.txt", "SpatialExp phi=1.0 sigma2=1.0\n");
    let coords = write(dir.path(), "c.txt", "0,0\n1,0\n0,2\n");
    let text = stdout(&latentid(&["simulate", "--model-file", &field, "--coords", &coords]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,value");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("0,2,"));
}

#[test]
fn fit_recovers_white_noise() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", "WN sigma2=2.0\n");
    let data = dir.path().join("x.txt");
    let data = data.to_str().unwrap();
    stdout(&latentid(&[
        "simulate",
        "--model-file",
        &model,
        "--n",
        "4096",
        "--out",
        data,
    ]));
    let text = stdout(&latentid(&[
        "fit",
        "--estimator",
        "gmm",
        "--model-file",
        &model,
        "--data",
        data,
    ]));
    let estimate: f64 = text
        .lines()
        .find(|l| l.starts_with("WN.sigma2"))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap()
        .parse()
        .unwrap();
    // Three standard errors of a variance estimate from 4096 draws.
    assert!(
        (estimate - 2.0).abs() < 3.0 * 2.0 * (2.0f64 / 4096.0).sqrt(),
        "{estimate}"
    );
}

#[test]
fn mc_output_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "mc.conf",
        "master_seed = 3\nreplications = 4\nsample_sizes = 128, 256\nbootstrap = 20\n\n[model]\nWN sigma2=1.0\nAR1 rho=0.6 nu2=1.0\n",
    );
    let run = |extra: &[&str]| {
        let out = tempfile::tempdir().unwrap();
        let mut args = vec![
            "mc",
            "--config",
            &config,
            "--no-svg",
            "--out",
            out.path().to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        stdout(&latentid(&args));
        (
            std::fs::read(out.path().join("mse.csv")).unwrap(),
            std::fs::read(out.path().join("monotone.csv")).unwrap(),
        )
    };
    let base = run(&["--threads", "1"]);
    assert!(String::from_utf8_lossy(&base.0).starts_with("estimator,parameter,n,mse"));
    assert_eq!(base, run(&["--threads", "3"]));
    assert_eq!(base, run(&["--sequential"]));
}
