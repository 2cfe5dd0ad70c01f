//! Monte-Carlo consistency experiments: simulate, fit, summarize the MSE per
//! parameter and sample size, and write CSV and SVG reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{self, default_levels, default_weights, FitOptions};
use crate::exec::Execution;
use crate::models::{build_model, parse_blocks, BlockSpec, LatentModel};
use crate::simulate::{simulate_time_series, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Gmwm,
    Gmm,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Gmwm => "gmwm",
            Estimator::Gmm => "gmm",
        }
    }

    pub fn from_label(s: &str) -> Option<Estimator> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gmwm" => Some(Estimator::Gmwm),
            "gmm" => Some(Estimator::Gmm),
            _ => None,
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Master seed of the shipped presets.
pub const DEFAULT_MASTER_SEED: u64 = 42;
pub const DEFAULT_SAMPLE_SIZES: [usize; 3] = [512, 4096, 32768];
pub const DEFAULT_REPLICATIONS: usize = 100;
pub const DEFAULT_BOOTSTRAP: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub model: LatentModel,
    pub theta0: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub estimators: Vec<Estimator>,
    pub master_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub bootstrap_resamples: usize,
    /// Wavelet levels for GMWM; `None` uses [`default_levels`].
    pub levels: Option<u32>,
    pub fit: FitOptions,
    pub execution: Execution,
}

impl McConfig {
    pub fn new(model: LatentModel) -> Self {
        McConfig {
            theta0: model.theta(),
            model,
            sample_sizes: DEFAULT_SAMPLE_SIZES.to_vec(),
            replications: DEFAULT_REPLICATIONS,
            estimators: vec![Estimator::Gmwm, Estimator::Gmm],
            master_seed: DEFAULT_MASTER_SEED,
            output_dir: None,
            bootstrap_resamples: DEFAULT_BOOTSTRAP,
            levels: None,
            fit: FitOptions::default(),
            execution: Execution::default(),
        }
    }

    /// WN + QN + two AR1: `σ² = 1, Q² = 0.5, (ρ, υ²) = (0.3, 1), (0.9, 1)`.
    pub fn latent_model_1() -> Self {
        let model = build_model(&[
            BlockSpec::ar1(0.9, 1.0),
            BlockSpec::ar1(0.3, 1.0),
            BlockSpec::white_noise(1.0),
            BlockSpec::quantization(0.5),
        ])
        .expect("preset is valid");
        McConfig::new(model)
    }

    /// WN + QN + MA1 + AR1: `σ² = 1, Q² = 0.5, (ϱ, ς²) = (0.3, 1), (ρ, υ²) = (0.9, 1)`.
    pub fn latent_model_2() -> Self {
        let model = build_model(&[
            BlockSpec::ar1(0.9, 1.0),
            BlockSpec::ma1(0.3, 1.0),
            BlockSpec::white_noise(1.0),
            BlockSpec::quantization(0.5),
        ])
        .expect("preset is valid");
        McConfig::new(model)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "latent1" | "latent_model_1" => Some(McConfig::latent_model_1()),
            "latent2" | "latent_model_2" => Some(McConfig::latent_model_2()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.check_theta(&self.theta0)?;
        if self.replications < 2 {
            return Err(Error::InsufficientReplications(self.replications));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "sample sizes must be non-empty and strictly increasing".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimator selected".into()));
        }
        let p = self.model.n_params();
        for &n in &self.sample_sizes {
            if self.estimators.contains(&Estimator::Gmwm) {
                let j = self.levels_for(n);
                if (j as usize) < p || estimators::max_levels(n) < j {
                    return Err(Error::InvalidConfig(format!(
                        "n = {n} gives {j} wavelet scales for {p} parameters"
                    )));
                }
            }
            if self.estimators.contains(&Estimator::Gmm) && n <= p {
                return Err(Error::InvalidConfig(format!("n = {n} is too short for {p} lags")));
            }
        }
        Ok(())
    }

    pub fn levels_for(&self, n: usize) -> u32 {
        self.levels.unwrap_or_else(|| default_levels(n, self.model.n_params()))
    }

    /// Seed of the simulations at the `index`-th sample size.
    pub fn size_seed(&self, index: usize) -> u64 {
        splitmix64(self.master_seed ^ splitmix64(index as u64 + 1))
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Parses a plain-text configuration: `key = value` lines, `#` comments and
/// a `[model]` section in the model text format. Recognized keys:
/// `preset`, `master_seed`, `sample_sizes`, `replications`, `estimators`,
/// `output_dir`, `bootstrap`, `levels`, `starts`.
pub fn parse_config(text: &str) -> Result<McConfig> {
    let mut settings: Vec<(usize, String, String)> = Vec::new();
    let mut model_lines = String::new();
    let mut model_start = 0;
    let mut in_model = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            if in_model {
                model_lines.push('\n');
            }
            continue;
        }
        if line.starts_with('[') {
            if line == "[model]" {
                in_model = true;
                model_start = i + 1;
                continue;
            }
            return Err(Error::Parse {
                line: i + 1,
                message: format!("unknown section {line}"),
            });
        }
        if in_model {
            model_lines.push_str(line);
            model_lines.push('\n');
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected key = value".into(),
        })?;
        settings.push((i + 1, key.trim().to_string(), value.trim().to_string()));
    }

    let mut config = match settings.iter().find(|(_, k, _)| k == "preset") {
        Some((line, _, v)) => McConfig::preset(v).ok_or_else(|| Error::Parse {
            line: *line,
            message: format!("unknown preset {v}"),
        })?,
        None => {
            if model_lines.trim().is_empty() {
                return Err(Error::InvalidConfig("a [model] section or a preset is required".into()));
            }
            McConfig::new(build_model(&[BlockSpec::white_noise(1.0)])?)
        }
    };
    if !model_lines.trim().is_empty() {
        let blocks = parse_blocks(&model_lines).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line: line + model_start,
                message,
            },
            other => other,
        })?;
        let model = build_model(&blocks)?;
        config.theta0 = model.theta();
        config.model = model;
    }

    for (line, key, value) in settings {
        let bad = |message: String| Error::Parse { line, message };
        let int = |v: &str| v.parse::<u64>().map_err(|e| bad(format!("{key}: {e}")));
        match key.as_str() {
            "preset" => {}
            "master_seed" | "seed" => config.master_seed = int(&value)?,
            "replications" => config.replications = int(&value)? as usize,
            "bootstrap" => config.bootstrap_resamples = int(&value)? as usize,
            "levels" => config.levels = Some(int(&value)? as u32),
            "starts" => config.fit.starts = int(&value)? as usize,
            "output_dir" => config.output_dir = Some(PathBuf::from(value)),
            "sample_sizes" => {
                config.sample_sizes = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|e| bad(format!("sample_sizes: {e}"))))
                    .collect::<Result<_>>()?;
            }
            "estimators" => {
                config.estimators = value
                    .split(',')
                    .map(|s| Estimator::from_label(s).ok_or_else(|| bad(format!("unknown estimator {}", s.trim()))))
                    .collect::<Result<_>>()?;
            }
            _ => return Err(bad(format!("unknown key {key}"))),
        }
    }
    Ok(config)
}

/// Estimates of one (estimator, sample size) cell, one row per successful
/// replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCell {
    pub estimator: Estimator,
    pub n: usize,
    pub estimates: Vec<Vec<f64>>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub estimator: Estimator,
    pub parameter: String,
    pub n: usize,
    pub mse: f64,
    pub bias: f64,
    pub variance: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub log10_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneFlag {
    pub estimator: Estimator,
    pub parameter: String,
    pub decreasing: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub rows: Vec<MseRow>,
    pub flags: Vec<MonotoneFlag>,
    /// `(estimator, n, failed replications)`.
    pub failures: Vec<(Estimator, usize, usize)>,
}

pub const MSE_CSV_HEADER: &str = "estimator,parameter,n,mse,bias,variance,ci_lo,ci_hi,log10_mse";

impl McResult {
    pub fn flag(&self, estimator: Estimator, parameter: &str) -> Option<&MonotoneFlag> {
        self.flags
            .iter()
            .find(|f| f.estimator == estimator && f.parameter == parameter)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{MSE_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.estimator, r.parameter, r.n, r.mse, r.bias, r.variance, r.ci_lo, r.ci_hi, r.log10_mse
            );
        }
        out
    }

    pub fn flags_csv(&self) -> String {
        let mut out = String::from("estimator,parameter,monotone_decrease,note\n");
        for f in &self.flags {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                f.estimator,
                f.parameter,
                f.decreasing,
                f.note.as_deref().unwrap_or("")
            );
        }
        out
    }
}

/// Reads back the MSE table written by [`McResult::to_csv`].
pub fn parse_mse_csv(text: &str) -> Result<Vec<MseRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == MSE_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "unexpected header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 9 {
                return Err(bad(format!("expected 9 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            Ok(MseRow {
                estimator: Estimator::from_label(f[0]).ok_or_else(|| bad(format!("unknown estimator {}", f[0])))?,
                parameter: f[1].to_string(),
                n: f[2].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                mse: num(f[3])?,
                bias: num(f[4])?,
                variance: num(f[5])?,
                ci_lo: num(f[6])?,
                ci_hi: num(f[7])?,
                log10_mse: num(f[8])?,
            })
        })
        .collect()
}

fn mse_of(values: &[f64], truth: f64) -> f64 {
    values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / values.len() as f64
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// MSE, bias and variance (denominator R) per cell and parameter, percentile
/// bootstrap CIs of the MSE, and the strict-decrease flags across sample
/// sizes. Cells must be grouped by estimator with ascending `n`.
pub fn summarize_mse(
    cells: &[RawCell],
    theta0: &[f64],
    labels: &[String],
    bootstrap_resamples: usize,
    master_seed: u64,
) -> Result<McResult> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for cell in cells {
        if cell.estimates.len() < 2 {
            return Err(Error::InsufficientReplications(cell.estimates.len()));
        }
        failures.push((cell.estimator, cell.n, cell.failures));
    }
    let mut cell_index = 0u64;
    let mut estimators: Vec<Estimator> = Vec::new();
    for cell in cells {
        if !estimators.contains(&cell.estimator) {
            estimators.push(cell.estimator);
        }
    }
    for &est in &estimators {
        for (k, label) in labels.iter().enumerate() {
            for cell in cells.iter().filter(|c| c.estimator == est) {
                let values: Vec<f64> = cell.estimates.iter().map(|e| e[k]).collect();
                let r = values.len() as f64;
                let mean = values.iter().sum::<f64>() / r;
                let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r;
                let mse = mse_of(&values, theta0[k]);
                let (mut ci_lo, mut ci_hi) = (mse, mse);
                if bootstrap_resamples > 0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(master_seed.wrapping_add(cell_index));
                    let mut boot = Vec::with_capacity(bootstrap_resamples);
                    let mut sample = vec![0.0; values.len()];
                    for _ in 0..bootstrap_resamples {
                        for s in sample.iter_mut() {
                            *s = values[rng.random_range(0..values.len())];
                        }
                        boot.push(mse_of(&sample, theta0[k]));
                    }
                    boot.sort_by(f64::total_cmp);
                    // Percentile interval, widened to contain the point
                    // estimate when the bootstrap distribution is lopsided.
                    ci_lo = quantile(&boot, 0.025).min(mse);
                    ci_hi = quantile(&boot, 0.975).max(mse);
                }
                cell_index += 1;
                rows.push(MseRow {
                    estimator: est,
                    parameter: label.clone(),
                    n: cell.n,
                    mse,
                    bias: mean - theta0[k],
                    variance,
                    ci_lo,
                    ci_hi,
                    log10_mse: mse.log10(),
                });
            }
        }
    }
    let mut flags = Vec::new();
    for &est in &estimators {
        for label in labels {
            let series: Vec<f64> = rows
                .iter()
                .filter(|r| r.estimator == est && &r.parameter == label)
                .map(|r| r.mse)
                .collect();
            let degenerate = series.iter().all(|&m| m == 0.0);
            flags.push(MonotoneFlag {
                estimator: est,
                parameter: label.clone(),
                decreasing: !degenerate && series.windows(2).all(|w| w[1] < w[0]),
                note: degenerate.then(|| "degenerate".to_string()),
            });
        }
    }
    Ok(McResult { rows, flags, failures })
}

/// Simulates, fits with the library estimators and summarizes.
pub fn run_monte_carlo(config: &McConfig) -> Result<McResult> {
    let p = config.model.n_params();
    run_monte_carlo_with(config, |est, series| fit_one(config, est, series, p))
}

fn fit_one(config: &McConfig, estimator: Estimator, series: &[f64], p: usize) -> Result<Vec<f64>> {
    let fit = match estimator {
        Estimator::Gmwm => {
            let wv = estimators::wv_estimate(series, config.levels_for(series.len()))?;
            let w = default_weights(&wv);
            estimators::gmwm_fit(&config.model, &wv, &w.matrix, &config.fit)?
        }
        Estimator::Gmm => {
            let acvf = estimators::sample_acvf(series, p)?;
            let w = DMatrix::identity(acvf.len(), acvf.len());
            estimators::gmm_fit(&config.model, &acvf, &w, &config.fit)?
        }
    };
    Ok(fit.theta_hat)
}

/// As [`run_monte_carlo`] with a caller-supplied fitter.
pub fn run_monte_carlo_with<F>(config: &McConfig, fitter: F) -> Result<McResult>
where
    F: Fn(Estimator, &[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    config.validate()?;
    let r = config.replications;
    let jobs = config.sample_sizes.len() * r;
    let outcomes = config.execution.map_indexed(jobs, |job| {
        let (size_index, rep) = (job / r, job % r);
        let n = config.sample_sizes[size_index];
        let seed = SeedSpec::new(config.size_seed(size_index), rep as u64);
        match simulate_time_series(&config.model, &config.theta0, n, seed) {
            Ok(series) => config
                .estimators
                .iter()
                .map(|&e| fitter(e, &series).ok())
                .collect::<Vec<_>>(),
            Err(_) => vec![None; config.estimators.len()],
        }
    });
    let mut cells = Vec::new();
    for (e_index, &estimator) in config.estimators.iter().enumerate() {
        for (size_index, &n) in config.sample_sizes.iter().enumerate() {
            let mut cell = RawCell {
                estimator,
                n,
                estimates: Vec::with_capacity(r),
                failures: 0,
            };
            for outcome in &outcomes[size_index * r..(size_index + 1) * r] {
                match &outcome[e_index] {
                    Some(theta) => cell.estimates.push(theta.clone()),
                    None => cell.failures += 1,
                }
            }
            cells.push(cell);
        }
    }
    summarize_mse(
        &cells,
        &config.theta0,
        &config.model.param_labels(),
        config.bootstrap_resamples,
        config.master_seed,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportFormat {
    pub csv: bool,
    pub svg: bool,
}

impl ReportFormat {
    pub const ALL: ReportFormat = ReportFormat { csv: true, svg: true };
}

/// Writes `mse.csv`, `monotone.csv` and `mse.svg` (as selected) into `dir`.
pub fn emit_report(result: &McResult, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    if result.rows.is_empty() {
        return Err(Error::InvalidConfig("empty result".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if format.csv {
        let path = dir.join("mse.csv");
        std::fs::write(&path, result.to_csv())?;
        written.push(path);
        let path = dir.join("monotone.csv");
        std::fs::write(&path, result.flags_csv())?;
        written.push(path);
    }
    if format.svg {
        let path = dir.join("mse.svg");
        std::fs::write(&path, render_svg(result))?;
        written.push(path);
    }
    Ok(written)
}

fn colour(e: Estimator) -> &'static str {
    match e {
        Estimator::Gmm => "#c0392b",
        Estimator::Gmwm => "#27ae60",
    }
}

/// Panel grid, one panel per parameter: x = log2 n, y = log10 MSE, one
/// polyline per estimator over a grey bootstrap band.
pub fn render_svg(result: &McResult) -> String {
    let mut params: Vec<&str> = Vec::new();
    let mut ests: Vec<Estimator> = Vec::new();
    for r in &result.rows {
        if !params.contains(&r.parameter.as_str()) {
            params.push(&r.parameter);
        }
        if !ests.contains(&r.estimator) {
            ests.push(r.estimator);
        }
    }
    let (pw, ph, margin) = (260.0, 200.0, 40.0);
    let cols = params.len().clamp(1, 3);
    let rows_n = params.len().div_ceil(cols);
    let width = cols as f64 * pw;
    let height = rows_n as f64 * ph + 30.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    for (i, e) in ests.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"18\" fill=\"{}\">{}</text>",
            10.0 + 70.0 * i as f64,
            colour(*e),
            e
        );
    }
    for (pi, param) in params.iter().enumerate() {
        let ox = (pi % cols) as f64 * pw;
        let oy = 30.0 + (pi / cols) as f64 * ph;
        let rows: Vec<&MseRow> = result.rows.iter().filter(|r| r.parameter == *param).collect();
        let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).log2()).collect();
        let ys: Vec<f64> = rows
            .iter()
            .flat_map(|r| [r.ci_lo.log10(), r.ci_hi.log10(), r.log10_mse])
            .filter(|v| v.is_finite())
            .collect();
        let (x0, x1) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |a, &x| (a.0.min(x), a.1.max(x)));
        let (mut y0, mut y1) = ys
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |a, &y| (a.0.min(y), a.1.max(y)));
        if !y0.is_finite() {
            (y0, y1) = (-1.0, 1.0);
        }
        if y1 - y0 < 1e-9 {
            (y0, y1) = (y0 - 0.5, y1 + 0.5);
        }
        let x_span = if x1 > x0 { x1 - x0 } else { 1.0 };
        let px = |x: f64| ox + margin + (x - x0) / x_span * (pw - 1.5 * margin);
        let py = |y: f64| oy + ph - margin - (y - y0) / (y1 - y0) * (ph - 1.5 * margin);
        let _ = writeln!(
            svg,
            "<g><rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>",
            ox + margin,
            oy + 0.5 * margin,
            pw - 1.5 * margin,
            ph - 1.5 * margin
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            ox + margin,
            oy + 0.5 * margin - 4.0,
            param
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\">log2 n</text><text x=\"{}\" y=\"{}\">{:.2}</text><text x=\"{}\" y=\"{}\">{:.2}</text>",
            ox + pw / 2.0,
            oy + ph - 8.0,
            ox + 2.0,
            py(y1) + 4.0,
            y1,
            ox + 2.0,
            py(y0),
            y0
        );
        for &e in &ests {
            let line: Vec<&&MseRow> = rows.iter().filter(|r| r.estimator == e).collect();
            let band: Vec<(f64, f64, f64)> = line
                .iter()
                .map(|r| ((r.n as f64).log2(), r.ci_lo.log10(), r.ci_hi.log10()))
                .filter(|(_, lo, hi)| lo.is_finite() && hi.is_finite())
                .collect();
            if band.len() >= 2 {
                let mut pts: Vec<String> = band
                    .iter()
                    .map(|(x, _, hi)| format!("{:.2},{:.2}", px(*x), py(*hi)))
                    .collect();
                pts.extend(
                    band.iter()
                        .rev()
                        .map(|(x, lo, _)| format!("{:.2},{:.2}", px(*x), py(*lo))),
                );
                let _ = writeln!(
                    svg,
                    "<polygon points=\"{}\" fill=\"#888\" fill-opacity=\"0.25\" stroke=\"none\"/>",
                    pts.join(" ")
                );
            }
            let pts: Vec<String> = line
                .iter()
                .filter(|r| r.log10_mse.is_finite())
                .map(|r| format!("{:.2},{:.2}", px((r.n as f64).log2()), py(r.log10_mse)))
                .collect();
            let _ = writeln!(
                svg,
                "<polyline class=\"{e}\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
                pts.join(" "),
                colour(e)
            );
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}
