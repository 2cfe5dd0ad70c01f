//! Sample moments and minimum-distance estimators.
//!
//! GMWM matches the Haar wavelet variance of the data to the model's,
//! GMM matches the sample autocovariance. Both minimize a weighted quadratic
//! distance over the unconstrained transform of the parameter space with a
//! deterministic multi-start Nelder–Mead search.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::{from_unconstrained, to_unconstrained, BlockKind, Domain, LatentModel};
use crate::moments::{self, MomentKind, MomentVector, WvConvention, WvOptions};
use crate::optim::{levenberg_marquardt, nelder_mead, NelderMeadOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct WvEstimate {
    pub levels: Vec<u32>,
    /// `τ_j = 2^j`.
    pub scales: Vec<f64>,
    pub values: Vec<f64>,
    /// Number of filter positions `M_j = n − τ_j + 1`.
    pub num_coeffs: Vec<usize>,
    /// `ν̂_j² · sqrt(2 / M_j)`.
    pub std_errors: Vec<f64>,
}

impl WvEstimate {
    pub fn num_scales(&self) -> usize {
        self.values.len()
    }

    /// Builds an estimate from given values (for example theoretical ones)
    /// with the coefficient counts of a series of length `n`.
    pub fn from_values(values: Vec<f64>, n: usize) -> Result<Self> {
        let levels: Vec<u32> = (1..=values.len() as u32).collect();
        check_length(n, levels.len() as u32)?;
        let num_coeffs: Vec<usize> = levels.iter().map(|&j| n - (1usize << j) + 1).collect();
        let std_errors = values
            .iter()
            .zip(&num_coeffs)
            .map(|(v, &m)| v * (2.0 / m as f64).sqrt())
            .collect();
        Ok(WvEstimate {
            scales: levels.iter().map(|&j| (1u64 << j) as f64).collect(),
            levels,
            values,
            num_coeffs,
            std_errors,
        })
    }

    pub fn to_moment_vector(&self) -> MomentVector {
        MomentVector {
            kind: MomentKind::Wv,
            abscissae: self.scales.clone(),
            values: self.values.clone(),
        }
    }
}

fn check_length(n: usize, levels: u32) -> Result<()> {
    if levels == 0 || levels >= usize::BITS || (1usize << levels) > n {
        return Err(Error::SeriesTooShort { len: n, levels });
    }
    Ok(())
}

/// Largest usable number of levels for a series of length `n`.
pub fn max_levels(n: usize) -> u32 {
    if n < 2 {
        0
    } else {
        usize::BITS - 1 - n.leading_zeros()
    }
}

/// Levels dropped from the top of the usable range by [`default_levels`]:
/// the coarsest kept filter spans at most `n / 32`.
pub const COARSE_LEVELS_DROPPED: u32 = 5;

/// Default number of levels for a model with `params` parameters:
/// `floor(log2 n) − 5`, raised to `params` (and to 1) when that is smaller,
/// never above `floor(log2 n)`.
///
/// The per-scale standard error treats the `M_j` overlapping coefficients as
/// independent, which overstates the information at coarse scales; with
/// them included the fit is pulled toward whichever coarse estimate happens
/// to be small.
pub fn default_levels(n: usize, params: usize) -> u32 {
    let top = max_levels(n);
    top.saturating_sub(COARSE_LEVELS_DROPPED)
        .max(params as u32)
        .max(1)
        .min(top)
}

/// Haar wavelet variance at levels `1..=levels` over all full-overlap filter
/// positions.
pub fn wv_estimate(series: &[f64], levels: u32) -> Result<WvEstimate> {
    let n = series.len();
    check_length(n, levels)?;
    // The filter annihilates constants, so shifting by the first value is
    // free and keeps the prefix sums small.
    let origin = series[0];
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &x in series {
        acc += x - origin;
        prefix.push(acc);
    }
    let values: Vec<f64> = (1..=levels)
        .map(|j| {
            let tau = 1usize << j;
            let m = tau / 2;
            let count = n - tau + 1;
            let sum: f64 = (0..count)
                .map(|t| {
                    let w = (prefix[t + tau] - 2.0 * prefix[t + m] + prefix[t]) / tau as f64;
                    w * w
                })
                .sum();
            sum / count as f64
        })
        .collect();
    WvEstimate::from_values(values, n)
}

/// Mean-removed autocovariance with denominator `n`, lags `0..=max_lag`.
pub fn sample_acvf(series: &[f64], max_lag: usize) -> Result<MomentVector> {
    let n = series.len();
    if max_lag >= n {
        return Err(Error::LagTooLarge { lag: max_lag, len: n });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let values = (0..=max_lag)
        .map(|h| {
            centered[..n - h]
                .iter()
                .zip(&centered[h..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    Ok(MomentVector {
        kind: MomentKind::Acvf,
        abscissae: (0..=max_lag).map(|h| h as f64).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub matrix: DMatrix<f64>,
    /// Levels whose standard error was zero; their weight falls back to 1.
    pub zero_variance_levels: Vec<u32>,
}

impl Weights {
    pub fn identity(size: usize) -> Self {
        Weights {
            matrix: DMatrix::identity(size, size),
            zero_variance_levels: Vec::new(),
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        self.zero_variance_levels
            .iter()
            .map(|j| format!("zero variance at level {j}: weight set to 1"))
            .collect()
    }
}

/// `diag(1 / SE_j²)`.
pub fn default_weights(estimate: &WvEstimate) -> Weights {
    let k = estimate.num_scales();
    let mut matrix = DMatrix::zeros(k, k);
    let mut zero_variance_levels = Vec::new();
    for (i, se) in estimate.std_errors.iter().enumerate() {
        if *se > 0.0 && se.is_finite() {
            matrix[(i, i)] = 1.0 / (se * se);
        } else {
            matrix[(i, i)] = 1.0;
            zero_variance_levels.push(estimate.levels[i]);
        }
    }
    Weights {
        matrix,
        zero_variance_levels,
    }
}

/// Identity weights for the autocovariance path.
pub fn default_acvf_weights(acvf: &MomentVector) -> Weights {
    Weights::identity(acvf.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Total number of starting points (heuristic start plus perturbations).
    pub starts: usize,
    pub seed: u64,
    /// Standard deviation of the start perturbations in unconstrained space.
    pub perturbation: f64,
    /// Extra Nelder–Mead runs from the incumbent of each start.
    pub restarts: usize,
    pub nelder_mead: NelderMeadOptions,
    /// Iteration cap of the Levenberg–Marquardt polish after each start.
    pub polish_iter: usize,
    pub convention: WvConvention,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 10,
            seed: 0,
            perturbation: 1.0,
            restarts: 3,
            nelder_mead: NelderMeadOptions::default(),
            polish_iter: 1000,
            convention: WvConvention::QUADRATIC_FORM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start_points_used: usize,
    pub warnings: Vec<String>,
}

fn check_weights(w: &DMatrix<f64>, size: usize) -> Result<()> {
    if w.nrows() != size || w.ncols() != size {
        return Err(Error::WeightShape {
            rows: w.nrows(),
            cols: w.ncols(),
            expected: size,
        });
    }
    Ok(())
}

fn quadratic_distance(r: &[f64], w: &DMatrix<f64>, diagonal: bool) -> f64 {
    if diagonal {
        return r.iter().enumerate().map(|(i, x)| w[(i, i)] * x * x).sum();
    }
    let mut total = 0.0;
    for i in 0..r.len() {
        for j in 0..r.len() {
            total += r[i] * w[(i, j)] * r[j];
        }
    }
    total
}

fn is_diagonal(w: &DMatrix<f64>) -> bool {
    (0..w.nrows()).all(|i| (0..w.ncols()).all(|j| i == j || w[(i, j)] == 0.0))
}

/// Reorders AR1 blocks by ascending coefficient (the moment maps are
/// symmetric in them).
fn canonical_ar_order(model: &LatentModel, theta: &mut [f64]) {
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    let mut first = None;
    for (i, (kind, p)) in model.components(theta).enumerate() {
        if kind == BlockKind::Ar1 {
            first.get_or_insert(model.offset(i));
            pairs.push((p[0], p[1]));
        }
    }
    if let Some(start) = first {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (k, (r, v)) in pairs.into_iter().enumerate() {
            theta[start + 2 * k] = r;
            theta[start + 2 * k + 1] = v;
        }
    }
}

/// Heuristic starting point: the variance budget `var` is split evenly over
/// the stationary blocks, `trend` (a large-scale wavelet variance at scale
/// `tau`) over RW and Drift, coefficients at ±0.5 (AR1 blocks spread over
/// `(0, 1)`).
fn heuristic_start(model: &LatentModel, var: f64, trend: Option<(f64, f64)>, sign: f64) -> Vec<f64> {
    let var = if var.is_finite() && var > 0.0 { var } else { 1.0 };
    let stationary = model.kinds().filter(|k| k.is_stationary()).count().max(1) as f64;
    let share = var / stationary;
    let k_ar = model.count(BlockKind::Ar1);
    let nonstationary = model.kinds().filter(|k| !k.is_stationary()).count().max(1) as f64;
    let (big, tau) = trend.unwrap_or((var, 2.0));
    let big = if big.is_finite() && big > 0.0 {
        big / nonstationary
    } else {
        1.0
    };
    let mut theta = Vec::with_capacity(model.n_params());
    let mut ar_index = 0;
    for kind in model.kinds() {
        match kind {
            BlockKind::WhiteNoise => theta.push(share),
            BlockKind::Quantization => theta.push(share / 2.0),
            BlockKind::Drift => theta.push(4.0 * big.sqrt() / tau),
            BlockKind::RandomWalk => theta.push(12.0 * big / tau),
            BlockKind::Ma1 => {
                let rho = 0.5 * sign;
                theta.extend([rho, share / (1.0 + rho * rho)]);
            }
            BlockKind::Ar1 => {
                ar_index += 1;
                let rho = sign * ar_index as f64 / (k_ar + 1) as f64;
                theta.extend([rho, share * (1.0 - rho * rho)]);
            }
            BlockKind::SpatialExp | BlockKind::SpatialGauss => theta.extend([1.0, share]),
        }
    }
    canonical_ar_order(model, &mut theta);
    theta
}

/// Start `s` perturbs `bases[s % bases.len()]`, runs Nelder–Mead to a basin,
/// then a Levenberg–Marquardt polish on the residual `target − fitted(θ)`.
fn minimize<R>(
    model: &LatentModel,
    bases: &[Vec<f64>],
    residual: R,
    w: &DMatrix<f64>,
    options: &FitOptions,
) -> Result<FitResult>
where
    R: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let bases: Vec<Vec<f64>> = bases
        .iter()
        .map(|b| to_unconstrained(model, b))
        .collect::<Result<_>>()?;
    let diagonal = is_diagonal(w);
    let objective = |theta: &[f64]| match residual(theta) {
        Some(r) => quadratic_distance(&r, w, diagonal),
        None => f64::INFINITY,
    };
    let in_u = |u: &[f64]| objective(&from_unconstrained(model, u));
    let starts = options.starts.max(1);
    let mut best: Option<(f64, Vec<f64>, usize, bool)> = None;
    for s in 0..starts {
        let mut u = bases[s % bases.len()].clone();
        if s >= bases.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(s as u64);
            for x in u.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += options.perturbation * z;
            }
        }
        let mut run = nelder_mead(in_u, &u, &options.nelder_mead);
        let mut iterations = run.iterations;
        for _ in 0..options.restarts {
            let again = nelder_mead(in_u, &run.x, &options.nelder_mead);
            iterations += again.iterations;
            let improved = again.value < run.value;
            if again.value <= run.value {
                run = again;
            }
            if !improved {
                break;
            }
        }
        let polish = levenberg_marquardt(
            |u| residual(&from_unconstrained(model, u)),
            w,
            &run.x,
            options.polish_iter,
        );
        iterations += polish.iterations;
        let polished = in_u(&polish.x);
        if polished < run.value {
            run.value = polished;
            run.x = polish.x;
        }
        if best.as_ref().is_none_or(|b| run.value < b.0) {
            best = Some((run.value, run.x, iterations, run.converged));
        }
    }
    let (value, u, iterations, converged) = best.expect("at least one start");
    let mut theta_hat = from_unconstrained(model, &u);
    canonical_ar_order(model, &mut theta_hat);
    let mut warnings = Vec::new();
    let class = model.classify();
    if class.is_caution() {
        warnings.push(format!(
            "model is not covered by an identifiability result: {}",
            class.notes
        ));
    }
    if !converged {
        warnings.push("simplex search hit the iteration limit".into());
    }
    Ok(FitResult {
        theta_hat,
        objective_value: value,
        iterations,
        converged,
        start_points_used: starts,
        warnings,
    })
}

/// `argmin (ν̂ − ν(θ))ᵀ Ω (ν̂ − ν(θ))`.
pub fn gmwm_fit(model: &LatentModel, wv: &WvEstimate, omega: &DMatrix<f64>, options: &FitOptions) -> Result<FitResult> {
    if model.domain() != Domain::TimeSeries {
        return Err(Error::SpatialModel);
    }
    let (j, p) = (wv.num_scales(), model.n_params());
    if j < p {
        return Err(Error::InsufficientScales { scales: j, params: p });
    }
    check_weights(omega, j)?;
    let wv_options = WvOptions {
        convention: options.convention,
        ..WvOptions::default()
    };
    let residual = |theta: &[f64]| {
        let fitted = moments::wv_at_levels(model, theta, &wv.levels, &wv_options).ok()?;
        Some(wv.values.iter().zip(&fitted).map(|(a, b)| a - b).collect())
    };
    let last = wv.num_scales() - 1;
    // Wavelet variances do not reveal the sign of the coefficients.
    let bases = [1.0, -1.0].map(|sign| {
        heuristic_start(
            model,
            2.0 * wv.values[0],
            Some((wv.values[last], wv.scales[last])),
            sign,
        )
    });
    let mut fit = minimize(model, &bases, residual, omega, options)?;
    if !omega.iter().all(|x| x.is_finite()) {
        fit.warnings.push("weight matrix has non-finite entries".into());
    }
    Ok(fit)
}

/// `argmin (φ̂ − φ(θ))ᵀ W (φ̂ − φ(θ))` over the lags of `acvf_hat`.
pub fn gmm_fit(
    model: &LatentModel,
    acvf_hat: &MomentVector,
    w: &DMatrix<f64>,
    options: &FitOptions,
) -> Result<FitResult> {
    moments::require_stationary(model)?;
    if acvf_hat.kind != MomentKind::Acvf {
        return Err(Error::InvalidConfig("gmm_fit expects an autocovariance vector".into()));
    }
    let (l, p) = (acvf_hat.len(), model.n_params());
    if l < p {
        return Err(Error::InsufficientLags { lags: l, params: p });
    }
    check_weights(w, l)?;
    let lags: Vec<usize> = acvf_hat.abscissae.iter().map(|&h| h as usize).collect();
    let residual = |theta: &[f64]| {
        let fitted = moments::acvf_at(model, theta, &lags).ok()?;
        Some(acvf_hat.values.iter().zip(&fitted).map(|(a, b)| a - b).collect())
    };
    let var = acvf_hat.values[0];
    let sign = match acvf_hat.values.get(1) {
        Some(&c1) if c1 < 0.0 => -1.0,
        _ => 1.0,
    };
    let start = heuristic_start(model, var, None, sign);
    minimize(model, &[start], residual, w, options)
}
