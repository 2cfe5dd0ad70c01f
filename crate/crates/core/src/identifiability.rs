//! Moment Jacobians, numeric rank verdicts and closed-form determinant checks.
//!
//! A latent model is locally identifiable from a set of moments when the
//! Jacobian of the moment map with respect to the parameters has full column
//! rank. This module builds that Jacobian (analytic columns where closed
//! forms exist, central differences elsewhere), decides the rank through the
//! singular values, and compares determinants of specific parametrizations
//! with their reference closed forms.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{build_model, BlockKind, BlockSpec, Bound, LatentModel};
use crate::moments::{self, MomentKind, WvConvention, WvOptions};

/// Where the moments are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Abscissae {
    Lags(Vec<usize>),
    /// Wavelet levels `j` (scales `2^j`).
    Levels(Vec<u32>),
    Frequencies(Vec<f64>),
    Distances(Vec<f64>),
}

impl Abscissae {
    pub fn kind(&self) -> MomentKind {
        match self {
            Abscissae::Lags(_) => MomentKind::Acvf,
            Abscissae::Levels(_) => MomentKind::Wv,
            Abscissae::Frequencies(_) => MomentKind::Sdf,
            Abscissae::Distances(_) => MomentKind::SpatialCov,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Abscissae::Lags(v) => v.len(),
            Abscissae::Levels(v) => v.len(),
            Abscissae::Frequencies(v) => v.len(),
            Abscissae::Distances(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Abscissae::Lags(v) => v.iter().map(|&h| h as f64).collect(),
            Abscissae::Levels(v) => v.iter().map(|&j| j as f64).collect(),
            Abscissae::Frequencies(v) | Abscissae::Distances(v) => v.clone(),
        }
    }
}

/// Default abscissae for a moment kind: lags `0..=p`, levels
/// `1..=max(p, 4)`, distances `0..=p`, frequencies `k / (2(p+1))` for
/// `k = 0..=p`.
pub fn default_abscissae(model: &LatentModel, kind: MomentKind) -> Abscissae {
    let p = model.n_params();
    match kind {
        MomentKind::Acvf => Abscissae::Lags((0..=p).collect()),
        MomentKind::Wv => Abscissae::Levels((1..=p.max(4) as u32).collect()),
        MomentKind::SpatialCov => Abscissae::Distances((0..=p).map(|d| d as f64).collect()),
        MomentKind::Sdf => Abscissae::Frequencies((0..=p).map(|k| k as f64 / (2.0 * (p + 1) as f64)).collect()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMethod {
    /// Analytic columns for AR1 autocovariances and spatial covariances,
    /// central differences for the rest.
    #[default]
    Mixed,
    FiniteDifference,
}

/// How small a singular value may be before it stops counting towards the
/// rank.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Tolerance {
    /// `σ_max · max(H, p) · 2^-40`.
    #[default]
    Default,
    /// `σ_max · factor`.
    Relative(f64),
    Absolute(f64),
}

/// Relative central-difference step, `2^-17`.
pub const DEFAULT_FD_STEP: f64 = 1.0 / 131_072.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianOptions {
    pub method: DerivativeMethod,
    pub fd_step: f64,
    pub wv: WvOptions,
}

impl Default for JacobianOptions {
    fn default() -> Self {
        JacobianOptions {
            method: DerivativeMethod::Mixed,
            fd_step: DEFAULT_FD_STEP,
            wv: WvOptions::default(),
        }
    }
}

/// Moment values at the abscissae (no bound checks on `theta`).
pub fn moment_values(model: &LatentModel, theta: &[f64], abscissae: &Abscissae, wv: &WvOptions) -> Result<Vec<f64>> {
    Ok(match abscissae {
        Abscissae::Lags(lags) => moments::acvf_at(model, theta, lags)?,
        Abscissae::Levels(levels) => moments::wv_at_levels(model, theta, levels, wv)?,
        Abscissae::Frequencies(freqs) => moments::sdf(model, theta, freqs)?.values,
        Abscissae::Distances(d) => moments::spatial_cov(model, theta, d)?.values,
    })
}

/// Step for a central difference at `x` that keeps both stencil points in
/// the open domain of `bound`.
fn fd_step(bound: Bound, x: f64, rel: f64) -> f64 {
    let mut h = rel * x.abs().max(1.0);
    let inside = |v: f64| match bound {
        Bound::Positive => v > 0.0,
        Bound::OpenUnit | Bound::OpenUnitNonZero => v > -1.0 && v < 1.0,
    };
    while !(inside(x - h) && inside(x + h)) && h > 0.0 {
        h *= 0.5;
    }
    h
}

fn fd_jacobian<F>(f: F, x: &[f64], bounds: &[Bound], rel: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let rows = f(x)?.len();
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        let h = fd_step(bounds[k], x[k], rel);
        probe[k] = x[k] + h;
        let up = f(&probe)?;
        probe[k] = x[k] - h;
        let down = f(&probe)?;
        probe[k] = x[k];
        for r in 0..rows {
            jac[(r, k)] = (up[r] - down[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// `∂ acvf(h) / ∂ρ` of an AR1 block.
pub fn ar1_acvf_drho(rho: f64, nu2: f64, lag: usize) -> f64 {
    let d = 1.0 - rho * rho;
    if lag == 0 {
        2.0 * rho * nu2 / (d * d)
    } else {
        let h = lag as f64;
        (h * rho.powi(lag as i32 - 1) * d + 2.0 * rho.powi(lag as i32 + 1)) * nu2 / (d * d)
    }
}

/// `∂ acvf(h) / ∂υ²` of an AR1 block.
pub fn ar1_acvf_dnu2(rho: f64, lag: usize) -> f64 {
    rho.powi(lag as i32) / (1.0 - rho * rho)
}

/// `∂ wv(τ) / ∂ρ` of an AR1 block under the quadratic-form convention
/// (`τ` even).
pub fn ar1_wv_drho(rho: f64, nu2: f64, tau: f64) -> f64 {
    let m = tau / 2.0;
    let mi = m as i32;
    let num = m - 3.0 * rho - m * rho * rho + 4.0 * rho.powi(mi + 1) - rho.powi(2 * mi + 1);
    let dnum = -3.0 - 2.0 * m * rho + 4.0 * (m + 1.0) * rho.powi(mi) - (2.0 * m + 1.0) * rho.powi(2 * mi);
    let den = 2.0 * m * m * (1.0 - rho).powi(2) * (1.0 - rho * rho);
    nu2 * (dnum + 2.0 * num * (1.0 + 2.0 * rho) / (1.0 - rho * rho)) / den
}

/// `∂ cov(d) / ∂φ` of a spatial block with power `c`.
pub fn spatial_dphi(c: i32, phi: f64, sigma2: f64, d: f64) -> f64 {
    let r = (d / phi).powi(c);
    sigma2 * c as f64 * r / phi * (-r).exp()
}

/// `∂ cov(d) / ∂σ²` of a spatial block.
pub fn spatial_dsigma2(c: i32, phi: f64, d: f64) -> f64 {
    (-(d / phi).powi(c)).exp()
}

/// Slot of the parameter a block's moments are linear in, if any.
fn variance_slot(kind: BlockKind) -> Option<usize> {
    match kind {
        BlockKind::WhiteNoise | BlockKind::Quantization | BlockKind::RandomWalk => Some(0),
        BlockKind::Ma1 | BlockKind::Ar1 | BlockKind::SpatialExp | BlockKind::SpatialGauss => Some(1),
        BlockKind::Drift => None,
    }
}

/// Derivative columns of one block evaluated on that block alone: the
/// variance column is the block's moment at unit variance, the rest are
/// central differences.
fn block_columns(
    kind: BlockKind,
    par: &[f64],
    abscissae: &Abscissae,
    options: &JacobianOptions,
) -> Result<DMatrix<f64>> {
    let single = build_model(&[BlockSpec::new(kind, par)?])?;
    let eval = |t: &[f64]| moment_values(&single, t, abscissae, &options.wv);
    let mut local = fd_jacobian(eval, par, kind.param_bounds(), options.fd_step)?;
    if let Some(v) = variance_slot(kind) {
        let mut unit = par.to_vec();
        unit[v] = 1.0;
        let values = eval(&unit)?;
        for (r, x) in values.into_iter().enumerate() {
            local[(r, v)] = x;
        }
    }
    Ok(local)
}

/// `H × p` matrix of moment derivatives with respect to the natural
/// parameters. `theta` must satisfy the per-parameter bounds but not the
/// model's ordering or distinctness constraints, so ties can be probed.
pub fn moment_jacobian(
    model: &LatentModel,
    theta: &[f64],
    abscissae: &Abscissae,
    options: &JacobianOptions,
) -> Result<DMatrix<f64>> {
    model.check_theta(theta)?;
    let p = model.n_params();
    if abscissae.len() < p {
        return Err(Error::InsufficientAbscissae {
            rows: abscissae.len(),
            params: p,
        });
    }
    if options.method == DerivativeMethod::FiniteDifference {
        let bounds: Vec<Bound> = model.layout().iter().map(|s| s.bound).collect();
        return fd_jacobian(
            |t| moment_values(model, t, abscissae, &options.wv),
            theta,
            &bounds,
            options.fd_step,
        );
    }
    // Surfaces abscissa errors (for example scale overflow) up front.
    moment_values(model, theta, abscissae, &options.wv)?;
    let mut jac = DMatrix::zeros(abscissae.len(), p);
    for (index, (kind, par)) in model.components(theta).enumerate() {
        let col = model.offset(index);
        match (kind, abscissae) {
            (BlockKind::Ar1, Abscissae::Lags(lags)) => {
                for (r, &h) in lags.iter().enumerate() {
                    jac[(r, col)] = ar1_acvf_drho(par[0], par[1], h);
                    jac[(r, col + 1)] = ar1_acvf_dnu2(par[0], h);
                }
            }
            (BlockKind::Ar1, Abscissae::Levels(levels)) => {
                let factor = options.wv.convention.factor(BlockKind::Ar1);
                for (r, &j) in levels.iter().enumerate() {
                    let tau = (1u64 << j) as f64;
                    jac[(r, col)] = factor * ar1_wv_drho(par[0], par[1], tau);
                    jac[(r, col + 1)] =
                        factor * moments::block_wv(BlockKind::Ar1, &[par[0], 1.0], tau, &WvConvention::QUADRATIC_FORM);
                }
            }
            (BlockKind::SpatialExp | BlockKind::SpatialGauss, Abscissae::Distances(ds)) => {
                let c = kind.spatial_power().unwrap_or(1);
                for (r, &d) in ds.iter().enumerate() {
                    jac[(r, col)] = spatial_dphi(c, par[0], par[1], d);
                    jac[(r, col + 1)] = spatial_dsigma2(c, par[0], d);
                }
            }
            _ => {
                let local = block_columns(kind, par, abscissae, options)?;
                for c in 0..local.ncols() {
                    jac.set_column(col + c, &local.column(c));
                }
            }
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    FullColumnRank,
    RankDeficient,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::FullColumnRank => "FullColumnRank",
            Verdict::RankDeficient => "RankDeficient",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    pub matrix: DMatrix<f64>,
    pub param_labels: Vec<String>,
    pub singular_values: Vec<f64>,
    pub numeric_rank: usize,
    pub condition_number: f64,
    pub determinant: Option<f64>,
    pub tolerance_used: f64,
    pub verdict: Verdict,
}

impl JacobianReport {
    pub fn from_matrix(matrix: DMatrix<f64>, param_labels: Vec<String>, tol: Tolerance) -> Self {
        let (rows, cols) = matrix.shape();
        let mut singular_values: Vec<f64> = matrix
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        let smax = singular_values.first().copied().unwrap_or(0.0);
        let smin = singular_values.last().copied().unwrap_or(0.0);
        let tolerance_used = match tol {
            Tolerance::Default => smax * rows.max(cols) as f64 * 2f64.powi(-40),
            Tolerance::Relative(r) => smax * r,
            Tolerance::Absolute(a) => a,
        };
        let numeric_rank = singular_values.iter().filter(|&&s| s > tolerance_used).count();
        let determinant = (rows == cols).then(|| matrix.clone().determinant());
        JacobianReport {
            matrix,
            param_labels,
            singular_values,
            numeric_rank,
            condition_number: if smin > 0.0 { smax / smin } else { f64::INFINITY },
            determinant,
            tolerance_used,
            verdict: if numeric_rank == cols {
                Verdict::FullColumnRank
            } else {
                Verdict::RankDeficient
            },
        }
    }

    /// Aligned text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("verdict            {}\n", self.verdict));
        out.push_str(&format!(
            "numeric rank       {} of {}\n",
            self.numeric_rank,
            self.matrix.ncols()
        ));
        out.push_str(&format!("tolerance          {:e}\n", self.tolerance_used));
        out.push_str(&format!("condition number   {:e}\n", self.condition_number));
        if let Some(d) = self.determinant {
            out.push_str(&format!("determinant        {:e}\n", d));
        }
        out.push_str("singular values\n");
        for s in &self.singular_values {
            out.push_str(&format!("  {:e}\n", s));
        }
        out.push_str("jacobian columns\n");
        for label in &self.param_labels {
            out.push_str(&format!("  {label}\n"));
        }
        out
    }

    /// CSV with one `singular_value` per row.
    pub fn singular_values_csv(&self) -> String {
        let mut out = String::from("singular_value\n");
        for s in &self.singular_values {
            out.push_str(&format!("{s}\n"));
        }
        out
    }
}

pub fn identifiability_report(
    model: &LatentModel,
    theta: &[f64],
    abscissae: &Abscissae,
    tol: Tolerance,
    options: &JacobianOptions,
) -> Result<JacobianReport> {
    let jac = moment_jacobian(model, theta, abscissae, options)?;
    Ok(JacobianReport::from_matrix(jac, model.param_labels(), tol))
}

fn check_ar_pair(rho1: f64, nu2_1: f64, rho2: f64, nu2_2: f64) -> Result<()> {
    for (name, v) in [("rho1", rho1), ("rho2", rho2)] {
        if !Bound::OpenUnitNonZero.contains(v) {
            return Err(Error::ParamOutOfRange {
                name: name.into(),
                value: v,
                range: Bound::OpenUnitNonZero.describe(),
            });
        }
    }
    for (name, v) in [("nu2_1", nu2_1), ("nu2_2", nu2_2)] {
        if !Bound::Positive.contains(v) {
            return Err(Error::ParamOutOfRange {
                name: name.into(),
                value: v,
                range: Bound::Positive.describe(),
            });
        }
    }
    if rho1 == rho2 {
        return Err(Error::DegenerateInput(format!(
            "AR coefficients coincide (rho = {rho1})"
        )));
    }
    Ok(())
}

/// Coefficients of the ARMA(2,1) process equal in law to the sum of two
/// AR(1) processes: `(ar1, ar2, ma, innovation variance)` with the
/// invertible MA root.
pub fn arma21_map(rho1: f64, nu2_1: f64, rho2: f64, nu2_2: f64) -> Result<[f64; 4]> {
    check_ar_pair(rho1, nu2_1, rho2, nu2_2)?;
    Ok(arma21_map_unchecked(&[rho1, nu2_1, rho2, nu2_2]))
}

fn arma21_map_unchecked(x: &[f64]) -> [f64; 4] {
    let (r1, v1, r2, v2) = (x[0], x[1], x[2], x[3]);
    let c0 = (1.0 + r2 * r2) * v1 + (1.0 + r1 * r1) * v2;
    let c1 = -r2 * v1 - r1 * v2;
    let q = c1 / c0;
    let ma = if q == 0.0 {
        0.0
    } else {
        (1.0 - (1.0 - 4.0 * q * q).sqrt()) / (2.0 * q)
    };
    [r1 + r2, -r1 * r2, ma, c0 / (1.0 + ma * ma)]
}

/// Alternative parametrization of the same ARMA(2,1) family:
/// `(ρ1 + ρ2, −ρ1ρ2, −(ρ2υ1² + ρ1υ2²)/(υ1² + υ2²), υ1² + υ2²)`.
/// Its Jacobian determinant is `(ρ1 − ρ2)² / (υ1² + υ2²)`.
pub fn arma21_reparametrization(rho1: f64, nu2_1: f64, rho2: f64, nu2_2: f64) -> Result<[f64; 4]> {
    check_ar_pair(rho1, nu2_1, rho2, nu2_2)?;
    Ok(arma21_reparametrization_unchecked(&[rho1, nu2_1, rho2, nu2_2]))
}

fn arma21_reparametrization_unchecked(x: &[f64]) -> [f64; 4] {
    let (r1, v1, r2, v2) = (x[0], x[1], x[2], x[3]);
    let s = v1 + v2;
    [r1 + r2, -r1 * r2, -(r2 * v1 + r1 * v2) / s, s]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterminantCheck {
    pub numeric_det: f64,
    pub formula_det: f64,
    /// `|numeric − formula| / |formula|`; the absolute difference when the
    /// formula is exactly zero.
    pub rel_err: f64,
}

impl DeterminantCheck {
    fn new(numeric_det: f64, formula_det: f64) -> Self {
        let diff = (numeric_det - formula_det).abs();
        DeterminantCheck {
            numeric_det,
            formula_det,
            rel_err: if formula_det == 0.0 {
                diff
            } else {
                diff / formula_det.abs()
            },
        }
    }
}

const AR_PAIR_BOUNDS: [Bound; 4] = [Bound::OpenUnit, Bound::Positive, Bound::OpenUnit, Bound::Positive];

fn det4(f: fn(&[f64]) -> [f64; 4], x: [f64; 4]) -> f64 {
    fd_jacobian(|t| Ok(f(t).to_vec()), &x, &AR_PAIR_BOUNDS, DEFAULT_FD_STEP)
        .map(|j| j.determinant())
        .unwrap_or(f64::NAN)
}

/// Finite-difference Jacobian determinant of [`arma21_reparametrization`]
/// against `(ρ1 − ρ2)² / (υ1² + υ2²)`.
pub fn arma21_det_check(rho1: f64, nu2_1: f64, rho2: f64, nu2_2: f64) -> Result<DeterminantCheck> {
    check_ar_pair(rho1, nu2_1, rho2, nu2_2)?;
    let numeric = det4(arma21_reparametrization_unchecked, [rho1, nu2_1, rho2, nu2_2]);
    let formula = (rho1 - rho2).powi(2) / (nu2_1 + nu2_2);
    Ok(DeterminantCheck::new(numeric, formula))
}

/// Finite-difference Jacobian determinant of the moment-matched
/// [`arma21_map`].
pub fn arma21_map_determinant(rho1: f64, nu2_1: f64, rho2: f64, nu2_2: f64) -> Result<f64> {
    check_ar_pair(rho1, nu2_1, rho2, nu2_2)?;
    Ok(det4(arma21_map_unchecked, [rho1, nu2_1, rho2, nu2_2]))
}

/// `Π υᵢ² Π_{i<j} (ρᵢ − ρⱼ)⁴ / Π (ρᵢ² − 1)²`.
pub fn ar_sum_det_formula(rhos: &[f64], nu2s: &[f64]) -> f64 {
    let mut value: f64 = nu2s.iter().product();
    for i in 0..rhos.len() {
        for j in i + 1..rhos.len() {
            value *= (rhos[i] - rhos[j]).powi(4);
        }
        value /= (rhos[i] * rhos[i] - 1.0).powi(2);
    }
    value
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArSumDetReport {
    /// Determinant of the `2K × 2K` wavelet-variance Jacobian at levels
    /// `1..=2K` against the closed formula.
    pub wv: DeterminantCheck,
    /// `(−1)^K` times the determinant of the autocovariance Jacobian at lags
    /// `0..2K` against the same formula.
    pub acvf: DeterminantCheck,
    /// Set when `K > 4`.
    pub unverified: bool,
}

/// Jacobian determinants of a sum of `K` AR(1) processes in parameter order
/// `(ρ1, υ1², ..., ρK, υK²)` compared with [`ar_sum_det_formula`].
///
/// Ties are allowed (the formula is then zero). `K > 4` requires
/// `allow_unverified`.
pub fn conjecture32_check(rhos: &[f64], nu2s: &[f64], allow_unverified: bool) -> Result<ArSumDetReport> {
    let k = rhos.len();
    if k == 0 || nu2s.len() != k {
        return Err(Error::ParamLength {
            expected: 2 * k.max(1),
            got: rhos.len() + nu2s.len(),
        });
    }
    if k > 4 && !allow_unverified {
        return Err(Error::TooManyComponents(k));
    }
    // Placeholder coefficients only fix the block layout; ascending order
    // keeps the input order so theta below lines up pairwise.
    let placeholder: Vec<BlockSpec> = (0..k)
        .map(|i| BlockSpec::ar1((i + 1) as f64 / (k + 1) as f64, 1.0))
        .collect();
    let model = build_model(&placeholder)?;
    let theta: Vec<f64> = rhos.iter().zip(nu2s).flat_map(|(&r, &v)| [r, v]).collect();
    let opts = JacobianOptions::default();
    let wv_det =
        moment_jacobian(&model, &theta, &Abscissae::Levels((1..=2 * k as u32).collect()), &opts)?.determinant();
    let acvf_det = moment_jacobian(&model, &theta, &Abscissae::Lags((0..2 * k).collect()), &opts)?.determinant();
    let formula = ar_sum_det_formula(rhos, nu2s);
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(ArSumDetReport {
        wv: DeterminantCheck::new(wv_det, formula),
        acvf: DeterminantCheck::new(sign * acvf_det, formula),
        unverified: k > 4,
    })
}

/// `max_f |Φ(2f) − Φ(f)/2|` over the grid, with `Φ = S_{θ0} − S_{θ1}`.
pub fn c10_deviation(model: &LatentModel, theta0: &[f64], theta1: &[f64], freqs: &[f64]) -> Result<f64> {
    moments::require_stationary(model)?;
    model.check_len(theta0)?;
    model.check_len(theta1)?;
    if let Some(&f) = freqs.iter().find(|&&f| !(f > 0.0 && f <= 0.25)) {
        return Err(Error::InvalidConfig(format!("frequency {f} outside (0, 1/4]")));
    }
    let signed = |f: f64| moments::sdf_point(model, theta0, f) - moments::sdf_point(model, theta1, f);
    Ok(freqs
        .iter()
        .map(|&f| (signed(2.0 * f) - 0.5 * signed(f)).abs())
        .fold(0.0, f64::max))
}

/// Determinant of the square wavelet-variance Jacobian at levels `1..=p`.
pub fn wv_determinant(model: &LatentModel, theta: &[f64], convention: &WvConvention) -> Result<f64> {
    let p = model.n_params() as u32;
    let options = JacobianOptions {
        wv: WvOptions {
            convention: *convention,
            ..WvOptions::default()
        },
        ..JacobianOptions::default()
    };
    Ok(moment_jacobian(model, theta, &Abscissae::Levels((1..=p).collect()), &options)?.determinant())
}

/// Reference scale-1..4 determinant of WN + QN + Drift + RW in the order
/// `(σ², Q², ω, γ²)`.
pub fn wn_qn_drift_rw_reference_det(omega: f64) -> f64 {
    2205.0 * omega / 4096.0
}

/// Reference scale-1..4 determinant of Drift + RW + MA1 in the order
/// `(ω, γ², ϱ, ς²)`.
pub fn drift_rw_ma1_reference_det(omega: f64, rho_ma: f64) -> f64 {
    -2205.0 * omega * rho_ma / 256.0
}

/// Exact scale-1..4 determinant of Drift + RW + MA1 under the Haar
/// quadratic-form wavelet variance.
pub fn drift_rw_ma1_exact_det(omega: f64, rho_ma: f64, zeta2: f64) -> f64 {
    2205.0 * omega * zeta2 * (1.0 - rho_ma * rho_ma) / 2048.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub convention: WvConvention,
    /// Reference determinant over the quadratic-form determinant, per sample.
    pub raw_ratios: Vec<f64>,
    /// The factor assigned to the QN block.
    pub quantization_factor: f64,
    pub is_power_of_two: bool,
}

/// Finds the QN convention factor under which the scale-1..4 determinant of
/// WN + QN + Drift + RW equals [`wn_qn_drift_rw_reference_det`]. Only the QN
/// column depends on the factor, so the determinant is linear in it. The
/// ratio must be the same at every sample `(σ², Q², ω, γ²)`.
pub fn calibrate_wv_convention(samples: &[[f64; 4]]) -> Result<Calibration> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("calibration needs at least one sample".into()));
    }
    let mut raw_ratios = Vec::with_capacity(samples.len());
    for s in samples {
        let model = build_model(&[
            BlockSpec::white_noise(s[0]),
            BlockSpec::quantization(s[1]),
            BlockSpec::drift(s[2]),
            BlockSpec::random_walk(s[3]),
        ])?;
        let det = wv_determinant(&model, &model.theta(), &WvConvention::QUADRATIC_FORM)?;
        raw_ratios.push(wn_qn_drift_rw_reference_det(s[2]) / det);
    }
    let first = raw_ratios[0];
    if raw_ratios.iter().any(|r| ((r - first) / first).abs() > 1e-6) {
        return Err(Error::DegenerateInput(
            "determinant ratio varies with the parameters; no constant convention exists".into(),
        ));
    }
    let exponent = first.log2().round();
    let is_power_of_two = ((first - exponent.exp2()) / first).abs() < 1e-6;
    let quantization_factor = if is_power_of_two { exponent.exp2() } else { first };
    Ok(Calibration {
        convention: WvConvention::QUADRATIC_FORM.with_factor(BlockKind::Quantization, quantization_factor),
        raw_ratios,
        quantization_factor,
        is_power_of_two,
    })
}

/// Random admissible instances for the rank suites.
pub mod sampling {
    use super::*;

    pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * rng.random::<f64>()
    }

    /// `k` AR coefficients with `|ρ| ∈ [0.05, 0.95]` and pairwise gap ≥ 0.05.
    pub fn separated_rhos(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        loop {
            let rhos: Vec<f64> = (0..k)
                .map(|_| {
                    let m = uniform(rng, 0.05, 0.95);
                    if rng.random::<bool>() {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
            let separated = (0..k).all(|i| (i + 1..k).all(|j| (rhos[i] - rhos[j]).abs() >= 0.05));
            if separated {
                return rhos;
            }
        }
    }

    /// `n` ranges in `[1, 4]` with pairwise gap ≥ 0.25.
    pub fn separated_phis(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        loop {
            let phis: Vec<f64> = (0..n).map(|_| uniform(rng, 1.0, 4.0)).collect();
            if (0..n).all(|i| (i + 1..n).all(|j| (phis[i] - phis[j]).abs() >= 0.25)) {
                return phis;
            }
        }
    }

    pub fn variance(rng: &mut ChaCha8Rng) -> f64 {
        uniform(rng, 0.2, 5.0)
    }

    /// WN + QN + `k` AR1.
    pub fn model1(rng: &mut ChaCha8Rng, k: usize) -> Vec<BlockSpec> {
        let mut blocks = vec![
            BlockSpec::white_noise(variance(rng)),
            BlockSpec::quantization(variance(rng)),
        ];
        for rho in separated_rhos(rng, k) {
            blocks.push(BlockSpec::ar1(rho, variance(rng)));
        }
        blocks
    }

    /// MA1 + `k` AR1.
    pub fn model2(rng: &mut ChaCha8Rng, k: usize) -> Vec<BlockSpec> {
        let mut blocks = vec![BlockSpec::ma1(uniform(rng, -0.9, 0.9), variance(rng))];
        for rho in separated_rhos(rng, k) {
            blocks.push(BlockSpec::ar1(rho, variance(rng)));
        }
        blocks
    }

    pub fn spatial(rng: &mut ChaCha8Rng, n: usize, gaussian: bool) -> Vec<BlockSpec> {
        separated_phis(rng, n)
            .into_iter()
            .map(|phi| {
                let s = variance(rng);
                if gaussian {
                    BlockSpec::spatial_gauss(phi, s)
                } else {
                    BlockSpec::spatial_exp(phi, s)
                }
            })
            .collect()
    }

    pub fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankFamily {
    /// WN + QN + K AR1, K ∈ {1, 2, 3}, autocovariance lags `0..=p`.
    Model1,
    /// MA1 + K AR1, K ∈ {1, 2, 3}, autocovariance lags `0..=p`.
    Model2,
    /// N exponential blocks, N ∈ {1, 2, 3}, distances `0..=2N`.
    SpatialExp,
    /// N Gaussian blocks, N ∈ {1, 2, 3}, distances `0..=2N`.
    SpatialGauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankSuiteSummary {
    pub instances: usize,
    pub full_rank: usize,
    pub deficient: usize,
}

/// One random instance of the family; with `tie` the second AR coefficient
/// (or range) is overwritten by the first, bypassing model validation.
pub fn rank_instance(family: RankFamily, seed: u64, index: usize, tie: bool) -> Result<JacobianReport> {
    let mut rng = sampling::instance_rng(seed, index);
    let size = if tie { 2 + index % 2 } else { 1 + index % 3 };
    let blocks = match family {
        RankFamily::Model1 => sampling::model1(&mut rng, size),
        RankFamily::Model2 => sampling::model2(&mut rng, size),
        RankFamily::SpatialExp => sampling::spatial(&mut rng, size, false),
        RankFamily::SpatialGauss => sampling::spatial(&mut rng, size, true),
    };
    let model = build_model(&blocks)?;
    let mut theta = model.theta();
    let first = model
        .kinds()
        .position(|k| k == BlockKind::Ar1 || k.is_spatial())
        .unwrap_or(0);
    if tie {
        let (a, b) = (model.offset(first), model.offset(first + 1));
        theta[b] = theta[a];
    }
    let abscissae = match family {
        RankFamily::Model1 | RankFamily::Model2 => Abscissae::Lags((0..=model.n_params()).collect()),
        RankFamily::SpatialExp | RankFamily::SpatialGauss => {
            Abscissae::Distances((0..=2 * size).map(|d| d as f64).collect())
        }
    };
    identifiability_report(
        &model,
        &theta,
        &abscissae,
        Tolerance::Default,
        &JacobianOptions::default(),
    )
}

pub fn run_rank_suite(
    family: RankFamily,
    instances: usize,
    seed: u64,
    tie: bool,
    exec: Execution,
) -> Result<RankSuiteSummary> {
    let verdicts = exec.map_indexed(instances, |i| rank_instance(family, seed, i, tie).map(|r| r.verdict));
    let mut summary = RankSuiteSummary {
        instances,
        full_rank: 0,
        deficient: 0,
    };
    for v in verdicts {
        match v? {
            Verdict::FullColumnRank => summary.full_rank += 1,
            Verdict::RankDeficient => summary.deficient += 1,
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_wv_derivative_matches_difference() {
        for rho in [-0.8, -0.2, 0.3, 0.95] {
            for tau in [2.0, 8.0, 64.0] {
                let c = WvConvention::QUADRATIC_FORM;
                let h = 1e-3;
                let wv = |r: f64| moments::block_wv(BlockKind::Ar1, &[r, 1.5], tau, &c);
                let fd = (wv(rho - 2.0 * h) - 8.0 * wv(rho - h) + 8.0 * wv(rho + h) - wv(rho + 2.0 * h)) / (12.0 * h);
                let exact = ar1_wv_drho(rho, 1.5, tau);
                assert!(
                    (fd - exact).abs() < 1e-7 * exact.abs().max(1.0),
                    "{rho} {tau}: {fd} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn ar1_analytic_examples() {
        assert!((ar1_acvf_dnu2(0.5, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((ar1_acvf_drho(0.5, 1.0, 0) - 16.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn insufficient_abscissae() {
        let m = build_model(&[BlockSpec::white_noise(1.0), BlockSpec::ar1(0.5, 1.0)]).unwrap();
        let err = moment_jacobian(
            &m,
            &m.theta(),
            &Abscissae::Lags(vec![0, 1]),
            &JacobianOptions::default(),
        );
        assert_eq!(err.unwrap_err(), Error::InsufficientAbscissae { rows: 2, params: 3 });
    }

    #[test]
    fn fd_step_stays_inside() {
        let h = fd_step(Bound::OpenUnit, 0.999_999_9, 1e-3);
        assert!(0.999_999_9 + h < 1.0);
        let h = fd_step(Bound::Positive, 1e-9, 1e-3);
        assert!(1e-9 - h > 0.0);
    }

    #[test]
    fn arma_examples() {
        let g = arma21_map(0.5, 1.0, -0.3, 1.0).unwrap();
        assert!((g[0] - 0.2).abs() < 1e-15 && (g[1] - 0.15).abs() < 1e-15);
        let g = arma21_map(0.5, 1.0, 1e-6, 1.0).unwrap();
        assert!((g[1] + 5e-7).abs() < 1e-18);
        let check = arma21_det_check(0.5, 1.0, -0.3, 1.0).unwrap();
        assert!((check.formula_det - 0.32).abs() < 1e-15);
        assert!(check.rel_err < 1e-6);
        assert!(matches!(arma21_map(0.4, 1.0, 0.4, 2.0), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn ar_sum_formula_examples() {
        assert!((ar_sum_det_formula(&[0.5], &[1.0]) - 1.0 / 0.5625).abs() < 1e-12);
        let expect = 0.3f64.powi(4) / (0.91f64.powi(2) * 0.64f64.powi(2));
        assert!((ar_sum_det_formula(&[0.3, 0.6], &[1.0, 1.0]) - expect).abs() < 1e-15);
        assert!((expect - 0.023880).abs() < 5e-7);
        let tie = conjecture32_check(&[0.4, 0.4], &[1.0, 2.0], false).unwrap();
        assert_eq!(tie.wv.formula_det, 0.0);
        assert!(matches!(
            conjecture32_check(&[0.1, 0.2, 0.3, 0.4, 0.5], &[1.0; 5], false),
            Err(Error::TooManyComponents(5))
        ));
        assert!(
            conjecture32_check(&[0.1, 0.2, 0.3, 0.4, 0.5], &[1.0; 5], true)
                .unwrap()
                .unverified
        );
    }

    #[test]
    fn c10_examples() {
        let wn = build_model(&[BlockSpec::white_noise(1.0)]).unwrap();
        let grid: Vec<f64> = (1..=25).map(|i| i as f64 / 100.0).collect();
        assert_eq!(c10_deviation(&wn, &[2.0], &[2.0], &grid).unwrap(), 0.0);
        assert!((c10_deviation(&wn, &[2.0], &[1.0], &grid).unwrap() - 0.5).abs() < 1e-15);
        assert!(c10_deviation(&wn, &[2.0], &[1.0], &[0.3]).is_err());
    }
}
