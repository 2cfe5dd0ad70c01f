//! Theoretical second-order moments of latent models.
//!
//! Every moment of a latent model is the sum of the moments of its blocks
//! (the blocks are independent), so each quantity is computed per block and
//! summed.
//!
//! Conventions:
//! - discrete time with unit sampling interval; frequencies live in `[0, 1/2]`
//!   and the spectral density is normalized so that
//!   `acvf(h) = ∫_{-1/2}^{1/2} S(f) e^{i2πfh} df`;
//! - the Haar wavelet variance at level `j` (scale `τ = 2^j`) is the variance
//!   of the level-`j` Haar filter output, the filter having `τ/2` taps equal to
//!   `+1/τ` followed by `τ/2` taps equal to `-1/τ`;
//! - for the random walk and the drift the filter is applied to the
//!   (nonstationary) path itself; the filter annihilates constants so the
//!   result does not depend on the starting point.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{BlockKind, Domain, LatentModel};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Acvf,
    Sdf,
    Wv,
    SpatialCov,
}

impl MomentKind {
    pub fn label(self) -> &'static str {
        match self {
            MomentKind::Acvf => "acvf",
            MomentKind::Sdf => "sdf",
            MomentKind::Wv => "wv",
            MomentKind::SpatialCov => "spatial_cov",
        }
    }
}

/// Abscissae (lags, frequencies, scales `τ = 2^j` or distances) paired with
/// moment values.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub kind: MomentKind,
    pub abscissae: Vec<f64>,
    pub values: Vec<f64>,
}

impl MomentVector {
    /// CSV with header `kind,abscissa,value`, LF line endings and
    /// shortest round-trip decimal formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,abscissa,value\n");
        for (x, v) in self.abscissae.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{},{}", self.kind.label(), x, v);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-block multiplicative constants applied to the theoretical wavelet
/// variance. The plain Haar quadratic form corresponds to all ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WvConvention {
    pub white_noise: f64,
    pub quantization: f64,
    pub drift: f64,
    pub random_walk: f64,
    pub ma1: f64,
    pub ar1: f64,
}

impl WvConvention {
    /// Haar filter quadratic form (QN wavelet variance `6 Q² / τ²`).
    pub const QUADRATIC_FORM: WvConvention = WvConvention {
        white_noise: 1.0,
        quantization: 1.0,
        drift: 1.0,
        random_walk: 1.0,
        ma1: 1.0,
        ar1: 1.0,
    };

    /// Convention reproducing the reference scale-1..4 determinant
    /// `2205 ω / 4096` of the WN + QN + Drift + RW family: the QN block is
    /// halved (QN wavelet variance `3 Q² / τ²`). Derived by
    /// [`crate::identifiability::calibrate_wv_convention`]; see
    /// `docs/wv_convention.md`.
    pub const CALIBRATED: WvConvention = WvConvention {
        quantization: 0.5,
        ..WvConvention::QUADRATIC_FORM
    };

    pub fn factor(&self, kind: BlockKind) -> f64 {
        match kind {
            BlockKind::WhiteNoise => self.white_noise,
            BlockKind::Quantization => self.quantization,
            BlockKind::Drift => self.drift,
            BlockKind::RandomWalk => self.random_walk,
            BlockKind::Ma1 => self.ma1,
            BlockKind::Ar1 => self.ar1,
            BlockKind::SpatialExp | BlockKind::SpatialGauss => 1.0,
        }
    }

    pub fn with_factor(mut self, kind: BlockKind, value: f64) -> WvConvention {
        match kind {
            BlockKind::WhiteNoise => self.white_noise = value,
            BlockKind::Quantization => self.quantization = value,
            BlockKind::Drift => self.drift = value,
            BlockKind::RandomWalk => self.random_walk = value,
            BlockKind::Ma1 => self.ma1 = value,
            BlockKind::Ar1 => self.ar1 = value,
            BlockKind::SpatialExp | BlockKind::SpatialGauss => {}
        }
        self
    }
}

impl Default for WvConvention {
    fn default() -> Self {
        WvConvention::QUADRATIC_FORM
    }
}

/// Largest scale `τ` accepted by default.
pub const DEFAULT_MAX_TAU: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WvOptions {
    pub convention: WvConvention,
    pub max_tau: u64,
}

impl Default for WvOptions {
    fn default() -> Self {
        WvOptions {
            convention: WvConvention::QUADRATIC_FORM,
            max_tau: DEFAULT_MAX_TAU,
        }
    }
}

pub(crate) fn require_time_series(model: &LatentModel) -> Result<()> {
    match model.domain() {
        Domain::TimeSeries => Ok(()),
        Domain::Spatial => Err(Error::SpatialModel),
    }
}

pub(crate) fn require_stationary(model: &LatentModel) -> Result<()> {
    require_time_series(model)?;
    match model.kinds().find(|k| !k.is_stationary()) {
        Some(kind) => Err(Error::NonstationaryBlock(kind)),
        None => Ok(()),
    }
}

/// Autocovariance of one stationary block at `lag`.
pub fn block_acvf(kind: BlockKind, p: &[f64], lag: usize) -> f64 {
    match kind {
        BlockKind::WhiteNoise => {
            if lag == 0 {
                p[0]
            } else {
                0.0
            }
        }
        BlockKind::Quantization => match lag {
            0 => 2.0 * p[0],
            1 => -p[0],
            _ => 0.0,
        },
        BlockKind::Ma1 => {
            let (rho, zeta2) = (p[0], p[1]);
            match lag {
                0 => (1.0 + rho * rho) * zeta2,
                1 => rho * zeta2,
                _ => 0.0,
            }
        }
        BlockKind::Ar1 => {
            let (rho, nu2) = (p[0], p[1]);
            rho.powi(lag as i32) * nu2 / (1.0 - rho * rho)
        }
        _ => f64::NAN,
    }
}

/// Autocovariance at arbitrary lags.
pub fn acvf_at(model: &LatentModel, theta: &[f64], lags: &[usize]) -> Result<Vec<f64>> {
    require_stationary(model)?;
    model.check_len(theta)?;
    Ok(lags
        .iter()
        .map(|&h| model.components(theta).map(|(kind, p)| block_acvf(kind, p, h)).sum())
        .collect())
}

/// Autocovariance at lags `0..=max_lag`.
pub fn acvf(model: &LatentModel, theta: &[f64], max_lag: usize) -> Result<MomentVector> {
    let lags: Vec<usize> = (0..=max_lag).collect();
    let values = acvf_at(model, theta, &lags)?;
    Ok(MomentVector {
        kind: MomentKind::Acvf,
        abscissae: lags.into_iter().map(|h| h as f64).collect(),
        values,
    })
}

/// Spectral density of one stationary block at frequency `f`.
pub fn block_sdf(kind: BlockKind, p: &[f64], f: f64) -> f64 {
    let c = (2.0 * PI * f).cos();
    match kind {
        BlockKind::WhiteNoise => p[0],
        BlockKind::Quantization => 4.0 * p[0] * (PI * f).sin().powi(2),
        BlockKind::Ma1 => p[1] * (1.0 + 2.0 * p[0] * c + p[0] * p[0]),
        BlockKind::Ar1 => p[1] / (1.0 - 2.0 * p[0] * c + p[0] * p[0]),
        _ => f64::NAN,
    }
}

pub(crate) fn sdf_point(model: &LatentModel, theta: &[f64], f: f64) -> f64 {
    model.components(theta).map(|(kind, p)| block_sdf(kind, p, f)).sum()
}

pub fn sdf(model: &LatentModel, theta: &[f64], freqs: &[f64]) -> Result<MomentVector> {
    require_stationary(model)?;
    model.check_len(theta)?;
    Ok(MomentVector {
        kind: MomentKind::Sdf,
        abscissae: freqs.to_vec(),
        values: freqs.iter().map(|&f| sdf_point(model, theta, f)).collect(),
    })
}

/// Recovers the autocovariance at `lag` by integrating the spectral density.
pub fn acvf_from_sdf(model: &LatentModel, theta: &[f64], lag: usize) -> Result<f64> {
    require_stationary(model)?;
    model.check_len(theta)?;
    let h = lag as f64;
    let integrand = |f: f64| 2.0 * sdf_point(model, theta, f) * (2.0 * PI * f * h).cos();
    Ok(quad::integrate(integrand, 0.0, 0.5, 8 + 2 * lag, 1e-13))
}

/// Closed-form Haar wavelet variance of one block at scale `tau`.
pub fn block_wv(kind: BlockKind, p: &[f64], tau: f64, convention: &WvConvention) -> f64 {
    let base = match kind {
        BlockKind::WhiteNoise => p[0] / tau,
        BlockKind::Quantization => 6.0 * p[0] / (tau * tau),
        BlockKind::Drift => p[0] * p[0] * tau * tau / 16.0,
        BlockKind::RandomWalk => p[0] * (tau * tau + 2.0) / (12.0 * tau),
        BlockKind::Ma1 => {
            let (rho, zeta2) = (p[0], p[1]);
            zeta2 * ((1.0 + rho).powi(2) * tau - 6.0 * rho) / (tau * tau)
        }
        BlockKind::Ar1 => {
            let (rho, nu2) = (p[0], p[1]);
            let m = tau / 2.0;
            let mi = m as i32;
            let num = m - 3.0 * rho - m * rho * rho + 4.0 * rho.powi(mi + 1) - rho.powi(2 * mi + 1);
            nu2 * num / (2.0 * m * m * (1.0 - rho).powi(2) * (1.0 - rho * rho))
        }
        BlockKind::SpatialExp | BlockKind::SpatialGauss => f64::NAN,
    };
    base * convention.factor(kind)
}

fn check_level(level: u32, max_tau: u64) -> Result<f64> {
    if level == 0 || level >= 63 || (1u64 << level) > max_tau {
        return Err(Error::ScaleOverflow { level, cap: max_tau });
    }
    Ok((1u64 << level) as f64)
}

/// Theoretical wavelet variance at the given levels `j` (scales `2^j`).
pub fn wv_at_levels(model: &LatentModel, theta: &[f64], levels: &[u32], options: &WvOptions) -> Result<Vec<f64>> {
    require_time_series(model)?;
    model.check_len(theta)?;
    levels
        .iter()
        .map(|&j| {
            let tau = check_level(j, options.max_tau)?;
            Ok(model
                .components(theta)
                .map(|(kind, p)| block_wv(kind, p, tau, &options.convention))
                .sum())
        })
        .collect()
}

/// Theoretical Haar wavelet variance at levels `1..=num_scales`
/// (quadratic-form convention).
pub fn wv_theoretical(model: &LatentModel, theta: &[f64], num_scales: u32) -> Result<MomentVector> {
    wv_theoretical_with(model, theta, num_scales, &WvOptions::default())
}

pub fn wv_theoretical_with(
    model: &LatentModel,
    theta: &[f64],
    num_scales: u32,
    options: &WvOptions,
) -> Result<MomentVector> {
    if num_scales == 0 {
        return Err(Error::InvalidConfig("at least one wavelet scale is required".into()));
    }
    let levels: Vec<u32> = (1..=num_scales).collect();
    let values = wv_at_levels(model, theta, &levels, options)?;
    Ok(MomentVector {
        kind: MomentKind::Wv,
        abscissae: levels.iter().map(|&j| (1u64 << j) as f64).collect(),
        values,
    })
}

/// Level-`j` Haar wavelet filter.
pub fn haar_filter(level: u32) -> Vec<f64> {
    let tau = 1usize << level;
    let w = 1.0 / tau as f64;
    (0..tau).map(|l| if l < tau / 2 { w } else { -w }).collect()
}

/// Wavelet variance evaluated straight from the filter taps: the quadratic
/// form `hᵀ Γ h` for stationary blocks, the filtered increment variance for the
/// random walk, the squared filter response for the drift. `O(τ²)`; used to
/// cross-check the closed forms. No convention factor is applied.
pub fn wv_filter_form(model: &LatentModel, theta: &[f64], level: u32) -> Result<f64> {
    require_time_series(model)?;
    model.check_len(theta)?;
    check_level(level, 1 << 16)?;
    let h = haar_filter(level);
    let tau = h.len();
    // c[k] = sum over ordered pairs at distance k of h_a h_b
    let coupling: Vec<f64> = (0..tau)
        .map(|k| {
            let s: f64 = (0..tau - k).map(|l| h[l] * h[l + k]).sum();
            if k == 0 {
                s
            } else {
                2.0 * s
            }
        })
        .collect();
    let mut total = 0.0;
    for (kind, p) in model.components(theta) {
        total += match kind {
            BlockKind::Drift => {
                let response: f64 = h.iter().enumerate().map(|(l, hl)| l as f64 * hl).sum();
                p[0] * p[0] * response * response
            }
            BlockKind::RandomWalk => {
                let mut partial = 0.0;
                let mut acc = 0.0;
                for hl in &h {
                    partial += hl;
                    acc += partial * partial;
                }
                p[0] * acc
            }
            _ => coupling
                .iter()
                .enumerate()
                .map(|(k, c)| c * block_acvf(kind, p, k))
                .sum(),
        };
    }
    Ok(total)
}

/// Squared gain `|H_j(f)|²` of the level-`j` Haar filter.
pub fn haar_gain(level: u32, f: f64) -> f64 {
    let tau = (1u64 << level) as f64;
    let s = (PI * f).sin();
    if s.abs() < 1e-300 {
        return 0.0;
    }
    let m = tau / 2.0;
    4.0 * (m * PI * f).sin().powi(4) / (tau * tau * s * s)
}

/// Wavelet variance as the filter-weighted integral of the spectral density,
/// `∫_{-1/2}^{1/2} |H_j(f)|² S(f) df`. Stationary models only.
pub fn wv_spectral(model: &LatentModel, theta: &[f64], level: u32) -> Result<f64> {
    require_stationary(model)?;
    model.check_len(theta)?;
    check_level(level, 1 << 20)?;
    let panels = (1usize << level).max(8);
    Ok(2.0
        * quad::integrate(
            |f| haar_gain(level, f) * sdf_point(model, theta, f),
            0.0,
            0.5,
            panels,
            1e-12,
        ))
}

/// Spatial covariance `sigma2 * exp(-(d/phi)^c)` of one block.
pub fn block_spatial_cov(kind: BlockKind, p: &[f64], d: f64) -> f64 {
    match kind.spatial_power() {
        Some(c) => p[1] * (-(d / p[0]).powi(c)).exp(),
        None => f64::NAN,
    }
}

pub fn spatial_cov(model: &LatentModel, theta: &[f64], distances: &[f64]) -> Result<MomentVector> {
    if model.domain() != Domain::Spatial {
        return Err(Error::TimeSeriesModel);
    }
    model.check_len(theta)?;
    if let Some(&d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InvalidConfig(format!("invalid distance {d}")));
    }
    Ok(MomentVector {
        kind: MomentKind::SpatialCov,
        abscissae: distances.to_vec(),
        values: distances
            .iter()
            .map(|&d| {
                model
                    .components(theta)
                    .map(|(kind, p)| block_spatial_cov(kind, p, d))
                    .sum()
            })
            .collect(),
    })
}

/// Smallest `H` such that the analytic bound on `Σ_{h>H} |acvf(h)|` is below
/// `eps`. WN, QN and MA1 contribute their exact finite tails; AR1 blocks the
/// geometric bound `|c| |ρ|^{H+1} / (1 - |ρ|)`.
pub fn acvf_tail_index(model: &LatentModel, theta: &[f64], eps: f64) -> Result<usize> {
    require_stationary(model)?;
    model.check_len(theta)?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    let tail = |big_h: usize| -> f64 {
        model
            .components(theta)
            .map(|(kind, p)| match kind {
                BlockKind::Ar1 => {
                    let r = p[0].abs();
                    block_acvf(kind, p, 0).abs() * r.powi(big_h as i32 + 1) / (1.0 - r)
                }
                _ => (big_h + 1..=1).map(|h| block_acvf(kind, p, h).abs()).sum(),
            })
            .sum()
    };
    (0..=u32::MAX as usize)
        .find(|&h| tail(h) < eps)
        .ok_or_else(|| Error::DegenerateInput("autocovariance tail does not decay".into()))
}
