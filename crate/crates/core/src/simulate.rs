//! Sample paths of latent time series and realizations of latent spatial
//! fields.
//!
//! Randomness comes from ChaCha8 seeded with the master seed, one stream per
//! replication, so a `(seed, stream)` pair always reproduces the same draws
//! regardless of which thread runs it.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::{BlockKind, Domain, LatentModel};
use crate::moments::block_spatial_cov;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec { master_seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Adds one block's path to `out`.
fn add_block(kind: BlockKind, p: &[f64], out: &mut [f64], rng: &mut ChaCha8Rng) {
    match kind {
        BlockKind::WhiteNoise => {
            let sd = p[0].sqrt();
            for x in out.iter_mut() {
                *x += sd * normal(rng);
            }
        }
        BlockKind::Quantization => {
            // Var(U) = 1/12, so sqrt(12) Q (U_t - U_{t-1}) has autocovariance
            // 2Q² at lag 0 and -Q² at lag 1.
            let scale = (12.0 * p[0]).sqrt();
            let mut prev: f64 = rng.random();
            for x in out.iter_mut() {
                let u: f64 = rng.random();
                *x += scale * (u - prev);
                prev = u;
            }
        }
        BlockKind::Drift => {
            for (t, x) in out.iter_mut().enumerate() {
                *x += p[0] * (t + 1) as f64;
            }
        }
        BlockKind::RandomWalk => {
            let sd = p[0].sqrt();
            let mut level = 0.0;
            for x in out.iter_mut() {
                level += sd * normal(rng);
                *x += level;
            }
        }
        BlockKind::Ma1 => {
            let sd = p[1].sqrt();
            let mut prev = sd * normal(rng);
            for x in out.iter_mut() {
                let e = sd * normal(rng);
                *x += e + p[0] * prev;
                prev = e;
            }
        }
        BlockKind::Ar1 => {
            let (rho, sd) = (p[0], p[1].sqrt());
            let mut state = sd / (1.0 - rho * rho).sqrt() * normal(rng);
            for (t, x) in out.iter_mut().enumerate() {
                if t > 0 {
                    state = rho * state + sd * normal(rng);
                }
                *x += state;
            }
        }
        BlockKind::SpatialExp | BlockKind::SpatialGauss => {}
    }
}

/// Sum of independently simulated blocks, `t = 1..=n`.
pub fn simulate_time_series(model: &LatentModel, theta: &[f64], n: usize, seed: SeedSpec) -> Result<Vec<f64>> {
    if model.domain() != Domain::TimeSeries {
        return Err(Error::SpatialModel);
    }
    model.check_theta(theta)?;
    if n == 0 {
        return Err(Error::InvalidConfig("series length must be at least 1".into()));
    }
    let mut rng = seed.rng();
    let mut out = vec![0.0; n];
    for (kind, p) in model.components(theta) {
        add_block(kind, p, &mut out, &mut rng);
    }
    Ok(out)
}

/// Number of escalations of the diagonal jitter after the first jittered
/// attempt.
pub const JITTER_ESCALATIONS: usize = 3;

/// Reusable sampler for a fixed set of coordinates (one factorization,
/// many draws).
#[derive(Debug, Clone)]
pub struct SpatialSampler {
    factor: DMatrix<f64>,
    /// Diagonal jitter that made the factorization succeed (0 if none).
    pub jitter: f64,
}

impl SpatialSampler {
    pub fn new(model: &LatentModel, theta: &[f64], coords: &[[f64; 2]]) -> Result<Self> {
        if model.domain() != Domain::Spatial {
            return Err(Error::TimeSeriesModel);
        }
        model.check_theta(theta)?;
        if coords.is_empty() {
            return Err(Error::InvalidConfig("at least one coordinate is required".into()));
        }
        if coords.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("coordinates must be finite".into()));
        }
        let k = coords.len();
        let cov = DMatrix::from_fn(k, k, |a, b| {
            let d = ((coords[a][0] - coords[b][0]).powi(2) + (coords[a][1] - coords[b][1]).powi(2)).sqrt();
            model
                .components(theta)
                .map(|(kind, p)| block_spatial_cov(kind, p, d))
                .sum::<f64>()
        });
        if let Some(ch) = cov.clone().cholesky() {
            return Ok(SpatialSampler {
                factor: ch.unpack(),
                jitter: 0.0,
            });
        }
        let sill: f64 = model.components(theta).map(|(_, p)| p[1]).sum();
        let mut jitter = 1e-10 * sill;
        for _ in 0..=JITTER_ESCALATIONS {
            let mut shifted = cov.clone();
            for i in 0..k {
                shifted[(i, i)] += jitter;
            }
            if let Some(ch) = shifted.cholesky() {
                return Ok(SpatialSampler {
                    factor: ch.unpack(),
                    jitter,
                });
            }
            jitter *= 10.0;
        }
        Err(Error::FactorizationFailure {
            attempts: JITTER_ESCALATIONS + 1,
        })
    }

    pub fn sample(&self, seed: SeedSpec) -> Vec<f64> {
        let mut rng = seed.rng();
        let k = self.factor.nrows();
        let z = nalgebra::DVector::from_fn(k, |_, _| normal(&mut rng));
        (&self.factor * z).iter().copied().collect()
    }
}

/// Zero-mean Gaussian field at `coords` with covariance given by the model's
/// spatial covariance at Euclidean distances.
pub fn simulate_spatial_field(
    model: &LatentModel,
    theta: &[f64],
    coords: &[[f64; 2]],
    seed: SeedSpec,
) -> Result<Vec<f64>> {
    Ok(SpatialSampler::new(model, theta, coords)?.sample(seed))
}
