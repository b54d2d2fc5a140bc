//! Weight initialization.
//!
//! Inputs of the subword model follow `U(±1/D)` and outputs start at zero.
//! Positional models default to the square-root normal distribution
//! `N^0.5(0, 1/(3D²))`, chosen so that the product of an input feature and a
//! positional feature has the same mean and (almost) the same variance as a
//! plain `U(±1/D)` feature. Two simpler options are kept to reproduce their
//! failure modes: unit positional vectors with uniform inputs, and uniform
//! draws for both.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Dims, ModelKind, ModelParams};

/// Number of terms after the first in the truncated series.
pub const DEFAULT_TRUNCATION: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitVariant {
    /// Uniform inputs, positional vectors fixed to one.
    IdentityPositions,
    /// Uniform inputs and uniform positional vectors.
    UniformBoth,
    /// Square-root normal inputs and positional vectors.
    SqrtNormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitScheme {
    pub variant: InitVariant,
    /// Truncation depth `k` of the square-root normal series.
    pub k: usize,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme {
            variant: InitVariant::SqrtNormal,
            k: DEFAULT_TRUNCATION,
        }
    }
}

impl InitScheme {
    pub fn new(variant: InitVariant) -> Self {
        InitScheme {
            variant,
            ..Default::default()
        }
    }
}

/// `U(−a, a)` with both endpoints excluded.
#[derive(Clone, Copy, Debug)]
pub struct SymmetricUniform {
    half_width: f64,
}

impl SymmetricUniform {
    pub fn new(half_width: f64) -> Self {
        SymmetricUniform { half_width }
    }

    /// The `U(±1/D)` distribution for `D` features.
    pub fn for_dim(dim: usize) -> Self {
        Self::new(1.0 / dim as f64)
    }
}

impl Distribution<f64> for SymmetricUniform {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = (2.0 * rng.random::<f64>() - 1.0) * self.half_width;
            if x.abs() < self.half_width {
                return x;
            }
        }
    }
}

/// Gamma(½, 1) variate: half the square of a standard normal.
#[inline]
pub fn sample_gamma_half<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    0.5 * z * z
}

/// Square-root normal distribution truncated after `k + 1` series terms:
///
/// ```text
/// ε · exp(Σ_{n=0..k} a_n) · σ^½ + μ^½,
/// a_n = ¼ ln(1 + 1/max(1, n)) − G_n / (2n + 1)
/// ```
///
/// with `G_n ~ Gamma(½, 1)` and a Rademacher sign `ε`. Two independent
/// samples with `μ = 0` multiply to a variable with variance
/// `σ² · (2k + 2)/(2k + 3)`.
#[derive(Clone, Debug)]
pub struct SqrtNormal {
    offset: f64,
    scale: f64,
    log_terms: Vec<f64>,
}

impl SqrtNormal {
    pub fn new(mean: f64, variance: f64, k: usize) -> Result<Self> {
        if variance.is_nan() || mean.is_nan() || variance <= 0.0 || mean < 0.0 {
            return Err(Error::InvalidInput(format!(
                "square-root normal needs variance > 0 and mean >= 0, got {mean}, {variance}"
            )));
        }
        let log_terms = (0..=k)
            .map(|n| 0.25 * (1.0 + 1.0 / n.max(1) as f64).ln())
            .collect();
        Ok(SqrtNormal {
            offset: mean.sqrt(),
            scale: variance.sqrt().sqrt(),
            log_terms,
        })
    }

    /// `N^0.5(0, 1/(3D²))`, matching the variance of `U(±1/D)`.
    pub fn for_dim(dim: usize, k: usize) -> Self {
        Self::new(0.0, 1.0 / (3.0 * (dim * dim) as f64), k).expect("valid parameters")
    }
}

impl Distribution<f64> for SqrtNormal {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let exponent: f64 = self
            .log_terms
            .iter()
            .enumerate()
            .map(|(n, c)| c - sample_gamma_half(rng) / (2 * n + 1) as f64)
            .sum();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        sign * exponent.exp() * self.scale + self.offset
    }
}

/// One draw from `N^0.5(μ, σ²)` truncated at depth `k`.
pub fn sample_sqrt_normal<R: Rng + ?Sized>(mean: f64, variance: f64, k: usize, rng: &mut R) -> Result<f64> {
    Ok(SqrtNormal::new(mean, variance, k)?.sample(rng))
}

const INPUT_STREAM: u64 = 1;
const POSITIONAL_STREAM: u64 = 2;
const MOMENT_STREAM: u64 = 3;

/// Deterministic generator for one row of one matrix.
fn row_rng(seed: u64, matrix: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ matrix.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(row as u64);
    rng
}

/// Fills `matrix` row by row in parallel; the first `split` columns come
/// from `head`, the rest from `tail`.
fn fill<A, B>(matrix: &mut Matrix<f32>, seed: u64, stream: u64, split: usize, head: &A, tail: &B)
where
    A: Distribution<f64> + Sync,
    B: Distribution<f64> + Sync,
{
    let cols = matrix.cols();
    if cols == 0 {
        return;
    }
    matrix
        .as_mut_slice()
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = row_rng(seed, stream, i);
            let (a, b) = row.split_at_mut(split.min(cols));
            a.iter_mut().for_each(|x| *x = head.sample(&mut rng) as f32);
            b.iter_mut().for_each(|x| *x = tail.sample(&mut rng) as f32);
        });
}

/// `rows × dim` matrix of i.i.d. `U(±1/dim)` entries.
pub fn init_uniform(rows: usize, dim: usize, seed: u64) -> Matrix<f32> {
    let mut m = Matrix::zeros(rows, dim);
    let u = SymmetricUniform::for_dim(dim);
    fill(&mut m, seed, INPUT_STREAM, dim, &u, &u);
    m
}

/// Initializes a model of the given kind; outputs always start at zero.
pub fn init_model(kind: ModelKind, scheme: InitScheme, dims: Dims, seed: u64) -> Result<ModelParams<f32>> {
    let mut params = ModelParams::<f32>::zeros(kind, dims)?;
    let d = dims.dim;
    let dp = params.positional_dim();
    let uniform = SymmetricUniform::for_dim(d);
    let sqrt_normal = SqrtNormal::for_dim(d, scheme.k);
    let use_sqrt = kind.is_positional() && scheme.variant == InitVariant::SqrtNormal;

    if use_sqrt {
        fill(&mut params.input, seed, INPUT_STREAM, dp, &sqrt_normal, &uniform);
    } else {
        fill(&mut params.input, seed, INPUT_STREAM, d, &uniform, &uniform);
    }
    if let Some(pos) = params.positional.as_mut() {
        match scheme.variant {
            InitVariant::IdentityPositions => pos.as_mut_slice().fill(1.0),
            InitVariant::UniformBoth => fill(pos, seed, POSITIONAL_STREAM, dp, &uniform, &uniform),
            InitVariant::SqrtNormal => {
                fill(pos, seed, POSITIONAL_STREAM, dp, &sqrt_normal, &sqrt_normal)
            }
        }
    }
    Ok(params)
}

/// Monte-Carlo moments of the product of an input feature and a positional
/// feature drawn independently under a scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub variant: InitVariant,
    pub dim: usize,
    pub k: usize,
    pub samples: u64,
    pub mean: f64,
    /// Standard error of `mean`.
    pub mean_std_error: f64,
    pub variance: f64,
    /// Variance of a `U(±1/D)` feature, `1/(3D²)`.
    pub reference_variance: f64,
    /// `variance / reference_variance`.
    pub variance_ratio: f64,
}

pub fn estimate_product_moments(scheme: InitScheme, dim: usize, n_samples: u64, seed: u64) -> Result<MomentReport> {
    if n_samples < 100_000 {
        return Err(Error::InvalidInput(format!(
            "need at least 100000 samples, got {n_samples}"
        )));
    }
    if dim == 0 {
        return Err(Error::Dimension("feature count must be positive".into()));
    }
    let uniform = SymmetricUniform::for_dim(dim);
    let sqrt_normal = SqrtNormal::for_dim(dim, scheme.k);
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        match scheme.variant {
            InitVariant::IdentityPositions => uniform.sample(rng),
            InitVariant::UniformBoth => uniform.sample(rng) * uniform.sample(rng),
            InitVariant::SqrtNormal => sqrt_normal.sample(rng) * sqrt_normal.sample(rng),
        }
    };

    const CHUNK: u64 = 1 << 16;
    let chunks = n_samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = row_rng(seed, MOMENT_STREAM, c as usize);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..len {
                let x = draw(&mut rng);
                sum += x;
                sum_sq += x * x;
            }
            (len as f64, sum, sum_sq)
        })
        .collect();
    // combine chunk-wise (count, mean, M2) in a fixed order
    let (mut count, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
    for (n, sum, sum_sq) in partial {
        let chunk_mean = sum / n;
        let chunk_m2 = sum_sq - sum * chunk_mean;
        let delta = chunk_mean - mean;
        let total = count + n;
        mean += delta * n / total;
        m2 += chunk_m2 + delta * delta * count * n / total;
        count = total;
    }
    let variance = m2 / (count - 1.0);
    let reference_variance = 1.0 / (3.0 * (dim * dim) as f64);
    Ok(MomentReport {
        variant: scheme.variant,
        dim,
        k: scheme.k,
        samples: n_samples,
        mean,
        mean_std_error: (variance / count).sqrt(),
        variance,
        reference_variance,
        variance_ratio: variance / reference_variance,
    })
}
