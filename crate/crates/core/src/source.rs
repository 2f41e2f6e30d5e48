//! I.i.d. source models and reproducible sample streams.
//!
//! Streams are backed by ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64`. ChaCha output is platform independent, and the normal
//! sampler (`rand_distr::StandardNormal`, ziggurat) is pure f64 arithmetic, so
//! a `(source, seed)` pair yields the same points on every platform.
//!
//! Independent substreams (restarts, per-iteration pools, ...) get their seed
//! from [`substream_seed`], a SplitMix64 mix of a base seed and a stream index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Each coordinate standard normal.
    GaussianIid,
    /// Each coordinate uniform on [-1, 1].
    UniformIid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceModel {
    pub kind: SourceKind,
    #[serde(rename = "d")]
    pub dimension: usize,
}

impl SourceModel {
    pub fn new(kind: SourceKind, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(invalid("d", "source dimension must be at least 1"));
        }
        Ok(Self { kind, dimension })
    }

    pub fn gaussian(dimension: usize) -> Self {
        Self::new(SourceKind::GaussianIid, dimension).expect("dimension must be >= 1")
    }

    pub fn uniform(dimension: usize) -> Self {
        Self::new(SourceKind::UniformIid, dimension).expect("dimension must be >= 1")
    }

    pub fn dim(&self) -> usize {
        self.dimension
    }

    /// Per-coordinate standard deviation.
    pub fn coordinate_scale(&self) -> f64 {
        match self.kind {
            SourceKind::GaussianIid => 1.0,
            SourceKind::UniformIid => (1.0f64 / 3.0).sqrt(),
        }
    }

    /// Mean of the distribution (the origin for both built-in kinds).
    pub fn mean(&self) -> Vec<f64> {
        vec![0.0; self.dimension]
    }

    /// Sum of per-coordinate variances: the distortion of a quantizer with a
    /// single reconstruction point at the mean.
    pub fn variance_total(&self) -> f64 {
        match self.kind {
            SourceKind::GaussianIid => self.dimension as f64,
            SourceKind::UniformIid => self.dimension as f64 / 3.0,
        }
    }

    /// Whether `x` lies in the support (always true for the Gaussian).
    pub fn contains(&self, x: &[f64]) -> bool {
        match self.kind {
            SourceKind::GaussianIid => true,
            SourceKind::UniformIid => x.iter().all(|v| (-1.0..=1.0).contains(v)),
        }
    }

    fn draw_coordinate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            SourceKind::GaussianIid => rng.sample(StandardNormal),
            SourceKind::UniformIid => rng.random_range(-1.0..=1.0),
        }
    }
}

/// Free-function alias of [`SourceModel::variance_total`].
pub fn source_variance_total(source: &SourceModel) -> f64 {
    source.variance_total()
}

/// Gaussian distortion-rate reference `D(R) = 2^{-2R}`.
pub fn gaussian_rd(rate: f64) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(invalid("R", format!("rate must be non-negative, got {rate}")));
    }
    Ok((-2.0 * rate).exp2())
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `index` under `base`.
pub fn substream_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(0x5EED)))
}

/// A dense row-major set of `len` points in dimension `dim`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "flat buffer is not a multiple of dim");
        Self { dim, data }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim);
            data.extend_from_slice(r);
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

/// A seeded, single-owner stream of i.i.d. source points.
#[derive(Debug, Clone)]
pub struct SampleStream {
    source: SourceModel,
    seed: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl SampleStream {
    pub fn new(source: SourceModel, seed: u64) -> Self {
        Self {
            source,
            seed,
            counter: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream `index` derived from `base` via [`substream_seed`].
    pub fn derived(source: SourceModel, base: u64, index: u64) -> Self {
        Self::new(source, substream_seed(base, index))
    }

    pub fn source(&self) -> &SourceModel {
        &self.source
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of points drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_point_into(&mut self, out: &mut Vec<f64>) {
        for _ in 0..self.source.dimension {
            let v = self.source.draw_coordinate(&mut self.rng);
            out.push(v);
        }
        self.counter += 1;
    }

    /// Draws `n` points into a dense [`PointSet`].
    pub fn sample_set(&mut self, n: usize) -> PointSet {
        let d = self.source.dimension;
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            self.next_point_into(&mut data);
        }
        PointSet::from_flat(d, data)
    }

    /// Draws `n >= 1` points.
    pub fn sample(&mut self, n: usize) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(invalid("n", "sample size must be at least 1"));
        }
        Ok(self.sample_set(n).to_rows())
    }

    /// Access to the underlying generator for auxiliary randomness that must
    /// stay on the same deterministic stream.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn uniform_support() {
        let mut s = SampleStream::new(SourceModel::uniform(2), 7);
        let pts = s.sample(10_000).unwrap();
        assert!(pts.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(s.counter(), 10_000);
    }

    #[test]
    fn gaussian_moments() {
        let mut s = SampleStream::new(SourceModel::gaussian(1), 11);
        let pts = s.sample_set(1_000_000);
        let (m, v) = moments(pts.as_flat());
        assert!(m.abs() < 0.01, "mean {m}");
        assert!((v - 1.0).abs() < 0.02, "var {v}");
    }

    #[test]
    fn uniform_moments_within_three_sigma() {
        let n = 1_000_000;
        let mut s = SampleStream::new(SourceModel::uniform(1), 5);
        let pts = s.sample_set(n);
        let (m, v) = moments(pts.as_flat());
        // sd of the mean: sqrt(1/3 / n); sd of the variance: sqrt((mu4 - s^4)/n), mu4 = 1/5
        let sd_mean = (1.0 / 3.0 / n as f64).sqrt();
        let sd_var = ((0.2 - 1.0 / 9.0) / n as f64).sqrt();
        assert!(m.abs() < 3.0 * sd_mean);
        assert!((v - 1.0 / 3.0).abs() < 3.0 * sd_var);
    }

    #[test]
    fn streams_are_deterministic() {
        let src = SourceModel::gaussian(3);
        let a = SampleStream::new(src, 42).sample(100).unwrap();
        let b = SampleStream::new(src, 42).sample(100).unwrap();
        let c = SampleStream::new(src, 43).sample(100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_sample_rejected() {
        let mut s = SampleStream::new(SourceModel::gaussian(1), 0);
        assert!(s.sample(0).is_err());
    }

    #[test]
    fn rd_reference() {
        assert_eq!(gaussian_rd(0.0).unwrap(), 1.0);
        assert_eq!(gaussian_rd(1.0).unwrap(), 0.25);
        assert!((gaussian_rd(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(gaussian_rd(-0.1).is_err());
        let mut prev = gaussian_rd(0.0).unwrap();
        for i in 1..50 {
            let cur = gaussian_rd(i as f64 * 0.1).unwrap();
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn variance_totals() {
        assert_eq!(SourceModel::gaussian(2).variance_total(), 2.0);
        assert!((SourceModel::uniform(2).variance_total() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(SourceModel::gaussian(1).variance_total(), 1.0);
        assert!(SourceModel::new(SourceKind::GaussianIid, 0).is_err());
    }

    #[test]
    fn substreams_differ() {
        assert_ne!(substream_seed(1, 0), substream_seed(1, 1));
        assert_ne!(substream_seed(1, 0), substream_seed(2, 0));
    }
}
