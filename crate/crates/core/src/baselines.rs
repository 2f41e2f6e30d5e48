//! Classic LBG (Lloyd / k-means) quantizer on a fixed training sample, and
//! the two comparison variants: codebooks whose Voronoi partition needs at
//! most `k` separating facets, and codebooks with a prescribed point count.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ClvqError, Result};
use crate::estimation::sq_dist;
use crate::source::{substream_seed, PointSet, SampleStream, SourceModel};

/// Reconstruction points with nearest-point assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCodebook {
    d: usize,
    points: Vec<f64>,
}

impl PointCodebook {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let d = points.first().map(Vec::len).ok_or_else(|| invalid("points", "need at least one point"))?;
        if d == 0 {
            return Err(invalid("points", "points must have dimension >= 1"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(ClvqError::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
            if points[..i].contains(p) {
                return Err(invalid("points", "duplicate reconstruction point"));
            }
        }
        Ok(Self {
            d,
            points: points.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.points.chunks_exact(self.d).map(<[f64]>::to_vec).collect()
    }

    /// Index and squared distance of the nearest point.
    #[inline]
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.points.chunks_exact(self.d).enumerate() {
            let e = sq_dist(x, c);
            if e < best.1 {
                best = (i, e);
            }
        }
        best
    }

    /// Nearest and second-nearest `(index, squared distance)`.
    fn two_nearest(&self, x: &[f64]) -> ((usize, f64), (usize, f64)) {
        let mut a = (usize::MAX, f64::INFINITY);
        let mut b = (usize::MAX, f64::INFINITY);
        for (i, c) in self.points.chunks_exact(self.d).enumerate() {
            let e = sq_dist(x, c);
            if e < a.1 {
                b = a;
                a = (i, e);
            } else if e < b.1 {
                b = (i, e);
            }
        }
        (a, b)
    }

    pub fn mse(&self, data: &PointSet) -> f64 {
        data.rows().map(|x| self.nearest(x).1).sum::<f64>() / data.len() as f64
    }

    /// Mean squared error on `data` and its standard error.
    pub fn mse_with_stderr(&self, data: &PointSet) -> (f64, f64) {
        let n = data.len() as f64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for x in data.rows() {
            let e = self.nearest(x).1;
            sum += e;
            sum_sq += e * e;
        }
        let mean = sum / n;
        let var = if n > 1.0 { (sum_sq - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
        (mean, (var / n).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbgResult {
    pub codebook: PointCodebook,
    /// Held-out MSE on a fresh sample of the training size.
    pub mse: f64,
    pub mse_stderr: f64,
    pub train_mse: f64,
    pub iterations: usize,
    pub facet_count: usize,
    pub restart_seed: u64,
    /// Training MSE after every centroid update.
    pub train_trace: Vec<f64>,
    /// Number of empty-cell re-seeding events.
    pub reseeds: usize,
}

#[derive(Serialize, Deserialize)]
struct LbgResultRepr {
    #[serde(rename = "M")]
    m: usize,
    points: Vec<Vec<f64>>,
    mse: f64,
    mse_stderr: f64,
    facets: usize,
    restart_seed: u64,
    train_mse: f64,
    iterations: usize,
    train_trace: Vec<f64>,
    reseeds: usize,
}

impl Serialize for LbgResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LbgResultRepr {
            m: self.codebook.len(),
            points: self.codebook.to_rows(),
            mse: self.mse,
            mse_stderr: self.mse_stderr,
            facets: self.facet_count,
            restart_seed: self.restart_seed,
            train_mse: self.train_mse,
            iterations: self.iterations,
            train_trace: self.train_trace.clone(),
            reseeds: self.reseeds,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LbgResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = LbgResultRepr::deserialize(d)?;
        if r.points.len() != r.m {
            return Err(serde::de::Error::custom("M does not match the number of points"));
        }
        let codebook = PointCodebook::new(r.points).map_err(serde::de::Error::custom)?;
        Ok(Self {
            codebook,
            mse: r.mse,
            mse_stderr: r.mse_stderr,
            train_mse: r.train_mse,
            iterations: r.iterations,
            facet_count: r.facets,
            restart_seed: r.restart_seed,
            train_trace: r.train_trace,
            reseeds: r.reseeds,
        })
    }
}

/// Samples used for facet detection in [`lbg_design`].
pub const DEFAULT_FACET_SAMPLES: usize = 100_000;

/// Single LBG run.
///
/// Draws a training set of `sample_n` points, then `m` initial points, then a
/// held-out set and a facet-detection set, all from `stream`.
pub fn lbg_design(
    source: &SourceModel,
    m: usize,
    t_max: usize,
    stream: &mut SampleStream,
    sample_n: usize,
) -> Result<LbgResult> {
    if m == 0 {
        return Err(invalid("M", "need at least one reconstruction point"));
    }
    if m > sample_n {
        return Err(invalid("M", format!("M = {m} exceeds the training size {sample_n}")));
    }
    if t_max == 0 {
        return Err(invalid("T_max", "must be at least 1"));
    }
    let d = source.dim();
    let seed = stream.seed();
    let train = stream.sample_set(sample_n);
    let mut centers = stream.sample_set(m).as_flat().to_vec();

    let n = train.len();
    let mut assign = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut reseeds = 0;
    let mut iterations = 0;
    for _ in 0..t_max {
        let cb = PointCodebook {
            d,
            points: centers.clone(),
        };
        let mut changed = false;
        for (i, x) in train.rows().enumerate() {
            let (j, _) = cb.nearest(x);
            if assign[i] != j {
                assign[i] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        iterations += 1;
        let mut sums = vec![0.0; m * d];
        let mut counts = vec![0usize; m];
        for (i, x) in train.rows().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i] * d..(assign[i] + 1) * d].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..m {
            if counts[j] > 0 {
                for c in 0..d {
                    centers[j * d + c] = sums[j * d + c] / counts[j] as f64;
                }
            }
        }
        // re-seed dead points at the sample farthest from its centroid
        for j in 0..m {
            if counts[j] > 0 {
                continue;
            }
            let (far, _) = train
                .rows()
                .enumerate()
                .map(|(i, x)| (i, sq_dist(x, &centers[assign[i] * d..(assign[i] + 1) * d])))
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            centers[j * d..(j + 1) * d].copy_from_slice(train.row(far));
            counts[assign[far]] -= 1;
            assign[far] = j;
            counts[j] = 1;
            reseeds += 1;
        }
        let mse = train
            .rows()
            .enumerate()
            .map(|(i, x)| sq_dist(x, &centers[assign[i] * d..(assign[i] + 1) * d]))
            .sum::<f64>()
            / n as f64;
        trace.push(mse);
    }
    let train_mse = match trace.last() {
        Some(&v) => v,
        None => {
            train
                .rows()
                .enumerate()
                .map(|(i, x)| sq_dist(x, &centers[assign[i] * d..(assign[i] + 1) * d]))
                .sum::<f64>()
                / n as f64
        }
    };
    let codebook = PointCodebook { d, points: centers };
    let held_out = stream.sample_set(sample_n);
    let (mse, mse_stderr) = codebook.mse_with_stderr(&held_out);
    let facet_count = voronoi_facet_count(&codebook, stream, DEFAULT_FACET_SAMPLES);
    Ok(LbgResult {
        codebook,
        mse,
        mse_stderr,
        train_mse,
        iterations,
        facet_count,
        restart_seed: seed,
        train_trace: trace,
        reseeds,
    })
}

/// Number of Voronoi cell pairs sharing a facet inside the sampled support.
///
/// A sample `x` with nearest point `i` and runner-up `j` that lies within
/// `0.05 * source scale` of the `i|j` bisector is projected onto it; when the
/// projection is strictly closer to `i` and `j` than to every other point it
/// lies on their common facet, and the pair is counted. Facets too small to
/// catch any sample are missed.
pub fn voronoi_facet_count(codebook: &PointCodebook, stream: &mut SampleStream, n: usize) -> usize {
    let m = codebook.len();
    if m < 2 {
        return 0;
    }
    let band = 0.05 * stream.source().coordinate_scale();
    let d = codebook.d;
    let mut adjacent = vec![false; m * m];
    let mut x = Vec::with_capacity(d);
    let mut probe = vec![0.0; d];
    for _ in 0..n {
        x.clear();
        stream.next_point_into(&mut x);
        let ((i, di), (j, dj)) = codebook.two_nearest(&x);
        if adjacent[i * m + j] {
            continue;
        }
        let ci = codebook.point(i);
        let cj = codebook.point(j);
        let sep = sq_dist(ci, cj).sqrt();
        let dist_to_bisector = (dj - di) / (2.0 * sep);
        if dist_to_bisector > band {
            continue;
        }
        for c in 0..d {
            probe[c] = x[c] + dist_to_bisector * (cj[c] - ci[c]) / sep;
        }
        let r = sq_dist(&probe, ci);
        let unique = (0..m)
            .filter(|&l| l != i && l != j)
            .all(|l| sq_dist(&probe, codebook.point(l)) > r * (1.0 + 1e-9));
        if unique {
            adjacent[i * m + j] = true;
            adjacent[j * m + i] = true;
        }
    }
    (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .filter(|&(i, j)| adjacent[i * m + j])
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbgParams {
    pub t_max: usize,
    pub restarts: usize,
    pub sample_n: usize,
}

impl Default for LbgParams {
    fn default() -> Self {
        Self {
            t_max: 100,
            restarts: 10,
            sample_n: 20_000,
        }
    }
}

impl LbgParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(invalid("t_max", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts", "must be at least 1"));
        }
        if self.sample_n == 0 {
            return Err(invalid("sample_n", "must be at least 1"));
        }
        Ok(())
    }
}

/// Best run and restart statistics for one selection rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbgSelection {
    pub best: LbgResult,
    /// Mean held-out MSE over the eligible restarts at the selected `M`.
    pub mean_mse: f64,
    pub runs: Vec<LbgResult>,
}

/// `params.restarts` independent runs with seeds derived from `base_seed`.
pub fn lbg_restarts(source: &SourceModel, m: usize, params: &LbgParams, base_seed: u64) -> Result<Vec<LbgResult>> {
    params.validate()?;
    (0..params.restarts as u64)
        .map(|r| {
            let mut s = SampleStream::new(*source, substream_seed(base_seed, r));
            lbg_design(source, m, params.t_max, &mut s, params.sample_n)
        })
        .collect()
}

fn select(runs: Vec<LbgResult>) -> LbgSelection {
    let best = runs
        .iter()
        .min_by(|a, b| a.mse.total_cmp(&b.mse))
        .cloned()
        .expect("at least one restart");
    let mean_mse = runs.iter().map(|r| r.mse).sum::<f64>() / runs.len() as f64;
    LbgSelection { best, mean_mse, runs }
}

/// LBG with as many points as a comparator design has cells.
pub fn lbg_region_matched(
    source: &SourceModel,
    region_count: usize,
    params: &LbgParams,
    base_seed: u64,
) -> Result<LbgSelection> {
    if region_count == 0 {
        return Err(invalid("region_count", "must be at least 1"));
    }
    Ok(select(lbg_restarts(source, region_count, params, base_seed)?))
}

/// Best LBG codebook whose Voronoi partition needs at most `k` facets.
///
/// A connected partition into `M` cells needs at least `M - 1` facets, so
/// `M` ranges over `1..=k + 1`. Among all runs with `facet_count <= k` the
/// lowest MSE wins; ties go to the larger `M`.
pub fn lbg_comparator_matched(
    source: &SourceModel,
    k: usize,
    params: &LbgParams,
    base_seed: u64,
) -> Result<LbgSelection> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    let mut best: Option<(usize, LbgSelection)> = None;
    for m in 1..=k + 1 {
        let runs = lbg_restarts(source, m, params, substream_seed(base_seed, m as u64))?;
        let feasible: Vec<LbgResult> = runs.iter().filter(|r| r.facet_count <= k).cloned().collect();
        if feasible.is_empty() {
            continue;
        }
        let mut sel = select(feasible);
        sel.runs = runs;
        let better = match &best {
            None => true,
            Some((_, b)) => sel.best.mse <= b.best.mse,
        };
        if better {
            best = Some((m, sel));
        }
    }
    Ok(best.expect("M = 1 is always feasible").1)
}
