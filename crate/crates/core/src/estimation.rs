//! Monte Carlo estimation of cell centroids, mean squared error and output
//! entropy for a fixed comparator configuration.
//!
//! Centroids are sample means of source points falling in each cell. Sampling
//! continues until every cell seen so far holds `min_points_per_region`
//! points or `max_total_points` have been drawn. The MSE is then measured on
//! a separate sample; a point landing in a cell absent from the codebook is
//! reconstructed by the nearest existing centroid.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::arrangement::{Arrangement, RegionLabel};
use crate::error::{invalid, ClvqError, Result};
use crate::source::{substream_seed, PointSet, SampleStream, SourceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationParams {
    pub min_points_per_region: usize,
    pub max_total_points: usize,
    pub mse_points: usize,
}

impl EstimationParams {
    pub fn new(min_points_per_region: usize, max_total_points: usize, mse_points: usize) -> Result<Self> {
        let p = Self {
            min_points_per_region,
            max_total_points,
            mse_points,
        };
        p.validate()?;
        Ok(p)
    }

    /// Budget used inside the optimization loop.
    pub fn optimization() -> Self {
        Self {
            min_points_per_region: 200,
            max_total_points: 100_000,
            mse_points: 20_000,
        }
    }

    /// Budget for final reported numbers.
    pub fn reporting() -> Self {
        Self {
            min_points_per_region: 10_000,
            max_total_points: 1_000_000,
            mse_points: 1_000_000,
        }
    }

    /// Reduced budget for genetic fitness evaluation.
    pub fn genetic() -> Self {
        Self {
            min_points_per_region: 50,
            max_total_points: 100_000,
            mse_points: 20_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_points_per_region == 0 {
            return Err(invalid("min_points_per_region", "must be at least 1"));
        }
        if self.max_total_points < self.min_points_per_region {
            return Err(invalid(
                "max_total_points",
                "must be at least min_points_per_region",
            ));
        }
        if self.mse_points == 0 {
            return Err(invalid("mse_points", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for EstimationParams {
    fn default() -> Self {
        Self::optimization()
    }
}

/// What the design loop optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    MseMin,
    EntropyMax,
}

impl Objective {
    /// Maps an objective value to a loss (lower is better).
    pub fn loss(self, value: f64) -> f64 {
        match self {
            Objective::MseMin => value,
            Objective::EntropyMax => -value,
        }
    }

    /// Whether `a` is at least as good as `b`.
    pub fn at_least_as_good(self, a: f64, b: f64) -> bool {
        self.loss(a) <= self.loss(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookEntry {
    pub label: RegionLabel,
    pub centroid: Vec<f64>,
    pub mass: f64,
    pub count: u64,
}

/// Reconstruction point and empirical mass per observed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CodebookRepr", into = "CodebookRepr")]
pub struct Codebook {
    d: usize,
    k: usize,
    total: u64,
    entries: BTreeMap<RegionLabel, CodebookEntry>,
}

#[derive(Serialize, Deserialize)]
struct CodebookRepr {
    d: usize,
    k: usize,
    total_points: u64,
    entries: Vec<CodebookEntry>,
}

impl TryFrom<CodebookRepr> for Codebook {
    type Error = ClvqError;

    fn try_from(r: CodebookRepr) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for e in r.entries {
            if e.centroid.len() != r.d || e.label.len() != r.k {
                return Err(invalid("entries", "entry does not match (d, k)"));
            }
            entries.insert(e.label, e);
        }
        Ok(Self {
            d: r.d,
            k: r.k,
            total: r.total_points,
            entries,
        })
    }
}

impl From<Codebook> for CodebookRepr {
    fn from(c: Codebook) -> Self {
        Self {
            d: c.d,
            k: c.k,
            total_points: c.total,
            entries: c.entries.into_values().collect(),
        }
    }
}

impl Codebook {
    /// Codebook from explicit `(label, centroid, count)` triples.
    pub fn from_entries(d: usize, k: usize, items: Vec<(RegionLabel, Vec<f64>, u64)>) -> Result<Self> {
        let total: u64 = items.iter().map(|(_, _, c)| c).sum();
        if total == 0 {
            return Err(ClvqError::EmptyCodebook);
        }
        let mut entries = BTreeMap::new();
        for (label, centroid, count) in items {
            if centroid.len() != d {
                return Err(ClvqError::DimensionMismatch {
                    expected: d,
                    got: centroid.len(),
                });
            }
            if label.len() != k {
                return Err(invalid("label", format!("label {label} does not have length {k}")));
            }
            entries.insert(
                label,
                CodebookEntry {
                    label,
                    centroid,
                    mass: count as f64 / total as f64,
                    count,
                },
            );
        }
        Ok(Self { d, k, total, entries })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of source points behind the estimate.
    pub fn total_points(&self) -> u64 {
        self.total
    }

    pub fn get(&self, label: &RegionLabel) -> Option<&CodebookEntry> {
        self.entries.get(label)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CodebookEntry> + '_ {
        self.entries.values()
    }

    pub fn labels(&self) -> impl Iterator<Item = RegionLabel> + '_ {
        self.entries.keys().copied()
    }

    pub fn with_centroid(&self, label: &RegionLabel, centroid: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        match out.entries.get_mut(label) {
            Some(e) if centroid.len() == self.d => e.centroid = centroid,
            Some(_) => {
                return Err(ClvqError::DimensionMismatch {
                    expected: self.d,
                    got: centroid.len(),
                })
            }
            None => return Err(invalid("label", format!("{label} not in codebook"))),
        }
        Ok(out)
    }

    fn lookup(&self) -> Lookup {
        let mut table = SlotTable::new(self.k);
        let mut centroids = Vec::with_capacity(self.entries.len() * self.d);
        for (slot, e) in self.entries.values().enumerate() {
            table.insert(e.label.bits(), slot as u32);
            centroids.extend_from_slice(&e.centroid);
        }
        Lookup {
            d: self.d,
            table,
            centroids,
        }
    }
}

/// Map from packed labels to dense slot indices.
#[derive(Debug, Clone)]
pub(crate) struct SlotTable {
    dense: Option<Vec<u32>>,
    sparse: HashMap<u64, u32>,
    touched: Vec<u64>,
}

const DENSE_MAX_K: usize = 20;
const EMPTY: u32 = u32::MAX;

impl SlotTable {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            dense: (k <= DENSE_MAX_K).then(|| vec![EMPTY; 1 << k]),
            sparse: HashMap::new(),
            touched: Vec::new(),
        }
    }

    #[inline]
    pub(crate) fn get(&self, bits: u64) -> Option<u32> {
        match &self.dense {
            Some(d) => {
                let s = d[bits as usize];
                (s != EMPTY).then_some(s)
            }
            None => self.sparse.get(&bits).copied(),
        }
    }

    #[inline]
    pub(crate) fn insert(&mut self, bits: u64, slot: u32) {
        match &mut self.dense {
            Some(d) => d[bits as usize] = slot,
            None => {
                self.sparse.insert(bits, slot);
            }
        }
        self.touched.push(bits);
    }

    pub(crate) fn clear(&mut self) {
        match &mut self.dense {
            Some(d) => {
                for &b in &self.touched {
                    d[b as usize] = EMPTY;
                }
            }
            None => self.sparse.clear(),
        }
        self.touched.clear();
    }
}

struct Lookup {
    d: usize,
    table: SlotTable,
    centroids: Vec<f64>,
}

impl Lookup {
    #[inline]
    fn squared_error(&self, bits: u64, x: &[f64]) -> f64 {
        let d = self.d;
        match self.table.get(bits) {
            Some(slot) => {
                let c = &self.centroids[slot as usize * d..(slot as usize + 1) * d];
                sq_dist(x, c)
            }
            None => self
                .centroids
                .chunks_exact(d)
                .map(|c| sq_dist(x, c))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    s
}

/// Running per-cell counts and coordinate sums with the stopping rule.
#[derive(Debug, Clone)]
pub(crate) struct Accumulator {
    d: usize,
    k: usize,
    min_points: u64,
    table: SlotTable,
    labels: Vec<u64>,
    counts: Vec<u64>,
    sums: Vec<f64>,
    deficient: usize,
    total: u64,
}

impl Accumulator {
    pub(crate) fn new(d: usize, k: usize, min_points: usize) -> Self {
        Self {
            d,
            k,
            min_points: min_points as u64,
            table: SlotTable::new(k),
            labels: Vec::new(),
            counts: Vec::new(),
            sums: Vec::new(),
            deficient: 0,
            total: 0,
        }
    }

    pub(crate) fn reset(&mut self) {
        self.table.clear();
        self.labels.clear();
        self.counts.clear();
        self.sums.clear();
        self.deficient = 0;
        self.total = 0;
    }

    #[inline]
    pub(crate) fn add(&mut self, bits: u64, x: &[f64]) {
        let d = self.d;
        let slot = match self.table.get(bits) {
            Some(s) => s as usize,
            None => {
                let s = self.labels.len();
                self.table.insert(bits, s as u32);
                self.labels.push(bits);
                self.counts.push(0);
                self.sums.extend(std::iter::repeat_n(0.0, d));
                self.deficient += 1;
                s
            }
        };
        self.counts[slot] += 1;
        if self.counts[slot] == self.min_points {
            self.deficient -= 1;
        }
        for (s, v) in self.sums[slot * d..(slot + 1) * d].iter_mut().zip(x) {
            *s += v;
        }
        self.total += 1;
    }

    #[inline]
    pub(crate) fn satisfied(&self) -> bool {
        self.total > 0 && self.deficient == 0
    }

    pub(crate) fn total(&self) -> u64 {
        self.total
    }

    pub(crate) fn to_codebook(&self) -> Codebook {
        let d = self.d;
        let mut entries = BTreeMap::new();
        for (slot, &bits) in self.labels.iter().enumerate() {
            let n = self.counts[slot];
            let centroid = self.sums[slot * d..(slot + 1) * d]
                .iter()
                .map(|s| s / n as f64)
                .collect();
            let label = RegionLabel::from_bits(bits, self.k);
            entries.insert(
                label,
                CodebookEntry {
                    label,
                    centroid,
                    mass: n as f64 / self.total as f64,
                    count: n,
                },
            );
        }
        Codebook {
            d,
            k: self.k,
            total: self.total,
            entries,
        }
    }

    /// Centroid lookup built in place, reusing the label table.
    fn lookup(&self) -> (Vec<f64>, &SlotTable) {
        let d = self.d;
        let mut cents = self.sums.clone();
        for (slot, &n) in self.counts.iter().enumerate() {
            for c in &mut cents[slot * d..(slot + 1) * d] {
                *c /= n as f64;
            }
        }
        (cents, &self.table)
    }
}

fn check_dims(arr: &Arrangement, source: &SourceModel) -> Result<()> {
    if arr.d() != source.dim() {
        return Err(ClvqError::DimensionMismatch {
            expected: arr.d(),
            got: source.dim(),
        });
    }
    Ok(())
}

/// Centroid estimate with the per-region stopping rule.
pub fn estimate_codebook(
    arr: &Arrangement,
    params: &EstimationParams,
    stream: &mut SampleStream,
) -> Result<Codebook> {
    params.validate()?;
    check_dims(arr, stream.source())?;
    let mut acc = Accumulator::new(arr.d(), arr.k(), params.min_points_per_region);
    let mut buf = Vec::with_capacity(arr.d());
    while (acc.total() as usize) < params.max_total_points {
        buf.clear();
        stream.next_point_into(&mut buf);
        acc.add(arr.label_bits(&buf), &buf);
        if acc.satisfied() {
            break;
        }
    }
    Ok(acc.to_codebook())
}

/// MSE estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub mse: f64,
    pub stderr: f64,
    pub n: u64,
}

fn mean_and_stderr(sum: f64, sum_sq: f64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / nf).sqrt())
}

/// Mean squared reconstruction error over `n` fresh samples.
pub fn estimate_mse(
    arr: &Arrangement,
    codebook: &Codebook,
    n: usize,
    stream: &mut SampleStream,
) -> Result<MseEstimate> {
    check_dims(arr, stream.source())?;
    if codebook.is_empty() {
        return Err(ClvqError::EmptyCodebook);
    }
    if codebook.k() != arr.k() || codebook.d() != arr.d() {
        return Err(invalid("codebook", "codebook does not match the arrangement"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let lookup = codebook.lookup();
    let mut buf = Vec::with_capacity(arr.d());
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        buf.clear();
        stream.next_point_into(&mut buf);
        let e = lookup.squared_error(arr.label_bits(&buf), &buf);
        sum += e;
        sum_sq += e * e;
    }
    let (mse, stderr) = mean_and_stderr(sum, sum_sq, n as u64);
    Ok(MseEstimate {
        mse,
        stderr,
        n: n as u64,
    })
}

/// Plug-in entropy in bits of a count vector.
pub fn plug_in_entropy<I: IntoIterator<Item = u64>>(counts: I) -> f64 {
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let h = -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p.log2()
        })
        .sum::<f64>();
    h.max(0.0)
}

/// Plug-in entropy (bits) of the comparator output over `n` samples.
pub fn estimate_entropy(arr: &Arrangement, n: usize, stream: &mut SampleStream) -> Result<f64> {
    check_dims(arr, stream.source())?;
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let mut counts: HashMap<u64, u64> = HashMap::new();
    let mut buf = Vec::with_capacity(arr.d());
    for _ in 0..n {
        buf.clear();
        stream.next_point_into(&mut buf);
        *counts.entry(arr.label_bits(&buf)).or_default() += 1;
    }
    let mut c: Vec<u64> = counts.into_values().collect();
    c.sort_unstable();
    Ok(plug_in_entropy(c))
}

/// Codebook plus MSE and entropy, measured on separate streams `seed` and
/// `seed + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub codebook: Codebook,
    pub mse: MseEstimate,
    pub entropy: f64,
}

pub fn evaluate(
    arr: &Arrangement,
    source: &SourceModel,
    params: &EstimationParams,
    seed: u64,
) -> Result<Evaluation> {
    let codebook = estimate_codebook(arr, params, &mut SampleStream::new(*source, seed))?;
    let mut mse_stream = SampleStream::new(*source, seed.wrapping_add(1));
    let mse = estimate_mse(arr, &codebook, params.mse_points, &mut mse_stream)?;
    let entropy = estimate_entropy(
        arr,
        params.mse_points,
        &mut SampleStream::new(*source, seed.wrapping_add(1)),
    )?;
    Ok(Evaluation {
        codebook,
        mse,
        entropy,
    })
}

/// Frozen sample pools for comparing many configurations under common random
/// numbers.
///
/// The centroid pool is drawn lazily from one stream and grows as the
/// stopping rule demands; the MSE pool is drawn once from a second stream.
/// Every configuration evaluated on the same evaluator sees the same points
/// in the same order.
#[derive(Debug, Clone)]
pub struct PoolEvaluator {
    params: EstimationParams,
    source: SourceModel,
    d: usize,
    centroid_stream: SampleStream,
    centroid_pool: Vec<f64>,
    mse_pool: PointSet,
    acc: Option<Accumulator>,
    label_counts: Option<(usize, SlotTable)>,
    evaluations: u64,
}

impl PoolEvaluator {
    pub fn new(source: &SourceModel, params: &EstimationParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mse_pool =
            SampleStream::new(*source, substream_seed(seed, 1)).sample_set(params.mse_points);
        Ok(Self {
            params: *params,
            source: *source,
            d: source.dim(),
            centroid_stream: SampleStream::new(*source, substream_seed(seed, 0)),
            centroid_pool: Vec::new(),
            mse_pool,
            acc: None,
            label_counts: None,
            evaluations: 0,
        })
    }

    pub fn source(&self) -> &SourceModel {
        &self.source
    }

    pub fn params(&self) -> &EstimationParams {
        &self.params
    }

    /// Number of configurations evaluated so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    fn accumulate_by<F: FnMut(usize, &[f64]) -> u64>(&mut self, k: usize, mut bits_of: F) {
        let d = self.d;
        let acc = match &mut self.acc {
            Some(a) if a.k == k => {
                a.reset();
                a
            }
            slot => slot.insert(Accumulator::new(d, k, self.params.min_points_per_region)),
        };
        let mut i = 0;
        while i < self.params.max_total_points {
            if (i + 1) * d > self.centroid_pool.len() {
                let grow = (self.centroid_pool.len() / d).clamp(4096, 65_536);
                let grow = grow.min(self.params.max_total_points - i);
                for _ in 0..grow {
                    self.centroid_stream.next_point_into(&mut self.centroid_pool);
                }
            }
            let x = &self.centroid_pool[i * d..(i + 1) * d];
            acc.add(bits_of(i, x), x);
            i += 1;
            if acc.satisfied() {
                break;
            }
        }
    }

    fn accumulate(&mut self, arr: &Arrangement) {
        self.accumulate_by(arr.k(), |_, x| arr.label_bits(x));
    }

    /// Codebook estimated on the centroid pool.
    pub fn codebook(&mut self, arr: &Arrangement) -> Codebook {
        self.accumulate(arr);
        self.acc.as_ref().unwrap().to_codebook()
    }

    fn mse_by<F: FnMut(usize, &[f64]) -> u64>(&mut self, mut bits_of: F) -> MseEstimate {
        self.evaluations += 1;
        let acc = self.acc.as_ref().unwrap();
        let (centroids, table) = acc.lookup();
        let d = self.d;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for (i, x) in self.mse_pool.rows().enumerate() {
            let e = match table.get(bits_of(i, x)) {
                Some(s) => sq_dist(x, &centroids[s as usize * d..(s as usize + 1) * d]),
                None => centroids
                    .chunks_exact(d)
                    .map(|c| sq_dist(x, c))
                    .fold(f64::INFINITY, f64::min),
            };
            sum += e;
            sum_sq += e * e;
        }
        let n = self.mse_pool.len() as u64;
        let (mse, stderr) = mean_and_stderr(sum, sum_sq, n);
        MseEstimate { mse, stderr, n }
    }

    /// Codebook refresh followed by MSE on the MSE pool.
    pub fn mse(&mut self, arr: &Arrangement) -> MseEstimate {
        assert_eq!(arr.d(), self.d, "arrangement/source dimension mismatch");
        self.accumulate(arr);
        self.mse_by(|_, x| arr.label_bits(x))
    }

    fn entropy_by<F: FnMut(usize, &[f64]) -> u64>(&mut self, k: usize, mut bits_of: F) -> f64 {
        self.evaluations += 1;
        let table = match &mut self.label_counts {
            Some((width, t)) if *width == k => {
                t.clear();
                t
            }
            slot => &mut slot.insert((k, SlotTable::new(k))).1,
        };
        let mut counts: Vec<u64> = Vec::new();
        for (i, x) in self.mse_pool.rows().enumerate() {
            let bits = bits_of(i, x);
            match table.get(bits) {
                Some(s) => counts[s as usize] += 1,
                None => {
                    table.insert(bits, counts.len() as u32);
                    counts.push(1);
                }
            }
        }
        counts.sort_unstable();
        plug_in_entropy(counts)
    }

    /// Plug-in output entropy on the MSE pool.
    pub fn entropy(&mut self, arr: &Arrangement) -> f64 {
        assert_eq!(arr.d(), self.d, "arrangement/source dimension mismatch");
        self.entropy_by(arr.k(), |_, x| arr.label_bits(x))
    }

    /// Objective value (MSE or entropy) for `arr`.
    pub fn value(&mut self, arr: &Arrangement, objective: Objective) -> f64 {
        match objective {
            Objective::MseMin => self.mse(arr).mse,
            Objective::EntropyMax => self.entropy(arr),
        }
    }

    /// Objective values of `arr` with coefficient `c` of hyperplane `j`
    /// (`c == d` is the offset) replaced by each entry of `values`.
    ///
    /// Equivalent to calling [`PoolEvaluator::value`] on each modified
    /// configuration, but labels are updated incrementally. A value that
    /// would zero the normal vector yields NaN.
    pub fn coefficient_scan(
        &mut self,
        arr: &Arrangement,
        j: usize,
        c: usize,
        values: &[f64],
        objective: Objective,
    ) -> Vec<f64> {
        let d = self.d;
        assert_eq!(arr.d(), d, "arrangement/source dimension mismatch");
        assert!(j < arr.k() && c <= d, "coefficient out of range");
        let cap = self.params.max_total_points;
        while self.centroid_pool.len() < cap * d {
            self.centroid_stream.next_point_into(&mut self.centroid_pool);
        }
        let p = arr.hyperplane(j)[c];
        let mask = !(1u64 << j);
        let split = |x: &[f64]| {
            let xc = if c < d { x[c] } else { 1.0 };
            (arr.label_bits(x) & mask, arr.value(j, x) - p * xc, xc)
        };
        let cen: Vec<(u64, f64, f64)> = self.centroid_pool.chunks_exact(d).map(split).collect();
        let mse: Vec<(u64, f64, f64)> = self.mse_pool.rows().map(split).collect();
        let others_zero = c < d && (0..d).all(|i| i == c || arr.row(j)[i] == 0.0);
        values
            .iter()
            .map(|&a| {
                if others_zero && a == 0.0 {
                    return f64::NAN;
                }
                let bit = |&(ob, base, xc): &(u64, f64, f64)| ob | (((base + a * xc >= 0.0) as u64) << j);
                match objective {
                    Objective::MseMin => {
                        self.accumulate_by(arr.k(), |i, _| bit(&cen[i]));
                        self.mse_by(|i, _| bit(&mse[i])).mse
                    }
                    Objective::EntropyMax => self.entropy_by(arr.k(), |i, _| bit(&mse[i])),
                }
            })
            .collect()
    }
}
