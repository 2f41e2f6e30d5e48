//! Comparator configurations `[V, t]` viewed as affine hyperplane arrangements.
//!
//! Comparator `j` outputs `sign(v_j . x + t_j)`. The strict output vector of
//! all `k` comparators is a [`RegionLabel`]; the version that keeps zeros for
//! on-hyperplane points is a [`Covector`].

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ClvqError, Result};
use crate::source::{SampleStream, SourceModel};

/// Largest supported comparator count (labels are packed in a `u64`).
pub const MAX_COMPARATORS: usize = 64;

/// A bank of `k` sign comparators in dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArrangementRepr", into = "ArrangementRepr")]
pub struct Arrangement {
    d: usize,
    weights: Vec<f64>,
    offsets: Vec<f64>,
}

/// On-disk form: `{"d": int, "k": int, "V": [[real]], "t": [real]}`.
#[derive(Serialize, Deserialize)]
struct ArrangementRepr {
    d: usize,
    k: usize,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
    t: Vec<f64>,
}

impl TryFrom<ArrangementRepr> for Arrangement {
    type Error = ClvqError;

    fn try_from(r: ArrangementRepr) -> Result<Self> {
        if r.v.len() != r.k || r.t.len() != r.k {
            return Err(ClvqError::InvalidArrangement(format!(
                "k = {} but V has {} rows and t has {} entries",
                r.k,
                r.v.len(),
                r.t.len()
            )));
        }
        let a = Arrangement::new(r.d, r.v, r.t)?;
        Ok(a)
    }
}

impl From<Arrangement> for ArrangementRepr {
    fn from(a: Arrangement) -> Self {
        ArrangementRepr {
            d: a.d,
            k: a.k(),
            v: a.rows().map(<[f64]>::to_vec).collect(),
            t: a.offsets.clone(),
        }
    }
}

impl Arrangement {
    pub fn new(d: usize, rows: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        let mut weights = Vec::with_capacity(rows.len() * d);
        for (j, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(ClvqError::InvalidArrangement(format!(
                    "row {j} has length {} but d = {d}",
                    r.len()
                )));
            }
            weights.extend_from_slice(r);
        }
        Self::from_flat(d, weights, offsets)
    }

    pub fn from_flat(d: usize, weights: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(ClvqError::InvalidArrangement("d must be at least 1".into()));
        }
        let k = offsets.len();
        if k == 0 || k > MAX_COMPARATORS {
            return Err(ClvqError::InvalidArrangement(format!(
                "k must be in 1..={MAX_COMPARATORS}, got {k}"
            )));
        }
        if weights.len() != k * d {
            return Err(ClvqError::InvalidArrangement(format!(
                "weight buffer has {} entries, expected {}",
                weights.len(),
                k * d
            )));
        }
        if weights.iter().chain(&offsets).any(|v| !v.is_finite()) {
            return Err(ClvqError::InvalidArrangement("non-finite coefficient".into()));
        }
        let a = Self {
            d,
            weights,
            offsets,
        };
        for j in 0..k {
            if !(a.row_norm(j) > 0.0) {
                return Err(ClvqError::InvalidArrangement(format!("row {j} has zero norm")));
            }
        }
        Ok(a)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of comparators (the resolution).
    pub fn k(&self) -> usize {
        self.offsets.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.d..(j + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.weights.chunks_exact(self.d)
    }

    pub fn offset(&self, j: usize) -> f64 {
        self.offsets[j]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn weights_flat(&self) -> &[f64] {
        &self.weights
    }

    /// Hyperplane `j` as its `d + 1` coefficients `(v_j, t_j)`.
    pub fn hyperplane(&self, j: usize) -> Vec<f64> {
        let mut h = self.row(j).to_vec();
        h.push(self.offsets[j]);
        h
    }

    pub fn row_norm(&self, j: usize) -> f64 {
        self.row(j).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `v_j . x + t_j`, no length check.
    #[inline]
    pub fn value(&self, j: usize, x: &[f64]) -> f64 {
        let mut acc = self.offsets[j];
        for (w, xi) in self.row(j).iter().zip(x) {
            acc += w * xi;
        }
        acc
    }

    /// Packed strict label of `x`, no length check. Bit `j` is set iff
    /// comparator `j` outputs `+1` (zero counts as `+1`).
    #[inline]
    pub fn label_bits(&self, x: &[f64]) -> u64 {
        let mut bits = 0u64;
        for j in 0..self.k() {
            if self.value(j, x) >= 0.0 {
                bits |= 1 << j;
            }
        }
        bits
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(ClvqError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn covector(&self, x: &[f64], tol: f64) -> Result<Covector> {
        self.check_len(x)?;
        let signs = (0..self.k())
            .map(|j| {
                let v = self.value(j, x);
                if v.abs() <= tol * self.row_norm(j) {
                    0
                } else if v > 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        Ok(Covector { signs })
    }

    pub fn label(&self, x: &[f64]) -> Result<RegionLabel> {
        self.check_len(x)?;
        Ok(RegionLabel::from_bits(self.label_bits(x), self.k()))
    }

    /// Arrangement whose row `i` is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.k();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("perm", "not a permutation of the comparator indices"));
        }
        let mut w = Vec::with_capacity(self.weights.len());
        let mut t = Vec::with_capacity(k);
        for &p in perm {
            w.extend_from_slice(self.row(p));
            t.push(self.offsets[p]);
        }
        Self::from_flat(self.d, w, t)
    }

    /// Same partition with every row scaled to `||v_j|| = 1`.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        for j in 0..self.k() {
            let n = self.row_norm(j);
            for w in &mut out.weights[j * self.d..(j + 1) * self.d] {
                *w /= n;
            }
            out.offsets[j] /= n;
        }
        out
    }

    /// Copy with hyperplane `j` replaced by `coeffs = (v, t)`.
    pub fn with_hyperplane(&self, j: usize, coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() != self.d + 1 {
            return Err(ClvqError::DimensionMismatch {
                expected: self.d + 1,
                got: coeffs.len(),
            });
        }
        let mut w = self.weights.clone();
        w[j * self.d..(j + 1) * self.d].copy_from_slice(&coeffs[..self.d]);
        let mut t = self.offsets.clone();
        t[j] = coeffs[self.d];
        Self::from_flat(self.d, w, t)
    }

    /// Arrangement built from a list of `(v, t)` hyperplanes.
    pub fn from_hyperplanes(d: usize, hyperplanes: &[Vec<f64>]) -> Result<Self> {
        let mut w = Vec::with_capacity(hyperplanes.len() * d);
        let mut t = Vec::with_capacity(hyperplanes.len());
        for h in hyperplanes {
            if h.len() != d + 1 {
                return Err(ClvqError::DimensionMismatch {
                    expected: d + 1,
                    got: h.len(),
                });
            }
            w.extend_from_slice(&h[..d]);
            t.push(h[d]);
        }
        Self::from_flat(d, w, t)
    }

    /// General-position test with a relative singular-value threshold.
    ///
    /// Every `min(d, k)`-subset of normals must have full rank, and when
    /// `k > d` every `(d + 1)`-subset of augmented rows `[v_j, t_j]` must have
    /// rank `d + 1` (no common point).
    pub fn is_general_position(&self, tol: f64) -> bool {
        let n = self.normalized();
        let k = n.k();
        let d = n.d;
        let p = d.min(k);
        let full_rank = |rows: &[usize], augmented: bool| {
            let cols = if augmented { d + 1 } else { d };
            let m = DMatrix::from_fn(rows.len(), cols, |r, c| {
                if c < d {
                    n.row(rows[r])[c]
                } else {
                    n.offsets[rows[r]]
                }
            });
            let sv = m.singular_values();
            let max = sv.max();
            let min = sv.min();
            max > 0.0 && min > tol * max && sv.len() == rows.len()
        };
        if !combinations(k, p).all(|s| full_rank(&s, false)) {
            return false;
        }
        if k > d && !combinations(k, d + 1).all(|s| full_rank(&s, true)) {
            return false;
        }
        true
    }

    /// Labels observed among `budget` source samples with their empirical masses.
    pub fn enumerate_regions(&self, stream: &mut SampleStream, budget: usize) -> Result<RegionCensus> {
        if budget == 0 {
            return Err(invalid("budget", "must be at least 1"));
        }
        if stream.source().dim() != self.d {
            return Err(ClvqError::DimensionMismatch {
                expected: self.d,
                got: stream.source().dim(),
            });
        }
        let mut counts: BTreeMap<RegionLabel, u64> = BTreeMap::new();
        let mut buf = Vec::with_capacity(self.d);
        for _ in 0..budget {
            buf.clear();
            stream.next_point_into(&mut buf);
            *counts
                .entry(RegionLabel::from_bits(self.label_bits(&buf), self.k()))
                .or_default() += 1;
        }
        Ok(RegionCensus {
            total: budget as u64,
            counts,
        })
    }

    /// Exact set of nonempty open cells for `d = 2`.
    pub fn enumerate_regions_exact_2d(&self) -> Result<BTreeSet<RegionLabel>> {
        let probes = self.boundary_probes_2d()?;
        let mut out = BTreeSet::new();
        for p in probes {
            out.insert(p.negative);
            out.insert(p.positive);
        }
        Ok(out)
    }

    /// One probe per boundary segment of every line of a planar arrangement.
    ///
    /// Each line is cut by the other lines into segments (bounded pieces and
    /// two rays, or the whole line when nothing crosses it). The midpoint of a
    /// segment lies strictly off every other line, so the two cells on either
    /// side of that segment are read off exactly. Every cell of an arrangement
    /// with at least one line has a boundary segment, so the probes see every
    /// cell.
    pub(crate) fn boundary_probes_2d(&self) -> Result<Vec<BoundaryProbe>> {
        if self.d != 2 {
            return Err(ClvqError::RequiresPlanar(self.d));
        }
        let a = self.normalized();
        let k = a.k();
        let mut probes = Vec::new();
        for j in 0..k {
            let v = a.row(j);
            let t = a.offsets[j];
            let base = [-t * v[0], -t * v[1]];
            let dir = [-v[1], v[0]];
            let mut cuts: Vec<f64> = Vec::new();
            for i in 0..k {
                if i == j {
                    continue;
                }
                let vi = a.row(i);
                let along = vi[0] * dir[0] + vi[1] * dir[1];
                if along.abs() <= 1e-12 {
                    continue;
                }
                let at_base = vi[0] * base[0] + vi[1] * base[1] + a.offsets[i];
                cuts.push(-at_base / along);
            }
            cuts.sort_by(f64::total_cmp);
            let scale = 1.0 + cuts.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * scale);
            let mut params = Vec::with_capacity(cuts.len() + 1);
            let mut unbounded = Vec::with_capacity(cuts.len() + 1);
            if cuts.is_empty() {
                params.push(0.0);
                unbounded.push(true);
            } else {
                params.push(cuts[0] - 1.0);
                unbounded.push(true);
                for w in cuts.windows(2) {
                    params.push(0.5 * (w[0] + w[1]));
                    unbounded.push(false);
                }
                params.push(cuts[cuts.len() - 1] + 1.0);
                unbounded.push(true);
            }
            for (s, unb) in params.into_iter().zip(unbounded) {
                let point = [base[0] + s * dir[0], base[1] + s * dir[1]];
                let mut bits = 0u64;
                for i in 0..k {
                    if i != j && a.value(i, &point) >= 0.0 {
                        bits |= 1 << i;
                    }
                }
                probes.push(BoundaryProbe {
                    line: j,
                    point,
                    negative: RegionLabel::from_bits(bits, k),
                    positive: RegionLabel::from_bits(bits | (1 << j), k),
                    unbounded: unb,
                });
            }
        }
        Ok(probes)
    }
}

/// A point on line `line` strictly inside one of its segments, with the
/// labels of the two cells that meet along that segment.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoundaryProbe {
    pub line: usize,
    #[allow(dead_code)]
    pub point: [f64; 2],
    pub negative: RegionLabel,
    pub positive: RegionLabel,
    pub unbounded: bool,
}

/// Sample-based census of arrangement cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCensus {
    pub total: u64,
    pub counts: BTreeMap<RegionLabel, u64>,
}

impl RegionCensus {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn mass(&self, label: &RegionLabel) -> f64 {
        self.counts.get(label).map_or(0.0, |&c| c as f64 / self.total as f64)
    }

    pub fn masses(&self) -> impl Iterator<Item = (RegionLabel, f64)> + '_ {
        self.counts
            .iter()
            .map(move |(l, &c)| (*l, c as f64 / self.total as f64))
    }

    pub fn labels(&self) -> BTreeSet<RegionLabel> {
        self.counts.keys().copied().collect()
    }
}

/// Strict sign vector of length `k`, packed in a `u64` (bit `j` set = `+`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionLabel {
    k: u8,
    bits: u64,
}

impl RegionLabel {
    pub fn from_bits(bits: u64, k: usize) -> Self {
        debug_assert!(k <= MAX_COMPARATORS);
        let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
        Self {
            k: k as u8,
            bits: bits & mask,
        }
    }

    pub fn from_signs(signs: &[i8]) -> Result<Self> {
        if signs.len() > MAX_COMPARATORS {
            return Err(ClvqError::MalformedLabel(format!("{signs:?}")));
        }
        let mut bits = 0;
        for (j, &s) in signs.iter().enumerate() {
            match s {
                1 => bits |= 1 << j,
                -1 => {}
                _ => return Err(ClvqError::MalformedLabel(format!("{signs:?}"))),
            }
        }
        Ok(Self::from_bits(bits, signs.len()))
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.k as usize
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn sign(&self, j: usize) -> i8 {
        if self.bits >> j & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn signs(&self) -> Vec<i8> {
        (0..self.len()).map(|j| self.sign(j)).collect()
    }

    /// Label with coordinate `j` flipped.
    pub fn flipped(&self, j: usize) -> Self {
        Self::from_bits(self.bits ^ (1 << j), self.len())
    }

    /// Indices where the two labels differ.
    pub fn separating(&self, other: &Self) -> Vec<usize> {
        let diff = self.bits ^ other.bits;
        (0..self.len()).filter(|j| diff >> j & 1 == 1).collect()
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len() {
            f.write_str(if self.sign(j) > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl FromStr for RegionLabel {
    type Err = ClvqError;

    fn from_str(s: &str) -> Result<Self> {
        let signs: Vec<i8> = s
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                _ => Err(ClvqError::MalformedLabel(s.to_string())),
            })
            .collect::<Result<_>>()?;
        Self::from_signs(&signs)
    }
}

impl Serialize for RegionLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegionLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sign vector over {-1, 0, +1}; zeros mark on-hyperplane coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Covector {
    pub signs: Vec<i8>,
}

impl Covector {
    pub fn has_zero(&self) -> bool {
        self.signs.contains(&0)
    }

    /// Strict label, zeros resolved to `+1`.
    pub fn to_label(&self) -> RegionLabel {
        let signs: Vec<i8> = self.signs.iter().map(|&s| if s == 0 { 1 } else { s }).collect();
        RegionLabel::from_signs(&signs).expect("covector signs are valid")
    }
}

fn binomial(n: u64, r: u64) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Maximum number of regions cut out of `R^m` by `n` affine hyperplanes:
/// `sum_{i=0}^{m} C(n, i)`.
pub fn max_regions(m: u64, n: u64) -> u128 {
    (0..=m).map(|i| binomial(n, i)).sum()
}

/// Maximum number of regions for `n >= 1` hyperplanes through the origin of
/// `R^m`: `2 * sum_{i=0}^{m-1} C(n-1, i)`.
pub fn max_regions_central(n: u64, m: u64) -> u128 {
    assert!(n >= 1 && m >= 1, "central bound needs n, m >= 1");
    2 * (0..m).map(|i| binomial(n - 1, i)).sum::<u128>()
}

/// Maximum number of regions for `l` directions with `dmult` parallel copies
/// each: `sum_{i=0}^{m} C(l, i) dmult^i`.
pub fn max_regions_parallel(m: u64, l: u64, dmult: u64) -> u128 {
    (0..=m)
        .map(|i| binomial(l, i) * (dmult as u128).pow(i as u32))
        .sum()
}

/// Lexicographic `r`-subsets of `0..n`.
pub(crate) fn combinations(n: usize, r: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut cur: Option<Vec<usize>> = if r <= n { Some((0..r).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let c = cur.as_mut().unwrap();
        let mut i = r;
        loop {
            if i == 0 {
                cur = None;
                break;
            }
            i -= 1;
            if c[i] < n - r + i {
                c[i] += 1;
                for j in i + 1..r {
                    c[j] = c[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    })
}

/// Convenience for tests and examples: lines `a x + b y + c = 0` as `(a, b, c)`.
pub fn lines_2d(lines: &[(f64, f64, f64)]) -> Result<Arrangement> {
    Arrangement::new(
        2,
        lines.iter().map(|&(a, b, _)| vec![a, b]).collect(),
        lines.iter().map(|&(_, _, c)| c).collect(),
    )
}

/// Like [`Arrangement::enumerate_regions`] but drawing from a fresh stream.
pub fn enumerate_regions(
    arr: &Arrangement,
    source: &SourceModel,
    seed: u64,
    budget: usize,
) -> Result<RegionCensus> {
    arr.enumerate_regions(&mut SampleStream::new(*source, seed), budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::SourceModel;
    use proptest::prelude::*;

    fn axes() -> Arrangement {
        lines_2d(&[(1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]).unwrap()
    }

    #[test]
    fn covector_cases() {
        let a = lines_2d(&[(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(a.covector(&[0.0, 0.0], 1e-9).unwrap().signs, vec![0]);
        assert_eq!(a.covector(&[2.0, 5.0], 1e-9).unwrap().signs, vec![1]);
        assert_eq!(axes().covector(&[-1.0, 3.0], 1e-9).unwrap().signs, vec![-1, 1]);
        assert!(a.covector(&[1.0], 0.0).is_err());
    }

    #[test]
    fn covector_tolerance_is_scale_free() {
        let a = lines_2d(&[(1.0, 0.0, 0.0)]).unwrap();
        let b = lines_2d(&[(1000.0, 0.0, 0.0)]).unwrap();
        let x = [1e-7, 0.0];
        assert_eq!(a.covector(&x, 1e-6).unwrap(), b.covector(&x, 1e-6).unwrap());
    }

    #[test]
    fn label_cases() {
        assert_eq!(axes().label(&[-1.0, 3.0]).unwrap().to_string(), "-+");
        assert_eq!(axes().label(&[0.0, -3.0]).unwrap().to_string(), "+-");
        let perm = axes().permuted(&[1, 0]).unwrap();
        assert_eq!(perm.label(&[-1.0, 3.0]).unwrap().to_string(), "+-");
        assert!(axes().label(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn label_string_roundtrip() {
        let l: RegionLabel = "+-+".parse().unwrap();
        assert_eq!(l.signs(), vec![1, -1, 1]);
        assert_eq!(l.to_string(), "+-+");
        assert!("+0".parse::<RegionLabel>().is_err());
    }

    #[test]
    fn zero_row_rejected() {
        assert!(lines_2d(&[(0.0, 0.0, 1.0)]).is_err());
        assert!(Arrangement::new(2, vec![], vec![]).is_err());
    }

    #[test]
    fn json_form() {
        let a = lines_2d(&[(1.0, 2.0, 3.0), (4.0, 5.0, 6.0)]).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"d":2,"k":2,"V":[[1.0,2.0],[4.0,5.0]],"t":[3.0,6.0]}"#);
        let back: Arrangement = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<Arrangement>(r#"{"d":2,"k":3,"V":[[1,0]],"t":[0]}"#).is_err());
    }

    #[test]
    fn region_bounds() {
        assert_eq!(max_regions(2, 3), 7);
        assert_eq!(max_regions(3, 5), 26);
        for m in 1..6 {
            for n in 0..=m {
                assert_eq!(max_regions(m, n), 1u128 << n);
            }
        }
        assert_eq!(max_regions_central(1, 2), 2);
        assert_eq!(max_regions_central(3, 2), 6);
        assert_eq!(max_regions_central(2, 2), 4);
        assert_eq!(max_regions_parallel(2, 2, 2), 9);
        for m in 1..5 {
            for l in 1..7 {
                assert_eq!(max_regions_parallel(m, l, 1), max_regions(m, l));
                if m >= l {
                    for dm in 1..4 {
                        assert_eq!(max_regions_parallel(m, l, dm), (1 + dm as u128).pow(l as u32));
                    }
                }
            }
        }
        for n in 1..10 {
            for m in 1..6 {
                assert!(max_regions_central(n, m) <= max_regions(m, n));
            }
        }
    }

    #[test]
    fn general_position_cases() {
        let parallel = lines_2d(&[(1.0, 0.0, 0.0), (1.0, 0.0, -1.0)]).unwrap();
        assert!(!parallel.is_general_position(1e-9));
        let concurrent = lines_2d(&[(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 1.0, 0.0)]).unwrap();
        assert!(!concurrent.is_general_position(1e-9));
        let gp = lines_2d(&[(1.0, 0.0, 0.1), (0.0, 1.0, 0.2), (1.0, 1.0, 0.7)]).unwrap();
        assert!(gp.is_general_position(1e-9));
        // fixed random instance
        let mut s = SampleStream::new(SourceModel::gaussian(3), 99);
        let rows: Vec<Vec<f64>> = s.sample(3).unwrap().into_iter().map(|r| r[..2].to_vec()).collect();
        let t: Vec<f64> = s.sample(1).unwrap()[0].clone();
        assert!(Arrangement::new(2, rows, t).unwrap().is_general_position(1e-9));
    }

    #[test]
    fn exact_enumeration_cases() {
        let one = lines_2d(&[(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(one.enumerate_regions_exact_2d().unwrap().len(), 2);
        let par = lines_2d(&[(1.0, 0.0, 0.0), (2.0, 0.0, -1.0)]).unwrap();
        assert_eq!(par.enumerate_regions_exact_2d().unwrap().len(), 3);
        assert_eq!(axes().enumerate_regions_exact_2d().unwrap().len(), 4);
        let gp = lines_2d(&[(1.0, 0.0, 0.1), (0.0, 1.0, 0.2), (1.0, 1.0, 0.7)]).unwrap();
        assert_eq!(gp.enumerate_regions_exact_2d().unwrap().len(), 7);
        let conc = lines_2d(&[(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 1.0, 0.0)]).unwrap();
        assert_eq!(conc.enumerate_regions_exact_2d().unwrap().len(), 6);
        let three_d = Arrangement::new(3, vec![vec![1.0, 0.0, 0.0]], vec![0.0]).unwrap();
        assert!(matches!(three_d.enumerate_regions_exact_2d(), Err(ClvqError::RequiresPlanar(3))));
    }

    #[test]
    fn sampled_enumeration_cases() {
        let one = lines_2d(&[(1.0, 0.0, 0.0)]).unwrap();
        let c = enumerate_regions(&one, &SourceModel::gaussian(2), 1, 100_000).unwrap();
        assert_eq!(c.len(), 2);
        for (_, m) in c.masses() {
            assert!((m - 0.5).abs() < 0.01);
        }
        let gp = lines_2d(&[(1.0, 0.0, 0.1), (0.0, 1.0, 0.2), (1.0, 1.0, 0.7)]).unwrap();
        let c = enumerate_regions(&gp, &SourceModel::gaussian(2), 2, 200_000).unwrap();
        assert_eq!(c.len(), 7);
        let total: f64 = c.masses().map(|(_, m)| m).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let par = lines_2d(&[(1.0, 0.0, 0.5), (1.0, 0.0, 0.0), (1.0, 0.0, -0.5)]).unwrap();
        let c = enumerate_regions(&par, &SourceModel::uniform(2), 3, 50_000).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.labels().is_subset(&par.enumerate_regions_exact_2d().unwrap()));
    }

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(5, 2).count(), 10);
        assert_eq!(combinations(3, 3).count(), 1);
        assert_eq!(combinations(2, 3).count(), 0);
        assert_eq!(combinations(4, 0).count(), 1);
    }

    proptest! {
        #[test]
        fn label_matches_covector_off_boundary(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 12),
            x in proptest::collection::vec(-3.0f64..3.0, 3),
        ) {
            let rows: Vec<Vec<f64>> = coeffs[..9].chunks(3).map(|c| c.to_vec()).collect();
            prop_assume!(rows.iter().all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-6));
            let a = Arrangement::new(3, rows, coeffs[9..].to_vec()).unwrap();
            let cov = a.covector(&x, 1e-9).unwrap();
            prop_assume!(!cov.has_zero());
            prop_assert_eq!(cov.to_label(), a.label(&x).unwrap());
        }

        #[test]
        fn permutation_covariance(seed in 0u64..1000) {
            let mut s = SampleStream::new(SourceModel::gaussian(2), seed);
            let pts = s.sample(5).unwrap();
            let a = Arrangement::new(2, pts[..4].to_vec(), vec![0.1, -0.2, 0.3, 0.0]).unwrap();
            let perm = [2, 0, 3, 1];
            let p = a.permuted(&perm).unwrap();
            let la = a.label(&pts[4]).unwrap();
            let lp = p.label(&pts[4]).unwrap();
            for (i, &src) in perm.iter().enumerate() {
                prop_assert_eq!(lp.sign(i), la.sign(src));
            }
        }

        #[test]
        fn exact_count_within_bound(seed in 0u64..500, k in 1usize..6) {
            let mut s = SampleStream::new(SourceModel::gaussian(3), seed);
            let pts = s.sample(k).unwrap();
            let a = Arrangement::new(2, pts.iter().map(|p| p[..2].to_vec()).collect(),
                pts.iter().map(|p| p[2]).collect()).unwrap();
            let exact = a.enumerate_regions_exact_2d().unwrap();
            prop_assert!(exact.len() as u128 <= max_regions(2, k as u64));
            if a.is_general_position(1e-9) {
                prop_assert_eq!(exact.len() as u128, max_regions(2, k as u64));
            }
        }
    }
}
