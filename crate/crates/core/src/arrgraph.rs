//! Region adjacency graphs of planar arrangements.
//!
//! Vertices are the cells plus one vertex standing for the circle at
//! infinity. Two cells separated by a segment of line `j` are joined by an
//! edge of color `j`; every unbounded cell is joined to the infinity vertex by
//! a sphere-colored edge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::arrangement::{Arrangement, RegionLabel};
use crate::error::{invalid, ClvqError, Result};

/// Largest comparator count accepted by [`build_region_graph`].
pub const MAX_GRAPH_COMPARATORS: usize = 8;

pub const INFINITY_LABEL: &str = "INF";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeColor {
    Hyperplane(usize),
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Region(RegionLabel),
    Infinity,
}

impl std::fmt::Display for Vertex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Vertex::Region(l) => write!(f, "{l}"),
            Vertex::Infinity => f.write_str(INFINITY_LABEL),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionGraph {
    k: usize,
    regions: Vec<RegionLabel>,
    /// `(u, v, color)` with `u < v` as vertex indices; the infinity vertex
    /// has index `regions.len()`.
    edges: BTreeSet<(usize, usize, EdgeColor)>,
}

impl RegionGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    /// Region vertices plus the infinity vertex.
    pub fn vertex_count(&self) -> usize {
        self.regions.len() + 1
    }

    pub fn regions(&self) -> &[RegionLabel] {
        &self.regions
    }

    fn infinity(&self) -> usize {
        self.regions.len()
    }

    pub fn vertex(&self, i: usize) -> Vertex {
        if i == self.infinity() {
            Vertex::Infinity
        } else {
            Vertex::Region(self.regions[i])
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex, EdgeColor)> + '_ {
        self.edges.iter().map(|&(u, v, c)| (self.vertex(u), self.vertex(v), c))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn color_count(&self, color: EdgeColor) -> usize {
        self.edges.iter().filter(|e| e.2 == color).count()
    }

    /// Unbounded cells.
    pub fn unbounded(&self) -> Vec<RegionLabel> {
        let inf = self.infinity();
        self.edges
            .iter()
            .filter(|e| e.1 == inf)
            .map(|e| self.regions[e.0])
            .collect()
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph regions {\n");
        let _ = writeln!(out, "  \"{INFINITY_LABEL}\" [shape=doublecircle];");
        for r in &self.regions {
            let _ = writeln!(out, "  \"{r}\";");
        }
        for (u, v, c) in self.edges() {
            match c {
                EdgeColor::Hyperplane(j) => {
                    let _ = writeln!(out, "  \"{u}\" -- \"{v}\" [label=\"{j}\"];");
                }
                EdgeColor::Sphere => {
                    let _ = writeln!(out, "  \"{u}\" -- \"{v}\" [style=dashed];");
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ColorRepr {
    Hyperplane(usize),
    Sphere(String),
}

#[derive(Serialize, Deserialize)]
struct RegionGraphRepr {
    vertices: Vec<String>,
    edges: Vec<(String, String, ColorRepr)>,
}

impl Serialize for RegionGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut vertices: Vec<String> = self.regions.iter().map(|r| r.to_string()).collect();
        vertices.push(INFINITY_LABEL.into());
        let edges = self
            .edges()
            .map(|(u, v, c)| {
                let c = match c {
                    EdgeColor::Hyperplane(j) => ColorRepr::Hyperplane(j),
                    EdgeColor::Sphere => ColorRepr::Sphere("sphere".into()),
                };
                (u.to_string(), v.to_string(), c)
            })
            .collect();
        RegionGraphRepr { vertices, edges }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RegionGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = RegionGraphRepr::deserialize(d)?;
        if r.vertices.iter().filter(|v| *v == INFINITY_LABEL).count() != 1 {
            return Err(D::Error::custom("exactly one INF vertex required"));
        }
        let mut regions = Vec::new();
        for v in r.vertices.iter().filter(|v| *v != INFINITY_LABEL) {
            regions.push(v.parse::<RegionLabel>().map_err(D::Error::custom)?);
        }
        regions.sort();
        let k = regions.first().map_or(0, RegionLabel::len);
        let index = |s: &str| -> std::result::Result<usize, D::Error> {
            if s == INFINITY_LABEL {
                return Ok(regions.len());
            }
            let l: RegionLabel = s.parse().map_err(D::Error::custom)?;
            regions
                .binary_search(&l)
                .map_err(|_| D::Error::custom(format!("edge endpoint {s} is not a vertex")))
        };
        let mut edges = BTreeSet::new();
        for (u, v, c) in &r.edges {
            let (a, b) = (index(u)?, index(v)?);
            let c = match c {
                ColorRepr::Hyperplane(j) => EdgeColor::Hyperplane(*j),
                ColorRepr::Sphere(s) if s == "sphere" => EdgeColor::Sphere,
                ColorRepr::Sphere(s) => return Err(D::Error::custom(format!("unknown edge color {s}"))),
            };
            edges.insert((a.min(b), a.max(b), c));
        }
        Ok(RegionGraph { k, regions, edges })
    }
}

fn check_distinct(arr: &Arrangement) -> Result<()> {
    let a = arr.normalized();
    for i in 0..a.k() {
        for j in 0..i {
            let (hi, hj) = (a.hyperplane(i), a.hyperplane(j));
            let same = hi.iter().zip(&hj).all(|(x, y)| (x - y).abs() <= 1e-12);
            let opposite = hi.iter().zip(&hj).all(|(x, y)| (x + y).abs() <= 1e-12);
            if same || opposite {
                return Err(ClvqError::InvalidArrangement(format!(
                    "hyperplanes {j} and {i} coincide"
                )));
            }
        }
    }
    Ok(())
}

/// Region graph of a planar arrangement with pairwise distinct lines.
pub fn build_region_graph(arr: &Arrangement) -> Result<RegionGraph> {
    if arr.d() != 2 {
        return Err(ClvqError::RequiresPlanar(arr.d()));
    }
    if arr.k() > MAX_GRAPH_COMPARATORS {
        return Err(invalid(
            "k",
            format!("region graphs support at most {MAX_GRAPH_COMPARATORS} lines, got {}", arr.k()),
        ));
    }
    check_distinct(arr)?;
    let probes = arr.boundary_probes_2d()?;
    let regions: Vec<RegionLabel> = probes
        .iter()
        .flat_map(|p| [p.negative, p.positive])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = |l: &RegionLabel| regions.binary_search(l).expect("probe label is a region");
    let inf = regions.len();
    let mut edges = BTreeSet::new();
    for p in &probes {
        let (a, b) = (index(&p.negative), index(&p.positive));
        edges.insert((a.min(b), a.max(b), EdgeColor::Hyperplane(p.line)));
        if p.unbounded {
            edges.insert((a, inf, EdgeColor::Sphere));
            edges.insert((b, inf, EdgeColor::Sphere));
        }
    }
    Ok(RegionGraph {
        k: arr.k(),
        regions,
        edges,
    })
}

/// Sign strings of every cell when line `j` is read with its normal flipped
/// for each `j` with `flip[j]`. Keys are the cells' labels under the
/// arrangement's own orientation.
pub fn region_sign_labels(arr: &Arrangement, flip: &[bool]) -> Result<BTreeMap<RegionLabel, String>> {
    if flip.len() != arr.k() {
        return Err(ClvqError::DimensionMismatch {
            expected: arr.k(),
            got: flip.len(),
        });
    }
    let mask = flip
        .iter()
        .enumerate()
        .fold(0u64, |m, (j, &f)| if f { m | (1 << j) } else { m });
    Ok(arr
        .enumerate_regions_exact_2d()?
        .into_iter()
        .map(|l| (l, RegionLabel::from_bits(l.bits() ^ mask, l.len()).to_string()))
        .collect())
}

/// Vertex-colored simple graph used for canonical labeling. Each colored
/// edge becomes its own vertex adjacent to both endpoints and, for line
/// colors, to a vertex representing that line.
struct Gadget {
    adj: Vec<Vec<usize>>,
    kind: Vec<u32>,
}

const KIND_REGION: u32 = 0;
const KIND_INFINITY: u32 = 1;
const KIND_LINE_EDGE: u32 = 2;
const KIND_SPHERE_EDGE: u32 = 3;
const KIND_LINE: u32 = 4;

impl Gadget {
    fn new(g: &RegionGraph) -> Self {
        let nv = g.vertex_count();
        let mut kind = vec![KIND_REGION; nv];
        kind[g.infinity()] = KIND_INFINITY;
        let line_base = nv;
        kind.extend(std::iter::repeat_n(KIND_LINE, g.k));
        let mut adj = vec![Vec::new(); nv + g.k];
        for &(u, v, c) in &g.edges {
            let e = adj.len();
            adj.push(vec![u, v]);
            adj[u].push(e);
            adj[v].push(e);
            match c {
                EdgeColor::Hyperplane(j) => {
                    kind.push(KIND_LINE_EDGE);
                    adj[e].push(line_base + j);
                    adj[line_base + j].push(e);
                }
                EdgeColor::Sphere => kind.push(KIND_SPHERE_EDGE),
            }
        }
        Self { adj, kind }
    }

    /// Coarsest equitable refinement of `colors`, with class indices ranked
    /// by an isomorphism-invariant order.
    fn refine(&self, mut colors: Vec<u32>) -> Vec<u32> {
        let n = colors.len();
        let mut classes = colors.iter().collect::<BTreeSet<_>>().len();
        loop {
            let sigs: Vec<(u32, Vec<u32>)> = (0..n)
                .map(|v| {
                    let mut s: Vec<u32> = self.adj[v].iter().map(|&u| colors[u]).collect();
                    s.sort_unstable();
                    (colors[v], s)
                })
                .collect();
            let ranks: BTreeMap<&(u32, Vec<u32>), u32> = sigs
                .iter()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(i, s)| (s, i as u32))
                .collect();
            let next: Vec<u32> = sigs.iter().map(|s| ranks[s]).collect();
            let count = ranks.len();
            colors = next;
            if count == classes {
                return colors;
            }
            classes = count;
        }
    }

    fn certificate(&self, colors: &[u32]) -> String {
        let n = colors.len();
        let mut kinds = vec![0u32; n];
        for v in 0..n {
            kinds[colors[v] as usize] = self.kind[v];
        }
        let mut edges: Vec<(u32, u32)> = Vec::new();
        for v in 0..n {
            for &u in &self.adj[v] {
                if v < u {
                    let (a, b) = (colors[v], colors[u]);
                    edges.push((a.min(b), a.max(b)));
                }
            }
        }
        edges.sort_unstable();
        let mut s = String::with_capacity(8 * (n + edges.len()));
        for k in kinds {
            let _ = write!(s, "{k}");
        }
        s.push('|');
        for (a, b) in edges {
            let _ = write!(s, "{a}-{b},");
        }
        s
    }

    fn search(&self, colors: Vec<u32>, best: &mut Option<String>) {
        let colors = self.refine(colors);
        let n = colors.len();
        let mut size = vec![0usize; n];
        for &c in &colors {
            size[c as usize] += 1;
        }
        let Some(target) = (0..n).find(|&c| size[c] > 1) else {
            let cert = self.certificate(&colors);
            if best.as_ref().is_none_or(|b| cert < *b) {
                *best = Some(cert);
            }
            return;
        };
        for v in (0..n).filter(|&v| colors[v] as usize == target) {
            // v moves ahead of the rest of its class
            let split: Vec<u32> = (0..n)
                .map(|u| 2 * colors[u] + u32::from(colors[u] as usize == target && u != v))
                .collect();
            self.search(split, best);
        }
    }
}

/// String identifying a region graph up to vertex relabeling and
/// re-indexing of the lines.
pub fn canonical_form(g: &RegionGraph) -> String {
    let gadget = Gadget::new(g);
    let mut best = None;
    gadget.search(gadget.kind.clone(), &mut best);
    format!("r{}k{}:{}", g.region_count(), g.k, best.expect("search reaches a leaf"))
}

pub fn is_isomorphic(g1: &RegionGraph, g2: &RegionGraph) -> bool {
    g1.region_count() == g2.region_count()
        && g1.edge_count() == g2.edge_count()
        && canonical_form(g1) == canonical_form(g2)
}
