//! Experiment runner behind the `clvq` binary.
//!
//! Every output is a pure function of the config and seed: no timestamps,
//! and concurrent restarts are collected in restart order.

pub mod config;

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use clvq::arrangement::{max_regions, max_regions_central, max_regions_parallel};
use clvq::arrgraph::{build_region_graph, MAX_GRAPH_COMPARATORS};
use clvq::baselines::{lbg_comparator_matched, lbg_region_matched, LbgSelection};
use clvq::estimation::{Objective, PoolEvaluator};
use clvq::initsearch::{genetic_init, GeneticTrace};
use clvq::optimizer::{design_multi, DesignReport, InitStrategy, MultiDesign};
use clvq::source::substream_seed;
use clvq::SampleStream;
use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, KSpec};

/// Seed-derivation tags, one per consumer of the base seed.
const TAG_PROPOSED: u64 = 0;
const TAG_LBG_COMPARATOR: u64 = 1 << 32;
const TAG_LBG_REGION: u64 = 2 << 32;
const TAG_GENETIC: u64 = 3 << 32;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub jobs: usize,
}

impl RunOptions {
    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        Self {
            out: cfg.outputs.clone(),
            jobs: 1,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn proposed_seed(seed: u64, k: usize) -> u64 {
    substream_seed(seed, TAG_PROPOSED + k as u64)
}

/// One `design` output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub best_index: usize,
    pub best_mse: f64,
    pub mean_mse: f64,
    pub best_entropy: f64,
    pub mean_entropy: f64,
    pub reports: Vec<DesignReport>,
}

impl DesignFile {
    fn new(k: usize, seed: u64, m: MultiDesign) -> Self {
        let best = m.best();
        Self {
            k,
            seed,
            restarts: m.reports.len(),
            best_index: m.best_index,
            best_mse: best.final_mse,
            mean_mse: m.mean_mse,
            best_entropy: best.final_entropy,
            mean_entropy: m.mean_entropy,
            reports: m.reports,
        }
    }

    pub fn best(&self) -> &DesignReport {
        &self.reports[self.best_index]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummaryRow {
    pub k: usize,
    pub best_mse: f64,
    pub mean_mse: f64,
    pub best_entropy: f64,
    pub region_count: usize,
    pub best_restart: usize,
}

/// Runs every `k` of the config; writes `design_k{k}.json`,
/// `trace_k{k}_r{restart}.csv` and `summary.json` under `opts.out`.
pub fn run_design(cfg: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<Vec<DesignFile>> {
    cfg.validate()?;
    fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    let params = cfg.optimizer_params();
    let mut files = Vec::new();
    for k in cfg.ks() {
        let seed = proposed_seed(cfg.seed, k);
        let m = design_multi(&cfg.source, k, &params, &cfg.init, cfg.restarts, seed, opts.jobs)?;
        let file = DesignFile::new(k, cfg.seed, m);
        write_json(&opts.out.join(format!("design_k{k}.json")), &file)?;
        for r in &file.reports {
            let path = opts.out.join(format!("trace_k{k}_r{}.csv", r.restart_index));
            fs::write(&path, r.trace_csv()).with_context(|| format!("writing {}", path.display()))?;
        }
        files.push(file);
    }
    let summary: Vec<DesignSummaryRow> = files
        .iter()
        .map(|f| DesignSummaryRow {
            k: f.k,
            best_mse: f.best_mse,
            mean_mse: f.mean_mse,
            best_entropy: f.best_entropy,
            region_count: f.best().region_count,
            best_restart: f.best_index,
        })
        .collect();
    write_json(&opts.out.join("summary.json"), &summary)?;
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    LbgComparatorMatched,
    LbgRegionMatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    /// Comparator count for the first two methods, point count for
    /// region-matched LBG.
    pub k_or_regions: usize,
    pub method: Method,
    pub distortion_best: f64,
    pub distortion_mean: f64,
    /// Standard error of `distortion_best`.
    pub distortion_stderr: f64,
    pub region_count: usize,
    pub restarts: usize,
    pub seed: u64,
}

fn lbg_row(d: usize, key: usize, method: Method, sel: &LbgSelection, seed: u64) -> SweepRow {
    SweepRow {
        d,
        k_or_regions: key,
        method,
        distortion_best: sel.best.mse,
        distortion_mean: sel.mean_mse,
        distortion_stderr: sel.best.mse_stderr,
        region_count: sel.best.codebook.len(),
        restarts: sel.runs.len(),
        seed,
    }
}

/// Proposed design against both LBG baselines for every `k`; rows are
/// appended to `sweep.csv` under `opts.out`.
pub fn run_comparison(cfg: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<Vec<SweepRow>> {
    cfg.validate()?;
    ensure!(
        cfg.objective == Objective::MseMin,
        "invalid config: field `objective` must be mse_min for comparisons"
    );
    fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    let params = cfg.optimizer_params();
    let d = cfg.source.dim();
    let mut rows = Vec::new();
    for k in cfg.ks() {
        let m = design_multi(
            &cfg.source,
            k,
            &params,
            &cfg.init,
            cfg.restarts,
            proposed_seed(cfg.seed, k),
            opts.jobs,
        )?;
        let best = m.best();
        rows.push(SweepRow {
            d,
            k_or_regions: k,
            method: Method::Proposed,
            distortion_best: best.final_mse,
            distortion_mean: m.mean_mse,
            distortion_stderr: best.final_mse_stderr,
            region_count: best.region_count,
            restarts: cfg.restarts,
            seed: cfg.seed,
        });
        let cm = lbg_comparator_matched(
            &cfg.source,
            k,
            &cfg.lbg,
            substream_seed(cfg.seed, TAG_LBG_COMPARATOR + k as u64),
        )?;
        rows.push(lbg_row(d, k, Method::LbgComparatorMatched, &cm, cfg.seed));
        let regions = best.region_count;
        let rm = lbg_region_matched(
            &cfg.source,
            regions,
            &cfg.lbg,
            substream_seed(cfg.seed, TAG_LBG_REGION + regions as u64),
        )?;
        rows.push(lbg_row(d, regions, Method::LbgRegionMatched, &rm, cfg.seed));
    }
    append_sweep(&opts.out.join("sweep.csv"), &rows)?;
    Ok(rows)
}

/// Appends rows, writing the header only when the file is new or empty.
pub fn append_sweep(path: &Path, rows: &[SweepRow]) -> anyhow::Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep(path: &Path) -> anyhow::Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneticRuns {
    pub k: usize,
    pub runs: Vec<GeneticTrace>,
    /// Per generation `(best, mean)` averaged over runs.
    pub average: Vec<(f64, f64)>,
}

fn genetic_csv(rows: impl Iterator<Item = (usize, f64, f64)>) -> String {
    let mut out = String::from("generation,best_mse,mean_mse\n");
    for (g, b, m) in rows {
        let _ = writeln!(out, "{g},{b},{m}");
    }
    out
}

/// Genetic search alone, `restarts` runs per `k`. Distortion is reported
/// per coordinate (total MSE divided by `d`). Writes
/// `genetic_k{k}_run{r}.csv` and the run average `genetic_k{k}_average.csv`.
pub fn run_genetic_trace(cfg: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<Vec<GeneticRuns>> {
    cfg.validate()?;
    let InitStrategy::Genetic { params, estimation } = &cfg.init else {
        bail!("invalid config: field `init` must select the genetic strategy");
    };
    fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    let source = cfg.source;
    let d = source.dim() as f64;
    let objective = cfg.objective;
    let mut all = Vec::new();
    for k in cfg.ks() {
        let base = substream_seed(cfg.seed, TAG_GENETIC + k as u64);
        let mut runs = Vec::with_capacity(cfg.restarts);
        for r in 0..cfg.restarts {
            let seed = substream_seed(base, r as u64);
            let mut eval = PoolEvaluator::new(&source, estimation, substream_seed(seed, 1))?;
            let mut stream = SampleStream::new(source, seed);
            let (_, trace) = genetic_init(
                &source,
                k,
                params,
                |a| match objective {
                    Objective::MseMin => eval.mse(a).mse / d,
                    Objective::EntropyMax => -eval.entropy(a),
                },
                &mut stream,
            )?;
            let path = opts.out.join(format!("genetic_k{k}_run{r}.csv"));
            let rows = trace.generations.iter().map(|g| (g.generation, g.best, g.mean));
            fs::write(&path, genetic_csv(rows)).with_context(|| format!("writing {}", path.display()))?;
            runs.push(trace);
        }
        let n = runs.len() as f64;
        let average: Vec<(f64, f64)> = (0..params.generations)
            .map(|g| {
                let b = runs.iter().map(|t| t.generations[g].best).sum::<f64>() / n;
                let m = runs.iter().map(|t| t.generations[g].mean).sum::<f64>() / n;
                (b, m)
            })
            .collect();
        let path = opts.out.join(format!("genetic_k{k}_average.csv"));
        let rows = average.iter().enumerate().map(|(g, &(b, m))| (g, b, m));
        fs::write(&path, genetic_csv(rows)).with_context(|| format!("writing {}", path.display()))?;
        all.push(GeneticRuns { k, runs, average });
    }
    Ok(all)
}

/// A report file as accepted by [`export_plot_data`].
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ReportInput {
    Design(Box<DesignFile>),
    Single(Box<DesignReport>),
}

impl ReportInput {
    pub fn load(path: &Path) -> anyhow::Result<DesignReport> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let input: ReportInput =
            serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))?;
        Ok(match input {
            ReportInput::Design(f) => f.best().clone(),
            ReportInput::Single(r) => *r,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportOptions {
    pub points: usize,
    pub seed: u64,
    /// Coordinates written as `x` and `y`.
    pub coords: (usize, usize),
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            points: 5_000,
            seed: 0,
            coords: (0, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportSummary {
    pub points: usize,
    /// `None` when the design is not planar.
    pub boundaries: Option<usize>,
    /// Vertex count of the exported region graph, if any.
    pub graph_vertices: Option<usize>,
}

/// Writes `points.csv` (`x,y,label`), and for planar designs
/// `boundaries.csv` (`line,v0,v1,t`) plus `region_graph.json` and
/// `region_graph.dot`.
pub fn export_plot_data(report: &DesignReport, out: &Path, opts: &ExportOptions) -> anyhow::Result<ExportSummary> {
    let arr = &report.arrangement;
    let d = arr.d();
    let (cx, cy) = opts.coords;
    ensure!(
        cx < d && (cy < d || d == 1),
        "coordinate pair ({cx}, {cy}) out of range for d = {d}"
    );
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut stream = SampleStream::new(report.source, opts.seed);
    let mut w = csv::Writer::from_path(out.join("points.csv"))?;
    w.write_record(["x", "y", "label"])?;
    let mut x = Vec::with_capacity(d);
    for _ in 0..opts.points {
        x.clear();
        stream.next_point_into(&mut x);
        let label = arr.label(&x)?;
        let y = if d == 1 { 0.0 } else { x[cy] };
        w.write_record([x[cx].to_string(), y.to_string(), label.to_string()])?;
    }
    w.flush()?;

    if d != 2 {
        return Ok(ExportSummary {
            points: opts.points,
            boundaries: None,
            graph_vertices: None,
        });
    }
    let mut b = csv::Writer::from_path(out.join("boundaries.csv"))?;
    b.write_record(["line", "v0", "v1", "t"])?;
    for j in 0..arr.k() {
        let v = arr.row(j);
        b.write_record([j.to_string(), v[0].to_string(), v[1].to_string(), arr.offset(j).to_string()])?;
    }
    b.flush()?;
    let graph_vertices = if arr.k() <= MAX_GRAPH_COMPARATORS {
        let g = build_region_graph(arr)?;
        write_json(&out.join("region_graph.json"), &g)?;
        fs::write(out.join("region_graph.dot"), g.to_dot())?;
        Some(g.vertex_count())
    } else {
        None
    };
    Ok(ExportSummary {
        points: opts.points,
        boundaries: Some(arr.k()),
        graph_vertices,
    })
}

/// Tables of the region-count bounds: general position, central, and
/// families of parallel hyperplanes in the plane.
pub fn bounds_table(max_d: usize, max_k: usize) -> String {
    let mut out = String::new();
    let header = |out: &mut String, title: &str, col: &str| {
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{col:>6}");
        for k in 1..=max_k {
            let _ = write!(out, "{k:>8}");
        }
        out.push('\n');
    };
    header(&mut out, "max regions, k hyperplanes in general position in R^d", "d\\k");
    for d in 1..=max_d {
        let _ = write!(out, "{d:>6}");
        for k in 1..=max_k {
            let _ = write!(out, "{:>8}", max_regions(d as u64, k as u64));
        }
        out.push('\n');
    }
    out.push('\n');
    header(&mut out, "max regions, k hyperplanes through one point in R^d", "d\\k");
    for d in 1..=max_d {
        let _ = write!(out, "{d:>6}");
        for k in 1..=max_k {
            let _ = write!(out, "{:>8}", max_regions_central(k as u64, d as u64));
        }
        out.push('\n');
    }
    out.push('\n');
    header(&mut out, "max regions in R^2, l directions with p parallel lines each", "p\\l");
    for p in 1..=max_d.max(1) {
        let _ = write!(out, "{p:>6}");
        for l in 1..=max_k {
            let _ = write!(out, "{:>8}", max_regions_parallel(2, l as u64, p as u64));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_table_has_known_entries() {
        let t = bounds_table(3, 4);
        let lines: Vec<&str> = t.lines().collect();
        let row2: Vec<&str> = lines[3].split_whitespace().collect();
        assert_eq!(row2, ["2", "2", "4", "7", "11"]);
        assert!(t.contains("through one point"));
    }

    #[test]
    fn sweep_append_keeps_old_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let row = SweepRow {
            d: 2,
            k_or_regions: 1,
            method: Method::Proposed,
            distortion_best: 1.36,
            distortion_mean: 1.37,
            distortion_stderr: 0.001,
            region_count: 2,
            restarts: 1,
            seed: 1,
        };
        append_sweep(&path, &[row.clone()]).unwrap();
        let mut second = row.clone();
        second.seed = 2;
        append_sweep(&path, &[second.clone()]).unwrap();
        assert_eq!(read_sweep(&path).unwrap(), vec![row, second]);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("d,k_or_regions,method,"));
        assert_eq!(text.matches("method").count(), 1);
    }
}
