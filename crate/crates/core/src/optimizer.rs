//! Alternating design loop: centroid refresh after every configuration
//! change, with random global perturbations early on and coordinate line
//! searches on single hyperplanes later.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arrangement::{max_regions, Arrangement};
use crate::error::{invalid, ClvqError, Result};
use crate::estimation::{evaluate, Codebook, EstimationParams, Objective, PoolEvaluator};
use crate::initsearch::{genetic_init, random_init, GeneticParams, GeneticTrace};
use crate::source::{substream_seed, SampleStream, SourceModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerParams {
    #[serde(rename = "T_max")]
    pub t_max: usize,
    /// Decay rate of the global-move probability `exp(-s t)`.
    pub s: f64,
    /// Initial perturbation scale, in units of the source coordinate scale.
    pub sigma0: f64,
    pub sigma_decay: f64,
    pub grid_points: usize,
    pub objective: Objective,
    /// Half-width of each line search, in units of the coefficient scale.
    pub search_halfwidth: f64,
    /// Budget used inside the loop.
    pub estimation: EstimationParams,
    /// Budget for the final estimates of the returned configuration.
    pub reporting: EstimationParams,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            t_max: 120,
            s: 0.05,
            sigma0: 0.5,
            sigma_decay: 0.95,
            grid_points: 40,
            objective: Objective::MseMin,
            search_halfwidth: 1.0,
            estimation: EstimationParams::optimization(),
            reporting: EstimationParams::reporting(),
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(invalid("T_max", "must be at least 1"));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(invalid("s", "must be positive"));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(invalid("sigma0", "must be positive"));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay < 1.0) {
            return Err(invalid("sigma_decay", "must lie in (0, 1)"));
        }
        if self.grid_points < 5 {
            return Err(invalid("grid_points", "must be at least 5"));
        }
        if !(self.search_halfwidth > 0.0 && self.search_halfwidth.is_finite()) {
            return Err(invalid("search_halfwidth", "must be positive"));
        }
        self.estimation.validate()?;
        self.reporting.validate()
    }

    pub fn schedule(&self, source: &SourceModel) -> Schedule {
        Schedule {
            s: self.s,
            sigma0: self.sigma0 * source.coordinate_scale(),
            sigma_decay: self.sigma_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub s: f64,
    pub sigma0: f64,
    pub sigma_decay: f64,
}

impl Schedule {
    pub fn p_global(&self, t: usize) -> f64 {
        (-self.s * t as f64).exp()
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma0 * self.sigma_decay.powi(t as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveType {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub move_type: MoveType,
    /// Objective of the current configuration after the move.
    pub objective: f64,
    /// Best objective seen so far.
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub source: SourceModel,
    pub k: usize,
    pub objective: Objective,
    pub arrangement: Arrangement,
    pub codebook: Codebook,
    pub final_mse: f64,
    pub final_mse_stderr: f64,
    pub final_entropy: f64,
    pub region_count: usize,
    pub trace: Vec<TraceEntry>,
    pub seed: u64,
    pub restart_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genetic_trace: Option<GeneticTrace>,
}

impl DesignReport {
    /// Final objective value under the report's own objective.
    pub fn final_objective(&self) -> f64 {
        match self.objective {
            Objective::MseMin => self.final_mse,
            Objective::EntropyMax => self.final_entropy,
        }
    }

    /// Trace as CSV with header `iteration,objective,best,move_type`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,objective,best,move_type\n");
        for e in &self.trace {
            let mv = match e.move_type {
                MoveType::Global => "global",
                MoveType::Local => "local",
            };
            out.push_str(&format!("{},{},{},{}\n", e.iteration, e.objective, e.best, mv));
        }
        out
    }
}

fn perturbed(arr: &Arrangement, sigma: f64, stream: &mut SampleStream) -> Result<Arrangement> {
    let law = Normal::new(0.0, sigma).map_err(|e| invalid("sigma_t", e.to_string()))?;
    let d = arr.d();
    let mut planes = Vec::with_capacity(arr.k());
    for j in 0..arr.k() {
        let base = arr.hyperplane(j);
        loop {
            let h: Vec<f64> = base.iter().map(|c| c + law.sample(stream.rng())).collect();
            if h[..d].iter().any(|c| *c != 0.0) {
                planes.push(h);
                break;
            }
        }
    }
    Arrangement::from_hyperplanes(d, &planes)
}

/// Adds independent `N(0, sigma_t^2)` noise to every weight and offset.
pub fn global_update(arr: &Arrangement, sigma_t: f64, stream: &mut SampleStream) -> Result<Arrangement> {
    if !(sigma_t > 0.0 && sigma_t.is_finite()) {
        return Err(invalid("sigma_t", "must be positive"));
    }
    perturbed(arr, sigma_t, stream)
}

fn loss_of(eval: &mut PoolEvaluator, arr: &Arrangement, objective: Objective) -> f64 {
    objective.loss(eval.value(arr, objective))
}

/// Line search on each coefficient of hyperplane `index`, starting from a
/// configuration whose loss is `current`. Returns the new configuration and
/// its loss, which never exceeds `current`.
fn line_search(
    arr: &Arrangement,
    index: usize,
    mut current: f64,
    eval: &mut PoolEvaluator,
    params: &OptimizerParams,
) -> Result<(Arrangement, f64)> {
    let d = arr.d();
    let g = params.grid_points;
    let scale = eval.source().coordinate_scale();
    let sign = match params.objective {
        Objective::MseMin => 1.0,
        Objective::EntropyMax => -1.0,
    };
    let mut state = arr.clone();
    for c in 0..=d {
        let h = state.hyperplane(index);
        let norm = state.row_norm(index);
        let w = params.search_halfwidth * if c < d { norm } else { norm * scale };
        let p = h[c];
        let step = 2.0 * w / (g - 1) as f64;
        let mut grid: Vec<f64> = (0..g).map(|i| p - w + step * i as f64).collect();
        let mut values: Vec<f64> = eval
            .coefficient_scan(&state, index, c, &grid, params.objective)
            .into_iter()
            .map(|v| if v.is_nan() { f64::INFINITY } else { sign * v })
            .collect();
        let i = (0..g).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
        if i > 0 && i + 1 < g {
            let (fl, f0, fr) = (values[i - 1], values[i], values[i + 1]);
            let curv = fl - 2.0 * f0 + fr;
            if curv > 0.0 && curv.is_finite() {
                let x = (grid[i] - 0.5 * step * (fr - fl) / curv).clamp(grid[i - 1], grid[i + 1]);
                let v = eval.coefficient_scan(&state, index, c, &[x], params.objective)[0];
                if !v.is_nan() {
                    grid.push(x);
                    values.push(sign * v);
                }
            }
        }
        let best = (0..grid.len())
            .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(b.cmp(&a)))
            .unwrap();
        if values[best] <= current {
            let mut coeffs = h;
            coeffs[c] = grid[best];
            state = state.with_hyperplane(index, &coeffs)?;
            current = values[best];
        }
    }
    Ok((state, current))
}

/// Coordinate line searches over the `d + 1` coefficients of hyperplane
/// `index`, each keeping only non-worsening moves.
pub fn local_update(
    arr: &Arrangement,
    index: usize,
    eval: &mut PoolEvaluator,
    params: &OptimizerParams,
) -> Result<Arrangement> {
    if index >= arr.k() {
        return Err(invalid("index", format!("{index} out of range for k = {}", arr.k())));
    }
    params.validate()?;
    let current = loss_of(eval, arr, params.objective);
    Ok(line_search(arr, index, current, eval, params)?.0)
}

/// One design run from `init`.
///
/// Iteration `t` applies a global perturbation with probability
/// `exp(-s t)` and otherwise a local update of a random hyperplane. The best
/// configuration seen is re-estimated with the reporting budget on fresh
/// samples and returned.
pub fn design(
    source: &SourceModel,
    k: usize,
    params: &OptimizerParams,
    init: &Arrangement,
    stream: &mut SampleStream,
) -> Result<DesignReport> {
    params.validate()?;
    if init.d() != source.dim() {
        return Err(ClvqError::DimensionMismatch {
            expected: source.dim(),
            got: init.d(),
        });
    }
    if init.k() != k {
        return Err(invalid("init", format!("has {} hyperplanes, expected {k}", init.k())));
    }
    let seed = stream.seed();
    let eval_seed = stream.rng().random::<u64>();
    let report_seed = stream.rng().random::<u64>();
    let mut eval = PoolEvaluator::new(source, &params.estimation, eval_seed)?;
    let schedule = params.schedule(source);

    let mut state = init.normalized();
    let mut current = loss_of(&mut eval, &state, params.objective);
    let mut best = (state.clone(), current);
    let mut trace = Vec::with_capacity(params.t_max);
    for t in 1..=params.t_max {
        let move_type = if stream.rng().random::<f64>() < schedule.p_global(t) {
            state = global_update(&state, schedule.sigma(t), stream)?.normalized();
            current = loss_of(&mut eval, &state, params.objective);
            MoveType::Global
        } else {
            let j = stream.rng().random_range(0..k);
            let (next, v) = line_search(&state, j, current, &mut eval, params)?;
            state = next.normalized();
            current = v;
            MoveType::Local
        };
        if current < best.1 {
            best = (state.clone(), current);
        }
        trace.push(TraceEntry {
            iteration: t,
            move_type,
            objective: params.objective.loss(current),
            best: params.objective.loss(best.1),
        });
    }

    let arrangement = best.0;
    let ev = evaluate(&arrangement, source, &params.reporting, report_seed)?;
    Ok(DesignReport {
        source: *source,
        k,
        objective: params.objective,
        region_count: ev.codebook.len(),
        arrangement,
        codebook: ev.codebook,
        final_mse: ev.mse.mse,
        final_mse_stderr: ev.mse.stderr,
        final_entropy: ev.entropy,
        trace,
        seed,
        restart_index: 0,
        genetic_trace: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    Random,
    Genetic {
        #[serde(flatten)]
        params: GeneticParams,
        #[serde(default = "EstimationParams::genetic")]
        estimation: EstimationParams,
    },
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::Random
    }
}

/// Starting configuration for one restart; the genetic search scores
/// candidates by the configured objective on a reduced budget.
pub fn initial_arrangement(
    source: &SourceModel,
    k: usize,
    objective: Objective,
    strategy: &InitStrategy,
    stream: &mut SampleStream,
) -> Result<(Arrangement, Option<GeneticTrace>)> {
    match strategy {
        InitStrategy::Random => Ok((random_init(source, k, stream)?, None)),
        InitStrategy::Genetic { params, estimation } => {
            let mut eval = PoolEvaluator::new(source, estimation, stream.rng().random::<u64>())?;
            let (arr, trace) = genetic_init(
                source,
                k,
                params,
                |a| loss_of(&mut eval, a, objective),
                stream,
            )?;
            Ok((arr, Some(trace)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiDesign {
    pub reports: Vec<DesignReport>,
    pub best_index: usize,
    pub mean_mse: f64,
    pub mean_entropy: f64,
}

impl MultiDesign {
    pub fn best(&self) -> &DesignReport {
        &self.reports[self.best_index]
    }
}

/// Seed of restart `r` under `base_seed`.
pub fn restart_seed(base_seed: u64, r: usize) -> u64 {
    substream_seed(base_seed, r as u64)
}

/// `restarts` independent designs, run on up to `jobs` threads. Results do
/// not depend on `jobs`.
pub fn design_multi(
    source: &SourceModel,
    k: usize,
    params: &OptimizerParams,
    init: &InitStrategy,
    restarts: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<MultiDesign> {
    if restarts == 0 {
        return Err(invalid("restarts", "must be at least 1"));
    }
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    params.validate()?;
    let run = |r: usize| -> Result<DesignReport> {
        let mut stream = SampleStream::new(*source, restart_seed(base_seed, r));
        let (start, genetic) = initial_arrangement(source, k, params.objective, init, &mut stream)?;
        let mut rep = design(source, k, params, &start, &mut stream)?;
        rep.restart_index = r;
        rep.genetic_trace = genetic;
        Ok(rep)
    };
    let slots: Mutex<Vec<Option<Result<DesignReport>>>> = Mutex::new(vec![None; restarts]);
    let next = AtomicUsize::new(0);
    let workers = jobs.clamp(1, restarts);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= restarts {
                    break;
                }
                let out = run(r);
                slots.lock().expect("worker panicked")[r] = Some(out);
            });
        }
    });
    let reports: Vec<DesignReport> = slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|s| s.expect("every restart runs"))
        .collect::<Result<_>>()?;
    let objective = params.objective;
    let best_index = (0..restarts)
        .min_by(|&a, &b| {
            let la = objective.loss(reports[a].final_objective());
            let lb = objective.loss(reports[b].final_objective());
            la.total_cmp(&lb).then(a.cmp(&b))
        })
        .unwrap();
    let n = restarts as f64;
    let mean_mse = reports.iter().map(|r| r.final_mse).sum::<f64>() / n;
    let mean_entropy = reports.iter().map(|r| r.final_entropy).sum::<f64>() / n;
    debug_assert!(reports
        .iter()
        .all(|r| r.region_count as u128 <= max_regions(source.dim() as u64, k as u64)));
    Ok(MultiDesign {
        reports,
        best_index,
        mean_mse,
        mean_entropy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrangement::lines_2d;
    use std::f64::consts::PI;

    fn quick() -> OptimizerParams {
        OptimizerParams {
            t_max: 30,
            estimation: EstimationParams::new(200, 100_000, 20_000).unwrap(),
            reporting: EstimationParams::new(5_000, 400_000, 400_000).unwrap(),
            ..OptimizerParams::default()
        }
    }

    #[test]
    fn params_validation() {
        assert!(OptimizerParams::default().validate().is_ok());
        let bad = [
            OptimizerParams { t_max: 0, ..Default::default() },
            OptimizerParams { s: 0.0, ..Default::default() },
            OptimizerParams { sigma0: -1.0, ..Default::default() },
            OptimizerParams { sigma_decay: 1.0, ..Default::default() },
            OptimizerParams { grid_points: 4, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn schedule_is_decreasing() {
        let s = OptimizerParams::default().schedule(&SourceModel::gaussian(2));
        assert_eq!(s.sigma0, 0.5);
        for t in 0..200 {
            assert!(s.p_global(t + 1) < s.p_global(t));
            assert!(s.sigma(t + 1) < s.sigma(t));
        }
        let u = OptimizerParams::default().schedule(&SourceModel::uniform(2));
        assert!((u.sigma0 - 0.5 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn global_update_limits() {
        let src = SourceModel::gaussian(2);
        let arr = lines_2d(&[(1.0, 2.0, 0.5), (-1.0, 0.3, 0.0), (0.2, 1.0, -1.0)]).unwrap();
        let mut s = SampleStream::new(src, 1);
        let tiny = global_update(&arr, 1e-12, &mut s).unwrap();
        for (a, b) in arr.weights_flat().iter().zip(tiny.weights_flat()) {
            assert!((a - b).abs() < 1e-9);
        }
        let moved = global_update(&arr, 0.1, &mut s).unwrap();
        for j in 0..3 {
            assert_ne!(moved.hyperplane(j), arr.hyperplane(j));
        }
        assert!(global_update(&arr, 0.0, &mut s).is_err());
    }

    #[test]
    fn global_update_is_zero_mean() {
        let src = SourceModel::gaussian(2);
        let arr = lines_2d(&[(1.0, -0.5, 0.25)]).unwrap();
        let mut s = SampleStream::new(src, 2);
        let (n, sigma) = (10_000, 0.3);
        let mut sums = [0.0; 3];
        for _ in 0..n {
            let m = global_update(&arr, sigma, &mut s).unwrap();
            for (acc, (a, b)) in sums.iter_mut().zip(m.hyperplane(0).iter().zip(arr.hyperplane(0))) {
                *acc += a - b;
            }
        }
        for acc in sums {
            assert!((acc / n as f64).abs() <= 3.0 * sigma / (n as f64).sqrt());
        }
    }

    #[test]
    fn local_update_centres_a_single_line() {
        let src = SourceModel::gaussian(2);
        let arr = lines_2d(&[(1.0, 0.0, -0.5)]).unwrap();
        let params = quick();
        let mut eval = PoolEvaluator::new(&src, &params.estimation, 3).unwrap();
        let before = eval.mse(&arr);
        let out = local_update(&arr, 0, &mut eval, &params).unwrap();
        let after = eval.mse(&out);
        assert!(after.mse <= before.mse + 2.0 * before.stderr);
        let t = out.offset(0) / out.row_norm(0);
        assert!(t.abs() < 0.05, "offset {t}");
        assert!(local_update(&arr, 1, &mut eval, &params).is_err());
    }

    #[test]
    fn local_update_keeps_uniform_grid() {
        let src = SourceModel::uniform(2);
        let arr = lines_2d(&[(1.0, 0.05, 0.02), (-0.04, 1.0, -0.03)]).unwrap();
        let params = quick();
        let mut eval = PoolEvaluator::new(&src, &params.estimation, 4).unwrap();
        let mut cur = arr;
        for j in [0, 1, 0, 1] {
            cur = local_update(&cur, j, &mut eval, &params).unwrap();
            assert_eq!(eval.codebook(&cur).len(), 4);
        }
        assert!((eval.mse(&cur).mse - 1.0 / 6.0).abs() < 0.01);
    }

    #[test]
    fn single_comparator_gaussian_design() {
        let src = SourceModel::gaussian(2);
        let mut s = SampleStream::new(src, 5);
        let init = random_init(&src, 1, &mut s).unwrap();
        let rep = design(&src, 1, &quick(), &init, &mut s).unwrap();
        let want = 2.0 - 2.0 / PI;
        assert!((rep.final_mse - want).abs() / want < 0.03, "{}", rep.final_mse);
        assert_eq!(rep.region_count, rep.codebook.len());
        assert!(rep.trace.len() <= 30);
        assert!(rep.trace.windows(2).all(|w| w[1].best <= w[0].best));
    }

    #[test]
    fn design_is_deterministic() {
        let src = SourceModel::uniform(2);
        let params = OptimizerParams { t_max: 8, ..quick() };
        let a = design_multi(&src, 2, &params, &InitStrategy::Random, 2, 77, 1).unwrap();
        let b = design_multi(&src, 2, &params, &InitStrategy::Random, 2, 77, 2).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.reports.len(), 2);
        assert!(a.reports.iter().all(|r| a.best().final_mse <= r.final_mse));
        assert_eq!(a.reports[1].restart_index, 1);
    }

    #[test]
    fn entropy_objective_is_bounded() {
        let src = SourceModel::gaussian(2);
        let params = OptimizerParams {
            objective: Objective::EntropyMax,
            t_max: 10,
            ..quick()
        };
        let m = design_multi(&src, 2, &params, &InitStrategy::Random, 1, 3, 1).unwrap();
        let r = m.best();
        assert!(r.final_entropy <= (r.region_count as f64).log2() + 1e-12);
        assert!(r.trace.windows(2).all(|w| w[1].best >= w[0].best));
    }

    #[test]
    fn report_json_roundtrip() {
        let src = SourceModel::gaussian(2);
        let params = OptimizerParams { t_max: 3, ..quick() };
        let init = InitStrategy::Genetic {
            params: GeneticParams {
                generations: 2,
                ..Default::default()
            },
            estimation: EstimationParams::genetic(),
        };
        let m = design_multi(&src, 2, &params, &init, 1, 1, 1).unwrap();
        let js = serde_json::to_string(m.best()).unwrap();
        let back: DesignReport = serde_json::from_str(&js).unwrap();
        assert_eq!(&back, m.best());
        assert!(m.best().trace_csv().starts_with("iteration,objective,best,move_type\n"));
    }
}
