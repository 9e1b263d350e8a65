//! Seeded experiment runners.
//!
//! Trial `t` at grid index `i` draws from `derive_stream(seed, tag, i << 32 | t)`
//! and results are reduced in key order, so the output does not depend on
//! the worker count.

use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{defaults, BMode, Dims, Experiment, ExperimentConfig};
use super::grid::{CpTally, GridRow, Metadata, PhaseGrid};
use crate::cone::{image_cone, parse_vector, preimage_oracle, ConeSpec, ConvexSetOracle, ParseContext, Subspace};
use crate::error::{ConeError, Result};
use crate::intersect::{detect_nontrivial_intersection, DetectorOptions};
use crate::rng::{derive_stream, tags, RngStream};
use crate::solver::cp::{solve_conic_program, CpKind};
use crate::solver::logistic::logistic_mle_exists;
use crate::solver::support::support_function;
use crate::solver::SolverOptions;
use crate::stats::{stat_dim_closed, stat_dim_mc};

/// Samples used when `δ(K)` has no closed form.
const DELTA_MC_TRIALS: usize = 20_000;

fn tag(e: Experiment) -> u64 {
    match e {
        Experiment::Kinematic => tags::KINEMATIC,
        Experiment::Preimage => tags::PREIMAGE,
        Experiment::Escape => tags::ESCAPE,
        Experiment::Logistic => tags::LOGISTIC,
        Experiment::Cp => tags::CONIC_PROGRAM,
        Experiment::LocalDm => tags::LOCAL_DM,
        Experiment::DmConcentration => tags::SUPPORT_CONC,
    }
}

/// Runs `count` keyed tasks on `workers` threads, returning results in key order.
fn run_keyed<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers == 0 {
        return Err(ConeError::invalid("workers", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ConeError::invalid("workers", e.to_string()))?;
    pool.install(|| (0..count).into_par_iter().map(&f).collect())
}

#[derive(Debug, Clone, Copy)]
enum Outcome {
    Hit(bool),
    Cp(CpKind, bool),
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    solver: SolverOptions,
    detector: DetectorOptions,
}

fn subspace_cone(s: Subspace) -> ConeSpec {
    match s.dim() {
        0 => ConeSpec::Trivial(s.ambient_dim()),
        d if d == s.ambient_dim() => ConeSpec::Full(d),
        _ => ConeSpec::Subspace(s),
    }
}

impl Context<'_> {
    fn trial(&self, dims: Dims, v: f64, s: &mut RngStream) -> Result<Outcome> {
        let c = self.config;
        let mut ctx = ParseContext::new(s.next_u64(), 0);
        let k = c.cone_k_at(dims, v, &mut ctx)?;
        let l = c.cone_l_at(dims, v, &mut ctx)?;
        let (m, n) = (dims.m, dims.n);
        let detect = |a: &ConvexSetOracle, b: &ConvexSetOracle, d: usize, s: &mut RngStream| {
            detect_nontrivial_intersection(a, b, d, &self.detector, s).map(|r| Outcome::Hit(r.is_nontrivial()))
        };
        match c.experiment {
            Experiment::Kinematic => {
                let g = s.gaussian_matrix(m, n)?;
                let gk = image_cone(&g, &k, &self.solver)?;
                let l = l.expect("resolved config sets cone_L");
                detect(&ConvexSetOracle::Cone(l), &gk, m, s)
            }
            Experiment::Preimage => {
                let g = s.gaussian_matrix(m, n)?;
                let pre = preimage_oracle(&g, &l.expect("resolved config sets cone_L"), &self.solver)?;
                detect(&ConvexSetOracle::Cone(k), &pre, n, s)
            }
            Experiment::Escape => {
                let null = if dims.l == n {
                    ConeSpec::Full(n)
                } else {
                    let g = s.gaussian_matrix(n - dims.l, n)?;
                    subspace_cone(Subspace::null_space(&g)?)
                };
                detect(&ConvexSetOracle::Cone(k), &ConvexSetOracle::Cone(null), n, s)
            }
            Experiment::Logistic => {
                let x = s.gaussian_matrix(m, n)?;
                let y = DVector::from_iterator(m, (0..m).map(|_| s.sign()));
                let r = logistic_mle_exists(&x, &y, &k, &self.solver, &self.detector, s)?;
                Ok(Outcome::Hit(r.exists))
            }
            Experiment::Cp => {
                let x = parse_vector(c.x_spec.as_deref().unwrap_or(defaults::X_SPEC), n)?;
                let x = &x / x.norm();
                let g = s.gaussian_matrix(m, n)?;
                let mut b = DVector::zeros(m);
                if c.b_mode == Some(BMode::Unit) {
                    b[0] = 1.0;
                }
                let r = solve_conic_program(&x, &g, &b, &k, &self.solver, &self.detector, s)?;
                Ok(Outcome::Cp(r.kind, r.suspected_unbounded))
            }
            Experiment::LocalDm | Experiment::DmConcentration => {
                Err(ConeError::Unsupported("not a grid experiment".into()))
            }
        }
    }
}

/// Runs any grid experiment (all but `local_dm` and `dm_concentration`).
pub fn run_grid(config: &ExperimentConfig, workers: usize) -> Result<PhaseGrid> {
    let resolved = config.resolved()?;
    if !resolved.experiment.is_grid() {
        return Err(ConeError::invalid("experiment", "not a grid experiment"));
    }
    let cx = Context {
        config: &resolved,
        solver: resolved.solver_options(),
        detector: resolved.detector_options(),
    };
    let trials = resolved.trials;
    let grid = &resolved.grid;
    let t = tag(resolved.experiment);
    let outcomes = run_keyed(workers, grid.len() * trials, |key| {
        let (gi, ti) = (key / trials, key % trials);
        let v = grid[gi];
        let mut s = derive_stream(resolved.seed, t, ((gi as u64) << 32) | ti as u64);
        cx.trial(resolved.dims_at(v), v, &mut s)
    })?;
    let rows = grid
        .iter()
        .zip(outcomes.chunks(trials))
        .map(|(&v, chunk)| {
            let mut tally = CpTally::default();
            let mut hits = 0;
            for o in chunk {
                match *o {
                    Outcome::Hit(h) => hits += h as usize,
                    Outcome::Cp(kind, suspected) => match kind {
                        CpKind::Infeasible => tally.infeasible += 1,
                        CpKind::Bounded => tally.bounded += 1,
                        CpKind::Unbounded => {
                            tally.unbounded += 1;
                            tally.suspected += suspected as usize;
                        }
                    },
                }
            }
            if resolved.experiment == Experiment::Cp {
                let mut row = GridRow::new(v, trials, tally.bounded);
                row.cp = Some(tally);
                row
            } else {
                GridRow::new(v, trials, hits)
            }
        })
        .collect();
    Ok(PhaseGrid::new(rows, Metadata::new(&resolved)?))
}

fn expect(config: &ExperimentConfig, e: Experiment) -> Result<()> {
    if config.experiment == e {
        Ok(())
    } else {
        Err(ConeError::invalid("experiment", format!("expected {}", e.cli_name())))
    }
}

/// `P(L ∩ GK != {0})` over the grid.
pub fn run_kinematic_experiment(config: &ExperimentConfig, workers: usize) -> Result<PhaseGrid> {
    expect(config, Experiment::Kinematic)?;
    run_grid(config, workers)
}

/// `P(K ∩ G^{-1} L != {0})` over the grid.
pub fn run_preimage_experiment(config: &ExperimentConfig, workers: usize) -> Result<PhaseGrid> {
    expect(config, Experiment::Preimage)?;
    run_grid(config, workers)
}

/// `P(K ∩ null(G_{n-l,n}) != {0})` over the grid of `l`.
pub fn run_escape_experiment(config: &ExperimentConfig, workers: usize) -> Result<PhaseGrid> {
    expect(config, Experiment::Escape)?;
    run_grid(config, workers)
}

/// `P(MLE exists)` over the grid of sample sizes `m`.
pub fn run_logistic_experiment(config: &ExperimentConfig, workers: usize) -> Result<PhaseGrid> {
    expect(config, Experiment::Logistic)?;
    run_grid(config, workers)
}

/// Conic program outcome frequencies over the grid of `m`; `successes`
/// counts bounded outcomes.
pub fn run_cp_experiment(config: &ExperimentConfig, workers: usize) -> Result<PhaseGrid> {
    expect(config, Experiment::Cp)?;
    run_grid(config, workers)
}

fn delta_of(k: &ConeSpec, seed: u64, t: u64) -> Result<f64> {
    match stat_dim_closed(k) {
        Some(d) => Ok(d),
        None => Ok(stat_dim_mc(k, DELTA_MC_TRIALS, &mut derive_stream(seed, t, u64::MAX))?.mean),
    }
}

fn median(sorted: &[f64]) -> f64 {
    quantile(sorted, 0.5)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `max <x, Π_{m->k} G mu>` over `mu in K ∩ B_n` with `G mu in L`, for
/// `L` the first `l` coordinates of `R^m` and `x` lifted into `R^m`.
struct DmProblem {
    g: nalgebra::DMatrix<f64>,
    sets: Vec<ConvexSetOracle>,
}

impl DmProblem {
    fn draw(k: &ConeSpec, dims: Dims, l: usize, solver: &SolverOptions, s: &mut RngStream) -> Result<Self> {
        let g = s.gaussian_matrix(dims.m, dims.n)?;
        let lsub = ConeSpec::coordinate_subspace(dims.m, l)?;
        let pre = preimage_oracle(&g, &lsub, solver)?;
        let sets = vec![ConvexSetOracle::Cone(k.clone()), ConvexSetOracle::ball(dims.n, 1.0)?, pre];
        Ok(DmProblem { g, sets })
    }

    fn support(&self, x_lift: &DVector<f64>, solver: &SolverOptions) -> Result<f64> {
        let c = self.g.transpose() * x_lift;
        Ok(support_function(&c, &self.sets, solver)?.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmRow {
    pub trial: usize,
    pub directions: usize,
    pub covered: usize,
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmReport {
    pub rows: Vec<DmRow>,
    /// Fraction of all sampled directions with ratio in `[1 - eps, 1 + eps]`.
    pub coverage: f64,
    pub delta_k: f64,
    /// `sqrt(δ(K) - m + l)`.
    pub target_radius: f64,
    pub epsilon: f64,
    pub metadata: Metadata,
}

impl DmReport {
    pub fn to_csv(&self) -> String {
        let mut out = self.metadata.header();
        out.push_str("trial,directions,covered,fraction,min_ratio,median_ratio,max_ratio\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.trial,
                r.directions,
                r.covered,
                r.covered as f64 / r.directions as f64,
                r.min_ratio,
                r.median_ratio,
                r.max_ratio
            );
        }
        let _ = writeln!(
            out,
            "# coverage={} target_radius={} delta_K={} epsilon={}",
            self.coverage, self.target_radius, self.delta_k, self.epsilon
        );
        out
    }
}

/// Support of the projected slice `Π_{m->k}(L ∩ GK_n)` in random directions,
/// relative to `sqrt(δ(K) - m + l)`.
pub fn run_local_dm_experiment(config: &ExperimentConfig, workers: usize) -> Result<DmReport> {
    expect(config, Experiment::LocalDm)?;
    let c = config.resolved()?;
    let solver = c.solver_options();
    let dims = c.dims_at(0.0);
    let l = c.l.expect("validated");
    let kdim = c.k.expect("resolved");
    let dirs = c.directions.expect("resolved");
    let eps = c.epsilon.expect("resolved");
    let t = tag(c.experiment);
    let k0 = c.cone_k_at(dims, 0.0, &mut ParseContext::new(c.seed, 0))?;
    let delta_k = delta_of(&k0, c.seed, t)?;
    let radius_sq = delta_k - (dims.m - l) as f64;
    if radius_sq <= 0.0 {
        return Err(ConeError::invalid("l", "δ(K) - m + l must be positive"));
    }
    let target = radius_sq.sqrt();
    let rows = run_keyed(workers, c.trials, |trial| {
        let mut s = derive_stream(c.seed, t, trial as u64);
        let mut ctx = ParseContext::new(s.next_u64(), 0);
        let k = c.cone_k_at(dims, 0.0, &mut ctx)?;
        let p = DmProblem::draw(&k, dims, l, &solver, &mut s)?;
        let mut ratios = Vec::with_capacity(dirs);
        for _ in 0..dirs {
            let u = s.unit_vector(kdim)?;
            let mut x = DVector::zeros(dims.m);
            x.rows_mut(0, kdim).copy_from(&u);
            ratios.push(p.support(&x, &solver)? / target);
        }
        let covered = ratios.iter().filter(|r| (**r - 1.0).abs() <= eps).count();
        ratios.sort_by(f64::total_cmp);
        Ok(DmRow {
            trial,
            directions: dirs,
            covered,
            min_ratio: ratios[0],
            median_ratio: median(&ratios),
            max_ratio: ratios[dirs - 1],
        })
    })?;
    let covered: usize = rows.iter().map(|r| r.covered).sum();
    let total: usize = rows.iter().map(|r| r.directions).sum();
    Ok(DmReport {
        coverage: covered as f64 / total as f64,
        rows,
        delta_k,
        target_radius: target,
        epsilon: eps,
        metadata: Metadata::new(&c)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationSummary {
    /// `ĥ(e_1)` per trial.
    pub h: Vec<f64>,
    pub median_h2: f64,
    /// 5%, 25%, 75% and 95% quantiles of `ĥ²`.
    pub quantiles_h2: [f64; 4],
    /// `δ(K) - δ(L°)`.
    pub target: f64,
    /// `max(sqrt δ(K), sqrt δ(L°))`.
    pub scale: f64,
    pub slack: f64,
    pub ok: bool,
    pub metadata: Metadata,
}

impl ConcentrationSummary {
    pub fn to_csv(&self) -> String {
        let mut out = self.metadata.header();
        out.push_str("trial,h,h_squared\n");
        for (i, h) in self.h.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i, h, h * h);
        }
        let q = self.quantiles_h2;
        let _ = writeln!(out, "# q05={} q25={} q75={} q95={}", q[0], q[1], q[2], q[3]);
        let _ = writeln!(
            out,
            "# median_h2={} target={} scale={} slack={} ok={}",
            self.median_h2, self.target, self.scale, self.slack, self.ok
        );
        out
    }
}

/// Distribution of `ĥ²(e_1)` against `δ(K) - δ(L°)`.
pub fn run_support_concentration(config: &ExperimentConfig, workers: usize) -> Result<ConcentrationSummary> {
    expect(config, Experiment::DmConcentration)?;
    let c = config.resolved()?;
    let solver = c.solver_options();
    let dims = c.dims_at(0.0);
    let l = c.l.expect("validated");
    let t = tag(c.experiment);
    let k0 = c.cone_k_at(dims, 0.0, &mut ParseContext::new(c.seed, 0))?;
    let delta_k = delta_of(&k0, c.seed, t)?;
    let delta_lpolar = (dims.m - l) as f64;
    let h = run_keyed(workers, c.trials, |trial| {
        let mut s = derive_stream(c.seed, t, trial as u64);
        let mut ctx = ParseContext::new(s.next_u64(), 0);
        let k = c.cone_k_at(dims, 0.0, &mut ctx)?;
        let p = DmProblem::draw(&k, dims, l, &solver, &mut s)?;
        let mut x = DVector::zeros(dims.m);
        x[0] = 1.0;
        p.support(&x, &solver)
    })?;
    let mut h2: Vec<f64> = h.iter().map(|v| v * v).collect();
    h2.sort_by(f64::total_cmp);
    let target = delta_k - delta_lpolar;
    let scale = delta_k.sqrt().max(delta_lpolar.sqrt());
    let slack = c.slack.expect("resolved");
    let median_h2 = median(&h2);
    Ok(ConcentrationSummary {
        quantiles_h2: [0.05, 0.25, 0.75, 0.95].map(|q| quantile(&h2, q)),
        ok: (median_h2 - target).abs() <= slack * scale,
        median_h2,
        h,
        target,
        scale,
        slack,
        metadata: Metadata::new(&c)?,
    })
}

/// Output of any experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Grid(PhaseGrid),
    LocalDm(DmReport),
    Concentration(ConcentrationSummary),
}

impl ExperimentOutput {
    pub fn to_csv(&self) -> String {
        match self {
            ExperimentOutput::Grid(g) => g.to_csv(),
            ExperimentOutput::LocalDm(r) => r.to_csv(),
            ExperimentOutput::Concentration(c) => c.to_csv(),
        }
    }
}

/// Dispatches on `config.experiment`.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    match config.experiment {
        Experiment::LocalDm => run_local_dm_experiment(config, workers).map(ExperimentOutput::LocalDm),
        Experiment::DmConcentration => {
            run_support_concentration(config, workers).map(ExperimentOutput::Concentration)
        }
        _ => run_grid(config, workers).map(ExperimentOutput::Grid),
    }
}
