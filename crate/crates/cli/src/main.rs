//! `conelab` command-line front-end.
//!
//! Every command writes CSV to standard output (or `--out`) preceded by a
//! `# conelab v.. seed=.. rng=.. config=<sha256>` line and the resolved
//! settings. Exit codes: 0 success, 1 failure, 2 invalid input or config,
//! 3 non-convergence when `--strict` is given.

mod selftest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use conelab::cone::{parse_cone, parse_vector, ParseContext};
use conelab::intersect::{detect_nontrivial_intersection, DetectorOptions, Verdict};
use conelab::phase::{csv_header, run_experiment, Experiment, ExperimentConfig, ExperimentOutput};
use conelab::rng::tags;
use conelab::solver::cp::{solve_conic_program, CpKind};
use conelab::solver::logistic::logistic_mle_exists;
use conelab::stats::{gaussian_width_mc, stat_dim_closed, stat_dim_mc, WidthCap};
use conelab::{derive_stream, ConeError, ConeSpec, ConvexSetOracle, SolverOptions};
use nalgebra::{DMatrix, DVector};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "conelab",
    version,
    about = "Convex cones, statistical dimension and phase transitions of Gaussian random maps"
)]
struct Cli {
    /// Worker threads for trial evaluation (output does not depend on it)
    #[arg(long, global = true, env = "CONELAB_WORKERS")]
    workers: Option<usize>,

    /// Exit with code 3 when a solver reports non-convergence
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo statistical dimension E|Π_K(g)|^2 (with the closed form when known)
    StatDim {
        /// Cone description, e.g. orthant:40, circ:30:0.6, polar:(soc:10)
        #[arg(long)]
        cone: String,
        /// Monte Carlo samples
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Master seed of every random draw
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Monte Carlo Gaussian width of the cone capped by the unit ball or sphere
    Width {
        /// Cone description
        #[arg(long)]
        cone: String,
        /// Supremum over K ∩ B (ball) or K ∩ S (sphere)
        #[arg(long, value_enum, default_value_t = Cap::Ball)]
        cap: Cap,
        /// Monte Carlo samples
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Master seed of every random draw
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Decide whether two cones share a nonzero point
    Intersect {
        /// First cone
        #[arg(long)]
        a: String,
        /// Second cone (same ambient dimension)
        #[arg(long)]
        b: String,
        /// Master seed of every random draw
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Random restarts of alternating projections
        #[arg(long)]
        starts: Option<usize>,
        /// Iterations per restart
        #[arg(long)]
        max_iters: Option<usize>,
        /// Stop once 1 - rho falls below this
        #[arg(long)]
        rho_tol: Option<f64>,
        /// Distance to both cones required of a witness
        #[arg(long)]
        dist_tol: Option<f64>,
    },
    /// Classify sup <x, mu> s.t. G mu = b, mu in K for Gaussian G (m x n)
    Cp {
        /// Cone K in R^n
        #[arg(long)]
        cone: String,
        /// Objective direction (normalized): e<i>, ones, neg-ones or a comma list
        #[arg(long, default_value = "e1")]
        x: String,
        /// Right-hand side in R^m: zero, e<i>, ones, neg-ones or a comma list
        #[arg(long, default_value = "zero")]
        b: String,
        /// Number of rows of G
        #[arg(long)]
        m: usize,
        /// Master seed of every random draw
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Check existence of the cone-constrained logistic MLE for a data file
    LogisticExists {
        /// CSV with header y,x1,...,xn; labels in {-1, 1} or {0, 1}
        #[arg(long)]
        file: PathBuf,
        /// Constraint cone in R^n [default: full:<n>]
        #[arg(long)]
        cone: Option<String>,
        /// Master seed of every random draw
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run a phase-transition experiment from a JSON config
    Phase {
        #[arg(value_enum)]
        experiment: PhaseName,
        /// Flat JSON config (unknown keys are rejected)
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path [default: standard output]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant suites
    Selftest {
        /// Master seed of every random draw
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Cap {
    Ball,
    Sphere,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PhaseName {
    Kinematic,
    Preimage,
    Escape,
    Logistic,
    Cp,
    LocalDm,
    SupportConc,
}

impl PhaseName {
    fn experiment(self) -> Experiment {
        match self {
            PhaseName::Kinematic => Experiment::Kinematic,
            PhaseName::Preimage => Experiment::Preimage,
            PhaseName::Escape => Experiment::Escape,
            PhaseName::Logistic => Experiment::Logistic,
            PhaseName::Cp => Experiment::Cp,
            PhaseName::LocalDm => Experiment::LocalDm,
            PhaseName::SupportConc => Experiment::DmConcentration,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    NotConverged(String),
    Other(String),
}

impl From<ConeError> for Failure {
    fn from(e: ConeError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn workers(cli: &Cli) -> std::result::Result<usize, Failure> {
    match cli.workers {
        Some(0) => Err(Failure::Invalid("invalid parameter `workers`: must be at least 1".into())),
        Some(w) => Ok(w),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn cone_arg(spec: &str, seed: u64, index: u64) -> std::result::Result<ConeSpec, Failure> {
    Ok(parse_cone(spec, &mut ParseContext::new(seed, index))?)
}

fn emit(seed: u64, settings: serde_json::Value, body: &str, out: Option<&Path>) -> Outcome {
    let text = format!("{}{body}", csv_header(seed, &settings.to_string()));
    write_output(&text, out)
}

fn write_output(text: &str, out: Option<&Path>) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Other(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn strict_check(strict: bool, flagged: bool, what: &str) -> Outcome {
    if strict && flagged {
        Err(Failure::NotConverged(format!("{what} (--strict)")))
    } else {
        Ok(())
    }
}

fn run(cli: Cli) -> Outcome {
    let strict = cli.strict;
    let workers = workers(&cli)?;
    match cli.command {
        Command::StatDim { cone, trials, seed } => {
            let k = cone_arg(&cone, seed, 0)?;
            let est = stat_dim_mc(&k, trials, &mut derive_stream(seed, tags::CLI, 0))?;
            let closed = stat_dim_closed(&k).map_or(String::new(), |v| v.to_string());
            let body = format!(
                "cone,trials,mean,se,ci_lo,ci_hi,closed_form\n{cone},{trials},{},{},{},{},{closed}\n",
                est.mean, est.se, est.ci95.0, est.ci95.1
            );
            emit(seed, json!({"command": "stat-dim", "cone": cone, "trials": trials, "seed": seed}), &body, None)
        }
        Command::Width { cone, cap, trials, seed } => {
            let k = cone_arg(&cone, seed, 0)?;
            let (wcap, name) = match cap {
                Cap::Ball => (WidthCap::Ball, "ball"),
                Cap::Sphere => (WidthCap::Sphere, "sphere"),
            };
            let est = gaussian_width_mc(&k, wcap, trials, &mut derive_stream(seed, tags::CLI, 0))?;
            let body = format!(
                "cone,cap,trials,mean,se,ci_lo,ci_hi\n{cone},{name},{trials},{},{},{},{}\n",
                est.mean, est.se, est.ci95.0, est.ci95.1
            );
            let settings = json!({"command": "width", "cone": cone, "cap": name, "trials": trials, "seed": seed});
            emit(seed, settings, &body, None)
        }
        Command::Intersect { a, b, seed, starts, max_iters, rho_tol, dist_tol } => {
            let ka = cone_arg(&a, seed, 0)?;
            let kb = cone_arg(&b, seed, 1)?;
            let d = DetectorOptions::default();
            let opts = DetectorOptions {
                starts: starts.unwrap_or(d.starts),
                max_iters: max_iters.unwrap_or(d.max_iters),
                rho_tol: rho_tol.unwrap_or(d.rho_tol),
                dist_tol: dist_tol.unwrap_or(d.dist_tol),
                ..d
            };
            let dim = ka.ambient_dim();
            let v = detect_nontrivial_intersection(
                &ConvexSetOracle::Cone(ka),
                &ConvexSetOracle::Cone(kb),
                dim,
                &opts,
                &mut derive_stream(seed, tags::CLI, 0),
            )?;
            let ambiguous = v.verdict == Verdict::Trivial && v.rho >= 1.0 - opts.rho_tol;
            let witness = v.witness.as_ref().map_or(String::new(), |w| join(w.as_slice(), " "));
            let body = format!(
                "verdict,rho,ambiguous,iterations,starts,witness\n{},{},{ambiguous},{},{},{witness}\n",
                if v.is_nontrivial() { "nontrivial" } else { "trivial" },
                v.rho,
                v.iterations_used,
                v.starts_used
            );
            let settings = json!({
                "command": "intersect", "a": a, "b": b, "seed": seed, "starts": opts.starts,
                "max_iters": opts.max_iters, "rho_tol": opts.rho_tol, "dist_tol": opts.dist_tol
            });
            emit(seed, settings, &body, None)?;
            strict_check(strict, ambiguous, "detector overlap reached 1 without a certified witness")
        }
        Command::Cp { cone, x, b, m, seed } => {
            if m == 0 {
                return Err(Failure::Invalid("invalid parameter `m`: must be at least 1".into()));
            }
            let k = cone_arg(&cone, seed, 0)?;
            let n = k.ambient_dim();
            let xv = parse_vector(&x, n)?;
            let norm = xv.norm();
            if norm == 0.0 {
                return Err(Failure::Invalid("invalid parameter `x`: must be nonzero".into()));
            }
            let bv = parse_vector(&b, m)?;
            let g = derive_stream(seed, tags::CLI, 0).gaussian_matrix(m, n)?;
            let out = solve_conic_program(
                &(xv / norm),
                &g,
                &bv,
                &k,
                &SolverOptions::default(),
                &DetectorOptions::default(),
                &mut derive_stream(seed, tags::CLI, 1),
            )?;
            let value = match out.kind {
                CpKind::Infeasible => "-inf".to_string(),
                CpKind::Unbounded => "inf".to_string(),
                CpKind::Bounded => out.value.unwrap_or(f64::NAN).to_string(),
            };
            let flag = if out.suspected_unbounded { "suspected" } else { "certified" };
            let body = format!("kind,value,flag\n{},{value},{flag}\n", out.kind);
            let settings = json!({"command": "cp", "cone": cone, "x": x, "b": b, "m": m, "seed": seed});
            emit(seed, settings, &body, None)?;
            strict_check(strict, out.suspected_unbounded, "unboundedness inferred from radius growth only")
        }
        Command::LogisticExists { file, cone, seed } => {
            let (x, y) = read_logistic(&file)?;
            let n = x.ncols();
            let cone = cone.unwrap_or_else(|| format!("full:{n}"));
            let k = cone_arg(&cone, seed, 0)?;
            let r = logistic_mle_exists(
                &x,
                &y,
                &k,
                &SolverOptions::default(),
                &DetectorOptions::default(),
                &mut derive_stream(seed, tags::CLI, 0),
            )?;
            let body = format!(
                "samples,features,exists,ambiguous,rho\n{},{n},{},{},{}\n",
                x.nrows(),
                r.exists,
                r.ambiguous,
                r.verdict.rho
            );
            let settings = json!({"command": "logistic-exists", "file": file.display().to_string(), "cone": cone, "seed": seed});
            emit(seed, settings, &body, None)?;
            strict_check(strict, r.ambiguous, "separability check was inconclusive")
        }
        Command::Phase { experiment, config, out } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| Failure::Invalid(format!("cannot read config {}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let wanted = experiment.experiment();
            if cfg.experiment != wanted {
                return Err(Failure::Invalid(format!(
                    "invalid parameter `experiment`: config describes `{}` but the subcommand is `{}`",
                    cfg.experiment.cli_name(),
                    wanted.cli_name()
                )));
            }
            let result = run_experiment(&cfg, workers)?;
            write_output(&result.to_csv(), out.as_deref())?;
            let suspected = match &result {
                ExperimentOutput::Grid(g) => {
                    eprintln!(
                        "{} rows; theta0={} slope={} fit_ok={}",
                        g.rows.len(),
                        g.fitted.theta0,
                        g.fitted.slope,
                        g.fitted.fit_ok
                    );
                    g.rows.iter().filter_map(|r| r.cp).map(|t| t.suspected).sum()
                }
                ExperimentOutput::LocalDm(r) => {
                    eprintln!("coverage={} target_radius={}", r.coverage, r.target_radius);
                    0
                }
                ExperimentOutput::Concentration(c) => {
                    eprintln!("median h^2={} target={} ok={}", c.median_h2, c.target, c.ok);
                    0
                }
            };
            strict_check(strict, suspected > 0, &format!("{suspected} unbounded outcomes inferred from radius growth only"))
        }
        Command::Selftest { seed } => {
            if selftest::run(seed, workers) {
                Ok(())
            } else {
                Err(Failure::Other("selftest failed".into()))
            }
        }
    }
}

fn join(v: &[f64], sep: &str) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push_str(sep);
        }
        let _ = write!(s, "{x}");
    }
    s
}

/// Reads `y,x1,...,xn` rows; labels 0 are mapped to -1.
fn read_logistic(path: &Path) -> std::result::Result<(DMatrix<f64>, DVector<f64>), Failure> {
    let invalid = |msg: String| Failure::Invalid(format!("{}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| invalid(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| invalid(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let yi = col("y").ok_or_else(|| invalid("missing column `y`".into()))?;
    let mut xi = Vec::new();
    while let Some(c) = col(&format!("x{}", xi.len() + 1)) {
        xi.push(c);
    }
    if xi.is_empty() {
        return Err(invalid("missing column `x1`".into()));
    }
    let (mut ys, mut xs) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| invalid(e.to_string()))?;
        let num = |c: usize| -> std::result::Result<f64, Failure> {
            rec.get(c)
                .and_then(|t| t.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| invalid(format!("row {}: bad value in column {}", line + 1, &headers[c])))
        };
        let label = num(yi)?;
        let y = if label == 1.0 {
            1.0
        } else if label == -1.0 || label == 0.0 {
            -1.0
        } else {
            return Err(invalid(format!("row {}: label {label} is not in {{-1, 0, 1}}", line + 1)));
        };
        ys.push(y);
        for &c in &xi {
            xs.push(num(c)?);
        }
    }
    if ys.is_empty() {
        return Err(invalid("no data rows".into()));
    }
    let x = DMatrix::from_row_slice(ys.len(), xi.len(), &xs);
    Ok((x, DVector::from_vec(ys)))
}
