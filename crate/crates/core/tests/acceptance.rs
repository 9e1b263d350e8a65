//! Acceptance run: one pass/fail line per criterion, with wall-clock limits.
//!
//! Built with `harness = false` so the summary lines are always printed.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use conelab::cone::catalog;
use conelab::intersect::{brute_force_intersection_oracle, detect_nontrivial_intersection, DetectorOptions};
use conelab::phase::{
    run_experiment, run_grid, run_local_dm_experiment, run_support_concentration, ExperimentConfig, PhaseGrid,
};
use conelab::stats::{gaussian_width_mc, p_inf, q_inf, stat_dim_mc, ExtendedReal, WidthCap};
use conelab::{derive_stream, ConeSpec, Result};
use nalgebra::DVector;

use common::{grid_min, median, p_naive, q_naive, random_pair};

const SEED: u64 = 20_240_917;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn workers() -> usize {
    std::env::var("CONELAB_WORKERS")
        .ok()
        .and_then(|w| w.parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).expect("acceptance config is valid")
}

fn grid_list(lo: usize, hi: usize, step: usize) -> String {
    let v: Vec<String> = (lo..=hi).step_by(step).map(|x| x.to_string()).collect();
    format!("[{}]", v.join(","))
}

fn p_at(g: &PhaseGrid, c: f64) -> f64 {
    g.row_at(c).map_or(f64::NAN, |r| r.p_hat)
}

fn relative(x: &DVector<f64>, scale: f64) -> f64 {
    if scale > 0.0 {
        x.norm() / scale
    } else {
        x.norm()
    }
}

fn cone_calculus() -> Result<Outcome> {
    let cones = catalog(6, SEED)?;
    let names = ["idempotence", "nonexpansive", "homogeneity", "moreau-sum", "moreau-orth"];
    let mut worst = [(0.0f64, ""); 5];
    let mut checked = 0;
    for (ci, (name, c)) in cones.iter().enumerate() {
        let mut s = derive_stream(SEED, 101, ci as u64);
        for _ in 0..10_000 {
            let v = s.gaussian_vector(6)?;
            let u = s.gaussian_vector(6)?;
            let t = s.uniform_in(-4.0, 4.0).exp();
            let nv = v.norm();
            let pv = c.project(&v)?;
            let pu = c.project(&u)?;
            let ptv = c.project(&(&v * t))?;
            let (pk, pp) = c.moreau_decompose(&v)?;
            let duv = (&u - &v).norm();
            let errs = [
                relative(&(c.project(&pv)? - &pv), nv),
                ((&pu - &pv).norm() - duv).max(0.0) / duv,
                relative(&(ptv - &pv * t), t * nv),
                relative(&(&v - &pk - &pp), nv),
                pk.dot(&pp).abs() / (nv * nv),
            ];
            for (w, e) in worst.iter_mut().zip(errs) {
                if e.is_nan() || e > w.0 {
                    *w = (e, name.as_str());
                }
            }
            checked += 1;
        }
    }
    let pass = worst.iter().all(|w| w.0 <= 1e-9);
    let detail = names
        .iter()
        .zip(&worst)
        .map(|(n, w)| format!("{n}={:.1e} ({})", w.0, w.1))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(Outcome::new(pass, format!("{} cones, {checked} vectors; max {detail}", cones.len())))
}

fn stat_dim_identities() -> Result<Outcome> {
    let mut s = derive_stream(SEED, 102, 0);
    let mut notes = Vec::new();
    let mut pass = true;

    let o = stat_dim_mc(&ConeSpec::orthant(40)?, 20_000, &mut s)?;
    let ok = (o.mean - 20.0).abs() <= 4.0 * o.se;
    pass &= ok;
    notes.push(format!("orthant40 {:.3}±{:.3}", o.mean, o.se));

    let cones = [
        ("soc10", ConeSpec::second_order(10)?),
        ("circ30", ConeSpec::circular(30, PI / 5.0)?),
        ("orthant24", ConeSpec::orthant(24)?),
    ];
    for (name, c) in &cones {
        let a = stat_dim_mc(c, 20_000, &mut s)?;
        let b = stat_dim_mc(&c.polar(), 20_000, &mut s)?;
        let n = c.ambient_dim() as f64;
        let gap = (a.mean + b.mean - n).abs() / a.combined_se(&b);
        pass &= gap <= 4.0;
        notes.push(format!("{name} complement {gap:.2}se"));
    }

    for (name, c) in [("orthant40", ConeSpec::orthant(40)?), ("soc10", ConeSpec::second_order(10)?), ("circ30", ConeSpec::circular(30, PI / 5.0)?)] {
        let wb = gaussian_width_mc(&c, WidthCap::Ball, 10_000, &mut s)?;
        let ws = gaussian_width_mc(&c, WidthCap::Sphere, 10_000, &mut s)?;
        let dl = stat_dim_mc(&c, 20_000, &mut s)?;
        let tol = 4.0 * wb.combined_se(&ws);
        let caps = ws.mean <= wb.mean + tol && wb.mean <= ws.mean + 1.0 + tol;
        // sqrt(delta) with a delta-method standard error
        let root = dl.mean.sqrt();
        let tol = 4.0 * wb.se.hypot(dl.se / (2.0 * root));
        let roots = wb.mean <= root + tol && root <= wb.mean + 1.0 + tol;
        pass &= caps && roots;
        notes.push(format!(
            "{name} w(S)={:.3} w(B)={:.3} sqrt(d)={:.3}{}",
            ws.mean,
            wb.mean,
            root,
            if caps && roots { "" } else { " VIOLATED" }
        ));
    }
    Ok(Outcome::new(pass, notes.join("; ")))
}

fn scalar_lemmas() -> Result<Outcome> {
    let mut s = derive_stream(SEED, 103, 0);
    let (mut p_bad, mut p_class, mut p_neg, mut p_err) = (0, 0, 0, 0.0f64);
    for _ in 0..1000 {
        let (a1, a2, a3) = (s.uniform_in(0.0, 2.0), s.uniform(), s.uniform_in(0.0, 2.0));
        let f = |b: f64| p_naive(a1, a2, a3, b);
        let diverges = f(2e6) < f(1e6);
        match p_inf(a1, a2, a3)? {
            ExtendedReal::NegInfinity => {
                p_neg += 1;
                p_class += usize::from(!diverges);
            }
            ExtendedReal::Finite(v) => {
                p_class += usize::from(diverges);
                let g = grid_min(f, 0.0, 1e8);
                let e = (g - v).abs() / v.abs().max(1.0);
                p_err = p_err.max(e);
                p_bad += usize::from(e > 1e-6);
            }
        }
    }
    let (mut q_bad, mut q_class, mut q_neg, mut q_err) = (0, 0, 0, 0.0f64);
    for i in 0..1000 {
        let (a1, a2) = (s.uniform_in(0.0, 2.0), s.uniform_in(0.0, 2.0));
        let r = if i % 2 == 0 { f64::INFINITY } else { s.uniform_in(1.5, 100.0) };
        let f = |b: f64| q_naive(a1, a2, b);
        let diverges = r.is_infinite() && f(2e6) < f(1e6);
        match q_inf(a1, a2, r)? {
            ExtendedReal::NegInfinity => {
                q_neg += 1;
                q_class += usize::from(!diverges);
            }
            ExtendedReal::Finite(v) => {
                q_class += usize::from(diverges);
                let g = grid_min(f, 1.0, if r.is_infinite() { 1e8 } else { r });
                let e = (g - v).abs() / v.abs().max(1.0);
                q_err = q_err.max(e);
                q_bad += usize::from(e > 1e-6);
            }
        }
    }
    let pass = p_bad + p_class + q_bad + q_class == 0;
    Ok(Outcome::new(
        pass,
        format!(
            "p_inf: {p_neg} -inf, {p_class} class mismatches, max rel err {p_err:.1e}; \
             q_inf: {q_neg} -inf, {q_class} class mismatches, max rel err {q_err:.1e}"
        ),
    ))
}

/// Dimension-counting law: nontrivial iff the predicate holds.
type Law = Box<dyn Fn(usize) -> bool>;

fn exact_laws(w: usize) -> Result<Outcome> {
    let cases: [(&str, String, Law); 3] = [
        (
            "kinematic",
            format!(
                r#"{{"experiment":"kinematic","cone_K":"subspace:30:12","n":30,"m":31,"grid":{},"trials":100,"seed":{SEED}}}"#,
                grid_list(1, 30, 1)
            ),
            Box::new(|l| l + 12 > 31),
        ),
        (
            "preimage",
            format!(
                r#"{{"experiment":"preimage","cone_K":"subspace:30:10","cone_L":"subspace:{{m}}:5","n":30,"grid":{},"trials":100,"seed":{SEED}}}"#,
                grid_list(5, 34, 1)
            ),
            Box::new(|m| 10 + (35usize).saturating_sub(m) > 30),
        ),
        (
            "escape",
            format!(
                r#"{{"experiment":"escape","cone_K":"subspace:30:12","n":30,"grid":{},"trials":100,"seed":{SEED}}}"#,
                grid_list(1, 30, 1)
            ),
            Box::new(|l| 12 + l > 30),
        ),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, json, law) in &cases {
        let g = run_grid(&config(json), w)?;
        let mismatches: usize = g
            .rows
            .iter()
            .map(|r| {
                let expected = if law(r.control as usize) { r.trials } else { 0 };
                r.successes.abs_diff(expected)
            })
            .sum();
        pass &= mismatches == 0 && g.rows.len() == 30;
        notes.push(format!("{name}: {} points, {mismatches} mismatches", g.rows.len()));
    }
    Ok(Outcome::new(pass, notes.join("; ")))
}

fn detector_oracle() -> Result<Outcome> {
    let mut s = derive_stream(SEED, 105, 0);
    let opts = DetectorOptions::default();
    let (mut agree, mut truth, mut nontrivial, mut drawn) = (0, 0, 0, 0);
    let mut failures = Vec::new();
    let mut i = 0;
    while drawn < 500 {
        let pair = random_pair(&mut s);
        if pair.margin.abs() < 1e-2 {
            continue;
        }
        drawn += 1;
        let det = detect_nontrivial_intersection(&pair.a, &pair.b, pair.dim, &opts, &mut derive_stream(SEED, 205, i))?;
        i += 1;
        let brute = brute_force_intersection_oracle(&pair.a, &pair.b, pair.dim, 2e-3)?;
        let expected = pair.margin > 0.0;
        nontrivial += usize::from(expected);
        truth += usize::from(brute.is_nontrivial() == expected);
        if det.verdict == brute.verdict {
            agree += 1;
        } else if failures.len() < 3 {
            failures.push(format!("{} margin {:.3}", pair.label, pair.margin));
        }
    }
    let mut detail = format!("detector = brute force on {agree}/500 ({nontrivial} nontrivial); brute force = analytic on {truth}/500");
    if !failures.is_empty() {
        detail.push_str(&format!("; e.g. {}", failures.join(", ")));
    }
    Ok(Outcome::new(agree == 500, detail))
}

fn escape_json() -> String {
    format!(
        r#"{{"experiment":"escape","cone_K":"orthant:80","n":80,"grid":{},"trials":200,"seed":{SEED}}}"#,
        grid_list(10, 70, 5)
    )
}

fn gordon_escape(w: usize) -> Result<Outcome> {
    let g = run_grid(&config(&escape_json()), w)?;
    let (lo, hi) = (p_at(&g, 10.0), p_at(&g, 70.0));
    let f = g.fitted;
    let pass = lo <= 0.05 && hi >= 0.95 && f.fit_ok && (33.0..=47.0).contains(&f.theta0);
    Ok(Outcome::new(
        pass,
        format!("p(10)={lo:.3} p(70)={hi:.3} theta0={:.2} slope={:.3} fit_ok={}", f.theta0, f.slope, f.fit_ok),
    ))
}

fn logistic_json(cone: &str, grid: &str) -> String {
    format!(r#"{{"experiment":"logistic","cone_K":"{cone}","n":20,"grid":{grid},"trials":300,"seed":{SEED}}}"#)
}

fn logistic_transition(w: usize) -> Result<Outcome> {
    let full = run_grid(&config(&logistic_json("full:20", &grid_list(22, 70, 4))), w)?;
    let sub = run_grid(&config(&logistic_json("subspace:20:10", &grid_list(6, 54, 4))), w)?;
    let (lo, hi) = (p_at(&full, 22.0), p_at(&full, 70.0));
    let (ff, fs) = (full.fitted, sub.fitted);
    let pass = ff.fit_ok
        && (34.0..=46.0).contains(&ff.theta0)
        && lo <= 0.1
        && hi >= 0.95
        && fs.fit_ok
        && (16.0..=24.0).contains(&fs.theta0);
    Ok(Outcome::new(
        pass,
        format!(
            "full: theta0={:.2} p(22)={lo:.3} p(70)={hi:.3} fit_ok={}; subspace(10): theta0={:.2} fit_ok={}",
            ff.theta0, ff.fit_ok, fs.theta0, fs.fit_ok
        ),
    ))
}

fn cp_json(x: &str, b: &str, grid: &str) -> String {
    format!(
        r#"{{"experiment":"cp","cone_K":"orthant:40","n":40,"x_spec":"{x}","b_mode":"{b}","grid":{grid},"trials":200,"seed":{SEED}}}"#
    )
}

fn cp_trichotomy(w: usize) -> Result<Outcome> {
    let homog = run_grid(&config(&cp_json("e1", "zero", "[5,35]")), w)?;
    let infeas = run_grid(&config(&cp_json("e1", "unit", "[40]")), w)?;
    let bounded = run_grid(&config(&cp_json("neg-ones", "unit", "[8]")), w)?;
    let frac = |g: &PhaseGrid, c: f64, pick: fn(&conelab::phase::CpTally) -> usize| {
        let r = g.row_at(c).expect("grid point present");
        pick(&r.cp.expect("cp tallies")) as f64 / r.trials as f64
    };
    let unb5 = frac(&homog, 5.0, |t| t.unbounded);
    let zero35 = frac(&homog, 35.0, |t| t.bounded);
    let inf40 = frac(&infeas, 40.0, |t| t.infeasible);
    let bnd8 = frac(&bounded, 8.0, |t| t.bounded);
    let suspected: usize = [&homog, &infeas, &bounded]
        .iter()
        .flat_map(|g| g.rows.iter())
        .map(|r| r.cp.map_or(0, |t| t.suspected))
        .sum();
    let pass = unb5 >= 0.9 && zero35 >= 0.9 && inf40 >= 0.9 && bnd8 >= 0.8;
    Ok(Outcome::new(
        pass,
        format!(
            "homogeneous: p(inf)@5={unb5:.3} p(0)@35={zero35:.3}; unit b: p(infeasible)@40={inf40:.3}; \
             x=-ones: p(bounded)@8={bnd8:.3}; suspected unbounded {suspected}"
        ),
    ))
}

fn local_dm_json() -> String {
    format!(
        r#"{{"experiment":"local_dm","cone_K":"orthant:200","n":200,"m":60,"l":40,"k":3,"epsilon":0.2,"directions":50,"trials":100,"seed":{SEED}}}"#
    )
}

fn local_dm(w: usize) -> Result<Outcome> {
    let r = run_local_dm_experiment(&config(&local_dm_json()), w)?;
    let conc = run_support_concentration(
        &config(&format!(
            r#"{{"experiment":"dm_concentration","cone_K":"orthant:200","n":200,"m":60,"l":40,"trials":200,"seed":{SEED}}}"#
        )),
        w,
    )?;
    let dev: Vec<f64> = conc.h.iter().map(|h| (h * h - 80.0).abs()).collect();
    let med_dev = median(&dev);
    let pass = (r.target_radius - 80f64.sqrt()).abs() < 1e-12
        && r.coverage >= 0.85
        && (conc.target - 80.0).abs() < 1e-12
        && med_dev <= 0.25 * 80.0;
    Ok(Outcome::new(
        pass,
        format!(
            "coverage={:.3} (target radius {:.3}); median |h^2-80|={med_dev:.2}, median h^2={:.2}",
            r.coverage, r.target_radius, conc.median_h2
        ),
    ))
}

fn reproducibility() -> Result<Outcome> {
    let configs = [
        ("exact-law", format!(
            r#"{{"experiment":"preimage","cone_K":"subspace:30:10","cone_L":"subspace:{{m}}:5","n":30,"grid":{},"trials":100,"seed":{SEED}}}"#,
            grid_list(5, 34, 1)
        )),
        ("escape", escape_json()),
        ("logistic", logistic_json("full:20", &grid_list(22, 70, 4))),
        ("cp", cp_json("neg-ones", "unit", "[8]")),
        ("local-dm", local_dm_json()),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    let (mut t1, mut t4) = (Duration::ZERO, Duration::ZERO);
    for (name, json) in &configs {
        let c = config(json);
        let start = Instant::now();
        let a = run_experiment(&c, 1)?.to_csv();
        t1 += start.elapsed();
        let start = Instant::now();
        let b = run_experiment(&c, 4)?.to_csv();
        t4 += start.elapsed();
        let same = a == b;
        pass &= same;
        notes.push(format!("{name} {}", if same { "identical" } else { "DIFFERS" }));
    }
    let overhead = t4.as_secs_f64() / t1.as_secs_f64().max(1e-9) - 1.0;
    let cheap = t4.as_secs_f64() <= 1.5 * t1.as_secs_f64() + 0.5;
    Ok(Outcome::new(
        pass && cheap,
        format!(
            "{}; workers=1 {:.1}s, workers=4 {:.1}s (overhead {:+.0}%)",
            notes.join(", "),
            t1.as_secs_f64(),
            t4.as_secs_f64(),
            100.0 * overhead
        ),
    ))
}

type Criterion = (usize, &'static str, u64, Box<dyn Fn(usize) -> Result<Outcome>>);

fn main() {
    let w = workers();
    let criteria: Vec<Criterion> = vec![
        (1, "cone calculus", 10, Box::new(|_| cone_calculus())),
        (2, "statistical dimension identities", 30, Box::new(|_| stat_dim_identities())),
        (3, "scalar lemma oracles", 5, Box::new(|_| scalar_lemmas())),
        (4, "exact subspace laws", 60, Box::new(exact_laws)),
        (5, "detector vs brute force", 60, Box::new(|_| detector_oracle())),
        (6, "escape transition", 300, Box::new(gordon_escape)),
        (7, "logistic transition", 600, Box::new(logistic_transition)),
        (8, "conic program trichotomy", 600, Box::new(cp_trichotomy)),
        (9, "local Dvoretzky-Milman", 900, Box::new(local_dm)),
        (10, "reproducibility across workers", 600, Box::new(|_| reproducibility())),
    ];
    println!("acceptance: seed={SEED} workers={w}");
    let mut failed = Vec::new();
    for (n, name, limit, run) in &criteria {
        let start = Instant::now();
        let outcome = run(w).unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs < *limit as f64;
        let pass = outcome.pass && in_time;
        println!(
            "criterion {n:>2} [{name}]: {} ({:.1}s of {limit}s{}) {}",
            if pass { "PASS" } else { "FAIL" },
            secs,
            if in_time { "" } else { ", over time" },
            outcome.detail
        );
        if !pass {
            failed.push(*n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
