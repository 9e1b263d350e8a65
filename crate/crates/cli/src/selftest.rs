//! Quick invariant suites behind `conelab selftest`.

use conelab::cone::catalog;
use conelab::intersect::{detect_nontrivial_intersection, DetectorOptions};
use conelab::phase::{run_grid, ExperimentConfig};
use conelab::stats::{p_a, p_inf, q_a, q_inf, stat_dim_closed, stat_dim_mc};
use conelab::{derive_stream, ConeSpec, ConvexSetOracle, Result};

const TAG: u64 = 0x7365_6c66;

type Check = (&'static str, fn(u64, usize) -> Result<(bool, String)>);

/// Runs every suite, printing one line each; true iff all pass.
pub fn run(seed: u64, workers: usize) -> bool {
    let checks: [Check; 6] = [
        ("cone calculus", cone_calculus),
        ("complement rule", complement_rule),
        ("scalar minimizations", scalar_lemmas),
        ("subspace dimension law", subspace_law),
        ("detector on circular cones", detector),
        ("worker independence", workers_independent),
    ];
    let mut all = true;
    for (name, f) in checks {
        let (ok, detail) = f(seed, workers).unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        all &= ok;
    }
    all
}

fn cone_calculus(seed: u64, _: usize) -> Result<(bool, String)> {
    let cones = catalog(6, seed)?;
    let mut worst: f64 = 0.0;
    for (i, (_, c)) in cones.iter().enumerate() {
        let mut s = derive_stream(seed, TAG, i as u64);
        for _ in 0..500 {
            let v = s.gaussian_vector(6)?;
            let u = s.gaussian_vector(6)?;
            let nv = v.norm();
            let pv = c.project(&v)?;
            let (pk, pp) = c.moreau_decompose(&v)?;
            let errs = [
                (c.project(&pv)? - &pv).norm() / nv,
                ((c.project(&u)? - &pv).norm() - (&u - &v).norm()).max(0.0),
                (c.project(&(&v * 3.0))? - &pv * 3.0).norm() / nv,
                (&v - &pk - &pp).norm() / nv,
                pk.dot(&pp).abs() / (nv * nv),
            ];
            worst = errs.into_iter().fold(worst, f64::max);
        }
    }
    Ok((worst <= 1e-9, format!("{} cones, worst residual {worst:.1e}", cones.len())))
}

fn complement_rule(seed: u64, _: usize) -> Result<(bool, String)> {
    let mut exact = 0;
    let mut ok = true;
    for (_, c) in catalog(6, seed)? {
        if let (Some(a), Some(b)) = (stat_dim_closed(&c), stat_dim_closed(&c.polar())) {
            ok &= (a + b - 6.0).abs() < 1e-12;
            exact += 1;
        }
    }
    let k = ConeSpec::orthant(24)?;
    let a = stat_dim_mc(&k, 4000, &mut derive_stream(seed, TAG, 100))?;
    let b = stat_dim_mc(&k.polar(), 4000, &mut derive_stream(seed, TAG, 101))?;
    let gap = (a.mean + b.mean - 24.0).abs() / a.combined_se(&b);
    ok &= gap <= 4.0;
    Ok((ok, format!("{exact} closed-form pairs; orthant:24 Monte Carlo off by {gap:.2} se")))
}

fn scalar_lemmas(seed: u64, _: usize) -> Result<(bool, String)> {
    let mut s = derive_stream(seed, TAG, 200);
    let mut bad = 0;
    let betas: Vec<f64> = (0..4000).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 3999.0)).collect();
    for _ in 0..200 {
        let (a1, a2, a3) = (s.uniform_in(0.0, 2.0), s.uniform(), s.uniform_in(0.0, 2.0));
        if let Some(v) = p_inf(a1, a2, a3)?.finite() {
            let min = betas.iter().map(|&b| p_a(a1, a2, a3, b)).fold(p_a(a1, a2, a3, 0.0), f64::min);
            bad += usize::from(min < v - 1e-9 || min > v + 1e-3 * v.abs().max(1.0));
        }
        let (b1, b2) = (s.uniform_in(0.0, 2.0), s.uniform_in(0.0, 2.0));
        if let Some(v) = q_inf(b1, b2, 50.0)?.finite() {
            let min = betas.iter().filter(|&&b| b <= 49.0).map(|&b| q_a(b1, b2, 1.0 + b)).fold(q_a(b1, b2, 1.0).min(q_a(b1, b2, 50.0)), f64::min);
            bad += usize::from(min < v - 1e-9 || min > v + 1e-3 * v.abs().max(1.0));
        }
    }
    Ok((bad == 0, format!("{bad} disagreements with a dense scan")))
}

fn grid_config(json: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(json)
}

fn subspace_law(seed: u64, workers: usize) -> Result<(bool, String)> {
    let cfg = grid_config(&format!(
        r#"{{"experiment":"escape","cone_K":"subspace:12:5","n":12,"grid":[1,3,5,7,8,9,12],"trials":20,"seed":{seed}}}"#
    ))?;
    let g = run_grid(&cfg, workers)?;
    let bad = g
        .rows
        .iter()
        .filter(|r| r.successes != if 5 + r.control as usize > 12 { r.trials } else { 0 })
        .count();
    Ok((bad == 0, format!("{bad} of {} grid points off the 0/1 law", g.rows.len())))
}

fn detector(seed: u64, _: usize) -> Result<(bool, String)> {
    let mut s = derive_stream(seed, TAG, 300);
    let (mut agree, mut total) = (0, 0);
    while total < 40 {
        let (u, v) = (s.unit_vector(3)?, s.unit_vector(3)?);
        let (a, b) = (s.uniform_in(0.05, 1.4), s.uniform_in(0.05, 1.4));
        let margin = a + b - u.dot(&v).clamp(-1.0, 1.0).acos();
        if margin.abs() < 0.05 {
            continue;
        }
        let verdict = detect_nontrivial_intersection(
            &ConvexSetOracle::Cone(ConeSpec::circular_about(u, a)?),
            &ConvexSetOracle::Cone(ConeSpec::circular_about(v, b)?),
            3,
            &DetectorOptions::default(),
            &mut derive_stream(seed, TAG, 400 + total),
        )?;
        agree += usize::from(verdict.is_nontrivial() == (margin > 0.0));
        total += 1;
    }
    Ok((agree == total as usize, format!("{agree}/{total} verdicts match the angle test")))
}

fn workers_independent(seed: u64, workers: usize) -> Result<(bool, String)> {
    let cfg = grid_config(&format!(
        r#"{{"experiment":"escape","cone_K":"orthant:12","n":12,"grid":[2,6,10],"trials":20,"seed":{seed}}}"#
    ))?;
    let a = run_grid(&cfg, 1)?.to_csv();
    let b = run_grid(&cfg, workers.max(2))?.to_csv();
    Ok((a == b, format!("1 vs {} workers: {}", workers.max(2), if a == b { "identical" } else { "different" })))
}
