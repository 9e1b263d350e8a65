//! Empirical probability grids, Wilson intervals and transition fits.

use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::rng::RNG_ALGORITHM;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Outcome tallies of the conic program experiment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CpTally {
    pub infeasible: usize,
    pub bounded: usize,
    pub unbounded: usize,
    /// Unbounded outcomes inferred from ball growth only.
    pub suspected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub control: f64,
    pub trials: usize,
    pub successes: usize,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub cp: Option<CpTally>,
}

impl GridRow {
    pub fn new(control: f64, trials: usize, successes: usize) -> Self {
        let (ci_lo, ci_hi) = wilson(successes, trials);
        GridRow {
            control,
            trials,
            successes,
            p_hat: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            ci_lo,
            ci_hi,
            cp: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    /// Control value where the fitted logit crosses zero (NaN if unavailable).
    pub theta0: f64,
    pub slope: f64,
    pub fit_ok: bool,
}

impl Fit {
    fn failed() -> Fit {
        Fit {
            theta0: f64::NAN,
            slope: f64::NAN,
            fit_ok: false,
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Fits `logit(p) ≈ a + b c` to the transition window of the grid.
///
/// Probabilities are clipped to `[1/(2T), 1 - 1/(2T)]`. The window holds the
/// unsaturated rows plus their neighbours, or the two rows straddling a
/// pure step. `fit_ok` is false for fewer than 5 rows, constant `p_hat`, a
/// crossing outside the grid, or an adjacent pair moving against the fitted
/// trend with disjoint Wilson intervals.
pub fn fit_transition(rows: &[GridRow]) -> Fit {
    if rows.len() < 5 || rows.iter().all(|r| r.p_hat == rows[0].p_hat) {
        return Fit::failed();
    }
    let saturated = |r: &GridRow| r.successes == 0 || r.successes == r.trials;
    let n = rows.len();
    let mut window: Vec<usize> = (0..n)
        .filter(|&i| {
            !saturated(&rows[i])
                || (i > 0 && !saturated(&rows[i - 1]))
                || (i + 1 < n && !saturated(&rows[i + 1]))
        })
        .collect();
    if window.is_empty() {
        window = (0..n)
            .filter(|&i| {
                (i > 0 && rows[i - 1].p_hat != rows[i].p_hat)
                    || (i + 1 < n && rows[i + 1].p_hat != rows[i].p_hat)
            })
            .collect();
    }
    let pts: Vec<(f64, f64)> = window
        .iter()
        .map(|&i| {
            let r = &rows[i];
            let lo = 1.0 / (2.0 * r.trials.max(1) as f64);
            (r.control, logit(r.p_hat.clamp(lo, 1.0 - lo)))
        })
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 || sxy == 0.0 {
        return Fit::failed();
    }
    let slope = sxy / sxx;
    let theta0 = mx - my / slope;
    let lo = rows[0].control;
    let hi = rows[n - 1].control;
    let mut fit_ok = theta0.is_finite() && theta0 >= lo && theta0 <= hi;
    for w in rows.windows(2) {
        let against = if slope > 0.0 {
            w[1].ci_hi < w[0].ci_lo
        } else {
            w[1].ci_lo > w[0].ci_hi
        };
        fit_ok &= !against;
    }
    Fit { theta0, slope, fit_ok }
}

/// Lowercase hex SHA-256 of `text`.
pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// The two comment lines that open every CSV: version, seed, RNG and the
/// hash of the resolved settings, then the settings themselves.
pub fn csv_header(seed: u64, resolved_json: &str) -> String {
    format!(
        "# conelab v{VERSION} seed={seed} rng={RNG_ALGORITHM} config={}\n# resolved={resolved_json}\n",
        sha256_hex(resolved_json)
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub version: String,
    pub rng: String,
}

impl Metadata {
    pub fn new(resolved: &ExperimentConfig) -> Result<Self> {
        Ok(Metadata {
            config: resolved.clone(),
            config_hash: resolved.hash()?,
            version: VERSION.to_string(),
            rng: RNG_ALGORITHM.to_string(),
        })
    }

    pub fn header(&self) -> String {
        csv_header(self.config.seed, &self.config.to_json())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseGrid {
    pub rows: Vec<GridRow>,
    pub fitted: Fit,
    pub metadata: Metadata,
}

impl PhaseGrid {
    pub fn new(rows: Vec<GridRow>, metadata: Metadata) -> Self {
        let fitted = fit_transition(&rows);
        PhaseGrid { rows, fitted, metadata }
    }

    pub fn row_at(&self, control: f64) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.control == control)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.metadata.header();
        let cp = self.rows.iter().any(|r| r.cp.is_some());
        out.push_str("control,trials,successes,p_hat,ci_lo,ci_hi");
        if cp {
            out.push_str(",p_infeasible,p_bounded,p_unbounded");
        }
        out.push('\n');
        let mut suspected = 0;
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{},{},{}", r.control, r.trials, r.successes, r.p_hat, r.ci_lo, r.ci_hi);
            if let Some(t) = r.cp {
                let f = |c: usize| c as f64 / r.trials as f64;
                let _ = write!(out, ",{},{},{}", f(t.infeasible), f(t.bounded), f(t.unbounded));
                suspected += t.suspected;
            }
            out.push('\n');
        }
        if cp {
            let _ = writeln!(out, "# suspected_unbounded={suspected}");
        }
        let _ = writeln!(
            out,
            "# theta0={} slope={} fit_ok={}",
            self.fitted.theta0, self.fitted.slope, self.fitted.fit_ok
        );
        out
    }
}
