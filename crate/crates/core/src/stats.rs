//! Statistical dimension, Gaussian width, conic singular values, and the
//! closed-form scalar minimizations used in the phase-transition bounds.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cone::ConeSpec;
use crate::error::{check_dim, ConeError, Result};
use crate::linalg::sigma_max;
use crate::rng::{derive_stream, RngStream};

/// Monte Carlo estimate with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateCI {
    pub mean: f64,
    /// Standard error: sample standard deviation over `sqrt(n_samples)`.
    pub se: f64,
    pub n_samples: usize,
    pub ci95: (f64, f64),
}

impl EstimateCI {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(ConeError::invalid("trials", "need at least 2 samples"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(ConeError::NonFinite("Monte Carlo sample"));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        Ok(EstimateCI {
            mean,
            se,
            n_samples: n,
            ci95: (mean - 1.96 * se, mean + 1.96 * se),
        })
    }

    /// `sqrt(se_a^2 + se_b^2)`.
    pub fn combined_se(&self, other: &EstimateCI) -> f64 {
        self.se.hypot(other.se)
    }
}

/// Runs `f` once per trial on its own sub-stream and returns the samples in
/// trial order. The caller's stream advances by one draw.
pub(crate) fn per_trial<F>(trials: usize, stream: &mut RngStream, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut RngStream) -> Result<f64> + Sync,
{
    let key = stream.next_u64();
    let tag = stream.lineage().domain_tag;
    (0..trials)
        .into_par_iter()
        .map(|i| f(&mut derive_stream(key, tag, i as u64)))
        .collect()
}

/// Exact statistical dimension where a closed form is known.
pub fn stat_dim_closed(cone: &ConeSpec) -> Option<f64> {
    match cone {
        ConeSpec::Trivial(_) => Some(0.0),
        ConeSpec::Full(d) => Some(*d as f64),
        ConeSpec::Subspace(s) => Some(s.dim() as f64),
        ConeSpec::Orthant(d) | ConeSpec::SecondOrder(d) => Some(*d as f64 / 2.0),
        ConeSpec::Halfspace(v) => Some(v.len() as f64 - 0.5),
        ConeSpec::Ray(_) => Some(0.5),
        ConeSpec::Product(parts) => parts.iter().map(stat_dim_closed).sum(),
        ConeSpec::Polar(inner) => stat_dim_closed(inner).map(|d| inner.ambient_dim() as f64 - d),
        ConeSpec::Reflected(inner) => stat_dim_closed(inner),
        ConeSpec::Circular(_) | ConeSpec::Restricted { .. } => None,
    }
}

/// Monte Carlo estimate of `E |Π_K(g)|^2`.
pub fn stat_dim_mc(cone: &ConeSpec, trials: usize, stream: &mut RngStream) -> Result<EstimateCI> {
    if trials < 2 {
        return Err(ConeError::invalid("trials", "need at least 2 trials"));
    }
    let d = cone.ambient_dim();
    let samples = per_trial(trials, stream, |s| {
        let g = s.gaussian_vector(d)?;
        Ok(cone.project(&g)?.norm_squared())
    })?;
    EstimateCI::from_samples(&samples)
}

/// Which slice of the cone a width is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthCap {
    /// `K ∩ B`.
    Ball,
    /// `K ∩ ∂B`.
    Sphere,
}

/// `sup_{mu in K ∩ B} <g, mu>`, which equals `|Π_K(g)|`.
pub fn ball_cap_sup(cone: &ConeSpec, g: &DVector<f64>) -> Result<f64> {
    Ok(cone.project(g)?.norm())
}

/// `sup_{mu in K ∩ ∂B} <g, mu>`.
///
/// Equals `|Π_K(g)|` when that is positive. Otherwise `g` lies in the polar
/// and the supremum is nonpositive; it is computed in closed form for the
/// standard variants and by projected ascent with restarts otherwise.
pub fn sphere_cap_sup(cone: &ConeSpec, g: &DVector<f64>) -> Result<f64> {
    check_dim(cone.ambient_dim(), g.len())?;
    if is_trivial(cone) {
        return Err(ConeError::invalid("cone", "sphere cap of the trivial cone is empty"));
    }
    let p = cone.project(g)?;
    let n = p.norm();
    if n > 1e-12 * (1.0 + g.norm()) {
        return Ok(n);
    }
    Ok(polar_sphere_sup(cone, g))
}

fn is_trivial(cone: &ConeSpec) -> bool {
    match cone {
        ConeSpec::Trivial(_) => true,
        ConeSpec::Subspace(s) => s.dim() == 0,
        ConeSpec::Product(parts) => parts.iter().all(is_trivial),
        ConeSpec::Reflected(inner) => is_trivial(inner),
        ConeSpec::Polar(inner) => matches!(**inner, ConeSpec::Full(_)),
        _ => false,
    }
}

/// Supremum over `K ∩ ∂B` for `g` in the polar of `K`.
fn polar_sphere_sup(cone: &ConeSpec, g: &DVector<f64>) -> f64 {
    match cone {
        ConeSpec::Full(_) | ConeSpec::Subspace(_) => 0.0,
        ConeSpec::Orthant(_) => g.max(),
        ConeSpec::Ray(u) => u.dot(g),
        ConeSpec::Halfspace(nrm) => {
            if nrm.len() == 1 {
                nrm.dot(g)
            } else {
                0.0
            }
        }
        ConeSpec::SecondOrder(d) => {
            let mut axis = DVector::zeros(*d);
            axis[d - 1] = 1.0;
            circular_sup(&axis, std::f64::consts::FRAC_PI_4, g)
        }
        ConeSpec::Circular(c) => circular_sup(c.axis(), c.alpha(), g),
        ConeSpec::Reflected(inner) => polar_sphere_sup(inner, &-g),
        ConeSpec::Product(parts) => {
            let mut off = 0;
            let mut best = f64::NEG_INFINITY;
            for p in parts {
                let d = p.ambient_dim();
                if !is_trivial(p) {
                    let block = g.rows(off, d).into_owned();
                    best = best.max(polar_sphere_sup(p, &block));
                }
                off += d;
            }
            best
        }
        _ => sphere_ascent(cone, g),
    }
}

/// `max <g, u>` over unit `u` within angle `alpha` of `axis`.
fn circular_sup(axis: &DVector<f64>, alpha: f64, g: &DVector<f64>) -> f64 {
    let gn = g.norm();
    if gn == 0.0 {
        return 0.0;
    }
    let phi = (axis.dot(g) / gn).clamp(-1.0, 1.0).acos();
    if phi <= alpha {
        gn
    } else {
        gn * (phi - alpha).cos()
    }
}

/// Projected ascent `mu <- normalize(Π_K(mu + eta g))` from several
/// deterministic starts.
fn sphere_ascent(cone: &ConeSpec, g: &DVector<f64>) -> f64 {
    let d = g.len();
    let mut best = f64::NEG_INFINITY;
    let mut starts: Vec<DVector<f64>> = (0..d)
        .flat_map(|i| {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            [e.clone(), -e]
        })
        .collect();
    let mut s = derive_stream(d as u64, 0x7370_6872, 0);
    for _ in 0..8 {
        if let Ok(u) = s.unit_vector(d) {
            starts.push(u);
        }
    }
    for u in starts {
        let Ok(p) = cone.project(&u) else { continue };
        let n = p.norm();
        if n < 1e-12 {
            continue;
        }
        let mut mu = p / n;
        let mut val = mu.dot(g);
        let mut eta = 1.0 / g.norm().max(1e-300);
        for _ in 0..500 {
            let Ok(q) = cone.project(&(&mu + g * eta)) else { break };
            let qn = q.norm();
            let cand = if qn > 1e-14 { Some(q / qn) } else { None };
            match cand {
                Some(c) if c.dot(g) > val + 1e-15 * g.norm() => {
                    val = c.dot(g);
                    mu = c;
                }
                _ => {
                    eta *= 0.5;
                    if eta * g.norm() < 1e-12 {
                        break;
                    }
                }
            }
        }
        best = best.max(val);
    }
    best
}

/// Monte Carlo Gaussian width of `K ∩ B` or `K ∩ ∂B`.
pub fn gaussian_width_mc(cone: &ConeSpec, cap: WidthCap, trials: usize, stream: &mut RngStream) -> Result<EstimateCI> {
    if trials < 2 {
        return Err(ConeError::invalid("trials", "need at least 2 trials"));
    }
    if cap == WidthCap::Sphere && is_trivial(cone) {
        return Err(ConeError::invalid("cone", "sphere cap of the trivial cone is empty"));
    }
    let d = cone.ambient_dim();
    let samples = per_trial(trials, stream, |s| {
        let g = s.gaussian_vector(d)?;
        match cap {
            WidthCap::Ball => ball_cap_sup(cone, &g),
            WidthCap::Sphere => sphere_cap_sup(cone, &g),
        }
    })?;
    EstimateCI::from_samples(&samples)
}

/// Real number or an explicit negative infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    NegInfinity,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::NegInfinity => None,
        }
    }

    pub fn is_neg_infinity(self) -> bool {
        matches!(self, ExtendedReal::NegInfinity)
    }
}

impl std::fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::NegInfinity => f.write_str("-inf"),
        }
    }
}

fn check_coef(name: &'static str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_nan() || v < lo || v > hi {
        return Err(ConeError::invalid(name, format!("{v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

/// `P_a(beta) = -a1 beta + a3 sqrt(beta^2 + 2 a2 beta + 1)`, evaluated in a
/// form that avoids cancellation for large `beta`.
pub fn p_a(a1: f64, a2: f64, a3: f64, beta: f64) -> f64 {
    let root = (beta * beta + 2.0 * a2 * beta + 1.0).sqrt();
    // a3 (root - beta) = a3 (2 a2 beta + 1) / (root + beta)
    (a3 - a1) * beta + a3 * (2.0 * a2 * beta + 1.0) / (root + beta)
}

/// `inf_{beta >= 0} P_a(beta)` for `a1 >= 0`, `a2 in [0, 1]`, `a3 >= 0`.
pub fn p_inf(a1: f64, a2: f64, a3: f64) -> Result<ExtendedReal> {
    check_coef("a1", a1, 0.0, f64::MAX)?;
    check_coef("a2", a2, 0.0, 1.0)?;
    check_coef("a3", a3, 0.0, f64::MAX)?;
    Ok(if a1 < a2 * a3 {
        ExtendedReal::Finite(a3)
    } else if a1 <= a3 {
        ExtendedReal::Finite(((a3 * a3 - a1 * a1) * (1.0 - a2 * a2)).max(0.0).sqrt() + a1 * a2)
    } else {
        ExtendedReal::NegInfinity
    })
}

/// `Q_a(beta) = a1 beta - a2 sqrt(beta^2 - 1)` for `beta >= 1`, evaluated
/// without cancellation.
pub fn q_a(a1: f64, a2: f64, beta: f64) -> f64 {
    // beta - sqrt(beta^2 - 1) = 1 / (beta + sqrt(beta^2 - 1))
    (a1 - a2) * beta + a2 / (beta + (beta * beta - 1.0).max(0.0).sqrt())
}

/// `inf_{1 <= beta <= r} Q_a(beta)`; pass `f64::INFINITY` for an unbounded
/// range.
pub fn q_inf(a1: f64, a2: f64, r: f64) -> Result<ExtendedReal> {
    check_coef("a1", a1, 0.0, f64::MAX)?;
    check_coef("a2", a2, 0.0, f64::MAX)?;
    if r.is_nan() || r <= 1.0 {
        return Err(ConeError::invalid("R", format!("{r} must exceed 1")));
    }
    if r.is_infinite() {
        return Ok(if a1 >= a2 {
            ExtendedReal::Finite((a1 * a1 - a2 * a2).sqrt())
        } else {
            ExtendedReal::NegInfinity
        });
    }
    if a2 == 0.0 {
        return Ok(ExtendedReal::Finite(a1));
    }
    if a1 > a2 {
        // stationary point of the convex function Q_a
        let beta = a1 / (a1 * a1 - a2 * a2).sqrt();
        if beta <= r {
            return Ok(ExtendedReal::Finite((a1 * a1 - a2 * a2).sqrt()));
        }
    }
    Ok(ExtendedReal::Finite(q_a(a1, a2, r)))
}

/// Result of [`min_conic_singular_value`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConicSingularValue {
    /// Smallest `|G mu|` found over unit `mu` in `K` (an upper bound on the
    /// infimum).
    pub value: f64,
    pub argmin: DVector<f64>,
    /// Whether every descent run met its stopping rule.
    pub converged: bool,
    /// In ambient dimension at most 3: a certified lower bound from a dense
    /// sweep of the sphere.
    pub certified_lower: Option<f64>,
}

/// Sweep resolution used in dimension at most 3 (radians).
pub const SWEEP_MESH: f64 = 1e-3;

/// Estimates `inf_{mu in K, |mu| = 1} |G mu|` by multi-start projected
/// gradient descent on `|G mu|^2` (project onto `K`, then renormalize).
pub fn min_conic_singular_value(
    g: &DMatrix<f64>,
    k: &ConeSpec,
    restarts: usize,
    stream: &mut RngStream,
) -> Result<ConicSingularValue> {
    let n = k.ambient_dim();
    check_dim(n, g.ncols())?;
    if restarts == 0 {
        return Err(ConeError::invalid("restarts", "must be positive"));
    }
    if is_trivial(k) {
        return Err(ConeError::invalid("cone", "cone must be nontrivial"));
    }
    if !crate::linalg::all_finite(g.as_slice()) {
        return Err(ConeError::NonFinite("matrix"));
    }
    let smax = sigma_max(g);
    let eta = if smax > 0.0 { 1.0 / (smax * smax) } else { 1.0 };
    let gtg = g.transpose() * g;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut converged = true;
    let mut attempts = 0;
    let mut started = 0;
    while started < restarts && attempts < 50 * restarts {
        attempts += 1;
        let u = stream.unit_vector(n)?;
        let p = k.project(&u)?;
        let pn = p.norm();
        if pn < 1e-12 {
            continue;
        }
        started += 1;
        let mut mu = p / pn;
        let mut val = (g * &mu).norm();
        let mut done = false;
        for _ in 0..5000 {
            let q = k.project(&(&mu - &gtg * &mu * eta))?;
            let qn = q.norm();
            if qn < 1e-14 {
                done = true;
                break;
            }
            let next = q / qn;
            let nv = (g * &next).norm();
            let moved = (&next - &mu).norm();
            mu = next;
            let improved = val - nv;
            val = nv;
            if moved <= 1e-12 || improved.abs() <= 1e-14 * (1.0 + val) {
                done = true;
                break;
            }
        }
        converged &= done;
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, mu));
        }
    }
    let (mut value, mut argmin) =
        best.ok_or_else(|| ConeError::invalid("cone", "no random start projected to a nonzero point"))?;
    let mut certified_lower = None;
    if n <= 3 {
        let (sweep_val, sweep_arg) = sphere_sweep_min(g, k, SWEEP_MESH)?;
        if sweep_val < value {
            value = sweep_val;
            argmin = sweep_arg;
        }
        certified_lower = Some((sweep_val - 2.0 * SWEEP_MESH * smax).max(0.0));
    }
    Ok(ConicSingularValue {
        value,
        argmin,
        converged,
        certified_lower,
    })
}

/// Directions on `S^{d-1}`, `d <= 3`, with angular spacing at most `mesh`.
pub(crate) fn sphere_grid(d: usize, mesh: f64, mut visit: impl FnMut(&[f64])) -> Result<()> {
    match d {
        1 => {
            visit(&[1.0]);
            visit(&[-1.0]);
        }
        2 => {
            let steps = (2.0 * std::f64::consts::PI / mesh).ceil() as usize;
            for i in 0..steps {
                let a = 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
                visit(&[a.cos(), a.sin()]);
            }
        }
        3 => {
            let rings = (std::f64::consts::PI / mesh).ceil() as usize;
            for i in 0..=rings {
                let th = std::f64::consts::PI * i as f64 / rings as f64;
                let (st, ct) = th.sin_cos();
                let around = ((2.0 * std::f64::consts::PI * st / mesh).ceil() as usize).max(1);
                for j in 0..around {
                    let ph = 2.0 * std::f64::consts::PI * j as f64 / around as f64;
                    visit(&[st * ph.cos(), st * ph.sin(), ct]);
                }
            }
        }
        _ => return Err(ConeError::invalid("dim", format!("sphere sweep needs dim <= 3, got {d}"))),
    }
    Ok(())
}

fn sphere_sweep_min(g: &DMatrix<f64>, k: &ConeSpec, mesh: f64) -> Result<(f64, DVector<f64>)> {
    let n = k.ambient_dim();
    let mut best = (f64::INFINITY, DVector::zeros(n));
    let mut buf = vec![0.0; n];
    let mut gm = vec![0.0; g.nrows()];
    sphere_grid(n, mesh, |u| {
        k.project_slice(u, &mut buf);
        let bn = crate::linalg::norm(&buf);
        if bn < 0.5 {
            // only directions close to the cone matter; Π_K(u) has norm
            // cos(angle) for unit u
            return;
        }
        for (r, out) in gm.iter_mut().enumerate() {
            *out = (0..n).map(|c| g[(r, c)] * buf[c]).sum::<f64>() / bn;
        }
        let v = crate::linalg::norm(&gm);
        if v < best.0 {
            best = (v, DVector::from_iterator(n, buf.iter().map(|x| x / bn)));
        }
    })?;
    if !best.0.is_finite() {
        return Err(ConeError::invalid("cone", "sweep found no direction in the cone"));
    }
    Ok(best)
}

/// One row of a concentration report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub s: f64,
    /// Empirical `P(|X - mean| > s)`.
    pub observed: f64,
    /// `2 exp(-s^2 / 2)`.
    pub bound: f64,
    /// Three binomial standard errors at the bound.
    pub slack: f64,
    pub ok: bool,
}

/// Empirical tails of `sup_{mu in K0} <g, mu>` against the Gaussian
/// concentration envelope for 1-Lipschitz functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub mean: f64,
    pub trials: usize,
    pub degenerate: bool,
    pub tails: Vec<TailRow>,
    pub passes: bool,
}

/// Checks `P(|sup - mean| > s) <= 2 exp(-s^2/2)` for `s in {1, 2, 3}`.
pub fn concentration_check(
    cone: &ConeSpec,
    cap: WidthCap,
    trials: usize,
    stream: &mut RngStream,
) -> Result<ConcentrationReport> {
    if trials < 2 {
        return Err(ConeError::invalid("trials", "need at least 2 trials"));
    }
    let levels = [1.0, 2.0, 3.0];
    if is_trivial(cone) {
        return Ok(ConcentrationReport {
            mean: 0.0,
            trials,
            degenerate: true,
            tails: levels
                .iter()
                .map(|&s| TailRow {
                    s,
                    observed: 0.0,
                    bound: 2.0 * (-s * s / 2.0).exp(),
                    slack: 0.0,
                    ok: true,
                })
                .collect(),
            passes: true,
        });
    }
    let d = cone.ambient_dim();
    let samples = per_trial(trials, stream, |s| {
        let g = s.gaussian_vector(d)?;
        match cap {
            WidthCap::Ball => ball_cap_sup(cone, &g),
            WidthCap::Sphere => sphere_cap_sup(cone, &g),
        }
    })?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let tails: Vec<TailRow> = levels
        .iter()
        .map(|&s| {
            let observed = samples.iter().filter(|x| (*x - mean).abs() > s).count() as f64 / n;
            let bound = 2.0 * (-s * s / 2.0).exp();
            let b = bound.min(1.0);
            let slack = 3.0 * (b * (1.0 - b) / n).sqrt();
            TailRow {
                s,
                observed,
                bound,
                slack,
                ok: observed <= bound + slack,
            }
        })
        .collect();
    let passes = tails.iter().all(|t| t.ok);
    Ok(ConcentrationReport {
        mean,
        trials,
        degenerate: false,
        tails,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use std::f64::consts::PI;

    /// Golden-section minimization of a convex function on `[lo, hi]` after a
    /// coarse log-spaced scan.
    fn grid_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let mut pts = vec![lo];
        let n = 4000;
        for i in 0..=n {
            let t = -8.0 + (hi.log10() + 8.0) * i as f64 / n as f64;
            let b = lo + 10f64.powf(t);
            if b <= hi {
                pts.push(b);
            }
        }
        pts.push(hi);
        let mut bi = 0;
        for (i, &b) in pts.iter().enumerate() {
            if f(b) < f(pts[bi]) {
                bi = i;
            }
        }
        let mut a = pts[bi.saturating_sub(1)];
        let mut c = pts[(bi + 1).min(pts.len() - 1)];
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let x1 = c - r * (c - a);
            let x2 = a + r * (c - a);
            if f(x1) < f(x2) {
                c = x2;
            } else {
                a = x1;
            }
        }
        [pts[bi], 0.5 * (a + c)].into_iter().map(&f).fold(f64::INFINITY, f64::min)
    }

    fn p_naive(a1: f64, a2: f64, a3: f64, b: f64) -> f64 {
        -a1 * b + a3 * (b * b + 2.0 * a2 * b + 1.0).sqrt()
    }

    fn q_naive(a1: f64, a2: f64, b: f64) -> f64 {
        a1 * b - a2 * (b * b - 1.0).sqrt()
    }

    #[test]
    fn p_inf_cases() {
        assert_eq!(p_inf(0.0, 0.5, 2.0).unwrap(), ExtendedReal::Finite(2.0));
        assert_eq!(p_inf(1.0, 0.0, 1.0).unwrap(), ExtendedReal::Finite(0.0));
        assert!(p_inf(2.0, 0.3, 1.0).unwrap().is_neg_infinity());
        assert!(p_inf(-1.0, 0.3, 1.0).is_err());
        assert!(p_inf(1.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn q_inf_cases() {
        assert!((q_inf(2.0, 1.0, f64::INFINITY).unwrap().finite().unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert!(q_inf(1.0, 2.0, f64::INFINITY).unwrap().is_neg_infinity());
        assert_eq!(q_inf(1.0, 1.0, f64::INFINITY).unwrap(), ExtendedReal::Finite(0.0));
        assert!(q_inf(1.0, 1.0, 1.0).is_err());
        assert!(q_inf(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn p_inf_matches_grid() {
        let mut s = derive_stream(31, 0, 0);
        for _ in 0..300 {
            let (a1, a2, a3) = (s.uniform_in(0.0, 2.0), s.uniform(), s.uniform_in(0.0, 2.0));
            let f = |b: f64| p_naive(a1, a2, a3, b);
            let diverges = f(2e6) < f(1e6);
            match p_inf(a1, a2, a3).unwrap() {
                ExtendedReal::NegInfinity => assert!(diverges),
                ExtendedReal::Finite(v) => {
                    assert!(!diverges);
                    let g = grid_min(f, 0.0, 1e6);
                    assert!((g - v).abs() <= 1e-6 * v.abs().max(1.0), "{a1} {a2} {a3}: {v} vs {g}");
                }
            }
        }
    }

    #[test]
    fn q_inf_matches_grid() {
        let mut s = derive_stream(32, 0, 0);
        for _ in 0..300 {
            let (a1, a2, r) = (s.uniform_in(0.0, 2.0), s.uniform_in(0.0, 2.0), s.uniform_in(2.0, 100.0));
            let v = q_inf(a1, a2, r).unwrap().finite().unwrap();
            let g = grid_min(|b| q_naive(a1, a2, b), 1.0, r);
            assert!((g - v).abs() <= 1e-6 * v.abs().max(1.0), "{a1} {a2} {r}: {v} vs {g}");
        }
    }

    #[test]
    fn stable_forms_agree_with_naive() {
        for &(a1, a2, a3, b) in &[(0.3, 0.2, 1.1, 3.0), (1.0, 0.9, 0.5, 0.01), (2.0, 0.0, 2.0, 10.0)] {
            assert!((p_a(a1, a2, a3, b) - p_naive(a1, a2, a3, b)).abs() < 1e-12);
        }
        assert!((q_a(1.3, 0.7, 4.0) - q_naive(1.3, 0.7, 4.0)).abs() < 1e-12);
    }

    #[test]
    fn closed_forms() {
        assert_eq!(stat_dim_closed(&ConeSpec::orthant(40).unwrap()), Some(20.0));
        assert_eq!(stat_dim_closed(&ConeSpec::second_order(10).unwrap()), Some(5.0));
        let mut s = derive_stream(1, 1, 1);
        let sub = ConeSpec::subspace(&s.gaussian_matrix(20, 7).unwrap()).unwrap();
        assert_eq!(stat_dim_closed(&sub), Some(7.0));
        assert_eq!(stat_dim_closed(&sub.polar()), Some(13.0));
        assert_eq!(stat_dim_closed(&ConeSpec::circular(5, 0.3).unwrap()), None);
        let prod = ConeSpec::product(vec![ConeSpec::orthant(4).unwrap(), ConeSpec::full(3).unwrap()]).unwrap();
        assert_eq!(stat_dim_closed(&prod), Some(5.0));
    }

    #[test]
    fn mc_agrees_with_closed_forms() {
        let mut s = derive_stream(40, 0, 0);
        let o = stat_dim_mc(&ConeSpec::orthant(40).unwrap(), 20_000, &mut s).unwrap();
        assert!((o.mean - 20.0).abs() <= 4.0 * o.se, "{o:?}");
        assert!(o.ci95.0 <= o.mean && o.mean <= o.ci95.1);
        let t = stat_dim_mc(&ConeSpec::trivial(10).unwrap(), 100, &mut s).unwrap();
        assert_eq!((t.mean, t.se), (0.0, 0.0));
        assert!(stat_dim_mc(&ConeSpec::trivial(10).unwrap(), 1, &mut s).is_err());
    }

    /// `sup_{mu in K ∩ B} <g, mu>` for a circular cone about `e_1` by
    /// maximizing over the angle to the axis, without projections.
    fn circular_ball_sup(alpha: f64, g: &DVector<f64>) -> f64 {
        let g1 = g[0];
        let rest = g.rows(1, g.len() - 1).norm();
        let n = 2000;
        let mut best: f64 = 0.0;
        for i in 0..=n {
            let th = alpha * i as f64 / n as f64;
            best = best.max(g1 * th.cos() + rest * th.sin());
        }
        best
    }

    #[test]
    fn circular_stat_dim_two_estimators() {
        let alpha = PI / 4.0;
        let c = ConeSpec::circular(30, alpha).unwrap();
        let mut s = derive_stream(41, 0, 0);
        let a = stat_dim_mc(&c, 10_000, &mut s).unwrap();
        let samples: Vec<f64> = (0..10_000)
            .map(|i| {
                let g = derive_stream(41, 1, i).gaussian_vector(30).unwrap();
                circular_ball_sup(alpha, &g).powi(2)
            })
            .collect();
        let b = EstimateCI::from_samples(&samples).unwrap();
        assert!((a.mean - b.mean).abs() <= 4.0 * a.combined_se(&b), "{a:?} {b:?}");
    }

    #[test]
    fn complement_rule() {
        let mut s = derive_stream(42, 0, 0);
        for c in [
            ConeSpec::second_order(10).unwrap(),
            ConeSpec::circular(30, PI / 5.0).unwrap(),
            ConeSpec::orthant(24).unwrap(),
        ] {
            let a = stat_dim_mc(&c, 10_000, &mut s).unwrap();
            let b = stat_dim_mc(&c.polar(), 10_000, &mut s).unwrap();
            let n = c.ambient_dim() as f64;
            assert!((a.mean + b.mean - n).abs() <= 4.0 * a.combined_se(&b));
        }
    }

    #[test]
    fn width_examples() {
        let mut s = derive_stream(43, 0, 0);
        let w = gaussian_width_mc(&ConeSpec::full(1).unwrap(), WidthCap::Ball, 100_000, &mut s).unwrap();
        assert!((w.mean - (2.0 / PI).sqrt()).abs() <= 4.0 * w.se);
        let z = gaussian_width_mc(&ConeSpec::trivial(5).unwrap(), WidthCap::Ball, 10, &mut s).unwrap();
        assert_eq!(z.mean, 0.0);
        assert!(gaussian_width_mc(&ConeSpec::trivial(5).unwrap(), WidthCap::Sphere, 10, &mut s).is_err());
    }

    #[test]
    fn width_sandwich() {
        let mut s = derive_stream(44, 0, 0);
        for c in [ConeSpec::orthant(40).unwrap(), ConeSpec::circular(10, 0.4).unwrap(), ConeSpec::orthant(2).unwrap()] {
            let wb = gaussian_width_mc(&c, WidthCap::Ball, 10_000, &mut s).unwrap();
            let ws = gaussian_width_mc(&c, WidthCap::Sphere, 10_000, &mut s).unwrap();
            let dl = stat_dim_mc(&c, 10_000, &mut s).unwrap();
            let tol = 4.0 * wb.combined_se(&ws);
            assert!(ws.mean <= wb.mean + tol && wb.mean <= ws.mean + 1.0 + tol);
            // sqrt(delta) with a delta-method standard error
            let root = dl.mean.sqrt();
            let root_se = dl.se / (2.0 * root);
            let tol = 4.0 * wb.se.hypot(root_se);
            assert!(wb.mean <= root + tol && root <= wb.mean + 1.0 + tol);
        }
    }

    #[test]
    fn sphere_sup_closed_forms_match_ascent() {
        let mut s = derive_stream(45, 0, 0);
        let cones = [
            ConeSpec::orthant(4).unwrap(),
            ConeSpec::second_order(4).unwrap(),
            ConeSpec::circular(4, 0.5).unwrap(),
            ConeSpec::product(vec![ConeSpec::orthant(2).unwrap(), ConeSpec::circular(2, 0.3).unwrap()]).unwrap(),
        ];
        for c in &cones {
            let polar = c.polar();
            for _ in 0..20 {
                let g = polar.project(&s.gaussian_vector(4).unwrap()).unwrap();
                let exact = sphere_cap_sup(c, &g).unwrap();
                let brute = sphere_ascent(c, &g);
                assert!(exact <= 1e-12);
                assert!((exact - brute).abs() <= 1e-6 * (1.0 + g.norm()), "{c:?}: {exact} vs {brute}");
            }
        }
    }

    #[test]
    fn conic_singular_value_examples() {
        let mut s = derive_stream(46, 0, 0);
        let id = DMatrix::identity(4, 4);
        let r = min_conic_singular_value(&id, &ConeSpec::full(4).unwrap(), 4, &mut s).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);

        let g = s.gaussian_matrix(5, 5).unwrap();
        let smin = g.clone().singular_values().min();
        let r = min_conic_singular_value(&g, &ConeSpec::full(5).unwrap(), 8, &mut s).unwrap();
        assert!(r.value >= smin - 1e-9 && r.value <= smin + 1e-4, "{} vs {smin}", r.value);

        let ray = ConeSpec::ray(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])).unwrap();
        let g = s.gaussian_matrix(6, 4).unwrap();
        let r = min_conic_singular_value(&g, &ray, 3, &mut s).unwrap();
        assert!((r.value - g.column(0).norm()).abs() < 1e-12);
        assert!(min_conic_singular_value(&g, &ConeSpec::trivial(4).unwrap(), 3, &mut s).is_err());
    }

    #[test]
    fn conic_singular_value_sweep_certificate() {
        let mut s = derive_stream(47, 0, 0);
        for _ in 0..3 {
            let g = s.gaussian_matrix(4, 3).unwrap();
            let k = ConeSpec::orthant(3).unwrap();
            let r = min_conic_singular_value(&g, &k, 8, &mut s).unwrap();
            let lower = r.certified_lower.unwrap();
            assert!(lower <= r.value);
            assert!(r.value - lower <= 2.0 * SWEEP_MESH * sigma_max(&g) + 1e-12);
        }
    }

    #[test]
    fn conic_singular_value_lower_tail() {
        // inf |G mu| over unit mu in the orthant vs sqrt(m) - sqrt(delta) - 5
        let mut ok = 0;
        let k = ConeSpec::orthant(30).unwrap();
        for i in 0..100 {
            let mut s = derive_stream(48, 0, i);
            let g = s.gaussian_matrix(60, 30).unwrap();
            let r = min_conic_singular_value(&g, &k, 4, &mut s).unwrap();
            if r.value >= 60f64.sqrt() - 15f64.sqrt() - 5.0 {
                ok += 1;
            }
        }
        assert!(ok >= 95);
    }

    #[test]
    fn concentration_reports() {
        let mut s = derive_stream(49, 0, 0);
        let r = concentration_check(&ConeSpec::full(1).unwrap(), WidthCap::Ball, 20_000, &mut s).unwrap();
        assert!(r.passes);
        let at2 = r.tails[1];
        assert!((at2.bound - 0.2707).abs() < 1e-4);
        // |g| - E|g| exceeds 2 about 2.5% of the time
        assert!(at2.observed < 0.05);
        let t = concentration_check(&ConeSpec::trivial(3).unwrap(), WidthCap::Ball, 10, &mut s).unwrap();
        assert!(t.degenerate && t.tails.iter().all(|x| x.observed == 0.0));
        let o = concentration_check(&ConeSpec::orthant(50).unwrap(), WidthCap::Ball, 10_000, &mut s).unwrap();
        assert!(o.tails[2].ok);
    }
}
