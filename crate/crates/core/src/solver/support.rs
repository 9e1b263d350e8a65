//! Linear maximization over intersections of oracle sets.

use nalgebra::{DMatrix, DVector};

use crate::cone::{ConeSpec, ConvexSetOracle, Subspace};
use crate::error::{check_dim, ConeError, Result};
use crate::linalg;
use crate::solver::dykstra::dykstra;
use crate::solver::SolverOptions;

/// Iterations over which the ascent must gain more than `tol` to continue.
const SWEEP: usize = 20;

#[derive(Debug, Clone)]
pub struct SupportValue {
    /// `<x_obj, argmax>`, computed from the returned point.
    pub value: f64,
    pub argmax: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `sup { <x_obj, mu> : mu in every set }`.
///
/// At least one set must be a ball. When all the other sets are cones `C_i`
/// the maximum over `C ∩ rB` is attained at `r Π_C(x) / |Π_C(x)|`, so only
/// one projection onto `C = ∩ C_i` is needed. Otherwise projected gradient
/// ascent with Dykstra projections runs until the best value gains less
/// than `opts.tol` over 20 iterations.
pub fn support_function(
    x_obj: &DVector<f64>,
    sets: &[ConvexSetOracle],
    opts: &SolverOptions,
) -> Result<SupportValue> {
    opts.validate()?;
    let d = x_obj.len();
    if sets.is_empty() {
        return Err(ConeError::invalid("sets", "at least one set is required"));
    }
    for s in sets {
        check_dim(d, s.ambient_dim())?;
    }
    if !linalg::all_finite(x_obj.as_slice()) {
        return Err(ConeError::NonFinite("objective"));
    }
    let radius = sets
        .iter()
        .filter_map(|s| match s {
            ConvexSetOracle::Ball { radius, .. } => Some(*radius),
            _ => None,
        })
        .reduce(f64::min)
        .ok_or_else(|| ConeError::invalid("sets", "a ball is required for a finite maximum"))?;
    let others: Vec<&ConvexSetOracle> =
        sets.iter().filter(|s| !matches!(s, ConvexSetOracle::Ball { .. })).collect();
    if others.iter().all(|s| s.is_cone()) {
        let (p, iterations, converged) = project_onto_cones(&others, x_obj, opts)?;
        let n = p.norm();
        let argmax = if n > opts.tol * (1.0 + x_obj.norm()) {
            p * (radius / n)
        } else {
            DVector::zeros(d)
        };
        // normalizing amplifies projection error, so the point is checked
        let slack = opts.dist_tol * radius.max(1.0);
        let mut feasible = true;
        for s in &others {
            feasible &= s.distance(&argmax)? <= slack;
        }
        if feasible && x_obj.dot(&argmax) >= 0.0 {
            return Ok(SupportValue {
                value: x_obj.dot(&argmax),
                argmax,
                iterations,
                converged,
            });
        }
    }
    ascent(x_obj, sets, opts, None)
}

/// Projected ascent `mu <- P(mu + step x_obj)` from `start` (or from the
/// projection of the origin).
pub(crate) fn ascent(
    x_obj: &DVector<f64>,
    sets: &[ConvexSetOracle],
    opts: &SolverOptions,
    start: Option<&DVector<f64>>,
) -> Result<SupportValue> {
    let d = x_obj.len();
    let origin = DVector::zeros(d);
    let mut mu = DVector::from_vec(dykstra(sets, start.unwrap_or(&origin), opts)?.point);
    let mut best = (x_obj.dot(&mu), mu.clone());
    let mut mark = best.0;
    let mut since = 0;
    for it in 1..=opts.max_iters {
        mu = DVector::from_vec(dykstra(sets, &(&mu + x_obj * opts.step), opts)?.point);
        let v = x_obj.dot(&mu);
        if v > best.0 {
            best = (v, mu.clone());
        }
        since += 1;
        if since == SWEEP {
            if best.0 - mark < opts.tol * best.0.abs().max(1.0) {
                return Ok(SupportValue {
                    value: best.0,
                    argmax: best.1,
                    iterations: it,
                    converged: true,
                });
            }
            mark = best.0;
            since = 0;
        }
    }
    Ok(SupportValue {
        value: best.0,
        argmax: best.1,
        iterations: opts.max_iters,
        converged: false,
    })
}

/// Projection onto an intersection of cones. Returns the point, an
/// iteration count and a convergence flag.
pub(crate) fn project_onto_cones(
    cones: &[&ConvexSetOracle],
    v: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<(DVector<f64>, usize, bool)> {
    match cones {
        [] => Ok((v.clone(), 0, true)),
        [c] => Ok((c.project(v)?, 1, true)),
        [a, b] => {
            if let (Some(s), ConvexSetOracle::Cone(k)) = (a.as_subspace(), b) {
                return project_cone_subspace(k, &s, v, opts);
            }
            if let (ConvexSetOracle::Cone(k), Some(s)) = (a, b.as_subspace()) {
                return project_cone_subspace(k, &s, v, opts);
            }
            generic(cones, v, opts)
        }
        _ => generic(cones, v, opts),
    }
}

fn generic(
    cones: &[&ConvexSetOracle],
    v: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<(DVector<f64>, usize, bool)> {
    let owned: Vec<ConvexSetOracle> = cones.iter().map(|c| (*c).clone()).collect();
    let r = dykstra(&owned, v, opts)?;
    Ok((DVector::from_vec(r.point), r.cycles, r.converged))
}

/// `Π_{K ∩ S}(v)` for a cone `K` and a subspace `S`.
///
/// Solved through [`dual_projection`] with the constraint `A mu = 0`,
/// `A^T` an orthonormal basis of `S⊥`. The final point is mapped into `S`
/// exactly.
pub fn project_cone_subspace(
    k: &ConeSpec,
    s: &Subspace,
    v: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<(DVector<f64>, usize, bool)> {
    check_dim(k.ambient_dim(), v.len())?;
    check_dim(s.ambient_dim(), v.len())?;
    let perp: DMatrix<f64> = s.orthogonal().basis();
    if perp.ncols() == 0 {
        return Ok((k.project(v)?, 1, true));
    }
    if s.dim() == 0 {
        return Ok((DVector::zeros(v.len()), 0, true));
    }
    let rhs = DVector::zeros(perp.ncols());
    let mut lam = rhs.clone();
    let (mu, it, ok) = dual_projection(|a, o| k.project_slice(a, o), &perp, &rhs, v, &mut lam, opts);
    let g = perp.transpose() * &mu;
    Ok((&mu - &perp * g, it, ok))
}

/// `Π_{C ∩ {A mu = c}}(v)` for a convex set `C` given by its projector.
///
/// `perp` holds `A^T`, with orthonormal columns. Accelerated ascent on the
/// dual `max_λ min_{mu in C} |mu - v|^2/2 + <λ, A mu - c>`, whose inner
/// minimizer is `Π_C(v - A^T λ)` and whose gradient is `A mu(λ) - c`, with
/// Lipschitz constant 1. `lam` is a warm start and receives the final
/// multiplier. The returned point lies in `C`; the run counts as converged
/// once `|A mu - c| <= opts.tol (1 + |v|)`.
pub(crate) fn dual_projection<P>(
    proj: P,
    perp: &DMatrix<f64>,
    rhs: &DVector<f64>,
    v: &DVector<f64>,
    lam: &mut DVector<f64>,
    opts: &SolverOptions,
) -> (DVector<f64>, usize, bool)
where
    P: Fn(&[f64], &mut [f64]),
{
    let at = perp.transpose();
    let target = opts.tol * (1.0 + v.norm());
    let mut z = lam.clone();
    let mut t = 1.0f64;
    let mut mu = DVector::zeros(v.len());
    let mut best = (f64::INFINITY, mu.clone(), lam.clone());
    let mut phi_old = f64::NEG_INFINITY;
    for it in 1..=opts.max_iters {
        let shifted = v - perp * &z;
        proj(shifted.as_slice(), mu.as_mut_slice());
        let grad = &at * &mu - rhs;
        let res = grad.norm();
        if res < best.0 {
            best = (res, mu.clone(), z.clone());
        }
        if res <= target {
            *lam = z;
            return (mu, it, true);
        }
        let next = &z + &grad;
        // dual value at z, used for restarts
        let phi = 0.5 * (&mu - v).norm_squared() + z.dot(&grad);
        if phi < phi_old {
            t = 1.0;
        }
        phi_old = phi;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &*lam) * ((t - 1.0) / t_next);
        *lam = next;
        t = t_next;
    }
    *lam = best.2;
    (best.1, opts.max_iters, false)
}

/// Projected ascent of `<x, mu>` over `K ∩ rB ∩ {A mu = c}` from `start`.
///
/// Each step projects with [`dual_projection`], where `K ∩ rB` is projected
/// in closed form by radially clipping `Π_K`. Iterates lie in `K ∩ rB`
/// exactly and satisfy the affine constraint to `opts.tol`.
pub(crate) fn affine_ascent(
    x: &DVector<f64>,
    k: &ConeSpec,
    radius: f64,
    perp: &DMatrix<f64>,
    rhs: &DVector<f64>,
    start: &DVector<f64>,
    opts: &SolverOptions,
) -> SupportValue {
    let proj = |a: &[f64], o: &mut [f64]| {
        k.project_slice(a, o);
        let n = linalg::norm(o);
        if n > radius {
            o.iter_mut().for_each(|v| *v *= radius / n);
        }
    };
    let mut lam = DVector::zeros(perp.ncols());
    let (mut mu, _, mut ok) = dual_projection(proj, perp, rhs, start, &mut lam, opts);
    let mut best = (x.dot(&mu), mu.clone());
    let mut mark = best.0;
    let mut since = 0;
    for it in 1..=opts.max_iters {
        let (next, _, conv) = dual_projection(proj, perp, rhs, &(&mu + x * opts.step), &mut lam, opts);
        mu = next;
        ok &= conv;
        let v = x.dot(&mu);
        if v > best.0 {
            best = (v, mu.clone());
        }
        since += 1;
        if since == SWEEP {
            if best.0 - mark < opts.tol * best.0.abs().max(1.0) {
                return SupportValue {
                    value: best.0,
                    argmax: best.1,
                    iterations: it,
                    converged: ok,
                };
            }
            mark = best.0;
            since = 0;
        }
    }
    SupportValue {
        value: best.0,
        argmax: best.1,
        iterations: opts.max_iters,
        converged: false,
    }
}

/// `K_x = K ∩ {mu : <x, mu> >= 0}` for a unit vector `x`.
pub fn restricted_cone(k: &ConeSpec, x: &DVector<f64>) -> Result<ConeSpec> {
    ConeSpec::restricted(k.clone(), x.clone())
}
