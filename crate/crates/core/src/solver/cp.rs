//! `max <x, mu>` subject to `G mu = b`, `mu in K`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cone::{project_image_cone, ConeSpec, ConvexSetOracle, Subspace};
use crate::error::{check_dim, ConeError, Result};
use crate::intersect::{detect_nontrivial_intersection, DetectorOptions};
use crate::linalg;
use crate::rng::RngStream;
use crate::solver::support::{affine_ascent, project_cone_subspace, restricted_cone};
use crate::solver::SolverOptions;

/// Largest ball radius tried before declaring the program suspected unbounded.
pub const MAX_RADIUS: f64 = (1u64 << 30) as f64;

/// Fraction of the ball radius a maximizer must stay below to count as interior.
const INTERIOR: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CpKind {
    Infeasible,
    Bounded,
    Unbounded,
}

impl std::fmt::Display for CpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CpKind::Infeasible => "infeasible",
            CpKind::Bounded => "bounded",
            CpKind::Unbounded => "unbounded",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CpOutcome {
    pub kind: CpKind,
    /// Optimal value, present iff `kind == Bounded`.
    pub value: Option<f64>,
    /// Feasible maximizer (bounded) or recession direction (unbounded).
    pub certificate: Option<DVector<f64>>,
    /// Set when unboundedness was inferred from the ball radius exceeding
    /// [`MAX_RADIUS`] rather than from a recession direction.
    pub suspected_unbounded: bool,
    /// `min_{mu in K} |G mu - b|` as computed in the feasibility stage.
    pub residual: f64,
}

/// Solves the conic program in three stages.
///
/// 1. Feasibility: minimize `|G mu - b|` over `K`; infeasible when the
///    converged residual exceeds `dist_tol (1 + |b|)`.
/// 2. Unboundedness: look for a unit `nu` in `null(G) ∩ K_x` with
///    `<x, nu> >= dist_tol`, where `K_x` is `K` cut by `<x, mu> >= 0`.
/// 3. Value: for `b = 0` the feasible set is a cone and the value is 0.
///    Otherwise maximize over the feasible set cut by a ball, doubling the
///    radius until the maximizer is interior for two radii in a row.
pub fn solve_conic_program(
    x: &DVector<f64>,
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    k: &ConeSpec,
    opts: &SolverOptions,
    detector: &DetectorOptions,
    stream: &mut RngStream,
) -> Result<CpOutcome> {
    opts.validate()?;
    let n = g.ncols();
    check_dim(n, k.ambient_dim())?;
    check_dim(n, x.len())?;
    check_dim(g.nrows(), b.len())?;
    if !linalg::all_finite(g.as_slice()) || !linalg::all_finite(b.as_slice()) {
        return Err(ConeError::NonFinite("conic program data"));
    }
    let kx = restricted_cone(k, x)?;

    let homogeneous = b.iter().all(|v| *v == 0.0);
    let (mu_feas, residual) = if homogeneous {
        (DVector::zeros(n), 0.0)
    } else {
        let p = project_image_cone(g, k, b, opts)?;
        (p.mu, p.residual)
    };
    if residual > opts.dist_tol * (1.0 + b.norm()) {
        return Ok(CpOutcome {
            kind: CpKind::Infeasible,
            value: None,
            certificate: None,
            suspected_unbounded: false,
            residual,
        });
    }

    if let Some(nu) = recession_direction(x, g, k, &kx, opts, detector, stream)? {
        return Ok(CpOutcome {
            kind: CpKind::Unbounded,
            value: None,
            certificate: Some(nu),
            suspected_unbounded: false,
            residual,
        });
    }

    if homogeneous {
        return Ok(CpOutcome {
            kind: CpKind::Bounded,
            value: Some(0.0),
            certificate: Some(DVector::zeros(n)),
            suspected_unbounded: false,
            residual,
        });
    }

    // G mu = b  <=>  Q^T mu = Q^T G^+ b for an orthonormal row-space basis Q
    let perp = linalg::row_space_basis(g);
    let rhs = perp.transpose() * (linalg::pseudo_inverse(g) * b);
    // radii below the feasible point's norm give empty sets
    let mut radius = 1.0;
    while radius < 1.5 * mu_feas.norm() {
        radius *= 2.0;
    }
    let mut interior_streak = 0;
    let mut start = mu_feas;
    while radius <= MAX_RADIUS {
        let best = affine_ascent(x, k, radius, &perp, &rhs, &start, opts);
        if best.argmax.norm() <= INTERIOR * radius {
            interior_streak += 1;
            if interior_streak == 2 {
                return Ok(CpOutcome {
                    kind: CpKind::Bounded,
                    value: Some(best.value),
                    certificate: Some(best.argmax),
                    suspected_unbounded: false,
                    residual,
                });
            }
        } else {
            interior_streak = 0;
        }
        start = best.argmax;
        radius *= 2.0;
    }
    Ok(CpOutcome {
        kind: CpKind::Unbounded,
        value: None,
        certificate: None,
        suspected_unbounded: true,
        residual,
    })
}

/// Unit `nu in null(G) ∩ K` with `<x, nu> >= dist_tol`, if one is found.
fn recession_direction(
    x: &DVector<f64>,
    g: &DMatrix<f64>,
    k: &ConeSpec,
    kx: &ConeSpec,
    opts: &SolverOptions,
    detector: &DetectorOptions,
    stream: &mut RngStream,
) -> Result<Option<DVector<f64>>> {
    let n = g.ncols();
    let null = Subspace::null_space(g)?;
    let null_cone = match null.dim() {
        0 => return Ok(None),
        d if d == n => ConeSpec::Full(n),
        _ => ConeSpec::Subspace(null.clone()),
    };
    let det = DetectorOptions {
        dist_tol: opts.dist_tol,
        ..detector.clone()
    };
    let verdict = detect_nontrivial_intersection(
        &ConvexSetOracle::Cone(null_cone),
        &ConvexSetOracle::Cone(kx.clone()),
        n,
        &det,
        stream,
    )?;
    let Some(w) = verdict.witness else {
        return Ok(None);
    };
    if x.dot(&w) >= opts.dist_tol {
        return Ok(Some(w));
    }
    // the witness may lie in x⊥; the best direction is Π_{null(G) ∩ K}(x)
    let (p, _, _) = if null.dim() == n {
        (k.project(x)?, 0, true)
    } else {
        project_cone_subspace(k, &null, x, opts)?
    };
    let len = p.norm();
    if len < opts.dist_tol {
        return Ok(None);
    }
    let nu = p / len;
    if x.dot(&nu) >= opts.dist_tol && k.distance(&nu)? <= opts.dist_tol {
        Ok(Some(nu))
    } else {
        Ok(None)
    }
}
