//! Deciding whether two closed convex cones share a nonzero point.
//!
//! Pairs of exact subspaces are decided through principal angles. Every
//! other pair goes through normalized alternating projections
//! `x <- Π_A(Π_B(x)) / |Π_A(Π_B(x))|` from several random starts; the
//! overlap `rho = |Π_A(Π_B(x))|` is nondecreasing along each run. A run
//! succeeds once `1 - rho <= rho_tol` and the iterate lies within `dist_tol`
//! of both cones. This is a heuristic: near-tangent pairs may be
//! misclassified.

use nalgebra::DVector;

use crate::cone::ConvexSetOracle;
use crate::error::{check_dim, ConeError, Result};
use crate::linalg::{self, RANK_CUTOFF};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Nontrivial,
    Trivial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionVerdict {
    pub verdict: Verdict,
    /// Terminal overlap `|Π_A(Π_B(x))|` of the best run, in `[0, 1]`.
    pub rho: f64,
    /// Unit vector within `dist_tol` of both cones (present iff nontrivial).
    pub witness: Option<DVector<f64>>,
    pub iterations_used: usize,
    pub starts_used: usize,
}

impl IntersectionVerdict {
    pub fn is_nontrivial(&self) -> bool {
        self.verdict == Verdict::Nontrivial
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOptions {
    pub starts: usize,
    /// Iterations allowed per start to reach `1 - rho <= rho_tol`.
    pub max_iters: usize,
    pub rho_tol: f64,
    pub dist_tol: f64,
    /// Extra iterations per start, as a multiple of `max_iters`, spent
    /// driving the distance checks below `dist_tol` once `rho_tol` is met.
    pub polish_factor: usize,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        DetectorOptions {
            starts: 16,
            max_iters: 400,
            rho_tol: 1e-4,
            dist_tol: 1e-6,
            polish_factor: 10,
        }
    }
}

impl DetectorOptions {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 || self.max_iters == 0 {
            return Err(ConeError::invalid("starts", "starts and max_iters must be positive"));
        }
        if !(self.rho_tol > 0.0 && self.rho_tol < 1.0) {
            return Err(ConeError::invalid("rho_tol", "must lie in (0, 1)"));
        }
        if !(self.dist_tol > 0.0 && self.dist_tol < 1.0) {
            return Err(ConeError::invalid("dist_tol", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Norm below which a projection is treated as having collapsed to zero.
const COLLAPSE: f64 = 1e-14;

/// Decides whether `A ∩ B != {0}` for cones `A`, `B` in `R^dim`.
pub fn detect_nontrivial_intersection(
    a: &ConvexSetOracle,
    b: &ConvexSetOracle,
    dim: usize,
    opts: &DetectorOptions,
    stream: &mut RngStream,
) -> Result<IntersectionVerdict> {
    opts.validate()?;
    check_dim(dim, a.ambient_dim())?;
    check_dim(dim, b.ambient_dim())?;
    if !a.is_cone() || !b.is_cone() {
        return Err(ConeError::invalid("oracle", "both sets must be cones"));
    }
    if let (Some(sa), Some(sb)) = (a.as_subspace(), b.as_subspace()) {
        return Ok(subspace_verdict(&sa.basis(), &sb.basis()));
    }
    let mut best_rho: f64 = 0.0;
    let mut total_iters = 0;
    for start in 0..opts.starts {
        let x0 = stream.unit_vector(dim)?;
        let run = run_start(a, b, x0, opts)?;
        total_iters += run.iterations;
        best_rho = best_rho.max(run.rho);
        if let Some(w) = run.witness {
            return Ok(IntersectionVerdict {
                verdict: Verdict::Nontrivial,
                rho: run.rho,
                witness: Some(w),
                iterations_used: total_iters,
                starts_used: start + 1,
            });
        }
    }
    Ok(IntersectionVerdict {
        verdict: Verdict::Trivial,
        rho: best_rho.min(1.0),
        witness: None,
        iterations_used: total_iters,
        starts_used: opts.starts,
    })
}

fn subspace_verdict(qa: &nalgebra::DMatrix<f64>, qb: &nalgebra::DMatrix<f64>) -> IntersectionVerdict {
    let d = qa.nrows();
    let trivial = |rho: f64| IntersectionVerdict {
        verdict: Verdict::Trivial,
        rho,
        witness: None,
        iterations_used: 0,
        starts_used: 0,
    };
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return trivial(0.0);
    }
    // component of span(B) orthogonal to A; a null direction is shared.
    // m is d x b with b <= d, so the thin SVD has b singular values.
    let m = qb - qa * (qa.transpose() * qb);
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let (i, sigma) = svd.singular_values.argmin();
    let v = vt.row(i).transpose();
    let rho = (1.0 - sigma * sigma).max(0.0).sqrt();
    if sigma <= RANK_CUTOFF || qa.ncols() + qb.ncols() > d {
        let w = qb * v;
        let n = w.norm();
        IntersectionVerdict {
            verdict: Verdict::Nontrivial,
            rho: 1.0,
            witness: Some(w / n),
            iterations_used: 0,
            starts_used: 0,
        }
    } else {
        trivial(rho)
    }
}

struct Run {
    rho: f64,
    witness: Option<DVector<f64>>,
    iterations: usize,
}

fn run_start(a: &ConvexSetOracle, b: &ConvexSetOracle, x0: DVector<f64>, opts: &DetectorOptions) -> Result<Run> {
    let dim = x0.len();
    let mut y = DVector::zeros(dim);
    let mut z = DVector::zeros(dim);
    // start inside A so that rho is monotone from the first step
    a.project_slice(x0.as_slice(), z.as_mut_slice());
    let n0 = z.norm();
    if !n0.is_finite() {
        return Err(ConeError::NonFinite("projection onto A"));
    }
    if n0 < COLLAPSE {
        return Ok(Run {
            rho: 0.0,
            witness: None,
            iterations: 0,
        });
    }
    let mut x = &z / n0;
    let mut rho: f64 = 0.0;
    let budget = opts.max_iters * (1 + opts.polish_factor);
    let mut polish_start: Option<(usize, f64)> = None;
    let mut used = 0;
    for it in 1..=budget {
        used = it;
        b.project_slice(x.as_slice(), y.as_mut_slice());
        let ny = y.norm();
        if !ny.is_finite() {
            return Err(ConeError::NonFinite("projection onto B"));
        }
        // x is a unit vector of A (after the first step); |x - Π_B x| is an
        // upper bound on dist(x, B) even for approximate oracles
        let dist_b = (&x - &y).norm();
        if it > 1 && 1.0 - rho <= opts.rho_tol && dist_b <= opts.dist_tol {
            let dist_a = a.distance(&x)?;
            if dist_a <= opts.dist_tol {
                return Ok(Run {
                    rho,
                    witness: Some(x),
                    iterations: it - 1,
                });
            }
        }
        if ny < COLLAPSE {
            return Ok(Run {
                rho: 0.0,
                witness: None,
                iterations: it,
            });
        }
        a.project_slice(y.as_slice(), z.as_mut_slice());
        let nz = z.norm();
        if !nz.is_finite() {
            return Err(ConeError::NonFinite("projection onto A"));
        }
        if nz < COLLAPSE {
            return Ok(Run {
                rho: 0.0,
                witness: None,
                iterations: it,
            });
        }
        let prev_rho = if it == 1 { nz } else { rho };
        rho = nz;
        x.copy_from(&z);
        x /= nz;

        let gain = rho - prev_rho;
        if 1.0 - rho <= opts.rho_tol {
            // polish phase: give up when the distance is not shrinking fast
            // enough to reach dist_tol within the remaining budget
            let (t0, d0) = *polish_start.get_or_insert((it, dist_b.max(1e-300)));
            let span = it - t0;
            if span >= 50 && dist_b > opts.dist_tol {
                let rate = (dist_b.max(1e-300) / d0).powf(1.0 / span as f64);
                let needed = if rate < 1.0 {
                    (opts.dist_tol / dist_b).ln() / rate.ln()
                } else {
                    f64::INFINITY
                };
                if needed > (budget - it) as f64 {
                    break;
                }
            }
        } else if it >= opts.max_iters {
            break;
        } else if it > 1 {
            // increments of rho shrink along a run; the current one bounds
            // what the remaining iterations can add
            let remaining = (opts.max_iters - it) as f64;
            if gain <= 1e-15 || rho + gain * remaining < 1.0 - opts.rho_tol {
                break;
            }
        }
    }
    Ok(Run {
        rho,
        witness: None,
        iterations: used,
    })
}

/// Overlap values `rho_t = |Π_A(Π_B(x_t))|` of one alternating run started
/// at the normalized projection of `x0` onto `A`, without early stopping.
/// Used to audit monotonicity.
pub fn overlap_trajectory(
    a: &ConvexSetOracle,
    b: &ConvexSetOracle,
    x0: &DVector<f64>,
    iters: usize,
) -> Result<Vec<f64>> {
    check_dim(a.ambient_dim(), x0.len())?;
    check_dim(b.ambient_dim(), x0.len())?;
    let n = x0.norm();
    if n == 0.0 {
        return Err(ConeError::invalid("x0", "start must be nonzero"));
    }
    let mut x = a.project(&(x0 / n))?;
    let n = x.norm();
    if n < COLLAPSE {
        return Ok(Vec::new());
    }
    x /= n;
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let z = a.project(&b.project(&x)?)?;
        let nz = z.norm();
        out.push(nz);
        if nz < COLLAPSE {
            break;
        }
        x = z / nz;
    }
    Ok(out)
}

/// Exhaustive check on the sphere for `dim <= 3`: nontrivial iff some unit
/// direction lies within `2 mesh` of both cones.
///
/// In dimension 3 the sphere is covered by the six faces of a cube, refined
/// as quadtrees. `f(x) = max(dist(x, A), dist(x, B))` is 1-Lipschitz, so a
/// cell of angular radius `r` around `c` is discarded when
/// `f(c) - r > 2 mesh`; surviving cells are refined down to radius `mesh`
/// and their centers tested.
pub fn brute_force_intersection_oracle(
    a: &ConvexSetOracle,
    b: &ConvexSetOracle,
    dim: usize,
    mesh: f64,
) -> Result<IntersectionVerdict> {
    check_dim(dim, a.ambient_dim())?;
    check_dim(dim, b.ambient_dim())?;
    if !(1..=3).contains(&dim) {
        return Err(ConeError::invalid("dim", format!("brute force supports dim 1..=3, got {dim}")));
    }
    if !(mesh > 0.0 && mesh <= 1e-2) {
        return Err(ConeError::invalid("mesh", "mesh must lie in (0, 1e-2]"));
    }
    let mut pa = vec![0.0; dim];
    let mut pb = vec![0.0; dim];
    let mut f = |x: &[f64]| -> (f64, f64) {
        a.project_slice(x, &mut pa);
        b.project_slice(x, &mut pb);
        let da = linalg::dist(x, &pa);
        let db = linalg::dist(x, &pb);
        (da.max(db), db)
    };
    let thresh = 2.0 * mesh;
    let mut best: (f64, Vec<f64>) = (f64::INFINITY, vec![0.0; dim]);
    let mut visits = 0usize;
    let mut found = None;
    if dim <= 2 {
        crate::stats::sphere_grid(dim, mesh, |x| {
            if found.is_some() {
                return;
            }
            visits += 1;
            let (v, _) = f(x);
            if v < best.0 {
                best = (v, x.to_vec());
            }
            if v <= thresh {
                found = Some(x.to_vec());
            }
        })?;
    } else {
        let mut stack: Vec<(usize, f64, f64, f64)> = Vec::new();
        for face in 0..6 {
            stack.push((face, 0.0, 0.0, 1.0));
        }
        // depth-first over (face, center s, center t, half-width)
        while let Some((face, s, t, h)) = stack.pop() {
            let c = cube_point(face, s, t);
            let r = [(-h, -h), (-h, h), (h, -h), (h, h)]
                .iter()
                .map(|(ds, dt)| angle(&c, &cube_point(face, s + ds, t + dt)))
                .fold(0.0, f64::max);
            visits += 1;
            let (v, _) = f(&c);
            if v < best.0 {
                best = (v, c.to_vec());
            }
            if v - r > thresh {
                continue;
            }
            if r <= mesh {
                if v <= thresh {
                    found = Some(c.to_vec());
                    break;
                }
                continue;
            }
            let q = h / 2.0;
            for (ds, dt) in [(-q, -q), (-q, q), (q, -q), (q, q)] {
                stack.push((face, s + ds, t + dt, q));
            }
        }
    }
    let rho_at = |x: &[f64]| -> Result<f64> {
        let xv = DVector::from_column_slice(x);
        Ok(a.project(&b.project(&xv)?)?.norm())
    };
    match found {
        Some(x) => Ok(IntersectionVerdict {
            verdict: Verdict::Nontrivial,
            rho: rho_at(&x)?,
            witness: Some(DVector::from_vec(x)),
            iterations_used: visits,
            starts_used: 1,
        }),
        None => Ok(IntersectionVerdict {
            verdict: Verdict::Trivial,
            rho: rho_at(&best.1)?,
            witness: None,
            iterations_used: visits,
            starts_used: 1,
        }),
    }
}

fn cube_point(face: usize, s: f64, t: f64) -> [f64; 3] {
    let p = match face {
        0 => [1.0, s, t],
        1 => [-1.0, s, t],
        2 => [s, 1.0, t],
        3 => [s, -1.0, t],
        4 => [s, t, 1.0],
        _ => [s, t, -1.0],
    };
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

fn angle(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    // atan2 form stays accurate for tiny angles
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    cn.atan2(u[0] * v[0] + u[1] * v[1] + u[2] * v[2])
}
