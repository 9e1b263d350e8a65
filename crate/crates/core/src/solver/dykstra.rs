//! Dykstra's cyclic projection method for intersections of convex sets.

use nalgebra::DVector;

use crate::cone::ConvexSetOracle;
use crate::error::{check_dim, ConeError, Result};
use crate::linalg;
use crate::solver::SolverOptions;

/// Final iterate of a Dykstra run.
#[derive(Debug, Clone)]
pub struct DykstraResult {
    pub point: Vec<f64>,
    pub cycles: usize,
    pub converged: bool,
    /// Displacement over the last full cycle.
    pub last_displacement: f64,
}

/// Dykstra iteration over `n_sets` projection maps given as slice closures.
///
/// Stops once the cycle-to-cycle displacement is at most
/// `tol * (1 + |x|)` or after `max_cycles` cycles.
pub(crate) fn dykstra_slices<F>(
    n_sets: usize,
    project: F,
    start: &[f64],
    max_cycles: usize,
    tol: f64,
) -> DykstraResult
where
    F: Fn(usize, &[f64], &mut [f64]),
{
    let d = start.len();
    let mut x = start.to_vec();
    let mut incr = vec![vec![0.0; d]; n_sets];
    let mut shifted = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut cycle_start = x.clone();
    let mut last = f64::INFINITY;
    for cycle in 1..=max_cycles {
        cycle_start.copy_from_slice(&x);
        for (i, p) in incr.iter_mut().enumerate() {
            for ((s, xi), pi) in shifted.iter_mut().zip(&x).zip(p.iter()) {
                *s = xi + pi;
            }
            project(i, &shifted, &mut y);
            for ((pi, s), yi) in p.iter_mut().zip(&shifted).zip(&y) {
                *pi = s - yi;
            }
            x.copy_from_slice(&y);
        }
        last = linalg::dist(&x, &cycle_start);
        if last <= tol * (1.0 + linalg::norm(&x)) {
            return DykstraResult {
                point: x,
                cycles: cycle,
                converged: true,
                last_displacement: last,
            };
        }
    }
    DykstraResult {
        point: x,
        cycles: max_cycles,
        converged: false,
        last_displacement: last,
    }
}

/// Approximate projection of `point` onto the intersection of `sets`.
///
/// When the sets are closed, convex and intersect, the iterates converge to
/// the exact projection. A non-converged result (see
/// [`DykstraResult::converged`]) with a persistent displacement is the usual
/// symptom of an empty intersection.
pub fn dykstra(
    sets: &[ConvexSetOracle],
    point: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<DykstraResult> {
    let first = sets
        .first()
        .ok_or_else(|| ConeError::invalid("sets", "at least one set is required"))?;
    let d = first.ambient_dim();
    for s in sets {
        check_dim(d, s.ambient_dim())?;
    }
    check_dim(d, point.len())?;
    if !linalg::all_finite(point.as_slice()) {
        return Err(ConeError::NonFinite("dykstra start point"));
    }
    if sets.len() == 1 {
        let p = sets[0].project(point)?;
        return Ok(DykstraResult {
            point: p.as_slice().to_vec(),
            cycles: 1,
            converged: true,
            last_displacement: 0.0,
        });
    }
    let res = dykstra_slices(
        sets.len(),
        |i, p, o| sets[i].project_slice(p, o),
        point.as_slice(),
        opts.max_iters,
        opts.tol,
    );
    if !linalg::all_finite(&res.point) {
        return Err(ConeError::NonFinite("dykstra iterate"));
    }
    Ok(res)
}
