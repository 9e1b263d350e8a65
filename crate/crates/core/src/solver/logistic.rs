//! Cone-constrained logistic regression: likelihood and MLE existence.

use nalgebra::{DMatrix, DVector};

use crate::cone::{image_cone, ConeSpec, ConvexSetOracle};
use crate::error::{check_dim, ConeError, Result};
use crate::intersect::{detect_nontrivial_intersection, DetectorOptions, IntersectionVerdict};
use crate::linalg;
use crate::rng::RngStream;
use crate::solver::SolverOptions;

/// `log(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn check_labels(y: &DVector<f64>) -> Result<()> {
    match y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        Some(v) => Err(ConeError::invalid("labels", format!("label {v} is not +1 or -1"))),
        None => Ok(()),
    }
}

/// `-Σ_i log(1 + exp(-y_i <x_i, beta>))` for the rows `x_i` of `x`.
pub fn logistic_loglik(beta: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    check_dim(x.ncols(), beta.len())?;
    check_dim(x.nrows(), y.len())?;
    check_labels(y)?;
    if !linalg::all_finite(beta.as_slice()) || !linalg::all_finite(x.as_slice()) {
        return Err(ConeError::NonFinite("logistic data"));
    }
    let z = x * beta;
    Ok(-z.iter().zip(y.iter()).map(|(zi, yi)| softplus(-yi * zi)).sum::<f64>())
}

#[derive(Debug, Clone)]
pub struct MleExistence {
    pub exists: bool,
    /// Set when the detector reported a trivial intersection although its
    /// best overlap came within `rho_tol` of 1, so the answer rests on the
    /// distance checks alone.
    pub ambiguous: bool,
    pub verdict: IntersectionVerdict,
}

/// Whether the `K`-constrained MLE exists, i.e. no `beta in K \ {0}` has
/// `y_i <x_i, beta> >= 0` for every sample.
///
/// Equivalently `D K ∩ R^m_{>=0} = {0}` with `D = diag(y) x`, which is
/// decided by the intersection detector.
pub fn logistic_mle_exists(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: &ConeSpec,
    opts: &SolverOptions,
    detector: &DetectorOptions,
    stream: &mut RngStream,
) -> Result<MleExistence> {
    check_dim(x.ncols(), k.ambient_dim())?;
    check_dim(x.nrows(), y.len())?;
    check_labels(y)?;
    let m = x.nrows();
    let mut d = x.clone();
    for (i, yi) in y.iter().enumerate() {
        d.row_mut(i).scale_mut(*yi);
    }
    let gk = image_cone(&d, k, opts)?;
    let orthant = ConvexSetOracle::Cone(ConeSpec::orthant(m)?);
    let verdict = detect_nontrivial_intersection(&orthant, &gk, m, detector, stream)?;
    let exists = !verdict.is_nontrivial();
    Ok(MleExistence {
        exists,
        ambiguous: exists && verdict.rho >= 1.0 - detector.rho_tol,
        verdict,
    })
}
