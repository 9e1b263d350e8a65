use nalgebra::{DMatrix, DVector};

use super::{ConeSpec, Subspace};
use crate::error::{check_dim, ConeError, Result};
use crate::linalg::{self, pseudo_inverse, sigma_max};
use crate::solver::dykstra::dykstra_slices;
use crate::solver::SolverOptions;

/// A convex set with a Euclidean projection.
#[derive(Debug, Clone)]
pub enum ConvexSetOracle {
    Cone(ConeSpec),
    /// Origin-centred ball.
    Ball { dim: usize, radius: f64 },
    AffineSet(AffineSet),
    /// `{mu : <normal, mu> >= offset}`.
    HalfspaceSet { normal: DVector<f64>, offset: f64 },
    /// `GK = {G mu : mu in K}`, projected by proximal gradient.
    ImageCone(ImageCone),
    /// `G^{-1} L = {mu : G mu in L}` for non-subspace `L`.
    PreimageSet(PreimageSet),
}

/// `{mu : A mu = b}` with a cached pseudo-inverse of `A`.
#[derive(Debug, Clone)]
pub struct AffineSet {
    a: DMatrix<f64>,
    b: DVector<f64>,
    pinv: DMatrix<f64>,
}

impl AffineSet {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        if a.ncols() == 0 {
            return Err(ConeError::invalid("A", "matrix must have at least one column"));
        }
        if !linalg::all_finite(a.as_slice()) || !linalg::all_finite(b.as_slice()) {
            return Err(ConeError::NonFinite("affine constraint"));
        }
        let pinv = pseudo_inverse(&a);
        Ok(AffineSet { a, b, pinv })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    fn project_slice(&self, v: &[f64], out: &mut [f64]) {
        let v = DVector::from_column_slice(v);
        let r = &self.a * &v - &self.b;
        let p = v - &self.pinv * r;
        out.copy_from_slice(p.as_slice());
    }
}

#[derive(Debug, Clone)]
pub struct ImageCone {
    g: DMatrix<f64>,
    k: ConeSpec,
    opts: SolverOptions,
    step: f64,
}

impl ImageCone {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn cone(&self) -> &ConeSpec {
        &self.k
    }
}

/// How a preimage set is projected.
#[derive(Debug, Clone)]
pub enum PreimageKind {
    /// Intersection of halfspaces `{<row_i, mu> >= 0}`, projected by Dykstra.
    Polyhedral { rows: DMatrix<f64> },
    /// Quadratic penalty on `dist(G mu, L)` with a continuation schedule.
    Penalty,
}

#[derive(Debug, Clone)]
pub struct PreimageSet {
    g: DMatrix<f64>,
    l: ConeSpec,
    kind: PreimageKind,
    sigma: f64,
    opts: SolverOptions,
}

impl PreimageSet {
    pub fn kind(&self) -> &PreimageKind {
        &self.kind
    }

    fn project_slice(&self, z: &[f64], out: &mut [f64]) {
        match &self.kind {
            PreimageKind::Polyhedral { rows } => {
                let n = z.len();
                let normals: Vec<Vec<f64>> = (0..rows.nrows())
                    .map(|i| (0..n).map(|j| rows[(i, j)]).collect())
                    .collect();
                let sq: Vec<f64> = normals.iter().map(|a| linalg::dot(a, a)).collect();
                let res = dykstra_slices(
                    normals.len(),
                    |i, p, o| {
                        o.copy_from_slice(p);
                        let t = linalg::dot(&normals[i], p);
                        if t < 0.0 && sq[i] > 0.0 {
                            let c = t / sq[i];
                            for (oi, ai) in o.iter_mut().zip(&normals[i]) {
                                *oi -= c * ai;
                            }
                        }
                    },
                    z,
                    self.opts.max_iters.max(20_000),
                    1e-13,
                );
                out.copy_from_slice(&res.point);
            }
            PreimageKind::Penalty => self.project_penalty(z, out),
        }
    }

    fn project_penalty(&self, z: &[f64], out: &mut [f64]) {
        let zv = DVector::from_column_slice(z);
        let mut mu = zv.clone();
        let m = self.g.nrows();
        let mut proj = vec![0.0; m];
        for &rho in &self.opts.penalty_schedule {
            let step = 1.0 / (1.0 + rho * self.sigma * self.sigma);
            for _ in 0..self.opts.max_iters {
                let gm = &self.g * &mu;
                self.l.project_slice(gm.as_slice(), &mut proj);
                let resid = gm - DVector::from_column_slice(&proj);
                let grad = (&mu - &zv) + self.g.transpose() * resid * rho;
                let gn = grad.norm();
                mu -= grad * step;
                if gn <= self.opts.tol * (1.0 + mu.norm()) {
                    break;
                }
            }
        }
        out.copy_from_slice(mu.as_slice());
    }
}

/// Result of projecting onto an image cone.
#[derive(Debug, Clone)]
pub struct ImageConeProjection {
    /// `G mu*`, the projection of `y` onto `GK`.
    pub point: DVector<f64>,
    /// The minimizer `mu*` in `K`.
    pub mu: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projects `y` onto `GK` by solving `min_{mu in K} |y - G mu|`.
///
/// Accelerated proximal gradient with step `1 / sigma_max(G)^2` and
/// function-value restarts. Stops when the optimality gap bound
/// `|<q, mu>| + |Π_K q| |mu|`, `q = G^T (y - G mu)`, drops below
/// `(opts.kkt_tol |y|)^2 / 2`, or after `opts.max_iters` iterations.
pub fn project_image_cone(
    g: &DMatrix<f64>,
    k: &ConeSpec,
    y: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<ImageConeProjection> {
    check_dim(k.ambient_dim(), g.ncols())?;
    check_dim(g.nrows(), y.len())?;
    if !linalg::all_finite(g.as_slice()) || !linalg::all_finite(y.as_slice()) {
        return Err(ConeError::NonFinite("image cone data"));
    }
    let s = sigma_max(g);
    let step = if s > 0.0 { 1.0 / (s * s * 1.01) } else { 1.0 };
    Ok(image_cone_lsq(g, k, y, step, None, opts))
}

pub(crate) fn image_cone_lsq(
    g: &DMatrix<f64>,
    k: &ConeSpec,
    y: &DVector<f64>,
    step: f64,
    warm: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> ImageConeProjection {
    let n = g.ncols();
    let gt = g.transpose();
    let mut mu = match warm {
        Some(w) => {
            let mut p = DVector::zeros(n);
            k.project_slice(w.as_slice(), p.as_mut_slice());
            p
        }
        None => DVector::zeros(n),
    };
    let mut z = mu.clone();
    let mut t = 1.0f64;
    let mut f_old = 0.5 * (g * &mu - y).norm_squared();
    // 2 * gap <= (kkt_tol |y|)^2 bounds the error of G mu by kkt_tol |y|
    let target = 0.5 * (opts.kkt_tol * y.norm()).powi(2);
    let mut converged = false;
    let mut iterations = opts.max_iters;
    let mut next = DVector::zeros(n);
    let mut kq = DVector::zeros(n);
    let mut plain = true;
    for it in 1..=opts.max_iters {
        let grad = &gt * (g * &z - y);
        let trial = &z - grad * step;
        k.project_slice(trial.as_slice(), next.as_mut_slice());
        let r = y - g * &next;
        let f_new = 0.5 * r.norm_squared();
        if f_new > f_old && !plain {
            // momentum overshoot: restart from the last accepted iterate
            t = 1.0;
            z.copy_from(&mu);
            plain = true;
            continue;
        }
        // a plain projected-gradient step is a descent step; an apparent
        // increase after a restart is rounding noise
        plain = false;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &mu) * ((t - 1.0) / t_next);
        t = t_next;
        mu.copy_from(&next);
        f_old = f_new;
        // f(mu) - f* <= |<q, mu>| + |Π_K q| |mu*| with q = G^T (y - G mu)
        let q = &gt * r;
        k.project_slice(q.as_slice(), kq.as_mut_slice());
        let gap = q.dot(&mu).abs() + kq.norm() * mu.norm();
        if gap <= target || f_new == 0.0 {
            converged = true;
            iterations = it;
            break;
        }
    }
    let point = g * &mu;
    let residual = (y - &point).norm();
    ImageConeProjection {
        point,
        mu,
        residual,
        iterations,
        converged,
    }
}

/// Oracle for `GK`. Subspace cones map to an exact subspace oracle; other
/// cones get an iterative [`ImageCone`] oracle.
pub fn image_cone(g: &DMatrix<f64>, k: &ConeSpec, opts: &SolverOptions) -> Result<ConvexSetOracle> {
    check_dim(k.ambient_dim(), g.ncols())?;
    if !linalg::all_finite(g.as_slice()) {
        return Err(ConeError::NonFinite("image cone matrix"));
    }
    let m = g.nrows();
    if let Some(sub) = k.as_subspace() {
        if sub.dim() == 0 {
            return Ok(ConvexSetOracle::Cone(ConeSpec::Trivial(m)));
        }
        let span = Subspace::span(&(g * sub.basis()))?;
        return Ok(ConvexSetOracle::Cone(subspace_cone(span)));
    }
    let s = sigma_max(g);
    let step = if s > 0.0 { 1.0 / (s * s * 1.01) } else { 1.0 };
    Ok(ConvexSetOracle::ImageCone(ImageCone {
        g: g.clone(),
        k: k.clone(),
        opts: opts.clone(),
        step,
    }))
}

fn subspace_cone(s: Subspace) -> ConeSpec {
    let d = s.ambient_dim();
    match s.dim() {
        0 => ConeSpec::Trivial(d),
        k if k == d => ConeSpec::Full(d),
        _ => ConeSpec::Subspace(s),
    }
}

/// Oracle for the preimage `G^{-1} L`.
///
/// Subspace `L` (including `{0}` and `R^m`) gives the exact null space of
/// `Π_{L⊥} G`; halfspaces map to a single halfspace; orthants become a
/// polyhedral set projected by Dykstra; anything else uses a penalty method.
pub fn preimage_oracle(g: &DMatrix<f64>, l: &ConeSpec, opts: &SolverOptions) -> Result<ConvexSetOracle> {
    check_dim(l.ambient_dim(), g.nrows())?;
    if !linalg::all_finite(g.as_slice()) {
        return Err(ConeError::NonFinite("preimage matrix"));
    }
    let n = g.ncols();
    if let Some(sub) = l.as_subspace() {
        let perp = sub.orthogonal().basis();
        if perp.ncols() == 0 {
            return Ok(ConvexSetOracle::Cone(ConeSpec::Full(n)));
        }
        let constraint = perp.transpose() * g;
        return Ok(ConvexSetOracle::Cone(subspace_cone(Subspace::null_space(&constraint)?)));
    }
    match l {
        ConeSpec::Halfspace(a) => {
            let normal = g.transpose() * a;
            if normal.norm() <= linalg::RANK_CUTOFF * (1.0 + g.norm()) {
                Ok(ConvexSetOracle::Cone(ConeSpec::Full(n)))
            } else {
                Ok(ConvexSetOracle::Cone(ConeSpec::halfspace(normal)?))
            }
        }
        ConeSpec::Ray(u) if g.nrows() == 1 => {
            let normal = g.transpose() * u;
            if normal.norm() <= linalg::RANK_CUTOFF * (1.0 + g.norm()) {
                Ok(ConvexSetOracle::Cone(ConeSpec::Full(n)))
            } else {
                Ok(ConvexSetOracle::Cone(ConeSpec::halfspace(normal)?))
            }
        }
        ConeSpec::Orthant(_) => polyhedral(g.clone(), g, l, opts),
        ConeSpec::Reflected(inner) if matches!(**inner, ConeSpec::Orthant(_)) => {
            polyhedral(-g.clone(), g, l, opts)
        }
        _ => Ok(ConvexSetOracle::PreimageSet(PreimageSet {
            g: g.clone(),
            l: l.clone(),
            kind: PreimageKind::Penalty,
            sigma: sigma_max(g),
            opts: opts.clone(),
        })),
    }
}

fn polyhedral(
    rows: DMatrix<f64>,
    g: &DMatrix<f64>,
    l: &ConeSpec,
    opts: &SolverOptions,
) -> Result<ConvexSetOracle> {
    if rows.nrows() == 1 {
        let normal = rows.row(0).transpose();
        if normal.norm() == 0.0 {
            return Ok(ConvexSetOracle::Cone(ConeSpec::Full(g.ncols())));
        }
        return Ok(ConvexSetOracle::Cone(ConeSpec::halfspace(normal)?));
    }
    Ok(ConvexSetOracle::PreimageSet(PreimageSet {
        g: g.clone(),
        l: l.clone(),
        kind: PreimageKind::Polyhedral { rows },
        sigma: sigma_max(g),
        opts: opts.clone(),
    }))
}

impl ConvexSetOracle {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(ConeError::invalid("dim", "ball dimension must be positive"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ConeError::invalid("radius", "radius must be positive and finite"));
        }
        Ok(ConvexSetOracle::Ball { dim, radius })
    }

    pub fn affine(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Ok(ConvexSetOracle::AffineSet(AffineSet::new(a, b)?))
    }

    pub fn halfspace_set(normal: DVector<f64>, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if n == 0.0 || !n.is_finite() || !offset.is_finite() {
            return Err(ConeError::invalid("normal", "normal must be nonzero and finite"));
        }
        Ok(ConvexSetOracle::HalfspaceSet {
            normal: normal / n,
            offset: offset / n,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ConvexSetOracle::Cone(c) => c.ambient_dim(),
            ConvexSetOracle::Ball { dim, .. } => *dim,
            ConvexSetOracle::AffineSet(a) => a.a.ncols(),
            ConvexSetOracle::HalfspaceSet { normal, .. } => normal.len(),
            ConvexSetOracle::ImageCone(ic) => ic.g.nrows(),
            ConvexSetOracle::PreimageSet(p) => p.g.ncols(),
        }
    }

    /// Whether the set is a cone (closed under nonnegative scaling).
    pub fn is_cone(&self) -> bool {
        match self {
            ConvexSetOracle::Cone(_) | ConvexSetOracle::ImageCone(_) | ConvexSetOracle::PreimageSet(_) => true,
            ConvexSetOracle::AffineSet(a) => a.b.iter().all(|x| *x == 0.0),
            ConvexSetOracle::HalfspaceSet { offset, .. } => *offset == 0.0,
            ConvexSetOracle::Ball { .. } => false,
        }
    }

    /// The underlying subspace when the set is an exact linear subspace.
    pub fn as_subspace(&self) -> Option<Subspace> {
        match self {
            ConvexSetOracle::Cone(c) => c.as_subspace(),
            _ => None,
        }
    }

    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.ambient_dim(), v.len())?;
        if !linalg::all_finite(v.as_slice()) {
            return Err(ConeError::NonFinite("projection input"));
        }
        let mut out = DVector::zeros(v.len());
        self.project_slice(v.as_slice(), out.as_mut_slice());
        if !linalg::all_finite(out.as_slice()) {
            return Err(ConeError::NonFinite("projection output"));
        }
        Ok(out)
    }

    pub(crate) fn project_slice(&self, v: &[f64], out: &mut [f64]) {
        match self {
            ConvexSetOracle::Cone(c) => c.project_slice(v, out),
            ConvexSetOracle::Ball { radius, .. } => {
                let n = linalg::norm(v);
                let s = if n > *radius { radius / n } else { 1.0 };
                for (o, x) in out.iter_mut().zip(v) {
                    *o = s * x;
                }
            }
            ConvexSetOracle::AffineSet(a) => a.project_slice(v, out),
            ConvexSetOracle::HalfspaceSet { normal, offset } => {
                let t = linalg::dot(normal.as_slice(), v) - offset;
                out.copy_from_slice(v);
                if t < 0.0 {
                    for (o, a) in out.iter_mut().zip(normal.iter()) {
                        *o -= t * a;
                    }
                }
            }
            ConvexSetOracle::ImageCone(ic) => {
                let y = DVector::from_column_slice(v);
                let res = image_cone_lsq(&ic.g, &ic.k, &y, ic.step, None, &ic.opts);
                out.copy_from_slice(res.point.as_slice());
            }
            ConvexSetOracle::PreimageSet(p) => p.project_slice(v, out),
        }
    }

    pub fn distance(&self, v: &DVector<f64>) -> Result<f64> {
        Ok((v - self.project(v)?).norm())
    }
}
