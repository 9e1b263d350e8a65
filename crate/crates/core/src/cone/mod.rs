//! Closed convex cones and their metric projections.
//!
//! [`ConeSpec`] is a symbolic cone. Every variant except [`ConeSpec::Restricted`]
//! (and polars wrapping it) has a closed-form projection; restricted cones
//! `K ∩ {<x, mu> >= 0}` are projected by a one-dimensional multiplier search,
//! with Dykstra's algorithm as the fallback.

mod oracle;
mod parse;

pub use oracle::{
    image_cone, preimage_oracle, project_image_cone, ConvexSetOracle, ImageConeProjection,
    PreimageKind,
};
pub use parse::{parse_cone, parse_vector, ParseContext};

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, ConeError, Result};
use crate::linalg::{self, complement_basis, orthonormal_basis};
use crate::solver::dykstra::dykstra_slices;

/// Linear subspace of `R^d`, stored by an orthonormal basis of either the
/// subspace itself or its orthogonal complement (whichever is smaller).
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    ambient: usize,
    basis: DMatrix<f64>,
    complement: bool,
}

impl Subspace {
    /// Span of the columns of `a`; the columns are orthonormalized.
    pub fn span(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 {
            return Err(ConeError::invalid("basis", "ambient dimension must be positive"));
        }
        if !linalg::all_finite(a.as_slice()) {
            return Err(ConeError::NonFinite("subspace basis"));
        }
        Ok(Self::from_orthonormal(orthonormal_basis(a), false))
    }

    /// Orthogonal complement of the span of the columns of `a`.
    pub fn complement_of(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 {
            return Err(ConeError::invalid("basis", "ambient dimension must be positive"));
        }
        if !linalg::all_finite(a.as_slice()) {
            return Err(ConeError::NonFinite("subspace basis"));
        }
        Ok(Self::from_orthonormal(orthonormal_basis(a), true))
    }

    /// Null space of `g` (`m x n`), i.e. the complement of its row space.
    pub fn null_space(g: &DMatrix<f64>) -> Result<Self> {
        Self::complement_of(&g.transpose())
    }

    fn from_orthonormal(q: DMatrix<f64>, complement: bool) -> Self {
        let mut s = Subspace {
            ambient: q.nrows(),
            basis: q,
            complement,
        };
        // keep whichever representation has fewer columns
        if s.basis.ncols() * 2 > s.ambient {
            s.basis = complement_basis(&s.basis);
            s.complement = !s.complement;
        }
        s
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        if self.complement {
            self.ambient - self.basis.ncols()
        } else {
            self.basis.ncols()
        }
    }

    /// Explicit orthonormal basis (`d x dim`) of the subspace.
    pub fn basis(&self) -> DMatrix<f64> {
        if self.complement {
            complement_basis(&self.basis)
        } else {
            self.basis.clone()
        }
    }

    /// The orthogonal complement.
    pub fn orthogonal(&self) -> Subspace {
        Subspace {
            ambient: self.ambient,
            basis: self.basis.clone(),
            complement: !self.complement,
        }
    }

    fn project_slice(&self, v: &[f64], out: &mut [f64]) {
        let d = self.ambient;
        let q = self.basis.as_slice();
        if self.complement {
            out.copy_from_slice(v);
        } else {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
        let sign = if self.complement { -1.0 } else { 1.0 };
        for col in q.chunks_exact(d) {
            let c = sign * linalg::dot(col, v);
            for (o, qi) in out.iter_mut().zip(col) {
                *o += c * qi;
            }
        }
    }
}

/// Circular (ice-cream) cone `{mu : <mu, axis> >= |mu| cos(alpha)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Circular {
    axis: DVector<f64>,
    alpha: f64,
}

impl Circular {
    pub fn new(axis: DVector<f64>, alpha: f64) -> Result<Self> {
        if axis.is_empty() {
            return Err(ConeError::invalid("d", "dimension must be positive"));
        }
        if !(alpha > 0.0 && alpha < FRAC_PI_2) {
            return Err(ConeError::invalid("alpha", format!("{alpha} is not in (0, pi/2)")));
        }
        let n = axis.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(ConeError::invalid("axis", "axis must be a nonzero finite vector"));
        }
        Ok(Circular {
            axis: axis / n,
            alpha,
        })
    }

    pub fn axis(&self) -> &DVector<f64> {
        &self.axis
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn project_slice(&self, v: &[f64], out: &mut [f64]) {
        project_circular(self.axis.as_slice(), self.alpha.cos(), self.alpha.sin(), v, out);
    }
}

fn project_circular(axis: &[f64], cos_a: f64, sin_a: f64, v: &[f64], out: &mut [f64]) {
    let t = linalg::dot(axis, v);
    let r2: f64 = v
        .iter()
        .zip(axis)
        .map(|(vi, ai)| {
            let w = vi - t * ai;
            w * w
        })
        .sum();
    let r = r2.max(0.0).sqrt();
    if r * cos_a <= t * sin_a {
        out.copy_from_slice(v);
    } else if r * sin_a <= -t * cos_a {
        out.iter_mut().for_each(|o| *o = 0.0);
    } else {
        // nearest point lies on the boundary ray in the plane of v and the axis
        let scale = t * cos_a + r * sin_a;
        for ((o, vi), ai) in out.iter_mut().zip(v).zip(axis) {
            let w = (vi - t * ai) / r;
            *o = scale * (cos_a * ai + sin_a * w);
        }
    }
}

/// Symbolic description of a closed convex cone.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeSpec {
    /// `{0}` in `R^d`.
    Trivial(usize),
    /// `R^d`.
    Full(usize),
    /// Nonnegative orthant.
    Orthant(usize),
    Subspace(Subspace),
    /// `{(z, t) in R^{d-1} x R : |z| <= t}`.
    SecondOrder(usize),
    Circular(Circular),
    /// `{mu : <normal, mu> >= 0}` with a unit normal.
    Halfspace(DVector<f64>),
    /// `{t u : t >= 0}` with a unit direction.
    Ray(DVector<f64>),
    Product(Vec<ConeSpec>),
    /// Lazy polar, projected through the Moreau identity.
    Polar(Box<ConeSpec>),
    /// Reflection `-K`.
    Reflected(Box<ConeSpec>),
    /// `K ∩ {mu : <x, mu> >= 0}` with unit `x`.
    Restricted { inner: Box<ConeSpec>, x: DVector<f64> },
}

fn unit(v: DVector<f64>, field: &str) -> Result<DVector<f64>> {
    if v.is_empty() {
        return Err(ConeError::invalid(field, "dimension must be positive"));
    }
    if !linalg::all_finite(v.as_slice()) {
        return Err(ConeError::NonFinite("cone direction"));
    }
    let n = v.norm();
    if n == 0.0 {
        return Err(ConeError::invalid(field, "direction must be nonzero"));
    }
    Ok(v / n)
}

fn positive(d: usize) -> Result<usize> {
    if d == 0 {
        Err(ConeError::invalid("d", "ambient dimension must be at least 1"))
    } else {
        Ok(d)
    }
}

impl ConeSpec {
    pub fn trivial(d: usize) -> Result<Self> {
        Ok(ConeSpec::Trivial(positive(d)?))
    }

    pub fn full(d: usize) -> Result<Self> {
        Ok(ConeSpec::Full(positive(d)?))
    }

    pub fn orthant(d: usize) -> Result<Self> {
        Ok(ConeSpec::Orthant(positive(d)?))
    }

    pub fn second_order(d: usize) -> Result<Self> {
        Ok(ConeSpec::SecondOrder(positive(d)?))
    }

    /// Circular cone of half-angle `alpha` about `e_1`.
    pub fn circular(d: usize, alpha: f64) -> Result<Self> {
        let mut axis = DVector::zeros(positive(d)?);
        axis[0] = 1.0;
        Ok(ConeSpec::Circular(Circular::new(axis, alpha)?))
    }

    pub fn circular_about(axis: DVector<f64>, alpha: f64) -> Result<Self> {
        Ok(ConeSpec::Circular(Circular::new(axis, alpha)?))
    }

    /// Span of the columns of `basis`.
    pub fn subspace(basis: &DMatrix<f64>) -> Result<Self> {
        Ok(ConeSpec::Subspace(Subspace::span(basis)?))
    }

    /// Span of the first `k` standard basis vectors of `R^d`.
    pub fn coordinate_subspace(d: usize, k: usize) -> Result<Self> {
        positive(d)?;
        if k > d {
            return Err(ConeError::invalid("k", format!("{k} exceeds ambient dimension {d}")));
        }
        Ok(ConeSpec::Subspace(Subspace::span(&DMatrix::identity(d, k))?))
    }

    pub fn halfspace(normal: DVector<f64>) -> Result<Self> {
        Ok(ConeSpec::Halfspace(unit(normal, "normal")?))
    }

    pub fn ray(direction: DVector<f64>) -> Result<Self> {
        Ok(ConeSpec::Ray(unit(direction, "direction")?))
    }

    pub fn product(parts: Vec<ConeSpec>) -> Result<Self> {
        if parts.is_empty() {
            return Err(ConeError::invalid("prod", "product needs at least one factor"));
        }
        Ok(ConeSpec::Product(parts))
    }

    /// `K_x = K ∩ {mu : <x, mu> >= 0}`; `x` must be a unit vector.
    pub fn restricted(inner: ConeSpec, x: DVector<f64>) -> Result<Self> {
        check_dim(inner.ambient_dim(), x.len())?;
        if !linalg::all_finite(x.as_slice()) {
            return Err(ConeError::NonFinite("restriction direction"));
        }
        if (x.norm() - 1.0).abs() > 1e-10 {
            return Err(ConeError::invalid("x", format!("norm {} is not 1", x.norm())));
        }
        Ok(ConeSpec::Restricted {
            inner: Box::new(inner),
            x,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ConeSpec::Trivial(d) | ConeSpec::Full(d) | ConeSpec::Orthant(d) | ConeSpec::SecondOrder(d) => *d,
            ConeSpec::Subspace(s) => s.ambient_dim(),
            ConeSpec::Circular(c) => c.axis.len(),
            ConeSpec::Halfspace(v) | ConeSpec::Ray(v) => v.len(),
            ConeSpec::Product(parts) => parts.iter().map(ConeSpec::ambient_dim).sum(),
            ConeSpec::Polar(inner) | ConeSpec::Reflected(inner) => inner.ambient_dim(),
            ConeSpec::Restricted { inner, .. } => inner.ambient_dim(),
        }
    }

    /// True when the projection is a closed form (no inner iteration).
    pub fn has_exact_projection(&self) -> bool {
        match self {
            ConeSpec::Restricted { .. } => false,
            ConeSpec::Product(parts) => parts.iter().all(ConeSpec::has_exact_projection),
            ConeSpec::Polar(inner) | ConeSpec::Reflected(inner) => inner.has_exact_projection(),
            _ => true,
        }
    }

    /// `Some(subspace)` when the cone is a linear subspace (including
    /// `{0}` and `R^d`).
    pub fn as_subspace(&self) -> Option<Subspace> {
        match self {
            ConeSpec::Trivial(d) => Some(Subspace::from_orthonormal(DMatrix::zeros(*d, 0), false)),
            ConeSpec::Full(d) => Some(Subspace::from_orthonormal(DMatrix::zeros(*d, 0), true)),
            ConeSpec::Subspace(s) => Some(s.clone()),
            ConeSpec::Polar(inner) => inner.as_subspace().map(|s| s.orthogonal()),
            ConeSpec::Reflected(inner) => inner.as_subspace(),
            ConeSpec::Product(parts) => {
                let subs: Option<Vec<Subspace>> = parts.iter().map(ConeSpec::as_subspace).collect();
                let subs = subs?;
                let d: usize = subs.iter().map(Subspace::ambient_dim).sum();
                let k: usize = subs.iter().map(Subspace::dim).sum();
                let mut basis = DMatrix::zeros(d, k);
                let (mut row, mut col) = (0, 0);
                for s in &subs {
                    let b = s.basis();
                    basis
                        .view_mut((row, col), (b.nrows(), b.ncols()))
                        .copy_from(&b);
                    row += b.nrows();
                    col += b.ncols();
                }
                Some(Subspace::from_orthonormal(basis, false))
            }
            _ => None,
        }
    }

    /// Euclidean projection onto the cone.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.ambient_dim(), v.len())?;
        if !linalg::all_finite(v.as_slice()) {
            return Err(ConeError::NonFinite("projection input"));
        }
        let mut out = DVector::zeros(v.len());
        self.project_slice(v.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Slice-level projection; dimensions must already agree.
    pub(crate) fn project_slice(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), out.len());
        match self {
            ConeSpec::Trivial(_) => out.iter_mut().for_each(|o| *o = 0.0),
            ConeSpec::Full(_) => out.copy_from_slice(v),
            ConeSpec::Orthant(_) => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o = x.max(0.0);
                }
            }
            ConeSpec::Subspace(s) => s.project_slice(v, out),
            ConeSpec::SecondOrder(d) => {
                let t = v[d - 1];
                let s = linalg::norm(&v[..d - 1]);
                if s <= t {
                    out.copy_from_slice(v);
                } else if s <= -t {
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    let a = 0.5 * (s + t);
                    for (o, z) in out[..d - 1].iter_mut().zip(&v[..d - 1]) {
                        *o = a * z / s;
                    }
                    out[d - 1] = a;
                }
            }
            ConeSpec::Circular(c) => c.project_slice(v, out),
            ConeSpec::Halfspace(nrm) => {
                let t = linalg::dot(nrm.as_slice(), v);
                out.copy_from_slice(v);
                if t < 0.0 {
                    for (o, a) in out.iter_mut().zip(nrm.iter()) {
                        *o -= t * a;
                    }
                }
            }
            ConeSpec::Ray(u) => {
                let t = linalg::dot(u.as_slice(), v).max(0.0);
                for (o, a) in out.iter_mut().zip(u.iter()) {
                    *o = t * a;
                }
            }
            ConeSpec::Product(parts) => {
                let mut off = 0;
                for p in parts {
                    let d = p.ambient_dim();
                    p.project_slice(&v[off..off + d], &mut out[off..off + d]);
                    off += d;
                }
            }
            ConeSpec::Polar(inner) => {
                inner.project_slice(v, out);
                for (o, x) in out.iter_mut().zip(v) {
                    *o = x - *o;
                }
            }
            ConeSpec::Reflected(inner) => {
                let neg: Vec<f64> = v.iter().map(|x| -x).collect();
                inner.project_slice(&neg, out);
                out.iter_mut().for_each(|o| *o = -*o);
            }
            ConeSpec::Restricted { inner, x } => project_restricted(inner, x.as_slice(), v, out),
        }
    }

    /// The polar cone, in closed form where one is known.
    pub fn polar(&self) -> ConeSpec {
        match self {
            ConeSpec::Trivial(d) => ConeSpec::Full(*d),
            ConeSpec::Full(d) => ConeSpec::Trivial(*d),
            ConeSpec::Orthant(_) | ConeSpec::SecondOrder(_) => ConeSpec::Reflected(Box::new(self.clone())),
            ConeSpec::Subspace(s) => ConeSpec::Subspace(s.orthogonal()),
            ConeSpec::Circular(c) => ConeSpec::Circular(Circular {
                axis: -c.axis.clone(),
                alpha: FRAC_PI_2 - c.alpha,
            }),
            ConeSpec::Halfspace(nrm) => ConeSpec::Ray(-nrm.clone()),
            ConeSpec::Ray(u) => ConeSpec::Halfspace(-u.clone()),
            ConeSpec::Product(parts) => ConeSpec::Product(parts.iter().map(ConeSpec::polar).collect()),
            ConeSpec::Polar(inner) => (**inner).clone(),
            ConeSpec::Reflected(inner) => ConeSpec::Reflected(Box::new(inner.polar())),
            ConeSpec::Restricted { .. } => ConeSpec::Polar(Box::new(self.clone())),
        }
    }

    /// Orthogonal decomposition `v = Π_K(v) + Π_{K°}(v)`.
    pub fn moreau_decompose(&self, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let vk = self.project(v)?;
        let vp = self.polar().project(v)?;
        Ok((vk, vp))
    }

    /// `true` iff `|v - Π_K(v)| <= tol (1 + |v|)`.
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> Result<bool> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(ConeError::invalid("tol", "tolerance must be positive"));
        }
        let p = self.project(v)?;
        Ok((v - p).norm() <= tol * (1.0 + v.norm()))
    }

    /// Distance from `v` to the cone.
    pub fn distance(&self, v: &DVector<f64>) -> Result<f64> {
        Ok((v - self.project(v)?).norm())
    }
}

/// Named cones in `R^d` (`d >= 4`) covering every variant, used by the
/// invariant suites. Random pieces come from `seed`.
pub fn catalog(d: usize, seed: u64) -> Result<Vec<(String, ConeSpec)>> {
    if d < 4 {
        return Err(ConeError::invalid("d", "catalog needs d >= 4"));
    }
    let alt: Vec<String> = (0..d)
        .map(|i| if i % 2 == 0 { "1".into() } else { "-0.5".into() })
        .collect();
    let alt = alt.join(",");
    let h = d / 2;
    let specs = vec![
        format!("trivial:{d}"),
        format!("full:{d}"),
        format!("orthant:{d}"),
        format!("soc:{d}"),
        format!("circ:{d}:0.3"),
        format!("circ:{d}:1.2"),
        format!("subspace:{d}:{h}"),
        format!("polar:(orthant:{d})"),
        format!("polar:(circ:{d}:0.7)"),
        format!("prod:(orthant:{h},soc:{})", d - h),
        format!("prod:(subspace:{h}:1,circ:{}:0.5)", d - h),
        format!("restrict:(orthant:{d},{alt})"),
        format!("restrict:(soc:{d},e1)"),
        format!("restrict:(circ:{d}:0.9,neg-ones)"),
        format!("restrict:(subspace:{d}:{h},ones)"),
        format!("polar:(restrict:(full:{d},e2))"),
    ];
    let mut ctx = ParseContext::new(seed, 0);
    let mut out = Vec::with_capacity(specs.len() + 2);
    for s in specs {
        let c = parse_cone(&s, &mut ctx)?;
        out.push((s, c));
    }
    let mut u = DVector::from_element(d, 1.0);
    u[0] = -2.0;
    out.push(("halfspace".into(), ConeSpec::halfspace(u.clone())?));
    out.push(("ray".into(), ConeSpec::ray(u)?));
    Ok(out)
}

/// Projection onto `K ∩ {<x, mu> >= 0}`.
///
/// The minimizer is `Π_K(v + λ x)` for the smallest `λ >= 0` with
/// `<x, Π_K(v + λ x)> >= 0`; the map `λ -> <x, Π_K(v + λ x)>` is
/// nondecreasing, so `λ` is found by bracketing and bisection.
fn project_restricted(inner: &ConeSpec, x: &[f64], v: &[f64], out: &mut [f64]) {
    inner.project_slice(v, out);
    if linalg::dot(x, out) >= 0.0 {
        return;
    }
    let n = v.len();
    let mut shifted = vec![0.0; n];
    let mut eval = |lambda: f64, out: &mut [f64]| {
        for ((s, vi), xi) in shifted.iter_mut().zip(v).zip(x) {
            *s = vi + lambda * xi;
        }
        inner.project_slice(&shifted, out);
        linalg::dot(x, out)
    };
    let mut lo = 0.0;
    let mut hi = linalg::norm(v).max(1e-300);
    let mut found = false;
    for _ in 0..80 {
        if eval(hi, out) >= 0.0 {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        // x lies in the polar of K; fall back to Dykstra on {K, halfspace}
        let hs = ConeSpec::Halfspace(DVector::from_column_slice(x));
        let res = dykstra_slices(
            2,
            |i, p, o| if i == 0 { inner.project_slice(p, o) } else { hs.project_slice(p, o) },
            v,
            20_000,
            1e-13,
        );
        out.copy_from_slice(&res.point);
        return;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid, out) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    eval(hi, out);
}
