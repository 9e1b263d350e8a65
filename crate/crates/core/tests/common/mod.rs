//! Independent oracles shared by the acceptance run.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use conelab::cone::Subspace;
use conelab::{ConeSpec, ConvexSetOracle, RngStream};
use nalgebra::{DMatrix, DVector};

/// Minimum of a convex function on `[lo, hi]`: log-spaced scan followed by
/// golden-section refinement around the best scan point.
pub fn grid_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mut pts = vec![lo];
    let n = 6000;
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

/// Direct (cancellation-prone) forms of the two scalar objectives.
pub fn p_naive(a1: f64, a2: f64, a3: f64, b: f64) -> f64 {
    -a1 * b + a3 * (b * b + 2.0 * a2 * b + 1.0).sqrt()
}

pub fn q_naive(a1: f64, a2: f64, b: f64) -> f64 {
    a1 * b - a2 * (b * b - 1.0).sqrt()
}

/// A pair of cones in `R^2` or `R^3` whose intersection is decided
/// analytically. `margin > 0` means nontrivial; `|margin|` is the angular
/// distance to the boundary case.
pub struct ConePair {
    pub label: &'static str,
    pub a: ConvexSetOracle,
    pub b: ConvexSetOracle,
    pub dim: usize,
    pub margin: f64,
}

fn angle(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (u.dot(v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
}

/// Angular distance from unit `u` to the nonnegative orthant.
fn orthant_gap(u: &DVector<f64>) -> f64 {
    let plus = u.map(|x| x.max(0.0)).norm();
    if plus > 0.0 {
        plus.min(1.0).acos()
    } else {
        u.max().clamp(-1.0, 1.0).acos()
    }
}

/// Cap of directions within `alpha` of `axis`: a ray, circular cone or
/// halfspace depending on `alpha`.
fn cap(axis: &DVector<f64>, alpha: f64) -> ConeSpec {
    if alpha == 0.0 {
        ConeSpec::ray(axis.clone()).unwrap()
    } else if alpha == FRAC_PI_2 {
        ConeSpec::halfspace(axis.clone()).unwrap()
    } else {
        ConeSpec::circular_about(axis.clone(), alpha).unwrap()
    }
}

fn half_angle(s: &mut RngStream) -> f64 {
    match (s.uniform() * 4.0) as usize {
        0 => 0.0,
        1 => FRAC_PI_2,
        _ => s.uniform_in(0.05, 1.4),
    }
}

fn planar(theta: f64) -> DVector<f64> {
    DVector::from_vec(vec![theta.cos(), theta.sin()])
}

/// Draws a random pair from a fixed menu of shapes.
pub fn random_pair(s: &mut RngStream) -> ConePair {
    let kind = (s.uniform() * 6.0) as usize;
    let cone = ConvexSetOracle::Cone;
    match kind {
        0 => {
            // two arcs of the circle (rays, sectors, half-planes)
            let (t1, t2) = (s.uniform_in(0.0, 2.0 * PI), s.uniform_in(0.0, 2.0 * PI));
            let (a1, a2) = (half_angle(s), half_angle(s));
            let (u, v) = (planar(t1), planar(t2));
            ConePair {
                label: "arc/arc",
                margin: a1 + a2 - angle(&u, &v),
                a: cone(cap(&u, a1)),
                b: cone(cap(&v, a2)),
                dim: 2,
            }
        }
        1 => {
            // line vs quadrant in the plane
            let t = s.uniform_in(0.0, PI);
            let u = planar(t);
            let centre = planar(FRAC_PI_4);
            let gap = angle(&u, &centre).min(angle(&(-&u), &centre));
            let line = Subspace::span(&DMatrix::from_column_slice(2, 1, u.as_slice())).unwrap();
            ConePair {
                label: "line/quadrant",
                margin: FRAC_PI_4 - gap,
                a: cone(ConeSpec::Subspace(line)),
                b: cone(ConeSpec::orthant(2).unwrap()),
                dim: 2,
            }
        }
        2 => {
            let (u, v) = (s.unit_vector(3).unwrap(), s.unit_vector(3).unwrap());
            let (a1, a2) = (half_angle(s), s.uniform_in(0.05, 1.4));
            ConePair {
                label: "cap/circular",
                margin: a1 + a2 - angle(&u, &v),
                a: cone(cap(&u, a1)),
                b: cone(cap(&v, a2)),
                dim: 3,
            }
        }
        3 => {
            // plane through the origin vs circular cone
            let (nu, u) = (s.unit_vector(3).unwrap(), s.unit_vector(3).unwrap());
            let alpha = s.uniform_in(0.05, 1.4);
            let plane = Subspace::complement_of(&DMatrix::from_column_slice(3, 1, nu.as_slice())).unwrap();
            ConePair {
                label: "plane/circular",
                margin: alpha - (FRAC_PI_2 - angle(&u, &nu)).abs(),
                a: cone(ConeSpec::Subspace(plane)),
                b: cone(cap(&u, alpha)),
                dim: 3,
            }
        }
        4 => {
            let u = s.unit_vector(3).unwrap();
            let alpha = if s.uniform() < 0.3 { 0.0 } else { s.uniform_in(0.05, 1.4) };
            ConePair {
                label: "orthant/cap",
                margin: alpha - orthant_gap(&u),
                a: cone(ConeSpec::orthant(3).unwrap()),
                b: cone(cap(&u, alpha)),
                dim: 3,
            }
        }
        _ => {
            // polar of the orthant (the negative orthant) vs a cap
            let u = s.unit_vector(3).unwrap();
            let alpha = s.uniform_in(0.05, 1.4);
            ConePair {
                label: "polar-orthant/cap",
                margin: alpha - orthant_gap(&(-&u)),
                a: cone(ConeSpec::orthant(3).unwrap().polar()),
                b: cone(cap(&u, alpha)),
                dim: 3,
            }
        }
    }
}

/// Median of a sample (sorted copy).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
