//! Text grammar for cones and vectors.
//!
//! ```text
//! orthant:<d>  full:<d>  trivial:<d>  soc:<d>  circ:<d>:<alpha>
//! subspace:<d>:<k>          random k-dim subspace drawn from a named stream
//! prod:(<spec>,<spec>,...)  polar:(<spec>)  restrict:(<spec>,<x-spec>)
//! ```
//!
//! Vectors: `e<i>` (1-based), `ones`, `neg-ones`, or a comma list.

use nalgebra::DVector;

use super::ConeSpec;
use crate::error::{ConeError, Result};
use crate::rng::{derive_stream, tags};

/// Seed material for random pieces of a cone description.
#[derive(Debug, Clone)]
pub struct ParseContext {
    pub seed: u64,
    pub index: u64,
    drawn: u64,
}

impl ParseContext {
    pub fn new(seed: u64, index: u64) -> Self {
        ParseContext { seed, index, drawn: 0 }
    }
}

fn parse_usize(s: &str, whole: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| ConeError::parse(whole, format!("`{s}` is not a nonnegative integer")))
}

fn parse_f64(s: &str, whole: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| ConeError::parse(whole, format!("`{s}` is not a number")))
}

/// Splits on commas that are not nested inside parentheses.
fn split_top_level(s: &str) -> Result<Vec<&str>> {
    let mut depth = 0i32;
    let mut parts = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(ConeError::parse(s, "unbalanced parentheses"));
                }
            }
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(ConeError::parse(s, "unbalanced parentheses"));
    }
    parts.push(&s[start..]);
    Ok(parts)
}

fn strip_parens<'a>(s: &'a str, whole: &str) -> Result<&'a str> {
    let s = s.trim();
    s.strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| ConeError::parse(whole, "expected a parenthesized argument list"))
}

/// Parses a cone description.
pub fn parse_cone(spec: &str, ctx: &mut ParseContext) -> Result<ConeSpec> {
    let spec = spec.trim();
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| ConeError::parse(spec, "expected `<kind>:<args>`"))?;
    let dim = |s: &str| -> Result<usize> {
        let d = parse_usize(s, spec)?;
        if d == 0 {
            Err(ConeError::invalid("d", format!("ambient dimension must be at least 1 in `{spec}`")))
        } else {
            Ok(d)
        }
    };
    match kind.trim() {
        "orthant" => ConeSpec::orthant(dim(rest)?),
        "full" => ConeSpec::full(dim(rest)?),
        "trivial" => ConeSpec::trivial(dim(rest)?),
        "soc" => ConeSpec::second_order(dim(rest)?),
        "circ" => {
            let (d, a) = rest
                .split_once(':')
                .ok_or_else(|| ConeError::parse(spec, "expected `circ:<d>:<alpha>`"))?;
            ConeSpec::circular(dim(d)?, parse_f64(a, spec)?)
        }
        "subspace" => {
            let (d, k) = rest
                .split_once(':')
                .ok_or_else(|| ConeError::parse(spec, "expected `subspace:<d>:<k>`"))?;
            let d = dim(d)?;
            let k = parse_usize(k, spec)?;
            if k > d {
                return Err(ConeError::invalid("k", format!("{k} exceeds ambient dimension {d}")));
            }
            if k == 0 {
                return ConeSpec::trivial(d);
            }
            let mut stream = derive_stream(ctx.seed, tags::CONE_BUILD, ctx.index).child(ctx.drawn);
            ctx.drawn += 1;
            let basis = stream.gaussian_matrix(d, k)?;
            ConeSpec::subspace(&basis)
        }
        "prod" => {
            let inner = strip_parens(rest, spec)?;
            let parts = split_top_level(inner)?
                .into_iter()
                .map(|p| parse_cone(p, ctx))
                .collect::<Result<Vec<_>>>()?;
            ConeSpec::product(parts)
        }
        "polar" => {
            let inner = strip_parens(rest, spec)?;
            Ok(parse_cone(inner, ctx)?.polar())
        }
        "restrict" => {
            let inner = strip_parens(rest, spec)?;
            let parts = split_top_level(inner)?;
            if parts.len() < 2 {
                return Err(ConeError::parse(spec, "expected `restrict:(<spec>,<x-spec>)`"));
            }
            let cone = parse_cone(parts[0], ctx)?;
            let xs = parts[1..].join(",");
            let x = parse_vector(&xs, cone.ambient_dim())?;
            let n = x.norm();
            if n == 0.0 {
                return Err(ConeError::invalid("x", "restriction direction must be nonzero"));
            }
            ConeSpec::restricted(cone, x / n)
        }
        other => Err(ConeError::parse(spec, format!("unknown cone kind `{other}`"))),
    }
}

/// Parses a vector description of length `d`.
pub fn parse_vector(spec: &str, d: usize) -> Result<DVector<f64>> {
    let s = spec.trim();
    if d == 0 {
        return Err(ConeError::invalid("d", "vector length must be positive"));
    }
    match s {
        "ones" => return Ok(DVector::from_element(d, 1.0)),
        "neg-ones" => return Ok(DVector::from_element(d, -1.0)),
        "zero" | "zeros" => return Ok(DVector::zeros(d)),
        _ => {}
    }
    if let Some(idx) = s.strip_prefix('e') {
        if let Ok(i) = idx.parse::<usize>() {
            if i == 0 || i > d {
                return Err(ConeError::invalid("x", format!("basis index {i} outside 1..={d}")));
            }
            let mut v = DVector::zeros(d);
            v[i - 1] = 1.0;
            return Ok(v);
        }
    }
    let vals = s
        .split(',')
        .map(|t| parse_f64(t, spec))
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != d {
        return Err(ConeError::DimensionMismatch {
            expected: d,
            got: vals.len(),
        });
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(ConeError::NonFinite("vector literal"));
    }
    Ok(DVector::from_vec(vals))
}
