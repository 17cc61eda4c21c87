use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::blockla::BlockVec;
use crate::error::{Error, Result};

/// How an unconstrained iterate is returned to the manifold `E = a c T⁴`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    None,
    #[default]
    Orthogonal,
    ECoordinate,
}

impl std::str::FromStr for Projection {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Projection::None),
            "orthogonal" => Ok(Projection::Orthogonal),
            "e-coordinate" => Ok(Projection::ECoordinate),
            other => Err(format!("unknown projection '{other}' (expected none, orthogonal or e-coordinate)")),
        }
    }
}

impl std::fmt::Display for Projection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Projection::None => "none",
            Projection::Orthogonal => "orthogonal",
            Projection::ECoordinate => "e-coordinate",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Projected {
    pub state: BlockVec,
    /// Per-component multipliers (zero for the coordinate projection).
    pub multipliers: DVector<f64>,
}

/// `Φ(E, T) = E - a c T⁴`
pub fn constraint(ac: f64, e: f64, t: f64) -> f64 {
    e - ac * t.powi(4)
}

/// Moves each `(E_i, T_i)` along `-∇Φ` evaluated at the unconstrained point,
/// `(E', T') = (E - λ, T + λ 4 a c T³)`, with `λ` chosen so that `Φ(E', T') = 0`.
pub fn project_orthogonal(ac: f64, u: &BlockVec) -> Result<Projected> {
    check_pairs(u)?;
    let n = u.x.len();
    let mut state = u.clone();
    let mut multipliers = DVector::zeros(n);
    for i in 0..n {
        let (e, t) = (u.x[i], u.y[i]);
        let lambda = solve_multiplier(ac, e, t).map_err(|reason| Error::Projection { component: i, reason })?;
        let g = 4.0 * ac * t.powi(3);
        state.x[i] = e - lambda;
        state.y[i] = t + g * lambda;
        multipliers[i] = lambda;
        let residual = constraint(ac, state.x[i], state.y[i]);
        if residual.abs() > 1e-10 * (1.0 + state.x[i].abs()) {
            return Err(Error::Projection { component: i, reason: format!("constraint residual {residual:e}") });
        }
    }
    Ok(Projected { state, multipliers })
}

/// Keeps `T` and sets `E = a c T⁴`.
pub fn project_e_coordinate(ac: f64, u: &BlockVec) -> Result<Projected> {
    check_pairs(u)?;
    let mut state = u.clone();
    for i in 0..u.y.len() {
        let t = u.y[i];
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Projection { component: i, reason: format!("temperature {t} is not positive") });
        }
        state.x[i] = ac * t.powi(4);
    }
    Ok(Projected { state, multipliers: DVector::zeros(u.x.len()) })
}

pub fn project(kind: Projection, ac: f64, u: &BlockVec) -> Result<Projected> {
    match kind {
        Projection::None => Ok(Projected { state: u.clone(), multipliers: DVector::zeros(u.x.len()) }),
        Projection::Orthogonal => project_orthogonal(ac, u),
        Projection::ECoordinate => project_e_coordinate(ac, u),
    }
}

fn check_pairs(u: &BlockVec) -> Result<()> {
    if u.x.len() != u.y.len() {
        return Err(Error::Shape(format!("E block has {} entries, T block {}", u.x.len(), u.y.len())));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("unconstrained iterate".into()));
    }
    Ok(())
}

/// Root of `φ(λ) = E - λ - a c (T + g λ)⁴`, `g = 4 a c T³`, closest to zero.
///
/// `φ` is concave with `φ'(0) = -1 - g² < 0`, so for `φ(0) > 0` the root lies
/// at positive `λ` and the bracket is grown geometrically; for `φ(0) < 0` it
/// lies between zero and the maximizer of `φ`, if that maximum is positive.
fn solve_multiplier(ac: f64, e: f64, t: f64) -> std::result::Result<f64, String> {
    let g = 4.0 * ac * t.powi(3);
    let phi = |l: f64| e - l - ac * (t + g * l).powi(4);
    let dphi = |l: f64| -1.0 - 4.0 * ac * g * (t + g * l).powi(3);
    let phi0 = phi(0.0);
    if phi0 == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = if phi0 > 0.0 {
        let mut step = phi0 / (1.0 + g * g);
        let mut hi = step;
        let mut k = 0;
        while phi(hi) > 0.0 {
            step *= 2.0;
            hi += step;
            k += 1;
            if k > 2000 || !hi.is_finite() {
                return Err("could not bracket the multiplier".into());
            }
        }
        (0.0, hi)
    } else {
        let peak = if g == 0.0 {
            f64::NEG_INFINITY
        } else {
            let tp = -(1.0 / (4.0 * ac * g)).cbrt();
            (tp - t) / g
        };
        if peak.is_finite() && phi(peak) < 0.0 {
            return Err(format!("no point on the constraint along the normal (max residual {:e})", phi(peak)));
        }
        if !peak.is_finite() {
            (phi0, 0.0)
        } else {
            (peak, 0.0)
        }
    };
    // φ(lo) > 0 > φ(hi) after orienting the bracket.
    if phi(lo) < 0.0 {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut l = 0.5 * (lo + hi);
    for _ in 0..400 {
        let f = phi(l);
        if f == 0.0 {
            return Ok(l);
        }
        if f > 0.0 {
            lo = l;
        } else {
            hi = l;
        }
        let d = dphi(l);
        let newton = l - f / d;
        let inside = (newton - lo) * (newton - hi) < 0.0;
        let next = if inside && d != 0.0 { newton } else { 0.5 * (lo + hi) };
        if (next - l).abs() <= 1e-12 * next.abs().max(1e-300) || (hi - lo).abs() <= 1e-15 * lo.abs().max(hi.abs()) {
            return Ok(next);
        }
        l = next;
    }
    Ok(l)
}
