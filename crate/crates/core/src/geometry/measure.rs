use super::types::{Label, Labels, Quantity, Scene};
use crate::{Error, Result};

/// Relative tolerance for every geometric consistency check.
pub const TOLERANCE: f64 = 1e-6;

pub(crate) type Vec2 = (f64, f64);

pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    (a.0 - b.0, a.1 - b.1)
}

pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

pub(crate) fn cross(a: Vec2, b: Vec2) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

pub(crate) fn len(a: Vec2) -> f64 {
    a.0.hypot(a.1)
}

/// `|a - b| <= TOLERANCE * max(|a|, |b|)`.
pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOLERANCE * a.abs().max(b.abs())
}

/// Relative deviation of `a` from `b`, zero when both vanish.
pub(crate) fn rel_dev(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Angle at `b` in degrees, in `[0, 180]`.
pub(crate) fn angle_deg(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let u = sub(a, b);
    let v = sub(c, b);
    cross(u, v).abs().atan2(dot(u, v)).to_degrees()
}

pub(crate) fn coords(scene: &Scene, l: Label) -> Result<Vec2> {
    scene.point(l).map(|p| (p.x, p.y)).ok_or_else(|| Error::UnresolvedTarget(format!("unknown point {l}")))
}

/// Euclidean length of a two-label target or the angle (degrees) at the
/// middle label of a three-label target.
pub fn measured_quantity(scene: &Scene, target: &Labels, quantity: Quantity) -> Result<f64> {
    if target.len() != quantity.arity() {
        return Err(Error::UnresolvedTarget(format!(
            "{} needs {} labels, got `{target}`",
            quantity.keyword(),
            quantity.arity()
        )));
    }
    let pts = target.iter().map(|l| coords(scene, l)).collect::<Result<Vec<_>>>()?;
    Ok(match quantity {
        Quantity::Length => len(sub(pts[1], pts[0])),
        Quantity::Angle => angle_deg(pts[0], pts[1], pts[2]),
    })
}

/// Interior angles (degrees) at each vertex of a polygon.
pub(crate) fn polygon_angles(pts: &[Vec2]) -> Vec<f64> {
    let n = pts.len();
    (0..n).map(|i| angle_deg(pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n])).collect()
}

pub(crate) fn polygon_sides(pts: &[Vec2]) -> Vec<f64> {
    let n = pts.len();
    (0..n).map(|i| len(sub(pts[(i + 1) % n], pts[i]))).collect()
}

pub(crate) fn polygon_area(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    0.5 * (0..n).map(|i| cross(pts[i], pts[(i + 1) % n])).sum::<f64>()
}

/// Closest distance between segments `p0p1` and `q0q1`, zero if they meet.
pub(crate) fn segment_distance(p0: Vec2, p1: Vec2, q0: Vec2, q1: Vec2) -> f64 {
    let d1 = cross(sub(p1, p0), sub(q0, p0));
    let d2 = cross(sub(p1, p0), sub(q1, p0));
    let d3 = cross(sub(q1, q0), sub(p0, q0));
    let d4 = cross(sub(q1, q0), sub(p1, q0));
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return 0.0;
    }
    let pd = |p: Vec2, a: Vec2, b: Vec2| {
        let ab = sub(b, a);
        let l2 = dot(ab, ab);
        let t = if l2 == 0.0 { 0.0 } else { (dot(sub(p, a), ab) / l2).clamp(0.0, 1.0) };
        len(sub(p, (a.0 + t * ab.0, a.1 + t * ab.1)))
    };
    pd(p0, q0, q1).min(pd(p1, q0, q1)).min(pd(q0, p0, p1)).min(pd(q1, p0, p1))
}
