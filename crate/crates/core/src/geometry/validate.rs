use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::measure::{
    close, coords, cross, dot, len, measured_quantity, polygon_angles, polygon_area, polygon_sides, rel_dev,
    segment_distance, sub, Vec2, TOLERANCE,
};
use super::types::{Attribute, Label, Labels, Quantity, Relation, RelationKind, Scene, Shape};
use crate::{Error, Result};

/// Machine-readable violation codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    DuplicateLabel,
    NonFiniteCoordinate,
    LabelNotPrefix,
    UnknownPoint,
    VertexCount,
    AttributeKind,
    AttributeInconsistent,
    DegenerateShape,
    DuplicateShape,
    NonPositiveRadius,
    UnknownShape,
    RelationOperandKind,
    DegenerateRelation,
    RelationFalse,
    MarkArity,
    MarkRange,
    MarkMismatch,
}

/// The scene component a violation is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "entity", content = "index", rename_all = "kebab-case")]
pub enum Entity {
    Scene,
    Point(Label),
    Shape(usize),
    Relation(usize),
    Mark(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub entity: Entity,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = serde_json::to_value(self.code).ok();
        let code = code.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
        write!(f, "[{code}] {}", self.message)
    }
}

/// Whether `pts` (polygon vertices in order) satisfy `attr` within tolerance.
///
/// `rectangle` excludes squares and `isosceles-triangle` excludes equilateral
/// triangles, so each attribute names the most specific class.
pub fn attribute_holds(pts: &[Vec2], attr: Attribute) -> bool {
    let right = |a: f64| close(a, 90.0);
    let all_equal = |xs: &[f64]| xs.iter().all(|&x| close(x, xs[0]));
    let sides = polygon_sides(pts);
    let angles = polygon_angles(pts);
    match attr {
        Attribute::None => true,
        Attribute::Square => pts.len() == 4 && all_equal(&sides) && angles.iter().all(|&a| right(a)),
        Attribute::Rectangle => pts.len() == 4 && angles.iter().all(|&a| right(a)) && !all_equal(&sides),
        Attribute::RightTriangle => pts.len() == 3 && angles.iter().any(|&a| right(a)),
        Attribute::EquilateralTriangle => pts.len() == 3 && all_equal(&sides),
        Attribute::IsoscelesTriangle => {
            pts.len() == 3 && !all_equal(&sides) && (0..3).any(|i| close(sides[i], sides[(i + 1) % 3]))
        }
    }
}

fn shape_points(scene: &Scene, labels: &Labels) -> Result<Vec<Vec2>> {
    labels.iter().map(|l| coords(scene, l)).collect()
}

/// Size of a relation's failure; the relation holds iff the defect is at most [`TOLERANCE`].
pub fn relation_defect(scene: &Scene, rel: &Relation) -> Result<f64> {
    let [a, b] = &rel.operands;
    let pa = shape_points(scene, a)?;
    let pb = shape_points(scene, b)?;
    if rel.kind.on_segments() {
        if pa.len() != 2 || pb.len() != 2 {
            return Err(Error::UnresolvedTarget(format!("{} needs segments", rel.kind.keyword())));
        }
        let u = sub(pa[1], pa[0]);
        let v = sub(pb[1], pb[0]);
        let (lu, lv) = (len(u), len(v));
        if lu == 0.0 || lv == 0.0 {
            return Ok(f64::INFINITY);
        }
        return Ok(match rel.kind {
            RelationKind::Parallel => cross(u, v).abs() / (lu * lv),
            RelationKind::Perpendicular => dot(u, v).abs() / (lu * lv),
            _ => segment_distance(pa[0], pa[1], pb[0], pb[1]) / lu.max(lv),
        });
    }
    if pa.len() != pb.len() || pa.len() < 3 {
        return Err(Error::UnresolvedTarget(format!("{} needs polygons with equal vertex counts", rel.kind.keyword())));
    }
    let (sa, sb) = (polygon_sides(&pa), polygon_sides(&pb));
    if sb.contains(&0.0) {
        return Ok(f64::INFINITY);
    }
    let ratios: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| x / y).collect();
    let mut defect = ratios.iter().map(|&r| rel_dev(r, ratios[0])).fold(0.0, f64::max);
    let (aa, ab) = (polygon_angles(&pa), polygon_angles(&pb));
    defect = aa.iter().zip(&ab).map(|(x, y)| rel_dev(*x, *y)).fold(defect, f64::max);
    if rel.kind == RelationKind::Congruent {
        defect = defect.max(rel_dev(ratios[0], 1.0));
    }
    Ok(defect)
}

/// Lists every broken invariant; an empty report means the scene is valid.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, entity, message: String| out.push(Violation { code, entity, message });

    let mut seen = BTreeSet::new();
    for p in &scene.points {
        if !seen.insert(p.id) {
            push(ViolationCode::DuplicateLabel, Entity::Point(p.id), format!("duplicate point {}", p.id));
        }
        if !p.x.is_finite() || !p.y.is_finite() {
            push(
                ViolationCode::NonFiniteCoordinate,
                Entity::Point(p.id),
                format!("point {} has a non-finite coordinate", p.id),
            );
        }
    }
    if seen.iter().enumerate().any(|(i, l)| l.index() != i) {
        push(
            ViolationCode::LabelNotPrefix,
            Entity::Scene,
            "point labels are not a contiguous prefix of the alphabet starting at A".into(),
        );
    }
    let known = |l: Label| seen.contains(&l);
    let finite = |l: Label| scene.point(l).is_some_and(|p| p.x.is_finite() && p.y.is_finite());

    for (i, shape) in scene.shapes.iter().enumerate() {
        let e = Entity::Shape(i);
        let missing: Vec<Label> = shape.labels().into_iter().filter(|&l| !known(l)).collect();
        for l in &missing {
            push(ViolationCode::UnknownPoint, e, format!("unknown point {l}"));
        }
        if scene.shapes[..i].iter().any(|s| {
            s == shape
                || s.reference() == shape.reference() && std::mem::discriminant(s) == std::mem::discriminant(shape)
        }) {
            push(ViolationCode::DuplicateShape, e, format!("duplicate shape {}", shape.reference()));
        }
        match shape {
            Shape::Segment { vertices } => {
                if vertices.len() != 2 || vertices.0[0] == vertices.0[1] {
                    push(ViolationCode::VertexCount, e, format!("segment {vertices} needs two distinct points"));
                    continue;
                }
                if missing.is_empty() && vertices.iter().all(finite) {
                    let pts = shape_points(scene, vertices).expect("resolved");
                    if len(sub(pts[1], pts[0])) == 0.0 {
                        push(ViolationCode::DegenerateShape, e, format!("segment {vertices} has zero length"));
                    }
                }
            }
            Shape::Polygon { vertices, attribute } => {
                let distinct: BTreeSet<_> = vertices.iter().collect();
                if vertices.len() < 3 || distinct.len() != vertices.len() {
                    push(
                        ViolationCode::VertexCount,
                        e,
                        format!("polygon {vertices} needs at least three distinct points"),
                    );
                    continue;
                }
                if let Some(n) = attribute.required_vertices() {
                    if n != vertices.len() {
                        push(
                            ViolationCode::AttributeKind,
                            e,
                            format!(
                                "{} requires {n} vertices, polygon {vertices} has {}",
                                attribute.keyword(),
                                vertices.len()
                            ),
                        );
                        continue;
                    }
                }
                if !missing.is_empty() || !vertices.iter().all(finite) {
                    continue;
                }
                let pts = shape_points(scene, vertices).expect("resolved");
                let sides = polygon_sides(&pts);
                let perimeter: f64 = sides.iter().sum();
                if sides.contains(&0.0) || polygon_area(&pts).abs() <= TOLERANCE * perimeter * perimeter {
                    push(ViolationCode::DegenerateShape, e, format!("polygon {vertices} is degenerate"));
                } else if !attribute_holds(&pts, *attribute) {
                    push(
                        ViolationCode::AttributeInconsistent,
                        e,
                        format!("polygon {vertices} is not a {}", attribute.keyword()),
                    );
                }
            }
            Shape::Circle { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    push(ViolationCode::NonPositiveRadius, e, format!("circle {center} has radius {radius}"));
                }
            }
        }
    }

    for (i, rel) in scene.relations.iter().enumerate() {
        let e = Entity::Relation(i);
        let idx: Vec<Option<usize>> = rel.operands.iter().map(|o| scene.shape_index(o)).collect();
        let mut ok = true;
        for (op, ix) in rel.operands.iter().zip(&idx) {
            if ix.is_none() {
                push(ViolationCode::UnknownShape, e, format!("unknown shape {op}"));
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let (ia, ib) = (idx[0].expect("resolved"), idx[1].expect("resolved"));
        if ia == ib {
            push(
                ViolationCode::DegenerateRelation,
                e,
                format!("{} relates {} to itself", rel.kind.keyword(), rel.operands[0]),
            );
            continue;
        }
        let kinds_ok = |s: &Shape| match s {
            Shape::Segment { .. } => rel.kind.on_segments(),
            Shape::Polygon { .. } => !rel.kind.on_segments(),
            Shape::Circle { .. } => false,
        };
        let (sa, sb) = (&scene.shapes[ia], &scene.shapes[ib]);
        if !kinds_ok(sa) || !kinds_ok(sb) || (!rel.kind.on_segments() && sa.labels().len() != sb.labels().len()) {
            push(
                ViolationCode::RelationOperandKind,
                e,
                format!("{} cannot relate {} and {}", rel.kind.keyword(), rel.operands[0], rel.operands[1]),
            );
            continue;
        }
        if !rel.operands.iter().all(|o| o.iter().all(finite)) {
            continue;
        }
        match relation_defect(scene, rel) {
            Ok(d) if d <= TOLERANCE => {}
            Ok(d) => push(
                ViolationCode::RelationFalse,
                e,
                format!("{} {} {} fails by {d:.3e}", rel.operands[0], rel.kind.keyword(), rel.operands[1]),
            ),
            Err(err) => push(ViolationCode::RelationOperandKind, e, err.to_string()),
        }
    }

    for (i, mark) in scene.marks.iter().enumerate() {
        let e = Entity::Mark(i);
        if mark.target.len() != mark.quantity.arity() {
            push(
                ViolationCode::MarkArity,
                e,
                format!("{} mark needs {} labels, got {}", mark.quantity.keyword(), mark.quantity.arity(), mark.target),
            );
            continue;
        }
        let missing: Vec<Label> = mark.target.iter().filter(|&l| !known(l)).collect();
        for l in &missing {
            push(ViolationCode::UnknownPoint, e, format!("unknown point {l}"));
        }
        let in_range = match mark.quantity {
            Quantity::Length => mark.value.is_finite() && mark.value > 0.0,
            Quantity::Angle => mark.value > 0.0 && mark.value < 180.0,
        };
        if !in_range {
            push(ViolationCode::MarkRange, e, format!("{} mark {} out of range", mark.quantity.keyword(), mark.value));
            continue;
        }
        if !missing.is_empty() || !mark.target.iter().all(finite) {
            continue;
        }
        let measured = measured_quantity(scene, &mark.target, mark.quantity).expect("resolved");
        if !close(mark.value, measured) {
            push(
                ViolationCode::MarkMismatch,
                e,
                format!("{} {} marked {} but measures {measured}", mark.quantity.keyword(), mark.target, mark.value),
            );
        }
    }
    out
}

/// `Ok(())` for a valid scene, otherwise the full violation list as an error.
pub fn ensure_valid(scene: &Scene) -> Result<()> {
    let report = validate_scene(scene);
    if report.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidScene(report))
    }
}
