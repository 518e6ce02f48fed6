use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rule::NUMERIC_FACTORS;
use super::{negative_id, Category, Modality, Negative, NegativeGroup};
use crate::geometry::{
    attribute_holds, cross, dot, ensure_valid, format_compact, format_sig9, len, measured_quantity, refresh_marks,
    rel_dev, relation_defect, sub, Attribute, Label, Labels, Quantity, Relation, RelationKind, Scene, Shape, Vec2,
    TOLERANCE,
};
use crate::render::{render, RenderOptions};
use crate::{Error, Result};

/// Minimum failure of a broken relation, in multiples of [`TOLERANCE`].
const BREAK_MARGIN: f64 = 10.0;
const ROTATIONS_DEG: [f64; 6] = [20.0, -20.0, 30.0, -30.0, 40.0, -40.0];
const SQUARE_STRETCH: [f64; 4] = [0.6, 0.75, 1.25, 1.5];

/// The single structural change that turns a positive scene into a negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "edit", rename_all = "kebab-case")]
pub enum SceneEdit {
    SwapLabels {
        a: Label,
        b: Label,
    },
    /// `moved` is displaced until `relation` fails; relations that fail as a
    /// side effect are listed in `also_removed`, and segments that start to
    /// cross gain an `added` intersects relation.
    BreakRelation {
        relation: Relation,
        moved: Label,
        also_removed: Vec<Relation>,
        added: Option<Relation>,
    },
    ChangeMark {
        quantity: Quantity,
        target: Labels,
        from: f64,
        to: f64,
        factor: f64,
    },
    ToggleAttribute {
        polygon: Labels,
        from: Attribute,
        to: Attribute,
    },
}

fn relation_text(r: &Relation) -> String {
    format!("{} {},{}", r.kind.keyword(), r.operands[0], r.operands[1])
}

impl fmt::Display for SceneEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneEdit::SwapLabels { a, b } => write!(f, "swap labels {a} and {b}"),
            SceneEdit::BreakRelation { relation, moved, also_removed, added } => {
                write!(f, "break {} by moving {moved}", relation_text(relation))?;
                for r in also_removed {
                    write!(f, "; also breaks {}", relation_text(r))?;
                }
                if let Some(r) = added {
                    write!(f, "; adds {}", relation_text(r))?;
                }
                Ok(())
            }
            SceneEdit::ChangeMark { quantity, target, from, to, .. } => {
                write!(f, "{} {target}: {} -> {}", quantity.keyword(), format_compact(*from), format_compact(*to))
            }
            SceneEdit::ToggleAttribute { polygon, from, to } => {
                write!(f, "attribute of {polygon}: {} -> {}", from.keyword(), to.keyword())
            }
        }
    }
}

/// Image negatives with their scenes and machine-checkable edits.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneNegatives {
    pub group: NegativeGroup,
    pub scenes: Vec<Scene>,
    pub edits: Vec<SceneEdit>,
}

#[derive(Clone, Copy, Debug)]
enum MarkMove {
    /// Uniform scaling about the centroid (lengths only).
    Scale,
    /// Stretch along a direction, solved for the target value.
    Stretch(Vec2),
    /// Move the first (`true`) or last endpoint of the target.
    Endpoint(bool),
}

#[derive(Clone, Debug)]
enum Candidate {
    Swap(Label, Label),
    Move { relation: usize, point: Label, to: Vec2 },
    Mark { mark: usize, factor: f64, how: MarkMove },
    Stretch { shape: usize, to: Attribute, dir: Vec2, factor: f64 },
    Vertex { shape: usize, to: Attribute, point: Label, at: Vec2 },
}

fn at(scene: &Scene, l: Label) -> Vec2 {
    let p = scene.point(l).expect("validated scene");
    (p.x, p.y)
}

fn set(scene: &mut Scene, l: Label, v: Vec2) {
    let p = scene.points.iter_mut().find(|p| p.id == l).expect("validated scene");
    (p.x, p.y) = v;
}

fn add(a: Vec2, b: Vec2) -> Vec2 {
    (a.0 + b.0, a.1 + b.1)
}

fn scale(a: Vec2, k: f64) -> Vec2 {
    (a.0 * k, a.1 * k)
}

fn unit(a: Vec2) -> Vec2 {
    scale(a, 1.0 / len(a))
}

fn rotate(a: Vec2, deg: f64) -> Vec2 {
    let (s, c) = deg.to_radians().sin_cos();
    (c * a.0 - s * a.1, s * a.0 + c * a.1)
}

fn centroid(pts: &[Vec2]) -> Vec2 {
    let n = pts.len() as f64;
    pts.iter().fold((0.0, 0.0), |acc, &p| add(acc, scale(p, 1.0 / n)))
}

fn scene_centroid(scene: &Scene) -> Vec2 {
    centroid(&scene.points.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>())
}

/// Reflection of `p` across the line through `a` and `b`.
fn reflect(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let u = unit(sub(b, a));
    let d = sub(p, a);
    let along = scale(u, dot(d, u));
    add(a, sub(scale(along, 2.0), d))
}

/// Affine stretch by `lambda` along unit direction `u` about the scene centroid.
fn stretch(scene: &Scene, u: Vec2, lambda: f64) -> Scene {
    let c = scene_centroid(scene);
    let mut s = scene.clone();
    s.map_points(|x, y| {
        let d = sub((x, y), c);
        add((x, y), scale(u, (lambda - 1.0) * dot(d, u)))
    });
    s
}

fn uniform_scale(scene: &Scene, k: f64) -> Scene {
    let c = scene_centroid(scene);
    let mut s = scene.clone();
    s.map_points(|x, y| add(c, scale(sub((x, y), c), k)));
    for sh in &mut s.shapes {
        if let Shape::Circle { radius, .. } = sh {
            *radius *= k;
        }
    }
    s
}

/// Distinct edge directions of segments and polygons plus their normals,
/// as unit vectors with angle in `[0°, 180°)`.
fn stretch_directions(scene: &Scene) -> Vec<Vec2> {
    let mut angles: Vec<f64> = Vec::new();
    for sh in &scene.shapes {
        let ls = sh.labels();
        let edges: Vec<(Label, Label)> = match sh {
            Shape::Segment { .. } => vec![(ls[0], ls[1])],
            Shape::Polygon { .. } => (0..ls.len()).map(|i| (ls[i], ls[(i + 1) % ls.len()])).collect(),
            Shape::Circle { .. } => vec![],
        };
        for (a, b) in edges {
            let d = sub(at(scene, b), at(scene, a));
            let t = d.1.atan2(d.0).rem_euclid(std::f64::consts::PI);
            angles.push(t);
            angles.push((t + std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI));
        }
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    angles.into_iter().map(|t| (t.cos(), t.sin())).collect()
}

/// Stretch factor along `u` that brings the mark to `goal`, searching
/// `[1/8, 8]` for the sign change nearest the identity and bisecting in log space.
fn solve_stretch(scene: &Scene, u: Vec2, target: &Labels, q: Quantity, goal: f64) -> Option<f64> {
    let g = |t: f64| measured_quantity(&stretch(scene, u, t.exp()), target, q).map(|v| v - goal).ok();
    let steps = 64;
    let lim = 8f64.ln();
    let grid: Vec<f64> = (0..=2 * steps).map(|i| -lim + lim * i as f64 / steps as f64).collect();
    let vals: Vec<Option<f64>> = grid.iter().map(|&t| g(t)).collect();
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..grid.len() - 1 {
        let (Some(a), Some(b)) = (vals[i], vals[i + 1]) else { continue };
        if a * b <= 0.0 {
            let dist = grid[i].abs().min(grid[i + 1].abs());
            if best.is_none_or(|(d, _, _)| dist < d) {
                best = Some((dist, grid[i], grid[i + 1]));
            }
        }
    }
    let (_, mut lo, mut hi) = best?;
    let mut glo = g(lo)?;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if glo * gm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            glo = gm;
        }
    }
    Some((0.5 * (lo + hi)).exp())
}

fn finish(mut s: Scene) -> Scene {
    refresh_marks(&mut s);
    s.quantize();
    s.canonicalize();
    s
}

fn triangle_targets(from: Attribute) -> &'static [Attribute] {
    use Attribute::*;
    match from {
        RightTriangle => &[IsoscelesTriangle, EquilateralTriangle],
        IsoscelesTriangle => &[RightTriangle, EquilateralTriangle],
        EquilateralTriangle => &[IsoscelesTriangle, RightTriangle],
        None => &[RightTriangle, IsoscelesTriangle, EquilateralTriangle],
        _ => &[],
    }
}

/// New positions for vertex `v` of triangle `(v, p, q)` realizing `to`.
fn triangle_vertex_positions(v: Vec2, p: Vec2, q: Vec2, to: Attribute) -> Vec<Vec2> {
    let m = scale(add(p, q), 0.5);
    let d = len(sub(q, p)) / 2.0;
    let u = unit(sub(q, p));
    let mut n = (-u.1, u.0);
    if dot(sub(v, m), n) < 0.0 {
        n = scale(n, -1.0);
    }
    let up = |h: f64| add(m, scale(n, h * d));
    match to {
        Attribute::IsoscelesTriangle => vec![up(0.8), up(1.2)],
        Attribute::EquilateralTriangle => vec![up(3f64.sqrt())],
        Attribute::RightTriangle => [60.0f64, 120.0]
            .iter()
            .map(|phi| {
                let (s, c) = phi.to_radians().sin_cos();
                add(m, add(scale(u, c * d), scale(n, s * d)))
            })
            .collect(),
        _ => vec![],
    }
}

fn candidates(scene: &Scene) -> [Vec<Candidate>; 4] {
    let mut swaps = Vec::new();
    for (i, a) in scene.points.iter().enumerate() {
        for b in &scene.points[i + 1..] {
            swaps.push(Candidate::Swap(a.id, b.id));
        }
    }

    let mut breaks = Vec::new();
    for (ri, rel) in scene.relations.iter().enumerate() {
        let [oa, ob] = &rel.operands;
        let mut push = |point: Label, to: Vec2| breaks.push(Candidate::Move { relation: ri, point, to });
        match rel.kind {
            RelationKind::Parallel => {
                for (this, other) in [(oa, ob), (ob, oa)] {
                    let (a, b) = (at(scene, other.0[0]), at(scene, other.0[1]));
                    for l in this.iter() {
                        let p = at(scene, l);
                        if cross(sub(b, a), sub(p, a)).abs() > TOLERANCE * len(sub(b, a)).powi(2) {
                            push(l, reflect(p, a, b));
                        }
                    }
                }
            }
            RelationKind::Perpendicular => {
                for seg in [oa, ob] {
                    for (mv, pivot) in [(seg.0[0], seg.0[1]), (seg.0[1], seg.0[0])] {
                        let c = at(scene, pivot);
                        for deg in ROTATIONS_DEG {
                            push(mv, add(c, rotate(sub(at(scene, mv), c), deg)));
                        }
                    }
                }
            }
            RelationKind::Intersects => {
                for (this, other) in [(oa, ob), (ob, oa)] {
                    let (p, q) = (at(scene, this.0[0]), at(scene, this.0[1]));
                    let (r, s) = (at(scene, other.0[0]), at(scene, other.0[1]));
                    let denom = cross(sub(q, p), sub(s, r));
                    if denom.abs() < 1e-12 {
                        continue;
                    }
                    let t = cross(sub(r, p), sub(s, r)) / denom;
                    if t > 0.05 {
                        push(this.0[1], add(p, scale(sub(q, p), 0.5 * t)));
                    }
                    if t < 0.95 {
                        push(this.0[0], add(q, scale(sub(p, q), 0.5 * (1.0 - t))));
                    }
                }
            }
            RelationKind::Similar | RelationKind::Congruent => {
                for poly in [oa, ob] {
                    let pts: Vec<Vec2> = poly.iter().map(|l| at(scene, l)).collect();
                    let c = centroid(&pts);
                    for (l, p) in poly.iter().zip(&pts) {
                        push(l, add(c, scale(sub(*p, c), 1.15)));
                    }
                }
            }
        }
    }

    let has_circle = scene.shapes.iter().any(|s| matches!(s, Shape::Circle { .. }));
    let dirs = if has_circle { Vec::new() } else { stretch_directions(scene) };
    let mut marks = Vec::new();
    for (mi, m) in scene.marks.iter().enumerate() {
        for factor in NUMERIC_FACTORS {
            let goal = m.value * factor;
            if m.quantity == Quantity::Angle && !(goal > 0.0 && goal < 180.0) {
                continue;
            }
            if m.quantity == Quantity::Length {
                marks.push(Candidate::Mark { mark: mi, factor, how: MarkMove::Scale });
            }
            marks.push(Candidate::Mark { mark: mi, factor, how: MarkMove::Endpoint(true) });
            marks.push(Candidate::Mark { mark: mi, factor, how: MarkMove::Endpoint(false) });
            for &d in &dirs {
                marks.push(Candidate::Mark { mark: mi, factor, how: MarkMove::Stretch(d) });
            }
        }
    }

    let mut toggles = Vec::new();
    for (si, sh) in scene.shapes.iter().enumerate() {
        let Shape::Polygon { vertices, attribute } = sh else { continue };
        let pts: Vec<Vec2> = vertices.iter().map(|l| at(scene, l)).collect();
        match (vertices.len(), attribute) {
            (4, Attribute::Square) if !has_circle => {
                let u = unit(sub(pts[1], pts[0]));
                for dir in [u, (-u.1, u.0)] {
                    for factor in SQUARE_STRETCH {
                        toggles.push(Candidate::Stretch { shape: si, to: Attribute::Rectangle, dir, factor });
                    }
                }
            }
            (4, Attribute::Rectangle) if !has_circle => {
                let (w, h) = (len(sub(pts[1], pts[0])), len(sub(pts[2], pts[1])));
                let u = unit(sub(pts[1], pts[0]));
                toggles.push(Candidate::Stretch { shape: si, to: Attribute::Square, dir: u, factor: h / w });
                toggles.push(Candidate::Stretch { shape: si, to: Attribute::Square, dir: (-u.1, u.0), factor: w / h });
            }
            (3, from) => {
                for &to in triangle_targets(*from) {
                    for i in 0..3 {
                        let (v, p, q) = (pts[i], pts[(i + 1) % 3], pts[(i + 2) % 3]);
                        for pos in triangle_vertex_positions(v, p, q, to) {
                            toggles.push(Candidate::Vertex { shape: si, to, point: vertices.0[i], at: pos });
                        }
                    }
                }
            }
            _ => {}
        }
    }
    [swaps, breaks, marks, toggles]
}

/// Order-insensitive description of what a scene asserts, with polygon
/// orderings reduced to a cyclic representative. Coordinates are excluded.
fn semantic_key(scene: &Scene) -> Vec<String> {
    let cyclic = |ls: &Labels| {
        let n = ls.len();
        let fwd: Vec<char> = ls.iter().map(Label::as_char).collect();
        let rev: Vec<char> = fwd.iter().rev().copied().collect();
        (0..n)
            .flat_map(|k| [&fwd, &rev].map(|v| (0..n).map(|i| v[(i + k) % n]).collect::<String>()))
            .min()
            .unwrap_or_default()
    };
    let operand = |ls: &Labels| if ls.len() == 2 { ls.canonical_undirected().to_string() } else { ls.to_string() };
    let mut key = Vec::new();
    for sh in &scene.shapes {
        key.push(match sh {
            Shape::Segment { vertices } => format!("segment {}", vertices.canonical_undirected()),
            Shape::Polygon { vertices, attribute } => format!("polygon {} {}", cyclic(vertices), attribute.keyword()),
            Shape::Circle { center, radius } => format!("circle {center} {}", format_sig9(*radius)),
        });
    }
    for r in &scene.relations {
        let mut ops = [operand(&r.operands[0]), operand(&r.operands[1])];
        ops.sort();
        key.push(format!("{} {} {}", r.kind.keyword(), ops[0], ops[1]));
    }
    for m in &scene.marks {
        key.push(format!("{} {} {}", m.quantity.keyword(), m.target.canonical_undirected(), format_sig9(m.value)));
    }
    key.sort();
    key
}

fn swapped(scene: &Scene, a: Label, b: Label) -> Scene {
    let mut s = scene.clone();
    s.relabel(|l| {
        if l == a {
            b
        } else if l == b {
            a
        } else {
            l
        }
    });
    s.canonicalize();
    s
}

/// Classifies the relations of `pos` on the edited scene `s`: returns the
/// kept relations and those failing by at least the break margin, or `None`
/// if any relation lands in between.
fn split_relations(s: &Scene, rels: &[Relation]) -> Option<(Vec<Relation>, Vec<Relation>)> {
    let (mut kept, mut broken) = (Vec::new(), Vec::new());
    for r in rels {
        let d = relation_defect(s, r).ok()?;
        if d <= TOLERANCE {
            kept.push(r.clone());
        } else if d >= BREAK_MARGIN * TOLERANCE {
            broken.push(r.clone());
        } else {
            return None;
        }
    }
    Some((kept, broken))
}

fn apply(pos: &Scene, c: &Candidate) -> Option<(Scene, SceneEdit)> {
    match *c {
        Candidate::Swap(a, b) => {
            let s = swapped(pos, a, b);
            (semantic_key(&s) != semantic_key(pos)).then_some((s, SceneEdit::SwapLabels { a, b }))
        }
        Candidate::Move { relation, point, to } => {
            let target = pos.relations[relation].clone();
            let mut s = pos.clone();
            set(&mut s, point, to);
            let mut s = finish(s);
            let (mut kept, mut broken) = split_relations(&s, &pos.relations)?;
            let i = broken.iter().position(|r| *r == target)?;
            broken.remove(i);
            let mut added = None;
            if target.kind == RelationKind::Parallel {
                let probe = Relation { kind: RelationKind::Intersects, operands: target.operands.clone() };
                if relation_defect(&s, &probe).ok()? <= TOLERANCE && !kept.contains(&probe) {
                    kept.push(probe.clone());
                    added = Some(probe);
                }
            }
            s.relations = kept;
            s.canonicalize();
            Some((s, SceneEdit::BreakRelation { relation: target, moved: point, also_removed: broken, added }))
        }
        Candidate::Mark { mark, factor, how } => {
            let m = &pos.marks[mark];
            let goal = m.value * factor;
            let raw = match how {
                MarkMove::Scale => uniform_scale(pos, factor),
                MarkMove::Stretch(u) => stretch(pos, u, solve_stretch(pos, u, &m.target, m.quantity, goal)?),
                MarkMove::Endpoint(first) => {
                    let t = &m.target.0;
                    let mut s = pos.clone();
                    match m.quantity {
                        Quantity::Length => {
                            let (fixed, moving) = if first { (t[1], t[0]) } else { (t[0], t[1]) };
                            let f = at(pos, fixed);
                            set(&mut s, moving, add(f, scale(sub(at(pos, moving), f), factor)));
                        }
                        Quantity::Angle => {
                            let (a, v, c) = (at(pos, t[0]), at(pos, t[1]), at(pos, t[2]));
                            let side = cross(sub(a, v), sub(c, v)).signum();
                            if first {
                                let dir = rotate(unit(sub(c, v)), -side * goal);
                                set(&mut s, t[0], add(v, scale(dir, len(sub(a, v)))));
                            } else {
                                let dir = rotate(unit(sub(a, v)), side * goal);
                                set(&mut s, t[2], add(v, scale(dir, len(sub(c, v)))));
                            }
                        }
                    }
                    s
                }
            };
            let s = finish(raw);
            let to = s.marks.iter().find(|n| n.target == m.target && n.quantity == m.quantity)?.value;
            (rel_dev(to, goal) <= TOLERANCE).then(|| {
                let edit =
                    SceneEdit::ChangeMark { quantity: m.quantity, target: m.target.clone(), from: m.value, to, factor };
                (s, edit)
            })
        }
        Candidate::Stretch { shape, to, dir, factor } => toggled(pos, stretch(pos, dir, factor), shape, to),
        Candidate::Vertex { shape, to, point, at: p } => {
            let mut s = pos.clone();
            set(&mut s, point, p);
            toggled(pos, s, shape, to)
        }
    }
}

fn toggled(pos: &Scene, mut s: Scene, shape: usize, to: Attribute) -> Option<(Scene, SceneEdit)> {
    let Shape::Polygon { vertices, attribute: from } = pos.shapes[shape].clone() else { return None };
    if let Shape::Polygon { attribute, .. } = &mut s.shapes[shape] {
        *attribute = to;
    }
    let s = finish(s);
    let pts: Vec<Vec2> = vertices.iter().map(|l| at(&s, l)).collect();
    (!attribute_holds(&pts, from)).then_some((s, SceneEdit::ToggleAttribute { polygon: vertices, from, to }))
}

/// `count` valid scenes, each one structural edit away from `scene`.
///
/// Candidate edits are grouped by kind (label swaps, relation breaks, mark
/// changes, attribute toggles), each group is shuffled with `seed`, and the
/// groups are visited round-robin. A candidate is kept when the edited scene
/// validates, its canonical serialization and rendering differ from the
/// positive and from every earlier negative.
pub fn scene_perturb_negatives(positive: &str, scene: &Scene, count: usize, seed: u64) -> Result<SceneNegatives> {
    if count == 0 {
        return Err(Error::out_of_range("count", "0"));
    }
    ensure_valid(scene)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = candidates(scene);
    for g in &mut groups {
        g.shuffle(&mut rng);
    }
    let longest = groups.iter().map(Vec::len).max().unwrap_or(0);
    let order = (0..longest).flat_map(|i| groups.iter().filter_map(move |g| g.get(i)));

    let opts = RenderOptions::default();
    let pos_json = scene.to_json();
    let pos_svg = render(scene, &opts)?;
    let mut seen = HashSet::from([pos_json]);
    let mut out = SceneNegatives {
        group: NegativeGroup::new(positive, Modality::Image, Vec::new()),
        scenes: Vec::new(),
        edits: Vec::new(),
    };
    for c in order {
        let Some((neg, edit)) = apply(scene, c) else { continue };
        if ensure_valid(&neg).is_err() || !seen.insert(neg.to_json()) {
            continue;
        }
        if render(&neg, &opts).is_ok_and(|svg| svg == pos_svg) {
            continue;
        }
        debug_assert!(verify_scene_edit(scene, &neg, &edit).is_ok(), "{edit}");
        out.group.negatives.push(Negative {
            id: negative_id(positive, out.scenes.len()),
            category: Category::ScenePerturb,
            delta: edit.to_string(),
        });
        out.scenes.push(neg);
        out.edits.push(edit);
        if out.scenes.len() == count {
            out.group.ratio = count;
            return Ok(out);
        }
    }
    Err(Error::NotApplicable(format!("scene edits for {positive}: {} distinct of {count} requested", out.scenes.len())))
}

fn fail(msg: impl Into<String>) -> Error {
    Error::InvalidBatch(msg.into())
}

fn same_relations(a: &[Relation], b: &[Relation]) -> bool {
    a.len() == b.len() && a.iter().all(|r| b.contains(r))
}

/// Checks that `neg` is valid, differs from `pos`, and differs exactly as `edit` claims.
pub fn verify_scene_edit(pos: &Scene, neg: &Scene, edit: &SceneEdit) -> Result<()> {
    ensure_valid(neg)?;
    if neg.to_json() == pos.to_json() {
        return Err(fail("negative serializes identically to its positive"));
    }
    match edit {
        SceneEdit::SwapLabels { a, b } => {
            if swapped(pos, *a, *b) != *neg {
                return Err(fail(format!("negative is not the positive with {a} and {b} swapped")));
            }
            if semantic_key(pos) == semantic_key(neg) {
                return Err(fail(format!("swapping {a} and {b} leaves every statement unchanged")));
            }
        }
        SceneEdit::BreakRelation { relation, moved, also_removed, added } => {
            if pos.shapes != neg.shapes || pos.marks.len() != neg.marks.len() {
                return Err(fail("shapes or marks changed"));
            }
            for p in &pos.points {
                let q = neg.point(p.id).ok_or_else(|| fail(format!("point {} missing", p.id)))?;
                if (p.id == *moved) == ((p.x, p.y) == (q.x, q.y)) {
                    return Err(fail(format!("point {} moved unexpectedly or {moved} did not move", p.id)));
                }
            }
            for r in std::iter::once(relation).chain(also_removed) {
                if !pos.relations.contains(r) || neg.relations.contains(r) {
                    return Err(fail(format!("{} was not removed", relation_text(r))));
                }
                let d = relation_defect(neg, r)?;
                if d < BREAK_MARGIN * TOLERANCE {
                    return Err(fail(format!("{} fails by only {d:e}", relation_text(r))));
                }
            }
            let mut expected: Vec<Relation> =
                pos.relations.iter().filter(|r| *r != relation && !also_removed.contains(r)).cloned().collect();
            if let Some(r) = added {
                if pos.relations.contains(r) || relation_defect(neg, r)? > TOLERANCE {
                    return Err(fail(format!("{} was not newly established", relation_text(r))));
                }
                expected.push(r.clone());
            }
            if !same_relations(&expected, &neg.relations) {
                return Err(fail("relation list differs from the recorded change"));
            }
        }
        SceneEdit::ChangeMark { quantity, target, from, to, factor } => {
            let find =
                |s: &Scene| s.marks.iter().find(|m| m.quantity == *quantity && m.target == *target).map(|m| m.value);
            if find(pos) != Some(*from) || find(neg) != Some(*to) {
                return Err(fail(format!("{} {target} does not read {from} -> {to}", quantity.keyword())));
            }
            if !NUMERIC_FACTORS.contains(factor) || rel_dev(*to, from * factor) > TOLERANCE {
                return Err(fail(format!("{to} is not {from} x {factor}")));
            }
            if pos.shapes.len() != neg.shapes.len() || !same_relations(&pos.relations, &neg.relations) {
                return Err(fail("structure changed"));
            }
        }
        SceneEdit::ToggleAttribute { polygon, from, to } => {
            let attr = |s: &Scene| {
                s.shapes.iter().find_map(|sh| match sh {
                    Shape::Polygon { vertices, attribute } if vertices == polygon => Some(*attribute),
                    _ => None,
                })
            };
            if attr(pos) != Some(*from) || attr(neg) != Some(*to) {
                return Err(fail(format!("{polygon} does not read {} -> {}", from.keyword(), to.keyword())));
            }
            let pts: Vec<Vec2> = polygon.iter().map(|l| at(neg, l)).collect();
            if attribute_holds(&pts, *from) {
                return Err(fail(format!("{polygon} is still a {}", from.keyword())));
            }
            if !same_relations(&pos.relations, &neg.relations) {
                return Err(fail("relations changed"));
            }
        }
    }
    Ok(())
}

/// Smallest distance between the two operand segments of an intersects relation.
#[cfg(test)]
fn gap(scene: &Scene, a: &str, b: &str) -> f64 {
    let p = |l: char| at(scene, Label::new(l).expect("label"));
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    crate::geometry::segment_distance(p(a[0]), p(a[1]), p(b[0]), p(b[1]))
}
