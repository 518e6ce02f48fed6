//! Template captions whose facts are exactly the scene's facts.

use serde::{Deserialize, Serialize};

use crate::geometry::{ensure_valid, format_compact, Attribute, Label, Labels, Quantity, RelationKind, Scene, Shape};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactKind {
    Shape,
    Relation,
    Mark,
    Ordering,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ShapeFact {
    Segment {
        vertices: Labels,
    },
    /// `index` is the shape's position in the scene; its vertex order lives in the matching ordering fact.
    Polygon {
        index: usize,
        sides: usize,
        attribute: Attribute,
    },
    Circle {
        center: Label,
        radius: f64,
    },
}

/// One atomic statement about a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum Fact {
    Shape(ShapeFact),
    Relation { relation: RelationKind, operands: [Labels; 2] },
    Mark { quantity: Quantity, target: Labels, value: f64 },
    Ordering { polygon: usize, vertices: Labels },
}

impl Fact {
    pub fn kind(&self) -> FactKind {
        match self {
            Fact::Shape(_) => FactKind::Shape,
            Fact::Relation { .. } => FactKind::Relation,
            Fact::Mark { .. } => FactKind::Mark,
            Fact::Ordering { .. } => FactKind::Ordering,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub facts: Vec<Fact>,
}

fn noun(sides: usize) -> &'static str {
    match sides {
        3 => "triangle",
        4 => "quadrilateral",
        5 => "pentagon",
        6 => "hexagon",
        _ => "polygon",
    }
}

fn attribute_phrase(a: Attribute) -> &'static str {
    match a {
        Attribute::Square => "square",
        Attribute::Rectangle => "rectangle",
        Attribute::RightTriangle => "right triangle",
        Attribute::IsoscelesTriangle => "isosceles triangle",
        Attribute::EquilateralTriangle => "equilateral triangle",
        Attribute::None => "polygon",
    }
}

fn operand(ls: &Labels) -> String {
    if ls.len() >= 3 {
        format!("{} {ls}", noun(ls.len()))
    } else {
        ls.to_string()
    }
}

impl Caption {
    /// Builds the caption text from facts alone.
    pub fn from_facts(facts: Vec<Fact>) -> Self {
        let mut sentences = Vec::new();
        for f in &facts {
            let s = match f {
                Fact::Shape(ShapeFact::Segment { vertices }) => format!("{vertices} is a segment"),
                Fact::Shape(ShapeFact::Polygon { index, sides, attribute }) => {
                    let order = facts
                        .iter()
                        .find_map(|g| match g {
                            Fact::Ordering { polygon, vertices } if polygon == index => Some(vertices.to_string()),
                            _ => None,
                        })
                        .unwrap_or_else(|| format!("#{index}"));
                    match attribute {
                        Attribute::None => format!("{order} is a {}", noun(*sides)),
                        a => format!("{} {order} is a {}", noun(*sides), attribute_phrase(*a)),
                    }
                }
                Fact::Shape(ShapeFact::Circle { center, radius }) => {
                    format!("circle with center {center} has radius {}", format_compact(*radius))
                }
                Fact::Relation { relation, operands: [a, b] } => {
                    let (a, b) = (operand(a), operand(b));
                    match relation {
                        RelationKind::Parallel => format!("{a} is parallel to {b}"),
                        RelationKind::Perpendicular => format!("{a} is perpendicular to {b}"),
                        RelationKind::Similar => format!("{a} is similar to {b}"),
                        RelationKind::Congruent => format!("{a} is congruent to {b}"),
                        RelationKind::Intersects => format!("{a} intersects {b}"),
                    }
                }
                Fact::Mark { quantity: Quantity::Length, target, value } => {
                    format!("{target} = {}", format_compact(*value))
                }
                Fact::Mark { quantity: Quantity::Angle, target, value } => {
                    format!("angle {target} = {} degrees", format_compact(*value))
                }
                // rendered inside the polygon's shape sentence
                Fact::Ordering { .. } => continue,
            };
            sentences.push(s);
        }
        Caption { text: sentences.join("; "), facts }
    }

    pub fn count(&self, kind: FactKind) -> usize {
        self.facts.iter().filter(|f| f.kind() == kind).count()
    }
}

/// Facts of `scene` in canonical order: each shape (a polygon followed by its
/// ordering fact), then relations, then marks.
pub fn scene_facts(scene: &Scene) -> Vec<Fact> {
    let mut facts = Vec::new();
    for (i, s) in scene.shapes.iter().enumerate() {
        match s {
            Shape::Segment { vertices } => facts.push(Fact::Shape(ShapeFact::Segment { vertices: vertices.clone() })),
            Shape::Polygon { vertices, attribute } => {
                facts.push(Fact::Shape(ShapeFact::Polygon { index: i, sides: vertices.len(), attribute: *attribute }));
                facts.push(Fact::Ordering { polygon: i, vertices: vertices.clone() });
            }
            Shape::Circle { center, radius } => {
                facts.push(Fact::Shape(ShapeFact::Circle { center: *center, radius: *radius }))
            }
        }
    }
    for r in &scene.relations {
        facts.push(Fact::Relation { relation: r.kind, operands: r.operands.clone() });
    }
    for m in &scene.marks {
        facts.push(Fact::Mark { quantity: m.quantity, target: m.target.clone(), value: m.value });
    }
    facts
}

/// Canonical caption of a valid scene.
pub fn caption(scene: &Scene) -> Result<Caption> {
    ensure_valid(scene)?;
    Ok(Caption::from_facts(scene_facts(scene)))
}

/// Which vertex re-orderings describe the same polygon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CyclicRule {
    RotationsOnly,
    /// Rotations of the ordering or of its reversal (clockwise vs counter-clockwise traversal).
    #[default]
    RotationsAndReversals,
}

/// Whether `b` is a rotation of `a` (or, under the default rule, of `a` reversed).
pub fn cyclically_equal(a: &[Label], b: &[Label], rule: CyclicRule) -> bool {
    if a.len() != b.len() {
        return false;
    }
    if a.is_empty() {
        return true;
    }
    let n = a.len();
    let rotation_of = |src: &[Label]| (0..n).any(|k| (0..n).all(|i| src[(i + k) % n] == b[i]));
    if rotation_of(a) {
        return true;
    }
    if rule == CyclicRule::RotationsAndReversals {
        let rev: Vec<Label> = a.iter().rev().copied().collect();
        return rotation_of(&rev);
    }
    false
}

/// True iff the captions differ at most by cyclic re-orderings of polygon vertices.
pub fn caption_equals_modulo_cyclic(a: &Caption, b: &Caption) -> bool {
    caption_equals_modulo_cyclic_with(a, b, CyclicRule::default())
}

pub fn caption_equals_modulo_cyclic_with(a: &Caption, b: &Caption, rule: CyclicRule) -> bool {
    a.facts.len() == b.facts.len()
        && a.facts.iter().zip(&b.facts).all(|(x, y)| match (x, y) {
            (Fact::Ordering { polygon: p, vertices: u }, Fact::Ordering { polygon: q, vertices: v }) => {
                p == q && cyclically_equal(&u.0, &v.0, rule)
            }
            _ => x == y,
        })
}

/// Caption corpus record (`captions.jsonl`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: String,
    pub scene_id: String,
    pub text: String,
    pub facts: Vec<Fact>,
}

impl CaptionRecord {
    pub fn new(id: impl Into<String>, scene_id: impl Into<String>, caption: &Caption) -> Self {
        CaptionRecord {
            id: id.into(),
            scene_id: scene_id.into(),
            text: caption.text.clone(),
            facts: caption.facts.clone(),
        }
    }

    pub fn caption(&self) -> Caption {
        Caption { text: self.text.clone(), facts: self.facts.clone() }
    }
}
