use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A point label: one uppercase ASCII letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(u8);

impl Label {
    pub fn new(c: char) -> Option<Self> {
        c.is_ascii_uppercase().then_some(Label(c as u8))
    }

    /// The `i`-th letter of the alphabet (0 = `A`).
    pub fn nth(i: usize) -> Option<Self> {
        (i < 26).then(|| Label(b'A' + i as u8))
    }

    pub fn index(self) -> usize {
        (self.0 - b'A') as usize
    }

    pub fn as_char(self) -> char {
        self.0 as char
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut chars = s.chars();
        match (chars.next().and_then(Label::new), chars.next()) {
            (Some(l), None) => Ok(l),
            _ => Err(serde::de::Error::custom(format!("invalid label `{s}`"))),
        }
    }
}

/// An ordered run of labels, written compactly as `"ABC"`.
///
/// Used both to reference shapes (segment endpoints, polygon vertices) and as
/// measurement targets (`AB` for a length, `ABC` for the angle at `B`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Labels(pub Vec<Label>);

impl Labels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Label> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, l: Label) -> bool {
        self.0.contains(&l)
    }

    /// Same labels, endpoint-normalized: pairs sorted, triples with first < last.
    pub fn canonical_undirected(&self) -> Labels {
        let mut v = self.0.clone();
        if v.len() >= 2 && v[0] > v[v.len() - 1] {
            v.reverse();
        }
        Labels(v)
    }
}

impl fmt::Display for Labels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.0 {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for Labels {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| Label::new(c).ok_or_else(|| format!("invalid label `{c}` in `{s}`")))
            .collect::<Result<Vec<_>, _>>()
            .map(Labels)
    }
}

impl Serialize for Labels {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Labels {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl From<&str> for Labels {
    /// Panics on invalid labels; intended for literals.
    fn from(s: &str) -> Self {
        s.parse().expect("valid label literal")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: Label,
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(id: char, x: f64, y: f64) -> Self {
        Point { id: Label::new(id).expect("uppercase label"), x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attribute {
    Square,
    Rectangle,
    RightTriangle,
    IsoscelesTriangle,
    EquilateralTriangle,
    #[default]
    None,
}

impl Attribute {
    pub const ALL: [Attribute; 6] = [
        Attribute::Square,
        Attribute::Rectangle,
        Attribute::RightTriangle,
        Attribute::IsoscelesTriangle,
        Attribute::EquilateralTriangle,
        Attribute::None,
    ];

    /// Vertex count the attribute requires, if any.
    pub fn required_vertices(self) -> Option<usize> {
        match self {
            Attribute::Square | Attribute::Rectangle => Some(4),
            Attribute::RightTriangle | Attribute::IsoscelesTriangle | Attribute::EquilateralTriangle => Some(3),
            Attribute::None => None,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Attribute::Square => "square",
            Attribute::Rectangle => "rectangle",
            Attribute::RightTriangle => "right-triangle",
            Attribute::IsoscelesTriangle => "isosceles-triangle",
            Attribute::EquilateralTriangle => "equilateral-triangle",
            Attribute::None => "none",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Attribute::ALL.into_iter().find(|a| a.keyword() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Segment {
        vertices: Labels,
    },
    Polygon {
        vertices: Labels,
        #[serde(default)]
        attribute: Attribute,
    },
    Circle {
        center: Label,
        radius: f64,
    },
}

impl Shape {
    pub fn segment(s: &str) -> Self {
        Shape::Segment { vertices: s.into() }
    }

    pub fn polygon(s: &str, attribute: Attribute) -> Self {
        Shape::Polygon { vertices: s.into(), attribute }
    }

    /// Every point label the shape touches.
    pub fn labels(&self) -> Vec<Label> {
        match self {
            Shape::Segment { vertices } | Shape::Polygon { vertices, .. } => vertices.0.clone(),
            Shape::Circle { center, .. } => vec![*center],
        }
    }

    pub fn first_label(&self) -> Option<Label> {
        self.labels().first().copied()
    }

    fn kind_rank(&self) -> u8 {
        match self {
            Shape::Segment { .. } => 0,
            Shape::Polygon { .. } => 1,
            Shape::Circle { .. } => 2,
        }
    }

    /// Whether `r` names this shape. Segments match in either direction;
    /// polygons match their exact vertex sequence; a single label names a circle centre.
    pub fn matches(&self, r: &Labels) -> bool {
        match self {
            Shape::Segment { vertices } => r.len() == 2 && vertices.canonical_undirected() == r.canonical_undirected(),
            Shape::Polygon { vertices, .. } => vertices == r,
            Shape::Circle { center, .. } => r.0 == [*center],
        }
    }

    /// The reference a relation would use to name this shape.
    pub fn reference(&self) -> Labels {
        match self {
            Shape::Segment { vertices } => vertices.canonical_undirected(),
            Shape::Polygon { vertices, .. } => vertices.clone(),
            Shape::Circle { center, .. } => Labels(vec![*center]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationKind {
    Parallel,
    Perpendicular,
    Similar,
    Congruent,
    Intersects,
}

impl RelationKind {
    pub const ALL: [RelationKind; 5] = [
        RelationKind::Parallel,
        RelationKind::Perpendicular,
        RelationKind::Similar,
        RelationKind::Congruent,
        RelationKind::Intersects,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            RelationKind::Parallel => "parallel",
            RelationKind::Perpendicular => "perpendicular",
            RelationKind::Similar => "similar",
            RelationKind::Congruent => "congruent",
            RelationKind::Intersects => "intersects",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        RelationKind::ALL.into_iter().find(|k| k.keyword() == s)
    }

    /// True for kinds whose operands must be segments.
    pub fn on_segments(self) -> bool {
        matches!(self, RelationKind::Parallel | RelationKind::Perpendicular | RelationKind::Intersects)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub operands: [Labels; 2],
}

impl Relation {
    pub fn new(kind: RelationKind, a: &str, b: &str) -> Self {
        Relation { kind, operands: [a.into(), b.into()] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Length,
    Angle,
}

impl Quantity {
    pub fn arity(self) -> usize {
        match self {
            Quantity::Length => 2,
            Quantity::Angle => 3,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Quantity::Length => "length",
            Quantity::Angle => "angle",
        }
    }
}

/// A stated length (abstract units) or angle (degrees, vertex in the middle).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericMark {
    pub target: Labels,
    pub quantity: Quantity,
    pub value: f64,
}

impl NumericMark {
    pub fn length(target: &str, value: f64) -> Self {
        NumericMark { target: target.into(), quantity: Quantity::Length, value }
    }

    pub fn angle(target: &str, value: f64) -> Self {
        NumericMark { target: target.into(), quantity: Quantity::Angle, value }
    }
}

/// A geometric scene: the unit that is rendered, captioned and perturbed.
///
/// Field order is the serialization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub points: Vec<Point>,
    pub shapes: Vec<Shape>,
    pub relations: Vec<Relation>,
    pub marks: Vec<NumericMark>,
    pub seed: u64,
}

impl Scene {
    pub fn point(&self, l: Label) -> Option<&Point> {
        self.points.iter().find(|p| p.id == l)
    }

    pub fn shape_index(&self, r: &Labels) -> Option<usize> {
        self.shapes.iter().position(|s| s.matches(r))
    }

    /// Single-line JSON in the fixed field order.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serializes")
    }

    pub fn from_json(s: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Sorts every component into canonical order and normalizes undirected
    /// references (segment endpoints, mark targets, symmetric relation operands).
    pub fn canonicalize(&mut self) {
        for s in &mut self.shapes {
            if let Shape::Segment { vertices } = s {
                *vertices = vertices.canonical_undirected();
            }
        }
        for r in &mut self.relations {
            for op in &mut r.operands {
                if op.len() == 2 {
                    *op = op.canonical_undirected();
                }
            }
            if r.operands[0] > r.operands[1] {
                r.operands.swap(0, 1);
            }
        }
        for m in &mut self.marks {
            m.target = m.target.canonical_undirected();
        }
        self.points.sort_by_key(|p| p.id);
        self.shapes.sort_by(|a, b| shape_key(a).partial_cmp(&shape_key(b)).unwrap_or(std::cmp::Ordering::Equal));
        self.relations.sort_by(|a, b| (a.kind, &a.operands).cmp(&(b.kind, &b.operands)));
        self.marks.sort_by(|a, b| (a.quantity, &a.target).cmp(&(b.quantity, &b.target)));
    }

    /// Rounds every coordinate, radius and mark value to nine significant digits.
    pub fn quantize(&mut self) {
        for p in &mut self.points {
            p.x = round_sig9(p.x);
            p.y = round_sig9(p.y);
        }
        for s in &mut self.shapes {
            if let Shape::Circle { radius, .. } = s {
                *radius = round_sig9(*radius);
            }
        }
        for m in &mut self.marks {
            m.value = round_sig9(m.value);
        }
    }

    /// Renames labels throughout the scene according to `map` (old → new).
    pub fn relabel(&mut self, map: impl Fn(Label) -> Label) {
        for p in &mut self.points {
            p.id = map(p.id);
        }
        let remap = |ls: &mut Labels| ls.0.iter_mut().for_each(|l| *l = map(*l));
        for s in &mut self.shapes {
            match s {
                Shape::Segment { vertices } | Shape::Polygon { vertices, .. } => remap(vertices),
                Shape::Circle { center, .. } => *center = map(*center),
            }
        }
        for r in &mut self.relations {
            r.operands.iter_mut().for_each(remap);
        }
        for m in &mut self.marks {
            remap(&mut m.target);
        }
    }

    /// Applies `f` to every point coordinate.
    pub fn map_points(&mut self, f: impl Fn(f64, f64) -> (f64, f64)) {
        for p in &mut self.points {
            (p.x, p.y) = f(p.x, p.y);
        }
    }
}

fn shape_key(s: &Shape) -> (Option<Label>, u8, Labels, f64) {
    let radius = match s {
        Shape::Circle { radius, .. } => *radius,
        _ => 0.0,
    };
    (s.first_label(), s.kind_rank(), Labels(s.labels()), radius)
}

/// Rounds to nine significant digits, the precision of the canonical text form.
pub fn round_sig9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return if v == 0.0 { 0.0 } else { v };
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

/// Formats with nine significant digits in positional notation (`5.00000000`).
pub fn format_sig9(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    let sci = format!("{v:.8e}");
    let exp: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (8 - exp).max(0) as usize;
    let rounded: f64 = sci.parse().unwrap_or(v);
    format!("{rounded:.decimals$}")
}

/// Shortest human-oriented form: nine significant digits with trailing zeros trimmed.
pub fn format_compact(v: f64) -> String {
    let s = format_sig9(v);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
