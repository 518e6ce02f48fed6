//! A small declarative language for scenes (`.geo` files).
//!
//! ```text
//! document  = { line } ;
//! line      = [ statement ] [ "#" comment ] newline ;
//! statement = point | segment | polygon | circle | relation | mark | seed ;
//! point     = "point" LABEL "(" NUMBER "," NUMBER ")" ;
//! segment   = "segment" LABEL LABEL ;
//! polygon   = "polygon" LABEL LABEL LABEL { LABEL } [ ATTRIBUTE ] ;
//! circle    = "circle" LABEL NUMBER ;
//! relation  = KIND "(" LABEL { LABEL } ")" "(" LABEL { LABEL } ")" ;
//! mark      = "mark" "length" LABEL LABEL "=" NUMBER
//!           | "mark" "angle" LABEL LABEL LABEL "=" NUMBER ;
//! seed      = "seed" INTEGER ;
//! LABEL     = "A" .. "Z" ;   (* adjacent labels may be written together: AB *)
//! ATTRIBUTE = "square" | "rectangle" | "right-triangle"
//!           | "isosceles-triangle" | "equilateral-triangle" ;
//! KIND      = "parallel" | "perpendicular" | "similar" | "congruent" | "intersects" ;
//! ```
//!
//! The canonical text form sorts statements (points by label, shapes by
//! first label, relations by kind then operands, marks by target) and prints
//! numbers with nine significant digits.

mod lexer;
mod parser;

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use serde::Serialize;

use crate::geometry::{ensure_valid, format_sig9, Attribute, Scene, Shape, ViolationCode};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    Syntax,
    Semantic,
}

/// A located parse or validation problem. Columns are 1-based characters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub line: usize,
    pub column: usize,
    pub end_column: usize,
    pub message: String,
    pub code: Option<ViolationCode>,
}

impl Diagnostic {
    pub(crate) fn new(kind: DiagnosticKind, line: usize, column: usize, end_column: usize, message: String) -> Self {
        Diagnostic { kind, line, column, end_column, message, code: None }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::Semantic => "semantic error",
        };
        write!(f, "{kind} at line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for Diagnostic {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Span {
    pub line: usize,
    pub column: usize,
    pub end_column: usize,
}

/// A parsed source together with the span of every entity.
///
/// Entity indices refer to the canonical scene returned in `scene`.
#[derive(Clone, Debug)]
pub struct DslDocument {
    pub source: String,
    pub scene: Scene,
    pub spans: BTreeMap<EntityRef, Span>,
}

/// Entity identity that survives canonical reordering.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntityRef {
    Point(char),
    Shape(String),
    Relation(String),
    Mark(String),
}

impl DslDocument {
    pub fn parse(source: &str) -> Result<Self, Diagnostic> {
        let (raw, map) = parser::parse_raw(source)?;
        if let Some(d) = parser::check(&raw, &map).into_iter().next() {
            return Err(d);
        }
        let mut spans = BTreeMap::new();
        for (key, span) in &map.spans {
            let r = match *key {
                parser::EntityKey::Point(i) => EntityRef::Point(raw.points[i].id.as_char()),
                parser::EntityKey::Shape(i) => EntityRef::Shape(shape_statement(&raw.shapes[i])),
                parser::EntityKey::Relation(i) => {
                    let mut one = raw.clone();
                    one.relations = vec![raw.relations[i].clone()];
                    one.canonicalize();
                    EntityRef::Relation(relation_statement(&one.relations[0]))
                }
                parser::EntityKey::Mark(i) => {
                    let mut m = raw.marks[i].clone();
                    m.target = m.target.canonical_undirected();
                    EntityRef::Mark(format!("{} {}", m.quantity.keyword(), spaced(&m.target)))
                }
            };
            spans.insert(r, *span);
        }
        let mut scene = raw;
        scene.canonicalize();
        Ok(DslDocument { source: source.to_string(), scene, spans })
    }
}

/// Parses and validates a `.geo` source into a canonical scene.
pub fn parse(source: &str) -> Result<Scene, Diagnostic> {
    DslDocument::parse(source).map(|d| d.scene)
}

/// Every diagnostic for `source` (syntax stops at the first error).
pub fn diagnostics(source: &str) -> Vec<Diagnostic> {
    match parser::parse_raw(source) {
        Err(d) => vec![d],
        Ok((raw, map)) => parser::check(&raw, &map),
    }
}

/// Parses many documents; failures are reported per document, never aborting the batch.
pub fn parse_corpus<S: AsRef<str>>(sources: &[S]) -> Vec<Result<Scene, Diagnostic>> {
    sources.iter().map(|s| parse(s.as_ref())).collect()
}

fn spaced(ls: &crate::geometry::Labels) -> String {
    ls.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ")
}

fn shape_statement(s: &Shape) -> String {
    match s {
        Shape::Segment { vertices } => format!("segment {}", spaced(&vertices.canonical_undirected())),
        Shape::Polygon { vertices, attribute } => {
            let mut out = format!("polygon {}", spaced(vertices));
            if *attribute != Attribute::None {
                write!(out, " {}", attribute.keyword()).expect("string write");
            }
            out
        }
        Shape::Circle { center, radius } => format!("circle {center} {}", format_sig9(*radius)),
    }
}

fn relation_statement(r: &crate::geometry::Relation) -> String {
    format!("{} ({}) ({})", r.kind.keyword(), spaced(&r.operands[0]), spaced(&r.operands[1]))
}

/// Canonical text for a valid scene.
pub fn serialize(scene: &Scene) -> Result<String> {
    ensure_valid(scene)?;
    let mut s = scene.clone();
    s.canonicalize();
    let mut out = String::new();
    for p in &s.points {
        writeln!(out, "point {} ({}, {})", p.id, format_sig9(p.x), format_sig9(p.y)).expect("string write");
    }
    for sh in &s.shapes {
        writeln!(out, "{}", shape_statement(sh)).expect("string write");
    }
    for r in &s.relations {
        writeln!(out, "{}", relation_statement(r)).expect("string write");
    }
    for m in &s.marks {
        writeln!(out, "mark {} {} = {}", m.quantity.keyword(), spaced(&m.target), format_sig9(m.value))
            .expect("string write");
    }
    writeln!(out, "seed {}", s.seed).expect("string write");
    Ok(out)
}
