use std::collections::BTreeMap;

use super::lexer::{tokenize, Tok, Token};
use super::{Diagnostic, DiagnosticKind, Span};
use crate::geometry::{
    validate_scene, Attribute, Entity, Label, Labels, NumericMark, Point, Quantity, Relation, RelationKind, Scene,
    Shape, ViolationCode,
};

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    line_len: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn err_here(&self, msg: impl Into<String>) -> Diagnostic {
        let (col, end) = match self.peek() {
            Some(t) => (t.col, t.end),
            None => (self.line_len + 1, self.line_len + 2),
        };
        Diagnostic::new(DiagnosticKind::Syntax, self.line, col, end, msg.into())
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<&'a Token, Diagnostic> {
        match self.peek() {
            Some(t) if t.tok == want => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn number(&mut self) -> Result<f64, Diagnostic> {
        match self.peek() {
            Some(Token { tok: Tok::Number(v), .. }) => {
                self.pos += 1;
                Ok(*v)
            }
            _ => Err(self.err_here("expected a number")),
        }
    }

    /// One or more runs of uppercase letters, expanded to single labels.
    fn labels(&mut self) -> Result<Vec<(Label, usize)>, Diagnostic> {
        let mut out = Vec::new();
        while let Some(Token { tok: Tok::Word(w), col, .. }) = self.peek() {
            if !w.chars().all(|c| c.is_ascii_uppercase()) {
                break;
            }
            out.extend(w.chars().enumerate().map(|(i, c)| (Label::new(c).expect("uppercase"), col + i)));
            self.pos += 1;
        }
        if out.is_empty() {
            return Err(self.err_here("expected point labels"));
        }
        Ok(out)
    }

    fn exact_labels(&mut self, n: usize, what: &str) -> Result<Vec<(Label, usize)>, Diagnostic> {
        let at = self.peek().map(|t| (t.col, t.end));
        let ls = self.labels()?;
        if ls.len() != n {
            let (col, end) = at.unwrap_or((1, 2));
            return Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                self.line,
                col,
                end,
                format!("{what} needs {n} labels, got {}", ls.len()),
            ));
        }
        Ok(ls)
    }

    fn end(&self) -> Result<(), Diagnostic> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.err_here("unexpected trailing input")),
        }
    }
}

fn seq(ls: &[(Label, usize)]) -> Labels {
    Labels(ls.iter().map(|(l, _)| *l).collect())
}

/// Where each parsed entity came from, with per-label columns for precise
/// "unknown point" diagnostics.
#[derive(Default)]
pub(crate) struct SourceMap {
    pub spans: BTreeMap<EntityKey, Span>,
    pub label_cols: BTreeMap<EntityKey, Vec<(Label, usize)>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum EntityKey {
    Point(usize),
    Shape(usize),
    Relation(usize),
    Mark(usize),
}

/// Parses `source` into a scene in statement order (not yet validated).
pub(crate) fn parse_raw(source: &str) -> Result<(Scene, SourceMap), Diagnostic> {
    let mut scene = Scene { points: vec![], shapes: vec![], relations: vec![], marks: vec![], seed: 0 };
    let mut map = SourceMap::default();
    let mut seed_seen = false;
    for (li, line) in source.lines().enumerate() {
        let line_no = li + 1;
        let toks = tokenize(line, line_no)?;
        if toks.is_empty() {
            continue;
        }
        let span = Span { line: line_no, column: toks[0].col, end_column: toks[toks.len() - 1].end };
        let mut c = Cursor { toks: &toks, pos: 1, line: line_no, line_len: line.chars().count() };
        let Tok::Word(head) = &toks[0].tok else {
            c.pos = 0;
            return Err(c.err_here("expected a statement keyword"));
        };
        let (key, cols) = match head.as_str() {
            "point" => {
                let l = c.exact_labels(1, "point")?;
                c.expect(Tok::LParen, "`(`")?;
                let x = c.number()?;
                c.expect(Tok::Comma, "`,`")?;
                let y = c.number()?;
                c.expect(Tok::RParen, "`)`")?;
                c.end()?;
                scene.points.push(Point { id: l[0].0, x, y });
                (EntityKey::Point(scene.points.len() - 1), l)
            }
            "segment" => {
                let l = c.exact_labels(2, "segment")?;
                c.end()?;
                scene.shapes.push(Shape::Segment { vertices: seq(&l) });
                (EntityKey::Shape(scene.shapes.len() - 1), l)
            }
            "polygon" => {
                let l = c.labels()?;
                let mut attribute = Attribute::None;
                if let Some(Token { tok: Tok::Word(w), .. }) = c.peek() {
                    attribute =
                        Attribute::from_keyword(w).ok_or_else(|| c.err_here(format!("unknown attribute `{w}`")))?;
                    c.pos += 1;
                }
                c.end()?;
                if l.len() < 3 {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Syntax,
                        line_no,
                        span.column,
                        span.end_column,
                        "polygon needs at least 3 labels".into(),
                    ));
                }
                scene.shapes.push(Shape::Polygon { vertices: seq(&l), attribute });
                (EntityKey::Shape(scene.shapes.len() - 1), l)
            }
            "circle" => {
                let l = c.exact_labels(1, "circle")?;
                let radius = c.number()?;
                c.end()?;
                scene.shapes.push(Shape::Circle { center: l[0].0, radius });
                (EntityKey::Shape(scene.shapes.len() - 1), l)
            }
            "mark" => {
                let quantity = match c.peek() {
                    Some(Token { tok: Tok::Word(w), .. }) if w == "length" => Quantity::Length,
                    Some(Token { tok: Tok::Word(w), .. }) if w == "angle" => Quantity::Angle,
                    _ => return Err(c.err_here("expected `length` or `angle`")),
                };
                c.pos += 1;
                let l = c.exact_labels(quantity.arity(), quantity.keyword())?;
                c.expect(Tok::Equals, "`=`")?;
                let value = c.number()?;
                c.end()?;
                scene.marks.push(NumericMark { target: seq(&l), quantity, value });
                (EntityKey::Mark(scene.marks.len() - 1), l)
            }
            "seed" => {
                let v = c.number()?;
                c.end()?;
                if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 || seed_seen {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Syntax,
                        line_no,
                        span.column,
                        span.end_column,
                        "seed must appear once as a non-negative integer".into(),
                    ));
                }
                seed_seen = true;
                scene.seed = v as u64;
                continue;
            }
            kw => match RelationKind::from_keyword(kw) {
                Some(kind) => {
                    c.expect(Tok::LParen, "`(`")?;
                    let a = c.labels()?;
                    c.expect(Tok::RParen, "`)`")?;
                    c.expect(Tok::LParen, "`(`")?;
                    let b = c.labels()?;
                    c.expect(Tok::RParen, "`)`")?;
                    c.end()?;
                    scene.relations.push(Relation { kind, operands: [seq(&a), seq(&b)] });
                    let mut cols = a;
                    cols.extend(b);
                    (EntityKey::Relation(scene.relations.len() - 1), cols)
                }
                None => {
                    c.pos = 0;
                    return Err(c.err_here(format!("unknown statement `{kw}`")));
                }
            },
        };
        map.spans.insert(key, span);
        map.label_cols.insert(key, cols);
    }
    Ok((scene, map))
}

/// Validates a raw parse, translating the first violation into a located diagnostic.
pub(crate) fn check(scene: &Scene, map: &SourceMap) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = validate_scene(scene)
        .into_iter()
        .map(|v| {
            let key = match v.entity {
                Entity::Point(l) => scene.points.iter().rposition(|p| p.id == l).map(EntityKey::Point),
                Entity::Shape(i) => Some(EntityKey::Shape(i)),
                Entity::Relation(i) => Some(EntityKey::Relation(i)),
                Entity::Mark(i) => Some(EntityKey::Mark(i)),
                Entity::Scene => None,
            };
            let span =
                key.and_then(|k| map.spans.get(&k).copied()).unwrap_or(Span { line: 1, column: 1, end_column: 1 });
            let mut d =
                Diagnostic::new(DiagnosticKind::Semantic, span.line, span.column, span.end_column, v.message.clone());
            d.code = Some(v.code);
            if v.code == ViolationCode::UnknownPoint {
                let col = key
                    .and_then(|k| map.label_cols.get(&k))
                    .and_then(|cols| cols.iter().find(|(l, _)| v.message.ends_with(&l.to_string())))
                    .map(|(_, c)| *c);
                if let Some(col) = col {
                    d.column = col;
                    d.end_column = col + 1;
                }
            }
            d
        })
        .collect();
    out.sort_by_key(|d| (d.line, d.column));
    out
}
