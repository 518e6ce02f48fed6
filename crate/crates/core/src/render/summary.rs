use std::collections::BTreeMap;

use serde::Serialize;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    fn of(pts: &[(f64, f64)]) -> Option<Self> {
        let first = pts.first()?;
        let mut b = BBox { min_x: first.0, min_y: first.1, max_x: first.0, max_y: first.1 };
        for &(x, y) in pts {
            b.min_x = b.min_x.min(x);
            b.min_y = b.min_y.min(y);
            b.max_x = b.max_x.max(x);
            b.max_y = b.max_y.max(y);
        }
        Some(b)
    }

    fn union(self, o: BBox) -> BBox {
        BBox {
            min_x: self.min_x.min(o.min_x),
            min_y: self.min_y.min(o.min_y),
            max_x: self.max_x.max(o.max_x),
            max_y: self.max_y.max(o.max_y),
        }
    }
}

/// Pixel-free description of a rendered diagram.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SvgSummary {
    pub lines: usize,
    pub polygons: usize,
    pub circles: usize,
    pub paths: usize,
    /// All `text` elements: point labels plus mark values.
    pub text_labels: usize,
    pub letter_labels: usize,
    pub mark_texts: usize,
    pub element_boxes: Vec<(String, BBox)>,
    pub bounding_box: Option<BBox>,
    /// `stroke@width` → number of stroked elements.
    pub strokes: BTreeMap<String, usize>,
}

fn num(node: roxmltree::Node, attr: &str) -> Result<f64> {
    let raw = node
        .attribute(attr)
        .ok_or_else(|| Error::MalformedSvg(format!("<{}> missing `{attr}`", node.tag_name().name())))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::MalformedSvg(format!("<{}> has non-numeric `{attr}`", node.tag_name().name())))
}

fn path_points(d: &str) -> Result<Vec<(f64, f64)>> {
    // Only the `M x y A rx ry rot large sweep x y` form emitted by the renderer.
    let toks: Vec<&str> = d.split_whitespace().collect();
    let f = |i: usize| -> Result<f64> {
        toks.get(i).and_then(|t| t.parse().ok()).ok_or_else(|| Error::MalformedSvg(format!("bad path data `{d}`")))
    };
    match toks.first() {
        Some(&"M") if toks.get(3) == Some(&"A") => Ok(vec![(f(1)?, f(2)?), (f(9)?, f(10)?)]),
        Some(&"M") => Ok(vec![(f(1)?, f(2)?)]),
        _ => Err(Error::MalformedSvg(format!("bad path data `{d}`"))),
    }
}

/// Counts elements, collects bounding boxes and the stroke inventory.
/// Insensitive to whitespace between and inside elements.
pub fn rasterize_features(svg: &str) -> Result<SvgSummary> {
    let doc = roxmltree::Document::parse(svg).map_err(|e| Error::MalformedSvg(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" {
        return Err(Error::MalformedSvg(format!("root element is <{}>", root.tag_name().name())));
    }
    let mut s = SvgSummary::default();
    for node in root.descendants().filter(|n| n.is_element() && *n != root) {
        let tag = node.tag_name().name();
        let pts = match tag {
            "line" => {
                s.lines += 1;
                vec![(num(node, "x1")?, num(node, "y1")?), (num(node, "x2")?, num(node, "y2")?)]
            }
            "polygon" => {
                s.polygons += 1;
                let raw =
                    node.attribute("points").ok_or_else(|| Error::MalformedSvg("<polygon> missing points".into()))?;
                raw.split_whitespace()
                    .map(|pair| {
                        let (x, y) =
                            pair.split_once(',').ok_or_else(|| Error::MalformedSvg(format!("bad point `{pair}`")))?;
                        Ok((
                            x.parse().map_err(|_| Error::MalformedSvg(format!("bad point `{pair}`")))?,
                            y.parse().map_err(|_| Error::MalformedSvg(format!("bad point `{pair}`")))?,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            "circle" => {
                s.circles += 1;
                let (cx, cy, r) = (num(node, "cx")?, num(node, "cy")?, num(node, "r")?);
                vec![(cx - r, cy - r), (cx + r, cy + r)]
            }
            "path" => {
                s.paths += 1;
                path_points(node.attribute("d").unwrap_or(""))?
            }
            "text" => {
                s.text_labels += 1;
                match node.attribute("class") {
                    Some("mark") => s.mark_texts += 1,
                    _ => s.letter_labels += 1,
                }
                vec![(num(node, "x")?, num(node, "y")?)]
            }
            _ => continue,
        };
        if let Some(stroke) = node.attribute("stroke") {
            let width = node.attribute("stroke-width").unwrap_or("1").trim();
            *s.strokes.entry(format!("{}@{width}", stroke.trim())).or_default() += 1;
        }
        if let Some(b) = BBox::of(&pts) {
            s.bounding_box = Some(s.bounding_box.map_or(b, |o| o.union(b)));
            s.element_boxes.push((tag.to_string(), b));
        }
    }
    Ok(s)
}
