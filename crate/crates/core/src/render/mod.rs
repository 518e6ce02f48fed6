//! Deterministic scene → SVG rendering.
//!
//! Output is a small SVG 1.1 subset (`line`, `polygon`, `circle`, `path`,
//! `text`), one element per line. Every numeric-mark element carries
//! `class="mark"`, so toggling marks removes exactly those lines.

mod summary;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{ensure_valid, format_compact, Label, Quantity, Scene, Shape};
use crate::{Error, Result};

pub use summary::{rasterize_features, BBox, SvgSummary};

/// Offset of a point label from its incident shapes' centroid, in pixels.
pub const LABEL_OFFSET: f64 = 12.0;
/// Radius of the arc drawn for angle marks, in pixels.
pub const ARC_RADIUS: f64 = 20.0;

const STROKE: &str = "#000000";
const MARK_STROKE: &str = "#1f5fbf";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub include_numeric_marks: bool,
    pub width: u32,
    pub height: u32,
    pub margin_fraction: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { include_numeric_marks: true, width: 512, height: 512, margin_fraction: 0.1 }
    }
}

impl RenderOptions {
    pub fn without_marks() -> Self {
        RenderOptions { include_numeric_marks: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::out_of_range("canvas", format!("{}x{}", self.width, self.height)));
        }
        if !(0.0..=0.4).contains(&self.margin_fraction) {
            return Err(Error::out_of_range("margin_fraction", self.margin_fraction.to_string()));
        }
        Ok(())
    }
}

/// Maps scene coordinates onto the canvas (y axis flipped).
struct Layout {
    min: (f64, f64),
    scale: f64,
    offset: (f64, f64),
    height: f64,
}

impl Layout {
    fn fit(scene: &Scene, opts: &RenderOptions) -> Result<Self> {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut grow = |x: f64, y: f64| {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        };
        for p in &scene.points {
            grow(p.x, p.y);
        }
        for s in &scene.shapes {
            if let Shape::Circle { center, radius } = s {
                let c = scene.point(*center).expect("validated");
                grow(c.x - radius, c.y - radius);
                grow(c.x + radius, c.y + radius);
            }
        }
        let (bw, bh) = (hi.0 - lo.0, hi.1 - lo.1);
        if !(bw > 0.0 || bh > 0.0) {
            return Err(Error::ZeroExtent);
        }
        let (w, h) = (opts.width as f64, opts.height as f64);
        let avail = 1.0 - 2.0 * opts.margin_fraction;
        let sx = if bw > 0.0 { w * avail / bw } else { f64::INFINITY };
        let sy = if bh > 0.0 { h * avail / bh } else { f64::INFINITY };
        let scale = sx.min(sy);
        let offset = ((w - bw * scale) / 2.0, (h - bh * scale) / 2.0);
        Ok(Layout { min: lo, scale, offset, height: h })
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (self.offset.0 + (x - self.min.0) * self.scale, self.height - (self.offset.1 + (y - self.min.1) * self.scale))
    }
}

fn n(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn unit(v: (f64, f64)) -> Option<(f64, f64)> {
    let l = v.0.hypot(v.1);
    (l > 1e-9).then(|| (v.0 / l, v.1 / l))
}

fn mean(pts: &[(f64, f64)]) -> (f64, f64) {
    let k = pts.len() as f64;
    (pts.iter().map(|p| p.0).sum::<f64>() / k, pts.iter().map(|p| p.1).sum::<f64>() / k)
}

/// Renders `scene` to SVG text. Identical inputs give byte-identical output.
pub fn render(scene: &Scene, opts: &RenderOptions) -> Result<String> {
    opts.validate()?;
    ensure_valid(scene)?;
    let layout = Layout::fit(scene, opts)?;
    let at = |l: Label| {
        let p = scene.point(l).expect("validated");
        layout.px(p.x, p.y)
    };
    let all: Vec<(f64, f64)> = scene.points.iter().map(|p| layout.px(p.x, p.y)).collect();
    let scene_centroid = mean(&all);

    let mut out = String::new();
    let (w, h) = (opts.width, opts.height);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .expect("string write");

    for shape in &scene.shapes {
        match shape {
            Shape::Segment { vertices } => {
                let (a, b) = (at(vertices.0[0]), at(vertices.0[1]));
                writeln!(
                    out,
                    r#"<line class="shape" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{STROKE}" stroke-width="2"/>"#,
                    n(a.0),
                    n(a.1),
                    n(b.0),
                    n(b.1)
                )
            }
            Shape::Polygon { vertices, .. } => {
                let pts: Vec<String> = vertices.iter().map(at).map(|p| format!("{},{}", n(p.0), n(p.1))).collect();
                writeln!(
                    out,
                    r#"<polygon class="shape" points="{}" fill="none" stroke="{STROKE}" stroke-width="2"/>"#,
                    pts.join(" ")
                )
            }
            Shape::Circle { center, radius } => {
                let c = at(*center);
                writeln!(
                    out,
                    r#"<circle class="shape" cx="{}" cy="{}" r="{}" fill="none" stroke="{STROKE}" stroke-width="2"/>"#,
                    n(c.0),
                    n(c.1),
                    n(radius * layout.scale)
                )
            }
        }
        .expect("string write");
    }

    for p in &scene.points {
        let here = layout.px(p.x, p.y);
        let centroids: Vec<(f64, f64)> = scene
            .shapes
            .iter()
            .filter(|s| s.labels().contains(&p.id))
            .map(|s| mean(&s.labels().into_iter().map(at).collect::<Vec<_>>()))
            .collect();
        let dir = (!centroids.is_empty())
            .then(|| mean(&centroids))
            .and_then(|c| unit((here.0 - c.0, here.1 - c.1)))
            .or_else(|| unit((here.0 - scene_centroid.0, here.1 - scene_centroid.1)))
            .unwrap_or((std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2));
        writeln!(
            out,
            r#"<text class="label" x="{}" y="{}" font-size="16" text-anchor="middle" dominant-baseline="middle">{}</text>"#,
            n(here.0 + LABEL_OFFSET * dir.0),
            n(here.1 + LABEL_OFFSET * dir.1),
            p.id
        )
        .expect("string write");
    }

    if opts.include_numeric_marks {
        for m in &scene.marks {
            let pts: Vec<(f64, f64)> = m.target.iter().map(at).collect();
            match m.quantity {
                Quantity::Length => {
                    let mid = ((pts[0].0 + pts[1].0) / 2.0, (pts[0].1 + pts[1].1) / 2.0);
                    let normal = unit((pts[0].1 - pts[1].1, pts[1].0 - pts[0].0)).unwrap_or((0.0, -1.0));
                    // place the number on the side facing away from the scene centre
                    let away = (mid.0 - scene_centroid.0) * normal.0 + (mid.1 - scene_centroid.1) * normal.1;
                    let s = if away < 0.0 { -1.0 } else { 1.0 };
                    writeln!(
                        out,
                        r#"<text class="mark" x="{}" y="{}" font-size="12" text-anchor="middle" dominant-baseline="middle" fill="{MARK_STROKE}">{}</text>"#,
                        n(mid.0 + s * 10.0 * normal.0),
                        n(mid.1 + s * 10.0 * normal.1),
                        format_compact(m.value)
                    )
                }
                Quantity::Angle => {
                    let b = pts[1];
                    let u = unit((pts[0].0 - b.0, pts[0].1 - b.1)).unwrap_or((1.0, 0.0));
                    let v = unit((pts[2].0 - b.0, pts[2].1 - b.1)).unwrap_or((0.0, 1.0));
                    let sweep = if u.0 * v.1 - u.1 * v.0 > 0.0 { 1 } else { 0 };
                    let bis = unit((u.0 + v.0, u.1 + v.1)).unwrap_or((-u.1, u.0));
                    writeln!(
                        out,
                        r#"<path class="mark" d="M {} {} A {ARC_RADIUS} {ARC_RADIUS} 0 0 {sweep} {} {}" fill="none" stroke="{MARK_STROKE}" stroke-width="1.5"/>"#,
                        n(b.0 + ARC_RADIUS * u.0),
                        n(b.1 + ARC_RADIUS * u.1),
                        n(b.0 + ARC_RADIUS * v.0),
                        n(b.1 + ARC_RADIUS * v.1)
                    )
                    .expect("string write");
                    writeln!(
                        out,
                        r#"<text class="mark" x="{}" y="{}" font-size="12" text-anchor="middle" dominant-baseline="middle" fill="{MARK_STROKE}">{}°</text>"#,
                        n(b.0 + 1.6 * ARC_RADIUS * bis.0),
                        n(b.1 + 1.6 * ARC_RADIUS * bis.1),
                        format_compact(m.value)
                    )
                }
            }
            .expect("string write");
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// File name for a rendered corpus item: `<corpus-id>_<index>[_neg<k>].svg`.
pub fn svg_file_name(corpus_id: &str, index: usize, negative: Option<usize>) -> String {
    match negative {
        Some(k) => format!("{corpus_id}_{index}_neg{k}.svg"),
        None => format!("{corpus_id}_{index}.svg"),
    }
}
