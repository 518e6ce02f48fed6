use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::measure::{angle_deg, close, len, sub, Vec2};
use super::types::{Attribute, Label, NumericMark, Point, Relation, RelationKind, Scene, Shape};
use super::validate::ensure_valid;
use crate::{Error, Result};

/// Parameterized scene families used to synthesize a corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    TriangleWithCevian,
    ParallelLinesTransversal,
    QuadrilateralWithDiagonal,
    CircleWithInscribedTriangle,
}

impl Template {
    pub const ALL: [Template; 4] = [
        Template::TriangleWithCevian,
        Template::ParallelLinesTransversal,
        Template::QuadrilateralWithDiagonal,
        Template::CircleWithInscribedTriangle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::TriangleWithCevian => "triangle-with-cevian",
            Template::ParallelLinesTransversal => "parallel-lines-transversal",
            Template::QuadrilateralWithDiagonal => "quadrilateral-with-diagonal",
            Template::CircleWithInscribedTriangle => "circle-with-inscribed-triangle",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Template::TriangleWithCevian => 0x7472_6963,
            Template::ParallelLinesTransversal => 0x7061_726c,
            Template::QuadrilateralWithDiagonal => 0x7175_6164,
            Template::CircleWithInscribedTriangle => 0x6369_7263,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Template::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| Error::UnknownTemplate(s.to_string()))
    }
}

/// Deterministic scene for `(seed, template)`. The result is quantized to
/// nine significant digits, canonicalized and valid; it carries at least one
/// relation and at least two numeric marks.
pub fn random_scene(seed: u64, template: Template) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ template.tag().rotate_left(32));
    // Rejection is rare; the loop guards against unlucky near-degenerate draws.
    loop {
        let draft = match template {
            Template::TriangleWithCevian => triangle_with_cevian(&mut rng),
            Template::ParallelLinesTransversal => parallel_lines(&mut rng),
            Template::QuadrilateralWithDiagonal => quadrilateral(&mut rng),
            Template::CircleWithInscribedTriangle => inscribed_triangle(&mut rng),
        };
        let Some(draft) = draft else { continue };
        let scene = draft.finish(&mut rng, seed);
        if ensure_valid(&scene).is_ok() {
            return scene;
        }
    }
}

struct Draft {
    points: Vec<Vec2>,
    shapes: Vec<Shape>,
    relations: Vec<Relation>,
    /// Candidate mark targets; two or three are kept.
    mark_targets: Vec<&'static str>,
}

impl Draft {
    fn finish(self, rng: &mut ChaCha8Rng, seed: u64) -> Scene {
        let theta = rng.random_range(0.0..2.0 * PI);
        let (tx, ty) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let (s, c) = theta.sin_cos();
        let points = self
            .points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Point {
                id: Label::nth(i).expect("few points"),
                x: c * x - s * y + tx,
                y: s * x + c * y + ty,
            })
            .collect();
        let mut scene = Scene { points, shapes: self.shapes, relations: self.relations, marks: vec![], seed };

        let mut targets = self.mark_targets;
        let keep = rng.random_range(2..=3.min(targets.len()));
        for i in 0..keep {
            let j = rng.random_range(i..targets.len());
            targets.swap(i, j);
        }
        for t in &targets[..keep] {
            let mark = if t.len() == 2 { NumericMark::length(t, 0.0) } else { NumericMark::angle(t, 0.0) };
            scene.marks.push(mark);
        }
        refresh_marks(&mut scene);
        scene.quantize();
        scene.canonicalize();
        scene
    }
}

/// Recomputes every mark value from the coordinates.
pub(crate) fn refresh_marks(scene: &mut Scene) {
    let values: Vec<f64> = scene
        .marks
        .iter()
        .map(|m| super::measured_quantity(scene, &m.target, m.quantity).unwrap_or(f64::NAN))
        .collect();
    for (m, v) in scene.marks.iter_mut().zip(values) {
        m.value = v;
    }
}

fn is_right(pts: &[Vec2]) -> bool {
    (0..3).any(|i| (angle_deg(pts[(i + 2) % 3], pts[i], pts[(i + 1) % 3]) - 90.0).abs() < 1.0)
}

fn is_isosceles(pts: &[Vec2]) -> bool {
    let s: Vec<f64> = (0..3).map(|i| len(sub(pts[(i + 1) % 3], pts[i]))).collect();
    (0..3).any(|i| (s[i] - s[(i + 1) % 3]).abs() < 1e-2 * s[i].max(s[(i + 1) % 3]))
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())]
}

fn triangle_with_cevian(rng: &mut ChaCha8Rng) -> Option<Draft> {
    let b = rng.random_range(4.0..10.0);
    let attr = pick(
        rng,
        &[Attribute::None, Attribute::RightTriangle, Attribute::IsoscelesTriangle, Attribute::EquilateralTriangle],
    );
    let apex = match attr {
        Attribute::EquilateralTriangle => (b / 2.0, b * 3f64.sqrt() / 2.0),
        Attribute::IsoscelesTriangle => {
            let h = rng.random_range(0.35 * b..1.2 * b);
            if (h - 0.866 * b).abs() < 0.05 * b || (h - 0.5 * b).abs() < 0.05 * b {
                return None;
            }
            (b / 2.0, h)
        }
        Attribute::RightTriangle => {
            let options = [rng.random_range(35.0..80.0), rng.random_range(100.0..145.0)];
            let phi: f64 = pick(rng, &options);
            let r = b / 2.0;
            (r + r * phi.to_radians().cos(), r * phi.to_radians().sin())
        }
        _ => {
            let a = (rng.random_range(0.15 * b..0.85 * b), rng.random_range(0.4 * b..1.1 * b));
            let tri = [a, (0.0, 0.0), (b, 0.0)];
            if is_right(&tri) || is_isosceles(&tri) {
                return None;
            }
            a
        }
    };
    let points = vec![apex, (0.0, 0.0), (b, 0.0), (apex.0, 0.0)];
    let mut shapes = vec![Shape::polygon("ABC", attr), Shape::segment("AD"), Shape::segment("BC")];
    let mut relations = vec![Relation::new(RelationKind::Perpendicular, "AD", "BC")];
    if attr == Attribute::RightTriangle {
        shapes.push(Shape::polygon("ABD", Attribute::None));
        shapes.push(Shape::polygon("CAD", Attribute::None));
        relations.push(Relation::new(RelationKind::Similar, "ABD", "CAD"));
    }
    Some(Draft { points, shapes, relations, mark_targets: vec!["AB", "AC", "BC", "AD", "ABC", "BAC"] })
}

fn parallel_lines(rng: &mut ChaCha8Rng) -> Option<Draft> {
    let l1 = rng.random_range(5.0..10.0);
    let h = rng.random_range(2.0..5.0);
    let c0 = rng.random_range(0.0..l1 / 4.0);
    let l2 = rng.random_range(0.7 * l1..0.9 * l1);
    let g = rng.random_range(0.3 * l1..0.45 * l1);
    let k = rng.random_range(c0 + 0.3 * l2..c0 + 0.6 * l2);
    let (u, w) = (rng.random_range(1.2..1.6), rng.random_range(0.3..0.7));
    let e = (g - (k - g) * u, -h * u);
    let f = (k + (k - g) * w, h * (1.0 + w));
    let points = vec![(0.0, 0.0), (l1, 0.0), (c0, h), (c0 + l2, h), e, f];
    let shapes = vec![Shape::segment("AB"), Shape::segment("CD"), Shape::segment("EF")];
    let relations = vec![
        Relation::new(RelationKind::Parallel, "AB", "CD"),
        Relation::new(RelationKind::Intersects, "AB", "EF"),
        Relation::new(RelationKind::Intersects, "CD", "EF"),
    ];
    Some(Draft { points, shapes, relations, mark_targets: vec!["AB", "CD", "EF", "AEF", "DFE"] })
}

fn quadrilateral(rng: &mut ChaCha8Rng) -> Option<Draft> {
    let attr = pick(rng, &[Attribute::Square, Attribute::Rectangle, Attribute::None]);
    let w = rng.random_range(3.0..8.0);
    let points = match attr {
        Attribute::Square => vec![(0.0, 0.0), (w, 0.0), (w, w), (0.0, w)],
        Attribute::Rectangle => {
            let h = w * rng.random_range(0.45..0.8);
            vec![(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
        }
        _ => {
            let h = w * rng.random_range(0.45..1.0);
            let t = rng.random_range(0.5..2.0);
            vec![(0.0, 0.0), (w, 0.0), (w + t, h), (t, h)]
        }
    };
    let shapes = vec![Shape::polygon("ABCD", attr), Shape::segment("AC"), Shape::segment("BD")];
    let relations = vec![Relation::new(RelationKind::Intersects, "AC", "BD")];
    Some(Draft { points, shapes, relations, mark_targets: vec!["AB", "BC", "AC", "ABC", "BAC"] })
}

fn inscribed_triangle(rng: &mut ChaCha8Rng) -> Option<Draft> {
    let r = rng.random_range(3.0..6.0);
    let attr = pick(
        rng,
        &[Attribute::None, Attribute::RightTriangle, Attribute::IsoscelesTriangle, Attribute::EquilateralTriangle],
    );
    let deg: [f64; 3] = match attr {
        Attribute::EquilateralTriangle => [90.0, 210.0, 330.0],
        Attribute::IsoscelesTriangle => {
            let a = rng.random_range(100.0..160.0);
            if (a - 120.0f64).abs() < 5.0 {
                return None;
            }
            [90.0, 90.0 + a, 90.0 - a]
        }
        Attribute::RightTriangle => {
            let options = [rng.random_range(30.0..75.0), rng.random_range(105.0..150.0)];
            let beta = pick(rng, &options);
            [0.0, beta, 180.0]
        }
        _ => {
            let a = rng.random_range(0.0..360.0);
            let b = a + rng.random_range(60.0..150.0);
            let c = b + rng.random_range(60.0..150.0);
            [a, b, c]
        }
    };
    let on = |d: f64| (r * d.to_radians().cos(), r * d.to_radians().sin());
    let tri = [on(deg[0]), on(deg[1]), on(deg[2])];
    if attr == Attribute::None && (is_right(&tri) || is_isosceles(&tri)) {
        return None;
    }
    let mid = ((tri[1].0 + tri[2].0) / 2.0, (tri[1].1 + tri[2].1) / 2.0);
    if len(mid) < 0.1 * r || close(len(mid), 0.0) {
        return None;
    }
    let points = vec![tri[0], tri[1], tri[2], (0.0, 0.0), mid];
    let shapes = vec![
        Shape::polygon("ABC", attr),
        Shape::segment("BC"),
        Shape::segment("DE"),
        Shape::Circle { center: Label::new('D').expect("label"), radius: r },
    ];
    let relations = vec![Relation::new(RelationKind::Perpendicular, "BC", "DE")];
    Some(Draft { points, shapes, relations, mark_targets: vec!["AD", "BC", "AB", "BAC", "ABC"] })
}
