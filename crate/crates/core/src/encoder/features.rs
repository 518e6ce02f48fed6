use std::collections::BTreeMap;

use crate::geometry::{
    angle_deg, ensure_valid, len, polygon_angles, polygon_sides, sub, Attribute, Label, RelationKind, Scene, Shape,
    Vec2,
};
use crate::render::RenderOptions;
use crate::{Real, Result};

use super::FeatureVector;

pub const TEXT_DIM: usize = 256;
pub const IMAGE_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

/// Bucket in `[0, 256)` and sign of a token: low byte of the hash picks the
/// bucket, bit 32 picks the sign (set = −1).
pub fn token_slot(token: &str) -> (usize, f64) {
    let h = fnv1a64(token.as_bytes());
    let sign = if (h >> 32) & 1 == 1 { -1.0 } else { 1.0 };
    ((h % TEXT_DIM as u64) as usize, sign)
}

fn unit_or_e1<T: Real>(raw: Vec<f64>) -> FeatureVector<T> {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = if norm == 0.0 {
        let mut e1 = vec![T::zero(); raw.len()];
        e1[0] = T::one();
        e1
    } else {
        raw.iter().map(|v| T::of(v / norm)).collect()
    };
    FeatureVector { values }
}

/// Signed hashed bag of tokens, L2-normalized (empty text maps to e₁).
pub fn text_features<T: Real>(text: &str) -> FeatureVector<T> {
    let mut raw = vec![0.0; TEXT_DIM];
    for t in tokens(text) {
        let (bucket, sign) = token_slot(&t);
        raw[bucket] += sign;
    }
    unit_or_e1(raw)
}

/// Adds unit mass at continuous bin coordinate `pos`, split linearly between neighbours.
fn soft_bin(hist: &mut [f64], pos: f64) {
    let n = hist.len();
    let pos = pos.clamp(0.0, (n - 1) as f64);
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    hist[lo] += 1.0 - frac;
    if lo + 1 < n {
        hist[lo + 1] += frac;
    }
}

/// Offsets of the descriptor blocks.
pub mod layout {
    pub const COUNTS: usize = 0;
    pub const MARK_COUNT: usize = 4;
    pub const ANGLES: usize = 5;
    pub const LENGTHS: usize = 21;
    pub const RELATIONS: usize = 37;
    pub const ATTRIBUTES: usize = 42;
    pub const DEGREES: usize = 48;
    pub const POLYGON_SIZES: usize = 56;
    pub const LABEL_WALK: usize = 59;
    pub const BIAS: usize = 63;
}

/// Unnormalized 64-dim geometric descriptor of a scene.
///
/// Built only from angles, length ratios and incidence counts, so it is
/// invariant under translation, rotation and uniform scaling. Histograms use
/// linear soft binning, which keeps them continuous in the coordinates.
pub fn image_descriptor(scene: &Scene, opts: &RenderOptions) -> Result<Vec<f64>> {
    use layout::*;
    ensure_valid(scene)?;
    let mut d = vec![0.0; IMAGE_DIM];
    let at = |l: Label| -> Vec2 {
        let p = scene.point(l).expect("validated");
        (p.x, p.y)
    };

    let mut lengths = Vec::new();
    let mut degree: BTreeMap<Label, usize> = scene.points.iter().map(|p| (p.id, 0)).collect();
    d[COUNTS] = scene.points.len() as f64;
    for s in &scene.shapes {
        match s {
            Shape::Segment { vertices } => {
                d[COUNTS + 1] += 1.0;
                lengths.push(len(sub(at(vertices.0[1]), at(vertices.0[0]))));
                vertices.iter().for_each(|l| *degree.entry(l).or_default() += 1);
            }
            Shape::Polygon { vertices, attribute } => {
                d[COUNTS + 2] += 1.0;
                let pts: Vec<Vec2> = vertices.iter().map(at).collect();
                lengths.extend(polygon_sides(&pts));
                let mut angles = [0.0; 16];
                for a in polygon_angles(&pts) {
                    soft_bin(&mut angles, a / 12.0);
                }
                d[ANGLES..ANGLES + 16].iter_mut().zip(angles).for_each(|(x, a)| *x += a);
                let ai = Attribute::ALL.iter().position(|a| a == attribute).expect("known attribute");
                d[ATTRIBUTES + ai] += 1.0;
                d[POLYGON_SIZES + (vertices.len() - 3).min(2)] += 1.0;
                vertices.iter().for_each(|l| *degree.entry(l).or_default() += 2);
            }
            Shape::Circle { center, radius } => {
                d[COUNTS + 3] += 1.0;
                lengths.push(*radius);
                *degree.entry(*center).or_default() += 1;
            }
        }
    }
    if opts.include_numeric_marks {
        d[MARK_COUNT] = scene.marks.len() as f64;
    }
    let longest = lengths.iter().copied().fold(0.0, f64::max);
    if longest > 0.0 {
        let mut hist = [0.0; 16];
        for l in &lengths {
            soft_bin(&mut hist, l / longest * 15.0);
        }
        d[LENGTHS..LENGTHS + 16].copy_from_slice(&hist);
    }
    for r in &scene.relations {
        let ri = RelationKind::ALL.iter().position(|k| *k == r.kind).expect("known relation");
        d[RELATIONS + ri] += 1.0;
    }
    for deg in degree.values() {
        d[DEGREES + (*deg).min(7)] += 1.0;
    }
    // turning angles along the alphabetical walk A → B → C → …; sensitive to label placement
    let walk: Vec<Vec2> = scene.points.iter().map(|p| (p.x, p.y)).collect();
    let mut hist = [0.0; 4];
    for w in walk.windows(3) {
        soft_bin(&mut hist, angle_deg(w[0], w[1], w[2]) / 60.0);
    }
    d[LABEL_WALK..LABEL_WALK + 4].copy_from_slice(&hist);
    d[BIAS] = 1.0;
    Ok(d)
}

/// L2-normalized [`image_descriptor`].
pub fn image_features<T: Real>(scene: &Scene, opts: &RenderOptions) -> Result<FeatureVector<T>> {
    Ok(unit_or_e1(image_descriptor(scene, opts)?))
}

#[cfg(test)]
mod tests {
    use super::layout::*;
    use super::*;
    use crate::geometry::{random_scene, Point, Template};

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn text_determinism_and_degenerate() {
        let a: FeatureVector<f64> = text_features("AB = 5; angle ABC = 60 degrees");
        assert_eq!(a, text_features("AB = 5; angle ABC = 60 degrees"));
        let e: FeatureVector<f64> = text_features("");
        assert_eq!(e.values[0], 1.0);
        assert!(e.values[1..].iter().all(|&v| v == 0.0));
        let n: f64 = a.values.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn numbers_hash_apart() {
        // "5" and "10" occupy different signed slots, so the vectors differ
        assert_ne!(token_slot("5"), token_slot("10"));
        let a: FeatureVector<f64> = text_features("AB = 5");
        let b: FeatureVector<f64> = text_features("AB = 10");
        assert_ne!(a, b);
    }

    fn square(c: (f64, f64)) -> Scene {
        Scene {
            points: vec![
                Point::new('A', 0.0, 0.0),
                Point::new('B', 2.0, 0.0),
                Point::new('C', c.0, c.1),
                Point::new('D', 0.0, 2.0),
            ],
            shapes: vec![Shape::polygon("ABCD", Attribute::None)],
            relations: vec![],
            marks: vec![],
            seed: 0,
        }
    }

    #[test]
    fn perturbed_square_moves_angle_mass() {
        let a = image_descriptor(&square((2.0, 2.0)), &RenderOptions::default()).unwrap();
        let b = image_descriptor(&square((2.6, 2.3)), &RenderOptions::default()).unwrap();
        assert_ne!(a[ANGLES..ANGLES + 16], b[ANGLES..ANGLES + 16]);
    }

    #[test]
    fn marks_off_masks_only_mark_count() {
        let s = random_scene(5, Template::QuadrilateralWithDiagonal);
        let on = image_descriptor(&s, &RenderOptions::default()).unwrap();
        let off = image_descriptor(&s, &RenderOptions::without_marks()).unwrap();
        for i in 0..IMAGE_DIM {
            if i == MARK_COUNT {
                assert!(on[i] > 0.0 && off[i] == 0.0);
            } else {
                assert_eq!(on[i], off[i]);
            }
        }
    }

    #[test]
    fn rigid_and_scale_invariance() {
        for seed in 0..50 {
            let s = random_scene(seed, Template::ALL[(seed % 4) as usize]);
            let base = image_descriptor(&s, &RenderOptions::default()).unwrap();
            let (sn, cs) = 30f64.to_radians().sin_cos();
            let mut moved = s.clone();
            moved.map_points(|x, y| (3.0 * (cs * x - sn * y) + 1.5, 3.0 * (sn * x + cs * y) - 2.0));
            for sh in &mut moved.shapes {
                if let Shape::Circle { radius, .. } = sh {
                    *radius *= 3.0;
                }
            }
            for m in &mut moved.marks {
                if m.quantity == crate::geometry::Quantity::Length {
                    m.value *= 3.0;
                }
            }
            let other = image_descriptor(&moved, &RenderOptions::default()).unwrap();
            for (a, b) in base.iter().zip(&other) {
                assert!((a - b).abs() <= 1e-9, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn label_swap_changes_descriptor() {
        let s = random_scene(11, Template::ParallelLinesTransversal);
        let mut t = s.clone();
        let (a, b) = (Label::new('A').unwrap(), Label::new('C').unwrap());
        t.relabel(|l| {
            if l == a {
                b
            } else if l == b {
                a
            } else {
                l
            }
        });
        t.canonicalize();
        assert_ne!(
            image_descriptor(&s, &RenderOptions::default()).unwrap(),
            image_descriptor(&t, &RenderOptions::default()).unwrap()
        );
    }
}
