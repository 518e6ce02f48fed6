use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{negative_id, Category, Modality, Negative, NegativeGroup};
use crate::caption::{caption_equals_modulo_cyclic, cyclically_equal, Caption, CyclicRule, Fact, ShapeFact};
use crate::geometry::{
    attribute_holds, format_compact, relation_defect, round_sig9, Attribute, Labels, Quantity, Relation, RelationKind,
    Scene, Vec2, TOLERANCE,
};
use crate::{Error, Result};

/// Multiplicative perturbations for marked values.
pub(crate) const NUMERIC_FACTORS: [f64; 4] = [0.5, 0.75, 1.5, 2.0];

const ORDER: [Category; 4] = [Category::Ordering, Category::ShapeAttribute, Category::Relation, Category::Numeric];

/// Caption negatives together with their captions and the replaced fact pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleNegatives {
    pub group: NegativeGroup,
    pub captions: Vec<Caption>,
    /// `(original, replacement)` per negative.
    pub edits: Vec<(Fact, Fact)>,
}

/// Multiset difference of two fact lists: `(only in a, only in b)`.
pub fn fact_diff(a: &[Fact], b: &[Fact]) -> (Vec<Fact>, Vec<Fact>) {
    let mut rest: Vec<Option<&Fact>> = b.iter().map(Some).collect();
    let mut removed = Vec::new();
    for f in a {
        match rest.iter_mut().find(|g| g.is_some_and(|g| g == f)) {
            Some(slot) => *slot = None,
            None => removed.push(f.clone()),
        }
    }
    (removed, rest.into_iter().flatten().cloned().collect())
}

fn attribute_targets(from: Attribute, sides: usize) -> &'static [Attribute] {
    use Attribute::*;
    match (from, sides) {
        (Square, _) => &[Rectangle],
        (Rectangle, _) => &[Square],
        (RightTriangle, _) => &[IsoscelesTriangle, EquilateralTriangle],
        (IsoscelesTriangle, _) => &[RightTriangle, EquilateralTriangle],
        (EquilateralTriangle, _) => &[IsoscelesTriangle, RightTriangle],
        (None, 3) => &[RightTriangle, IsoscelesTriangle, EquilateralTriangle],
        (None, 4) => &[Square, Rectangle],
        (None, _) => &[],
    }
}

fn relation_target(from: RelationKind) -> Option<RelationKind> {
    match from {
        RelationKind::Parallel => Some(RelationKind::Perpendicular),
        RelationKind::Perpendicular => Some(RelationKind::Parallel),
        RelationKind::Intersects => Some(RelationKind::Parallel),
        RelationKind::Similar => Some(RelationKind::Congruent),
        RelationKind::Congruent => None,
    }
}

fn factor_valid(quantity: Quantity, value: f64, factor: f64) -> bool {
    let v = round_sig9(value * factor);
    match quantity {
        Quantity::Length => v > 0.0,
        Quantity::Angle => v > 0.0 && v < 180.0,
    }
}

fn n_orderings(n: usize) -> usize {
    (1..=n).product::<usize>() - 2 * n
}

/// Per-category candidate state. Finite candidate sets are listed up front;
/// orderings and numeric factors are drawn by rejection sampling.
struct Pools {
    /// (fact index, vertex count) of polygons with at least four vertices.
    orderings: Vec<(usize, usize)>,
    attributes: Vec<(usize, Fact)>,
    relations: Vec<(usize, Fact)>,
    /// (fact index, valid factors)
    marks: Vec<(usize, Vec<f64>)>,
}

impl Pools {
    fn build(caption: &Caption, scene: &Scene) -> Result<Self> {
        let mut pools =
            Pools { orderings: Vec::new(), attributes: Vec::new(), relations: Vec::new(), marks: Vec::new() };
        for (i, f) in caption.facts.iter().enumerate() {
            match f {
                Fact::Ordering { vertices, .. } if vertices.len() >= 4 => pools.orderings.push((i, vertices.len())),
                Fact::Shape(ShapeFact::Polygon { index, sides, attribute }) => {
                    let shape =
                        scene.shapes.get(*index).ok_or_else(|| Error::UnresolvedTarget(format!("polygon #{index}")))?;
                    let pts: Vec<Vec2> = shape
                        .labels()
                        .into_iter()
                        .map(|l| scene.point(l).map(|p| (p.x, p.y)))
                        .collect::<Option<_>>()
                        .ok_or_else(|| Error::UnresolvedTarget(format!("polygon #{index}")))?;
                    for &to in attribute_targets(*attribute, *sides) {
                        if !attribute_holds(&pts, to) {
                            let fact = Fact::Shape(ShapeFact::Polygon { index: *index, sides: *sides, attribute: to });
                            pools.attributes.push((i, fact));
                        }
                    }
                }
                Fact::Relation { relation, operands } => {
                    if let Some(to) = relation_target(*relation) {
                        let probe = Relation { kind: to, operands: operands.clone() };
                        if relation_defect(scene, &probe)? > TOLERANCE {
                            pools.relations.push((i, Fact::Relation { relation: to, operands: operands.clone() }));
                        }
                    }
                }
                Fact::Mark { quantity, value, .. } => {
                    let valid: Vec<f64> =
                        NUMERIC_FACTORS.iter().copied().filter(|&k| factor_valid(*quantity, *value, k)).collect();
                    if !valid.is_empty() {
                        pools.marks.push((i, valid));
                    }
                }
                _ => {}
            }
        }
        Ok(pools)
    }

    fn capacity(&self, c: Category) -> usize {
        match c {
            Category::Ordering => self.orderings.iter().map(|&(_, n)| n_orderings(n)).sum(),
            Category::ShapeAttribute => self.attributes.len(),
            Category::Relation => self.relations.len(),
            Category::Numeric => self.marks.iter().map(|(_, v)| v.len()).sum(),
            _ => 0,
        }
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    if xs.len() == 1 {
        &xs[0]
    } else {
        &xs[rng.random_range(0..xs.len())]
    }
}

/// Draws one unused edit of category `c`, or `None` when the category is exhausted.
fn draw(
    c: Category,
    pools: &Pools,
    facts: &[Fact],
    used: &mut BTreeSet<(usize, String)>,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, Fact, String)> {
    let fresh = |used: &BTreeSet<(usize, String)>, i: usize, f: &Fact| !used.contains(&(i, key(f)));
    let open: Vec<usize> = match c {
        Category::Ordering => (0..pools.orderings.len())
            .filter(|&p| {
                let (i, n) = pools.orderings[p];
                used.range((i, String::new())..(i + 1, String::new())).count() < n_orderings(n)
            })
            .collect(),
        Category::ShapeAttribute => (0..pools.attributes.len())
            .filter(|&p| fresh(used, pools.attributes[p].0, &pools.attributes[p].1))
            .collect(),
        Category::Relation => {
            (0..pools.relations.len()).filter(|&p| fresh(used, pools.relations[p].0, &pools.relations[p].1)).collect()
        }
        Category::Numeric => (0..pools.marks.len())
            .filter(|&p| {
                let (i, ref ks) = pools.marks[p];
                used.range((i, String::new())..(i + 1, String::new())).count() < ks.len()
            })
            .collect(),
        _ => Vec::new(),
    };
    if open.is_empty() {
        return None;
    }
    let p = *pick(rng, &open);
    let (i, new, delta) = match c {
        Category::Ordering => {
            let i = pools.orderings[p].0;
            let Fact::Ordering { polygon, vertices } = &facts[i] else { unreachable!("ordering pool holds orderings") };
            loop {
                let mut perm = vertices.0.clone();
                perm.shuffle(rng);
                if cyclically_equal(&vertices.0, &perm, CyclicRule::default()) {
                    continue;
                }
                let new = Fact::Ordering { polygon: *polygon, vertices: Labels(perm) };
                if fresh(used, i, &new) {
                    let delta = format!("ordering {vertices} -> {}", fact_labels(&new));
                    break (i, new, delta);
                }
            }
        }
        Category::ShapeAttribute => {
            let (i, new) = pools.attributes[p].clone();
            let (
                Fact::Shape(ShapeFact::Polygon { attribute: from, .. }),
                Fact::Shape(ShapeFact::Polygon { attribute: to, .. }),
            ) = (&facts[i], &new)
            else {
                unreachable!("attribute pool holds polygons")
            };
            let order = polygon_order(facts, i);
            (i, new.clone(), format!("attribute of {order}: {} -> {}", from.keyword(), to.keyword()))
        }
        Category::Relation => {
            let (i, new) = pools.relations[p].clone();
            let (Fact::Relation { relation: from, operands: [a, b] }, Fact::Relation { relation: to, .. }) =
                (&facts[i], &new)
            else {
                unreachable!("relation pool holds relations")
            };
            (i, new.clone(), format!("relation {a},{b}: {} -> {}", from.keyword(), to.keyword()))
        }
        Category::Numeric => {
            let (i, ref valid) = pools.marks[p];
            let Fact::Mark { quantity, target, value } = &facts[i] else { unreachable!("mark pool holds marks") };
            loop {
                let k = NUMERIC_FACTORS[rng.random_range(0..NUMERIC_FACTORS.len())];
                // out-of-range angles are redrawn
                if !valid.contains(&k) {
                    continue;
                }
                let new = Fact::Mark { quantity: *quantity, target: target.clone(), value: round_sig9(value * k) };
                if fresh(used, i, &new) {
                    let Fact::Mark { value: to, .. } = &new else { unreachable!() };
                    let delta = format!(
                        "{} {target}: {} -> {}",
                        quantity.keyword(),
                        format_compact(*value),
                        format_compact(*to)
                    );
                    break (i, new, delta);
                }
            }
        }
        _ => return None,
    };
    used.insert((i, key(&new)));
    Some((i, new, delta))
}

fn key(f: &Fact) -> String {
    serde_json::to_string(f).expect("facts serialize")
}

fn fact_labels(f: &Fact) -> String {
    match f {
        Fact::Ordering { vertices, .. } => vertices.to_string(),
        _ => String::new(),
    }
}

fn polygon_order(facts: &[Fact], shape_fact: usize) -> String {
    let Fact::Shape(ShapeFact::Polygon { index, .. }) = &facts[shape_fact] else { return String::new() };
    facts
        .iter()
        .find_map(|f| match f {
            Fact::Ordering { polygon, vertices } if polygon == index => Some(vertices.to_string()),
            _ => None,
        })
        .unwrap_or_default()
}

/// `count` caption negatives, each replacing exactly one fact of `caption`.
///
/// Categories rotate in the order ordering, shape-attribute, relation,
/// numeric, skipping inapplicable or exhausted ones. Repeats appear only
/// after every category is exhausted.
pub fn rule_negatives(
    positive: &str,
    caption: &Caption,
    scene: &Scene,
    count: usize,
    seed: u64,
) -> Result<RuleNegatives> {
    if count == 0 {
        return Err(Error::out_of_range("count", "0"));
    }
    let pools = Pools::build(caption, scene)?;
    let categories: Vec<Category> = ORDER.into_iter().filter(|&c| pools.capacity(c) > 0).collect();
    if categories.is_empty() {
        return Err(Error::NotApplicable(format!("rule negative for {positive}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = BTreeSet::new();
    let mut out = RuleNegatives {
        group: NegativeGroup::new(positive, Modality::Text, Vec::new()),
        captions: Vec::new(),
        edits: Vec::new(),
    };
    let mut turn = 0;
    while out.captions.len() < count {
        let mut drawn = None;
        for step in 0..categories.len() {
            let c = categories[(turn + step) % categories.len()];
            if let Some(d) = draw(c, &pools, &caption.facts, &mut used, &mut rng) {
                turn = (turn + step + 1) % categories.len();
                drawn = Some((c, d));
                break;
            }
        }
        let Some((category, (i, new, delta))) = drawn else {
            used.clear();
            continue;
        };
        let mut facts = caption.facts.clone();
        let old = std::mem::replace(&mut facts[i], new.clone());
        let neg = Caption::from_facts(facts);
        if neg.text == caption.text || caption_equals_modulo_cyclic(&neg, caption) {
            return Err(Error::InvalidBatch(format!("negative of {positive} equals its positive")));
        }
        out.group.negatives.push(Negative { id: negative_id(positive, out.captions.len()), category, delta });
        out.captions.push(neg);
        out.edits.push((old, new));
    }
    out.group.ratio = out.group.negatives.len();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::caption;
    use crate::geometry::{random_scene, NumericMark, Point, Shape, Template};

    fn square() -> Scene {
        Scene {
            points: vec![
                Point::new('A', 0.0, 0.0),
                Point::new('B', 2.0, 0.0),
                Point::new('C', 2.0, 2.0),
                Point::new('D', 0.0, 2.0),
            ],
            shapes: vec![Shape::polygon("ABCD", Attribute::Square)],
            relations: vec![],
            marks: vec![],
            seed: 0,
        }
    }

    fn parallel() -> Scene {
        Scene {
            points: vec![
                Point::new('A', 0.0, 0.0),
                Point::new('B', 4.0, 0.0),
                Point::new('C', 0.0, 1.0),
                Point::new('D', 4.0, 1.0),
            ],
            shapes: vec![Shape::segment("AB"), Shape::segment("CD")],
            relations: vec![Relation::new(RelationKind::Parallel, "AB", "CD")],
            marks: vec![NumericMark::length("AB", 4.0)],
            seed: 0,
        }
    }

    #[test]
    fn square_becomes_rectangle() {
        let s = square();
        let c = caption(&s).unwrap();
        let r = rule_negatives("sq", &c, &s, 2, 1).unwrap();
        let i = r.group.negatives.iter().position(|n| n.category == Category::ShapeAttribute).unwrap();
        assert!(c.text.contains("is a square"));
        assert!(r.captions[i].text.contains("is a rectangle"));
        assert!(!r.captions[i].text.contains("is a square"));
    }

    #[test]
    fn parallel_becomes_perpendicular() {
        let s = parallel();
        let c = caption(&s).unwrap();
        let r = rule_negatives("p", &c, &s, 2, 3).unwrap();
        let i = r.group.negatives.iter().position(|n| n.category == Category::Relation).unwrap();
        assert!(r.captions[i].text.contains("AB is perpendicular to CD"));
        assert_eq!(r.group.negatives[i].delta, "relation AB,CD: parallel -> perpendicular");
    }

    #[test]
    fn rejected_cyclic_first_draw() {
        let abcd: Labels = "ABCD".into();
        let cdab: Labels = "CDAB".into();
        let seed = (0u64..10_000)
            .find(|&s| {
                let mut p = abcd.0.clone();
                p.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
                p == cdab.0
            })
            .expect("some seed draws CDAB first");
        let s = square();
        let c = caption(&s).unwrap();
        let r = rule_negatives("sq", &c, &s, 1, seed).unwrap();
        assert_eq!(r.group.negatives[0].category, Category::Ordering);
        let Fact::Ordering { vertices, .. } = &r.edits[0].1 else { panic!("ordering edit") };
        assert!(!cyclically_equal(&abcd.0, &vertices.0, CyclicRule::default()));
        assert!(!caption_equals_modulo_cyclic(&r.captions[0], &c));
    }

    #[test]
    fn points_only_scene_is_rejected() {
        let mut s = square();
        s.shapes.clear();
        let c = caption(&s).unwrap();
        assert!(matches!(rule_negatives("x", &c, &s, 3, 0), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn round_robin_and_determinism() {
        let s = random_scene(2, Template::QuadrilateralWithDiagonal);
        let c = caption(&s).unwrap();
        let a = rule_negatives("q", &c, &s, 10, 9).unwrap();
        assert_eq!(a, rule_negatives("q", &c, &s, 10, 9).unwrap());
        let cats: Vec<Category> = a.group.negatives.iter().map(|n| n.category).collect();
        assert_eq!(&cats[..4], &ORDER);
        let texts: BTreeSet<&str> = a.captions.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts.len(), 10);
    }

    #[test]
    fn single_fact_changes() {
        for seed in 0..100 {
            let s = random_scene(seed, Template::ALL[(seed % 4) as usize]);
            let c = caption(&s).unwrap();
            let r = rule_negatives("x", &c, &s, 10, seed).unwrap();
            for neg in &r.captions {
                let (rm, add) = fact_diff(&c.facts, &neg.facts);
                assert_eq!((rm.len(), add.len()), (1, 1), "{}", neg.text);
            }
        }
    }

    #[test]
    fn numeric_stays_in_range() {
        let mut s = parallel();
        s.marks.clear();
        s.shapes = vec![Shape::polygon("ABD", Attribute::None)];
        s.relations.clear();
        s.points[3] = Point::new('D', 0.0, 3.0);
        s.marks = vec![NumericMark::angle("DAB", 90.0)];
        let c = caption(&s).unwrap();
        let r = rule_negatives("a", &c, &s, 12, 5).unwrap();
        for (_, new) in &r.edits {
            if let Fact::Mark { value, .. } = new {
                assert!(*value > 0.0 && *value < 180.0);
            }
        }
    }
}
