//! Scene representation, measurement, validation and the template generator.

mod generate;
mod measure;
mod types;
mod validate;

pub(crate) use generate::refresh_marks;
pub use generate::{random_scene, Template};
#[cfg(test)]
pub(crate) use measure::segment_distance;
pub(crate) use measure::{angle_deg, cross, dot, len, polygon_angles, polygon_sides, rel_dev, sub, Vec2};
pub use measure::{close, measured_quantity, TOLERANCE};
pub use types::{
    format_compact, format_sig9, round_sig9, Attribute, Label, Labels, NumericMark, Point, Quantity, Relation,
    RelationKind, Scene, Shape,
};
pub use validate::{attribute_holds, ensure_valid, relation_defect, validate_scene, Entity, Violation, ViolationCode};
