//! Hard-negative factories: rule-based caption edits, scene perturbations,
//! exact top-k retrieval and uniform random sampling.

mod random;
mod retrieval;
mod rule;
mod scene;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use random::random_negatives;
pub use retrieval::{retrieval_negatives, retrieval_negatives_with, top_k_cosine, RetrievalOptions};
pub use rule::{fact_diff, rule_negatives, RuleNegatives};
pub use scene::{scene_perturb_negatives, verify_scene_edit, SceneEdit, SceneNegatives};

/// Negatives per positive in the main setup.
pub const DEFAULT_COUNT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Text,
    Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Ordering,
    ShapeAttribute,
    Relation,
    Numeric,
    Retrieval,
    ScenePerturb,
    Random,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("category serializes");
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Negative {
    pub id: String,
    pub category: Category,
    pub delta: String,
}

/// One positive and its constructed negatives (`negatives.jsonl` record).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeGroup {
    #[serde(rename = "positive_id")]
    pub positive: String,
    pub modality: Modality,
    pub ratio: usize,
    pub negatives: Vec<Negative>,
}

impl NegativeGroup {
    pub(crate) fn new(positive: impl Into<String>, modality: Modality, negatives: Vec<Negative>) -> Self {
        NegativeGroup { positive: positive.into(), modality, ratio: negatives.len(), negatives }
    }

    /// Structural invariants that do not need the payloads.
    pub fn check(&self) -> crate::Result<()> {
        if self.negatives.is_empty() {
            return Err(crate::Error::Empty("negative group"));
        }
        if self.ratio != self.negatives.len() {
            return Err(crate::Error::InvalidBatch(format!(
                "ratio {} but {} negatives for {}",
                self.ratio,
                self.negatives.len(),
                self.positive
            )));
        }
        if let Some(n) = self.negatives.iter().find(|n| n.id == self.positive) {
            return Err(crate::Error::InvalidBatch(format!("negative {} equals its positive", n.id)));
        }
        Ok(())
    }
}

/// Id of the `k`-th constructed negative of `positive`.
pub fn negative_id(positive: &str, k: usize) -> String {
    format!("{positive}_neg{k}")
}
