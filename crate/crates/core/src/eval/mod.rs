//! Hit@1 retrieval evaluation, ratio sweeps, and similarity audits.

mod audit;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::contrastive::{train, TrainConfig, TrainingData};
use crate::encoder::{embed_matrix, DualEncoder, EmbeddingMatrix, FeatureVector};
use crate::negatives::{Category, Modality, NegativeGroup};
use crate::scalar::dot;
use crate::{Error, Real, Result};

pub use audit::{
    contamination_filter, max_similarity_audit, separation_scores, AuditReport, Separation, ThresholdRow,
    DEFAULT_CUTOFF,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalSetName {
    RandomNeg,
    RetrievalNeg,
    RuleNeg,
    ImageNeg,
}

impl EvalSetName {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalSetName::RandomNeg => "random-neg",
            EvalSetName::RetrievalNeg => "retrieval-neg",
            EvalSetName::RuleNeg => "rule-neg",
            EvalSetName::ImageNeg => "image-neg",
        }
    }

    /// Modality of the candidates (positive and negatives).
    pub fn candidate_modality(self) -> Modality {
        if self == EvalSetName::ImageNeg {
            Modality::Image
        } else {
            Modality::Text
        }
    }

    /// Set a negative group belongs to, judged by its first negative's category.
    pub fn of_group(group: &NegativeGroup) -> Self {
        match (group.modality, group.negatives.first().map(|n| n.category)) {
            (Modality::Image, _) => EvalSetName::ImageNeg,
            (_, Some(Category::Retrieval)) => EvalSetName::RetrievalNeg,
            (_, Some(Category::Random)) => EvalSetName::RandomNeg,
            _ => EvalSetName::RuleNeg,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub anchor: String,
    pub positive: String,
    pub negatives: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub name: EvalSetName,
    pub items: Vec<EvalItem>,
}

impl EvalSet {
    /// One item per group; the anchor is the other half of the positive's pair.
    pub fn from_groups<T: Real>(name: EvalSetName, groups: &[NegativeGroup], data: &TrainingData<T>) -> Result<Self> {
        let items = groups
            .iter()
            .map(|g| {
                let (img, txt) = data.pair_of(g)?;
                let anchor = if g.modality == Modality::Text { img } else { txt };
                Ok(EvalItem {
                    anchor,
                    positive: g.positive.clone(),
                    negatives: g.negatives.iter().map(|n| n.id.clone()).collect(),
                })
            })
            .collect::<Result<_>>()?;
        let set = EvalSet { name, items };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for it in &self.items {
            if it.negatives.is_empty() {
                return Err(Error::InvalidBatch(format!("empty pool for {}", it.positive)));
            }
            if it.negatives.contains(&it.positive) {
                return Err(Error::InvalidBatch(format!("positive {} is among its negatives", it.positive)));
            }
        }
        Ok(())
    }

    /// One JSON object per item, tagged with the set name.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            set: EvalSetName,
            #[serde(flatten)]
            item: &'a EvalItem,
        }
        self.items
            .iter()
            .map(|item| serde_json::to_string(&Line { set: self.name, item }).expect("items serialize") + "\n")
            .collect()
    }
}

/// Fraction of items whose positive strictly outscores every pool negative.
/// Ties count as misses. Rows of both matrices must be unit-norm embeddings
/// in the same space; the common temperature does not affect the ranking.
pub fn hit_at_1<T: Real>(set: &EvalSet, anchors: &EmbeddingMatrix<T>, candidates: &EmbeddingMatrix<T>) -> Result<f64> {
    set.validate()?;
    if set.items.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut hits = 0usize;
    for it in &set.items {
        let a = anchors.get(&it.anchor)?;
        let pos = dot(a, candidates.get(&it.positive)?);
        let mut best_neg = T::neg_infinity();
        for n in &it.negatives {
            best_neg = best_neg.max(dot(a, candidates.get(n)?));
        }
        if pos > best_neg {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.items.len() as f64)
}

/// Embeds exactly the items `set` refers to and scores Hit@1 under `encoder`.
pub fn evaluate<T: Real>(set: &EvalSet, encoder: &DualEncoder<T>, data: &TrainingData<T>) -> Result<f64> {
    let anchor_ids: BTreeSet<&String> = set.items.iter().map(|i| &i.anchor).collect();
    let cand_ids: BTreeSet<&String> =
        set.items.iter().flat_map(|i| std::iter::once(&i.positive).chain(&i.negatives)).collect();
    let (anchors, candidates) = match set.name.candidate_modality() {
        Modality::Text => (
            embed_matrix(&encoder.image, lookup(anchor_ids, &data.images)?)?,
            embed_matrix(&encoder.text, lookup(cand_ids, &data.texts)?)?,
        ),
        Modality::Image => (
            embed_matrix(&encoder.text, lookup(anchor_ids, &data.texts)?)?,
            embed_matrix(&encoder.image, lookup(cand_ids, &data.images)?)?,
        ),
    };
    hit_at_1(set, &anchors, &candidates)
}

fn lookup<'a, T>(
    ids: BTreeSet<&String>,
    store: &'a BTreeMap<String, FeatureVector<T>>,
) -> Result<Vec<(&'a String, &'a FeatureVector<T>)>> {
    ids.into_iter().map(|id| store.get_key_value(id.as_str()).ok_or_else(|| Error::UnknownId(id.clone()))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: usize,
    pub final_loss: f64,
    pub hit_at_1: f64,
}

/// One full training run and evaluation per negative ratio, with a shared seed.
pub fn ratio_sweep<T: Real>(
    data: &TrainingData<T>,
    template: &TrainConfig,
    ratios: &[usize],
    set: &EvalSet,
) -> Result<Vec<SweepRow>> {
    let unique: BTreeSet<usize> = ratios.iter().copied().collect();
    if unique.len() != ratios.len() {
        return Err(Error::InvalidConfig(format!("duplicate ratio in {ratios:?}")));
    }
    let Some(&max) = unique.last() else { return Err(Error::Empty("ratio list")) };
    let available = data.groups.iter().map(|g| g.negatives.len()).min().unwrap_or(0);
    if max > available {
        return Err(Error::out_of_range(
            "ratio",
            format!("{max} exceeds the {available} negatives available per group"),
        ));
    }
    unique
        .into_iter()
        .map(|ratio| {
            let cfg = TrainConfig { negative_ratio: ratio, ..template.clone() };
            let run = train(data, &cfg)?;
            Ok(SweepRow {
                ratio,
                final_loss: run.final_loss().to_f64_lossy(),
                hit_at_1: evaluate(set, &run.encoder, data)?,
            })
        })
        .collect()
}

/// `ratio,final_loss,hit_at_1` with a header line.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("ratio,final_loss,hit_at_1\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.ratio, r.final_loss, r.hit_at_1);
    }
    out
}
