//! On-disk corpus layout and conversion to training and evaluation data.
//!
//! ```text
//! <dir>/scenes.jsonl              SceneRecord per line
//! <dir>/captions.jsonl            CaptionRecord per line
//! <dir>/svg/<id>.svg              marks on
//! <dir>/svg/nomarks/<id>.svg      marks off
//! <dir>/negatives_<family>.jsonl  NegativeGroup per line
//! <dir>/neg_captions_rule.jsonl   captions of rule negatives
//! <dir>/neg_scenes.jsonl          NegativeSceneRecord per line
//! <dir>/svg/negatives/<id>.svg    scene negatives, marks on
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::caption::{caption, CaptionRecord};
use crate::contrastive::TrainingData;
use crate::encoder::{image_features, text_features, EmbeddingMatrix};
use crate::eval::{EvalSet, EvalSetName};
use crate::geometry::{ensure_valid, random_scene, Scene, Template};
use crate::negatives::{
    random_negatives, retrieval_negatives, rule_negatives, scene_perturb_negatives, Modality, NegativeGroup, SceneEdit,
};
use crate::render::{render, svg_file_name, RenderOptions};
use crate::{Error, Real, Result};

pub const CORPUS_ID: &str = "geo";
pub const SCENES_FILE: &str = "scenes.jsonl";
pub const CAPTIONS_FILE: &str = "captions.jsonl";
pub const RULE_CAPTIONS_FILE: &str = "neg_captions_rule.jsonl";
pub const NEG_SCENES_FILE: &str = "neg_scenes.jsonl";
pub const SVG_DIR: &str = "svg";
/// Share of items, taken from the end of the corpus, held out for evaluation.
pub const HOLDOUT_FRACTION: f64 = 0.25;

/// Mixes a base seed with a stream tag and an item index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64, index: usize) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (index as u64).wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn scene_id(index: usize) -> String {
    format!("{CORPUS_ID}_{index}")
}

pub fn caption_id(index: usize) -> String {
    format!("{}_caption", scene_id(index))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: String,
    pub template: Template,
    pub scene: Scene,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeSceneRecord {
    pub id: String,
    pub positive_id: String,
    pub edit: SceneEdit,
    pub scene: Scene,
}

/// Sampling weights over [`Template::ALL`].
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateMix(pub [f64; 4]);

impl Default for TemplateMix {
    fn default() -> Self {
        TemplateMix([1.0; 4])
    }
}

impl TemplateMix {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) || self.0.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidConfig(format!(
                "template weights {:?} must be nonnegative and not all zero",
                self.0
            )));
        }
        Ok(())
    }
}

impl FromStr for TemplateMix {
    type Err = Error;

    /// Four comma-separated weights.
    fn from_str(s: &str) -> Result<Self> {
        let ws: Vec<f64> = s
            .split(',')
            .map(|w| w.trim().parse::<f64>().map_err(|_| Error::InvalidConfig(format!("bad template weight `{w}`"))))
            .collect::<Result<_>>()?;
        let mix = TemplateMix(
            ws.try_into().map_err(|_| Error::InvalidConfig(format!("expected 4 template weights, got `{s}`")))?,
        );
        mix.validate()?;
        Ok(mix)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Rule,
    Scene,
    Retrieval,
    Random,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Rule, Family::Scene, Family::Retrieval, Family::Random];

    pub fn name(self) -> &'static str {
        match self {
            Family::Rule => "rule",
            Family::Scene => "scene",
            Family::Retrieval => "retrieval",
            Family::Random => "random",
        }
    }

    pub fn file_name(self) -> String {
        format!("negatives_{}.jsonl", self.name())
    }

    pub fn eval_set(self) -> EvalSetName {
        match self {
            Family::Rule => EvalSetName::RuleNeg,
            Family::Scene => EvalSetName::ImageNeg,
            Family::Retrieval => EvalSetName::RetrievalNeg,
            Family::Random => EvalSetName::RandomNeg,
        }
    }

    fn stream(self) -> u64 {
        match self {
            Family::Rule => 0x72756c65,
            Family::Scene => 0x7363656e,
            Family::Retrieval => 0x72657472,
            Family::Random => 0x72616e64,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown negative family `{s}`")))
    }
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::file(path, e))?;
    }
    out.flush().map_err(|e| Error::file(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::file(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::file(path, e))
}

/// Index of the first held-out item.
pub fn holdout_start(n: usize) -> usize {
    if n < 2 {
        return n;
    }
    let held = ((n as f64 * HOLDOUT_FRACTION).round() as usize).clamp(1, n - 1);
    n - held
}

/// Scenes with their captions; item `i` is `geo_i` / `geo_i_caption`.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub scenes: Vec<SceneRecord>,
    pub captions: Vec<CaptionRecord>,
}

impl Corpus {
    pub fn generate(n: usize, seed: u64, mix: &TemplateMix) -> Result<Self> {
        mix.validate()?;
        let pick = WeightedIndex::new(mix.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut scenes = Vec::with_capacity(n);
        let mut captions = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x67656e, i));
            let template = Template::ALL[pick.sample(&mut rng)];
            let scene = random_scene(rng.next_u64(), template);
            captions.push(CaptionRecord::new(caption_id(i), scene_id(i), &caption(&scene)?));
            scenes.push(SceneRecord { id: scene_id(i), template, scene });
        }
        Ok(Corpus { scenes, captions })
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    /// Writes the records and both SVG variants.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let nomarks = dir.join(SVG_DIR).join("nomarks");
        create_dir(&nomarks)?;
        write_jsonl(dir.join(SCENES_FILE), &self.scenes)?;
        write_jsonl(dir.join(CAPTIONS_FILE), &self.captions)?;
        for (i, rec) in self.scenes.iter().enumerate() {
            let name = svg_file_name(CORPUS_ID, i, None);
            write_file(&dir.join(SVG_DIR).join(&name), &render(&rec.scene, &RenderOptions::default())?)?;
            write_file(&nomarks.join(&name), &render(&rec.scene, &RenderOptions::without_marks())?)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let scenes: Vec<SceneRecord> = read_jsonl(dir.join(SCENES_FILE))?;
        let captions: Vec<CaptionRecord> = read_jsonl(dir.join(CAPTIONS_FILE))?;
        if scenes.len() != captions.len() {
            return Err(Error::InvalidBatch(format!("{} scenes but {} captions", scenes.len(), captions.len())));
        }
        for (i, (s, c)) in scenes.iter().zip(&captions).enumerate() {
            if s.id != scene_id(i) || c.id != caption_id(i) || c.scene_id != s.id {
                return Err(Error::InvalidBatch(format!("record {i} has ids {} / {}", s.id, c.id)));
            }
            ensure_valid(&s.scene)?;
        }
        Ok(Corpus { scenes, captions })
    }

    /// Caption embeddings from the deterministic text features.
    pub fn caption_embeddings<T: Real>(&self, range: std::ops::Range<usize>) -> Result<EmbeddingMatrix<T>> {
        let caps = &self.captions[range];
        let rows = caps.iter().map(|c| text_features::<T>(&c.text).values).collect();
        EmbeddingMatrix::from_rows(crate::encoder::TEXT_DIM, caps.iter().map(|c| c.id.clone()).collect(), rows)
    }
}

/// Negatives of one family for a whole corpus.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NegativeSet {
    pub groups: Vec<NegativeGroup>,
    pub rule_captions: Vec<CaptionRecord>,
    pub scenes: Vec<NegativeSceneRecord>,
    /// Items the family does not apply to, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Builds `count` negatives per item. Inapplicable items are skipped; any
/// other failure aborts.
pub fn build_negatives(corpus: &Corpus, family: Family, count: usize, seed: u64) -> Result<NegativeSet> {
    let mut out = NegativeSet::default();
    let seed_of = |i| derive_seed(seed, family.stream(), i);
    let caption_ids: Vec<String> = corpus.captions.iter().map(|c| c.id.clone()).collect();
    let embeddings = match family {
        Family::Retrieval => Some(corpus.caption_embeddings::<f64>(0..corpus.len())?),
        _ => None,
    };
    for (i, (rec, cap)) in corpus.scenes.iter().zip(&corpus.captions).enumerate() {
        let result = match family {
            Family::Rule => rule_negatives(&cap.id, &cap.caption(), &rec.scene, count, seed_of(i)).map(|r| {
                for (k, c) in r.captions.iter().enumerate() {
                    out.rule_captions.push(CaptionRecord::new(&r.group.negatives[k].id, &rec.id, c));
                }
                r.group
            }),
            Family::Scene => scene_perturb_negatives(&rec.id, &rec.scene, count, seed_of(i)).map(|r| {
                for ((neg, scene), edit) in r.group.negatives.iter().zip(r.scenes).zip(r.edits) {
                    out.scenes.push(NegativeSceneRecord {
                        id: neg.id.clone(),
                        positive_id: rec.id.clone(),
                        edit,
                        scene,
                    });
                }
                r.group
            }),
            Family::Retrieval => retrieval_negatives(i, embeddings.as_ref().expect("built above"), count),
            Family::Random => random_negatives(&cap.id, &caption_ids, Modality::Text, count, seed_of(i)),
        };
        match result {
            Ok(group) => {
                group.check()?;
                out.groups.push(group);
            }
            Err(Error::NotApplicable(why)) => out.skipped.push((rec.id.clone(), why)),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Writes `negatives_<family>.jsonl` and the family's payload files.
pub fn write_negatives(dir: impl AsRef<Path>, family: Family, set: &NegativeSet) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    for g in &set.groups {
        g.check()?;
    }
    write_jsonl(dir.join(family.file_name()), &set.groups)?;
    match family {
        Family::Rule => write_jsonl(dir.join(RULE_CAPTIONS_FILE), &set.rule_captions)?,
        Family::Scene => {
            write_jsonl(dir.join(NEG_SCENES_FILE), &set.scenes)?;
            let svg = dir.join(SVG_DIR).join("negatives");
            create_dir(&svg)?;
            for rec in &set.scenes {
                write_file(&svg.join(format!("{}.svg", rec.id)), &render(&rec.scene, &RenderOptions::default())?)?;
            }
        }
        Family::Retrieval | Family::Random => {}
    }
    Ok(())
}

/// Training data over the first items plus held-out evaluation sets over the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub data: TrainingData<T>,
    pub eval_sets: Vec<EvalSet>,
    /// Families whose negatives file was found.
    pub families: Vec<Family>,
}

/// Loads every negatives file present in `dir`. Training groups come from
/// `train_families` (all present ones when `None`); evaluation sets from all.
pub fn load_dataset<T: Real>(dir: impl AsRef<Path>, train_families: Option<&[Family]>) -> Result<Dataset<T>> {
    let dir = dir.as_ref();
    let corpus = Corpus::load(dir)?;
    let start = holdout_start(corpus.len());
    let position: BTreeMap<String, usize> = corpus
        .scenes
        .iter()
        .zip(&corpus.captions)
        .enumerate()
        .flat_map(|(i, (s, c))| [(s.id.clone(), i), (c.id.clone(), i)])
        .collect();

    let mut data = TrainingData::default();
    for rec in &corpus.scenes {
        data.images.insert(rec.id.clone(), image_features(&rec.scene, &RenderOptions::default())?);
    }
    for cap in &corpus.captions {
        data.texts.insert(cap.id.clone(), text_features(&cap.text));
    }
    data.pairs =
        corpus.scenes[..start].iter().zip(&corpus.captions).map(|(s, c)| (s.id.clone(), c.id.clone())).collect();
    let all_pairs: Vec<(String, String)> =
        corpus.scenes.iter().zip(&corpus.captions).map(|(s, c)| (s.id.clone(), c.id.clone())).collect();

    let families: Vec<Family> = Family::ALL.into_iter().filter(|f| dir.join(f.file_name()).is_file()).collect();
    if let Some(wanted) = train_families {
        if let Some(f) = wanted.iter().find(|f| !families.contains(f)) {
            let path = dir.join(f.file_name());
            return Err(Error::file(&path, std::io::ErrorKind::NotFound.into()));
        }
    }
    let mut train_groups: Vec<(usize, usize, NegativeGroup)> = Vec::new();
    let mut eval_sets = Vec::new();
    let full = TrainingData::<T> { pairs: all_pairs, ..TrainingData::default() };
    for (rank, &family) in families.iter().enumerate() {
        match family {
            Family::Rule => {
                for c in read_jsonl::<CaptionRecord>(dir.join(RULE_CAPTIONS_FILE))? {
                    data.texts.insert(c.id.clone(), text_features(&c.text));
                }
            }
            Family::Scene => {
                for r in read_jsonl::<NegativeSceneRecord>(dir.join(NEG_SCENES_FILE))? {
                    data.images.insert(r.id.clone(), image_features(&r.scene, &RenderOptions::default())?);
                }
            }
            Family::Retrieval | Family::Random => {}
        }
        let groups: Vec<NegativeGroup> = read_jsonl(dir.join(family.file_name()))?;
        let mut held = Vec::new();
        for g in groups {
            g.check()?;
            let &i = position.get(&g.positive).ok_or_else(|| Error::UnknownId(g.positive.clone()))?;
            if i >= start {
                held.push(g);
            } else if train_families.is_none_or(|w| w.contains(&family)) {
                train_groups.push((i, rank, g));
            }
        }
        if !held.is_empty() {
            eval_sets.push(EvalSet::from_groups(family.eval_set(), &held, &full)?);
        }
    }
    train_groups.sort_by_key(|(i, rank, _)| (*i, *rank));
    data.groups = train_groups.into_iter().map(|(_, _, g)| g).collect();
    Ok(Dataset { data, eval_sets, families })
}

pub fn svg_path(dir: &Path, index: usize, marks: bool) -> PathBuf {
    let base = dir.join(SVG_DIR);
    let base = if marks { base } else { base.join("nomarks") };
    base.join(svg_file_name(CORPUS_ID, index, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let a = Corpus::generate(6, 7, &TemplateMix::default()).unwrap();
        assert_eq!(a, Corpus::generate(6, 7, &TemplateMix::default()).unwrap());
        assert_ne!(a, Corpus::generate(6, 8, &TemplateMix::default()).unwrap());
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        assert_eq!(Corpus::load(dir.path()).unwrap(), a);
        assert!(svg_path(dir.path(), 5, false).is_file());
    }

    #[test]
    fn mix_selects_templates() {
        let c = Corpus::generate(8, 1, &"0,0,1,0".parse().unwrap()).unwrap();
        assert!(c.scenes.iter().all(|s| s.template == Template::QuadrilateralWithDiagonal));
        assert!("0,0,0,0".parse::<TemplateMix>().is_err());
        assert!("1,2".parse::<TemplateMix>().is_err());
        assert!("1,-1,1,1".parse::<TemplateMix>().is_err());
    }

    #[test]
    fn holdout_split() {
        assert_eq!(holdout_start(64), 48);
        assert_eq!(holdout_start(10), 7);
        assert_eq!(holdout_start(2), 1);
        assert_eq!(holdout_start(1), 1);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    }

    #[test]
    fn dataset_splits_groups_and_builds_eval_sets() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus::generate(8, 3, &TemplateMix::default()).unwrap();
        corpus.write(dir.path()).unwrap();
        for family in [Family::Rule, Family::Scene] {
            let set = build_negatives(&corpus, family, 4, 11).unwrap();
            assert_eq!(set.groups.len() + set.skipped.len(), 8);
            write_negatives(dir.path(), family, &set).unwrap();
        }
        let ds = load_dataset::<f64>(dir.path(), None).unwrap();
        assert_eq!(ds.families, vec![Family::Rule, Family::Scene]);
        assert_eq!(ds.data.pairs.len(), 6);
        assert!(ds.data.groups.iter().all(|g| ds.data.pair_of(g).is_ok()));
        let names: Vec<EvalSetName> = ds.eval_sets.iter().map(|s| s.name).collect();
        assert_eq!(names, vec![EvalSetName::RuleNeg, EvalSetName::ImageNeg]);
        assert!(load_dataset::<f64>(dir.path(), Some(&[Family::Retrieval])).is_err());
    }

    #[test]
    fn retrieval_rejects_oversized_k() {
        let corpus = Corpus::generate(4, 0, &TemplateMix::default()).unwrap();
        assert!(build_negatives(&corpus, Family::Retrieval, 4, 0).is_err());
        let set = build_negatives(&corpus, Family::Retrieval, 3, 0).unwrap();
        assert_eq!(set.groups.len(), 4);
    }
}
