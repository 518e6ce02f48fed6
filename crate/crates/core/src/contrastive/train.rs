use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, Gradients, HybridBatch, InBatch, MmclipBatch};
use crate::encoder::{DualEncoder, FeatureVector};
use crate::negatives::{Modality, NegativeGroup};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    InBatch,
    Mmclip,
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    /// Heavy-ball momentum 0.9.
    SgdMomentum,
}

fn parse_kebab<T: for<'de> Deserialize<'de>>(s: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::InvalidConfig(format!("unknown {what} `{s}`")))
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_kebab(s, "strategy")
    }
}

impl FromStr for Optimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_kebab(s, "optimizer")
    }
}

pub const MOMENTUM: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: Strategy,
    /// Constructed negatives per positive, in `[1, 50]`.
    pub negative_ratio: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Pairs per in-batch or hybrid step; groups averaged per MMCLIP step.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::Mmclip,
            negative_ratio: 10,
            learning_rate: 1e-2,
            steps: 500,
            seed: 0,
            optimizer: Optimizer::Sgd,
            batch_size: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=50).contains(&self.negative_ratio) {
            return Err(Error::out_of_range("negative_ratio", format!("{} not in [1, 50]", self.negative_ratio)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::out_of_range("learning_rate", self.learning_rate.to_string()));
        }
        if self.steps == 0 {
            return Err(Error::out_of_range("steps", "0"));
        }
        let min_batch = if self.strategy == Strategy::Mmclip { 1 } else { 2 };
        if self.batch_size < min_batch {
            return Err(Error::out_of_range("batch_size", format!("{} below {min_batch}", self.batch_size)));
        }
        Ok(())
    }
}

/// Feature stores plus the matched pairs and negative groups used for training.
/// The stores may hold extra (held-out) items.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingData<T> {
    pub images: BTreeMap<String, FeatureVector<T>>,
    pub texts: BTreeMap<String, FeatureVector<T>>,
    /// `(image id, text id)`.
    pub pairs: Vec<(String, String)>,
    pub groups: Vec<NegativeGroup>,
}

impl<T: Real> TrainingData<T> {
    fn image(&self, id: &str) -> Result<&FeatureVector<T>> {
        self.images.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    fn text(&self, id: &str) -> Result<&FeatureVector<T>> {
        self.texts.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    /// `(image id, text id)` of the pair a group's positive belongs to.
    pub fn pair_of(&self, group: &NegativeGroup) -> Result<(String, String)> {
        self.pairs
            .iter()
            .find(|(i, t)| match group.modality {
                Modality::Text => *t == group.positive,
                Modality::Image => *i == group.positive,
            })
            .cloned()
            .ok_or_else(|| Error::UnknownId(group.positive.clone()))
    }

    fn negatives(&self, group: &NegativeGroup, ratio: usize) -> Result<Vec<FeatureVector<T>>> {
        group.negatives[..ratio]
            .iter()
            .map(|n| match group.modality {
                Modality::Text => self.text(&n.id).cloned(),
                Modality::Image => self.image(&n.id).cloned(),
            })
            .collect()
    }

    /// MMCLIP batch of a group truncated to its first `ratio` negatives.
    pub fn mmclip_batch(&self, group: &NegativeGroup, ratio: usize) -> Result<MmclipBatch<T>> {
        let (img, txt) = self.pair_of(group)?;
        let (anchor, positive) = match group.modality {
            Modality::Text => (self.image(&img)?, self.text(&txt)?),
            Modality::Image => (self.text(&txt)?, self.image(&img)?),
        };
        Ok(MmclipBatch {
            negatives_modality: group.modality,
            anchor: anchor.clone(),
            positive: positive.clone(),
            negatives: self.negatives(group, ratio)?,
        })
    }

    fn pair_features(&self, pair: &(String, String)) -> Result<(FeatureVector<T>, FeatureVector<T>)> {
        Ok((self.image(&pair.0)?.clone(), self.text(&pair.1)?.clone()))
    }
}

/// Final encoder, configuration and per-step loss trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRun<T> {
    pub config: TrainConfig,
    pub encoder: DualEncoder<T>,
    pub losses: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct RunMeta {
    config: TrainConfig,
    seed: u64,
    steps: usize,
    final_loss: f64,
    image_dim: usize,
    text_dim: usize,
    embed_dim: usize,
    logit_scale: f64,
}

pub const RUN_FILE: &str = "run.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const LOSS_FILE: &str = "loss.csv";

impl<T: Real> TrainRun<T> {
    pub fn final_loss(&self) -> T {
        self.losses.last().copied().unwrap_or_else(T::nan)
    }

    /// Mean loss over the last `k` steps.
    pub fn tail_loss(&self, k: usize) -> T {
        let tail = &self.losses[self.losses.len().saturating_sub(k.max(1))..];
        tail.iter().copied().sum::<T>() / T::of(tail.len().max(1) as f64)
    }

    /// `step,loss` lines with a header.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            let _ = writeln!(out, "{i},{}", l.to_f64_lossy());
        }
        out
    }

    /// Writes `run.json`, `weights.bin` and `loss.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let meta = RunMeta {
            config: self.config.clone(),
            seed: self.config.seed,
            steps: self.losses.len(),
            final_loss: self.final_loss().to_f64_lossy(),
            image_dim: self.encoder.image.in_dim,
            text_dim: self.encoder.text.in_dim,
            embed_dim: self.encoder.image.out_dim,
            logit_scale: self.encoder.logit_scale.to_f64_lossy(),
        };
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::file(&p, e))
        };
        write(RUN_FILE, format!("{}\n", serde_json::to_string_pretty(&meta)?).as_bytes())?;
        write(WEIGHTS_FILE, &self.encoder.to_bytes())?;
        write(LOSS_FILE, self.loss_csv().as_bytes())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read(&p).map_err(|e| Error::file(&p, e))
        };
        let weights = read(WEIGHTS_FILE)?;
        let meta: RunMeta = serde_json::from_slice(&read(RUN_FILE)?)?;
        let encoder = DualEncoder::from_bytes(&weights, meta.image_dim, meta.text_dim, meta.embed_dim)?;
        let csv = String::from_utf8_lossy(&read(LOSS_FILE)?).into_owned();
        let losses = csv
            .lines()
            .skip(1)
            .filter_map(|l| l.split_once(',').and_then(|(_, v)| v.parse::<f64>().ok()))
            .map(T::of)
            .collect();
        Ok(TrainRun { config: meta.config, encoder, losses })
    }
}

fn step_update<T: Real>(enc: &mut DualEncoder<T>, velocity: &mut Gradients<T>, g: &Gradients<T>, cfg: &TrainConfig) {
    let lr = T::of(cfg.learning_rate);
    let dir = match cfg.optimizer {
        Optimizer::Sgd => g,
        Optimizer::SgdMomentum => {
            let m = T::of(MOMENTUM);
            velocity.image.iter_mut().zip(&g.image).for_each(|(v, &x)| *v = *v * m + x);
            velocity.text.iter_mut().zip(&g.text).for_each(|(v, &x)| *v = *v * m + x);
            velocity.logit_scale = velocity.logit_scale * m + g.logit_scale;
            &*velocity
        }
    };
    enc.image.weights.iter_mut().zip(&dir.image).for_each(|(w, &d)| *w = *w - lr * d);
    enc.text.weights.iter_mut().zip(&dir.text).for_each(|(w, &d)| *w = *w - lr * d);
    enc.logit_scale = enc.logit_scale - lr * dir.logit_scale;
}

/// Up to `want` groups starting at cursor `start`, skipping groups whose pair
/// is already in the batch.
fn hybrid_groups<'a, T: Real>(
    data: &'a TrainingData<T>,
    pairs: &[(String, String)],
    start: usize,
    want: usize,
) -> Vec<(&'a NegativeGroup, usize)> {
    let g = data.groups.len();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for k in 0..g {
        let i = (start + k) % g;
        if seen.insert(&pairs[i]) {
            out.push((&data.groups[i], i));
            if out.len() == want {
                break;
            }
        }
    }
    out
}

/// Gradient descent on `data` under `config`; deterministic per seed.
///
/// In-batch steps draw `batch_size` random pairs. MMCLIP steps average
/// `batch_size` consecutive groups, cycling in dataset order. Hybrid steps
/// take consecutive groups with distinct pairs as one in-batch matrix whose
/// rows also see their own negatives.
pub fn train<T: Real>(data: &TrainingData<T>, config: &TrainConfig) -> Result<TrainRun<T>> {
    config.validate()?;
    if data.pairs.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    let uses_groups = config.strategy != Strategy::InBatch;
    if uses_groups {
        if data.groups.is_empty() {
            return Err(Error::Empty("negative groups"));
        }
        if let Some(g) = data.groups.iter().find(|g| g.negatives.len() < config.negative_ratio) {
            return Err(Error::out_of_range(
                "negative_ratio",
                format!("{} exceeds the {} negatives of {}", config.negative_ratio, g.negatives.len(), g.positive),
            ));
        }
    }
    if config.strategy == Strategy::InBatch && data.pairs.len() < 2 {
        return Err(Error::InvalidBatch("in-batch training needs at least two pairs".into()));
    }
    let group_pairs: Vec<(String, String)> =
        if uses_groups { data.groups.iter().map(|g| data.pair_of(g)).collect::<Result<_>>()? } else { Vec::new() };

    let mut enc = DualEncoder::<T>::new(config.seed);
    let mut velocity = Gradients::zeros(&enc);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6261_7463_6865_7321);
    let mut losses = Vec::with_capacity(config.steps);
    let b = config.batch_size;
    for step in 0..config.steps {
        let (loss, grads) = match config.strategy {
            Strategy::InBatch => {
                let n = b.min(data.pairs.len());
                let idx = sample(&mut rng, data.pairs.len(), n);
                let pairs = idx.iter().map(|i| data.pair_features(&data.pairs[i])).collect::<Result<_>>()?;
                backward(&InBatch { pairs }, &enc)?
            }
            Strategy::Mmclip => {
                let g = data.groups.len();
                let mut total = T::zero();
                let mut acc = Gradients::zeros(&enc);
                let w = T::one() / T::of(b as f64);
                for k in 0..b {
                    let group = &data.groups[(step * b + k) % g];
                    let (l, gr) = backward(&data.mmclip_batch(group, config.negative_ratio)?, &enc)?;
                    total = total + l * w;
                    acc.add_scaled(&gr, w);
                }
                (total, acc)
            }
            Strategy::Hybrid => {
                let picked = hybrid_groups(data, &group_pairs, step * b, b);
                if picked.len() < 2 {
                    return Err(Error::InvalidBatch(
                        "hybrid training needs groups for at least two distinct pairs".into(),
                    ));
                }
                let mut batch = HybridBatch { pairs: Vec::new(), negatives: Vec::new() };
                for (group, i) in picked {
                    batch.pairs.push(data.pair_features(&group_pairs[i])?);
                    batch.negatives.push((group.modality, data.negatives(group, config.negative_ratio)?));
                }
                backward(&batch, &enc)?
            }
        };
        if !loss.is_finite() {
            return Err(Error::out_of_range("loss", format!("non-finite at step {step}")));
        }
        step_update(&mut enc, &mut velocity, &grads, config);
        losses.push(loss);
    }
    Ok(TrainRun { config: config.clone(), encoder: enc, losses })
}
