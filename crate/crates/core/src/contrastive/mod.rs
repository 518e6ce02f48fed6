//! In-batch, hard-negative (MMCLIP) and hybrid contrastive losses with an
//! analytic backward pass through the projection towers, plus an SGD trainer.
//!
//! Every loss is a weighted sum of softmax cross-entropy terms
//! `ln Σⱼ exp(sⱼ) − s₀` over scores `s = exp(logit_scale)·⟨eᵢ, tⱼ⟩`, where the
//! first score of each term is the positive. Log-sum-exp is always max-shifted.

mod train;

use crate::encoder::{normalize, DualEncoder, FeatureVector, Projection};
use crate::negatives::Modality;
use crate::scalar::{cross_entropy, dot, norm, softmax};
use crate::{Error, Real, Result};

pub use train::{train, Optimizer, Strategy, TrainConfig, TrainRun, TrainingData};

/// One positive with `N ≥ 1` constructed negatives on one side of the pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MmclipBatch<T> {
    /// Modality of `positive` and `negatives`; the anchor is the other one.
    pub negatives_modality: Modality,
    pub anchor: FeatureVector<T>,
    pub positive: FeatureVector<T>,
    pub negatives: Vec<FeatureVector<T>>,
}

/// `N ≥ 2` matched (image, text) pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct InBatch<T> {
    pub pairs: Vec<(FeatureVector<T>, FeatureVector<T>)>,
}

/// In-batch pairs whose rows also see their own constructed negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridBatch<T> {
    pub pairs: Vec<(FeatureVector<T>, FeatureVector<T>)>,
    /// `negatives[i]` belong to pair `i`; text negatives join the image→text
    /// softmax of that row, image negatives the text→image one.
    pub negatives: Vec<(Modality, Vec<FeatureVector<T>>)>,
}

/// Gradients for both weight matrices and the logit scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub image: Vec<T>,
    pub text: Vec<T>,
    pub logit_scale: T,
}

impl<T: Real> Gradients<T> {
    pub fn zeros(enc: &DualEncoder<T>) -> Self {
        Gradients {
            image: vec![T::zero(); enc.image.weights.len()],
            text: vec![T::zero(); enc.text.weights.len()],
            logit_scale: T::zero(),
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &Self, k: T) {
        self.image.iter_mut().zip(&other.image).for_each(|(a, b)| *a = *a + *b * k);
        self.text.iter_mut().zip(&other.text).for_each(|(a, b)| *a = *a + *b * k);
        self.logit_scale = self.logit_scale + other.logit_scale * k;
    }
}

/// Scores of an MMCLIP batch.
#[derive(Clone, Debug, PartialEq)]
pub struct MmclipScores<T> {
    pub positive: T,
    pub negatives: Vec<T>,
}

/// Images, texts and the softmax terms over their score matrix.
#[doc(hidden)]
pub struct Plan<'a, T> {
    images: Vec<&'a FeatureVector<T>>,
    texts: Vec<&'a FeatureVector<T>>,
    /// `(image, text)` index pairs, positive first.
    terms: Vec<Vec<(usize, usize)>>,
    weight: T,
}

/// Any batch the loss engine understands.
pub trait ContrastiveBatch<T: Real> {
    #[doc(hidden)]
    fn plan(&self) -> Result<Plan<'_, T>>;
}

impl<T: Real> MmclipBatch<T> {
    pub fn validate(&self) -> Result<()> {
        if self.negatives.is_empty() {
            return Err(Error::InvalidBatch("mmclip batch needs at least one negative".into()));
        }
        let d = self.positive.dim();
        if let Some(n) = self.negatives.iter().find(|n| n.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: n.dim() });
        }
        Ok(())
    }
}

impl<T: Real> ContrastiveBatch<T> for MmclipBatch<T> {
    fn plan(&self) -> Result<Plan<'_, T>> {
        self.validate()?;
        let others: Vec<&FeatureVector<T>> = std::iter::once(&self.positive).chain(&self.negatives).collect();
        let n = others.len();
        Ok(match self.negatives_modality {
            Modality::Text => Plan {
                images: vec![&self.anchor],
                texts: others,
                terms: vec![(0..n).map(|j| (0, j)).collect()],
                weight: T::one(),
            },
            Modality::Image => Plan {
                images: others,
                texts: vec![&self.anchor],
                terms: vec![(0..n).map(|j| (j, 0)).collect()],
                weight: T::one(),
            },
        })
    }
}

fn inbatch_terms(n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut terms = Vec::with_capacity(2 * n);
    for i in 0..n {
        terms.push(std::iter::once((i, i)).chain((0..n).filter(|&j| j != i).map(|j| (i, j))).collect());
        terms.push(std::iter::once((i, i)).chain((0..n).filter(|&j| j != i).map(|j| (j, i))).collect());
    }
    terms
}

impl<T: Real> ContrastiveBatch<T> for InBatch<T> {
    fn plan(&self) -> Result<Plan<'_, T>> {
        let n = self.pairs.len();
        if n < 2 {
            return Err(Error::InvalidBatch(format!("in-batch loss needs at least two pairs, got {n}")));
        }
        Ok(Plan {
            images: self.pairs.iter().map(|p| &p.0).collect(),
            texts: self.pairs.iter().map(|p| &p.1).collect(),
            terms: inbatch_terms(n),
            weight: T::one() / T::of(n as f64),
        })
    }
}

impl<T: Real> ContrastiveBatch<T> for HybridBatch<T> {
    fn plan(&self) -> Result<Plan<'_, T>> {
        let n = self.pairs.len();
        if n < 2 {
            return Err(Error::InvalidBatch(format!("hybrid loss needs at least two pairs, got {n}")));
        }
        if self.negatives.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.negatives.len() });
        }
        let mut images: Vec<&FeatureVector<T>> = self.pairs.iter().map(|p| &p.0).collect();
        let mut texts: Vec<&FeatureVector<T>> = self.pairs.iter().map(|p| &p.1).collect();
        let mut terms = inbatch_terms(n);
        for (i, (modality, negs)) in self.negatives.iter().enumerate() {
            for f in negs {
                match modality {
                    Modality::Text => {
                        texts.push(f);
                        terms[2 * i].push((i, texts.len() - 1));
                    }
                    Modality::Image => {
                        images.push(f);
                        terms[2 * i + 1].push((images.len() - 1, i));
                    }
                }
            }
        }
        Ok(Plan { images, texts, terms, weight: T::one() / T::of(n as f64) })
    }
}

/// Embeddings of every feature vector plus the pre-normalization norms.
struct Forward<T> {
    u_norm: Vec<T>,
    e: Vec<Vec<T>>,
}

fn forward<T: Real>(feats: &[&FeatureVector<T>], p: &Projection<T>) -> Result<Forward<T>> {
    let mut out = Forward { u_norm: Vec::with_capacity(feats.len()), e: Vec::with_capacity(feats.len()) };
    for f in feats {
        let u = p.apply(&f.values)?;
        out.u_norm.push(norm(&u));
        out.e.push(normalize(&u));
    }
    Ok(out)
}

/// Loss, score terms, and both tower forwards.
type Evaluated<T> = (T, Vec<Vec<T>>, Forward<T>, Forward<T>);

/// Loss of a planned batch with its score terms.
fn evaluate<T: Real>(plan: &Plan<'_, T>, enc: &DualEncoder<T>) -> Result<Evaluated<T>> {
    let fi = forward(&plan.images, &enc.image)?;
    let ft = forward(&plan.texts, &enc.text)?;
    let scale = enc.logit_scale.exp();
    let mut loss = T::zero();
    let mut scores = Vec::with_capacity(plan.terms.len());
    for term in &plan.terms {
        let s: Vec<T> = term.iter().map(|&(i, j)| scale * dot(&fi.e[i], &ft.e[j])).collect();
        loss = loss + cross_entropy(&s, 0);
        scores.push(s);
    }
    Ok((loss * plan.weight, scores, fi, ft))
}

/// Loss value of any batch.
pub fn loss<T: Real, B: ContrastiveBatch<T> + ?Sized>(batch: &B, enc: &DualEncoder<T>) -> Result<T> {
    Ok(evaluate(&batch.plan()?, enc)?.0)
}

/// Chain rule from `∂L/∂e` to `∂L/∂W` through `e = normalize(Wᵀx)`.
fn accumulate_weights<T: Real>(grad: &mut [T], p: &Projection<T>, x: &[T], e: &[T], u_norm: T, g_e: &[T]) {
    if u_norm == T::zero() {
        // zero projections map to a constant; no gradient flows
        return;
    }
    let along = dot(e, g_e);
    let g_u: Vec<T> = e.iter().zip(g_e).map(|(&ek, &gk)| (gk - ek * along) / u_norm).collect();
    for (i, &xi) in x.iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        let row = &mut grad[i * p.out_dim..(i + 1) * p.out_dim];
        for (g, &gu) in row.iter_mut().zip(&g_u) {
            *g = *g + xi * gu;
        }
    }
}

/// Loss and its full analytic gradient with respect to both weight matrices
/// and the logit scale.
pub fn backward<T: Real, B: ContrastiveBatch<T> + ?Sized>(
    batch: &B,
    enc: &DualEncoder<T>,
) -> Result<(T, Gradients<T>)> {
    let plan = batch.plan()?;
    let (loss, scores, fi, ft) = evaluate(&plan, enc)?;
    let scale = enc.logit_scale.exp();
    let dim = enc.image.out_dim;
    let mut g_ei = vec![vec![T::zero(); dim]; plan.images.len()];
    let mut g_et = vec![vec![T::zero(); dim]; plan.texts.len()];
    let mut g_ls = T::zero();
    for (term, s) in plan.terms.iter().zip(&scores) {
        let mut g_s = softmax(s);
        g_s[0] = g_s[0] - T::one();
        for (&(i, j), (&gs, &sv)) in term.iter().zip(g_s.iter().zip(s)) {
            let g = gs * plan.weight;
            // s = exp(ls)·c  ⇒  ∂s/∂ls = s
            g_ls = g_ls + g * sv;
            let k = g * scale;
            for d in 0..dim {
                g_ei[i][d] = g_ei[i][d] + k * ft.e[j][d];
                g_et[j][d] = g_et[j][d] + k * fi.e[i][d];
            }
        }
    }
    let mut grads = Gradients::zeros(enc);
    for (n, f) in plan.images.iter().enumerate() {
        accumulate_weights(&mut grads.image, &enc.image, &f.values, &fi.e[n], fi.u_norm[n], &g_ei[n]);
    }
    for (n, f) in plan.texts.iter().enumerate() {
        accumulate_weights(&mut grads.text, &enc.text, &f.values, &ft.e[n], ft.u_norm[n], &g_et[n]);
    }
    grads.logit_scale = g_ls;
    Ok((loss, grads))
}

/// `−ln(exp(s⁺) / (exp(s⁺) + Σ exp(sᵢ⁻)))`.
pub fn mmclip_loss_from_scores<T: Real>(positive: T, negatives: &[T]) -> T {
    let all: Vec<T> = std::iter::once(positive).chain(negatives.iter().copied()).collect();
    cross_entropy(&all, 0)
}

/// `(∂L/∂s⁺, [∂L/∂sᵢ⁻])`; the first entry is minus the sum of the others.
pub fn mmclip_gradients<T: Real>(positive: T, negatives: &[T]) -> (T, Vec<T>) {
    let all: Vec<T> = std::iter::once(positive).chain(negatives.iter().copied()).collect();
    let p = softmax(&all);
    let neg = p[1..].to_vec();
    let pos = -neg.iter().copied().sum::<T>();
    (pos, neg)
}

/// In-batch loss of a square score matrix `scores[i][j] = s(Iᵢ, Tⱼ)`.
pub fn inbatch_loss_from_scores<T: Real>(scores: &[Vec<T>]) -> Result<T> {
    let n = scores.len();
    if n < 2 || scores.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidBatch(format!("need a square score matrix of size at least 2, got {n} rows")));
    }
    let mut total = T::zero();
    for (i, row) in scores.iter().enumerate() {
        let col: Vec<T> = scores.iter().map(|r| r[i]).collect();
        total = total + cross_entropy(row, i) + cross_entropy(&col, i);
    }
    Ok(total / T::of(n as f64))
}

/// MMCLIP loss with the positive and negative scores.
pub fn mmclip_loss<T: Real>(batch: &MmclipBatch<T>, enc: &DualEncoder<T>) -> Result<(T, MmclipScores<T>)> {
    let plan = batch.plan()?;
    let (loss, mut scores, ..) = evaluate(&plan, enc)?;
    let s = scores.pop().expect("one term");
    Ok((loss, MmclipScores { positive: s[0], negatives: s[1..].to_vec() }))
}

/// In-batch loss with the full score matrix `s(Iᵢ, Tⱼ)`.
pub fn inbatch_loss<T: Real>(batch: &InBatch<T>, enc: &DualEncoder<T>) -> Result<(T, Vec<Vec<T>>)> {
    let plan = batch.plan()?;
    let (loss, scores, ..) = evaluate(&plan, enc)?;
    let n = batch.pairs.len();
    let mut matrix = vec![vec![T::zero(); n]; n];
    for (term, s) in plan.terms.iter().zip(&scores).step_by(2) {
        for (&(i, j), &v) in term.iter().zip(s) {
            matrix[i][j] = v;
        }
    }
    Ok((loss, matrix))
}
