//! Toy dual encoder: fixed feature extractors followed by trainable linear
//! projections onto the unit sphere of a shared 32-dim space.

mod features;
mod matrix;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scalar::{dot, norm};
use crate::{Error, Real, Result};

pub use features::{
    fnv1a64, image_descriptor, image_features, layout, text_features, token_slot, tokens, IMAGE_DIM, TEXT_DIM,
};
pub use matrix::{EmbeddingMatrix, MatrixFormat};

pub const EMBED_DIM: usize = 32;

/// `ln(1/0.07)`, the initial log inverse temperature.
pub fn initial_logit_scale() -> f64 {
    (1.0f64 / 0.07).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
}

impl<T: Real> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        FeatureVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Linear map `u = Wᵀx` with `W` stored row-major as `in_dim × out_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
}

impl<T: Real> Projection<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Projection { in_dim, out_dim, weights: vec![T::zero(); in_dim * out_dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut p = Self::zeros(dim, dim);
        for i in 0..dim {
            p.weights[i * dim + i] = T::one();
        }
        p
    }

    /// Entries drawn i.i.d. from `N(0, 1/in_dim)`.
    pub fn random(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 1.0 / (in_dim as f64).sqrt()).expect("positive std");
        let weights = (0..in_dim * out_dim).map(|_| T::of(normal.sample(rng))).collect();
        Projection { in_dim, out_dim, weights }
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.weights.iter().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(Error::out_of_range("projection weights", "non-finite entry"))
        }
    }

    /// Unnormalized projection `Wᵀx`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch { expected: self.in_dim, found: x.len() });
        }
        let mut u = vec![T::zero(); self.out_dim];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let row = &self.weights[i * self.out_dim..(i + 1) * self.out_dim];
            for (uj, &w) in u.iter_mut().zip(row) {
                *uj = *uj + w * xi;
            }
        }
        Ok(u)
    }
}

/// `u/‖u‖`, with the zero vector mapped to e₁.
pub fn normalize<T: Real>(u: &[T]) -> Vec<T> {
    let n = norm(u);
    if n == T::zero() {
        let mut e = vec![T::zero(); u.len()];
        if let Some(first) = e.first_mut() {
            *first = T::one();
        }
        e
    } else {
        u.iter().map(|&v| v / n).collect()
    }
}

/// Unit-norm embedding of `features` under `projection`.
pub fn embed<T: Real>(features: &FeatureVector<T>, projection: &Projection<T>) -> Result<Vec<T>> {
    Ok(normalize(&projection.apply(&features.values)?))
}

/// Embeds `(id, features)` items through one tower into a matrix.
pub fn embed_matrix<'a, T: Real>(
    projection: &Projection<T>,
    items: impl IntoIterator<Item = (&'a String, &'a FeatureVector<T>)>,
) -> Result<EmbeddingMatrix<T>> {
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for (id, f) in items {
        ids.push(id.clone());
        rows.push(embed(f, projection)?);
    }
    EmbeddingMatrix::from_rows(projection.out_dim, ids, rows)
}

/// `exp(logit_scale)·⟨a, b⟩`.
pub fn similarity<T: Real>(a: &[T], b: &[T], logit_scale: T) -> T {
    logit_scale.exp() * dot(a, b)
}

/// Image and text towers with a shared trainable logit scale.
#[derive(Clone, Debug, PartialEq)]
pub struct DualEncoder<T> {
    pub image: Projection<T>,
    pub text: Projection<T>,
    pub logit_scale: T,
}

impl<T: Real> DualEncoder<T> {
    /// Random towers of the default dimensions, seeded.
    pub fn new(seed: u64) -> Self {
        Self::with_dims(IMAGE_DIM, TEXT_DIM, EMBED_DIM, seed)
    }

    pub fn with_dims(image_dim: usize, text_dim: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = Projection::random(image_dim, embed_dim, &mut rng);
        let text = Projection::random(text_dim, embed_dim, &mut rng);
        DualEncoder { image, text, logit_scale: T::of(initial_logit_scale()) }
    }

    pub fn embed_image(&self, f: &FeatureVector<T>) -> Result<Vec<T>> {
        embed(f, &self.image)
    }

    pub fn embed_text(&self, f: &FeatureVector<T>) -> Result<Vec<T>> {
        embed(f, &self.text)
    }

    pub fn score(&self, a: &[T], b: &[T]) -> T {
        similarity(a, b, self.logit_scale)
    }

    pub fn parameter_count(&self) -> usize {
        self.image.weights.len() + self.text.weights.len() + 1
    }

    /// Little-endian f64 block: image weights, text weights, logit scale.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * self.parameter_count());
        for &w in self.image.weights.iter().chain(&self.text.weights) {
            w.write_le(&mut out);
        }
        self.logit_scale.write_le(&mut out);
        out
    }

    /// Inverse of [`DualEncoder::to_bytes`] for known dimensions.
    pub fn from_bytes(bytes: &[u8], image_dim: usize, text_dim: usize, embed_dim: usize) -> Result<Self> {
        let n = (image_dim + text_dim) * embed_dim + 1;
        if bytes.len() != 8 * n {
            return Err(Error::DimensionMismatch { expected: 8 * n, found: bytes.len() });
        }
        let vals: Vec<T> =
            bytes.chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk")))).collect();
        let split = image_dim * embed_dim;
        let enc = DualEncoder {
            image: Projection { in_dim: image_dim, out_dim: embed_dim, weights: vals[..split].to_vec() },
            text: Projection { in_dim: text_dim, out_dim: embed_dim, weights: vals[split..n - 1].to_vec() },
            logit_scale: vals[n - 1],
        };
        enc.image.check_finite()?;
        enc.text.check_finite()?;
        Ok(enc)
    }
}
