use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Category, Modality, Negative, NegativeGroup};
use crate::encoder::EmbeddingMatrix;
use crate::scalar::dot;
use crate::{Error, Real, Result};

/// Optional sampling from a wider candidate pool; off by default (plain top-k).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RetrievalOptions {
    /// Draw the `k` negatives uniformly from the top `m` instead of taking the top `k`.
    pub sample_from_top: Option<usize>,
    pub seed: u64,
}

fn by_rank<T: Real>(a: &(usize, T), b: &(usize, T)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// Exact top-`k` rows by inner product with `query`, skipping `exclude`.
/// Ties are broken by ascending row id.
pub fn top_k_cosine<T: Real>(
    query: &[T],
    rows: &EmbeddingMatrix<T>,
    k: usize,
    exclude: Option<usize>,
) -> Vec<(usize, T)> {
    let mut scored: Vec<(usize, T)> =
        (0..rows.len()).filter(|&i| Some(i) != exclude).map(|i| (i, dot(query, rows.row(i)))).collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k, by_rank);
        scored.truncate(k);
    }
    scored.sort_by(by_rank);
    scored
}

/// The `k` captions most similar to row `query`, excluding the row itself.
pub fn retrieval_negatives<T: Real>(query: usize, embeddings: &EmbeddingMatrix<T>, k: usize) -> Result<NegativeGroup> {
    retrieval_negatives_with(query, embeddings, k, RetrievalOptions::default())
}

pub fn retrieval_negatives_with<T: Real>(
    query: usize,
    embeddings: &EmbeddingMatrix<T>,
    k: usize,
    options: RetrievalOptions,
) -> Result<NegativeGroup> {
    let n = embeddings.len();
    if query >= n {
        return Err(Error::out_of_range("query row", format!("{query} in a corpus of {n}")));
    }
    if k == 0 || k >= n {
        return Err(Error::out_of_range("k", format!("{k} in a corpus of {n}")));
    }
    let pool = options.sample_from_top.unwrap_or(k);
    if pool < k || pool >= n {
        return Err(Error::out_of_range("sample_from_top", format!("{pool} for k = {k} in a corpus of {n}")));
    }
    let mut hits = top_k_cosine(embeddings.row(query), embeddings, pool, Some(query));
    if pool > k {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut keep = sample(&mut rng, pool, k).into_vec();
        keep.sort_unstable();
        hits = keep.into_iter().map(|i| hits[i]).collect();
    }
    let negatives = hits
        .iter()
        .enumerate()
        .map(|(rank, &(row, cos))| Negative {
            id: embeddings.ids()[row].clone(),
            category: Category::Retrieval,
            delta: format!("rank {} cosine {:.6}", rank + 1, cos.to_f64_lossy()),
        })
        .collect();
    Ok(NegativeGroup::new(embeddings.ids()[query].clone(), Modality::Text, negatives))
}
