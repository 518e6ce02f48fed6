use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Category, Modality, Negative, NegativeGroup};
use crate::{Error, Result};

/// Uniform sample without replacement from `corpus`, never including `positive`.
pub fn random_negatives(
    positive: &str,
    corpus: &[String],
    modality: Modality,
    count: usize,
    seed: u64,
) -> Result<NegativeGroup> {
    if count == 0 {
        return Err(Error::out_of_range("count", "0"));
    }
    let mut pool: Vec<&String> = corpus.iter().filter(|c| c.as_str() != positive).collect();
    if corpus.len() <= count || pool.len() < count {
        return Err(Error::out_of_range(
            "count",
            format!("{count} negatives requested from a corpus of {}", corpus.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (picked, _) = pool.partial_shuffle(&mut rng, count);
    let negatives = picked
        .iter()
        .map(|id| Negative { id: (*id).clone(), category: Category::Random, delta: "uniform sample".into() })
        .collect();
    Ok(NegativeGroup::new(positive, modality, negatives))
}
