//! Iterative Procrustes refinement from an induced dictionary.

use ndarray::{s, Axis};

use crate::embedding::{EmbeddingSpace, SeedDictionary};
use crate::error::{Error, Result};
use crate::procrustes::{procrustes_from_rows, AlignmentMap};
use crate::retrieval::{RetrievalIndex, Scorer};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RefineConfig {
    pub rounds: usize,
    /// Candidates are restricted to the `max_rank` most frequent words of
    /// each side.
    pub max_rank: usize,
    /// Nearest-neighbour criterion for dictionary induction.
    pub scorer: Scorer,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            rounds: 5,
            max_rank: 75_000,
            scorer: Scorer::CSLS_DEFAULT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineOutcome {
    /// The induced dictionary stopped changing.
    Converged,
    RoundsExhausted,
    /// No mutual nearest neighbours were found; the input map is returned.
    EmptyDictionary,
}

#[derive(Clone, Debug)]
pub struct RefineResult {
    pub map: AlignmentMap,
    pub outcome: RefineOutcome,
    pub rounds_run: usize,
    /// Size of the dictionary induced in each round.
    pub dictionary_sizes: Vec<usize>,
    /// Dictionary used for the last Procrustes solve.
    pub dictionary: Option<SeedDictionary>,
}

/// Mutual nearest-neighbour pairs `(source row, target row)` among the
/// `max_rank` most frequent rows of each side, in source row order.
pub fn induce_dictionary(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    omega: &AlignmentMap,
    max_rank: usize,
    scorer: Scorer,
) -> Result<Vec<(usize, usize)>> {
    let ns = max_rank.min(src.len());
    let nt = max_rank.min(tgt.len());
    let index = RetrievalIndex::from_matrices(
        src.vectors().slice(s![..ns, ..]),
        tgt.vectors().slice(s![..nt, ..]),
        omega,
        scorer,
    )?;
    let src_rows: Vec<usize> = (0..ns).collect();
    let tgt_rows: Vec<usize> = (0..nt).collect();
    let forward = index.best_matches(&src_rows);
    let backward = index.best_sources(&tgt_rows, ns);
    Ok(forward
        .iter()
        .enumerate()
        .filter(|&(i, &(j, _))| backward[j] == i)
        .map(|(i, &(j, _))| (i, j))
        .collect())
}

/// Alternates dictionary induction and Procrustes for up to
/// `config.rounds` rounds, stopping early once the dictionary is stable.
pub fn refine(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    omega: &AlignmentMap,
    config: &RefineConfig,
) -> Result<RefineResult> {
    if config.max_rank == 0 {
        return Err(Error::InvalidConfig("max_rank must be positive".into()));
    }
    let mut map = omega.clone();
    let mut previous: Option<Vec<(usize, usize)>> = None;
    let mut sizes = Vec::new();
    let mut outcome = RefineOutcome::RoundsExhausted;
    let mut rounds_run = 0;
    for round in 0..config.rounds {
        let pairs = induce_dictionary(src, tgt, &map, config.max_rank, config.scorer)?;
        sizes.push(pairs.len());
        log::debug!("refine round {}: {} mutual pairs", round + 1, pairs.len());
        if pairs.is_empty() {
            outcome = RefineOutcome::EmptyDictionary;
            break;
        }
        if previous.as_ref() == Some(&pairs) {
            outcome = RefineOutcome::Converged;
            break;
        }
        let (si, ti): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let x = src.vectors().select(Axis(0), &si);
        let y = tgt.vectors().select(Axis(0), &ti);
        map = match procrustes_from_rows(x.view(), y.view()) {
            Ok(m) => m,
            Err(Error::Degenerate(_)) => {
                outcome = RefineOutcome::EmptyDictionary;
                break;
            }
            Err(e) => return Err(e),
        };
        rounds_run += 1;
        previous = Some(pairs);
    }
    let dictionary = match &previous {
        Some(pairs) => Some(SeedDictionary::new(
            pairs
                .iter()
                .map(|&(i, j)| (src.vocab().word(i).to_string(), tgt.vocab().word(j).to_string()))
                .collect(),
        )?),
        None => None,
    };
    Ok(RefineResult {
        map,
        outcome,
        rounds_run,
        dictionary_sizes: sizes,
        dictionary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Vocabulary;
    use crate::linalg::{gaussian_matrix, random_orthogonal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space_from(rows: ndarray::Array2<f64>) -> EmbeddingSpace {
        let words = (0..rows.nrows()).map(|i| format!("w{i}")).collect();
        EmbeddingSpace::new(Vocabulary::from_words(words).unwrap(), rows).unwrap()
    }

    #[test]
    fn exact_map_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian_matrix(400, 10, &mut rng);
        let q = random_orthogonal(10, &mut rng);
        let src = space_from(x.clone());
        let tgt = space_from(x.dot(&q.t()));
        let start = AlignmentMap::new(q.clone()).unwrap();
        for scorer in [Scorer::Cosine, Scorer::CSLS_DEFAULT] {
            let pairs = induce_dictionary(&src, &tgt, &start, 1000, scorer).unwrap();
            assert_eq!(pairs, (0..400).map(|i| (i, i)).collect::<Vec<_>>());
            let cfg = RefineConfig { rounds: 3, max_rank: 1000, scorer };
            let r = refine(&src, &tgt, &start, &cfg).unwrap();
            assert_eq!(r.outcome, RefineOutcome::Converged);
            assert!((&r.map.matrix() - &q).iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn zero_rounds_returns_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = space_from(gaussian_matrix(50, 4, &mut rng));
        let cfg = RefineConfig { rounds: 0, ..Default::default() };
        let r = refine(&s, &s, &AlignmentMap::identity(4), &cfg).unwrap();
        assert_eq!(r.outcome, RefineOutcome::RoundsExhausted);
        assert_eq!(r.map, AlignmentMap::identity(4));
        assert!(r.dictionary.is_none());
    }
}
