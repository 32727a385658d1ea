//! Nonconformity measures.
//!
//! * [`NearestNeighbor`]: transductive measure scoring an example by the
//!   Euclidean distance from its object to the nearest *other* object with the
//!   same label (`+inf` when there is none).
//! * [`KnnScorer`] + [`margin_score`]: inductive measure. A k-NN class-1
//!   frequency is fitted on the proper training set and an example scores
//!   `1 - p̂(candidate | x)`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{Bag, Example, Label};

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[inline]
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Euclidean distance between two objects.
pub fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_dim(a.len(), b.len())?;
    Ok(sq_dist(a, b).sqrt())
}

/// Nearest same-label neighbour distance of the bag element at `index`,
/// excluding the element itself.
pub fn nn_score_at<T: Scalar>(bag: &[Example<T>], index: usize) -> Result<T> {
    let target = bag
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("index {index} outside bag of size {}", bag.len())))?;
    let mut best = T::infinity();
    for (j, z) in bag.iter().enumerate() {
        if j != index && z.label() == target.label() {
            best = best.min(euclidean(z.object(), target.object())?);
        }
    }
    Ok(best)
}

/// Nearest same-label neighbour score of `target`, which must be a member of
/// `bag`. With duplicates, one copy of `target` is excluded.
pub fn nn_score<T: Scalar>(bag: &Bag<T>, target: &Example<T>) -> Result<T> {
    let index = bag
        .as_slice()
        .iter()
        .position(|z| z == target)
        .ok_or_else(|| Error::InvalidArgument("target is not a member of the bag".into()))?;
    nn_score_at(bag.as_slice(), index)
}

/// A transductive nonconformity measure evaluated incrementally.
///
/// The measure keeps a cache describing the current history so that scoring
/// a candidate against `history ∪ {candidate}` does not need to rescore the
/// whole bag from scratch.
pub trait TransductiveMeasure<T: Scalar>: Sync {
    type Cache: Clone + Default + Send + std::fmt::Debug;

    /// Updates `cache` for `added` joining `history` (not yet appended).
    fn record(&self, cache: &mut Self::Cache, history: &[Example<T>], added: &Example<T>) -> Result<()>;

    /// Writes the scores of every history element under the augmented bag
    /// `history ∪ {candidate}` into `out` (history order) and returns the
    /// candidate's own score.
    fn augmented_scores(
        &self,
        cache: &Self::Cache,
        history: &[Example<T>],
        candidate: &Example<T>,
        out: &mut Vec<T>,
    ) -> Result<T>;
}

/// Same-label 1-NN distance measure.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestNeighbor;

/// Per-element nearest same-label distance within the history.
#[derive(Debug, Clone, Default)]
pub struct NeighborCache<T> {
    nearest: Vec<T>,
}

impl<T: Scalar> TransductiveMeasure<T> for NearestNeighbor {
    type Cache = NeighborCache<T>;

    fn record(&self, cache: &mut NeighborCache<T>, history: &[Example<T>], added: &Example<T>) -> Result<()> {
        if let Some(first) = history.first() {
            check_dim(first.dim(), added.dim())?;
        }
        let mut own = T::infinity();
        for (j, z) in history.iter().enumerate() {
            if z.label() == added.label() {
                let d = sq_dist(z.object(), added.object()).sqrt();
                if d < cache.nearest[j] {
                    cache.nearest[j] = d;
                }
                own = own.min(d);
            }
        }
        cache.nearest.push(own);
        Ok(())
    }

    fn augmented_scores(
        &self,
        cache: &NeighborCache<T>,
        history: &[Example<T>],
        candidate: &Example<T>,
        out: &mut Vec<T>,
    ) -> Result<T> {
        if let Some(first) = history.first() {
            check_dim(first.dim(), candidate.dim())?;
        }
        out.clear();
        out.reserve(history.len());
        let mut own = T::infinity();
        for (z, &nearest) in history.iter().zip(&cache.nearest) {
            if z.label() == candidate.label() {
                let d = sq_dist(z.object(), candidate.object()).sqrt();
                own = own.min(d);
                out.push(nearest.min(d));
            } else {
                out.push(nearest);
            }
        }
        Ok(own)
    }
}

/// Fitted scorer giving an estimate of P(label = 1 | x).
pub trait ProbabilityScorer<T: Scalar>: Send + Sync {
    fn prob_one(&self, x: &[T]) -> Result<T>;
}

/// k-nearest-neighbour class-1 frequency.
#[derive(Debug, Clone)]
pub struct KnnScorer<T> {
    training: Vec<Example<T>>,
    k: usize,
}

/// Fits a k-NN scorer on the proper training set.
pub fn fit_knn_scorer<T: Scalar>(proper_training: &[Example<T>], k: usize) -> Result<KnnScorer<T>> {
    let Some(first) = proper_training.first() else {
        return Err(Error::EmptyTraining);
    };
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > proper_training.len() {
        return Err(Error::KTooLarge {
            k,
            n: proper_training.len(),
        });
    }
    for z in proper_training {
        check_dim(first.dim(), z.dim())?;
    }
    Ok(KnnScorer {
        training: proper_training.to_vec(),
        k,
    })
}

impl<T: Scalar> KnnScorer<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the `k` nearest training objects; distance ties go to the
    /// lower training index.
    pub fn neighbors(&self, x: &[T]) -> Result<Vec<usize>> {
        check_dim(self.training[0].dim(), x.len())?;
        let mut d: Vec<(T, usize)> = self
            .training
            .iter()
            .enumerate()
            .map(|(i, z)| (sq_dist(z.object(), x), i))
            .collect();
        let by_dist_then_index =
            |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, by_dist_then_index);
            d.truncate(self.k);
        }
        d.sort_by(by_dist_then_index);
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }
}

impl<T: Scalar> ProbabilityScorer<T> for KnnScorer<T> {
    fn prob_one(&self, x: &[T]) -> Result<T> {
        let ones = self
            .neighbors(x)?
            .into_iter()
            .filter(|&i| self.training[i].label() == Label::One)
            .count();
        Ok(T::of_count(ones) / T::of_count(self.k))
    }
}

/// `1 - p̂(candidate | x)` with `p̂(0 | x) = 1 - p̂(1 | x)`.
pub fn margin_from_prob<T: Scalar>(prob_one: T, candidate: Label) -> T {
    match candidate {
        Label::One => T::one() - prob_one,
        Label::Zero => prob_one,
    }
}

/// Inductive margin nonconformity score; larger means stranger.
pub fn margin_score<T: Scalar, S: ProbabilityScorer<T> + ?Sized>(scorer: &S, x: &[T], candidate: Label) -> Result<T> {
    Ok(margin_from_prob(scorer.prob_one(x)?, candidate))
}
