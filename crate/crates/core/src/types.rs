//! Domain types: examples, bags, score pools, significance levels and
//! p-value pairs.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Zero,
    One,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Zero, Label::One];

    pub fn index(self) -> usize {
        match self {
            Label::Zero => 0,
            Label::One => 1,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Zero => Label::One,
            Label::One => Label::Zero,
        }
    }

    pub fn from_index(i: usize) -> Result<Label> {
        match i {
            0 => Ok(Label::Zero),
            1 => Ok(Label::One),
            _ => Err(Error::InvalidLabel(i as i64)),
        }
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;

    fn try_from(v: i64) -> Result<Label> {
        match v {
            0 => Ok(Label::Zero),
            1 => Ok(Label::One),
            _ => Err(Error::InvalidLabel(v)),
        }
    }
}

/// An (object, label) pair. Feature values are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    object: Vec<T>,
    label: Label,
}

impl<T: Scalar> Example<T> {
    pub fn new(object: Vec<T>, label: Label) -> Result<Self> {
        if let Some((feature, v)) = object.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                feature,
                value: v.to_f64_lossy(),
            });
        }
        Ok(Self { object, label })
    }

    pub fn object(&self) -> &[T] {
        &self.object
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.object.len()
    }

    pub fn with_label(&self, label: Label) -> Self {
        Self {
            object: self.object.clone(),
            label,
        }
    }

    /// Total order used for multiset comparison; valid because features are finite.
    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.label.cmp(&other.label).then_with(|| {
            for (a, b) in self.object.iter().zip(&other.object) {
                match a.partial_cmp(b).expect("finite features") {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            self.object.len().cmp(&other.object.len())
        })
    }
}

/// A multiset of examples. Equality ignores insertion order.
#[derive(Debug, Clone, Default)]
pub struct Bag<T> {
    examples: Vec<Example<T>>,
}

impl<T: Scalar> Bag<T> {
    pub fn new() -> Self {
        Self { examples: Vec::new() }
    }

    pub fn insert(&mut self, z: Example<T>) {
        self.examples.push(z);
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Elements in insertion order. Callers must not rely on the order for
    /// anything that should be a function of the bag alone.
    pub fn as_slice(&self) -> &[Example<T>] {
        &self.examples
    }

    fn canonical(&self) -> Vec<&Example<T>> {
        let mut v: Vec<_> = self.examples.iter().collect();
        v.sort_by(|a, b| a.canonical_cmp(b));
        v
    }
}

impl<T: Scalar> FromIterator<Example<T>> for Bag<T> {
    fn from_iter<I: IntoIterator<Item = Example<T>>>(iter: I) -> Self {
        Self {
            examples: iter.into_iter().collect(),
        }
    }
}

impl<T: Scalar> PartialEq for Bag<T> {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .canonical()
                .into_iter()
                .zip(other.canonical())
                .all(|(a, b)| a.canonical_cmp(b) == Ordering::Equal)
    }
}

/// Tie-aware rank counts of a query score against a collection of scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RankCounts {
    pub greater: usize,
    pub equal: usize,
}

impl RankCounts {
    /// Linear scan over unsorted scores.
    pub fn scan<T: Scalar>(scores: &[T], query: T) -> Self {
        let mut c = RankCounts::default();
        for &s in scores {
            if s > query {
                c.greater += 1;
            } else if s == query {
                c.equal += 1;
            }
        }
        c
    }

    pub fn greater_or_equal(&self) -> usize {
        self.greater + self.equal
    }
}

/// Sorted multiset of nonconformity scores (may contain `+inf`, never NaN).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScorePool<T> {
    sorted: Vec<T>,
}

impl<T: Scalar> ScorePool<T> {
    pub fn new(scores: Vec<T>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| s.is_nan()) {
            return Err(Error::NanScore(i));
        }
        let mut sorted = scores;
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN rejected above"));
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn scores(&self) -> &[T] {
        &self.sorted
    }

    pub fn insert(&mut self, score: T) -> Result<()> {
        if score.is_nan() {
            return Err(Error::NanScore(self.sorted.len()));
        }
        let at = self.sorted.partition_point(|&s| s <= score);
        self.sorted.insert(at, score);
        Ok(())
    }

    pub fn count_gt(&self, a: T) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&s| s <= a)
    }

    pub fn count_eq(&self, a: T) -> usize {
        self.sorted.partition_point(|&s| s <= a) - self.sorted.partition_point(|&s| s < a)
    }

    pub fn count_geq(&self, a: T) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&s| s < a)
    }

    pub fn rank_counts(&self, a: T) -> RankCounts {
        RankCounts {
            greater: self.count_gt(a),
            equal: self.count_eq(a),
        }
    }
}

/// Significance level ε in the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SignificanceLevel<T>(T);

impl<T: Scalar> SignificanceLevel<T> {
    pub fn new(epsilon: T) -> Result<Self> {
        if epsilon > T::zero() && epsilon < T::one() {
            Ok(Self(epsilon))
        } else {
            Err(Error::InvalidSignificance(epsilon.to_f64_lossy()))
        }
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// Evenly spaced significance levels `start, start+step, ... <= stop`.
///
/// Levels are computed as `start + i * step` so that no rounding accumulates.
pub fn epsilon_grid<T: Scalar>(start: T, stop: T, step: T) -> Result<Vec<SignificanceLevel<T>>> {
    if !(step > T::zero()) || start > stop {
        return Err(Error::InvalidArgument(format!(
            "bad epsilon grid {start}:{stop}:{step}"
        )));
    }
    let slack = step * T::of(1e-9);
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let e = start + T::of_count(i) * step;
        if e > stop + slack {
            break;
        }
        // Snap to the step lattice so 0.07 prints as 0.07, not 0.07000000000000001.
        let snapped = T::of((e.to_f64_lossy() * 1e10).round() / 1e10);
        out.push(SignificanceLevel::new(snapped)?);
        i += 1;
    }
    Ok(out)
}

/// The default grid 0.01, 0.02, ..., 0.99.
pub fn default_epsilon_grid<T: Scalar>() -> Vec<SignificanceLevel<T>> {
    epsilon_grid(T::of(0.01), T::of(0.99), T::of(0.01)).expect("static grid is valid")
}

/// Smoothed p-values for both candidate labels of one test object, with the
/// tie-breaking draws that produced them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValuePair<T> {
    pub p0: T,
    pub p1: T,
    pub tau0: T,
    pub tau1: T,
}

impl<T: Scalar> PValuePair<T> {
    pub fn new(p0: T, p1: T) -> Self {
        Self {
            p0,
            p1,
            tau0: T::one(),
            tau1: T::one(),
        }
    }

    pub fn get(&self, y: Label) -> T {
        match y {
            Label::Zero => self.p0,
            Label::One => self.p1,
        }
    }

    pub fn min(&self) -> T {
        self.p0.min(self.p1)
    }

    pub fn max(&self) -> T {
        self.p0.max(self.p1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(v: &[f64]) -> ScorePool<f64> {
        ScorePool::new(v.to_vec()).unwrap()
    }

    #[test]
    fn pool_counts_match_examples() {
        let p = pool(&[3.0, 1.0, 2.0]);
        // brute force over the list
        let brute = [3.0, 1.0, 2.0].iter().filter(|&&s| s >= 2.0).count();
        assert_eq!(p.count_geq(2.0), brute);
        assert_eq!(p.count_geq(2.0), 2);
        assert_eq!(pool(&[]).count_geq(0.0), 0);
        assert_eq!(pool(&[1.0, 1.0, 1.0]).count_eq(1.0), 3);
    }

    #[test]
    fn pool_rejects_nan_and_orders_infinity_last() {
        assert!(matches!(ScorePool::new(vec![1.0, f64::NAN]), Err(Error::NanScore(1))));
        let p = pool(&[f64::INFINITY, 5.0, 1.0]);
        assert_eq!(p.scores()[2], f64::INFINITY);
        assert_eq!(p.count_gt(1e300), 1);
        assert_eq!(p.count_eq(f64::INFINITY), 1);
    }

    #[test]
    fn pool_insert_keeps_order() {
        let mut p = pool(&[1.0, 3.0]);
        p.insert(2.0).unwrap();
        p.insert(2.0).unwrap();
        assert_eq!(p.scores(), &[1.0, 2.0, 2.0, 3.0]);
        assert!(p.insert(f64::NAN).is_err());
    }

    #[test]
    fn example_rejects_non_finite() {
        assert!(Example::new(vec![0.0, f64::NAN], Label::Zero).is_err());
        assert!(Example::new(vec![f64::INFINITY], Label::One).is_err());
        assert!(Label::try_from(2).is_err());
    }

    #[test]
    fn bag_equality_is_permutation_invariant() {
        let zs: Vec<Example<f64>> = vec![
            Example::new(vec![0.0, 1.0], Label::Zero).unwrap(),
            Example::new(vec![0.0, 1.0], Label::Zero).unwrap(),
            Example::new(vec![2.0, -1.0], Label::One).unwrap(),
            Example::new(vec![0.5, 1.0], Label::One).unwrap(),
            Example::new(vec![0.0, 1.0], Label::One).unwrap(),
        ];
        let reference: Bag<f64> = zs.iter().cloned().collect();
        let mut idx: Vec<usize> = (0..zs.len()).collect();
        // all 120 permutations via Heap's algorithm
        let mut c = vec![0usize; idx.len()];
        let mut count = 1;
        let mut i = 0;
        while i < idx.len() {
            if c[i] < i {
                if i % 2 == 0 {
                    idx.swap(0, i);
                } else {
                    idx.swap(c[i], i);
                }
                let b: Bag<f64> = idx.iter().map(|&j| zs[j].clone()).collect();
                assert_eq!(b, reference);
                assert_eq!(b.len(), 5);
                count += 1;
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        assert_eq!(count, 120);
        let fewer: Bag<f64> = zs[..4].iter().cloned().collect();
        assert_ne!(fewer, reference);
    }

    #[test]
    fn significance_bounds() {
        assert!(SignificanceLevel::new(0.0).is_err());
        assert!(SignificanceLevel::new(1.0).is_err());
        assert!(SignificanceLevel::new(0.5f32).is_ok());
    }

    #[test]
    fn default_grid_has_99_levels() {
        let g = default_epsilon_grid::<f64>();
        assert_eq!(g.len(), 99);
        assert_eq!(g[0].value(), 0.01);
        assert_eq!(g[6].value(), 0.07);
        assert_eq!(g[98].value(), 0.99);
    }
}
