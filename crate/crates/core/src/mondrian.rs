//! Smoothed Mondrian conformal transducer and predictor.
//!
//! Examples are partitioned into categories by a taxonomy `κ(n, z)`. The
//! nonconformity measure is applied to the candidate's category sub-bag and
//! ranks are counted within that category only, which makes error events
//! Bernoulli(ε_k) separately in every category.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nonconformity::TransductiveMeasure;
use crate::rng::RandomSource;
use crate::scalar::Scalar;
use crate::transductive::{check_grid, draw_tau, record_trial, History, OnlineOptions, PredictionSet, TrialRecord};
use crate::types::{Example, Label, PValuePair, SignificanceLevel};

pub type Category = usize;

/// Built-in taxonomies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Taxonomy<T> {
    /// Every example in category 0; reduces to the plain transducer.
    Global,
    /// Category is the label.
    LabelConditional,
    /// Category 1 when `x[feature] > threshold`, else 0.
    FeatureThreshold { feature: usize, threshold: T },
}

impl<T: Scalar> Taxonomy<T> {
    /// Category of example `z` at trial `n` (1-based).
    pub fn categorize(&self, _n: usize, z: &Example<T>) -> Result<Category> {
        match *self {
            Taxonomy::Global => Ok(0),
            Taxonomy::LabelConditional => Ok(z.label().index()),
            Taxonomy::FeatureThreshold { feature, threshold } => z
                .object()
                .get(feature)
                .map(|&v| usize::from(v > threshold))
                .ok_or(Error::DimensionMismatch {
                    expected: feature + 1,
                    found: z.dim(),
                }),
        }
    }

    pub fn categories(&self) -> &'static [Category] {
        match self {
            Taxonomy::Global => &[0],
            _ => &[0, 1],
        }
    }
}

/// Per-category significance levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySignificance<T> {
    levels: BTreeMap<Category, SignificanceLevel<T>>,
}

impl<T: Scalar> CategorySignificance<T> {
    pub fn new(levels: impl IntoIterator<Item = (Category, SignificanceLevel<T>)>) -> Self {
        Self {
            levels: levels.into_iter().collect(),
        }
    }

    pub fn uniform(epsilon: SignificanceLevel<T>, categories: &[Category]) -> Self {
        Self::new(categories.iter().map(|&k| (k, epsilon)))
    }

    pub fn get(&self, k: Category) -> Result<SignificanceLevel<T>> {
        self.levels.get(&k).copied().ok_or(Error::MissingCategory(k))
    }
}

/// History partitioned into per-category sub-bags.
#[derive(Debug, Clone)]
pub struct MondrianHistory<T: Scalar, M: TransductiveMeasure<T>> {
    taxonomy: Taxonomy<T>,
    parts: BTreeMap<Category, History<T, M>>,
    len: usize,
}

impl<T: Scalar, M: TransductiveMeasure<T>> MondrianHistory<T, M> {
    pub fn new(taxonomy: Taxonomy<T>) -> Self {
        Self {
            taxonomy,
            parts: BTreeMap::new(),
            len: 0,
        }
    }

    pub fn from_examples<'a>(taxonomy: Taxonomy<T>, measure: &M, examples: impl IntoIterator<Item = &'a Example<T>>) -> Result<Self> {
        let mut h = Self::new(taxonomy);
        for z in examples {
            h.push(measure, z.clone())?;
        }
        Ok(h)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn taxonomy(&self) -> &Taxonomy<T> {
        &self.taxonomy
    }

    /// Number of history members in category `k`.
    pub fn category_len(&self, k: Category) -> usize {
        self.parts.get(&k).map_or(0, History::len)
    }

    pub fn push(&mut self, measure: &M, z: Example<T>) -> Result<()> {
        let k = self.taxonomy.categorize(self.len + 1, &z)?;
        self.parts.entry(k).or_default().push(measure, z)?;
        self.len += 1;
        Ok(())
    }

    /// p-value of `candidate` as the next trial, with explicit tie-breaker.
    pub fn p_value(&mut self, measure: &M, candidate: &Example<T>, tau: T) -> Result<T> {
        let k = self.taxonomy.categorize(self.len + 1, candidate)?;
        self.parts.entry(k).or_default().p_value(measure, candidate, tau)
    }

    pub fn p_values(&mut self, measure: &M, x: &[T], rng: &mut RandomSource, smoothed: bool) -> Result<PValuePair<T>> {
        let tau0 = draw_tau(rng, smoothed);
        let tau1 = draw_tau(rng, smoothed);
        let z0 = Example::new(x.to_vec(), Label::Zero)?;
        let p0 = self.p_value(measure, &z0, tau0)?;
        let p1 = self.p_value(measure, &z0.with_label(Label::One), tau1)?;
        Ok(PValuePair { p0, p1, tau0, tau1 })
    }
}

/// Smoothed Mondrian p-value of `candidate` appended to `history`.
pub fn mondrian_p_value<T: Scalar, M: TransductiveMeasure<T>>(
    history: &[Example<T>],
    candidate: &Example<T>,
    taxonomy: Taxonomy<T>,
    measure: &M,
    rng: &mut RandomSource,
) -> Result<T> {
    let tau = draw_tau(rng, true);
    MondrianHistory::from_examples(taxonomy, measure, history)?.p_value(measure, candidate, tau)
}

/// `{ y : p_y > ε_{κ(n, (x, y))} }`.
pub fn mondrian_prediction_set<T: Scalar>(
    p: &PValuePair<T>,
    significance: &CategorySignificance<T>,
    taxonomy: &Taxonomy<T>,
    n: usize,
    x: &[T],
) -> Result<PredictionSet<T>> {
    let mut members = [false; 2];
    let mut levels = [None; 2];
    for y in Label::ALL {
        let k = taxonomy.categorize(n, &Example::new(x.to_vec(), y)?)?;
        let e = significance.get(k)?;
        members[y.index()] = p.get(y) > e.value();
        levels[y.index()] = Some(e);
    }
    Ok(PredictionSet::with_levels(members, levels.map(|l| l.expect("both labels visited"))))
}

#[derive(Debug, Clone)]
pub struct MondrianState<T: Scalar, M: TransductiveMeasure<T>> {
    pub history: MondrianHistory<T, M>,
    pub grid: Vec<SignificanceLevel<T>>,
    pub records: Vec<TrialRecord<T>>,
    /// Category of each trial's true example.
    pub categories: Vec<Category>,
}

impl<T: Scalar, M: TransductiveMeasure<T>> MondrianState<T, M> {
    pub fn log(&self) -> Vec<crate::reject::LoggedPrediction<T>> {
        self.records
            .iter()
            .map(|r| crate::reject::LoggedPrediction { p: r.p, truth: r.truth })
            .collect()
    }
}

/// Online Mondrian protocol with a uniform level ε_k = ε per grid level.
pub fn run_mondrian_online<T: Scalar, M: TransductiveMeasure<T>>(
    initial: &[Example<T>],
    stream: &[Example<T>],
    grid: &[SignificanceLevel<T>],
    taxonomy: Taxonomy<T>,
    measure: &M,
    rng: &mut RandomSource,
    options: OnlineOptions,
) -> Result<MondrianState<T, M>> {
    check_grid(grid)?;
    let mut history = MondrianHistory::from_examples(taxonomy, measure, initial)?;
    let mut records = Vec::with_capacity(stream.len());
    let mut categories = Vec::with_capacity(stream.len());
    for z in stream {
        categories.push(taxonomy.categorize(history.len() + 1, z)?);
        let p = history.p_values(measure, z.object(), rng, options.smoothed)?;
        records.push(record_trial(p, z.label(), grid));
        if !options.blind {
            history.push(measure, z.clone())?;
        }
    }
    Ok(MondrianState {
        history,
        grid: grid.to_vec(),
        records,
        categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonconformity::NearestNeighbor;
    use crate::transductive::{prediction_set, smoothed_fraction};
    use crate::types::ScorePool;

    fn ex(x: &[f64], y: Label) -> Example<f64> {
        Example::new(x.to_vec(), y).unwrap()
    }

    fn eps(e: f64) -> SignificanceLevel<f64> {
        SignificanceLevel::new(e).unwrap()
    }

    #[test]
    fn lone_candidate_gets_tau() {
        let hist = vec![ex(&[0.0], Label::Zero), ex(&[1.0], Label::Zero)];
        let mut h = MondrianHistory::from_examples(Taxonomy::LabelConditional, &NearestNeighbor, &hist).unwrap();
        assert_eq!(h.p_value(&NearestNeighbor, &ex(&[0.5], Label::One), 0.37).unwrap(), 0.37);
        let mut rng = RandomSource::new(0, 0);
        let p = mondrian_p_value(&hist, &ex(&[0.5], Label::One), Taxonomy::LabelConditional, &NearestNeighbor, &mut rng).unwrap();
        assert_eq!(p, RandomSource::new(0, 0).uniform());
    }

    #[test]
    fn within_category_count() {
        // category scores [5, 1], test score 1, tau 0.5
        let pool = ScorePool::new(vec![5.0, 1.0]).unwrap();
        assert_eq!(smoothed_fraction(pool.rank_counts(1.0), 0.5, 2), 0.75);
        // same through the engine: category-1 bag {(0), (5)} with candidate (1)
        // scores: candidate 1, first element 1, second element 4
        let hist = vec![ex(&[0.0], Label::One), ex(&[5.0], Label::One), ex(&[100.0], Label::Zero)];
        let mut h = MondrianHistory::from_examples(Taxonomy::LabelConditional, &NearestNeighbor, &hist).unwrap();
        let p = h.p_value(&NearestNeighbor, &ex(&[1.0], Label::One), 0.5).unwrap();
        // scores [1, 4, 1(candidate)]: greater 1, equal 2
        assert!((p - (1.0 + 0.5 * 2.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn label_conditional_levels() {
        let sig = CategorySignificance::new([(0, eps(0.1)), (1, eps(0.3))]);
        let set = mondrian_prediction_set(&PValuePair::new(0.2, 0.2), &sig, &Taxonomy::LabelConditional, 1, &[0.0]).unwrap();
        assert_eq!(set.members().collect::<Vec<_>>(), vec![Label::Zero]);
        assert_eq!(set.level(Label::One).value(), 0.3);
        let empty = mondrian_prediction_set(&PValuePair::new(0.0, 0.0), &sig, &Taxonomy::LabelConditional, 1, &[0.0]).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn uniform_levels_reduce_to_plain_sets() {
        for (p0, p1) in [(0.7, 0.2), (0.05, 0.9), (0.3, 0.3)] {
            let p = PValuePair::new(p0, p1);
            for e in [0.1, 0.25, 0.5, 0.8] {
                let sig = CategorySignificance::uniform(eps(e), &[0, 1]);
                let m = mondrian_prediction_set(&p, &sig, &Taxonomy::FeatureThreshold { feature: 0, threshold: 0.0 }, 3, &[1.0]).unwrap();
                assert_eq!(m, prediction_set(&p, eps(e)));
            }
        }
    }

    #[test]
    fn missing_category_level_is_an_error() {
        let sig = CategorySignificance::new([(0, eps(0.1))]);
        let r = mondrian_prediction_set(&PValuePair::new(0.2, 0.2), &sig, &Taxonomy::LabelConditional, 1, &[0.0]);
        assert!(matches!(r, Err(Error::MissingCategory(1))));
    }

    #[test]
    fn feature_threshold_taxonomy() {
        let t = Taxonomy::FeatureThreshold { feature: 1, threshold: 0.5 };
        assert_eq!(t.categorize(1, &ex(&[0.0, 0.6], Label::Zero)).unwrap(), 1);
        assert_eq!(t.categorize(9, &ex(&[9.0, 0.5], Label::One)).unwrap(), 0);
        assert!(t.categorize(1, &ex(&[0.0], Label::One)).is_err());
    }
}
