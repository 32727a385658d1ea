//! Smoothed full (transductive) conformal prediction in the online protocol.

use crate::error::Result;
use crate::nonconformity::TransductiveMeasure;
use crate::reject::LoggedPrediction;
use crate::rng::RandomSource;
use crate::scalar::Scalar;
use crate::types::{Bag, Example, Label, PValuePair, RankCounts, SignificanceLevel};

/// Draws a tie-breaking value: uniform on `[0, 1)` when smoothing, else 1
/// (which reduces the smoothed formula to the deterministic `>=` count).
pub fn draw_tau<T: Scalar>(rng: &mut RandomSource, smoothed: bool) -> T {
    if smoothed {
        T::of(rng.uniform())
    } else {
        T::one()
    }
}

/// `(#greater + tau * #equal) / total`.
pub fn smoothed_fraction<T: Scalar>(counts: RankCounts, tau: T, total: usize) -> T {
    (T::of_count(counts.greater) + tau * T::of_count(counts.equal)) / T::of_count(total)
}

/// A bag of revealed examples plus the measure's incremental cache.
#[derive(Debug, Clone)]
pub struct History<T: Scalar, M: TransductiveMeasure<T>> {
    examples: Vec<Example<T>>,
    cache: M::Cache,
    scratch: Vec<T>,
}

impl<T: Scalar, M: TransductiveMeasure<T>> Default for History<T, M> {
    fn default() -> Self {
        Self {
            examples: Vec::new(),
            cache: M::Cache::default(),
            scratch: Vec::new(),
        }
    }
}

impl<T: Scalar, M: TransductiveMeasure<T>> History<T, M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_examples<'a>(measure: &M, examples: impl IntoIterator<Item = &'a Example<T>>) -> Result<Self> {
        let mut h = Self::new();
        for z in examples {
            h.push(measure, z.clone())?;
        }
        Ok(h)
    }

    pub fn push(&mut self, measure: &M, z: Example<T>) -> Result<()> {
        measure.record(&mut self.cache, &self.examples, &z)?;
        self.examples.push(z);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example<T>] {
        &self.examples
    }

    /// Rank counts of the candidate's score within the augmented bag. The
    /// candidate ties with itself, so `equal >= 1`.
    pub fn rank(&mut self, measure: &M, candidate: &Example<T>) -> Result<RankCounts> {
        let own = measure.augmented_scores(&self.cache, &self.examples, candidate, &mut self.scratch)?;
        let mut counts = RankCounts::scan(&self.scratch, own);
        counts.equal += 1;
        Ok(counts)
    }

    /// Smoothed p-value of `candidate` with an explicit tie-breaking value.
    pub fn p_value(&mut self, measure: &M, candidate: &Example<T>, tau: T) -> Result<T> {
        let counts = self.rank(measure, candidate)?;
        Ok(smoothed_fraction(counts, tau, self.examples.len() + 1))
    }

    /// p-values for both labels of `x`; one fresh tie-breaker per label,
    /// drawn for label 0 first.
    pub fn p_values(&mut self, measure: &M, x: &[T], rng: &mut RandomSource, smoothed: bool) -> Result<PValuePair<T>> {
        let tau0 = draw_tau(rng, smoothed);
        let tau1 = draw_tau(rng, smoothed);
        self.p_values_with_taus(measure, x, tau0, tau1)
    }

    pub fn p_values_with_taus(&mut self, measure: &M, x: &[T], tau0: T, tau1: T) -> Result<PValuePair<T>> {
        let z0 = Example::new(x.to_vec(), Label::Zero)?;
        let p0 = self.p_value(measure, &z0, tau0)?;
        let p1 = self.p_value(measure, &z0.with_label(Label::One), tau1)?;
        Ok(PValuePair { p0, p1, tau0, tau1 })
    }
}

/// Smoothed p-values of both candidate labels of `x` against `history`.
pub fn smoothed_p_values<T: Scalar, M: TransductiveMeasure<T>>(
    history: &Bag<T>,
    x: &[T],
    measure: &M,
    rng: &mut RandomSource,
) -> Result<PValuePair<T>> {
    History::from_examples(measure, history.as_slice())?.p_values(measure, x, rng, true)
}

/// Subset of {0, 1} predicted at a significance level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionSet<T> {
    members: [bool; 2],
    levels: [SignificanceLevel<T>; 2],
}

impl<T: Scalar> PredictionSet<T> {
    pub fn from_members(members: [bool; 2], epsilon: SignificanceLevel<T>) -> Self {
        Self {
            members,
            levels: [epsilon; 2],
        }
    }

    /// Set built with a separate significance level per candidate label.
    pub fn with_levels(members: [bool; 2], levels: [SignificanceLevel<T>; 2]) -> Self {
        Self { members, levels }
    }

    pub fn contains(&self, y: Label) -> bool {
        self.members[y.index()]
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Level applied to candidate label 0 (equal for both labels unless the
    /// set came from a Mondrian predictor).
    pub fn epsilon(&self) -> SignificanceLevel<T> {
        self.levels[0]
    }

    pub fn level(&self, y: Label) -> SignificanceLevel<T> {
        self.levels[y.index()]
    }

    pub fn members(&self) -> impl Iterator<Item = Label> + '_ {
        Label::ALL.into_iter().filter(|&y| self.contains(y))
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        Label::ALL.iter().all(|&y| !self.contains(y) || other.contains(y))
    }
}

/// Labels whose p-value strictly exceeds ε.
pub fn prediction_set<T: Scalar>(p: &PValuePair<T>, epsilon: SignificanceLevel<T>) -> PredictionSet<T> {
    let e = epsilon.value();
    PredictionSet::from_members([p.p0 > e, p.p1 > e], epsilon)
}

/// `[lower, upper)`: the significance levels at which the prediction is a
/// singleton.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceInterval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> AcceptanceInterval<T> {
    pub fn contains(&self, epsilon: T) -> bool {
        self.lower <= epsilon && epsilon < self.upper
    }

    pub fn is_empty(&self) -> bool {
        self.lower >= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceCredibility<T> {
    pub confidence: T,
    pub credibility: T,
    pub interval: AcceptanceInterval<T>,
}

/// Confidence is one minus the second largest p-value, credibility the
/// largest.
pub fn confidence_credibility<T: Scalar>(p: &PValuePair<T>) -> ConfidenceCredibility<T> {
    ConfidenceCredibility {
        confidence: T::one() - p.min(),
        credibility: p.max(),
        interval: AcceptanceInterval {
            lower: p.min(),
            upper: p.max(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnlineOptions {
    /// Keep the initial history frozen instead of learning revealed labels.
    pub blind: bool,
    /// Use randomised tie-breaking (otherwise deterministic `>=` counts).
    pub smoothed: bool,
}

impl Default for OnlineOptions {
    fn default() -> Self {
        Self {
            blind: false,
            smoothed: true,
        }
    }
}

/// One online trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord<T> {
    pub p: PValuePair<T>,
    pub truth: Label,
    /// Prediction set size per grid level.
    pub set_sizes: Vec<u8>,
    /// `err_n` per grid level.
    pub errors: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct OnlineState<T: Scalar, M: TransductiveMeasure<T>> {
    pub history: History<T, M>,
    pub grid: Vec<SignificanceLevel<T>>,
    pub records: Vec<TrialRecord<T>>,
}

impl<T: Scalar, M: TransductiveMeasure<T>> OnlineState<T, M> {
    pub fn trial_index(&self) -> usize {
        self.records.len()
    }

    /// `Err_n` at each grid level.
    pub fn cumulative_errors(&self) -> Vec<usize> {
        let mut total = vec![0; self.grid.len()];
        for r in &self.records {
            for (t, &e) in total.iter_mut().zip(&r.errors) {
                *t += e as usize;
            }
        }
        total
    }

    /// Error indicator sequence at one grid level.
    pub fn error_sequence(&self, grid_index: usize) -> Vec<bool> {
        self.records.iter().map(|r| r.errors[grid_index]).collect()
    }

    pub fn log(&self) -> Vec<LoggedPrediction<T>> {
        self.records
            .iter()
            .map(|r| LoggedPrediction { p: r.p, truth: r.truth })
            .collect()
    }
}

/// Records one trial's sets and errors over the grid.
pub(crate) fn record_trial<T: Scalar>(p: PValuePair<T>, truth: Label, grid: &[SignificanceLevel<T>]) -> TrialRecord<T> {
    let mut set_sizes = Vec::with_capacity(grid.len());
    let mut errors = Vec::with_capacity(grid.len());
    for &e in grid {
        let set = prediction_set(&p, e);
        set_sizes.push(set.len() as u8);
        errors.push(!set.contains(truth));
    }
    TrialRecord {
        p,
        truth,
        set_sizes,
        errors,
    }
}

/// Runs the online protocol over `stream`, starting from `initial` history.
pub fn run_online<T: Scalar, M: TransductiveMeasure<T>>(
    initial: &[Example<T>],
    stream: &[Example<T>],
    grid: &[SignificanceLevel<T>],
    measure: &M,
    rng: &mut RandomSource,
    options: OnlineOptions,
) -> Result<OnlineState<T, M>> {
    check_grid(grid)?;
    let mut history = History::from_examples(measure, initial)?;
    let mut records = Vec::with_capacity(stream.len());
    for z in stream {
        let p = history.p_values(measure, z.object(), rng, options.smoothed)?;
        records.push(record_trial(p, z.label(), grid));
        if !options.blind {
            history.push(measure, z.clone())?;
        }
    }
    Ok(OnlineState {
        history,
        grid: grid.to_vec(),
        records,
    })
}

pub(crate) fn check_grid<T: Scalar>(grid: &[SignificanceLevel<T>]) -> Result<()> {
    if grid.windows(2).all(|w| w[0].value() < w[1].value()) {
        Ok(())
    } else {
        Err(crate::error::Error::InvalidArgument("epsilon grid must be strictly increasing".into()))
    }
}
