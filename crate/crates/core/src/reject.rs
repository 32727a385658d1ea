//! The conformal rejector, singleton error rates and error-reject curves.
//!
//! A binary conformal predictor outputs an empty set, a singleton or both
//! labels. Only singletons are accepted; empty sets are novelty rejections and
//! double sets ambiguity rejections. Since an empty set is always wrong and a
//! double set never is, the probability that an accepted prediction is wrong
//! is `σ = (ε - P(E)) / P(S)`, estimated by `(nε - e) / s`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::inductive::{epsilon_tilde, Delta};
use crate::mondrian::{Category, CategorySignificance};
use crate::scalar::Scalar;
use crate::transductive::{prediction_set, PredictionSet};
use crate::types::{Label, PValuePair, SignificanceLevel};

/// p-values of one test object with its true label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedPrediction<T> {
    pub p: PValuePair<T>,
    pub truth: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectOutcome {
    Accept(Label),
    /// Empty prediction set (novelty).
    RejectEmpty,
    /// Both labels predicted (ambiguity).
    RejectDouble,
}

impl RejectOutcome {
    pub fn is_accept(self) -> bool {
        matches!(self, RejectOutcome::Accept(_))
    }
}

pub fn outcome_of_set<T: Scalar>(set: &PredictionSet<T>) -> RejectOutcome {
    match set.len() {
        0 => RejectOutcome::RejectEmpty,
        2 => RejectOutcome::RejectDouble,
        _ => RejectOutcome::Accept(set.members().next().expect("singleton")),
    }
}

/// Accepts the singleton prediction at level ε, rejects otherwise.
pub fn reject_decision<T: Scalar>(p: &PValuePair<T>, epsilon: SignificanceLevel<T>) -> RejectOutcome {
    outcome_of_set(&prediction_set(p, epsilon))
}

/// Set-size tallies over a prediction log at one significance level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SetSizeCounts {
    pub n: usize,
    pub empty: usize,
    pub single: usize,
    pub double: usize,
    pub singleton_errors: usize,
    /// Total errors `Err`: predictions whose set misses the true label.
    pub errors: usize,
}

impl SetSizeCounts {
    pub fn add<T: Scalar>(&mut self, set: &PredictionSet<T>, truth: Label) {
        self.n += 1;
        let miss = !set.contains(truth);
        self.errors += miss as usize;
        match set.len() {
            0 => self.empty += 1,
            1 => {
                self.single += 1;
                self.singleton_errors += miss as usize;
            }
            _ => self.double += 1,
        }
    }

    pub fn from_sets<'a, T: Scalar + 'a>(sets: impl IntoIterator<Item = (PredictionSet<T>, Label)>) -> Self {
        let mut c = Self::default();
        for (set, truth) in sets {
            c.add(&set, truth);
        }
        c
    }

    pub fn tally<T: Scalar>(log: &[LoggedPrediction<T>], epsilon: SignificanceLevel<T>) -> Self {
        Self::from_sets(log.iter().map(|r| (prediction_set(&r.p, epsilon), r.truth)))
    }

    /// `e + s + d = n` and `Err = e + singleton errors`.
    pub fn identities_hold(&self) -> bool {
        self.empty + self.single + self.double == self.n
            && self.errors == self.empty + self.singleton_errors
            && self.singleton_errors <= self.single
    }
}

/// Per-category tallies. `categories[i]` is the category of `log[i]`'s true
/// example; `sets` builds each prediction set (typically with per-category
/// levels).
pub fn tally_by_category<T: Scalar>(
    log: &[LoggedPrediction<T>],
    categories: &[Category],
    sets: impl Fn(&LoggedPrediction<T>) -> Result<PredictionSet<T>>,
) -> Result<BTreeMap<Category, SetSizeCounts>> {
    if log.len() != categories.len() {
        return Err(Error::InvalidArgument("log and category lengths differ".into()));
    }
    let mut out: BTreeMap<Category, SetSizeCounts> = BTreeMap::new();
    for (r, &k) in log.iter().zip(categories) {
        out.entry(k).or_default().add(&sets(r)?, r.truth);
    }
    Ok(out)
}

/// Raw estimate and its projection onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEstimate<T> {
    pub raw: T,
    pub clamped: T,
}

impl<T: Scalar> SigmaEstimate<T> {
    pub fn from_raw(raw: T) -> Self {
        Self {
            raw,
            clamped: raw.max(T::zero()).min(T::one()),
        }
    }
}

/// `σ = (ε - P(E)) / P(S)`. Fails when the inputs cannot come from an
/// exactly valid predictor.
pub fn sigma_exact<T: Scalar>(epsilon: T, p_empty: T, p_single: T) -> Result<T> {
    let prob = |v: T| v >= T::zero() && v <= T::one();
    if !prob(epsilon) || !prob(p_empty) || !prob(p_single) || p_empty + p_single > T::one() + T::epsilon() {
        return Err(Error::SigmaPrecondition("arguments must be probabilities".into()));
    }
    if !(p_single > T::zero()) {
        return Err(Error::SigmaPrecondition("P(S) must be positive".into()));
    }
    if p_empty > epsilon {
        return Err(Error::SigmaPrecondition(format!("P(E) = {p_empty} exceeds epsilon = {epsilon}")));
    }
    if epsilon > p_empty + p_single {
        return Err(Error::SigmaPrecondition(format!(
            "epsilon = {epsilon} exceeds P(E) + P(S) = {}",
            p_empty + p_single
        )));
    }
    Ok((epsilon - p_empty) / p_single)
}

/// `(nε - e) / s`; `None` without singleton predictions.
pub fn sigma_hat<T: Scalar>(counts: &SetSizeCounts, epsilon: T) -> Option<SigmaEstimate<T>> {
    ratio_estimate(counts.n, epsilon, counts.empty, counts.single)
}

fn ratio_estimate<T: Scalar>(n: usize, level: T, empty: usize, single: usize) -> Option<SigmaEstimate<T>> {
    (single > 0).then(|| {
        SigmaEstimate::from_raw((T::of_count(n) * level - T::of_count(empty)) / T::of_count(single))
    })
}

/// Per-category singleton error estimates of a Mondrian predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MondrianSigma<T> {
    pub category: Category,
    /// `(n_k ε_k - e_k) / s_k`.
    pub estimate: Option<SigmaEstimate<T>>,
    /// Label-conditional variant `(ε_k - P̂(E_k)) / P̂(S_k)`, with
    /// `P̂(E_k) = 0` unless training-set empty frequencies are supplied.
    pub conservative: Option<T>,
}

/// `(ε_k - P̂(E_k)) / P̂(S_k)`.
pub fn sigma_label_conditional<T: Scalar>(epsilon_k: T, p_single_k: T, p_empty_k: Option<T>) -> Option<T> {
    (p_single_k > T::zero()).then(|| (epsilon_k - p_empty_k.unwrap_or_else(T::zero)) / p_single_k)
}

pub fn sigma_mondrian<T: Scalar>(
    counts: &BTreeMap<Category, SetSizeCounts>,
    significance: &CategorySignificance<T>,
    training_empty_freq: Option<&BTreeMap<Category, T>>,
) -> Result<Vec<MondrianSigma<T>>> {
    counts
        .iter()
        .map(|(&k, c)| {
            let e = significance.get(k)?.value();
            let p_single = if c.n > 0 { T::of_count(c.single) / T::of_count(c.n) } else { T::zero() };
            Ok(MondrianSigma {
                category: k,
                estimate: ratio_estimate(c.n, e, c.empty, c.single),
                conservative: sigma_label_conditional(e, p_single, training_empty_freq.and_then(|m| m.get(&k).copied())),
            })
        })
        .collect()
}

/// `(N ε̃ - e) / s` from counts taken at level ε̃.
pub fn sigma_tilde_from_counts<T: Scalar>(n: usize, epsilon_tilde: T, empty: usize, single: usize) -> Result<T> {
    if !(epsilon_tilde > T::zero()) {
        return Err(Error::UnusableEpsilonTilde(epsilon_tilde.to_f64_lossy()));
    }
    ratio_estimate(n, epsilon_tilde, empty, single)
        .map(|s| s.raw)
        .ok_or(Error::NoSingletons)
}

/// Estimate of the `(1 - δ)`-probable bound σ̃ on the singleton error
/// probability of an ICP with calibration size `h`; `counts` must be taken
/// at level ε̃.
pub fn sigma_tilde_bound<T: Scalar>(epsilon: T, delta: Delta<T>, h: usize, counts: &SetSizeCounts) -> Result<T> {
    let et = epsilon_tilde(epsilon, delta, h);
    if !et.usable {
        return Err(Error::UnusableEpsilonTilde(et.value.to_f64_lossy()));
    }
    sigma_tilde_from_counts(counts.n, et.value, counts.empty, counts.single)
}

/// One row of an error-reject curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow<T> {
    /// Significance level (or rejection threshold for the probability baseline).
    pub epsilon: T,
    pub frac_empty: T,
    pub frac_single: T,
    pub frac_double: T,
    pub sigma_hat_raw: Option<T>,
    pub sigma_hat_clamped: Option<T>,
    pub singleton_error_empirical: Option<T>,
    pub reject_rate: T,
    /// Accepted predictions; a mean when the table aggregates several runs.
    pub accept_count: T,
}

/// Rows ordered by ε. Several rows may share a reject rate with different
/// error rates; the smallest such ε has the lowest error rate and is the one
/// to pick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveTable<T> {
    pub rows: Vec<CurveRow<T>>,
}

impl<T: Scalar> CurveTable<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Row for one level from its tallies; `n = 0` yields zero fractions.
pub fn curve_row<T: Scalar>(epsilon: T, c: &SetSizeCounts, with_sigma: bool) -> CurveRow<T> {
    let frac = |k: usize| if c.n > 0 { T::of_count(k) / T::of_count(c.n) } else { T::zero() };
    let sigma = if with_sigma { sigma_hat(c, epsilon) } else { None };
    let frac_single = frac(c.single);
    CurveRow {
        epsilon,
        frac_empty: frac(c.empty),
        frac_single,
        frac_double: frac(c.double),
        sigma_hat_raw: sigma.map(|s| s.raw),
        sigma_hat_clamped: sigma.map(|s| s.clamped),
        singleton_error_empirical: (c.single > 0).then(|| T::of_count(c.singleton_errors) / T::of_count(c.single)),
        reject_rate: T::one() - frac_single,
        accept_count: T::of_count(c.single),
    }
}

pub fn build_curve<T: Scalar>(counts: &[(SignificanceLevel<T>, SetSizeCounts)]) -> CurveTable<T> {
    CurveTable {
        rows: counts.iter().map(|(e, c)| curve_row(e.value(), c, true)).collect(),
    }
}

pub fn curve_from_log<T: Scalar>(log: &[LoggedPrediction<T>], grid: &[SignificanceLevel<T>]) -> CurveTable<T> {
    let counts: Vec<_> = grid.iter().map(|&e| (e, SetSizeCounts::tally(log, e))).collect();
    build_curve(&counts)
}

/// Probability-threshold rejector: predicts the more probable label when its
/// probability is at least `threshold`, otherwise rejects.
pub fn chow_decision<T: Scalar>(prob_one: T, threshold: T) -> Option<Label> {
    let (label, top) = if prob_one > T::one() - prob_one {
        (Label::One, prob_one)
    } else {
        (Label::Zero, T::one() - prob_one)
    };
    (top >= threshold).then_some(label)
}

/// Error-reject curve of the probability-threshold rejector. Rejections are
/// reported in `frac_double`; the σ̂ columns are absent.
pub fn chow_baseline<T: Scalar>(predictions: &[(T, Label)], thresholds: &[T]) -> CurveTable<T> {
    let rows = thresholds
        .iter()
        .map(|&t| {
            let mut c = SetSizeCounts::default();
            for &(p, truth) in predictions {
                c.n += 1;
                match chow_decision(p, t) {
                    Some(y) => {
                        c.single += 1;
                        if y != truth {
                            c.singleton_errors += 1;
                            c.errors += 1;
                        }
                    }
                    None => c.double += 1,
                }
            }
            curve_row(t, &c, false)
        })
        .collect();
    CurveTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transductive::confidence_credibility;
    use crate::types::default_epsilon_grid;
    use proptest::prelude::*;

    fn eps(e: f64) -> SignificanceLevel<f64> {
        SignificanceLevel::new(e).unwrap()
    }

    fn counts(n: usize, empty: usize, single: usize) -> SetSizeCounts {
        SetSizeCounts {
            n,
            empty,
            single,
            double: n - empty - single,
            ..Default::default()
        }
    }

    #[test]
    fn reject_decision_examples() {
        let p = PValuePair::new(0.7, 0.2);
        assert_eq!(reject_decision(&p, eps(0.5)), RejectOutcome::Accept(Label::Zero));
        assert_eq!(reject_decision(&p, eps(0.05)), RejectOutcome::RejectDouble);
        assert_eq!(reject_decision(&p, eps(0.75)), RejectOutcome::RejectEmpty);
    }

    #[test]
    fn sigma_exact_examples() {
        assert!((sigma_exact(0.1, 0.02, 0.40).unwrap() - 0.2f64).abs() < 1e-15);
        assert_eq!(sigma_exact(0.1, 0.1, 0.5).unwrap(), 0.0);
        assert_eq!(sigma_exact(0.75, 0.25, 0.5).unwrap(), 1.0);
        assert!((sigma_exact(0.3, 0.1, 0.2).unwrap() - 1.0f64).abs() < 1e-15);
        assert!(matches!(sigma_exact(0.1, 0.2, 0.5), Err(Error::SigmaPrecondition(_))));
        assert!(matches!(sigma_exact(0.9, 0.1, 0.2), Err(Error::SigmaPrecondition(_))));
        assert!(matches!(sigma_exact(0.1, 0.0, 0.0), Err(Error::SigmaPrecondition(_))));
    }

    #[test]
    fn sigma_hat_examples() {
        let s = sigma_hat(&counts(100, 2, 40), 0.1).unwrap();
        assert!((s.raw - 0.2f64).abs() < 1e-15);
        let s = sigma_hat(&counts(100, 10, 40), 0.05).unwrap();
        assert!((s.raw + 0.125f64).abs() < 1e-15);
        assert_eq!(s.clamped, 0.0);
        assert_eq!(sigma_hat(&counts(100, 10, 7), 0.1).unwrap().raw, 0.0);
        assert!(sigma_hat(&counts(100, 10, 0), 0.1f64).is_none());
    }

    #[test]
    fn sigma_mondrian_examples() {
        let mut by_cat = BTreeMap::new();
        by_cat.insert(0, counts(200, 4, 80));
        by_cat.insert(1, counts(200, 20, 50));
        let sig = CategorySignificance::uniform(eps(0.1), &[0, 1]);
        let out = sigma_mondrian(&by_cat, &sig, None).unwrap();
        assert!((out[0].estimate.unwrap().raw - 0.2).abs() < 1e-15);
        assert_eq!(out[1].estimate.unwrap().raw, 0.0);
        // conservative: 0.1 / (80 / 200)
        assert!((out[0].conservative.unwrap() - 0.25).abs() < 1e-15);
        assert!((sigma_label_conditional(0.1, 0.5, None).unwrap() - 0.2f64).abs() < 1e-15);
        assert!((sigma_label_conditional(0.1, 0.5, Some(0.05)).unwrap() - 0.1f64).abs() < 1e-15);
        by_cat.insert(2, counts(10, 0, 0));
        assert!(matches!(sigma_mondrian(&by_cat, &sig, None), Err(Error::MissingCategory(2))));
        let sig3 = CategorySignificance::uniform(eps(0.1), &[0, 1, 2]);
        assert!(sigma_mondrian(&by_cat, &sig3, None).unwrap()[2].estimate.is_none());
    }

    #[test]
    fn sigma_tilde_examples() {
        let c = counts(1000, 10, 400);
        let s = sigma_tilde_bound(0.1, Delta::new(0.05).unwrap(), 500, &c).unwrap();
        assert!((s - 0.08817f64).abs() < 1e-4, "{s}");
        assert_eq!(sigma_tilde_from_counts(1000, 0.01, 10, 400).unwrap(), 0.0);
        assert!((sigma_tilde_from_counts(100, 0.05, 1, 50).unwrap() - 0.08f64).abs() < 1e-15);
        assert!(matches!(sigma_tilde_bound(0.05, Delta::new(0.05).unwrap(), 100, &c), Err(Error::UnusableEpsilonTilde(_))));
        assert!(matches!(sigma_tilde_from_counts(10, 0.1f64, 1, 0), Err(Error::NoSingletons)));
    }

    #[test]
    fn curve_all_double_row() {
        let log = vec![LoggedPrediction { p: PValuePair::new(0.9, 0.8), truth: Label::One }];
        let t = curve_from_log(&log, &[eps(0.5)]);
        assert_eq!(t.rows[0].reject_rate, 1.0);
        assert!(t.rows[0].singleton_error_empirical.is_none());
        assert!(t.rows[0].sigma_hat_raw.is_none());
    }

    #[test]
    fn curve_keeps_rows_with_shared_reject_rate() {
        let log = vec![
            LoggedPrediction { p: PValuePair::new(0.6, 0.2), truth: Label::One },
            LoggedPrediction { p: PValuePair::new(0.4, 0.35), truth: Label::Zero },
            LoggedPrediction { p: PValuePair::new(0.9, 0.8), truth: Label::Zero },
        ];
        // brute force by hand:
        // eps 0.3: sets {0}, {0,1}, {0,1} -> s = 1, error (truth 1)
        // eps 0.5: sets {0}, {}, {0,1}   -> s = 1, error (truth 1), e = 1
        // eps 0.7: sets {}, {}, {0,1}    -> s = 0
        // eps 0.85: sets {}, {}, {0}     -> s = 1, correct
        let t = curve_from_log(&log, &[eps(0.3), eps(0.5), eps(0.7), eps(0.85)]);
        assert_eq!(t.len(), 4);
        assert_eq!(t.rows[0].reject_rate, t.rows[1].reject_rate);
        assert_eq!(t.rows[0].singleton_error_empirical, Some(1.0));
        assert_eq!(t.rows[3].reject_rate, t.rows[0].reject_rate);
        assert_eq!(t.rows[3].singleton_error_empirical, Some(0.0));
        assert!(t.rows[2].singleton_error_empirical.is_none());
    }

    #[test]
    fn chow_examples() {
        let preds = vec![(0.9, Label::One), (0.3, Label::One), (0.55, Label::Zero)];
        let t = chow_baseline(&preds, &[0.0, 0.6, 1.01]);
        assert_eq!(t.rows[0].reject_rate, 0.0);
        assert_eq!(t.rows[2].reject_rate, 1.0);
        assert!(t.rows.iter().all(|r| r.sigma_hat_raw.is_none()));
        assert_eq!(chow_decision(0.9, 0.8), Some(Label::One));
        assert_eq!(chow_decision(0.5, 0.5), Some(Label::Zero));
        assert_eq!(chow_decision(0.3, 0.8), None);
        // t = 0.6: 0.9 -> accept 1 (correct), 0.3 -> accept 0 (wrong), 0.55 -> reject
        assert!((t.rows[1].singleton_error_empirical.unwrap() - 0.5f64).abs() < 1e-15);
    }

    fn arb_pair() -> impl Strategy<Value = PValuePair<f64>> {
        (0u32..=100, 0u32..=100).prop_map(|(a, b)| PValuePair::new(a as f64 / 100.0, b as f64 / 100.0))
    }

    proptest! {
        #[test]
        fn accept_iff_in_interval(p in arb_pair()) {
            let cc = confidence_credibility(&p);
            for e in default_epsilon_grid::<f64>() {
                prop_assert_eq!(reject_decision(&p, e).is_accept(), cc.interval.contains(e.value()));
            }
        }

        #[test]
        fn tallies_partition_and_fractions_sum_to_one(ps in prop::collection::vec((arb_pair(), any::<bool>()), 1..40)) {
            let log: Vec<_> = ps.into_iter().map(|(p, y)| LoggedPrediction { p, truth: if y { Label::One } else { Label::Zero } }).collect();
            let grid = default_epsilon_grid();
            let t = curve_from_log(&log, &grid);
            for (row, &e) in t.rows.iter().zip(&grid) {
                let c = SetSizeCounts::tally(&log, e);
                prop_assert!(c.identities_hold());
                prop_assert!((row.frac_empty + row.frac_single + row.frac_double - 1.0).abs() < 1e-12);
                prop_assert!((row.reject_rate - (1.0 - row.frac_single)).abs() < 1e-15);
            }
            for w in t.rows.windows(2) {
                prop_assert!(w[1].frac_double <= w[0].frac_double);
                prop_assert!(w[1].frac_empty >= w[0].frac_empty);
            }
        }

        #[test]
        fn sigma_exact_in_unit_interval(e in 0.001f64..0.999, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p_empty = e * a;
            let p_single = (1.0 - p_empty) * b;
            if let Ok(s) = sigma_exact(e, p_empty, p_single) {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}
