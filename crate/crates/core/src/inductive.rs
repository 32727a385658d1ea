//! Inductive conformal predictors: offline and semi-online ICPs, the
//! training-conditional correction of the significance level, and the batch
//! update schedule.

use crate::error::{Error, Result};
use crate::nonconformity::{margin_score, ProbabilityScorer};
use crate::rng::RandomSource;
use crate::scalar::Scalar;
use crate::transductive::{draw_tau, smoothed_fraction};
use crate::types::{Example, Label, PValuePair, RankCounts, ScorePool};

/// Offline ICP: a frozen scorer plus the calibration scores it produced.
#[derive(Debug, Clone)]
pub struct IcpModel<T, S> {
    scorer: S,
    calibration: ScorePool<T>,
    training_size: usize,
    proper_size: usize,
}

/// Splits `training` by a seeded shuffle into a proper training set of size
/// `m` (fitted with `fit`) and a calibration set of size `l - m`.
pub fn fit_icp<T, S, F>(training: &[Example<T>], m: usize, fit: F, rng: &mut RandomSource) -> Result<IcpModel<T, S>>
where
    T: Scalar,
    S: ProbabilityScorer<T>,
    F: FnOnce(&[Example<T>]) -> Result<S>,
{
    let l = training.len();
    if l == 0 {
        return Err(Error::EmptyTraining);
    }
    if m == 0 || m >= l {
        return Err(Error::InvalidSplit { m, l });
    }
    let order = rng.permutation(l);
    let proper: Vec<Example<T>> = order[..m].iter().map(|&i| training[i].clone()).collect();
    let scorer = fit(&proper)?;
    let scores = order[m..]
        .iter()
        .map(|&i| margin_score(&scorer, training[i].object(), training[i].label()))
        .collect::<Result<Vec<T>>>()?;
    Ok(IcpModel {
        scorer,
        calibration: ScorePool::new(scores)?,
        training_size: l,
        proper_size: m,
    })
}

impl<T: Scalar, S: ProbabilityScorer<T>> IcpModel<T, S> {
    pub fn scorer(&self) -> &S {
        &self.scorer
    }

    pub fn calibration(&self) -> &ScorePool<T> {
        &self.calibration
    }

    /// Training size `l`.
    pub fn training_size(&self) -> usize {
        self.training_size
    }

    /// Proper training size `m`.
    pub fn proper_size(&self) -> usize {
        self.proper_size
    }

    /// Calibration size `h = l - m`.
    pub fn calibration_size(&self) -> usize {
        self.calibration.len()
    }

    pub fn test_score(&self, x: &[T], candidate: Label) -> Result<T> {
        margin_score(&self.scorer, x, candidate)
    }

    /// `(#{α_j > α} + τ (#{α_j = α} + 1)) / (h + 1)` over calibration scores.
    /// With `τ = 1` this is the unsmoothed `(#{α_j >= α} + 1) / (h + 1)`.
    pub fn p_value_with_tau(&self, x: &[T], candidate: Label, tau: T) -> Result<T> {
        let a = self.test_score(x, candidate)?;
        let mut c = self.calibration.rank_counts(a);
        c.equal += 1;
        Ok(smoothed_fraction(c, tau, self.calibration.len() + 1))
    }

    pub fn p_values(&self, x: &[T], rng: &mut RandomSource, smoothed: bool) -> Result<PValuePair<T>> {
        let tau0 = draw_tau(rng, smoothed);
        let tau1 = draw_tau(rng, smoothed);
        Ok(PValuePair {
            p0: self.p_value_with_tau(x, Label::Zero, tau0)?,
            p1: self.p_value_with_tau(x, Label::One, tau1)?,
            tau0,
            tau1,
        })
    }
}

/// Offline ICP p-value of one candidate label.
pub fn icp_p_value<T: Scalar, S: ProbabilityScorer<T>>(
    model: &IcpModel<T, S>,
    x: &[T],
    candidate: Label,
    rng: &mut RandomSource,
    smoothed: bool,
) -> Result<T> {
    model.p_value_with_tau(x, candidate, draw_tau(rng, smoothed))
}

/// Semi-online p-value: ranks against calibration scores plus the scores of
/// previously processed test examples. Denominator `h + t + 1`.
pub fn semi_online_p_value<T: Scalar, S: ProbabilityScorer<T>>(
    model: &IcpModel<T, S>,
    pooled_extra_scores: &ScorePool<T>,
    x: &[T],
    candidate: Label,
    rng: &mut RandomSource,
    smoothed: bool,
) -> Result<T> {
    semi_online_p_value_with_tau(model, pooled_extra_scores, x, candidate, draw_tau(rng, smoothed))
}

pub fn semi_online_p_value_with_tau<T: Scalar, S: ProbabilityScorer<T>>(
    model: &IcpModel<T, S>,
    pooled_extra_scores: &ScorePool<T>,
    x: &[T],
    candidate: Label,
    tau: T,
) -> Result<T> {
    let a = model.test_score(x, candidate)?;
    let cal = model.calibration.rank_counts(a);
    let extra = pooled_extra_scores.rank_counts(a);
    let counts = RankCounts {
        greater: cal.greater + extra.greater,
        equal: cal.equal + extra.equal + 1,
    };
    Ok(smoothed_fraction(counts, tau, semi_online_denominator(model.calibration_size(), pooled_extra_scores.len())))
}

/// `i - m` for the `t`-th processed test example: `h + t + 1`.
pub fn semi_online_denominator(h: usize, processed: usize) -> usize {
    h + processed + 1
}

/// Semi-online ICP: after each prediction the true label is revealed and the
/// example's score joins the pool.
#[derive(Debug, Clone)]
pub struct SemiOnlineIcp<'a, T, S> {
    model: &'a IcpModel<T, S>,
    extras: ScorePool<T>,
}

impl<'a, T: Scalar, S: ProbabilityScorer<T>> SemiOnlineIcp<'a, T, S> {
    pub fn new(model: &'a IcpModel<T, S>) -> Self {
        Self {
            model,
            extras: ScorePool::default(),
        }
    }

    pub fn processed(&self) -> usize {
        self.extras.len()
    }

    pub fn denominator(&self) -> usize {
        semi_online_denominator(self.model.calibration_size(), self.extras.len())
    }

    pub fn p_values(&self, x: &[T], rng: &mut RandomSource, smoothed: bool) -> Result<PValuePair<T>> {
        let tau0 = draw_tau(rng, smoothed);
        let tau1 = draw_tau(rng, smoothed);
        Ok(PValuePair {
            p0: semi_online_p_value_with_tau(self.model, &self.extras, x, Label::Zero, tau0)?,
            p1: semi_online_p_value_with_tau(self.model, &self.extras, x, Label::One, tau1)?,
            tau0,
            tau1,
        })
    }

    pub fn reveal(&mut self, z: &Example<T>) -> Result<()> {
        let a = self.model.test_score(z.object(), z.label())?;
        self.extras.insert(a)
    }
}

/// Degradation `δ_n` of the offline ICP's conservative validity at trial `i`.
pub fn delta_n<T: Scalar>(i: usize, l: usize, m: usize) -> Result<T> {
    if l <= m {
        return Err(Error::InvalidSplit { m, l });
    }
    Ok(if i > l {
        T::of_count(i - l) / T::of_count(l - m)
    } else {
        T::zero()
    })
}

/// Confidence parameter δ, stored as `ln(1/δ)` so that schedules that drive
/// δ towards zero never underflow.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Delta<T> {
    ln_inv: T,
}

impl<T: Scalar> Delta<T> {
    pub fn new(delta: T) -> Result<Self> {
        if delta > T::zero() && delta < T::one() {
            Ok(Self { ln_inv: -delta.ln() })
        } else {
            Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")))
        }
    }

    pub fn from_ln_inv(ln_inv: T) -> Result<Self> {
        if ln_inv > T::zero() && ln_inv.is_finite() {
            Ok(Self { ln_inv })
        } else {
            Err(Error::InvalidArgument(format!("ln(1/delta) must be positive and finite, got {ln_inv}")))
        }
    }

    /// δ itself; may underflow to zero for very small values.
    pub fn value(self) -> T {
        (-self.ln_inv).exp()
    }

    pub fn ln_inv(self) -> T {
        self.ln_inv
    }

    /// `δ^q`.
    pub fn pow(self, q: T) -> Self {
        Self { ln_inv: self.ln_inv * q }
    }
}

/// Corrected significance level ε̃ and whether it is usable (positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonTilde<T> {
    pub value: T,
    pub usable: bool,
}

/// `ε̃ = ε - sqrt(ln(1/δ) / (2h))`.
pub fn epsilon_tilde<T: Scalar>(epsilon: T, delta: Delta<T>, h: usize) -> EpsilonTilde<T> {
    let value = epsilon - (delta.ln_inv() / (T::of(2.0) * T::of_count(h))).sqrt();
    EpsilonTilde {
        value,
        usable: value > T::zero(),
    }
}

/// Target ε, confidence δ and calibration size, with the derived ε̃.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonDeltaPolicy<T> {
    pub epsilon: T,
    pub delta: Delta<T>,
    pub calibration_size: usize,
}

impl<T: Scalar> EpsilonDeltaPolicy<T> {
    pub fn new(epsilon: T, delta: T, calibration_size: usize) -> Result<Self> {
        crate::types::SignificanceLevel::new(epsilon)?;
        if calibration_size == 0 {
            return Err(Error::InvalidArgument("calibration size must be at least 1".into()));
        }
        Ok(Self {
            epsilon,
            delta: Delta::new(delta)?,
            calibration_size,
        })
    }

    pub fn epsilon_tilde(&self) -> EpsilonTilde<T> {
        epsilon_tilde(self.epsilon, self.delta, self.calibration_size)
    }
}

/// How δ evolves between batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleMode<T> {
    /// Keep δ; ε̃ grows towards ε as h grows.
    FixDelta,
    /// `δ_{k+1} = δ_k^{h_{k+1}/h_k}`, which keeps ε̃ constant.
    FixEpsilonTilde,
    /// Any `δ_{k+1} <= δ_k^{h_{k+1}/h_k}`.
    Custom(Delta<T>),
}

/// State of the batch-update scheme at batch `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSchedule<T> {
    pub index: usize,
    /// Training size `l_k`.
    pub training_size: usize,
    /// Proper training size `m_k`.
    pub proper_size: usize,
    pub delta: Delta<T>,
    /// Target ε.
    pub epsilon: T,
}

impl<T: Scalar> BatchSchedule<T> {
    pub fn new(training_size: usize, proper_size: usize, epsilon: T, delta: Delta<T>) -> Result<Self> {
        if proper_size == 0 || proper_size >= training_size {
            return Err(Error::InvalidSplit {
                m: proper_size,
                l: training_size,
            });
        }
        Ok(Self {
            index: 0,
            training_size,
            proper_size,
            delta,
            epsilon,
        })
    }

    /// Calibration size `h_k = l_k - m_k`.
    pub fn calibration_size(&self) -> usize {
        self.training_size - self.proper_size
    }

    pub fn epsilon_tilde(&self) -> EpsilonTilde<T> {
        self.epsilon_tilde_for(self.epsilon)
    }

    /// ε̃_k for another target level under this batch's δ and h.
    pub fn epsilon_tilde_for(&self, epsilon: T) -> EpsilonTilde<T> {
        epsilon_tilde(epsilon, self.delta, self.calibration_size())
    }

    /// Moves to batch `k + 1` after `batch_size` new labelled examples, with
    /// proper training size `new_proper_size`.
    pub fn next_batch(&self, mode: ScheduleMode<T>, batch_size: usize, new_proper_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        let l = self.training_size + batch_size;
        if new_proper_size == 0 || new_proper_size >= l {
            return Err(Error::InvalidSplit { m: new_proper_size, l });
        }
        let q = T::of_count(l - new_proper_size) / T::of_count(self.calibration_size());
        let bound = self.delta.pow(q);
        let delta = match mode {
            ScheduleMode::FixDelta => self.delta,
            ScheduleMode::FixEpsilonTilde => bound,
            ScheduleMode::Custom(d) => {
                let slack = bound.ln_inv() * T::of(1e-12);
                if d.ln_inv() + slack < bound.ln_inv() {
                    return Err(Error::CustomDeltaTooLarge {
                        given: d.ln_inv().to_f64_lossy(),
                        required: bound.ln_inv().to_f64_lossy(),
                    });
                }
                d
            }
        };
        Ok(Self {
            index: self.index + 1,
            training_size: l,
            proper_size: new_proper_size,
            delta,
            epsilon: self.epsilon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonconformity::{fit_knn_scorer, KnnScorer};
    use proptest::prelude::*;

    /// Scorer with a fixed probability table, for hand-checked p-values.
    struct Fixed(f64);
    impl ProbabilityScorer<f64> for Fixed {
        fn prob_one(&self, x: &[f64]) -> Result<f64> {
            Ok(if x.is_empty() { self.0 } else { x[0] })
        }
    }

    fn ex(x: &[f64], y: Label) -> Example<f64> {
        Example::new(x.to_vec(), y).unwrap()
    }

    fn model_with_scores(scores: &[f64]) -> IcpModel<f64, Fixed> {
        IcpModel {
            scorer: Fixed(0.0),
            calibration: ScorePool::new(scores.to_vec()).unwrap(),
            training_size: scores.len() + 1,
            proper_size: 1,
        }
    }

    #[test]
    fn unsmoothed_p_value_examples() {
        let m = model_with_scores(&[1.0, 2.0, 3.0]);
        // candidate One with prob_one = x[0] gives score 1 - x[0]
        assert_eq!(m.p_value_with_tau(&[1.0 - 2.5], Label::One, 1.0).unwrap(), 0.5);
        assert_eq!(m.p_value_with_tau(&[1.0 - 10.0], Label::One, 1.0).unwrap(), 0.25);
        assert_eq!(m.p_value_with_tau(&[1.0 - 0.0], Label::One, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn fit_icp_split_sizes_and_errors() {
        let data = vec![ex(&[0.0], Label::Zero), ex(&[1.0], Label::One)];
        let m: IcpModel<f64, KnnScorer<f64>> = fit_icp(&data, 1, |p| fit_knn_scorer(p, 1), &mut RandomSource::new(0, 0)).unwrap();
        assert_eq!((m.training_size(), m.proper_size(), m.calibration_size()), (2, 1, 1));
        let r = fit_icp(&data, 2, |p| fit_knn_scorer(p, 1), &mut RandomSource::new(0, 0));
        assert!(matches!(r, Err(Error::InvalidSplit { m: 2, l: 2 })));
        let r = fit_icp::<f64, KnnScorer<f64>, _>(&[], 1, |p| fit_knn_scorer(p, 1), &mut RandomSource::new(0, 0));
        assert!(matches!(r, Err(Error::EmptyTraining)));
    }

    #[test]
    fn fit_icp_is_deterministic() {
        let data: Vec<Example<f64>> = (0..20).map(|i| ex(&[i as f64], if i % 3 == 0 { Label::One } else { Label::Zero })).collect();
        let a = fit_icp(&data, 12, |p| fit_knn_scorer(p, 3), &mut RandomSource::new(5, 1)).unwrap();
        let b = fit_icp(&data, 12, |p| fit_knn_scorer(p, 3), &mut RandomSource::new(5, 1)).unwrap();
        assert_eq!(a.calibration(), b.calibration());
    }

    #[test]
    fn single_calibration_point_lattice() {
        let data: Vec<Example<f64>> = (0..10).map(|i| ex(&[i as f64], if i < 5 { Label::One } else { Label::Zero })).collect();
        let m = fit_icp(&data, 9, |p| fit_knn_scorer(p, 3), &mut RandomSource::new(2, 0)).unwrap();
        for i in 0..30 {
            for y in Label::ALL {
                let p = m.p_value_with_tau(&[i as f64 * 0.37], y, 1.0).unwrap();
                assert!(p == 0.5 || p == 1.0, "{p}");
            }
        }
    }

    #[test]
    fn semi_online_bookkeeping() {
        let m = model_with_scores(&[0.2, 0.4, 0.6]);
        let mut so = SemiOnlineIcp::new(&m);
        assert_eq!(so.denominator(), 4);
        let mut rng = RandomSource::new(0, 0);
        // no extras: identical to offline
        let p = semi_online_p_value(&m, &ScorePool::default(), &[0.5], Label::One, &mut rng, false).unwrap();
        assert_eq!(p, m.p_value_with_tau(&[0.5], Label::One, 1.0).unwrap());
        for t in 1..=5 {
            so.reveal(&ex(&[0.1 * t as f64], Label::One)).unwrap();
            assert_eq!(so.denominator(), 3 + t + 1);
        }
        let same = model_with_scores(&[0.5, 0.5]);
        let mut pool = ScorePool::default();
        pool.insert(0.5).unwrap();
        let p = semi_online_p_value(&same, &pool, &[0.5], Label::One, &mut rng, false).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn delta_n_examples() {
        assert_eq!(delta_n::<f64>(100, 100, 50).unwrap(), 0.0);
        assert_eq!(delta_n::<f64>(150, 100, 50).unwrap(), 1.0);
        assert!((delta_n::<f64>(1050, 1000, 500).unwrap() - 0.1).abs() < 1e-15);
        assert!(delta_n::<f64>(1, 5, 5).is_err());
    }

    #[test]
    fn epsilon_tilde_examples() {
        // closed form: 0.1 - sqrt(ln(20) / 1000)
        let e = epsilon_tilde(0.1, Delta::new(0.05).unwrap(), 500);
        assert!((e.value - 0.045_267f64).abs() < 1e-6, "{}", e.value);
        assert!(e.usable);
        let near_one = epsilon_tilde(0.1, Delta::new(1.0 - 1e-15).unwrap(), 10);
        assert!((near_one.value - 0.1f64).abs() < 1e-6);
        let bad = epsilon_tilde(0.05, Delta::new(0.05).unwrap(), 100);
        assert!(!bad.usable && bad.value < 0.0);
    }

    #[test]
    fn schedule_examples() {
        let s = BatchSchedule::new(600, 300, 0.2, Delta::new(0.05).unwrap()).unwrap();
        let t = s.next_batch(ScheduleMode::FixEpsilonTilde, 300, 300).unwrap();
        assert_eq!(t.calibration_size(), 600);
        assert!((t.delta.value() - 0.0025f64).abs() < 1e-15);
        let same_h = s.next_batch(ScheduleMode::FixEpsilonTilde, 100, 400).unwrap();
        assert!((same_h.delta.value() - 0.05f64).abs() < 1e-15);
        let fd = s.next_batch(ScheduleMode::FixDelta, 300, 300).unwrap();
        assert!(fd.epsilon_tilde().value > s.epsilon_tilde().value);
        assert!(matches!(
            s.next_batch(ScheduleMode::Custom(Delta::new(0.01).unwrap()), 300, 300),
            Err(Error::CustomDeltaTooLarge { .. })
        ));
        let c = s.next_batch(ScheduleMode::Custom(Delta::new(0.001).unwrap()), 300, 300).unwrap();
        assert!(c.epsilon_tilde().value < s.epsilon_tilde().value);
        assert!(s.next_batch(ScheduleMode::FixDelta, 0, 300).is_err());
        assert!(s.next_batch(ScheduleMode::FixDelta, 10, 610).is_err());
    }

    proptest! {
        #[test]
        fn fix_epsilon_tilde_is_an_identity(delta in 0.001f64..0.999, h0 in 1usize..2000, grow in 0usize..5000, eps in 0.01f64..0.99) {
            let s = BatchSchedule::new(h0 + 10, 10, eps, Delta::new(delta).unwrap()).unwrap();
            let t = s.next_batch(ScheduleMode::FixEpsilonTilde, grow + 1, 10).unwrap();
            prop_assert!((t.epsilon_tilde().value - s.epsilon_tilde().value).abs() < 1e-12);
        }

        #[test]
        fn smoothed_p_values_stay_in_range(scores in prop::collection::vec(0.0f64..1.0, 1..30), x in 0.0f64..1.0, tau in 0.0f64..1.0) {
            let m = model_with_scores(&scores);
            let h = scores.len() as f64;
            for y in Label::ALL {
                let p = m.p_value_with_tau(&[x], y, tau).unwrap();
                prop_assert!(p >= tau / (h + 1.0) - 1e-15 && p <= 1.0);
            }
        }
    }
}
