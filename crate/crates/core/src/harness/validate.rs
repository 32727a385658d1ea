//! On-demand validity checks of the online conformal predictor on synthetic
//! data.

use std::fmt;

use serde::Serialize;

use crate::data::generate_synthetic;
use crate::error::{Error, Result};
use crate::nonconformity::NearestNeighbor;
use crate::reject::{sigma_hat, SetSizeCounts};
use crate::rng::{RandomSource, DATA_STREAM};
use crate::stats::{binomial_halfwidth, ks_critical_1pct, ks_uniform, lag1_autocorrelation};
use crate::transductive::{run_online, OnlineOptions};
use crate::types::SignificanceLevel;

use super::{DataSource, ExperimentConfig};

/// Data and predictor variant the checks run against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Exchangeable data, smoothed p-values.
    Exchangeable,
    /// Tied (quantised) data, deterministic p-values.
    Unsmoothed,
    /// Labels flipped half-way through the stream.
    Drift,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exchangeable" => Ok(Scenario::Exchangeable),
            "unsmoothed" => Ok(Scenario::Unsmoothed),
            "drift" => Ok(Scenario::Drift),
            _ => Err(Error::InvalidArgument(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Error rates match ε and errors look independent.
    Exact,
    /// Error rates never exceed ε's band but fall below it somewhere.
    Conservative,
    Invalid,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Exact => "exact",
            Verdict::Conservative => "conservative",
            Verdict::Invalid => "invalid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<40} stat={:.6} limit={:.6} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.threshold,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub scenario: Scenario,
    pub trials: usize,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub verdict: Verdict,
}

const BAND_LEVELS: [f64; 3] = [0.05, 0.1, 0.2];
const MIN_SINGLETONS: usize = 200;

/// Runs `trials` online predictions of the 1-NN conformal predictor on the
/// configured synthetic source and checks error-rate bands, lag-1 error
/// autocorrelation, uniformity of true-label p-values, the count identities
/// and the singleton error rate estimate.
pub fn validate(config: &ExperimentConfig, scenario: Scenario, trials: usize) -> Result<ValidationReport> {
    let DataSource::Synthetic(source) = &config.source else {
        return Err(Error::InvalidArgument("validate needs a synthetic source".into()));
    };
    if trials < 2 {
        return Err(Error::InvalidArgument("validate needs at least 2 trials".into()));
    }
    let mut mixture = source.mixture.clone();
    if scenario == Scenario::Unsmoothed && mixture.quantize.is_none() {
        mixture.quantize = Some(1.0);
    }
    let mut data = generate_synthetic::<f64>(&mixture, trials, &mut RandomSource::new(config.seed, DATA_STREAM))?;
    if scenario == Scenario::Drift {
        for z in &mut data[trials / 2..] {
            *z = z.with_label(z.label().other());
        }
    }
    let options = OnlineOptions {
        blind: false,
        smoothed: scenario != Scenario::Unsmoothed,
    };
    let mut levels: Vec<SignificanceLevel<f64>> = config.grid.clone();
    for e in BAND_LEVELS {
        if !levels.iter().any(|l| (l.value() - e).abs() < 1e-12) {
            levels.push(SignificanceLevel::new(e)?);
        }
    }
    levels.sort_by(|a, b| a.value().total_cmp(&b.value()));
    let mut rng = RandomSource::new(config.seed, 0);
    let state = run_online(&[], &data, &levels, &NearestNeighbor, &mut rng, options)?;
    let n = trials;
    let log = state.log();
    let mut checks = Vec::new();

    let mut above = false;
    let mut below = false;
    let mut dependent = false;
    for e in BAND_LEVELS {
        let g = levels.iter().position(|l| (l.value() - e).abs() < 1e-12).expect("band level in grid");
        let seq = state.error_sequence(g);
        let rate = seq.iter().filter(|&&b| b).count() as f64 / n as f64;
        let half = binomial_halfwidth(e, n, 3.0);
        above |= rate > e + half;
        below |= rate < e - half;
        checks.push(CheckResult {
            name: format!("error rate at eps={e}"),
            statistic: (rate - e).abs(),
            threshold: half,
            passed: (rate - e).abs() <= half,
            detail: format!("rate={rate:.5}"),
        });
        let r = lag1_autocorrelation(&seq);
        let lim = 3.0 / (n as f64).sqrt();
        dependent |= r.abs() > lim;
        checks.push(CheckResult {
            name: format!("lag-1 error autocorrelation at eps={e}"),
            statistic: r.abs(),
            threshold: lim,
            passed: r.abs() <= lim,
            detail: format!("r={r:.5}"),
        });
    }

    let truth_p: Vec<f64> = log.iter().map(|r| r.p.get(r.truth)).collect();
    let ks = ks_uniform(&truth_p);
    let ks_lim = ks_critical_1pct(n);
    checks.push(CheckResult {
        name: "true-label p-value uniformity (KS)".into(),
        statistic: ks,
        threshold: ks_lim,
        passed: ks <= ks_lim,
        detail: String::new(),
    });

    let counts: Vec<SetSizeCounts> = levels.iter().map(|&e| SetSizeCounts::tally(&log, e)).collect();
    let broken = counts.iter().filter(|c| !c.identities_hold() || c.n != n).count();
    checks.push(CheckResult {
        name: "count identities".into(),
        statistic: broken as f64,
        threshold: 0.0,
        passed: broken == 0,
        detail: format!("{} levels", levels.len()),
    });

    let mut checked = 0;
    let mut bernoulli_misses = 0;
    let mut count_scale_misses = 0;
    let mut worst = 0.0f64;
    for (e, c) in levels.iter().zip(&counts) {
        let Some(sigma) = sigma_hat(c, e.value()) else { continue };
        if c.single < MIN_SINGLETONS {
            continue;
        }
        checked += 1;
        let s = c.single as f64;
        let emp = c.singleton_errors as f64 / s;
        let diff = (emp - sigma.clamped).abs();
        let tol = 3.0 * (sigma.clamped * (1.0 - sigma.clamped) / s).sqrt();
        if diff > tol {
            bernoulli_misses += 1;
        }
        worst = worst.max(diff / tol.max(f64::MIN_POSITIVE));
        let count_tol = 3.0 * (n as f64 * e.value() * (1.0 - e.value())).sqrt() / s;
        if (emp - sigma.raw).abs() > count_tol {
            count_scale_misses += 1;
        }
    }
    checks.push(CheckResult {
        name: "singleton rate vs sigma-hat (Bernoulli(s))".into(),
        statistic: bernoulli_misses as f64,
        threshold: 0.0,
        passed: bernoulli_misses == 0,
        detail: format!("{checked} levels with s>={MIN_SINGLETONS}; worst |diff|/tol={worst:.3}"),
    });
    checks.push(CheckResult {
        name: "singleton rate vs sigma-hat (error count)".into(),
        statistic: count_scale_misses as f64,
        threshold: 0.0,
        passed: count_scale_misses == 0,
        detail: "tolerance 3*sqrt(n*eps*(1-eps))/s".into(),
    });

    let uniform = ks <= ks_lim;
    let verdict = if broken > 0 || above {
        Verdict::Invalid
    } else if !below && !dependent && uniform {
        Verdict::Exact
    } else if below {
        Verdict::Conservative
    } else {
        Verdict::Invalid
    };
    Ok(ValidationReport {
        scenario,
        trials,
        seed: config.seed,
        checks,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Regime;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::defaults(Regime::FcpOnline)
    }

    #[test]
    fn exchangeable_is_exact() {
        let r = validate(&cfg(), Scenario::Exchangeable, 2000).unwrap();
        assert_eq!(r.verdict, Verdict::Exact, "{:#?}", r.checks);
        assert!(r.checks.iter().find(|c| c.name == "count identities").unwrap().passed);
    }

    #[test]
    fn unsmoothed_on_ties_is_conservative() {
        let r = validate(&cfg(), Scenario::Unsmoothed, 2000).unwrap();
        assert_eq!(r.verdict, Verdict::Conservative, "{:#?}", r.checks);
    }

    #[test]
    fn drift_is_invalid() {
        let r = validate(&cfg(), Scenario::Drift, 2000).unwrap();
        assert_eq!(r.verdict, Verdict::Invalid, "{:#?}", r.checks);
    }

    #[test]
    fn csv_source_rejected() {
        let mut c = cfg();
        c.source = DataSource::Csv {
            path: "x.csv".into(),
            label_column: "y".into(),
        };
        assert!(validate(&c, Scenario::Exchangeable, 100).is_err());
    }
}
