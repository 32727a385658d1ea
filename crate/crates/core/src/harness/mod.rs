//! Experiment runner for the three prediction regimes: blind online Mondrian
//! prediction, offline inductive prediction and the batch update scheme.
//!
//! Every run draws its own random stream from the master seed (run `i` uses
//! stream `i`), so reports do not depend on how runs are scheduled across
//! threads. Aggregates are folded in run order.

mod report;
mod svg;
mod validate;

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::data::{generate_synthetic, load_csv, standardize, SyntheticSource};
use crate::error::{Error, Result};
use crate::inductive::{epsilon_tilde, fit_icp, BatchSchedule, Delta, ScheduleMode};
use crate::mondrian::{run_mondrian_online, Taxonomy};
use crate::nonconformity::{fit_knn_scorer, KnnScorer, NearestNeighbor, ProbabilityScorer};
use crate::reject::{build_curve, chow_baseline, sigma_tilde_from_counts, CurveRow, CurveTable, LoggedPrediction, SetSizeCounts};
use crate::rng::{RandomSource, DATA_STREAM};
use crate::stats::quantile;
use crate::transductive::OnlineOptions;
use crate::types::{default_epsilon_grid, Example, SignificanceLevel};

pub use report::{emit_reports, read_curves, write_curves, CURVE_HEADER};
pub use validate::{validate, CheckResult, Scenario, ValidationReport, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    FcpOnline,
    IcpOffline,
    IcpBatch,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::FcpOnline => "fcp-online",
            Regime::IcpOffline => "icp-offline",
            Regime::IcpBatch => "icp-batch",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, label_column: String },
    Synthetic(SyntheticSource),
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Csv { path, label_column } => write!(f, "csv:{} (label column {label_column})", path.display()),
            DataSource::Synthetic(s) => {
                let m = &s.mixture;
                write!(f, "synthetic:n={},dim={},prior={}", s.n, m.dim(), m.prior_one)?;
                if let Some(q) = m.quantize {
                    write!(f, ",quant={q}")?;
                }
                Ok(())
            }
        }
    }
}

/// How δ moves between batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    FixDelta,
    FixEps,
    /// `δ_{k+1} = factor · δ_k^{h_{k+1}/h_k}`.
    Custom,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fix-delta" => Ok(ScheduleKind::FixDelta),
            "fix-eps" | "fix-epsilon-tilde" => Ok(ScheduleKind::FixEps),
            "custom" => Ok(ScheduleKind::Custom),
            _ => Err(Error::InvalidArgument(format!("unknown schedule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub source: DataSource,
    /// Initial training size for the online regime.
    pub train: usize,
    pub proper_train: usize,
    pub calib: usize,
    /// Test block size (offline regimes) or number of predicted objects.
    pub test: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub grid: Vec<SignificanceLevel<f64>>,
    pub delta: f64,
    /// Target ε for the per-batch schedule summary.
    pub epsilon: f64,
    pub schedule: ScheduleKind,
    pub custom_delta_factor: f64,
    pub runs: usize,
    pub seed: u64,
    pub standardize: bool,
    /// Neighbours used by the k-NN scorer of the inductive regimes.
    pub k: usize,
    pub svg: bool,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `regime` on the default synthetic source.
    pub fn defaults(regime: Regime) -> Self {
        let base = Self {
            regime,
            source: DataSource::Synthetic(SyntheticSource::default()),
            train: 100,
            proper_train: 500,
            calib: 500,
            test: 100,
            batches: 1,
            batch_size: 100,
            grid: default_epsilon_grid(),
            delta: 0.1,
            epsilon: 0.1,
            schedule: ScheduleKind::FixDelta,
            custom_delta_factor: 0.5,
            runs: 100,
            seed: 42,
            standardize: false,
            k: 10,
            svg: false,
            out: PathBuf::from("out"),
        };
        match regime {
            Regime::FcpOnline => Self {
                test: 200,
                runs: 20,
                ..base
            },
            Regime::IcpOffline => base,
            Regime::IcpBatch => Self {
                proper_train: 200,
                calib: 300,
                batches: 10,
                batch_size: 100,
                runs: 10,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("epsilon grid is empty".into()));
        }
        if !self.grid.windows(2).all(|w| w[0].value() < w[1].value()) {
            return Err(Error::InvalidArgument("epsilon grid must be strictly increasing".into()));
        }
        Delta::new(self.delta)?;
        SignificanceLevel::new(self.epsilon)?;
        if self.regime != Regime::FcpOnline {
            if self.proper_train == 0 || self.calib == 0 {
                return Err(Error::InvalidSplit {
                    m: self.proper_train,
                    l: self.proper_train + self.calib,
                });
            }
            if self.k == 0 || self.k > self.proper_train {
                return Err(Error::KTooLarge {
                    k: self.k,
                    n: self.proper_train,
                });
            }
        }
        if self.regime == Regime::IcpBatch {
            if self.batches == 0 || self.batch_size == 0 {
                return Err(Error::InvalidArgument("batch count and batch size must be at least 1".into()));
            }
            if !(self.custom_delta_factor > 0.0 && self.custom_delta_factor <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "custom delta factor must lie in (0, 1], got {}",
                    self.custom_delta_factor
                )));
            }
        }
        Ok(())
    }

    /// Examples consumed by one run.
    pub fn required_examples(&self) -> usize {
        match self.regime {
            Regime::FcpOnline => self.train + self.test,
            Regime::IcpOffline => self.proper_train + self.calib + self.test,
            Regime::IcpBatch => self.proper_train + self.calib + self.batches * self.batch_size,
        }
    }

    /// Run count of the reference protocol this desk-scale default stands in for.
    fn reference_runs(&self) -> usize {
        match self.regime {
            Regime::FcpOnline => 100,
            Regime::IcpOffline => 1000,
            Regime::IcpBatch => 10,
        }
    }

    fn echo(&self) -> serde_json::Value {
        json!({
            "regime": self.regime,
            "source": self.source.to_string(),
            "train": self.train,
            "proper_train": self.proper_train,
            "calib": self.calib,
            "test": self.test,
            "batches": self.batches,
            "batch_size": self.batch_size,
            "epsilon_grid": self.grid.iter().map(|e| e.value()).collect::<Vec<_>>(),
            "delta": self.delta,
            "epsilon": self.epsilon,
            "schedule": self.schedule,
            "custom_delta_factor": self.custom_delta_factor,
            "runs": self.runs,
            "seed": self.seed,
            "standardize": self.standardize,
            "k": self.k,
        })
    }
}

/// Loads or generates the dataset. Synthetic data is drawn once from the
/// reserved data stream, so every run shuffles the same examples.
pub fn load_examples(config: &ExperimentConfig) -> Result<Vec<Example<f64>>> {
    let mut data = match &config.source {
        DataSource::Csv { path, label_column } => load_csv::<f64>(path, label_column)?.examples,
        DataSource::Synthetic(s) => {
            let mut rng = RandomSource::new(config.seed, DATA_STREAM);
            generate_synthetic(&s.mixture, s.n, &mut rng)?
        }
    };
    if config.standardize {
        standardize(&mut data)?;
    }
    Ok(data)
}

/// Output of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub curve: CurveTable<f64>,
    pub counts: Vec<SetSizeCounts>,
    /// Probability-threshold baseline (inductive regimes).
    pub chow: Option<CurveTable<f64>>,
    /// σ̃ per batch and grid level, `None` when ε̃ is unusable or no
    /// singletons occur at ε̃.
    pub sigma_tilde: Vec<Vec<Option<f64>>>,
    pub log: Vec<LoggedPrediction<f64>>,
}

/// Per-cell mean with 5% and 95% bands across runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Aggregate {
    pub mean: CurveTable<f64>,
    pub lower: CurveTable<f64>,
    pub upper: CurveTable<f64>,
}

/// Schedule state of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchRecord {
    pub index: usize,
    pub training_size: usize,
    pub proper_size: usize,
    pub calibration_size: usize,
    pub ln_inv_delta: f64,
    pub delta: f64,
    /// ε̃ at the configured target ε.
    pub epsilon_tilde: f64,
    pub usable: bool,
}

/// σ̃ at one (batch, ε) cell, averaged over the runs where it is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaTildeRow {
    pub batch: usize,
    pub epsilon: f64,
    pub epsilon_tilde: f64,
    pub usable: bool,
    pub ln_inv_delta: f64,
    pub sigma_tilde: Option<f64>,
    pub defined_runs: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub regime: Regime,
    pub runs: Vec<RunResult>,
    pub aggregate: Aggregate,
    pub chow: Option<Aggregate>,
    pub batches: Vec<BatchRecord>,
    pub sigma_tilde: Vec<SigmaTildeRow>,
    pub metadata: serde_json::Value,
}

/// Dispatches on the configured regime.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    match config.regime {
        Regime::FcpOnline => run_fcp(config),
        Regime::IcpOffline => run_icp_offline(config),
        Regime::IcpBatch => run_icp_batch(config),
    }
}

fn prepare(config: &ExperimentConfig, regime: Regime) -> Result<Vec<Example<f64>>> {
    if config.regime != regime {
        return Err(Error::InvalidArgument(format!(
            "configuration is for {}, not {regime}",
            config.regime
        )));
    }
    config.validate()?;
    let data = load_examples(config)?;
    let need = config.required_examples();
    if data.len() < need {
        return Err(Error::DatasetTooSmall { have: data.len(), need });
    }
    Ok(data)
}

fn par_runs<F>(config: &ExperimentConfig, run: F) -> Result<Vec<RunResult>>
where
    F: Fn(&mut RandomSource) -> Result<RunResult> + Sync,
{
    (0..config.runs)
        .into_par_iter()
        .map(|i| run(&mut RandomSource::new(config.seed, i as u64)))
        .collect()
}

fn pick(data: &[Example<f64>], idx: &[usize]) -> Vec<Example<f64>> {
    idx.iter().map(|&i| data[i].clone()).collect()
}

fn tally_grid(log: &[LoggedPrediction<f64>], grid: &[SignificanceLevel<f64>]) -> Vec<(SignificanceLevel<f64>, SetSizeCounts)> {
    grid.iter().map(|&e| (e, SetSizeCounts::tally(log, e))).collect()
}

fn chow_thresholds(grid: &[SignificanceLevel<f64>]) -> Vec<f64> {
    grid.iter().map(|e| 0.5 + 0.5 * e.value()).collect()
}

/// σ̃ for each grid ε at ε̃ = ε - sqrt(ln(1/δ) / 2h), from one block's log.
fn sigma_tilde_row(
    log: &[LoggedPrediction<f64>],
    grid: &[SignificanceLevel<f64>],
    delta: Delta<f64>,
    h: usize,
) -> Vec<Option<f64>> {
    grid.iter()
        .map(|e| {
            let et = epsilon_tilde(e.value(), delta, h);
            let level = SignificanceLevel::new(et.value).ok()?;
            let c = SetSizeCounts::tally(log, level);
            sigma_tilde_from_counts(c.n, et.value, c.empty, c.single).ok()
        })
        .collect()
}

fn finish(
    config: &ExperimentConfig,
    runs: Vec<RunResult>,
    batches: Vec<BatchRecord>,
    deltas: &[Delta<f64>],
    calibration_sizes: &[usize],
) -> RunReport {
    let aggregate = aggregate_tables(&runs.iter().map(|r| &r.curve).collect::<Vec<_>>());
    let chow = runs
        .iter()
        .map(|r| r.chow.as_ref())
        .collect::<Option<Vec<_>>>()
        .map(|tables| aggregate_tables(&tables));
    let mut sigma_tilde = Vec::new();
    for (b, (&delta, &h)) in deltas.iter().zip(calibration_sizes).enumerate() {
        for (j, e) in config.grid.iter().enumerate() {
            let et = epsilon_tilde(e.value(), delta, h);
            let values: Vec<f64> = runs.iter().filter_map(|r| r.sigma_tilde[b][j]).collect();
            sigma_tilde.push(SigmaTildeRow {
                batch: b,
                epsilon: e.value(),
                epsilon_tilde: et.value,
                usable: et.usable,
                ln_inv_delta: delta.ln_inv(),
                sigma_tilde: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
                defined_runs: values.len(),
            });
        }
    }
    let reference = config.reference_runs();
    let metadata = json!({
        "config": config.echo(),
        "seed": config.seed,
        "runs": config.runs,
        "created_unix_seconds": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "aggregation": "mean of per-run curves; bands are empirical 5%/95% quantiles widened to contain the mean",
        "scaling": {
            "reference_runs": reference,
            "runs": config.runs,
            "band_widening_factor": (reference as f64 / config.runs as f64).sqrt().max(1.0),
        },
        "batches": batches,
    });
    RunReport {
        regime: config.regime,
        runs,
        aggregate,
        chow,
        batches,
        sigma_tilde,
        metadata,
    }
}

/// Blind online prediction with the label-conditional Mondrian 1-NN
/// predictor: per run, shuffle, keep the first `train` examples as the
/// history and predict the next `test` objects.
pub fn run_fcp(config: &ExperimentConfig) -> Result<RunReport> {
    let data = prepare(config, Regime::FcpOnline)?;
    let runs = par_runs(config, |rng| {
        let order = rng.permutation(data.len());
        let initial = pick(&data, &order[..config.train]);
        let stream = pick(&data, &order[config.train..config.train + config.test]);
        let options = OnlineOptions {
            blind: true,
            smoothed: true,
        };
        let state = run_mondrian_online(
            &initial,
            &stream,
            &config.grid,
            Taxonomy::LabelConditional,
            &NearestNeighbor,
            rng,
            options,
        )?;
        let log = state.log();
        let counts = tally_grid(&log, &config.grid);
        Ok(RunResult {
            curve: build_curve(&counts),
            counts: counts.into_iter().map(|(_, c)| c).collect(),
            chow: None,
            sigma_tilde: Vec::new(),
            log,
        })
    })?;
    Ok(finish(config, runs, Vec::new(), &[], &[]))
}

struct BlockOutput {
    log: Vec<LoggedPrediction<f64>>,
    probs: Vec<(f64, crate::types::Label)>,
}

fn predict_block(
    training: &[Example<f64>],
    proper: usize,
    k: usize,
    block: &[Example<f64>],
    rng: &mut RandomSource,
) -> Result<BlockOutput> {
    let model = fit_icp(training, proper, |p| fit_knn_scorer(p, k), rng)?;
    let mut log = Vec::with_capacity(block.len());
    let mut probs = Vec::with_capacity(block.len());
    for z in block {
        log.push(LoggedPrediction {
            p: model.p_values(z.object(), rng, true)?,
            truth: z.label(),
        });
        probs.push((<KnnScorer<f64> as ProbabilityScorer<f64>>::prob_one(model.scorer(), z.object())?, z.label()));
    }
    Ok(BlockOutput { log, probs })
}

fn offline_result(config: &ExperimentConfig, log: Vec<LoggedPrediction<f64>>, probs: &[(f64, crate::types::Label)], sigma_tilde: Vec<Vec<Option<f64>>>) -> RunResult {
    let counts = tally_grid(&log, &config.grid);
    RunResult {
        curve: build_curve(&counts),
        counts: counts.into_iter().map(|(_, c)| c).collect(),
        chow: Some(chow_baseline(probs, &chow_thresholds(&config.grid))),
        sigma_tilde,
        log,
    }
}

/// Offline ICP with the k-NN margin measure: per run, shuffle, fit on the
/// first `proper_train + calib` examples and predict the next `test`.
pub fn run_icp_offline(config: &ExperimentConfig) -> Result<RunReport> {
    let data = prepare(config, Regime::IcpOffline)?;
    let l = config.proper_train + config.calib;
    let delta = Delta::new(config.delta)?;
    let runs = par_runs(config, |rng| {
        let order = rng.permutation(data.len());
        let training = pick(&data, &order[..l]);
        let block = pick(&data, &order[l..l + config.test]);
        let out = predict_block(&training, config.proper_train, config.k, &block, rng)?;
        let st = sigma_tilde_row(&out.log, &config.grid, delta, config.calib);
        Ok(offline_result(config, out.log, &out.probs, vec![st]))
    })?;
    Ok(finish(config, runs, Vec::new(), &[delta], &[config.calib]))
}

fn schedules(config: &ExperimentConfig) -> Result<Vec<BatchSchedule<f64>>> {
    let mut s = BatchSchedule::new(
        config.proper_train + config.calib,
        config.proper_train,
        config.epsilon,
        Delta::new(config.delta)?,
    )?;
    let mut out = vec![s];
    for _ in 1..config.batches {
        let new_proper = s.proper_size + config.batch_size;
        let mode = match config.schedule {
            ScheduleKind::FixDelta => ScheduleMode::FixDelta,
            ScheduleKind::FixEps => ScheduleMode::FixEpsilonTilde,
            ScheduleKind::Custom => {
                let h_next = s.training_size + config.batch_size - new_proper;
                let bound = s.delta.pow(h_next as f64 / s.calibration_size() as f64);
                ScheduleMode::Custom(Delta::from_ln_inv(bound.ln_inv() - config.custom_delta_factor.ln())?)
            }
        };
        s = s.next_batch(mode, config.batch_size, new_proper)?;
        out.push(s);
    }
    Ok(out)
}

/// Batch ICP: each batch refits on all labelled data so far (the proper
/// training set grows by the batch size, the calibration size stays fixed),
/// predicts the next block, then learns its labels. Curves come from the
/// pooled predictions of all batches.
pub fn run_icp_batch(config: &ExperimentConfig) -> Result<RunReport> {
    let data = prepare(config, Regime::IcpBatch)?;
    let plan = schedules(config)?;
    let l0 = config.proper_train + config.calib;
    let runs = par_runs(config, |rng| {
        let order = rng.permutation(data.len());
        let mut training = pick(&data, &order[..l0]);
        let mut cursor = l0;
        let mut log = Vec::new();
        let mut probs = Vec::new();
        let mut sigma_tilde = Vec::with_capacity(plan.len());
        for s in &plan {
            let block = pick(&data, &order[cursor..cursor + config.batch_size]);
            let out = predict_block(&training, s.proper_size, config.k, &block, rng)?;
            sigma_tilde.push(sigma_tilde_row(&out.log, &config.grid, s.delta, s.calibration_size()));
            log.extend(out.log);
            probs.extend(out.probs);
            training.extend(block);
            cursor += config.batch_size;
        }
        Ok(offline_result(config, log, &probs, sigma_tilde))
    })?;
    let batches: Vec<BatchRecord> = plan
        .iter()
        .map(|s| {
            let et = s.epsilon_tilde();
            BatchRecord {
                index: s.index,
                training_size: s.training_size,
                proper_size: s.proper_size,
                calibration_size: s.calibration_size(),
                ln_inv_delta: s.delta.ln_inv(),
                delta: s.delta.value(),
                epsilon_tilde: et.value,
                usable: et.usable,
            }
        })
        .collect();
    let deltas: Vec<_> = plan.iter().map(|s| s.delta).collect();
    let hs: Vec<_> = plan.iter().map(|s| s.calibration_size()).collect();
    Ok(finish(config, runs, batches, &deltas, &hs))
}

const CELLS: usize = 8;

fn cells(r: &CurveRow<f64>) -> [Option<f64>; CELLS] {
    [
        Some(r.frac_empty),
        Some(r.frac_single),
        Some(r.frac_double),
        r.sigma_hat_raw,
        r.sigma_hat_clamped,
        r.singleton_error_empirical,
        Some(r.reject_rate),
        Some(r.accept_count),
    ]
}

fn from_cells(epsilon: f64, c: [Option<f64>; CELLS]) -> CurveRow<f64> {
    CurveRow {
        epsilon,
        frac_empty: c[0].unwrap_or(0.0),
        frac_single: c[1].unwrap_or(0.0),
        frac_double: c[2].unwrap_or(0.0),
        sigma_hat_raw: c[3],
        sigma_hat_clamped: c[4],
        singleton_error_empirical: c[5],
        reject_rate: c[6].unwrap_or(1.0),
        accept_count: c[7].unwrap_or(0.0),
    }
}

/// Per-cell mean over the runs where the cell is present, with empirical
/// 5%/95% quantile bands. Bands are widened to contain the mean when a
/// skewed cell puts the mean outside the quantile range.
pub fn aggregate_tables(tables: &[&CurveTable<f64>]) -> Aggregate {
    let Some(first) = tables.first() else { return Aggregate::default() };
    let mut agg = Aggregate::default();
    for (i, row) in first.rows.iter().enumerate() {
        let mut mean = [None; CELLS];
        let mut lower = [None; CELLS];
        let mut upper = [None; CELLS];
        for c in 0..CELLS {
            let mut v: Vec<f64> = tables.iter().filter_map(|t| cells(&t.rows[i])[c]).collect();
            if v.is_empty() {
                continue;
            }
            v.sort_by(f64::total_cmp);
            let m = v.iter().sum::<f64>() / v.len() as f64;
            mean[c] = Some(m);
            lower[c] = Some(quantile(&v, 0.05).min(m));
            upper[c] = Some(quantile(&v, 0.95).max(m));
        }
        agg.mean.rows.push(from_cells(row.epsilon, mean));
        agg.lower.rows.push(from_cells(row.epsilon, lower));
        agg.upper.rows.push(from_cells(row.epsilon, upper));
    }
    agg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(regime: Regime) -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(regime);
        c.source = DataSource::Synthetic("n=600".parse().unwrap());
        c.runs = 3;
        c.grid = crate::types::epsilon_grid(0.05, 0.5, 0.05).unwrap();
        c.proper_train = 100;
        c.calib = 100;
        c.batch_size = 50;
        c.batches = 3;
        c.test = 50;
        c
    }

    #[test]
    fn fcp_report_has_one_row_per_level() {
        let r = run_fcp(&small(Regime::FcpOnline)).unwrap();
        assert_eq!(r.aggregate.mean.len(), 10);
        assert_eq!(r.runs.len(), 3);
        assert!(r.runs.iter().all(|run| run.counts.iter().all(|c| c.identities_hold() && c.n == 50)));
    }

    #[test]
    fn zero_test_size_gives_empty_counts() {
        let mut c = small(Regime::FcpOnline);
        c.test = 0;
        let r = run_fcp(&c).unwrap();
        assert!(r.aggregate.mean.rows.iter().all(|row| row.reject_rate == 1.0 && row.frac_single == 0.0));
    }

    #[test]
    fn dataset_too_small() {
        let mut c = small(Regime::IcpOffline);
        c.test = 10_000;
        assert!(matches!(run_icp_offline(&c), Err(Error::DatasetTooSmall { need: 10_200, .. })));
    }

    #[test]
    fn config_checks() {
        let mut c = small(Regime::IcpOffline);
        c.runs = 0;
        assert!(c.validate().is_err());
        let mut c = small(Regime::IcpOffline);
        c.calib = 0;
        assert!(matches!(c.validate(), Err(Error::InvalidSplit { .. })));
        let mut c = small(Regime::IcpBatch);
        c.batches = 0;
        assert!(c.validate().is_err());
        assert!(run_icp_batch(&small(Regime::IcpOffline)).is_err());
    }

    #[test]
    fn single_calibration_example_unsmoothed_values() {
        let mut c = small(Regime::IcpOffline);
        c.calib = 1;
        c.k = 5;
        let data = load_examples(&c).unwrap();
        let mut rng = RandomSource::new(1, 0);
        let model = fit_icp(&data[..101], 100, |p| fit_knn_scorer(p, 5), &mut rng).unwrap();
        for z in &data[101..200] {
            let p = model.p_values(z.object(), &mut rng, false).unwrap();
            for v in [p.p0, p.p1] {
                assert!(v == 0.5 || v == 1.0, "{v}");
            }
        }
    }

    #[test]
    fn fix_eps_schedule_keeps_epsilon_tilde() {
        let mut c = small(Regime::IcpBatch);
        c.schedule = ScheduleKind::FixEps;
        let r = run_icp_batch(&c).unwrap();
        let first = r.batches[0].epsilon_tilde;
        assert!(r.batches.iter().all(|b| (b.epsilon_tilde - first).abs() < 1e-12));
    }

    #[test]
    fn custom_schedule_shrinks_delta() {
        let mut c = small(Regime::IcpBatch);
        c.schedule = ScheduleKind::Custom;
        let r = run_icp_batch(&c).unwrap();
        for w in r.batches.windows(2) {
            assert!((w[1].ln_inv_delta - w[0].ln_inv_delta - 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn bands_contain_mean() {
        let r = run_icp_offline(&small(Regime::IcpOffline)).unwrap();
        for ((m, lo), hi) in r.aggregate.mean.rows.iter().zip(&r.aggregate.lower.rows).zip(&r.aggregate.upper.rows) {
            for ((a, b), c) in cells(m).iter().zip(cells(lo)).zip(cells(hi)) {
                if let (Some(a), Some(b), Some(c)) = (a, b, c) {
                    assert!(b <= *a && *a <= c);
                }
            }
        }
    }
}
