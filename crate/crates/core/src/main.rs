use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use conformal_reject::data::SyntheticSource;
use conformal_reject::harness::{
    emit_reports, run_experiment, validate, DataSource, ExperimentConfig, Regime, Scenario, ScheduleKind,
};
use conformal_reject::types::epsilon_grid;
use conformal_reject::{Error, Result};

#[derive(Parser)]
#[command(name = "conformal-reject", version, about = "Conformal prediction with a reject option: experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blind online Mondrian 1-NN conformal prediction.
    Fcp(Common),
    /// Offline inductive conformal prediction with a k-NN scorer.
    Icp(Common),
    /// Batch inductive conformal prediction with a δ schedule.
    IcpBatch(Common),
    /// Run the validity checks on synthetic data.
    Validate {
        #[command(flatten)]
        common: Common,
        /// exchangeable | unsmoothed | drift
        #[arg(long, default_value = "exchangeable")]
        scenario: String,
        /// Number of online trials.
        #[arg(long, default_value_t = 2000)]
        trials: usize,
    },
}

#[derive(Args)]
struct Common {
    /// CSV dataset with a header row.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic Gaussian mixture, e.g. "n=2000,dim=2,sep=2,sd=1,prior=0.5".
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long, default_value = "label")]
    label_col: String,
    /// Initial training size (fcp), or total training size for icp regimes.
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    proper_train: Option<usize>,
    #[arg(long)]
    calib: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// start:stop:step
    #[arg(long, default_value = "0.01:0.99:0.01")]
    epsilon_grid: String,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Target ε reported in the per-batch schedule summary.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// fix-delta | fix-eps | custom
    #[arg(long, default_value = "fix-delta")]
    schedule: String,
    /// Custom schedule: δ' = factor · δ^(h'/h).
    #[arg(long, default_value_t = 0.5)]
    custom_delta_factor: f64,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    standardize: bool,
    /// Neighbours of the k-NN scorer.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    svg: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_grid(s: &str) -> Result<Vec<conformal_reject::Significance>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(Error::InvalidArgument(format!("epsilon grid {s:?} is not start:stop:step")));
    };
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("bad epsilon grid value {v:?}")))
    };
    epsilon_grid(num(a)?, num(b)?, num(c)?)
}

fn build_config(regime: Regime, a: &Common) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::defaults(regime);
    c.source = match (&a.data, &a.synthetic) {
        (Some(path), _) => DataSource::Csv {
            path: path.clone(),
            label_column: a.label_col.clone(),
        },
        (None, Some(spec)) => DataSource::Synthetic(spec.parse::<SyntheticSource>()?),
        (None, None) => DataSource::Synthetic(SyntheticSource::default()),
    };
    if let Some(v) = a.proper_train {
        c.proper_train = v;
    }
    match (regime, a.train, a.calib) {
        (Regime::FcpOnline, Some(t), _) => c.train = t,
        (_, Some(t), None) => {
            c.calib = t
                .checked_sub(c.proper_train)
                .filter(|&h| h > 0)
                .ok_or(Error::InvalidSplit { m: c.proper_train, l: t })?;
        }
        (_, Some(t), Some(h)) if t != c.proper_train + h => {
            return Err(Error::InvalidArgument(format!(
                "--train {t} disagrees with --proper-train {} plus --calib {h}",
                c.proper_train
            )))
        }
        (_, _, Some(h)) => c.calib = h,
        _ => {}
    }
    if let Some(v) = a.test {
        c.test = v;
    }
    if let Some(v) = a.batches {
        c.batches = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.runs {
        c.runs = v;
    }
    c.grid = parse_grid(&a.epsilon_grid)?;
    c.delta = a.delta;
    c.epsilon = a.epsilon;
    c.schedule = a.schedule.parse::<ScheduleKind>()?;
    c.custom_delta_factor = a.custom_delta_factor;
    c.seed = a.seed;
    c.standardize = a.standardize;
    c.k = a.k;
    c.svg = a.svg;
    c.out = a.out.clone();
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    let (regime, common) = match &cli.command {
        Command::Fcp(a) => (Regime::FcpOnline, a),
        Command::Icp(a) => (Regime::IcpOffline, a),
        Command::IcpBatch(a) => (Regime::IcpBatch, a),
        Command::Validate { common, scenario, trials } => {
            let config = build_config(Regime::FcpOnline, common)?;
            let report = validate(&config, scenario.parse::<Scenario>()?, *trials)?;
            for c in &report.checks {
                println!("{c}");
            }
            println!("verdict: {}", report.verdict);
            std::fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
            let path = config.out.join("validation.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
                .map_err(|e| Error::io(&path, e))?;
            return Ok(());
        }
    };
    let config = build_config(regime, common)?;
    let report = run_experiment(&config)?;
    for p in emit_reports(&report, &config.out, config.svg)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "config" => 2,
        "data" => 3,
        "io" => 4,
        _ => 5,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
