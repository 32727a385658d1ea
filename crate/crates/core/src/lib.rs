//! Conformal prediction with a reject option for binary classification.
//!
//! A conformal predictor at significance level ε outputs a prediction set
//! that is empty, a singleton, or both labels. Treating the non-singleton
//! outcomes as rejections turns the predictor into a classifier with a reject
//! option whose singleton error rate has a distribution-free expression
//! (see [`reject`]).
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which is what the experiment harness
//! uses.

pub mod data;
pub mod error;
pub mod harness;
pub mod inductive;
pub mod mondrian;
pub mod nonconformity;
pub mod reject;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod transductive;
pub mod types;

pub use error::{Error, Result};
pub use rng::RandomSource;
pub use scalar::Scalar;
pub use types::{Label, SignificanceLevel};

pub type Example = types::Example<f64>;
pub type Bag = types::Bag<f64>;
pub type ScorePool = types::ScorePool<f64>;
pub type PValuePair = types::PValuePair<f64>;
pub type Significance = types::SignificanceLevel<f64>;
pub type PredictionSet = transductive::PredictionSet<f64>;
pub type CurveRow = reject::CurveRow<f64>;
pub type CurveTable = reject::CurveTable<f64>;
pub type LoggedPrediction = reject::LoggedPrediction<f64>;
pub type KnnScorer = nonconformity::KnnScorer<f64>;
pub type IcpModel = inductive::IcpModel<f64, KnnScorer>;
pub type BatchSchedule = inductive::BatchSchedule<f64>;
pub type Delta = inductive::Delta<f64>;
pub type Taxonomy = mondrian::Taxonomy<f64>;

pub type Example32 = types::Example<f32>;
pub type PValuePair32 = types::PValuePair<f32>;
pub type CurveTable32 = reject::CurveTable<f32>;
