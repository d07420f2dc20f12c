//! Transfer learning as a composition of empirical optimal-transport maps.
//!
//! A target regressor is estimated as `T_out ∘ f_S ∘ T_in`, where `f_S` is a
//! pretrained source model, `T_in` transports target inputs onto source
//! inputs and `T_out` is the monotone map between source outputs and target
//! responses. The crate also carries a kernel-regression baseline, Gaussian
//! synthetic tasks with exact ground truth, and a Monte-Carlo harness that
//! measures how both estimators scale with the target sample size.

pub mod error;
pub mod exec;
pub mod linalg;
pub mod map;
pub mod metrics;
pub mod ot1d;
pub mod ot_nd;
pub mod pipeline;
pub mod rates;
pub mod regression;
pub mod sample;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
pub use exec::Execution;
pub use map::{AffineMap, EvaluableMap};
pub use ot1d::{fit_quantile_map, MonotoneMap1D};
pub use ot_nd::{fit_entropic_map, sinkhorn, Coupling, EntropicMap};
pub use pipeline::{fit_transfer, predict_transfer, TransferEstimator};
pub use rates::{run_classification_experiment, run_rate_experiment, RateConfig, RateResult};
pub use regression::{fit_direct, predict_direct, DirectEstimator};
pub use sample::{Point, SampleSet};
pub use seed::Seed;
pub use synthetic::GaussianTaskSpec;
