//! Transfer learning as `output_map ∘ source_model ∘ input_map`.
//!
//! The source model is fixed. Two maps are fitted from target data: an
//! entropic map from target inputs onto source inputs, and the monotone
//! 1-D map from source-model outputs onto target responses.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::map::{AffineMap, EvaluableMap};
use crate::ot1d::{eval1d, fit_quantile_map, MonotoneMap1D};
use crate::ot_nd::{fit_entropic_map_with, EntropicMap, EntropicOptions, Epsilon};
use crate::sample::SampleSet;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferEstimator<I = EntropicMap, S = AffineMap> {
    input_map: I,
    source_model: S,
    output_map: MonotoneMap1D,
}

impl<I: EvaluableMap, S: EvaluableMap> TransferEstimator<I, S> {
    /// Checks that `input_map: R^d -> R^k` feeds a scalar `source_model: R^k -> R`.
    pub fn from_parts(input_map: I, source_model: S, output_map: MonotoneMap1D) -> Result<Self> {
        if input_map.dim_out() != source_model.dim_in() {
            return Err(invalid(format!(
                "input map outputs dimension {} but source model expects {}",
                input_map.dim_out(),
                source_model.dim_in()
            )));
        }
        if source_model.dim_out() != 1 {
            return Err(invalid("source model must be scalar-valued"));
        }
        Ok(TransferEstimator {
            input_map,
            source_model,
            output_map,
        })
    }

    pub fn input_map(&self) -> &I {
        &self.input_map
    }

    pub fn source_model(&self) -> &S {
        &self.source_model
    }

    pub fn output_map(&self) -> &MonotoneMap1D {
        &self.output_map
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        predict_transfer(self, x)
    }
}

pub fn predict_transfer<I: EvaluableMap, S: EvaluableMap>(est: &TransferEstimator<I, S>, x: &[f64]) -> f64 {
    let z = est.input_map.eval(x);
    eval1d(&est.output_map, est.source_model.eval_scalar(&z))
}

impl<I: EvaluableMap, S: EvaluableMap> EvaluableMap for TransferEstimator<I, S> {
    fn dim_in(&self) -> usize {
        self.input_map.dim_in()
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = predict_transfer(self, x);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct TransferOptions {
    pub entropic: EntropicOptions,
    /// Use only the first `k` source inputs for the input-map Sinkhorn
    /// problem; the output map always uses all of them.
    pub input_map_source_points: Option<usize>,
}


/// Fits both transport maps around `source_model`.
pub fn fit_transfer<S: EvaluableMap>(
    source_model: S,
    source_inputs: &SampleSet,
    target_train: &SampleSet,
    epsilon: f64,
    bandwidth: f64,
) -> Result<TransferEstimator<EntropicMap, S>> {
    let opts = TransferOptions {
        entropic: EntropicOptions {
            epsilon: Epsilon::Absolute(epsilon),
            bandwidth: Some(bandwidth),
            ..EntropicOptions::default()
        },
        input_map_source_points: None,
    };
    fit_transfer_with(source_model, source_inputs, target_train, &opts)
}

pub fn fit_transfer_with<S: EvaluableMap>(
    source_model: S,
    source_inputs: &SampleSet,
    target_train: &SampleSet,
    opts: &TransferOptions,
) -> Result<TransferEstimator<EntropicMap, S>> {
    if source_inputs.dim() != target_train.dim() || source_model.dim_in() != source_inputs.dim() {
        return Err(invalid(format!(
            "dimensions: source inputs {}, target inputs {}, source model {}",
            source_inputs.dim(),
            target_train.dim(),
            source_model.dim_in()
        )));
    }
    let responses = target_train.require_responses()?;
    let target_x = target_train.without_responses();
    let ot_source = match opts.input_map_source_points {
        Some(k) if k < source_inputs.len() => source_inputs.head(k.max(1))?,
        _ => source_inputs.without_responses(),
    };
    let input_map = fit_entropic_map_with(&target_x, &ot_source, &opts.entropic)?;

    let source_outputs: Vec<f64> = source_inputs
        .points()
        .map(|p| source_model.eval_scalar(p))
        .collect();
    let output_map = fit_quantile_map(
        &SampleSet::from_values(&source_outputs)?,
        &SampleSet::from_values(responses)?,
    )?;
    TransferEstimator::from_parts(input_map, source_model, output_map)
}

/// Mean squared residual `(1/m) sum (y_i - f(x_i))^2`.
pub fn empirical_loss<M: EvaluableMap + ?Sized>(predict: &M, data: &SampleSet) -> Result<f64> {
    let y = data.require_responses()?;
    let total: f64 = data
        .points()
        .zip(y)
        .map(|(p, yi)| {
            let r = yi - predict.eval_scalar(p);
            r * r
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// Root-mean-square gap between two scalar maps over `eval_inputs`.
pub fn l2_error<P, T>(predict: &P, truth: &T, eval_inputs: &SampleSet) -> f64
where
    P: EvaluableMap + ?Sized,
    T: EvaluableMap + ?Sized,
{
    let total: f64 = eval_inputs
        .points()
        .map(|p| {
            let r = predict.eval_scalar(p) - truth.eval_scalar(p);
            r * r
        })
        .sum();
    (total / eval_inputs.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    source_model: AffineManifest,
    epsilon: f64,
    bandwidth: f64,
    input_map: String,
    output_map: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineManifest {
    matrix: Vec<Vec<f64>>,
    center: Vec<f64>,
    offset: Vec<f64>,
}

const INPUT_MAP_FILE: &str = "input_map.csv";
const OUTPUT_MAP_FILE: &str = "output_map.csv";
const MANIFEST_FILE: &str = "manifest.json";

impl TransferEstimator<EntropicMap, AffineMap> {
    /// Writes `input_map.csv`, `output_map.csv` and `manifest.json` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.input_map.write_csv(fs::File::create(dir.join(INPUT_MAP_FILE))?)?;
        self.output_map.write_csv(fs::File::create(dir.join(OUTPUT_MAP_FILE))?)?;
        let m = &self.source_model;
        let manifest = Manifest {
            source_model: AffineManifest {
                matrix: crate::linalg::rows_of(m.matrix()),
                center: m.center().iter().copied().collect(),
                offset: m.offset().iter().copied().collect(),
            },
            epsilon: self.input_map.epsilon(),
            bandwidth: self.input_map.bandwidth(),
            input_map: INPUT_MAP_FILE.into(),
            output_map: OUTPUT_MAP_FILE.into(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        let input_map = EntropicMap::read_csv(fs::File::open(dir.join(&manifest.input_map))?)?;
        let output_map = MonotoneMap1D::read_csv(fs::File::open(dir.join(&manifest.output_map))?)?;
        let sm = &manifest.source_model;
        let source_model = AffineMap::new(
            crate::linalg::dmat(&sm.matrix)?,
            crate::linalg::dvec(&sm.center),
            crate::linalg::dvec(&sm.offset),
        )?;
        Self::from_parts(input_map, source_model, output_map)
    }
}
