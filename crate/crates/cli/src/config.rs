//! Strict JSON experiment configs.
//!
//! Every struct rejects unknown keys. The config hash is the SHA-256 of the
//! effective config (seed override applied, output directory excluded)
//! serialised back to compact JSON, so reruns into different directories
//! share a hash.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use otl_core::exec::Execution;
use otl_core::ot1d::MonotoneMap1D;
use otl_core::rates::{RateConfig, SolverSettings, TransferMode};
use otl_core::synthetic::GaussianTaskSpec;
use otl_core::Seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    /// Same standard Gaussian on both sides, identity output map.
    Identity { dim: usize },
    /// One-kink output map; `minor_sd` shrinks all axes but the first.
    Kinked {
        dim: usize,
        #[serde(default = "one")]
        minor_sd: f64,
        #[serde(default)]
        noise_sd: f64,
    },
    /// Fully explicit task.
    Gaussian {
        target_mean: Vec<f64>,
        target_cov: Vec<Vec<f64>>,
        source_mean: Vec<f64>,
        source_cov: Vec<Vec<f64>>,
        source_u: Vec<f64>,
        source_b: f64,
        grad_bounds: (f64, f64),
        output_knots_x: Vec<f64>,
        output_knots_y: Vec<f64>,
        output_lipschitz: f64,
        #[serde(default)]
        noise_sd: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    otl_core::linalg::dmat(rows).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

impl TaskConfig {
    pub fn build(&self) -> Result<GaussianTaskSpec, CliError> {
        let spec = match self {
            TaskConfig::Identity { dim } => {
                check_dim(*dim)?;
                GaussianTaskSpec::identity(*dim)
            }
            TaskConfig::Kinked {
                dim,
                minor_sd,
                noise_sd,
            } => {
                check_dim(*dim)?;
                if !(*minor_sd > 0.0 && minor_sd.is_finite()) {
                    return Err(CliError::Config(format!("minor_sd must be positive, got {minor_sd}")));
                }
                GaussianTaskSpec::kinked_scaled(*dim, *minor_sd, *noise_sd)
            }
            TaskConfig::Gaussian {
                target_mean,
                target_cov,
                source_mean,
                source_cov,
                source_u,
                source_b,
                grad_bounds,
                output_knots_x,
                output_knots_y,
                output_lipschitz,
                noise_sd,
            } => GaussianTaskSpec {
                target_mean: DVector::from_column_slice(target_mean),
                target_cov: matrix(target_cov, "target_cov")?,
                source_mean: DVector::from_column_slice(source_mean),
                source_cov: matrix(source_cov, "source_cov")?,
                source_u: source_u.clone(),
                source_b: *source_b,
                grad_bounds: *grad_bounds,
                output_map: MonotoneMap1D::new(output_knots_x.clone(), output_knots_y.clone())
                    .map_err(|e| CliError::Config(format!("output map: {e}")))?,
                output_lipschitz: *output_lipschitz,
                noise_sd: *noise_sd,
            },
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

fn check_dim(dim: usize) -> Result<(), CliError> {
    if dim == 0 {
        return Err(CliError::Config("dim must be at least 1".into()));
    }
    Ok(())
}

/// Solver overrides; omitted keys keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon_rel: Option<f64>,
    pub epsilon_decay: Option<f64>,
    pub bandwidth_scale: Option<f64>,
    pub bandwidth_exponent: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub c_bw: Option<f64>,
    pub ot_source_points: Option<usize>,
}

impl SolverConfig {
    pub fn settings(&self) -> SolverSettings {
        let d = SolverSettings::default();
        SolverSettings {
            epsilon_rel: self.epsilon_rel.unwrap_or(d.epsilon_rel),
            epsilon_decay: self.epsilon_decay.unwrap_or(d.epsilon_decay),
            bandwidth_scale: self.bandwidth_scale.unwrap_or(d.bandwidth_scale),
            bandwidth_exponent: self.bandwidth_exponent.or(d.bandwidth_exponent),
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            c_bw: self.c_bw.unwrap_or(d.c_bw),
            ot_source_points: self.ot_source_points.or(d.ot_source_points),
        }
    }
}

/// Config for `rates` and `classify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub task: TaskConfig,
    pub m_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_m_source")]
    pub m_source: usize,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub ground_truth_maps: bool,
    #[serde(default)]
    pub sequential: bool,
    /// Label threshold; required by `classify`, rejected by `rates`.
    #[serde(default)]
    pub threshold: Option<f64>,
}

fn default_trials() -> usize {
    20
}

fn default_m_source() -> usize {
    20_000
}

fn default_n_eval() -> usize {
    20_000
}

impl SweepConfig {
    pub fn rate_config(&self) -> Result<RateConfig, CliError> {
        let task = self.task.build()?;
        let config = RateConfig {
            task,
            m_grid: self.m_grid.clone(),
            trials: self.trials,
            m_source: self.m_source,
            n_eval: self.n_eval,
            p: self.p,
            seed: Seed(self.seed),
            solver: self.solver.settings(),
            mode: if self.ground_truth_maps {
                TransferMode::GroundTruth
            } else {
                TransferMode::Fitted
            },
            execution: if self.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
        };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }
}

/// Gaussian pair for `ot-demo`: fitted maps go from the first law to the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairConfig {
    Identity { dim: usize },
    Translation { shift: Vec<f64> },
    Gaussian {
        source_mean: Vec<f64>,
        source_cov: Vec<Vec<f64>>,
        target_mean: Vec<f64>,
        target_cov: Vec<Vec<f64>>,
    },
}

/// Means and covariances `(m1, S1, m2, S2)` of a pair.
pub type GaussianPair = (DVector<f64>, DMatrix<f64>, DVector<f64>, DMatrix<f64>);

impl PairConfig {
    pub fn build(&self) -> Result<GaussianPair, CliError> {
        let pair = match self {
            PairConfig::Identity { dim } => {
                check_dim(*dim)?;
                let d = *dim;
                (DVector::zeros(d), DMatrix::identity(d, d), DVector::zeros(d), DMatrix::identity(d, d))
            }
            PairConfig::Translation { shift } => {
                check_dim(shift.len())?;
                let d = shift.len();
                (
                    DVector::zeros(d),
                    DMatrix::identity(d, d),
                    DVector::from_column_slice(shift),
                    DMatrix::identity(d, d),
                )
            }
            PairConfig::Gaussian {
                source_mean,
                source_cov,
                target_mean,
                target_cov,
            } => (
                DVector::from_column_slice(source_mean),
                matrix(source_cov, "source_cov")?,
                DVector::from_column_slice(target_mean),
                matrix(target_cov, "target_cov")?,
            ),
        };
        let d = pair.0.len();
        if pair.1.nrows() != d || pair.2.len() != d || pair.3.nrows() != d {
            return Err(CliError::Config("pair means and covariances differ in dimension".into()));
        }
        for (cov, what) in [(&pair.1, "source_cov"), (&pair.3, "target_cov")] {
            otl_core::linalg::check_spd(cov, what).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(pair)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub pair: PairConfig,
    /// Points sampled from each law.
    pub m: usize,
    /// Absolute Sinkhorn epsilon; overrides `epsilon_rel`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub epsilon_rel: Option<f64>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Fresh evaluation draws before restricting to Mahalanobis radius 2.
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
}

fn default_n_grid() -> usize {
    2000
}

impl DemoConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |v: Option<f64>, what: &str| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Config(format!("{what} must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive(self.epsilon, "epsilon")?;
        positive(self.epsilon_rel, "epsilon_rel")?;
        positive(self.bandwidth, "bandwidth")?;
        positive(self.tol, "tol")?;
        if self.max_iter == Some(0) {
            return Err(CliError::Config("max_iter must be positive".into()));
        }
        if self.m < 2 || self.n_grid == 0 {
            return Err(CliError::Config("m must be at least 2 and n_grid positive".into()));
        }
        self.pair.build().map(|_| ())
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    let canonical = serde_json::to_string(config).expect("config serialises");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"seed": 3, "task": {"kind": "kinked", "dim": 2}, "m_grid": [20, 40]}"#;

    #[test]
    fn minimal_sweep_parses_with_defaults() {
        let c: SweepConfig = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(c.trials, 20);
        assert_eq!(c.solver.settings(), SolverSettings::default());
        let rc = c.rate_config().unwrap();
        assert_eq!(rc.task, GaussianTaskSpec::kinked(2, 0.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = r#"{"seed": 3, "task": {"kind": "kinked", "dim": 2}, "m_grid": [20, 40], "solver": {"tolerance": 1e-6}}"#;
        assert!(serde_json::from_str::<SweepConfig>(typo).is_err());
        let task_typo = r#"{"seed": 3, "task": {"kind": "kinked", "dim": 2, "noise": 0.1}, "m_grid": [20, 40]}"#;
        assert!(serde_json::from_str::<SweepConfig>(task_typo).is_err());
    }

    #[test]
    fn hash_ignores_out_dir_but_not_seed() {
        let mut a: SweepConfig = serde_json::from_str(MINIMAL).unwrap();
        let h = config_hash(&a);
        a.out_dir = Some("elsewhere".into());
        assert_eq!(config_hash(&a), h);
        a.seed = 4;
        assert_ne!(config_hash(&a), h);
        assert_eq!(h.len(), 64);
    }

    #[test]
    fn explicit_task_round_trips() {
        let spec = GaussianTaskSpec::kinked(2, 0.2);
        let explicit = TaskConfig::Gaussian {
            target_mean: spec.target_mean.iter().copied().collect(),
            target_cov: otl_core::linalg::rows_of(&spec.target_cov),
            source_mean: spec.source_mean.iter().copied().collect(),
            source_cov: otl_core::linalg::rows_of(&spec.source_cov),
            source_u: spec.source_u.clone(),
            source_b: spec.source_b,
            grad_bounds: spec.grad_bounds,
            output_knots_x: spec.output_map.knots_x().to_vec(),
            output_knots_y: spec.output_map.knots_y().to_vec(),
            output_lipschitz: spec.output_lipschitz,
            noise_sd: 0.2,
        };
        assert_eq!(explicit.build().unwrap(), spec);
    }

    #[test]
    fn demo_rejects_nonpositive_epsilon() {
        let c: DemoConfig =
            serde_json::from_str(r#"{"seed": 1, "pair": {"kind": "identity", "dim": 2}, "m": 50, "epsilon": 0.0}"#).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }
}
