//! Sample-complexity harness.
//!
//! For every `m` on the grid and every trial, a fresh task sample is drawn
//! from a child seed labelled by `(m, trial)`; the transfer estimator and the
//! direct baseline are fitted on the same target data and scored on a fresh
//! evaluation sample. Per-trial results are collected in grid order, so the
//! aggregate is identical for parallel and sequential execution.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exec::{map_ordered, Execution};
use crate::map::EvaluableMap;
use crate::metrics::{accuracy, auroc, precision, relative_improvement, sensitivity, ConfusionCounts, ScoredLabels};
use crate::ot_nd::{bandwidth_rule, EntropicOptions, Epsilon, DEFAULT_EPSILON_REL, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::pipeline::{fit_transfer_with, l2_error, TransferOptions};
use crate::regression::{fit_direct, DirectEstimator, DEFAULT_C_BW};
use crate::sample::SampleSet;
use crate::seed::Seed;
use crate::synthetic::{build_ground_truth, sample_target_inputs, sample_task, GaussianTaskSpec, GroundTruth};

/// Errors below this are treated as exact; such rows make a slope fit degenerate.
pub const DEGENERATE_ERROR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateDescriptor {
    /// Exponent `r` in `m^-r`.
    pub exponent: f64,
    /// `sqrt(log m / m)` rather than a pure power.
    pub log_corrected: bool,
}

/// Rate exponent of the composed transport estimator: 1/2 for `d = 1`,
/// log-corrected 1/2 for `d = 2`, `(alpha+1)/(2 alpha+d)` for `d >= 3`
/// (1/2 in the limit `alpha = inf`).
pub fn theoretical_transfer_exponent(d: usize, alpha: f64) -> RateDescriptor {
    match d {
        0 | 1 => RateDescriptor {
            exponent: 0.5,
            log_corrected: false,
        },
        2 => RateDescriptor {
            exponent: 0.5,
            log_corrected: true,
        },
        _ => RateDescriptor {
            exponent: if alpha.is_infinite() {
                0.5
            } else {
                (alpha + 1.0) / (2.0 * alpha + d as f64)
            },
            log_corrected: false,
        },
    }
}

/// Stone exponent `p/(2p+d)`.
pub fn theoretical_direct_exponent(d: usize, p: f64) -> f64 {
    if p.is_infinite() {
        0.5
    } else {
        p / (2.0 * p + d as f64)
    }
}

/// Transfer has the better rate iff `alpha + 1 > p`.
pub fn advantage_condition(alpha: f64, p: f64) -> bool {
    alpha + 1.0 > p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` with only two points.
    pub stderr: Option<f64>,
    pub r_squared: f64,
}

/// Least squares of `ln error` on `ln m`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(invalid("slope needs at least 2 points"));
    }
    if let Some((m, e)) = points.iter().find(|(m, e)| !(*e > 0.0) || !(*m > 0.0)) {
        return Err(invalid(format!("log-log fit needs positive m and error, got ({m}, {e})")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(m, _)| m.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("log-log fit needs distinct m"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let sst: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    let stderr = (points.len() > 2).then(|| (sse / (n - 2.0) / sxx).sqrt());
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        r_squared,
    })
}

/// Which transfer estimator the harness scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    #[default]
    Fitted,
    /// Ground-truth maps substituted; a diagnostic floor.
    GroundTruth,
}

/// Per-`m` solver settings for the transfer fit and the direct baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSettings {
    /// Sinkhorn `eps = epsilon_rel * m^(-epsilon_decay) * mean cost`.
    pub epsilon_rel: f64,
    pub epsilon_decay: f64,
    /// Kernel-extension bandwidth `scale * sd * m^(-exponent)`.
    pub bandwidth_scale: f64,
    /// `None` selects `1/(4+d)`.
    pub bandwidth_exponent: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Direct-baseline bandwidth constant.
    pub c_bw: f64,
    /// Source points in the input-map Sinkhorn problem; `None` matches `m`.
    pub ot_source_points: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            epsilon_rel: DEFAULT_EPSILON_REL,
            epsilon_decay: 0.0,
            bandwidth_scale: 1.06,
            bandwidth_exponent: None,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            c_bw: DEFAULT_C_BW,
            ot_source_points: None,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_rel > 0.0 && self.epsilon_rel.is_finite()) {
            return Err(invalid(format!("epsilon_rel must be positive, got {}", self.epsilon_rel)));
        }
        if !self.epsilon_decay.is_finite() || self.epsilon_decay < 0.0 {
            return Err(invalid("epsilon_decay must be finite and nonnegative"));
        }
        if !(self.bandwidth_scale > 0.0 && self.bandwidth_scale.is_finite()) {
            return Err(invalid("bandwidth_scale must be positive"));
        }
        if let Some(e) = self.bandwidth_exponent {
            if !e.is_finite() || e < 0.0 {
                return Err(invalid("bandwidth_exponent must be finite and nonnegative"));
            }
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(invalid("sinkhorn tol and max_iter must be positive"));
        }
        if !(self.c_bw > 0.0 && self.c_bw.is_finite()) {
            return Err(invalid("c_bw must be positive"));
        }
        if self.ot_source_points == Some(0) {
            return Err(invalid("ot_source_points must be at least 1"));
        }
        Ok(())
    }

    /// Transfer-fit options for a target sample of size `m`.
    pub fn transfer_options(&self, target_inputs: &SampleSet) -> TransferOptions {
        let m = target_inputs.len();
        let d = target_inputs.dim() as f64;
        let exponent = self.bandwidth_exponent.unwrap_or(1.0 / (4.0 + d));
        TransferOptions {
            entropic: EntropicOptions {
                epsilon: Epsilon::RelativeToMeanCost(self.epsilon_rel * (m as f64).powf(-self.epsilon_decay)),
                bandwidth: Some(bandwidth_rule(target_inputs, self.bandwidth_scale, exponent)),
                tol: self.tol,
                max_iter: self.max_iter,
            },
            input_map_source_points: Some(self.ot_source_points.unwrap_or(m)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateConfig {
    pub task: GaussianTaskSpec,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub m_source: usize,
    pub n_eval: usize,
    /// Smoothness assumed by the direct baseline.
    pub p: f64,
    pub seed: Seed,
    pub solver: SolverSettings,
    pub mode: TransferMode,
    pub execution: Execution,
}

impl RateConfig {
    pub fn new(task: GaussianTaskSpec, m_grid: Vec<usize>, seed: Seed) -> Self {
        RateConfig {
            task,
            m_grid,
            trials: 20,
            m_source: 20_000,
            n_eval: 20_000,
            p: 1.0,
            seed,
            solver: SolverSettings::default(),
            mode: TransferMode::Fitted,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        if self.m_grid.len() < 2 {
            return Err(invalid("slope needs >= 2 points: m_grid must have at least 2 entries"));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("m_grid must be strictly increasing"));
        }
        if self.m_grid[0] < crate::regression::MIN_TRAIN {
            return Err(invalid(format!(
                "smallest m must be at least {} for the direct baseline",
                crate::regression::MIN_TRAIN
            )));
        }
        if self.trials == 0 || self.m_source == 0 || self.n_eval == 0 {
            return Err(invalid("trials, m_source and n_eval must be positive"));
        }
        if !(1.0..=4.0).contains(&self.p) {
            return Err(invalid(format!("p = {} outside [1, 4]", self.p)));
        }
        self.solver.validate()
    }

    fn trial_seed(&self, m: usize, trial: usize) -> Seed {
        self.seed.child(m as u64).child(trial as u64)
    }

    fn jobs(&self) -> Vec<(usize, usize)> {
        self.m_grid
            .iter()
            .flat_map(|&m| (0..self.trials).map(move |t| (m, t)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub m: usize,
    pub mean_error_transfer: f64,
    pub sd_transfer: f64,
    pub mean_error_direct: f64,
    pub sd_direct: f64,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResult {
    pub rows: Vec<RateRow>,
    /// `None` when some mean error is numerically zero.
    pub slope_transfer: Option<SlopeFit>,
    pub slope_direct: Option<SlopeFit>,
    pub transfer_degenerate: bool,
    pub direct_degenerate: bool,
    pub theory_transfer: RateDescriptor,
    pub theory_direct: f64,
    /// Per-row, per-trial `(transfer, direct)` errors; `None` for failed trials.
    #[serde(skip)]
    pub trial_errors: Vec<Vec<Option<(f64, f64)>>>,
    pub failures: Vec<String>,
}

struct FittedPair {
    transfer: Box<dyn EvaluableMap>,
    direct: DirectEstimator,
    target: SampleSet,
}

fn fit_pair(config: &RateConfig, truth: &GroundTruth, m: usize, seed: Seed) -> Result<FittedPair> {
    let (source, target) = sample_task(&config.task, m, config.m_source, seed.child(0))?;
    let transfer: Box<dyn EvaluableMap> = match config.mode {
        TransferMode::Fitted => {
            let opts = config.solver.transfer_options(&target.without_responses());
            Box::new(fit_transfer_with(
                truth.source_model.clone(),
                &source.without_responses(),
                &target,
                &opts,
            )?)
        }
        TransferMode::GroundTruth => Box::new(truth.target_regressor.clone()),
    };
    let direct = fit_direct(&target, config.p, config.solver.c_bw)?;
    Ok(FittedPair {
        transfer,
        direct,
        target,
    })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn check_failures(m: usize, failed: usize, trials: usize) -> Result<()> {
    if 2 * failed > trials {
        return Err(Error::Invalidated(format!(
            "{failed} of {trials} trials failed at m = {m}"
        )));
    }
    Ok(())
}

/// Monte-Carlo L2 errors of transfer and direct estimators over `m_grid`.
pub fn run_rate_experiment(config: &RateConfig) -> Result<RateResult> {
    config.validate()?;
    let truth = build_ground_truth(&config.task)?;
    let jobs = config.jobs();
    let outcomes = map_ordered(&jobs, config.execution, |&(m, trial)| -> Result<(f64, f64)> {
        let seed = config.trial_seed(m, trial);
        let pair = fit_pair(config, &truth, m, seed)?;
        let eval = sample_target_inputs(&config.task, config.n_eval, seed.child(1))?;
        Ok((
            l2_error(&pair.transfer, &truth.target_regressor, &eval),
            l2_error(&pair.direct, &truth.target_regressor, &eval),
        ))
    });

    let mut rows = Vec::with_capacity(config.m_grid.len());
    let mut trial_errors = Vec::with_capacity(config.m_grid.len());
    let mut failures = Vec::new();
    for (r, &m) in config.m_grid.iter().enumerate() {
        let chunk = &outcomes[r * config.trials..(r + 1) * config.trials];
        let mut per_trial = Vec::with_capacity(config.trials);
        for (t, o) in chunk.iter().enumerate() {
            match o {
                Ok(e) => per_trial.push(Some(*e)),
                Err(e) => {
                    failures.push(format!("m={m} trial={t}: {e}"));
                    per_trial.push(None);
                }
            }
        }
        let ok: Vec<(f64, f64)> = per_trial.iter().flatten().copied().collect();
        let failed = config.trials - ok.len();
        check_failures(m, failed, config.trials)?;
        let (mt, st) = mean_sd(&ok.iter().map(|e| e.0).collect::<Vec<_>>());
        let (md, sd) = mean_sd(&ok.iter().map(|e| e.1).collect::<Vec<_>>());
        rows.push(RateRow {
            m,
            mean_error_transfer: mt,
            sd_transfer: st,
            mean_error_direct: md,
            sd_direct: sd,
            failed_trials: failed,
        });
        trial_errors.push(per_trial);
    }

    let slope = |f: fn(&RateRow) -> f64| -> Result<Option<SlopeFit>> {
        if rows.iter().any(|r| f(r) < DEGENERATE_ERROR) {
            return Ok(None);
        }
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.m as f64, f(r))).collect();
        fit_loglog_slope(&pts).map(Some)
    };
    let slope_transfer = slope(|r| r.mean_error_transfer)?;
    let slope_direct = slope(|r| r.mean_error_direct)?;
    let d = config.task.dim();
    Ok(RateResult {
        transfer_degenerate: slope_transfer.is_none(),
        direct_degenerate: slope_direct.is_none(),
        slope_transfer,
        slope_direct,
        theory_transfer: theoretical_transfer_exponent(d, config.task.alpha()),
        theory_direct: theoretical_direct_exponent(d, config.p),
        rows,
        trial_errors,
        failures,
    })
}

impl RateResult {
    /// `m,mean_err_transfer,sd_transfer,mean_err_direct,sd_direct` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["m", "mean_err_transfer", "sd_transfer", "mean_err_direct", "sd_direct"])?;
        for r in &self.rows {
            wtr.write_record([
                r.m.to_string(),
                crate::sample::fmt_f64(r.mean_error_transfer),
                crate::sample::fmt_f64(r.sd_transfer),
                crate::sample::fmt_f64(r.mean_error_direct),
                crate::sample::fmt_f64(r.sd_direct),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// AUROC, accuracy, precision and sensitivity; `None` where undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MetricSet {
    pub auroc: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
}

impl MetricSet {
    pub fn as_array(&self) -> [Option<f64>; 4] {
        [self.auroc, self.accuracy, self.precision, self.sensitivity]
    }

    fn from_array(a: [Option<f64>; 4]) -> Self {
        MetricSet {
            auroc: a[0],
            accuracy: a[1],
            precision: a[2],
            sensitivity: a[3],
        }
    }
}

pub const METRIC_NAMES: [&str; 4] = ["auroc", "accuracy", "precision", "sensitivity"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationRow {
    pub m: usize,
    /// `100 * m / max(m_grid)`.
    pub pct: f64,
    pub transfer: MetricSet,
    pub direct: MetricSet,
    /// Percent improvement of transfer over direct, per metric.
    pub improvement: MetricSet,
    pub degenerate_trials: usize,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationResult {
    pub threshold: f64,
    pub rows: Vec<ClassificationRow>,
    /// Per-row, per-trial metrics; `None` for failed or degenerate trials.
    #[serde(skip)]
    pub trial_metrics: Vec<Vec<Option<(MetricSet, MetricSet)>>>,
    pub degenerate_trials: usize,
    pub failures: Vec<String>,
}

/// Scores above the training-prevalence quantile of the training scores are positive.
fn prevalence_threshold(train_scores: &[f64], positives: usize) -> f64 {
    let mut s = train_scores.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() - positives - 1]
}

fn method_metrics(
    model: &dyn EvaluableMap,
    train: &SampleSet,
    train_positives: usize,
    eval: &SampleSet,
    eval_labels: &[bool],
) -> Result<MetricSet> {
    let train_scores: Vec<f64> = train.points().map(|p| model.eval_scalar(p)).collect();
    let cut = prevalence_threshold(&train_scores, train_positives);
    let scores: Vec<f64> = eval.points().map(|p| model.eval_scalar(p)).collect();
    let counts = ConfusionCounts::from_scores(&scores, eval_labels, cut);
    let scored = ScoredLabels::new(scores, eval_labels.to_vec())?;
    Ok(MetricSet {
        auroc: Some(auroc(&scored)?),
        accuracy: Some(accuracy(&counts)?),
        precision: precision(&counts),
        sensitivity: sensitivity(&counts),
    })
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Binary analogue of the data-scarcity sweep: labels are
/// `f_T(x) + noise > threshold`, scores are the two regressors' predictions.
pub fn run_classification_experiment(config: &RateConfig, threshold: f64) -> Result<ClassificationResult> {
    config.validate()?;
    if !threshold.is_finite() {
        return Err(invalid("threshold must be finite"));
    }
    let truth = build_ground_truth(&config.task)?;
    let jobs = config.jobs();
    // Ok(None) marks a degenerate (single-class) trial
    let outcomes = map_ordered(&jobs, config.execution, |&(m, trial)| -> Result<Option<(MetricSet, MetricSet)>> {
        let seed = config.trial_seed(m, trial);
        let pair = fit_pair(config, &truth, m, seed)?;
        let train_labels: Vec<bool> = pair
            .target
            .responses()
            .expect("sampled targets carry responses")
            .iter()
            .map(|y| *y > threshold)
            .collect();
        let positives = train_labels.iter().filter(|&&l| l).count();

        let eval = sample_target_inputs(&config.task, config.n_eval, seed.child(1))?;
        let mut noise_rng = seed.child(2).rng();
        let eval_labels: Vec<bool> = eval
            .points()
            .map(|p| {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut noise_rng);
                truth.target_regressor.eval_scalar(p) + config.task.noise_sd * z > threshold
            })
            .collect();
        let eval_pos = eval_labels.iter().filter(|&&l| l).count();
        if positives == 0 || positives == train_labels.len() || eval_pos == 0 || eval_pos == eval_labels.len() {
            return Ok(None);
        }
        let train_x = pair.target.without_responses();
        let t = method_metrics(pair.transfer.as_ref(), &train_x, positives, &eval, &eval_labels)?;
        let d = method_metrics(&pair.direct, &train_x, positives, &eval, &eval_labels)?;
        Ok(Some((t, d)))
    });

    let max_m = *config.m_grid.last().expect("validated grid") as f64;
    let mut rows = Vec::new();
    let mut trial_metrics = Vec::new();
    let mut failures = Vec::new();
    let mut degenerate_total = 0;
    for (r, &m) in config.m_grid.iter().enumerate() {
        let chunk = &outcomes[r * config.trials..(r + 1) * config.trials];
        let mut per_trial = Vec::with_capacity(config.trials);
        let (mut failed, mut degenerate) = (0, 0);
        for (t, o) in chunk.iter().enumerate() {
            match o {
                Ok(Some(pair)) => per_trial.push(Some(*pair)),
                Ok(None) => {
                    degenerate += 1;
                    per_trial.push(None);
                }
                Err(e) => {
                    failed += 1;
                    failures.push(format!("m={m} trial={t}: {e}"));
                    per_trial.push(None);
                }
            }
        }
        check_failures(m, failed, config.trials)?;
        degenerate_total += degenerate;
        let ok: Vec<&(MetricSet, MetricSet)> = per_trial.iter().flatten().collect();
        let avg = |pick: fn(&(MetricSet, MetricSet)) -> MetricSet| {
            let mut out = [None; 4];
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = mean_defined(ok.iter().map(|p| pick(p).as_array()[k]));
            }
            MetricSet::from_array(out)
        };
        let transfer = avg(|p| p.0);
        let direct = avg(|p| p.1);
        let mut imp = [None; 4];
        for (k, slot) in imp.iter_mut().enumerate() {
            *slot = match (transfer.as_array()[k], direct.as_array()[k]) {
                (Some(a), Some(b)) => relative_improvement(a, b),
                _ => None,
            };
        }
        rows.push(ClassificationRow {
            m,
            pct: 100.0 * m as f64 / max_m,
            transfer,
            direct,
            improvement: MetricSet::from_array(imp),
            degenerate_trials: degenerate,
            failed_trials: failed,
        });
        trial_metrics.push(per_trial);
    }
    Ok(ClassificationResult {
        threshold,
        rows,
        trial_metrics,
        degenerate_trials: degenerate_total,
        failures,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(crate::sample::fmt_f64).unwrap_or_else(|| "null".into())
}

impl ClassificationResult {
    /// One row per `m`; columns `metric_method` for both methods.
    pub fn write_metrics_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["pct".to_string(), "m".to_string()];
        for name in METRIC_NAMES {
            header.push(format!("{name}_direct"));
            header.push(format!("{name}_transfer"));
        }
        header.push("degenerate_trials".into());
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![crate::sample::fmt_f64(r.pct), r.m.to_string()];
            for (d, t) in r.direct.as_array().iter().zip(r.transfer.as_array()) {
                rec.push(fmt_opt(*d));
                rec.push(fmt_opt(t));
            }
            rec.push(r.degenerate_trials.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Percent improvement per metric and `m`.
    pub fn write_improvement_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["pct".to_string(), "m".to_string()];
        header.extend(METRIC_NAMES.iter().map(|n| format!("delta_{n}")));
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![crate::sample::fmt_f64(r.pct), r.m.to_string()];
            rec.extend(r.improvement.as_array().iter().map(|v| fmt_opt(*v)));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
