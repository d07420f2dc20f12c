use std::path::{Path, PathBuf};
use std::time::Instant;

use otl_core::map::EvaluableMap;
use otl_core::ot1d::fit_quantile_map;
use otl_core::ot_nd::{
    fit_entropic_map_with, sq_dist, EntropicOptions, Epsilon, DEFAULT_EPSILON_REL, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use otl_core::rates::{run_classification_experiment, run_rate_experiment};
use otl_core::sample::SampleSet;
use otl_core::synthetic::{gaussian_monge_map, sample_gaussian};
use otl_core::Seed;
use serde::Serialize;
use serde_json::json;

use crate::config::{config_hash, read_json, DemoConfig, SweepConfig};
use crate::CliError;

const DEFAULT_OUT: &str = "otl-out";

/// Files are rendered in memory and written together at the end.
struct Outputs {
    dir: PathBuf,
    provenance: String,
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: PathBuf, seed: u64, hash: &str) -> Self {
        Outputs {
            dir,
            provenance: format!("# otl seed={seed} config_hash={hash}\n"),
            files: Vec::new(),
        }
    }

    /// CSV with the provenance comment as its first line.
    fn csv(&mut self, name: &'static str, write: impl FnOnce(&mut Vec<u8>) -> otl_core::Result<()>) -> Result<(), CliError> {
        let mut buf = self.provenance.clone().into_bytes();
        write(&mut buf)?;
        self.files.push((name, buf));
        Ok(())
    }

    fn json(&mut self, name: &'static str, value: &serde_json::Value) {
        let mut text = serde_json::to_string_pretty(value).expect("json value serialises");
        text.push('\n');
        self.files.push((name, text.into_bytes()));
    }

    fn commit(self) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Config(format!("cannot write to {}: {e}", self.dir.display()));
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        for (name, bytes) in &self.files {
            std::fs::write(self.dir.join(name), bytes).map_err(io)?;
        }
        Ok(())
    }
}

fn out_dir(cli: Option<&Path>, config: &Option<PathBuf>) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| config.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn summary<C: Serialize>(command: &str, seed: u64, hash: &str, started: Instant, config: &C, results: serde_json::Value) -> serde_json::Value {
    json!({
        "command": command,
        "seed": seed,
        "config_hash": hash,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "config": config,
        "results": results,
    })
}

fn load_sweep(path: &Path, seed: Option<u64>) -> Result<SweepConfig, CliError> {
    let mut config: SweepConfig = read_json(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

pub fn rates(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    let started = Instant::now();
    let config = load_sweep(path, seed)?;
    if config.threshold.is_some() {
        return Err(CliError::Config("threshold applies to classify only".into()));
    }
    let rc = config.rate_config()?;
    let hash = config_hash(&config);
    let result = run_rate_experiment(&rc)?;
    for f in &result.failures {
        eprintln!("otl: warning: failed trial {f}");
    }

    let mut files = Outputs::new(out_dir(out, &config.out_dir), config.seed, &hash);
    files.csv("rates.csv", |buf| result.write_csv(buf))?;
    let results = json!({
        "rows": result.rows,
        "slope_transfer": result.slope_transfer,
        "slope_direct": result.slope_direct,
        "transfer_degenerate": result.transfer_degenerate,
        "direct_degenerate": result.direct_degenerate,
        "theory_transfer": result.theory_transfer,
        "theory_direct": result.theory_direct,
        "advantage_condition": otl_core::rates::advantage_condition(rc.task.alpha(), rc.p),
        "failed_trials": result.failures,
    });
    files.json("summary.json", &summary("rates", config.seed, &hash, started, &config, results));
    files.commit()
}

pub fn classify(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    let started = Instant::now();
    let config = load_sweep(path, seed)?;
    let threshold = config
        .threshold
        .ok_or_else(|| CliError::Config("classify needs a threshold".into()))?;
    let rc = config.rate_config()?;
    let hash = config_hash(&config);
    let result = run_classification_experiment(&rc, threshold)?;
    for f in &result.failures {
        eprintln!("otl: warning: failed trial {f}");
    }
    if result.degenerate_trials > 0 {
        eprintln!(
            "otl: warning: {} single-class trials skipped; undefined metrics written as null",
            result.degenerate_trials
        );
    }

    let mut files = Outputs::new(out_dir(out, &config.out_dir), config.seed, &hash);
    files.csv("metrics.csv", |buf| result.write_metrics_csv(buf))?;
    files.csv("improvement.csv", |buf| result.write_improvement_csv(buf))?;
    let results = json!({
        "threshold": threshold,
        "rows": result.rows,
        "warnings": result.degenerate_trials,
        "failed_trials": result.failures,
    });
    files.json("summary.json", &summary("classify", config.seed, &hash, started, &config, results));
    files.commit()
}

#[derive(Debug, Serialize)]
struct Deviation {
    map: &'static str,
    dim: usize,
    grid_points: usize,
    sup_dev: f64,
    l2_dev: f64,
    diameter: f64,
    rel_sup_dev: f64,
    rel_l2_dev: f64,
}

impl Deviation {
    fn new(map: &'static str, dim: usize, gaps: &[f64], diameter: f64) -> Self {
        let sup = gaps.iter().cloned().fold(0.0, f64::max);
        let l2 = (gaps.iter().map(|g| g * g).sum::<f64>() / gaps.len() as f64).sqrt();
        Deviation {
            map,
            dim,
            grid_points: gaps.len(),
            sup_dev: sup,
            l2_dev: l2,
            diameter,
            rel_sup_dev: sup / diameter,
            rel_l2_dev: l2 / diameter,
        }
    }
}

fn diameter(points: &SampleSet) -> f64 {
    let mut best = 0.0_f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.max(sq_dist(points.point(i), points.point(j)));
        }
    }
    best.sqrt()
}

pub fn ot_demo(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    let started = Instant::now();
    let mut config: DemoConfig = read_json(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    let hash = config_hash(&config);
    let (m1, s1, m2, s2) = config.pair.build()?;
    let d = m1.len();
    let root = Seed(config.seed);
    let src = sample_gaussian(&m1, &s1, config.m, root.child(1))?;
    let tgt = sample_gaussian(&m2, &s2, config.m, root.child(2))?;

    let opts = EntropicOptions {
        epsilon: match config.epsilon {
            Some(e) => Epsilon::Absolute(e),
            None => Epsilon::RelativeToMeanCost(config.epsilon_rel.unwrap_or(DEFAULT_EPSILON_REL)),
        },
        bandwidth: config.bandwidth,
        tol: config.tol.unwrap_or(DEFAULT_TOL),
        max_iter: config.max_iter.unwrap_or(DEFAULT_MAX_ITER),
    };
    let map_nd = fit_entropic_map_with(&src, &tgt, &opts)?;
    let map_1d = fit_quantile_map(&src.column(0)?, &tgt.column(0)?)?;
    let truth = gaussian_monge_map(&m1, &s1, &m2, &s2)?;
    let slope_1d = (s2[(0, 0)] / s1[(0, 0)]).sqrt();

    // evaluation grid: fresh draws within Mahalanobis radius 2 of the first law
    let draws = sample_gaussian(&m1, &s1, config.n_grid, root.child(3))?;
    let s1_inv = s1.clone().try_inverse().ok_or_else(|| CliError::Config("source_cov is singular".into()))?;
    let grid: Vec<&[f64]> = draws
        .points()
        .filter(|p| {
            let c = nalgebra::DVector::from_column_slice(p) - &m1;
            (c.transpose() * &s1_inv * &c)[(0, 0)] <= 4.0
        })
        .collect();
    if grid.is_empty() {
        return Err(CliError::Config("no evaluation points inside radius 2; raise n_grid".into()));
    }
    let gaps_nd: Vec<f64> = grid
        .iter()
        .map(|p| sq_dist(&map_nd.eval(p), &truth.eval(p)).sqrt())
        .collect();
    let gaps_1d: Vec<f64> = grid
        .iter()
        .map(|p| (map_1d.eval(p[0]) - (m2[0] + slope_1d * (p[0] - m1[0]))).abs())
        .collect();
    let tgt_first = tgt.column(0)?;
    let range_1d = {
        let v = tgt_first.flat();
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let report = [
        Deviation::new("entropic", d, &gaps_nd, diameter(&tgt)),
        Deviation::new("quantile_1d", 1, &gaps_1d, range_1d),
    ];

    let mut files = Outputs::new(out_dir(out, &config.out_dir), config.seed, &hash);
    files.csv("map_nd.csv", |buf| map_nd.write_csv(buf))?;
    files.csv("map_1d.csv", |buf| map_1d.write_csv(buf))?;
    files.csv("report.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for r in &report {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let results = json!({
        "epsilon": map_nd.epsilon(),
        "bandwidth": map_nd.bandwidth(),
        "deviations": report,
    });
    files.json("summary.json", &summary("ot-demo", config.seed, &hash, started, &config, results));
    files.commit()
}
