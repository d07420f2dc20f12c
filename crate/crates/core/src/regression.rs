//! Direct-learning baselines: Nadaraya–Watson and local-polynomial
//! regression with Gaussian weights and Stone-scaled bandwidths
//! `c_bw * n^(-1/(2p+d))` per coordinate standard deviation.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::map::EvaluableMap;
use crate::sample::SampleSet;

/// Smallest-to-largest singular value ratio below which the local design
/// is treated as rank-deficient.
pub const RANK_TOL: f64 = 1e-10;
pub const DEFAULT_C_BW: f64 = 1.0;
pub const MIN_TRAIN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectKind {
    NadarayaWatson,
    LocalPolynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectEstimator {
    kind: DirectKind,
    degree: usize,
    bandwidth: f64,
    /// Per-coordinate bandwidths `bandwidth * sd_k`.
    widths: Vec<f64>,
    train: SampleSet,
    /// Multi-indices of the local polynomial basis, constant first.
    basis: Vec<Vec<usize>>,
}

impl DirectEstimator {
    pub fn kind(&self) -> DirectKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Dimensionless bandwidth `c_bw * n^(-1/(2p+d))`.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn train(&self) -> &SampleSet {
        &self.train
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        predict_direct(self, x)
    }
}

impl EvaluableMap for DirectEstimator {
    fn dim_in(&self) -> usize {
        self.train.dim()
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = predict_direct(self, x);
    }
}

fn monomials(d: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == d {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(d, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, degree, &mut Vec::new(), &mut out);
    out.sort_by_key(|m| (m.iter().sum::<usize>(), std::cmp::Reverse(m.clone())));
    out
}

/// Fits the degree-`ceil(p) - 1` estimator on `train`.
pub fn fit_direct(train: &SampleSet, p: f64, c_bw: f64) -> Result<DirectEstimator> {
    let n = train.len();
    if n < MIN_TRAIN {
        return Err(invalid(format!("direct fit needs at least {MIN_TRAIN} samples, got {n}")));
    }
    if !(1.0..=4.0).contains(&p) {
        return Err(invalid(format!("smoothness p = {p} outside [1, 4]")));
    }
    if !(c_bw > 0.0 && c_bw.is_finite()) {
        return Err(invalid(format!("bandwidth constant must be positive, got {c_bw}")));
    }
    train.require_responses()?;
    let d = train.dim();
    let degree = p.ceil() as usize - 1;
    let bandwidth = c_bw * (n as f64).powf(-1.0 / (2.0 * p + d as f64));
    let widths = train
        .coord_std()
        .into_iter()
        .map(|sd| bandwidth * if sd > 0.0 { sd } else { 1.0 })
        .collect();
    Ok(DirectEstimator {
        kind: if degree == 0 {
            DirectKind::NadarayaWatson
        } else {
            DirectKind::LocalPolynomial
        },
        degree,
        bandwidth,
        widths,
        train: train.clone(),
        basis: monomials(d, degree),
    })
}

/// Log-weights `-|(x - t_i)/h|^2 / 2` and their maximum.
fn log_weights(est: &DirectEstimator, x: &[f64]) -> (Vec<f64>, f64) {
    let mut max = f64::NEG_INFINITY;
    let lw: Vec<f64> = est
        .train
        .points()
        .map(|t| {
            let s: f64 = t
                .iter()
                .zip(x)
                .zip(&est.widths)
                .map(|((ti, xi), h)| {
                    let z = (ti - xi) / h;
                    z * z
                })
                .sum();
            let v = -0.5 * s;
            max = max.max(v);
            v
        })
        .collect();
    (lw, max)
}

fn nadaraya_watson(y: &[f64], lw: &[f64], max: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (l, yi) in lw.iter().zip(y) {
        let w = (l - max).exp();
        num += w * yi;
        den += w;
    }
    num / den
}

pub fn predict_direct(est: &DirectEstimator, x: &[f64]) -> f64 {
    let y = est.train.responses().expect("fit_direct checks responses");
    let (lw, max) = log_weights(est, x);
    if est.degree == 0 {
        return nadaraya_watson(y, &lw, max);
    }
    local_polynomial(est, x, y, &lw, max).unwrap_or_else(|| nadaraya_watson(y, &lw, max))
}

/// Weighted least squares on the centred, scaled polynomial basis; the
/// intercept is the fit at `x`. `None` when the local design is rank-deficient.
fn local_polynomial(est: &DirectEstimator, x: &[f64], y: &[f64], lw: &[f64], max: f64) -> Option<f64> {
    let q = est.basis.len();
    // rows whose weight is below 1e-30 of the largest cannot move the fit
    let cutoff = max + (1e-30f64).ln();
    let rows: Vec<usize> = (0..lw.len()).filter(|&i| lw[i] >= cutoff).collect();
    if rows.len() < q {
        return None;
    }
    let mut design = DMatrix::zeros(rows.len(), q);
    let mut rhs = DVector::zeros(rows.len());
    let mut z = vec![0.0; x.len()];
    for (r, &i) in rows.iter().enumerate() {
        let sw = (0.5 * (lw[i] - max)).exp();
        for ((zk, (tk, xk)), h) in z.iter_mut().zip(est.train.point(i).iter().zip(x)).zip(&est.widths) {
            *zk = (tk - xk) / h;
        }
        for (c, m) in est.basis.iter().enumerate() {
            let phi: f64 = m.iter().zip(&z).map(|(e, zk)| zk.powi(*e as i32)).product();
            design[(r, c)] = sw * phi;
        }
        rhs[r] = sw * y[i];
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin < RANK_TOL * smax {
        return None;
    }
    let beta = svd.solve(&rhs, 0.0).ok()?;
    let b0 = beta[0];
    b0.is_finite().then_some(b0)
}
