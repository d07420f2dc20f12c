//! Gaussian transfer tasks with closed-form ground truth.
//!
//! Inputs are Gaussian on both sides, so the input transport map is the
//! affine Gaussian Monge map. The source model is affine with a recorded
//! gradient band, and the output map is a monotone piecewise-linear map
//! whose kinks set the roughness of the target regressor.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::linalg::{check_spd, cholesky_lower, sym_inv_sqrt, sym_sqrt};
use crate::map::{AffineMap, EvaluableMap};
use crate::ot1d::MonotoneMap1D;
use crate::pipeline::TransferEstimator;
use crate::sample::SampleSet;
use crate::seed::{Rng, Seed};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTaskSpec {
    pub target_mean: DVector<f64>,
    pub target_cov: DMatrix<f64>,
    pub source_mean: DVector<f64>,
    pub source_cov: DMatrix<f64>,
    /// Source model `f_S(x) = u.x + b`.
    pub source_u: Vec<f64>,
    pub source_b: f64,
    /// `(c, C)` with `c <= |u| <= C`.
    pub grad_bounds: (f64, f64),
    pub output_map: MonotoneMap1D,
    /// Recorded Lipschitz constant of `output_map`.
    pub output_lipschitz: f64,
    pub noise_sd: f64,
}

impl GaussianTaskSpec {
    pub fn dim(&self) -> usize {
        self.target_mean.len()
    }

    /// Hölder smoothness of the input densities (Gaussian: infinite).
    pub fn alpha(&self) -> f64 {
        f64::INFINITY
    }

    /// Smoothness of the target regressor: 1 with any kink, infinite otherwise.
    pub fn regressor_smoothness(&self) -> f64 {
        let kx = self.output_map.knots_x();
        let ky = self.output_map.knots_y();
        let slopes: Vec<f64> = kx
            .windows(2)
            .zip(ky.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .collect();
        let kinked = slopes
            .windows(2)
            .any(|s| (s[1] - s[0]).abs() > 1e-12 * (1.0 + s[0].abs()));
        if kinked {
            1.0
        } else {
            f64::INFINITY
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(invalid("task dimension must be at least 1"));
        }
        for (what, len) in [
            ("source_mean", self.source_mean.len()),
            ("source_u", self.source_u.len()),
            ("target_cov", self.target_cov.nrows()),
            ("source_cov", self.source_cov.nrows()),
        ] {
            if len != d {
                return Err(invalid(format!("{what} has dimension {len}, task has {d}")));
            }
        }
        check_spd(&self.target_cov, "target_cov")?;
        check_spd(&self.source_cov, "source_cov")?;
        let (c, big_c) = self.grad_bounds;
        if !(c > 0.0 && c <= big_c && big_c.is_finite()) {
            return Err(invalid(format!("gradient bounds ({c}, {big_c}) need 0 < c <= C")));
        }
        let norm = self.source_u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(c <= norm && norm <= big_c) {
            return Err(invalid(format!(
                "|u| = {norm} outside the recorded band [{c}, {big_c}]"
            )));
        }
        let lip = self.output_map.lipschitz();
        if !self.output_lipschitz.is_finite() || (lip - self.output_lipschitz).abs() > 1e-12 * (1.0 + lip) {
            return Err(invalid(format!(
                "output map has Lipschitz constant {lip}, spec records {}",
                self.output_lipschitz
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(invalid("noise_sd must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Same standard Gaussian on both sides, `u = (1/sqrt d, ...)`,
    /// identity output map, no noise.
    pub fn identity(d: usize) -> Self {
        let output_map = MonotoneMap1D::identity();
        GaussianTaskSpec {
            target_mean: DVector::zeros(d),
            target_cov: DMatrix::identity(d, d),
            source_mean: DVector::zeros(d),
            source_cov: DMatrix::identity(d, d),
            source_u: vec![1.0 / (d as f64).sqrt(); d],
            source_b: 0.0,
            grad_bounds: (0.5, 2.0),
            output_lipschitz: output_map.lipschitz(),
            output_map,
            noise_sd: 0.0,
        }
    }

    /// Kinked task with isotropic target inputs; see [`Self::kinked_scaled`].
    pub fn kinked(d: usize, noise_sd: f64) -> Self {
        Self::kinked_scaled(d, 1.0, noise_sd)
    }

    /// Centred Gaussian target with standard deviation 1 on the first axis
    /// and `minor_sd` on the others; the source is shifted, rescaled per axis
    /// and correlated between neighbouring axes. The source model weights the
    /// first axis most, is centred so the kink of the output map (slopes 1
    /// then 3 around 0) falls in the bulk of the source outputs.
    pub fn kinked_scaled(d: usize, minor_sd: f64, noise_sd: f64) -> Self {
        let t_sd: Vec<f64> = (0..d).map(|k| if k == 0 { 1.0 } else { minor_sd }).collect();
        let s_sd: Vec<f64> = (0..d).map(|k| t_sd[k] * [1.3, 0.8, 1.2, 0.9][k % 4]).collect();
        let target_cov = DMatrix::from_fn(d, d, |i, j| if i == j { t_sd[i] * t_sd[i] } else { 0.0 });
        let source_cov = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                s_sd[i] * s_sd[i]
            } else if i.abs_diff(j) == 1 {
                0.2 * s_sd[i] * s_sd[j]
            } else {
                0.0
            }
        });
        let source_mean = DVector::from_fn(d, |k, _| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            0.5 * sign * t_sd[k]
        });
        let u: Vec<f64> = (0..d).map(|k| [1.0, 0.5, -0.5, 0.25][k % 4]).collect();
        let b = -u.iter().zip(source_mean.iter()).map(|(a, m)| a * m).sum::<f64>();
        let output_map = MonotoneMap1D::new(vec![-1.0, 0.0, 1.0], vec![-1.0, 0.0, 3.0]).expect("static knots");
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        GaussianTaskSpec {
            target_mean: DVector::zeros(d),
            target_cov,
            source_mean,
            source_cov,
            source_u: u,
            source_b: b,
            grad_bounds: (0.5 * norm, 2.0 * norm),
            output_lipschitz: output_map.lipschitz(),
            output_map,
            noise_sd,
        }
    }
}

/// Affine Monge map between `N(m1, s1)` and `N(m2, s2)`:
/// `x -> m2 + A (x - m1)`, `A = s1^-1/2 (s1^1/2 s2 s1^1/2)^1/2 s1^-1/2`.
pub fn gaussian_monge_map(
    m1: &DVector<f64>,
    s1: &DMatrix<f64>,
    m2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> Result<AffineMap> {
    check_spd(s1, "S1")?;
    check_spd(s2, "S2")?;
    let d = s1.nrows();
    if s2.nrows() != d || m1.len() != d || m2.len() != d {
        return Err(invalid("gaussian_monge_map: dimension mismatch"));
    }
    let r = sym_sqrt(s1);
    let r_inv = sym_inv_sqrt(s1);
    let middle = sym_sqrt(&(&r * s2 * &r));
    let a = &r_inv * middle * &r_inv;
    let a = (&a + a.transpose()) * 0.5;
    AffineMap::new(a, m1.clone(), m2.clone())
}

/// `output_map ∘ source_model ∘ input_map` with affine inner maps.
pub type TargetRegressor = TransferEstimator<AffineMap, AffineMap>;

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub input_map: AffineMap,
    pub source_model: AffineMap,
    pub output_map: MonotoneMap1D,
    pub target_regressor: TargetRegressor,
}

pub fn build_ground_truth(spec: &GaussianTaskSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let input_map = gaussian_monge_map(
        &spec.target_mean,
        &spec.target_cov,
        &spec.source_mean,
        &spec.source_cov,
    )?;
    let source_model = AffineMap::linear_form(&spec.source_u, spec.source_b);
    let target_regressor =
        TransferEstimator::from_parts(input_map.clone(), source_model.clone(), spec.output_map.clone())?;
    Ok(GroundTruth {
        input_map,
        source_model,
        output_map: spec.output_map.clone(),
        target_regressor,
    })
}

fn gaussian_rows(mean: &DVector<f64>, chol: &DMatrix<f64>, n: usize, rng: &mut Rng) -> Vec<f64> {
    let d = mean.len();
    let mut out = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
        for r in 0..d {
            let mut acc = mean[r];
            for c in 0..=r {
                acc += chol[(r, c)] * z[c];
            }
            out.push(acc);
        }
    }
    out
}

/// `n` i.i.d. draws from `N(mean, cov)`.
pub fn sample_gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>, n: usize, seed: Seed) -> Result<SampleSet> {
    let chol = cholesky_lower(cov)?;
    let mut rng = seed.rng();
    SampleSet::from_flat(mean.len(), gaussian_rows(mean, &chol, n, &mut rng), None)
}

/// Fresh target inputs (no responses), e.g. for L2 quadrature.
pub fn sample_target_inputs(spec: &GaussianTaskSpec, n: usize, seed: Seed) -> Result<SampleSet> {
    sample_gaussian(&spec.target_mean, &spec.target_cov, n, seed)
}

/// Labelled source and target samples. Target responses carry
/// `noise_sd` Gaussian noise; source responses are the exact source model.
pub fn sample_task(
    spec: &GaussianTaskSpec,
    m_target: usize,
    m_source: usize,
    seed: Seed,
) -> Result<(SampleSet, SampleSet)> {
    if m_target == 0 || m_source == 0 {
        return Err(invalid("sample sizes must be at least 1"));
    }
    let truth = build_ground_truth(spec)?;
    let source_x = sample_gaussian(&spec.source_mean, &spec.source_cov, m_source, seed.child(1))?;
    let ys: Vec<f64> = source_x.points().map(|p| truth.source_model.eval_scalar(p)).collect();
    let source = source_x.with_responses(ys)?;

    let target_x = sample_gaussian(&spec.target_mean, &spec.target_cov, m_target, seed.child(2))?;
    let mut noise_rng = seed.child(3).rng();
    let yt: Vec<f64> = target_x
        .points()
        .map(|p| {
            let clean = truth.target_regressor.eval_scalar(p);
            if spec.noise_sd > 0.0 {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                clean + spec.noise_sd * z
            } else {
                clean
            }
        })
        .collect();
    let target = target_x.with_responses(yt)?;
    Ok((source, target))
}

/// I.i.d. draws from a Gaussian mixture.
pub fn mixture_sampler(
    weights: &[f64],
    means: &[DVector<f64>],
    covs: &[DMatrix<f64>],
    m: usize,
    seed: Seed,
) -> Result<SampleSet> {
    if weights.is_empty() || weights.len() != means.len() || weights.len() != covs.len() {
        return Err(invalid(format!(
            "mixture has {} weights, {} means, {} covariances",
            weights.len(),
            means.len(),
            covs.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid("mixture weights must be a probability vector"));
    }
    let d = means[0].len();
    if means.iter().any(|mu| mu.len() != d) || covs.iter().any(|c| c.nrows() != d) {
        return Err(invalid("mixture components differ in dimension"));
    }
    let chols = covs
        .iter()
        .map(|c| {
            check_spd(c, "component covariance")?;
            cholesky_lower(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let pick = WeightedIndex::new(weights).map_err(|e| invalid(e.to_string()))?;
    let mut rng = seed.rng();
    let mut data = Vec::with_capacity(m * d);
    for _ in 0..m {
        let k = pick.sample(&mut rng);
        data.extend(gaussian_rows(&means[k], &chols[k], 1, &mut rng));
    }
    SampleSet::from_flat(d, data, None)
}

/// Component index of every draw, using the same stream as [`mixture_sampler`].
pub fn mixture_components(weights: &[f64], d: usize, m: usize, seed: Seed) -> Result<Vec<usize>> {
    let pick = WeightedIndex::new(weights).map_err(|e| invalid(e.to_string()))?;
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let k = pick.sample(&mut rng);
        for _ in 0..d {
            let _: f64 = StandardNormal.sample(&mut rng);
        }
        out.push(k);
    }
    Ok(out)
}
