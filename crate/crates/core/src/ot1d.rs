//! Exact empirical optimal transport on the line.
//!
//! For quadratic cost the optimal map between two one-dimensional laws is
//! the monotone rearrangement `Q_tgt ∘ F_src`. Its empirical version pairs
//! each sorted source value with the target quantile at the same rank,
//! giving a nondecreasing piecewise-linear map.

use std::io::{Read, Write};

use crate::error::{invalid, Result};
use crate::map::EvaluableMap;
use crate::sample::{fmt_f64, SampleSet};

/// Nondecreasing piecewise-linear map with boundary-slope extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneMap1D {
    knots_x: Vec<f64>,
    knots_y: Vec<f64>,
}

impl MonotoneMap1D {
    /// `knots_x` strictly increasing, `knots_y` nondecreasing, equal nonzero length.
    pub fn new(knots_x: Vec<f64>, knots_y: Vec<f64>) -> Result<Self> {
        if knots_x.is_empty() || knots_x.len() != knots_y.len() {
            return Err(invalid(format!(
                "knot lists of lengths {} and {}",
                knots_x.len(),
                knots_y.len()
            )));
        }
        if knots_x.iter().chain(&knots_y).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite knot"));
        }
        if knots_x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("knots_x must be strictly increasing"));
        }
        if knots_y.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("knots_y must be nondecreasing"));
        }
        Ok(MonotoneMap1D { knots_x, knots_y })
    }

    pub fn identity() -> Self {
        MonotoneMap1D {
            knots_x: vec![0.0, 1.0],
            knots_y: vec![0.0, 1.0],
        }
    }

    pub fn constant(value: f64) -> Self {
        MonotoneMap1D {
            knots_x: vec![0.0],
            knots_y: vec![value],
        }
    }

    pub fn knots_x(&self) -> &[f64] {
        &self.knots_x
    }

    pub fn knots_y(&self) -> &[f64] {
        &self.knots_y
    }

    pub fn len(&self) -> usize {
        self.knots_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots_x.is_empty()
    }

    fn segment_slope(&self, i: usize) -> f64 {
        let dx = self.knots_x[i + 1] - self.knots_x[i];
        ((self.knots_y[i + 1] - self.knots_y[i]) / dx).max(0.0)
    }

    /// Slopes used left and right of the knot range.
    pub fn extrapolation_slopes(&self) -> (f64, f64) {
        let k = self.len();
        if k < 2 {
            (0.0, 0.0)
        } else {
            (self.segment_slope(0), self.segment_slope(k - 2))
        }
    }

    /// Largest slope over all segments, extrapolation included.
    pub fn lipschitz(&self) -> f64 {
        (0..self.len().saturating_sub(1))
            .map(|i| self.segment_slope(i))
            .fold(0.0, f64::max)
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval1d(self, x)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["knot_x", "knot_y"])?;
        for (x, y) in self.knots_x.iter().zip(&self.knots_y) {
            wtr.write_record([fmt_f64(*x), fmt_f64(*y)])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| invalid(format!("bad knot row {rec:?}")))
            };
            xs.push(parse(0)?);
            ys.push(parse(1)?);
        }
        Self::new(xs, ys)
    }
}

/// Piecewise-linear evaluation with boundary-slope extrapolation.
pub fn eval1d(map: &MonotoneMap1D, x: f64) -> f64 {
    let (kx, ky) = (&map.knots_x, &map.knots_y);
    let k = kx.len();
    if k == 1 {
        return ky[0];
    }
    if x <= kx[0] {
        let (left, _) = map.extrapolation_slopes();
        return ky[0] + left * (x - kx[0]);
    }
    if x >= kx[k - 1] {
        let (_, right) = map.extrapolation_slopes();
        return ky[k - 1] + right * (x - kx[k - 1]);
    }
    // first knot strictly greater than x; 1 <= hi <= k-1
    let hi = kx.partition_point(|&v| v <= x);
    let lo = hi - 1;
    let t = (x - kx[lo]) / (kx[hi] - kx[lo]);
    ky[lo] + t * (ky[hi] - ky[lo])
}

impl EvaluableMap for MonotoneMap1D {
    fn dim_in(&self) -> usize {
        1
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = eval1d(self, x[0]);
    }
}

fn sorted_values(set: &SampleSet, role: &str) -> Result<Vec<f64>> {
    if set.dim() != 1 {
        return Err(invalid(format!(
            "{role} sample must be one-dimensional, got dimension {}",
            set.dim()
        )));
    }
    let mut v = set.flat().to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Target quantile at the rank of the `i`-th of `n_src` sorted source values.
///
/// Rank levels are `(i + 1/2) / n`; the position in the sorted target is kept
/// as an exact rational so equal-size samples match index for index.
fn matched_quantile(tgt: &[f64], i: usize, n_src: usize) -> f64 {
    let n_t = tgt.len() as i128;
    let num = (2 * i as i128 + 1) * n_t - n_src as i128;
    let den = 2 * n_src as i128;
    if num <= 0 {
        return tgt[0];
    }
    let lo = (num / den) as usize;
    let rem = num % den;
    if lo >= tgt.len() - 1 {
        return tgt[tgt.len() - 1];
    }
    if rem == 0 {
        return tgt[lo];
    }
    let t = rem as f64 / den as f64;
    tgt[lo] + t * (tgt[lo + 1] - tgt[lo])
}

/// Empirical monotone (quantile-coupling) map pushing `src` onto `tgt`.
pub fn fit_quantile_map(src: &SampleSet, tgt: &SampleSet) -> Result<MonotoneMap1D> {
    let s = sorted_values(src, "source")?;
    let t = sorted_values(tgt, "target")?;
    let n = s.len();
    let mut knots_x: Vec<f64> = Vec::new();
    let mut knots_y: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        let mut acc = 0.0;
        while j < n && s[j] == s[i] {
            acc += matched_quantile(&t, j, n);
            j += 1;
        }
        knots_x.push(s[i]);
        knots_y.push(acc / (j - i) as f64);
        i = j;
    }
    // averaging can introduce last-ulp dips between tied groups
    for k in 1..knots_y.len() {
        if knots_y[k] < knots_y[k - 1] {
            knots_y[k] = knots_y[k - 1];
        }
    }
    MonotoneMap1D::new(knots_x, knots_y)
}
