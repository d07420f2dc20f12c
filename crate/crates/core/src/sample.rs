//! Points and sample sets.
//!
//! A [`SampleSet`] is an `n × d` table of finite inputs, stored row-major,
//! with an optional length-`n` response column.

use std::io::{Read, Write};

use rand::seq::SliceRandom;

use crate::error::{invalid, Result};
use crate::seed::Seed;

/// A finite point in `R^d`, `d >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("point must have at least one coordinate"));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(invalid(format!("non-finite coordinate {c}")));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
    responses: Option<Vec<f64>>,
}

impl SampleSet {
    /// Builds a set from row-major coordinates.
    pub fn from_flat(dim: usize, data: Vec<f64>, responses: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "{} coordinates do not form a nonempty table of dimension {dim}",
                data.len()
            )));
        }
        if let Some(c) = data.iter().find(|c| !c.is_finite()) {
            return Err(invalid(format!("non-finite coordinate {c}")));
        }
        let n = data.len() / dim;
        if let Some(y) = &responses {
            if y.len() != n {
                return Err(invalid(format!("{} responses for {n} points", y.len())));
            }
            if let Some(v) = y.iter().find(|v| !v.is_finite()) {
                return Err(invalid(format!("non-finite response {v}")));
            }
        }
        Ok(SampleSet {
            dim,
            data,
            responses,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], responses: Option<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("rows have differing dimensions"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::from_flat(dim, data, responses)
    }

    pub fn from_points(points: &[Point], responses: Option<Vec<f64>>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = points.iter().map(|p| p.coords().to_vec()).collect();
        Self::from_rows(&rows, responses)
    }

    /// One-dimensional set from scalar values.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::from_flat(1, values.to_vec(), None)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn responses(&self) -> Option<&[f64]> {
        self.responses.as_deref()
    }

    pub fn require_responses(&self) -> Result<&[f64]> {
        self.responses()
            .ok_or_else(|| invalid("sample set has no responses"))
    }

    pub fn with_responses(self, responses: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.dim, self.data, Some(responses))
    }

    pub fn without_responses(&self) -> Self {
        SampleSet {
            dim: self.dim,
            data: self.data.clone(),
            responses: None,
        }
    }

    /// Subset by row index, in the order given.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.point(i));
        }
        let responses = self
            .responses
            .as_ref()
            .map(|y| idx.iter().map(|&i| y[i]).collect());
        Self::from_flat(self.dim, data, responses)
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Column `k` as a one-dimensional set (responses dropped).
    pub fn column(&self, k: usize) -> Result<Self> {
        if k >= self.dim {
            return Err(invalid(format!("column {k} out of range for dimension {}", self.dim)));
        }
        let values: Vec<f64> = self.points().map(|p| p[k]).collect();
        Self::from_values(&values)
    }

    /// Per-coordinate sample standard deviation (n-1 denominator, 0 for n = 1).
    pub fn coord_std(&self) -> Vec<f64> {
        let n = self.len();
        let mut mean = vec![0.0; self.dim];
        for p in self.points() {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; self.dim];
        for p in self.points() {
            for ((v, x), m) in var.iter_mut().zip(p).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        if n < 2 {
            return vec![0.0; self.dim];
        }
        var.iter().map(|v| (v / (n - 1) as f64).sqrt()).collect()
    }

    /// Writes `x1,...,xd[,y]` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        if self.responses.is_some() {
            header.push("y".into());
        }
        wtr.write_record(&header)?;
        for (i, p) in self.points().enumerate() {
            let mut row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
            if let Some(y) = &self.responses {
                row.push(fmt_f64(y[i]));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let headers = rdr.headers()?.clone();
        let has_y = headers.iter().next_back() == Some("y");
        let dim = headers.len() - usize::from(has_y);
        for (k, h) in headers.iter().take(dim).enumerate() {
            if h != format!("x{}", k + 1) {
                return Err(invalid(format!("unexpected CSV column {h:?}")));
            }
        }
        let mut data = Vec::new();
        let mut ys = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| invalid(format!("bad number {field:?}")))?;
                if has_y && k == dim {
                    ys.push(v);
                } else {
                    data.push(v);
                }
            }
        }
        Self::from_flat(dim, data, has_y.then_some(ys))
    }
}

/// Common dimension of a sample set.
pub fn dimension(data: &SampleSet) -> usize {
    data.dim()
}

/// Seeded random partition into `floor(fraction * n)` and the remainder.
pub fn split(data: &SampleSet, fraction: f64, seed: Seed) -> Result<(SampleSet, SampleSet)> {
    let n = data.len();
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!("split fraction {fraction} not in (0, 1)")));
    }
    let first = (fraction * n as f64).floor() as usize;
    if n < 2 || first == 0 || first == n {
        return Err(invalid(format!(
            "split of {n} points at fraction {fraction} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng());
    Ok((data.select(&idx[..first])?, data.select(&idx[first..])?))
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
