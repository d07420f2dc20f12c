//! The evaluable-map abstraction shared by every estimator and ground truth.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// A deterministic total map `R^dim_in -> R^dim_out`.
pub trait EvaluableMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;

    /// Writes `f(x)` into `out` (`out.len() == dim_out`).
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out()];
        self.eval_into(x, &mut out);
        out
    }

    /// First output coordinate; the natural call for scalar maps.
    fn eval_scalar(&self, x: &[f64]) -> f64 {
        if self.dim_out() == 1 {
            let mut out = [0.0];
            self.eval_into(x, &mut out);
            out[0]
        } else {
            self.eval(x)[0]
        }
    }
}

impl<M: EvaluableMap + ?Sized> EvaluableMap for &M {
    fn dim_in(&self) -> usize {
        (**self).dim_in()
    }
    fn dim_out(&self) -> usize {
        (**self).dim_out()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).eval_into(x, out)
    }
}

impl<M: EvaluableMap + ?Sized> EvaluableMap for Box<M> {
    fn dim_in(&self) -> usize {
        (**self).dim_in()
    }
    fn dim_out(&self) -> usize {
        (**self).dim_out()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).eval_into(x, out)
    }
}

/// `x -> offset + matrix (x - center)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    matrix: DMatrix<f64>,
    center: DVector<f64>,
    offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, center: DVector<f64>, offset: DVector<f64>) -> Result<Self> {
        if matrix.ncols() != center.len() || matrix.nrows() != offset.len() {
            return Err(invalid(format!(
                "affine map shapes: matrix {}x{}, center {}, offset {}",
                matrix.nrows(),
                matrix.ncols(),
                center.len(),
                offset.len()
            )));
        }
        Ok(AffineMap {
            matrix,
            center,
            offset,
        })
    }

    pub fn identity(d: usize) -> Self {
        AffineMap {
            matrix: DMatrix::identity(d, d),
            center: DVector::zeros(d),
            offset: DVector::zeros(d),
        }
    }

    pub fn translation(shift: &[f64]) -> Self {
        let d = shift.len();
        AffineMap {
            matrix: DMatrix::identity(d, d),
            center: DVector::zeros(d),
            offset: DVector::from_column_slice(shift),
        }
    }

    /// Scalar linear form `x -> u.x + b`.
    pub fn linear_form(u: &[f64], b: f64) -> Self {
        AffineMap {
            matrix: DMatrix::from_row_slice(1, u.len(), u),
            center: DVector::zeros(u.len()),
            offset: DVector::from_element(1, b),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }
}

impl EvaluableMap for AffineMap {
    fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }

    fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = self.offset[r];
            for (c, xc) in x.iter().enumerate() {
                acc += self.matrix[(r, c)] * (xc - self.center[c]);
            }
            *o = acc;
        }
    }
}

/// Adapts a closure to [`EvaluableMap`].
pub struct FnMap<F> {
    dim_in: usize,
    dim_out: usize,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim_in: usize, dim_out: usize, f: F) -> Self {
        FnMap { dim_in, dim_out, f }
    }
}

impl<F> EvaluableMap for FnMap<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// Scalar closure `R^d -> R` as a map.
pub fn scalar_fn<F>(dim_in: usize, f: F) -> FnMap<impl Fn(&[f64], &mut [f64]) + Send + Sync>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    FnMap::new(dim_in, 1, move |x: &[f64], out: &mut [f64]| out[0] = f(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_eval() {
        let m = AffineMap::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![0.5, -0.5]),
        )
        .unwrap();
        assert_eq!(m.eval(&[2.0, 3.0]), vec![2.5, 2.5]);
        let f = AffineMap::linear_form(&[1.0, -2.0], 3.0);
        assert_eq!(f.eval_scalar(&[1.0, 1.0]), 2.0);
        assert!(AffineMap::new(DMatrix::zeros(1, 2), DVector::zeros(3), DVector::zeros(1)).is_err());
    }

    #[test]
    fn closures_and_boxes() {
        let sq = scalar_fn(1, |x| x[0] * x[0]);
        assert_eq!(sq.eval_scalar(&[3.0]), 9.0);
        let boxed: Box<dyn EvaluableMap> = Box::new(sq);
        assert_eq!(boxed.eval(&[2.0]), vec![4.0]);
        assert_eq!(boxed.dim_in(), 1);
    }
}
