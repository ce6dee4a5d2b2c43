//! Dense row-major matrices. Vectors are 1×n or n×1 tensors; scalars 1×1.

use super::scalar::Scalar;
use super::NumericError;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "value count must match shape");
        Self { rows, cols, data }
    }

    pub fn scalar(value: F) -> Self {
        Self::from_vec(1, 1, vec![value])
    }

    pub fn filled(rows: usize, cols: usize, value: F) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn item(&self) -> F {
        assert_eq!(self.len(), 1, "item() requires a 1x1 tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale(&mut self, s: F) {
        self.data.iter_mut().for_each(|x| *x = *x * s);
    }

    /// `self · other` via the gemm kernel.
    pub fn matmul(&self, other: &Self) -> Result<Self, NumericError> {
        if self.cols != other.rows {
            return Err(NumericError::ShapeMismatch {
                op: "matmul",
                detail: format!("{:?} x {:?}", self.shape(), other.shape()),
            });
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        unsafe {
            F::gemm(
                self.rows,
                self.cols,
                other.cols,
                F::one(),
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                F::zero(),
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
        Ok(out)
    }

    /// `out += selfᵀ · other` without materializing the transpose.
    pub fn matmul_t_left_into(&self, other: &Self, out: &mut Self) {
        assert_eq!(self.rows, other.rows, "gemm tA shape mismatch");
        assert_eq!(out.shape(), (self.cols, other.cols));
        unsafe {
            F::gemm(
                self.cols,
                self.rows,
                other.cols,
                F::one(),
                self.data.as_ptr(),
                1,
                self.cols as isize,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                F::one(),
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
    }

    /// `out += self · otherᵀ` without materializing the transpose.
    pub fn matmul_t_right_into(&self, other: &Self, out: &mut Self) {
        assert_eq!(self.cols, other.cols, "gemm tB shape mismatch");
        assert_eq!(out.shape(), (self.rows, other.rows));
        unsafe {
            F::gemm(
                self.rows,
                self.cols,
                other.rows,
                F::one(),
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                1,
                other.cols as isize,
                F::one(),
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
    }

    /// Sum over rows, yielding a 1×cols tensor.
    pub fn column_sums(&self) -> Self {
        let mut out = Tensor::zeros(1, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for (acc, v) in out.data.iter_mut().zip(row) {
                *acc = *acc + *v;
            }
        }
        out
    }

    /// Converts element type, used by tests that compare precisions.
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| G::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}
