//! Minimal dense row-major matrix used throughout the crate.
//!
//! Forward passes and decoding must be bitwise reproducible between the
//! offline and streaming paths, so all matrix products are written as
//! explicit row loops with a fixed summation order instead of delegating
//! to a BLAS-style kernel.

/// Dense row-major matrix over a copyable element type.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Mat<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Mat { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.data[r * self.cols + c] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols.max(1))
    }
}

impl Mat<f64> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat::filled(rows, cols, 0.0)
    }

    /// `out[r][k] = bias[k] + sum_j self[r][j] * weights[k][j]`.
    ///
    /// `weights` has one row per output column. Summation runs over `j` in
    /// increasing order for every row, which keeps single-row and full-matrix
    /// evaluation bitwise identical.
    pub fn affine(&self, weights: &Mat<f64>, bias: &[f64]) -> Mat<f64> {
        assert_eq!(weights.cols(), self.cols, "weight shape mismatch");
        assert_eq!(bias.len(), weights.rows(), "bias length mismatch");
        let mut out = Mat::zeros(self.rows, weights.rows());
        for r in 0..self.rows {
            let x = self.row(r);
            let o = out.row_mut(r);
            for (k, slot) in o.iter_mut().enumerate() {
                let w = weights.row(k);
                let mut acc = bias[k];
                for j in 0..x.len() {
                    acc += x[j] * w[j];
                }
                *slot = acc;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_hand_computation() {
        let x = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 0.5, -1.0, 0.0]);
        let w = Mat::from_vec(2, 3, vec![1.0, 0.0, -1.0, 2.0, 2.0, 2.0]);
        let b = vec![0.5, -0.5];
        let y = x.affine(&w, &b);
        assert_eq!(y.row(0), &[1.0 - 3.0 + 0.5, 2.0 + 4.0 + 6.0 - 0.5]);
        assert_eq!(y.row(1), &[0.5 + 0.5, 1.0 - 2.0 - 0.5]);
    }

    #[test]
    fn single_row_affine_is_bitwise_equal_to_batched() {
        let x = Mat::from_vec(
            3,
            4,
            (0..12).map(|i| (i as f64).sin() * 1e3).collect::<Vec<_>>(),
        );
        let w = Mat::from_vec(2, 4, (0..8).map(|i| (i as f64).cos()).collect::<Vec<_>>());
        let b = vec![0.123, -4.56];
        let full = x.affine(&w, &b);
        for r in 0..3 {
            let single = Mat::from_vec(1, 4, x.row(r).to_vec()).affine(&w, &b);
            assert_eq!(single.row(0), full.row(r));
        }
    }
}
