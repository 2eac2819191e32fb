//! Minimal dense row-major matrix, just enough for the GAMP linear steps.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                what: "Mat::from_vec",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Element-wise square, `A ⊙ A`.
    pub fn hadamard_square(&self) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * a).collect(),
        }
    }

    /// Matrix with the first `m` rows of `self`.
    pub fn top_rows(&self, m: usize) -> Result<Mat> {
        if m > self.rows {
            return Err(Error::Dimension {
                what: "Mat::top_rows",
                expected: self.rows,
                got: m,
            });
        }
        Ok(Mat {
            rows: m,
            cols: self.cols,
            data: self.data[..m * self.cols].to_vec(),
        })
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension {
                what: "Mat::mul_vec",
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect())
    }

    /// `y = Aᵀ s`.
    pub fn tr_mul_vec(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.rows {
            return Err(Error::Dimension {
                what: "Mat::tr_mul_vec",
                expected: self.rows,
                got: s.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &si) in s.iter().enumerate() {
            if si == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * si;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mul_matches_reference() {
        let a = Mat::from_fn(3, 2, |i, j| (i * 2 + j) as f64 + 0.5);
        let x = [1.0, -2.0];
        let y = a.mul_vec(&x).unwrap();
        for (i, yi) in y.iter().enumerate() {
            let want = a.get(i, 0) * x[0] + a.get(i, 1) * x[1];
            assert_eq!(*yi, want);
        }
        let s = [0.3, -0.1, 2.0];
        let z = a.tr_mul_vec(&s).unwrap();
        for (j, zj) in z.iter().enumerate() {
            let want: f64 = (0..3).map(|i| a.get(i, j) * s[i]).sum();
            assert!((zj - want).abs() < 1e-15);
        }
        assert!(a.mul_vec(&[1.0]).is_err());
        assert!(a.tr_mul_vec(&[1.0]).is_err());
    }

    #[test]
    fn hadamard_and_top_rows() {
        let a = Mat::from_fn(2, 2, |i, j| (i + j) as f64 - 0.5);
        let sq = a.hadamard_square();
        assert_eq!(sq.get(0, 0), 0.25);
        assert_eq!(sq.get(1, 1), 2.25);
        let t = a.top_rows(1).unwrap();
        assert_eq!(t.rows(), 1);
        assert_eq!(t.row(0), a.row(0));
        assert!(a.top_rows(3).is_err());
    }
}
