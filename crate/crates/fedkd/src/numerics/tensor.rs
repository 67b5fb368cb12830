//! Dense row-major f64 tensors.
//!
//! This is the substrate for every parameter block, activation, and latent
//! sample in the crate. It is deliberately small: 2-D matrix products with
//! the transpose variants needed by backprop, plus element-wise helpers.
//! Everything is `f64`; desk-scale problem sizes make determinism and easy
//! gradient checking worth more than raw speed.

use crate::error::{Error, Result};

/// Dense row-major tensor. `data.len() == shape.iter().product()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Build from a flat row-major buffer. Errors if the element count does
    /// not match the shape or any element is non-finite.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "Tensor::from_vec",
                left: shape.to_vec(),
                right: vec![data.len()],
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Tensor::from_vec"));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// 2-D constructor from nested rows; rows must be equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::ShapeMismatch {
                    context: "Tensor::from_rows",
                    left: vec![c],
                    right: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::from_vec(&[r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.shape.len(), 2);
        self.shape[0]
    }

    /// Number of columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.shape.len(), 2);
        self.shape[1]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    fn check_same_shape(&self, other: &Tensor, context: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// `self [m×k] · other [k×n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::ShapeMismatch {
                context: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = Tensor::zeros(&[m, n]);
        // ikj order: the inner loop runs over contiguous rows of both
        // `other` and `out`, which vectorizes well.
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (p, &a_ip) in a_row.iter().enumerate() {
                if a_ip == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                    *o = a_ip.mul_add(b_pj, *o);
                }
            }
        }
        Ok(out)
    }

    /// `self [m×k] · otherᵀ` where `other` is `[n×k]`. Used for input
    /// gradients: `dX = dZ · Wᵀ`.
    pub fn matmul_bt(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::ShapeMismatch {
                context: "matmul_bt",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (j, o) in out_row.iter_mut().enumerate() {
                let b_row = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc = a.mul_add(b, acc);
                }
                *o = acc;
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` where `self` is `[k×m]`, `other` is `[k×n]`. Used for
    /// weight gradients: `dW = Xᵀ · dZ`.
    pub fn matmul_at(&self, other: &Tensor) -> Result<Tensor> {
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::ShapeMismatch {
                context: "matmul_at",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = Tensor::zeros(&[m, n]);
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a_pi) in a_row.iter().enumerate() {
                if a_pi == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                    *o = a_pi.mul_add(b_pj, *o);
                }
            }
        }
        Ok(out)
    }

    /// Add a length-`cols` vector to every row.
    pub fn add_row_vector(&mut self, v: &Tensor) -> Result<()> {
        if v.shape() != [self.cols()] {
            return Err(Error::ShapeMismatch {
                context: "add_row_vector",
                left: self.shape.clone(),
                right: v.shape.clone(),
            });
        }
        let c = self.cols();
        for row in self.data.chunks_exact_mut(c) {
            for (x, &b) in row.iter_mut().zip(&v.data) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Column sums of a 2-D tensor, as a 1-D tensor.
    pub fn column_sums(&self) -> Tensor {
        let c = self.cols();
        let mut out = Tensor::zeros(&[c]);
        for row in self.data.chunks_exact(c) {
            for (o, &x) in out.data.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    /// `self += scale * other`, element-wise.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = scale.mul_add(b, *a);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for x in &mut self.data {
            *x *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Squared L2 distance to another tensor of the same shape.
    pub fn squared_distance(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other, "squared_distance")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum())
    }

    /// Bitwise equality, including distinguishing -0.0 from 0.0.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_against_hand_computed() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transpose_products_agree_with_plain_matmul() {
        let a = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![2.0, 1.0, -1.0], vec![0.5, 0.0, 4.0]]).unwrap();
        // a [2x3], b [2x3]: a^T b == matmul_at(a, b)
        let at_b = a.matmul_at(&b).unwrap();
        assert_eq!(at_b.shape(), &[3, 3]);
        assert!((at_b.data()[0] - (1.0 * 2.0 + 0.0 * 0.5)).abs() < 1e-15);
        // a b^T == matmul_bt(a, b)
        let a_bt = a.matmul_bt(&b).unwrap();
        assert_eq!(a_bt.shape(), &[2, 2]);
        assert!((a_bt.data()[0] - (2.0 - 2.0 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn from_vec_rejects_bad_shape_and_nan() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::from_vec(&[2], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn add_row_vector_broadcasts() {
        let mut a = Tensor::zeros(&[2, 3]);
        let b = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        a.add_row_vector(&b).unwrap();
        assert_eq!(a.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }
}
