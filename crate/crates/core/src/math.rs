//! Dense real linear algebra and the elementwise nonlinearities and loss
//! shared by the rest of the crate.
//!
//! Everything is `f64`, row-major, and allocation-per-result. Activation
//! vectors are conceptually columns, so a weight matrix mapping layer `l`
//! (width `n`) to layer `l + 1` (width `m`) has shape `m × n`.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{ArError, Result};

/// A dense column vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self {
            data: vec![value; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector::new(self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn scale(&self, a: f64) -> Vector {
        self.map(|x| a * x)
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_dims("dot", self, other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Vector) -> Result<Vector> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    /// `self += other` in place.
    pub fn add_assign(&mut self, other: &Vector) -> Result<()> {
        check_dims("add_assign", self, other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Index of the largest entry, lowest index on ties. `None` when empty.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &x) in self.data.iter().enumerate() {
            match best {
                Some((_, b)) if x <= b => {}
                _ => best = Some((i, x)),
            }
        }
        best.map(|(i, _)| i)
    }

    fn zip_with(
        &self,
        op: &'static str,
        other: &Vector,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Vector> {
        check_dims(op, self, other)?;
        Ok(Vector::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector::new(data)
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

fn check_dims(op: &'static str, a: &Vector, b: &Vector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(ArError::shape(
            op,
            format!("dim {}", a.dim()),
            format!("dim {}", b.dim()),
        ));
    }
    Ok(())
}

/// A dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// `rows×cols`, used in shape error messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ArError::shape(
                "Matrix::from_vec",
                Shape(rows, cols),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(ArError::shape(
                    "Matrix::from_rows",
                    format!("row of {cols}"),
                    format!("row of {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> Shape {
        Shape(self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Explicit transpose (allocates).
    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius inner product.
    pub fn frobenius_dot(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(ArError::shape("frobenius_dot", self.shape(), other.shape()));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(ArError::shape("axpy", self.shape(), other.shape()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// `self += alpha * u vᵀ` without materializing the outer product.
    pub fn add_outer(&mut self, alpha: f64, u: &Vector, v: &Vector) -> Result<()> {
        if u.dim() != self.rows || v.dim() != self.cols {
            return Err(ArError::shape(
                "add_outer",
                self.shape(),
                Shape(u.dim(), v.dim()),
            ));
        }
        let cols = self.cols;
        for (i, &ui) in u.iter().enumerate() {
            let scaled = alpha * ui;
            if scaled == 0.0 {
                continue;
            }
            let row = &mut self.data[i * cols..(i + 1) * cols];
            for (r, &vj) in row.iter_mut().zip(v.iter()) {
                *r += scaled * vj;
            }
        }
        Ok(())
    }

    pub fn scale(&self, a: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(ArError::shape("max_abs_diff", self.shape(), other.shape()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// `m · v`.
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    if m.cols != v.dim() {
        return Err(ArError::shape(
            "matvec",
            m.shape(),
            format!("vector of dim {}", v.dim()),
        ));
    }
    if m.cols == 0 {
        return Ok(Vector::zeros(m.rows));
    }
    let x = v.as_slice();
    let out = m.data.chunks_exact(m.cols).map(|row| dot(row, x)).collect();
    Ok(Vector::new(out))
}

/// Four partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (p, q) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += p[k] * q[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `mᵀ · v`, walking `m` row by row so the transpose is never formed.
pub fn matvec_transposed(m: &Matrix, v: &Vector) -> Result<Vector> {
    if m.rows != v.dim() {
        return Err(ArError::shape(
            "matvec_transposed",
            m.shape(),
            format!("vector of dim {}", v.dim()),
        ));
    }
    let mut out = vec![0.0; m.cols];
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let row = m.row(i);
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
    Ok(Vector::new(out))
}

/// `u vᵀ`.
pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    let mut m = Matrix::zeros(u.dim(), v.dim());
    for (i, &ui) in u.iter().enumerate() {
        for (j, &vj) in v.iter().enumerate() {
            m.data[i * v.dim() + j] = ui * vj;
        }
    }
    m
}

pub fn relu(v: &Vector) -> Vector {
    v.map(|x| if x > 0.0 { x } else { 0.0 })
}

/// Derivative of ReLU, taken as 0 at the kink.
pub fn relu_prime(v: &Vector) -> Vector {
    v.map(|x| if x > 0.0 { 1.0 } else { 0.0 })
}

/// `½ Σ (y − t)²`.
pub fn mse_loss(y: &Vector, t: &Vector) -> Result<f64> {
    check_dims("mse_loss", y, t)?;
    Ok(0.5
        * y.iter()
            .zip(t.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>())
}

/// Gradient of [`mse_loss`] with respect to `y`: the prediction error `y − t`.
pub fn mse_grad(y: &Vector, t: &Vector) -> Result<Vector> {
    y.sub(t).map_err(|_| {
        ArError::shape(
            "mse_grad",
            format!("dim {}", y.dim()),
            format!("dim {}", t.dim()),
        )
    })
}

/// Mean of squared differences between two equal-length vectors.
pub fn mean_squared_difference(a: &Vector, b: &Vector) -> Result<f64> {
    check_dims("mean_squared_difference", a, b)?;
    if a.dim() == 0 {
        return Ok(0.0);
    }
    let s: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.dim() as f64)
}

/// Cosine similarity; two zero vectors are treated as perfectly aligned and a
/// zero vector against a nonzero one as orthogonal.
pub fn cosine_similarity(a: &Vector, b: &Vector) -> Result<f64> {
    let dot = a.dot(b)?;
    let (saa, sbb) = (a.dot(a)?, b.dot(b)?);
    Ok(match (saa == 0.0, sbb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        // sqrt(saa·saa) == saa exactly, so identical inputs give exactly 1.
        _ => (dot / (saa * sbb).sqrt()).clamp(-1.0, 1.0),
    })
}
