use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FusionError;

/// Finite real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self, FusionError> {
        if values.is_empty() {
            return Err(FusionError::EmptyVector);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FusionError::NonFiniteInput { index: i });
        }
        Ok(Vector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn cosine(&self, other: &Vector) -> f64 {
        let d = self.norm() * other.norm();
        if d == 0.0 {
            0.0
        } else {
            self.dot(other) / d
        }
    }

    /// Checks the dimension, reporting `stage` on mismatch.
    pub fn expect_dim(&self, dim: usize, stage: &str) -> Result<(), FusionError> {
        if self.dim() != dim {
            return Err(FusionError::Dimension {
                stage: stage.to_string(),
                expected: dim,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = FusionError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `y = W x + b` with a row-major `out_dim x in_dim` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl AffineMap {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, FusionError> {
        if in_dim == 0 || out_dim == 0 {
            return Err(FusionError::ZeroDim);
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(FusionError::Shape {
                in_dim,
                out_dim,
                weights: weights.len(),
                bias: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(FusionError::NonFiniteWeights);
        }
        Ok(AffineMap {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        AffineMap {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.weights[i * dim + i] = 1.0;
        }
        m
    }

    /// Uniform weights on `[-scale/sqrt(in_dim), scale/sqrt(in_dim)]`, zero bias.
    pub fn uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, scale: f64, rng: &mut R) -> Self {
        let bound = scale / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        AffineMap {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.in_dim..(r + 1) * self.in_dim]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Unchecked `out = W x + b`; slices must have matching lengths.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x) + self.bias[r];
        }
    }

    /// `out = W^T g` (backward pass through the linear part).
    pub fn transpose_apply_into(&self, g: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += gr * w;
            }
        }
    }

    pub fn apply(&self, x: &[f64], stage: &str) -> Result<Vector, FusionError> {
        if x.len() != self.in_dim {
            return Err(FusionError::Dimension {
                stage: stage.to_string(),
                expected: self.in_dim,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.out_dim];
        self.apply_into(x, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::NonFiniteOutput {
                stage: stage.to_string(),
            });
        }
        Ok(Vector(out))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// Applies `map` to `x`, checking dimensions and finiteness.
pub fn apply_affine(map: &AffineMap, x: &Vector) -> Result<Vector, FusionError> {
    map.apply(x.as_slice(), "affine")
}
