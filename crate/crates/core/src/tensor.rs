//! Dense float tensors and the score/feature carriers built on them.
//!
//! Images use channel-major layout: shape `[channels, height, width]`, data in
//! row-major order within each channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense multi-dimensional array of finite `f64` values in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidTensor(format!(
                "shape extents must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                what: "tensor data",
                expected,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; len],
        }
    }

    /// Builds a tensor without validation. Callers guarantee the invariants.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(channels, height, width)` for a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::InvalidTensor(format!(
                "expected a [channels, height, width] tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Checks that every value is in `[0, 1]`.
    pub fn check_unit_range(&self) -> Result<()> {
        match self.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            None => Ok(()),
            Some(i) => Err(Error::InvalidTensor(format!(
                "pixel value {} at flat index {i} outside [0, 1]",
                self.data[i]
            ))),
        }
    }
}

/// Class-probability vector produced by a classifier's softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;

impl ScoreVector {
    /// Validates a probability vector, allowing `tolerance` slack on the sum.
    pub fn new(probs: Vec<f64>, tolerance: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty score vector".into()));
        }
        if let Some(p) = probs
            .iter()
            .find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(Error::InvalidArgument(format!(
                "score {p} outside [0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(Error::InvalidArgument(format!(
                "scores sum to {sum}, expected 1 within {tolerance}"
            )));
        }
        Ok(ScoreVector(probs))
    }

    pub(crate) fn from_softmax(probs: Vec<f64>) -> Self {
        ScoreVector(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// Index of the most probable class; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Euclidean distance between two probability vectors.
    pub fn l2_distance(&self, other: &ScoreVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// The `N` feature maps tapped from a spatial layer, stored `[N, n_h, n_w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack(Tensor);

impl FeatureStack {
    pub fn new(maps: Tensor) -> Result<Self> {
        maps.chw()?;
        Ok(FeatureStack(maps))
    }

    pub fn count(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn map_height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn map_width(&self) -> usize {
        self.0.shape()[2]
    }

    /// The `i`-th map as a flat row-major slice.
    pub fn map(&self, i: usize) -> &[f64] {
        let len = self.map_height() * self.map_width();
        &self.0.data()[i * len..(i + 1) * len]
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}
