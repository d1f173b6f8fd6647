//! Weighted supervised learners. Each minimizes
//! `Σ_k α_k Σ_j L(θ; x_jk, y_jk) + λ R(θ)` for fixed frame weights `α`.

mod dcf;
mod spatial;
mod svm;

pub use dcf::{
    filter_confidence, filter_frame_loss, make_gaussian_label, train_filter, CorrelationFilter,
    FilterLearner, SpectralSample, TrainingSample,
};
pub use spatial::{train_filter_spatial, SpatialFilterLearner, SpatialSystem, DENSE_SIZE_BOUND};
pub use svm::{svm_frame_loss, train_svm, Class, ClassFrame, ClassSample, LinearSvmModel, SvmLearner};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A learner that can be driven by the joint weight optimizer.
pub trait Learner {
    /// Everything stored for one frame (one or more samples).
    type Frame;
    type Model: Clone;

    /// Minimizes the weighted loss. `warm` is the previous model, used as
    /// the starting point by iterative learners.
    fn train(
        &self,
        frames: &[Self::Frame],
        alpha: &[f64],
        warm: Option<&Self::Model>,
    ) -> Result<Self::Model>;

    /// Total loss `L_k` of one frame under `model`.
    fn frame_loss(&self, model: &Self::Model, frame: &Self::Frame) -> Result<f64>;

    /// Regularization term `λ R(θ)`.
    fn penalty(&self, model: &Self::Model) -> f64;

    /// True when `train` returns the exact minimizer.
    fn is_exact(&self) -> bool;
}

/// Multi-channel real feature map, stored channel-major, each channel
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidParameter("feature map dimensions must be positive".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::mismatch(height * width * channels, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_channels(height: usize, width: usize, channels: Vec<Vec<f64>>) -> Result<Self> {
        let d = channels.len();
        Self::new(height, width, d, channels.concat())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn channel(&self, l: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[l * n..(l + 1) * n]
    }

    pub fn channel_mut(&mut self, l: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[l * n..(l + 1) * n]
    }

    pub fn get(&self, l: usize, row: usize, col: usize) -> f64 {
        self.data[(l * self.height + row) * self.width + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Real `H × W` map: a desired or computed confidence map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter("label map dimensions must be positive".into()));
        }
        if data.len() != height * width {
            return Err(Error::mismatch(height * width, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("label map"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Position of the maximum; ties go to the smallest row, then column.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
