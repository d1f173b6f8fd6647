//! Weighted linear SVM with hinge loss, trained by deterministic full-batch
//! sub-gradient descent.

use serde::{Deserialize, Serialize};

use super::Learner;
use crate::error::{Error, Result};
use crate::weights::SimplexWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Class {
    Positive,
    Negative,
}

impl Class {
    pub fn sign(self) -> f64 {
        match self {
            Class::Positive => 1.0,
            Class::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Class::Positive => Class::Negative,
            Class::Negative => Class::Positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSample {
    pub features: Vec<f64>,
    pub class: Class,
}

/// All samples collected in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFrame {
    pub frame_index: usize,
    pub samples: Vec<ClassSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weight_vector: Vec<f64>,
    pub bias: f64,
    pub regularization_weight: f64,
}

impl LinearSvmModel {
    pub fn zeros(dim: usize, regularization_weight: f64) -> Self {
        Self {
            weight_vector: vec![0.0; dim],
            bias: 0.0,
            regularization_weight,
        }
    }

    pub fn dim(&self) -> usize {
        self.weight_vector.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weight_vector, x) + self.bias
    }

    pub fn penalty_value(&self) -> f64 {
        self.regularization_weight * dot(&self.weight_vector, &self.weight_vector)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn hinge(model: &LinearSvmModel, s: &ClassSample) -> f64 {
    (1.0 - s.class.sign() * model.score(&s.features)).max(0.0)
}

/// Sum of hinge losses over one frame's samples.
pub fn svm_frame_loss(model: &LinearSvmModel, frame: &ClassFrame) -> Result<f64> {
    let mut total = 0.0;
    for s in &frame.samples {
        if s.features.len() != model.dim() {
            return Err(Error::mismatch(model.dim(), s.features.len()));
        }
        total += hinge(model, s);
    }
    Ok(total)
}

/// Weighted objective `Σ_k α_k Σ_j hinge + λ‖θ‖²`.
fn objective(model: &LinearSvmModel, frames: &[ClassFrame], alpha: &[f64]) -> f64 {
    let data: f64 = frames
        .iter()
        .zip(alpha)
        .filter(|(_, a)| **a > 0.0)
        .map(|(f, a)| a * f.samples.iter().map(|s| hinge(model, s)).sum::<f64>())
        .sum();
    data + model.penalty_value()
}

/// Trains from `warm` (or zero) for at most `budget` iterations.
///
/// Iterate `t` moves along a sub-gradient with step `min(1/(2λt), 1/√t)`. Iterates may
/// go uphill near kinks of the hinge, so the best one seen is returned and
/// the sequence of accepted (best-so-far) objectives never increases.
pub fn train_svm(
    frames: &[ClassFrame],
    alpha: &SimplexWeights,
    lambda: f64,
    budget: usize,
    warm: Option<&LinearSvmModel>,
) -> Result<LinearSvmModel> {
    train_weighted(frames, alpha.as_slice(), lambda, budget, warm)
}

fn train_weighted(
    frames: &[ClassFrame],
    alpha: &[f64],
    lambda: f64,
    budget: usize,
    warm: Option<&LinearSvmModel>,
) -> Result<LinearSvmModel> {
    if alpha.len() != frames.len() {
        return Err(Error::mismatch(format!("{} weights", frames.len()), alpha.len()));
    }
    let dim = frames
        .iter()
        .flat_map(|f| f.samples.first())
        .map(|s| s.features.len())
        .next()
        .ok_or(Error::Empty("no class samples"))?;
    for s in frames.iter().flat_map(|f| &f.samples) {
        if s.features.len() != dim {
            return Err(Error::mismatch(dim, s.features.len()));
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("svm features"));
        }
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }

    let mut model = match warm {
        Some(m) if m.dim() == dim => LinearSvmModel {
            regularization_weight: lambda,
            ..m.clone()
        },
        _ => LinearSvmModel::zeros(dim, lambda),
    };
    let mut best_value = objective(&model, frames, alpha);
    let mut best = model.clone();
    let mut grad_w = vec![0.0; dim];

    for iter in 1..=budget {
        grad_w
            .iter_mut()
            .zip(&model.weight_vector)
            .for_each(|(g, w)| *g = 2.0 * lambda * w);
        let mut grad_b = 0.0;
        for (frame, a) in frames.iter().zip(alpha) {
            if *a <= 0.0 {
                continue;
            }
            for s in &frame.samples {
                let y = s.class.sign();
                if y * model.score(&s.features) < 1.0 {
                    for (g, x) in grad_w.iter_mut().zip(&s.features) {
                        *g -= a * y * x;
                    }
                    grad_b -= a * y;
                }
            }
        }
        if dot(&grad_w, &grad_w) + grad_b * grad_b == 0.0 {
            break;
        }

        let step = (1.0 / (2.0 * lambda * iter as f64)).min(1.0 / (iter as f64).sqrt());
        for (w, g) in model.weight_vector.iter_mut().zip(&grad_w) {
            *w -= step * g;
        }
        model.bias -= step * grad_b;
        let value = objective(&model, frames, alpha);
        if value < best_value {
            best_value = value;
            best.clone_from(&model);
        }
    }
    Ok(best)
}

/// Hinge-loss SVM learner for the joint optimizer.
#[derive(Debug, Clone)]
pub struct SvmLearner {
    pub lambda: f64,
    pub budget: usize,
}

impl Learner for SvmLearner {
    type Frame = ClassFrame;
    type Model = LinearSvmModel;

    fn train(
        &self,
        frames: &[ClassFrame],
        alpha: &[f64],
        warm: Option<&LinearSvmModel>,
    ) -> Result<LinearSvmModel> {
        train_weighted(frames, alpha, self.lambda, self.budget, warm)
    }

    fn frame_loss(&self, model: &LinearSvmModel, frame: &ClassFrame) -> Result<f64> {
        svm_frame_loss(model, frame)
    }

    fn penalty(&self, model: &LinearSvmModel) -> f64 {
        model.penalty_value()
    }

    fn is_exact(&self) -> bool {
        false
    }
}
