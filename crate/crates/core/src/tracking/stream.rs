//! Synthetic two-class sample stream for the SVM learner, with a share of
//! frames whose labels are all flipped.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Strategy;
use crate::baselines::decay_weights;
use crate::error::{Error, Result};
use crate::joint::{acs_update, JointConfig, TrainingMemory};
use crate::learners::{Class, ClassFrame, ClassSample, Learner, LinearSvmModel, SvmLearner};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStreamConfig {
    pub frames: usize,
    pub dim: usize,
    pub negatives: usize,
    /// Share of frames, excluding the first, whose labels are flipped.
    pub flip_share: f64,
    /// Distance between the class means.
    pub separation: f64,
    /// Balanced clean test samples per class.
    pub test_per_class: usize,
}

impl Default for ClassStreamConfig {
    fn default() -> Self {
        Self {
            frames: 60,
            dim: 5,
            negatives: 20,
            flip_share: 0.3,
            separation: 3.0,
            test_per_class: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStream {
    pub frames: Vec<ClassFrame>,
    pub corrupted: Vec<bool>,
    pub test: Vec<ClassSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutcome {
    pub model: LinearSvmModel,
    /// Final weight of each stored frame, oldest first.
    pub alpha: Vec<f64>,
    pub frame_indices: Vec<usize>,
    /// Fraction of test samples on the correct side of the decision boundary.
    pub accuracy: f64,
}

impl StreamOutcome {
    /// Final weights split into (corrupted, clean) frames.
    pub fn split_weights(&self, corrupted: &[bool]) -> (Vec<f64>, Vec<f64>) {
        let (mut bad, mut good) = (Vec::new(), Vec::new());
        for (a, k) in self.alpha.iter().zip(&self.frame_indices) {
            if corrupted[k - 1] {
                bad.push(*a);
            } else {
                good.push(*a);
            }
        }
        (bad, good)
    }
}

fn draw(rng: &mut ChaCha8Rng, direction: &[f64], class: Class, separation: f64) -> ClassSample {
    let offset = 0.5 * separation * class.sign();
    let features = direction
        .iter()
        .map(|d| {
            let z: f64 = StandardNormal.sample(rng);
            offset * d + z
        })
        .collect();
    ClassSample { features, class }
}

pub fn generate_class_stream(config: &ClassStreamConfig, seed: u64) -> Result<ClassStream> {
    if config.frames < 2 || config.dim == 0 || !(0.0..=1.0).contains(&config.flip_share) {
        return Err(Error::InvalidParameter("invalid class stream settings".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..config.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let direction: Vec<f64> = raw.iter().map(|v| v / norm).collect();

    let flips = (config.flip_share * (config.frames - 1) as f64).round() as usize;
    let mut corrupted = vec![false; config.frames];
    for i in sample(&mut rng, config.frames - 1, flips) {
        corrupted[i + 1] = true;
    }
    let frames = corrupted
        .iter()
        .enumerate()
        .map(|(k, &flip)| {
            let classes = std::iter::once(Class::Positive).chain(std::iter::repeat_n(Class::Negative, config.negatives));
            let samples = classes
                .map(|c| {
                    let mut s = draw(&mut rng, &direction, c, config.separation);
                    if flip {
                        s.class = s.class.flipped();
                    }
                    s
                })
                .collect();
            ClassFrame {
                frame_index: k + 1,
                samples,
            }
        })
        .collect();
    let test = [Class::Positive, Class::Negative]
        .into_iter()
        .flat_map(|c| std::iter::repeat_n(c, config.test_per_class))
        .map(|c| draw(&mut rng, &direction, c, config.separation))
        .collect();
    Ok(ClassStream {
        frames,
        corrupted,
        test,
    })
}

/// Feeds the stream frame by frame, updating weights with `strategy` and
/// retraining after each frame. PSR gating has no confidence map here and
/// behaves as fixed decay.
pub fn run_class_stream(
    stream: &ClassStream,
    strategy: &Strategy,
    joint: &JointConfig,
    budget: usize,
) -> Result<StreamOutcome> {
    joint.validate()?;
    let learner = SvmLearner {
        lambda: joint.lambda,
        budget,
    };
    let mut memory = TrainingMemory::new(joint.capacity, joint.schedule)?;
    let mut model: Option<LinearSvmModel> = None;
    for frame in &stream.frames {
        memory.add_frame(frame.frame_index, frame.clone())?;
        let next = match strategy {
            Strategy::Joint => {
                let out = acs_update(&mut memory, joint, &learner, model.as_ref())?;
                learner.train(memory.frames(), memory.alpha(), Some(&out.model))?
            }
            Strategy::FixedDecay(decay) | Strategy::PsrGated { decay, .. } => {
                memory.set_alpha(decay_weights(memory.len(), *decay)?)?;
                learner.train(memory.frames(), memory.alpha(), model.as_ref())?
            }
        };
        model = Some(next);
    }
    let model = model.ok_or(Error::Empty("class stream"))?;
    let correct = stream
        .test
        .iter()
        .filter(|s| model.score(&s.features) * s.class.sign() > 0.0)
        .count();
    Ok(StreamOutcome {
        accuracy: correct as f64 / stream.test.len().max(1) as f64,
        alpha: memory.alpha().to_vec(),
        frame_indices: memory.frame_indices().to_vec(),
        model,
    })
}
