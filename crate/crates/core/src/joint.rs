//! Joint estimation of a model `θ` and frame weights `α` by alternating
//! convex search on
//!
//! ```text
//! J(θ, α) = Σ_k α_k L_k(θ) + (1/μ) Σ_k α_k² / ρ_k + λ R(θ)
//! ```
//!
//! over a bounded memory of past frames.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Learner;
use crate::weights::{compute_priors, solve_alpha, AlphaSubproblem, PriorSchedule, PriorWeights, SimplexWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub mu: f64,
    pub acs_iterations: usize,
    pub schedule: PriorSchedule,
    pub capacity: usize,
    /// First frame (1-based) at which `α` is optimized; earlier frames use `α = ρ`.
    pub activation_frame: usize,
    pub lambda: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            mu: 5.0,
            acs_iterations: 1,
            schedule: PriorSchedule::default(),
            capacity: 300,
            activation_frame: 10,
            lambda: 1e-2,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        if self.acs_iterations == 0 {
            return Err(Error::InvalidParameter("acs_iterations must be at least 1".into()));
        }
        if self.capacity == 0 {
            return Err(Error::InvalidParameter("capacity must be at least 1".into()));
        }
        if self.activation_frame == 0 {
            return Err(Error::InvalidParameter("activation_frame must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// One row of the weight trajectory log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightLogRow {
    pub update_index: usize,
    pub frame_index: usize,
    pub alpha: f64,
    pub rho: f64,
    pub loss: f64,
}

/// Chronological store of at most `capacity` frames with their weights.
#[derive(Debug, Clone)]
pub struct TrainingMemory<F> {
    indices: Vec<usize>,
    frames: Vec<F>,
    alpha: Vec<f64>,
    priors: Vec<f64>,
    capacity: usize,
    schedule: PriorSchedule,
}

/// Rescales carried-over weights together with the new frame's prior mass.
pub fn carry_over(previous: &[f64], new_mass: f64) -> Result<SimplexWeights> {
    let mut masses = previous.to_vec();
    masses.push(new_mass);
    SimplexWeights::from_masses(masses)
}

impl<F> TrainingMemory<F> {
    pub fn new(capacity: usize, schedule: PriorSchedule) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("capacity must be at least 1".into()));
        }
        Ok(Self {
            indices: Vec::new(),
            frames: Vec::new(),
            alpha: Vec::new(),
            priors: Vec::new(),
            capacity,
            schedule,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn frames(&self) -> &[F] {
        &self.frames
    }

    pub fn frame_indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn newest_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// Current priors as a validated weight vector.
    pub fn prior_weights(&self) -> Result<PriorWeights> {
        PriorWeights::new(self.priors.clone())
    }

    pub fn set_alpha(&mut self, alpha: SimplexWeights) -> Result<()> {
        if alpha.len() != self.len() {
            return Err(Error::mismatch(self.len(), alpha.len()));
        }
        self.alpha = alpha.into_vec();
        Ok(())
    }

    /// Appends a frame with initial weight `ρ_t`, then evicts if over capacity.
    /// Returns the evicted frame index, if any.
    pub fn add_frame(&mut self, frame_index: usize, frame: F) -> Result<Option<usize>> {
        if let Some(last) = self.newest_index() {
            if frame_index <= last {
                return Err(Error::FrameOrder {
                    last,
                    new: frame_index,
                });
            }
        }
        let priors = compute_priors(self.len() + 1, &self.schedule)?.into_vec();
        let newest = *priors.last().expect("nonempty priors");
        self.alpha = carry_over(&self.alpha, newest)?.into_vec();
        self.priors = priors;
        self.indices.push(frame_index);
        self.frames.push(frame);
        if self.len() > self.capacity {
            return self.evict().map(Some);
        }
        Ok(None)
    }

    /// Removes the frame with the smallest `α` other than the newest (ties go
    /// to the oldest) and renormalizes. Returns the removed frame index.
    pub fn evict(&mut self) -> Result<usize> {
        if self.len() < 2 {
            return Err(Error::InvalidParameter("eviction needs at least two stored frames".into()));
        }
        let mut victim = 0;
        for k in 1..self.len() - 1 {
            if self.alpha[k] < self.alpha[victim] {
                victim = k;
            }
        }
        let removed = self.indices.remove(victim);
        self.frames.remove(victim);
        self.alpha.remove(victim);
        self.alpha = SimplexWeights::from_masses(std::mem::take(&mut self.alpha))?.into_vec();
        self.priors = compute_priors(self.len(), &self.schedule)?.into_vec();
        Ok(removed)
    }

    /// Log rows for one update, in frame order.
    pub fn log_rows(&self, update_index: usize, losses: &[f64]) -> Vec<WeightLogRow> {
        self.indices
            .iter()
            .zip(&self.alpha)
            .zip(&self.priors)
            .zip(losses)
            .map(|(((&frame_index, &alpha), &rho), &loss)| WeightLogRow {
                update_index,
                frame_index,
                alpha,
                rho,
                loss,
            })
            .collect()
    }
}

/// Per-frame losses `L_k(θ)` over the memory.
pub fn frame_losses<L: Learner>(
    learner: &L,
    model: &L::Model,
    memory: &TrainingMemory<L::Frame>,
) -> Result<Vec<f64>> {
    memory
        .frames()
        .iter()
        .map(|f| learner.frame_loss(model, f))
        .collect()
}

/// `J(θ, α)` for the memory's current `α` and `ρ`.
pub fn joint_loss<L: Learner>(
    learner: &L,
    model: &L::Model,
    memory: &TrainingMemory<L::Frame>,
    mu: f64,
) -> Result<f64> {
    let losses = frame_losses(learner, model, memory)?;
    Ok(compose_joint_loss(&losses, memory.alpha(), memory.priors(), mu, learner.penalty(model)))
}

fn compose_joint_loss(losses: &[f64], alpha: &[f64], priors: &[f64], mu: f64, penalty: f64) -> f64 {
    let data: f64 = alpha.iter().zip(losses).map(|(a, l)| a * l).sum();
    let prior: f64 = alpha.iter().zip(priors).map(|(a, r)| a * a / r).sum();
    data + prior / mu + penalty
}

/// Result of one call to [`acs_update`].
#[derive(Debug, Clone)]
pub struct AcsOutcome<M> {
    pub model: M,
    pub alpha: SimplexWeights,
    /// Losses under the final model, used for the final `α` step.
    pub losses: Vec<f64>,
    /// `J(θ^(i), α^(i))` after each iteration.
    pub objective_trace: Vec<f64>,
    /// False when the update ran before the activation frame.
    pub weights_optimized: bool,
}

/// Runs `N` alternating iterations: train under the current `α`, evaluate the
/// per-frame losses, then solve for `α`. The memory's weights are updated.
pub fn acs_update<L: Learner>(
    memory: &mut TrainingMemory<L::Frame>,
    config: &JointConfig,
    learner: &L,
    warm: Option<&L::Model>,
) -> Result<AcsOutcome<L::Model>> {
    config.validate()?;
    let newest = memory.newest_index().ok_or(Error::Empty("training memory"))?;
    let priors = memory.prior_weights()?;

    if newest < config.activation_frame {
        memory.set_alpha(SimplexWeights::from(priors))?;
        let model = learner.train(memory.frames(), memory.alpha(), warm)?;
        let losses = frame_losses(learner, &model, memory)?;
        let value = compose_joint_loss(&losses, memory.alpha(), memory.priors(), config.mu, learner.penalty(&model));
        return Ok(AcsOutcome {
            model,
            alpha: SimplexWeights::new(memory.alpha().to_vec())?,
            losses,
            objective_trace: vec![value],
            weights_optimized: false,
        });
    }

    let mut warm_model = warm.cloned();
    let mut trace = Vec::with_capacity(config.acs_iterations);
    let mut last = None;
    for _ in 0..config.acs_iterations {
        let model = learner.train(memory.frames(), memory.alpha(), warm_model.as_ref())?;
        let losses = frame_losses(learner, &model, memory)?;
        let problem = AlphaSubproblem::new(losses.clone(), &priors, config.mu)?;
        memory.set_alpha(solve_alpha(&problem))?;
        trace.push(compose_joint_loss(
            &losses,
            memory.alpha(),
            memory.priors(),
            config.mu,
            learner.penalty(&model),
        ));
        warm_model = Some(model.clone());
        last = Some((model, losses));
    }
    let (model, losses) = last.expect("at least one iteration");
    Ok(AcsOutcome {
        model,
        alpha: SimplexWeights::new(memory.alpha().to_vec())?,
        losses,
        objective_trace: trace,
        weights_optimized: true,
    })
}
