//! Per-frame tracking loop: localize, add the new sample, update the frame
//! weights with the configured strategy, retrain.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{extract_features, search_region, FeatureConfig, GrayFrame, Rect, Sequence};
use crate::baselines::{decay_weights, psr_gate, DecayConfig, GateDecision, PsrConfig};
use crate::error::{Error, Result};
use crate::eval::TrackReport;
use crate::joint::{acs_update, frame_losses, JointConfig, TrainingMemory, WeightLogRow};
use crate::kv;
use crate::learners::{
    make_gaussian_label, Class, ClassFrame, ClassSample, CorrelationFilter, FilterLearner, LabelMap, Learner,
    LinearSvmModel, SvmLearner, TrainingSample,
};
use crate::weights::PriorSchedule;

/// How frame weights are set after each new sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    /// Alternating estimation of model and weights.
    Joint,
    /// `α_k ∝ (1 − γ)^(t − k)`.
    FixedDecay(DecayConfig),
    /// Fixed decay, skipping samples whose confidence map fails the PSR gate.
    PsrGated { psr: PsrConfig, decay: DecayConfig },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Joint => "joint",
            Strategy::FixedDecay(_) => "fixed",
            Strategy::PsrGated { .. } => "psr",
        }
    }
}

/// Patch-classifier settings for the SVM tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmTrackerConfig {
    /// Side of the square patch grid.
    pub patch: usize,
    pub negatives: usize,
    /// Optimizer iterations per training call.
    pub budget: usize,
    /// Candidate spacing in pixels.
    pub scan_step: f64,
    /// Scan half-width relative to the larger target side.
    pub scan_radius: f64,
}

impl Default for SvmTrackerConfig {
    fn default() -> Self {
        Self {
            patch: 12,
            negatives: 20,
            budget: 100,
            scan_step: 2.0,
            scan_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LearnerKind {
    /// Correlation filter over the search region.
    Filter,
    /// Linear SVM over target-sized patches.
    Svm(SvmTrackerConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub joint: JointConfig,
    pub strategy: Strategy,
    pub features: FeatureConfig,
    /// Label standard deviation as a fraction of `√(target area)`.
    pub label_sigma_factor: f64,
    pub learner: LearnerKind,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            joint: JointConfig::default(),
            strategy: Strategy::Joint,
            features: FeatureConfig::default(),
            label_sigma_factor: 0.1,
            learner: LearnerKind::Filter,
        }
    }
}

fn parse_bool(e: &kv::Entry, origin: &Path) -> Result<bool> {
    match e.value.as_str() {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(kv::error(e, origin, format!("invalid boolean `{}` for key `{}`", e.value, e.key))),
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.joint.validate()?;
        self.features.validate()?;
        if !(self.label_sigma_factor > 0.0 && self.label_sigma_factor.is_finite()) {
            return Err(Error::InvalidParameter("label sigma factor must be positive".into()));
        }
        if let Strategy::PsrGated { psr, .. } = &self.strategy {
            psr.validate()?;
        }
        if let LearnerKind::Svm(s) = &self.learner {
            if s.patch == 0 || s.budget == 0 || !(s.scan_step > 0.0) || !(s.scan_radius >= 0.0) {
                return Err(Error::InvalidParameter("invalid svm tracker settings".into()));
            }
        }
        Ok(())
    }

    fn decay(&self) -> DecayConfig {
        match self.strategy {
            Strategy::FixedDecay(d) | Strategy::PsrGated { decay: d, .. } => d,
            Strategy::Joint => DecayConfig::default(),
        }
    }

    fn psr(&self) -> PsrConfig {
        match self.strategy {
            Strategy::PsrGated { psr, .. } => psr,
            _ => PsrConfig::default(),
        }
    }

    /// Applies one `section.key` entry. Returns `Ok(false)` for keys outside
    /// the tracker sections so callers can handle their own.
    pub fn set(&mut self, e: &kv::Entry, origin: &Path) -> Result<bool> {
        let v = |e: &kv::Entry| kv::value::<f64>(e, origin);
        let n = |e: &kv::Entry| kv::value::<usize>(e, origin);
        match e.key.as_str() {
            "joint.mu" => self.joint.mu = v(e)?,
            "joint.acs_iterations" => self.joint.acs_iterations = n(e)?,
            "joint.window" => {
                self.joint.schedule =
                    PriorSchedule::new(n(e)?, self.joint.schedule.decay()).map_err(|m| kv::error(e, origin, m.to_string()))?
            }
            "joint.eta" => {
                self.joint.schedule =
                    PriorSchedule::new(self.joint.schedule.window(), v(e)?).map_err(|m| kv::error(e, origin, m.to_string()))?
            }
            "joint.capacity" => self.joint.capacity = n(e)?,
            "joint.activation_frame" => self.joint.activation_frame = n(e)?,
            "joint.lambda" => self.joint.lambda = v(e)?,
            "strategy.kind" => {
                let (decay, psr) = (self.decay(), self.psr());
                self.strategy = match e.value.as_str() {
                    "joint" => Strategy::Joint,
                    "fixed" => Strategy::FixedDecay(decay),
                    "psr" => Strategy::PsrGated { psr, decay },
                    other => {
                        return Err(kv::error(e, origin, format!("unknown strategy `{other}` (joint, fixed, psr)")))
                    }
                }
            }
            "strategy.gamma" => {
                let d = DecayConfig::new(v(e)?).map_err(|m| kv::error(e, origin, m.to_string()))?;
                match &mut self.strategy {
                    Strategy::FixedDecay(decay) | Strategy::PsrGated { decay, .. } => *decay = d,
                    Strategy::Joint => self.strategy = Strategy::FixedDecay(d),
                }
            }
            "strategy.psr_threshold" | "strategy.psr_radius" => {
                let mut psr = self.psr();
                if e.key.ends_with("threshold") {
                    psr.threshold = v(e)?;
                } else {
                    psr.exclusion_radius = n(e)?;
                }
                self.strategy = Strategy::PsrGated {
                    psr,
                    decay: self.decay(),
                };
            }
            "features.grid" => self.features.grid = n(e)?,
            "features.search_scale" => self.features.search_scale = v(e)?,
            "features.orientation_bins" => self.features.orientation_bins = parse_bool(e, origin)?,
            "features.normalize" => self.features.normalize = parse_bool(e, origin)?,
            "features.cosine_window" => self.features.cosine_window = parse_bool(e, origin)?,
            "tracker.label_sigma_factor" => self.label_sigma_factor = v(e)?,
            "tracker.learner" => {
                self.learner = match e.value.as_str() {
                    "filter" => LearnerKind::Filter,
                    "svm" => LearnerKind::Svm(self.svm()),
                    other => return Err(kv::error(e, origin, format!("unknown learner `{other}` (filter, svm)"))),
                }
            }
            key if key.starts_with("svm.") => {
                let mut s = self.svm();
                match key {
                    "svm.patch" => s.patch = n(e)?,
                    "svm.negatives" => s.negatives = n(e)?,
                    "svm.budget" => s.budget = n(e)?,
                    "svm.scan_step" => s.scan_step = v(e)?,
                    "svm.scan_radius" => s.scan_radius = v(e)?,
                    _ => return Err(kv::error(e, origin, format!("unknown key `{key}`"))),
                }
                self.learner = LearnerKind::Svm(s);
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn svm(&self) -> SvmTrackerConfig {
        match self.learner {
            LearnerKind::Svm(s) => s,
            LearnerKind::Filter => SvmTrackerConfig::default(),
        }
    }

    /// Key-value echo that [`TrackerConfig::set`] reads back.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let j = &self.joint;
        let mut p: Vec<(String, String)> = vec![
            ("joint.mu".into(), j.mu.to_string()),
            ("joint.acs_iterations".into(), j.acs_iterations.to_string()),
            ("joint.window".into(), j.schedule.window().to_string()),
            ("joint.eta".into(), j.schedule.decay().to_string()),
            ("joint.capacity".into(), j.capacity.to_string()),
            ("joint.activation_frame".into(), j.activation_frame.to_string()),
            ("joint.lambda".into(), j.lambda.to_string()),
            ("strategy.kind".into(), self.strategy.name().into()),
        ];
        match self.strategy {
            Strategy::Joint => {}
            Strategy::FixedDecay(d) => p.push(("strategy.gamma".into(), d.gamma().to_string())),
            Strategy::PsrGated { psr, decay } => {
                p.push(("strategy.gamma".into(), decay.gamma().to_string()));
                p.push(("strategy.psr_threshold".into(), psr.threshold.to_string()));
                p.push(("strategy.psr_radius".into(), psr.exclusion_radius.to_string()));
            }
        }
        let f = &self.features;
        p.extend([
            ("features.grid".into(), f.grid.to_string()),
            ("features.search_scale".into(), f.search_scale.to_string()),
            ("features.orientation_bins".into(), f.orientation_bins.to_string()),
            ("features.normalize".into(), f.normalize.to_string()),
            ("features.cosine_window".into(), f.cosine_window.to_string()),
            ("tracker.label_sigma_factor".into(), self.label_sigma_factor.to_string()),
        ]);
        match self.learner {
            LearnerKind::Filter => p.push(("tracker.learner".into(), "filter".into())),
            LearnerKind::Svm(s) => p.extend([
                ("tracker.learner".into(), "svm".into()),
                ("svm.patch".into(), s.patch.to_string()),
                ("svm.negatives".into(), s.negatives.to_string()),
                ("svm.budget".into(), s.budget.to_string()),
                ("svm.scan_step".into(), s.scan_step.to_string()),
                ("svm.scan_radius".into(), s.scan_radius.to_string()),
            ]),
        }
        p
    }
}

/// Desired confidence map: a Gaussian centered on the grid, with standard
/// deviation `factor · √(w h)` pixels.
pub fn label_for(target: &Rect, features: &FeatureConfig, factor: f64) -> Result<LabelMap> {
    let g = features.grid;
    let (sx, sy) = search_region(target, features).cell(g);
    let sigma = factor * target.area().sqrt() / (sx * sy).sqrt();
    make_gaussian_label(g, g, (g / 2, g / 2), sigma)
}

fn wrap(index: usize, n: usize) -> f64 {
    let centered = index as isize - (n / 2) as isize;
    let n = n as isize;
    (((centered + n / 2).rem_euclid(n)) - n / 2) as f64
}

fn peak_shift(confidence: &LabelMap, target: &Rect, features: &FeatureConfig) -> (f64, f64) {
    let g = features.grid;
    let (r, c) = confidence.argmax();
    let (sx, sy) = search_region(target, features).cell(g);
    (wrap(c, g) * sx, wrap(r, g) * sy)
}

/// Moves `previous` to the confidence peak found in `frame`.
pub fn localize(
    model: &CorrelationFilter,
    frame: &GrayFrame,
    previous: &Rect,
    features: &FeatureConfig,
) -> Result<Rect> {
    let map = extract_features(frame, previous, features)?;
    let confidence = crate::learners::filter_confidence(model, &map)?;
    let (dx, dy) = peak_shift(&confidence, previous, features);
    Ok(previous.translated(dx, dy))
}

/// Frame-weight update shared by both learner kinds. Returns the retrained
/// model and the per-frame losses behind the logged weights.
fn update<L: Learner>(
    memory: &mut TrainingMemory<L::Frame>,
    config: &TrackerConfig,
    learner: &L,
    warm: Option<&L::Model>,
) -> Result<(L::Model, Vec<f64>)> {
    match config.strategy {
        Strategy::Joint => {
            let out = acs_update(memory, &config.joint, learner, warm)?;
            let model = learner.train(memory.frames(), memory.alpha(), Some(&out.model))?;
            Ok((model, out.losses))
        }
        Strategy::FixedDecay(decay) | Strategy::PsrGated { decay, .. } => {
            memory.set_alpha(decay_weights(memory.len(), decay)?)?;
            let model = learner.train(memory.frames(), memory.alpha(), warm)?;
            let losses = frame_losses(learner, &model, memory)?;
            Ok((model, losses))
        }
    }
}

fn gate_accepts(config: &TrackerConfig, confidence: &LabelMap) -> Result<bool> {
    match &config.strategy {
        Strategy::PsrGated { psr, .. } => Ok(psr_gate(confidence, psr)? == GateDecision::Accept),
        _ => Ok(true),
    }
}

struct Progress {
    trajectory: Vec<Rect>,
    lost: Vec<bool>,
    frame_ms: Vec<f64>,
    weight_log: Vec<WeightLogRow>,
}

impl Progress {
    fn new(n: usize) -> Self {
        Self {
            trajectory: Vec::with_capacity(n),
            lost: Vec::with_capacity(n),
            frame_ms: Vec::with_capacity(n),
            weight_log: Vec::new(),
        }
    }

    fn finish(self, sequence: &Sequence, config: &TrackerConfig, seed: u64) -> TrackReport {
        let mut echo = config.to_pairs();
        echo.push(("run.seed".into(), seed.to_string()));
        TrackReport {
            sequence: sequence.name.clone(),
            seed,
            trajectory: self.trajectory,
            ground_truth: sequence.ground_truth.clone(),
            lost: self.lost,
            corruption_labels: sequence.corruption_labels.clone(),
            frame_ms: self.frame_ms,
            weight_log: self.weight_log,
            config: echo,
        }
    }
}

/// Runs the tracker over `sequence`, initialized from the first
/// ground-truth box. `seed` drives the SVM negative sampling.
pub fn track(sequence: &Sequence, config: &TrackerConfig, seed: u64) -> Result<TrackReport> {
    config.validate()?;
    if sequence.len() < 2 {
        return Err(Error::InvalidParameter("tracking needs at least two frames".into()));
    }
    match config.learner {
        LearnerKind::Filter => track_filter(sequence, config, seed),
        LearnerKind::Svm(svm) => track_svm(sequence, config, &svm, seed),
    }
}

fn track_filter(sequence: &Sequence, config: &TrackerConfig, seed: u64) -> Result<TrackReport> {
    let g = config.features.grid;
    let learner = FilterLearner::new(g, g, config.joint.lambda)?;
    let init = sequence.ground_truth[0];
    let label = label_for(&init, &config.features, config.label_sigma_factor)?;
    let mut memory = TrainingMemory::new(config.joint.capacity, config.joint.schedule)?;
    let mut progress = Progress::new(sequence.len());

    let clock = Instant::now();
    let sample = |frame: &GrayFrame, rect: &Rect, index: usize| -> Result<_> {
        let features = extract_features(frame, rect, &config.features)?;
        learner.spectral(&TrainingSample::new(features, label.clone(), index)?)
    };
    memory.add_frame(1, sample(&sequence.frames[0], &init, 1)?)?;
    let (mut model, losses) = update(&mut memory, config, &learner, None)?;
    progress.weight_log.extend(memory.log_rows(1, &losses));
    progress.trajectory.push(init);
    progress.lost.push(false);
    progress.frame_ms.push(clock.elapsed().as_secs_f64() * 1e3);

    for (k, frame) in sequence.frames.iter().enumerate().skip(1) {
        let index = k + 1;
        let clock = Instant::now();
        let previous = *progress.trajectory.last().expect("initialized");
        let confidence = match extract_features(frame, &previous, &config.features) {
            Ok(map) => Some(learner.confidence(&model, &map)?),
            Err(Error::EmptyIntersection) => None,
            Err(e) => return Err(e),
        };
        let Some(confidence) = confidence else {
            progress.trajectory.push(previous);
            progress.lost.push(true);
            progress.frame_ms.push(clock.elapsed().as_secs_f64() * 1e3);
            continue;
        };
        let (dx, dy) = peak_shift(&confidence, &previous, &config.features);
        let rect = previous.translated(dx, dy);
        let lost = rect.outside(frame.width(), frame.height());
        if !lost && gate_accepts(config, &confidence)? {
            memory.add_frame(index, sample(frame, &rect, index)?)?;
            let (next, losses) = update(&mut memory, config, &learner, Some(&model))?;
            model = next;
            progress.weight_log.extend(memory.log_rows(index, &losses));
        }
        progress.trajectory.push(rect);
        progress.lost.push(lost);
        progress.frame_ms.push(clock.elapsed().as_secs_f64() * 1e3);
    }
    Ok(progress.finish(sequence, config, seed))
}

/// Unit-norm, mean-removed intensity patch over `rect`.
fn patch_features(frame: &GrayFrame, rect: &Rect, p: usize) -> Vec<f64> {
    let (x0, y0) = (rect.x - 1.0, rect.y - 1.0);
    let (sx, sy) = (rect.w / p as f64, rect.h / p as f64);
    let mut v: Vec<f64> = (0..p * p)
        .map(|i| {
            let (r, c) = ((i / p) as f64, (i % p) as f64);
            frame.sample(y0 + (r + 0.5) * sy - 0.5, x0 + (c + 0.5) * sx - 0.5)
        })
        .collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn svm_frame(frame: &GrayFrame, rect: &Rect, svm: &SvmTrackerConfig, index: usize, rng: &mut ChaCha8Rng) -> ClassFrame {
    let mut samples = vec![ClassSample {
        features: patch_features(frame, rect, svm.patch),
        class: Class::Positive,
    }];
    let side = rect.w.max(rect.h);
    for _ in 0..svm.negatives {
        let radius = rng.random_range(0.5..1.0) * side;
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let shifted = rect.translated((radius * angle.cos()).round(), (radius * angle.sin()).round());
        samples.push(ClassSample {
            features: patch_features(frame, &shifted, svm.patch),
            class: Class::Negative,
        });
    }
    ClassFrame {
        frame_index: index,
        samples,
    }
}

/// Scores candidate boxes on a square grid of offsets; returns the best
/// offset and the score map (row-major, top-left first).
fn scan(model: &LinearSvmModel, frame: &GrayFrame, previous: &Rect, svm: &SvmTrackerConfig) -> Result<((f64, f64), LabelMap)> {
    let half = (svm.scan_radius * previous.w.max(previous.h) / svm.scan_step).floor() as isize;
    let n = (2 * half + 1) as usize;
    let mut scores = Vec::with_capacity(n * n);
    let mut best = (f64::NEG_INFINITY, (0.0, 0.0));
    for i in -half..=half {
        for j in -half..=half {
            let (dx, dy) = (j as f64 * svm.scan_step, i as f64 * svm.scan_step);
            let s = model.score(&patch_features(frame, &previous.translated(dx, dy), svm.patch));
            if s > best.0 {
                best = (s, (dx, dy));
            }
            scores.push(s);
        }
    }
    Ok((best.1, LabelMap::new(n, n, scores)?))
}

fn track_svm(sequence: &Sequence, config: &TrackerConfig, svm: &SvmTrackerConfig, seed: u64) -> Result<TrackReport> {
    let learner = SvmLearner {
        lambda: config.joint.lambda,
        budget: svm.budget,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut memory = TrainingMemory::new(config.joint.capacity, config.joint.schedule)?;
    let mut progress = Progress::new(sequence.len());
    let init = sequence.ground_truth[0];

    let clock = Instant::now();
    memory.add_frame(1, svm_frame(&sequence.frames[0], &init, svm, 1, &mut rng))?;
    let (mut model, losses) = update(&mut memory, config, &learner, None)?;
    progress.weight_log.extend(memory.log_rows(1, &losses));
    progress.trajectory.push(init);
    progress.lost.push(false);
    progress.frame_ms.push(clock.elapsed().as_secs_f64() * 1e3);

    for (k, frame) in sequence.frames.iter().enumerate().skip(1) {
        let index = k + 1;
        let clock = Instant::now();
        let previous = *progress.trajectory.last().expect("initialized");
        let ((dx, dy), scores) = scan(&model, frame, &previous, svm)?;
        let rect = previous.translated(dx, dy);
        let lost = rect.outside(frame.width(), frame.height());
        if !lost && gate_accepts(config, &scores)? {
            memory.add_frame(index, svm_frame(frame, &rect, svm, index, &mut rng))?;
            let (next, losses) = update(&mut memory, config, &learner, Some(&model))?;
            model = next;
            progress.weight_log.extend(memory.log_rows(index, &losses));
        }
        progress.trajectory.push(rect);
        progress.lost.push(lost);
        progress.frame_ms.push(clock.elapsed().as_secs_f64() * 1e3);
    }
    Ok(progress.finish(sequence, config, seed))
}
