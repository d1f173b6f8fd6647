//! Sequence sources, feature extraction, localization and the per-frame
//! tracking loop.

mod features;
mod loader;
mod stream;
mod synth;
mod tracker;

pub use features::{extract_features, search_region, FeatureConfig, Region};
pub use loader::{load_corruption_labels, load_sequence, parse_ground_truth, write_sequence};
pub use stream::{generate_class_stream, run_class_stream, ClassStream, ClassStreamConfig, StreamOutcome};
pub use synth::{generate_sequence, CorruptionScript, FillMode, Occlusion, RandomOcclusions};
pub use tracker::{label_for, localize, track, LearnerKind, Strategy, SvmTrackerConfig, TrackerConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box. `x`, `y` are the 1-based coordinates of the top-left
/// pixel, as in ground-truth files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("rectangle"));
        }
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidParameter(format!("rectangle extents must be positive, got {w}x{h}")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Center in 0-based continuous pixel coordinates, where pixel `i` spans `[i, i + 1)`.
    pub fn center(&self) -> (f64, f64) {
        (self.x - 1.0 + self.w / 2.0, self.y - 1.0 + self.h / 2.0)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let h = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        w.max(0.0) * h.max(0.0)
    }

    /// True when no pixel of the box lies inside a `width × height` frame.
    pub fn outside(&self, width: usize, height: usize) -> bool {
        let frame = Rect {
            x: 1.0,
            y: 1.0,
            w: width as f64,
            h: height as f64,
        };
        self.intersection_area(&frame) <= 0.0
    }
}

/// Grayscale image with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayFrame {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter("frame dimensions must be positive".into()));
        }
        if pixels.len() != height * width {
            return Err(Error::mismatch(height * width, pixels.len()));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("frame pixels"));
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("frame pixels must lie in [0, 1]".into()));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Bilinear sample at 0-based pixel-center coordinates, replicating the
    /// nearest edge outside the frame.
    pub fn sample(&self, row: f64, col: f64) -> f64 {
        let r = row.clamp(0.0, (self.height - 1) as f64);
        let c = col.clamp(0.0, (self.width - 1) as f64);
        let (r0, c0) = (r.floor() as usize, c.floor() as usize);
        let (r1, c1) = ((r0 + 1).min(self.height - 1), (c0 + 1).min(self.width - 1));
        let (fr, fc) = (r - r0 as f64, c - c0 as f64);
        let top = self.get(r0, c0) * (1.0 - fc) + self.get(r0, c1) * fc;
        let bottom = self.get(r1, c0) * (1.0 - fc) + self.get(r1, c1) * fc;
        top * (1.0 - fr) + bottom * fr
    }
}

/// Frames with one ground-truth box each.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<GrayFrame>,
    pub ground_truth: Vec<Rect>,
    /// Per-frame corruption flags; present for generated sequences.
    pub corruption_labels: Option<Vec<bool>>,
}

impl Sequence {
    pub fn new(
        name: impl Into<String>,
        frames: Vec<GrayFrame>,
        ground_truth: Vec<Rect>,
        corruption_labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        if frames.len() != ground_truth.len() {
            return Err(Error::mismatch(format!("{} rectangles", frames.len()), ground_truth.len()));
        }
        if let Some(labels) = &corruption_labels {
            if labels.len() != frames.len() {
                return Err(Error::mismatch(format!("{} corruption labels", frames.len()), labels.len()));
            }
        }
        Ok(Self {
            name: name.into(),
            frames,
            ground_truth,
            corruption_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
