//! Search-region features: mean-removed intensity, central-difference
//! gradients and optional orientation bins on a fixed grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{GrayFrame, Rect};
use crate::error::{Error, Result};
use crate::learners::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Side of the square sampling grid.
    pub grid: usize,
    /// Search region size relative to the target box.
    pub search_scale: f64,
    /// Adds 4 signed gradient-orientation channels.
    pub orientation_bins: bool,
    /// Scales all channels jointly to unit norm, before windowing.
    pub normalize: bool,
    pub cosine_window: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            grid: 48,
            search_scale: 2.0,
            orientation_bins: false,
            normalize: true,
            cosine_window: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 4 {
            return Err(Error::InvalidParameter(format!("feature grid must be at least 4, got {}", self.grid)));
        }
        if !(self.search_scale > 0.0 && self.search_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "search scale must be positive, got {}",
                self.search_scale
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        if self.orientation_bins {
            7
        } else {
            3
        }
    }
}

/// Search region in 0-based continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
}

impl Region {
    /// Pixels per grid cell horizontally and vertically.
    pub fn cell(&self, grid: usize) -> (f64, f64) {
        (self.width / grid as f64, self.height / grid as f64)
    }

    fn intersects(&self, frame: &GrayFrame) -> bool {
        let (x0, x1) = (self.center_x - self.width / 2.0, self.center_x + self.width / 2.0);
        let (y0, y1) = (self.center_y - self.height / 2.0, self.center_y + self.height / 2.0);
        x1 > 0.0 && y1 > 0.0 && x0 < frame.width() as f64 && y0 < frame.height() as f64
    }
}

pub fn search_region(target: &Rect, config: &FeatureConfig) -> Region {
    let (cx, cy) = target.center();
    Region {
        center_x: cx,
        center_y: cy,
        width: target.w * config.search_scale,
        height: target.h * config.search_scale,
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Samples the search region around `target` and builds the feature channels.
pub fn extract_features(frame: &GrayFrame, target: &Rect, config: &FeatureConfig) -> Result<FeatureMap> {
    config.validate()?;
    let region = search_region(target, config);
    if !region.intersects(frame) {
        return Err(Error::EmptyIntersection);
    }
    let g = config.grid;
    let (sx, sy) = region.cell(g);
    let left = region.center_x - region.width / 2.0;
    let top = region.center_y - region.height / 2.0;
    let mut gray: Vec<f64> = (0..g * g)
        .map(|i| {
            let (r, c) = (i / g, i % g);
            let row = top + (r as f64 + 0.5) * sy - 0.5;
            let col = left + (c as f64 + 0.5) * sx - 0.5;
            frame.sample(row, col)
        })
        .collect();
    let mean = gray.iter().sum::<f64>() / gray.len() as f64;
    gray.iter_mut().for_each(|v| *v -= mean);
    // Residue of a flat region is rounding error; normalization would amplify it.
    if gray.iter().all(|v| v.abs() <= 1e-12) {
        gray.iter_mut().for_each(|v| *v = 0.0);
    }

    let at = |r: usize, c: usize| gray[r * g + c];
    let mut gx = vec![0.0; g * g];
    let mut gy = vec![0.0; g * g];
    for r in 0..g {
        for c in 0..g {
            gx[r * g + c] = 0.5 * (at(r, (c + 1).min(g - 1)) - at(r, c.saturating_sub(1)));
            gy[r * g + c] = 0.5 * (at((r + 1).min(g - 1), c) - at(r.saturating_sub(1), c));
        }
    }
    let mut channels = vec![gray, gx, gy];
    if config.orientation_bins {
        let mut bins = vec![vec![0.0; g * g]; 4];
        for i in 0..g * g {
            let (dx, dy) = (channels[1][i], channels[2][i]);
            let magnitude = dx.hypot(dy);
            if magnitude > 0.0 {
                let angle = dy.atan2(dx) + PI;
                let b = ((angle / (PI / 2.0)) as usize).min(3);
                bins[b][i] = magnitude;
            }
        }
        channels.extend(bins);
    }

    if config.normalize {
        let energy = channels.iter().flatten().map(|v| v * v).sum::<f64>();
        if energy > 0.0 {
            let scale = 1.0 / energy.sqrt();
            channels.iter_mut().flatten().for_each(|v| *v *= scale);
        }
    }
    if config.cosine_window {
        let w = hann(g);
        for ch in channels.iter_mut() {
            for r in 0..g {
                for c in 0..g {
                    ch[r * g + c] *= w[r] * w[c];
                }
            }
        }
    }
    FeatureMap::from_channels(g, g, channels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> GrayFrame {
        GrayFrame::new(h, w, (0..h * w).map(|i| f(i / w, i % w)).collect()).unwrap()
    }

    fn config(window: bool) -> FeatureConfig {
        FeatureConfig {
            grid: 16,
            cosine_window: window,
            ..FeatureConfig::default()
        }
    }

    #[test]
    fn constant_frame_gives_zero_features() {
        let f = frame(40, 40, |_, _| 0.6);
        let target = Rect::new(13.0, 13.0, 8.0, 8.0).unwrap();
        let map = extract_features(&f, &target, &config(false)).unwrap();
        assert!(map.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn vertical_edge_has_localized_horizontal_gradient() {
        // Region 16x16 px sampled on a 16 grid: one cell per pixel.
        let f = frame(40, 40, |_, c| if c < 20 { 0.2 } else { 0.8 });
        let target = Rect::new(17.0, 17.0, 8.0, 8.0).unwrap();
        let map = extract_features(&f, &target, &config(false)).unwrap();
        // Region columns start at pixel 12, so the edge sits between grid columns 7 and 8.
        for r in 0..16 {
            for c in 0..16 {
                let gx = map.get(1, r, c);
                assert_eq!(gx != 0.0, c == 7 || c == 8, "({r}, {c}) = {gx}");
                assert_eq!(map.get(2, r, c), 0.0);
            }
        }
    }

    #[test]
    fn window_zeroes_borders() {
        let f = frame(50, 50, |r, c| ((r * 7 + c * 3) % 11) as f64 / 10.0);
        let target = Rect::new(20.0, 18.0, 10.0, 12.0).unwrap();
        let cfg = FeatureConfig {
            orientation_bins: true,
            ..config(true)
        };
        let map = extract_features(&f, &target, &cfg).unwrap();
        assert_eq!(map.channels(), 7);
        for l in 0..7 {
            for i in 0..16 {
                for (r, c) in [(0, i), (15, i), (i, 0), (i, 15)] {
                    assert_eq!(map.get(l, r, c), 0.0);
                }
            }
        }
        assert!(map.squared_norm() > 0.0);
    }

    #[test]
    fn out_of_frame_region_is_rejected() {
        let f = frame(20, 20, |r, _| r as f64 / 20.0);
        let far = Rect::new(200.0, 200.0, 5.0, 5.0).unwrap();
        assert!(matches!(extract_features(&f, &far, &config(true)), Err(Error::EmptyIntersection)));
        // Partial overlap replicates the edge instead.
        let edge = Rect::new(-3.0, 5.0, 6.0, 6.0).unwrap();
        assert!(extract_features(&f, &edge, &config(true)).is_ok());
    }
}
