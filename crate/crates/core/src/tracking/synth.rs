//! Seeded synthetic sequences: a textured target moving over a textured
//! background, with scripted occlusion, jitter, appearance drift and noise.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GrayFrame, Rect, Sequence};
use crate::error::{Error, Result};
use crate::kv;

/// What covers the occluded part of the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FillMode {
    /// The background texture shows through.
    Background,
    /// Fresh uniform noise every frame.
    Noise,
    /// Constant mid-gray.
    Gray,
    /// A fixed textured occluder, the same in every frame.
    Object,
}

impl FillMode {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "background" => Some(Self::Background),
            "noise" => Some(Self::Noise),
            "gray" => Some(Self::Gray),
            "object" => Some(Self::Object),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Background => "background",
            Self::Noise => "noise",
            Self::Gray => "gray",
            Self::Object => "object",
        }
    }
}

/// Frames `start..=end` (1-based) have the left `fraction` of the target covered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub start: usize,
    pub end: usize,
    pub fraction: f64,
    pub mode: FillMode,
}

/// Seeded placement of fully occluded intervals, expanded at generation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomOcclusions {
    /// Fraction of all frames to occlude.
    pub share: f64,
    /// Length of each interval in frames.
    pub span: usize,
    /// No interval starts before this frame.
    pub first_frame: usize,
    pub mode: FillMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionScript {
    pub length: usize,
    pub frame_width: usize,
    pub frame_height: usize,
    pub target_width: usize,
    pub target_height: usize,
    /// Peak target speed in pixels per frame; 0 keeps the target still.
    pub speed: f64,
    pub occlusions: Vec<Occlusion>,
    pub random_occlusions: Option<RandomOcclusions>,
    /// Standard deviation of the per-frame position jitter in pixels.
    pub jitter_std: f64,
    /// Jitter displacements longer than this mark the frame as corrupted.
    pub jitter_threshold: f64,
    /// Per-frame blend rate from the initial to a second target texture.
    pub drift_rate: f64,
    pub noise_std: f64,
}

impl Default for CorruptionScript {
    fn default() -> Self {
        Self {
            length: 100,
            frame_width: 128,
            frame_height: 128,
            target_width: 32,
            target_height: 32,
            speed: 1.0,
            occlusions: Vec::new(),
            random_occlusions: None,
            jitter_std: 0.0,
            jitter_threshold: 3.0,
            drift_rate: 0.0,
            noise_std: 0.0,
        }
    }
}

impl CorruptionScript {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.length == 0 {
            return bad("length must be at least 1".into());
        }
        if self.target_width == 0 || self.target_height == 0 {
            return bad("target size must be positive".into());
        }
        if self.target_width > self.frame_width || self.target_height > self.frame_height {
            return bad("target does not fit in the frame".into());
        }
        for (name, v) in [
            ("speed", self.speed),
            ("jitter_std", self.jitter_std),
            ("jitter_threshold", self.jitter_threshold),
            ("drift_rate", self.drift_rate),
            ("noise_std", self.noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        for o in &self.occlusions {
            if o.start < 1 || o.start > o.end || o.end > self.length {
                return bad(format!("occlusion {}..{} outside frames 1..{}", o.start, o.end, self.length));
            }
            if !(0.0..=1.0).contains(&o.fraction) {
                return bad(format!("occlusion fraction {} outside [0, 1]", o.fraction));
            }
        }
        if let Some(r) = &self.random_occlusions {
            if !(0.0..=1.0).contains(&r.share) || r.span == 0 || r.first_frame == 0 {
                return bad("random occlusions need share in [0, 1], span >= 1, first frame >= 1".into());
            }
            let count = r.count(self.length);
            let room = (self.length + 1).saturating_sub(r.first_frame);
            if count > 0 && count * r.span + count - 1 > room {
                return bad(format!(
                    "{count} occlusions of {} frames do not fit after frame {}",
                    r.span, r.first_frame
                ));
            }
        }
        Ok(())
    }

    /// Reads the `key = value` script format.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut s = Self::default();
        for e in kv::parse(text, origin)? {
            s.set(&e.key, &e, origin)?;
        }
        s.validate()?;
        Ok(s)
    }

    /// Applies one entry under the bare key `key`.
    pub fn set(&mut self, key: &str, e: &kv::Entry, origin: &Path) -> Result<()> {
        match key {
            "length" => self.length = kv::value(e, origin)?,
            "frame_size" => (self.frame_width, self.frame_height) = size(e, origin)?,
            "target_size" => (self.target_width, self.target_height) = size(e, origin)?,
            "speed" => self.speed = kv::value(e, origin)?,
            "occlusion" => self.occlusions.push(occlusion(e, origin)?),
            "random_occlusion" => self.random_occlusions = Some(random_occlusion(e, origin)?),
            "jitter_std" => self.jitter_std = kv::value(e, origin)?,
            "jitter_threshold" => self.jitter_threshold = kv::value(e, origin)?,
            "drift_rate" => self.drift_rate = kv::value(e, origin)?,
            "noise_std" => self.noise_std = kv::value(e, origin)?,
            _ => return Err(kv::error(e, origin, format!("unknown key `{}`", e.key))),
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Key-value pairs that [`CorruptionScript::parse`] reads back.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut p = vec![
            ("length".to_string(), self.length.to_string()),
            ("frame_size".into(), format!("{}x{}", self.frame_width, self.frame_height)),
            ("target_size".into(), format!("{}x{}", self.target_width, self.target_height)),
            ("speed".into(), self.speed.to_string()),
            ("jitter_std".into(), self.jitter_std.to_string()),
            ("jitter_threshold".into(), self.jitter_threshold.to_string()),
            ("drift_rate".into(), self.drift_rate.to_string()),
            ("noise_std".into(), self.noise_std.to_string()),
        ];
        for o in &self.occlusions {
            p.push((
                "occlusion".into(),
                format!("{}:{}:{}:{}", o.start, o.end, o.fraction, o.mode.name()),
            ));
        }
        if let Some(r) = &self.random_occlusions {
            p.push((
                "random_occlusion".into(),
                format!("{}:{}:{}:{}", r.share, r.span, r.first_frame, r.mode.name()),
            ));
        }
        p
    }

    /// Explicit intervals plus the seeded random ones.
    pub fn resolved_occlusions(&self, seed: u64) -> Vec<Occlusion> {
        let mut all = self.occlusions.clone();
        if let Some(r) = &self.random_occlusions {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f63_636c_7573_696f);
            all.extend(r.place(self.length, &mut rng));
        }
        all
    }
}

impl RandomOcclusions {
    fn count(&self, length: usize) -> usize {
        (self.share * length as f64 / self.span as f64).round() as usize
    }

    /// Disjoint intervals separated by at least one clean frame.
    fn place(&self, length: usize, rng: &mut ChaCha8Rng) -> Vec<Occlusion> {
        let n = self.count(length);
        if n == 0 {
            return Vec::new();
        }
        let room = length + 1 - self.first_frame;
        let slack = room - (n * self.span + n - 1);
        let mut offsets: Vec<usize> = (0..n).map(|_| rng.random_range(0..=slack)).collect();
        offsets.sort_unstable();
        offsets
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let start = self.first_frame + u + i * (self.span + 1);
                Occlusion {
                    start,
                    end: start + self.span - 1,
                    fraction: 1.0,
                    mode: self.mode,
                }
            })
            .collect()
    }
}

fn size(e: &kv::Entry, origin: &Path) -> Result<(usize, usize)> {
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| kv::error(e, origin, format!("invalid size `{}` for key `{}`", e.value, e.key)));
    match e.value.split_once('x') {
        Some((w, h)) => Ok((parse(w)?, parse(h)?)),
        None => {
            let v = parse(&e.value)?;
            Ok((v, v))
        }
    }
}

fn fields<'a>(e: &'a kv::Entry, origin: &Path, n: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = e.value.split(':').map(str::trim).collect();
    if parts.len() != n {
        return Err(kv::error(e, origin, format!("`{}` expects {n} colon-separated fields", e.key)));
    }
    Ok(parts)
}

fn field<T: std::str::FromStr>(e: &kv::Entry, origin: &Path, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| kv::error(e, origin, format!("invalid field `{s}` for key `{}`", e.key)))
}

fn mode(e: &kv::Entry, origin: &Path, s: &str) -> Result<FillMode> {
    FillMode::parse(s).ok_or_else(|| {
        kv::error(e, origin, format!("unknown fill mode `{s}` (background, noise, gray, object)"))
    })
}

fn occlusion(e: &kv::Entry, origin: &Path) -> Result<Occlusion> {
    let f = fields(e, origin, 4)?;
    Ok(Occlusion {
        start: field(e, origin, f[0])?,
        end: field(e, origin, f[1])?,
        fraction: field(e, origin, f[2])?,
        mode: mode(e, origin, f[3])?,
    })
}

fn random_occlusion(e: &kv::Entry, origin: &Path) -> Result<RandomOcclusions> {
    let f = fields(e, origin, 4)?;
    Ok(RandomOcclusions {
        share: field(e, origin, f[0])?,
        span: field(e, origin, f[1])?,
        first_frame: field(e, origin, f[2])?,
        mode: mode(e, origin, f[3])?,
    })
}

/// Smooth random texture with values spread over `[lo, hi]`.
fn texture(rng: &mut ChaCha8Rng, h: usize, w: usize, waves: usize, freq: (f64, f64), lo: f64, hi: f64) -> Vec<f64> {
    let params: Vec<(f64, f64, f64, f64)> = (0..waves)
        .map(|_| {
            let f = rng.random_range(freq.0..freq.1);
            let theta = rng.random_range(0.0..PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp = rng.random_range(0.5..1.0);
            (2.0 * PI * f * theta.cos(), 2.0 * PI * f * theta.sin(), phase, amp)
        })
        .collect();
    let raw: Vec<f64> = (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            params.iter().map(|(kx, ky, p, a)| a * (kx * c + ky * r + p).sin()).sum()
        })
        .collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    raw.iter().map(|v| lo + (hi - lo) * (v - min) / span).collect()
}

/// Random bright and dark blobs: a distinctive, high-contrast pattern.
fn blob_texture(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<f64> {
    let scale = (h.min(w) as f64).max(2.0);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..10)
        .map(|_| {
            (
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
                rng.random_range(0.08..0.2) * scale,
                if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            )
        })
        .collect();
    let raw: Vec<f64> = (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            blobs
                .iter()
                .map(|(br, bc, s, a)| a * (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * s * s)).exp())
                .sum()
        })
        .collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    raw.iter().map(|v| 0.05 + 0.9 * (v - min) / span).collect()
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Renders the scripted sequence. Pixel values are multiples of 1/255, so
/// writing frames as 8-bit images is lossless.
pub fn generate_sequence(script: &CorruptionScript, seed: u64) -> Result<Sequence> {
    script.validate()?;
    let occlusions = script.resolved_occlusions(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fw, fh) = (script.frame_width, script.frame_height);
    let (tw, th) = (script.target_width, script.target_height);

    let background = texture(&mut rng, fh, fw, 8, (0.01, 0.06), 0.25, 0.75);
    let initial = blob_texture(&mut rng, th, tw);
    let drifted = blob_texture(&mut rng, th, tw);
    let occluder = blob_texture(&mut rng, th, tw);

    let (cx0, cy0) = (fw as f64 / 2.0, fh as f64 / 2.0);
    let ax = ((fw - tw) as f64 / 2.0 - 4.0).max(0.0);
    let ay = ((fh - th) as f64 / 2.0 - 4.0).max(0.0);
    let wx = if ax > 0.0 { script.speed / ax } else { 0.0 };
    let wy = if ay > 0.0 { 0.7 * script.speed / ay } else { 0.0 };
    let (px, py) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
    let jitter = Normal::new(0.0, script.jitter_std.max(f64::MIN_POSITIVE)).expect("valid normal");
    let noise = Normal::new(0.0, script.noise_std.max(f64::MIN_POSITIVE)).expect("valid normal");

    let mut frames = Vec::with_capacity(script.length);
    let mut truth = Vec::with_capacity(script.length);
    let mut labels = Vec::with_capacity(script.length);
    for t in 0..script.length {
        let tf = t as f64;
        let (mut cx, mut cy) = if script.speed > 0.0 {
            (cx0 + ax * (wx * tf + px).sin(), cy0 + ay * (wy * tf + py).sin())
        } else {
            (cx0, cy0)
        };
        let mut jittered = false;
        if script.jitter_std > 0.0 {
            let (jx, jy) = (jitter.sample(&mut rng).round(), jitter.sample(&mut rng).round());
            cx += jx;
            cy += jy;
            jittered = jx.hypot(jy) > script.jitter_threshold;
        }
        let left = ((cx - tw as f64 / 2.0).round().max(0.0) as usize).min(fw - tw);
        let top = ((cy - th as f64 / 2.0).round().max(0.0) as usize).min(fh - th);

        let blend = (script.drift_rate * tf).min(1.0);
        let active = occlusions
            .iter()
            .find(|o| o.start <= t + 1 && t < o.end && o.fraction > 0.0);
        let covered = active.map_or(0, |o| (o.fraction * tw as f64).round() as usize);

        let mut pixels = background.clone();
        for r in 0..th {
            for c in 0..tw {
                let i = r * tw + c;
                let v = if c < covered {
                    match active.expect("covered implies active").mode {
                        FillMode::Background => continue,
                        FillMode::Noise => rng.random_range(0.0..1.0),
                        FillMode::Gray => 0.5,
                        FillMode::Object => occluder[i],
                    }
                } else {
                    (1.0 - blend) * initial[i] + blend * drifted[i]
                };
                pixels[(top + r) * fw + left + c] = v;
            }
        }
        if script.noise_std > 0.0 {
            for p in pixels.iter_mut() {
                *p += noise.sample(&mut rng);
            }
        }
        pixels.iter_mut().for_each(|p| *p = quantize(*p));
        frames.push(GrayFrame::new(fh, fw, pixels)?);
        truth.push(Rect::new(left as f64 + 1.0, top as f64 + 1.0, tw as f64, th as f64)?);
        labels.push(active.is_some() || jittered);
    }
    Sequence::new(format!("synthetic-{seed}"), frames, truth, Some(labels))
}
