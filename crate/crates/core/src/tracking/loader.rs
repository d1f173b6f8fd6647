//! Sequence directories: `img/` with numbered image files and
//! `groundtruth_rect.txt` with one `x, y, w, h` box per frame.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};

use super::{GrayFrame, Rect, Sequence};
use crate::error::{Error, Result};

const GROUND_TRUTH: &str = "groundtruth_rect.txt";
const LABELS: &str = "corruption_labels.txt";
const EXTENSIONS: [&str; 7] = ["png", "jpg", "jpeg", "bmp", "pgm", "ppm", "pnm"];

fn numbered_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(n) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) {
            found.push((n, path));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn decode(path: &Path) -> Result<GrayFrame> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    GrayFrame::new(h as usize, w as usize, pixels)
}

/// Parses ground-truth text; fields may be separated by commas, tabs or spaces.
pub fn parse_ground_truth(text: &str, origin: &Path) -> Result<Vec<Rect>> {
    let mut rects = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| err(format!("invalid number `{f}`")))?;
        }
        rects.push(Rect::new(v[0], v[1], v[2], v[3]).map_err(|e| err(e.to_string()))?);
    }
    Ok(rects)
}

/// Loads a sequence directory. Corruption labels are not read.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let img_dir = dir.join("img");
    let paths = numbered_images(&img_dir)?;
    if paths.is_empty() {
        return Err(Error::Format {
            path: img_dir,
            message: "no numbered image files".into(),
        });
    }
    let gt_path = dir.join(GROUND_TRUTH);
    let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let rects = parse_ground_truth(&text, &gt_path)?;
    if rects.len() != paths.len() {
        return Err(Error::CountMismatch {
            path: dir.to_path_buf(),
            frames: paths.len(),
            rects: rects.len(),
        });
    }
    let frames = paths.iter().map(|p| decode(p)).collect::<Result<Vec<_>>>()?;
    let (h, w) = (frames[0].height(), frames[0].width());
    if let Some((k, _)) = frames.iter().enumerate().find(|(_, f)| (f.height(), f.width()) != (h, w)) {
        return Err(Error::Format {
            path: paths[k].clone(),
            message: format!("frame size differs from the first frame ({w}x{h})"),
        });
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Sequence::new(name, frames, rects, None)
}

/// Reads the optional per-frame corruption flags written by [`write_sequence`].
pub fn load_corruption_labels(dir: &Path) -> Result<Option<Vec<bool>>> {
    let path = dir.join(LABELS);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Parse {
                path: path.clone(),
                line: i + 1,
                message: format!("expected 0 or 1, found `{other}`"),
            }),
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Writes `sequence` in the directory layout read by [`load_sequence`],
/// with 8-bit PNG frames and a corruption label sidecar when labels exist.
pub fn write_sequence(sequence: &Sequence, dir: &Path) -> Result<()> {
    let img_dir = dir.join("img");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let digits = sequence.len().to_string().len().max(4);
    for (k, frame) in sequence.frames.iter().enumerate() {
        let mut img = GrayImage::new(frame.width() as u32, frame.height() as u32);
        for (p, v) in img.pixels_mut().zip(frame.pixels()) {
            *p = Luma([(v * 255.0).round() as u8]);
        }
        let path = img_dir.join(format!("{:0digits$}.png", k + 1));
        img.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    let gt: String = sequence
        .ground_truth
        .iter()
        .map(|r| format!("{},{},{},{}\n", r.x, r.y, r.w, r.h))
        .collect();
    let gt_path = dir.join(GROUND_TRUTH);
    fs::write(&gt_path, gt).map_err(|e| Error::io(&gt_path, e))?;
    if let Some(labels) = &sequence.corruption_labels {
        let text: String = labels.iter().map(|l| if *l { "1\n" } else { "0\n" }).collect();
        let path = dir.join(LABELS);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
