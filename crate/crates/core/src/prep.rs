//! Seeded preprocessing chain for segmentation training pairs:
//! resize, random crop, random horizontal flip, color jitter, normalization.
//!
//! Random draws come from one [`SplitMix64`] stream per sample, consumed in
//! the fixed order crop-top, crop-left, flip, brightness, contrast. Label maps
//! only ever pass through nearest-neighbour resizing, cropping and flipping.

use crate::error::{Error, Result};
use crate::frame::{Frame, LabelMap};
use crate::rng::SplitMix64;

/// Per-channel normalization statistics on the 0–255 scale, applied to
/// stored plane order.
pub const DEFAULT_MEAN: [f64; 3] = [103.336, 104.443, 100.035];
pub const DEFAULT_STD: [f64; 3] = [39.329, 38.147, 42.803];

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub resize_w: usize,
    pub resize_h: usize,
    pub crop: usize,
    pub flip_prob: f64,
    /// Brightness shift is drawn from `[-brightness, brightness]`.
    pub brightness: f64,
    /// Contrast factor is drawn from `[contrast.0, contrast.1]`.
    pub contrast: (f64, f64),
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            resize_w: 1024,
            resize_h: 256,
            crop: 256,
            flip_prob: 0.5,
            brightness: 0.125,
            contrast: (0.5, 1.5),
            mean: DEFAULT_MEAN.to_vec(),
            std: DEFAULT_STD.to_vec(),
            seed: 0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.resize_w == 0 || self.resize_h == 0 || self.crop == 0 {
            return bad("resize and crop sizes must be positive".into());
        }
        if self.crop > self.resize_w.min(self.resize_h) {
            return bad(format!(
                "crop {} exceeds resized image {}x{}",
                self.crop, self.resize_w, self.resize_h
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad(format!("flip_prob must be in [0, 1], got {}", self.flip_prob));
        }
        if !(self.brightness >= 0.0) || !self.brightness.is_finite() {
            return bad(format!("brightness must be >= 0, got {}", self.brightness));
        }
        let (lo, hi) = self.contrast;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("contrast range must satisfy 0 <= lo <= hi, got [{lo}, {hi}]"));
        }
        if self.mean.len() != self.std.len() {
            return bad("mean and std must have the same length".into());
        }
        if self.std.iter().any(|s| !(*s > 0.0)) {
            return bad("std components must be > 0".into());
        }
        Ok(())
    }
}

/// Maps a destination index to a source coordinate with half-pixel centers.
#[inline]
fn source_coord(dst: usize, scale: f64) -> f64 {
    (dst as f64 + 0.5) * scale - 0.5
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(f: &Frame, width: usize, height: usize) -> Result<Frame> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParam(format!("resize target must be positive, got {width}x{height}")));
    }
    let (sw, sh) = (f.width(), f.height());
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    let axis = |dst: usize, scale: f64, len: usize| {
        let s = source_coord(dst, scale).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..width).map(|x| axis(x, sx, sw)).collect();
    let rows: Vec<_> = (0..height).map(|y| axis(y, sy, sh)).collect();
    let mut data = Vec::with_capacity(width * height * f.channels());
    for c in 0..f.channels() {
        let plane = f.plane(c);
        for &(y0, y1, fy) in &rows {
            for &(x0, x1, fx) in &cols {
                let top = plane[y0 * sw + x0] * (1.0 - fx) + plane[y0 * sw + x1] * fx;
                let bottom = plane[y1 * sw + x0] * (1.0 - fx) + plane[y1 * sw + x1] * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Frame::from_clamped(width, height, f.channels(), data)
}

/// Nearest-neighbour resize under the same half-pixel mapping; ids are
/// copied, never interpolated.
pub fn resize_nearest(l: &LabelMap, width: usize, height: usize) -> Result<LabelMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParam(format!("resize target must be positive, got {width}x{height}")));
    }
    let (sw, sh) = (l.width(), l.height());
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    let nearest = |dst: usize, scale: f64, len: usize| {
        let s = source_coord(dst, scale) + 0.5;
        (s.floor().max(0.0) as usize).min(len - 1)
    };
    let cols: Vec<usize> = (0..width).map(|x| nearest(x, sx, sw)).collect();
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let sy_i = nearest(y, sy, sh);
        data.extend(cols.iter().map(|&sx_i| l.get(sy_i, sx_i)));
    }
    LabelMap::new(width, height, data)
}

fn crop_frame(f: &Frame, top: usize, left: usize, size: usize) -> Result<Frame> {
    Frame::from_fn(size, size, f.channels(), |c, y, x| f.get(c, top + y, left + x))
}

fn crop_labels(l: &LabelMap, top: usize, left: usize, size: usize) -> Result<LabelMap> {
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        data.extend((0..size).map(|x| l.get(top + y, left + x)));
    }
    LabelMap::new(size, size, data)
}

/// Crop offsets: `top = next mod (H - size + 1)`, then
/// `left = next mod (W - size + 1)`.
pub fn crop_offsets(height: usize, width: usize, size: usize, rng: &mut SplitMix64) -> Result<(usize, usize)> {
    if size == 0 || size > height || size > width {
        return Err(Error::Shape(format!("cannot crop {size}x{size} from {width}x{height}")));
    }
    let top = rng.below((height - size + 1) as u64) as usize;
    let left = rng.below((width - size + 1) as u64) as usize;
    Ok((top, left))
}

/// Crops the same square window from the image and its labels.
pub fn random_crop(f: &Frame, l: &LabelMap, size: usize, rng: &mut SplitMix64) -> Result<(Frame, LabelMap)> {
    if f.width() != l.width() || f.height() != l.height() {
        return Err(Error::Shape(format!(
            "image {}x{} and labels {}x{} differ",
            f.width(),
            f.height(),
            l.width(),
            l.height()
        )));
    }
    let (top, left) = crop_offsets(f.height(), f.width(), size, rng)?;
    Ok((crop_frame(f, top, left, size)?, crop_labels(l, top, left, size)?))
}

pub fn hflip_frame(f: &Frame) -> Frame {
    let w = f.width();
    Frame::from_fn(w, f.height(), f.channels(), |c, y, x| f.get(c, y, w - 1 - x)).expect("same shape")
}

pub fn hflip_labels(l: &LabelMap) -> LabelMap {
    let w = l.width();
    let data = (0..l.height())
        .flat_map(|y| (0..w).map(move |x| (y, w - 1 - x)))
        .map(|(y, x)| l.get(y, x))
        .collect();
    LabelMap::new(w, l.height(), data).expect("same shape")
}

/// Draws `u` uniform in `[0, 1)` and flips both inputs iff `u < prob`.
pub fn random_hflip(f: &Frame, l: &LabelMap, prob: f64, rng: &mut SplitMix64) -> (Frame, LabelMap, bool) {
    let flip = rng.next_f64() < prob;
    if flip {
        (hflip_frame(f), hflip_labels(l), true)
    } else {
        (f.clone(), l.clone(), false)
    }
}

/// Applies a brightness shift `b` then a contrast factor `c` about each
/// channel's mean, and clamps.
pub fn adjust_color(f: &Frame, b: f64, c: f64) -> Result<Frame> {
    let n = f.plane_len();
    let mut data = Vec::with_capacity(f.data().len());
    for ch in 0..f.channels() {
        let shifted: Vec<f64> = f.plane(ch).iter().map(|v| v + b).collect();
        if c == 1.0 {
            data.extend(shifted);
            continue;
        }
        let mean = shifted.iter().sum::<f64>() / n as f64;
        data.extend(shifted.iter().map(|v| (v - mean) * c + mean));
    }
    Frame::from_clamped(f.width(), f.height(), f.channels(), data)
}

/// Draws brightness from `[-brightness, brightness]`, then contrast from the
/// range, and applies them with [`adjust_color`].
pub fn color_jitter(f: &Frame, brightness: f64, contrast: (f64, f64), rng: &mut SplitMix64) -> Result<Frame> {
    let b = rng.uniform(-brightness, brightness);
    let c = rng.uniform(contrast.0, contrast.1);
    adjust_color(f, b, c)
}

/// Normalized planes; values are unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

/// `(255 v - mean_c) / std_c` per channel, in stored plane order.
pub fn normalize(f: &Frame, mean: &[f64], std: &[f64]) -> Result<Normalized> {
    if mean.len() != f.channels() || std.len() != f.channels() {
        return Err(Error::Shape(format!(
            "frame has {} channels, got {} means and {} stds",
            f.channels(),
            mean.len(),
            std.len()
        )));
    }
    let n = f.plane_len();
    let data = f
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = i / n;
            (255.0 * v - mean[c]) / std[c]
        })
        .collect();
    Ok(Normalized {
        width: f.width(),
        height: f.height(),
        channels: f.channels(),
        data,
    })
}

/// Inverse affine map of [`normalize`], back to the `[0, 1]` scale.
pub fn denormalize(n: &Normalized, mean: &[f64], std: &[f64]) -> Vec<f64> {
    let plane = n.width * n.height;
    n.data
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = i / plane;
            (v * std[c] + mean[c]) / 255.0
        })
        .collect()
}

/// Seed of sample `index`'s private stream.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    /// Augmented image before normalization.
    pub image: Frame,
    pub labels: LabelMap,
    pub normalized: Normalized,
    pub sample_seed: u64,
    pub crop: (usize, usize),
    pub flipped: bool,
}

/// Runs the full chain on one image/label pair.
pub fn prepare_sample(image: &Frame, labels: &LabelMap, cfg: &PreprocessConfig, index: u64) -> Result<PreparedSample> {
    cfg.validate()?;
    if cfg.mean.len() != image.channels() {
        return Err(Error::Shape(format!(
            "image has {} channels, normalization has {}",
            image.channels(),
            cfg.mean.len()
        )));
    }
    let seed = sample_seed(cfg.seed, index);
    let mut rng = SplitMix64::new(seed);
    let resized = resize_bilinear(image, cfg.resize_w, cfg.resize_h)?;
    let resized_labels = resize_nearest(labels, cfg.resize_w, cfg.resize_h)?;
    let (top, left) = crop_offsets(resized.height(), resized.width(), cfg.crop, &mut rng)?;
    let cropped = crop_frame(&resized, top, left, cfg.crop)?;
    let cropped_labels = crop_labels(&resized_labels, top, left, cfg.crop)?;
    let (flipped_img, flipped_labels, flipped) = random_hflip(&cropped, &cropped_labels, cfg.flip_prob, &mut rng);
    let jittered = color_jitter(&flipped_img, cfg.brightness, cfg.contrast, &mut rng)?;
    let normalized = normalize(&jittered, &cfg.mean, &cfg.std)?;
    Ok(PreparedSample {
        image: jittered,
        labels: flipped_labels,
        normalized,
        sample_seed: seed,
        crop: (top, left),
        flipped,
    })
}
