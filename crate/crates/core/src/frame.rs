//! Frames, label maps and video sequences.

use std::path::PathBuf;

use crate::error::{Error, Result};

/// An image as planar channels of reals in `[0, 1]`.
///
/// Channel `c`, row `y`, column `x` is stored at `c * w * h + y * w + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParam(format!("frames have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{width}x{height}x{channels} frame needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParam(format!("frame value {v} outside [0, 1]")));
        }
        Ok(Frame {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a frame, clamping every value into `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Frame::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Frame::new(width, height, channels, vec![value; width * height * channels])
    }

    /// `f(channel, row, col)` evaluated at every sample, clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Frame::from_clamped(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[c * self.plane_len() + y * self.width + x]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Single-channel frame holding channel `c`.
    pub fn channel(&self, c: usize) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.plane(c).to_vec(),
        }
    }

    /// Stacks equally-sized single-channel frames into one frame.
    pub fn from_planes(planes: &[Frame]) -> Result<Frame> {
        let first = planes.first().ok_or_else(|| Error::EmptyInput("no planes".into()))?;
        if planes.iter().any(|p| p.channels != 1 || p.width != first.width || p.height != first.height) {
            return Err(Error::Shape("planes must be single-channel and equally sized".into()));
        }
        let data = planes.iter().flat_map(|p| p.data.iter().copied()).collect();
        Frame::new(first.width, first.height, planes.len(), data)
    }

    /// Luma plane: the single channel for gray frames,
    /// `0.299 R + 0.587 G + 0.114 B` for color frames.
    pub fn luma(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        (0..self.plane_len())
            .map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i])
            .collect()
    }

    pub fn dims_string(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }
}

/// Per-pixel class ids. 255 is conventionally the ignore id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

pub const IGNORE_ID: u8 = 255;

impl LabelMap {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} label map needs {} ids, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(LabelMap { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Shape(format!("image dims must be positive, got {width}x{height}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Where a frame of a sequence came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub index: usize,
    pub path: PathBuf,
}

/// Ordered, uniformly-shaped frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    manifest: Vec<ManifestEntry>,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        VideoSequence::with_manifest(frames, Vec::new())
    }

    pub fn with_manifest(frames: Vec<Frame>, manifest: Vec<ManifestEntry>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::EmptyInput("sequence has no frames".into()))?;
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| !f.same_shape(first)) {
            return Err(Error::Shape(format!(
                "frame {i} is {}, frame 0 is {}",
                f.dims_string(),
                first.dims_string()
            )));
        }
        Ok(VideoSequence { frames, manifest })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels
    }

    /// Luma plane of every frame.
    pub fn luma(&self) -> Vec<Vec<f64>> {
        self.frames.iter().map(Frame::luma).collect()
    }
}
