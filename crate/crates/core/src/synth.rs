//! Deterministic synthetic degradations and test scenes.
//!
//! All randomness comes from [`SplitMix64`] streams seeded by the caller, so
//! every output is a pure function of its inputs and seed.

use crate::error::{Error, Result};
use crate::frame::{clamp_unit, Frame, VideoSequence};
use crate::rng::{derive_seed, Gaussian, SplitMix64};

/// Rain streak parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RainParams {
    /// Streaks per 1000 pixels.
    pub density: f64,
    /// Streak length in pixels.
    pub length: f64,
    /// Mean streak angle from vertical, degrees.
    pub angle_deg: f64,
    /// Additive brightness at full coverage.
    pub intensity: f64,
    /// Half-width of the uniform angle spread, degrees.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for RainParams {
    fn default() -> Self {
        RainParams {
            density: 0.0,
            length: 10.0,
            angle_deg: 10.0,
            intensity: 0.6,
            jitter: 5.0,
            seed: 0,
        }
    }
}

impl RainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.density >= 0.0) || !self.density.is_finite() {
            return Err(Error::InvalidParam(format!("rain density must be >= 0, got {}", self.density)));
        }
        if !(self.length >= 1.0) || !self.length.is_finite() {
            return Err(Error::InvalidParam(format!("rain length must be >= 1, got {}", self.length)));
        }
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::InvalidParam(format!(
                "rain intensity must be in [0, 1], got {}",
                self.intensity
            )));
        }
        if !self.angle_deg.is_finite() || !self.jitter.is_finite() {
            return Err(Error::InvalidParam("rain angle and jitter must be finite".into()));
        }
        Ok(())
    }
}

/// Adds i.i.d. `N(0, sigma²)` noise to every sample, then clamps to `[0, 1]`.
/// Channel `c` draws from its own stream seeded with `seed + c`.
pub fn add_gaussian_noise(f: &Frame, sigma: f64, seed: u64) -> Result<Frame> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParam(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(f.clone());
    }
    let mut data = Vec::with_capacity(f.data().len());
    for c in 0..f.channels() {
        let mut g = Gaussian::new(seed.wrapping_add(c as u64));
        data.extend(f.plane(c).iter().map(|v| v + sigma * g.sample()));
    }
    Frame::from_clamped(f.width(), f.height(), f.channels(), data)
}

/// Number of streaks drawn on a `w x h` frame.
pub fn streak_count(width: usize, height: usize, density: f64) -> usize {
    (density * (width * height) as f64 / 1000.0).round() as usize
}

/// One straight streak, by center, direction (unit vector) and length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Streak {
    pub cx: f64,
    pub cy: f64,
    pub dx: f64,
    pub dy: f64,
    pub length: f64,
}

/// Streak geometry for a `w x h` frame. Per streak the draws are: center x,
/// center y, angle jitter.
pub fn rain_streaks(width: usize, height: usize, p: &RainParams) -> Vec<Streak> {
    let mut rng = SplitMix64::new(p.seed);
    (0..streak_count(width, height, p.density))
        .map(|_| {
            let cx = rng.uniform(0.0, width as f64);
            let cy = rng.uniform(0.0, height as f64);
            let angle = (p.angle_deg + rng.uniform(-p.jitter, p.jitter)).to_radians();
            Streak {
                cx,
                cy,
                dx: angle.sin(),
                dy: angle.cos(),
                length: p.length,
            }
        })
        .collect()
}

/// Anti-aliased coverage in `[0, 1]` of all streaks, one value per pixel.
///
/// Each streak is sampled every half pixel; a sample spreads bilinear
/// weights over its four neighbours and a pixel keeps the largest weight any
/// sample of that streak gave it. Coverages of different streaks add.
pub fn streak_coverage(width: usize, height: usize, streaks: &[Streak]) -> Vec<f64> {
    let mut total = vec![0.0; width * height];
    let mut touched: Vec<(usize, f64)> = Vec::new();
    for s in streaks {
        touched.clear();
        let steps = (2.0 * s.length).ceil() as usize;
        for j in 0..=steps {
            let along = s.length * (j as f64 / steps as f64 - 0.5);
            let x = s.cx + along * s.dx - 0.5;
            let y = s.cy + along * s.dy - 0.5;
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            for (ox, oy, w) in [
                (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
                (1.0, 0.0, fx * (1.0 - fy)),
                (0.0, 1.0, (1.0 - fx) * fy),
                (1.0, 1.0, fx * fy),
            ] {
                let (px, py) = (x0 + ox, y0 + oy);
                if w > 0.0 && px >= 0.0 && py >= 0.0 && (px as usize) < width && (py as usize) < height {
                    touched.push((py as usize * width + px as usize, w));
                }
            }
        }
        touched.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
        touched.dedup_by_key(|t| t.0);
        for &(idx, w) in &touched {
            total[idx] += w;
        }
    }
    total
}

/// Adds streaks of brightness `intensity · coverage` to every channel and
/// clamps. Streak geometry depends only on the frame size and `p.seed`, so
/// every channel receives the same (white) streaks.
pub fn add_rain_streaks(f: &Frame, p: &RainParams) -> Result<Frame> {
    p.validate()?;
    if p.density == 0.0 || p.intensity == 0.0 {
        return Ok(f.clone());
    }
    let streaks = rain_streaks(f.width(), f.height(), p);
    let cover = streak_coverage(f.width(), f.height(), &streaks);
    let n = f.plane_len();
    let data = f
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| v + p.intensity * cover[i % n])
        .collect();
    Frame::from_clamped(f.width(), f.height(), f.channels(), data)
}

/// One plane wave of the procedural scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    /// Cycles across the frame width.
    pub fx: f64,
    /// Cycles across the frame height.
    pub fy: f64,
    pub phase: f64,
    /// Amplitude per channel.
    pub amplitude: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMeta {
    pub waves: Vec<Wave>,
    pub base: [f64; 3],
    /// Horizontal translation per frame, pixels.
    pub motion: f64,
    pub seed: u64,
}

impl SceneMeta {
    fn value(&self, c: usize, x: f64, y: f64, width: usize, height: usize) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        self.base[c]
            + self
                .waves
                .iter()
                .map(|w| w.amplitude[c] * (tau * (w.fx * x / width as f64 + w.fy * y / height as f64) + w.phase).sin())
                .sum::<f64>()
    }
}

const SCENE_WAVES: usize = 6;

/// A smooth grayscale scene (a sum of low-frequency plane waves) translated
/// horizontally by `motion` pixels per frame.
pub fn make_test_sequence(
    frames: usize,
    width: usize,
    height: usize,
    motion: f64,
    seed: u64,
) -> Result<(VideoSequence, SceneMeta)> {
    make_scene(frames, width, height, motion, seed, 1)
}

/// Like [`make_test_sequence`] with 1 or 3 channels. The gray scene is
/// channel 0 of the color scene with the same seed.
pub fn make_scene(
    frames: usize,
    width: usize,
    height: usize,
    motion: f64,
    seed: u64,
    channels: usize,
) -> Result<(VideoSequence, SceneMeta)> {
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidParam(format!("scene channels must be 1 or 3, got {channels}")));
    }
    if frames == 0 || width == 0 || height == 0 {
        return Err(Error::InvalidParam(format!(
            "scene needs positive frame count and size, got {frames} frames of {width}x{height}"
        )));
    }
    if !motion.is_finite() {
        return Err(Error::InvalidParam("motion must be finite".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let base = [rng.uniform(0.35, 0.65), rng.uniform(0.35, 0.65), rng.uniform(0.35, 0.65)];
    let waves = (0..SCENE_WAVES)
        .map(|_| {
            let fx = rng.uniform(0.5, 4.0) * if rng.next() & 1 == 0 { 1.0 } else { -1.0 };
            let fy = rng.uniform(0.5, 4.0);
            let phase = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
            let amplitude = [rng.uniform(0.02, 0.05), rng.uniform(0.02, 0.05), rng.uniform(0.02, 0.05)];
            Wave { fx, fy, phase, amplitude }
        })
        .collect();
    let meta = SceneMeta { waves, base, motion, seed };
    let seq = (0..frames)
        .map(|t| {
            let shift = motion * t as f64;
            Frame::from_fn(width, height, channels, |c, y, x| {
                clamp_unit(meta.value(c, x as f64 - shift, y as f64, width, height))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((VideoSequence::new(seq)?, meta))
}

/// Degrades every frame: rain first (if any), then Gaussian noise. Frame `t`
/// uses seeds derived from `(seed, t)`, separately for rain and noise.
pub fn degrade_sequence(clean: &VideoSequence, sigma: f64, rain: Option<&RainParams>, seed: u64) -> Result<VideoSequence> {
    let frames = clean
        .frames()
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut out = f.clone();
            if let Some(r) = rain {
                let p = RainParams {
                    seed: derive_seed(seed ^ 0x5241_494E, t as u64),
                    ..*r
                };
                out = add_rain_streaks(&out, &p)?;
            }
            add_gaussian_noise(&out, sigma, derive_seed(seed, t as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::with_manifest(frames, clean.manifest().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let f = Frame::filled(5, 4, 3, 0.25).unwrap();
        assert_eq!(add_gaussian_noise(&f, 0.0, 1).unwrap(), f);
        assert!(add_gaussian_noise(&f, -1.0, 1).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let f = Frame::filled(8, 8, 1, 0.5).unwrap();
        assert_eq!(add_gaussian_noise(&f, 0.1, 3).unwrap(), add_gaussian_noise(&f, 0.1, 3).unwrap());
        assert_ne!(add_gaussian_noise(&f, 0.1, 3).unwrap(), add_gaussian_noise(&f, 0.1, 4).unwrap());
    }

    #[test]
    fn noise_variance() {
        let f = Frame::filled(256, 256, 1, 0.5).unwrap();
        let g = add_gaussian_noise(&f, 0.1, 11).unwrap();
        let diffs: Vec<f64> = g.data().iter().map(|v| v - 0.5).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.009..=0.011).contains(&var), "{var}");
    }

    #[test]
    fn noise_channels_use_split_streams() {
        let f = Frame::from_fn(6, 5, 3, |c, y, x| (c + y + x) as f64 / 20.0).unwrap();
        let out = add_gaussian_noise(&f, 0.05, 40).unwrap();
        for c in 0..3 {
            let single = add_gaussian_noise(&f.channel(c), 0.05, 40 + c as u64).unwrap();
            assert_eq!(out.plane(c), single.data());
        }
    }

    #[test]
    fn rain_identities() {
        let f = Frame::filled(32, 32, 3, 0.3).unwrap();
        let p = RainParams { density: 0.0, intensity: 0.8, seed: 1, ..RainParams::default() };
        assert_eq!(add_rain_streaks(&f, &p).unwrap(), f);
        let p = RainParams { density: 5.0, intensity: 0.0, seed: 1, ..RainParams::default() };
        assert_eq!(add_rain_streaks(&f, &p).unwrap(), f);
    }

    #[test]
    fn rain_on_black() {
        let f = Frame::filled(96, 96, 1, 0.0).unwrap();
        let p = RainParams { density: 5.0, intensity: 0.8, seed: 7, ..RainParams::default() };
        assert_eq!(rain_streaks(96, 96, &p).len(), 46);
        let out = add_rain_streaks(&f, &p).unwrap();
        let mean = out.data().iter().sum::<f64>() / out.data().len() as f64;
        assert!(mean > 0.0);
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rain_channels_match_single_channel() {
        let f = Frame::from_fn(20, 20, 3, |c, y, _| c as f64 * 0.2 + y as f64 * 0.01).unwrap();
        let p = RainParams { density: 10.0, seed: 5, ..RainParams::default() };
        let out = add_rain_streaks(&f, &p).unwrap();
        for c in 0..3 {
            assert_eq!(out.plane(c), add_rain_streaks(&f.channel(c), &p).unwrap().data());
        }
    }

    #[test]
    fn static_scene_and_determinism() {
        let (a, _) = make_test_sequence(3, 16, 12, 0.0, 9).unwrap();
        assert!(a.frames().iter().all(|f| f == &a.frames()[0]));
        let (b, _) = make_test_sequence(3, 16, 12, 0.0, 9).unwrap();
        assert_eq!(a, b);
        assert!(make_test_sequence(0, 16, 12, 0.0, 9).is_err());
    }
}
