//! Deterministic inputs for the benchmarks.

use lrt_core::rng::SplitMix64;
use lrt_core::tensor::{Dims, Matrix, Tensor3};
use lrt_core::{Frame, VideoSequence};

/// A smooth low-rank group plus uniform noise of amplitude `noise`.
pub fn noisy_group(dims: Dims, noise: f64, seed: u64) -> Tensor3 {
    let mut rng = SplitMix64::new(seed);
    let shift: Vec<f64> = (0..dims.group).map(|_| rng.uniform(-0.1, 0.1)).collect();
    Tensor3::from_fn(dims, |i, t, k| {
        0.5 + 0.2 * ((i + 3 * t) as f64 * 0.3).sin() + shift[k] + noise * rng.uniform(-1.0, 1.0)
    })
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = SplitMix64::new(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("sized data")
}

/// Gray noise frames, values uniform in [0, 1].
pub fn noise_sequence(frames: usize, width: usize, height: usize, seed: u64) -> VideoSequence {
    let mut rng = SplitMix64::new(seed);
    let frames = (0..frames)
        .map(|_| Frame::from_fn(width, height, 1, |_, _, _| rng.next_f64()).expect("in-range values"))
        .collect();
    VideoSequence::new(frames).expect("uniform frames")
}
