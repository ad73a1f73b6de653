//! Non-local self-similarity: block matching over a spatio-temporal search
//! window, group assembly, and aggregation of restored groups.
//!
//! A group member is a *tube*: the same `p x p` patch position followed
//! across a run of consecutive frames. For an anchor at frame `f`, the
//! temporal window `[ws, we]` is `f ± T_win/2` clipped to the sequence, and
//! `f` sits at offset `o = f - ws` inside it. A candidate at `(f', r, c)`
//! with `f'` in the window covers frames `f' - o .. f' - o + (we - ws + 1)`,
//! so every member places its own frame at the same offset as the anchor.
//! Candidates whose tube would leave the sequence are dropped.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::VideoSequence;
use crate::tensor::{Dims, Tensor3};

/// Block-matching parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupingConfig {
    pub patch_size: usize,
    pub stride: usize,
    /// Chebyshev radius of the spatial search, in pixels.
    pub search_radius: usize,
    /// Temporal window length in frames; odd.
    pub temporal_window: usize,
    pub group_size: usize,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            patch_size: 6,
            stride: 4,
            search_radius: 15,
            temporal_window: 5,
            group_size: 30,
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(Error::InvalidParam(format!("patch_size must be >= 2, got {}", self.patch_size)));
        }
        if self.stride < 1 || self.stride > self.patch_size {
            return Err(Error::InvalidParam(format!(
                "stride must be in 1..=patch_size ({}) so patches cover every pixel, got {}",
                self.patch_size, self.stride
            )));
        }
        if self.group_size < 1 {
            return Err(Error::InvalidParam("group_size must be >= 1".into()));
        }
        if self.temporal_window < 1 || self.temporal_window % 2 == 0 {
            return Err(Error::InvalidParam(format!(
                "temporal_window must be odd and >= 1, got {}",
                self.temporal_window
            )));
        }
        Ok(())
    }
}

/// Top-left corner of a patch at a given frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub fn new(frame: usize, row: usize, col: usize) -> Self {
        Coord { frame, row, col }
    }
}

/// Geometry of a sequence as seen by the matcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Canvas {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Canvas {
    pub fn of(seq: &VideoSequence) -> Self {
        Canvas {
            frames: seq.len(),
            height: seq.height(),
            width: seq.width(),
        }
    }

    fn plane_len(&self) -> usize {
        self.height * self.width
    }
}

/// Positions along one axis: multiples of `stride`, plus `len - p` if the
/// last multiple does not reach the border.
fn axis_positions(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

/// Reference patch anchors for every frame, in raster order
/// (frame, row, col). Every pixel is covered by at least one patch.
pub fn extract_ref_grid(seq: &VideoSequence, cfg: &GroupingConfig) -> Result<Vec<Coord>> {
    grid_for(Canvas::of(seq), cfg)
}

pub fn grid_for(canvas: Canvas, cfg: &GroupingConfig) -> Result<Vec<Coord>> {
    cfg.validate()?;
    let p = cfg.patch_size;
    if canvas.height < p || canvas.width < p {
        return Err(Error::Shape(format!(
            "frame {}x{} is smaller than the {p}x{p} patch",
            canvas.width, canvas.height
        )));
    }
    let rows = axis_positions(canvas.height, p, cfg.stride);
    let cols = axis_positions(canvas.width, p, cfg.stride);
    let mut out = Vec::with_capacity(canvas.frames * rows.len() * cols.len());
    for frame in 0..canvas.frames {
        for &row in &rows {
            for &col in &cols {
                out.push(Coord { frame, row, col });
            }
        }
    }
    Ok(out)
}

/// Where a group's members live; independent of pixel values, so one layout
/// can gather every channel of a color sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLayout {
    pub anchor: Coord,
    pub patch_size: usize,
    /// Number of frames in each member tube.
    pub time: usize,
    /// Position of a member's own frame inside its tube.
    pub offset: usize,
    /// Member coordinates; `coords[0]` is the anchor itself.
    pub coords: Vec<Coord>,
    /// Tube SSD against the reference divided by `time`, per member.
    pub distances: Vec<f64>,
    /// Set when fewer than `group_size` candidates existed and members were
    /// repeated cyclically.
    pub padded: bool,
}

impl GroupLayout {
    pub fn dims(&self) -> Dims {
        Dims::new(self.patch_size * self.patch_size, self.time, self.coords.len())
    }

    /// First frame of member `k`'s tube.
    pub fn tube_start(&self, k: usize) -> usize {
        self.coords[k].frame - self.offset
    }

    /// Gathers member tubes from per-frame planes into a tensor
    /// (pixels row-major, then time, then member).
    pub fn gather(&self, planes: &[Vec<f64>], width: usize) -> Tensor3 {
        let p = self.patch_size;
        let mut out = Tensor3::zeros(self.dims());
        let buf = out.as_mut_slice();
        let mut idx = 0;
        for k in 0..self.coords.len() {
            let c = self.coords[k];
            let start = self.tube_start(k);
            for t in 0..self.time {
                let plane = &planes[start + t];
                for dy in 0..p {
                    let row = (c.row + dy) * width + c.col;
                    buf[idx..idx + p].copy_from_slice(&plane[row..row + p]);
                    idx += p;
                }
            }
        }
        out
    }
}

/// A matched group together with its data tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    pub layout: GroupLayout,
    pub tensor: Tensor3,
}

impl PatchGroup {
    pub fn anchor(&self) -> Coord {
        self.layout.anchor
    }

    pub fn coords(&self) -> &[Coord] {
        &self.layout.coords
    }

    pub fn with_tensor(&self, tensor: Tensor3) -> Result<PatchGroup> {
        if tensor.dims() != self.tensor.dims() {
            return Err(Error::Shape(format!(
                "restored tensor {} does not match group {}",
                tensor.dims(),
                self.tensor.dims()
            )));
        }
        Ok(PatchGroup {
            layout: self.layout.clone(),
            tensor,
        })
    }
}

/// Clipped temporal window around `frame`: `(start, length, offset)`.
pub fn temporal_window(frame: usize, frames: usize, window: usize) -> (usize, usize, usize) {
    let half = window / 2;
    let start = frame.saturating_sub(half);
    let end = (frame + half).min(frames - 1);
    (start, end - start + 1, frame - start)
}

fn tube_ssd(
    planes: &[Vec<f64>],
    width: usize,
    p: usize,
    reference: &[f64],
    start: usize,
    time: usize,
    row: usize,
    col: usize,
    bound: f64,
) -> f64 {
    let mut acc = 0.0;
    let mut idx = 0;
    for t in 0..time {
        let plane = &planes[start + t];
        for dy in 0..p {
            let base = (row + dy) * width + col;
            for (a, b) in plane[base..base + p].iter().zip(&reference[idx..idx + p]) {
                let d = a - b;
                acc += d * d;
            }
            idx += p;
        }
        // partial sums only grow; a tube already past the bound cannot be selected
        if acc > bound {
            return acc;
        }
    }
    acc
}

/// Selects the members of the group anchored at `anchor`, matching on the
/// given per-frame planes (normally luma).
///
/// The reference tube is always member 0. The remaining `K - 1` members are
/// the candidates with the smallest tube SSD, ties broken by
/// `(frame, row, col)`. With fewer than `K` candidates the list is padded by
/// cycling through the selected members from the start.
pub fn match_layout(
    planes: &[Vec<f64>],
    canvas: Canvas,
    anchor: Coord,
    cfg: &GroupingConfig,
) -> Result<GroupLayout> {
    cfg.validate()?;
    let p = cfg.patch_size;
    if planes.len() != canvas.frames || planes.iter().any(|pl| pl.len() != canvas.plane_len()) {
        return Err(Error::Shape("planes do not match canvas".into()));
    }
    if anchor.frame >= canvas.frames || anchor.row + p > canvas.height || anchor.col + p > canvas.width {
        return Err(Error::Shape(format!("anchor {anchor:?} out of bounds")));
    }
    let (win_start, time, offset) = temporal_window(anchor.frame, canvas.frames, cfg.temporal_window);

    let mut reference = Vec::with_capacity(p * p * time);
    for t in 0..time {
        let plane = &planes[win_start + t];
        for dy in 0..p {
            let base = (anchor.row + dy) * canvas.width + anchor.col;
            reference.extend_from_slice(&plane[base..base + p]);
        }
    }

    let r = cfg.search_radius;
    let row_lo = anchor.row.saturating_sub(r);
    let row_hi = (anchor.row + r).min(canvas.height - p);
    let col_lo = anchor.col.saturating_sub(r);
    let col_hi = (anchor.col + r).min(canvas.width - p);
    let wanted = cfg.group_size - 1;

    // `best` holds up to `wanted` (ssd, coord) pairs sorted ascending; a
    // candidate enters only if it beats the current worst under the total
    // order (ssd, frame, row, col). Candidates are visited in raster order,
    // so an equal-distance newcomer never displaces an earlier one.
    let mut best: Vec<(f64, Coord)> = Vec::with_capacity(wanted + 1);
    let mut candidates = 0usize;
    for frame in win_start..win_start + time {
        let Some(start) = frame.checked_sub(offset) else {
            continue;
        };
        if start + time > canvas.frames {
            continue;
        }
        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                let coord = Coord { frame, row, col };
                if coord == anchor {
                    continue;
                }
                candidates += 1;
                if wanted == 0 {
                    continue;
                }
                let bound = if best.len() == wanted { best[wanted - 1].0 } else { f64::INFINITY };
                let ssd = tube_ssd(planes, canvas.width, p, &reference, start, time, row, col, bound);
                if best.len() == wanted && ssd >= bound {
                    continue;
                }
                let pos = best.partition_point(|(d, _)| *d <= ssd);
                best.insert(pos, (ssd, coord));
                best.truncate(wanted);
            }
        }
    }

    let mut coords = Vec::with_capacity(cfg.group_size);
    let mut distances = Vec::with_capacity(cfg.group_size);
    coords.push(anchor);
    distances.push(0.0);
    for (ssd, c) in best {
        coords.push(c);
        distances.push(ssd / time as f64);
    }
    let selected = coords.len();
    let padded = candidates + 1 < cfg.group_size;
    while coords.len() < cfg.group_size {
        let i = coords.len() % selected;
        coords.push(coords[i]);
        distances.push(distances[i]);
    }
    Ok(GroupLayout {
        anchor,
        patch_size: p,
        time,
        offset,
        coords,
        distances,
        padded,
    })
}

/// Matches the group for `anchor` on the sequence's luma and gathers the
/// luma tensor.
pub fn match_group(seq: &VideoSequence, anchor: Coord, cfg: &GroupingConfig) -> Result<PatchGroup> {
    let luma = seq.luma();
    let canvas = Canvas::of(seq);
    let layout = match_layout(&luma, canvas, anchor, cfg)?;
    let tensor = layout.gather(&luma, canvas.width);
    Ok(PatchGroup { layout, tensor })
}

/// Matches every anchor in parallel. Output order equals anchor order.
pub fn match_all(
    planes: &[Vec<f64>],
    canvas: Canvas,
    anchors: &[Coord],
    cfg: &GroupingConfig,
) -> Result<Vec<GroupLayout>> {
    anchors
        .par_iter()
        .map(|&a| match_layout(planes, canvas, a, cfg))
        .collect()
}

/// Per-pixel running mean of restored patch values for one channel.
///
/// A pixel whose contributions are all bitwise equal reports that value
/// exactly; otherwise it reports `sum / count`. Pixels never touched fall
/// back to the base plane.
#[derive(Debug, Clone)]
pub struct Accumulator {
    canvas: Canvas,
    sum: Vec<f64>,
    count: Vec<u32>,
    first: Vec<f64>,
    uniform: Vec<bool>,
}

impl Accumulator {
    pub fn new(canvas: Canvas) -> Self {
        let n = canvas.frames * canvas.plane_len();
        Accumulator {
            canvas,
            sum: vec![0.0; n],
            count: vec![0; n],
            first: vec![0.0; n],
            uniform: vec![true; n],
        }
    }

    /// Adds every member tube, in member, time, pixel order.
    pub fn add(&mut self, layout: &GroupLayout, tensor: &Tensor3) -> Result<()> {
        if tensor.dims() != layout.dims() {
            return Err(Error::Shape(format!(
                "tensor {} does not match layout {}",
                tensor.dims(),
                layout.dims()
            )));
        }
        let p = layout.patch_size;
        let (w, plane) = (self.canvas.width, self.canvas.plane_len());
        for k in 0..layout.coords.len() {
            let c = layout.coords[k];
            let start = layout.tube_start(k);
            if start + layout.time > self.canvas.frames || c.row + p > self.canvas.height || c.col + p > w {
                return Err(Error::Shape(format!("member {c:?} out of bounds")));
            }
            let member = tensor.member(k);
            for t in 0..layout.time {
                let frame_base = (start + t) * plane;
                for dy in 0..p {
                    for dx in 0..p {
                        let v = member[t * p * p + dy * p + dx];
                        let idx = frame_base + (c.row + dy) * w + c.col + dx;
                        if self.count[idx] == 0 {
                            self.first[idx] = v;
                        } else if self.uniform[idx] && v.to_bits() != self.first[idx].to_bits() {
                            self.uniform[idx] = false;
                        }
                        self.sum[idx] += v;
                        self.count[idx] += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Averaged planes; uncovered pixels take the value from `base`.
    pub fn finish(&self, base: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let plane = self.canvas.plane_len();
        (0..self.canvas.frames)
            .map(|f| {
                (0..plane)
                    .map(|i| {
                        let idx = f * plane + i;
                        match self.count[idx] {
                            0 => base[f][i],
                            _ if self.uniform[idx] => self.first[idx],
                            n => self.sum[idx] / n as f64,
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Number of contributions per pixel, frame-major.
    pub fn coverage(&self) -> &[u32] {
        &self.count
    }
}

/// Averages restored single-channel groups back into a sequence. Pixels no
/// group covers keep their value from `base`. Output is clamped to `[0, 1]`.
pub fn aggregate(groups: &[PatchGroup], base: &VideoSequence) -> Result<VideoSequence> {
    if base.channels() != 1 {
        return Err(Error::Shape("aggregate works on single-channel sequences".into()));
    }
    let canvas = Canvas::of(base);
    let mut acc = Accumulator::new(canvas);
    for g in groups {
        acc.add(&g.layout, &g.tensor)?;
    }
    let base_planes: Vec<Vec<f64>> = base.frames().iter().map(|f| f.data().to_vec()).collect();
    let frames = acc
        .finish(&base_planes)
        .into_iter()
        .map(|plane| crate::frame::Frame::from_clamped(canvas.width, canvas.height, 1, plane))
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::with_manifest(frames, base.manifest().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;

    fn seq_from(frames: usize, w: usize, h: usize, f: impl Fn(usize, usize, usize) -> f64) -> VideoSequence {
        VideoSequence::new(
            (0..frames)
                .map(|t| Frame::from_fn(w, h, 1, |_, y, x| f(t, y, x)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn cfg(p: usize, stride: usize, r: usize, tw: usize, k: usize) -> GroupingConfig {
        GroupingConfig {
            patch_size: p,
            stride,
            search_radius: r,
            temporal_window: tw,
            group_size: k,
        }
    }

    #[test]
    fn grid_exact_tiling() {
        let seq = seq_from(2, 8, 8, |_, _, _| 0.0);
        let g = extract_ref_grid(&seq, &cfg(4, 4, 2, 1, 2)).unwrap();
        let frame0: Vec<(usize, usize)> = g.iter().filter(|c| c.frame == 0).map(|c| (c.row, c.col)).collect();
        assert_eq!(frame0, vec![(0, 0), (0, 4), (4, 0), (4, 4)]);
        assert_eq!(g.len(), 8);
    }

    #[test]
    fn grid_clamps_last_anchor() {
        let seq = seq_from(1, 9, 9, |_, _, _| 0.0);
        let g = extract_ref_grid(&seq, &cfg(4, 4, 2, 1, 2)).unwrap();
        let mut cols: Vec<usize> = g.iter().map(|c| c.col).collect();
        cols.dedup();
        cols.sort();
        cols.dedup();
        assert_eq!(cols, vec![0, 4, 5]);
    }

    #[test]
    fn grid_rejects_small_frame() {
        let seq = seq_from(1, 3, 3, |_, _, _| 0.0);
        assert!(extract_ref_grid(&seq, &cfg(4, 4, 2, 1, 2)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1, 1, 1, 1, 1).validate().is_err());
        assert!(cfg(2, 0, 1, 1, 1).validate().is_err());
        assert!(cfg(2, 1, 1, 2, 1).validate().is_err());
        assert!(cfg(2, 1, 1, 1, 0).validate().is_err());
        assert!(cfg(2, 3, 1, 1, 1).validate().is_err());
        assert!(GroupingConfig::default().validate().is_ok());
    }

    #[test]
    fn temporal_window_clipping() {
        assert_eq!(temporal_window(0, 10, 5), (0, 3, 0));
        assert_eq!(temporal_window(5, 10, 5), (3, 5, 2));
        assert_eq!(temporal_window(9, 10, 5), (7, 3, 2));
        assert_eq!(temporal_window(0, 1, 5), (0, 1, 0));
    }

    #[test]
    fn constant_sequence_takes_raster_order() {
        let seq = seq_from(3, 8, 8, |_, _, _| 0.5);
        let c = cfg(2, 2, 1, 1, 4);
        let anchor = Coord::new(1, 3, 3);
        let g = match_group(&seq, anchor, &c).unwrap();
        assert_eq!(
            g.coords(),
            &[anchor, Coord::new(1, 2, 2), Coord::new(1, 2, 3), Coord::new(1, 2, 4)]
        );
        assert!(g.layout.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn displaced_copy_ranks_second() {
        // reference patch at (0,0) copied to (3,4); everything else is a ramp
        let patch = |y: usize, x: usize| 0.9 - 0.1 * (y * 2 + x) as f64;
        let seq = seq_from(1, 8, 8, |_, y, x| {
            if y < 2 && x < 2 {
                patch(y, x)
            } else if (3..5).contains(&y) && (4..6).contains(&x) {
                patch(y - 3, x - 4)
            } else {
                0.01 * (y * 8 + x) as f64
            }
        });
        let g = match_group(&seq, Coord::new(0, 0, 0), &cfg(2, 2, 7, 1, 3)).unwrap();
        assert_eq!(g.coords()[1], Coord::new(0, 3, 4));
        assert_eq!(g.layout.distances[1], 0.0);
        assert!(g.layout.distances[2] > 0.0);
    }

    #[test]
    fn reference_is_member_zero_and_distances_sorted() {
        let seq = seq_from(4, 12, 12, |t, y, x| ((t * 7 + y * 3 + x * 5) % 11) as f64 / 11.0);
        let c = cfg(3, 3, 4, 3, 6);
        for anchor in extract_ref_grid(&seq, &c).unwrap() {
            let g = match_group(&seq, anchor, &c).unwrap();
            assert_eq!(g.coords()[0], anchor);
            assert_eq!(g.layout.distances[0], 0.0);
            assert!(g.layout.distances.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(g.tensor.member(0), g.layout.gather(&seq.luma(), 12).member(0));
        }
    }

    #[test]
    fn pads_cyclically_when_short() {
        let seq = seq_from(1, 3, 3, |_, y, x| (y * 3 + x) as f64 / 9.0);
        // 2x2 patch in 3x3 frame: 4 positions in total
        let g = match_group(&seq, Coord::new(0, 0, 0), &cfg(2, 1, 5, 1, 6)).unwrap();
        assert!(g.layout.padded);
        assert_eq!(g.coords().len(), 6);
        assert_eq!(g.coords()[4], g.coords()[0]);
        assert_eq!(g.coords()[5], g.coords()[1]);
    }

    #[test]
    fn tube_members_share_anchor_offset() {
        let seq = seq_from(6, 6, 6, |t, y, x| ((t + y + x) % 5) as f64 / 5.0);
        let c = cfg(2, 2, 1, 3, 20);
        let g = match_group(&seq, Coord::new(5, 2, 2), &c).unwrap();
        // window [4,5], anchor at offset 1; a candidate at frame 4 has tube [3,4]
        assert_eq!(g.layout.time, 2);
        assert_eq!(g.layout.offset, 1);
        assert!(g.coords().iter().all(|c| c.frame == 4 || c.frame == 5));
        for k in 0..g.coords().len() {
            let start = g.layout.tube_start(k);
            assert!(start + 2 <= 6);
        }
    }

    #[test]
    fn aggregate_single_cover_is_exact() {
        let base = seq_from(1, 4, 4, |_, _, _| 0.1);
        let c = cfg(4, 4, 0, 1, 1);
        let g = match_group(&base, Coord::new(0, 0, 0), &c).unwrap();
        let restored: Vec<f64> = (0..16).map(|i| i as f64 / 17.0).collect();
        let g = g.with_tensor(Tensor3::new(g.tensor.dims(), restored.clone()).unwrap()).unwrap();
        let out = aggregate(&[g], &base).unwrap();
        assert_eq!(out.frames()[0].data(), restored.as_slice());
    }

    #[test]
    fn aggregate_overlap_means() {
        let base = seq_from(1, 3, 2, |_, _, _| 0.9);
        let layout = |col| GroupLayout {
            anchor: Coord::new(0, 0, col),
            patch_size: 2,
            time: 1,
            offset: 0,
            coords: vec![Coord::new(0, 0, col)],
            distances: vec![0.0],
            padded: false,
        };
        let a = PatchGroup { layout: layout(0), tensor: Tensor3::new(Dims::new(4, 1, 1), vec![0.2; 4]).unwrap() };
        let b = PatchGroup { layout: layout(1), tensor: Tensor3::new(Dims::new(4, 1, 1), vec![0.6; 4]).unwrap() };
        let out = aggregate(&[a.clone(), b], &base).unwrap();
        let f = &out.frames()[0];
        assert_eq!(f.get(0, 0, 0), 0.2);
        assert!((f.get(0, 0, 1) - 0.4).abs() < 1e-15);
        assert_eq!(f.get(0, 1, 2), 0.6);

        let out = aggregate(&[a.clone(), a], &base).unwrap();
        let f = &out.frames()[0];
        assert_eq!(f.get(0, 0, 1), 0.2);
        // never covered: base fallback
        assert_eq!(f.get(0, 0, 2), 0.9);
    }
}
