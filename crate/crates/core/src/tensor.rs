//! Dense third-order tensor algebra.
//!
//! A [`Tensor3`] has dimensions `(d, t, k)`: patch pixels, temporal window
//! length and group size. Storage is contiguous with the pixel index varying
//! fastest, then time, then patch, so entry `(i, t, k)` lives at
//! `i + d * (t + T * k)`.
//!
//! Mode-n unfoldings use a fixed column convention:
//!
//! | mode | row | column       |
//! |------|-----|--------------|
//! | 1    | `i` | `t + T * k`  |
//! | 2    | `t` | `i + d * k`  |
//! | 3    | `k` | `i + d * t`  |
//!
//! With this layout the mode-3 unfolding is a row-major reinterpretation of
//! the tensor storage, which the solver relies on to avoid copies.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Singular values at or below this are treated as zero when counting rank
/// or rebuilding a thresholded matrix.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Which unfolding of a [`Tensor3`] to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Spatial-local (patch pixel) mode.
    Pixel,
    /// Temporal mode.
    Time,
    /// Non-local self-similarity (group member) mode.
    Group,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Pixel, Mode::Time, Mode::Group];

    /// 1-based mode number.
    pub fn number(self) -> usize {
        match self {
            Mode::Pixel => 1,
            Mode::Time => 2,
            Mode::Group => 3,
        }
    }

    pub fn from_number(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::Pixel),
            2 => Ok(Mode::Time),
            3 => Ok(Mode::Group),
            _ => Err(Error::InvalidParam(format!("mode must be 1, 2 or 3, got {n}"))),
        }
    }
}

/// Dimensions of a [`Tensor3`]: patch pixels, temporal length, group size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub pixels: usize,
    pub time: usize,
    pub group: usize,
}

impl Dims {
    pub fn new(pixels: usize, time: usize, group: usize) -> Self {
        Dims {
            pixels,
            time,
            group,
        }
    }

    pub fn len(&self) -> usize {
        self.pixels * self.time * self.group
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn unfolded_shape(&self, mode: Mode) -> (usize, usize) {
        match mode {
            Mode::Pixel => (self.pixels, self.time * self.group),
            Mode::Time => (self.time, self.pixels * self.group),
            Mode::Group => (self.group, self.pixels * self.time),
        }
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.pixels, self.time, self.group)
    }
}

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix dims must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dims must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    /// Singular values in nonincreasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s = self.to_nalgebra().singular_values().as_slice().to_vec();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.singular_values().iter().sum()
    }

    /// Number of singular values above [`RANK_CUTOFF`].
    pub fn rank(&self) -> usize {
        self.singular_values().iter().filter(|&&s| s > RANK_CUTOFF).count()
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(m.row(r).iter());
        }
        Matrix { rows, cols, data }
    }
}

/// Dense third-order tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: Dims,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if dims.pixels == 0 || dims.time == 0 || dims.group == 0 {
            return Err(Error::Shape(format!("tensor dims must be positive, got {dims}")));
        }
        if data.len() != dims.len() {
            return Err(Error::Shape(format!(
                "tensor {dims} needs {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        assert!(!dims.is_empty(), "tensor dims must be positive");
        Tensor3 {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut out = Tensor3::zeros(dims);
        for k in 0..dims.group {
            for t in 0..dims.time {
                for i in 0..dims.pixels {
                    let idx = out.index(i, t, k);
                    out.data[idx] = f(i, t, k);
                }
            }
        }
        out
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn index(&self, i: usize, t: usize, k: usize) -> usize {
        i + self.dims.pixels * (t + self.dims.time * k)
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize, k: usize) -> f64 {
        self.data[self.index(i, t, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, t: usize, k: usize, v: f64) {
        let idx = self.index(i, t, k);
        self.data[idx] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Slice of the values belonging to group member `k` (pixel-fastest).
    pub fn member(&self, k: usize) -> &[f64] {
        let n = self.dims.pixels * self.dims.time;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn inner(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims, "inner product of mismatched tensors");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Mode-n unfolding.
pub fn unfold(t: &Tensor3, mode: Mode) -> Matrix {
    let dims = t.dims;
    let (rows, cols) = dims.unfolded_shape(mode);
    if mode == Mode::Group {
        return Matrix {
            rows,
            cols,
            data: t.data.clone(),
        };
    }
    let mut data = vec![0.0; rows * cols];
    for k in 0..dims.group {
        for tt in 0..dims.time {
            for i in 0..dims.pixels {
                let (r, c) = match mode {
                    Mode::Pixel => (i, tt + dims.time * k),
                    Mode::Time => (tt, i + dims.pixels * k),
                    Mode::Group => unreachable!(),
                };
                data[r * cols + c] = t.get(i, tt, k);
            }
        }
    }
    Matrix { rows, cols, data }
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: Mode, dims: Dims) -> Result<Tensor3> {
    if dims.is_empty() {
        return Err(Error::Shape(format!("tensor dims must be positive, got {dims}")));
    }
    let (rows, cols) = dims.unfolded_shape(mode);
    if m.rows != rows || m.cols != cols {
        return Err(Error::Shape(format!(
            "cannot fold a {}x{} matrix along mode {} into {dims} (expected {rows}x{cols})",
            m.rows,
            m.cols,
            mode.number()
        )));
    }
    if mode == Mode::Group {
        return Tensor3::new(dims, m.data.clone());
    }
    let mut out = Tensor3::zeros(dims);
    for k in 0..dims.group {
        for tt in 0..dims.time {
            for i in 0..dims.pixels {
                let (r, c) = match mode {
                    Mode::Pixel => (i, tt + dims.time * k),
                    Mode::Time => (tt, i + dims.pixels * k),
                    Mode::Group => unreachable!(),
                };
                out.set(i, tt, k, m.data[r * cols + c]);
            }
        }
    }
    Ok(out)
}

/// Result of a singular-value thresholding step.
#[derive(Debug, Clone)]
pub struct SvtOutput {
    pub matrix: Matrix,
    /// Singular values of the input, nonincreasing.
    pub singular_values: Vec<f64>,
    /// Thresholded singular values, same order.
    pub shrunk: Vec<f64>,
}

/// Proximal operator of the (weighted) nuclear norm.
///
/// Each singular value is shrunk to `max(s_i - tau * w_i, 0)`, with `w_i = 1`
/// when no weights are given. Weights must cover every singular value and be
/// nondecreasing in rank order.
pub fn svt(m: &Matrix, tau: f64, weights: Option<&[f64]>) -> Result<Matrix> {
    let r = m.rows.min(m.cols);
    if let Some(w) = weights {
        if w.len() < r {
            return Err(Error::InvalidParam(format!(
                "svt needs {r} weights, got {}",
                w.len()
            )));
        }
        if w[..r].windows(2).any(|p| p[1] < p[0]) || w.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidParam(
                "svt weights must be nonnegative and nondecreasing".into(),
            ));
        }
    }
    svt_with(m, tau, |s| {
        s.iter()
            .enumerate()
            .map(|(i, &si)| si - tau * weights.map_or(1.0, |w| w[i]))
            .collect()
    })
    .map(|o| o.matrix)
}

/// Reweighted SVT: weights `w_i = 1 / (s_i + eps)` from the input's own
/// singular values, normalized so the leading weight is 1.
pub fn weighted_svt(m: &Matrix, tau: f64, eps: f64) -> Result<SvtOutput> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParam(format!("weight eps must be positive, got {eps}")));
    }
    svt_with(m, tau, |s| {
        let lead = s.first().copied().unwrap_or(0.0) + eps;
        s.iter().map(|&si| si - tau * lead / (si + eps)).collect()
    })
}

/// SVT of a row-major `rows x cols` matrix through the eigendecomposition
/// of its row Gram matrix `m mᵀ = U S² Uᵀ`: writes `U diag(shrunk / s) Uᵀ m`
/// into `out` and returns `(singular_values, shrunk)`.
///
/// Much cheaper than a full SVD when rows are few, at the cost of resolving
/// singular values only down to about `1e-8` of the largest one.
pub(crate) fn svt_gram(
    data: &[f64],
    rows: usize,
    cols: usize,
    shrink: impl Fn(&[f64]) -> Vec<f64>,
    out: &mut [f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut gram = DMatrix::<f64>::zeros(rows, rows);
    for i in 0..rows {
        let a = &data[i * cols..(i + 1) * cols];
        for j in 0..=i {
            let v = dot(a, &data[j * cols..(j + 1) * cols]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let singular_values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let shrunk: Vec<f64> = shrink(&singular_values).into_iter().map(|v| v.max(0.0)).collect();
    let kept = shrunk.iter().take_while(|&&x| x > RANK_CUTOFF).count();

    let mut proj = DMatrix::<f64>::zeros(rows, rows);
    for (j, &i) in order.iter().take(kept).enumerate() {
        let col = eig.eigenvectors.column(i);
        proj.ger(shrunk[j] / singular_values[j], &col, &col, 1.0);
    }
    // row-major data read as column-major is mᵀ, and mᵀ proj = (proj m)ᵀ
    let mt = nalgebra::DMatrixView::from_slice(data, cols, rows);
    let mut res = nalgebra::DMatrixViewMut::from_slice(out, cols, rows);
    res.gemm(1.0, &mt, &proj, 0.0);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svt output".into()));
    }
    Ok((singular_values, shrunk))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Thin SVD factors `m = U diag(s) Vᵀ`, singular values nonincreasing.
struct Factors {
    u: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
}

/// Full SVD. Wide matrices are first reduced by a thin QR of the transpose
/// (`mᵀ = Q R`), so the iterative part runs on the small square factor:
/// `R = Ur S Vrᵀ` gives `m = Vr S (Q Ur)ᵀ`.
fn factorize(m: &Matrix) -> Result<Factors> {
    let a = m.to_nalgebra();
    let (u, s, v) = if m.rows < m.cols {
        let qr = a.transpose().qr();
        let q = qr.q();
        let svd = qr.r().svd(true, true);
        match (svd.u, svd.v_t) {
            (Some(ur), Some(vr_t)) => (vr_t.transpose(), svd.singular_values, q * ur),
            _ => return Err(Error::NonFinite("svd did not produce singular vectors".into())),
        }
    } else {
        let svd = a.svd(true, true);
        match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, svd.singular_values, v_t.transpose()),
            _ => return Err(Error::NonFinite("svd did not produce singular vectors".into())),
        }
    };
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    Ok(Factors {
        u: u.select_columns(order.iter()),
        s: order.iter().map(|&i| s[i]).collect(),
        v: v.select_columns(order.iter()),
    })
}

/// Full SVD, then rebuild from `shrink(singular_values)`; negative results
/// are clamped to zero and values at or below [`RANK_CUTOFF`] dropped.
fn svt_with(m: &Matrix, tau: f64, shrink: impl Fn(&[f64]) -> Vec<f64>) -> Result<SvtOutput> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParam(format!("svt threshold must be finite and >= 0, got {tau}")));
    }
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svt input".into()));
    }
    let Factors { u, s: singular_values, v } = factorize(m)?;
    let shrunk: Vec<f64> = shrink(&singular_values).into_iter().map(|v| v.max(0.0)).collect();
    let kept = shrunk.iter().take_while(|&&x| x > RANK_CUTOFF).count();

    let matrix = if kept == 0 {
        Matrix::zeros(m.rows, m.cols)
    } else {
        let mut us = u.columns(0, kept).into_owned();
        for (c, mut col) in us.column_iter_mut().enumerate() {
            col *= shrunk[c];
        }
        Matrix::from_nalgebra(&(us * v.columns(0, kept).transpose()))
    };
    if matrix.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svt output".into()));
    }
    Ok(SvtOutput {
        matrix,
        singular_values,
        shrunk,
    })
}

/// Elementwise `sign(v) * max(|v| - lambda, 0)`.
pub fn soft_threshold(x: &Tensor3, lambda: f64) -> Tensor3 {
    let mut out = x.clone();
    soft_threshold_in_place(&mut out.data, lambda);
    out
}

pub(crate) fn soft_threshold_in_place(values: &mut [f64], lambda: f64) {
    for v in values {
        let mag = v.abs() - lambda;
        *v = if mag > 0.0 { mag.copysign(*v) } else { 0.0 };
    }
}

/// Forward difference along the temporal mode: `(d, T, K) -> (d, T-1, K)`.
pub fn temporal_diff(t: &Tensor3) -> Result<Tensor3> {
    let dims = t.dims;
    if dims.time < 2 {
        return Err(Error::Shape("temporal difference needs at least 2 frames".into()));
    }
    let out_dims = Dims::new(dims.pixels, dims.time - 1, dims.group);
    let mut out = Tensor3::zeros(out_dims);
    temporal_diff_into(t, &mut out);
    Ok(out)
}

pub(crate) fn temporal_diff_into(t: &Tensor3, out: &mut Tensor3) {
    let d = t.dims.pixels;
    let time = t.dims.time;
    for k in 0..t.dims.group {
        let src = t.member(k);
        let dst = &mut out.data[k * d * (time - 1)..(k + 1) * d * (time - 1)];
        for tt in 0..time - 1 {
            for i in 0..d {
                dst[tt * d + i] = src[(tt + 1) * d + i] - src[tt * d + i];
            }
        }
    }
}

/// Adjoint of [`temporal_diff`] for an output of temporal length `time_out`.
pub fn temporal_diff_adjoint(g: &Tensor3, time_out: usize) -> Result<Tensor3> {
    let dims = g.dims;
    if time_out < 2 || dims.time != time_out - 1 {
        return Err(Error::Shape(format!(
            "adjoint input has temporal length {}, expected {}",
            dims.time,
            time_out.saturating_sub(1)
        )));
    }
    let mut out = Tensor3::zeros(Dims::new(dims.pixels, time_out, dims.group));
    temporal_diff_adjoint_into(g, &mut out);
    Ok(out)
}

pub(crate) fn temporal_diff_adjoint_into(g: &Tensor3, out: &mut Tensor3) {
    let d = g.dims.pixels;
    let time = out.dims.time;
    for k in 0..g.dims.group {
        let src = g.member(k);
        let dst = &mut out.data[k * d * time..(k + 1) * d * time];
        for tt in 0..time {
            for i in 0..d {
                let next = if tt < time - 1 { src[tt * d + i] } else { 0.0 };
                let prev = if tt > 0 { src[(tt - 1) * d + i] } else { 0.0 };
                dst[tt * d + i] = prev - next;
            }
        }
    }
}

/// Solves `(a I + rho DᵀD) x = rhs` independently for every temporal fiber,
/// where `D` is the forward-difference operator. `DᵀD` is tridiagonal, so
/// each fiber is a Thomas elimination.
pub fn solve_mode2_system(rhs: &Tensor3, a: f64, rho: f64) -> Result<Tensor3> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParam(format!("diagonal weight must be positive, got {a}")));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidParam(format!("penalty must be >= 0, got {rho}")));
    }
    let mut out = rhs.clone();
    Mode2Solver::new(rhs.dims.time, a, rho).solve_in_place(&mut out);
    Ok(out)
}

/// Precomputed Thomas elimination for a fixed temporal length.
#[derive(Debug, Clone)]
pub(crate) struct Mode2Solver {
    time: usize,
    off: f64,
    // modified super-diagonal and inverse pivots
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl Mode2Solver {
    pub(crate) fn new(time: usize, a: f64, rho: f64) -> Self {
        let diag = |t: usize| {
            if time == 1 {
                a
            } else if t == 0 || t == time - 1 {
                a + rho
            } else {
                a + 2.0 * rho
            }
        };
        let off = -rho;
        let mut c_prime = vec![0.0; time];
        let mut inv_pivot = vec![0.0; time];
        let mut prev_c = 0.0;
        for t in 0..time {
            let pivot = if t == 0 { diag(0) } else { diag(t) - off * prev_c };
            inv_pivot[t] = 1.0 / pivot;
            prev_c = if t + 1 < time { off * inv_pivot[t] } else { 0.0 };
            c_prime[t] = prev_c;
        }
        Mode2Solver {
            time,
            off,
            c_prime,
            inv_pivot,
        }
    }

    pub(crate) fn solve_in_place(&self, x: &mut Tensor3) {
        debug_assert_eq!(x.dims.time, self.time);
        let d = x.dims.pixels;
        let time = self.time;
        for k in 0..x.dims.group {
            let fiber_block = &mut x.data[k * d * time..(k + 1) * d * time];
            // forward sweep
            for i in 0..d {
                fiber_block[i] *= self.inv_pivot[0];
            }
            for t in 1..time {
                for i in 0..d {
                    let prev = fiber_block[(t - 1) * d + i];
                    let cur = &mut fiber_block[t * d + i];
                    *cur = (*cur - self.off * prev) * self.inv_pivot[t];
                }
            }
            // back substitution
            for t in (0..time.saturating_sub(1)).rev() {
                for i in 0..d {
                    let next = fiber_block[(t + 1) * d + i];
                    fiber_block[t * d + i] -= self.c_prime[t] * next;
                }
            }
        }
    }
}
