//! Per-group ADMM solver and the sequence-level derain driver.
//!
//! Each group tensor `Y` (pixels x time x members) is restored by
//!
//! ```text
//! min_L  ½‖Y − L‖²_F + tau·‖M₍₃₎‖_{w,*} + lambda·‖G‖₁
//!  s.t.  M = L,  G = D_t(L)
//! ```
//!
//! where `M₍₃₎` is the group-mode unfolding and `D_t` the forward temporal
//! difference. The nuclear-norm prox touches only the group mode; the pixel
//! and time modes are never thresholded.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};
use crate::grouping::{self, Accumulator, Canvas, GroupingConfig};
use crate::tensor::{
    self, norm, soft_threshold_in_place, temporal_diff_adjoint_into, temporal_diff_into, Dims,
    Mode, Mode2Solver, Tensor3,
};

/// Groups solved per parallel batch before their results are aggregated.
const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Nuclear-norm weight.
    pub tau: f64,
    /// Temporal-gradient L1 weight.
    pub lambda: f64,
    /// ADMM penalty.
    pub rho: f64,
    pub max_iter: usize,
    /// Relative residual at which ADMM stops.
    pub tol: f64,
    /// Reweight singular values by `1 / (s_i + weight_eps)`, normalized so the
    /// leading weight is 1.
    pub use_weighted_nuclear: bool,
    pub weight_eps: f64,
    /// Regroup/solve/aggregate passes over the sequence.
    pub outer_iters: usize,
    /// Fraction of the residual `input − estimate` fed back between passes.
    pub delta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: 0.08,
            lambda: 0.02,
            rho: 1.0,
            max_iter: 100,
            tol: 1e-4,
            use_weighted_nuclear: true,
            weight_eps: 1e-6,
            outer_iters: 2,
            delta: 0.1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be >= 0, got {}", self.tau));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return bad(format!("rho must be > 0, got {}", self.rho));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if self.max_iter < 1 {
            return bad("max_iter must be >= 1".into());
        }
        if self.outer_iters < 1 {
            return bad("outer_iters must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.delta) {
            return bad(format!("delta must be in [0, 1), got {}", self.delta));
        }
        if !(self.weight_eps > 0.0) {
            return bad(format!("weight_eps must be > 0, got {}", self.weight_eps));
        }
        Ok(())
    }
}

/// Diagnostics for one group solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `sqrt(‖L − M‖² + ‖D_t L − G‖²) / max(‖L‖, 1e-12)` at exit.
    pub primal_residual: f64,
    /// `rho · sqrt(‖ΔM‖² + ‖D_tᵀ ΔG‖²) / max(‖L‖, 1e-12)` at exit.
    pub dual_residual: f64,
    pub converged: bool,
    /// Objective per iteration, evaluated at `(L, M, G)`:
    /// `½‖Y − L‖² + tau·Σ wᵢ σᵢ(M₍₃₎) + lambda·‖G‖₁`.
    pub objective: Vec<f64>,
    /// Nuclear-norm prox applications per mode (index 0 = mode 1).
    pub nuclear_prox_calls: [usize; 3],
    /// Absolute `‖L − M‖_F` at exit.
    pub lowrank_gap: f64,
    /// Absolute `‖D_t L − G‖_F` at exit (0 without the gradient split).
    pub gradient_gap: f64,
}

struct GradientSplit {
    g: Tensor3,
    u: Tensor3,
    dl: Tensor3,
    adj: Tensor3,
}

/// Restores one group tensor by ADMM.
///
/// The gradient split is only formed when `lambda > 0`; with `lambda = 0` the
/// model reduces to the nuclear-norm prox and the `L`-step is diagonal.
pub fn solve_group(y: &Tensor3, cfg: &SolverConfig) -> Result<(Tensor3, SolveReport)> {
    cfg.validate()?;
    if !y.is_finite() {
        return Err(Error::NonFinite("group data".into()));
    }
    let dims = y.dims();
    let use_grad = cfg.lambda > 0.0;
    if use_grad && dims.time < 2 {
        return Err(Error::InvalidParam(
            "temporal-gradient penalty needs at least 2 frames per tube".into(),
        ));
    }
    let rho = cfg.rho;
    let threshold = cfg.tau / rho;
    let unfolded_cols = dims.pixels * dims.time;

    let mut l = y.clone();
    let mut m = y.clone();
    let mut u = Tensor3::zeros(dims);
    let mut grad = use_grad.then(|| {
        let ddims = Dims::new(dims.pixels, dims.time - 1, dims.group);
        let mut dl = Tensor3::zeros(ddims);
        temporal_diff_into(&l, &mut dl);
        GradientSplit {
            g: dl.clone(),
            u: Tensor3::zeros(ddims),
            dl,
            adj: Tensor3::zeros(dims),
        }
    });
    let solver = Mode2Solver::new(dims.time, 1.0 + rho, if use_grad { rho } else { 0.0 });

    let mut report = SolveReport {
        iterations: 0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        converged: false,
        objective: Vec::new(),
        nuclear_prox_calls: [0; 3],
        lowrank_gap: 0.0,
        gradient_gap: 0.0,
    };
    let mut m_prev = vec![0.0; dims.len()];
    let mut g_prev: Vec<f64> = Vec::new();
    let mut work = Tensor3::zeros(dims);

    for iter in 1..=cfg.max_iter {
        // M-step: prox of the group-mode nuclear norm at L + U
        m_prev.copy_from_slice(m.as_slice());
        for ((w, a), b) in work.as_mut_slice().iter_mut().zip(l.as_slice()).zip(u.as_slice()) {
            *w = a + b;
        }
        // the group-mode unfolding is the storage itself read as a
        // row-major (members x pixels·time) matrix
        report.nuclear_prox_calls[Mode::Group.number() - 1] += 1;
        let weighted_sv = if threshold == 0.0 {
            m.as_mut_slice().copy_from_slice(work.as_slice());
            0.0
        } else {
            let eps = cfg.weight_eps;
            let weighted = cfg.use_weighted_nuclear;
            let (sv, shrunk) = tensor::svt_gram(
                work.as_slice(),
                dims.group,
                unfolded_cols,
                |s| {
                    let lead = s.first().copied().unwrap_or(0.0) + eps;
                    s.iter()
                        .map(|&si| if weighted { si - threshold * lead / (si + eps) } else { si - threshold })
                        .collect()
                },
                m.as_mut_slice(),
            )?;
            let lead = sv.first().copied().unwrap_or(0.0) + eps;
            sv.iter()
                .zip(&shrunk)
                .map(|(&s, &sh)| if weighted { sh * lead / (s + eps) } else { sh })
                .sum()
        };

        // G-step: soft threshold of D_t L + U_g
        if let Some(gs) = grad.as_mut() {
            g_prev.clear();
            g_prev.extend_from_slice(gs.g.as_slice());
            for ((g, d), uu) in gs.g.as_mut_slice().iter_mut().zip(gs.dl.as_slice()).zip(gs.u.as_slice()) {
                *g = d + uu;
            }
            soft_threshold_in_place(gs.g.as_mut_slice(), cfg.lambda / rho);
        }

        // L-step: (1 + rho) I + rho DᵀD, applied fiber-wise
        {
            let rhs = work.as_mut_slice();
            for (((r, yv), mv), uv) in rhs.iter_mut().zip(y.as_slice()).zip(m.as_slice()).zip(u.as_slice()) {
                *r = yv + rho * (mv - uv);
            }
            if let Some(gs) = grad.as_mut() {
                // reuse dl as scratch for G − U_g
                for ((s, g), uu) in gs.dl.as_mut_slice().iter_mut().zip(gs.g.as_slice()).zip(gs.u.as_slice()) {
                    *s = g - uu;
                }
                temporal_diff_adjoint_into(&gs.dl, &mut gs.adj);
                for (r, a) in work.as_mut_slice().iter_mut().zip(gs.adj.as_slice()) {
                    *r += rho * a;
                }
            }
        }
        solver.solve_in_place(&mut work);
        std::mem::swap(&mut l, &mut work);

        // dual updates and residuals
        let mut lowrank_sq = 0.0;
        for ((uv, lv), mv) in u.as_mut_slice().iter_mut().zip(l.as_slice()).zip(m.as_slice()) {
            let r = lv - mv;
            *uv += r;
            lowrank_sq += r * r;
        }
        let mut dm_sq: f64 = m.as_slice().iter().zip(&m_prev).map(|(a, b)| (a - b) * (a - b)).sum();
        let mut grad_sq = 0.0;
        let mut l1 = 0.0;
        if let Some(gs) = grad.as_mut() {
            temporal_diff_into(&l, &mut gs.dl);
            for ((uv, d), g) in gs.u.as_mut_slice().iter_mut().zip(gs.dl.as_slice()).zip(gs.g.as_slice()) {
                let r = d - g;
                *uv += r;
                grad_sq += r * r;
            }
            l1 = gs.g.as_slice().iter().map(|v| v.abs()).sum();
            // ‖Dᵀ(G − G_prev)‖², using `work` as scratch
            let mut delta = gs.g.clone();
            for (dv, p) in delta.as_mut_slice().iter_mut().zip(&g_prev) {
                *dv -= p;
            }
            temporal_diff_adjoint_into(&delta, &mut gs.adj);
            dm_sq += gs.adj.as_slice().iter().map(|v| v * v).sum::<f64>();
        }

        let fidelity: f64 = y.as_slice().iter().zip(l.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
        let objective = 0.5 * fidelity + cfg.tau * weighted_sv + cfg.lambda * l1;

        let scale = norm(l.as_slice()).max(1e-12);
        report.iterations = iter;
        report.primal_residual = (lowrank_sq + grad_sq).sqrt() / scale;
        report.dual_residual = rho * dm_sq.sqrt() / scale;
        report.lowrank_gap = lowrank_sq.sqrt();
        report.gradient_gap = grad_sq.sqrt();
        report.objective.push(objective);

        if !objective.is_finite() || !report.primal_residual.is_finite() || !report.dual_residual.is_finite() {
            return Err(Error::SolverAbort(format!(
                "non-finite iterate at iteration {iter} (primal {}, dual {}, objective {objective})",
                report.primal_residual, report.dual_residual
            )));
        }
        if report.primal_residual.max(report.dual_residual) < cfg.tol {
            report.converged = true;
            break;
        }
    }
    Ok((l, report))
}

/// Summary of a [`derain_sequence`] run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DerainReport {
    pub frames: usize,
    pub channels: usize,
    pub outer_iters: usize,
    pub groups_per_pass: usize,
    pub group_solves: usize,
    pub padded_groups: usize,
    pub iterations_total: usize,
    pub iterations_max: usize,
    pub converged_solves: usize,
    pub max_primal_residual: f64,
    pub max_dual_residual: f64,
}

impl DerainReport {
    pub fn mean_iterations(&self) -> f64 {
        if self.group_solves == 0 {
            0.0
        } else {
            self.iterations_total as f64 / self.group_solves as f64
        }
    }

    fn record(&mut self, r: &SolveReport) {
        self.group_solves += 1;
        self.iterations_total += r.iterations;
        self.iterations_max = self.iterations_max.max(r.iterations);
        self.converged_solves += r.converged as usize;
        self.max_primal_residual = self.max_primal_residual.max(r.primal_residual);
        self.max_dual_residual = self.max_dual_residual.max(r.dual_residual);
    }
}

fn planes_of(seq: &VideoSequence, channel: usize) -> Vec<Vec<f64>> {
    seq.frames().iter().map(|f| f.plane(channel).to_vec()).collect()
}

fn luma_of(channels: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    if channels.len() == 1 {
        return channels[0].clone();
    }
    (0..channels[0].len())
        .map(|f| {
            let (r, g, b) = (&channels[0][f], &channels[1][f], &channels[2][f]);
            (0..r.len()).map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]).collect()
        })
        .collect()
}

/// Derains a sequence: per outer pass, match groups on the luma of the
/// current estimate, restore every group of every channel, and average the
/// restored tubes back. Between passes the data term is reset to
/// `estimate + delta·(input − estimate)`. Output is clamped to `[0, 1]`.
///
/// Group solves run on the ambient rayon pool; the aggregation order is
/// fixed, so the output does not depend on the number of threads.
pub fn derain_sequence(
    seq: &VideoSequence,
    gcfg: &GroupingConfig,
    scfg: &SolverConfig,
) -> Result<(VideoSequence, DerainReport)> {
    gcfg.validate()?;
    scfg.validate()?;
    if seq.len() < 2 {
        return Err(Error::InvalidParam(format!(
            "derain needs a sequence of at least 2 frames (got {}); temporal restoration requires T >= 2",
            seq.len()
        )));
    }
    if scfg.lambda > 0.0 && gcfg.temporal_window < 3 {
        return Err(Error::InvalidParam(
            "lambda > 0 needs temporal_window >= 3 so every tube spans at least 2 frames".into(),
        ));
    }
    let canvas = Canvas::of(seq);
    let anchors = grouping::grid_for(canvas, gcfg)?;
    let channels = seq.channels();
    let input: Vec<Vec<Vec<f64>>> = (0..channels).map(|c| planes_of(seq, c)).collect();
    let mut data = input.clone();
    let mut estimate = input.clone();

    let mut report = DerainReport {
        frames: seq.len(),
        channels,
        outer_iters: scfg.outer_iters,
        groups_per_pass: anchors.len(),
        ..DerainReport::default()
    };

    for pass in 0..scfg.outer_iters {
        let luma = luma_of(&estimate);
        let layouts = grouping::match_all(&luma, canvas, &anchors, gcfg)?;
        report.padded_groups += layouts.iter().filter(|l| l.padded).count();
        for c in 0..channels {
            let mut acc = Accumulator::new(canvas);
            for batch in layouts.chunks(BATCH) {
                let solved: Vec<Result<(Tensor3, SolveReport)>> = batch
                    .par_iter()
                    .map(|layout| solve_group(&layout.gather(&data[c], canvas.width), scfg))
                    .collect();
                for (layout, result) in batch.iter().zip(solved) {
                    let (restored, r) = result?;
                    report.record(&r);
                    acc.add(layout, &restored)?;
                }
            }
            estimate[c] = acc.finish(&data[c]);
            for plane in &mut estimate[c] {
                for v in plane.iter_mut() {
                    *v = crate::frame::clamp_unit(*v);
                }
            }
        }
        if pass + 1 < scfg.outer_iters {
            for c in 0..channels {
                for f in 0..canvas.frames {
                    for i in 0..data[c][f].len() {
                        let est = estimate[c][f][i];
                        data[c][f][i] = est + scfg.delta * (input[c][f][i] - est);
                    }
                }
            }
        }
    }

    let frames = (0..canvas.frames)
        .map(|f| {
            let planes: Vec<f64> = (0..channels).flat_map(|c| estimate[c][f].iter().copied()).collect();
            Frame::from_clamped(canvas.width, canvas.height, channels, planes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((VideoSequence::with_manifest(frames, seq.manifest().to_vec())?, report))
}
