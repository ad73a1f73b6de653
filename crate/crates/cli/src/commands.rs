//! Subcommand bodies. Each returns a classified error; [`crate::run`] turns
//! it into an exit code.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use lrt_core::metrics::{self, ConfusionMatrix};
use lrt_core::pnm;
use lrt_core::prep::{self, PreparedSample};
use lrt_core::synth;
use lrt_core::{derain_sequence, Frame, VideoSequence};

use crate::config::RunConfig;
use crate::error::{io_err, CliError};
use crate::{ConfigArgs, DerainArgs, EvalDerainArgs, EvalSegArgs, PrepArgs, SynthArgs};

pub const MANIFEST: &str = "manifest.txt";

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&args.set)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `f` on a pool capped at `threads` workers, or on the global pool.
fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err("cannot create", path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err("cannot write", path, e))
}

fn frame_name(index: usize, frame: &Frame) -> String {
    format!("frame_{index:05}.{}", pnm::extension(frame))
}

/// Writes frames plus a manifest naming them in order.
fn write_sequence(dir: &Path, seq: &VideoSequence) -> Result<(), CliError> {
    create_dir(dir)?;
    let mut manifest = String::new();
    for (i, f) in seq.frames().iter().enumerate() {
        let name = frame_name(i, f);
        write_file(&dir.join(&name), &pnm::write_pnm(f))?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    write_file(&dir.join(MANIFEST), manifest.as_bytes())
}

/// Loads a directory's frames: through its manifest if it has one, else
/// every `.pgm`/`.ppm` file in name order.
fn load_dir(dir: &Path) -> Result<VideoSequence, CliError> {
    let manifest = dir.join(MANIFEST);
    if manifest.is_file() {
        return Ok(pnm::load_sequence(&manifest)?);
    }
    let frames = pnm_files(dir)?
        .iter()
        .map(|p| pnm::read_frame(p))
        .collect::<lrt_core::Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(CliError::Usage(format!("{} holds no frames", dir.display())));
    }
    VideoSequence::new(frames).map_err(|e| CliError::from(e).context(&dir.display().to_string()))
}

fn pnm_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| io_err("cannot list", dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err("cannot list", dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && (ext == "pgm" || ext == "ppm") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn derain(args: &DerainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.cfg)?;
    let seq = pnm::load_sequence(&args.input)?;
    let started = Instant::now();
    let (restored, report) = with_threads(args.cfg.threads, || derain_sequence(&seq, &cfg.grouping, &cfg.solver))??;
    let wall = started.elapsed().as_secs_f64();
    write_sequence(&args.output, &restored)?;

    let mut text = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(text, "{k}={v}");
    };
    put("frames", report.frames.to_string());
    put("channels", report.channels.to_string());
    put("width", seq.width().to_string());
    put("height", seq.height().to_string());
    put("outer_iters", report.outer_iters.to_string());
    put("groups_per_pass", report.groups_per_pass.to_string());
    put("group_solves", report.group_solves.to_string());
    put("padded_groups", report.padded_groups.to_string());
    put("iterations_total", report.iterations_total.to_string());
    put("iterations_mean", format!("{:.3}", report.mean_iterations()));
    put("iterations_max", report.iterations_max.to_string());
    put("converged_solves", report.converged_solves.to_string());
    put("max_primal_residual", format!("{:e}", report.max_primal_residual));
    put("max_dual_residual", format!("{:e}", report.max_dual_residual));
    put("wall_time_s", format!("{wall:.3}"));
    write_file(&args.output.join("report.txt"), text.as_bytes())?;
    writeln!(out, "{text}").ok();
    Ok(())
}

fn parse_size(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("--size must be WIDTHxHEIGHT with positive sides, got `{s}`"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (w, h): (usize, usize) = (w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?);
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

pub fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(&args.cfg)?;
    let (width, height) = parse_size(&args.size)?;
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    let r = &mut cfg.rain;
    for (slot, v) in [
        (&mut r.density, args.rain_density),
        (&mut r.length, args.rain_length),
        (&mut r.angle_deg, args.rain_angle),
        (&mut r.intensity, args.rain_intensity),
        (&mut r.jitter, args.rain_jitter),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    if args.frames == 0 {
        return Err(CliError::Usage("--frames must be positive".into()));
    }
    if !(args.sigma >= 0.0) || !args.sigma.is_finite() {
        return Err(CliError::Usage(format!("--sigma must be finite and >= 0, got {}", args.sigma)));
    }

    let (clean, _) = synth::make_scene(args.frames, width, height, args.motion, seed, args.channels)?;
    let rain = (cfg.rain.density > 0.0).then_some(&cfg.rain);
    let degraded = synth::degrade_sequence(&clean, args.sigma, rain, seed)?;
    write_sequence(&args.output.join("clean"), &clean)?;
    write_sequence(&args.output.join("degraded"), &degraded)?;

    let mut record = cfg.to_text();
    let _ = writeln!(
        record,
        "# frames={} size={width}x{height} sigma={} motion={} channels={}",
        args.frames, args.sigma, args.motion, args.channels
    );
    write_file(&args.output.join("synth.txt"), record.as_bytes())?;
    writeln!(out, "wrote {} frames of {width}x{height} to {}", args.frames, args.output.display()).ok();
    Ok(())
}

pub fn eval_derain(args: &EvalDerainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let restored = load_dir(&args.restored)?;
    let truth = load_dir(&args.truth)?;
    if restored.len() != truth.len() {
        return Err(CliError::Usage(format!(
            "frame counts differ: {} restored, {} truth",
            restored.len(),
            truth.len()
        )));
    }
    let (mut psnr_sum, mut ssim_sum) = (0.0, 0.0);
    for (i, (r, t)) in restored.frames().iter().zip(truth.frames()).enumerate() {
        let p = metrics::psnr(r, t)?;
        let s = metrics::ssim(r, t)?;
        psnr_sum += p;
        ssim_sum += s;
        writeln!(out, "frame={i} psnr={p} ssim={s}").ok();
    }
    let n = restored.len() as f64;
    writeln!(out, "mean_psnr={}", psnr_sum / n).ok();
    writeln!(out, "mean_ssim={}", ssim_sum / n).ok();
    Ok(())
}

pub fn eval_seg(args: &EvalSegArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.classes == 0 || args.classes > 255 {
        return Err(CliError::Usage(format!("--classes must be in 1..=255, got {}", args.classes)));
    }
    let gt_files = pnm_files(&args.gt)?;
    if gt_files.is_empty() {
        return Err(CliError::Usage(format!("{} holds no label maps", args.gt.display())));
    }
    let mut total = ConfusionMatrix::new(args.classes);
    for gt_path in &gt_files {
        let name = gt_path.file_name().expect("listed files have names");
        let pred_path = args.pred.join(name);
        let gt = pnm::read_labels(gt_path)?;
        let pred = pnm::read_labels(&pred_path)?;
        let cm = metrics::confusion(&pred, &gt, args.classes, args.ignore)
            .map_err(|e| CliError::from(e).context(&format!("{} vs {}", pred_path.display(), gt_path.display())))?;
        total.merge(&cm)?;
    }
    let report = metrics::miou(&total)?;
    for (class, iou) in &report.per_class {
        match iou {
            Some(v) => writeln!(out, "class={class} iou={v}").ok(),
            None => writeln!(out, "class={class} iou=undefined").ok(),
        };
    }
    writeln!(out, "miou={}", report.miou).ok();
    Ok(())
}

fn pair_lines(manifest: &Path) -> Result<Vec<(PathBuf, PathBuf)>, CliError> {
    let text = fs::read_to_string(manifest).map_err(|e| io_err("cannot read", manifest, e))?;
    let mut pairs = Vec::new();
    for (line, entry) in pnm::manifest_lines(&text) {
        let fields: Vec<&str> = entry.split_whitespace().collect();
        let [image, labels] = fields[..] else {
            return Err(CliError::Usage(format!(
                "{} line {line}: expected `image labels`, got `{entry}`",
                manifest.display()
            )));
        };
        pairs.push((pnm::resolve(manifest, image), pnm::resolve(manifest, labels)));
    }
    if pairs.is_empty() {
        return Err(CliError::Usage(format!("{} lists no pairs", manifest.display())));
    }
    Ok(pairs)
}

fn normalized_bytes(sample: &PreparedSample) -> Vec<u8> {
    sample
        .normalized
        .data
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

pub fn prep(args: &PrepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(&args.cfg)?;
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    cfg.prep.seed = cfg.require_seed()?;
    let pairs = pair_lines(&args.pairs)?;
    let prep_cfg = cfg.prep.clone();

    let samples: Vec<Result<PreparedSample, CliError>> = with_threads(args.cfg.threads, || {
        pairs
            .par_iter()
            .enumerate()
            .map(|(i, (image, labels))| {
                let img = pnm::read_frame(image)?;
                let lab = pnm::read_labels(labels)?;
                prep::prepare_sample(&img, &lab, &prep_cfg, i as u64)
                    .map_err(|e| CliError::from(e).context(&image.display().to_string()))
            })
            .collect()
    })?;

    create_dir(&args.output)?;
    let mut record = cfg.to_text();
    for (i, (sample, (image, labels))) in samples.into_iter().zip(&pairs).enumerate() {
        let s = sample?;
        write_file(
            &args.output.join(format!("image_{i:05}.{}", pnm::extension(&s.image))),
            &pnm::write_pnm(&s.image),
        )?;
        write_file(&args.output.join(format!("label_{i:05}.pgm")), &pnm::write_pnm_labels(&s.labels))?;
        write_file(&args.output.join(format!("normalized_{i:05}.f32")), &normalized_bytes(&s))?;
        let _ = writeln!(
            record,
            "# sample={i} image={} labels={} sample_seed={} crop_top={} crop_left={} flipped={} normalized={}x{}x{}",
            image.display(),
            labels.display(),
            s.sample_seed,
            s.crop.0,
            s.crop.1,
            s.flipped,
            s.normalized.channels,
            s.normalized.height,
            s.normalized.width,
        );
    }
    write_file(&args.output.join("record.txt"), record.as_bytes())?;
    writeln!(out, "prepared {} samples into {}", pairs.len(), args.output.display()).ok();
    Ok(())
}
