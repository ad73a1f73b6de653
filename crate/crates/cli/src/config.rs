//! `key = value` run configuration shared by every subcommand.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use lrt_core::grouping::GroupingConfig;
use lrt_core::prep::PreprocessConfig;
use lrt_core::synth::RainParams;
use lrt_core::SolverConfig;

use crate::error::CliError;

/// Every tunable of the pipeline plus the global seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grouping: GroupingConfig,
    pub solver: SolverConfig,
    pub rain: RainParams,
    pub prep: PreprocessConfig,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grouping: GroupingConfig::default(),
            solver: SolverConfig::default(),
            rain: RainParams::default(),
            prep: PreprocessConfig::default(),
            seed: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "patch_size",
    "stride",
    "search_radius",
    "temporal_window",
    "group_size",
    "tau",
    "lambda",
    "rho",
    "max_iter",
    "tol",
    "weighted",
    "weight_eps",
    "outer_iters",
    "delta",
    "rain_density",
    "rain_length",
    "rain_angle",
    "rain_intensity",
    "rain_jitter",
    "resize_w",
    "resize_h",
    "crop",
    "flip_prob",
    "brightness",
    "contrast_min",
    "contrast_max",
    "mean",
    "std",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses a config file body. Blank lines and `#` comments are skipped;
    /// unknown and repeated keys are errors.
    pub fn parse_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        cfg.overlay_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_text(&text).map_err(|e| e.context(&path.display().to_string()))
    }

    fn overlay_text(&mut self, text: &str) -> Result<(), CliError> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) && KEYS.contains(&key) {
                return Err(CliError::Usage(format!("line {}: `{key}` given twice", n + 1)));
            }
            self.set(key, value.trim())
                .map_err(|e| e.context(&format!("line {}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<(), CliError> {
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{pair}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let g = &mut self.grouping;
        let s = &mut self.solver;
        let r = &mut self.rain;
        let p = &mut self.prep;
        match key {
            "seed" => self.seed = Some(parse(key, value)?),
            "patch_size" => g.patch_size = parse(key, value)?,
            "stride" => g.stride = parse(key, value)?,
            "search_radius" => g.search_radius = parse(key, value)?,
            "temporal_window" => g.temporal_window = parse(key, value)?,
            "group_size" => g.group_size = parse(key, value)?,
            "tau" => s.tau = parse(key, value)?,
            "lambda" => s.lambda = parse(key, value)?,
            "rho" => s.rho = parse(key, value)?,
            "max_iter" => s.max_iter = parse(key, value)?,
            "tol" => s.tol = parse(key, value)?,
            "weighted" => s.use_weighted_nuclear = parse(key, value)?,
            "weight_eps" => s.weight_eps = parse(key, value)?,
            "outer_iters" => s.outer_iters = parse(key, value)?,
            "delta" => s.delta = parse(key, value)?,
            "rain_density" => r.density = parse(key, value)?,
            "rain_length" => r.length = parse(key, value)?,
            "rain_angle" => r.angle_deg = parse(key, value)?,
            "rain_intensity" => r.intensity = parse(key, value)?,
            "rain_jitter" => r.jitter = parse(key, value)?,
            "resize_w" => p.resize_w = parse(key, value)?,
            "resize_h" => p.resize_h = parse(key, value)?,
            "crop" => p.crop = parse(key, value)?,
            "flip_prob" => p.flip_prob = parse(key, value)?,
            "brightness" => p.brightness = parse(key, value)?,
            "contrast_min" => p.contrast.0 = parse(key, value)?,
            "contrast_max" => p.contrast.1 = parse(key, value)?,
            "mean" => p.mean = parse_list(key, value)?,
            "std" => p.std = parse_list(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Checks every section against its own invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        self.grouping.validate()?;
        self.solver.validate()?;
        self.rain.validate()?;
        self.prep.validate()?;
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage("a seed is required (--seed or `seed=` in the config)".into()))
    }

    /// Serializes every key; parsing the result yields an equal config.
    pub fn to_text(&self) -> String {
        let g = &self.grouping;
        let s = &self.solver;
        let r = &self.rain;
        let p = &self.prep;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        if let Some(seed) = self.seed {
            put("seed", seed.to_string());
        }
        put("patch_size", g.patch_size.to_string());
        put("stride", g.stride.to_string());
        put("search_radius", g.search_radius.to_string());
        put("temporal_window", g.temporal_window.to_string());
        put("group_size", g.group_size.to_string());
        put("tau", s.tau.to_string());
        put("lambda", s.lambda.to_string());
        put("rho", s.rho.to_string());
        put("max_iter", s.max_iter.to_string());
        put("tol", s.tol.to_string());
        put("weighted", s.use_weighted_nuclear.to_string());
        put("weight_eps", s.weight_eps.to_string());
        put("outer_iters", s.outer_iters.to_string());
        put("delta", s.delta.to_string());
        put("rain_density", r.density.to_string());
        put("rain_length", r.length.to_string());
        put("rain_angle", r.angle_deg.to_string());
        put("rain_intensity", r.intensity.to_string());
        put("rain_jitter", r.jitter.to_string());
        put("resize_w", p.resize_w.to_string());
        put("resize_h", p.resize_h.to_string());
        put("crop", p.crop.to_string());
        put("flip_prob", p.flip_prob.to_string());
        put("brightness", p.brightness.to_string());
        put("contrast_min", p.contrast.0.to_string());
        put("contrast_max", p.contrast.1.to_string());
        put("mean", list(&p.mean));
        put("std", list(&p.std));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse_text("tua=0.1\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("tua"), "{err}");
    }

    #[test]
    fn comments_blank_lines_and_spaces() {
        let cfg = RunConfig::parse_text("# run\n\n tau = 0.5 \nweighted=false\nmean=1,2,3\n").unwrap();
        assert_eq!(cfg.solver.tau, 0.5);
        assert!(!cfg.solver.use_weighted_nuclear);
        assert_eq!(cfg.prep.mean, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn repeated_key_rejected() {
        assert!(RunConfig::parse_text("tau=1\ntau=2\n").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::parse_text("tau=1\n").unwrap();
        cfg.apply_overrides(&["tau=2".into()]).unwrap();
        assert_eq!(cfg.solver.tau, 2.0);
        assert!(cfg.apply_overrides(&["tau".into()]).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let mut cfg = RunConfig::default();
        cfg.seed = Some(42);
        cfg.solver.tau = 0.1 + 0.2;
        cfg.prep.contrast = (0.75, 1.25);
        assert_eq!(RunConfig::parse_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let cfg = RunConfig::parse_text("temporal_window=4\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        assert!(RunConfig::parse_text("rho=abc\n").is_err());
    }
}
