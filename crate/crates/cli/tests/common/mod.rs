#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use lrt_core::pnm;
use lrt_core::{Frame, LabelMap};

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn lrt(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["lrt"];
    full.extend_from_slice(args);
    let code = lrt_cli::run(full, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// File name -> bytes for every file directly or transitively under `dir`.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Writes `count` RGB images and label maps plus a pair manifest.
pub fn write_pairs(dir: &Path, count: usize, width: usize, height: usize) -> std::path::PathBuf {
    let mut rng = lrt_core::rng::SplitMix64::new(99);
    let mut manifest = String::new();
    for i in 0..count {
        let img = Frame::from_fn(width, height, 3, |_, _, _| rng.below(256) as f64 / 255.0).unwrap();
        let lab = LabelMap::new(width, height, (0..width * height).map(|j| ((i + j) % 5) as u8).collect()).unwrap();
        pnm::write_frame(&dir.join(format!("img{i}.ppm")), &img).unwrap();
        pnm::write_labels(&dir.join(format!("lab{i}.pgm")), &lab).unwrap();
        manifest.push_str(&format!("img{i}.ppm lab{i}.pgm\n"));
    }
    let path = dir.join("pairs.txt");
    std::fs::write(&path, manifest).unwrap();
    path
}

/// Small matching and solver settings so pipeline tests stay fast.
pub const FAST: [&str; 8] = [
    "--set",
    "patch_size=4",
    "--set",
    "group_size=8",
    "--set",
    "search_radius=3",
    "--set",
    "stride=3",
];
