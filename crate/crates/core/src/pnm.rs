//! Binary PNM (P5 graymap, P6 pixmap) with maxval 255, plus sequence
//! manifests.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::{Frame, LabelMap, ManifestEntry, VideoSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmKind {
    Gray,
    Color,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Header {
    kind: PnmKind,
    width: usize,
    height: usize,
    payload_offset: usize,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Pnm {
            offset: self.pos,
            message: message.into(),
        }
    }

    // whitespace and `#` comments running to end of line
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(self.pos) {
                None => self.err(format!("truncated header: missing {what}")),
                Some(_) => self.err(format!("expected {what}")),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Pnm {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut r = HeaderReader { bytes, pos: 0 };
    let kind = match bytes.get(..2) {
        Some(b"P5") => PnmKind::Gray,
        Some(b"P6") => PnmKind::Color,
        Some(m) => {
            return Err(r.err(format!(
                "unsupported magic {:?} (only P5 and P6)",
                String::from_utf8_lossy(m)
            )))
        }
        None => return Err(r.err("truncated header: missing magic")),
    };
    r.pos = 2;
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval_offset = {
        r.skip_separators();
        r.pos
    };
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Pnm {
            offset: 2,
            message: format!("zero image dimension {width}x{height}"),
        });
    }
    if maxval != 255 {
        return Err(Error::Pnm {
            offset: maxval_offset,
            message: format!("unsupported maxval {maxval} (only 255)"),
        });
    }
    match bytes.get(r.pos) {
        Some(b) if b.is_ascii_whitespace() => r.pos += 1,
        Some(_) => return Err(r.err("expected a single whitespace byte after maxval")),
        None => return Err(r.err("truncated header: missing payload")),
    }
    Ok(Header {
        kind,
        width,
        height,
        payload_offset: r.pos,
    })
}

fn payload<'a>(bytes: &'a [u8], header: &Header) -> Result<&'a [u8]> {
    let channels = match header.kind {
        PnmKind::Gray => 1,
        PnmKind::Color => 3,
    };
    let need = header.width * header.height * channels;
    let have = bytes.len() - header.payload_offset;
    if have < need {
        return Err(Error::Pnm {
            offset: bytes.len(),
            message: format!("truncated payload: expected {need} bytes, found {have}"),
        });
    }
    Ok(&bytes[header.payload_offset..header.payload_offset + need])
}

/// Decodes a P5 or P6 image into a frame scaled by `1/255`.
pub fn read_pnm(bytes: &[u8]) -> Result<Frame> {
    let header = parse_header(bytes)?;
    let raw = payload(bytes, &header)?;
    let plane = header.width * header.height;
    let data = match header.kind {
        PnmKind::Gray => raw.iter().map(|&b| b as f64 / 255.0).collect(),
        PnmKind::Color => {
            let mut data = vec![0.0; plane * 3];
            for (p, px) in raw.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    data[c * plane + p] = px[c] as f64 / 255.0;
                }
            }
            data
        }
    };
    let channels = if header.kind == PnmKind::Gray { 1 } else { 3 };
    Frame::new(header.width, header.height, channels, data)
}

/// Decodes a P5 image as raw class ids.
pub fn read_pnm_labels(bytes: &[u8]) -> Result<LabelMap> {
    let header = parse_header(bytes)?;
    if header.kind != PnmKind::Gray {
        return Err(Error::Pnm {
            offset: 0,
            message: "label maps must be P5 graymaps".into(),
        });
    }
    let raw = payload(bytes, &header)?;
    LabelMap::new(header.width, header.height, raw.to_vec())
}

/// `round(v * 255)` with halves away from zero, clamped to `[0, 255]`.
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn header_bytes(magic: &str, width: usize, height: usize) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n255\n").into_bytes()
}

/// Encodes a frame as P5 (one channel) or P6 (three channels).
pub fn write_pnm(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels() == 1 { "P5" } else { "P6" };
    let mut out = header_bytes(magic, frame.width(), frame.height());
    let plane = frame.plane_len();
    out.reserve(plane * frame.channels());
    for p in 0..plane {
        for c in 0..frame.channels() {
            out.push(quantize(frame.data()[c * plane + p]));
        }
    }
    out
}

pub fn write_pnm_labels(labels: &LabelMap) -> Vec<u8> {
    let mut out = header_bytes("P5", labels.width(), labels.height());
    out.extend_from_slice(labels.data());
    out
}

/// Conventional extension for a frame's PNM kind.
pub fn extension(frame: &Frame) -> &'static str {
    if frame.channels() == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn decode_error(path: &Path, e: Error) -> Error {
    match e {
        e @ Error::Io { .. } => e,
        e => Error::Decode {
            path: path.to_path_buf(),
            source: Box::new(e),
        },
    }
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    read_pnm(&read_bytes(path)?).map_err(|e| decode_error(path, e))
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    read_pnm_labels(&read_bytes(path)?).map_err(|e| decode_error(path, e))
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    fs::write(path, write_pnm(frame)).map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    fs::write(path, write_pnm_labels(labels)).map_err(|e| Error::io(path, e))
}

/// Non-blank, non-comment manifest lines as `(1-based line number, text)`.
pub fn manifest_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Resolves a manifest entry relative to the manifest's own directory.
pub fn resolve(manifest: &Path, entry: &str) -> PathBuf {
    let p = Path::new(entry);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new("")).join(p)
    }
}

/// Loads frames listed one per line, in listed order. Relative paths are
/// resolved against the manifest's directory.
pub fn load_sequence(manifest: &Path) -> Result<VideoSequence> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let lines = manifest_lines(&text);
    if lines.is_empty() {
        return Err(Error::EmptyInput(format!("manifest {} lists no frames", manifest.display())));
    }
    let mut frames: Vec<Frame> = Vec::with_capacity(lines.len());
    let mut entries = Vec::with_capacity(lines.len());
    for (index, (line, entry)) in lines.into_iter().enumerate() {
        let path = resolve(manifest, entry);
        let frame = read_frame(&path)?;
        if let Some(first) = frames.first() {
            if !frame.same_shape(first) {
                return Err(Error::DimensionMismatch {
                    line,
                    expected: first.dims_string(),
                    found: frame.dims_string(),
                });
            }
        }
        frames.push(frame);
        entries.push(ManifestEntry { index, path });
    }
    VideoSequence::with_manifest(frames, entries)
}
