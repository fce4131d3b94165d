//! Raster files (PFM for floats, binary PGM for masks) and JSON manifests.
//!
//! PFM payloads are little-endian `f32` (negative scale field) with rows
//! stored bottom-to-top, as the format prescribes. In-memory rasters are
//! `f64`; writing narrows to `f32`, so a read/write round trip is bit-exact
//! for any raster that was itself read from PFM or holds `f32` values.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::labelgen::LabelParams;
use crate::raster::{BinaryMask, FlowField, Raster};
use crate::scene::{Scene, SynthConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum RasterData {
    Float(Raster<f64>),
    Mask(BinaryMask),
    Flow(FlowField),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(bytes).map_err(io_err(path))
}

/// Splits whitespace-separated header tokens, skipping `#` comments, and
/// returns them with the offset just past the single whitespace byte that
/// follows the last token.
fn header_tokens<'a>(bytes: &'a [u8], count: usize, format: &'static str) -> Result<(Vec<&'a str>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        if i >= bytes.len() {
            return Err(Error::MalformedHeader {
                format,
                reason: format!("expected {count} header fields, found {}", tokens.len()),
            });
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let token = std::str::from_utf8(&bytes[start..i]).map_err(|_| Error::MalformedHeader {
            format,
            reason: "non-ASCII header".into(),
        })?;
        tokens.push(token);
    }
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(Error::MalformedHeader {
            format,
            reason: "missing separator before payload".into(),
        });
    }
    Ok((tokens, i + 1))
}

fn parse_dim(token: &str, format: &'static str) -> Result<usize> {
    token.parse::<usize>().map_err(|_| Error::MalformedHeader {
        format,
        reason: format!("bad dimension {token:?}"),
    })
}

fn check_finite(values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(Error::invalid("raster", format!("non-finite value {v} cannot be written")));
        }
    }
    Ok(())
}

fn encode_pfm_channels(height: usize, width: usize, channels: usize, value: impl Fn(usize, usize, usize) -> f64) -> Vec<u8> {
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(height * width * channels * 4);
    for row in (0..height).rev() {
        for col in 0..width {
            for ch in 0..channels {
                out.extend_from_slice(&(value(row, col, ch) as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn encode_pfm(raster: &Raster<f64>) -> Result<Vec<u8>> {
    check_finite(raster.iter().copied())?;
    Ok(encode_pfm_channels(raster.height(), raster.width(), 1, |r, c, _| *raster.get(r, c)))
}

/// Flow is stored as a 3-channel PFM holding `(du, dv, 0)`.
pub fn encode_flow_pfm(flow: &FlowField) -> Result<Vec<u8>> {
    check_finite(flow.iter().flat_map(|v| v.iter().copied()))?;
    Ok(encode_pfm_channels(flow.height(), flow.width(), 3, |r, c, ch| {
        if ch < 2 {
            flow.get(r, c)[ch]
        } else {
            0.0
        }
    }))
}

/// Decodes a PFM; one channel yields `Float`, three yield `Flow` (the third channel is ignored).
pub fn decode_pfm(bytes: &[u8]) -> Result<RasterData> {
    const FMT: &str = "PFM";
    let (tokens, offset) = header_tokens(bytes, 4, FMT)?;
    let channels = match tokens[0] {
        "Pf" => 1,
        "PF" => 3,
        other => {
            return Err(Error::MalformedHeader {
                format: FMT,
                reason: format!("bad magic {other:?}"),
            })
        }
    };
    let width = parse_dim(tokens[1], FMT)?;
    let height = parse_dim(tokens[2], FMT)?;
    let scale: f32 = tokens[3].parse().map_err(|_| Error::MalformedHeader {
        format: FMT,
        reason: format!("bad scale {:?}", tokens[3]),
    })?;
    if !(scale < 0.0) {
        return Err(Error::UnsupportedEndianness(scale));
    }
    let expected = height * width * channels * 4;
    let payload = &bytes[offset..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            format: FMT,
            expected,
            actual: payload.len(),
        });
    }
    let value = |row: usize, col: usize, ch: usize| -> f64 {
        let file_row = height - 1 - row;
        let i = ((file_row * width + col) * channels + ch) * 4;
        f32::from_le_bytes([payload[i], payload[i + 1], payload[i + 2], payload[i + 3]]) as f64
    };
    Ok(if channels == 1 {
        RasterData::Float(Raster::from_fn(height, width, |r, c| value(r, c, 0)))
    } else {
        RasterData::Flow(Raster::from_fn(height, width, |r, c| [value(r, c, 0), value(r, c, 1)]))
    })
}

/// Binary PGM (P5, maxval 255) with `false ↔ 0`, `true ↔ 255`.
pub fn encode_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<BinaryMask> {
    const FMT: &str = "PGM";
    let (tokens, offset) = header_tokens(bytes, 4, FMT)?;
    if tokens[0] != "P5" {
        return Err(Error::MalformedHeader {
            format: FMT,
            reason: format!("bad magic {:?}", tokens[0]),
        });
    }
    let width = parse_dim(tokens[1], FMT)?;
    let height = parse_dim(tokens[2], FMT)?;
    if tokens[3] != "255" {
        return Err(Error::MalformedHeader {
            format: FMT,
            reason: format!("maxval must be 255, got {}", tokens[3]),
        });
    }
    let payload = &bytes[offset..];
    let expected = height * width;
    if payload.len() < expected {
        return Err(Error::Truncated {
            format: FMT,
            expected,
            actual: payload.len(),
        });
    }
    let data = payload[..expected]
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            255 => Ok(true),
            other => Err(Error::NonBinaryPgm(other)),
        })
        .collect::<Result<Vec<bool>>>()?;
    Raster::from_vec(height, width, data)
}

pub fn decode_raster(bytes: &[u8]) -> Result<RasterData> {
    match bytes.get(..2) {
        Some(b"P5") => decode_pgm(bytes).map(RasterData::Mask),
        Some(b"Pf") | Some(b"PF") => decode_pfm(bytes),
        _ => Err(Error::MalformedHeader {
            format: "raster",
            reason: "unknown magic (expected Pf, PF or P5)".into(),
        }),
    }
}

pub fn encode_raster(raster: &RasterData) -> Result<Vec<u8>> {
    match raster {
        RasterData::Float(r) => encode_pfm(r),
        RasterData::Mask(m) => Ok(encode_pgm(m)),
        RasterData::Flow(f) => encode_flow_pfm(f),
    }
}

pub fn read_raster(path: &Path) -> Result<RasterData> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_raster(&bytes)
}

pub fn write_raster(path: &Path, raster: &RasterData) -> Result<()> {
    write_bytes(path, &encode_raster(raster)?)
}

pub fn write_pfm(path: &Path, raster: &Raster<f64>) -> Result<()> {
    write_bytes(path, &encode_pfm(raster)?)
}

pub fn read_pfm(path: &Path) -> Result<Raster<f64>> {
    match read_raster(path)? {
        RasterData::Float(r) => Ok(r),
        _ => Err(Error::invalid("raster", format!("{} is not a single-channel PFM", path.display()))),
    }
}

pub fn write_pgm(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_bytes(path, &encode_pgm(mask))
}

pub fn read_pgm(path: &Path) -> Result<BinaryMask> {
    match read_raster(path)? {
        RasterData::Mask(m) => Ok(m),
        _ => Err(Error::invalid("raster", format!("{} is not a PGM mask", path.display()))),
    }
}

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    write_bytes(path, &encode_flow_pfm(flow)?)
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    match read_raster(path)? {
        RasterData::Flow(f) => Ok(f),
        _ => Err(Error::invalid("raster", format!("{} is not a 3-channel flow PFM", path.display()))),
    }
}

/// Files of one frame, relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameFiles {
    pub depth: PathBuf,
    pub seg: PathBuf,
    pub gt_s_star: PathBuf,
    pub gt_d_star: PathBuf,
    /// Flow to the next frame, absent on the last frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_valid: Option<PathBuf>,
}

impl FrameFiles {
    fn all(&self) -> impl Iterator<Item = &PathBuf> {
        [&self.depth, &self.seg, &self.gt_s_star, &self.gt_d_star]
            .into_iter()
            .chain(self.flow.iter())
            .chain(self.flow_valid.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: String,
    pub frame_index: i64,
    pub intrinsics: Intrinsics,
    /// Camera-to-world, 4x4 row-major.
    pub pose: Pose,
    pub files: FrameFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub scene: Scene,
    pub synth: SynthConfig,
    pub params: LabelParams,
    pub frames: Vec<FrameEntry>,
}

impl DatasetManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: PathBuf::from(Self::FILE_NAME),
            source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        write_bytes(path, text.as_bytes())
    }

    /// Parses and validates a manifest; referenced files are resolved against
    /// the manifest's directory and must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let manifest: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest.validate(base)?;
        Ok(manifest)
    }

    pub fn validate(&self, base: &Path) -> Result<()> {
        self.scene.validate()?;
        let mut ids = std::collections::HashSet::new();
        for f in &self.frames {
            if !ids.insert(f.id.as_str()) {
                return Err(Error::invalid("manifest", format!("duplicate frame id {:?}", f.id)));
            }
            f.intrinsics.validate()?;
            for file in f.files.all() {
                let full = base.join(file);
                if !full.is_file() {
                    return Err(Error::invalid("manifest", format!("missing file {}", full.display())));
                }
            }
        }
        Ok(())
    }

    pub fn frame(&self, id: &str) -> Option<&FrameEntry> {
        self.frames.iter().find(|f| f.id == id)
    }
}
