//! Image files and run reports.
//!
//! Images: binary PGM (`P5`) and PPM (`P6`) with maxval 255, plus a lossless
//! raw format:
//!
//! ```text
//! "REDF" | height u32 LE | width u32 LE | channels u32 LE | range f64 LE | pixels f64 LE...
//! ```
//!
//! Reports are pretty-printed JSON; each report has a sibling CSV trace
//! (`query_index,best_l2_sq`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{perturbation_norm, ImperceptibilityMetrics};
use crate::oracle::Label;
use crate::session::{AttackResult, TracePoint};
use crate::tensor::{ImageTensor, Shape};

const RAW_MAGIC: &[u8; 4] = b"REDF";
const RAW_HEADER_LEN: usize = 4 + 3 * 4 + 8;

/// Reads a PGM/PPM or raw image. 8-bit files are scaled so that byte 255
/// maps to `range_hint` (default 1.0); raw files keep their stored range
/// unless a hint asks for a different one.
pub fn read_image(path: impl AsRef<Path>, range_hint: Option<f64>) -> Result<ImageTensor> {
    let bytes = fs::read(path)?;
    decode_image(&bytes, range_hint)
}

pub fn decode_image(bytes: &[u8], range_hint: Option<f64>) -> Result<ImageTensor> {
    if bytes.starts_with(RAW_MAGIC) {
        let img = decode_raw(bytes)?;
        return Ok(match range_hint {
            Some(l) if l != img.range() => {
                let scale = l / img.range();
                ImageTensor::new(img.shape(), l, img.pixels().iter().map(|p| p * scale).collect())?
            }
            _ => img,
        });
    }
    match bytes.get(..2) {
        Some(b"P5") => decode_pnm(bytes, 1, range_hint.unwrap_or(1.0)),
        Some(b"P6") => decode_pnm(bytes, 3, range_hint.unwrap_or(1.0)),
        Some(b"P1" | b"P2" | b"P3" | b"P4" | b"P7") => Err(Error::UnsupportedFormat(format!(
            "netpbm variant {} (only binary P5/P6 are supported)",
            String::from_utf8_lossy(&bytes[..2])
        ))),
        _ => Err(Error::UnsupportedFormat("unrecognised image signature".into())),
    }
}

/// Splits the PNM header into its three numeric fields and returns the
/// offset of the raster.
fn pnm_header(bytes: &[u8]) -> Result<([usize; 3], usize)> {
    let mut fields = [0usize; 3];
    let mut pos = 2;
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Parse("truncated PNM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = text
            .parse()
            .map_err(|_| Error::Parse(format!("bad PNM header field at byte {start}")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => Ok((fields, pos + 1)),
        _ => Err(Error::Parse("PNM header not terminated by whitespace".into())),
    }
}

fn decode_pnm(bytes: &[u8], channels: usize, range: f64) -> Result<ImageTensor> {
    let ([width, height, maxval], offset) = pnm_header(bytes)?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "maxval {maxval} (only 255 is supported)"
        )));
    }
    let shape = Shape::new(height, width, channels);
    let raster = bytes
        .get(offset..offset + shape.len())
        .ok_or_else(|| Error::Parse(format!("expected {} raster bytes", shape.len())))?;
    let pixels = raster.iter().map(|&b| b as f64 * range / 255.0).collect();
    ImageTensor::new(shape, range, pixels)
}

fn decode_raw(bytes: &[u8]) -> Result<ImageTensor> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(Error::Parse("truncated raw header".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let shape = Shape::new(u32_at(4), u32_at(8), u32_at(12));
    let range = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() != shape.len() * 8 {
        return Err(Error::Parse(format!(
            "raw body has {} bytes, expected {}",
            body.len(),
            shape.len() * 8
        )));
    }
    let pixels = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ImageTensor::new(shape, range, pixels)
}

pub fn encode_raw(img: &ImageTensor) -> Vec<u8> {
    let shape = img.shape();
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + img.len() * 8);
    out.extend_from_slice(RAW_MAGIC);
    for d in shape.as_array() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&img.range().to_le_bytes());
    for p in img.pixels() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Nearest byte for `p` on a `[0, range] -> [0, 255]` scale, halves rounding up.
fn quantize(p: f64, range: f64) -> u8 {
    (p * 255.0 / range + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode_pnm(img: &ImageTensor) -> Result<Vec<u8>> {
    let shape = img.shape();
    let magic = match shape.channels {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::UnsupportedFormat(format!(
                "{c}-channel image (PGM/PPM need 1 or 3)"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", shape.width, shape.height).into_bytes();
    out.extend(img.pixels().iter().map(|&p| quantize(p, img.range())));
    Ok(out)
}

/// Writes an 8-bit PGM or PPM, chosen by channel count.
pub fn write_image(path: impl AsRef<Path>, img: &ImageTensor) -> Result<()> {
    fs::write(path, encode_pnm(img)?)?;
    Ok(())
}

pub fn write_raw(path: impl AsRef<Path>, img: &ImageTensor) -> Result<()> {
    fs::write(path, encode_raw(img))?;
    Ok(())
}

/// Raw format for `.redf` paths, PGM/PPM otherwise.
pub fn save_image(path: impl AsRef<Path>, img: &ImageTensor) -> Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("redf")) {
        write_raw(path, img)
    } else {
        write_image(path, img)
    }
}

/// Path of the trace CSV that accompanies `report`.
pub fn trace_path(report: impl AsRef<Path>) -> PathBuf {
    report.as_ref().with_extension("trace.csv")
}

pub fn write_trace(path: impl AsRef<Path>, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["query_index", "best_l2_sq"])?;
    for p in trace {
        w.serialize((p.query_index, p.best_l2_sq))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Report<'a, C: Serialize> {
    config: &'a C,
    queries_used: usize,
    succeeded: bool,
    best_label: Option<Label>,
    metrics: ImperceptibilityMetrics,
    trace_file: String,
}

/// Writes the JSON report and its trace CSV.
///
/// The stored perturbation norm is checked against one recomputed from
/// `result.best_adversarial` and `source`.
pub fn write_report<C: Serialize>(
    path: impl AsRef<Path>,
    result: &AttackResult,
    source: &ImageTensor,
    config: &C,
) -> Result<()> {
    let path = path.as_ref();
    let recomputed = perturbation_norm(&result.best_adversarial, source)?;
    let stored = result.metrics.perturbation_norm;
    if (recomputed - stored).abs() > 1e-12 * stored.abs().max(1.0) {
        return Err(Error::InconsistentMetrics(format!(
            "stored perturbation norm {stored} but best image gives {recomputed}"
        )));
    }
    let trace = trace_path(path);
    let report = Report {
        config,
        queries_used: result.queries_used,
        succeeded: result.succeeded,
        best_label: result.best_label,
        metrics: result.metrics,
        trace_file: trace
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &report)?;
    file.write_all(b"\n")?;
    write_trace(trace, &result.trace)
}
