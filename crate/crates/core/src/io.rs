//! Image and report persistence.
//!
//! Images: binary PGM (`P5`, maxval 255 or 65535) and 8/16-bit grayscale PNG.
//! Reports: CSV and JSON run records with a fixed field order.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::Algorithm;
use crate::error::{Error, Result};
use crate::image::{normalize, BinaryMask, BitDepth, GrayImage, LabelMap};
use crate::metrics::EvalReport;
use crate::model::ModelConfig;

pub const CSV_HEADER: &str = "algorithm,input,dice,compactness,separation,wall_time_s,iterations";

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("pgm") => Ok(ImageFormat::Pgm),
            Some("png") => Ok(ImageFormat::Png),
            _ => Err(Error::UnsupportedFormat(format!(
                "cannot infer image format from {}",
                path.display()
            ))),
        }
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotFound(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    decode_image(&bytes)
}

/// Decodes PGM or PNG bytes, dispatching on the magic number.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(Error::UnsupportedFormat(format!(
            "netpbm variant P{} (only binary P5 is supported)",
            bytes[1] as char
        )))
    } else {
        Err(Error::UnsupportedFormat("not a PGM or PNG file".into()))
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed(format!("PGM header: bad {what}")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::Malformed("PGM header: missing separator".into()));
    }
    let body = &bytes[cur.pos + 1..];
    if width == 0 || height == 0 {
        return Err(Error::Malformed(format!("PGM dimensions {width}x{height}")));
    }
    let depth = match maxval {
        255 => BitDepth::Eight,
        65535 => BitDepth::Sixteen,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PGM maxval {other} (expected 255 or 65535)"
            )))
        }
    };
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Malformed("PGM dimensions overflow".into()))?;
    let raw: Vec<u16> = match depth {
        BitDepth::Eight => {
            if body.len() < n {
                return Err(Error::Malformed(format!(
                    "PGM body has {} bytes, expected {n}",
                    body.len()
                )));
            }
            body[..n].iter().map(|&b| u16::from(b)).collect()
        }
        BitDepth::Sixteen => {
            if body.len() < 2 * n {
                return Err(Error::Malformed(format!(
                    "PGM body has {} bytes, expected {}",
                    body.len(),
                    2 * n
                )));
            }
            body[..2 * n]
                .chunks_exact(2)
                .map(|p| u16::from_be_bytes([p[0], p[1]]))
                .collect()
        }
    };
    normalize(&raw, width, height, depth)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Malformed(format!("PNG: {e}")))?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if color != png::ColorType::Grayscale {
        return Err(Error::UnsupportedFormat(format!(
            "PNG color type {color:?} (only grayscale is supported)"
        )));
    }
    let depth = match depth {
        png::BitDepth::Eight => BitDepth::Eight,
        png::BitDepth::Sixteen => BitDepth::Sixteen,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG bit depth {other:?} (expected 8 or 16)"
            )))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Malformed("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Malformed(format!("PNG: {e}")))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let raw: Vec<u16> = match depth {
        BitDepth::Eight => (0..h)
            .flat_map(|r| buf[r * frame.line_size..r * frame.line_size + w].iter())
            .map(|&b| u16::from(b))
            .collect(),
        BitDepth::Sixteen => (0..h)
            .flat_map(|r| buf[r * frame.line_size..r * frame.line_size + 2 * w].chunks_exact(2))
            .map(|p| u16::from_be_bytes([p[0], p[1]]))
            .collect(),
    };
    normalize(&raw, w, h, depth)
}

fn encode_gray8(
    width: usize,
    height: usize,
    samples: &[u8],
    format: ImageFormat,
) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Pgm => {
            let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
            out.extend_from_slice(samples);
            Ok(out)
        }
        ImageFormat::Png => {
            let mut out = Vec::new();
            {
                let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
                encoder.set_color(png::ColorType::Grayscale);
                encoder.set_depth(png::BitDepth::Eight);
                let mut writer = encoder
                    .write_header()
                    .map_err(|e| Error::Internal(format!("PNG encode: {e}")))?;
                writer
                    .write_image_data(samples)
                    .map_err(|e| Error::Internal(format!("PNG encode: {e}")))?;
            }
            Ok(out)
        }
    }
}

fn write_gray8(path: &Path, width: usize, height: usize, samples: &[u8]) -> Result<()> {
    let bytes = encode_gray8(width, height, samples, ImageFormat::from_path(path)?)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Quantizes to 8 bits (`round(255 v)`) and writes PGM or PNG by extension.
pub fn write_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let samples: Vec<u8> = img
        .pixels()
        .iter()
        .map(|&v| (v * 255.0).round() as u8)
        .collect();
    write_gray8(path.as_ref(), img.width(), img.height(), &samples)
}

/// Writes a mask as 0 / 255.
pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let samples: Vec<u8> = mask
        .values()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    write_gray8(path.as_ref(), mask.width(), mask.height(), &samples)
}

/// Reads an image and thresholds it at one half.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let img = read_image(path)?;
    BinaryMask::new(
        img.width(),
        img.height(),
        img.pixels().iter().map(|&v| v >= 0.5).collect(),
    )
}

/// Gray level of cluster `j` out of `k`: `round(255 j / (k - 1))`, or 255 when `k = 1`.
pub fn label_gray_level(j: usize, k: usize) -> u8 {
    if k <= 1 {
        255
    } else {
        (255.0 * j as f64 / (k - 1) as f64).round() as u8
    }
}

pub fn write_labelmap(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let k = labels.clusters();
    let palette: Vec<u8> = (0..k).map(|j| label_gray_level(j, k)).collect();
    let samples: Vec<u8> = labels.labels().iter().map(|&l| palette[l]).collect();
    write_gray8(path.as_ref(), labels.width(), labels.height(), &samples)
}

/// One evaluated segmentation, as persisted in run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub input: String,
    pub dice: f64,
    pub compactness: f64,
    pub separation: Option<f64>,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub matched_cluster: usize,
    pub config: ModelConfig,
    /// Unix seconds; omitted unless the caller stamps records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl RunRecord {
    pub fn new(input: impl Into<String>, config: ModelConfig, report: &EvalReport) -> Self {
        Self {
            algorithm: Algorithm::of(&config),
            input: input.into(),
            dice: report.dice,
            compactness: report.compactness,
            separation: report.separation,
            wall_time_s: report.wall_time_s,
            iterations: report.iterations,
            matched_cluster: report.matched_cluster,
            config,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV rendering; floats use the shortest representation that parses back exactly.
pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let separation = r.separation.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.algorithm,
            csv_field(&r.input),
            r.dice,
            r.compactness,
            separation,
            r.wall_time_s,
            r.iterations
        );
    }
    out
}

pub fn records_to_json(records: &[RunRecord]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(records)?;
    s.push('\n');
    Ok(s)
}

pub fn write_records(
    records: &[RunRecord],
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    if records.is_empty() {
        return Err(Error::param("no records to write"));
    }
    let text = match format {
        ReportFormat::Csv => records_to_csv(records),
        ReportFormat::Json => records_to_json(records)?,
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn read_records_json(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}
