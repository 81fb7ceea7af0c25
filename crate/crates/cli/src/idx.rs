//! IDX (MNIST) reader and writer. Gzipped files are detected by their magic
//! bytes and decompressed transparently.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ttp_core::data::LabeledDataset;

use crate::FormatError;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    let raw = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| FormatError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(buf: &[u8], offset: usize, what: &str) -> Result<u32, FormatError> {
    buf.get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| FormatError::at(offset, format!("truncated header reading {what}")))
}

/// Parsed image file: count, rows, cols and raw pixels.
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_images(buf: &[u8]) -> Result<IdxImages, FormatError> {
    let magic = be_u32(buf, 0, "magic")?;
    if magic != IMAGES_MAGIC {
        return Err(FormatError::at(
            0,
            format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(buf, 4, "image count")? as usize;
    let rows = be_u32(buf, 8, "row count")? as usize;
    let cols = be_u32(buf, 12, "column count")? as usize;
    let need = count * rows * cols;
    let body = &buf[16..];
    if body.len() < need {
        return Err(FormatError::at(
            16 + body.len(),
            format!("truncated pixel data: need {need} bytes after offset 16"),
        ));
    }
    if body.len() > need {
        return Err(FormatError::at(
            16 + need,
            "trailing bytes after pixel data".into(),
        ));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_labels(buf: &[u8]) -> Result<Vec<u8>, FormatError> {
    let magic = be_u32(buf, 0, "magic")?;
    if magic != LABELS_MAGIC {
        return Err(FormatError::at(
            0,
            format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(buf, 4, "label count")? as usize;
    let body = &buf[8..];
    if body.len() < count {
        return Err(FormatError::at(
            8 + body.len(),
            format!("truncated label data: need {count} bytes after offset 8"),
        ));
    }
    if body.len() > count {
        return Err(FormatError::at(
            8 + count,
            "trailing bytes after label data".into(),
        ));
    }
    Ok(body.to_vec())
}

/// Loads an image/label file pair. Pixels are divided by 255. The class
/// count is one more than the largest label, and at least 2.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset, FormatError> {
    let img = parse_images(&read_bytes(images)?).map_err(|e| e.in_file(images))?;
    let lab = parse_labels(&read_bytes(labels)?).map_err(|e| e.in_file(labels))?;
    if img.count != lab.len() {
        return Err(
            FormatError::at(4, format!("{} images but {} labels", img.count, lab.len()))
                .in_file(labels),
        );
    }
    let dim = img.rows * img.cols;
    let features = img.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = lab.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().copied().max().map_or(2, |m| (m + 1).max(2));
    let name = images
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    LabeledDataset::new(name, dim, classes, features, labels)
        .map_err(|e| FormatError::at(0, e.to_string()))
}

pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Writes `bytes`, gzipping when the path ends in `.gz`.
pub fn write_maybe_gz(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(fs::File::create(path)?, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
        Ok(())
    } else {
        fs::write(path, bytes)
    }
}
