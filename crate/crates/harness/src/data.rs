//! Dataset ingestion: MNIST IDX files and directories of binary PGM images.

use std::fs;
use std::path::{Path, PathBuf};

use prilo::Shape2D;

use crate::error::{HarnessError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug)]
pub struct Dataset {
    pub shape: Shape2D,
    /// Row-major pixels scaled to `[0, 1]`.
    pub images: Vec<Vec<f64>>,
    pub labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn format_error(path: &Path, offset: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Format { path: path.to_path_buf(), offset, message: message.into() }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| format_error(path, offset, format!("header needs {} bytes, file has {}", offset + 4, bytes.len())))
}

/// Reads an IDX3 image file (and optionally an IDX1 label file).
pub fn load_mnist_idx(images: impl AsRef<Path>, labels: Option<&Path>) -> Result<Dataset> {
    let path = images.as_ref();
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(format_error(path, 0, format!("magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}")));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let shape = Shape2D::new(rows, cols).map_err(|e| format_error(path, 8, e.to_string()))?;
    let expected = 16 + count * shape.len();
    if bytes.len() != expected {
        return Err(format_error(
            path,
            bytes.len().min(expected),
            format!("expected {expected} bytes for {count} images of {shape}, found {}", bytes.len()),
        ));
    }
    let images = bytes[16..]
        .chunks_exact(shape.len())
        .map(|px| px.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect();
    let labels = labels.map(|p| load_idx_labels(p, count)).transpose()?;
    Ok(Dataset { shape, images, labels })
}

fn load_idx_labels(path: &Path, count: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(format_error(path, 0, format!("magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}")));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    if n != count {
        return Err(format_error(path, 4, format!("{n} labels for {count} images")));
    }
    if bytes.len() != 8 + n {
        return Err(format_error(
            path,
            bytes.len().min(8 + n),
            format!("expected {} bytes, found {}", 8 + n, bytes.len()),
        ));
    }
    Ok(bytes[8..].to_vec())
}

/// Writes images (pixels in `[0, 1]`, quantized to bytes) as an IDX3 file.
pub fn write_idx_images(path: impl AsRef<Path>, shape: Shape2D, images: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + images.len() * shape.len());
    for v in [IMAGES_MAGIC, images.len() as u32, shape.height() as u32, shape.width() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend(img.iter().map(|&v| quantize(v)));
    }
    fs::write(path, out).map_err(|e| HarnessError::io(path, e))
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a binary (P5) PGM with maxval 255.
pub fn write_pgm(path: impl AsRef<Path>, shape: Shape2D, image: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", shape.width(), shape.height()).into_bytes();
    out.extend(image.iter().map(|&v| quantize(v)));
    fs::write(path, out).map_err(|e| HarnessError::io(path, e))
}

/// Reads a binary PGM with maxval <= 255, scaled to `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(Shape2D, Vec<f64>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let begin = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if begin == pos {
            return Err(format_error(path, pos, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[begin..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(format_error(path, 0, format!("unsupported PGM kind {:?}, expected P5", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format_error(path, pos, format!("bad header field {s:?}")));
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(format_error(path, pos, format!("maxval {maxval} not in 1..=255")));
    }
    let shape = Shape2D::new(height, width).map_err(|e| format_error(path, 0, e.to_string()))?;
    pos += 1; // single whitespace after maxval
    let expected = pos + shape.len();
    if bytes.len() < expected {
        return Err(format_error(path, bytes.len(), format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let pixels = bytes[pos..expected].iter().map(|&b| f64::from(b) / maxval as f64).collect();
    Ok((shape, pixels))
}

/// Loads every `*.pgm` in `dir`, sorted by file name; all must match `shape`.
pub fn load_image_dir(dir: impl AsRef<Path>, shape: Shape2D) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    let mut images = Vec::with_capacity(files.len());
    for file in &files {
        let (found, pixels) = read_pgm(file)?;
        if found != shape {
            return Err(HarnessError::Data(format!("{} is {found}, expected {shape}", file.display())));
        }
        images.push(pixels);
    }
    Ok(Dataset { shape, images, labels: None })
}
