//! IDX container for MNIST-family images (`0x00000803`) and labels
//! (`0x00000801`). All header integers are big-endian u32.

use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::Compression;

use super::{LabeledSet, SampleShape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
const MAX_LABEL: u8 = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` raw pixel bytes.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    /// Pixels scaled to `[0, 1]`, one image per row.
    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        let scale = T::lit(255.0);
        let data = self.pixels.iter().map(|&p| T::from_u8(p).unwrap() / scale).collect();
        Matrix::from_vec(self.count(), self.rows * self.cols, data).expect("sized")
    }

    /// Quantises `[0, 1]` pixels to bytes (clamped, round-to-nearest).
    pub fn from_matrix<T: Scalar>(m: &Matrix<T>, rows: usize, cols: usize) -> Result<Self> {
        if m.cols() != rows * cols {
            return Err(Error::shape("IdxImages::from_matrix", rows * cols, m.cols()));
        }
        let pixels = m
            .as_slice()
            .iter()
            .map(|v| (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Ok(Self { rows, cols, pixels })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxData {
    Images(IdxImages),
    Labels(Vec<u8>),
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Parse {
            offset: bytes.len(),
            reason: format!("truncated header, needed 4 bytes at {offset}"),
        })
}

fn check_payload(bytes: &[u8], header: usize, expected: usize) -> Result<()> {
    let actual = bytes.len() - header;
    if actual < expected {
        return Err(Error::Parse {
            offset: bytes.len(),
            reason: format!("truncated payload: declared {expected} bytes, found {actual}"),
        });
    }
    if actual > expected {
        return Err(Error::Parse {
            offset: header + expected,
            reason: format!("payload longer than declared: {expected} bytes declared, {actual} present"),
        });
    }
    Ok(())
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    match read_u32(bytes, 0)? {
        IMAGE_MAGIC => {
            let count = read_u32(bytes, 4)? as usize;
            let rows = read_u32(bytes, 8)? as usize;
            let cols = read_u32(bytes, 12)? as usize;
            let len = count
                .checked_mul(rows)
                .and_then(|v| v.checked_mul(cols))
                .ok_or_else(|| Error::Parse {
                    offset: 4,
                    reason: "declared dimensions overflow".into(),
                })?;
            check_payload(bytes, 16, len)?;
            Ok(IdxData::Images(IdxImages {
                rows,
                cols,
                pixels: bytes[16..].to_vec(),
            }))
        }
        LABEL_MAGIC => {
            let count = read_u32(bytes, 4)? as usize;
            check_payload(bytes, 8, count)?;
            let labels = bytes[8..].to_vec();
            if let Some(i) = labels.iter().position(|&l| l > MAX_LABEL) {
                return Err(Error::Parse {
                    offset: 8 + i,
                    reason: format!("label {} exceeds {MAX_LABEL}", labels[i]),
                });
            }
            Ok(IdxData::Labels(labels))
        }
        other => Err(Error::Parse {
            offset: 0,
            reason: format!("bad magic {other:#010x}"),
        }),
    }
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count() as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Reads a file, transparently inflating a `.gz` suffix.
pub fn read_idx_file(path: impl AsRef<Path>) -> Result<IdxData> {
    let path = path.as_ref();
    let raw = std::fs::read(path)?;
    if is_gz(path) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        parse_idx(&out)
    } else {
        parse_idx(&raw)
    }
}

pub fn write_idx_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path)?;
    if is_gz(path) {
        // Fixed header fields keep gzip output byte-stable across runs.
        let mut enc = flate2::GzBuilder::new().mtime(0).write(file, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        let mut file = file;
        file.write_all(bytes)?;
    }
    Ok(())
}

/// Loads an image file and a label file into a dataset of flattened images.
pub fn load_labeled<T: Scalar>(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledSet<T>> {
    let IdxData::Images(img) = read_idx_file(images)? else {
        return Err(Error::Parse {
            offset: 0,
            reason: "expected an image file".into(),
        });
    };
    let IdxData::Labels(lab) = read_idx_file(labels)? else {
        return Err(Error::Parse {
            offset: 0,
            reason: "expected a label file".into(),
        });
    };
    if img.count() != lab.len() {
        return Err(Error::shape("load_labeled", img.count(), lab.len()));
    }
    LabeledSet::new(
        img.to_matrix(),
        lab.iter().map(|&l| l as usize).collect(),
        10,
        SampleShape::Image {
            rows: img.rows,
            cols: img.cols,
        },
    )
}

/// Writes `<stem>-images.idx[.gz]` / `<stem>-labels.idx[.gz]` style pairs.
pub fn save_labeled<T: Scalar>(set: &LabeledSet<T>, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<()> {
    let SampleShape::Image { rows, cols } = set.shape else {
        return Err(Error::Config("IDX export needs an image dataset".into()));
    };
    let img = IdxImages::from_matrix(&set.samples, rows, cols)?;
    write_idx_file(images, &encode_images(&img))?;
    let lab: Vec<u8> = set.labels.iter().map(|&l| l as u8).collect();
    write_idx_file(labels, &encode_labels(&lab))
}
