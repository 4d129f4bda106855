//! The IDX container used by the MNIST family of datasets.
//!
//! Every file starts with a big-endian magic number whose third byte is the
//! element type (0x08 = unsigned byte) and whose fourth byte is the number of
//! dimensions, followed by one big-endian u32 per dimension.

use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};
use crate::Real;

/// Unsigned bytes, three dimensions (count, rows, cols).
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
/// Unsigned bytes, one dimension (count).
pub const LABEL_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let raw = self.take(4)?;
        Ok(u32::from_be_bytes(raw.try_into().unwrap()))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Idx(format!(
                "{} truncated: need {} bytes at offset {}, have {}",
                self.what,
                n,
                self.pos,
                self.bytes.len()
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

/// Parses an image file and a label file into a dataset. Pixels are scaled by
/// 1/255 and each image is flattened row-major.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let mut img = Reader {
        bytes: images,
        pos: 0,
        what: "image file",
    };
    let magic = img.u32()?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Idx(format!(
            "image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let (n, rows, cols) = (img.u32()? as usize, img.u32()? as usize, img.u32()? as usize);

    let mut lab = Reader {
        bytes: labels,
        pos: 0,
        what: "label file",
    };
    let magic = lab.u32()?;
    if magic != LABEL_MAGIC {
        return Err(Error::Idx(format!(
            "label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n_labels = lab.u32()? as usize;
    if n_labels != n {
        return Err(Error::Idx(format!("{n} images but {n_labels} labels")));
    }

    let width = rows * cols;
    let pixels = img.take(n * width)?;
    let label_bytes = lab.take(n)?;
    let features = Array2::from_shape_fn((n, width), |(i, j)| pixels[i * width + j] as Real / 255.0);
    Dataset::new(features, label_bytes.iter().map(|&b| b as usize).collect())
}

/// Reads and parses a pair of IDX files.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    parse_idx(&images, &labels)
}

/// Serializes `n` images of `rows`x`cols` bytes.
pub fn encode_idx_images(pixels: &[u8], n: usize, rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), n * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
