//! IDX file reader (big-endian headers, as distributed with MNIST).

use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images scaled to `[0, 1]`, one row per image, with their labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Array2<f64>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` examples.
    pub fn truncate(mut self, n: usize) -> Self {
        let n = n.min(self.len());
        self.images = self.images.slice(ndarray::s![..n, ..]).to_owned();
        self.labels.truncate(n);
        self
    }
}

fn be_u32(buf: &[u8], at: usize) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("IDX header truncated".into()))
}

pub fn parse_images(buf: &[u8]) -> Result<(Array2<f64>, usize, usize)> {
    let magic = be_u32(buf, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("IDX image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let n = be_u32(buf, 4)? as usize;
    let rows = be_u32(buf, 8)? as usize;
    let cols = be_u32(buf, 12)? as usize;
    let body = &buf[16..];
    if body.len() != n * rows * cols {
        return Err(Error::Format(format!(
            "IDX image body has {} bytes, header promises {}",
            body.len(),
            n * rows * cols
        )));
    }
    let data = body.iter().map(|&p| p as f64 / 255.0).collect();
    let images = Array2::from_shape_vec((n, rows * cols), data).map_err(|e| Error::Format(e.to_string()))?;
    Ok((images, rows, cols))
}

pub fn parse_labels(buf: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(buf, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("IDX label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(buf, 4)? as usize;
    let body = &buf[8..];
    if body.len() != n {
        return Err(Error::Format(format!("IDX label body has {} bytes, header promises {n}", body.len())));
    }
    Ok(body.to_vec())
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut buf)?;
    Ok(buf)
}

pub fn load(images: &Path, labels: &Path) -> Result<Dataset> {
    let (images, rows, cols) = parse_images(&read_all(images)?)?;
    let labels = parse_labels(&read_all(labels)?)?;
    if images.nrows() != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            images.nrows(),
            labels.len()
        )));
    }
    Ok(Dataset { images, labels, rows, cols })
}

/// Loads `train-*` or `t10k-*` files from a directory in the standard layout.
pub fn load_split(dir: &Path, train: bool) -> Result<Dataset> {
    let prefix = if train { "train" } else { "t10k" };
    load(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}
