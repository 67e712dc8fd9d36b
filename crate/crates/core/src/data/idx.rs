use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
}

fn header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let fail = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let found = be_u32(bytes, 0).ok_or_else(|| fail("file shorter than its header".into()))?;
    if found != magic {
        return Err(fail(format!("magic {found:#010x}, expected {magic:#010x}")));
    }
    (0..dims)
        .map(|i| {
            be_u32(bytes, 4 + 4 * i)
                .map(|v| v as usize)
                .ok_or_else(|| fail("file shorter than its header".into()))
        })
        .collect()
}

/// Loads an IDX image/label pair (the MNIST container) as `[n, 1, rows, cols]`
/// features scaled to `[0, 1]`. `limit` keeps only the first samples.
pub fn load_idx(images_path: &Path, labels_path: &Path, limit: Option<usize>) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let dims = header(images_path, &images, IMAGES_MAGIC, 3)?;
    let (n_img, rows, cols) = (dims[0], dims[1], dims[2]);
    let n_lab = header(labels_path, &labels, LABELS_MAGIC, 1)?[0];
    if n_img != n_lab {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            message: format!("{n_lab} labels for {n_img} images"),
        });
    }
    let pixels = rows * cols;
    if images.len() != 16 + n_img * pixels {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            message: format!("expected {} pixel bytes, found {}", n_img * pixels, images.len() - 16),
        });
    }
    if labels.len() != 8 + n_lab {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            message: format!("expected {n_lab} label bytes, found {}", labels.len() - 8),
        });
    }
    let n = limit.map_or(n_img, |l| l.min(n_img));
    let data = images[16..16 + n * pixels]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    let labels: Vec<usize> = labels[8..8 + n].iter().map(|&b| usize::from(b)).collect();
    let n_classes = labels.iter().max().map_or(2, |&m| (m + 1).max(10));
    Dataset::new(Tensor::new(vec![n, 1, rows, cols], data)?, labels, n_classes)
}
