//! IDX image/label files (the MNIST container format).
//!
//! Layout: big-endian `u32` magic (`0x00000803` for rank-3 unsigned-byte
//! images, `0x00000801` for rank-1 labels), one big-endian `u32` per
//! dimension, then the unsigned bytes.

use std::path::Path;

use super::{ColumnKind, ColumnMeta, DataError, Dataset};
use crate::numerics::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Format {
            offset,
            message: format!("truncated while reading {what}"),
        })
}

/// Returns `(dims, payload)` after validating magic and exact length.
fn parse_header(bytes: &[u8], magic: u32, rank: usize) -> Result<(Vec<usize>, &[u8]), DataError> {
    let found = read_u32(bytes, 0, "magic number")?;
    if found != magic {
        return Err(DataError::Format {
            offset: 0,
            message: format!("bad magic {found:#010x}, expected {magic:#010x}"),
        });
    }
    let dims = (0..rank)
        .map(|i| read_u32(bytes, 4 + 4 * i, "dimension size").map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let start = 4 + 4 * rank;
    let expected: usize = dims.iter().product();
    let payload = &bytes[start..];
    if payload.len() != expected {
        return Err(DataError::Format {
            offset: start,
            message: format!(
                "payload holds {} bytes, dimensions {dims:?} require {expected}",
                payload.len()
            ),
        });
    }
    Ok((dims, payload))
}

/// Parses in-memory IDX image and label files.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset, DataError> {
    let (idims, pixels) = parse_header(images, IMAGES_MAGIC, 3)?;
    let (ldims, label_bytes) = parse_header(labels, LABELS_MAGIC, 1)?;
    let (n, h, w) = (idims[0], idims[1], idims[2]);
    if n == 0 {
        return Err(DataError::Empty("IDX image file holds zero images".into()));
    }
    if h == 0 || w == 0 {
        return Err(DataError::Format {
            offset: 8,
            message: format!("image dimensions {h}×{w} must be positive"),
        });
    }
    if ldims[0] != n {
        return Err(DataError::Invalid(format!("{n} images but {} labels", ldims[0])));
    }

    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let x = Tensor::new(&[n, h * w], data).map_err(|e| DataError::Invalid(e.to_string()))?;
    let y_util: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let n_classes = y_util.iter().max().map_or(0, |m| m + 1);
    let columns = (0..h * w)
        .map(|p| ColumnMeta {
            name: format!("px_{}_{}", p / w, p % w),
            kind: ColumnKind::Numeric { min: 0.0, max: 255.0 },
        })
        .collect();
    Ok(Dataset {
        x,
        y_util,
        s: None,
        columns,
        utility_name: "label".into(),
        sensitive_name: "origin".into(),
        utility_levels: (0..n_classes).map(|c| c.to_string()).collect(),
        sensitive_levels: Vec::new(),
        image_shape: Some((h, w)),
    })
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images = std::fs::read(images_path).map_err(|e| DataError::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| DataError::io(labels_path, e))?;
    parse_idx(&images, &labels)
}

/// Contrast applied to second-domain images: `p ↦ GAIN·p + OFFSET`.
pub const SECOND_DOMAIN_GAIN: f64 = 0.6;
pub const SECOND_DOMAIN_OFFSET: f64 = 0.3;

/// Fills the sensitive label of an image dataset with a synthetic origin
/// tag: odd rows become domain 1 and are re-rendered with a washed-out
/// contrast (grey background, compressed range); even rows stay domain 0.
pub fn tag_second_domain(mut dataset: Dataset) -> Result<Dataset, DataError> {
    if dataset.image_shape.is_none() {
        return Err(DataError::Invalid("second-domain tagging needs image rows".into()));
    }
    let d = dataset.n_features();
    for (i, row) in dataset.x.data_mut().chunks_mut(d).enumerate() {
        if i % 2 == 1 {
            row.iter_mut()
                .for_each(|p| *p = SECOND_DOMAIN_GAIN * *p + SECOND_DOMAIN_OFFSET);
        }
    }
    dataset.s = Some((0..dataset.len()).map(|i| i % 2).collect());
    dataset.sensitive_name = "origin".into();
    dataset.sensitive_levels = vec!["primary".into(), "synthetic".into()];
    Ok(dataset)
}

/// Serializes `n` images of `h×w` bytes and their labels as IDX files.
pub fn encode_idx(n: usize, h: usize, w: usize, pixels: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = IMAGES_MAGIC.to_be_bytes().to_vec();
    for d in [n, h, w] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = LABELS_MAGIC.to_be_bytes().to_vec();
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}
