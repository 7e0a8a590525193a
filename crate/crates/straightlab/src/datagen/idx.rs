//! Reader for the big-endian IDX files the MNIST distribution uses.

use std::path::Path;

use crate::error::{Error, Result};
use crate::util::ByteReader;

use super::SourceImage;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Parse an IDX image file (magic 0x00000803, dims `[n,h,w]`). Pixel bytes
/// map to intensities by division by 255.
pub fn load_idx_images(path: &Path) -> Result<Vec<(usize, usize, Vec<f64>)>> {
    let bytes = std::fs::read(path).map_err(|_| Error::FileMissing(path.to_path_buf()))?;
    let mut r = ByteReader::new(&bytes);
    let magic = r.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = r.u32_be()? as usize;
    let h = r.u32_be()? as usize;
    let w = r.u32_be()? as usize;
    let mut images = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = r.take(h * w)?;
        images.push((h, w, raw.iter().map(|&b| b as f64 / 255.0).collect()));
    }
    Ok(images)
}

/// Parse an IDX label file (magic 0x00000801, dims `[n]`).
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|_| Error::FileMissing(path.to_path_buf()))?;
    let mut r = ByteReader::new(&bytes);
    let magic = r.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n = r.u32_be()? as usize;
    Ok(r.take(n)?.to_vec())
}

/// Load a paired image/label IDX set into `SourceImage`s.
pub fn load_idx_sources(images_path: &Path, labels_path: &Path) -> Result<Vec<SourceImage>> {
    let images = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    images
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, ((h, w, data), label))| {
            SourceImage::from_gray(h, w, data, i as u32, label as u32)
        })
        .collect()
}

/// Serialize images into IDX bytes. Test and tooling helper; intensities
/// are quantized back to bytes by rounding.
pub fn write_idx_images(images: &[(usize, usize, Vec<f64>)]) -> Vec<u8> {
    let (h, w) = images.first().map(|&(h, w, _)| (h, w)).unwrap_or((0, 0));
    let mut out = Vec::new();
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(h as u32).to_be_bytes());
    out.extend_from_slice(&(w as u32).to_be_bytes());
    for (_, _, data) in images {
        out.extend(data.iter().map(|&v| (v * 255.0).round() as u8));
    }
    out
}

/// Serialize labels into IDX bytes.
pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
