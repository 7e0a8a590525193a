//! Dataset container format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "STRQ"
//! version      u32      currently 1
//! count        u32      number of samples
//! t            u32      frames per sample
//! c, h, w      u32 x 3  frame shape
//! n_labels     u32      distinct labels, ascending
//! labels       u32 * n_labels
//! per sample:
//!   label      u32
//!   source_id  u32
//!   kind       u8
//!   truth      t * 8 f64   (x, y, scale, angle, brightness, contrast, saturation, hue)
//!   frames     t * c * h * w f64
//! checksum     u32      CRC-32 of every preceding byte including the magic
//! ```
//!
//! Reads verify the checksum and every header/payload consistency rule, so a
//! written file round-trips bitwise or fails loudly.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::util::{push_f64_slice_le, push_u32_le, ByteReader, Crc32};

use super::{FrameTruth, ScheduleKind, SequenceSample};

pub const DATASET_MAGIC: [u8; 4] = *b"STRQ";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset(samples: &[SequenceSample], path: &Path) -> Result<()> {
    let (t, c, h, w) = match samples.first() {
        Some(s) => {
            let sh = s.frame_shape();
            (s.t(), sh[0], sh[1], sh[2])
        }
        None => (0, 0, 0, 0),
    };
    for (i, s) in samples.iter().enumerate() {
        if s.t() != t || s.frame_shape() != [c, h, w] {
            return Err(Error::ShapeMismatch(format!(
                "sample {i} has shape {:?} x{} frames; dataset is [{c},{h},{w}] x{t}",
                s.frame_shape(),
                s.t()
            )));
        }
        if s.truth.len() != s.t() {
            return Err(Error::ShapeMismatch(format!(
                "sample {i}: truth rows {} != frames {}",
                s.truth.len(),
                s.t()
            )));
        }
    }

    let labels: BTreeSet<u32> = samples.iter().map(|s| s.label).collect();
    let mut buf = Vec::new();
    buf.extend_from_slice(&DATASET_MAGIC);
    push_u32_le(&mut buf, DATASET_VERSION);
    push_u32_le(&mut buf, samples.len() as u32);
    push_u32_le(&mut buf, t as u32);
    push_u32_le(&mut buf, c as u32);
    push_u32_le(&mut buf, h as u32);
    push_u32_le(&mut buf, w as u32);
    push_u32_le(&mut buf, labels.len() as u32);
    for l in &labels {
        push_u32_le(&mut buf, *l);
    }
    for s in samples {
        push_u32_le(&mut buf, s.label);
        push_u32_le(&mut buf, s.source_id);
        buf.push(s.kind.code());
        for tr in &s.truth {
            push_f64_slice_le(&mut buf, &tr.to_array());
        }
        for frame in &s.frames {
            push_f64_slice_le(&mut buf, frame.data());
        }
    }
    let crc = {
        let mut c = Crc32::new();
        c.update(&buf);
        c.finish()
    };
    push_u32_le(&mut buf, crc);
    std::fs::write(path, &buf)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<SequenceSample>> {
    let bytes = std::fs::read(path).map_err(|_| Error::FileMissing(path.to_path_buf()))?;
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile {
            needed: 4,
            have: bytes.len(),
        });
    }
    let payload = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = {
        let mut c = Crc32::new();
        c.update(payload);
        c.finish()
    };
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let mut r = ByteReader::new(payload);
    let magic = r.take(4)?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: u32::from_le_bytes(DATASET_MAGIC),
            found: u32::from_le_bytes(magic.try_into().unwrap()),
        });
    }
    let version = r.u32_le()?;
    if version != DATASET_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let count = r.u32_le()? as usize;
    let t = r.u32_le()? as usize;
    let c = r.u32_le()? as usize;
    let h = r.u32_le()? as usize;
    let w = r.u32_le()? as usize;
    let n_labels = r.u32_le()? as usize;
    let mut labels = BTreeSet::new();
    for _ in 0..n_labels {
        labels.insert(r.u32_le()?);
    }
    if labels.len() != n_labels {
        return Err(Error::HeaderInconsistent(
            "label map contains duplicates".into(),
        ));
    }
    if count > 0 && (t == 0 || c == 0 || h == 0 || w == 0) {
        return Err(Error::HeaderInconsistent(format!(
            "non-empty dataset with empty frame shape [{c},{h},{w}] x{t}"
        )));
    }

    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let label = r.u32_le()?;
        if !labels.contains(&label) {
            return Err(Error::HeaderInconsistent(format!(
                "sample {i} label {label} missing from the header label map"
            )));
        }
        let source_id = r.u32_le()?;
        let kind = ScheduleKind::from_code(r.u8()?)?;
        let mut truth = Vec::with_capacity(t);
        for _ in 0..t {
            let mut row = [0.0; 8];
            for v in &mut row {
                *v = r.f64_le()?;
            }
            truth.push(FrameTruth::from_array(row));
        }
        let mut frames = Vec::with_capacity(t);
        for _ in 0..t {
            let mut data = Vec::new();
            r.f64_slice_le(c * h * w, &mut data)?;
            frames.push(Tensor::from_vec(&[c, h, w], data)?);
        }
        samples.push(SequenceSample {
            frames,
            truth,
            label,
            source_id,
            kind,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::HeaderInconsistent(format!(
            "{} trailing bytes after the last sample",
            r.remaining()
        )));
    }
    Ok(samples)
}
