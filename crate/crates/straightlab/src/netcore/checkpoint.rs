//! Checkpoint format: magic "STRW", version, serialized spec, raw
//! little-endian f64 parameter payload, CRC-32 footer.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::util::{push_f64_slice_le, push_u32_le, push_u64_le, ByteReader, Crc32};

use super::{LayerParams, LayerSpec, NetworkSpec, ParamSet};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"STRW";
pub const CHECKPOINT_VERSION: u32 = 1;

fn push_layer(buf: &mut Vec<u8>, layer: &LayerSpec) {
    match layer {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            buf.push(0);
            for v in [in_ch, out_ch, kernel, stride, pad] {
                push_u32_le(buf, *v as u32);
            }
        }
        LayerSpec::Relu => buf.push(1),
        LayerSpec::AvgPool { kernel, stride } => {
            buf.push(2);
            push_u32_le(buf, *kernel as u32);
            push_u32_le(buf, *stride as u32);
        }
        LayerSpec::Upsample { factor } => {
            buf.push(3);
            push_u32_le(buf, *factor as u32);
        }
        LayerSpec::Flatten => buf.push(4),
        LayerSpec::Reshape { shape } => {
            buf.push(5);
            for v in shape {
                push_u32_le(buf, *v as u32);
            }
        }
        LayerSpec::Dense { input, output } => {
            buf.push(6);
            push_u32_le(buf, *input as u32);
            push_u32_le(buf, *output as u32);
        }
    }
}

fn read_layer(r: &mut ByteReader) -> Result<LayerSpec> {
    Ok(match r.u8()? {
        0 => LayerSpec::Conv2d {
            in_ch: r.u32_le()? as usize,
            out_ch: r.u32_le()? as usize,
            kernel: r.u32_le()? as usize,
            stride: r.u32_le()? as usize,
            pad: r.u32_le()? as usize,
        },
        1 => LayerSpec::Relu,
        2 => LayerSpec::AvgPool {
            kernel: r.u32_le()? as usize,
            stride: r.u32_le()? as usize,
        },
        3 => LayerSpec::Upsample {
            factor: r.u32_le()? as usize,
        },
        4 => LayerSpec::Flatten,
        5 => LayerSpec::Reshape {
            shape: [
                r.u32_le()? as usize,
                r.u32_le()? as usize,
                r.u32_le()? as usize,
            ],
        },
        6 => LayerSpec::Dense {
            input: r.u32_le()? as usize,
            output: r.u32_le()? as usize,
        },
        tag => {
            return Err(Error::HeaderInconsistent(format!(
                "unknown layer tag {tag}"
            )))
        }
    })
}

pub fn save_checkpoint(spec: &NetworkSpec, params: &ParamSet, path: &Path) -> Result<()> {
    if !params.matches(spec) {
        return Err(Error::SpecMismatch(
            "parameter shapes do not match the network spec".into(),
        ));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    push_u32_le(&mut buf, CHECKPOINT_VERSION);
    push_u32_le(&mut buf, spec.input_shape.len() as u32);
    for d in &spec.input_shape {
        push_u32_le(&mut buf, *d as u32);
    }
    push_u32_le(&mut buf, spec.layers.len() as u32);
    for layer in &spec.layers {
        push_layer(&mut buf, layer);
    }
    push_u32_le(&mut buf, spec.taps.len() as u32);
    for (name, idx) in &spec.taps {
        push_u32_le(&mut buf, name.len() as u32);
        buf.extend_from_slice(name.as_bytes());
        push_u32_le(&mut buf, *idx as u32);
    }
    for p in params.layers.iter().flatten() {
        push_u64_le(&mut buf, p.weight.len() as u64);
        push_f64_slice_le(&mut buf, p.weight.data());
        push_u64_le(&mut buf, p.bias.len() as u64);
        push_f64_slice_le(&mut buf, p.bias.data());
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

pub fn load_checkpoint(path: &Path) -> Result<(NetworkSpec, ParamSet)> {
    let bytes = std::fs::read(path).map_err(|_| Error::FileMissing(path.to_path_buf()))?;
    if bytes.len() < 8 {
        return Err(Error::TruncatedFile {
            needed: 8,
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
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: u32::from_le_bytes(CHECKPOINT_MAGIC),
            found: u32::from_le_bytes(magic.try_into().unwrap()),
        });
    }
    let version = r.u32_le()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let ndim = r.u32_le()? as usize;
    let mut input_shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        input_shape.push(r.u32_le()? as usize);
    }
    let n_layers = r.u32_le()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layers.push(read_layer(&mut r)?);
    }
    let n_taps = r.u32_le()? as usize;
    let mut taps = Vec::with_capacity(n_taps);
    for _ in 0..n_taps {
        let len = r.u32_le()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::HeaderInconsistent("tap name is not utf-8".into()))?;
        taps.push((name, r.u32_le()? as usize));
    }
    let spec = NetworkSpec::new(input_shape, layers, taps)?;

    let mut params = ParamSet::zeros_like(&spec)?;
    for (layer, slot) in spec.layers.iter().zip(params.layers.iter_mut()) {
        if !layer.has_params() {
            continue;
        }
        let template = slot.as_ref().expect("weight-bearing layer");
        let w_len = r.u64_le()? as usize;
        if w_len != template.weight.len() {
            return Err(Error::HeaderInconsistent(format!(
                "weight payload length {w_len} does not match spec ({})",
                template.weight.len()
            )));
        }
        let mut w = Vec::new();
        r.f64_slice_le(w_len, &mut w)?;
        let b_len = r.u64_le()? as usize;
        if b_len != template.bias.len() {
            return Err(Error::HeaderInconsistent(format!(
                "bias payload length {b_len} does not match spec ({})",
                template.bias.len()
            )));
        }
        let mut b = Vec::new();
        r.f64_slice_le(b_len, &mut b)?;
        *slot = Some(LayerParams {
            weight: Tensor::from_vec(template.weight.shape(), w)?,
            bias: Tensor::from_vec(template.bias.shape(), b)?,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::HeaderInconsistent(format!(
            "{} trailing bytes after the parameter payload",
            r.remaining()
        )));
    }
    Ok((spec, params))
}

/// Load a checkpoint and verify it carries exactly the expected architecture.
pub fn load_checkpoint_expecting(path: &Path, expected: &NetworkSpec) -> Result<ParamSet> {
    let (spec, params) = load_checkpoint(path)?;
    if &spec != expected {
        return Err(Error::SpecMismatch(format!(
            "checkpoint architecture differs from the expected spec ({} vs {} layers, input {:?} vs {:?})",
            spec.layers.len(),
            expected.layers.len(),
            spec.input_shape,
            expected.input_shape
        )));
    }
    Ok(params)
}
