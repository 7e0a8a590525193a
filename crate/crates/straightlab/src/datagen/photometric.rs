//! Photometric frame operators: brightness, contrast, saturation, hue,
//! grayscale, and solarization. All operate on `[C,H,W]` tensors with
//! unit-interval intensities and clamp their results back to [0,1].
//!
//! Luminance uses the Rec.601 weights 0.299/0.587/0.114; hue rotation goes
//! through HSV with wraparound.

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct PhotometricFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue shift in turns (1.0 = full cycle).
    pub hue: f64,
}

impl PhotometricFactors {
    pub fn identity() -> Self {
        PhotometricFactors {
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
            hue: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.brightness == 1.0 && self.contrast == 1.0 && self.saturation == 1.0 && self.hue == 0.0
    }
}

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn pixel_luma(frame: &[f64], hw: usize, i: usize, c: usize) -> f64 {
    if c == 3 {
        LUMA[0] * frame[i] + LUMA[1] * frame[hw + i] + LUMA[2] * frame[2 * hw + i]
    } else {
        frame[i]
    }
}

/// Mean luminance of a frame (plain channel mean for grayscale input).
fn mean_luma(frame: &[f64], hw: usize, c: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..hw {
        acc += pixel_luma(frame, hw, i, c);
    }
    acc / hw as f64
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Apply brightness (per-pixel multiply), contrast (blend toward the frame's
/// mean luminance), saturation (blend toward per-pixel luminance), and a hue
/// rotation, in that order. Grayscale frames skip saturation and hue, which
/// are identities on a single channel.
pub fn apply_photometric(frame: &Tensor, factors: &PhotometricFactors) -> Tensor {
    if factors.is_identity() {
        return frame.clone();
    }
    let c = frame.shape()[0];
    let hw = frame.shape()[1] * frame.shape()[2];
    let mut data = frame.data().to_vec();

    if factors.brightness != 1.0 {
        for v in &mut data {
            *v = clamp01(*v * factors.brightness);
        }
    }

    if factors.contrast != 1.0 {
        let m = mean_luma(&data, hw, c);
        for v in &mut data {
            *v = clamp01(m + (*v - m) * factors.contrast);
        }
    }

    if c == 3 {
        if factors.saturation != 1.0 {
            for i in 0..hw {
                let l = pixel_luma(&data, hw, i, c);
                for ch in 0..3 {
                    let v = &mut data[ch * hw + i];
                    *v = clamp01(l + (*v - l) * factors.saturation);
                }
            }
        }
        if factors.hue != 0.0 {
            for i in 0..hw {
                let (h, s, v) = rgb_to_hsv(data[i], data[hw + i], data[2 * hw + i]);
                let (r, g, b) = hsv_to_rgb(h + factors.hue, s, v);
                data[i] = clamp01(r);
                data[hw + i] = clamp01(g);
                data[2 * hw + i] = clamp01(b);
            }
        }
    }

    Tensor::from_vec(frame.shape(), data).expect("shape preserved")
}

/// Invert every pixel at or above `threshold`.
pub fn solarize(frame: &Tensor, threshold: f64) -> Tensor {
    let mut out = frame.clone();
    for v in out.data_mut() {
        if *v >= threshold {
            *v = 1.0 - *v;
        }
    }
    out
}

/// Replace all channels with the per-pixel luminance. Identity on
/// single-channel frames.
pub fn grayscale(frame: &Tensor) -> Tensor {
    let c = frame.shape()[0];
    if c != 3 {
        return frame.clone();
    }
    let hw = frame.shape()[1] * frame.shape()[2];
    let mut out = frame.clone();
    let data = out.data_mut();
    for i in 0..hw {
        let l = LUMA[0] * data[i] + LUMA[1] * data[hw + i] + LUMA[2] * data[2 * hw + i];
        data[i] = l;
        data[hw + i] = l;
        data[2 * hw + i] = l;
    }
    out
}
