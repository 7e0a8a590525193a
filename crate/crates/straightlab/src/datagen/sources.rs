//! Procedural source images: ten digit-glyph classes rendered from a 5x7
//! bitmap font with per-instance geometric and intensity jitter. These stand
//! in for an external image dataset so the whole pipeline runs self-contained;
//! real IDX files can be swapped in through the loader in `idx`.

use rand::Rng as _;

use crate::rng::{stream, StreamKind};
use crate::tensor::Tensor;

use super::render::warp_bilinear;
use super::SourceImage;

/// Classic 5x7 digit bitmaps, one row per scanline, LSB on the right.
const DIGIT_FONT: [[u8; 7]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110], // 0
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110], // 1
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111], // 2
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110], // 3
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010], // 4
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110], // 5
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110], // 6
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000], // 7
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110], // 8
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100], // 9
];

fn glyph_bitmap(digit: usize) -> Tensor {
    let rows = &DIGIT_FONT[digit];
    let mut data = vec![0.0; 5 * 7];
    for (y, row) in rows.iter().enumerate() {
        for x in 0..5 {
            if row & (1 << (4 - x)) != 0 {
                data[y * 5 + x] = 1.0;
            }
        }
    }
    Tensor::from_vec(&[1, 7, 5], data).unwrap()
}

/// 3x3 box blur with edge clamping; softens the bitmap strokes so bilinear
/// resampling during sequence rendering stays smooth.
fn box_blur(img: &Tensor) -> Tensor {
    let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    let mut out = Tensor::zeros(img.shape());
    let src = img.data();
    let dst = out.data_mut();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        acc += src[(ch * h + yy) * w + xx];
                    }
                }
                dst[(ch * h + y) * w + x] = acc / 9.0;
            }
        }
    }
    out
}

/// Render one jittered glyph instance of class `label` as a `size x size`
/// source image. `id` selects the jitter stream, so the same
/// (seed, id, label, size, channels) always produces identical pixels.
pub fn synthetic_source(seed: u64, id: u32, label: u32, size: usize, channels: usize) -> SourceImage {
    let mut rng = stream(seed, StreamKind::SourceGlyph, id as u64);
    let bitmap = glyph_bitmap(label as usize % 10);

    let angle = rng.gen_range(-10.0..10.0);
    let scale_jit = rng.gen_range(0.85..1.1);
    let cx = (size as f64 - 1.0) / 2.0 + rng.gen_range(-1.5..1.5);
    let cy = (size as f64 - 1.0) / 2.0 + rng.gen_range(-1.5..1.5);
    let intensity = rng.gen_range(0.75..1.0);

    // a 7-row glyph spans roughly 80% of the source box
    let px_per_cell = size as f64 * 0.8 / 7.0 * scale_jit;
    let gray = warp_bilinear(&bitmap, size, size, (cx, cy), px_per_cell, angle)
        .expect("glyph warp parameters are always valid");
    let mut gray = box_blur(&gray);
    for v in gray.data_mut() {
        *v = (*v * intensity).clamp(0.0, 1.0);
    }

    let pixels = if channels == 3 {
        // random tint, kept bright enough that the glyph stays visible
        let tint = [
            rng.gen_range(0.4..1.0),
            rng.gen_range(0.4..1.0),
            rng.gen_range(0.4..1.0),
        ];
        let hw = size * size;
        let mut data = Vec::with_capacity(3 * hw);
        for t in tint {
            data.extend(gray.data().iter().map(|&v| (v * t).clamp(0.0, 1.0)));
        }
        Tensor::from_vec(&[3, size, size], data).unwrap()
    } else {
        gray
    };

    SourceImage { pixels, id, label }
}

/// A batch of synthetic sources with labels cycling through the ten classes.
pub fn synthetic_sources(seed: u64, count: usize, size: usize, channels: usize) -> Vec<SourceImage> {
    (0..count)
        .map(|i| synthetic_source(seed, i as u32, (i % 10) as u32, size, channels))
        .collect()
}
