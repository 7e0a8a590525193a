//! Frame rendering: inverse-map bilinear resampling of a source image onto
//! the output canvas at a per-frame (center, scale, angle), followed by the
//! photometric pipeline.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::photometric::{apply_photometric, grayscale, solarize, PhotometricFactors};
use super::{hflip, FrameTruth, SequenceSample, SourceImage, TransformSchedule};

/// Place `src` on an `out_h x out_w` canvas with its center at `center`
/// (output-pixel coordinates), scaled by `scale` (output pixels per source
/// pixel) and rotated by `angle_deg` about the center.
///
/// Every output pixel is inverse-mapped into source coordinates and sampled
/// bilinearly; taps inside the half-pixel boundary ring clamp to the edge,
/// anything farther out reads as zero background.
pub fn warp_bilinear(
    src: &Tensor,
    out_h: usize,
    out_w: usize,
    center: (f64, f64),
    scale: f64,
    angle_deg: f64,
) -> Result<Tensor> {
    if scale <= 0.0 {
        return Err(Error::InvalidGeometry(format!("scale {scale} must be > 0")));
    }
    let (c, sh, sw) = (src.shape()[0], src.shape()[1], src.shape()[2]);
    let src_cy = (sh as f64 - 1.0) / 2.0;
    let src_cx = (sw as f64 - 1.0) / 2.0;
    let theta = angle_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let inv = 1.0 / scale;

    let mut out = Tensor::zeros(&[c, out_h, out_w]);
    let src_data = src.data();
    let out_data = out.data_mut();
    let shw = sh * sw;

    for oy in 0..out_h {
        let dy = oy as f64 - center.1;
        for ox in 0..out_w {
            let dx = ox as f64 - center.0;
            // rotate by -theta, then unscale
            let sx = (cos_t * dx + sin_t * dy) * inv + src_cx;
            let sy = (-sin_t * dx + cos_t * dy) * inv + src_cy;
            if sx < -0.5 || sx > sw as f64 - 0.5 || sy < -0.5 || sy > sh as f64 - 0.5 {
                continue; // zero background
            }
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let clamp_x = |x: f64| (x.max(0.0) as usize).min(sw - 1);
            let clamp_y = |y: f64| (y.max(0.0) as usize).min(sh - 1);
            let (x0i, x1i) = (clamp_x(x0), clamp_x(x0 + 1.0));
            let (y0i, y1i) = (clamp_y(y0), clamp_y(y0 + 1.0));
            for ch in 0..c {
                let plane = &src_data[ch * shw..(ch + 1) * shw];
                let v = (1.0 - fx) * (1.0 - fy) * plane[y0i * sw + x0i]
                    + fx * (1.0 - fy) * plane[y0i * sw + x1i]
                    + (1.0 - fx) * fy * plane[y1i * sw + x0i]
                    + fx * fy * plane[y1i * sw + x1i];
                out_data[(ch * out_h + oy) * out_w + ox] = v;
            }
        }
    }
    Ok(out)
}

/// Render a full sequence from a source image and a schedule: geometric warp
/// per frame, then photometric factors, then per-frame grayscale/solarize,
/// then the sequence-level horizontal flip. The truth track records exactly
/// the parameters each frame was rendered with.
pub fn render_sequence(
    src: &SourceImage,
    sched: &TransformSchedule,
    out_size: usize,
) -> Result<SequenceSample> {
    let t = sched.len();
    if t < 3 {
        return Err(Error::InvalidGeometry(format!(
            "schedule has {t} frames; need at least 3"
        )));
    }
    if sched.window > sched.canvas as f64 {
        return Err(Error::InvalidGeometry(format!(
            "window {} exceeds canvas {}",
            sched.window, sched.canvas
        )));
    }
    // output pixels per canvas pixel; truth positions are stored in output units
    let unit = out_size as f64 / sched.canvas as f64;
    let src_extent = src.height().max(src.width()) as f64;
    let mut frames = Vec::with_capacity(t);
    let mut truth = Vec::with_capacity(t);

    for f in 0..t {
        let center = (sched.centers[f].0 * unit, sched.centers[f].1 * unit);
        let scale = sched.scales[f];
        let angle = sched.angles[f];
        // nominal on-canvas size `window` at scale 1, in output units
        let px_per_src = scale * sched.window * unit / src_extent;
        let mut frame = warp_bilinear(&src.pixels, out_size, out_size, center, px_per_src, angle)?;

        let factors = PhotometricFactors {
            brightness: sched.brightness[f],
            contrast: sched.contrast[f],
            saturation: sched.saturation[f],
            hue: sched.hue[f],
        };
        frame = apply_photometric(&frame, &factors);
        if sched.grayscale[f] {
            frame = grayscale(&frame);
        }
        if sched.solarize[f] {
            frame = solarize(&frame, sched.solarize_threshold);
        }
        frames.push(frame);
        truth.push(FrameTruth {
            x: center.0,
            y: center.1,
            scale,
            angle,
            brightness: sched.brightness[f],
            contrast: sched.contrast[f],
            saturation: sched.saturation[f],
            hue: sched.hue[f],
        });
    }

    let sample = SequenceSample {
        frames,
        truth,
        label: src.label,
        source_id: src.id,
        kind: sched.kind,
    };
    Ok(if sched.flip { hflip(&sample) } else { sample })
}
