//! Synthetic video generation: load or synthesize source images, build
//! per-sequence transformation schedules, and render temporally-coherent
//! frame sequences with ground-truth attribute tracks.

mod file;
mod generate;
mod idx;
mod photometric;
mod render;
mod schedule;
mod sources;

pub use file::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use generate::{generate_dataset, DatagenConfig, SourcePool, TrackStyle};
pub use idx::{
    load_idx_images, load_idx_labels, load_idx_sources, write_idx_images, write_idx_labels,
};
pub use photometric::{apply_photometric, grayscale, solarize, PhotometricFactors};
pub use render::render_sequence;
pub use schedule::{
    make_photometric_schedule, make_rescale_schedule, make_rotation_schedule,
    make_translation_schedule, reflect_step, PhotometricCfg, RescaleCfg, RotationCfg,
    TranslationCfg,
};
pub use sources::{synthetic_source, synthetic_sources};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;

/// A static source image with unit-interval intensities, stored `[C,H,W]`
/// with `C` of 1 or 3.
#[derive(Clone, Debug)]
pub struct SourceImage {
    pub pixels: Tensor,
    pub id: u32,
    pub label: u32,
}

impl SourceImage {
    /// Build from a 2-D grayscale buffer (row-major `H*W`).
    pub fn from_gray(h: usize, w: usize, data: Vec<f64>, id: u32, label: u32) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::InvalidGeometry("empty source image".into()));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidRange(
                "source intensities must lie in [0,1]".into(),
            ));
        }
        Ok(SourceImage {
            pixels: Tensor::from_vec(&[1, h, w], data)?,
            id,
            label,
        })
    }

    pub fn channels(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }
}

/// The geometric transformation a sequence follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum ScheduleKind {
    Translation,
    Rescale,
    Rotation,
}

impl ScheduleKind {
    pub fn code(self) -> u8 {
        match self {
            ScheduleKind::Translation => 0,
            ScheduleKind::Rescale => 1,
            ScheduleKind::Rotation => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(ScheduleKind::Translation),
            1 => Ok(ScheduleKind::Rescale),
            2 => Ok(ScheduleKind::Rotation),
            other => Err(Error::HeaderInconsistent(format!(
                "unknown schedule kind code {other}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Translation => "translation",
            ScheduleKind::Rescale => "rescale",
            ScheduleKind::Rotation => "rotation",
        }
    }
}

/// Per-sequence transformation plan. Geometric tracks change at a constant
/// per-frame rate except at bounce/reversal events; photometric tracks are
/// linear ramps.
///
/// `centers` holds the object's center in output-pixel coordinates,
/// `scales` the dimensionless size factor, `angles` degrees. `window` is
/// the object's nominal on-canvas size at scale 1.
#[derive(Clone, Debug)]
pub struct TransformSchedule {
    pub kind: ScheduleKind,
    pub canvas: usize,
    pub window: f64,
    pub centers: Vec<(f64, f64)>,
    pub scales: Vec<f64>,
    pub angles: Vec<f64>,
    pub brightness: Vec<f64>,
    pub contrast: Vec<f64>,
    pub saturation: Vec<f64>,
    pub hue: Vec<f64>,
    pub flip: bool,
    pub grayscale: Vec<bool>,
    pub solarize: Vec<bool>,
    pub solarize_threshold: f64,
}

impl TransformSchedule {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Identity photometric tracks plus cleared flip/grayscale/solarize flags.
    pub fn with_identity_photometric(mut self) -> Self {
        let t = self.len();
        self.brightness = vec![1.0; t];
        self.contrast = vec![1.0; t];
        self.saturation = vec![1.0; t];
        self.hue = vec![0.0; t];
        self.flip = false;
        self.grayscale = vec![false; t];
        self.solarize = vec![false; t];
        self
    }
}

/// Ground-truth attributes of one rendered frame.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrameTruth {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub angle: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl FrameTruth {
    pub fn to_array(self) -> [f64; 8] {
        [
            self.x,
            self.y,
            self.scale,
            self.angle,
            self.brightness,
            self.contrast,
            self.saturation,
            self.hue,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        FrameTruth {
            x: a[0],
            y: a[1],
            scale: a[2],
            angle: a[3],
            brightness: a[4],
            contrast: a[5],
            saturation: a[6],
            hue: a[7],
        }
    }
}

/// A rendered sequence: `T` frames `[C,H,W]`, the per-frame truth track,
/// and the class label of the source image.
#[derive(Clone, Debug)]
pub struct SequenceSample {
    pub frames: Vec<Tensor>,
    pub truth: Vec<FrameTruth>,
    pub label: u32,
    pub source_id: u32,
    pub kind: ScheduleKind,
}

impl SequenceSample {
    pub fn t(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_shape(&self) -> &[usize] {
        self.frames[0].shape()
    }
}

/// Mirror every frame horizontally and mirror the truth x-track, so the
/// recorded positions still describe what is visible. Involution.
pub fn hflip(sample: &SequenceSample) -> SequenceSample {
    let mut out = sample.clone();
    for frame in &mut out.frames {
        let (c, h, w) = (frame.shape()[0], frame.shape()[1], frame.shape()[2]);
        let data = frame.data_mut();
        for ci in 0..c {
            for y in 0..h {
                let row = &mut data[(ci * h + y) * w..(ci * h + y + 1) * w];
                row.reverse();
            }
        }
    }
    let w = sample.frames[0].shape()[2] as f64;
    for t in &mut out.truth {
        t.x = (w - 1.0) - t.x;
    }
    out
}

/// Reverse the temporal order of frames and truth. Involution.
pub fn reverse_time(sample: &SequenceSample) -> SequenceSample {
    let mut out = sample.clone();
    out.frames.reverse();
    out.truth.reverse();
    out
}

/// Permute frames and truth rows by the same random permutation; the label
/// and schedule kind are untouched.
pub fn shuffle_frames(sample: &SequenceSample, rng: &mut Rng) -> SequenceSample {
    let mut perm: Vec<usize> = (0..sample.t()).collect();
    perm.shuffle(rng);
    let mut out = sample.clone();
    out.frames = perm.iter().map(|&i| sample.frames[i].clone()).collect();
    out.truth = perm.iter().map(|&i| sample.truth[i]).collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};

    fn tiny_sample() -> SequenceSample {
        let frames = (0..4)
            .map(|t| {
                Tensor::from_vec(
                    &[1, 2, 3],
                    (0..6).map(|i| (i as f64 + t as f64) / 10.0).collect(),
                )
                .unwrap()
            })
            .collect();
        let truth = (0..4)
            .map(|t| FrameTruth {
                x: t as f64,
                y: 0.5,
                scale: 1.0,
                angle: 0.0,
                brightness: 1.0,
                contrast: 1.0,
                saturation: 1.0,
                hue: 0.0,
            })
            .collect();
        SequenceSample {
            frames,
            truth,
            label: 3,
            source_id: 9,
            kind: ScheduleKind::Translation,
        }
    }

    #[test]
    fn hflip_is_involution() {
        let s = tiny_sample();
        let ff = hflip(&hflip(&s));
        for (a, b) in s.frames.iter().zip(&ff.frames) {
            assert_eq!(a.data(), b.data());
        }
        for (a, b) in s.truth.iter().zip(&ff.truth) {
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn reverse_time_is_involution() {
        let s = tiny_sample();
        let rr = reverse_time(&reverse_time(&s));
        for (a, b) in s.frames.iter().zip(&rr.frames) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn shuffle_preserves_frame_multiset_and_pairing() {
        let s = tiny_sample();
        let mut rng = stream(11, StreamKind::FrameShuffle, 0);
        let sh = shuffle_frames(&s, &mut rng);
        assert_eq!(sh.label, s.label);
        // every shuffled (frame, truth) pair exists in the original at the same joint index
        for (f, t) in sh.frames.iter().zip(&sh.truth) {
            let orig_idx = s
                .truth
                .iter()
                .position(|u| u.x == t.x)
                .expect("truth row must survive the shuffle");
            assert_eq!(s.frames[orig_idx].data(), f.data());
        }
    }

    #[test]
    fn shuffle_sorted_back_recovers_original() {
        let s = tiny_sample();
        let mut rng = stream(13, StreamKind::FrameShuffle, 1);
        let mut sh = shuffle_frames(&s, &mut rng);
        let mut order: Vec<usize> = (0..sh.t()).collect();
        order.sort_by(|&a, &b| sh.truth[a].x.partial_cmp(&sh.truth[b].x).unwrap());
        sh.frames = order.iter().map(|&i| sh.frames[i].clone()).collect();
        sh.truth = order.iter().map(|&i| sh.truth[i]).collect();
        for (a, b) in s.frames.iter().zip(&sh.frames) {
            assert_eq!(a.data(), b.data());
        }
    }
}
