//! Dataset generation driver. Each sample draws from its own RNG stream
//! keyed by (seed, sample index), so parallel and serial generation produce
//! bitwise-identical datasets.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, StreamKind};

use super::schedule::{
    make_photometric_schedule, make_rescale_schedule, make_rotation_schedule,
    make_translation_schedule, PhotometricCfg, RescaleCfg, RotationCfg, TranslationCfg,
};
use super::sources::synthetic_source;
use super::{render_sequence, shuffle_frames, ScheduleKind, SequenceSample, SourceImage};

/// Where source images come from.
#[derive(Clone, Debug)]
pub enum SourcePool {
    /// Procedural glyphs; a fresh jittered instance per sample.
    Synthetic { size: usize, channels: usize },
    /// A fixed set of loaded images, cycled by sample index.
    Loaded(Vec<SourceImage>),
}

/// Preset bundles for the two sequence styles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TrackStyle {
    /// 64x64 canvas, 20 frames, geometric transforms only.
    Mnist,
    /// 3 frames, photometric ramps plus flip/grayscale/solarize augmentation,
    /// no rotation.
    Cifar,
}

#[derive(Clone, Debug)]
pub struct DatagenConfig {
    pub count: usize,
    pub t: usize,
    pub canvas: usize,
    pub window: f64,
    pub out_size: usize,
    pub kinds: Vec<ScheduleKind>,
    pub speed: (f64, f64),
    pub scale_range: (f64, f64),
    pub scale_rate: (f64, f64),
    pub rot_rate: (f64, f64),
    /// None disables photometric ramps (identity factors).
    pub photometric: Option<PhotometricCfg>,
    pub flip_p: f64,
    pub grayscale_p: f64,
    pub solarize_p: f64,
    pub solarize_threshold: f64,
    /// Permute frame order per sample (the temporally-shuffled control).
    pub shuffle_frames: bool,
}

impl DatagenConfig {
    /// Defaults for a style. Mnist: T=20, 64x64 canvas, 28-pixel window,
    /// geometric transforms only. Cifar: T=3, flips p=0.5, grayscale and
    /// solarize p=0.1 each, photometric ramps on, no rotation.
    pub fn preset(style: TrackStyle, count: usize) -> Self {
        match style {
            TrackStyle::Mnist => DatagenConfig {
                count,
                t: 20,
                canvas: 64,
                window: 28.0,
                out_size: 64,
                kinds: vec![
                    ScheduleKind::Translation,
                    ScheduleKind::Rescale,
                    ScheduleKind::Rotation,
                ],
                speed: (1.5, 4.0),
                scale_range: (0.6, 1.4),
                scale_rate: (0.03, 0.09),
                rot_rate: (4.0, 14.0),
                photometric: None,
                flip_p: 0.0,
                grayscale_p: 0.0,
                solarize_p: 0.0,
                solarize_threshold: 0.5,
                shuffle_frames: false,
            },
            TrackStyle::Cifar => DatagenConfig {
                count,
                t: 3,
                canvas: 32,
                window: 24.0,
                out_size: 32,
                kinds: vec![ScheduleKind::Translation, ScheduleKind::Rescale],
                speed: (1.0, 3.0),
                scale_range: (0.7, 1.3),
                scale_rate: (0.05, 0.15),
                rot_rate: (0.0, 0.0),
                photometric: Some(PhotometricCfg {
                    t: 3,
                    brightness: (0.6, 1.4),
                    contrast: (0.6, 1.4),
                    saturation: (0.6, 1.4),
                    hue: (-0.1, 0.1),
                }),
                flip_p: 0.5,
                grayscale_p: 0.1,
                solarize_p: 0.1,
                solarize_threshold: 0.5,
                shuffle_frames: false,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t < 3 {
            return Err(Error::ConfigInvalid(format!(
                "t = {} but sequences need at least 3 frames",
                self.t
            )));
        }
        if self.kinds.is_empty() {
            return Err(Error::ConfigInvalid("no schedule kinds enabled".into()));
        }
        if self.window > self.canvas as f64 {
            return Err(Error::InvalidGeometry(format!(
                "window {} exceeds canvas {}",
                self.window, self.canvas
            )));
        }
        for (name, p) in [
            ("flip_p", self.flip_p),
            ("grayscale_p", self.grayscale_p),
            ("solarize_p", self.solarize_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::ConfigInvalid(format!("{name} = {p} not in [0,1]")));
            }
        }
        Ok(())
    }
}

fn generate_one(
    seed: u64,
    index: usize,
    cfg: &DatagenConfig,
    pool: &SourcePool,
) -> Result<SequenceSample> {
    let mut rng = stream(seed, StreamKind::DatasetSample, index as u64);

    let src = match pool {
        SourcePool::Synthetic { size, channels } => {
            let label = rng.gen_range(0..10u32);
            synthetic_source(seed, index as u32, label, *size, *channels)
        }
        SourcePool::Loaded(images) => {
            let mut img = images[index % images.len()].clone();
            img.id = (index % images.len()) as u32;
            img
        }
    };

    let kind = *cfg.kinds.choose(&mut rng).expect("kinds checked non-empty");
    let mut sched = match kind {
        ScheduleKind::Translation => make_translation_schedule(
            &mut rng,
            &TranslationCfg {
                t: cfg.t,
                canvas: cfg.canvas,
                window: cfg.window,
                speed: cfg.speed,
            },
        )?,
        ScheduleKind::Rescale => make_rescale_schedule(
            &mut rng,
            &RescaleCfg {
                t: cfg.t,
                canvas: cfg.canvas,
                window: cfg.window,
                scale_range: cfg.scale_range,
                rate: cfg.scale_rate,
            },
        )?,
        ScheduleKind::Rotation => make_rotation_schedule(
            &mut rng,
            &RotationCfg {
                t: cfg.t,
                canvas: cfg.canvas,
                window: cfg.window,
                rate: cfg.rot_rate,
            },
        )?,
    };

    if let Some(ph) = &cfg.photometric {
        let mut ph = ph.clone();
        ph.t = cfg.t;
        let (b, c, s, h) = make_photometric_schedule(&mut rng, &ph)?;
        sched.brightness = b;
        sched.contrast = c;
        sched.saturation = s;
        sched.hue = h;
    }
    sched.flip = cfg.flip_p > 0.0 && rng.gen_bool(cfg.flip_p);
    sched.solarize_threshold = cfg.solarize_threshold;
    for f in 0..cfg.t {
        sched.grayscale[f] = cfg.grayscale_p > 0.0 && rng.gen_bool(cfg.grayscale_p);
        sched.solarize[f] = cfg.solarize_p > 0.0 && rng.gen_bool(cfg.solarize_p);
    }

    let sample = render_sequence(&src, &sched, cfg.out_size)?;
    Ok(if cfg.shuffle_frames {
        let mut shuffle_rng = stream(seed, StreamKind::FrameShuffle, index as u64);
        shuffle_frames(&sample, &mut shuffle_rng)
    } else {
        sample
    })
}

/// Render `cfg.count` sequences. Parallel over samples; output is identical
/// to the serial order because each sample owns its stream.
pub fn generate_dataset(
    seed: u64,
    cfg: &DatagenConfig,
    pool: &SourcePool,
) -> Result<Vec<SequenceSample>> {
    cfg.validate()?;
    if let SourcePool::Loaded(images) = pool {
        if images.is_empty() {
            return Err(Error::ConfigInvalid("empty source pool".into()));
        }
    }
    (0..cfg.count)
        .into_par_iter()
        .map(|i| generate_one(seed, i, cfg, pool))
        .collect()
}
