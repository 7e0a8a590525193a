//! Experiment configuration: a line-oriented `key = value` format with
//! `[section]` headers and `#` comments. Every field has a documented
//! default; the seed is mandatory. Unknown sections or keys are rejected so
//! typos cannot silently fall back to defaults.

use std::path::{Path, PathBuf};

use crate::datagen::{DatagenConfig, PhotometricCfg, ScheduleKind, SourcePool, TrackStyle};
use crate::error::{Error, Result};
use crate::objectives::{ObjectiveConfig, ObjectiveKind};
use crate::probes::{EvalCfg, KernelFitCfg, ProbeFitCfg};
use crate::trainer::TrainConfig;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub datagen: DatagenSection,
    pub network: NetworkSection,
    pub objective: ObjectiveSection,
    pub training: TrainingSection,
    pub evaluation: EvaluationSection,
}

#[derive(Clone, Debug)]
pub struct DatagenSection {
    pub style: TrackStyle,
    pub count: usize,
    pub t: usize,
    pub canvas: usize,
    pub window: f64,
    pub out_size: usize,
    pub channels: usize,
    pub kinds: Vec<ScheduleKind>,
    pub speed_min: f64,
    pub speed_max: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub scale_rate_min: f64,
    pub scale_rate_max: f64,
    pub rot_rate_min: f64,
    pub rot_rate_max: f64,
    pub photometric: bool,
    pub brightness_min: f64,
    pub brightness_max: f64,
    pub contrast_min: f64,
    pub contrast_max: f64,
    pub saturation_min: f64,
    pub saturation_max: f64,
    pub hue_min: f64,
    pub hue_max: f64,
    pub flip_p: f64,
    pub grayscale_p: f64,
    pub solarize_p: f64,
    pub solarize_threshold: f64,
    pub shuffle_frames: bool,
    pub source: SourceKind,
    pub source_size: usize,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    Synthetic,
    Idx,
}

#[derive(Clone, Debug)]
pub struct NetworkSection {
    pub d: usize,
}

#[derive(Clone, Debug)]
pub struct ObjectiveSection {
    pub kind: ObjectiveKind,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub straighten_weight: f64,
    pub epsilon: f64,
    pub attachments: Vec<String>,
    pub per_timestep_whiten: bool,
}

#[derive(Clone, Debug)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug)]
pub struct EvaluationSection {
    pub split_mod: u32,
    pub probe_iters: usize,
    pub probe_lr: f64,
    pub probe_l2: f64,
    pub ridge: f64,
    /// None = median pairwise-distance heuristic.
    pub bandwidth: Option<f64>,
    pub support_cap: usize,
    pub noise_sigmas: Vec<f64>,
    pub pgd_budgets: Vec<f64>,
    pub pgd_steps: usize,
    pub attack_items: usize,
    pub pair_cap: usize,
    pub decoder_epochs: usize,
    pub decoder_lr: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            datagen: DatagenSection::default(),
            network: NetworkSection { d: 128 },
            objective: ObjectiveSection::default(),
            training: TrainingSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl Default for DatagenSection {
    fn default() -> Self {
        let base = DatagenConfig::preset(TrackStyle::Mnist, 5000);
        DatagenSection {
            style: TrackStyle::Mnist,
            count: base.count,
            t: base.t,
            canvas: base.canvas,
            window: base.window,
            out_size: base.out_size,
            channels: 1,
            kinds: base.kinds.clone(),
            speed_min: base.speed.0,
            speed_max: base.speed.1,
            scale_min: base.scale_range.0,
            scale_max: base.scale_range.1,
            scale_rate_min: base.scale_rate.0,
            scale_rate_max: base.scale_rate.1,
            rot_rate_min: base.rot_rate.0,
            rot_rate_max: base.rot_rate.1,
            photometric: false,
            brightness_min: 0.6,
            brightness_max: 1.4,
            contrast_min: 0.6,
            contrast_max: 1.4,
            saturation_min: 0.6,
            saturation_max: 1.4,
            hue_min: -0.1,
            hue_max: 0.1,
            flip_p: base.flip_p,
            grayscale_p: base.grayscale_p,
            solarize_p: base.solarize_p,
            solarize_threshold: base.solarize_threshold,
            shuffle_frames: false,
            source: SourceKind::Synthetic,
            source_size: 28,
            idx_images: None,
            idx_labels: None,
        }
    }
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        let base = ObjectiveConfig::straightening();
        ObjectiveSection {
            kind: base.kind,
            alpha: base.alpha,
            beta: base.beta,
            lambda: base.lambda,
            gamma: base.gamma,
            straighten_weight: base.straighten_weight,
            epsilon: base.epsilon,
            attachments: base.attachments,
            per_timestep_whiten: base.per_timestep_whiten,
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            epochs: 30,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            checkpoint_every: 0,
        }
    }
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            split_mod: 5,
            probe_iters: 600,
            probe_lr: 2.0,
            probe_l2: 1e-4,
            ridge: 1e-3,
            bandwidth: None,
            support_cap: 2000,
            noise_sigmas: vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.4],
            pgd_budgets: vec![0.0, 0.5, 1.0, 2.0, 3.0],
            pgd_steps: 500,
            attack_items: 32,
            pair_cap: 100_000,
            decoder_epochs: 10,
            decoder_lr: 0.005,
        }
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::ConfigInvalid(format!("line {line}: {msg}"))
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| bad(line, format!("cannot parse `{v}` for key `{key}`")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(line, format!("cannot parse `{v}` as bool for `{key}`"))),
    }
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_num::<f64>(line, key, s.trim()))
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seed_seen = false;
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let s = stripped.trim();
            if s.is_empty() {
                continue;
            }
            if s.starts_with('[') {
                if !s.ends_with(']') {
                    return Err(bad(line, "unterminated section header"));
                }
                section = s[1..s.len() - 1].trim().to_string();
                if !matches!(
                    section.as_str(),
                    "datagen" | "network" | "objective" | "training" | "evaluation"
                ) {
                    return Err(bad(line, format!("unknown section `[{section}]`")));
                }
                continue;
            }
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected `key = value`, got `{s}`")))?;
            let key = key.trim();
            let v = value.trim();
            if section.is_empty() {
                match key {
                    "seed" => {
                        cfg.seed = parse_num(line, key, v)?;
                        seed_seen = true;
                    }
                    _ => return Err(bad(line, format!("unknown top-level key `{key}`"))),
                }
                continue;
            }
            cfg.apply(&section, key, v, line)?;
        }
        if !seed_seen {
            return Err(Error::ConfigInvalid(
                "`seed = <u64>` is mandatory at the top level".into(),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|_| Error::FileMissing(path.to_path_buf()))?;
        Self::parse(&text)
    }

    fn apply(&mut self, section: &str, key: &str, v: &str, line: usize) -> Result<()> {
        match section {
            "datagen" => {
                let d = &mut self.datagen;
                match key {
                    "style" => {
                        let style = match v {
                            "mnist" => TrackStyle::Mnist,
                            "cifar" => TrackStyle::Cifar,
                            _ => return Err(bad(line, format!("unknown style `{v}`"))),
                        };
                        // restyle resets the style-dependent defaults, keeping count
                        let count = d.count;
                        let preset = DatagenConfig::preset(style, count);
                        d.style = style;
                        d.t = preset.t;
                        d.canvas = preset.canvas;
                        d.window = preset.window;
                        d.out_size = preset.out_size;
                        d.kinds = preset.kinds;
                        d.speed_min = preset.speed.0;
                        d.speed_max = preset.speed.1;
                        d.scale_min = preset.scale_range.0;
                        d.scale_max = preset.scale_range.1;
                        d.scale_rate_min = preset.scale_rate.0;
                        d.scale_rate_max = preset.scale_rate.1;
                        d.rot_rate_min = preset.rot_rate.0;
                        d.rot_rate_max = preset.rot_rate.1;
                        d.photometric = preset.photometric.is_some();
                        d.flip_p = preset.flip_p;
                        d.grayscale_p = preset.grayscale_p;
                        d.solarize_p = preset.solarize_p;
                        d.channels = if style == TrackStyle::Cifar { 3 } else { 1 };
                    }
                    "count" => d.count = parse_num(line, key, v)?,
                    "t" => d.t = parse_num(line, key, v)?,
                    "canvas" => d.canvas = parse_num(line, key, v)?,
                    "window" => d.window = parse_num(line, key, v)?,
                    "out_size" => d.out_size = parse_num(line, key, v)?,
                    "channels" => d.channels = parse_num(line, key, v)?,
                    "kinds" => {
                        d.kinds = v
                            .split(',')
                            .map(|k| match k.trim() {
                                "translation" => Ok(ScheduleKind::Translation),
                                "rescale" => Ok(ScheduleKind::Rescale),
                                "rotation" => Ok(ScheduleKind::Rotation),
                                other => Err(bad(line, format!("unknown kind `{other}`"))),
                            })
                            .collect::<Result<_>>()?;
                    }
                    "speed_min" => d.speed_min = parse_num(line, key, v)?,
                    "speed_max" => d.speed_max = parse_num(line, key, v)?,
                    "scale_min" => d.scale_min = parse_num(line, key, v)?,
                    "scale_max" => d.scale_max = parse_num(line, key, v)?,
                    "scale_rate_min" => d.scale_rate_min = parse_num(line, key, v)?,
                    "scale_rate_max" => d.scale_rate_max = parse_num(line, key, v)?,
                    "rot_rate_min" => d.rot_rate_min = parse_num(line, key, v)?,
                    "rot_rate_max" => d.rot_rate_max = parse_num(line, key, v)?,
                    "photometric" => d.photometric = parse_bool(line, key, v)?,
                    "brightness_min" => d.brightness_min = parse_num(line, key, v)?,
                    "brightness_max" => d.brightness_max = parse_num(line, key, v)?,
                    "contrast_min" => d.contrast_min = parse_num(line, key, v)?,
                    "contrast_max" => d.contrast_max = parse_num(line, key, v)?,
                    "saturation_min" => d.saturation_min = parse_num(line, key, v)?,
                    "saturation_max" => d.saturation_max = parse_num(line, key, v)?,
                    "hue_min" => d.hue_min = parse_num(line, key, v)?,
                    "hue_max" => d.hue_max = parse_num(line, key, v)?,
                    "flip_p" => d.flip_p = parse_num(line, key, v)?,
                    "grayscale_p" => d.grayscale_p = parse_num(line, key, v)?,
                    "solarize_p" => d.solarize_p = parse_num(line, key, v)?,
                    "solarize_threshold" => d.solarize_threshold = parse_num(line, key, v)?,
                    "shuffle_frames" => d.shuffle_frames = parse_bool(line, key, v)?,
                    "source" => {
                        d.source = match v {
                            "synthetic" => SourceKind::Synthetic,
                            "idx" => SourceKind::Idx,
                            _ => return Err(bad(line, format!("unknown source `{v}`"))),
                        }
                    }
                    "source_size" => d.source_size = parse_num(line, key, v)?,
                    "idx_images" => d.idx_images = Some(PathBuf::from(v)),
                    "idx_labels" => d.idx_labels = Some(PathBuf::from(v)),
                    _ => return Err(bad(line, format!("unknown key `{key}` in [datagen]"))),
                }
            }
            "network" => match key {
                "d" => self.network.d = parse_num(line, key, v)?,
                _ => return Err(bad(line, format!("unknown key `{key}` in [network]"))),
            },
            "objective" => {
                let o = &mut self.objective;
                match key {
                    "kind" => {
                        o.kind = match v {
                            "straightening" => ObjectiveKind::Straightening,
                            "invariance" => ObjectiveKind::Invariance,
                            "composed" => ObjectiveKind::Composed,
                            _ => return Err(bad(line, format!("unknown objective `{v}`"))),
                        }
                    }
                    "alpha" => o.alpha = parse_num(line, key, v)?,
                    "beta" => o.beta = parse_num(line, key, v)?,
                    "lambda" => o.lambda = parse_num(line, key, v)?,
                    "gamma" => o.gamma = parse_num(line, key, v)?,
                    "straighten_weight" => o.straighten_weight = parse_num(line, key, v)?,
                    "epsilon" => o.epsilon = parse_num(line, key, v)?,
                    "attachments" => {
                        o.attachments = v.split(',').map(|s| s.trim().to_string()).collect()
                    }
                    "per_timestep_whiten" => o.per_timestep_whiten = parse_bool(line, key, v)?,
                    _ => return Err(bad(line, format!("unknown key `{key}` in [objective]"))),
                }
            }
            "training" => {
                let t = &mut self.training;
                match key {
                    "epochs" => t.epochs = parse_num(line, key, v)?,
                    "batch_size" => t.batch_size = parse_num(line, key, v)?,
                    "lr" => t.lr = parse_num(line, key, v)?,
                    "momentum" => t.momentum = parse_num(line, key, v)?,
                    "weight_decay" => t.weight_decay = parse_num(line, key, v)?,
                    "checkpoint_every" => t.checkpoint_every = parse_num(line, key, v)?,
                    _ => return Err(bad(line, format!("unknown key `{key}` in [training]"))),
                }
            }
            "evaluation" => {
                let e = &mut self.evaluation;
                match key {
                    "split_mod" => e.split_mod = parse_num(line, key, v)?,
                    "probe_iters" => e.probe_iters = parse_num(line, key, v)?,
                    "probe_lr" => e.probe_lr = parse_num(line, key, v)?,
                    "probe_l2" => e.probe_l2 = parse_num(line, key, v)?,
                    "ridge" => e.ridge = parse_num(line, key, v)?,
                    "bandwidth" => {
                        e.bandwidth = if v == "auto" {
                            None
                        } else {
                            Some(parse_num(line, key, v)?)
                        }
                    }
                    "support_cap" => e.support_cap = parse_num(line, key, v)?,
                    "noise_sigmas" => e.noise_sigmas = parse_list(line, key, v)?,
                    "pgd_budgets" => e.pgd_budgets = parse_list(line, key, v)?,
                    "pgd_steps" => e.pgd_steps = parse_num(line, key, v)?,
                    "attack_items" => e.attack_items = parse_num(line, key, v)?,
                    "pair_cap" => e.pair_cap = parse_num(line, key, v)?,
                    "decoder_epochs" => e.decoder_epochs = parse_num(line, key, v)?,
                    "decoder_lr" => e.decoder_lr = parse_num(line, key, v)?,
                    _ => return Err(bad(line, format!("unknown key `{key}` in [evaluation]"))),
                }
            }
            _ => unreachable!("section names validated above"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.datagen;
        if d.source == SourceKind::Idx && (d.idx_images.is_none() || d.idx_labels.is_none()) {
            return Err(Error::ConfigInvalid(
                "source = idx needs idx_images and idx_labels paths".into(),
            ));
        }
        if !(1..=3).contains(&d.channels) || d.channels == 2 {
            return Err(Error::ConfigInvalid(format!(
                "channels = {} must be 1 or 3",
                d.channels
            )));
        }
        self.to_objective().validate()?;
        Ok(())
    }

    pub fn to_datagen_config(&self) -> DatagenConfig {
        let d = &self.datagen;
        DatagenConfig {
            count: d.count,
            t: d.t,
            canvas: d.canvas,
            window: d.window,
            out_size: d.out_size,
            kinds: d.kinds.clone(),
            speed: (d.speed_min, d.speed_max),
            scale_range: (d.scale_min, d.scale_max),
            scale_rate: (d.scale_rate_min, d.scale_rate_max),
            rot_rate: (d.rot_rate_min, d.rot_rate_max),
            photometric: d.photometric.then(|| PhotometricCfg {
                t: d.t,
                brightness: (d.brightness_min, d.brightness_max),
                contrast: (d.contrast_min, d.contrast_max),
                saturation: (d.saturation_min, d.saturation_max),
                hue: (d.hue_min, d.hue_max),
            }),
            flip_p: d.flip_p,
            grayscale_p: d.grayscale_p,
            solarize_p: d.solarize_p,
            solarize_threshold: d.solarize_threshold,
            shuffle_frames: d.shuffle_frames,
        }
    }

    pub fn source_pool(&self) -> Result<SourcePool> {
        let d = &self.datagen;
        Ok(match d.source {
            SourceKind::Synthetic => SourcePool::Synthetic {
                size: d.source_size,
                channels: d.channels,
            },
            SourceKind::Idx => {
                let images = d.idx_images.as_ref().expect("validated");
                let labels = d.idx_labels.as_ref().expect("validated");
                SourcePool::Loaded(crate::datagen::load_idx_sources(images, labels)?)
            }
        })
    }

    pub fn to_objective(&self) -> ObjectiveConfig {
        let o = &self.objective;
        ObjectiveConfig {
            kind: o.kind,
            alpha: o.alpha,
            beta: o.beta,
            lambda: o.lambda,
            gamma: o.gamma,
            straighten_weight: o.straighten_weight,
            epsilon: o.epsilon,
            attachments: o.attachments.clone(),
            per_timestep_whiten: o.per_timestep_whiten,
        }
    }

    pub fn to_train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            seed: self.seed,
            objective: self.to_objective(),
            checkpoint_every: t.checkpoint_every,
        }
    }

    pub fn to_eval_cfg(&self) -> EvalCfg {
        let e = &self.evaluation;
        EvalCfg {
            split_mod: e.split_mod,
            tap: "final".into(),
            probe: ProbeFitCfg {
                iters: e.probe_iters,
                lr: e.probe_lr,
                l2: e.probe_l2,
                ..ProbeFitCfg::default()
            },
            kernel: KernelFitCfg {
                bandwidth: e.bandwidth,
                ridge: e.ridge,
                support_cap: e.support_cap,
                seed: self.seed,
            },
        }
    }

    /// Serialize with every default materialized; the echoed copy in a run
    /// directory parses back to an identical config.
    pub fn resolved_text(&self) -> String {
        let d = &self.datagen;
        let o = &self.objective;
        let t = &self.training;
        let e = &self.evaluation;
        let kinds = d
            .kinds
            .iter()
            .map(|k| k.name())
            .collect::<Vec<_>>()
            .join(",");
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        s.push_str(&format!("seed = {}\n\n[datagen]\n", self.seed));
        s.push_str(&format!(
            "style = {}\n",
            match d.style {
                TrackStyle::Mnist => "mnist",
                TrackStyle::Cifar => "cifar",
            }
        ));
        s.push_str(&format!("count = {}\n", d.count));
        s.push_str(&format!("t = {}\n", d.t));
        s.push_str(&format!("canvas = {}\n", d.canvas));
        s.push_str(&format!("window = {}\n", d.window));
        s.push_str(&format!("out_size = {}\n", d.out_size));
        s.push_str(&format!("channels = {}\n", d.channels));
        s.push_str(&format!("kinds = {kinds}\n"));
        s.push_str(&format!("speed_min = {}\n", d.speed_min));
        s.push_str(&format!("speed_max = {}\n", d.speed_max));
        s.push_str(&format!("scale_min = {}\n", d.scale_min));
        s.push_str(&format!("scale_max = {}\n", d.scale_max));
        s.push_str(&format!("scale_rate_min = {}\n", d.scale_rate_min));
        s.push_str(&format!("scale_rate_max = {}\n", d.scale_rate_max));
        s.push_str(&format!("rot_rate_min = {}\n", d.rot_rate_min));
        s.push_str(&format!("rot_rate_max = {}\n", d.rot_rate_max));
        s.push_str(&format!("photometric = {}\n", d.photometric));
        s.push_str(&format!("brightness_min = {}\n", d.brightness_min));
        s.push_str(&format!("brightness_max = {}\n", d.brightness_max));
        s.push_str(&format!("contrast_min = {}\n", d.contrast_min));
        s.push_str(&format!("contrast_max = {}\n", d.contrast_max));
        s.push_str(&format!("saturation_min = {}\n", d.saturation_min));
        s.push_str(&format!("saturation_max = {}\n", d.saturation_max));
        s.push_str(&format!("hue_min = {}\n", d.hue_min));
        s.push_str(&format!("hue_max = {}\n", d.hue_max));
        s.push_str(&format!("flip_p = {}\n", d.flip_p));
        s.push_str(&format!("grayscale_p = {}\n", d.grayscale_p));
        s.push_str(&format!("solarize_p = {}\n", d.solarize_p));
        s.push_str(&format!("solarize_threshold = {}\n", d.solarize_threshold));
        s.push_str(&format!("shuffle_frames = {}\n", d.shuffle_frames));
        s.push_str(&format!(
            "source = {}\n",
            match d.source {
                SourceKind::Synthetic => "synthetic",
                SourceKind::Idx => "idx",
            }
        ));
        s.push_str(&format!("source_size = {}\n", d.source_size));
        if let Some(p) = &d.idx_images {
            s.push_str(&format!("idx_images = {}\n", p.display()));
        }
        if let Some(p) = &d.idx_labels {
            s.push_str(&format!("idx_labels = {}\n", p.display()));
        }
        s.push_str(&format!("\n[network]\nd = {}\n", self.network.d));
        s.push_str("\n[objective]\n");
        s.push_str(&format!(
            "kind = {}\n",
            match o.kind {
                ObjectiveKind::Straightening => "straightening",
                ObjectiveKind::Invariance => "invariance",
                ObjectiveKind::Composed => "composed",
            }
        ));
        s.push_str(&format!("alpha = {}\n", o.alpha));
        s.push_str(&format!("beta = {}\n", o.beta));
        s.push_str(&format!("lambda = {}\n", o.lambda));
        s.push_str(&format!("gamma = {}\n", o.gamma));
        s.push_str(&format!("straighten_weight = {}\n", o.straighten_weight));
        s.push_str(&format!("epsilon = {}\n", o.epsilon));
        s.push_str(&format!("attachments = {}\n", o.attachments.join(",")));
        s.push_str(&format!("per_timestep_whiten = {}\n", o.per_timestep_whiten));
        s.push_str("\n[training]\n");
        s.push_str(&format!("epochs = {}\n", t.epochs));
        s.push_str(&format!("batch_size = {}\n", t.batch_size));
        s.push_str(&format!("lr = {}\n", t.lr));
        s.push_str(&format!("momentum = {}\n", t.momentum));
        s.push_str(&format!("weight_decay = {}\n", t.weight_decay));
        s.push_str(&format!("checkpoint_every = {}\n", t.checkpoint_every));
        s.push_str("\n[evaluation]\n");
        s.push_str(&format!("split_mod = {}\n", e.split_mod));
        s.push_str(&format!("probe_iters = {}\n", e.probe_iters));
        s.push_str(&format!("probe_lr = {}\n", e.probe_lr));
        s.push_str(&format!("probe_l2 = {}\n", e.probe_l2));
        s.push_str(&format!("ridge = {}\n", e.ridge));
        s.push_str(&format!(
            "bandwidth = {}\n",
            e.bandwidth.map(|b| b.to_string()).unwrap_or_else(|| "auto".into())
        ));
        s.push_str(&format!("support_cap = {}\n", e.support_cap));
        s.push_str(&format!("noise_sigmas = {}\n", list(&e.noise_sigmas)));
        s.push_str(&format!("pgd_budgets = {}\n", list(&e.pgd_budgets)));
        s.push_str(&format!("pgd_steps = {}\n", e.pgd_steps));
        s.push_str(&format!("attack_items = {}\n", e.attack_items));
        s.push_str(&format!("pair_cap = {}\n", e.pair_cap));
        s.push_str(&format!("decoder_epochs = {}\n", e.decoder_epochs));
        s.push_str(&format!("decoder_lr = {}\n", e.decoder_lr));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 7\n";

    #[test]
    fn minimal_config_gets_all_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.datagen.t, 20);
        assert_eq!(cfg.datagen.canvas, 64);
        assert_eq!(cfg.network.d, 128);
        assert_eq!(cfg.objective.alpha, 1.0);
        assert_eq!(cfg.objective.beta, 0.25);
        assert_eq!(cfg.training.batch_size, 32);
    }

    #[test]
    fn missing_seed_is_rejected() {
        match ExperimentConfig::parse("[training]\nepochs = 3\n") {
            Err(Error::ConfigInvalid(msg)) => assert!(msg.contains("seed")),
            other => panic!("expected ConfigInvalid, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "seed = 1\n[training]\nlearning_rate = 0.1\n";
        match ExperimentConfig::parse(text) {
            Err(Error::ConfigInvalid(msg)) => assert!(msg.contains("learning_rate")),
            other => panic!("expected ConfigInvalid, got {other:?}"),
        }
        match ExperimentConfig::parse("seed = 1\n[nonsense]\n") {
            Err(Error::ConfigInvalid(msg)) => assert!(msg.contains("nonsense")),
            other => panic!("expected ConfigInvalid, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_overrides_parse() {
        let text = "\
# top comment
seed = 42

[datagen]
count = 100   # inline comment
t = 6
kinds = translation,rescale

[objective]
kind = invariance

[training]
epochs = 3
lr = 0.01
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.datagen.count, 100);
        assert_eq!(cfg.datagen.t, 6);
        assert_eq!(cfg.datagen.kinds.len(), 2);
        assert_eq!(cfg.objective.kind, ObjectiveKind::Invariance);
        assert_eq!(cfg.training.epochs, 3);
        assert_eq!(cfg.training.lr, 0.01);
    }

    #[test]
    fn resolved_text_round_trips() {
        let text = "\
seed = 9
[datagen]
style = cifar
count = 50
[evaluation]
noise_sigmas = 0,0.1,0.3
bandwidth = 2.5
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let echoed = cfg.resolved_text();
        let back = ExperimentConfig::parse(&echoed).unwrap();
        assert_eq!(back.resolved_text(), echoed);
        assert_eq!(back.datagen.channels, 3);
        assert_eq!(back.evaluation.bandwidth, Some(2.5));
        assert_eq!(back.evaluation.noise_sigmas, vec![0.0, 0.1, 0.3]);
    }

    #[test]
    fn idx_source_requires_paths() {
        let text = "seed = 1\n[datagen]\nsource = idx\n";
        assert!(ExperimentConfig::parse(text).is_err());
    }
}
