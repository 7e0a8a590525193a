//! Schedule builders: constant-rate geometric parameter tracks with elastic
//! reflection at the configured bounds, plus linear photometric ramps.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{ScheduleKind, TransformSchedule};

#[derive(Clone, Debug)]
pub struct TranslationCfg {
    pub t: usize,
    pub canvas: usize,
    pub window: f64,
    /// Speed magnitude range in pixels per frame, both ends > 0.
    pub speed: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct RescaleCfg {
    pub t: usize,
    pub canvas: usize,
    pub window: f64,
    /// Scale factor bounds, 0 < min < max.
    pub scale_range: (f64, f64),
    /// Absolute per-frame rate range; the sign is drawn at random.
    pub rate: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct RotationCfg {
    pub t: usize,
    pub canvas: usize,
    pub window: f64,
    /// Angular rate magnitude range in degrees per frame.
    pub rate: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct PhotometricCfg {
    pub t: usize,
    /// Multiplicative factor ranges; a ramp start and end are sampled
    /// independently inside each range.
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
    pub saturation: (f64, f64),
    /// Hue shift in turns, within [-0.5, 0.5].
    pub hue: (f64, f64),
}

impl PhotometricCfg {
    /// Identity ramps: every factor pinned to 1 (hue 0).
    pub fn identity(t: usize) -> Self {
        PhotometricCfg {
            t,
            brightness: (1.0, 1.0),
            contrast: (1.0, 1.0),
            saturation: (1.0, 1.0),
            hue: (0.0, 0.0),
        }
    }
}

/// One constant-velocity step with elastic reflection at `[lo, hi]`.
/// Returns the new position and (possibly sign-flipped) velocity.
pub fn reflect_step(pos: f64, vel: f64, lo: f64, hi: f64) -> (f64, f64) {
    debug_assert!(hi >= lo);
    if hi == lo {
        return (lo, 0.0);
    }
    let mut p = pos + vel;
    let mut v = vel;
    loop {
        if p > hi {
            p = 2.0 * hi - p;
            v = -v;
        } else if p < lo {
            p = 2.0 * lo - p;
            v = -v;
        } else {
            break;
        }
    }
    (p, v)
}

fn sample_range(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn base_schedule(kind: ScheduleKind, canvas: usize, window: f64, t: usize) -> TransformSchedule {
    let c = (canvas as f64 - 1.0) / 2.0;
    TransformSchedule {
        kind,
        canvas,
        window,
        centers: vec![(c, c); t],
        scales: vec![1.0; t],
        angles: vec![0.0; t],
        brightness: vec![1.0; t],
        contrast: vec![1.0; t],
        saturation: vec![1.0; t],
        hue: vec![0.0; t],
        flip: false,
        grayscale: vec![false; t],
        solarize: vec![false; t],
        solarize_threshold: 0.5,
    }
}

fn check_t(t: usize) -> Result<()> {
    if t < 3 {
        return Err(Error::InvalidGeometry(format!(
            "sequences need at least 3 frames, got {t}"
        )));
    }
    Ok(())
}

/// Constant-velocity window motion with elastic bounces at the canvas
/// edges. The center track stays inside `[window/2, canvas - window/2]` on
/// both axes; the initial position is uniform in that box.
pub fn make_translation_schedule(rng: &mut Rng, cfg: &TranslationCfg) -> Result<TransformSchedule> {
    check_t(cfg.t)?;
    if cfg.window > cfg.canvas as f64 {
        return Err(Error::InvalidGeometry(format!(
            "window {} exceeds canvas {}",
            cfg.window, cfg.canvas
        )));
    }
    if cfg.speed.0 <= 0.0 || cfg.speed.1 < cfg.speed.0 {
        return Err(Error::InvalidRange(format!(
            "speed range ({}, {}) must be positive and ordered",
            cfg.speed.0, cfg.speed.1
        )));
    }
    let lo = cfg.window / 2.0;
    let hi = cfg.canvas as f64 - cfg.window / 2.0;
    let speed = sample_range(rng, cfg.speed);
    let dir = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut vx = speed * dir.cos();
    let mut vy = speed * dir.sin();
    let mut x = sample_range(rng, (lo, hi));
    let mut y = sample_range(rng, (lo, hi));

    let mut sched = base_schedule(ScheduleKind::Translation, cfg.canvas, cfg.window, cfg.t);
    sched.centers[0] = (x, y);
    for f in 1..cfg.t {
        let (nx, nvx) = reflect_step(x, vx, lo, hi);
        let (ny, nvy) = reflect_step(y, vy, lo, hi);
        x = nx;
        y = ny;
        vx = nvx;
        vy = nvy;
        sched.centers[f] = (x, y);
    }
    Ok(sched)
}

/// Centered window whose scale ramps linearly and reverses direction at the
/// configured bounds.
pub fn make_rescale_schedule(rng: &mut Rng, cfg: &RescaleCfg) -> Result<TransformSchedule> {
    check_t(cfg.t)?;
    let (s_min, s_max) = cfg.scale_range;
    if !(s_min > 0.0 && s_min < s_max) {
        return Err(Error::InvalidGeometry(format!(
            "scale range ({s_min}, {s_max}) must satisfy 0 < min < max"
        )));
    }
    if cfg.rate.0 < 0.0 || cfg.rate.1 < cfg.rate.0 {
        return Err(Error::InvalidRange(format!(
            "rate range ({}, {}) must be non-negative and ordered",
            cfg.rate.0, cfg.rate.1
        )));
    }
    let magnitude = sample_range(rng, cfg.rate);
    let mut rate = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
    let mut s = sample_range(rng, (s_min, s_max));

    let mut sched = base_schedule(ScheduleKind::Rescale, cfg.canvas, cfg.window, cfg.t);
    sched.scales[0] = s;
    for f in 1..cfg.t {
        let (ns, nr) = reflect_step(s, rate, s_min, s_max);
        s = ns;
        rate = nr;
        sched.scales[f] = s;
    }
    Ok(sched)
}

/// Fixed center and size, angle ramping linearly: `angle_t = angle_0 + t * rate`.
pub fn make_rotation_schedule(rng: &mut Rng, cfg: &RotationCfg) -> Result<TransformSchedule> {
    check_t(cfg.t)?;
    if cfg.rate.0 < 0.0 || cfg.rate.1 < cfg.rate.0 {
        return Err(Error::InvalidRange(format!(
            "angular rate range ({}, {}) must be non-negative and ordered",
            cfg.rate.0, cfg.rate.1
        )));
    }
    let magnitude = sample_range(rng, cfg.rate);
    let rate = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
    let start = rng.gen_range(0.0..360.0);

    let mut sched = base_schedule(ScheduleKind::Rotation, cfg.canvas, cfg.window, cfg.t);
    for f in 0..cfg.t {
        sched.angles[f] = start + f as f64 * rate;
    }
    Ok(sched)
}

/// Linear ramps for brightness, contrast, saturation, and hue, each from a
/// sampled start to a sampled end inside the configured range.
pub fn make_photometric_schedule(
    rng: &mut Rng,
    cfg: &PhotometricCfg,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_t(cfg.t)?;
    for (name, range, lo_ok) in [
        ("brightness", cfg.brightness, 0.0 < cfg.brightness.0),
        ("contrast", cfg.contrast, 0.0 <= cfg.contrast.0),
        ("saturation", cfg.saturation, 0.0 <= cfg.saturation.0),
        ("hue", cfg.hue, -0.5 <= cfg.hue.0 && cfg.hue.1 <= 0.5),
    ] {
        if !lo_ok || range.1 < range.0 {
            return Err(Error::InvalidRange(format!(
                "{name} range ({}, {}) is degenerate or unordered",
                range.0, range.1
            )));
        }
    }
    let ramp = |rng: &mut Rng, range: (f64, f64), t: usize| -> Vec<f64> {
        let a = sample_range(rng, range);
        let b = sample_range(rng, range);
        (0..t)
            .map(|f| a + (b - a) * f as f64 / (t - 1) as f64)
            .collect()
    };
    Ok((
        ramp(rng, cfg.brightness, cfg.t),
        ramp(rng, cfg.contrast, cfg.t),
        ramp(rng, cfg.saturation, cfg.t),
        ramp(rng, cfg.hue, cfg.t),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};

    /// Closed-form triangle-wave oracle for position under elastic
    /// reflection on [lo, hi], independent of the stepwise builder.
    fn folded_position(p0: f64, v: f64, lo: f64, hi: f64, t: usize) -> f64 {
        let span = hi - lo;
        if span == 0.0 {
            return lo;
        }
        let period = 2.0 * span;
        let raw = (p0 - lo) + v * t as f64;
        let m = raw.rem_euclid(period);
        lo + if m <= span { m } else { period - m }
    }

    #[test]
    fn translation_track_matches_reflection_oracle() {
        // top-left-corner convention from the interval [0, 36] maps onto the
        // center convention by a half-window offset; assert in center coords.
        let cfg = TranslationCfg {
            t: 12,
            canvas: 64,
            window: 28.0,
            speed: (5.0, 5.0),
        };
        let mut rng = stream(1, StreamKind::DatasetSample, 0);
        let sched = make_translation_schedule(&mut rng, &cfg).unwrap();
        let (lo, hi) = (14.0, 50.0);
        let (x0, y0) = sched.centers[0];
        let dx = sched.centers[1].0 - x0;
        let dy = sched.centers[1].1 - y0;
        // frame-1 step cannot have bounced in this config only if start is
        // interior; recover the signed velocity from the oracle instead.
        let mut vx = dx;
        let mut vy = dy;
        // the first step may include a bounce; search the velocity sign that
        // reproduces the observed first step under the oracle.
        for sx in [dx, -dx] {
            if (folded_position(x0, sx, lo, hi, 1) - sched.centers[1].0).abs() < 1e-9 {
                vx = sx;
            }
        }
        for sy in [dy, -dy] {
            if (folded_position(y0, sy, lo, hi, 1) - sched.centers[1].1).abs() < 1e-9 {
                vy = sy;
            }
        }
        for t in 0..cfg.t {
            let ox = folded_position(x0, vx, lo, hi, t);
            let oy = folded_position(y0, vy, lo, hi, t);
            assert!((sched.centers[t].0 - ox).abs() < 1e-9, "x at frame {t}");
            assert!((sched.centers[t].1 - oy).abs() < 1e-9, "y at frame {t}");
        }
    }

    #[test]
    fn explicit_bounce_example() {
        // start x=30 (top-left units), vx=+5 on [0,36]: 30, 35, then the
        // 40 overshoot folds to 32 and the velocity flips.
        let (p1, v1) = reflect_step(30.0, 5.0, 0.0, 36.0);
        assert_eq!((p1, v1), (35.0, 5.0));
        let (p2, v2) = reflect_step(p1, v1, 0.0, 36.0);
        assert_eq!((p2, v2), (32.0, -5.0));
    }

    #[test]
    fn start_at_boundary_flips_immediately() {
        let (p, v) = reflect_step(36.0, 5.0, 0.0, 36.0);
        assert_eq!((p, v), (31.0, -5.0));
    }

    #[test]
    fn rescale_reverses_at_bounds() {
        // start 1.4, rate +0.1 on [0.5, 1.5]: 1.4, 1.5, 1.4, 1.3
        let mut s = 1.4;
        let mut r = 0.1;
        let mut track = vec![s];
        for _ in 0..3 {
            let (ns, nr) = reflect_step(s, r, 0.5, 1.5);
            s = ns;
            r = nr;
            track.push(s);
        }
        let expect = [1.4, 1.5, 1.4, 1.3];
        for (a, b) in track.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rescale_start_at_min_moving_down_reverses() {
        let (s, r) = reflect_step(0.5, -0.1, 0.5, 1.5);
        assert!((s - 0.6).abs() < 1e-12);
        assert!(r > 0.0);
    }

    #[test]
    fn rescale_rate_zero_is_constant() {
        let cfg = RescaleCfg {
            t: 6,
            canvas: 64,
            window: 28.0,
            scale_range: (0.5, 1.5),
            rate: (0.0, 0.0),
        };
        let mut rng = stream(2, StreamKind::DatasetSample, 0);
        let sched = make_rescale_schedule(&mut rng, &cfg).unwrap();
        for w in sched.scales.windows(2) {
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn rotation_is_linear_ramp() {
        let cfg = RotationCfg {
            t: 3,
            canvas: 64,
            window: 28.0,
            rate: (10.0, 10.0),
        };
        // search a seed whose sign draw is positive, then check 0..2 steps
        let mut rng = stream(3, StreamKind::DatasetSample, 4);
        let sched = make_rotation_schedule(&mut rng, &cfg).unwrap();
        let d1 = sched.angles[1] - sched.angles[0];
        let d2 = sched.angles[2] - sched.angles[1];
        assert!((d1.abs() - 10.0).abs() < 1e-12);
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn rotation_rate_zero_is_identity_geometry() {
        let cfg = RotationCfg {
            t: 4,
            canvas: 64,
            window: 28.0,
            rate: (0.0, 0.0),
        };
        let mut rng = stream(3, StreamKind::DatasetSample, 1);
        let sched = make_rotation_schedule(&mut rng, &cfg).unwrap();
        for w in sched.angles.windows(2) {
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn window_larger_than_canvas_rejected() {
        let cfg = TranslationCfg {
            t: 5,
            canvas: 24,
            window: 28.0,
            speed: (1.0, 2.0),
        };
        let mut rng = stream(4, StreamKind::DatasetSample, 0);
        match make_translation_schedule(&mut rng, &cfg) {
            Err(Error::InvalidGeometry(_)) => {}
            other => panic!("expected InvalidGeometry, got {other:?}"),
        }
    }

    #[test]
    fn translation_speed_is_constant_between_bounces() {
        let cfg = TranslationCfg {
            t: 20,
            canvas: 64,
            window: 28.0,
            speed: (1.5, 4.0),
        };
        for idx in 0..20 {
            let mut rng = stream(5, StreamKind::DatasetSample, idx);
            let sched = make_translation_schedule(&mut rng, &cfg).unwrap();
            let speeds: Vec<f64> = sched
                .centers
                .windows(2)
                .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
                .collect();
            let (lo, hi) = (14.0, 50.0);
            let at_bound = |p: (f64, f64)| {
                p.0 - lo < 4.0 || hi - p.0 < 4.0 || p.1 - lo < 4.0 || hi - p.1 < 4.0
            };
            // away from the walls every step has the sampled magnitude
            let interior: Vec<f64> = speeds
                .iter()
                .enumerate()
                .filter(|(f, _)| !at_bound(sched.centers[*f]) && !at_bound(sched.centers[f + 1]))
                .map(|(_, s)| *s)
                .collect();
            for w in interior.windows(2) {
                assert!((w[0] - w[1]).abs() < 1e-9);
            }
            for c in &sched.centers {
                assert!(c.0 >= lo - 1e-9 && c.0 <= hi + 1e-9);
                assert!(c.1 >= lo - 1e-9 && c.1 <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn photometric_ramp_is_linear() {
        let cfg = PhotometricCfg {
            t: 3,
            brightness: (0.8, 0.8),
            contrast: (1.0, 1.0),
            saturation: (1.0, 1.0),
            hue: (0.0, 0.0),
        };
        let mut rng = stream(6, StreamKind::DatasetSample, 0);
        let (b, _, _, _) = make_photometric_schedule(&mut rng, &cfg).unwrap();
        assert_eq!(b, vec![0.8, 0.8, 0.8]);

        // explicit endpoints: ramp 0.8 -> 1.2 over 3 frames hits 1.0 midway
        let t = 3;
        let (a, z) = (0.8, 1.2);
        let vals: Vec<f64> = (0..t)
            .map(|f| a + (z - a) * f as f64 / (t - 1) as f64)
            .collect();
        assert!((vals[1] - 1.0).abs() < 1e-12);

        // hue -0.1 -> 0.1 over 5 frames steps by 0.05
        let hue: Vec<f64> = (0..5).map(|f| -0.1 + 0.2 * f as f64 / 4.0).collect();
        for w in hue.windows(2) {
            assert!((w[1] - w[0] - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_photometric_range_rejected() {
        let cfg = PhotometricCfg {
            t: 4,
            brightness: (0.0, 1.0),
            contrast: (1.0, 1.0),
            saturation: (1.0, 1.0),
            hue: (0.0, 0.0),
        };
        let mut rng = stream(7, StreamKind::DatasetSample, 0);
        match make_photometric_schedule(&mut rng, &cfg) {
            Err(Error::InvalidRange(_)) => {}
            other => panic!("expected InvalidRange, got {other:?}"),
        }
    }

    proptest::proptest! {
        /// First differences have constant magnitude except at bounce events,
        /// and sign changes happen only there.
        #[test]
        fn rescale_first_difference_invariant(seed in 0u64..200) {
            let cfg = RescaleCfg {
                t: 16,
                canvas: 64,
                window: 28.0,
                scale_range: (0.5, 1.5),
                rate: (0.02, 0.12),
            };
            let mut rng = stream(seed, StreamKind::DatasetSample, 0);
            let sched = make_rescale_schedule(&mut rng, &cfg).unwrap();
            let diffs: Vec<f64> = sched.scales.windows(2).map(|w| w[1] - w[0]).collect();
            let rate = diffs[0].abs().max(diffs.iter().fold(0.0f64, |a, d| a.max(d.abs())));
            for (i, w) in diffs.windows(2).enumerate() {
                let interior = sched.scales[i + 1] - 0.5 > rate && 1.5 - sched.scales[i + 1] > rate;
                if interior {
                    // no bounce adjacent: magnitude constant and sign preserved
                    proptest::prop_assert!((w[0].abs() - w[1].abs()).abs() < 1e-9);
                    proptest::prop_assert!(w[0].signum() == w[1].signum() || w[0] == 0.0);
                }
                proptest::prop_assert!(sched.scales[i] >= 0.5 - 1e-9 && sched.scales[i] <= 1.5 + 1e-9);
            }
        }
    }
}
