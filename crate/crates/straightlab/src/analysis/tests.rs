use super::*;
use crate::netcore::{init_params, LayerSpec};
use crate::probes::{fit_linear_classifier, ProbeFitCfg};
use crate::rng::{stream, StreamKind};
use crate::tensor::Tensor;

#[test]
fn participation_ratio_isotropic_is_dimension() {
    // one-hot rows +- in each axis: diagonal covariance with equal entries
    let d = 4;
    let mut rows = Vec::new();
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let mut r = vec![0.0; d];
            r[i] = sign;
            rows.extend(r);
        }
    }
    let pr = participation_ratio(&rows, 2 * d, d).unwrap();
    assert!((pr - 4.0).abs() < 1e-12, "pr {pr}");
}

#[test]
fn participation_ratio_rank_one_is_one() {
    let u = [0.6, -0.8];
    let mut rows = Vec::new();
    for k in [-2.0, -1.0, 1.0, 2.0] {
        rows.extend(u.iter().map(|v| v * k));
    }
    let pr = participation_ratio(&rows, 4, 2).unwrap();
    assert!((pr - 1.0).abs() < 1e-9, "pr {pr}");
}

#[test]
fn participation_ratio_eigenvalues_three_and_one() {
    // covariance diag(3, 1) built exactly from four symmetric points
    let a = 1.5; // 4a^2/3 = 3
    let b = 0.75f64.sqrt(); // 4b^2/3 = 1
    let rows = vec![a, b, a, -b, -a, b, -a, -b];
    let pr = participation_ratio(&rows, 4, 2).unwrap();
    assert!((pr - 1.6).abs() < 1e-12, "pr {pr}");
}

#[test]
fn participation_ratio_is_rotation_and_scale_invariant() {
    let mut rng = stream(50, StreamKind::PairSampling, 9);
    let (n, d) = (40, 3);
    let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let base = participation_ratio(&x, n, d).unwrap();

    let scaled: Vec<f64> = x.iter().map(|v| 7.3 * v).collect();
    let s = participation_ratio(&scaled, n, d).unwrap();
    assert!((base - s).abs() < 1e-9);

    // rotate in the (0,1) plane
    let theta: f64 = 0.9;
    let mut rotated = x.clone();
    for row in rotated.chunks_exact_mut(d) {
        let (a, b) = (row[0], row[1]);
        row[0] = theta.cos() * a - theta.sin() * b;
        row[1] = theta.sin() * a + theta.cos() * b;
    }
    let r = participation_ratio(&rotated, n, d).unwrap();
    assert!((base - r).abs() < 1e-9);
}

#[test]
fn identical_responses_are_degenerate() {
    let rows = vec![0.5; 6 * 3];
    match participation_ratio(&rows, 6, 3) {
        Err(Error::DegenerateCovariance) => {}
        other => panic!("expected DegenerateCovariance, got {other:?}"),
    }
}

fn toy_batch(b: usize, t: usize, d: usize, seed: u64) -> TrajectoryBatch {
    let mut rng = stream(seed, StreamKind::PairSampling, 0);
    let z: Vec<f64> = (0..b * t * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    TrajectoryBatch::new("final", b, t, d, z).unwrap()
}

#[test]
fn random_baseline_mean_is_near_zero_at_d128() {
    let z = toy_batch(4, 4, 128, 51);
    let labels = vec![0, 1, 2, 3];
    let kinds = vec![ScheduleKind::Translation; 4];
    let r = pairing_histograms(
        &z,
        &labels,
        &kinds,
        PairingCondition::RandomBaseline,
        None,
        7,
        10_000,
    )
    .unwrap();
    assert_eq!(r.n, 10_000);
    let se = r.std / (r.n as f64).sqrt();
    assert!(r.mean.abs() < 3.0 * se, "mean {} vs se {se}", r.mean);
    // random cosines in d=128 concentrate near 1/sqrt(128)
    assert!((r.std - 1.0 / (128.0f64).sqrt()).abs() < 0.01);
}

#[test]
fn histogram_means_are_seed_stable() {
    let z = toy_batch(6, 5, 64, 52);
    let labels = vec![0, 0, 1, 1, 2, 2];
    let kinds = vec![ScheduleKind::Translation; 6];
    let a = pairing_histograms(
        &z,
        &labels,
        &kinds,
        PairingCondition::SameDigitSameTransform,
        None,
        1,
        20_000,
    )
    .unwrap();
    let b = pairing_histograms(
        &z,
        &labels,
        &kinds,
        PairingCondition::SameDigitSameTransform,
        None,
        2,
        20_000,
    )
    .unwrap();
    assert!((a.mean - b.mean).abs() < 1e-2, "{} vs {}", a.mean, b.mean);
}

#[test]
fn self_pairs_are_excluded() {
    // two trajectories whose internal difference vectors are identical, but
    // orthogonal across trajectories: any self-pair would score cosine 1,
    // cross-pairs score 0
    let t = 4;
    let d = 4;
    let mut z = Vec::new();
    // trajectory 0 moves along e0, trajectory 1 along e1
    for bi in 0..2 {
        for ti in 0..t {
            let mut p = vec![0.0; d];
            p[bi] = ti as f64;
            z.extend(p);
        }
    }
    let batch = TrajectoryBatch::new("final", 2, t, d, z).unwrap();
    let r = pairing_histograms(
        &batch,
        &[3, 3],
        &[ScheduleKind::Rotation, ScheduleKind::Rotation],
        PairingCondition::SameDigitSameTransform,
        None,
        3,
        2_000,
    )
    .unwrap();
    assert!(r.mean.abs() < 1e-12);
    assert!(r.mean_abs < 1e-12);
}

#[test]
fn unsatisfiable_condition_is_empty_group() {
    let z = toy_batch(3, 4, 8, 53);
    // all same digit, all same transform: no diff-digit pair exists
    let labels = vec![5, 5, 5];
    let kinds = vec![ScheduleKind::Rescale; 3];
    match pairing_histograms(
        &z,
        &labels,
        &kinds,
        PairingCondition::DiffDigitSameTransform,
        None,
        4,
        100,
    ) {
        Err(Error::EmptyGroup(_)) => {}
        other => panic!("expected EmptyGroup, got {other:?}"),
    }
}

fn line_dataset(n: usize, t: usize) -> Vec<crate::datagen::SequenceSample> {
    use crate::datagen::{FrameTruth, ScheduleKind, SequenceSample};
    let mut rng = stream(54, StreamKind::DatasetSample, 3);
    (0..n)
        .map(|i| {
            let base: Vec<f64> = (0..16).map(|_| rng.gen_range(0.2..0.8)).collect();
            let vel: Vec<f64> = (0..16).map(|_| rng.gen_range(-0.02..0.02)).collect();
            let frames = (0..t)
                .map(|ti| {
                    Tensor::from_vec(
                        &[1, 4, 4],
                        base.iter()
                            .zip(&vel)
                            .map(|(b, v)| (b + ti as f64 * v).clamp(0.0, 1.0))
                            .collect(),
                    )
                    .unwrap()
                })
                .collect();
            SequenceSample {
                frames,
                truth: vec![
                    FrameTruth {
                        x: 0.0,
                        y: 0.0,
                        scale: 1.0,
                        angle: 0.0,
                        brightness: 1.0,
                        contrast: 1.0,
                        saturation: 1.0,
                        hue: 0.0,
                    };
                    t
                ],
                label: (i % 2) as u32,
                source_id: i as u32,
                kind: ScheduleKind::Translation,
            }
        })
        .collect()
}

#[test]
fn identity_conv_stage_matches_pixel_straightness() {
    let spec = NetworkSpec::new(
        vec![1, 4, 4],
        vec![LayerSpec::Conv2d {
            in_ch: 1,
            out_ch: 1,
            kernel: 1,
            stride: 1,
            pad: 0,
        }],
        vec![("final".into(), 0)],
    )
    .unwrap();
    let mut params = crate::netcore::ParamSet::zeros_like(&spec).unwrap();
    params.layers[0].as_mut().unwrap().weight.data_mut()[0] = 1.0;
    let ds = line_dataset(5, 5);
    let curve = straightness_curve(&spec, &params, &ds).unwrap();
    assert_eq!(curve.len(), 2);
    assert_eq!(curve[0].name, "pixels");
    assert!((curve[0].straightness - curve[1].straightness).abs() < 1e-12);
}

#[test]
fn untrained_network_curve_is_bounded_and_complete() {
    let spec = crate::netcore::NetworkSpec::encoder([1, 16, 16], 16).unwrap();
    let params = init_params(&spec, &mut stream(55, StreamKind::ParamInit, 0)).unwrap();
    let cfg = crate::datagen::DatagenConfig {
        count: 4,
        t: 5,
        canvas: 16,
        window: 10.0,
        out_size: 16,
        speed: (1.0, 2.0),
        ..crate::datagen::DatagenConfig::preset(crate::datagen::TrackStyle::Mnist, 4)
    };
    let ds = crate::datagen::generate_dataset(
        11,
        &cfg,
        &crate::datagen::SourcePool::Synthetic {
            size: 10,
            channels: 1,
        },
    )
    .unwrap();
    let curve = straightness_curve(&spec, &params, &ds).unwrap();
    assert_eq!(curve.len(), spec.layers.len() + 1);
    for stage in &curve {
        if stage.excluded < 4 {
            assert!(stage.straightness <= 1.0 + 1e-12);
            assert!(stage.straightness >= -1.0 - 1e-12);
        }
    }
}

#[test]
fn static_sequences_are_counted_as_excluded() {
    let spec = NetworkSpec::new(
        vec![1, 4, 4],
        vec![LayerSpec::Flatten],
        vec![("final".into(), 0)],
    )
    .unwrap();
    let params = crate::netcore::ParamSet::zeros_like(&spec).unwrap();
    let mut ds = line_dataset(3, 5);
    // freeze one sequence
    let f0 = ds[0].frames[0].clone();
    ds[0].frames = vec![f0; 5];
    let curve = straightness_curve(&spec, &params, &ds).unwrap();
    assert_eq!(curve[0].excluded, 1);
    assert!(curve[0].straightness.is_finite());
}

// --- attacks ---

fn flatten_16() -> (NetworkSpec, crate::netcore::ParamSet) {
    let spec = NetworkSpec::new(
        vec![1, 4, 4],
        vec![LayerSpec::Flatten],
        vec![("final".into(), 0)],
    )
    .unwrap();
    let params = crate::netcore::ParamSet::zeros_like(&spec).unwrap();
    (spec, params)
}

fn blob_items(n: usize, seed: u64) -> (Vec<(Tensor, u32)>, crate::probes::LinearProbe) {
    let mut rng = stream(seed, StreamKind::Attack, 0);
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    let mut items = Vec::new();
    for i in 0..n {
        let label = (i % 2) as u32;
        let mut pix = vec![0.5; 16];
        pix[0] = if label == 0 { 0.25 } else { 0.75 } + rng.gen_range(-0.05..0.05);
        pix[1] = if label == 0 { 0.7 } else { 0.3 } + rng.gen_range(-0.05..0.05);
        xs.extend(pix.iter().copied());
        labels.push(label);
        items.push((Tensor::from_vec(&[1, 4, 4], pix).unwrap(), label));
    }
    let probe = fit_linear_classifier(&xs, n, 16, &labels, &ProbeFitCfg::default()).unwrap();
    (items, probe)
}

#[test]
fn budget_zero_returns_input_bitwise() {
    let (spec, params) = flatten_16();
    let (items, probe) = blob_items(4, 60);
    let out = pgd_l2(
        &spec,
        &params,
        &probe,
        &items[0].0,
        items[0].1,
        &AttackConfig::with_budget(0.0),
    )
    .unwrap();
    let a: Vec<u64> = out.adversarial.data().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = items[0].0.data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn perturbation_respects_budget() {
    let (spec, params) = flatten_16();
    let (items, probe) = blob_items(6, 61);
    for budget in [0.1, 0.5, 2.0] {
        let mut cfg = AttackConfig::with_budget(budget);
        cfg.steps = 50;
        for (frame, label) in &items {
            let out = pgd_l2(&spec, &params, &probe, frame, *label, &cfg).unwrap();
            let delta: f64 = out
                .adversarial
                .data()
                .iter()
                .zip(frame.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(delta <= budget + 1e-6, "delta {delta} budget {budget}");
        }
    }
}

#[test]
fn pgd_matches_analytic_direction_on_linear_classifier() {
    // on a linear pixel classifier the optimal untargeted L2 direction is
    // the (constant) cross-entropy gradient direction
    let (spec, params) = flatten_16();
    let (items, probe) = blob_items(8, 62);
    let mut cfg = AttackConfig::with_budget(0.2);
    cfg.steps = 200;
    for (frame, label) in items.iter().take(4) {
        let out = pgd_l2(&spec, &params, &probe, frame, *label, &cfg).unwrap();
        let delta: Vec<f64> = out
            .adversarial
            .data()
            .iter()
            .zip(frame.data())
            .map(|(a, b)| a - b)
            .collect();
        // analytic direction at the clean input
        let z = crate::netcore::forward_only(&spec, &params, frame).unwrap();
        let (_, grad) = probe.loss_and_input_grad(z.data(), *label).unwrap();
        let dot: f64 = delta.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let nd: f64 = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ng: f64 = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cos = dot / (nd * ng);
        assert!(cos > 0.99, "cosine {cos}");
    }
}

#[test]
fn attack_never_raises_accuracy_and_zero_grad_is_flagged() {
    let (spec, params) = flatten_16();
    let (items, probe) = blob_items(20, 63);
    let clean: f64 = items
        .iter()
        .filter(|(f, l)| {
            let z = crate::netcore::forward_only(&spec, &params, f).unwrap();
            probe.predict(z.data()) == *l
        })
        .count() as f64
        / items.len() as f64;
    let mut cfg = AttackConfig::with_budget(0.5);
    cfg.steps = 30;
    let curve = adversarial_sweep(&spec, &params, &probe, &items, &[0.0, 0.5], &cfg).unwrap();
    assert_eq!(curve[0].1, clean);
    assert!(curve[1].1 <= clean);

    // a probe with zero weights has an exactly vanishing input gradient
    let dead = crate::probes::LinearProbe {
        weight: vec![0.0; 2 * 16],
        bias: vec![0.0; 2],
        classes: vec![0, 1],
        d: 16,
    };
    let out = pgd_l2(&spec, &params, &dead, &items[0].0, items[0].1, &cfg).unwrap();
    assert!(out.zero_gradient);
    let a: Vec<u64> = out.adversarial.data().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = items[0].0.data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn noise_sweep_clean_point_is_exact_and_saturates_to_chance() {
    let (spec, params) = flatten_16();
    let (items, probe) = blob_items(400, 64);
    let clean: f64 = items
        .iter()
        .filter(|(f, l)| {
            let z = crate::netcore::forward_only(&spec, &params, f).unwrap();
            probe.predict(z.data()) == *l
        })
        .count() as f64
        / items.len() as f64;
    let curve =
        gaussian_noise_sweep(&spec, &params, &probe, &items, &[0.0, 10.0], 123).unwrap();
    assert_eq!(curve[0].1, clean);
    assert!((curve[1].1 - 0.5).abs() <= 0.05, "saturated acc {}", curve[1].1);

    // pure function of the seed
    let again =
        gaussian_noise_sweep(&spec, &params, &probe, &items, &[0.0, 10.0], 123).unwrap();
    assert_eq!(curve, again);
}

#[test]
fn group_dimensionality_reports_groups_and_overall() {
    let z = toy_batch(8, 5, 16, 56);
    let labels = vec![0, 0, 1, 1, 0, 0, 1, 1];
    let kinds = vec![
        ScheduleKind::Translation,
        ScheduleKind::Translation,
        ScheduleKind::Translation,
        ScheduleKind::Translation,
        ScheduleKind::Rescale,
        ScheduleKind::Rescale,
        ScheduleKind::Rescale,
        ScheduleKind::Rescale,
    ];
    let gd = group_dimensionality(&z, &labels, &kinds).unwrap();
    assert_eq!(gd.groups.len(), 4);
    assert!(gd.overall >= 1.0 && gd.overall <= 16.0);
    assert!(gd.mean_within >= 1.0);
}
