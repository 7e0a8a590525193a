use std::time::Instant;

use straightlab::analysis::{
    adversarial_sweep, gaussian_noise_sweep, group_dimensionality, pairing_histograms,
    straightness_curve, AttackConfig, PairingCondition,
};
use straightlab::datagen::{generate_dataset, DatagenConfig, SourcePool, TrackStyle};
use straightlab::netcore::{init_params, NetworkSpec, ParamSet};
use straightlab::objectives::{ObjectiveConfig, ObjectiveKind};
use straightlab::probes::{
    evaluate_decoding, evaluate_prediction, fit_linear_classifier, split_dataset, Attribute,
    EvalCfg,
};
use straightlab::rng::{stream, StreamKind};
use straightlab::tensor::Tensor;
use straightlab::trainer::{embed_sequences, fit, measure_pixel_straightness, TrainConfig};

fn train(
    spec: &NetworkSpec,
    ds: &[straightlab::datagen::SequenceSample],
    objective: ObjectiveConfig,
    epochs: usize,
    seed: u64,
    tag: &str,
) -> ParamSet {
    let cfg = TrainConfig {
        epochs,
        batch_size: 32,
        lr: 0.05,
        momentum: 0.9,
        weight_decay: 1e-4,
        seed,
        objective,
        checkpoint_every: 0,
    };
    let t0 = Instant::now();
    let (params, hist) = fit(spec, ds, &cfg, None).unwrap();
    println!(
        "[{tag}] {} steps in {:.0}s; epoch straightness: {:?}",
        hist.steps.len(),
        t0.elapsed().as_secs_f64(),
        hist.epoch_straightness
            .iter()
            .map(|(e, m)| (*e, m.get("final").copied().unwrap_or(f64::NAN)))
            .collect::<Vec<_>>()
    );
    params
}

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(400);
    let epochs: usize = std::env::args().nth(2).and_then(|v| v.parse().ok()).unwrap_or(8);
    let seed = 11;

    let cfg = DatagenConfig::preset(TrackStyle::Mnist, n);
    let pool = SourcePool::Synthetic { size: 28, channels: 1 };
    let ds = generate_dataset(seed, &cfg, &pool).unwrap();
    let mut shuffled_cfg = cfg.clone();
    shuffled_cfg.shuffle_frames = true;
    let ds_shuffled = generate_dataset(seed, &shuffled_cfg, &pool).unwrap();

    let (_, test) = split_dataset(&ds, 5);
    println!("dataset: {} seqs ({} test)", ds.len(), test.len());
    let pixel = measure_pixel_straightness(&ds).unwrap();
    println!("pixel straightness (all): {pixel:.4}");

    let spec = NetworkSpec::encoder([1, 64, 64], 128).unwrap();
    let straight = train(&spec, &ds, ObjectiveConfig::straightening(), epochs, seed, "straight");
    let invar = train(&spec, &ds, ObjectiveConfig::invariance(), epochs, seed, "invariance");
    let shuffled = train(&spec, &ds_shuffled, ObjectiveConfig::straightening(), epochs, seed, "shuffled");
    let composed = train(
        &spec,
        &ds,
        ObjectiveConfig {
            straighten_weight: 1.0,
            ..ObjectiveConfig::composed()
        },
        epochs,
        seed,
        "composed",
    );

    // criterion 3: straightness gaps on the test split
    for (tag, params) in [("straight", &straight), ("invariance", &invar), ("composed", &composed)] {
        let test_owned: Vec<_> = test.iter().map(|s| (*s).clone()).collect();
        let curve = straightness_curve(&spec, params, &test_owned).unwrap();
        let px = curve[0].straightness;
        let fin = curve.last().unwrap().straightness;
        println!("[{tag}] test pixel {px:.4} final {fin:.4} gap {:+.4}", fin - px);
    }

    // criterion 4: decoding
    let eval = EvalCfg::default();
    for (tag, params, data) in [
        ("straight", &straight, &ds),
        ("invariance", &invar, &ds),
        ("shuffled", &shuffled, &ds),
    ] {
        let idr = evaluate_decoding(&spec, params, data, Attribute::Identity, &eval).unwrap();
        let xr = evaluate_decoding(&spec, params, data, Attribute::X, &eval).unwrap();
        let sr = evaluate_decoding(&spec, params, data, Attribute::Scale, &eval).unwrap();
        let ar = evaluate_decoding(&spec, params, data, Attribute::Angle, &eval).unwrap();
        println!(
            "[{tag}] identity acc {:.3} | x r2 {:.3} | scale r2 {:.3} | angle r2 {:.3}",
            idr.scalar("test_accuracy").unwrap(),
            xr.scalar("r2").unwrap(),
            sr.scalar("r2").unwrap(),
            ar.scalar("r2").unwrap()
        );
    }

    // criterion 5: prediction
    let pred = evaluate_prediction(&spec, &straight, &ds, Attribute::X, &eval).unwrap();
    println!(
        "[straight] prediction x: extr {:.3} ctrl {:.3} curr {:.3} smooth {:.3} bounce {:.3} (n_bounce {})",
        pred.scalar("error_extrapolated").unwrap(),
        pred.scalar("error_control").unwrap(),
        pred.scalar("error_current").unwrap(),
        pred.scalar("error_smooth").unwrap(),
        pred.scalar("error_bounce").unwrap(),
        pred.scalar("n_bounce").unwrap()
    );

    // criterion 6: geometry
    for (tag, params) in [("straight", &straight), ("invariance", &invar)] {
        let refs: Vec<&_> = ds.iter().collect();
        let z = embed_sequences(&spec, params, &refs, "final").unwrap();
        let labels: Vec<u32> = ds.iter().map(|s| s.label).collect();
        let kinds: Vec<_> = ds.iter().map(|s| s.kind).collect();
        let (train, _) = split_dataset(&ds, 5);
        let ztr = embed_sequences(&spec, params, &train, "final").unwrap();
        let ltr: Vec<u32> = train
            .iter()
            .flat_map(|s| std::iter::repeat(s.label).take(s.t()))
            .collect();
        let probe = fit_linear_classifier(ztr.z(), ltr.len(), ztr.d(), &ltr, &Default::default()).unwrap();
        let mut means = std::collections::BTreeMap::new();
        for c in PairingCondition::all() {
            let r = pairing_histograms(&z, &labels, &kinds, c, Some(&probe), seed, 30_000).unwrap();
            means.insert(c.name(), (r.mean, r.std, r.mean_abs));
        }
        let gd = group_dimensionality(&z, &labels, &kinds).unwrap();
        println!("[{tag}] pairing (mean, std, mean_abs): {means:#?}");
        println!("[{tag}] PR within {:.2} overall {:.2}", gd.mean_within, gd.overall);
    }

    // criterion 7: robustness
    let items: Vec<(Tensor, u32)> = test
        .iter()
        .take(24)
        .map(|s| (s.frames[s.t() / 2].clone(), s.label))
        .collect();
    for (tag, params) in [("straight", &straight), ("invariance", &invar), ("composed", &composed)] {
        let (train, _) = split_dataset(&ds, 5);
        let ztr = embed_sequences(&spec, params, &train, "final").unwrap();
        let ltr: Vec<u32> = train
            .iter()
            .flat_map(|s| std::iter::repeat(s.label).take(s.t()))
            .collect();
        let probe = fit_linear_classifier(ztr.z(), ltr.len(), ztr.d(), &ltr, &Default::default()).unwrap();
        let noise = gaussian_noise_sweep(
            &spec,
            params,
            &probe,
            &items,
            &[0.0, 0.02, 0.05, 0.1, 0.2, 0.4],
            seed,
        )
        .unwrap();
        let t0 = Instant::now();
        let base = AttackConfig { budget: 0.0, steps: 100, step_size: None, restarts: 1, seed };
        let pgd = adversarial_sweep(&spec, params, &probe, &items, &[0.0, 0.5, 1.0, 2.0], &base).unwrap();
        println!("[{tag}] noise {noise:?}");
        println!("[{tag}] pgd {pgd:?} ({:.0}s)", t0.elapsed().as_secs_f64());
    }

    let _ = init_params(&spec, &mut stream(0, StreamKind::ParamInit, 0));
}
