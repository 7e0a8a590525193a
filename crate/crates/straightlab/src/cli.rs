//! Command implementations behind the `straightlab` binary. Each command
//! reads validated inputs, runs one pipeline stage, and writes its outputs
//! plus a provenance record into the run directory.

use std::path::Path;

use crate::analysis::{
    adversarial_sweep, gaussian_noise_sweep, group_dimensionality, pairing_histograms,
    straightness_curve, AttackConfig, PairingCondition,
};
use crate::config::ExperimentConfig;
use crate::datagen::{generate_dataset, read_dataset, write_dataset, SequenceSample};
use crate::error::{Error, Result};
use crate::netcore::{load_checkpoint, save_checkpoint, NetworkSpec};
use crate::probes::{
    evaluate_decoding, evaluate_prediction, fit_linear_classifier, render_prediction_strip,
    split_dataset, train_pixel_decoder, Attribute, DecoderTrainCfg, LinearProbe,
};
use crate::report::{write_csv, write_image, MetricReport};
use crate::run::{code_version, file_sha256, short_hash, CommandRecord, RunDirectory};
use crate::tensor::Tensor;
use crate::trainer::{embed_sequences, fit, measure_pixel_straightness};

fn load_config(path: &Path, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn config_or_default(path: Option<&Path>, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => load_config(p, seed_override),
        None => {
            let mut cfg = ExperimentConfig::default();
            cfg.seed = seed_override.unwrap_or(0);
            Ok(cfg)
        }
    }
}

fn encoder_for(dataset: &[SequenceSample], d: usize) -> Result<NetworkSpec> {
    if dataset.is_empty() {
        return Err(Error::ConfigInvalid("dataset is empty".into()));
    }
    let shape = dataset[0].frame_shape();
    NetworkSpec::encoder([shape[0], shape[1], shape[2]], d)
}

pub fn cmd_gen(config: &Path, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let cfg = load_config(config, seed_override)?;
    let run = RunDirectory::create(out)?;
    let pool = cfg.source_pool()?;
    let samples = generate_dataset(cfg.seed, &cfg.to_datagen_config(), &pool)?;
    let dataset_path = run.path("dataset.strq");
    write_dataset(&samples, &dataset_path)?;
    run.write_resolved_config(&cfg.resolved_text())?;
    run.record(CommandRecord {
        command: "gen".into(),
        code_version: code_version(),
        seed: Some(cfg.seed),
        inputs: vec![(config.display().to_string(), file_sha256(config)?)],
        outputs: vec!["dataset.strq".into(), "resolved.cfg".into()],
    })?;
    println!(
        "gen: wrote {} sequences to {}",
        samples.len(),
        dataset_path.display()
    );
    Ok(())
}

pub fn cmd_train(
    config: &Path,
    out: &Path,
    dataset: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<()> {
    let cfg = load_config(config, seed_override)?;
    let run = RunDirectory::create(out)?;
    let dataset_path = dataset
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| run.path("dataset.strq"));
    let samples = read_dataset(&dataset_path)?;
    let spec = encoder_for(&samples, cfg.network.d)?;
    let train_cfg = cfg.to_train_config();
    let (_, history) = fit(&spec, &samples, &train_cfg, Some(run.root()))?;
    history.write_jsonl(&run.path("history.jsonl"))?;

    let mut summary = MetricReport::new("training");
    summary.set("steps", history.steps.len() as f64);
    summary.set("wall_secs", history.wall_secs);
    if let Some(last) = history.steps.last() {
        summary.set("final_total", last.total);
        summary.set("final_primary", last.primary);
    }
    if let Some((_, taps)) = history.epoch_straightness.last() {
        for (name, v) in taps {
            summary.set(format!("straightness_{name}"), *v);
        }
    }
    summary.write_json(&run.path("summary.json"))?;
    run.write_resolved_config(&cfg.resolved_text())?;
    run.record(CommandRecord {
        command: "train".into(),
        code_version: code_version(),
        seed: Some(cfg.seed),
        inputs: vec![
            (config.display().to_string(), file_sha256(config)?),
            (
                dataset_path.display().to_string(),
                file_sha256(&dataset_path)?,
            ),
        ],
        outputs: vec![
            "checkpoint_final.strw".into(),
            "history.jsonl".into(),
            "summary.json".into(),
        ],
    })?;
    println!(
        "train: {} steps in {:.1}s, checkpoint at {}",
        history.steps.len(),
        history.wall_secs,
        run.path("checkpoint_final.strw").display()
    );
    Ok(())
}

/// Hash tag identifying (checkpoint, inputs) in emitted CSV names.
fn provenance_tag(checkpoint: &Path, dataset: &Path) -> Result<String> {
    let c = file_sha256(checkpoint)?;
    let d = file_sha256(dataset)?;
    Ok(format!("{}_{}", short_hash(&c), short_hash(&d)))
}

pub fn cmd_straightness(checkpoint: &Path, dataset: &Path, out: &Path) -> Result<()> {
    let (spec, params) = load_checkpoint(checkpoint)?;
    let samples = read_dataset(dataset)?;
    let run = RunDirectory::create(out)?;
    let curve = straightness_curve(&spec, &params, &samples)?;
    let pixel = measure_pixel_straightness(&samples);

    let tag = provenance_tag(checkpoint, dataset)?;
    let rows: Vec<String> = curve
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{}",
                s.stage, s.name, s.dim, s.straightness, s.excluded
            )
        })
        .collect();
    let csv_name = format!("straightness_{tag}.csv");
    write_csv(
        &run.path(&csv_name),
        "stage,name,dim,straightness,excluded",
        &rows,
    )?;

    let mut report = MetricReport::new("straightness_curve");
    report.add_curve(
        "per_stage",
        curve
            .iter()
            .map(|s| (s.stage as f64, s.straightness))
            .collect(),
    );
    report.set("pixel", curve[0].straightness);
    report.set(
        "final",
        curve.last().map(|s| s.straightness).unwrap_or(f64::NAN),
    );
    if let Ok(p) = pixel {
        report.set("pixel_direct", p);
    }
    report.write_json(&run.path("straightness.json"))?;
    run.record(CommandRecord {
        command: "straightness".into(),
        code_version: code_version(),
        seed: None,
        inputs: vec![
            (checkpoint.display().to_string(), file_sha256(checkpoint)?),
            (dataset.display().to_string(), file_sha256(dataset)?),
        ],
        outputs: vec![csv_name, "straightness.json".into()],
    })?;
    for s in &curve {
        println!(
            "straightness stage {:>2} {:<10} dim {:>6}: {:+.4} ({} excluded)",
            s.stage, s.name, s.dim, s.straightness, s.excluded
        );
    }
    Ok(())
}

pub fn cmd_probe(
    checkpoint: &Path,
    dataset: &Path,
    attribute: &str,
    out: &Path,
    config: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<()> {
    let cfg = config_or_default(config, seed_override)?;
    let (spec, params) = load_checkpoint(checkpoint)?;
    let samples = read_dataset(dataset)?;
    let run = RunDirectory::create(out)?;
    let attr = Attribute::parse(attribute)?;
    let eval = cfg.to_eval_cfg();

    let decoding = evaluate_decoding(&spec, &params, &samples, attr, &eval)?;
    let mut outputs = Vec::new();
    let tag = provenance_tag(checkpoint, dataset)?;
    let dec_name = format!("probe_{}_decoding.json", attr.name());
    decoding.write_json(&run.path(&dec_name))?;
    outputs.push(dec_name);

    let rows: Vec<String> = decoding
        .scalars
        .iter()
        .map(|(k, v)| format!("{k},{v}"))
        .collect();
    let csv_name = format!("probe_{}_{tag}.csv", attr.name());
    write_csv(&run.path(&csv_name), "metric,value", &rows)?;
    outputs.push(csv_name);

    if attr != Attribute::Identity {
        let prediction = evaluate_prediction(&spec, &params, &samples, attr, &eval)?;
        let pred_name = format!("probe_{}_prediction.json", attr.name());
        prediction.write_json(&run.path(&pred_name))?;
        outputs.push(pred_name);
        for (k, v) in &prediction.scalars {
            println!("prediction {k} = {v:.5}");
        }
    }
    for (k, v) in &decoding.scalars {
        println!("decoding {k} = {v:.5}");
    }
    run.record(CommandRecord {
        command: format!("probe {}", attr.name()),
        code_version: code_version(),
        seed: Some(cfg.seed),
        inputs: vec![
            (checkpoint.display().to_string(), file_sha256(checkpoint)?),
            (dataset.display().to_string(), file_sha256(dataset)?),
        ],
        outputs,
    })?;
    Ok(())
}

/// Fit the identity probe on the train split at the final tap.
fn identity_probe(
    spec: &NetworkSpec,
    params: &crate::netcore::ParamSet,
    samples: &[SequenceSample],
    cfg: &ExperimentConfig,
) -> Result<LinearProbe> {
    let (train, _) = split_dataset(samples, cfg.evaluation.split_mod);
    let z = embed_sequences(spec, params, &train, "final")?;
    let labels: Vec<u32> = train
        .iter()
        .flat_map(|s| std::iter::repeat(s.label).take(s.t()))
        .collect();
    fit_linear_classifier(z.z(), labels.len(), z.d(), &labels, &cfg.to_eval_cfg().probe)
}

pub fn cmd_geometry(
    checkpoint: &Path,
    dataset: &Path,
    out: &Path,
    config: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<()> {
    let cfg = config_or_default(config, seed_override)?;
    let (spec, params) = load_checkpoint(checkpoint)?;
    let samples = read_dataset(dataset)?;
    let run = RunDirectory::create(out)?;
    let probe = identity_probe(&spec, &params, &samples, &cfg)?;

    let (_, test) = split_dataset(&samples, cfg.evaluation.split_mod);
    if test.is_empty() {
        return Err(Error::EmptyGroup("test split is empty".into()));
    }
    let z = embed_sequences(&spec, &params, &test, "final")?;
    let labels: Vec<u32> = test.iter().map(|s| s.label).collect();
    let kinds: Vec<_> = test.iter().map(|s| s.kind).collect();

    let tag = provenance_tag(checkpoint, dataset)?;
    let mut report = MetricReport::new("geometry");
    let mut outputs = vec!["geometry.json".to_string()];
    for condition in PairingCondition::all() {
        match pairing_histograms(
            &z,
            &labels,
            &kinds,
            condition,
            Some(&probe),
            cfg.seed,
            cfg.evaluation.pair_cap,
        ) {
            Ok(r) => {
                report.set(format!("{}_mean", r.condition), r.mean);
                report.set(format!("{}_std", r.condition), r.std);
                report.set(format!("{}_mean_abs", r.condition), r.mean_abs);
                report.set(format!("{}_n", r.condition), r.n as f64);
                let csv_name = format!("geometry_{}_{tag}.csv", r.condition);
                std::fs::write(run.path(&csv_name), r.histogram.to_csv())?;
                report.add_histogram(r.condition.clone(), r.histogram);
                outputs.push(csv_name);
            }
            Err(Error::EmptyGroup(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let dims = group_dimensionality(&z, &labels, &kinds)?;
    report.set("pr_mean_within", dims.mean_within);
    report.set("pr_overall", dims.overall);
    report.write_json(&run.path("geometry.json"))?;
    run.record(CommandRecord {
        command: "geometry".into(),
        code_version: code_version(),
        seed: Some(cfg.seed),
        inputs: vec![
            (checkpoint.display().to_string(), file_sha256(checkpoint)?),
            (dataset.display().to_string(), file_sha256(dataset)?),
        ],
        outputs,
    })?;
    println!(
        "geometry: within-class PR {:.3}, overall PR {:.3}",
        dims.mean_within, dims.overall
    );
    Ok(())
}

/// One attack/noise item per test sequence: the middle frame and the label.
fn robustness_items(test: &[&SequenceSample], cap: usize) -> Vec<(Tensor, u32)> {
    test.iter()
        .take(cap)
        .map(|s| (s.frames[s.t() / 2].clone(), s.label))
        .collect()
}

pub fn cmd_robust(
    checkpoint: &Path,
    dataset: &Path,
    kind: &str,
    out: &Path,
    config: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<()> {
    let cfg = config_or_default(config, seed_override)?;
    let (spec, params) = load_checkpoint(checkpoint)?;
    let samples = read_dataset(dataset)?;
    let run = RunDirectory::create(out)?;
    let probe = identity_probe(&spec, &params, &samples, &cfg)?;
    let (_, test) = split_dataset(&samples, cfg.evaluation.split_mod);
    let tag = provenance_tag(checkpoint, dataset)?;

    let (curve, name) = match kind {
        "noise" => {
            let items = robustness_items(&test, 256);
            (
                gaussian_noise_sweep(
                    &spec,
                    &params,
                    &probe,
                    &items,
                    &cfg.evaluation.noise_sigmas,
                    cfg.seed,
                )?,
                "noise",
            )
        }
        "pgd" => {
            let items = robustness_items(&test, cfg.evaluation.attack_items);
            let base = AttackConfig {
                budget: 0.0,
                steps: cfg.evaluation.pgd_steps,
                step_size: None,
                restarts: 1,
                seed: cfg.seed,
            };
            (
                adversarial_sweep(
                    &spec,
                    &params,
                    &probe,
                    &items,
                    &cfg.evaluation.pgd_budgets,
                    &base,
                )?,
                "pgd",
            )
        }
        other => {
            return Err(Error::ConfigInvalid(format!(
                "unknown robustness kind `{other}` (expected noise|pgd)"
            )))
        }
    };

    let rows: Vec<String> = curve.iter().map(|(x, y)| format!("{x},{y}")).collect();
    let csv_name = format!("robust_{name}_{tag}.csv");
    write_csv(
        &run.path(&csv_name),
        if name == "noise" {
            "sigma,accuracy"
        } else {
            "budget,accuracy"
        },
        &rows,
    )?;
    let mut report = MetricReport::new(format!("robust_{name}"));
    report.add_curve("accuracy", curve.clone());
    report.write_json(&run.path(&format!("robust_{name}.json")))?;
    run.record(CommandRecord {
        command: format!("robust {name}"),
        code_version: code_version(),
        seed: Some(cfg.seed),
        inputs: vec![
            (checkpoint.display().to_string(), file_sha256(checkpoint)?),
            (dataset.display().to_string(), file_sha256(dataset)?),
        ],
        outputs: vec![csv_name, format!("robust_{name}.json")],
    })?;
    for (x, y) in &curve {
        println!("robust {name} {x} -> accuracy {y:.4}");
    }
    Ok(())
}

pub fn cmd_train_decoder(
    checkpoint: &Path,
    dataset: &Path,
    out: &Path,
    config: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<()> {
    let cfg = config_or_default(config, seed_override)?;
    let (spec, params) = load_checkpoint(checkpoint)?;
    let samples = read_dataset(dataset)?;
    let run = RunDirectory::create(out)?;
    let (train, _) = split_dataset(&samples, cfg.evaluation.split_mod);
    let train_owned: Vec<SequenceSample> = train.into_iter().cloned().collect();
    let shape = samples[0].frame_shape();
    let dec_spec = NetworkSpec::decoder(spec.output_dim(), [shape[0], shape[1], shape[2]])?;
    let dec_cfg = DecoderTrainCfg {
        epochs: cfg.evaluation.decoder_epochs,
        lr: cfg.evaluation.decoder_lr,
        seed: cfg.seed,
        ..DecoderTrainCfg::default()
    };
    let (dec_params, curve) =
        train_pixel_decoder(&spec, &params, &train_owned, &dec_spec, &dec_cfg)?;
    save_checkpoint(&dec_spec, &dec_params, &run.path("decoder.strw"))?;
    let rows: Vec<String> = curve
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{i},{l}"))
        .collect();
    write_csv(&run.path("decoder_loss.csv"), "step,mse", &rows)?;
    run.record(CommandRecord {
        command: "train-decoder".into(),
        code_version: code_version(),
        seed: Some(cfg.seed),
        inputs: vec![
            (checkpoint.display().to_string(), file_sha256(checkpoint)?),
            (dataset.display().to_string(), file_sha256(dataset)?),
        ],
        outputs: vec!["decoder.strw".into(), "decoder_loss.csv".into()],
    })?;
    println!(
        "train-decoder: final reconstruction mse {:.6}",
        curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn cmd_decode_strip(
    checkpoint: &Path,
    decoder: &Path,
    dataset: &Path,
    sample_index: usize,
    out: &Path,
) -> Result<()> {
    let (spec, params) = load_checkpoint(checkpoint)?;
    let (dec_spec, dec_params) = load_checkpoint(decoder)?;
    let samples = read_dataset(dataset)?;
    let run = RunDirectory::create(out)?;
    let sample = samples.get(sample_index).ok_or(Error::IndexOutOfRange {
        index: sample_index,
        len: samples.len(),
    })?;
    let strip = render_prediction_strip(&spec, &params, &dec_spec, &dec_params, sample, "final")?;
    let ext = if strip.shape()[0] == 3 { "ppm" } else { "pgm" };
    let name = format!("strip_{sample_index}.{ext}");
    write_image(&run.path(&name), &strip)?;
    run.record(CommandRecord {
        command: format!("decode-strip {sample_index}"),
        code_version: code_version(),
        seed: None,
        inputs: vec![
            (checkpoint.display().to_string(), file_sha256(checkpoint)?),
            (decoder.display().to_string(), file_sha256(decoder)?),
            (dataset.display().to_string(), file_sha256(dataset)?),
        ],
        outputs: vec![name.clone()],
    })?;
    println!("decode-strip: wrote {}", run.path(&name).display());
    Ok(())
}

/// Paired report over two run directories: for every JSON metric file both
/// runs share, emit (a, b, a-b) per scalar.
pub fn cmd_compare(run_a: &Path, run_b: &Path, out: &Path) -> Result<()> {
    let run = RunDirectory::create(out)?;
    let candidates = [
        "straightness.json",
        "summary.json",
        "geometry.json",
        "robust_noise.json",
        "robust_pgd.json",
        "probe_identity_decoding.json",
        "probe_x_decoding.json",
        "probe_y_decoding.json",
        "probe_scale_decoding.json",
        "probe_angle_decoding.json",
        "probe_x_prediction.json",
        "probe_y_prediction.json",
        "probe_scale_prediction.json",
        "probe_angle_prediction.json",
    ];
    let mut rows = Vec::new();
    let mut compared = 0;
    for name in candidates {
        let pa = run_a.join(name);
        let pb = run_b.join(name);
        if !(pa.exists() && pb.exists()) {
            continue;
        }
        let a = MetricReport::read_json(&pa)?;
        let b = MetricReport::read_json(&pb)?;
        compared += 1;
        for (key, va) in &a.scalars {
            if let Some(vb) = b.scalars.get(key) {
                rows.push(format!("{name},{key},{va},{vb},{}", va - vb));
            }
        }
        // curves compare pointwise when the grids match
        for (ck, ca) in &a.curves {
            if let Some(cb) = b.curves.get(ck) {
                for ((xa, ya), (xb, yb)) in ca.iter().zip(cb) {
                    if xa == xb {
                        rows.push(format!("{name},{ck}@{xa},{ya},{yb},{}", ya - yb));
                    }
                }
            }
        }
    }
    if compared == 0 {
        return Err(Error::EmptyGroup(
            "the two run directories share no metric files".into(),
        ));
    }
    write_csv(&run.path("compare.csv"), "file,metric,a,b,delta", &rows)?;
    run.record(CommandRecord {
        command: "compare".into(),
        code_version: code_version(),
        seed: None,
        inputs: vec![
            (run_a.display().to_string(), String::new()),
            (run_b.display().to_string(), String::new()),
        ],
        outputs: vec!["compare.csv".into()],
    })?;
    println!("compare: {} metric rows from {compared} shared files", rows.len());
    Ok(())
}
