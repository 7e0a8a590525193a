//! Frozen-representation evaluation: linear identity probes, kernel ridge
//! attribute regression, and extrapolation-based next-frame prediction.

mod decoder;

pub use decoder::{decode, render_prediction_strip, train_pixel_decoder, DecoderTrainCfg};

use std::collections::BTreeSet;

use nalgebra::{Cholesky, DMatrix};

use crate::datagen::{ScheduleKind, SequenceSample};
use crate::error::{Error, Result};
use crate::netcore::{NetworkSpec, ParamSet};
use crate::report::MetricReport;
use crate::rng::{stream, StreamKind};
use crate::trainer::embed_sequences;

/// Multinomial logistic probe on frozen embeddings. The weight matrix is
/// `[classes, d]`; class order matches `classes`.
#[derive(Clone, Debug)]
pub struct LinearProbe {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub classes: Vec<u32>,
    pub d: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ProbeFitCfg {
    pub iters: usize,
    pub lr: f64,
    pub l2: f64,
    pub momentum: f64,
    /// Stop early once the gradient norm falls below this.
    pub tol: f64,
}

impl Default for ProbeFitCfg {
    fn default() -> Self {
        ProbeFitCfg {
            iters: 600,
            lr: 2.0,
            l2: 1e-4,
            momentum: 0.9,
            tol: 1e-7,
        }
    }
}

impl LinearProbe {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let k = self.n_classes();
        let mut out = vec![0.0; k];
        for (ki, o) in out.iter_mut().enumerate() {
            let row = &self.weight[ki * self.d..(ki + 1) * self.d];
            *o = self.bias[ki] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> u32 {
        let logits = self.logits(x);
        let mut best = 0;
        for i in 1..logits.len() {
            if logits[i] > logits[best] {
                best = i;
            }
        }
        self.classes[best]
    }

    pub fn accuracy(&self, xs: &[f64], labels: &[u32]) -> f64 {
        let n = labels.len();
        let hits = xs
            .chunks_exact(self.d)
            .zip(labels)
            .filter(|(x, l)| self.predict(x) == **l)
            .count();
        hits as f64 / n as f64
    }

    /// Cross-entropy of the true class and its gradient with respect to the
    /// input embedding. This is the surface adversarial attacks climb.
    pub fn loss_and_input_grad(&self, x: &[f64], label: u32) -> Result<(f64, Vec<f64>)> {
        let class_idx = self
            .classes
            .iter()
            .position(|c| *c == label)
            .ok_or_else(|| Error::ConfigInvalid(format!("label {label} unknown to the probe")))?;
        let logits = self.logits(x);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let loss = z.ln() + max - logits[class_idx];
        let mut grad = vec![0.0; self.d];
        for (ki, e) in exps.iter().enumerate() {
            let coeff = e / z - if ki == class_idx { 1.0 } else { 0.0 };
            let row = &self.weight[ki * self.d..(ki + 1) * self.d];
            for (g, w) in grad.iter_mut().zip(row) {
                *g += coeff * w;
            }
        }
        Ok((loss, grad))
    }
}

/// Fit by full-batch gradient descent with momentum on standardized
/// features; the standardization is folded into the returned weights, so the
/// probe is a plain affine map of raw embeddings. Zero initialization makes
/// the fit fully deterministic.
pub fn fit_linear_classifier(
    x: &[f64],
    n: usize,
    d: usize,
    labels: &[u32],
    cfg: &ProbeFitCfg,
) -> Result<LinearProbe> {
    assert_eq!(x.len(), n * d);
    assert_eq!(labels.len(), n);
    let classes: Vec<u32> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let k = classes.len();
    let class_of: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class set"))
        .collect();

    // standardize features
    let mut mean = vec![0.0; d];
    for row in x.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut std = vec![0.0; d];
    for row in x.chunks_exact(d) {
        for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
            let c = v - m;
            *s += c * c;
        }
    }
    for s in &mut std {
        *s = (*s / n as f64 + 1e-8).sqrt();
    }
    let mut xs = vec![0.0; n * d];
    for (row, out) in x.chunks_exact(d).zip(xs.chunks_exact_mut(d)) {
        for j in 0..d {
            out[j] = (row[j] - mean[j]) / std[j];
        }
    }

    let mut w = vec![0.0; k * d];
    let mut b = vec![0.0; k];
    let mut vw = vec![0.0; k * d];
    let mut vb = vec![0.0; k];
    let lr = cfg.lr / d as f64;

    let mut probs = vec![0.0; k];
    let mut gw = vec![0.0; k * d];
    let mut gb = vec![0.0; k];
    for _ in 0..cfg.iters {
        gw.iter_mut().for_each(|v| *v = 0.0);
        gb.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in xs.chunks_exact(d).enumerate() {
            for (ki, p) in probs.iter_mut().enumerate() {
                let wrow = &w[ki * d..(ki + 1) * d];
                *p = b[ki] + wrow.iter().zip(row).map(|(a, c)| a * c).sum::<f64>();
            }
            let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for p in probs.iter_mut() {
                *p = (*p - max).exp();
                z += *p;
            }
            for (ki, p) in probs.iter_mut().enumerate() {
                let coeff = (*p / z - if ki == class_of[i] { 1.0 } else { 0.0 }) / n as f64;
                gb[ki] += coeff;
                let grow = &mut gw[ki * d..(ki + 1) * d];
                for (g, c) in grow.iter_mut().zip(row) {
                    *g += coeff * c;
                }
            }
        }
        let mut gnorm = 0.0;
        for (j, g) in gw.iter_mut().enumerate() {
            *g += cfg.l2 * w[j];
            gnorm += *g * *g;
        }
        for g in gb.iter() {
            gnorm += g * g;
        }
        for j in 0..k * d {
            vw[j] = cfg.momentum * vw[j] + gw[j];
            w[j] -= lr * vw[j];
        }
        for j in 0..k {
            vb[j] = cfg.momentum * vb[j] + gb[j];
            b[j] -= lr * vb[j];
        }
        if gnorm.sqrt() < cfg.tol {
            break;
        }
    }

    // fold standardization back into the affine map
    let mut weight = vec![0.0; k * d];
    let mut bias = vec![0.0; k];
    for ki in 0..k {
        let mut shift = 0.0;
        for j in 0..d {
            let wj = w[ki * d + j] / std[j];
            weight[ki * d + j] = wj;
            shift += wj * mean[j];
        }
        bias[ki] = b[ki] - shift;
    }
    Ok(LinearProbe {
        weight,
        bias,
        classes,
        d,
    })
}

/// RBF kernel ridge regressor: closed-form dual solution on a support set.
#[derive(Clone, Debug)]
pub struct KernelRegressor {
    pub support: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub bandwidth: f64,
    pub ridge: f64,
    pub d: usize,
    pub targets: usize,
    pub m: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct KernelFitCfg {
    /// None selects the median pairwise distance heuristic.
    pub bandwidth: Option<f64>,
    pub ridge: f64,
    pub support_cap: usize,
    pub seed: u64,
}

impl Default for KernelFitCfg {
    fn default() -> Self {
        KernelFitCfg {
            bandwidth: None,
            ridge: 1e-3,
            support_cap: 2000,
            seed: 0,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KernelRegressor {
    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        (-sq_dist(a, b) / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }

    pub fn predict(&self, query: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.targets];
        for i in 0..self.m {
            let s = &self.support[i * self.d..(i + 1) * self.d];
            let kv = self.kernel(query, s);
            let row = &self.coeffs[i * self.targets..(i + 1) * self.targets];
            for (o, c) in out.iter_mut().zip(row) {
                *o += kv * c;
            }
        }
        out
    }
}

/// Closed-form kernel ridge fit: `(K + ridge I) A = Y` on a support subsample
/// capped at `support_cap` points. An indefinite system is reported as
/// `IllConditioned` rather than silently re-regularized.
pub fn fit_rbf_regressor(
    x: &[f64],
    n: usize,
    d: usize,
    y: &[f64],
    targets: usize,
    cfg: &KernelFitCfg,
) -> Result<KernelRegressor> {
    assert_eq!(x.len(), n * d);
    assert_eq!(y.len(), n * targets);
    if n < 2 {
        return Err(Error::ShapeMismatch("kernel fit needs at least 2 points".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::ShapeMismatch("kernel targets must be finite".into()));
    }

    // support subsample, sorted for a deterministic Gram layout
    let support_idx: Vec<usize> = if n <= cfg.support_cap {
        (0..n).collect()
    } else {
        use rand::seq::SliceRandom;
        let mut rng = stream(cfg.seed, StreamKind::ProbeFit, 0);
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let mut take: Vec<usize> = all.into_iter().take(cfg.support_cap).collect();
        take.sort_unstable();
        take
    };
    let m = support_idx.len();
    let mut support = Vec::with_capacity(m * d);
    for &i in &support_idx {
        support.extend_from_slice(&x[i * d..(i + 1) * d]);
    }

    let bandwidth = match cfg.bandwidth {
        Some(bw) => {
            if !(bw > 0.0) {
                return Err(Error::ConfigInvalid(format!("bandwidth {bw} must be > 0")));
            }
            bw
        }
        None => {
            // median pairwise distance over a deterministic subsample
            let probe = m.min(512);
            let mut dists = Vec::with_capacity(probe * (probe - 1) / 2);
            let stride = m.div_ceil(probe).max(1);
            let picks: Vec<usize> = (0..m).step_by(stride).collect();
            for (ai, &i) in picks.iter().enumerate() {
                for &j in picks.iter().skip(ai + 1) {
                    dists.push(
                        sq_dist(&support[i * d..(i + 1) * d], &support[j * d..(j + 1) * d])
                            .sqrt(),
                    );
                }
            }
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = dists.get(dists.len() / 2).copied().unwrap_or(0.0);
            if median > 0.0 {
                median
            } else {
                1.0
            }
        }
    };

    let mut k = DMatrix::<f64>::zeros(m, m);
    let two_bw_sq = 2.0 * bandwidth * bandwidth;
    for i in 0..m {
        for j in i..m {
            let v = (-sq_dist(&support[i * d..(i + 1) * d], &support[j * d..(j + 1) * d])
                / two_bw_sq)
                .exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += cfg.ridge;
    }
    let chol = Cholesky::new(k).ok_or(Error::IllConditioned { ridge: cfg.ridge })?;

    let mut rhs = DMatrix::<f64>::zeros(m, targets);
    for (row, &i) in support_idx.iter().enumerate() {
        for t in 0..targets {
            rhs[(row, t)] = y[i * targets + t];
        }
    }
    let sol = chol.solve(&rhs);
    let mut coeffs = vec![0.0; m * targets];
    for i in 0..m {
        for t in 0..targets {
            coeffs[i * targets + t] = sol[(i, t)];
        }
    }
    Ok(KernelRegressor {
        support,
        coeffs,
        bandwidth,
        ridge: cfg.ridge,
        d,
        targets,
        m,
    })
}

/// Decodable attributes. Continuous attributes are only carried by the
/// schedule kind that varies them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attribute {
    Identity,
    X,
    Y,
    Scale,
    Angle,
}

impl Attribute {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => Attribute::Identity,
            "x" => Attribute::X,
            "y" => Attribute::Y,
            "scale" => Attribute::Scale,
            "angle" => Attribute::Angle,
            other => {
                return Err(Error::ConfigInvalid(format!(
                    "unknown attribute `{other}` (expected identity|x|y|scale|angle)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Attribute::Identity => "identity",
            Attribute::X => "x",
            Attribute::Y => "y",
            Attribute::Scale => "scale",
            Attribute::Angle => "angle",
        }
    }

    /// The schedule kind that actually varies this attribute; None = all.
    fn carrier(&self) -> Option<ScheduleKind> {
        match self {
            Attribute::Identity => None,
            Attribute::X | Attribute::Y => Some(ScheduleKind::Translation),
            Attribute::Scale => Some(ScheduleKind::Rescale),
            Attribute::Angle => Some(ScheduleKind::Rotation),
        }
    }

    /// Regression target for one frame. Angle maps to (sin, cos) to avoid the
    /// wraparound discontinuity.
    fn target(&self, truth: &crate::datagen::FrameTruth) -> Vec<f64> {
        match self {
            Attribute::Identity => unreachable!("identity uses the classifier path"),
            Attribute::X => vec![truth.x],
            Attribute::Y => vec![truth.y],
            Attribute::Scale => vec![truth.scale],
            Attribute::Angle => {
                let r = truth.angle.to_radians();
                vec![r.sin(), r.cos()]
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalCfg {
    /// Sequences whose source id satisfies `source_id % split_mod == 0` form
    /// the test split; train/test are disjoint at the source-image level.
    pub split_mod: u32,
    pub tap: String,
    pub probe: ProbeFitCfg,
    pub kernel: KernelFitCfg,
}

impl Default for EvalCfg {
    fn default() -> Self {
        EvalCfg {
            split_mod: 5,
            tap: "final".into(),
            probe: ProbeFitCfg::default(),
            kernel: KernelFitCfg::default(),
        }
    }
}

pub fn is_test_sample(sample: &SequenceSample, split_mod: u32) -> bool {
    sample.source_id % split_mod == 0
}

/// Split a dataset into (train, test) references at the source-image level.
pub fn split_dataset(
    dataset: &[SequenceSample],
    split_mod: u32,
) -> (Vec<&SequenceSample>, Vec<&SequenceSample>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in dataset {
        if is_test_sample(s, split_mod) {
            test.push(s);
        } else {
            train.push(s);
        }
    }
    (train, test)
}

fn filter_by_attribute<'a>(
    samples: &[&'a SequenceSample],
    attribute: Attribute,
) -> Result<Vec<&'a SequenceSample>> {
    let filtered: Vec<&SequenceSample> = match attribute.carrier() {
        None => samples.to_vec(),
        Some(kind) => samples.iter().copied().filter(|s| s.kind == kind).collect(),
    };
    if filtered.is_empty() {
        return Err(Error::AttributeMissing(attribute.name().into()));
    }
    Ok(filtered)
}

/// Per-frame embedding matrix plus per-frame labels and truth rows.
fn frame_table(
    spec: &NetworkSpec,
    params: &ParamSet,
    samples: &[&SequenceSample],
    tap: &str,
) -> Result<(Vec<f64>, usize, Vec<u32>, Vec<crate::datagen::FrameTruth>)> {
    let z = embed_sequences(spec, params, samples, tap)?;
    let d = z.d();
    let mut labels = Vec::with_capacity(samples.len() * z.t());
    let mut truths = Vec::with_capacity(samples.len() * z.t());
    for s in samples {
        for t in 0..s.t() {
            labels.push(s.label);
            truths.push(s.truth[t]);
        }
    }
    Ok((z.z().to_vec(), d, labels, truths))
}

pub fn r_squared(pred: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let mean: f64 = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    (pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Angular error in degrees between (sin, cos) encodings.
fn angular_error_deg(pred: &[f64], truth: &[f64]) -> f64 {
    let pa = pred[0].atan2(pred[1]);
    let ta = truth[0].atan2(truth[1]);
    let mut diff = (pa - ta).to_degrees();
    while diff > 180.0 {
        diff -= 360.0;
    }
    while diff < -180.0 {
        diff += 360.0;
    }
    diff.abs()
}

/// Decode an attribute from frozen embeddings at the configured tap.
/// Identity reports train/test classification accuracy; continuous
/// attributes report per-dimension R^2 (averaged) and RMSE.
pub fn evaluate_decoding(
    spec: &NetworkSpec,
    params: &ParamSet,
    dataset: &[SequenceSample],
    attribute: Attribute,
    cfg: &EvalCfg,
) -> Result<MetricReport> {
    let (train, test) = split_dataset(dataset, cfg.split_mod);
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyGroup(
            "both splits need at least one sequence".into(),
        ));
    }
    let train = filter_by_attribute(&train, attribute)?;
    let test = filter_by_attribute(&test, attribute)?;
    let (xtr, d, ltr, ttr) = frame_table(spec, params, &train, &cfg.tap)?;
    let (xte, _, lte, tte) = frame_table(spec, params, &test, &cfg.tap)?;

    let mut report = MetricReport::new(format!("decoding/{}", attribute.name()));
    report.set("n_train_frames", ltr.len() as f64);
    report.set("n_test_frames", lte.len() as f64);

    match attribute {
        Attribute::Identity => {
            let probe = fit_linear_classifier(&xtr, ltr.len(), d, &ltr, &cfg.probe)?;
            report.set("train_accuracy", probe.accuracy(&xtr, &ltr));
            report.set("test_accuracy", probe.accuracy(&xte, &lte));
            report.set("chance", 1.0 / probe.n_classes() as f64);
        }
        _ => {
            let targets: Vec<f64> = ttr.iter().flat_map(|t| attribute.target(t)).collect();
            let p = targets.len() / ttr.len();
            let reg = fit_rbf_regressor(&xtr, ltr.len(), d, &targets, p, &cfg.kernel)?;
            let truth: Vec<f64> = tte.iter().flat_map(|t| attribute.target(t)).collect();
            let mut pred = Vec::with_capacity(truth.len());
            for row in xte.chunks_exact(d) {
                pred.extend(reg.predict(row));
            }
            // per-dimension R^2, averaged
            let mut r2 = 0.0;
            for dim in 0..p {
                let pd: Vec<f64> = pred.iter().skip(dim).step_by(p).copied().collect();
                let td: Vec<f64> = truth.iter().skip(dim).step_by(p).copied().collect();
                r2 += r_squared(&pd, &td) / p as f64;
            }
            report.set("r2", r2);
            report.set("rmse", rmse(&pred, &truth));
            if attribute == Attribute::Angle {
                let mut ang = 0.0;
                for (pr, tr) in pred.chunks_exact(2).zip(truth.chunks_exact(2)) {
                    ang += angular_error_deg(pr, tr);
                }
                report.set("angular_error_deg", ang / (truth.len() / 2) as f64);
            }
        }
    }
    Ok(report)
}

/// Next-frame prediction: decode the attribute at frame `t` from the
/// linear extrapolation of the embeddings at `t-2` and `t-1`, against a
/// control that reuses the previous frame's embedding. Errors are split
/// into smooth frames and bounce/reversal frames.
pub fn evaluate_prediction(
    spec: &NetworkSpec,
    params: &ParamSet,
    dataset: &[SequenceSample],
    attribute: Attribute,
    cfg: &EvalCfg,
) -> Result<MetricReport> {
    if attribute == Attribute::Identity {
        return Err(Error::ConfigInvalid(
            "identity is constant over a sequence; prediction is undefined".into(),
        ));
    }
    let (train, test) = split_dataset(dataset, cfg.split_mod);
    let train = filter_by_attribute(&train, attribute)?;
    let test = filter_by_attribute(&test, attribute)?;
    let (xtr, d, ltr, ttr) = frame_table(spec, params, &train, &cfg.tap)?;
    let targets: Vec<f64> = ttr.iter().flat_map(|t| attribute.target(t)).collect();
    let p = targets.len() / ttr.len();
    let reg = fit_rbf_regressor(&xtr, ltr.len(), d, &targets, p, &cfg.kernel)?;

    let mut err_extrapolated = Vec::new();
    let mut err_control = Vec::new();
    let mut err_current = Vec::new();
    let mut err_smooth = Vec::new();
    let mut err_bounce = Vec::new();
    let mut err_control_smooth = Vec::new();

    for s in &test {
        let z = embed_sequences(spec, params, &[s], &cfg.tap)?;
        let bounce = bounce_frames(s);
        for t in 2..s.t() {
            let truth = attribute.target(&s.truth[t]);
            let predicted_embedding =
                crate::objectives::extrapolate(z.frame(0, t - 2), z.frame(0, t - 1))?;
            let pred = reg.predict(&predicted_embedding);
            let control = reg.predict(z.frame(0, t - 1));
            let current = reg.predict(z.frame(0, t));
            let e_pred = rmse(&pred, &truth);
            let e_ctrl = rmse(&control, &truth);
            err_extrapolated.push(e_pred);
            err_control.push(e_ctrl);
            err_current.push(rmse(&current, &truth));
            if bounce[t] {
                err_bounce.push(e_pred);
            } else {
                err_smooth.push(e_pred);
                err_control_smooth.push(e_ctrl);
            }
        }
    }

    let mean = |v: &[f64]| -> f64 {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let mut report = MetricReport::new(format!("prediction/{}", attribute.name()));
    report.set("error_extrapolated", mean(&err_extrapolated));
    report.set("error_control", mean(&err_control));
    report.set("error_current", mean(&err_current));
    report.set("error_smooth", mean(&err_smooth));
    report.set("error_bounce", mean(&err_bounce));
    report.set("error_control_smooth", mean(&err_control_smooth));
    report.set("n_smooth", err_smooth.len() as f64);
    report.set("n_bounce", err_bounce.len() as f64);
    Ok(report)
}

/// Frames where the geometric parameter track reversed direction between
/// the two steps feeding a prediction: the motion from t-2 to t-1 no longer
/// extrapolates to t.
pub fn bounce_frames(s: &SequenceSample) -> Vec<bool> {
    let t = s.t();
    let mut mask = vec![false; t];
    let track: Vec<Vec<f64>> = match s.kind {
        ScheduleKind::Translation => s.truth.iter().map(|tr| vec![tr.x, tr.y]).collect(),
        ScheduleKind::Rescale => s.truth.iter().map(|tr| vec![tr.scale]).collect(),
        ScheduleKind::Rotation => return mask,
    };
    for ti in 2..t {
        for dim in 0..track[0].len() {
            let d1 = track[ti - 1][dim] - track[ti - 2][dim];
            let d2 = track[ti][dim] - track[ti - 1][dim];
            if d1 * d2 < 0.0 {
                mask[ti] = true;
            }
        }
    }
    mask
}
