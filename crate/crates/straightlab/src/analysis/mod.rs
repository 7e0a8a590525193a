//! Representation geometry and robustness measurements: layerwise
//! straightness curves, cosine-similarity pairing histograms, participation
//! ratios, Gaussian-noise sweeps, and L2 PGD attacks.

mod attack;

pub use attack::{adversarial_sweep, gaussian_noise_sweep, pgd_l2, AttackConfig, AttackOutcome};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rayon::prelude::*;

use crate::datagen::{ScheduleKind, SequenceSample};
use crate::error::{Error, Result};
use crate::netcore::{forward, NetworkSpec, ParamSet};
use crate::objectives::{straightness_loss, TrajectoryBatch};
use crate::probes::LinearProbe;
use crate::report::HistogramData;
use crate::rng::{stream, Rng, StreamKind};

/// Straightness at one processing stage of the network.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct StageStraightness {
    /// 0 is the pixel domain, `i + 1` the output of layer `i`.
    pub stage: usize,
    pub name: String,
    pub dim: usize,
    pub straightness: f64,
    /// Sequences excluded at this stage because a difference vector
    /// degenerated (constant embeddings under heavy rectification).
    pub excluded: usize,
}

/// Mean straightness per stage over a dataset, pixel domain included as
/// stage 0. Intermediate embeddings are vectorized over space and channels.
pub fn straightness_curve(
    spec: &NetworkSpec,
    params: &ParamSet,
    dataset: &[SequenceSample],
) -> Result<Vec<StageStraightness>> {
    if dataset.is_empty() {
        return Err(Error::EmptyGroup("straightness curve needs sequences".into()));
    }
    let shapes = spec.boundary_shapes()?;
    let n_stages = shapes.len();

    // stage names: pixels, then conv1, relu1, ... numbered per tag
    let mut names = vec!["pixels".to_string()];
    let mut counters: std::collections::BTreeMap<&str, usize> = Default::default();
    for layer in &spec.layers {
        let c = counters.entry(layer.tag()).or_insert(0);
        *c += 1;
        names.push(format!("{}{}", layer.tag(), c));
    }

    struct StageAcc {
        sum: f64,
        used: usize,
        excluded: usize,
    }
    let per_seq: Vec<Vec<Option<f64>>> = dataset
        .par_iter()
        .map(|s| -> Result<Vec<Option<f64>>> {
            let t = s.t();
            // activations per stage, flattened
            let mut stage_z: Vec<Vec<f64>> = (0..n_stages)
                .map(|k| Vec::with_capacity(t * shapes[k].iter().product::<usize>()))
                .collect();
            for frame in &s.frames {
                let (_, trace) = forward(spec, params, frame)?;
                for (k, act) in trace.activations.iter().enumerate() {
                    stage_z[k].extend_from_slice(act.data());
                }
            }
            let mut out = Vec::with_capacity(n_stages);
            for (k, z) in stage_z.into_iter().enumerate() {
                let dim: usize = shapes[k].iter().product();
                let batch = TrajectoryBatch::new(names[k].clone(), 1, t, dim, z)?;
                match straightness_loss(&batch) {
                    Ok((loss, _)) => out.push(Some(-loss)),
                    Err(Error::DegenerateDifference { .. }) => out.push(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut accs: Vec<StageAcc> = (0..n_stages)
        .map(|_| StageAcc {
            sum: 0.0,
            used: 0,
            excluded: 0,
        })
        .collect();
    for row in &per_seq {
        for (k, v) in row.iter().enumerate() {
            match v {
                Some(s) => {
                    accs[k].sum += s;
                    accs[k].used += 1;
                }
                None => accs[k].excluded += 1,
            }
        }
    }
    Ok(accs
        .into_iter()
        .enumerate()
        .map(|(k, a)| StageStraightness {
            stage: k,
            name: names[k].clone(),
            dim: shapes[k].iter().product(),
            straightness: if a.used > 0 { a.sum / a.used as f64 } else { f64::NAN },
            excluded: a.excluded,
        })
        .collect())
}

/// Fig.-3-style pairing conditions over difference vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PairingCondition {
    SameDigitSameTransform,
    SameDigitDiffTransform,
    DiffDigitSameTransform,
    DiffDigitDiffTransform,
    /// Difference vectors against digit-classifier weight rows.
    VsClassifierAxis,
    /// Random unit-vector pairs in the output space.
    RandomBaseline,
}

impl PairingCondition {
    pub fn name(&self) -> &'static str {
        match self {
            PairingCondition::SameDigitSameTransform => "same_digit_same_transform",
            PairingCondition::SameDigitDiffTransform => "same_digit_diff_transform",
            PairingCondition::DiffDigitSameTransform => "diff_digit_same_transform",
            PairingCondition::DiffDigitDiffTransform => "diff_digit_diff_transform",
            PairingCondition::VsClassifierAxis => "vs_classifier_axis",
            PairingCondition::RandomBaseline => "random_baseline",
        }
    }

    pub fn all() -> [PairingCondition; 6] {
        [
            PairingCondition::SameDigitSameTransform,
            PairingCondition::SameDigitDiffTransform,
            PairingCondition::DiffDigitSameTransform,
            PairingCondition::DiffDigitDiffTransform,
            PairingCondition::VsClassifierAxis,
            PairingCondition::RandomBaseline,
        ]
    }
}

/// Sampled cosine-similarity statistics for one pairing condition.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PairingResult {
    pub condition: String,
    pub histogram: HistogramData,
    pub mean: f64,
    pub std: f64,
    pub mean_abs: f64,
    pub n: usize,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb + 1e-30)
}

/// Histogram bin count for the [-1, 1] cosine axis.
pub const COSINE_BINS: usize = 101;

/// Sample up to `max_pairs` cosine similarities between difference vectors
/// drawn from distinct trajectories satisfying `condition`. A trajectory is
/// never paired with itself. `VsClassifierAxis` needs the classifier probe;
/// `RandomBaseline` ignores the embeddings beyond their dimensionality.
pub fn pairing_histograms(
    z: &TrajectoryBatch,
    labels: &[u32],
    kinds: &[ScheduleKind],
    condition: PairingCondition,
    classifier: Option<&LinearProbe>,
    seed: u64,
    max_pairs: usize,
) -> Result<PairingResult> {
    let (b, t, d) = (z.b(), z.t(), z.d());
    if labels.len() != b || kinds.len() != b {
        return Err(Error::ShapeMismatch(
            "labels/kinds must match the trajectory batch".into(),
        ));
    }
    let mut rng = stream(seed, StreamKind::PairSampling, condition as u64);
    let n_diffs = t - 1;
    let diff = |bi: usize, ti: usize| -> Vec<f64> {
        z.frame(bi, ti + 1)
            .iter()
            .zip(z.frame(bi, ti))
            .map(|(a, c)| a - c)
            .collect()
    };

    let feasible = |condition: PairingCondition| -> bool {
        match condition {
            PairingCondition::SameDigitSameTransform => (0..b).any(|i| {
                (0..b).any(|j| j != i && labels[i] == labels[j] && kinds[i] == kinds[j])
            }),
            PairingCondition::SameDigitDiffTransform => (0..b).any(|i| {
                (0..b).any(|j| j != i && labels[i] == labels[j] && kinds[i] != kinds[j])
            }),
            PairingCondition::DiffDigitSameTransform => (0..b).any(|i| {
                (0..b).any(|j| j != i && labels[i] != labels[j] && kinds[i] == kinds[j])
            }),
            PairingCondition::DiffDigitDiffTransform => (0..b).any(|i| {
                (0..b).any(|j| j != i && labels[i] != labels[j] && kinds[i] != kinds[j])
            }),
            PairingCondition::VsClassifierAxis => b > 0,
            PairingCondition::RandomBaseline => true,
        }
    };
    if !feasible(condition) {
        return Err(Error::EmptyGroup(format!(
            "no trajectory pair satisfies {}",
            condition.name()
        )));
    }
    if condition == PairingCondition::VsClassifierAxis && classifier.is_none() {
        return Err(Error::ConfigInvalid(
            "vs_classifier_axis needs a trained classifier".into(),
        ));
    }

    let mut values = Vec::with_capacity(max_pairs);
    let max_attempts = max_pairs.saturating_mul(64);
    let mut attempts = 0;
    while values.len() < max_pairs && attempts < max_attempts {
        attempts += 1;
        match condition {
            PairingCondition::RandomBaseline => {
                let gauss = rand_distr::StandardNormal;
                let mut u = vec![0.0f64; d];
                let mut v = vec![0.0f64; d];
                for x in u.iter_mut().chain(v.iter_mut()) {
                    *x = rand::prelude::Distribution::sample(&gauss, &mut rng);
                }
                values.push(cosine(&u, &v));
            }
            PairingCondition::VsClassifierAxis => {
                let probe = classifier.expect("checked above");
                let bi = rng.gen_range(0..b);
                let ti = rng.gen_range(0..n_diffs);
                let row = rng.gen_range(0..probe.n_classes());
                let w = &probe.weight[row * probe.d..(row + 1) * probe.d];
                values.push(cosine(&diff(bi, ti), w));
            }
            _ => {
                let i = rng.gen_range(0..b);
                let j = rng.gen_range(0..b);
                if i == j {
                    continue; // distinct-pair rule
                }
                let ok = match condition {
                    PairingCondition::SameDigitSameTransform => {
                        labels[i] == labels[j] && kinds[i] == kinds[j]
                    }
                    PairingCondition::SameDigitDiffTransform => {
                        labels[i] == labels[j] && kinds[i] != kinds[j]
                    }
                    PairingCondition::DiffDigitSameTransform => {
                        labels[i] != labels[j] && kinds[i] == kinds[j]
                    }
                    PairingCondition::DiffDigitDiffTransform => {
                        labels[i] != labels[j] && kinds[i] != kinds[j]
                    }
                    _ => unreachable!(),
                };
                if !ok {
                    continue;
                }
                let ti = rng.gen_range(0..n_diffs);
                let tj = rng.gen_range(0..n_diffs);
                values.push(cosine(&diff(i, ti), &diff(j, tj)));
            }
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyGroup(format!(
            "sampling produced no pairs for {}",
            condition.name()
        )));
    }
    let histogram = HistogramData::build(-1.0, 1.0, COSINE_BINS, values.iter().copied());
    let mean = histogram.mean;
    let std = histogram.std;
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
    Ok(PairingResult {
        condition: condition.name().into(),
        histogram,
        mean,
        std,
        mean_abs,
        n: values.len(),
    })
}

/// Effective dimensionality of a response set: `(sum lambda)^2 / sum lambda^2`
/// over the eigenvalues of the empirical covariance. Lies in [1, d].
pub fn participation_ratio(responses: &[f64], n: usize, d: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::ShapeMismatch(
            "participation ratio needs at least 2 responses".into(),
        ));
    }
    assert_eq!(responses.len(), n * d);
    let mut mean = vec![0.0; d];
    for row in responses.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = responses.to_vec();
    for row in centered.chunks_exact_mut(d) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = vec![0.0; d * d];
    crate::tensor::matmul_at(d, n, d, &centered, &centered, &mut cov, 0.0);
    let denom = (n - 1) as f64;
    for v in &mut cov {
        *v /= denom;
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if trace <= 0.0 {
        return Err(Error::DegenerateCovariance);
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &cov));
    let sum: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let sum_sq: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).powi(2)).sum();
    Ok(sum * sum / sum_sq)
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct GroupDimensionality {
    /// (label, kind, participation ratio, response count) per group.
    pub groups: Vec<(u32, ScheduleKind, f64, usize)>,
    pub mean_within: f64,
    pub overall: f64,
}

/// Participation ratio of the responses in each [digit, transformation]
/// group, plus the pooled set.
pub fn group_dimensionality(
    z: &TrajectoryBatch,
    labels: &[u32],
    kinds: &[ScheduleKind],
) -> Result<GroupDimensionality> {
    let (b, t, d) = (z.b(), z.t(), z.d());
    if labels.len() != b || kinds.len() != b {
        return Err(Error::ShapeMismatch(
            "labels/kinds must match the trajectory batch".into(),
        ));
    }
    let mut group_keys: Vec<(u32, ScheduleKind)> = labels
        .iter()
        .zip(kinds)
        .map(|(l, k)| (*l, *k))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    group_keys.sort();

    let mut groups = Vec::new();
    let mut within_sum = 0.0;
    let mut within_n = 0;
    for (label, kind) in group_keys {
        let members: Vec<usize> = (0..b)
            .filter(|&i| labels[i] == label && kinds[i] == kind)
            .collect();
        let count = members.len() * t;
        if count < 2 {
            continue;
        }
        let mut resp = Vec::with_capacity(count * d);
        for &i in &members {
            for ti in 0..t {
                resp.extend_from_slice(z.frame(i, ti));
            }
        }
        match participation_ratio(&resp, count, d) {
            Ok(pr) => {
                within_sum += pr;
                within_n += 1;
                groups.push((label, kind, pr, count));
            }
            Err(Error::DegenerateCovariance) => continue,
            Err(e) => return Err(e),
        }
    }
    if groups.is_empty() {
        return Err(Error::EmptyGroup("no group had enough responses".into()));
    }
    let overall = participation_ratio(z.z(), b * t, d)?;
    Ok(GroupDimensionality {
        groups,
        mean_within: within_sum / within_n as f64,
        overall,
    })
}

/// Draw a unit-variance Gaussian perturbation scaled by sigma, clamped back
/// to the unit intensity interval.
pub(crate) fn add_clamped_noise(frame: &crate::tensor::Tensor, sigma: f64, rng: &mut Rng) -> crate::tensor::Tensor {
    let mut out = frame.clone();
    if sigma == 0.0 {
        return out;
    }
    let gauss = rand_distr::StandardNormal;
    for v in out.data_mut() {
        let n: f64 = rand::prelude::Distribution::sample(&gauss, rng);
        *v = (*v + sigma * n).clamp(0.0, 1.0);
    }
    out
}

#[cfg(test)]
mod tests;
