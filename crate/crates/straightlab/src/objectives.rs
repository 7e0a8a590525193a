//! Loss functions: straightness, the variance/covariance whitening pair,
//! the invariance baseline, and their compositions. Every loss returns its
//! value together with analytic gradients with respect to the embeddings.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Consecutive difference vectors with a norm below this are treated as
/// degenerate: the trajectory has effectively stalled and the cosine is
/// undefined.
pub const DELTA_NORM: f64 = 1e-12;

/// Additive stabilizer inside the cosine denominator. Small enough to be
/// invisible at gradient-check tolerances, large enough to keep the division
/// defined at the degeneracy guard.
const COS_STABILIZER: f64 = 1e-30;

/// Per-timestep embeddings for a batch of sequences: `z[b, t, :]` laid out
/// row-major as `[B, T, d]`.
#[derive(Clone, Debug)]
pub struct TrajectoryBatch {
    z: Vec<f64>,
    b: usize,
    t: usize,
    d: usize,
    layer: String,
}

impl TrajectoryBatch {
    pub fn new(layer: impl Into<String>, b: usize, t: usize, d: usize, z: Vec<f64>) -> Result<Self> {
        if z.len() != b * t * d {
            return Err(Error::ShapeMismatch(format!(
                "trajectory batch [{b},{t},{d}] wants {} values, got {}",
                b * t * d,
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(
                "trajectory batch contains non-finite values".into(),
            ));
        }
        Ok(TrajectoryBatch {
            z,
            b,
            t,
            d,
            layer: layer.into(),
        })
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn frame(&self, b: usize, t: usize) -> &[f64] {
        let at = (b * self.t + t) * self.d;
        &self.z[at..at + self.d]
    }
}

/// Which composition [`total_loss`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ObjectiveKind {
    Straightening,
    Invariance,
    Composed,
}

/// Loss composition weights and options.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    /// Variance weight in the straightening objective.
    pub alpha: f64,
    /// Covariance weight in the straightening objective.
    pub beta: f64,
    /// Variance weight in the invariance objective.
    pub lambda: f64,
    /// Covariance weight in the invariance objective.
    pub gamma: f64,
    /// Weight of the straightening regularizer in the composed objective.
    pub straighten_weight: f64,
    /// Variance floor inside the hinge.
    pub epsilon: f64,
    /// Tap names the straightness term attaches to; equally weighted and
    /// averaged. The whitening terms always apply to `final` only.
    pub attachments: Vec<String>,
    /// Estimate variance/covariance per timestep instead of pooling over
    /// batch and time.
    pub per_timestep_whiten: bool,
}

impl ObjectiveConfig {
    pub fn straightening() -> Self {
        ObjectiveConfig {
            kind: ObjectiveKind::Straightening,
            alpha: 1.0,
            beta: 0.25,
            lambda: 0.125,
            gamma: 0.5,
            straighten_weight: 1.0,
            epsilon: 1e-4,
            attachments: vec!["final".into()],
            per_timestep_whiten: false,
        }
    }

    pub fn invariance() -> Self {
        ObjectiveConfig {
            kind: ObjectiveKind::Invariance,
            ..Self::straightening()
        }
    }

    pub fn composed() -> Self {
        ObjectiveConfig {
            kind: ObjectiveKind::Composed,
            ..Self::straightening()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("straighten_weight", self.straighten_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::ConfigInvalid(format!(
                    "objective weight {name} = {v} must be finite and >= 0"
                )));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "epsilon = {} must be > 0",
                self.epsilon
            )));
        }
        if self.attachments.is_empty() {
            return Err(Error::ConfigInvalid(
                "at least one straightness attachment is required".into(),
            ));
        }
        Ok(())
    }
}

/// Value and per-loss components of a [`total_loss`] evaluation.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Straightness term (Straightening) or invariance term (Invariance,
    /// Composed).
    pub primary: f64,
    pub variance: f64,
    pub covariance: f64,
    /// Straightness regularizer in the composed objective; 0 otherwise.
    pub straighten_reg: f64,
}

/// Negative mean cosine similarity between the two successive difference
/// vectors of every temporally-adjacent triple, averaged over sequences and
/// time. Bounded in [-1, 1]; minimizing it straightens trajectories.
pub fn straightness_loss(batch: &TrajectoryBatch) -> Result<(f64, Vec<f64>)> {
    let (b, t, d) = (batch.b, batch.t, batch.d);
    if t < 3 {
        return Err(Error::ShapeMismatch(format!(
            "straightness needs T >= 3, got {t}"
        )));
    }
    let count = (b * (t - 2)) as f64;
    let mut value = 0.0;
    let mut grads = vec![0.0; batch.z.len()];
    let mut d1 = vec![0.0; d];
    let mut d2 = vec![0.0; d];

    for bi in 0..b {
        for ti in 0..t - 2 {
            let z0 = batch.frame(bi, ti);
            let z1 = batch.frame(bi, ti + 1);
            let z2 = batch.frame(bi, ti + 2);
            for k in 0..d {
                d1[k] = z1[k] - z0[k];
                d2[k] = z2[k] - z1[k];
            }
            let n1 = d1.iter().map(|v| v * v).sum::<f64>().sqrt();
            let n2 = d2.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (step, norm) in [(ti, n1), (ti + 1, n2)] {
                if norm < DELTA_NORM {
                    return Err(Error::DegenerateDifference {
                        sequence: bi,
                        step,
                        norm,
                        limit: DELTA_NORM,
                    });
                }
            }
            let dot: f64 = d1.iter().zip(&d2).map(|(a, b)| a * b).sum();
            let denom = n1 * n2 + COS_STABILIZER;
            let c = dot / denom;
            value -= c;

            // dc/dd1 = d2/denom - c * (n2/n1) * d1/denom, symmetric for d2
            let w = 1.0 / count;
            let a1 = c * n2 / n1 / denom;
            let a2 = c * n1 / n2 / denom;
            let base0 = (bi * t + ti) * d;
            let base1 = base0 + d;
            let base2 = base1 + d;
            for k in 0..d {
                let dc_dd1 = d2[k] / denom - a1 * d1[k];
                let dc_dd2 = d1[k] / denom - a2 * d2[k];
                grads[base0 + k] += w * dc_dd1;
                grads[base1 + k] -= w * (dc_dd1 - dc_dd2);
                grads[base2 + k] -= w * dc_dd2;
            }
        }
    }
    Ok((value / count, grads))
}

/// Hinge on the per-dimension standard deviation: mean over dimensions of
/// `max(0, 1 - sqrt(Var_i + eps))` with the unbiased variance estimator.
/// The subgradient at the hinge kink is taken as 0.
pub fn variance_loss(samples: &[f64], n: usize, d: usize, eps: f64) -> (f64, Vec<f64>) {
    assert!(n >= 2, "variance needs at least two samples");
    assert_eq!(samples.len(), n * d);
    let mut mean = vec![0.0; d];
    for row in samples.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for row in samples.chunks_exact(d) {
        for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let c = v - m;
            *acc += c * c;
        }
    }
    let denom = (n - 1) as f64;
    let mut value = 0.0;
    // scale applied to (x - mean) per active dimension
    let mut coeff = vec![0.0; d];
    for i in 0..d {
        var[i] /= denom;
        let s = (var[i] + eps).sqrt();
        if s < 1.0 {
            value += 1.0 - s;
            coeff[i] = -1.0 / (d as f64 * s * denom);
        }
    }
    value /= d as f64;

    let mut grads = vec![0.0; samples.len()];
    for (row, grow) in samples.chunks_exact(d).zip(grads.chunks_exact_mut(d)) {
        for i in 0..d {
            grow[i] = coeff[i] * (row[i] - mean[i]);
        }
    }
    (value, grads)
}

/// Mean squared off-diagonal entry of the unbiased empirical covariance,
/// scaled by 1/d: `(1/d) * sum_{i != j} Cov_ij^2`.
pub fn covariance_loss(samples: &[f64], n: usize, d: usize) -> (f64, Vec<f64>) {
    assert!(n >= 2, "covariance needs at least two samples");
    assert_eq!(samples.len(), n * d);
    let mut mean = vec![0.0; d];
    for row in samples.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = samples.to_vec();
    for row in centered.chunks_exact_mut(d) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let denom = (n - 1) as f64;
    let mut cov = vec![0.0; d * d];
    crate::tensor::matmul_at(d, n, d, &centered, &centered, &mut cov, 0.0);
    for v in &mut cov {
        *v /= denom;
    }
    let mut value = 0.0;
    for i in 0..d {
        cov[i * d + i] = 0.0; // zero the diagonal; only off-diagonal terms count
        for j in 0..d {
            value += cov[i * d + j] * cov[i * d + j];
        }
    }
    value /= d as f64;

    // grad X = 4 / (d (n-1)) * centered . cov_offdiag
    let mut grads = vec![0.0; samples.len()];
    crate::tensor::matmul(n, d, d, &centered, &cov, &mut grads, 0.0);
    let scale = 4.0 / (d as f64 * denom);
    for g in &mut grads {
        *g *= scale;
    }
    (value, grads)
}

/// Mean over sequences and time of `(1/d) ||z_t - z_{t0}||^2`, with a
/// per-sequence anchor index `t0`.
pub fn invariance_loss(batch: &TrajectoryBatch, t0: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (b, t, d) = (batch.b, batch.t, batch.d);
    if t0.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "t0 has {} entries for {b} sequences",
            t0.len()
        )));
    }
    for (bi, &anchor) in t0.iter().enumerate() {
        if anchor >= t {
            return Err(Error::IndexOutOfRange {
                index: anchor,
                len: t,
            });
        }
        let _ = bi;
    }
    let count = (b * t) as f64;
    let mut value = 0.0;
    let mut grads = vec![0.0; batch.z.len()];
    for bi in 0..b {
        let anchor = t0[bi];
        let za = (bi * t + anchor) * d;
        for ti in 0..t {
            let zt = (bi * t + ti) * d;
            for k in 0..d {
                let diff = batch.z[zt + k] - batch.z[za + k];
                value += diff * diff;
                let g = 2.0 * diff / (d as f64 * count);
                grads[zt + k] += g;
                grads[za + k] -= g;
            }
        }
    }
    Ok((value / (d as f64 * count), grads))
}

/// Linear extrapolation: `z_{t+2} = 2 z_{t+1} - z_t`.
pub fn extrapolate(z_t: &[f64], z_t1: &[f64]) -> Result<Vec<f64>> {
    if z_t.len() != z_t1.len() {
        return Err(Error::ShapeMismatch(format!(
            "extrapolate wants equal dims, got {} and {}",
            z_t.len(),
            z_t1.len()
        )));
    }
    Ok(z_t1
        .iter()
        .zip(z_t)
        .map(|(b, a)| 2.0 * b - a)
        .collect())
}

fn add_scaled(dst: &mut [f64], src: &[f64], w: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += w * s;
    }
}

/// Whitening pair on the final-layer batch: pooled over batch and time by
/// default, or per-timestep-averaged when configured.
fn whitening(
    batch: &TrajectoryBatch,
    eps: f64,
    per_timestep: bool,
) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
    let (b, t, d) = (batch.b, batch.t, batch.d);
    if per_timestep {
        if b < 2 {
            return Err(Error::ShapeMismatch(
                "per-timestep whitening needs B >= 2".into(),
            ));
        }
        let mut var_total = 0.0;
        let mut cov_total = 0.0;
        let mut var_grads = vec![0.0; batch.z.len()];
        let mut cov_grads = vec![0.0; batch.z.len()];
        let mut slab = vec![0.0; b * d];
        for ti in 0..t {
            for bi in 0..b {
                slab[bi * d..(bi + 1) * d].copy_from_slice(batch.frame(bi, ti));
            }
            let (v, vg) = variance_loss(&slab, b, d, eps);
            let (c, cg) = covariance_loss(&slab, b, d);
            var_total += v / t as f64;
            cov_total += c / t as f64;
            for bi in 0..b {
                let at = (bi * t + ti) * d;
                add_scaled(&mut var_grads[at..at + d], &vg[bi * d..(bi + 1) * d], 1.0 / t as f64);
                add_scaled(&mut cov_grads[at..at + d], &cg[bi * d..(bi + 1) * d], 1.0 / t as f64);
            }
        }
        Ok((var_total, cov_total, var_grads, cov_grads))
    } else {
        let n = b * t;
        if n < 2 {
            return Err(Error::ShapeMismatch("whitening needs B*T >= 2".into()));
        }
        let (v, vg) = variance_loss(batch.z(), n, d, eps);
        let (c, cg) = covariance_loss(batch.z(), n, d);
        Ok((v, c, vg, cg))
    }
}

/// Evaluate the configured objective over a set of tap batches.
///
/// `taps` must contain the `final` batch (whitening always applies there)
/// plus every straightness attachment. `t0` supplies the per-sequence anchor
/// frames for the invariance branch. Returns the loss breakdown and the
/// gradient with respect to each tap's embeddings.
pub fn total_loss(
    cfg: &ObjectiveConfig,
    taps: &BTreeMap<String, TrajectoryBatch>,
    t0: Option<&[usize]>,
) -> Result<(LossBreakdown, BTreeMap<String, Vec<f64>>)> {
    cfg.validate()?;
    let final_batch = taps
        .get("final")
        .ok_or_else(|| Error::ConfigInvalid("taps must include `final`".into()))?;

    let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let ensure = |name: &str, len: usize, grads: &mut BTreeMap<String, Vec<f64>>| {
        grads.entry(name.to_string()).or_insert_with(|| vec![0.0; len]);
    };

    // mean straightness over attachment layers
    let straightness_term = |grads: &mut BTreeMap<String, Vec<f64>>, weight: f64| -> Result<f64> {
        let share = weight / cfg.attachments.len() as f64;
        let mut total = 0.0;
        for name in &cfg.attachments {
            let batch = taps.get(name).ok_or_else(|| {
                Error::ConfigInvalid(format!("attachment `{name}` missing from taps"))
            })?;
            let (v, g) = straightness_loss(batch)?;
            total += v / cfg.attachments.len() as f64;
            ensure(name, g.len(), grads);
            add_scaled(grads.get_mut(name).unwrap(), &g, share);
        }
        Ok(total)
    };

    let breakdown = match cfg.kind {
        ObjectiveKind::Straightening => {
            let primary = straightness_term(&mut grads, 1.0)?;
            let (var, cov, vg, cg) = whitening(final_batch, cfg.epsilon, cfg.per_timestep_whiten)?;
            ensure("final", final_batch.z().len(), &mut grads);
            let g = grads.get_mut("final").unwrap();
            add_scaled(g, &vg, cfg.alpha);
            add_scaled(g, &cg, cfg.beta);
            LossBreakdown {
                total: primary + cfg.alpha * var + cfg.beta * cov,
                primary,
                variance: var,
                covariance: cov,
                straighten_reg: 0.0,
            }
        }
        ObjectiveKind::Invariance | ObjectiveKind::Composed => {
            let t0 = t0.ok_or_else(|| {
                Error::ConfigInvalid("invariance objective needs t0 anchors".into())
            })?;
            let (primary, ig) = invariance_loss(final_batch, t0)?;
            let (var, cov, vg, cg) = whitening(final_batch, cfg.epsilon, cfg.per_timestep_whiten)?;
            ensure("final", final_batch.z().len(), &mut grads);
            {
                let g = grads.get_mut("final").unwrap();
                add_scaled(g, &ig, 1.0);
                add_scaled(g, &vg, cfg.lambda);
                add_scaled(g, &cg, cfg.gamma);
            }
            let mut straighten_reg = 0.0;
            if cfg.kind == ObjectiveKind::Composed {
                straighten_reg = straightness_term(&mut grads, cfg.straighten_weight)?;
            }
            LossBreakdown {
                total: primary
                    + cfg.lambda * var
                    + cfg.gamma * cov
                    + cfg.straighten_weight * straighten_reg,
                primary,
                variance: var,
                covariance: cov,
                straighten_reg,
            }
        }
    };
    Ok((breakdown, grads))
}
