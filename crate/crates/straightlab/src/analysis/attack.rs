//! Input-space robustness: additive Gaussian noise sweeps and untargeted
//! L2-constrained projected gradient descent against the frozen
//! backbone + linear-probe composite.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netcore::{backward_input_only, forward, forward_only, NetworkSpec, ParamSet};
use crate::probes::LinearProbe;
use crate::rng::{stream, StreamKind};
use crate::tensor::Tensor;

use super::add_clamped_noise;

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct AttackConfig {
    /// L2 budget for the perturbation.
    pub budget: f64,
    pub steps: usize,
    /// None selects budget / 10.
    pub step_size: Option<f64>,
    /// Restarts beyond the first add a random initialization inside the
    /// ball; the worst-loss result wins.
    pub restarts: usize,
    pub seed: u64,
}

impl AttackConfig {
    pub fn with_budget(budget: f64) -> Self {
        AttackConfig {
            budget,
            steps: 500,
            step_size: None,
            restarts: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.budget >= 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "attack budget {} must be >= 0",
                self.budget
            )));
        }
        if self.steps == 0 || self.restarts == 0 {
            return Err(Error::ConfigInvalid(
                "attack needs at least one step and one restart".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub adversarial: Tensor,
    /// The classifier gradient vanished; the input was returned unchanged
    /// (or as far as the attack had come).
    pub zero_gradient: bool,
    pub final_loss: f64,
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Project `x` onto the L2 ball of `radius` around `origin`, then clamp to
/// the unit box. Clamping moves coordinates toward the origin, so the ball
/// constraint survives it.
fn project(x: &mut Tensor, origin: &Tensor, radius: f64) {
    let mut sq = 0.0;
    for (xv, ov) in x.data().iter().zip(origin.data()) {
        let dlt = xv - ov;
        sq += dlt * dlt;
    }
    let norm = sq.sqrt();
    let scale = if norm > radius { radius / norm } else { 1.0 };
    for (xv, ov) in x.data_mut().iter_mut().zip(origin.data()) {
        *xv = (ov + (*xv - ov) * scale).clamp(0.0, 1.0);
    }
}

/// Untargeted L2 PGD on the cross-entropy of the true class, through the
/// frozen network into the probe. Ascent steps are normalized gradients of
/// length `step_size` (budget/10 by default), each followed by projection
/// onto the budget ball and the unit box. Budget 0 returns the input
/// bitwise.
pub fn pgd_l2(
    spec: &NetworkSpec,
    params: &ParamSet,
    probe: &LinearProbe,
    frame: &Tensor,
    label: u32,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    if cfg.budget == 0.0 {
        let z = forward_only(spec, params, frame)?;
        let (loss, _) = probe.loss_and_input_grad(z.data(), label)?;
        return Ok(AttackOutcome {
            adversarial: frame.clone(),
            zero_gradient: false,
            final_loss: loss,
        });
    }
    let step_size = cfg.step_size.unwrap_or(cfg.budget / 10.0);

    let mut best: Option<AttackOutcome> = None;
    for restart in 0..cfg.restarts {
        let mut x = frame.clone();
        if restart > 0 {
            let mut rng = stream(cfg.seed, StreamKind::Attack, restart as u64);
            x = add_clamped_noise(&x, cfg.budget / (frame.len() as f64).sqrt(), &mut rng);
            project(&mut x, frame, cfg.budget);
        }
        let mut zero_gradient = false;
        let mut loss = f64::NEG_INFINITY;
        for _ in 0..cfg.steps {
            let (z, trace) = forward(spec, params, &x)?;
            let (l, grad_z) = probe.loss_and_input_grad(z.data(), label)?;
            loss = l;
            let grad_z = Tensor::from_vec(z.shape(), grad_z)?;
            let grad_x = backward_input_only(spec, params, &trace, &grad_z)?;
            let gnorm = l2_norm(grad_x.data());
            if gnorm == 0.0 {
                zero_gradient = true;
                break;
            }
            let scale = step_size / gnorm;
            for (xv, gv) in x.data_mut().iter_mut().zip(grad_x.data()) {
                *xv += scale * gv;
            }
            project(&mut x, frame, cfg.budget);
        }
        // final loss after the last projection
        let z = forward_only(spec, params, &x)?;
        let (final_loss, _) = probe.loss_and_input_grad(z.data(), label)?;
        let _ = loss;
        let outcome = AttackOutcome {
            adversarial: x,
            zero_gradient,
            final_loss,
        };
        best = match best {
            Some(b) if b.final_loss >= outcome.final_loss => Some(b),
            _ => Some(outcome),
        };
    }
    Ok(best.expect("at least one restart"))
}

/// Accuracy of the probe on noisy inputs for each sigma. Noise is i.i.d.
/// Gaussian per pixel, clamped to [0,1], with a per-(item, sigma) stream so
/// the sweep is a pure function of its seed.
pub fn gaussian_noise_sweep(
    spec: &NetworkSpec,
    params: &ParamSet,
    probe: &LinearProbe,
    items: &[(Tensor, u32)],
    sigmas: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if items.is_empty() {
        return Err(Error::EmptyGroup("noise sweep needs items".into()));
    }
    let mut curve = Vec::with_capacity(sigmas.len());
    for (si, &sigma) in sigmas.iter().enumerate() {
        let hits: usize = items
            .par_iter()
            .enumerate()
            .map(|(ii, (frame, label))| -> Result<usize> {
                let mut rng = stream(seed, StreamKind::NoiseSweep, (ii * 64 + si) as u64);
                let noisy = add_clamped_noise(frame, sigma, &mut rng);
                let z = forward_only(spec, params, &noisy)?;
                Ok((probe.predict(z.data()) == *label) as usize)
            })
            .sum::<Result<usize>>()?;
        curve.push((sigma, hits as f64 / items.len() as f64));
    }
    Ok(curve)
}

/// Accuracy of the probe under PGD at each budget. The per-budget attack
/// follows `base` with its budget (and default step size budget/10)
/// substituted. Every adversarial example is validated against the budget.
pub fn adversarial_sweep(
    spec: &NetworkSpec,
    params: &ParamSet,
    probe: &LinearProbe,
    items: &[(Tensor, u32)],
    budgets: &[f64],
    base: &AttackConfig,
) -> Result<Vec<(f64, f64)>> {
    if items.is_empty() {
        return Err(Error::EmptyGroup("adversarial sweep needs items".into()));
    }
    let mut curve = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let cfg = AttackConfig {
            budget,
            step_size: None,
            ..*base
        };
        let hits: usize = items
            .par_iter()
            .map(|(frame, label)| -> Result<usize> {
                let outcome = pgd_l2(spec, params, probe, frame, *label, &cfg)?;
                let delta: f64 = outcome
                    .adversarial
                    .data()
                    .iter()
                    .zip(frame.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if delta > budget + 1e-6 {
                    return Err(Error::ConfigInvalid(format!(
                        "attack produced a perturbation of norm {delta} beyond budget {budget}"
                    )));
                }
                let z = forward_only(spec, params, &outcome.adversarial)?;
                Ok((probe.predict(z.data()) == *label) as usize)
            })
            .sum::<Result<usize>>()?;
        curve.push((budget, hits as f64 / items.len() as f64));
    }
    Ok(curve)
}
