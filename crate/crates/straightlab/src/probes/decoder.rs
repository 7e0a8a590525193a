//! Pixel decoder: a mirror network trained with per-pixel MSE on frozen
//! embeddings, plus the reconstruction/prediction strip renderer.

use rayon::prelude::*;

use crate::datagen::SequenceSample;
use crate::error::{Error, Result};
use crate::netcore::{
    backward_from_taps_into, forward, forward_only, init_params, NetworkSpec, ParamSet,
};
use crate::objectives::extrapolate;
use crate::report::image_grid;
use crate::rng::{stream, StreamKind};
use crate::tensor::Tensor;
use crate::trainer::{embed_sequences, sgd_step};

#[derive(Clone, Debug)]
pub struct DecoderTrainCfg {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub tap: String,
}

impl Default for DecoderTrainCfg {
    fn default() -> Self {
        DecoderTrainCfg {
            epochs: 10,
            batch_size: 32,
            lr: 0.005,
            momentum: 0.9,
            seed: 0,
            tap: "final".into(),
        }
    }
}

const FRAME_CHUNK: usize = 64;

/// Train a decoder from frozen encoder embeddings back to pixels.
/// Returns the decoder spec, its parameters, and the per-step MSE curve.
pub fn train_pixel_decoder(
    enc_spec: &NetworkSpec,
    enc_params: &ParamSet,
    dataset: &[SequenceSample],
    dec_spec: &NetworkSpec,
    cfg: &DecoderTrainCfg,
) -> Result<(ParamSet, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::ConfigInvalid("decoder training set is empty".into()));
    }
    let refs: Vec<&SequenceSample> = dataset.iter().collect();
    let z = embed_sequences(enc_spec, enc_params, &refs, &cfg.tap)?;
    let d = z.d();
    if dec_spec.input_shape != vec![d] {
        return Err(Error::ShapeMismatch(format!(
            "decoder input {:?} does not match embedding dim {d}",
            dec_spec.input_shape
        )));
    }
    let t = refs[0].t();
    let frames: Vec<(usize, usize)> = (0..refs.len())
        .flat_map(|b| (0..t).map(move |ti| (b, ti)))
        .collect();
    let n_pix: usize = refs[0].frame_shape().iter().product();

    let mut params = init_params(dec_spec, &mut stream(cfg.seed, StreamKind::ParamInit, 1))?;
    let mut velocity = ParamSet::zeros_like(dec_spec)?;
    let mut rng = stream(cfg.seed, StreamKind::TrainLoop, 1);
    let mut curve = Vec::new();

    let mut order: Vec<usize> = (0..frames.len()).collect();
    for _ in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(f64, ParamSet)> = batch
                .par_chunks(FRAME_CHUNK)
                .map(|chunk| -> Result<(f64, ParamSet)> {
                    let mut acc = ParamSet::zeros_like(dec_spec)?;
                    let last = dec_spec.layers.len() - 1;
                    let mut loss = 0.0;
                    for &fi in chunk {
                        let (b, ti) = frames[fi];
                        let emb = Tensor::from_vec(&[d], z.frame(b, ti).to_vec())?;
                        let (out, trace) = forward(dec_spec, &params, &emb)?;
                        let target = &refs[b].frames[ti];
                        let scale = 1.0 / (batch.len() * n_pix) as f64;
                        let mut grad = out.clone();
                        for (g, (o, tv)) in grad
                            .data_mut()
                            .iter_mut()
                            .zip(out.data().iter().zip(target.data()))
                        {
                            loss += (o - tv) * (o - tv) * scale;
                            *g = 2.0 * (o - tv) * scale;
                        }
                        backward_from_taps_into(
                            dec_spec,
                            &params,
                            &trace,
                            &[(last, grad.data())],
                            &mut acc,
                        )?;
                    }
                    Ok((loss, acc))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = ParamSet::zeros_like(dec_spec)?;
            let mut loss = 0.0;
            for (l, g) in &results {
                loss += l;
                grads.add_assign(g);
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: curve.len(),
                    detail: format!("decoder mse {loss}"),
                });
            }
            sgd_step(&mut params, &grads, &mut velocity, cfg.lr, cfg.momentum, 0.0)?;
            curve.push(loss);
        }
    }
    Ok((params, curve))
}

/// Map one embedding back to a frame.
pub fn decode(dec_spec: &NetworkSpec, dec_params: &ParamSet, embedding: &[f64]) -> Result<Tensor> {
    let emb = Tensor::from_vec(&dec_spec.input_shape.clone(), embedding.to_vec())?;
    forward_only(dec_spec, dec_params, &emb)
}

/// Three-row strip for one sequence: inputs, reconstructions, and
/// linear-extrapolation predictions (defined from the third frame on).
pub fn render_prediction_strip(
    enc_spec: &NetworkSpec,
    enc_params: &ParamSet,
    dec_spec: &NetworkSpec,
    dec_params: &ParamSet,
    sample: &SequenceSample,
    tap: &str,
) -> Result<Tensor> {
    let z = embed_sequences(enc_spec, enc_params, &[sample], tap)?;
    let t = sample.t();
    let mut inputs = Vec::with_capacity(t);
    let mut recon = Vec::with_capacity(t);
    let mut pred = Vec::with_capacity(t);
    for ti in 0..t {
        inputs.push(Some(sample.frames[ti].clone()));
        recon.push(Some(decode(dec_spec, dec_params, z.frame(0, ti))?));
        if ti >= 2 {
            let e = extrapolate(z.frame(0, ti - 2), z.frame(0, ti - 1))?;
            pred.push(Some(decode(dec_spec, dec_params, &e)?));
        } else {
            pred.push(None);
        }
    }
    image_grid(&[inputs, recon, pred])
}
